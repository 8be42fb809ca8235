//! Sequential 1-D convolution primitives over `[channels x time]` buffers.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{Tensor, TensorMap};
use crate::Result;

/// Channel-major activation buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f32>,
}

impl Signal {
    pub fn new(channels: usize, len: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), channels * len);
        Self {
            channels,
            len,
            data,
        }
    }

    pub fn zeros(channels: usize, len: usize) -> Self {
        Self::new(channels, len, vec![0.0; channels * len])
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn leaky_relu(mut self, slope: f32) -> Self {
        for v in &mut self.data {
            if *v < 0.0 {
                *v *= slope;
            }
        }
        self
    }

    pub fn add_assign(&mut self, other: &Signal) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvSpec {
    /// Stride-1 convolution that preserves length.
    pub fn same(in_ch: usize, out_ch: usize, kernel: usize, dilation: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            dilation,
            padding: dilation * (kernel - 1) / 2,
            groups: 1,
        }
    }

    pub fn strided(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize, groups: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel,
            stride,
            dilation: 1,
            padding,
            groups,
        }
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_ch, self.in_ch / self.groups, self.kernel]
    }

    pub fn output_len(&self, len: usize) -> usize {
        let span = self.dilation * (self.kernel - 1) + 1;
        let padded = len + 2 * self.padding;
        if padded < span {
            0
        } else {
            (padded - span) / self.stride + 1
        }
    }
}

#[derive(Debug, Clone)]
pub struct Conv1d {
    pub spec: ConvSpec,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl Conv1d {
    pub fn from_map(map: &TensorMap, prefix: &str, spec: ConvSpec) -> Result<Self> {
        let weight = map
            .expect(&format!("{prefix}.weight"), &spec.weight_shape())?
            .data()
            .to_vec();
        let bias = map
            .expect(&format!("{prefix}.bias"), &[spec.out_ch])?
            .data()
            .to_vec();
        Ok(Self { spec, weight, bias })
    }

    pub fn forward(&self, x: &Signal) -> Signal {
        let s = &self.spec;
        debug_assert_eq!(x.channels, s.in_ch);
        let out_len = s.output_len(x.len);
        let in_per_group = s.in_ch / s.groups;
        let out_per_group = s.out_ch / s.groups;
        let mut out = vec![0f32; s.out_ch * out_len];

        for o in 0..s.out_ch {
            let g = o / out_per_group;
            let row = &mut out[o * out_len..(o + 1) * out_len];
            row.fill(self.bias[o]);
            for ic in 0..in_per_group {
                let input = x.channel(g * in_per_group + ic);
                let w = &self.weight[(o * in_per_group + ic) * s.kernel..][..s.kernel];
                for (kk, &wk) in w.iter().enumerate() {
                    if wk == 0.0 {
                        continue;
                    }
                    // input index = t * stride + offset
                    let offset = (kk * s.dilation) as isize - s.padding as isize;
                    let t_lo = if offset >= 0 {
                        0
                    } else {
                        ((-offset) as usize).div_ceil(s.stride)
                    };
                    let limit = x.len as isize - offset; // need t*stride < limit
                    if limit <= 0 {
                        continue;
                    }
                    let t_hi = ((limit as usize).div_ceil(s.stride)).min(out_len);
                    if t_hi <= t_lo {
                        continue;
                    }
                    if s.stride == 1 {
                        let base = (t_lo as isize + offset) as usize;
                        for (r, &v) in row[t_lo..t_hi]
                            .iter_mut()
                            .zip(&input[base..])
                        {
                            *r += wk * v;
                        }
                    } else {
                        for t in t_lo..t_hi {
                            let idx = (t * s.stride) as isize + offset;
                            row[t] += wk * input[idx as usize];
                        }
                    }
                }
            }
        }
        Signal::new(s.out_ch, out_len, out)
    }
}

/// Transposed convolution whose output is trimmed to exactly `len * stride`
/// samples, starting `(kernel - stride) / 2` samples into the full output.
#[derive(Debug, Clone)]
pub struct ConvTranspose1d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl ConvTranspose1d {
    pub fn weight_shape(in_ch: usize, out_ch: usize, kernel: usize) -> Vec<usize> {
        vec![in_ch, out_ch, kernel]
    }

    pub fn from_map(
        map: &TensorMap,
        prefix: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        let weight = map
            .expect(
                &format!("{prefix}.weight"),
                &Self::weight_shape(in_ch, out_ch, kernel),
            )?
            .data()
            .to_vec();
        let bias = map.expect(&format!("{prefix}.bias"), &[out_ch])?.data().to_vec();
        Ok(Self {
            in_ch,
            out_ch,
            kernel,
            stride,
            weight,
            bias,
        })
    }

    pub fn forward(&self, x: &Signal) -> Signal {
        debug_assert_eq!(x.channels, self.in_ch);
        let out_len = x.len * self.stride;
        let trim = (self.kernel.saturating_sub(self.stride)) / 2;
        let mut out = vec![0f32; self.out_ch * out_len];
        for o in 0..self.out_ch {
            let row = &mut out[o * out_len..(o + 1) * out_len];
            row.fill(self.bias[o]);
            for i in 0..self.in_ch {
                let input = x.channel(i);
                let w = &self.weight[(i * self.out_ch + o) * self.kernel..][..self.kernel];
                for (kk, &wk) in w.iter().enumerate() {
                    if wk == 0.0 {
                        continue;
                    }
                    // full-output position t * stride + kk maps to row index minus trim
                    for (t, &v) in input.iter().enumerate() {
                        let pos = t * self.stride + kk;
                        if pos >= trim && pos - trim < out_len {
                            row[pos - trim] += wk * v;
                        }
                    }
                }
            }
        }
        Signal::new(self.out_ch, out_len, out)
    }
}

/// Draws `N(0, 1/fan_in)` weights and zero biases for a convolution.
pub(crate) fn init_conv(map: &mut TensorMap, prefix: &str, shape: Vec<usize>, out_ch: usize, fan_in: usize, rng: &mut impl Rng) {
    let std = (1.0 / fan_in.max(1) as f64).sqrt() as f32;
    map.insert(format!("{prefix}.weight"), random_tensor(shape, std, rng));
    map.insert(format!("{prefix}.bias"), Tensor::zeros(vec![out_ch]));
}

pub(crate) fn random_tensor(shape: Vec<usize>, std: f32, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    let normal = Normal::new(0.0f32, std).expect("finite std");
    let data = (0..n).map(|_| normal.sample(rng)).collect();
    Tensor::new(shape, data).expect("shape matches")
}

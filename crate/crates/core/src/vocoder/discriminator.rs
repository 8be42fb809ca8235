//! Multi-period and multi-scale discriminators (forward pass only).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::nn::{init_conv, Conv1d, ConvSpec, Signal};
use super::tensor::{Tensor, TensorMap};
use crate::{Error, Result};

pub const PERIODS: [usize; 5] = [2, 3, 5, 7, 11];
pub const SCALES: [usize; 3] = [1, 2, 4];

/// Recorded activations of one sub-discriminator. `layers` holds the hidden
/// activations in order; `scores` is the final output map.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationStack {
    pub layers: Vec<Tensor>,
    pub scores: Tensor,
}

impl ActivationStack {
    /// All `R` recorded layers, the score map last.
    pub fn all_layers(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().chain(std::iter::once(&self.scores))
    }

    pub fn depth(&self) -> usize {
        self.layers.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub periods: Vec<usize>,
    pub scales: Vec<usize>,
    /// Channel widths are divided by this; 1 gives the full-size networks.
    pub width_divisor: usize,
    pub leaky_slope: f32,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            periods: PERIODS.to_vec(),
            scales: SCALES.to_vec(),
            width_divisor: 1,
            leaky_slope: 0.1,
        }
    }
}

impl DiscriminatorConfig {
    /// Narrow networks for quick evaluation runs.
    pub fn desk() -> Self {
        Self {
            width_divisor: 16,
            ..Self::default()
        }
    }

    fn width(&self, ch: usize) -> usize {
        (ch / self.width_divisor).max(1)
    }

    /// Hidden layers plus output projection of a period sub-discriminator.
    /// Kernels span `(k, 1)` over the `[rows x period]` lattice, so each
    /// column is convolved independently.
    pub fn period_layers(&self) -> (Vec<ConvSpec>, ConvSpec) {
        let widths = [1, 32, 128, 512, 1024].map(|c| if c == 1 { 1 } else { self.width(c) });
        let mut convs: Vec<ConvSpec> = widths
            .windows(2)
            .map(|w| ConvSpec::strided(w[0], w[1], 5, 3, 2, 1))
            .collect();
        let last = widths[4];
        convs.push(ConvSpec::strided(last, last, 5, 1, 2, 1));
        (convs, ConvSpec::strided(last, 1, 3, 1, 1, 1))
    }

    pub fn scale_layers(&self) -> (Vec<ConvSpec>, ConvSpec) {
        let raw = [
            (1, 128, 15, 1, 1, 7),
            (128, 128, 41, 2, 4, 20),
            (128, 256, 41, 2, 16, 20),
            (256, 512, 41, 4, 16, 20),
            (512, 1024, 41, 4, 16, 20),
            (1024, 1024, 41, 1, 16, 20),
            (1024, 1024, 5, 1, 1, 2),
        ];
        let convs: Vec<ConvSpec> = raw
            .iter()
            .map(|&(i, o, k, s, g, p)| {
                let i = if i == 1 { 1 } else { self.width(i) };
                let o = self.width(o);
                ConvSpec::strided(i, o, k, s, p, fit_groups(g, i, o))
            })
            .collect();
        let last = convs.last().unwrap().out_ch;
        (convs, ConvSpec::strided(last, 1, 3, 1, 1, 1))
    }

    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut push = |prefix: &str, convs: Vec<ConvSpec>, post: ConvSpec| {
            for (j, c) in convs.iter().enumerate() {
                out.push((format!("{prefix}.convs.{j}.weight"), c.weight_shape()));
                out.push((format!("{prefix}.convs.{j}.bias"), vec![c.out_ch]));
            }
            out.push((format!("{prefix}.post.weight"), post.weight_shape()));
            out.push((format!("{prefix}.post.bias"), vec![post.out_ch]));
        };
        for i in 0..self.periods.len() {
            let (convs, post) = self.period_layers();
            push(&format!("mpd.{i}"), convs, post);
        }
        for i in 0..self.scales.len() {
            let (convs, post) = self.scale_layers();
            push(&format!("msd.{i}"), convs, post);
        }
        out
    }
}

/// Largest group count `<= wanted` dividing both channel counts.
fn fit_groups(wanted: usize, in_ch: usize, out_ch: usize) -> usize {
    (1..=wanted.min(in_ch))
        .rev()
        .find(|g| in_ch.is_multiple_of(*g) && out_ch.is_multiple_of(*g))
        .unwrap_or(1)
}

struct ConvStack {
    convs: Vec<Conv1d>,
    post: Conv1d,
}

impl ConvStack {
    fn load(map: &TensorMap, prefix: &str, specs: (Vec<ConvSpec>, ConvSpec)) -> Result<Self> {
        let convs = specs
            .0
            .into_iter()
            .enumerate()
            .map(|(j, s)| Conv1d::from_map(map, &format!("{prefix}.convs.{j}"), s))
            .collect::<Result<_>>()?;
        let post = Conv1d::from_map(map, &format!("{prefix}.post"), specs.1)?;
        Ok(Self { convs, post })
    }

    /// Hidden activations (after the leaky rectifier) and the score map.
    fn run(&self, x: Signal, slope: f32) -> (Vec<Signal>, Signal) {
        let mut acts = Vec::with_capacity(self.convs.len());
        let mut h = x;
        for conv in &self.convs {
            h = conv.forward(&h).leaky_relu(slope);
            acts.push(h.clone());
        }
        let scores = self.post.forward(&h);
        (acts, scores)
    }
}

/// Both discriminator ensembles with fixed weights.
pub struct Discriminators {
    config: DiscriminatorConfig,
    period: Vec<ConvStack>,
    scale: Vec<ConvStack>,
}

impl Discriminators {
    pub fn from_weights(config: DiscriminatorConfig, map: &TensorMap) -> Result<Self> {
        if config.periods.is_empty() || config.periods.contains(&0) {
            return Err(Error::Config("periods must be positive".into()));
        }
        if config.scales.is_empty() || config.scales.contains(&0) || config.width_divisor == 0 {
            return Err(Error::Config("scales and width divisor must be positive".into()));
        }
        let period = (0..config.periods.len())
            .map(|i| ConvStack::load(map, &format!("mpd.{i}"), config.period_layers()))
            .collect::<Result<_>>()?;
        let scale = (0..config.scales.len())
            .map(|i| ConvStack::load(map, &format!("msd.{i}"), config.scale_layers()))
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            period,
            scale,
        })
    }

    pub fn random(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        Self::from_weights(config.clone(), &Self::random_weights(&config, seed))
    }

    pub fn random_weights(config: &DiscriminatorConfig, seed: u64) -> TensorMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = TensorMap::new();
        for (name, shape) in config.tensor_shapes() {
            if let Some(prefix) = name.strip_suffix(".weight") {
                let fan_in = shape[1] * shape[2];
                init_conv(&mut map, prefix, shape.clone(), shape[0], fan_in, &mut rng);
            }
        }
        map
    }

    pub fn zeros(config: DiscriminatorConfig) -> Result<Self> {
        let mut map = TensorMap::new();
        for (name, shape) in config.tensor_shapes() {
            map.insert(name, Tensor::zeros(shape));
        }
        Self::from_weights(config, &map)
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    /// Number of sub-discriminators `J`.
    pub fn count(&self) -> usize {
        self.period.len() + self.scale.len()
    }

    /// One stack per period. Activations have shape `[channels, rows, period]`.
    pub fn discriminate_mpd(&self, x: &[f32]) -> Result<Vec<ActivationStack>> {
        if x.is_empty() {
            return Err(Error::InvalidInput("empty signal".into()));
        }
        let slope = self.config.leaky_slope;
        Ok(self
            .config
            .periods
            .iter()
            .zip(&self.period)
            .map(|(&p, stack)| {
                let padded = mpd_padded_len(x.len(), p);
                let rows = padded / p;
                let column = |w: usize| {
                    let data = (0..rows)
                        .map(|h| x.get(h * p + w).copied().unwrap_or(0.0))
                        .collect();
                    Signal::new(1, rows, data)
                };
                let runs: Vec<(Vec<Signal>, Signal)> =
                    (0..p).map(|w| stack.run(column(w), slope)).collect();
                let interleave = |pick: &dyn Fn(&(Vec<Signal>, Signal)) -> &Signal| {
                    let first = pick(&runs[0]);
                    let (c, h) = (first.channels, first.len);
                    let mut data = vec![0f32; c * h * p];
                    for (w, run) in runs.iter().enumerate() {
                        let s = pick(run);
                        for ch in 0..c {
                            for (row, &v) in s.channel(ch).iter().enumerate() {
                                data[(ch * h + row) * p + w] = v;
                            }
                        }
                    }
                    Tensor::new(vec![c, h, p], data).expect("shape matches")
                };
                let depth = runs[0].0.len();
                let layers = (0..depth).map(|l| interleave(&|r| &r.0[l])).collect();
                let scores = interleave(&|r| &r.1);
                ActivationStack { layers, scores }
            })
            .collect())
    }

    /// One stack per scale, on mean-pooled copies of the signal.
    pub fn discriminate_msd(&self, x: &[f32]) -> Result<Vec<ActivationStack>> {
        let max_scale = *self.config.scales.iter().max().unwrap();
        if x.len() < max_scale {
            return Err(Error::TooShort {
                needed: max_scale,
                got: x.len(),
            });
        }
        let slope = self.config.leaky_slope;
        Ok(self
            .config
            .scales
            .iter()
            .zip(&self.scale)
            .map(|(&s, stack)| {
                let pooled = mean_pool(x, s);
                let (acts, scores) = stack.run(Signal::new(1, pooled.len(), pooled), slope);
                let to_tensor = |sig: Signal| {
                    Tensor::new(vec![sig.channels, sig.len], sig.data).expect("shape matches")
                };
                ActivationStack {
                    layers: acts.into_iter().map(to_tensor).collect(),
                    scores: to_tensor(scores),
                }
            })
            .collect())
    }

    /// Period stacks followed by scale stacks.
    pub fn discriminate(&self, x: &[f32]) -> Result<Vec<ActivationStack>> {
        let mut all = self.discriminate_mpd(x)?;
        all.extend(self.discriminate_msd(x)?);
        Ok(all)
    }
}

/// Least multiple of `period` not below `len`.
pub fn mpd_padded_len(len: usize, period: usize) -> usize {
    len.div_ceil(period) * period
}

/// Non-overlapping mean pooling; a trailing partial window is dropped.
pub fn mean_pool(x: &[f32], factor: usize) -> Vec<f32> {
    if factor == 1 {
        return x.to_vec();
    }
    x.chunks_exact(factor)
        .map(|c| c.iter().map(|&v| v as f64).sum::<f64>() as f32 / factor as f32)
        .collect()
}

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::io::{ensure_finite, put_f32s, read_file, write_file, ByteReader};
use crate::{Error, Result};

pub const DEFAULT_DECAY: f32 = 0.99;
pub const DEFAULT_RESTART_THRESHOLD: f32 = 1.0;

const EPS: f64 = 1e-8;
const MAGIC: &[u8; 4] = b"CDBK";
const VERSION: u8 = 1;

/// `K` vectors of dimension `dim` plus the exponential-moving-average state
/// used to learn them without gradients.
///
/// After every [`Codebook::ema_update`], row `i` equals
/// `sum_ema[i] / max(usage_ema[i], 1e-8)` (computed in `f64`, stored as `f32`).
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    vectors: Vec<f32>,
    dim: usize,
    usage_ema: Vec<f64>,
    sum_ema: Vec<f64>,
    decay: f32,
    restart_threshold: f32,
    seed: u64,
    updates: u64,
}

/// Outcome of one EMA update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    /// Nearest code per batch row, before restarts.
    pub assignments: Vec<u32>,
    /// Batch rows assigned to each code.
    pub counts: Vec<usize>,
    /// Codes that were reinitialized onto a batch row.
    pub restarted: Vec<usize>,
}

impl Codebook {
    /// Codebook whose EMA state is consistent with the given rows
    /// (`usage = 1`, `sum = row`).
    pub fn from_vectors(vectors: Vec<f32>, dim: usize) -> Result<Self> {
        let k = vectors.len().checked_div(dim).unwrap_or(0);
        Self::from_parts(vectors, dim, vec![1.0; k])
    }

    fn from_parts(vectors: Vec<f32>, dim: usize, usage: Vec<f32>) -> Result<Self> {
        if dim == 0 || vectors.is_empty() || !vectors.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} values do not form a codebook of dim {dim}",
                vectors.len()
            )));
        }
        ensure_finite(&vectors, "codebook vectors")?;
        let k = vectors.len() / dim;
        if usage.len() != k {
            return Err(Error::LengthMismatch {
                left: usage.len(),
                right: k,
            });
        }
        if usage.iter().any(|u| !u.is_finite() || *u < 0.0) {
            return Err(Error::InvalidInput("usage statistics must be finite and >= 0".into()));
        }
        let usage_ema: Vec<f64> = usage.iter().map(|&u| u as f64).collect();
        let sum_ema = vectors
            .chunks_exact(dim)
            .zip(&usage_ema)
            .flat_map(|(row, &u)| row.iter().map(move |&v| v as f64 * u))
            .collect();
        Ok(Self {
            vectors,
            dim,
            usage_ema,
            sum_ema,
            decay: DEFAULT_DECAY,
            restart_threshold: DEFAULT_RESTART_THRESHOLD,
            seed: 0,
            updates: 0,
        })
    }

    /// Sets the EMA decay, restart threshold and restart seed.
    pub fn with_ema(mut self, decay: f32, restart_threshold: f32, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::Config(format!("decay {decay} must be in [0, 1)")));
        }
        if !(restart_threshold.is_finite() && restart_threshold >= 0.0) {
            return Err(Error::Config(format!(
                "restart threshold {restart_threshold} must be >= 0"
            )));
        }
        self.decay = decay;
        self.restart_threshold = restart_threshold;
        self.seed = seed;
        Ok(self)
    }

    pub(crate) fn with_usage(mut self, usage: &[f64]) -> Self {
        for (i, &u) in usage.iter().enumerate() {
            self.usage_ema[i] = u;
            for d in 0..self.dim {
                self.sum_ema[i * self.dim + d] = self.vectors[i * self.dim + d] as f64 * u;
            }
        }
        self
    }

    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn usage_ema(&self) -> &[f64] {
        &self.usage_ema
    }

    pub fn sum_ema(&self) -> &[f64] {
        &self.sum_ema
    }

    pub fn decay(&self) -> f32 {
        self.decay
    }

    pub fn restart_threshold(&self) -> f32 {
        self.restart_threshold
    }

    /// Index and squared distance of the nearest row; ties go to the lowest index.
    pub fn nearest(&self, x: &[f32]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, row) in self.vectors.chunks_exact(self.dim).enumerate() {
            let d = squared_distance(x, row);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    /// One EMA step on a row-major batch, followed by random restarts of any
    /// code whose usage fell below the restart threshold.
    pub fn ema_update(&mut self, batch: &[f32]) -> Result<UpdateReport> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        if !batch.len().is_multiple_of(self.dim) {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: batch.len() % self.dim,
            });
        }
        ensure_finite(batch, "batch")?;
        let k = self.len();
        let dim = self.dim;
        let rows: Vec<&[f32]> = batch.chunks_exact(dim).collect();

        let mut counts = vec![0usize; k];
        let mut sums = vec![0f64; k * dim];
        let assignments: Vec<u32> = rows
            .iter()
            .map(|row| {
                let (i, _) = self.nearest(row);
                counts[i] += 1;
                for (s, &v) in sums[i * dim..(i + 1) * dim].iter_mut().zip(*row) {
                    *s += v as f64;
                }
                i as u32
            })
            .collect();

        let gamma = self.decay as f64;
        for i in 0..k {
            self.usage_ema[i] = gamma * self.usage_ema[i] + (1.0 - gamma) * counts[i] as f64;
            let denom = self.usage_ema[i].max(EPS);
            for d in 0..dim {
                let j = i * dim + d;
                self.sum_ema[j] = gamma * self.sum_ema[j] + (1.0 - gamma) * sums[j];
                self.vectors[j] = (self.sum_ema[j] / denom) as f32;
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.updates);
        self.updates += 1;
        let threshold = self.restart_threshold as f64;
        let mut restarted = Vec::new();
        for i in 0..k {
            if self.usage_ema[i] < threshold {
                let row = rows[rng.random_range(0..rows.len())];
                self.vectors[i * dim..(i + 1) * dim].copy_from_slice(row);
                for (s, &v) in self.sum_ema[i * dim..(i + 1) * dim].iter_mut().zip(row) {
                    *s = v as f64;
                }
                self.usage_ema[i] = 1.0;
                restarted.push(i);
            }
        }

        Ok(UpdateReport {
            assignments,
            counts,
            restarted,
        })
    }

    /// Serializes to the `CDBK` format. The EMA sums are not stored; they are
    /// rebuilt as `vector * usage` on load.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(22 + 4 * (self.vectors.len() + self.len()));
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&self.decay.to_le_bytes());
        out.extend_from_slice(&self.restart_threshold.to_le_bytes());
        put_f32s(&mut out, &self.vectors);
        let usage: Vec<f32> = self.usage_ema.iter().map(|&u| u as f32).collect();
        put_f32s(&mut out, &usage);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "codebook");
        r.expect_magic(MAGIC)?;
        r.expect_version("codebook", VERSION)?;
        let k = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let decay = r.f32()?;
        let threshold = r.f32()?;
        if k == 0 || dim == 0 {
            return Err(Error::InvalidInput(format!("codebook declares K={k}, dim={dim}")));
        }
        let vectors = r.f32_vec(k.checked_mul(dim).ok_or(Error::Truncated("codebook"))?)?;
        let usage = r.f32_vec(k)?;
        r.finish()?;
        Self::from_parts(vectors, dim, usage)?.with_ema(decay, threshold, 0)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }
}

pub(crate) fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

//! Forward-only generator and discriminator objectives.
//!
//! Reductions: each term averages over the elements of its score map or
//! activation and over the batch; sub-discriminator terms are summed, and
//! feature matching sums the per-layer mean absolute difference (the
//! `1/M_i` weighting) over every recorded layer including the score map.

use std::fmt::Write as _;

use crate::signal::{AudioClip, MelAnalyzer, MelConfig};
use crate::vocoder::{ActivationStack, Tensor};
use crate::{Error, Result};

impl AsRef<[f32]> for Tensor {
    fn as_ref(&self) -> &[f32] {
        self.data()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_fm: f64,
    pub lambda_r: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_fm: 2.0,
            lambda_r: 45.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_fm >= 0.0 && self.lambda_r >= 0.0 {
            Ok(())
        } else {
            Err(Error::Config("loss weights must be non-negative".into()))
        }
    }
}

fn batch_mean<S: AsRef<[f32]>>(batch: &[S], per_item: impl Fn(&[f32]) -> f64) -> Result<f64> {
    if batch.is_empty() || batch.iter().any(|s| s.as_ref().is_empty()) {
        return Err(Error::InvalidInput("empty score map".into()));
    }
    let total: f64 = batch.iter().map(|s| per_item(s.as_ref())).sum();
    Ok(total / batch.len() as f64)
}

fn mean_of(values: &[f32], f: impl Fn(f64) -> f64) -> f64 {
    values.iter().map(|&s| f(s as f64)).sum::<f64>() / values.len() as f64
}

/// Least-squares generator loss: mean of `(1 - s)^2` on fake scores.
pub fn adv_loss_g<S: AsRef<[f32]>>(scores_fake: &[S]) -> Result<f64> {
    batch_mean(scores_fake, |s| mean_of(s, |v| (1.0 - v) * (1.0 - v)))
}

/// Least-squares discriminator loss: `mean (1 - s_real)^2 + mean s_fake^2`.
pub fn d_loss<S: AsRef<[f32]>>(scores_real: &[S], scores_fake: &[S]) -> Result<f64> {
    Ok(batch_mean(scores_real, |s| mean_of(s, |v| (1.0 - v) * (1.0 - v)))?
        + batch_mean(scores_fake, |s| mean_of(s, |v| v * v))?)
}

/// Mean absolute difference between the log-mel spectrograms of `x` and `x_hat`.
pub fn recon_loss(x: &AudioClip, x_hat: &AudioClip, cfg: &MelConfig) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: x_hat.len(),
        });
    }
    if x.sample_rate() != x_hat.sample_rate() {
        return Err(Error::Config("sample rates differ".into()));
    }
    let analyzer = MelAnalyzer::new(cfg, x.sample_rate())?;
    let a = analyzer.compute(x)?;
    let b = analyzer.compute(x_hat)?;
    let diff: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(p, q)| (p - q).abs())
        .sum();
    Ok(diff / a.values().len() as f64)
}

/// Sum over layers of the mean absolute activation difference.
pub fn fm_loss(real: &ActivationStack, fake: &ActivationStack) -> Result<f64> {
    if real.depth() != fake.depth() {
        return Err(Error::LengthMismatch {
            left: real.depth(),
            right: fake.depth(),
        });
    }
    let mut total = 0.0;
    for (a, b) in real.all_layers().zip(fake.all_layers()) {
        if a.shape() != b.shape() || a.is_empty() {
            return Err(Error::InvalidInput(format!(
                "activation shapes differ: {:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let l1: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&p, &q)| (p as f64 - q as f64).abs())
            .sum();
        total += l1 / a.len() as f64;
    }
    Ok(total)
}

/// Batch mean of [`fm_loss`] over paired stacks.
pub fn fm_loss_batch(pairs: &[(ActivationStack, ActivationStack)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let sum = pairs
        .iter()
        .map(|(r, f)| fm_loss(r, f))
        .sum::<Result<f64>>()?;
    Ok(sum / pairs.len() as f64)
}

/// Terms of one sub-discriminator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubLosses {
    pub adv: f64,
    pub fm: f64,
    pub disc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub per_discriminator: Vec<SubLosses>,
    pub recon: f64,
    pub weights: LossWeights,
    pub generator_total: f64,
    pub discriminator_total: f64,
}

impl LossReport {
    /// `generator_total = sum_j (adv_j + lambda_fm * fm_j) + lambda_r * recon`,
    /// `discriminator_total = sum_j disc_j`.
    pub fn from_parts(parts: Vec<SubLosses>, recon: f64, weights: LossWeights) -> Result<Self> {
        weights.validate()?;
        if parts.is_empty() {
            return Err(Error::InvalidInput("no sub-discriminators".into()));
        }
        let generator_total = parts
            .iter()
            .map(|p| p.adv + weights.lambda_fm * p.fm)
            .sum::<f64>()
            + weights.lambda_r * recon;
        let discriminator_total = parts.iter().map(|p| p.disc).sum();
        Ok(Self {
            per_discriminator: parts,
            recon,
            weights,
            generator_total,
            discriminator_total,
        })
    }

    /// Tab-separated `key\tvalue` lines.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (j, p) in self.per_discriminator.iter().enumerate() {
            let _ = writeln!(out, "adv.{j}\t{:.6}", p.adv);
            let _ = writeln!(out, "fm.{j}\t{:.6}", p.fm);
            let _ = writeln!(out, "disc.{j}\t{:.6}", p.disc);
        }
        let _ = writeln!(out, "recon\t{:.6}", self.recon);
        let _ = writeln!(out, "lambda_fm\t{}", self.weights.lambda_fm);
        let _ = writeln!(out, "lambda_r\t{}", self.weights.lambda_r);
        let _ = writeln!(out, "generator_total\t{:.6}", self.generator_total);
        let _ = writeln!(out, "discriminator_total\t{:.6}", self.discriminator_total);
        out
    }
}

/// Full objective for one real/generated pair given each sub-discriminator's
/// activations on both.
pub fn total_losses(
    x: &AudioClip,
    x_hat: &AudioClip,
    real_stacks: &[ActivationStack],
    fake_stacks: &[ActivationStack],
    weights: LossWeights,
    mel_cfg: &MelConfig,
) -> Result<LossReport> {
    if real_stacks.len() != fake_stacks.len() {
        return Err(Error::LengthMismatch {
            left: real_stacks.len(),
            right: fake_stacks.len(),
        });
    }
    let parts = real_stacks
        .iter()
        .zip(fake_stacks)
        .map(|(real, fake)| {
            Ok(SubLosses {
                adv: adv_loss_g(&[&fake.scores])?,
                fm: fm_loss(real, fake)?,
                disc: d_loss(&[&real.scores], &[&fake.scores])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let recon = recon_loss(x, x_hat, mel_cfg)?;
    LossReport::from_parts(parts, recon, weights)
}

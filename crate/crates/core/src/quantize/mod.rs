//! Discretization: k-means content units, the EMA-trained VQ codebook, and
//! F0 track encoding into low-rate pitch codes.

mod codebook;
mod f0;
mod kmeans;

pub use codebook::{Codebook, UpdateReport, DEFAULT_DECAY, DEFAULT_RESTART_THRESHOLD};
pub use f0::{
    f0_decode, f0_encode, f0_window_features, train_f0_codebook, F0CodeSequence, F0VqOptions,
    F0_DOWNSAMPLE, F0_WINDOW_DIM,
};
pub use kmeans::{kmeans_fit, kmeans_fit_rows, KMeansFit, KMeansOptions};

use crate::features::FeatureSequence;
use crate::{Error, Result};

/// Content unit codes, each `< vocab`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSequence {
    codes: Vec<u32>,
    vocab: u32,
    frame_rate: f64,
}

impl UnitSequence {
    pub fn new(codes: Vec<u32>, vocab: u32, frame_rate: f64) -> Result<Self> {
        if vocab == 0 {
            return Err(Error::Config("vocabulary must be non-empty".into()));
        }
        if let Some(&code) = codes.iter().find(|&&c| c >= vocab) {
            return Err(Error::CodeOutOfRange { code, vocab });
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::Config(format!("frame rate {frame_rate} must be positive")));
        }
        Ok(Self {
            codes,
            vocab,
            frame_rate,
        })
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn vocab(&self) -> u32 {
        self.vocab
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Maps each feature frame to its nearest codebook row.
pub fn quantize(features: &FeatureSequence, codebook: &Codebook) -> Result<UnitSequence> {
    if features.dim() != codebook.dim() {
        return Err(Error::DimMismatch {
            expected: codebook.dim(),
            found: features.dim(),
        });
    }
    let codes = features
        .rows()
        .map(|row| codebook.nearest(row).0 as u32)
        .collect();
    UnitSequence::new(codes, codebook.len() as u32, features.frame_rate() as f64)
}

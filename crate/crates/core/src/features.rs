//! Content features: the `FTRS` interchange format for externally computed
//! frame features, and a per-utterance normalized log-mel featurizer.

use std::path::Path;

use crate::io::{ensure_finite, put_f32s, read_file, write_file, ByteReader};
use crate::signal::{mel_spectrogram, AudioClip, MelConfig};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"FTRS";
const VERSION: u8 = 1;

/// Row-major `[num_frames x dim]` feature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Vec<f32>,
    dim: usize,
    frame_rate: f32,
    source_tag: String,
}

impl FeatureSequence {
    pub fn new(data: Vec<f32>, dim: usize, frame_rate: f32, source_tag: impl Into<String>) -> Result<Self> {
        if dim == 0 || data.is_empty() {
            return Err(Error::InvalidInput("feature sequence must be non-empty".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} values do not divide into rows of {dim}",
                data.len()
            )));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::Config(format!("frame rate {frame_rate} must be positive")));
        }
        ensure_finite(&data, "feature sequence")?;
        Ok(Self {
            data,
            dim,
            frame_rate,
            source_tag: source_tag.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame_rate(&self) -> f32 {
        self.frame_rate
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(17 + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.frame_rate.to_le_bytes());
        put_f32s(&mut out, &self.data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "feature file");
        r.expect_magic(MAGIC)?;
        r.expect_version("feature file", VERSION)?;
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let frame_rate = r.f32()?;
        if dim == 0 || count == 0 {
            return Err(Error::InvalidInput(format!(
                "feature file declares dim {dim}, count {count}"
            )));
        }
        let data = r.f32_vec(dim.checked_mul(count).ok_or(Error::Truncated("feature file"))?)?;
        r.finish()?;
        Self::new(data, dim, frame_rate, "file")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_bytes())
    }
}

/// Reads an `FTRS` feature file.
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let mut seq = FeatureSequence::from_bytes(&read_file(path)?)?;
    seq.source_tag = path.display().to_string();
    Ok(seq)
}

/// Log-mel frames at the given hop, normalized to zero mean and unit variance
/// per dimension over the utterance. Constant dimensions are only centered.
pub fn baseline_features(clip: &AudioClip, hop: usize) -> Result<FeatureSequence> {
    let sr = clip.sample_rate();
    let defaults = MelConfig::default();
    let cfg = MelConfig {
        hop,
        fmax: defaults.fmax.min(sr as f64 / 2.0),
        ..defaults
    };
    let mel = mel_spectrogram(clip, &cfg)?;
    let frames = mel.num_frames();
    let dim = mel.mel_bands();
    let values = mel.values();

    let mut data = vec![0f32; frames * dim];
    for d in 0..dim {
        let column = || (0..frames).map(|t| values[t * dim + d]);
        let mean = column().sum::<f64>() / frames as f64;
        let var = column().map(|v| (v - mean) * (v - mean)).sum::<f64>() / frames as f64;
        let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
        for (t, v) in column().enumerate() {
            data[t * dim + d] = ((v - mean) * scale) as f32;
        }
    }
    FeatureSequence::new(data, dim, sr as f32 / hop as f32, "baseline-logmel")
}

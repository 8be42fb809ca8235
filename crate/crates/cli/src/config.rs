//! TOML run configuration. Relative paths resolve against the config file's
//! directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use dsrcodec::{CodecConfig, MelConfig, PitchConfig};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub codec: Option<CodecSection>,
    pub pitch: Option<PitchSection>,
    pub mel: Option<MelSection>,
    pub paths: Option<PathsSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecSection {
    pub sample_rate: Option<u32>,
    pub content_hop: Option<u16>,
    pub content_vocab: Option<u16>,
    pub f0_vocab: Option<u16>,
    pub f0_group: Option<u8>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PitchSection {
    pub window_ms: Option<f64>,
    pub hop_ms: Option<f64>,
    pub fmin: Option<f64>,
    pub fmax: Option<f64>,
    pub voicing_threshold: Option<f64>,
    pub energy_gate_db: Option<f64>,
    pub octave_cost: Option<f64>,
    pub lag_weight: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MelSection {
    pub fft_size: Option<usize>,
    pub hop: Option<usize>,
    pub window: Option<usize>,
    pub mel_bands: Option<usize>,
    pub fmin: Option<f64>,
    pub fmax: Option<f64>,
    pub log_floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub content_codebook: Option<PathBuf>,
    pub f0_codebook: Option<PathBuf>,
    pub generator: Option<PathBuf>,
    pub speakers: Option<PathBuf>,
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub codec: CodecConfig,
    pub pitch: PitchConfig,
    pub mel: MelConfig,
    pub content_codebook: Option<PathBuf>,
    pub f0_codebook: Option<PathBuf>,
    pub generator: Option<PathBuf>,
    pub speakers: Option<PathBuf>,
}

macro_rules! apply {
    ($target:expr, $section:expr, $($field:ident),+) => {
        $(if let Some(v) = $section.$field { $target.$field = v; })+
    };
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let (file, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    dsrcodec::Error::Io {
                        path: p.to_path_buf(),
                        source: e,
                    }
                })?;
                let parsed: FileConfig = toml::from_str(&text)
                    .map_err(|e| dsrcodec::Error::Config(format!("{}: {e}", p.display())))?;
                (parsed, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (FileConfig::default(), PathBuf::new()),
        };
        Self::from_file(file, &base)
    }

    fn from_file(file: FileConfig, base: &Path) -> Result<Self> {
        let mut codec = CodecConfig::hubert50();
        if let Some(c) = file.codec {
            apply!(codec, c, sample_rate, content_hop, content_vocab, f0_vocab, f0_group);
        }
        codec.validate().context("codec section")?;

        let mut pitch = PitchConfig::default();
        if let Some(p) = file.pitch {
            apply!(
                pitch,
                p,
                window_ms,
                hop_ms,
                fmin,
                fmax,
                voicing_threshold,
                energy_gate_db,
                octave_cost,
                lag_weight
            );
        }

        let mut mel = MelConfig::default();
        if let Some(m) = file.mel {
            apply!(mel, m, fft_size, hop, window, mel_bands, fmin, fmax, log_floor);
        }

        let resolve = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });
        let paths = file.paths.unwrap_or_default();
        Ok(Self {
            seed: file.seed.unwrap_or(0),
            codec,
            pitch,
            mel,
            content_codebook: resolve(paths.content_codebook),
            f0_codebook: resolve(paths.f0_codebook),
            generator: resolve(paths.generator),
            speakers: resolve(paths.speakers),
        })
    }
}

/// Flag value if given, else the config value, else an error naming both.
pub fn pick(flag: Option<PathBuf>, config: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| config.clone()).ok_or_else(|| {
        dsrcodec::Error::Config(format!("no {what} path: pass a flag or set it under [paths]")).into()
    })
}

//! Audio clips, WAV I/O and the log-mel spectrogram.
//!
//! The mel operator uses a Hann-windowed power spectrum projected through a
//! triangular HTK-scale filterbank, followed by `ln(max(energy, log_floor))`.
//! Only full windows are analysed, so a clip of `T >= window` samples yields
//! `(T - window) / hop + 1` frames.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Mono waveform with its sample rate.
#[derive(Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl fmt::Debug for AudioClip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AudioClip")
            .field("len", &self.samples.len())
            .field("sample_rate", &self.sample_rate)
            .finish()
    }
}

impl AudioClip {
    /// Samples must be finite and within `[-1, 1]`.
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::InvalidInput(format!(
                "sample {bad} outside [-1, 1]"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a PCM WAV file. Multi-channel files keep only the first channel.
/// Integer PCM is divided by `2^(bits-1)`, so the most negative code maps to
/// exactly `-1.0`.
pub fn load_audio(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other),
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::UnsupportedEncoding("zero channels".into()));
    }

    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Int => {
            if spec.bits_per_sample == 0 || spec.bits_per_sample > 32 {
                return Err(Error::UnsupportedEncoding(format!(
                    "{}-bit integer PCM",
                    spec.bits_per_sample
                )));
            }
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 * scale) as f32))
                .collect::<std::result::Result<_, _>>()?
        }
        hound::SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(Error::UnsupportedEncoding(format!(
                    "{}-bit float PCM",
                    spec.bits_per_sample
                )));
            }
            let raw: Vec<f32> = reader
                .into_samples::<f32>()
                .collect::<std::result::Result<_, _>>()?;
            if raw.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(path.display().to_string()));
            }
            raw.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect()
        }
    };

    let samples: Vec<f32> = interleaved.into_iter().step_by(channels).collect();
    if samples.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} contains no audio",
            path.display()
        )));
    }
    AudioClip::new(samples, spec.sample_rate)
}

/// Writes a mono 16-bit PCM WAV at the clip's sample rate.
pub fn write_audio(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other),
    })?;
    for &s in &clip.samples {
        writer.write_sample(pcm16(s))?;
    }
    writer.finalize()?;
    Ok(())
}

fn pcm16(s: f32) -> i16 {
    (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Integer-factor decimation behind a windowed-sinc low-pass.
pub fn decimate(clip: &AudioClip, factor: usize) -> Result<AudioClip> {
    if factor == 0 {
        return Err(Error::Config("decimation factor must be positive".into()));
    }
    if factor == 1 {
        return Ok(clip.clone());
    }
    if !clip.sample_rate.is_multiple_of(factor as u32) {
        return Err(Error::Config(format!(
            "sample rate {} not divisible by {factor}",
            clip.sample_rate
        )));
    }
    const HALF: isize = 32;
    let cutoff = 0.5 / factor as f64;
    let taps: Vec<f64> = (-HALF..=HALF)
        .map(|n| {
            let n = n as f64;
            let sinc = if n == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * n).sin() / (PI * n)
            };
            let hamming = 0.54 + 0.46 * (PI * n / HALF as f64).cos();
            sinc * hamming
        })
        .collect();
    let x = &clip.samples;
    let out = (0..x.len())
        .step_by(factor)
        .map(|center| {
            let acc: f64 = taps
                .iter()
                .enumerate()
                .filter_map(|(k, &w)| {
                    let idx = center as isize + k as isize - HALF;
                    (idx >= 0 && (idx as usize) < x.len()).then(|| w * x[idx as usize] as f64)
                })
                .sum();
            acc.clamp(-1.0, 1.0) as f32
        })
        .collect();
    AudioClip::new(out, clip.sample_rate / factor as u32)
}

/// Number of full analysis windows in `len` samples.
pub fn frame_count(len: usize, window: usize, hop: usize) -> usize {
    if len < window || hop == 0 {
        0
    } else {
        (len - window) / hop + 1
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub window: usize,
    pub mel_bands: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            hop: 256,
            window: 1024,
            mel_bands: 80,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-5,
        }
    }
}

impl MelConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        let fail = |msg: String| Err(Error::Config(msg));
        if self.fft_size < 2 || self.window == 0 || self.window > self.fft_size {
            return fail(format!(
                "mel window {} must be in 1..={} (fft size)",
                self.window, self.fft_size
            ));
        }
        if self.hop == 0 || self.hop > self.window {
            return fail(format!("mel hop {} must be in 1..={}", self.hop, self.window));
        }
        if self.mel_bands == 0 {
            return fail("mel band count must be positive".into());
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return fail(format!(
                "mel range {}..{} Hz invalid for {} Hz audio",
                self.fmin, self.fmax, sample_rate
            ));
        }
        if !(self.log_floor > 0.0) {
            return fail("log floor must be positive".into());
        }
        Ok(())
    }

    /// Center frequency of each mel band, in Hz.
    pub fn band_centers(&self) -> Vec<f64> {
        let points = self.mel_points();
        points[1..=self.mel_bands].iter().map(|&m| mel_to_hz(m)).collect()
    }

    fn mel_points(&self) -> Vec<f64> {
        let lo = hz_to_mel(self.fmin);
        let hi = hz_to_mel(self.fmax);
        let n = self.mel_bands + 1;
        (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
    }
}

/// Log-mel energies, row-major `[num_frames x mel_bands]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    data: Vec<f64>,
    num_frames: usize,
    config: MelConfig,
}

impl MelSpectrogram {
    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn mel_bands(&self) -> usize {
        self.config.mel_bands
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let b = self.config.mel_bands;
        &self.data[i * b..(i + 1) * b]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.config.mel_bands)
    }
}

struct Band {
    first_bin: usize,
    weights: Vec<f64>,
}

/// Reusable mel analyser: FFT plan, window and filterbank for one
/// `(config, sample_rate)` pair.
pub struct MelAnalyzer {
    config: MelConfig,
    sample_rate: u32,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    bands: Vec<Band>,
}

impl MelAnalyzer {
    pub fn new(config: &MelConfig, sample_rate: u32) -> Result<Self> {
        config.validate(sample_rate)?;
        let fft = FftPlanner::new().plan_fft_forward(config.fft_size);
        let n = config.window as f64;
        let window = (0..config.window)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos())
            .collect();

        let bin_hz = sample_rate as f64 / config.fft_size as f64;
        let num_bins = config.fft_size / 2 + 1;
        let edges: Vec<f64> = config.mel_points().into_iter().map(mel_to_hz).collect();
        let bands = edges
            .windows(3)
            .map(|e| {
                let (lo, center, hi) = (e[0], e[1], e[2]);
                let weight = |k: usize| {
                    let f = k as f64 * bin_hz;
                    let rise = (f - lo) / (center - lo);
                    let fall = (hi - f) / (hi - center);
                    rise.min(fall).max(0.0)
                };
                let first_bin = (0..num_bins).find(|&k| weight(k) > 0.0).unwrap_or(0);
                let weights = (first_bin..num_bins)
                    .map(weight)
                    .take_while(|&w| w > 0.0)
                    .collect();
                Band { first_bin, weights }
            })
            .collect();

        Ok(Self {
            config: config.clone(),
            sample_rate,
            fft,
            window,
            bands,
        })
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn compute(&self, clip: &AudioClip) -> Result<MelSpectrogram> {
        if clip.sample_rate() != self.sample_rate {
            return Err(Error::Config(format!(
                "analyser built for {} Hz, clip is {} Hz",
                self.sample_rate,
                clip.sample_rate()
            )));
        }
        let cfg = &self.config;
        let x = clip.samples();
        if x.len() < cfg.window {
            return Err(Error::TooShort {
                needed: cfg.window,
                got: x.len(),
            });
        }
        let num_frames = frame_count(x.len(), cfg.window, cfg.hop);
        let floor = cfg.log_floor;
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; cfg.fft_size / 2 + 1];
        let mut data = Vec::with_capacity(num_frames * cfg.mel_bands);

        for frame in 0..num_frames {
            let start = frame * cfg.hop;
            buf.fill(Complex::new(0.0, 0.0));
            for ((b, &s), &w) in buf
                .iter_mut()
                .zip(&x[start..start + cfg.window])
                .zip(&self.window)
            {
                b.re = s as f64 * w;
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            data.extend(self.bands.iter().map(|band| {
                let energy: f64 = band
                    .weights
                    .iter()
                    .zip(&power[band.first_bin..])
                    .map(|(w, p)| w * p)
                    .sum();
                energy.max(floor).ln()
            }));
        }

        Ok(MelSpectrogram {
            data,
            num_frames,
            config: cfg.clone(),
        })
    }
}

/// One-shot log-mel spectrogram of `clip`.
pub fn mel_spectrogram(clip: &AudioClip, cfg: &MelConfig) -> Result<MelSpectrogram> {
    MelAnalyzer::new(cfg, clip.sample_rate())?.compute(clip)
}

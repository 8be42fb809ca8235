//! F0 tracking, speaker pitch statistics and F0 flattening.
//!
//! The tracker computes a normalized cross-correlation function per frame,
//! keeps its strongest local maxima as pitch candidates, and picks one
//! candidate per voiced frame by dynamic programming with an octave-jump
//! penalty. A frame is voiced when its best correlation exceeds the voicing
//! threshold and its RMS lies within the energy gate of the utterance peak.

use std::path::Path;

use crate::io::{read_file, write_file, ByteReader};
use crate::signal::{frame_count, AudioClip};
use crate::{Error, Result};

const MAX_CANDIDATES: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct PitchConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub fmin: f64,
    pub fmax: f64,
    /// Minimum peak correlation for a voiced frame.
    pub voicing_threshold: f64,
    /// Frames quieter than this many dB below the loudest frame are unvoiced.
    pub energy_gate_db: f64,
    /// Transition cost per octave of pitch change between frames.
    pub octave_cost: f64,
    /// Local cost added per unit of `lag / max_lag`; biases against subharmonics.
    pub lag_weight: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            window_ms: 20.0,
            hop_ms: 5.0,
            fmin: 60.0,
            fmax: 400.0,
            voicing_threshold: 0.45,
            energy_gate_db: 30.0,
            octave_cost: 0.35,
            lag_weight: 0.3,
        }
    }
}

impl PitchConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let sr = sample_rate as f64;
        if !(self.fmin > 0.0 && self.fmin < self.fmax && self.fmax < sr / 2.0) {
            return Err(Error::Config(format!(
                "pitch range {}..{} Hz invalid for {} Hz audio",
                self.fmin, self.fmax, sample_rate
            )));
        }
        if !(self.hop_ms > 0.0 && self.hop_ms <= self.window_ms) {
            return Err(Error::Config(format!(
                "pitch hop {} ms must be in (0, {}]",
                self.hop_ms, self.window_ms
            )));
        }
        if self.window_samples(sample_rate) < 2 || self.hop_samples(sample_rate) == 0 {
            return Err(Error::Config("pitch window too small for sample rate".into()));
        }
        Ok(())
    }

    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn frame_rate(&self) -> f64 {
        1000.0 / self.hop_ms
    }
}

/// Per-frame pitch in Hz with voicing flags. Unvoiced frames carry `f0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    f0: Vec<f32>,
    voiced: Vec<bool>,
    frame_rate: f32,
}

impl F0Track {
    pub fn new(f0: Vec<f32>, voiced: Vec<bool>, frame_rate: f32) -> Result<Self> {
        if f0.len() != voiced.len() {
            return Err(Error::LengthMismatch {
                left: f0.len(),
                right: voiced.len(),
            });
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::Config(format!("frame rate {frame_rate} must be positive")));
        }
        for (i, (&f, &v)) in f0.iter().zip(&voiced).enumerate() {
            let ok = if v { f.is_finite() && f > 0.0 } else { f == 0.0 };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "frame {i}: f0 {f} inconsistent with voiced={v}"
                )));
            }
        }
        Ok(Self {
            f0,
            voiced,
            frame_rate,
        })
    }

    /// Builds a track from per-frame Hz values, treating `0` as unvoiced.
    pub fn from_hz(f0: Vec<f32>, frame_rate: f32) -> Result<Self> {
        let voiced = f0.iter().map(|&f| f > 0.0).collect();
        Self::new(f0, voiced, frame_rate)
    }

    pub fn f0(&self) -> &[f32] {
        &self.f0
    }

    pub fn voiced(&self) -> &[bool] {
        &self.voiced
    }

    pub fn frame_rate(&self) -> f32 {
        self.frame_rate
    }

    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn voiced_count(&self) -> usize {
        self.voiced.iter().filter(|&&v| v).count()
    }

    /// Truncates, or pads with unvoiced frames, to exactly `len` frames.
    pub fn resized(&self, len: usize) -> F0Track {
        let mut f0 = self.f0.clone();
        let mut voiced = self.voiced.clone();
        f0.resize(len, 0.0);
        voiced.resize(len, false);
        F0Track {
            f0,
            voiced,
            frame_rate: self.frame_rate,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 5 * self.len());
        out.extend_from_slice(F0TK_MAGIC);
        out.push(F0TK_VERSION);
        out.extend_from_slice(&self.frame_rate.to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for (&f, &v) in self.f0.iter().zip(&self.voiced) {
            out.extend_from_slice(&f.to_le_bytes());
            out.push(v as u8);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "F0 track");
        r.expect_magic(F0TK_MAGIC)?;
        r.expect_version("F0 track", F0TK_VERSION)?;
        let frame_rate = r.f32()?;
        let count = r.u32()? as usize;
        if r.remaining() < count.saturating_mul(5) {
            return Err(Error::Truncated("F0 track"));
        }
        let mut f0 = Vec::with_capacity(count);
        let mut voiced = Vec::with_capacity(count);
        for _ in 0..count {
            f0.push(r.f32()?);
            voiced.push(match r.u8()? {
                0 => false,
                1 => true,
                other => {
                    return Err(Error::InvalidInput(format!("voicing byte {other}")));
                }
            });
        }
        r.finish()?;
        Self::new(f0, voiced, frame_rate)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }
}

const F0TK_MAGIC: &[u8; 4] = b"F0TK";
const F0TK_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy)]
struct Candidate {
    freq: f64,
    cost: f64,
}

/// Tracks F0 at `cfg.hop_ms` intervals over full `cfg.window_ms` windows.
pub fn extract_f0(clip: &AudioClip, cfg: &PitchConfig) -> Result<F0Track> {
    let sr = clip.sample_rate();
    cfg.validate(sr)?;
    if (sr as f64) < 2.0 * cfg.fmax {
        return Err(Error::Config(format!(
            "sample rate {sr} below twice fmax {}",
            cfg.fmax
        )));
    }
    let window = cfg.window_samples(sr);
    let hop = cfg.hop_samples(sr);
    let x: Vec<f64> = clip.samples().iter().map(|&s| s as f64).collect();
    let num_frames = frame_count(x.len(), window, hop);
    if num_frames == 0 {
        return Err(Error::TooShort {
            needed: window,
            got: x.len(),
        });
    }

    // prefix[i] = sum of x[..i]^2
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for &s in &x {
        prefix.push(prefix.last().unwrap() + s * s);
    }
    let energy = |start: usize, len: usize| prefix[start + len] - prefix[start];

    let rms: Vec<f64> = (0..num_frames)
        .map(|i| (energy(i * hop, window) / window as f64).max(0.0).sqrt())
        .collect();
    let peak = rms.iter().cloned().fold(0.0, f64::max);
    let gate = peak * 10f64.powf(-cfg.energy_gate_db / 20.0);

    let min_lag = ((sr as f64 / cfg.fmax).floor() as usize).max(1);
    let max_lag = (sr as f64 / cfg.fmin).ceil() as usize;

    let mut candidates: Vec<Vec<Candidate>> = Vec::with_capacity(num_frames);
    let mut voiced = Vec::with_capacity(num_frames);
    let mut nccf = vec![0.0; max_lag + 2];
    for (frame, &frame_rms) in rms.iter().enumerate() {
        let start = frame * hop;
        if peak <= 0.0 || frame_rms < gate || frame_rms <= 0.0 {
            candidates.push(Vec::new());
            voiced.push(false);
            continue;
        }
        let lo = min_lag.saturating_sub(1).max(1);
        for lag in lo..=max_lag + 1 {
            nccf[lag] = correlation(&x, &energy, start, window, lag);
        }
        let mut found = Vec::new();
        for lag in min_lag.max(lo + 1)..=max_lag {
            let (a, b, c) = (nccf[lag - 1], nccf[lag], nccf[lag + 1]);
            if !(b > 0.0 && b >= a && b > c) {
                continue;
            }
            let denom = a - 2.0 * b + c;
            let delta = if denom < 0.0 {
                (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            };
            let peak_value = (b - 0.25 * (a - c) * delta).min(1.0);
            let true_lag = lag as f64 + delta;
            let freq = (sr as f64 / true_lag).clamp(cfg.fmin, cfg.fmax);
            found.push((
                peak_value,
                Candidate {
                    freq,
                    cost: 1.0 - peak_value + cfg.lag_weight * true_lag / max_lag as f64,
                },
            ));
        }
        found.sort_by(|a, b| b.0.total_cmp(&a.0));
        found.truncate(MAX_CANDIDATES);
        let best = found.first().map_or(0.0, |f| f.0);
        let is_voiced = best > cfg.voicing_threshold;
        voiced.push(is_voiced);
        candidates.push(if is_voiced {
            found.into_iter().map(|(_, c)| c).collect()
        } else {
            Vec::new()
        });
    }

    let mut f0 = vec![0.0f32; num_frames];
    let mut t = 0;
    while t < num_frames {
        if !voiced[t] {
            t += 1;
            continue;
        }
        let run_end = (t..num_frames).find(|&i| !voiced[i]).unwrap_or(num_frames);
        for (i, freq) in smooth_path(&candidates[t..run_end], cfg.octave_cost)
            .into_iter()
            .enumerate()
        {
            f0[t + i] = freq as f32;
        }
        t = run_end;
    }

    F0Track::new(f0, voiced, cfg.frame_rate() as f32)
}

fn correlation(
    x: &[f64],
    energy: &impl Fn(usize, usize) -> f64,
    start: usize,
    window: usize,
    lag: usize,
) -> f64 {
    if start + lag >= x.len() {
        return 0.0;
    }
    let len = window.min(x.len() - start - lag);
    let a = &x[start..start + len];
    let b = &x[start + lag..start + lag + len];
    let num: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
    let denom = (energy(start, len) * energy(start + lag, len)).sqrt();
    if denom > 0.0 {
        num / denom
    } else {
        0.0
    }
}

/// Viterbi over one voiced run. Ties resolve toward the lower frequency.
fn smooth_path(frames: &[Vec<Candidate>], octave_cost: f64) -> Vec<f64> {
    let better = |a: (f64, f64), b: (f64, f64)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);

    let mut total: Vec<f64> = frames[0].iter().map(|c| c.cost).collect();
    let mut back: Vec<Vec<usize>> = vec![vec![0; frames[0].len()]];
    for t in 1..frames.len() {
        let prev = &frames[t - 1];
        let mut next_total = Vec::with_capacity(frames[t].len());
        let mut next_back = Vec::with_capacity(frames[t].len());
        for cand in &frames[t] {
            let mut best = (f64::INFINITY, f64::INFINITY);
            let mut best_idx = 0;
            for (i, p) in prev.iter().enumerate() {
                let cost = total[i] + octave_cost * (cand.freq / p.freq).log2().abs();
                if better((cost, p.freq), best) {
                    best = (cost, p.freq);
                    best_idx = i;
                }
            }
            next_total.push(best.0 + cand.cost);
            next_back.push(best_idx);
        }
        total = next_total;
        back.push(next_back);
    }

    let last = frames.len() - 1;
    let mut idx = 0;
    for j in 1..frames[last].len() {
        if better(
            (total[j], frames[last][j].freq),
            (total[idx], frames[last][idx].freq),
        ) {
            idx = j;
        }
    }
    let mut path = vec![0.0; frames.len()];
    for t in (0..frames.len()).rev() {
        path[t] = frames[t][idx].freq;
        idx = back[t][idx];
    }
    path
}

/// Mean F0 over all voiced frames of all tracks.
pub fn speaker_mean_f0(tracks: &[F0Track]) -> Result<f64> {
    let (sum, count) = tracks
        .iter()
        .flat_map(|t| t.f0.iter().zip(&t.voiced))
        .filter(|(_, &v)| v)
        .fold((0.0f64, 0usize), |(s, n), (&f, _)| (s + f as f64, n + 1));
    if count == 0 {
        return Err(Error::NoVoicedFrames);
    }
    Ok(sum / count as f64)
}

/// Sets every voiced frame to `mean`; voicing is untouched.
pub fn flatten_f0(track: &F0Track, mean: f64) -> Result<F0Track> {
    if !(mean.is_finite() && mean > 0.0) {
        return Err(Error::InvalidInput(format!(
            "flattening target {mean} Hz must be positive"
        )));
    }
    let f0 = track
        .voiced
        .iter()
        .map(|&v| if v { mean as f32 } else { 0.0 })
        .collect();
    F0Track::new(f0, track.voiced.clone(), track.frame_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, secs: f64, amp: impl Fn(f64) -> f64) -> AudioClip {
        let sr = 16000.0;
        let n = (secs * sr) as usize;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / sr;
                (amp(t) * (2.0 * PI * freq * t).sin()) as f32
            })
            .collect();
        AudioClip::new(samples, 16000).unwrap()
    }

    fn median(mut v: Vec<f32>) -> f32 {
        v.sort_by(|a, b| a.total_cmp(b));
        v[v.len() / 2]
    }

    #[test]
    fn sine_220_is_tracked() {
        let track = extract_f0(&sine(220.0, 2.0, |_| 0.5), &PitchConfig::default()).unwrap();
        assert_eq!(track.frame_rate(), 200.0);
        assert_eq!(track.len(), (32000 - 320) / 80 + 1);
        assert!(track.voiced_count() as f64 >= 0.9 * track.len() as f64);
        let voiced: Vec<f32> = track.f0().iter().cloned().filter(|&f| f > 0.0).collect();
        let med = median(voiced);
        assert!((med - 220.0).abs() / 220.0 < 0.05, "median {med}");
    }

    #[test]
    fn silence_is_unvoiced() {
        let clip = AudioClip::new(vec![0.0; 16000], 16000).unwrap();
        let track = extract_f0(&clip, &PitchConfig::default()).unwrap();
        assert_eq!(track.voiced_count(), 0);
        assert!(track.f0().iter().all(|&f| f == 0.0));
    }

    #[test]
    fn fading_tone_loses_voicing() {
        let clip = sine(220.0, 2.0, |t| if t < 1.0 { 0.5 } else { 0.5 * (2.0 - t) * (2.0 - t) * (2.0 - t) });
        let track = extract_f0(&clip, &PitchConfig::default()).unwrap();
        let half = track.len() / 2;
        let first = track.voiced()[..half].iter().filter(|&&v| v).count() as f64 / half as f64;
        let second = track.voiced()[half..].iter().filter(|&&v| v).count() as f64
            / (track.len() - half) as f64;
        assert!(first > second, "{first} vs {second}");
    }

    #[test]
    fn too_short_and_bad_range() {
        let clip = AudioClip::new(vec![0.0; 100], 16000).unwrap();
        assert!(matches!(
            extract_f0(&clip, &PitchConfig::default()),
            Err(Error::TooShort { .. })
        ));
        let clip = AudioClip::new(vec![0.0; 1000], 16000).unwrap();
        let cfg = PitchConfig {
            fmin: 500.0,
            fmax: 400.0,
            ..PitchConfig::default()
        };
        assert!(matches!(extract_f0(&clip, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn mean_f0_examples() {
        let t = F0Track::from_hz(vec![100.0, 110.0, 90.0, 0.0], 200.0).unwrap();
        assert_eq!(speaker_mean_f0(&[t]).unwrap(), 100.0);
        let a = F0Track::from_hz(vec![100.0], 200.0).unwrap();
        let b = F0Track::from_hz(vec![200.0], 200.0).unwrap();
        assert_eq!(speaker_mean_f0(&[a, b]).unwrap(), 150.0);
        let u = F0Track::from_hz(vec![0.0, 0.0], 200.0).unwrap();
        assert!(matches!(speaker_mean_f0(&[u]), Err(Error::NoVoicedFrames)));
    }

    #[test]
    fn flatten_examples() {
        let t = F0Track::from_hz(vec![100.0, 110.0, 90.0, 0.0], 200.0).unwrap();
        let flat = flatten_f0(&t, 100.0).unwrap();
        assert_eq!(flat.f0(), &[100.0, 100.0, 100.0, 0.0]);
        assert_eq!(flat.voiced(), t.voiced());
        assert_eq!(flatten_f0(&flat, 100.0).unwrap(), flat);
        assert!(flatten_f0(&t, 0.0).is_err());
        assert!(flatten_f0(&t, -5.0).is_err());
    }

    #[test]
    fn track_rejects_inconsistent_frames() {
        assert!(F0Track::new(vec![100.0], vec![false], 200.0).is_err());
        assert!(F0Track::new(vec![0.0], vec![true], 200.0).is_err());
        assert!(F0Track::new(vec![0.0], vec![false, true], 200.0).is_err());
    }

    #[test]
    fn track_file_round_trip_and_truncation() {
        let t = F0Track::from_hz(vec![120.5, 0.0, 99.0], 200.0).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..4], b"F0TK");
        assert_eq!(bytes.len(), 4 + 1 + 4 + 4 + 3 * 5);
        assert_eq!(F0Track::from_bytes(&bytes).unwrap(), t);
        assert!(F0Track::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn flatten_keeps_voicing_and_is_idempotent(
            frames in proptest::collection::vec(prop_oneof![Just(0.0f32), 60.0f32..400.0], 1..64),
            mean in 60.0f64..400.0,
        ) {
            let t = F0Track::from_hz(frames, 200.0).unwrap();
            let flat = flatten_f0(&t, mean).unwrap();
            prop_assert_eq!(flat.voiced(), t.voiced());
            prop_assert_eq!(flatten_f0(&flat, mean).unwrap(), flat);
        }
    }
}

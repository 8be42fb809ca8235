//! Pitch codes. Each code summarizes `F0_DOWNSAMPLE` consecutive F0 frames
//! as the interleaved vector `[ln f0_0, v_0, ln f0_1, v_1, ...]`, where
//! unvoiced frames contribute `(0, 0)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::codebook::{Codebook, DEFAULT_DECAY, DEFAULT_RESTART_THRESHOLD};
use crate::pitch::F0Track;
use crate::{Error, Result};

pub const F0_DOWNSAMPLE: usize = 16;
pub const F0_WINDOW_DIM: usize = 2 * F0_DOWNSAMPLE;

/// Pitch codes at `source frame rate / downsample`.
#[derive(Debug, Clone, PartialEq)]
pub struct F0CodeSequence {
    codes: Vec<u32>,
    vocab: u32,
    frame_rate: f64,
    downsample: usize,
    source_frames: usize,
}

impl F0CodeSequence {
    /// `source_frames` is the F0 frame count before window padding; decoding
    /// truncates to it.
    pub fn new(codes: Vec<u32>, vocab: u32, frame_rate: f64, source_frames: usize) -> Result<Self> {
        if vocab == 0 {
            return Err(Error::Config("vocabulary must be non-empty".into()));
        }
        if let Some(&code) = codes.iter().find(|&&c| c >= vocab) {
            return Err(Error::CodeOutOfRange { code, vocab });
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::Config(format!("frame rate {frame_rate} must be positive")));
        }
        if source_frames > codes.len() * F0_DOWNSAMPLE {
            return Err(Error::InvalidInput(format!(
                "{source_frames} source frames exceed {} codes",
                codes.len()
            )));
        }
        Ok(Self {
            codes,
            vocab,
            frame_rate,
            downsample: F0_DOWNSAMPLE,
            source_frames,
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

    pub fn downsample(&self) -> usize {
        self.downsample
    }

    pub fn source_frames(&self) -> usize {
        self.source_frames
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Window feature rows for `track`, `ceil(len / 16)` rows of 32 values; the
/// final partial window is zero padded.
pub fn f0_window_features(track: &F0Track) -> Vec<f32> {
    let windows = track.len().div_ceil(F0_DOWNSAMPLE);
    let mut out = vec![0f32; windows * F0_WINDOW_DIM];
    for (i, (&f, &v)) in track.f0().iter().zip(track.voiced()).enumerate() {
        if v {
            out[2 * i] = f.ln();
            out[2 * i + 1] = 1.0;
        }
    }
    out
}

pub fn f0_encode(track: &F0Track, codebook: &Codebook) -> Result<F0CodeSequence> {
    if track.is_empty() {
        return Err(Error::InvalidInput("empty F0 track".into()));
    }
    if codebook.dim() != F0_WINDOW_DIM {
        return Err(Error::DimMismatch {
            expected: F0_WINDOW_DIM,
            found: codebook.dim(),
        });
    }
    let codes = f0_window_features(track)
        .chunks_exact(F0_WINDOW_DIM)
        .map(|w| codebook.nearest(w).0 as u32)
        .collect();
    F0CodeSequence::new(
        codes,
        codebook.len() as u32,
        track.frame_rate() as f64 / F0_DOWNSAMPLE as f64,
        track.len(),
    )
}

/// Inverts the window featurization. A frame is voiced when its flag entry
/// exceeds 0.5; its pitch is `exp(log_f0 / flag)`, which reduces to
/// `exp(log_f0)` for hard flags and undoes the flag-weighting that EMA
/// averaging applies to the log-pitch entry.
pub fn f0_decode(codes: &F0CodeSequence, codebook: &Codebook) -> Result<F0Track> {
    if codebook.dim() != F0_WINDOW_DIM {
        return Err(Error::DimMismatch {
            expected: F0_WINDOW_DIM,
            found: codebook.dim(),
        });
    }
    let k = codebook.len() as u32;
    let mut f0 = Vec::with_capacity(codes.len() * F0_DOWNSAMPLE);
    let mut voiced = Vec::with_capacity(f0.capacity());
    for &code in codes.codes() {
        if code >= k {
            return Err(Error::CodeOutOfRange { code, vocab: k });
        }
        for pair in codebook.vector(code as usize).chunks_exact(2) {
            let (log_f0, flag) = (pair[0], pair[1]);
            let v = flag > 0.5;
            voiced.push(v);
            f0.push(if v { (log_f0 / flag).exp() } else { 0.0 });
        }
    }
    let len = if codes.source_frames() > 0 {
        codes.source_frames()
    } else {
        f0.len()
    };
    f0.truncate(len);
    voiced.truncate(len);
    F0Track::new(
        f0,
        voiced,
        (codes.frame_rate() * F0_DOWNSAMPLE as f64) as f32,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct F0VqOptions {
    pub k: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub decay: f32,
    pub restart_threshold: f32,
    pub seed: u64,
}

impl Default for F0VqOptions {
    fn default() -> Self {
        Self {
            k: 20,
            epochs: 50,
            batch_size: 256,
            decay: DEFAULT_DECAY,
            restart_threshold: DEFAULT_RESTART_THRESHOLD,
            seed: 0,
        }
    }
}

/// Learns an F0 window codebook with EMA updates over shuffled minibatches.
/// Codes start on randomly chosen windows.
pub fn train_f0_codebook(tracks: &[F0Track], opts: &F0VqOptions) -> Result<Codebook> {
    if opts.k == 0 || opts.batch_size == 0 {
        return Err(Error::Config("k and batch size must be positive".into()));
    }
    let windows: Vec<f32> = tracks.iter().flat_map(f0_window_features).collect();
    let n = windows.len() / F0_WINDOW_DIM;
    if n == 0 {
        return Err(Error::InvalidInput("no F0 frames to train on".into()));
    }
    let row = |i: usize| &windows[i * F0_WINDOW_DIM..(i + 1) * F0_WINDOW_DIM];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let init: Vec<f32> = (0..opts.k)
        .flat_map(|i| {
            let idx = if i < n { order[i] } else { rng.random_range(0..n) };
            row(idx).to_vec()
        })
        .collect();
    let mut codebook = Codebook::from_vectors(init, F0_WINDOW_DIM)?.with_ema(
        opts.decay,
        opts.restart_threshold,
        opts.seed,
    )?;

    let mut batch = Vec::with_capacity(opts.batch_size * F0_WINDOW_DIM);
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(opts.batch_size) {
            batch.clear();
            for &i in chunk {
                batch.extend_from_slice(row(i));
            }
            codebook.ema_update(&batch)?;
        }
    }
    Ok(codebook)
}

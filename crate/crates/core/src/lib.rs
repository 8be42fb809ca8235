//! Discrete speech resynthesis codec.
//!
//! Speech is decomposed into three low-rate streams: content units obtained by
//! k-means over frame features, pitch codes from a vector-quantized F0 track,
//! and a speaker identity. The streams are packed into a fixed-width bitstream
//! and resynthesized by a conditioned HiFi-GAN style generator.
//!
//! Module map:
//! - [`signal`]: WAV I/O, framing and the log-mel operator.
//! - [`pitch`]: F0 tracking with voicing decisions, speaker statistics, flattening.
//! - [`features`]: feature-file interchange and a baseline spectral featurizer.
//! - [`quantize`]: k-means, the EMA codebook with restarts, F0 encode/decode.
//! - [`vocoder`]: generator and discriminator forward passes, weight files.
//! - [`losses`]: adversarial, reconstruction and feature-matching objectives.
//! - [`codec`]: bitstream layout, bitrate accounting, packetization.
//! - [`metrics`]: VDE, FFE, EER and token error rate.

pub mod codec;
mod error;
pub mod features;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod pitch;
pub mod quantize;
pub mod signal;
pub mod vocoder;

pub use codec::{Bitrate, Bitstream, CodecConfig, StreamHeader};
pub use error::{Error, Result};
pub use features::FeatureSequence;
pub use losses::{LossReport, LossWeights};
pub use metrics::ScoredTrial;
pub use pitch::{F0Track, PitchConfig};
pub use quantize::{Codebook, F0CodeSequence, UnitSequence};
pub use signal::{AudioClip, MelConfig, MelSpectrogram};
pub use vocoder::{Generator, GeneratorConfig, SpeakerTable, Tensor, TensorMap};

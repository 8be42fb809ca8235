//! Unit-conditioned HiFi-GAN style generator and its discriminators.
//!
//! The generator embeds content and pitch codes through look-up tables,
//! repeats pitch embeddings up to the content frame rate, appends the speaker
//! embedding to every frame, then upsamples with transposed convolutions
//! interleaved with dilated residual blocks.

mod discriminator;
mod generator;
mod nn;
mod tensor;

pub use discriminator::{
    mean_pool, mpd_padded_len, ActivationStack, DiscriminatorConfig, Discriminators, PERIODS,
    SCALES,
};
pub use generator::{load_generator, Generator, GeneratorConfig, SpeakerTable, SPEAKER_DIM};
pub use nn::ConvSpec;
pub use tensor::{Tensor, TensorMap};

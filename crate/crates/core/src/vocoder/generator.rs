use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::nn::{init_conv, random_tensor, Conv1d, ConvSpec, ConvTranspose1d, Signal};
use super::tensor::{Tensor, TensorMap};
use crate::quantize::{F0CodeSequence, UnitSequence};
use crate::signal::AudioClip;
use crate::{Error, Result};

pub const SPEAKER_DIM: usize = 256;

const PRE_KERNEL: usize = 7;
const POST_KERNEL: usize = 7;

/// Shape of the unit-conditioned generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub content_vocab: usize,
    pub f0_vocab: usize,
    pub content_embed_dim: usize,
    pub f0_embed_dim: usize,
    pub speaker_dim: usize,
    pub hidden_channels: usize,
    /// Per-stage upsampling factors; their product is the content hop.
    pub upsample_rates: Vec<usize>,
    pub upsample_kernels: Vec<usize>,
    pub resblock_kernels: Vec<usize>,
    pub resblock_dilations: Vec<Vec<usize>>,
    pub leaky_slope: f32,
}

impl GeneratorConfig {
    /// Default shape for a content hop of 160 or 320 samples.
    pub fn for_hop(content_vocab: usize, f0_vocab: usize, hop: usize) -> Result<Self> {
        let rates = match hop {
            320 => vec![5, 4, 4, 2, 2],
            160 => vec![5, 4, 2, 2, 2],
            other => {
                return Err(Error::Config(format!(
                    "no default upsampling factorization for hop {other}"
                )))
            }
        };
        Ok(Self::with_rates(content_vocab, f0_vocab, rates))
    }

    pub fn with_rates(content_vocab: usize, f0_vocab: usize, upsample_rates: Vec<usize>) -> Self {
        let upsample_kernels = upsample_rates.iter().map(|r| 2 * r).collect();
        Self {
            content_vocab,
            f0_vocab,
            content_embed_dim: 128,
            f0_embed_dim: 128,
            speaker_dim: SPEAKER_DIM,
            hidden_channels: 128,
            upsample_rates,
            upsample_kernels,
            resblock_kernels: vec![3, 7, 11],
            resblock_dilations: vec![vec![1, 3, 5]; 3],
            leaky_slope: 0.1,
        }
    }

    /// Samples produced per content frame.
    pub fn hop(&self) -> usize {
        self.upsample_rates.iter().product()
    }

    pub fn input_channels(&self) -> usize {
        self.content_embed_dim + self.f0_embed_dim + self.speaker_dim
    }

    fn stage_channels(&self, stage: usize) -> usize {
        self.hidden_channels >> (stage + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.content_vocab == 0 || self.f0_vocab == 0 {
            return fail("vocabularies must be non-empty".into());
        }
        if self.content_embed_dim == 0 || self.f0_embed_dim == 0 {
            return fail("embedding sizes must be positive".into());
        }
        if self.speaker_dim != SPEAKER_DIM {
            return fail(format!("speaker embeddings must be {SPEAKER_DIM}-dim"));
        }
        if self.upsample_rates.is_empty() || self.upsample_rates.contains(&0) {
            return fail("upsample rates must be positive".into());
        }
        if self.upsample_kernels.len() != self.upsample_rates.len()
            || self
                .upsample_kernels
                .iter()
                .zip(&self.upsample_rates)
                .any(|(k, r)| k < r)
        {
            return fail("need one upsample kernel >= rate per stage".into());
        }
        if self.stage_channels(self.upsample_rates.len() - 1) == 0 {
            return fail(format!(
                "{} hidden channels cannot be halved {} times",
                self.hidden_channels,
                self.upsample_rates.len()
            ));
        }
        if self.resblock_kernels.is_empty()
            || self.resblock_kernels.len() != self.resblock_dilations.len()
            || self.resblock_kernels.iter().any(|k| k % 2 == 0)
        {
            return fail("resblock kernels must be odd, one dilation set per kernel".into());
        }
        Ok(())
    }

    /// Every tensor the generator needs, with its shape.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = vec![
            ("lut_content.weight".into(), vec![self.content_vocab, self.content_embed_dim]),
            ("lut_f0.weight".into(), vec![self.f0_vocab, self.f0_embed_dim]),
        ];
        let conv = |out: &mut Vec<(String, Vec<usize>)>, prefix: String, spec: ConvSpec| {
            out.push((format!("{prefix}.weight"), spec.weight_shape()));
            out.push((format!("{prefix}.bias"), vec![spec.out_ch]));
        };
        conv(&mut out, "conv_pre".into(), self.pre_spec());
        for (i, &k) in self.upsample_kernels.iter().enumerate() {
            let (cin, cout) = (self.hidden_channels >> i, self.stage_channels(i));
            out.push((format!("ups.{i}.weight"), ConvTranspose1d::weight_shape(cin, cout, k)));
            out.push((format!("ups.{i}.bias"), vec![cout]));
            for (j, (c1, c2)) in self.resblock_specs(i).into_iter().enumerate() {
                let rb = i * self.resblock_kernels.len() + j;
                for (m, (a, b)) in c1.into_iter().zip(c2).enumerate() {
                    conv(&mut out, format!("resblocks.{rb}.convs1.{m}"), a);
                    conv(&mut out, format!("resblocks.{rb}.convs2.{m}"), b);
                }
            }
        }
        conv(&mut out, "conv_post".into(), self.post_spec());
        out
    }

    fn pre_spec(&self) -> ConvSpec {
        ConvSpec::same(self.input_channels(), self.hidden_channels, PRE_KERNEL, 1)
    }

    fn post_spec(&self) -> ConvSpec {
        let last = self.stage_channels(self.upsample_rates.len() - 1);
        ConvSpec::same(last, 1, POST_KERNEL, 1)
    }

    /// Dilated and undilated conv specs of each residual block in a stage.
    fn resblock_specs(&self, stage: usize) -> Vec<(Vec<ConvSpec>, Vec<ConvSpec>)> {
        let ch = self.stage_channels(stage);
        self.resblock_kernels
            .iter()
            .zip(&self.resblock_dilations)
            .map(|(&k, dilations)| {
                let c1 = dilations.iter().map(|&d| ConvSpec::same(ch, ch, k, d)).collect();
                let c2 = dilations.iter().map(|_| ConvSpec::same(ch, ch, k, 1)).collect();
                (c1, c2)
            })
            .collect()
    }
}

struct ResBlock {
    layers: Vec<(Conv1d, Conv1d)>,
}

impl ResBlock {
    fn forward(&self, mut x: Signal, slope: f32) -> Signal {
        for (dilated, plain) in &self.layers {
            let h = dilated.forward(&x.clone().leaky_relu(slope)).leaky_relu(slope);
            let h = plain.forward(&h);
            x.add_assign(&h);
        }
        x
    }
}

struct Stage {
    up: ConvTranspose1d,
    blocks: Vec<ResBlock>,
}

/// Immutable, ready-to-run generator.
pub struct Generator {
    config: GeneratorConfig,
    weights: TensorMap,
    lut_content: Vec<f32>,
    lut_f0: Vec<f32>,
    pre: Conv1d,
    stages: Vec<Stage>,
    post: Conv1d,
}

impl std::fmt::Debug for Generator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Generator").field("config", &self.config).finish()
    }
}

impl Generator {
    /// Validates every required tensor's presence, shape and finiteness.
    pub fn from_weights(config: GeneratorConfig, weights: TensorMap) -> Result<Self> {
        config.validate()?;
        for (name, shape) in config.tensor_shapes() {
            weights.expect(&name, &shape)?;
        }
        let lut_content = weights.get("lut_content.weight").unwrap().data().to_vec();
        let lut_f0 = weights.get("lut_f0.weight").unwrap().data().to_vec();
        let pre = Conv1d::from_map(&weights, "conv_pre", config.pre_spec())?;
        let mut stages = Vec::new();
        for (i, (&rate, &kernel)) in config
            .upsample_rates
            .iter()
            .zip(&config.upsample_kernels)
            .enumerate()
        {
            let up = ConvTranspose1d::from_map(
                &weights,
                &format!("ups.{i}"),
                config.hidden_channels >> i,
                config.stage_channels(i),
                kernel,
                rate,
            )?;
            let mut blocks = Vec::new();
            for (j, (c1, c2)) in config.resblock_specs(i).into_iter().enumerate() {
                let rb = i * config.resblock_kernels.len() + j;
                let layers = c1
                    .into_iter()
                    .zip(c2)
                    .enumerate()
                    .map(|(m, (a, b))| {
                        Ok((
                            Conv1d::from_map(&weights, &format!("resblocks.{rb}.convs1.{m}"), a)?,
                            Conv1d::from_map(&weights, &format!("resblocks.{rb}.convs2.{m}"), b)?,
                        ))
                    })
                    .collect::<Result<_>>()?;
                blocks.push(ResBlock { layers });
            }
            stages.push(Stage { up, blocks });
        }
        let post = Conv1d::from_map(&weights, "conv_post", config.post_spec())?;
        Ok(Self {
            config,
            weights,
            lut_content,
            lut_f0,
            pre,
            stages,
            post,
        })
    }

    /// Gaussian-initialized weights, deterministic in `seed`.
    pub fn random(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = TensorMap::new();
        for (name, shape) in config.tensor_shapes() {
            if name.starts_with("lut_") {
                map.insert(name, random_tensor(shape, 1.0, &mut rng));
            } else if let Some(prefix) = name.strip_suffix(".weight") {
                // conv weights are [out, in, k]; transposed ones [in, out, k]
                let fan_in = if prefix.starts_with("ups.") {
                    shape[0] * shape[2]
                } else {
                    shape[1] * shape[2]
                };
                let out_ch = if prefix.starts_with("ups.") { shape[1] } else { shape[0] };
                init_conv(&mut map, prefix, shape, out_ch, fan_in, &mut rng);
            }
        }
        Self::from_weights(config, map)
    }

    pub fn zeros(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let mut map = TensorMap::new();
        for (name, shape) in config.tensor_shapes() {
            map.insert(name, Tensor::zeros(shape));
        }
        Self::from_weights(config, map)
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn weights(&self) -> &TensorMap {
        &self.weights
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.weights.save(path)
    }

    /// Synthesizes `units.len() * hop` samples at `units.frame_rate() * hop` Hz.
    pub fn generate(&self, units: &UnitSequence, f0: &F0CodeSequence, speaker: &[f32]) -> Result<AudioClip> {
        let cfg = &self.config;
        let len = units.len();
        if len == 0 {
            return Err(Error::InvalidInput("no content frames".into()));
        }
        let ratio = units.frame_rate() / f0.frame_rate();
        let repeat = ratio.round();
        if repeat < 1.0 || (ratio - repeat).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "content rate {} is not an integer multiple of F0 rate {}",
                units.frame_rate(),
                f0.frame_rate()
            )));
        }
        let repeat = repeat as usize;
        if f0.len() != len.div_ceil(repeat) {
            return Err(Error::LengthMismatch {
                left: f0.len(),
                right: len.div_ceil(repeat),
            });
        }
        for &code in units.codes() {
            if code as usize >= cfg.content_vocab {
                return Err(Error::CodeOutOfRange {
                    code,
                    vocab: cfg.content_vocab as u32,
                });
            }
        }
        for &code in f0.codes() {
            if code as usize >= cfg.f0_vocab {
                return Err(Error::CodeOutOfRange {
                    code,
                    vocab: cfg.f0_vocab as u32,
                });
            }
        }
        if speaker.len() != cfg.speaker_dim {
            return Err(Error::DimMismatch {
                expected: cfg.speaker_dim,
                found: speaker.len(),
            });
        }
        crate::io::ensure_finite(speaker, "speaker embedding")?;

        // [content ‖ f0 ‖ speaker] per frame, channel-major
        let (dc, df) = (cfg.content_embed_dim, cfg.f0_embed_dim);
        let channels = cfg.input_channels();
        let mut input = Signal::zeros(channels, len);
        for (t, &code) in units.codes().iter().enumerate() {
            let c_row = &self.lut_content[code as usize * dc..][..dc];
            let f_code = f0.codes()[t / repeat] as usize;
            let f_row = &self.lut_f0[f_code * df..][..df];
            let column = c_row.iter().chain(f_row).chain(speaker);
            for (ch, &v) in column.enumerate() {
                input.data[ch * len + t] = v;
            }
        }

        let slope = cfg.leaky_slope;
        let mut x = self.pre.forward(&input);
        for stage in &self.stages {
            x = stage.up.forward(&x.leaky_relu(slope));
            let mut acc = Signal::zeros(x.channels, x.len);
            for block in &stage.blocks {
                acc.add_assign(&block.forward(x.clone(), slope));
            }
            let n = stage.blocks.len() as f32;
            for v in &mut acc.data {
                *v /= n;
            }
            x = acc;
        }
        let y = self.post.forward(&x.leaky_relu(slope));
        let samples = y.data.into_iter().map(f32::tanh).collect();
        let sample_rate = (units.frame_rate() * cfg.hop() as f64).round() as u32;
        AudioClip::new(samples, sample_rate)
    }
}

/// Loads generator weights and checks them against `config`.
pub fn load_generator(path: impl AsRef<Path>, config: GeneratorConfig) -> Result<Generator> {
    Generator::from_weights(config, TensorMap::load(path)?)
}

/// Speaker id to 256-dim embedding.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpeakerTable {
    speakers: BTreeMap<u16, Vec<f32>>,
}

impl SpeakerTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: u16, embedding: Vec<f32>) -> Result<()> {
        if embedding.len() != SPEAKER_DIM {
            return Err(Error::DimMismatch {
                expected: SPEAKER_DIM,
                found: embedding.len(),
            });
        }
        crate::io::ensure_finite(&embedding, "speaker embedding")?;
        self.speakers.insert(id, embedding);
        Ok(())
    }

    pub fn get(&self, id: u16) -> Result<&[f32]> {
        self.speakers
            .get(&id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::InvalidInput(format!("unknown speaker id {id}")))
    }

    pub fn ids(&self) -> impl Iterator<Item = u16> + '_ {
        self.speakers.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.speakers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speakers.is_empty()
    }

    /// `count` unit-norm Gaussian embeddings with ids `0..count`.
    pub fn random(count: u16, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = Self::new();
        for id in 0..count {
            let mut v = random_tensor(vec![SPEAKER_DIM], 1.0, &mut rng).into_data();
            let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-12);
            v.iter_mut().for_each(|x| *x /= norm);
            table.speakers.insert(id, v);
        }
        table
    }

    pub fn to_tensors(&self) -> TensorMap {
        let mut map = TensorMap::new();
        for (id, v) in &self.speakers {
            map.insert(
                format!("speaker.{id}"),
                Tensor::new(vec![SPEAKER_DIM], v.clone()).expect("256 values"),
            );
        }
        map
    }

    pub fn from_tensors(map: &TensorMap) -> Result<Self> {
        let mut table = Self::new();
        for (name, t) in map.iter() {
            let id: u16 = name
                .strip_prefix("speaker.")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("unexpected tensor `{name}` in speaker table")))?;
            map.expect(name, &[SPEAKER_DIM])?;
            table.insert(id, t.data().to_vec())?;
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_tensors().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensors(&TensorMap::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(rates: Vec<usize>) -> GeneratorConfig {
        GeneratorConfig {
            content_embed_dim: 8,
            f0_embed_dim: 8,
            hidden_channels: 32,
            ..GeneratorConfig::with_rates(10, 5, rates)
        }
    }

    fn inputs(len: usize, repeat: usize) -> (UnitSequence, F0CodeSequence) {
        let units = UnitSequence::new((0..len as u32).map(|i| i % 10).collect(), 10, 50.0).unwrap();
        let f0 = F0CodeSequence::new(
            (0..len.div_ceil(repeat) as u32).map(|i| i % 5).collect(),
            5,
            50.0 / repeat as f64,
            0,
        )
        .unwrap();
        (units, f0)
    }

    #[test]
    fn default_factorizations() {
        assert_eq!(GeneratorConfig::for_hop(50, 20, 320).unwrap().hop(), 320);
        assert_eq!(GeneratorConfig::for_hop(100, 20, 160).unwrap().hop(), 160);
        assert!(GeneratorConfig::for_hop(100, 20, 100).is_err());
    }

    #[test]
    fn length_law_and_range() {
        let gen = Generator::random(small_config(vec![5, 4, 4, 2, 2]), 1).unwrap();
        let (units, f0) = inputs(10, 4);
        let spk = SpeakerTable::random(1, 0);
        let clip = gen.generate(&units, &f0, spk.get(0).unwrap()).unwrap();
        assert_eq!(clip.len(), 3200);
        assert_eq!(clip.sample_rate(), 16000);
        assert!(clip.samples().iter().all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn zero_network_is_silent() {
        let gen = Generator::zeros(small_config(vec![4, 2])).unwrap();
        let (units, f0) = inputs(6, 2);
        let clip = gen.generate(&units, &f0, &[0.3; SPEAKER_DIM]).unwrap();
        assert_eq!(clip.len(), 48);
        assert!(clip.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn bitwise_deterministic() {
        let cfg = small_config(vec![4, 2]);
        let (units, f0) = inputs(7, 4);
        let spk = [0.1f32; SPEAKER_DIM];
        let a = Generator::random(cfg.clone(), 9).unwrap().generate(&units, &f0, &spk).unwrap();
        let b = Generator::random(cfg, 9).unwrap().generate(&units, &f0, &spk).unwrap();
        assert!(a.samples().iter().zip(b.samples()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn input_errors() {
        let gen = Generator::random(small_config(vec![4, 2]), 0).unwrap();
        let spk = [0.0f32; SPEAKER_DIM];
        let (units, _) = inputs(8, 4);
        let odd_rate = F0CodeSequence::new(vec![0; 3], 5, 50.0 / 3.5, 0).unwrap();
        assert!(matches!(gen.generate(&units, &odd_rate, &spk), Err(Error::Config(_))));
        let (_, f0) = inputs(8, 4);
        let too_big = UnitSequence::new(vec![0; 8], 11, 50.0).unwrap();
        let too_big = UnitSequence::new(too_big.codes().iter().map(|_| 10).collect(), 11, 50.0).unwrap();
        assert!(matches!(gen.generate(&too_big, &f0, &spk), Err(Error::CodeOutOfRange { .. })));
        let empty = UnitSequence::new(vec![], 10, 50.0).unwrap();
        let no_f0 = F0CodeSequence::new(vec![], 5, 12.5, 0).unwrap();
        assert!(gen.generate(&empty, &no_f0, &spk).is_err());
        assert!(matches!(gen.generate(&units, &f0, &spk[..10]), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn weight_file_validation() {
        let cfg = small_config(vec![4, 2]);
        let gen = Generator::random(cfg.clone(), 2).unwrap();
        let mut map = gen.weights().clone();
        map.remove("ups.1.bias");
        assert!(matches!(
            Generator::from_weights(cfg.clone(), map),
            Err(Error::MissingTensor(n)) if n == "ups.1.bias"
        ));
        let mut map = gen.weights().clone();
        map.insert("conv_post.bias", Tensor::zeros(vec![2]));
        match Generator::from_weights(cfg.clone(), map) {
            Err(Error::ShapeMismatch { name, expected, found }) => {
                assert_eq!(name, "conv_post.bias");
                assert_eq!(expected, vec![1]);
                assert_eq!(found, vec![2]);
            }
            other => panic!("{other:?}"),
        }
        let mut map = gen.weights().clone();
        map.insert("conv_pre.bias", Tensor::new(vec![32], vec![f32::INFINITY; 32]).unwrap());
        assert!(matches!(Generator::from_weights(cfg, map), Err(Error::NonFinite(_))));
    }

    #[test]
    fn weight_file_round_trip() {
        let cfg = small_config(vec![2, 2]);
        let gen = Generator::random(cfg.clone(), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.wgts");
        gen.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let loaded = load_generator(&path, cfg).unwrap();
        let path2 = dir.path().join("g2.wgts");
        loaded.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path2).unwrap(), bytes);
    }

    #[test]
    fn speaker_table_round_trip() {
        let table = SpeakerTable::random(5, 3);
        let back = SpeakerTable::from_tensors(&table.to_tensors()).unwrap();
        assert_eq!(back, table);
        assert!(table.get(7).is_err());
        let mut t = SpeakerTable::new();
        assert!(t.insert(1, vec![0.0; 10]).is_err());
    }
}

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{debug, info};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dsrcodec::codec::{bitrate, bits_per_code, decode_stream, encode_stream};
use dsrcodec::features::{baseline_features, load_features};
use dsrcodec::losses::total_losses;
use dsrcodec::metrics::{ffe, vde};
use dsrcodec::pitch::{extract_f0, flatten_f0, speaker_mean_f0};
use dsrcodec::quantize::{
    f0_encode, kmeans_fit, quantize, train_f0_codebook, F0VqOptions, KMeansOptions,
    F0_DOWNSAMPLE, F0_WINDOW_DIM,
};
use dsrcodec::signal::{load_audio, write_audio};
use dsrcodec::vocoder::{load_generator, DiscriminatorConfig, Discriminators};
use dsrcodec::{
    AudioClip, Bitstream, Codebook, Error, F0Track, FeatureSequence, Generator, GeneratorConfig,
    LossWeights, SpeakerTable,
};

use crate::config::{pick, Settings};

fn is_ext(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn load_clip(path: &Path, settings: &Settings) -> Result<AudioClip> {
    let clip = load_audio(path)?;
    if clip.sample_rate() != settings.codec.sample_rate {
        return Err(Error::Config(format!(
            "{} is {} Hz but the codec expects {} Hz",
            path.display(),
            clip.sample_rate(),
            settings.codec.sample_rate
        ))
        .into());
    }
    Ok(clip)
}

/// `.ftrs` files load as-is; anything else is read as audio and featurized.
fn content_features(path: &Path, settings: &Settings) -> Result<FeatureSequence> {
    if is_ext(path, "ftrs") {
        let f = load_features(path)?;
        let expected = settings.codec.content_frame_rate();
        if (f.frame_rate() as f64 - expected).abs() > 1e-3 {
            return Err(Error::Config(format!(
                "{} runs at {} Hz but the codec expects {expected} Hz",
                path.display(),
                f.frame_rate()
            ))
            .into());
        }
        return Ok(f);
    }
    let clip = load_clip(path, settings)?;
    Ok(baseline_features(&clip, settings.codec.content_hop as usize)?)
}

/// Pitch frames per content frame; one F0 code must span exactly one pitch window.
fn pitch_frames_per_content(settings: &Settings) -> Result<usize> {
    let c = &settings.codec;
    let pitch_hop = settings.pitch.hop_samples(c.sample_rate);
    let hop = c.content_hop as usize;
    if pitch_hop == 0 || !hop.is_multiple_of(pitch_hop) || (hop / pitch_hop) * c.f0_group as usize != F0_DOWNSAMPLE {
        return Err(Error::Config(format!(
            "content hop {hop} with f0_group {} does not cover {F0_DOWNSAMPLE} pitch frames of {pitch_hop} samples",
            c.f0_group
        ))
        .into());
    }
    Ok(hop / pitch_hop)
}

fn load_codebook(path: &Path, size: u16, dim: Option<usize>, what: &str) -> Result<Codebook> {
    let cb = Codebook::load(path).with_context(|| format!("loading {what} codebook"))?;
    if cb.len() != size as usize {
        return Err(Error::Config(format!(
            "{what} codebook {} has {} codes but the codec vocabulary is {size}",
            path.display(),
            cb.len()
        ))
        .into());
    }
    if let Some(d) = dim {
        if cb.dim() != d {
            return Err(Error::DimMismatch {
                expected: d,
                found: cb.dim(),
            }
            .into());
        }
    }
    Ok(cb)
}

pub struct EncodeArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub features: Option<PathBuf>,
    pub content_codebook: Option<PathBuf>,
    pub f0_codebook: Option<PathBuf>,
    pub speaker: u16,
}

/// `flatten`: `None` keeps the track; `Some(None)` flattens to the
/// utterance mean; `Some(Some(hz))` to a given speaker mean.
pub fn encode(settings: &Settings, args: EncodeArgs, flatten: Option<Option<f64>>) -> Result<Bitstream> {
    let c = settings.codec;
    let per_frame = pitch_frames_per_content(settings)?;
    let content_cb = load_codebook(
        &pick(args.content_codebook, &settings.content_codebook, "content codebook")?,
        c.content_vocab,
        None,
        "content",
    )?;
    let f0_cb = load_codebook(
        &pick(args.f0_codebook, &settings.f0_codebook, "F0 codebook")?,
        c.f0_vocab,
        Some(F0_WINDOW_DIM),
        "F0",
    )?;

    let clip = load_clip(&args.input, settings)?;
    let features = match &args.features {
        Some(p) => content_features(p, settings)?,
        None => baseline_features(&clip, c.content_hop as usize)?,
    };
    if features.dim() != content_cb.dim() {
        return Err(Error::DimMismatch {
            expected: content_cb.dim(),
            found: features.dim(),
        }
        .into());
    }
    let units = quantize(&features, &content_cb)?;

    let mut track = extract_f0(&clip, &settings.pitch)?.resized(units.len() * per_frame);
    if let Some(mean) = flatten {
        let mean = match mean {
            Some(hz) => hz,
            None => speaker_mean_f0(std::slice::from_ref(&track))?,
        };
        info!("flattening F0 to {mean:.2} Hz");
        track = flatten_f0(&track, mean)?;
    }
    let f0_codes = f0_encode(&track, &f0_cb)?;
    let stream = encode_stream(units.codes(), f0_codes.codes(), args.speaker, &c)?;
    stream.save(&args.output)?;
    info!(
        "{} frames, {} payload bytes ({:.1} bps) -> {}",
        units.len(),
        stream.payload().len(),
        stream.measured_bps(),
        args.output.display()
    );
    Ok(stream)
}

struct Vocoder {
    generator: Generator,
    speakers: SpeakerTable,
}

impl Vocoder {
    fn load(settings: &Settings, stream: &Bitstream, generator: Option<PathBuf>, speakers: Option<PathBuf>) -> Result<Self> {
        let c = stream.header().config;
        let cfg = GeneratorConfig::for_hop(c.content_vocab as usize, c.f0_vocab as usize, c.content_hop as usize)?;
        let generator = load_generator(pick(generator, &settings.generator, "generator weights")?, cfg)
            .context("loading generator weights")?;
        let speakers = SpeakerTable::load(pick(speakers, &settings.speakers, "speaker table")?)
            .context("loading speaker table")?;
        Ok(Self { generator, speakers })
    }

    fn synthesize(&self, stream: &Bitstream) -> Result<AudioClip> {
        let d = decode_stream(stream)?;
        let speaker = self.speakers.get(d.speaker_id)?;
        Ok(self.generator.generate(&d.units()?, &d.f0_codes()?, speaker)?)
    }
}

pub fn decode(settings: &Settings, input: &Path, output: &Path, generator: Option<PathBuf>, speakers: Option<PathBuf>) -> Result<()> {
    let stream = Bitstream::load(input)?;
    let vocoder = Vocoder::load(settings, &stream, generator, speakers)?;
    let audio = vocoder.synthesize(&stream)?;
    write_audio(output, &audio)?;
    info!("{} samples -> {}", audio.len(), output.display());
    Ok(())
}

pub struct ConvertArgs {
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub targets: Vec<u16>,
    pub random_targets: Option<usize>,
    pub generator: Option<PathBuf>,
    pub speakers: Option<PathBuf>,
}

/// Rewrites the header speaker and resynthesizes; returns the written paths.
pub fn convert(settings: &Settings, args: ConvertArgs) -> Result<Vec<PathBuf>> {
    let stream = Bitstream::load(&args.input)?;
    let vocoder = Vocoder::load(settings, &stream, args.generator, args.speakers)?;
    let source = stream.header().speaker_id;

    let mut targets = args.targets;
    if let Some(n) = args.random_targets {
        let pool: Vec<u16> = vocoder.speakers.ids().filter(|&id| id != source).collect();
        if pool.len() < n {
            bail!(Error::Config(format!(
                "asked for {n} target speakers but only {} differ from the source",
                pool.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        targets.extend(pool.choose_multiple(&mut rng, n).copied());
    }
    if targets.is_empty() {
        bail!(Error::InvalidInput("no target speakers given".into()));
    }

    let outputs: Vec<PathBuf> = match (&args.output, &args.out_dir) {
        (Some(out), None) if targets.len() == 1 => vec![out.clone()],
        (None, Some(dir)) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            let stem = args
                .input
                .file_stem()
                .map_or_else(|| "stream".into(), |s| s.to_string_lossy().into_owned());
            targets.iter().map(|t| dir.join(format!("{stem}.spk{t}.wav"))).collect()
        }
        _ => bail!(Error::InvalidInput(
            "use --output with exactly one target, or --out-dir".into()
        )),
    };

    for (&target, path) in targets.iter().zip(&outputs) {
        let audio = vocoder.synthesize(&stream.with_speaker(target))?;
        write_audio(path, &audio)?;
        info!("speaker {source} -> {target}: {}", path.display());
    }
    Ok(outputs)
}

pub fn train_kmeans(settings: &Settings, inputs: &[PathBuf], k: Option<usize>, max_iters: usize, output: &Path) -> Result<()> {
    let sequences = inputs
        .iter()
        .map(|p| content_features(p, settings))
        .collect::<Result<Vec<_>>>()?;
    let mut opts = KMeansOptions::new(k.unwrap_or(settings.codec.content_vocab as usize));
    opts.max_iters = max_iters;
    opts.seed = settings.seed;
    let fit = kmeans_fit(&sequences, &opts)?;
    for (i, inertia) in fit.inertia_history.iter().enumerate() {
        debug!("iteration {i}: inertia {inertia:.6}");
    }
    fit.codebook.save(output)?;
    println!(
        "k-means: K={} dim={} iterations={} inertia={:.6} -> {}",
        fit.codebook.len(),
        fit.codebook.dim(),
        fit.iterations,
        fit.inertia_history.last().copied().unwrap_or(0.0),
        output.display()
    );
    Ok(())
}

pub fn train_f0vq(settings: &Settings, inputs: &[PathBuf], mut opts: F0VqOptions, output: &Path) -> Result<()> {
    let tracks = inputs
        .iter()
        .map(|p| -> Result<F0Track> {
            if is_ext(p, "f0tk") {
                Ok(F0Track::load(p)?)
            } else {
                Ok(extract_f0(&load_clip(p, settings)?, &settings.pitch)?)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    opts.seed = settings.seed;
    let cb = train_f0_codebook(&tracks, &opts)?;
    cb.save(output)?;
    println!("F0 codebook: K'={} -> {}", cb.len(), output.display());
    Ok(())
}

pub fn init_weights(settings: &Settings, generator: &Path, speakers: &Path, count: u16) -> Result<()> {
    let c = settings.codec;
    let cfg = GeneratorConfig::for_hop(c.content_vocab as usize, c.f0_vocab as usize, c.content_hop as usize)?;
    Generator::random(cfg, settings.seed)?.save(generator)?;
    SpeakerTable::random(count, settings.seed).save(speakers)?;
    println!(
        "seeded weights (seed {}) -> {}, {count} speakers -> {}",
        settings.seed,
        generator.display(),
        speakers.display()
    );
    Ok(())
}

pub fn analyze(settings: &Settings, stream: Option<&Path>, reference: Option<&Path>, hypothesis: Option<&Path>) -> Result<()> {
    let c = &settings.codec;
    let rate = bitrate(c)?;
    let f0_codes_per_sec = (c.sample_rate as u64).div_ceil(c.content_hop as u64 * c.f0_group as u64);
    println!(
        "content: {} bps (K={}, {} bits x {} Hz)",
        rate.content_bps,
        c.content_vocab,
        bits_per_code(c.content_vocab as u32)?,
        c.content_frame_rate()
    );
    println!(
        "f0: {} bps (K'={}, {} bits x {} codes/s, {} Hz)",
        rate.f0_bps,
        c.f0_vocab,
        bits_per_code(c.f0_vocab as u32)?,
        f0_codes_per_sec,
        c.f0_frame_rate()
    );
    println!("total: {} bps", rate.total_bps);

    if let Some(path) = stream {
        let s = Bitstream::load(path)?;
        println!(
            "stream: {} frames, speaker {}, {} payload bytes, {:.1} bps measured",
            s.header().num_content_frames,
            s.header().speaker_id,
            s.payload().len(),
            s.measured_bps()
        );
    }

    match (reference, hypothesis) {
        (None, None) => Ok(()),
        (Some(r), Some(h)) => compare(settings, r, h),
        _ => bail!(Error::InvalidInput(
            "--reference and --hypothesis go together".into()
        )),
    }
}

fn compare(settings: &Settings, reference: &Path, hypothesis: &Path) -> Result<()> {
    let r = load_clip(reference, settings)?;
    let h = load_clip(hypothesis, settings)?;
    let n = r.len().min(h.len());
    let r = AudioClip::new(r.samples()[..n].to_vec(), r.sample_rate())?;
    let h = AudioClip::new(h.samples()[..n].to_vec(), h.sample_rate())?;

    let rt = extract_f0(&r, &settings.pitch)?;
    let ht = extract_f0(&h, &settings.pitch)?;
    println!("vde: {:.4}", vde(&rt, &ht)?);
    println!("ffe: {:.4}", ffe(&rt, &ht)?);

    let disc = Discriminators::random(DiscriminatorConfig::desk(), settings.seed)?;
    let real = disc.discriminate(r.samples())?;
    let fake = disc.discriminate(h.samples())?;
    let report = total_losses(&r, &h, &real, &fake, LossWeights::default(), &settings.mel)?;
    print!("{}", report.to_table());
    Ok(())
}

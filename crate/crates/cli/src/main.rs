//! `dsrc`: train quantizers, encode/decode `.dsrc` streams, convert
//! speakers and report bitrates and metrics.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use dsrcodec::quantize::F0VqOptions;
use dsrcodec::Error;

use crate::commands::{ConvertArgs, EncodeArgs};
use crate::config::Settings;

#[derive(Parser)]
#[command(name = "dsrc", version, about = "Discrete speech resynthesis codec")]
struct Cli {
    /// TOML config with [codec], [pitch], [mel] and [paths] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the content codebook on feature files (.ftrs) or audio.
    TrainKmeans {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Train the F0 window codebook on pitch tracks (.f0tk) or audio.
    TrainF0vq {
        inputs: Vec<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Audio to a .dsrc stream.
    Encode {
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        books: Codebooks,
        #[arg(long, default_value_t = 0)]
        speaker: u16,
    },
    /// .dsrc stream to audio.
    Decode {
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        vocoder: VocoderPaths,
    },
    /// Resynthesize a stream with other speakers.
    Convert {
        input: PathBuf,
        /// Output file when converting to a single speaker.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Directory for `<stem>.spk<id>.wav` files.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long = "speaker")]
        targets: Vec<u16>,
        /// Draw this many distinct targets from the speaker table using the seed.
        #[arg(long)]
        random_targets: Option<usize>,
        #[command(flatten)]
        vocoder: VocoderPaths,
    },
    /// Encode with every voiced frame set to one F0 value.
    FlattenF0 {
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[command(flatten)]
        books: Codebooks,
        #[arg(long, default_value_t = 0)]
        speaker: u16,
        /// Speaker mean F0 in Hz; defaults to the utterance mean.
        #[arg(long)]
        mean_f0: Option<f64>,
    },
    /// Bitrate breakdown, optionally with stream stats and reference metrics.
    Analyze {
        #[arg(long)]
        stream: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        hypothesis: Option<PathBuf>,
    },
    /// Write seeded random generator weights and speaker embeddings.
    InitWeights {
        #[arg(long)]
        generator: PathBuf,
        #[arg(long)]
        speakers: PathBuf,
        #[arg(long, default_value_t = 8)]
        num_speakers: u16,
    },
}

#[derive(clap::Args)]
struct Codebooks {
    /// Content features (.ftrs) to use instead of the built-in featurizer.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    content_codebook: Option<PathBuf>,
    #[arg(long)]
    f0_codebook: Option<PathBuf>,
}

#[derive(clap::Args)]
struct VocoderPaths {
    #[arg(long)]
    generator: Option<PathBuf>,
    #[arg(long)]
    speakers: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<()> {
    let mut settings = Settings::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        settings.seed = seed;
    }
    match cli.command {
        Command::TrainKmeans { inputs, k, max_iters, output } => {
            commands::train_kmeans(&settings, &inputs, k, max_iters, &output)
        }
        Command::TrainF0vq { inputs, k, epochs, batch_size, output } => {
            let opts = F0VqOptions {
                k: k.unwrap_or(settings.codec.f0_vocab as usize),
                epochs,
                batch_size,
                ..F0VqOptions::default()
            };
            commands::train_f0vq(&settings, &inputs, opts, &output)
        }
        Command::Encode { input, output, books, speaker } => {
            let args = EncodeArgs {
                input,
                output,
                features: books.features,
                content_codebook: books.content_codebook,
                f0_codebook: books.f0_codebook,
                speaker,
            };
            commands::encode(&settings, args, None).map(drop)
        }
        Command::FlattenF0 { input, output, books, speaker, mean_f0 } => {
            let args = EncodeArgs {
                input,
                output,
                features: books.features,
                content_codebook: books.content_codebook,
                f0_codebook: books.f0_codebook,
                speaker,
            };
            commands::encode(&settings, args, Some(mean_f0)).map(drop)
        }
        Command::Decode { input, output, vocoder } => {
            commands::decode(&settings, &input, &output, vocoder.generator, vocoder.speakers)
        }
        Command::Convert { input, output, out_dir, targets, random_targets, vocoder } => {
            let args = ConvertArgs {
                input,
                output,
                out_dir,
                targets,
                random_targets,
                generator: vocoder.generator,
                speakers: vocoder.speakers,
            };
            for path in commands::convert(&settings, args)? {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Analyze { stream, reference, hypothesis } => {
            commands::analyze(&settings, stream.as_deref(), reference.as_deref(), hypothesis.as_deref())
        }
        Command::InitWeights { generator, speakers, num_speakers } => {
            commands::init_weights(&settings, &generator, &speakers, num_speakers)
        }
    }
}

/// 3 for a missing file, 4 for config or model mismatches, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 3,
                Error::Config(_)
                | Error::DimMismatch { .. }
                | Error::ShapeMismatch { .. }
                | Error::MissingTensor(_)
                | Error::CodeOutOfRange { .. } => 4,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hazerender_core::synthetic::{CorpusSpec, HazeStyle};
use hazerender_core::Airlight;

use commands::{parse_airlight, parse_alpha, AirlightSource, RenderArgs};
use config::Document;

/// A configuration or usage problem; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

pub enum Failure {
    Usage(UsageError),
    Runtime(anyhow::Error),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<hazerender_core::Error> for Failure {
    fn from(e: hazerender_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

#[derive(Parser)]
#[command(name = "hazerender", version, about = "Render, train and evaluate learned haze synthesis")]
struct Cli {
    /// TOML config with [train], [baseline] and [eval] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for training and baseline sampling; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,

    /// Config override such as train.batch_size=4; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the transmission and airlight networks.
    Train,
    /// Render haze into clean images with a trained checkpoint.
    Render(RenderCmd),
    /// Render random depth-based haze for comparison.
    Baseline {
        #[arg(long)]
        input: PathBuf,
        /// Depth maps named like the inputs (16-bit PNG).
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// FID between a rendered set and a reference set of real hazy images.
    Eval {
        #[arg(long)]
        rendered: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Where to write the JSON report.
        #[arg(long, default_value = "fid_report.json")]
        report: PathBuf,
    },
    /// Write a procedural demo corpus of clean images, depth maps and hazy exemplars.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 50)]
        clean: usize,
        #[arg(long, default_value_t = 30)]
        exemplars: usize,
        #[arg(long, default_value_t = 96)]
        size: usize,
    },
}

#[derive(Args)]
struct RenderCmd {
    #[arg(long)]
    checkpoint: PathBuf,
    /// An image or a directory of images.
    #[arg(long)]
    input: PathBuf,
    /// Haze density exponent in [0, 1].
    #[arg(long, value_parser = parse_alpha)]
    alpha: f64,
    /// Hazy exemplar whose airlight is transferred.
    #[arg(long, conflicts_with = "airlight", required_unless_present = "airlight")]
    exemplar: Option<PathBuf>,
    /// Literal airlight as r,g,b, bypassing the airlight network.
    #[arg(long, value_parser = parse_airlight)]
    airlight: Option<Airlight>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write each transmission map as `<stem>_t.png`.
    #[arg(long)]
    dump_transmission: bool,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut doc = Document::load(cli.config.as_deref())?;
    doc.apply_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        doc.set("train.seed", &seed.to_string())?;
        doc.set("baseline.seed", &seed.to_string())?;
    }
    match cli.command {
        Command::Train => commands::train(&doc),
        Command::Render(r) => {
            let airlight = match (r.exemplar, r.airlight) {
                (_, Some(a)) => AirlightSource::Literal(a),
                (Some(path), None) => AirlightSource::Exemplar(path),
                (None, None) => return Err(UsageError("one of --exemplar or --airlight is required".into()).into()),
            };
            commands::render_images(&RenderArgs {
                checkpoint: r.checkpoint,
                input: r.input,
                alpha: r.alpha,
                airlight,
                out_dir: r.out_dir,
                dump_transmission: r.dump_transmission,
            })
        }
        Command::Baseline { input, depth, out_dir } => commands::baseline(&doc, &input, &depth, &out_dir),
        Command::Eval { rendered, reference, report } => commands::eval(&doc, &rendered, &reference, &report),
        Command::Synth { out_dir, clean, exemplars, size } => {
            let seed = cli.seed.unwrap_or(0);
            let spec = CorpusSpec { clean, exemplars, height: size, width: size, seed, style: HazeStyle::default() };
            commands::synth(&spec, &out_dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {}", e.0);
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

//! `morphopc` command-line tool.

mod commands;
mod images;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use morphopc::config::Config;
use morphopc::Error;

#[derive(Parser, Debug)]
#[command(name = "morphopc", version, about = "Mask optimization with gated learnable morphology")]
struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the layout and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Litho kernel file (LKRN) replacing the Gaussian kernel.
    #[arg(long, global = true, value_name = "PATH")]
    kernels: Option<PathBuf>,
    /// Dose band as LO,HI with LO < 1 < HI.
    #[arg(long, global = true, value_name = "LO,HI", value_parser = parse_band)]
    dose_band: Option<DoseBand>,
    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate layout tiles, label them with pixel ILT and write a manifest.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Tile count; defaults to `data.count`.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Run one training stage on the train split of a dataset.
    Train {
        #[arg(long, value_enum)]
        stage: StageArg,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Starting generator; fine-tuning defaults to `<out>/pretrain_final_gen.mopc`.
        #[arg(long, value_name = "CKPT")]
        init: Option<PathBuf>,
    },
    /// Write continuous and binarized generator masks for dataset tiles.
    Infer {
        #[arg(long, value_name = "CKPT")]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
    },
    /// Score `<id>.bin.png` masks against `<id>.target.png` targets.
    Eval {
        #[arg(long)]
        masks: PathBuf,
        /// Target directory, or a dataset root containing `tiles/`.
        #[arg(long)]
        targets: PathBuf,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate one model per scale factor.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [4, 8])]
        scales: Vec<usize>,
    },
    /// Export morphological delta maps and target/mask/printed triptychs.
    Viz {
        #[arg(long, value_name = "CKPT")]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Encoder scales to export (0-based); all when omitted.
        #[arg(long, value_delimiter = ',')]
        layers: Vec<usize>,
        /// Tile for the delta maps; first validation tile by default.
        #[arg(long)]
        tile: Option<String>,
        /// Number of validation tiles rendered as triptychs.
        #[arg(long, default_value_t = 4)]
        triptychs: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StageArg {
    Pretrain,
    Finetune,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    All,
}

#[derive(Clone, Copy, Debug)]
struct DoseBand(f64, f64);

fn parse_band(s: &str) -> Result<DoseBand, String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("LO: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("HI: {e}"))?;
    Ok(DoseBand(lo, hi))
}

/// A failed command and its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NumericAbort { .. } => Failure::Numeric(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<Config, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.data.layout.seed = s;
        cfg.training.pretrain.seed = s;
        cfg.training.finetune.seed = s;
    }
    if let Some(k) = &cli.kernels {
        cfg.litho.kernels = Some(k.clone());
    }
    if let Some(DoseBand(lo, hi)) = cli.dose_band {
        cfg.litho.dose_band = [lo, hi];
    }
    cfg.validate().map_err(|e| match e {
        Error::Io { .. } | Error::Format { .. } => Failure::from(e),
        other => Failure::Usage(other.to_string()),
    })?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::GenData { out, count } => commands::gen_data(&cfg, out, *count),
        Command::Train {
            stage,
            dataset,
            out,
            init,
        } => {
            let stage = match stage {
                StageArg::Pretrain => morphopc::training::Stage::Pretrain,
                StageArg::Finetune => morphopc::training::Stage::Finetune,
            };
            commands::train(&cfg, stage, dataset, out, init.as_deref())
        }
        Command::Infer {
            checkpoint,
            dataset,
            out,
            split,
        } => commands::infer(&cfg, checkpoint, dataset, out, *split),
        Command::Eval { masks, targets, out } => commands::eval(&cfg, masks, targets, out),
        Command::Sweep { dataset, out, scales } => commands::sweep(&cfg, dataset, out, scales),
        Command::Viz {
            checkpoint,
            dataset,
            out,
            layers,
            tile,
            triptychs,
        } => commands::viz(&cfg, checkpoint, dataset, out, layers, tile.as_deref(), *triptychs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        (false, 2) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp_millis()
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use wingbeat::dataset::SpeciesLabel;
use wingbeat::evaluation::Strategy;
use wingbeat::experiment::{self, generate_synthetic, RunConfig, SynthClass, SynthSpec};

#[derive(Parser)]
#[command(name = "wingbeat", version, about = "Mosquito wingbeat classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-species file counts and durations of a manifest, as CSV on stdout.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Extract feature patches and write the patch cache.
    Extract(RunArgs),
    /// Train one model on the whole manifest and save it.
    Train(RunArgs),
    /// Cross-validate a strategy and write report.csv and summary.json.
    Evaluate(RunArgs),
    /// Run the binary strategy for every feature configuration.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated configuration ids; all of them by default.
        #[arg(long, value_delimiter = ',')]
        config_ids: Vec<u8>,
    },
    /// Write synthetic harmonic recordings and a manifest.
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    config_id: Option<u8>,
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Vote thresholds for the ensemble strategy, comma separated.
    #[arg(long, value_delimiter = ',')]
    threshold: Vec<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep all patches of a source file in the same fold.
    #[arg(long)]
    group_by_file: bool,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("reading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.manifest {
            cfg.manifest = m;
        }
        if let Some(id) = self.config_id {
            cfg.config_id = id;
            cfg.custom_features = None;
        }
        if let Some(s) = self.strategy {
            cfg.strategy = s;
        }
        if !self.threshold.is_empty() {
            cfg.thresholds = self.threshold;
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(k) = self.folds {
            cfg.folds = k;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = self.out {
            cfg.out = o;
        }
        cfg.group_by_file |= self.group_by_file;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for the WAV files and manifest.csv.
    #[arg(long)]
    out: PathBuf,
    /// Classes as `Species=Hz`, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    class: Vec<String>,
    #[arg(long, default_value_t = 4)]
    harmonics: usize,
    /// Noise level in dB; omit for clean tones.
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 4)]
    files_per_class: usize,
    #[arg(long, default_value_t = 5.0)]
    seconds: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_class(s: &str) -> Result<SynthClass> {
    let (name, hz) = s.split_once('=').with_context(|| format!("expected Species=Hz, got {s:?}"))?;
    Ok(SynthClass {
        species: SpeciesLabel::from_name(name.trim()).with_context(|| format!("unknown species {name:?}"))?,
        fundamental_hz: hz.trim().parse().with_context(|| format!("bad frequency in {s:?}"))?,
    })
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn synth(args: SynthArgs) -> Result<PathBuf> {
    let classes = args.class.iter().map(|c| parse_class(c)).collect::<Result<Vec<_>>>()?;
    let mut spec = SynthSpec::new(classes);
    spec.harmonics = args.harmonics;
    spec.snr_db = args.snr_db;
    spec.files_per_class = args.files_per_class;
    spec.seconds_per_file = args.seconds;
    spec.seed = args.seed;
    Ok(generate_synthetic(&spec, &args.out)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Stats { manifest } => print!("{}", experiment::stats_csv(&manifest)?),
        Command::Extract(a) => {
            let cfg = a.resolve()?;
            let (set, paths) = experiment::run_extract(&cfg)?;
            info!("{} patches", set.patches.len());
            print_paths(&paths);
        }
        Command::Train(a) => print_paths(&experiment::run_train(&a.resolve()?)?),
        Command::Evaluate(a) => print_paths(&experiment::run_experiment(&a.resolve()?)?),
        Command::Sweep { run, config_ids } => {
            let cfg = run.resolve()?;
            let ids = if config_ids.is_empty() { experiment::all_config_ids() } else { config_ids };
            let (rows, paths) = experiment::run_fft_sweep(&cfg, &ids)?;
            info!("{} configurations", rows.len());
            print_paths(&paths);
        }
        Command::Synth(a) => println!("{}", synth(a)?.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

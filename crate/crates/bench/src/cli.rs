//! `irsmc` command line.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use irsmc::sampling::Resampler;

use crate::config::{ConfigError, Experiment, ExperimentConfig};
use crate::experiments::{run_bench, BenchError};
use crate::verify::run_verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "irsmc",
    version,
    about = "Independent-resampling SMC benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Static Gaussian estimators
    Static(BenchArgs),
    /// ARCH filtering
    Arch(BenchArgs),
    /// Range-bearing tracking
    Tracking(BenchArgs),
    /// Block linear-Gaussian model of growing dimension
    Highdim(BenchArgs),
    /// Run the property suites
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Flat key-value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single particle count, shorthand for `--sizes N`
    #[arg(long, conflicts_with = "sizes")]
    particles: Option<usize>,
    /// Comma-separated particle counts
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Comma-separated state dimensions (highdim)
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Give baselines the operation budget of the independent filters
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    budget_matched: Option<bool>,
    /// Tracking noise level: moderate, informative or both
    #[arg(long)]
    scenario: Option<String>,
    /// Output file (stdout by default)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Add wall-clock rows
    #[arg(long)]
    timing: bool,
}

impl BenchArgs {
    fn config(&self, experiment: Experiment) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let cfg = ExperimentConfig::load(path)?;
                if cfg.experiment != experiment {
                    return Err(ConfigError::Invalid(format!(
                        "config is for `{}`, not `{}`",
                        cfg.experiment.name(),
                        experiment.name()
                    )));
                }
                cfg
            }
            None => ExperimentConfig::defaults(experiment),
        };
        if let Some(n) = self.particles {
            cfg.sizes = vec![n];
        }
        if let Some(s) = &self.sizes {
            cfg.sizes = s.clone();
        }
        if let Some(d) = &self.dims {
            cfg.dims = d.clone();
        }
        if let Some(v) = self.runs {
            cfg.runs = v;
        }
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.budget_matched {
            cfg.budget_matched = v;
        }
        if let Some(v) = &self.scenario {
            cfg.set("scenario", v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn bench(experiment: Experiment, args: &BenchArgs) -> i32 {
    let cfg = match args.config(experiment) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("irsmc: {e}");
            return EXIT_CONFIG;
        }
    };
    let report = match run_bench(&cfg, args.timing) {
        Ok(r) => r,
        Err(BenchError::Config(e)) => {
            eprintln!("irsmc: {e}");
            return EXIT_CONFIG;
        }
        Err(e) => {
            eprintln!("irsmc: {e}");
            return EXIT_FAILURE;
        }
    };
    let out: Box<dyn Write> = match &args.out {
        Some(path) => match File::create(path) {
            Ok(f) => Box::new(BufWriter::new(f)),
            Err(e) => {
                eprintln!("irsmc: cannot create {}: {e}", path.display());
                return EXIT_FAILURE;
            }
        },
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let written = match args.format {
        Format::Csv => report.write_csv(out).map_err(|e| e.to_string()),
        Format::Json => report.write_json(out).map_err(|e| e.to_string()),
    };
    match written {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("irsmc: {e}");
            EXIT_FAILURE
        }
    }
}

/// Parses `argv` (program name first) and runs the command; returns the
/// process exit code. `verify` checks `resampler`.
pub fn run_with<I, T>(argv: I, resampler: &dyn Resampler) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match &cli.command {
        Command::Static(a) => bench(Experiment::Static, a),
        Command::Arch(a) => bench(Experiment::Arch, a),
        Command::Tracking(a) => bench(Experiment::Tracking, a),
        Command::Highdim(a) => bench(Experiment::Highdim, a),
        Command::Verify { seed } => {
            let rep = run_verify(resampler, *seed);
            for c in &rep.checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            if rep.passed() {
                EXIT_OK
            } else {
                EXIT_VERIFY
            }
        }
    }
}

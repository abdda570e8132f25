use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pata::harness::{run_sweep, write_rows, ConfigError, Distribution, ExperimentConfig, RunError};

#[derive(Parser)]
#[command(
    name = "pata",
    version,
    about = "Privacy-aware spatial task assignment simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and print its metrics row.
    Run(Base),
    /// Vary one parameter over a list of values, all else fixed.
    Sweep {
        /// Configuration key to vary (field name or flag name, e.g. `ratio`).
        #[arg(long)]
        param: String,
        /// Comma-separated values; ranges are written `lo:hi`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        base: Base,
    },
}

#[derive(Args)]
struct Base {
    #[arg(long)]
    algo: Option<String>,
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tasks: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    ratio: Option<String>,
    #[arg(long)]
    task_value: Option<String>,
    #[arg(long)]
    worker_range: Option<String>,
    /// Budget range `LO,HI`.
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    z: Option<String>,
    /// `uniform` or `normal`.
    #[arg(long)]
    dist: Option<String>,
    #[arg(long, requires = "input_workers")]
    input_tasks: Option<PathBuf>,
    #[arg(long, requires = "input_tasks")]
    input_workers: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Leave the elapsed_ms column empty for byte-reproducible output.
    #[arg(long)]
    no_timing: bool,
}

impl Base {
    fn config(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("algo", &self.algo),
            ("n_tasks", &self.tasks),
            ("batch_size", &self.batch),
            ("worker_task_ratio", &self.ratio),
            ("task_value", &self.task_value),
            ("worker_range", &self.worker_range),
            ("eps_range", &self.eps),
            ("budget_group_size", &self.z),
            ("distribution", &self.dist),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let (Some(t), Some(w)) = (&self.input_tasks, &self.input_workers) {
            cfg.input_tasks = Some(t.clone());
            cfg.input_workers = Some(w.clone());
            cfg.distribution = Distribution::Csv;
        }
        Ok(cfg)
    }
}

enum Failure {
    Config(String),
    Data(String),
    Io(io::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config { .. } => Failure::Config(e.to_string()),
            RunError::Data { .. } => Failure::Data(e.to_string()),
        }
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let (grid, base) = match cli.command {
        Command::Run(base) => (vec![base.config()?], base),
        Command::Sweep {
            param,
            values,
            base,
        } => {
            let template = base.config()?;
            let grid = values
                .iter()
                .map(|v| {
                    let mut cfg = template.clone();
                    cfg.set(&param, v)?;
                    Ok(cfg)
                })
                .collect::<Result<Vec<_>, ConfigError>>()?;
            (grid, base)
        }
    };
    for cfg in &grid {
        cfg.validate()?;
    }
    let rows = run_sweep(&grid)?;
    let out: Box<dyn Write> = match &base.out {
        Some(path) => Box::new(File::create(path).map_err(Failure::Io)?),
        None => Box::new(io::stdout().lock()),
    };
    write_rows(BufWriter::new(out), &rows, !base.no_timing).map_err(Failure::Io)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("data error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Io(e)) => {
            eprintln!("i/o error: {e}");
            ExitCode::FAILURE
        }
    }
}

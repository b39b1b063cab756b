use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use srpic_lab::compare::{summarize, write_summary};
use srpic_lab::config::{load_scenarios, LoadError, ScenarioConfig, SWEEP_PARAMS};
use srpic_lab::format::fmt_g;
use srpic_lab::runner::run_to_csv;

#[derive(Parser)]
#[command(name = "srpic", version, about = "Paired SRPIC vs. baseline transfer experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every scenario in a file, both arms per seed, and write the CSV.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use seeds 1..=N instead of the file's seed lists.
        #[arg(long)]
        seed_count: Option<u64>,
    },
    /// Summarize a run CSV: paired means, 95% intervals and ratios.
    Compare {
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerun every scenario once per value of one parameter.
    Sweep {
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        config: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_count: Option<u64>,
    },
}

enum Failure {
    Config(String),
    Other(String),
}

impl Failure {
    fn other(e: impl std::fmt::Display) -> Self {
        Failure::Other(e.to_string())
    }
}

fn load(path: &Path, seed_count: Option<u64>) -> Result<Vec<ScenarioConfig>, Failure> {
    let mut scenarios = load_scenarios(path).map_err(|e| match e {
        LoadError::Config(c) => Failure::Config(c.to_string()),
        LoadError::Io(e) => Failure::Other(e.to_string()),
    })?;
    if let Some(n) = seed_count {
        if n == 0 {
            return Err(Failure::Config("--seed-count must be at least 1".into()));
        }
        for s in &mut scenarios {
            s.seeds = (1..=n).collect();
        }
    }
    Ok(scenarios)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn sweep_scenarios(base: &[ScenarioConfig], param: &str, values: &[f64]) -> Result<Vec<ScenarioConfig>, Failure> {
    if !SWEEP_PARAMS.contains(&param) {
        return Err(Failure::Config(format!("unknown sweep parameter `{param}` (known: {})", SWEEP_PARAMS.join(", "))));
    }
    let mut out = Vec::with_capacity(base.len() * values.len());
    for s in base {
        for &v in values {
            let mut c = s.clone();
            c.set_param(param, v).map_err(Failure::Config)?;
            c.name = format!("{}@{param}={}", s.name, fmt_g(v));
            c.validate().map_err(|m| Failure::Config(format!("{}: {m}", c.name)))?;
            out.push(c);
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Run { config, out, seed_count } => {
            let scenarios = load(&config, seed_count)?;
            let mut w = create(&out)?;
            run_to_csv(&scenarios, &mut w).map_err(Failure::other)?;
            w.flush().map_err(Failure::other)
        }
        Cmd::Compare { csv, out } => {
            let input = File::open(&csv).map_err(|e| Failure::Other(format!("{}: {e}", csv.display())))?;
            let rows =
                summarize(io::BufReader::new(input)).map_err(|e| Failure::Other(format!("{}: {e}", csv.display())))?;
            let mut w = create(&out)?;
            write_summary(&rows, &mut w).map_err(Failure::other)?;
            w.flush().map_err(Failure::other)
        }
        Cmd::Sweep { param, values, config, out, seed_count } => {
            let base = load(&config, seed_count)?;
            let scenarios = sweep_scenarios(&base, &param, &values)?;
            match out {
                Some(path) => {
                    let mut w = create(&path)?;
                    run_to_csv(&scenarios, &mut w).map_err(Failure::other)?;
                    w.flush().map_err(Failure::other)
                }
                None => {
                    let mut w = io::stdout().lock();
                    run_to_csv(&scenarios, &mut w).map_err(Failure::other)?;
                    w.flush().map_err(Failure::other)
                }
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

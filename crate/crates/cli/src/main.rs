use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nc3n_core::sim::scenario::trace_text;
use nc3n_core::sim::{run_scenario, Metrics, ScenarioConfig, SimError};
use rayon::prelude::*;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "nc3n", version, about = "Network-coded CCN and Bloom forwarding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run(RunArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario configuration (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run this many consecutive seeds starting at the base seed.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    /// Output directory; results go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run both the coded and uncoded arm.
    #[arg(long)]
    compare: bool,
    /// Also write the event trace of every arm.
    #[arg(long)]
    trace: bool,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads for seed sweeps.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
}

#[derive(Debug)]
enum Failure {
    Sim(SimError),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Sim(e) => e.exit_code() as u8,
            Failure::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Sim(e) => e.fmt(f),
            Failure::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::Sim(e)
    }
}

struct ArmResult {
    metrics: Metrics,
    trace: String,
}

/// Numeric and boolean leaves of `v` as `(dotted.path, value)` rows.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Number(n) => out.push((prefix.to_string(), n.to_string())),
        Value::Bool(b) => out.push((prefix.to_string(), u8::from(*b).to_string())),
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&join(k), v, out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&join(&i.to_string()), v, out);
            }
        }
        Value::Null | Value::String(_) => {}
    }
}

fn metric_rows(m: &Metrics) -> Vec<(String, String)> {
    let mut rows = Vec::new();
    let v = serde_json::to_value(m).expect("metrics serialize");
    flatten("", &v, &mut rows);
    rows.retain(|(k, _)| k != "seed");
    rows
}

fn csv_text(results: &[ArmResult]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Io(e.to_string());
    w.write_record(["scenario", "arm", "seed", "metric", "value"])
        .map_err(io)?;
    for r in results {
        let m = &r.metrics;
        let seed = m.seed.to_string();
        for (metric, value) in metric_rows(m) {
            w.write_record([
                m.scenario.as_str(),
                m.arm.as_str(),
                seed.as_str(),
                metric.as_str(),
                value.as_str(),
            ])
            .map_err(io)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Failure::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.scenario)
        .map_err(|e| SimError::Config(format!("{}: {e}", args.scenario.display())))?;
    let mut cfg =
        ScenarioConfig::from_json(&text).map_err(|e| SimError::Config(format!("{}: {e}", args.scenario.display())))?;
    if args.compare {
        cfg.compare = true;
    }
    let base = args.seed.unwrap_or(cfg.seed);
    let seeds: Vec<u64> = (0..args.seeds).map(|i| base.wrapping_add(i)).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs as usize)
        .build()
        .map_err(|e| Failure::Io(e.to_string()))?;
    let runs: Vec<Result<Vec<ArmResult>, SimError>> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let cfg = ScenarioConfig { seed, ..cfg.clone() };
                let outcome = run_scenario(&cfg)?;
                Ok(outcome
                    .arms
                    .into_iter()
                    .map(|a| ArmResult {
                        trace: trace_text(&a.trace),
                        metrics: a.metrics,
                    })
                    .collect())
            })
            .collect()
    });
    let mut results = Vec::new();
    for r in runs {
        results.extend(r?);
    }

    match &args.out {
        None => {
            let body = match args.format {
                Format::Json => {
                    let all: Vec<&Metrics> = results.iter().map(|r| &r.metrics).collect();
                    serde_json::to_string_pretty(&all).expect("metrics serialize") + "\n"
                }
                Format::Csv => csv_text(&results)?,
            };
            std::io::stdout()
                .write_all(body.as_bytes())
                .map_err(|e| Failure::Io(e.to_string()))?;
            if args.trace {
                for r in &results {
                    eprint!("{}", r.trace);
                }
            }
        }
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
            for r in &results {
                let stem = format!("{}-seed{}-{}", cfg.name, r.metrics.seed, r.metrics.arm);
                write_file(&dir.join(format!("{stem}.json")), &(r.metrics.to_json() + "\n"))?;
                if args.trace {
                    write_file(&dir.join(format!("{stem}.trace")), &r.trace)?;
                }
            }
            if args.format == Format::Csv {
                write_file(&dir.join(format!("{}.csv", cfg.name)), &csv_text(&results)?)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("nc3n: {e}");
                ExitCode::from(e.code())
            }
        },
    }
}

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use cmrp::Exec;
use cmrp_cli::report::{write_atomic, write_table, SCHEMA_VERSION};
use cmrp_cli::{example_scenario, parse_scenario, run, Format, Scenario, Status, Task};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "cmrp", version, about = "Compound mixed renewal processes: checks, ruin and premiums")]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the scenario's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides the scenario's.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv writes one file per table plus summary.json; json puts everything in summary.json.
    #[arg(long, global = true)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the tilt's integrability conditions.
    Validate,
    /// Simulate paths and write them out.
    Simulate,
    /// Unit-mean, law-equivalence and compensator checks.
    Martingale,
    /// Ruin probabilities by importance sampling.
    Ruin,
    /// Conditional and mixed premiums and their ordering.
    Premium,
    /// Run a shipped example end to end (1, 2, 2cou, 3 or ruin).
    Example { which: String },
}

fn load(cli: &Cli) -> Result<(Scenario, Task, String)> {
    let (text, task, label) = match &cli.command {
        Command::Example { which } => {
            if cli.config.is_some() {
                return Err(anyhow!("example runs a shipped scenario; drop --config"));
            }
            let text = example_scenario(which)
                .ok_or_else(|| anyhow!("unknown example '{which}' (expected 1, 2, 2cou, 3 or ruin)"))?;
            (text.to_string(), Task::Example, format!("example {which}"))
        }
        other => {
            let path = cli.config.as_ref().ok_or_else(|| anyhow!("--config is required"))?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let task = match other {
                Command::Validate => Task::Validate,
                Command::Simulate => Task::Simulate,
                Command::Martingale => Task::Martingale,
                Command::Ruin => Task::Ruin,
                Command::Premium => Task::Premium,
                Command::Example { .. } => unreachable!(),
            };
            (text, task, task.name().to_string())
        }
    };
    let mut scenario = parse_scenario(&text)?;
    if let Some(seed) = cli.seed {
        scenario.seed = seed;
    }
    Ok((scenario, task, label))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (scenario, task, label) = match load(&cli) {
        Ok(v) => v,
        Err(e) => {
            for line in e.to_string().lines() {
                eprintln!("error: {line}");
            }
            return ExitCode::from(Status::ConfigError.exit_code());
        }
    };
    match execute(&cli, &scenario, task, &label) {
        Ok(status) => ExitCode::from(status.exit_code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(Status::ConfigError.exit_code())
        }
    }
}

fn execute(cli: &Cli, scenario: &Scenario, task: Task, label: &str) -> Result<Status> {
    let exec = match cli.threads {
        Some(0) => return Err(anyhow!("--threads must be at least 1")),
        Some(n) => Exec::with_threads(n),
        None => Exec::default(),
    };
    let out_dir = cli.out.clone().or_else(|| scenario.out_dir.clone()).unwrap_or_else(|| PathBuf::from("cmrp-out"));
    let format = cli.format.or(scenario.format).unwrap_or(Format::Csv);

    let start = Instant::now();
    let outcome = run(scenario, task, exec);
    let mut summary = serde_json::Map::new();
    summary.insert("schema_version".into(), json!(SCHEMA_VERSION));
    summary.insert("command".into(), json!(label));
    summary.insert("seed".into(), json!(scenario.seed));
    summary.insert("status".into(), json!(outcome.status));
    summary.insert("exit_code".into(), json!(outcome.status.exit_code()));
    if let Some(p) = &scenario.preset {
        summary.insert("preset".into(), json!({ "name": p.name, "params": p.params }));
    }
    summary.insert("tilt".into(), json!(scenario.tilt.label));
    summary.insert("budget".into(), json!(scenario.budget));
    summary.insert("sections".into(), Value::Object(outcome.summary));

    let mut written = Vec::new();
    match format {
        Format::Csv => {
            for t in &outcome.tables {
                written.push(write_table(&out_dir, t)?);
            }
        }
        Format::Json => {
            let tables = outcome.tables.iter().map(|t| (t.name.to_string(), t.to_json())).collect();
            summary.insert("tables".into(), Value::Object(tables));
        }
    }
    let path = out_dir.join("summary.json");
    let mut bytes = serde_json::to_vec_pretty(&Value::Object(summary))?;
    bytes.push(b'\n');
    write_atomic(&path, &bytes)?;
    written.push(path);

    println!("{label}: {:?} (exit {}) in {:.1}s", outcome.status, outcome.status.exit_code(), start.elapsed().as_secs_f64());
    for p in written {
        println!("  wrote {}", p.display());
    }
    Ok(outcome.status)
}

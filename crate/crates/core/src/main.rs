use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sparse_consensus::harness::{analyze, run_scenario, sweep, RawConfig, ScenarioConfig};
use sparse_consensus::Result;

#[derive(Parser)]
#[command(name = "sparse-consensus", version, about = "Sparse control of consensus dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario config file, or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `sim.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Simulate(Common),
    /// Print the closed-loop spectrum of the linearization as JSON.
    Analyze(Common),
    /// Run the scenario once per value of one key.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        key: String,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<String>,
    },
}

fn raw_config(common: &Common) -> Result<RawConfig> {
    let mut raw = RawConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        raw.set("seed", &seed.to_string());
    }
    if let Some(out) = &common.out {
        raw.set("sim.output_dir", &out.display().to_string());
    }
    for assignment in &common.set {
        raw.set_assignment(assignment)?;
    }
    Ok(raw)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(common) => {
            let cfg = ScenarioConfig::from_raw(&raw_config(&common)?)?;
            let summary = run_scenario(&cfg)?;
            println!(
                "wrote {} files to {} (final Lyapunov {:e})",
                summary.files.len(),
                summary.output_dir.display(),
                summary.lyapunov.values.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Analyze(common) => {
            let cfg = ScenarioConfig::from_raw(&raw_config(&common)?)?;
            let report = analyze(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Sweep { common, key, values } => {
            let summary = sweep(&raw_config(&common)?, &key, &values)?;
            println!("wrote {} runs and {}", summary.runs.len(), summary.combined.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

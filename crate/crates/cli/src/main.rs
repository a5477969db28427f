use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use manet_qos::metrics::export_csv;
use manet_qos::runner::summary_text;
use manet_qos::{load_scenario, run_ab, run_single, ProtocolMode, ScenarioConfig};

#[derive(Parser)]
#[command(name = "manet-qos", version, about = "Baseline vs QoS-aware AODV on a simulated mobile ad hoc network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario at one pause time and write its trace.
    Run {
        #[command(flatten)]
        common: Common,
        /// Pause time to simulate; defaults to the first in the config.
        #[arg(long)]
        pause: Option<f64>,
    },
    /// Run baseline and QoS at every pause time and compare them.
    Ab {
        #[command(flatten)]
        common: Common,
    },
    /// Check a config file and print its fingerprint.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML). Missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["baseline", "qos"])]
    mode: Option<String>,
    /// Output directory for traces, CSVs and the report.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_scenario(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = &self.mode {
            cfg.protocol_mode = mode.parse().map_err(anyhow::Error::msg)?;
        }
        Ok(cfg)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, pause } => {
            let cfg = common.scenario()?;
            let pause = match pause.or(cfg.pause_times.first().copied()) {
                Some(p) if p >= 0.0 => p,
                Some(p) => bail!("pause time must be non-negative, got {p}"),
                None => bail!("no pause time given"),
            };
            create_dir(&common.out)?;
            let mode = cfg.protocol_mode;
            let trace = common.out.join(format!("trace_{mode}_pause{pause}.tsv"));
            let output = run_single(&cfg, pause, mode, Some(&trace))?;
            export_csv([&output.summary], common.out.join("series.csv"))?;
            print!("{}", summary_text(&output.summary));
            println!("trace written to {}", trace.display());
        }
        Command::Ab { common } => {
            let cfg = common.scenario()?;
            if common.mode.is_some() {
                bail!("`ab` always runs both modes; drop --mode");
            }
            let report = run_ab(&cfg, Some(&common.out))?;
            print!("{report}");
            println!("results written to {}", common.out.display());
        }
        Command::Validate { common } => {
            let cfg = common.scenario()?;
            cfg.validate()?;
            let mode: ProtocolMode = cfg.protocol_mode;
            println!(
                "ok: {} nodes, {} flows, {} s, mode {mode}, fingerprints {}",
                cfg.node_count,
                cfg.flows.len(),
                cfg.sim_time,
                cfg.pause_times.iter().map(|&p| format!("{p}s={}", cfg.fingerprint(p))).collect::<Vec<_>>().join(" ")
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

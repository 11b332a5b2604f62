//! `sagin-sim`: run, sweep, compare, and export the service-chain
//! deployment simulator from the command line.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use sagin_cli::{cmd_export_ilp, cmd_oracle_compare, cmd_run, cmd_sweep, Axis, SweepConfig};
use sagin_core::scenario::Policy;

#[derive(Parser)]
#[command(
    name = "sagin-sim",
    version,
    about = "Simulate service-function-chain deployment and failure recovery \
             over a space-air-ground network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; write report.json, events.log, slots.csv, and
    /// failures.csv into the output directory.
    Run {
        /// Scenario TOML file.
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory (default: $SAGIN_SIM_OUT or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's policy (frmg, flts, rssp, rsnt).
        #[arg(long)]
        policy: Option<String>,
    },
    /// Vary one scenario field over a list of values, replicating each
    /// cell over consecutive seeds; write long and summary CSVs.
    Sweep {
        /// Scenario TOML file used as the base of every cell.
        #[arg(long)]
        scenario: PathBuf,
        /// Field to vary: uav_count, sfc_count, lambda, data_range,
        /// vnf_range, or failure_interval.
        #[arg(long)]
        axis: String,
        /// Comma-separated values for the axis.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Replicas per (value, policy) cell; replica r runs with seed
        /// base_seed + r in every cell.
        #[arg(long, default_value_t = 100)]
        reps: u32,
        /// Policies to run (repeatable or comma-separated; default all).
        #[arg(long = "policy", value_delimiter = ',')]
        policies: Vec<String>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory (default: $SAGIN_SIM_OUT or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve every tiny instance in a directory exhaustively and compare
    /// the heuristic against the optimum; write gaps.csv and
    /// gaps_summary.csv.
    OracleCompare {
        /// Directory of tiny-instance TOML files.
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory (default: $SAGIN_SIM_OUT or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for the heuristic runs.
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
    /// Write a tiny instance as an LP-format integer program.
    ExportIlp {
        /// Tiny-instance TOML file.
        #[arg(long)]
        scenario: PathBuf,
        /// Output file (default: <out dir>/model.lp).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Default output directory: `$SAGIN_SIM_OUT` when set, `./out` otherwise.
fn default_out() -> PathBuf {
    std::env::var_os("SAGIN_SIM_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

fn parse_policy(s: &str) -> Result<Policy> {
    Policy::from_str(s).with_context(|| format!("unknown policy {s:?}"))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { scenario, out, seed, policy } => {
            let out = out.unwrap_or_else(default_out);
            let policy = policy.as_deref().map(parse_policy).transpose()?;
            let report = cmd_run(&scenario, &out, seed, policy)?;
            println!(
                "run complete: policy={} seed={} completed={}/{} total_delay_s={:.3} audit={}",
                report.policy,
                report.seed,
                report.completed,
                report.sfc.len(),
                report.total_delay_s,
                if report.audit.passed() { "pass" } else { "FAIL" },
            );
            println!("wrote report.json, events.log, slots.csv, failures.csv to {}", out.display());
        }
        Command::Sweep { scenario, axis, values, reps, policies, jobs, out } => {
            let out = out.unwrap_or_else(default_out);
            let axis = Axis::from_str(&axis)?;
            let policies = if policies.is_empty() {
                Policy::ALL.to_vec()
            } else {
                policies.iter().map(|p| parse_policy(p)).collect::<Result<Vec<_>>>()?
            };
            let cfg = SweepConfig { axis, values, reps, policies, jobs };
            let rows = cmd_sweep(&scenario, &out, &cfg)?;
            let failures = rows.iter().filter(|r| !r.audit_passed()).count();
            println!(
                "sweep complete: axis={} cells={}x{} reps={} rows={} audit_failures={}",
                cfg.axis.name(),
                cfg.values.len(),
                cfg.policies.len(),
                cfg.reps,
                rows.len(),
                failures,
            );
            println!(
                "wrote sweep_{0}_long.csv and sweep_{0}_summary.csv to {1}",
                cfg.axis.name(),
                out.display()
            );
        }
        Command::OracleCompare { scenario, out, seed } => {
            let out = out.unwrap_or_else(default_out);
            let (_rows, summary) = cmd_oracle_compare(&scenario, &out, seed)?;
            println!(
                "comparison complete: instances={} compared={} dominance={} median_gap={:.4} max_gap={:.4}",
                summary.instances,
                summary.compared,
                summary.dominance_holds,
                summary.median_gap,
                summary.max_gap,
            );
            println!("wrote gaps.csv and gaps_summary.csv to {}", out.display());
        }
        Command::ExportIlp { scenario, out } => {
            let out_file = out.unwrap_or_else(|| default_out().join("model.lp"));
            cmd_export_ilp(&scenario, &out_file)?;
            println!("wrote {}", out_file.display());
        }
    }
    Ok(())
}

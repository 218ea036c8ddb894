use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use nse_asymptotics::harness::{run_experiment, write_json, write_remainder_csv, ExperimentConfig};
use nse_asymptotics::solver::Trace;
use nse_asymptotics::verify::CheckResult;

/// Asymptotic-expansion experiments for the forced Navier-Stokes equations on
/// the periodic box.
#[derive(Parser)]
#[command(name = "nse-asym", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the exponent lattice; writes and prints lattice.json.
    Lattice(Common),
    /// Compute expansion coefficients; writes coeffs.json.
    Coeffs(Common),
    /// Integrate the Galerkin system; writes trace.csv and final_state.json.
    Simulate(Common),
    /// Run all checks; writes report.json and remainder_N<n>.csv files.
    Verify(Common),
    /// Full pipeline; writes every artifact of the other subcommands.
    Run(Common),
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config).with_context(|| format!("config {}", c.config.display()))?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    std::fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    Ok(cfg)
}

fn write_trace(dir: &Path, trace: &Trace, cfg: &ExperimentConfig) -> Result<()> {
    let w = BufWriter::new(File::create(dir.join("trace.csv"))?);
    trace.write_csv(w, &[cfg.checks.index])?;
    write_json(&dir.join("final_state.json"), &trace.last().field)?;
    Ok(())
}

fn summarize(report: &[CheckResult]) -> bool {
    for c in report {
        let m = c.measured.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "n/a".into());
        let tag = if c.pass { "PASS" } else { "FAIL" };
        eprintln!("[{tag}] {}: {} (measured {m}, expected {})", c.case, c.property, c.expected);
    }
    report.iter().all(|c| c.pass)
}

fn verify(c: &Common, cfg: &ExperimentConfig, everything: bool) -> Result<bool> {
    let outcome = run_experiment(cfg).with_context(|| format!("running {}", c.config.display()))?;
    if everything {
        write_json(&c.out.join("lattice.json"), &outcome.lattice.to_dump())?;
        write_json(&c.out.join("coeffs.json"), &outcome.expansion.to_dump())?;
        if let Some(tr) = &outcome.trace {
            write_trace(&c.out, tr, cfg)?;
        }
    }
    for (n, series) in &outcome.remainders {
        write_remainder_csv(&c.out.join(format!("remainder_N{n}.csv")), series)?;
    }
    write_json(&c.out.join("report.json"), &outcome.report)?;
    Ok(summarize(&outcome.report))
}

fn execute(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Lattice(c) => {
            let cfg = load(c)?;
            let dump = cfg.lattice()?.to_dump();
            write_json(&c.out.join("lattice.json"), &dump)?;
            println!("{}", serde_json::to_string_pretty(&dump)?);
            Ok(true)
        }
        Command::Coeffs(c) => {
            let cfg = load(c)?;
            let lattice = cfg.lattice()?;
            let (force, _) = cfg.force(&lattice)?;
            write_json(&c.out.join("coeffs.json"), &cfg.coefficients(&lattice, &force)?.to_dump())?;
            Ok(true)
        }
        Command::Simulate(c) => {
            let cfg = load(c)?;
            let lattice = cfg.lattice()?;
            let (force, _) = cfg.force(&lattice)?;
            let exp = cfg.coefficients(&lattice, &force)?;
            write_trace(&c.out, &cfg.simulate(&force, &exp)?, &cfg)?;
            Ok(true)
        }
        Command::Verify(c) => {
            let cfg = load(c)?;
            verify(c, &cfg, false)
        }
        Command::Run(c) => {
            let cfg = load(c)?;
            verify(c, &cfg, true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

//! Batch driver for balanced-metric experiments on twisted Higgs bundles.
//!
//! Subcommands: `balance`, `weight`, `asymptotics`, `validate`.  Every run
//! reads a JSON config (plus flag overrides), writes `report.json` and any
//! CSV series into the output directory, and encodes its verdict in the
//! exit code:
//!
//! * `balance`:     0 converged, 2 degenerate, 3 iteration cap, 1 config error
//! * `weight`:      0 on valid input, 1 otherwise
//! * `asymptotics`: 0 all checks pass, 4 a slope/bound check failed, 1 config error
//! * `validate`:    0 valid, 1 violations
//!
//! The environment variable `HB_THREADS` caps the worker pool; reports are
//! byte-identical for identical `(config, seed)`, with wall-clock timing in
//! a sidecar `meta.json`.

use anyhow::{Context, anyhow, bail};
use clap::{Args, Parser, Subcommand};
use hb_core::report::{
    CommandOutput, RunConfig, parse_ratio, run_asymptotics, run_balance, run_validate,
    run_weight,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "hb", version, about = "Balanced metrics for twisted Higgs bundles on the projective line", long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Level k (overrides the config)
    #[arg(long)]
    k: Option<i64>,
    /// Level range A:B inclusive (overrides the config)
    #[arg(long, value_name = "A:B")]
    k_range: Option<String>,
    /// Balanced-condition weight ℓ, rational like 1 or 3/2 (overrides)
    #[arg(long)]
    ell: Option<String>,
    /// Iteration residual tolerance (overrides)
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap (overrides)
    #[arg(long)]
    max_iter: Option<usize>,
    /// Seed for sampled evaluations (overrides)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: current directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Quadrature orders NPOLAR:NAZ (overrides)
    #[arg(long, value_name = "NPOLAR:NAZ")]
    quad: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the balanced fixed-point iteration
    Balance(CommonArgs),
    /// Hilbert-Mumford weight of a one-parameter subgroup
    Weight(CommonArgs),
    /// Slope, trend, and bound sweeps over a level range
    Asymptotics(CommonArgs),
    /// Validate an instance and search for a destabilizing witness
    Validate(CommonArgs),
}

fn split_pair(s: &str, what: &str) -> anyhow::Result<(i64, i64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("{what} must look like A:B, got {s}"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn load_config(args: &CommonArgs) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg = RunConfig::parse(&text).map_err(|e| anyhow!("{e}"))?;
    if let Some(k) = args.k {
        cfg.k = Some(k);
    }
    if let Some(kr) = &args.k_range {
        cfg.k_range = Some(split_pair(kr, "--k-range")?);
    }
    if let Some(ell) = &args.ell {
        cfg.ell = hb_core::report::RatioParam(parse_ratio(ell).map_err(|e| anyhow!("{e}"))?);
    }
    if let Some(tol) = args.tol {
        if !(tol > 0.0) {
            bail!("--tol must be positive");
        }
        cfg.tol = tol;
    }
    if let Some(mi) = args.max_iter {
        cfg.max_iter = mi;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(q) = &args.quad {
        let (np, na) = split_pair(q, "--quad")?;
        cfg.quad = Some((np as usize, na as usize));
    }
    Ok(cfg)
}

fn write_outputs(
    out_dir: &Path,
    command: &str,
    output: &CommandOutput,
    elapsed_secs: f64,
) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    std::fs::write(out_dir.join("report.json"), output.report.to_json())?;
    if let Some(csv) = &output.csv {
        let name = if command == "balance" { "steps.csv" } else { "series.csv" };
        std::fs::write(out_dir.join(name), csv)?;
    }
    // timing lives outside the report so reports stay byte-reproducible
    let meta = serde_json::json!({
        "command": command,
        "elapsed_seconds": elapsed_secs,
    });
    std::fs::write(out_dir.join("meta.json"), format!("{meta:#}\n"))?;
    Ok(())
}

fn dispatch(command: &Command) -> anyhow::Result<(String, CommonArgs, CommandOutput)> {
    let (name, args) = match command {
        Command::Balance(a) => ("balance", a),
        Command::Weight(a) => ("weight", a),
        Command::Asymptotics(a) => ("asymptotics", a),
        Command::Validate(a) => ("validate", a),
    };
    let cfg = load_config(args)?;
    let output = match command {
        Command::Balance(_) => run_balance(&cfg),
        Command::Weight(_) => run_weight(&cfg),
        Command::Asymptotics(_) => run_asymptotics(&cfg),
        Command::Validate(_) => run_validate(&cfg),
    }
    .map_err(|e| anyhow!("{e}"))?;
    Ok((name.to_string(), args.clone(), output))
}

fn main() -> ExitCode {
    hb_core::init_threads();
    let cli = Cli::parse();
    let start = Instant::now();
    match dispatch(&cli.command) {
        Ok((name, args, output)) => {
            let out_dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
            if let Err(e) = write_outputs(&out_dir, &name, &output, start.elapsed().as_secs_f64())
            {
                eprintln!("error: {e:#}");
                return ExitCode::from(1);
            }
            match &output.report.result {
                hb_core::report::ReportResult::Balance(b) => {
                    eprintln!(
                        "{name}: {:?} after {} steps, residual {:.3e}",
                        b.verdict, b.steps, b.final_residual
                    );
                }
                hb_core::report::ReportResult::Weight(w) => {
                    eprintln!(
                        "{name}: mu = {}/{} ({:?})",
                        w.mu_total.numer(),
                        w.mu_total.denom(),
                        w.classification
                    );
                }
                hb_core::report::ReportResult::Asymptotics(a) => {
                    for c in &a.checks {
                        eprintln!(
                            "{name}: {} {} ({})",
                            if c.passed { "pass" } else { "FAIL" },
                            c.name,
                            c.detail
                        );
                    }
                }
                hb_core::report::ReportResult::Validate(v) => {
                    eprintln!(
                        "{name}: {} violation(s), zero_higgs = {}",
                        v.diagnostics.violations.len(),
                        v.diagnostics.zero_higgs
                    );
                }
            }
            ExitCode::from(output.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

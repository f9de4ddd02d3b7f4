//! `nsac`: run, sweep, contract, converge, verify and describe.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 numerical
//! failure, 3 property failure. `NSAC_THREADS` sets the worker count for
//! parallel sweeps (default: one per logical CPU).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nsac_core::diagnostics::{default_eta, eta_max};
use nsac_core::experiments::{
    contraction_experiment, convergence_study, dissipativity_sweep, initial_state,
    run_simulation, verify_suite, ExperimentReport, Status,
};
use nsac_core::io::{load_config, RunConfig};
use nsac_core::spectral::Grid;
use nsac_core::timestepper::{stability_limit, stable_dt};
use nsac_core::Error;

#[derive(Parser)]
#[command(name = "nsac", version, about = "Navier-Stokes-Allen-Cahn solver with microscopic inertia")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one run, writing diagnostics and snapshots.
    Run(Common),
    /// Absorbing-set sweep over initial-data amplitudes.
    Sweep(Common),
    /// Continuous-dependence experiment.
    Contract(Common),
    /// Temporal, spatial or truncation convergence study.
    Converge(Common),
    /// Invariant suite on a small grid.
    Verify(VerifyArgs),
    /// Print derived quantities without running.
    Describe(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file (TOML).
    config: PathBuf,
    /// Override a key, e.g. `--set kappa=0.2` or `--set grid.n=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Optional configuration file; only its grid dimension is used.
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Grid points per axis.
    #[arg(long, default_value_t = 16)]
    n: usize,
}

enum Failure {
    Usage(String),
    Numerical(String),
    Property,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite { .. } | Error::UnstableStep { .. } => Failure::Numerical(e.to_string()),
            e => Failure::Usage(e.to_string()),
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("NSAC_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Failure::Usage(format!("NSAC_THREADS must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(Failure::Usage("NSAC_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn load(args: &Common) -> Result<RunConfig, Failure> {
    let config = load_config(&args.config, &args.overrides)?;
    for w in &config.warnings {
        eprintln!("warning: {w}");
    }
    Ok(config)
}

fn out_dir(args: &Common, default: &str) -> PathBuf {
    args.out.clone().unwrap_or_else(|| Path::new("out").join(default))
}

fn finish(report: &ExperimentReport, dir: &Path) -> Result<(), Failure> {
    report.write_to(dir).map_err(Failure::from)?;
    print!("{}", report.summary_text());
    match report.status {
        Status::Fail => Err(Failure::Property),
        _ => Ok(()),
    }
}

fn describe(config: &RunConfig) -> Result<(), Failure> {
    let p = &config.params;
    let (state, _, _) = initial_state(config)?;
    println!("grid = {}D, n = {}", config.grid.dim(), config.grid.n());
    println!(
        "kappa = {}, delta = {}, sigma = {}, epsilon = {}",
        p.kappa, p.delta, p.sigma, p.epsilon
    );
    println!("potential_C = {:.16e}", p.potential.offset());
    println!("lambda0 = {:.16e}", p.potential.lambda0());
    println!("growth_p = {}", p.potential.p_growth());
    match stability_limit(&state, p) {
        Some(l) => println!("stability_limit = {l:.6e}"),
        None => println!("stability_limit = none"),
    }
    println!("stable_dt = {:.6e}", stable_dt(&state, p, &config.stepper));
    match (eta_max(p), default_eta(p)) {
        (Some(m), Some(d)) => {
            println!("eta_range = (0, {m:.16e})");
            println!("eta_default = {d:.16e}");
        }
        _ => println!("eta_range = empty (epsilon = 0)"),
    }
    Ok(())
}

fn verify(args: &VerifyArgs) -> Result<(), Failure> {
    let dim = match &args.config {
        Some(path) => load_config(path, &args.overrides)?.grid.dim(),
        None => 2,
    };
    let grid = Grid::new(dim, args.n)?;
    let checks = verify_suite(grid)?;
    let mut all = true;
    for c in &checks {
        all &= c.passed;
        println!(
            "[{}] {} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    if all {
        Ok(())
    } else {
        Err(Failure::Property)
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match &cli.command {
        Command::Run(a) => {
            let config = load(a)?;
            let dir = out_dir(a, "run");
            let out = run_simulation(&config, Some(&dir))?;
            print!("{}", out.report.summary_text());
            Ok(())
        }
        Command::Sweep(a) => {
            let config = load(a)?;
            finish(&dissipativity_sweep(&config)?, &out_dir(a, "sweep"))
        }
        Command::Contract(a) => {
            let config = load(a)?;
            finish(&contraction_experiment(&config)?, &out_dir(a, "contract"))
        }
        Command::Converge(a) => {
            let config = load(a)?;
            finish(&convergence_study(&config)?, &out_dir(a, "converge"))
        }
        Command::Verify(a) => verify(a),
        Command::Describe(a) => describe(&load(a)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Property) => ExitCode::from(3),
    }
}

//! `otto`: quantum Otto cycles on Ising chains from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical validation failure,
//! 3 some sweep cells failed.

mod config;
mod output;
mod run;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use otto_core::cycle::{CycleParams, DenseCycle, Integrator, PreparedCycle};
use otto_core::kspace::KSpaceCycle;
use otto_core::models::{ModelKind, ModelSpec, DEFAULT_MAX_SITES};

use config::{load_config, Engine, RunConfig, Settings, SweepAxis};
use run::Record;

/// Largest allowed relative disagreement between engines, and largest
/// energy change under `dt_max` halving.
const VALIDATION_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "otto", version, about = "Quantum Otto cycles on transverse and longitudinal Ising chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single cycle and print one record.
    Cycle(RunArgs),
    /// Scan E_A over the free-evolution time and report the minimum.
    ScanTauk(RunArgs),
    /// Run a grid over one or two swept variables.
    Sweep(RunArgs),
    /// Cross-check engines, time-step convergence and state invariants.
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    engine: Option<Engine>,
    /// tim or ltim.
    #[arg(long)]
    model: Option<ModelKind>,
    /// Number of spins.
    #[arg(long = "L")]
    sites: Option<usize>,
    /// Ising coupling.
    #[arg(long = "J", allow_negative_numbers = true)]
    coupling: Option<f64>,
    /// Longitudinal field of the ltim model.
    #[arg(long, allow_negative_numbers = true)]
    bz: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    h1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    h2: Option<f64>,
    /// Hot bath temperature.
    #[arg(long = "TH")]
    t_hot: Option<f64>,
    /// Cold bath temperature.
    #[arg(long = "TC")]
    t_cold: Option<f64>,
    /// Expansion ramp duration.
    #[arg(long)]
    tau1: Option<f64>,
    /// Compression ramp duration.
    #[arg(long)]
    tau2: Option<f64>,
    /// Total time spent in contact with the baths.
    #[arg(long)]
    tau_bath: Option<f64>,
    /// Free-evolution time after compression.
    #[arg(long)]
    tau_k: Option<f64>,
    /// Pick tau_k minimizing E_A in each cell.
    #[arg(long)]
    optimize_tau_k: bool,
    /// Upper end of the tau_k search window.
    #[arg(long)]
    tau_k_max: Option<f64>,
    /// Uniform points in the tau_k scan.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Largest ramp time step.
    #[arg(long)]
    dt_max: Option<f64>,
    /// magnus4 or midpoint.
    #[arg(long)]
    integrator: Option<Integrator>,
    /// `variable:start:stop:count` over h2, tau_k, L or tau2; at most twice.
    #[arg(long = "sweep")]
    sweeps: Vec<SweepAxis>,
    /// Rerun at half the time step and fail if energies move by more than 1e-6.
    #[arg(long)]
    check_convergence: bool,
    /// CSV destination; a manifest is written beside it. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, Failure> {
        let mut settings = match &self.config {
            Some(path) => load_config(path).map_err(|e| Failure::Usage(e.to_string()))?,
            None => Settings::default(),
        };
        settings.overlay(Settings {
            engine: self.engine,
            model: self.model,
            sites: self.sites,
            coupling: self.coupling,
            longitudinal: self.bz,
            h1: self.h1,
            h2: self.h2,
            t_hot: self.t_hot,
            t_cold: self.t_cold,
            tau1: self.tau1,
            tau2: self.tau2,
            tau_bath: self.tau_bath,
            tau_k: self.tau_k,
            optimize_tau_k: self.optimize_tau_k.then_some(true),
            dt_max: self.dt_max,
            integrator: self.integrator,
            out: self.out,
            sweeps: self.sweeps,
            grid_points: self.grid_points,
            tau_k_max: self.tau_k_max,
            check_convergence: self.check_convergence.then_some(true),
        });
        RunConfig::build(settings).map_err(|e| Failure::Usage(e.to_string()))
    }
}

enum Failure {
    Usage(String),
    Numerical(String),
    Partial(usize),
    Io(io::Error),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("validation failed: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Partial(n)) => {
            eprintln!("warning: {n} cell(s) failed; see the status column");
            ExitCode::from(3)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Cycle(args) => {
            let cfg = args.into_config()?;
            if !cfg.sweeps.is_empty() {
                return Err(Failure::Usage("cycle takes no --sweep; use the sweep subcommand".into()));
            }
            execute(&cfg, "cycle")
        }
        Command::Sweep(args) => execute(&args.into_config()?, "sweep"),
        Command::ScanTauk(args) => {
            let cfg = args.into_config()?;
            if !cfg.sweeps.is_empty() {
                return Err(Failure::Usage("scan-tauk takes no --sweep".into()));
            }
            preflight(&cfg)?;
            let start = Instant::now();
            let (records, opt) = run::run_scan(&cfg).map_err(Failure::Usage)?;
            eprintln!("tau_k_opt = {}", output::fmt_num(opt));
            emit(&cfg, "scan-tauk", &["tau_k"], &records, start)
        }
        Command::Validate(args) => validate(&args.into_config()?),
    }
}

fn preflight(cfg: &RunConfig) -> Result<(), Failure> {
    if !cfg.check_convergence {
        return Ok(());
    }
    let change = run::convergence(cfg).map_err(Failure::Usage)?;
    if change > VALIDATION_TOL {
        return Err(Failure::Numerical(format!(
            "halving dt_max = {} moves energies by {change:.3e} (> {VALIDATION_TOL:e})",
            cfg.params.dt_max
        )));
    }
    Ok(())
}

fn execute(cfg: &RunConfig, command: &str) -> Result<(), Failure> {
    preflight(cfg)?;
    let start = Instant::now();
    let records = run::run_sweep(cfg);
    let names: Vec<&str> = cfg.sweeps.iter().map(|a| a.var.column()).collect();
    emit(cfg, command, &names, &records, start)?;
    let failed = records.iter().filter(|r| r.outcome.is_err()).count();
    match (failed, records.len()) {
        (0, _) => Ok(()),
        // A lone cell that fails is a plain error, not a partial sweep.
        (_, 1) => Err(Failure::Usage(records[0].outcome.clone().unwrap_err())),
        (n, _) => Err(Failure::Partial(n)),
    }
}

fn emit(cfg: &RunConfig, command: &str, names: &[&str], records: &[Record], start: Instant) -> Result<(), Failure> {
    match &cfg.out {
        Some(path) => {
            output::write_csv(BufWriter::new(File::create(path)?), names, records, cfg)?;
            let manifest = output::Manifest::new(command, cfg, records, start.elapsed().as_secs_f64());
            let json = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
            std::fs::write(output::manifest_path(path), json + "\n")?;
        }
        None => output::write_csv(io::stdout().lock(), names, records, cfg)?,
    }
    Ok(())
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Dense and momentum engines on the same transverse chain. Configurations
/// outside their common ground fall back to a four-spin chain.
fn cross_engine(cfg: &RunConfig) -> Result<(String, f64), String> {
    let eligible = cfg.spec.kind == ModelKind::Tim && cfg.spec.sites % 2 == 0 && cfg.spec.sites <= DEFAULT_MAX_SITES;
    let spec = if eligible { cfg.spec } else { ModelSpec::tim(4).with_coupling(cfg.spec.coupling) };
    let params = CycleParams {
        t_cold: cfg.params.t_cold.max(0.0),
        ..cfg.params
    };
    let fail = |e: otto_core::Error| e.to_string();
    let dense = DenseCycle::prepare(&spec, &params).map_err(fail)?.finish(params.tau_k).map_err(fail)?;
    let ks = KSpaceCycle::prepare(spec.sites, spec.coupling, &params)
        .map_err(fail)?
        .finish(params.tau_k)
        .map_err(fail)?;
    let mut worst = [
        rel_diff(dense.work, ks.work),
        rel_diff(dense.q_in, ks.q_in),
        rel_diff(dense.q_out, ks.q_out),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if let (Some(a), Some(b)) = (dense.efficiency, ks.efficiency) {
        worst = worst.max(rel_diff(a, b));
    }
    Ok((format!("tim L={}", spec.sites), worst))
}

fn validate(cfg: &RunConfig) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    let mut failures = Vec::new();
    let mut line = |ok: bool, name: &str, detail: String| -> io::Result<()> {
        if !ok {
            failures.push(name.to_string());
        }
        writeln!(out, "{} {name}: {detail}", if ok { "PASS" } else { "FAIL" })
    };

    match cross_engine(cfg) {
        Ok((label, d)) => line(d <= VALIDATION_TOL, "cross-engine", format!("{label}, max rel diff {d:.3e}"))?,
        Err(e) => line(false, "cross-engine", e)?,
    }
    match run::convergence(cfg) {
        Ok(d) => line(d <= VALIDATION_TOL, "convergence", format!("dt_max halving moves energies by {d:.3e}"))?,
        Err(e) => line(false, "convergence", e)?,
    }
    match run::run_cell(cfg, &cfg.spec, &cfg.params) {
        Ok(o) => line(
            o.result.respects_carnot(cfg.params.t_hot, cfg.params.t_cold),
            "carnot",
            format!(
                "engine={} eta={}",
                o.result.is_engine,
                o.result.efficiency.map(output::fmt_num).unwrap_or_else(|| "none".into())
            ),
        )?,
        Err(e) => line(false, "carnot", e)?,
    }
    if cfg.spec.sites <= DEFAULT_MAX_SITES {
        let state = DenseCycle::prepare(&cfg.spec, &cfg.params).and_then(|c| c.density_at_a(cfg.params.tau_k));
        match state.and_then(|rho| rho.check_invariants()) {
            Ok(()) => line(true, "invariants", "state at A is Hermitian, unit trace, positive".into())?,
            Err(e) => line(false, "invariants", e.to_string())?,
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(failures.join(", ")))
    }
}

//! Dispatch a configuration onto an engine, cell by cell.

use otto_core::analytics::{default_window, optimize_tau_k, TwoSpinCycle};
use otto_core::cycle::{run_cycle_statevector, CycleParams, CycleResult, DenseCycle, PreparedCycle};
use otto_core::kspace::KSpaceCycle;
use otto_core::models::ModelSpec;
use rayon::prelude::*;

use crate::config::{check_cell, Engine, RunConfig, SweepVar};

#[derive(Clone, Debug)]
pub struct Record {
    /// Values of the swept variables, in axis order.
    pub coords: Vec<f64>,
    pub outcome: Result<Outcome, String>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub result: CycleResult,
    pub tau_k_opt: Option<f64>,
}

fn prepare(engine: Engine, spec: &ModelSpec, params: &CycleParams) -> otto_core::Result<Box<dyn PreparedCycle>> {
    Ok(match engine {
        Engine::Dense | Engine::Statevector => Box::new(DenseCycle::prepare(spec, params)?),
        Engine::Kspace => Box::new(KSpaceCycle::prepare(spec.sites, spec.coupling, params)?),
        Engine::Analytic2spin => Box::new(TwoSpinCycle::prepare(spec.coupling, params)?),
    })
}

pub fn window(cfg: &RunConfig, spec: &ModelSpec) -> f64 {
    cfg.tau_k_max.unwrap_or_else(|| default_window(spec))
}

/// One cycle. The statevector engine locates the optimum on the ensemble
/// engine, which gives identical energies, then propagates the pure state.
pub fn run_cell(cfg: &RunConfig, spec: &ModelSpec, params: &CycleParams) -> Result<Outcome, String> {
    check_cell(cfg.engine, spec, params)?;
    let fail = |e: otto_core::Error| e.to_string();
    if cfg.engine == Engine::Statevector && !cfg.optimize_tau_k {
        let result = run_cycle_statevector(spec, params).map_err(fail)?;
        return Ok(Outcome { result, tau_k_opt: None });
    }
    let prepared = prepare(cfg.engine, spec, params).map_err(fail)?;
    let tau_k_opt = if cfg.optimize_tau_k {
        Some(optimize_tau_k(&*prepared, window(cfg, spec), cfg.grid_points).map_err(fail)?.tau_k_opt)
    } else {
        None
    };
    let tau_k = tau_k_opt.unwrap_or(params.tau_k);
    let result = if cfg.engine == Engine::Statevector {
        run_cycle_statevector(spec, &CycleParams { tau_k, ..*params }).map_err(fail)?
    } else {
        prepared.finish(tau_k).map_err(fail)?
    };
    Ok(Outcome { result, tau_k_opt })
}

fn apply(spec: &mut ModelSpec, params: &mut CycleParams, var: SweepVar, value: f64) {
    match var {
        SweepVar::H2 => params.h2 = value,
        SweepVar::TauK => params.tau_k = value,
        SweepVar::L => spec.sites = value.round() as usize,
        SweepVar::Tau2 => params.tau2 = value,
    }
}

/// Cartesian product of the sweep axes, first axis slowest.
pub fn grid(cfg: &RunConfig) -> Vec<Vec<f64>> {
    cfg.sweeps.iter().fold(vec![Vec::new()], |acc, axis| {
        let values = axis.values();
        acc.into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect()
    })
}

pub fn cell_inputs(cfg: &RunConfig, coords: &[f64]) -> (ModelSpec, CycleParams) {
    let (mut spec, mut params) = (cfg.spec, cfg.params);
    for (axis, &v) in cfg.sweeps.iter().zip(coords) {
        apply(&mut spec, &mut params, axis.var, v);
    }
    (spec, params)
}

/// Every grid cell, in parallel; records come back in grid order.
pub fn run_sweep(cfg: &RunConfig) -> Vec<Record> {
    grid(cfg)
        .into_par_iter()
        .map(|coords| {
            let (spec, params) = cell_inputs(cfg, &coords);
            let outcome = run_cell(cfg, &spec, &params);
            Record { coords, outcome }
        })
        .collect()
}

/// `E_A` on a uniform free-evolution grid, as full cycle records keyed by
/// `tau_k`, plus the refined optimum.
pub fn run_scan(cfg: &RunConfig) -> Result<(Vec<Record>, f64), String> {
    check_cell(cfg.engine, &cfg.spec, &cfg.params)?;
    let fail = |e: otto_core::Error| e.to_string();
    let prepared = prepare(cfg.engine, &cfg.spec, &cfg.params).map_err(fail)?;
    let opt = optimize_tau_k(&*prepared, window(cfg, &cfg.spec), cfg.grid_points).map_err(fail)?;
    let records = opt
        .scan
        .iter()
        .map(|&(tau_k, e_a)| Record {
            coords: vec![tau_k],
            outcome: Ok(Outcome {
                result: CycleResult::assemble(prepared.stages(), e_a, tau_k, prepared.cycle_time(tau_k)),
                tau_k_opt: Some(opt.tau_k_opt),
            }),
        })
        .collect();
    Ok((records, opt.tau_k_opt))
}

/// Largest change in the five stage energies when `dt_max` is halved.
pub fn convergence(cfg: &RunConfig) -> Result<f64, String> {
    let coarse = run_cell(cfg, &cfg.spec, &cfg.params)?.result;
    let fine_params = CycleParams {
        dt_max: cfg.params.dt_max / 2.0,
        tau_k: coarse.tau_k,
        ..cfg.params
    };
    let fine_cfg = RunConfig {
        optimize_tau_k: false,
        ..cfg.clone()
    };
    let fine = run_cell(&fine_cfg, &cfg.spec, &fine_params)?.result;
    Ok([
        (coarse.e_a, fine.e_a),
        (coarse.e_aprime, fine.e_aprime),
        (coarse.e_b, fine.e_b),
        (coarse.e_c, fine.e_c),
        (coarse.e_d, fine.e_d),
    ]
    .iter()
    .map(|(a, b)| (a - b).abs())
    .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_config, RunConfig};

    fn cfg(text: &str) -> RunConfig {
        RunConfig::build(parse_config(text).unwrap()).unwrap()
    }

    #[test]
    fn grid_order_is_row_major() {
        let c = cfg("sweep = h2:0.1:0.2:2\nsweep = L:2:6:3");
        let g = grid(&c);
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], vec![0.1, 2.0]);
        assert_eq!(g[1], vec![0.1, 4.0]);
        assert_eq!(g[3], vec![0.2, 2.0]);
        let (spec, params) = cell_inputs(&c, &g[4]);
        assert_eq!(spec.sites, 4);
        assert_eq!(params.h2, 0.2);
    }

    #[test]
    fn no_axes_gives_one_cell() {
        assert_eq!(grid(&cfg("")), vec![Vec::<f64>::new()]);
    }

    #[test]
    fn engines_agree_on_the_transverse_chain() {
        let dense = cfg("L = 4\ntau_k = 0.3");
        let ks = cfg("L = 4\ntau_k = 0.3\nengine = kspace");
        let a = run_cell(&dense, &dense.spec, &dense.params).unwrap().result;
        let b = run_cell(&ks, &ks.spec, &ks.params).unwrap().result;
        assert!((a.work - b.work).abs() < 1e-9 * a.work.abs().max(1.0));
    }

    #[test]
    fn bad_cells_are_flagged_not_fatal() {
        let c = cfg("engine = kspace\nsweep = L:2:4:3");
        let recs = run_sweep(&c);
        assert_eq!(recs.len(), 3);
        assert!(recs[0].outcome.is_ok());
        assert!(recs[1].outcome.as_ref().unwrap_err().contains("even"));
        assert!(recs[2].outcome.is_ok());
    }

    #[test]
    fn statevector_matches_dense_at_zero_temperature() {
        let d = cfg("L = 4\nTC = 0\noptimize_tau_k = true");
        let s = cfg("L = 4\nTC = 0\noptimize_tau_k = true\nengine = statevector");
        let a = run_cell(&d, &d.spec, &d.params).unwrap();
        let b = run_cell(&s, &s.spec, &s.params).unwrap();
        assert_eq!(a.tau_k_opt, b.tau_k_opt);
        assert!((a.result.e_a - b.result.e_a).abs() < 1e-9);
    }
}

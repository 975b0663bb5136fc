//! CSV records and the run manifest.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::run::Record;

pub const SCHEMA_VERSION: u32 = 1;

const COLUMNS: [&str; 17] = [
    "E_A", "E_Aprime", "E_B", "E_C", "E_D", "Q_in", "Q_out", "W", "abs_W", "eta", "P", "abs_P", "tau_k", "tau_k_opt",
    "tau_total", "is_engine", "status",
];

/// Twelve significant digits, `%g` style: fixed notation for moderate
/// exponents, scientific otherwise, trailing zeros dropped.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..12).contains(&exp) {
        trim(&format!("{x:.*}", (11 - exp).max(0) as usize))
    } else {
        format!("{}e{exp}", trim(mantissa))
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

pub fn header(var_names: &[&str]) -> Vec<String> {
    var_names.iter().copied().chain(COLUMNS).map(String::from).collect()
}

fn row(rec: &Record, tau_k_fallback: f64) -> Vec<String> {
    let mut cells: Vec<String> = rec.coords.iter().map(|&v| fmt_num(v)).collect();
    match &rec.outcome {
        Ok(o) => {
            let r = &o.result;
            cells.extend(
                [r.e_a, r.e_aprime, r.e_b, r.e_c, r.e_d, r.q_in, r.q_out, r.work, r.work.abs()]
                    .into_iter()
                    .map(fmt_num),
            );
            cells.push(opt(r.efficiency));
            cells.push(opt(r.power));
            cells.push(opt(r.power.map(f64::abs)));
            cells.push(fmt_num(r.tau_k));
            cells.push(opt(o.tau_k_opt));
            cells.push(fmt_num(r.tau_total));
            cells.push(r.is_engine.to_string());
            cells.push("ok".into());
        }
        Err(msg) => {
            cells.extend(std::iter::repeat(String::new()).take(12));
            cells.push(fmt_num(tau_k_fallback));
            cells.extend([String::new(), String::new(), String::new()]);
            cells.push(format!("error: {msg}"));
        }
    }
    cells
}

pub fn write_csv<W: Write>(w: W, var_names: &[&str], records: &[Record], cfg: &RunConfig) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(header(var_names))?;
    for rec in records {
        let tau_k = crate::run::cell_inputs(cfg, &rec.coords).1.tau_k;
        w.write_record(row(rec, tau_k))?;
    }
    w.flush()
}

#[derive(Serialize)]
pub struct FailedCell {
    pub index: usize,
    pub coords: Vec<f64>,
    pub error: String,
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub schema_version: u32,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub integrator: String,
    pub dt_max: f64,
    pub threads: usize,
    pub records: usize,
    pub failed: Vec<FailedCell>,
    pub wall_time_s: f64,
    pub finished_unix_s: u64,
}

impl<'a> Manifest<'a> {
    pub fn new(command: &'a str, config: &'a RunConfig, records: &[Record], wall_time_s: f64) -> Self {
        let failed = records
            .iter()
            .enumerate()
            .filter_map(|(index, r)| {
                r.outcome.as_ref().err().map(|e| FailedCell {
                    index,
                    coords: r.coords.clone(),
                    error: e.clone(),
                })
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME"),
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            integrator: config.params.integrator.to_string(),
            dt_max: config.params.dt_max,
            threads: rayon::current_num_threads(),
            records: records.len(),
            failed,
            wall_time_s,
            finished_unix_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

/// `results.csv` gets `results.manifest.json` beside it.
pub fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

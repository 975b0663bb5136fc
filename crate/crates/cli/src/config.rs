//! Run configuration: defaults, a flat `key = value` file, and flag
//! overrides, merged in that order.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use otto_core::cycle::{CycleParams, Integrator};
use otto_core::kspace::MAX_KSPACE_SITES;
use otto_core::models::{ModelKind, ModelSpec, DEFAULT_MAX_SITES};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Exact real-space density evolution in momentum blocks.
    Dense,
    /// Pure-state propagation from a zero-temperature cold bath.
    Statevector,
    /// Free-fermion modes; transverse model with even L only.
    Kspace,
    /// Closed-form quasi-static two-spin cycle.
    #[value(name = "analytic2spin")]
    Analytic2spin,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    H2,
    TauK,
    L,
    Tau2,
}

impl SweepVar {
    pub fn column(self) -> &'static str {
        match self {
            SweepVar::H2 => "h2",
            SweepVar::TauK => "tau_k",
            SweepVar::L => "L",
            SweepVar::Tau2 => "tau2",
        }
    }
}

/// `variable:start:stop:count`, linearly spaced and inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepAxis {
    pub var: SweepVar,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl SweepAxis {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.start + i as f64 * step).collect()
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let [var, start, stop, count] = parts[..] else {
            return Err(format!("sweep '{s}' must look like variable:start:stop:count"));
        };
        let var = match var {
            "h2" => SweepVar::H2,
            "tau_k" | "tau-k" => SweepVar::TauK,
            "L" | "l" => SweepVar::L,
            "tau2" => SweepVar::Tau2,
            other => return Err(format!("cannot sweep '{other}' (choose h2, tau_k, L or tau2)")),
        };
        let num = |v: &str| v.parse::<f64>().map_err(|_| format!("sweep bound '{v}' is not a number"));
        let (start, stop) = (num(start)?, num(stop)?);
        if !start.is_finite() || !stop.is_finite() {
            return Err("sweep bounds must be finite".into());
        }
        let count: usize = count.parse().map_err(|_| format!("sweep count '{count}' is not a whole number"))?;
        if count == 0 {
            return Err("sweep count must be at least 1".into());
        }
        Ok(SweepAxis { var, start, stop, count })
    }
}

/// Every setting that a file or a flag may supply.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    pub engine: Option<Engine>,
    pub model: Option<ModelKind>,
    pub sites: Option<usize>,
    pub coupling: Option<f64>,
    pub longitudinal: Option<f64>,
    pub h1: Option<f64>,
    pub h2: Option<f64>,
    pub t_hot: Option<f64>,
    pub t_cold: Option<f64>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub tau_bath: Option<f64>,
    pub tau_k: Option<f64>,
    pub optimize_tau_k: Option<bool>,
    pub dt_max: Option<f64>,
    pub integrator: Option<Integrator>,
    pub out: Option<PathBuf>,
    pub sweeps: Vec<SweepAxis>,
    pub grid_points: Option<usize>,
    pub tau_k_max: Option<f64>,
    pub check_convergence: Option<bool>,
}

impl Settings {
    /// Fields set in `other` win; sweeps are replaced wholesale when given.
    pub fn overlay(&mut self, other: Settings) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            engine, model, sites, coupling, longitudinal, h1, h2, t_hot, t_cold, tau1, tau2, tau_bath, tau_k,
            optimize_tau_k, dt_max, integrator, out, grid_points, tau_k_max, check_convergence
        );
        if !other.sweeps.is_empty() {
            self.sweeps = other.sweeps;
        }
    }
}

#[derive(Debug, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn new(message: impl Into<String>) -> Self {
        Self {
            line: None,
            key: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "key '{key}': ")?;
        }
        f.write_str(&self.message)
    }
}

fn parse_value<T: FromStr>(value: &str, what: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("expected {what}, got '{value}'"))
}

fn parse_bool(value: &str) -> Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(format!("expected true or false, got '{value}'")),
    }
}

fn set_key(s: &mut Settings, key: &str, value: &str) -> Result<(), String> {
    let num = |v: &str| parse_value::<f64>(v, "a number");
    match key {
        "engine" => s.engine = Some(Engine::from_str(value, true)?),
        "model" => s.model = Some(value.parse().map_err(|e: otto_core::Error| e.to_string())?),
        "l" | "sites" => s.sites = Some(parse_value(value, "a whole number")?),
        "j" | "coupling" => s.coupling = Some(num(value)?),
        "bz" | "b_z" | "longitudinal" => s.longitudinal = Some(num(value)?),
        "h1" => s.h1 = Some(num(value)?),
        "h2" => s.h2 = Some(num(value)?),
        "th" | "t_hot" => s.t_hot = Some(num(value)?),
        "tc" | "t_cold" => s.t_cold = Some(num(value)?),
        "tau1" => s.tau1 = Some(num(value)?),
        "tau2" => s.tau2 = Some(num(value)?),
        "tau_bath" => s.tau_bath = Some(num(value)?),
        "tau_k" => s.tau_k = Some(num(value)?),
        "optimize_tau_k" => s.optimize_tau_k = Some(parse_bool(value)?),
        "dt_max" => s.dt_max = Some(num(value)?),
        "integrator" => s.integrator = Some(value.parse().map_err(|e: otto_core::Error| e.to_string())?),
        "out" => s.out = Some(PathBuf::from(value)),
        "sweep" => s.sweeps.push(value.parse()?),
        "grid_points" => s.grid_points = Some(parse_value(value, "a whole number")?),
        "tau_k_max" => s.tau_k_max = Some(num(value)?),
        "check_convergence" => s.check_convergence = Some(parse_bool(value)?),
        _ => return Err("unknown key".into()),
    }
    Ok(())
}

/// Parse `key = value` lines; `#` starts a comment. Keys are case- and
/// dash-insensitive. Only `sweep` may repeat.
pub fn parse_config(text: &str) -> Result<Settings, ConfigError> {
    let mut settings = Settings::default();
    let mut seen = std::collections::HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |key: Option<&str>, message: String| ConfigError {
            line: Some(idx + 1),
            key: key.map(str::to_string),
            message,
        };
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(None, format!("expected 'key = value', got '{line}'")));
        };
        let (key, value) = (key.trim(), value.trim());
        let norm = key.to_ascii_lowercase().replace('-', "_");
        if norm != "sweep" && !seen.insert(norm.clone()) {
            return Err(err(Some(key), "set more than once".into()));
        }
        set_key(&mut settings, &norm, value).map_err(|m| err(Some(key), m))?;
    }
    Ok(settings)
}

pub fn load_config(path: &Path) -> Result<Settings, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(format!("cannot read config '{}': {e}", path.display())))?;
    parse_config(&text).map_err(|mut e| {
        e.message = format!("{} ({})", e.message, path.display());
        e
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub engine: Engine,
    pub spec: ModelSpec,
    pub params: CycleParams,
    pub sweeps: Vec<SweepAxis>,
    pub optimize_tau_k: bool,
    /// Upper end of the free-evolution scan; one period of `E_A` by default.
    pub tau_k_max: Option<f64>,
    pub grid_points: usize,
    pub check_convergence: bool,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    /// Merge onto the headline defaults (`h1 = 10`, `h2 = 0.2`, `T_H = 100`,
    /// `T_C = 0.001`, `tau1 = tau2 = 0.1`, `tau_bath = 0.2`, `J = 1`).
    pub fn build(s: Settings) -> Result<Self, ConfigError> {
        let d = CycleParams::default();
        let kind = s.model.unwrap_or(ModelKind::Tim);
        let spec = ModelSpec {
            kind,
            sites: s.sites.unwrap_or(4),
            coupling: s.coupling.unwrap_or(1.0),
            longitudinal: s.longitudinal.unwrap_or(if kind == ModelKind::Ltim { 1.0 } else { 0.0 }),
        };
        let params = CycleParams {
            h1: s.h1.unwrap_or(d.h1),
            h2: s.h2.unwrap_or(d.h2),
            t_hot: s.t_hot.unwrap_or(d.t_hot),
            t_cold: s.t_cold.unwrap_or(d.t_cold),
            tau1: s.tau1.unwrap_or(d.tau1),
            tau2: s.tau2.unwrap_or(d.tau2),
            tau_bath: s.tau_bath.unwrap_or(d.tau_bath),
            tau_k: s.tau_k.unwrap_or(d.tau_k),
            dt_max: s.dt_max.unwrap_or(d.dt_max),
            integrator: s.integrator.unwrap_or(d.integrator),
        };
        let cfg = RunConfig {
            engine: s.engine.unwrap_or(Engine::Dense),
            spec,
            params,
            sweeps: s.sweeps,
            optimize_tau_k: s.optimize_tau_k.unwrap_or(false),
            tau_k_max: s.tau_k_max,
            grid_points: s.grid_points.unwrap_or(otto_core::analytics::DEFAULT_GRID_POINTS),
            check_convergence: s.check_convergence.unwrap_or(false),
            out: s.out,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.sweeps.len() > 2 {
            return Err(ConfigError::new(format!("at most two sweep axes, got {}", self.sweeps.len())));
        }
        if self.sweeps.len() == 2 && self.sweeps[0].var == self.sweeps[1].var {
            return Err(ConfigError::new(format!("'{}' swept twice", self.sweeps[0].var.column())));
        }
        for axis in &self.sweeps {
            if axis.var == SweepVar::L && axis.values().iter().any(|v| v.fract() != 0.0 || *v < 2.0) {
                return Err(ConfigError::new("L sweep must produce whole numbers >= 2"));
            }
            if axis.var == SweepVar::TauK && self.optimize_tau_k {
                return Err(ConfigError::new("cannot sweep tau_k while optimizing it"));
            }
        }
        if let Some(w) = self.tau_k_max {
            if !(w > 0.0 && w.is_finite()) {
                return Err(ConfigError::new(format!("tau_k_max must be positive, got {w}")));
            }
        }
        if self.grid_points < otto_core::analytics::MIN_GRID_POINTS {
            return Err(ConfigError::new(format!(
                "grid_points must be at least {}",
                otto_core::analytics::MIN_GRID_POINTS
            )));
        }
        check_cell(self.engine, &self.spec, &self.params).map_err(ConfigError::new)
    }
}

/// Engine, model and parameter compatibility for one grid cell.
pub fn check_cell(engine: Engine, spec: &ModelSpec, params: &CycleParams) -> Result<(), String> {
    let cap = if engine == Engine::Kspace { MAX_KSPACE_SITES } else { DEFAULT_MAX_SITES };
    spec.validate_with_cap(cap).map_err(|e| e.to_string())?;
    params.validate().map_err(|e| e.to_string())?;
    match engine {
        Engine::Kspace if spec.kind != ModelKind::Tim => {
            Err("engine kspace supports only the tim model".into())
        }
        Engine::Kspace if spec.sites % 2 != 0 => Err(format!("engine kspace needs even L, got {}", spec.sites)),
        Engine::Analytic2spin if spec.kind != ModelKind::Tim || spec.sites != 2 => {
            Err("engine analytic2spin needs model tim with L = 2".into())
        }
        Engine::Statevector if params.t_cold != 0.0 => {
            Err(format!("engine statevector needs TC = 0, got {}", params.t_cold))
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_headline_defaults() {
        let cfg = RunConfig::build(parse_config("").unwrap()).unwrap();
        assert_eq!(cfg.params, CycleParams::default());
        assert_eq!(cfg.spec.coupling, 1.0);
        assert_eq!(cfg.engine, Engine::Dense);
        assert!(cfg.sweeps.is_empty());
    }

    #[test]
    fn file_keys_and_comments() {
        let s = parse_config(
            "# headline run\nengine = kspace\nL = 50\nTH = 90 # hot\ntau-k = 0.3\nsweep = h2:0.1:2.0:20\n\n",
        )
        .unwrap();
        let cfg = RunConfig::build(s).unwrap();
        assert_eq!(cfg.engine, Engine::Kspace);
        assert_eq!(cfg.spec.sites, 50);
        assert_eq!(cfg.params.t_hot, 90.0);
        assert_eq!(cfg.params.tau_k, 0.3);
        assert_eq!(cfg.sweeps[0].values().len(), 20);
    }

    #[test]
    fn diagnostics_name_line_and_key() {
        let e = parse_config("h1 = 10\nh2 = abc\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert_eq!(e.key.as_deref(), Some("h2"));
        assert!(e.to_string().contains("line 2"));
        let e = parse_config("colour = red").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("colour"));
        assert!(parse_config("h1 = 1\nh1 = 2").is_err());
        assert!(parse_config("just words").is_err());
    }

    #[test]
    fn flags_override_file() {
        let mut s = parse_config("h2 = 0.5\nsweep = h2:0.1:0.2:2").unwrap();
        s.overlay(Settings {
            h2: Some(0.3),
            sweeps: vec!["L:2:4:2".parse().unwrap()],
            ..Settings::default()
        });
        let cfg = RunConfig::build(s).unwrap();
        assert_eq!(cfg.params.h2, 0.3);
        assert_eq!(cfg.sweeps.len(), 1);
        assert_eq!(cfg.sweeps[0].var, SweepVar::L);
    }

    #[test]
    fn incompatible_engines_rejected() {
        let s = parse_config("engine = kspace\nmodel = ltim").unwrap();
        assert!(RunConfig::build(s).unwrap_err().message.contains("kspace"));
        let s = parse_config("engine = analytic2spin\nL = 4").unwrap();
        assert!(RunConfig::build(s).is_err());
        let s = parse_config("engine = statevector").unwrap();
        assert!(RunConfig::build(s).is_err());
        let s = parse_config("engine = statevector\nTC = 0").unwrap();
        assert!(RunConfig::build(s).is_ok());
    }

    #[test]
    fn sweep_axis_parsing() {
        let a: SweepAxis = "h2:0.1:2.0:20".parse().unwrap();
        let v = a.values();
        assert_eq!(v.len(), 20);
        assert_eq!(v[0], 0.1);
        assert!((v[19] - 2.0).abs() < 1e-12);
        assert_eq!("tau2:1:5:1".parse::<SweepAxis>().unwrap().values(), vec![1.0]);
        assert!("h3:0:1:2".parse::<SweepAxis>().is_err());
        assert!("h2:0:1:0".parse::<SweepAxis>().is_err());
        assert!("h2:0:1".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn sweep_limits() {
        let s = parse_config("sweep = h2:0:1:2\nsweep = L:2:4:2\nsweep = tau2:0.1:1:2").unwrap();
        assert!(RunConfig::build(s).is_err());
        let s = parse_config("sweep = L:2:3:3").unwrap();
        assert!(RunConfig::build(s).is_err());
        let s = parse_config("sweep = tau_k:0:1:3\noptimize_tau_k = true").unwrap();
        assert!(RunConfig::build(s).is_err());
    }
}

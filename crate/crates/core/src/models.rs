//! Periodic Ising chains in a transverse field, written as
//! `H(h) = H0 + h * H1` in the `sigma^z` product basis.
//!
//! Spin `n` is bit `n` of the basis index, bit value 0 meaning spin up
//! (`sigma^z = +1`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{FieldOperator, HermitianOperator, SparseOperator, C64};

/// Sites allowed unless a caller raises the cap explicitly.
pub const DEFAULT_MAX_SITES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// `H0 = -J sum z_n z_{n+1}`.
    Tim,
    /// `H0 = +J sum z_n z_{n+1} - B sum z_n`.
    Ltim,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tim" => Ok(ModelKind::Tim),
            "ltim" => Ok(ModelKind::Ltim),
            other => Err(Error::InvalidModel(format!("unknown model '{other}' (expected tim or ltim)"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Tim => "tim",
            ModelKind::Ltim => "ltim",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub sites: usize,
    /// `J`.
    pub coupling: f64,
    /// `B_z`; ignored by the plain transverse model.
    pub longitudinal: f64,
}

impl ModelSpec {
    pub fn tim(sites: usize) -> Self {
        Self {
            kind: ModelKind::Tim,
            sites,
            coupling: 1.0,
            longitudinal: 0.0,
        }
    }

    pub fn ltim(sites: usize, longitudinal: f64) -> Self {
        Self {
            kind: ModelKind::Ltim,
            sites,
            coupling: 1.0,
            longitudinal,
        }
    }

    pub fn with_coupling(mut self, coupling: f64) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with_cap(DEFAULT_MAX_SITES)
    }

    pub fn validate_with_cap(&self, max_sites: usize) -> Result<()> {
        if self.sites < 2 {
            return Err(Error::InvalidModel(format!("need at least 2 sites, got {}", self.sites)));
        }
        if self.sites > max_sites {
            return Err(Error::InvalidModel(format!(
                "{} sites exceeds the cap of {max_sites}",
                self.sites
            )));
        }
        if !self.coupling.is_finite() || self.coupling == 0.0 {
            return Err(Error::InvalidModel(format!("coupling J must be finite and nonzero, got {}", self.coupling)));
        }
        if !self.longitudinal.is_finite() {
            return Err(Error::InvalidModel("longitudinal field must be finite".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1usize << self.sites
    }

    /// `<s|H0|s>` for every basis state.
    pub fn diagonal_energies(&self) -> Vec<f64> {
        let l = self.sites;
        (0..self.dim())
            .map(|s| {
                let z = |n: usize| if (s >> (n % l)) & 1 == 0 { 1.0 } else { -1.0 };
                let bonds: f64 = (0..l).map(|n| z(n) * z(n + 1)).sum();
                match self.kind {
                    ModelKind::Tim => -self.coupling * bonds,
                    ModelKind::Ltim => {
                        let mz: f64 = (0..l).map(z).sum();
                        self.coupling * bonds - self.longitudinal * mz
                    }
                }
            })
            .collect()
    }

    /// `H1 = -sum_n sigma^x_n`.
    pub fn transverse_coupling(&self) -> SparseOperator {
        let l = self.sites;
        let trip = (0..self.dim())
            .flat_map(|s| (0..l).map(move |n| (s, s ^ (1 << n), C64::new(-1.0, 0.0))))
            .collect();
        SparseOperator::from_triplets(self.dim(), trip).expect("indices in range")
    }

    pub fn sparse_split(&self) -> Result<SparseSplit> {
        self.validate()?;
        Ok(SparseSplit {
            h0: self.diagonal_energies(),
            h1: self.transverse_coupling(),
        })
    }

    /// Dense `H0` and `H1`.
    pub fn build_split(&self) -> Result<SplitHamiltonian> {
        let sparse = self.sparse_split()?;
        Ok(SplitHamiltonian {
            h0: HermitianOperator::from_diagonal(&sparse.h0),
            h1: HermitianOperator::from_matrix_unchecked(sparse.h1.to_dense()),
        })
    }

    pub fn hamiltonian(&self, field: f64) -> Result<HermitianOperator> {
        Ok(self.build_split()?.at(field))
    }
}

/// Diagonal `H0` plus sparse `H1`.
#[derive(Clone, Debug)]
pub struct SparseSplit {
    pub h0: Vec<f64>,
    pub h1: SparseOperator,
}

impl SparseSplit {
    pub fn dim(&self) -> usize {
        self.h0.len()
    }

    pub fn at(&self, field: f64) -> FieldOperator<'_> {
        FieldOperator {
            diag: &self.h0,
            coupling: &self.h1,
            field,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SplitHamiltonian {
    pub h0: HermitianOperator,
    pub h1: HermitianOperator,
}

impl SplitHamiltonian {
    pub fn at(&self, field: f64) -> HermitianOperator {
        self.h0.add_scaled(&self.h1, field).expect("same dimension")
    }
}

/// Linear field ramp `h(t) = start + (end - start) t / duration`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RampProtocol {
    pub start: f64,
    pub end: f64,
    pub duration: f64,
}

impl RampProtocol {
    pub fn new(start: f64, end: f64, duration: f64) -> Result<Self> {
        if !start.is_finite() || !end.is_finite() {
            return Err(Error::InvalidProtocol("ramp endpoints must be finite".into()));
        }
        if !duration.is_finite() || duration < 0.0 {
            return Err(Error::InvalidProtocol(format!("ramp duration must be >= 0, got {duration}")));
        }
        Ok(Self { start, end, duration })
    }

    pub fn field_at(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.duration) {
            return Err(Error::domain("t", format!("{t} outside [0, {}]", self.duration)));
        }
        if self.duration == 0.0 {
            return Ok(self.start);
        }
        Ok(self.start + (self.end - self.start) * (t / self.duration))
    }
}

/// Basis index after moving every spin one site to the right.
pub fn cyclic_shift(state: usize, sites: usize) -> usize {
    let mask = (1usize << sites) - 1;
    ((state << 1) | (state >> (sites - 1))) & mask
}

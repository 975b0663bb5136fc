//! Block decomposition of a translation-invariant split Hamiltonian into
//! lattice-momentum sectors.
//!
//! Sector `m` (momentum `k = 2 pi m / L`) is spanned by
//! `|r, k> = R^{-1/2} sum_{j<R} e^{-ikj} T^j |r>`, one state per
//! representative `r` (smallest index in its translation orbit) whose orbit
//! period `R` satisfies `m R = 0 mod L`. `H0` stays diagonal in this basis.

use crate::error::{Error, Result};
use crate::linalg::{FieldOperator, HermitianOperator, SparseOperator, C64, ZERO};
use crate::models::{cyclic_shift, SparseSplit};

#[derive(Clone, Debug)]
enum Basis {
    /// The block is the full product basis.
    Full,
    Momentum {
        sites: usize,
        momentum: usize,
        reps: Vec<usize>,
        periods: Vec<usize>,
    },
}

/// One symmetry block: diagonal `H0` and sparse `H1`.
#[derive(Clone, Debug)]
pub struct SectorBlock {
    pub h0: Vec<f64>,
    pub h1: SparseOperator,
    basis: Basis,
}

impl SectorBlock {
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

    pub fn dense(&self, field: f64) -> HermitianOperator {
        HermitianOperator::from_matrix_unchecked(self.at(field).to_dense())
    }

    /// Momentum index `m`, or `None` for the unreduced block.
    pub fn momentum(&self) -> Option<usize> {
        match &self.basis {
            Basis::Full => None,
            Basis::Momentum { momentum, .. } => Some(*momentum),
        }
    }

    /// Coordinates of a block vector in the full product basis.
    pub fn embed(&self, v: &[C64]) -> Vec<C64> {
        match &self.basis {
            Basis::Full => v.to_vec(),
            Basis::Momentum {
                sites,
                momentum,
                reps,
                periods,
            } => {
                let k = 2.0 * std::f64::consts::PI * *momentum as f64 / *sites as f64;
                let mut out = vec![ZERO; 1 << sites];
                for ((&r, &p), &c) in reps.iter().zip(periods).zip(v) {
                    let norm = 1.0 / (p as f64).sqrt();
                    let mut s = r;
                    for j in 0..p {
                        out[s] += c * C64::from_polar(norm, -k * j as f64);
                        s = cyclic_shift(s, *sites);
                    }
                }
                out
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct SectorDecomposition {
    blocks: Vec<SectorBlock>,
}

impl SectorDecomposition {
    /// A single block holding the whole space.
    pub fn trivial(split: &SparseSplit) -> Self {
        Self {
            blocks: vec![SectorBlock {
                h0: split.h0.clone(),
                h1: split.h1.clone(),
                basis: Basis::Full,
            }],
        }
    }

    /// Split into the `L` momentum sectors. Fails if the operator does not
    /// commute with translations.
    pub fn momentum(split: &SparseSplit, sites: usize) -> Result<Self> {
        let dim = split.dim();
        if dim != 1 << sites {
            return Err(Error::DimensionMismatch {
                expected: 1 << sites,
                found: dim,
            });
        }
        check_translation_invariance(split, sites)?;

        // Orbit data: representative and shift with T^shift rep = s.
        let mut rep_of = vec![usize::MAX; dim];
        let mut shift_of = vec![0usize; dim];
        let mut orbits: Vec<(usize, usize)> = Vec::new();
        for s in 0..dim {
            if rep_of[s] != usize::MAX {
                continue;
            }
            let mut t = s;
            let mut j = 0;
            loop {
                rep_of[t] = s;
                shift_of[t] = j;
                t = cyclic_shift(t, sites);
                j += 1;
                if t == s {
                    break;
                }
            }
            orbits.push((s, j));
        }

        let mut blocks = Vec::with_capacity(sites);
        let mut pos = vec![usize::MAX; dim];
        for m in 0..sites {
            let k = 2.0 * std::f64::consts::PI * m as f64 / sites as f64;
            let members: Vec<(usize, usize)> =
                orbits.iter().copied().filter(|&(_, p)| (m * p) % sites == 0).collect();
            for (i, &(r, _)) in members.iter().enumerate() {
                pos[r] = i;
            }
            let mut trip = Vec::new();
            for (col, &(r, p)) in members.iter().enumerate() {
                let mut s = r;
                for j in 0..p {
                    let coeff = C64::from_polar(1.0 / (p as f64).sqrt(), -k * j as f64);
                    // H1 |s> = sum_t conj(H1[s, t]) |t> by Hermiticity.
                    for (t, v) in split.h1.row(s) {
                        let rt = rep_of[t];
                        let row = pos[rt];
                        if row == usize::MAX {
                            // Orbit incompatible with k: contributions cancel.
                            continue;
                        }
                        let pt = members[row].1;
                        let proj = C64::from_polar(1.0 / (pt as f64).sqrt(), k * shift_of[t] as f64);
                        trip.push((row, col, proj * v.conj() * coeff));
                    }
                    s = cyclic_shift(s, sites);
                }
            }
            let mut h1 = SparseOperator::from_triplets(members.len(), trip)?;
            h1.prune(1e-13);
            blocks.push(SectorBlock {
                h0: members.iter().map(|&(r, _)| split.h0[r]).collect(),
                h1,
                basis: Basis::Momentum {
                    sites,
                    momentum: m,
                    reps: members.iter().map(|&(r, _)| r).collect(),
                    periods: members.iter().map(|&(_, p)| p).collect(),
                },
            });
            for &(r, _) in &members {
                pos[r] = usize::MAX;
            }
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[SectorBlock] {
        &self.blocks
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(SectorBlock::dim).sum()
    }
}

fn check_translation_invariance(split: &SparseSplit, sites: usize) -> Result<()> {
    for s in 0..split.dim() {
        let ts = cyclic_shift(s, sites);
        if (split.h0[s] - split.h0[ts]).abs() > 1e-12 * (1.0 + split.h0[s].abs()) {
            return Err(Error::InvalidModel("diagonal part is not translation invariant".into()));
        }
        let mut row: Vec<(usize, C64)> = split.h1.row(s).map(|(t, v)| (cyclic_shift(t, sites), v)).collect();
        let mut shifted: Vec<(usize, C64)> = split.h1.row(ts).collect();
        row.sort_by_key(|e| e.0);
        shifted.sort_by_key(|e| e.0);
        let same = row.len() == shifted.len()
            && row.iter().zip(&shifted).all(|(a, b)| a.0 == b.0 && (a.1 - b.1).norm() <= 1e-12);
        if !same {
            return Err(Error::InvalidModel("coupling is not translation invariant".into()));
        }
    }
    Ok(())
}

//! Compressed sparse rows and a Taylor-series action of `exp(-i H t)` on a
//! block of vectors.

use super::{CMatrix, C64, ZERO};
use crate::error::{Error, Result};

/// Square complex matrix in CSR layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseOperator {
    /// Duplicates are summed; entries that end up exactly zero are dropped.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= dim || *c >= dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.max(c) + 1,
            });
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().expect("previous entry") += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            cols.push(c);
            vals.push(v);
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut op = Self {
            dim,
            row_ptr,
            cols,
            vals,
        };
        op.prune(0.0);
        Ok(op)
    }

    pub fn from_dense(m: &CMatrix) -> Self {
        let n = m.nrows();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let z = m[(i, j)];
                if z != ZERO {
                    cols.push(j);
                    vals.push(z);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim: n,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Remove entries with `|a_ij| <= tol`.
    pub fn prune(&mut self, tol: f64) {
        let mut row_ptr = Vec::with_capacity(self.dim + 1);
        let mut cols = Vec::with_capacity(self.cols.len());
        let mut vals = Vec::with_capacity(self.vals.len());
        row_ptr.push(0);
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.vals[k].norm() > tol {
                    cols.push(self.cols[k]);
                    vals.push(self.vals[k]);
                }
            }
            row_ptr.push(cols.len());
        }
        self.row_ptr = row_ptr;
        self.cols = cols;
        self.vals = vals;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()].iter().copied().zip(self.vals[range].iter().copied())
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    fn row_abs_sums(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.row(i).map(|(_, v)| v.norm()).sum()).collect()
    }

    /// Largest absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        self.row_abs_sums().into_iter().fold(0.0, f64::max)
    }

    pub fn is_real(&self) -> bool {
        self.vals.iter().all(|v| v.im == 0.0)
    }

    /// Largest `|A_ij - conj(A_ji)|` over the stored pattern.
    pub fn hermiticity_deviation(&self) -> f64 {
        let mut dev = 0.0f64;
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                let mirror = self.row(j).find(|&(c, _)| c == i).map_or(ZERO, |(_, w)| w);
                dev = dev.max((v - mirror.conj()).norm());
            }
        }
        dev
    }
}

/// Row-major `dim x width` block; column `c` is one state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiVector {
    dim: usize,
    width: usize,
    data: Vec<C64>,
}

impl MultiVector {
    pub fn zeros(dim: usize, width: usize) -> Self {
        Self {
            dim,
            width,
            data: vec![ZERO; dim * width],
        }
    }

    pub fn from_columns(m: &CMatrix) -> Self {
        let (dim, width) = m.shape();
        let mut data = Vec::with_capacity(dim * width);
        for i in 0..dim {
            for c in 0..width {
                data.push(m[(i, c)]);
            }
        }
        Self { dim, width, data }
    }

    pub fn from_vector(v: &[C64]) -> Self {
        Self {
            dim: v.len(),
            width: 1,
            data: v.to_vec(),
        }
    }

    pub fn to_matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.dim, self.width, |i, c| self.data[i * self.width + c])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, i: usize, c: usize) -> C64 {
        self.data[i * self.width + c]
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.dim).map(|i| self.get(i, c)).collect()
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [C64] {
        &mut self.data[i * self.width..(i + 1) * self.width]
    }

    /// Keep only the listed columns, in order.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let mut out = Self::zeros(self.dim, keep.len());
        for i in 0..self.dim {
            let src = self.row(i);
            let dst = out.row_mut(i);
            for (d, &k) in dst.iter_mut().zip(keep) {
                *d = src[k];
            }
        }
        out
    }

    /// Multiply row `i` by `phases[i]`.
    pub fn scale_rows(&mut self, phases: &[C64]) {
        for (i, &p) in phases.iter().enumerate() {
            self.row_mut(i).iter_mut().for_each(|z| *z *= p);
        }
    }

    /// `<v_c|v_c>` for every column.
    pub fn column_norms_sqr(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        for i in 0..self.dim {
            for (o, z) in out.iter_mut().zip(self.row(i)) {
                *o += z.norm_sqr();
            }
        }
        out
    }
}

/// `diag(d) + field * A` with `A` a sparse Hermitian coupling.
#[derive(Clone, Copy, Debug)]
pub struct FieldOperator<'a> {
    pub diag: &'a [f64],
    pub coupling: &'a SparseOperator,
    pub field: f64,
}

impl<'a> FieldOperator<'a> {
    pub fn new(diag: &'a [f64], coupling: &'a SparseOperator, field: f64) -> Result<Self> {
        if diag.len() != coupling.dim() {
            return Err(Error::DimensionMismatch {
                expected: coupling.dim(),
                found: diag.len(),
            });
        }
        Ok(Self { diag, coupling, field })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Upper bound on the operator norm (largest absolute row sum).
    pub fn norm_bound(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.dim() {
            let off: f64 = self.coupling.row(i).map(|(_, v)| v.norm()).sum();
            best = best.max(self.diag[i].abs() + self.field.abs() * off);
        }
        best
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = self.coupling.to_dense() * C64::new(self.field, 0.0);
        for (i, &d) in self.diag.iter().enumerate() {
            m[(i, i)] += d;
        }
        m
    }

    /// `y = H x`, column by column.
    pub fn apply(&self, x: &MultiVector, y: &mut MultiVector) {
        debug_assert_eq!(x.dim, self.dim());
        debug_assert_eq!((x.dim, x.width), (y.dim, y.width));
        let w = x.width;
        for i in 0..self.dim() {
            let out = &mut y.data[i * w..(i + 1) * w];
            let d = self.diag[i];
            for (o, xi) in out.iter_mut().zip(&x.data[i * w..(i + 1) * w]) {
                *o = xi * d;
            }
            for (j, a) in self.coupling.row(i) {
                let a = a * self.field;
                for (o, xj) in out.iter_mut().zip(&x.data[j * w..(j + 1) * w]) {
                    *o += a * xj;
                }
            }
        }
    }

    /// `sum_c weights[c] <x_c|H|x_c>`.
    pub fn weighted_expectation(&self, x: &MultiVector, weights: &[f64]) -> f64 {
        let mut hx = MultiVector::zeros(x.dim, x.width);
        self.apply(x, &mut hx);
        let mut per_col = vec![ZERO; x.width];
        for i in 0..x.dim {
            for ((acc, a), b) in per_col.iter_mut().zip(x.row(i)).zip(hx.row(i)) {
                *acc += a.conj() * b;
            }
        }
        per_col.iter().zip(weights).map(|(z, w)| z.re * w).sum()
    }
}

/// Truncation target for the Taylor remainder of each substep.
const TAYLOR_REMAINDER: f64 = 1e-17;
/// Largest `||H|| dt` allowed in one substep.
const TAYLOR_SUBSTEP_NORM: f64 = 0.5;
const TAYLOR_MAX_TERMS: usize = 40;

fn taylor_terms(theta: f64) -> usize {
    // Smallest n with theta^(n+1) / (n+1)! * e^theta below the target.
    let mut term = 1.0;
    for n in 0..TAYLOR_MAX_TERMS {
        term *= theta / (n + 1) as f64;
        if term * theta.exp() <= TAYLOR_REMAINDER {
            return n.max(1);
        }
    }
    TAYLOR_MAX_TERMS
}

/// Overwrite `x` with `exp(-i H t) x`.
///
/// The step is split so that `||H|| dt <= 1/2` and the series is truncated
/// once the a priori remainder bound drops below `1e-17`; no adaptive
/// stopping is involved, so the cost is fixed by `||H||` and `t` alone.
pub fn expm_action(h: &FieldOperator<'_>, t: f64, x: &mut MultiVector) {
    if t == 0.0 || x.width == 0 {
        return;
    }
    let norm = h.norm_bound();
    if norm == 0.0 {
        return;
    }
    let substeps = ((norm * t.abs()) / TAYLOR_SUBSTEP_NORM).ceil().max(1.0) as usize;
    let dt = t / substeps as f64;
    let nterms = taylor_terms(norm * dt.abs());
    let mut term = MultiVector::zeros(x.dim, x.width);
    let mut hterm = MultiVector::zeros(x.dim, x.width);
    for _ in 0..substeps {
        term.data.copy_from_slice(&x.data);
        for n in 1..=nterms {
            h.apply(&term, &mut hterm);
            let coeff = C64::new(0.0, -dt / n as f64);
            for ((acc, tm), ht) in x.data.iter_mut().zip(term.data.iter_mut()).zip(&hterm.data) {
                let next = coeff * ht;
                *acc += next;
                *tm = next;
            }
        }
    }
    debug_assert!(x.data.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
}

//! Dense complex linear algebra for small Hermitian problems.
//!
//! Everything here works on `nalgebra` matrices of `Complex64`. Operators
//! with vanishing imaginary parts are diagonalized with the real symmetric
//! solver, which is several times faster and returns real eigenvectors.

mod sparse;

pub use sparse::{expm_action, FieldOperator, MultiVector, SparseOperator};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Hermiticity tolerance on `|A_ij - conj(A_ji)|`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Allowed deviation of `Tr(rho)` from one.
pub const TRACE_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated in a density operator.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Tolerance on `max |U^H U - I|`.
pub const UNITARY_TOL: f64 = 1e-10;
/// Relative spacing below which two eigenvalues belong to the same level.
pub const DEGENERACY_TOL: f64 = 1e-10;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest `|A_ij - conj(A_ji)|`.
pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Largest entry of `U^H U - I`.
pub fn unitarity_deviation(u: &CMatrix) -> f64 {
    let prod = u.adjoint() * u;
    let n = prod.nrows();
    let mut dev = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            let target = if i == j { ONE } else { ZERO };
            dev = dev.max((prod[(i, j)] - target).norm());
        }
    }
    dev
}

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::domain("dimension", "operator must have dimension >= 1"));
    }
    Ok(())
}

/// A Hermitian matrix in some fixed basis.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        let deviation = hermiticity_deviation(&matrix);
        if !(deviation <= HERMITIAN_TOL) {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self { matrix })
    }

    pub fn from_real(matrix: DMatrix<f64>) -> Result<Self> {
        Self::new(matrix.map(|x| C64::new(x, 0.0)))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&x| C64::new(x, 0.0)));
        Self {
            matrix: CMatrix::from_diagonal(&d),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    /// Trusted constructor for matrices that are Hermitian by construction.
    pub(crate) fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        debug_assert!(hermiticity_deviation(&matrix) <= HERMITIAN_TOL);
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.matrix)
    }

    pub fn is_real(&self) -> bool {
        self.matrix.iter().all(|z| z.im == 0.0)
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|j| (0..n).all(|i| i == j || self.matrix[(i, j)] == ZERO))
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, other: &HermitianOperator, c: f64) -> Result<HermitianOperator> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(Self {
            matrix: &self.matrix + other.matrix.map(|z| z * c),
        })
    }

    pub fn commutator_norm(&self, other: &HermitianOperator) -> f64 {
        let c = &self.matrix * &other.matrix - &other.matrix * &self.matrix;
        max_abs(&c)
    }

    pub fn to_sparse(&self) -> SparseOperator {
        SparseOperator::from_dense(&self.matrix)
    }
}

/// Eigenvalues in ascending order and the matching orthonormal eigenvectors
/// as matrix columns.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl Spectrum {
    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Number of eigenvalues degenerate with the lowest one.
    pub fn ground_multiplicity(&self) -> usize {
        let e0 = self.eigenvalues[0];
        let tol = degeneracy_window(e0, &self.eigenvalues);
        self.eigenvalues.iter().take_while(|&&e| e - e0 <= tol).count()
    }

    /// `V diag(f(eps)) V^H`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, &e) in self.eigenvalues.iter().enumerate() {
            let fe = f(e);
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= fe);
        }
        scaled * v.adjoint()
    }
}

fn degeneracy_window(e0: f64, energies: &[f64]) -> f64 {
    let scale = energies.iter().fold(1.0f64, |m, e| m.max(e.abs())).max(e0.abs());
    DEGENERACY_TOL * scale
}

/// Hermitian eigendecomposition, eigenvalues ascending.
///
/// Backed by LAPACK's divide-and-conquer drivers (`dsyevd` for real input,
/// `zheevd` otherwise).
pub fn eigh(h: &HermitianOperator) -> Spectrum {
    let n = h.dim();
    if n == 0 {
        return Spectrum {
            eigenvalues: Vec::new(),
            eigenvectors: CMatrix::zeros(0, 0),
        };
    }
    let (eigenvalues, eigenvectors) = if h.is_real() {
        let (w, v) = lapack::dsyevd(n, h.matrix.iter().map(|z| z.re).collect());
        (w, CMatrix::from_iterator(n, n, v.into_iter().map(|x| C64::new(x, 0.0))))
    } else {
        let (w, v) = lapack::zheevd(n, h.matrix.iter().copied().collect());
        (w, CMatrix::from_vec(n, n, v))
    };
    Spectrum {
        eigenvalues,
        eigenvectors,
    }
}

mod lapack {
    //! Thin safe wrappers; matrices are column-major `n * n` buffers.

    use super::C64;
    use lapack_sys::__BindgenComplex;
    use std::os::raw::{c_char, c_int};

    const JOBZ: c_char = b'V' as c_char;
    const UPLO: c_char = b'L' as c_char;

    fn check(info: c_int, routine: &str) {
        // info > 0 means the divide-and-conquer iteration did not converge,
        // which LAPACK documents as essentially impossible for finite input.
        assert!(info == 0, "{routine} failed with info = {info}");
    }

    pub(super) fn dsyevd(n: usize, mut a: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
        let nn = n as c_int;
        let mut w = vec![0.0; n];
        let mut info = 0;
        let (mut wq, mut iwq) = (0.0, 0 as c_int);
        unsafe {
            lapack_sys::dsyevd_(
                &JOBZ, &UPLO, &nn, a.as_mut_ptr(), &nn, w.as_mut_ptr(), &mut wq, &-1, &mut iwq, &-1, &mut info,
            );
        }
        check(info, "dsyevd workspace query");
        let lwork = wq as c_int;
        let mut work = vec![0.0; lwork as usize];
        let mut iwork = vec![0 as c_int; iwq as usize];
        unsafe {
            lapack_sys::dsyevd_(
                &JOBZ,
                &UPLO,
                &nn,
                a.as_mut_ptr(),
                &nn,
                w.as_mut_ptr(),
                work.as_mut_ptr(),
                &lwork,
                iwork.as_mut_ptr(),
                &iwq,
                &mut info,
            );
        }
        check(info, "dsyevd");
        (w, a)
    }

    pub(super) fn zheevd(n: usize, mut a: Vec<C64>) -> (Vec<f64>, Vec<C64>) {
        let nn = n as c_int;
        let mut w = vec![0.0; n];
        let mut info = 0;
        // num_complex::Complex<f64> is repr(C) {re, im}, as is the binding type.
        let ap = a.as_mut_ptr() as *mut __BindgenComplex<f64>;
        let mut wq = __BindgenComplex { re: 0.0, im: 0.0 };
        let (mut rwq, mut iwq) = (0.0, 0 as c_int);
        unsafe {
            lapack_sys::zheevd_(
                &JOBZ, &UPLO, &nn, ap, &nn, w.as_mut_ptr(), &mut wq, &-1, &mut rwq, &-1, &mut iwq, &-1, &mut info,
            );
        }
        check(info, "zheevd workspace query");
        let (lwork, lrwork) = (wq.re as c_int, rwq as c_int);
        let mut work = vec![__BindgenComplex { re: 0.0, im: 0.0 }; lwork as usize];
        let mut rwork = vec![0.0; lrwork as usize];
        let mut iwork = vec![0 as c_int; iwq as usize];
        unsafe {
            lapack_sys::zheevd_(
                &JOBZ,
                &UPLO,
                &nn,
                ap,
                &nn,
                w.as_mut_ptr(),
                work.as_mut_ptr(),
                &lwork,
                rwork.as_mut_ptr(),
                &lrwork,
                iwork.as_mut_ptr(),
                &iwq,
                &mut info,
            );
        }
        check(info, "zheevd");
        (w, a)
    }
}

/// Normalized Boltzmann weights `exp(-(e - e_min)/T) / Z`.
///
/// `T = 0` spreads the weight uniformly over the (numerically) degenerate
/// ground level; `T = inf` gives uniform weights. The energies need not be
/// sorted.
pub fn boltzmann_weights(energies: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if temperature.is_nan() || temperature < 0.0 {
        return Err(Error::domain("temperature", format!("must be >= 0, got {temperature}")));
    }
    if energies.is_empty() {
        return Ok(Vec::new());
    }
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = if temperature == 0.0 {
        let tol = degeneracy_window(e_min, energies);
        energies
            .iter()
            .map(|&e| if e - e_min <= tol { 1.0 } else { 0.0 })
            .collect()
    } else if temperature.is_infinite() {
        vec![1.0; energies.len()]
    } else {
        energies.iter().map(|&e| (-(e - e_min) / temperature).exp()).collect()
    };
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    Ok(w)
}

/// Thermal state `exp(-H/T)/Z`, evaluated in the eigenbasis of `H`.
pub fn gibbs_state(h: &HermitianOperator, temperature: f64) -> Result<DensityOperator> {
    let spec = eigh(h);
    let w = boltzmann_weights(&spec.eigenvalues, temperature)?;
    let v = &spec.eigenvectors;
    let mut scaled = v.clone();
    for (j, &wj) in w.iter().enumerate() {
        scaled.column_mut(j).iter_mut().for_each(|z| *z *= wj);
    }
    let mut rho = scaled * v.adjoint();
    symmetrize(&mut rho);
    Ok(DensityOperator { matrix: rho })
}

/// `exp(-i H t)` via the eigendecomposition of `H`.
pub fn propagator(h: &HermitianOperator, t: f64) -> CMatrix {
    if t == 0.0 {
        return CMatrix::identity(h.dim(), h.dim());
    }
    if h.is_diagonal() {
        let d = DVector::from_iterator(
            h.dim(),
            (0..h.dim()).map(|i| C64::from_polar(1.0, -h.matrix[(i, i)].re * t)),
        );
        return CMatrix::from_diagonal(&d);
    }
    eigh(h).reconstruct_with(|e| C64::from_polar(1.0, -e * t))
}

/// `Tr(H rho)`.
pub fn expectation(h: &HermitianOperator, rho: &DensityOperator) -> Result<f64> {
    if h.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: rho.dim(),
        });
    }
    Ok(trace_product(&h.matrix, &rho.matrix))
}

pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    let scale = 1.0 + acc.re.abs();
    debug_assert!(acc.im.abs() <= 1e-10 * scale, "imaginary residue {} in Tr(H rho)", acc.im);
    acc.re
}

fn symmetrize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// A Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
}

impl DensityOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        let rho = Self { matrix };
        rho.check_invariants()?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(mut matrix: CMatrix) -> Self {
        symmetrize(&mut matrix);
        Self { matrix }
    }

    /// `|psi><psi|` for a state vector, normalized on the way in.
    pub fn pure(psi: &DVector<C64>) -> Result<Self> {
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidDensity("zero state vector".into()));
        }
        let v = psi / C64::new(norm, 0.0);
        Ok(Self::from_matrix_unchecked(&v * v.adjoint()))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0),
        }
    }

    /// `sum_i w_i |v_i><v_i|` for the columns of `vectors`.
    pub fn from_ensemble(weights: &[f64], vectors: &CMatrix) -> Result<Self> {
        if weights.len() != vectors.ncols() {
            return Err(Error::DimensionMismatch {
                expected: vectors.ncols(),
                found: weights.len(),
            });
        }
        let mut scaled = vectors.clone();
        for (j, &w) in weights.iter().enumerate() {
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= w);
        }
        Ok(Self::from_matrix_unchecked(scaled * vectors.adjoint()))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    /// `Tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Eigenvalues of `rho`, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        eigh(&HermitianOperator::from_matrix_unchecked(self.matrix.clone())).eigenvalues
    }

    /// `U rho U^H`.
    pub fn conjugate(&self, u: &CMatrix) -> Result<Self> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.nrows(),
            });
        }
        Ok(Self::from_matrix_unchecked(u * &self.matrix * u.adjoint()))
    }

    /// Hermiticity, unit trace and positivity at the crate tolerances.
    pub fn check_invariants(&self) -> Result<()> {
        let dev = hermiticity_deviation(&self.matrix);
        if !(dev <= HERMITIAN_TOL) {
            return Err(Error::InvalidDensity(format!("not Hermitian (deviation {dev:e})")));
        }
        let tr = self.trace();
        if !((tr - 1.0).abs() <= TRACE_TOL) {
            return Err(Error::InvalidDensity(format!("trace {tr} != 1")));
        }
        let min = self.eigenvalues()[0];
        if !(min >= -POSITIVITY_TOL) {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }
}

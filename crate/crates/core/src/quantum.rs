//! Dense complex operator algebra on small Hilbert spaces.
//!
//! Composite spaces are always ordered system ⊗ phonon: the system index is
//! the slow index and the Fock index the fast one, so the basis state
//! `(s, n)` sits at position `s * (n_max + 1) + n`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest dimension a Kronecker product may produce by default.
pub const DEFAULT_MAX_DIM: usize = 4096;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// A dense square complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    m: DMatrix<C64>,
}

impl OperatorMatrix {
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "operator must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::Dimension("operator must have positive dimension".into()));
        }
        Ok(Self { m })
    }

    /// Builds from row-major entries; `entries.len()` must be a perfect square.
    pub fn from_row_major(entries: &[C64]) -> Result<Self> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        if dim * dim != entries.len() {
            return Err(Error::Dimension(format!(
                "{} entries do not form a square matrix",
                entries.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn from_real_rows(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "expected {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        let c: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_row_major(&c)
    }

    pub fn zeros(dim: usize) -> Self {
        Self { m: DMatrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: DMatrix::identity(dim, dim) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        Self { m }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self { m: DMatrix::from_fn(dim, dim, f) }
    }

    /// `|ket><bra|` for basis indices.
    pub fn unit(dim: usize, row: usize, col: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(row, col)] = ONE;
        Self { m }
    }

    /// Outer product `|a><b|`.
    pub fn outer(a: &[C64], b: &[C64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Dimension("outer product of unequal vectors".into()));
        }
        let n = a.len();
        Ok(Self::from_fn(n, |i, j| a[i] * b[j].conj()))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.m[(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: C64) {
        self.m[(row, col)] = value;
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<C64> {
        let n = self.dim();
        (0..n * n).map(|k| self.m[(k / n, k % n)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    pub fn transpose(&self) -> Self {
        Self { m: self.m.transpose() }
    }

    pub fn trace(&self) -> C64 {
        self.m.trace()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { m: &self.m * C64::new(s, 0.0) }
    }

    pub fn scale_c(&self, s: C64) -> Self {
        Self { m: &self.m * s }
    }

    /// Largest entrywise `|M - M†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.m[(i, j)] - self.m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// `(M + M†) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self { m: (&self.m + self.m.adjoint()) * C64::new(0.5, 0.0) }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self { m: &self.m * &other.m - &other.m * &self.m }
    }

    /// Eigen-decomposition of a Hermitian operator: eigenvalues ascending,
    /// eigenvectors as columns in matching order.
    pub fn eigh(&self) -> Result<(Vec<f64>, DMatrix<C64>)> {
        let herr = self.hermiticity_error();
        let scale = self.max_abs().max(1.0);
        if herr > 1e-9 * scale {
            return Err(Error::Contract(format!(
                "eigh requires a Hermitian operator (|M - M†| = {herr:e})"
            )));
        }
        let eig = self.hermitian_part().m.symmetric_eigen();
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        Ok((values, vectors))
    }

    /// Ascending eigenvalues of a Hermitian operator.
    pub fn eigvalsh(&self) -> Result<Vec<f64>> {
        let herr = self.hermiticity_error();
        let scale = self.max_abs().max(1.0);
        if herr > 1e-9 * scale {
            return Err(Error::Contract(format!(
                "eigvalsh requires a Hermitian operator (|M - M†| = {herr:e})"
            )));
        }
        let mut v: Vec<f64> = self.hermitian_part().m.symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        Ok(v)
    }

    /// `U† M U` for a unitary (or any square) `U` of matching dimension.
    pub fn conjugate_by(&self, u: &DMatrix<C64>) -> Self {
        Self { m: u.adjoint() * &self.m * u }
    }

    /// Principal submatrix on the given basis indices.
    pub fn restrict(&self, indices: &[usize]) -> Self {
        let k = indices.len();
        Self::from_fn(k, |i, j| self.m[(indices[i], indices[j])])
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { m: &self.m + &rhs.m }
    }
}

impl Add for OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { m: self.m + rhs.m }
    }
}

impl AddAssign<&OperatorMatrix> for OperatorMatrix {
    fn add_assign(&mut self, rhs: &OperatorMatrix) {
        self.m += &rhs.m;
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { m: &self.m - &rhs.m }
    }
}

impl Sub for OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { m: self.m - rhs.m }
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { m: &self.m * &rhs.m }
    }
}

impl Mul for OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: OperatorMatrix) -> OperatorMatrix {
        OperatorMatrix { m: self.m * rhs.m }
    }
}

impl Mul<f64> for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: f64) -> OperatorMatrix {
        self.scale(rhs)
    }
}

impl Mul<f64> for OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: f64) -> OperatorMatrix {
        self.scale(rhs)
    }
}

impl Mul<C64> for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: C64) -> OperatorMatrix {
        self.scale_c(rhs)
    }
}

impl Mul<C64> for OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: C64) -> OperatorMatrix {
        self.scale_c(rhs)
    }
}

impl Neg for OperatorMatrix {
    type Output = OperatorMatrix;
    fn neg(self) -> OperatorMatrix {
        OperatorMatrix { m: -self.m }
    }
}

/// Kronecker product `a ⊗ b` with the default dimension limit.
pub fn tensor(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<OperatorMatrix> {
    tensor_with_limit(a, b, DEFAULT_MAX_DIM)
}

pub fn tensor_with_limit(a: &OperatorMatrix, b: &OperatorMatrix, max_dim: usize) -> Result<OperatorMatrix> {
    let dim = a
        .dim()
        .checked_mul(b.dim())
        .filter(|&d| d <= max_dim)
        .ok_or_else(|| {
            Error::Dimension(format!(
                "tensor product {}x{} exceeds the dimension limit {max_dim}",
                a.dim(),
                b.dim()
            ))
        })?;
    debug_assert!(dim == a.dim() * b.dim());
    Ok(OperatorMatrix { m: a.m.kronecker(&b.m) })
}

/// Truncated single-mode Fock space `|0>, ..., |n_max>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FockSpace {
    pub n_max: usize,
}

impl FockSpace {
    pub fn new(n_max: usize) -> Self {
        Self { n_max }
    }

    pub fn dim(&self) -> usize {
        self.n_max + 1
    }

    /// `a` with `<n-1|a|n> = sqrt(n)`.
    pub fn annihilation(&self) -> OperatorMatrix {
        let d = self.dim();
        let mut m = OperatorMatrix::zeros(d);
        for n in 1..d {
            m.set(n - 1, n, C64::new((n as f64).sqrt(), 0.0));
        }
        m
    }

    pub fn creation(&self) -> OperatorMatrix {
        self.annihilation().adjoint()
    }

    pub fn number(&self) -> OperatorMatrix {
        let diag: Vec<f64> = (0..self.dim()).map(|n| n as f64).collect();
        OperatorMatrix::from_diagonal(&diag)
    }

    /// `a + a†`.
    pub fn position(&self) -> OperatorMatrix {
        let a = self.annihilation();
        let ad = a.adjoint();
        &a + &ad
    }

    pub fn identity(&self) -> OperatorMatrix {
        OperatorMatrix::identity(self.dim())
    }

    /// Fock projector `|n><n|`.
    pub fn projector(&self, n: usize) -> Result<OperatorMatrix> {
        if n > self.n_max {
            return Err(Error::Dimension(format!("Fock state {n} beyond truncation {}", self.n_max)));
        }
        Ok(OperatorMatrix::unit(self.dim(), n, n))
    }

    /// Thermal state with mean occupation `nbar`, renormalised on the truncated space.
    pub fn thermal(&self, nbar: f64) -> Result<DensityMatrix> {
        if nbar < 0.0 {
            return Err(Error::Domain(format!("negative thermal occupation {nbar}")));
        }
        let ratio = if nbar == 0.0 { 0.0 } else { nbar / (1.0 + nbar) };
        let mut p: Vec<f64> = (0..self.dim()).map(|n| ratio.powi(n as i32)).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= z);
        DensityMatrix::new(OperatorMatrix::from_diagonal(&p))
    }
}

/// Tolerances applied when a [`DensityMatrix`] is validated.
#[derive(Clone, Copy, Debug)]
pub struct DensityTolerances {
    pub trace: f64,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
}

impl Default for DensityTolerances {
    fn default() -> Self {
        Self { trace: 1e-9, hermiticity: 1e-10, min_eigenvalue: -1e-8 }
    }
}

/// Measured deviations of a density matrix from the physical set.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct DensityDiagnostics {
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl DensityDiagnostics {
    pub fn within(&self, tol: &DensityTolerances) -> bool {
        self.trace_error <= tol.trace
            && self.hermiticity_error <= tol.hermiticity
            && self.min_eigenvalue >= tol.min_eigenvalue
    }
}

/// A validated density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    op: OperatorMatrix,
    pub label: Option<String>,
}

impl DensityMatrix {
    /// Validates trace, Hermiticity and positivity with default tolerances.
    pub fn new(op: OperatorMatrix) -> Result<Self> {
        Self::with_tolerances(op, &DensityTolerances::default())
    }

    pub fn with_tolerances(op: OperatorMatrix, tol: &DensityTolerances) -> Result<Self> {
        let diag = diagnose(&op)?;
        if !diag.within(tol) {
            return Err(Error::Contract(format!(
                "not a density matrix: trace error {:e}, hermiticity error {:e}, min eigenvalue {:e}",
                diag.trace_error, diag.hermiticity_error, diag.min_eigenvalue
            )));
        }
        Ok(Self { op, label: None })
    }

    /// Wraps without validation; callers guarantee the invariants or check
    /// them afterwards with [`DensityMatrix::diagnostics`].
    pub fn new_unchecked(op: OperatorMatrix) -> Self {
        Self { op, label: None }
    }

    pub fn from_pure(psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Contract("zero state vector".into()));
        }
        let v: Vec<C64> = psi.iter().map(|z| z / norm).collect();
        Self::new(OperatorMatrix::outer(&v, &v)?)
    }

    /// Projector onto basis state `k`.
    pub fn basis_state(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::Dimension(format!("basis index {k} out of range for dim {dim}")));
        }
        Ok(Self::new_unchecked(OperatorMatrix::unit(dim, k, k)))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self::new_unchecked(OperatorMatrix::identity(dim).scale(1.0 / dim as f64))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn op(&self) -> &OperatorMatrix {
        &self.op
    }

    pub fn into_op(self) -> OperatorMatrix {
        self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.op.get(i, j)
    }

    pub fn diagnostics(&self) -> Result<DensityDiagnostics> {
        diagnose(&self.op)
    }

    pub fn purity(&self) -> f64 {
        (&self.op * &self.op).trace().re
    }

    /// Diagonal populations.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.op.get(i, i).re).collect()
    }
}

/// Deviations of an arbitrary operator from the set of density matrices.
pub fn diagnose(op: &OperatorMatrix) -> Result<DensityDiagnostics> {
    let hermiticity_error = op.hermiticity_error();
    let trace_error = (op.trace() - ONE).norm();
    let min_eigenvalue = op
        .hermitian_part()
        .eigvalsh()?
        .first()
        .copied()
        .unwrap_or(0.0);
    Ok(DensityDiagnostics { trace_error, hermiticity_error, min_eigenvalue })
}

/// Reduced system state `Tr_ph(rho)` for a system ⊗ Fock ordered operator.
pub fn partial_trace_phonon(rho: &DensityMatrix, fock: FockSpace) -> Result<DensityMatrix> {
    let reduced = partial_trace_phonon_op(rho.op(), fock)?;
    Ok(DensityMatrix::new_unchecked(reduced))
}

/// Partial trace over the Fock factor of any operator.
pub fn partial_trace_phonon_op(op: &OperatorMatrix, fock: FockSpace) -> Result<OperatorMatrix> {
    let f = fock.dim();
    if op.dim() % f != 0 {
        return Err(Error::Contract(format!(
            "dimension {} is not a multiple of the Fock dimension {f}",
            op.dim()
        )));
    }
    let s = op.dim() / f;
    Ok(OperatorMatrix::from_fn(s, |i, j| {
        (0..f).map(|n| op.get(i * f + n, j * f + n)).sum()
    }))
}

/// Partial trace over the system factor, leaving the Fock state.
pub fn partial_trace_system_op(op: &OperatorMatrix, fock: FockSpace) -> Result<OperatorMatrix> {
    let f = fock.dim();
    if op.dim() % f != 0 {
        return Err(Error::Contract(format!(
            "dimension {} is not a multiple of the Fock dimension {f}",
            op.dim()
        )));
    }
    let s = op.dim() / f;
    Ok(OperatorMatrix::from_fn(f, |n, m| {
        (0..s).map(|i| op.get(i * f + n, i * f + m)).sum()
    }))
}

/// Trace distance `1/2 ||r1 - r2||_1`.
pub fn trace_distance(r1: &DensityMatrix, r2: &DensityMatrix) -> Result<f64> {
    trace_distance_op(r1.op(), r2.op())
}

pub fn trace_distance_op(r1: &OperatorMatrix, r2: &OperatorMatrix) -> Result<f64> {
    if r1.dim() != r2.dim() {
        return Err(Error::Dimension(format!(
            "trace distance between dims {} and {}",
            r1.dim(),
            r2.dim()
        )));
    }
    for (name, r) in [("first", r1), ("second", r2)] {
        let herr = r.hermiticity_error();
        if herr > 1e-8 {
            return Err(Error::Contract(format!(
                "{name} argument of trace distance is not Hermitian ({herr:e})"
            )));
        }
    }
    let diff = (r1 - r2).hermitian_part();
    let ev = diff.eigvalsh()?;
    Ok(0.5 * ev.iter().map(|x| x.abs()).sum::<f64>())
}

/// Trace distance between two qubit Bloch vectors.
pub fn bloch_trace_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    0.5 * ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Pauli matrices in the basis `{|0>, |1>}` with `sigma_z = diag(1, -1)`.
pub mod pauli {
    use super::{OperatorMatrix, C64};

    pub fn x() -> OperatorMatrix {
        OperatorMatrix::from_real_rows(2, &[0.0, 1.0, 1.0, 0.0]).expect("2x2")
    }

    pub fn y() -> OperatorMatrix {
        OperatorMatrix::from_row_major(&[
            C64::new(0.0, 0.0),
            C64::new(0.0, -1.0),
            C64::new(0.0, 1.0),
            C64::new(0.0, 0.0),
        ])
        .expect("2x2")
    }

    pub fn z() -> OperatorMatrix {
        OperatorMatrix::from_diagonal(&[1.0, -1.0])
    }

    pub fn identity() -> OperatorMatrix {
        OperatorMatrix::identity(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx_eq(a: &OperatorMatrix, b: &OperatorMatrix, tol: f64) -> bool {
        a.dim() == b.dim() && (a - b).max_abs() <= tol
    }

    #[test]
    fn identity_tensor_identity() {
        let t = tensor(&OperatorMatrix::identity(2), &OperatorMatrix::identity(3)).unwrap();
        assert!(approx_eq(&t, &OperatorMatrix::identity(6), 0.0));
    }

    #[test]
    fn sigma_z_tensor_identity_is_diagonal() {
        let t = tensor(&pauli::z(), &pauli::identity()).unwrap();
        assert!(approx_eq(&t, &OperatorMatrix::from_diagonal(&[1.0, 1.0, -1.0, -1.0]), 0.0));
    }

    #[test]
    fn sigma_x_tensor_annihilation_entries() {
        // brute-force Kronecker definition
        let fock = FockSpace::new(2);
        let a = fock.annihilation();
        let sx = pauli::x();
        let t = tensor(&sx, &a).unwrap();
        assert_eq!(t.dim(), 6);
        for x in 0..2 {
            for y in 0..2 {
                for n in 0..3 {
                    for m in 0..3 {
                        let expected = sx.get(x, y) * a.get(n, m);
                        assert_eq!(t.get(x * 3 + n, y * 3 + m), expected);
                    }
                }
            }
        }
        for n in 1..3 {
            assert!((t.get(n - 1, 3 + n).re - (n as f64).sqrt()).abs() < 1e-15);
            assert!((t.get(3 + n - 1, n).re - (n as f64).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn tensor_respects_dimension_limit() {
        let big = OperatorMatrix::identity(100);
        assert!(matches!(tensor(&big, &big), Err(Error::Dimension(_))));
        assert!(tensor_with_limit(&big, &big, 10_000).is_ok());
    }

    #[test]
    fn fock_operators() {
        let fock = FockSpace::new(4);
        let a = fock.annihilation();
        for n in 1..=4 {
            assert!((a.get(n - 1, n).re - (n as f64).sqrt()).abs() < 1e-15);
        }
        let num = &fock.creation() * &a;
        assert!(approx_eq(&num, &fock.number(), 1e-14));
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert_eq!(num.get(i, j), ZERO);
                }
            }
        }
    }

    #[test]
    fn partial_trace_of_product_state() {
        let sys = DensityMatrix::new(OperatorMatrix::from_diagonal(&[0.1, 0.2, 0.3, 0.4])).unwrap();
        let fock = FockSpace::new(3);
        let rho = tensor(sys.op(), &fock.projector(0).unwrap()).unwrap();
        let red = partial_trace_phonon(&DensityMatrix::new(rho).unwrap(), fock).unwrap();
        assert!(approx_eq(red.op(), sys.op(), 1e-15));
    }

    #[test]
    fn partial_trace_of_maximally_mixed() {
        let fock = FockSpace::new(1);
        let red = partial_trace_phonon(&DensityMatrix::maximally_mixed(8), fock).unwrap();
        assert!(approx_eq(red.op(), &OperatorMatrix::identity(4).scale(0.25), 1e-15));
    }

    #[test]
    fn partial_trace_of_entangled_state() {
        // (|1,0> + |3,1>)/sqrt(2) with system labels 1..4 mapped to indices 0..3
        let fock = FockSpace::new(1);
        let mut psi = vec![ZERO; 8];
        psi[0] = ONE;
        psi[2 * 2 + 1] = ONE;
        let rho = DensityMatrix::from_pure(&psi).unwrap();
        let red = partial_trace_phonon(&rho, fock).unwrap();
        assert!(approx_eq(red.op(), &OperatorMatrix::from_diagonal(&[0.5, 0.0, 0.5, 0.0]), 1e-15));
    }

    #[test]
    fn partial_trace_rejects_bad_dimension() {
        let rho = DensityMatrix::maximally_mixed(7);
        assert!(matches!(partial_trace_phonon(&rho, FockSpace::new(1)), Err(Error::Contract(_))));
    }

    #[test]
    fn trace_distance_examples() {
        let a = DensityMatrix::new(OperatorMatrix::from_diagonal(&[1.0, 0.0])).unwrap();
        let b = DensityMatrix::new(OperatorMatrix::from_diagonal(&[0.0, 1.0])).unwrap();
        assert!((trace_distance(&a, &b).unwrap() - 1.0).abs() < 1e-14);
        assert!(trace_distance(&a, &a).unwrap().abs() < 1e-14);
        let c = DensityMatrix::new(OperatorMatrix::from_diagonal(&[0.75, 0.25])).unwrap();
        let d = DensityMatrix::new(OperatorMatrix::from_diagonal(&[0.5, 0.5])).unwrap();
        assert!((trace_distance(&c, &d).unwrap() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn trace_distance_rejects_non_hermitian() {
        let a = OperatorMatrix::from_real_rows(2, &[0.5, 1.0, 0.0, 0.5]).unwrap();
        let b = OperatorMatrix::from_diagonal(&[0.5, 0.5]);
        assert!(matches!(trace_distance_op(&a, &b), Err(Error::Contract(_))));
    }

    #[test]
    fn density_validation() {
        let bad = OperatorMatrix::from_diagonal(&[1.2, -0.2]);
        assert!(DensityMatrix::new(bad).is_err());
        let not_normalised = OperatorMatrix::from_diagonal(&[0.5, 0.4]);
        assert!(DensityMatrix::new(not_normalised).is_err());
        let thermal = FockSpace::new(30).thermal(0.5).unwrap();
        assert!((thermal.op().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigh_sorts_ascending() {
        let h = OperatorMatrix::from_diagonal(&[3.0, -1.0, 2.0]);
        let (vals, vecs) = h.eigh().unwrap();
        assert_eq!(vals, vec![-1.0, 2.0, 3.0]);
        assert!((vecs[(1, 0)].norm() - 1.0).abs() < 1e-12);
    }
}

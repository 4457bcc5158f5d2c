//! Hamiltonians of the negatively charged silicon-vacancy center and its
//! coupling to a single phonon mode.
//!
//! The electronic ground manifold is spanned by `{e_gx, e_gy} ⊗ {↑, ↓}`
//! (orbital slow, spin fast). Physical work happens in the labelled basis
//! `{|1>, |2>, |3>, |4>} ≈ {|e-,↓>, |e+,↑>, |e+,↓>, |e-,↑>}`, obtained by
//! diagonalising the longitudinal part of the Hamiltonian spin block by spin
//! block. The orbital ladder operator is `L+ = |3><1| + |2><4|` in that basis.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{pauli, tensor, FockSpace, OperatorMatrix, C64, ONE};
use crate::units::GAMMA_SPIN;

/// Index of the labelled states `|1>..|4>` in 0-based storage.
pub const STATE_1: usize = 0;
pub const STATE_2: usize = 1;
pub const STATE_3: usize = 2;
pub const STATE_4: usize = 3;

/// Static parameters of the SiV⁻ ground manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SivParams {
    /// Spin-orbit coupling λ (rad/s).
    pub lambda: f64,
    /// Jahn-Teller couplings (rad/s).
    pub gamma_x: f64,
    pub gamma_y: f64,
    /// Ham reduction factor.
    pub ham_factor: f64,
    /// Spin gyromagnetic ratio (rad/s per tesla).
    pub gamma_s: f64,
    /// Magnetic field (B_x, B_y, B_z) in tesla.
    pub field: [f64; 3],
}

impl SivParams {
    pub fn new(lambda: f64, gamma_x: f64, gamma_y: f64) -> Result<Self> {
        let p = Self { lambda, gamma_x, gamma_y, ham_factor: 0.1, gamma_s: GAMMA_SPIN, field: [0.0; 3] };
        p.validate()?;
        Ok(p)
    }

    /// Parameters from ordinary frequencies in GHz.
    pub fn from_ghz(lambda: f64, gamma_x: f64, gamma_y: f64) -> Result<Self> {
        use crate::units::ghz_to_rad;
        Self::new(ghz_to_rad(lambda), ghz_to_rad(gamma_x), ghz_to_rad(gamma_y))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !self.gamma_s.is_finite() || !self.ham_factor.is_finite() {
            return Err(Error::InvalidParameter("non-finite gyromagnetic parameters".into()));
        }
        if self.field.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("non-finite magnetic field".into()));
        }
        Ok(())
    }

    pub fn with_field(mut self, field: [f64; 3]) -> Self {
        self.field = field;
        self
    }

    /// Field from spherical coordinates `B (cos φ sin θ, sin φ sin θ, cos θ)`.
    pub fn with_spherical_field(self, b: f64, theta: f64, phi: f64) -> Self {
        self.with_field([b * phi.cos() * theta.sin(), b * phi.sin() * theta.sin(), b * theta.cos()])
    }

    /// Orbital gyromagnetic ratio γ_L = γ_s / 2.
    pub fn gamma_l(&self) -> f64 {
        self.gamma_s / 2.0
    }

    /// Υ = sqrt(γ_x² + γ_y²).
    pub fn upsilon(&self) -> f64 {
        self.gamma_x.hypot(self.gamma_y)
    }

    /// Zero-field gap Δ = sqrt(λ² + Υ²).
    pub fn delta(&self) -> f64 {
        self.lambda.hypot(self.upsilon())
    }

    pub fn is_longitudinal(&self) -> bool {
        self.field[0] == 0.0 && self.field[1] == 0.0
    }

    /// Δ± = [4(f γ_L B_z)² ± 4 f γ_L B_z λ + λ² + Υ²]^{1/2}.
    pub fn delta_pm(&self) -> (f64, f64) {
        let z = self.ham_factor * self.gamma_l() * self.field[2];
        let base = 4.0 * z * z + self.lambda * self.lambda + self.upsilon().powi(2);
        let cross = 4.0 * z * self.lambda;
        ((base + cross).max(0.0).sqrt(), (base - cross).max(0.0).sqrt())
    }

    fn longitudinal(&self) -> Self {
        let mut p = self.clone();
        p.field = [0.0, 0.0, self.field[2]];
        p
    }
}

/// Single phonon mode coupled to the orbital degree of freedom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhononModeParams {
    /// Mode frequency (rad/s).
    pub omega_ph: f64,
    /// Real and imaginary parts of the coupling g = g₁ + i g₂ (rad/s).
    pub g1: f64,
    pub g2: f64,
    /// Mechanical quality factor; `f64::INFINITY` disables mode damping.
    pub quality: f64,
    /// Mode temperature (K).
    pub temperature: f64,
    pub n_max: usize,
}

impl PhononModeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_ph > 0.0) {
            return Err(Error::InvalidParameter(format!("omega_ph must be positive, got {}", self.omega_ph)));
        }
        if !(self.quality > 0.0) {
            return Err(Error::InvalidParameter(format!("quality factor must be positive, got {}", self.quality)));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::InvalidParameter(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.n_max < 1 {
            return Err(Error::InvalidParameter("Fock truncation n_max must be >= 1".into()));
        }
        Ok(())
    }

    /// γ_ph = ω_ph / Q.
    pub fn gamma_ph(&self) -> f64 {
        self.omega_ph / self.quality
    }

    pub fn coupling(&self) -> C64 {
        C64::new(self.g1, self.g2)
    }

    pub fn coupling_abs(&self) -> f64 {
        self.g1.hypot(self.g2)
    }

    /// Phase θ_g = atan2(g₂, g₁).
    pub fn coupling_phase(&self) -> f64 {
        self.g2.atan2(self.g1)
    }

    pub fn fock(&self) -> FockSpace {
        FockSpace::new(self.n_max)
    }

    /// Human-readable warnings when the mode sits outside the weak-coupling,
    /// underdamped regime the model assumes.
    pub fn regime_warnings(&self) -> Vec<String> {
        let g = self.coupling_abs();
        let mut out = Vec::new();
        if g > 0.3 * self.omega_ph {
            out.push(format!("|g| = {g:e} exceeds 0.3 omega_ph; weak-coupling assumption violated"));
        }
        if g > 0.0 && g <= self.gamma_ph() {
            out.push(format!("|g| = {g:e} does not exceed gamma_ph = {:e}", self.gamma_ph()));
        }
        out
    }
}

/// Eigenvalues (ascending) with matching eigenvector columns.
#[derive(Clone, Debug)]
pub struct EnergySpectrum {
    pub energies: Vec<f64>,
    pub states: DMatrix<C64>,
}

impl EnergySpectrum {
    pub fn of(h: &OperatorMatrix) -> Result<Self> {
        let (energies, states) = h.eigh()?;
        Ok(Self { energies, states })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `max |H V - V diag(E)|`.
    pub fn residual(&self, h: &OperatorMatrix) -> f64 {
        let lhs = h.matrix() * &self.states;
        let mut worst = 0.0f64;
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                let r = lhs[(i, j)] - self.states[(i, j)] * self.energies[j];
                worst = worst.max(r.norm());
            }
        }
        worst
    }
}

/// Orbital operators on `{e_gx, e_gy}`.
fn orbital_sigma() -> (OperatorMatrix, OperatorMatrix, OperatorMatrix) {
    (pauli::x(), pauli::y(), pauli::z())
}

/// Spin-1/2 operators `S = σ/2` on `{↑, ↓}`.
fn spin_ops() -> [OperatorMatrix; 3] {
    [pauli::x().scale(0.5), pauli::y().scale(0.5), pauli::z().scale(0.5)]
}

/// SiV⁻ ground-manifold Hamiltonian on `{e_gx, e_gy} ⊗ {↑, ↓}` (ħ = 1):
/// `-λ L_z S_z + (γ_x σ_z - γ_y σ_x)/2 - f γ_L B_z L_z + γ_s B·S` with `L_z = σ_y`.
///
/// The orbital Zeeman sign is the one for which the longitudinal spectrum
/// reproduces the closed forms in [`eigenenergies_longitudinal`] exactly.
pub fn build_siv_hamiltonian(p: &SivParams) -> Result<OperatorMatrix> {
    p.validate()?;
    let (sx, sy, sz) = orbital_sigma();
    let id2 = pauli::identity();
    let [spx, spy, spz] = spin_ops();
    let lz = tensor(&sy, &id2)?;
    let s_z = tensor(&id2, &spz)?;
    let mut h = (&lz * &s_z).scale(-p.lambda);
    let jt = (&sz.scale(p.gamma_x) - &sx.scale(p.gamma_y)).scale(0.5);
    h += &tensor(&jt, &id2)?;
    h += &lz.scale(-p.ham_factor * p.gamma_l() * p.field[2]);
    for (b, s) in p.field.iter().zip([spx, spy, spz]) {
        if *b != 0.0 {
            h += &tensor(&id2, &s)?.scale(p.gamma_s * b);
        }
    }
    Ok(h)
}

/// Closed-form longitudinal energies `(E₁, E₂, E₃, E₄)`.
pub fn eigenenergies_longitudinal(p: &SivParams) -> Result<[f64; 4]> {
    p.validate()?;
    if !p.is_longitudinal() {
        return Err(Error::Contract("closed-form energies need a purely longitudinal field".into()));
    }
    let (dp, dm) = p.delta_pm();
    let zs = p.gamma_s * p.field[2];
    Ok([0.5 * (-zs - dm), 0.5 * (zs - dp), 0.5 * (-zs + dm), 0.5 * (zs + dp)])
}

/// Rotates the global phase so that `<reference|v>` is real and positive.
fn fix_phase(v: &mut [C64; 2], reference: [C64; 2]) {
    let overlap = reference[0].conj() * v[0] + reference[1].conj() * v[1];
    if overlap.norm() < 1e-12 {
        return;
    }
    let phase = overlap / overlap.norm();
    v[0] /= phase;
    v[1] /= phase;
}

/// Columns are `|1>, |2>, |3>, |4>` in the orbital ⊗ spin basis, from the
/// longitudinal part of the Hamiltonian. Within each spin block the lower
/// eigenvector is the manifold ground state; phases follow `|e±> = (|x> ± i|y>)/√2`.
pub fn reference_basis(p: &SivParams) -> Result<DMatrix<C64>> {
    let h = build_siv_hamiltonian(&p.longitudinal())?;
    let mut u = DMatrix::<C64>::zeros(4, 4);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let e_plus = [C64::new(s, 0.0), C64::new(0.0, s)];
    let e_minus = [C64::new(s, 0.0), C64::new(0.0, -s)];
    // spin ↑ is index 0, ↓ index 1; orbital x is 0, y is 1
    for (spin, (lower, upper), refs) in [
        (1usize, (STATE_1, STATE_3), (e_minus, e_plus)),
        (0usize, (STATE_2, STATE_4), (e_plus, e_minus)),
    ] {
        let idx = [spin, 2 + spin];
        let block = Matrix2::from_fn(|i, j| h.get(idx[i], idx[j]));
        let block = (block + block.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = block.symmetric_eigen();
        let (lo, hi) = if eig.eigenvalues[0] <= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
        for (col, k, reference) in [(lower, lo, refs.0), (upper, hi, refs.1)] {
            let mut v = [eig.eigenvectors[(0, k)], eig.eigenvectors[(1, k)]];
            fix_phase(&mut v, reference);
            u[(idx[0], col)] = v[0];
            u[(idx[1], col)] = v[1];
        }
    }
    Ok(u)
}

/// SiV⁻ Hamiltonian expressed in the labelled basis `{|1>..|4>}`.
pub fn siv_hamiltonian_labelled(p: &SivParams) -> Result<OperatorMatrix> {
    let h = build_siv_hamiltonian(p)?;
    let u = reference_basis(p)?;
    Ok(h.conjugate_by(&u).hermitian_part())
}

/// Orbital raising operator `L+ = |3><1| + |2><4|` in the labelled basis.
pub fn orbital_raising() -> OperatorMatrix {
    let mut l = OperatorMatrix::zeros(4);
    l.set(STATE_3, STATE_1, ONE);
    l.set(STATE_2, STATE_4, ONE);
    l
}

pub fn orbital_lowering() -> OperatorMatrix {
    orbital_raising().adjoint()
}

/// Energy-lowering operator `|1><3| + |2><4|` acting within each manifold.
pub fn manifold_lowering() -> OperatorMatrix {
    let mut l = OperatorMatrix::zeros(4);
    l.set(STATE_1, STATE_3, ONE);
    l.set(STATE_2, STATE_4, ONE);
    l
}

fn mode_terms(system: &OperatorMatrix, m: &PhononModeParams) -> Result<OperatorMatrix> {
    m.validate()?;
    let fock = m.fock();
    let sys_dim = system.dim();
    let mut h = tensor(system, &fock.identity())?;
    h += &tensor(&OperatorMatrix::identity(sys_dim), &fock.number())?.scale(m.omega_ph);
    let g = m.coupling();
    let coupling = &orbital_raising().scale_c(g) + &orbital_lowering().scale_c(g.conj());
    h += &tensor(&coupling, &fock.position())?;
    Ok(h)
}

/// Full system + mode Hamiltonian
/// `H_SiV + ω_ph c†c + (c† + c)[g₁(L- + L+) - i g₂(L- - L+)]`
/// on the labelled basis ⊗ Fock space.
pub fn build_full_hamiltonian(p: &SivParams, m: &PhononModeParams) -> Result<OperatorMatrix> {
    let h_sys = siv_hamiltonian_labelled(p)?;
    mode_terms(&h_sys, m)
}

/// Transverse-field model: closed-form longitudinal energies plus the
/// `(b_x/2)(|1><4| + |2><3| + h.c.)` mixing, with `b_x = γ_s B_x`.
pub fn build_transverse_hamiltonian(p: &SivParams, m: &PhononModeParams) -> Result<OperatorMatrix> {
    if p.field[1] != 0.0 {
        return Err(Error::Contract("transverse model requires B_y = 0".into()));
    }
    let energies = eigenenergies_longitudinal(&p.longitudinal())?;
    let mut h_sys = OperatorMatrix::from_diagonal(&energies);
    let half_bx = C64::new(0.5 * p.gamma_s * p.field[0], 0.0);
    for (a, b) in [(STATE_1, STATE_4), (STATE_2, STATE_3)] {
        h_sys.set(a, b, half_bx);
        h_sys.set(b, a, half_bx);
    }
    mode_terms(&h_sys, m)
}

/// Two-level manifold selected for the effective Rabi reduction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Manifold {
    /// `{|1>, |3>}` (spin down).
    H1,
    /// `{|2>, |4>}` (spin up).
    H2,
}

impl Manifold {
    /// Labelled indices `(ground, excited)`.
    pub fn states(self) -> (usize, usize) {
        match self {
            Manifold::H1 => (STATE_1, STATE_3),
            Manifold::H2 => (STATE_2, STATE_4),
        }
    }
}

/// Two-level system coupled to one mode, basis `{|g>, |e>} ⊗ Fock`.
#[derive(Clone, Debug, PartialEq)]
pub struct RabiModel {
    pub omega_s: f64,
    pub omega_ph: f64,
    pub coupling: C64,
    pub fock: FockSpace,
}

impl RabiModel {
    fn two_level(&self) -> (OperatorMatrix, OperatorMatrix) {
        // index 0 = |g>, 1 = |e>
        let sz = OperatorMatrix::from_diagonal(&[-1.0, 1.0]);
        let s_plus = OperatorMatrix::unit(2, 1, 0);
        (sz, s_plus)
    }

    fn bare(&self) -> Result<OperatorMatrix> {
        let (sz, _) = self.two_level();
        let mut h = tensor(&sz, &self.fock.identity())?.scale(0.5 * self.omega_s);
        h += &tensor(&OperatorMatrix::identity(2), &self.fock.number())?.scale(self.omega_ph);
        Ok(h)
    }

    /// `ω_s S_z/2 + ω_ph c†c + (c + c†)(g* S+ + g S-)`.
    pub fn hamiltonian(&self) -> Result<OperatorMatrix> {
        let (_, sp) = self.two_level();
        let sm = sp.adjoint();
        let g = self.coupling;
        let mut h = self.bare()?;
        let c = &sp.scale_c(g.conj()) + &sm.scale_c(g);
        h += &tensor(&c, &self.fock.position())?;
        Ok(h)
    }

    pub fn theta(&self) -> f64 {
        self.coupling.im.atan2(self.coupling.re)
    }

    /// Rotation `|φ> = W |ψ>` taking the Rabi Hamiltonian to its canonical
    /// real form, in the basis `{|e>, |g>}` used for `H_R`.
    pub fn canonical_rotation(&self) -> Result<OperatorMatrix> {
        let half = 0.5 * self.theta();
        let p = C64::from_polar(std::f64::consts::FRAC_1_SQRT_2, half);
        let m = C64::from_polar(std::f64::consts::FRAC_1_SQRT_2, -half);
        let w = OperatorMatrix::from_row_major(&[p, m, p, -m])?;
        tensor(&w, &self.fock.identity())
    }

    /// Reorders `{|g>, |e>} ⊗ Fock` into `{|e>, |g>} ⊗ Fock`.
    pub fn swap_levels(&self) -> Result<OperatorMatrix> {
        tensor(&pauli::x(), &self.fock.identity())
    }

    /// Canonical form with the coupling phase removed:
    /// `[[ω_ph c†c + |g|(c†+c), ω_s/2], [ω_s/2, ω_ph c†c - |g|(c†+c)]]`,
    /// block rows ordered `(φ₁, φ₂)`.
    pub fn canonical(&self) -> Result<OperatorMatrix> {
        let g = self.coupling.norm();
        let n = self.fock.number().scale(self.omega_ph);
        let x = self.fock.position().scale(g);
        let mut h = tensor(&OperatorMatrix::from_diagonal(&[1.0, 0.0]), &(&n + &x))?;
        h += &tensor(&OperatorMatrix::from_diagonal(&[0.0, 1.0]), &(&n - &x))?;
        h += &tensor(&pauli::x(), &self.fock.identity())?.scale(0.5 * self.omega_s);
        Ok(h)
    }

    /// Rotating-wave reduction
    /// `ω_s S_z/2 + ω_ph c†c + |g|(e^{iθ} c S+ + e^{-iθ} c† S-)`.
    pub fn jaynes_cummings(&self) -> Result<OperatorMatrix> {
        let g = self.coupling.norm();
        if g > 0.1 * self.omega_s {
            log::warn!("Jaynes-Cummings reduction with |g| = {g:e} > 0.1 omega_s");
        }
        let (_, sp) = self.two_level();
        let a = self.fock.annihilation();
        let phase = C64::from_polar(g, self.theta());
        let mut h = self.bare()?;
        let term = tensor(&sp, &a)?.scale_c(phase);
        h += &term;
        h += &term.adjoint();
        Ok(h)
    }

    /// Excitation number `S_z/2 + c†c` (conserved by the JC Hamiltonian).
    pub fn excitation_number(&self) -> Result<OperatorMatrix> {
        let (sz, _) = self.two_level();
        let mut n = tensor(&sz, &self.fock.identity())?.scale(0.5);
        n += &tensor(&OperatorMatrix::identity(2), &self.fock.number())?;
        Ok(n)
    }
}

/// Effective Rabi model of one manifold for a longitudinal field.
pub fn effective_rabi_model(p: &SivParams, m: &PhononModeParams, manifold: Manifold) -> Result<RabiModel> {
    if !p.is_longitudinal() {
        return Err(Error::Contract("effective Rabi model requires a longitudinal field".into()));
    }
    m.validate()?;
    let e = eigenenergies_longitudinal(p)?;
    let (g_idx, e_idx) = manifold.states();
    Ok(RabiModel { omega_s: e[e_idx] - e[g_idx], omega_ph: m.omega_ph, coupling: m.coupling(), fock: m.fock() })
}

pub fn effective_rabi(p: &SivParams, m: &PhononModeParams, manifold: Manifold) -> Result<OperatorMatrix> {
    effective_rabi_model(p, m, manifold)?.hamiltonian()
}

pub fn canonicalize_rabi(model: &RabiModel) -> Result<OperatorMatrix> {
    model.canonical()
}

pub fn jaynes_cummings(model: &RabiModel) -> Result<OperatorMatrix> {
    model.jaynes_cummings()
}

/// Indices of `manifold ⊗ Fock` inside the labelled ⊗ Fock space.
pub fn manifold_indices(manifold: Manifold, fock: FockSpace) -> Vec<usize> {
    let (g, e) = manifold.states();
    let f = fock.dim();
    (0..f).map(|n| g * f + n).chain((0..f).map(|n| e * f + n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::ghz_to_rad;

    fn reference_params() -> SivParams {
        SivParams::from_ghz(45.0, 1.0, 1.0).unwrap()
    }

    fn mode(omega_ph: f64, g1: f64, g2: f64, n_max: usize) -> PhononModeParams {
        PhononModeParams { omega_ph, g1, g2, quality: 1e5, temperature: 0.0, n_max }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn pure_spin_orbit_spectrum() {
        let p = SivParams::from_ghz(45.0, 0.0, 0.0).unwrap();
        let ev = build_siv_hamiltonian(&p).unwrap().eigvalsh().unwrap();
        let l = p.lambda;
        let expected = [-l / 2.0, -l / 2.0, l / 2.0, l / 2.0];
        for (a, b) in ev.iter().zip(expected) {
            assert!((a - b).abs() < 1e-9 * l);
        }
    }

    #[test]
    fn zero_field_gap_equals_delta() {
        let p = reference_params();
        let ev = build_siv_hamiltonian(&p).unwrap().eigvalsh().unwrap();
        let expected = ghz_to_rad((45.0f64.powi(2) + 2.0).sqrt());
        assert!(rel(ev[2] - ev[0], expected) < 1e-12);
        assert!(rel(p.delta(), expected) < 1e-14);
        assert!((crate::units::rad_to_ghz(p.delta()) - 45.022).abs() < 1e-3);
    }

    #[test]
    fn gap_of_48_ghz() {
        // λ chosen so that sqrt(λ² + γx² + γy²) = 48 GHz with γ = (1.5, 2.5) GHz
        let gx: f64 = 1.5;
        let gy: f64 = 2.5;
        let lam = (48.0f64.powi(2) - gx * gx - gy * gy).sqrt();
        let p = SivParams::from_ghz(lam, gx, gy).unwrap();
        let ev = build_siv_hamiltonian(&p).unwrap().eigvalsh().unwrap();
        assert!((crate::units::rad_to_ghz(ev[2] - ev[0]) - 48.0).abs() < 1e-9);
    }

    #[test]
    fn closed_form_zero_field() {
        let p = reference_params();
        let e = eigenenergies_longitudinal(&p).unwrap();
        assert!(rel(e[2] - e[0], p.delta()) < 1e-14);
        assert!(rel(e[3] - e[1], p.delta()) < 1e-14);
    }

    #[test]
    fn closed_form_small_field_splitting() {
        let p0 = reference_params();
        let bz = 0.01 * p0.delta() / p0.gamma_s;
        let p = p0.with_field([0.0, 0.0, bz]);
        let e = eigenenergies_longitudinal(&p).unwrap();
        let (dp, dm) = p.delta_pm();
        let expected = p.gamma_s * bz + 0.5 * (dm - dp);
        assert!((e[1] - e[0] - expected).abs() < 1e-12 * p.delta());
    }

    #[test]
    fn closed_form_matches_eigensolve() {
        let p0 = reference_params();
        let mut worst = 0.0f64;
        for k in 0..50 {
            // deterministic pseudo-random fields in [0, 100] T
            let bz = 100.0 * ((k as f64 * 0.618_033_988_75).fract());
            let p = p0.clone().with_field([0.0, 0.0, bz]);
            let closed = eigenenergies_longitudinal(&p).unwrap();
            let h = siv_hamiltonian_labelled(&p).unwrap();
            for i in 0..4 {
                worst = worst.max(rel(h.get(i, i).re, closed[i]));
            }
            let mut sorted = closed;
            sorted.sort_by(f64::total_cmp);
            let numeric = build_siv_hamiltonian(&p).unwrap().eigvalsh().unwrap();
            for i in 0..4 {
                worst = worst.max((numeric[i] - sorted[i]).abs() / p.delta());
            }
        }
        assert!(worst < 1e-6, "worst relative deviation {worst:e}");
    }

    #[test]
    fn closed_form_rejects_transverse_field() {
        let p = reference_params().with_field([1.0, 0.0, 1.0]);
        assert!(matches!(eigenenergies_longitudinal(&p), Err(Error::Contract(_))));
    }

    #[test]
    fn labelled_states_have_expected_character() {
        let p = SivParams::from_ghz(45.0, 0.0, 0.0).unwrap().with_field([0.0, 0.0, 3.0]);
        let u = reference_basis(&p).unwrap();
        let isq = std::f64::consts::FRAC_1_SQRT_2;
        // |e±> = (|x> ± i|y>)/√2 ; orbital⊗spin index = 2*orb + spin
        let e_minus_down = [C64::new(0.0, 0.0), C64::new(isq, 0.0), C64::new(0.0, 0.0), C64::new(0.0, -isq)];
        let e_plus_up = [C64::new(isq, 0.0), C64::new(0.0, 0.0), C64::new(0.0, isq), C64::new(0.0, 0.0)];
        let overlap = |col: usize, v: &[C64; 4]| -> f64 {
            (0..4).map(|i| v[i].conj() * u[(i, col)]).sum::<C64>().norm()
        };
        assert!((overlap(STATE_1, &e_minus_down) - 1.0).abs() < 1e-12);
        assert!((overlap(STATE_2, &e_plus_up) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_hamiltonian_uncoupled_spectrum() {
        let p = reference_params().with_field([0.0, 0.0, 2.0]);
        let m = mode(p.delta(), 0.0, 0.0, 1);
        let h = build_full_hamiltonian(&p, &m).unwrap();
        let e = eigenenergies_longitudinal(&p).unwrap();
        let mut expected: Vec<f64> = e.iter().flat_map(|&x| [x, x + m.omega_ph]).collect();
        expected.sort_by(f64::total_cmp);
        let got = h.eigvalsh().unwrap();
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9 * p.delta());
        }
    }

    #[test]
    fn full_hamiltonian_is_hermitian() {
        let p = reference_params().with_field([3.0, 0.0, 5.0]);
        let m = mode(p.delta(), 1e-3 * p.delta(), 2e-3 * p.delta(), 4);
        let h = build_full_hamiltonian(&p, &m).unwrap();
        assert!(h.hermiticity_error() <= 1e-12 * h.max_abs());
        let ht = build_transverse_hamiltonian(&p, &m).unwrap();
        assert!(ht.hermiticity_error() <= 1e-12 * ht.max_abs());
    }

    #[test]
    fn transverse_limit_matches_longitudinal() {
        let p = reference_params().with_field([0.0, 0.0, 7.0]);
        let m = mode(p.delta(), 1e-3 * p.delta(), 0.0, 3);
        let a = build_transverse_hamiltonian(&p, &m).unwrap();
        let b = build_full_hamiltonian(&p, &m).unwrap();
        assert!((&a - &b).max_abs() < 1e-6 * p.delta());
    }

    #[test]
    fn transverse_blocks_closed_form() {
        let p = reference_params().with_field([4.0, 0.0, 9.0]);
        let m = mode(p.delta(), 0.0, 0.0, 1);
        let h = build_transverse_hamiltonian(&p, &m).unwrap();
        let e = eigenenergies_longitudinal(&p.clone().with_field([0.0, 0.0, 9.0])).unwrap();
        let bx = p.gamma_s * 4.0;
        let mut expected = Vec::new();
        for (a, b) in [(0usize, 3usize), (1, 2)] {
            let mid = 0.5 * (e[a] + e[b]);
            let r = ((0.5 * (e[a] - e[b])).powi(2) + (0.5 * bx).powi(2)).sqrt();
            for k in 0..2 {
                expected.push(mid - r + k as f64 * m.omega_ph);
                expected.push(mid + r + k as f64 * m.omega_ph);
            }
        }
        expected.sort_by(f64::total_cmp);
        let got = h.eigvalsh().unwrap();
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9 * p.delta(), "{a} vs {b}");
        }
    }

    #[test]
    fn transverse_agrees_with_full_without_jahn_teller() {
        let p = SivParams::from_ghz(45.0, 0.0, 0.0).unwrap().with_field([6.0, 0.0, 11.0]);
        let m = mode(p.delta(), 1e-3 * p.delta(), 1e-3 * p.delta(), 2);
        let a = build_transverse_hamiltonian(&p, &m).unwrap();
        let b = build_full_hamiltonian(&p, &m).unwrap();
        assert!((&a - &b).max_abs() < 1e-6 * p.delta());
    }

    #[test]
    fn spectrum_reflection_symmetry() {
        let p0 = reference_params();
        let m = mode(p0.delta(), 1e-2 * p0.delta(), 1e-2 * p0.delta(), 3);
        for k in 0..10 {
            let bx = 200.0 * ((k as f64 * 0.754_877_666).fract());
            let bz = 200.0 * ((k as f64 * 0.569_840_291).fract());
            let base = build_transverse_hamiltonian(&p0.clone().with_field([bx, 0.0, bz]), &m)
                .unwrap()
                .eigvalsh()
                .unwrap();
            for field in [[-bx, 0.0, bz], [bx, 0.0, -bz]] {
                let other = build_transverse_hamiltonian(&p0.clone().with_field(field), &m)
                    .unwrap()
                    .eigvalsh()
                    .unwrap();
                for (a, b) in base.iter().zip(&other) {
                    assert!((a - b).abs() <= 1e-9 * a.abs().max(p0.delta()), "{field:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn effective_rabi_zero_field_frequency() {
        let p = reference_params();
        let m = mode(p.delta(), 1e-3 * p.delta(), 0.0, 3);
        for manifold in [Manifold::H1, Manifold::H2] {
            let r = effective_rabi_model(&p, &m, manifold).unwrap();
            assert!(rel(r.omega_s, p.delta()) < 1e-14);
        }
    }

    #[test]
    fn effective_rabi_matches_full_block() {
        let p = reference_params().with_field([0.0, 0.0, 12.0]);
        let m = mode(p.delta(), 2e-2 * p.delta(), 1e-2 * p.delta(), 5);
        let full = build_full_hamiltonian(&p, &m).unwrap();
        let e = eigenenergies_longitudinal(&p).unwrap();
        for manifold in [Manifold::H1, Manifold::H2] {
            let (g, x) = manifold.states();
            let shift = 0.5 * (e[g] + e[x]);
            let block = full.restrict(&manifold_indices(manifold, m.fock()));
            let a = block.eigvalsh().unwrap();
            let b = effective_rabi(&p, &m, manifold).unwrap().eigvalsh().unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - shift - y).abs() < 1e-9 * p.delta(), "{manifold:?}");
            }
        }
    }

    #[test]
    fn effective_rabi_rejects_transverse() {
        let p = reference_params().with_field([1.0, 0.0, 0.0]);
        let m = mode(p.delta(), 1e-3, 0.0, 2);
        assert!(matches!(effective_rabi(&p, &m, Manifold::H1), Err(Error::Contract(_))));
    }

    fn rabi(theta: f64) -> RabiModel {
        RabiModel {
            omega_s: 1.0,
            omega_ph: 0.9,
            coupling: C64::from_polar(0.05, theta),
            fock: FockSpace::new(12),
        }
    }

    #[test]
    fn canonical_form_preserves_spectrum() {
        let reference = rabi(0.0).hamiltonian().unwrap().eigvalsh().unwrap();
        for k in 0..12 {
            let theta = k as f64 * 0.55;
            let model = rabi(theta);
            let h = model.hamiltonian().unwrap();
            let hr = canonicalize_rabi(&model).unwrap();
            let a = h.eigvalsh().unwrap();
            let b = hr.eigvalsh().unwrap();
            for ((x, y), z) in a.iter().zip(&b).zip(&reference) {
                assert!((x - y).abs() < 1e-10);
                assert!((x - z).abs() < 1e-10);
            }
            // explicit similarity W H W† in the {e, g} ordering
            let swap = model.swap_levels().unwrap();
            let w = model.canonical_rotation().unwrap();
            let h_eg = &(&swap * &h) * &swap;
            let rotated = &(&w * &h_eg) * &w.adjoint();
            assert!((&rotated - &hr).max_abs() < 1e-12);
        }
    }

    #[test]
    fn jaynes_cummings_conserves_excitations() {
        let model = rabi(0.7);
        let h = jaynes_cummings(&model).unwrap();
        let n = model.excitation_number().unwrap();
        assert!(h.commutator(&n).max_abs() < 1e-12);
    }

    #[test]
    fn jaynes_cummings_block_splittings() {
        for (omega_ph, omega_s) in [(1.0, 1.0), (1.3, 1.0)] {
            let model = RabiModel { omega_s, omega_ph, coupling: C64::new(0.02, 0.01), fock: FockSpace::new(6) };
            let h = jaynes_cummings(&model).unwrap();
            let g = model.coupling.norm();
            let f = model.fock.dim();
            for n in 1..6 {
                // {|g,n>, |e,n-1>}
                let block = h.restrict(&[n, f + n - 1]);
                let ev = block.eigvalsh().unwrap();
                let delta = omega_ph - omega_s;
                let expected = (delta * delta + 4.0 * g * g * n as f64).sqrt();
                assert!((ev[1] - ev[0] - expected).abs() < 1e-12);
            }
        }
    }
}

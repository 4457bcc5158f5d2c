//! Non-Markovianity quantifiers.
//!
//! All integrals `∫_{Ḋ>0} Ḋ dt` are evaluated as sums of positive sampled
//! increments; no numerical differentiation is involved.

use nalgebra::{DMatrix, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::Trajectory;
use crate::quantum::{trace_distance, DensityMatrix, OperatorMatrix, C64, ZERO};

/// Minimum number of samples accepted by the sampled measures.
pub const MIN_SAMPLES: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmResult {
    pub value: f64,
    /// Maximal runs of consecutive increasing samples `(t_start, t_end)`.
    pub intervals: Vec<(f64, f64)>,
    /// `(window, samples)` of the sampled series.
    pub resolution: (f64, usize),
    pub provenance: String,
}

/// Sum of positive increments and the intervals where the series rises.
pub fn positive_increments(times: &[f64], values: &[f64]) -> Result<(f64, Vec<(f64, f64)>)> {
    if times.len() != values.len() {
        return Err(Error::Contract(format!("{} times but {} values", times.len(), values.len())));
    }
    if values.len() < MIN_SAMPLES {
        return Err(Error::Resolution(format!("{} samples, at least {MIN_SAMPLES} required", values.len())));
    }
    let mut total = 0.0;
    let mut intervals = Vec::new();
    let mut open: Option<usize> = None;
    for k in 0..values.len() - 1 {
        let inc = values[k + 1] - values[k];
        if inc > 0.0 {
            total += inc;
            if open.is_none() {
                open = Some(k);
            }
        } else if let Some(s) = open.take() {
            intervals.push((times[s], times[k]));
        }
    }
    if let Some(s) = open {
        intervals.push((times[s], times[values.len() - 1]));
    }
    Ok((total, intervals))
}

/// Measure from an already sampled trace-distance series.
pub fn nm_from_series(times: &[f64], d: &[f64], provenance: impl Into<String>) -> Result<NmResult> {
    let (value, intervals) = positive_increments(times, d)?;
    let window = times.last().copied().unwrap_or(0.0) - times.first().copied().unwrap_or(0.0);
    Ok(NmResult { value, intervals, resolution: (window, times.len()), provenance: provenance.into() })
}

/// Trace distance of each snapshot to `reference`.
pub fn trace_distance_series(traj: &Trajectory, reference: &DensityMatrix) -> Result<Vec<f64>> {
    traj.states.iter().map(|s| trace_distance(s, reference)).collect()
}

/// `N_D = Σ max(0, D_{k+1} - D_k)` with `D_k = ½‖ρ_s(t_k) - ρ_SS‖`.
///
/// Also stores the series as the `"D"` scalar of the returned trajectory copy
/// via [`dynamical_nm_series`]; this variant only returns the result.
pub fn dynamical_nm(traj: &Trajectory, rho_ss: &DensityMatrix) -> Result<NmResult> {
    Ok(dynamical_nm_series(traj, rho_ss)?.0)
}

pub fn dynamical_nm_series(traj: &Trajectory, rho_ss: &DensityMatrix) -> Result<(NmResult, Vec<f64>)> {
    if traj.len() < MIN_SAMPLES {
        return Err(Error::Resolution(format!("{} samples, at least {MIN_SAMPLES} required", traj.len())));
    }
    let d = trace_distance_series(traj, rho_ss)?;
    let last = *d.last().expect("non-empty");
    let mut provenance = String::from("dynamical measure against steady state");
    if last >= 1e-3 {
        log::warn!("trace distance at end of window is {last:e}; steady state not reached");
        provenance.push_str(&format!("; final D = {last:e} (steady state not reached)"));
    }
    let res = nm_from_series(&traj.times, &d, provenance)?;
    Ok((res, d))
}

/// Parameters of the resonant two-level manifold `{|g,n+1>, |e,n>}`
/// coupled with `|Ω_n| = |g|√(n+1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldParams {
    pub omega_n: f64,
    /// Γ = γ_ph(2N(ω_ph)+1) + Γ_SiV(2N(Δ)+1)
    pub gamma_big: f64,
    /// γ₁ = γ_ph N(ω_ph) + Γ_SiV(N(Δ)+1)
    pub gamma_1: f64,
    /// Γ₀ = 3Γ/4
    pub gamma_0: f64,
    /// μ² = (2|Ω_n|)² - (Γ/4)²; NaN when negative.
    pub mu: f64,
    pub rho11_0: f64,
    pub rho12_0: C64,
    pub rho11_ss: f64,
    pub c1: f64,
    /// `(Γ₀C₁ - γ₁ - Γρ₁₂(0))/μ` as used by the closed-form trace distance.
    pub c2: f64,
    pub alpha1: f64,
    /// Phase offset of the zeros of `f`, located from `f` itself.
    pub alpha2: f64,
}

impl ManifoldParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        g_abs: f64,
        n: usize,
        gamma_ph: f64,
        n_ph: f64,
        gamma_siv: f64,
        n_delta: f64,
        rho11_0: f64,
        rho12_0: C64,
    ) -> Result<Self> {
        for (name, v) in [("|g|", g_abs), ("gamma_ph", gamma_ph), ("N(omega_ph)", n_ph), ("Gamma_SiV", gamma_siv), ("N(Delta)", n_delta)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        let omega_n = g_abs * ((n + 1) as f64).sqrt();
        let gamma_big = gamma_ph * (2.0 * n_ph + 1.0) + gamma_siv * (2.0 * n_delta + 1.0);
        let gamma_1 = gamma_ph * n_ph + gamma_siv * (n_delta + 1.0);
        let gamma_0 = 0.75 * gamma_big;
        let mu_sq = 4.0 * omega_n * omega_n - (gamma_big / 4.0).powi(2);
        let mu = if mu_sq > 0.0 { mu_sq.sqrt() } else { f64::NAN };
        let rho11_ss = (4.0 * omega_n * omega_n - gamma_1 * gamma_big) / (8.0 * omega_n * omega_n + gamma_big * gamma_big);
        let c1 = rho11_0 - rho11_ss;
        let c2 = (gamma_0 * c1 - gamma_1 - gamma_big * rho12_0.re) / mu;
        let alpha1 = (c2 / c1).atan();
        // zeros of C₁cos(μt) + C₂sin(μt) sit at μt = atan2(C₂, C₁) + π/2 + kπ
        let alpha2 = c2.atan2(c1).rem_euclid(std::f64::consts::PI);
        Ok(Self { omega_n, gamma_big, gamma_1, gamma_0, mu, rho11_0, rho12_0, rho11_ss, c1, c2, alpha1, alpha2 })
    }

    /// Manifold reached from initial phonon number `phonons ≥ 1` with the
    /// system in its ground state: `n = phonons - 1`, `ρ₁₁(0) = 1`, `ρ₁₂(0) = 0`.
    pub fn from_fock_state(g_abs: f64, phonons: usize, gamma_ph: f64, n_ph: f64, gamma_siv: f64, n_delta: f64) -> Result<Self> {
        if phonons == 0 {
            return Err(Error::InvalidParameter("the resonant manifold needs at least one phonon".into()));
        }
        Self::new(g_abs, phonons - 1, gamma_ph, n_ph, gamma_siv, n_delta, 1.0, ZERO)
    }

    pub fn mu_is_real(&self) -> bool {
        self.mu.is_finite()
    }

    fn require_real_mu(&self) -> Result<()> {
        if self.mu_is_real() {
            Ok(())
        } else {
            Err(Error::Regime(format!(
                "mu is not real: 4|Omega_n|^2 = {:e} <= (Gamma/4)^2 = {:e}",
                4.0 * self.omega_n.powi(2),
                (self.gamma_big / 4.0).powi(2)
            )))
        }
    }

    /// The α₂ expression as printed alongside the extremal times, reading
    /// its ambiguous symbol as `μC₁`. Exposed for comparison only.
    pub fn alpha2_printed(&self) -> f64 {
        let num = self.mu * self.c1 + self.gamma_0 * self.c2;
        let den = self.mu * self.c2 - self.gamma_0 * self.c1;
        std::f64::consts::PI - (num / den).abs().atan()
    }
}

/// Exact solution of the manifold equations
/// `ρ̇₁₁ = -Γρ₁₁ - γ₁ - iΩρ₂₁ + iΩ*ρ₁₂`, `ρ̇₁₂ = -Γ/2 ρ₁₂ + 2iΩρ₁₁ - iΩ`
/// (Ω taken real and non-negative) via the matrix exponential of the
/// real 3×3 linear system. Valid for any parameters, real μ or not.
pub fn manifold_rate_solution(p: &ManifoldParams, rho11_0: f64, rho12_0: C64, t: f64) -> (f64, C64) {
    let (m, b) = manifold_system(p);
    let ss = manifold_fixed_point(&m, &b);
    let x0 = nalgebra::Vector3::new(rho11_0, rho12_0.re, rho12_0.im);
    let x = ss + (m * t).exp() * (x0 - ss);
    (x[0], C64::new(x[1], x[2]))
}

/// `(M, b)` with `ẋ = Mx + b`, `x = (ρ₁₁, Re ρ₁₂, Im ρ₁₂)`.
pub fn manifold_system(p: &ManifoldParams) -> (nalgebra::Matrix3<f64>, nalgebra::Vector3<f64>) {
    let g = p.gamma_big;
    let w = p.omega_n;
    // -iΩρ₂₁ + iΩρ₁₂ = -2Ω Im ρ₁₂
    let m = nalgebra::Matrix3::new(-g, 0.0, -2.0 * w, 0.0, -g / 2.0, 0.0, 2.0 * w, 0.0, -g / 2.0);
    let b = nalgebra::Vector3::new(-p.gamma_1, 0.0, -w);
    (m, b)
}

fn manifold_fixed_point(m: &nalgebra::Matrix3<f64>, b: &nalgebra::Vector3<f64>) -> nalgebra::Vector3<f64> {
    m.lu().solve(&(-b)).unwrap_or_else(nalgebra::Vector3::zeros)
}

/// `f(t) = C₁ cos μt + C₂ sin μt`.
pub fn analytic_f(p: &ManifoldParams, t: f64) -> f64 {
    p.c1 * (p.mu * t).cos() + p.c2 * (p.mu * t).sin()
}

/// `D(t) = |f(t)| e^{-Γ₀ t}`.
pub fn analytic_trace_distance(p: &ManifoldParams, t: f64) -> Result<f64> {
    p.require_real_mu()?;
    Ok(analytic_f(p, t).abs() * (-p.gamma_0 * t).exp())
}

/// First `count` positive zeros of `f`.
pub fn analytic_zeros(p: &ManifoldParams, count: usize) -> Result<Vec<f64>> {
    p.require_real_mu()?;
    let pi = std::f64::consts::PI;
    let base = p.c2.atan2(p.c1) + pi / 2.0;
    let mut k = (-base / pi).ceil();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let t = (base + k * pi) / p.mu;
        if t > 0.0 {
            out.push(t);
        }
        k += 1.0;
    }
    Ok(out)
}

/// Closed-form estimate `¼ e^{-α₁Γ₀/μ} csch(Γ₀π/(2μ))`: the peaks
/// `D(t_n^max) ≈ ½ e^{-Γ₀ t_n^max}` at `t_n^max = (nπ - π/2 + α₁)/μ`,
/// summed as a geometric series over `n ≥ 1`.
pub fn analytic_nd(p: &ManifoldParams) -> Result<f64> {
    p.require_real_mu()?;
    let x = p.gamma_0 * std::f64::consts::PI / (2.0 * p.mu);
    if x == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(0.25 * (-p.alpha1 * p.gamma_0 / p.mu).exp() / x.sinh())
}

/// Exact `∫_{Ḋ>0} Ḋ dt` of the closed-form `D(t)`: rising arcs run from
/// each zero of `f` to the next maximum of `|f| e^{-Γ₀t}`.
pub fn analytic_arc_sum(p: &ManifoldParams) -> Result<f64> {
    p.require_real_mu()?;
    let pi = std::f64::consts::PI;
    let phi = p.c2.atan2(p.c1);
    let shift = (p.gamma_0 / p.mu).atan();
    let d = |t: f64| analytic_f(p, t).abs() * (-p.gamma_0 * t).exp();
    let mut total = 0.0;
    // maxima at μt = φ - atan(Γ₀/μ) + kπ, zeros at μt = φ + π/2 + kπ
    let mut k = ((shift - phi) / pi).floor() - 1.0;
    loop {
        let t_max = (phi - shift + k * pi) / p.mu;
        k += 1.0;
        if t_max <= 0.0 {
            continue;
        }
        let t_zero = (phi + pi / 2.0 + (k - 2.0) * pi) / p.mu;
        let start = t_zero.max(0.0);
        let peak = d(t_max);
        if start < t_max {
            total += peak - d(start);
        }
        if peak < 1e-16 * (total.max(1e-300)) || (-p.gamma_0 * t_max).exp() < 1e-17 {
            break;
        }
    }
    Ok(total)
}

/// Bloch angles `(θ₁, θ₂, φ₁, φ₂)` of an orbital ⊗ spin product state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochAngles(pub [f64; 4]);

impl BlochAngles {
    pub const UPPER: [f64; 4] = [std::f64::consts::PI, std::f64::consts::PI, 2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI];

    pub fn check(&self) -> Result<()> {
        for (k, (&v, &ub)) in self.0.iter().zip(&Self::UPPER).enumerate() {
            if !(v >= 0.0 && v <= ub) {
                return Err(Error::Contract(format!("angle {k} = {v} outside [0, {ub}]")));
            }
        }
        Ok(())
    }

    /// Splits an 8-vector `(x₁, x₂)` of the optimisation problem.
    pub fn pair(x: &[f64]) -> Result<(Self, Self)> {
        if x.len() != 8 {
            return Err(Error::Dimension(format!("expected 8 angles, got {}", x.len())));
        }
        Ok((Self([x[0], x[1], x[2], x[3]]), Self([x[4], x[5], x[6], x[7]])))
    }
}

/// Box bounds of the 8-angle problem: `0 ≤ x ≤ π[1,1,2,2,1,1,2,2]`.
pub fn blp_bounds() -> (Vec<f64>, Vec<f64>) {
    let ub = BlochAngles::UPPER;
    (vec![0.0; 8], ub.iter().chain(ub.iter()).copied().collect())
}

/// `|Ψ_orb> ⊗ |Ψ_spin>` with `|Ψ_orb> = cos(θ₁/2)|e_x> + e^{iφ₁} sin(θ₁/2)|e_y>`
/// and `|Ψ_spin> = cos(θ₂/2)|↑> + e^{iφ₂} sin(θ₂/2)|↓>`, in the orbital ⊗
/// spin basis `{x↑, x↓, y↑, y↓}`.
pub fn initial_state_from_angles(x: &BlochAngles) -> Result<DensityMatrix> {
    x.check()?;
    Ok(DensityMatrix::from_pure(&product_vector(x))?.with_label("bloch product state"))
}

fn product_vector(x: &BlochAngles) -> [C64; 4] {
    let [t1, t2, p1, p2] = x.0;
    let orb = [C64::new((t1 / 2.0).cos(), 0.0), C64::from_polar((t1 / 2.0).sin(), p1)];
    let spin = [C64::new((t2 / 2.0).cos(), 0.0), C64::from_polar((t2 / 2.0).sin(), p2)];
    [orb[0] * spin[0], orb[0] * spin[1], orb[1] * spin[0], orb[1] * spin[1]]
}

/// Re-expresses an orbital ⊗ spin operator in the labelled basis whose
/// vectors are the columns of `u`: `U† ρ U`.
pub fn to_labelled_basis(rho: &OperatorMatrix, u: &DMatrix<C64>) -> OperatorMatrix {
    rho.conjugate_by(u)
}

/// Number of real coordinates of a 4×4 Hermitian matrix.
pub const HERMITIAN_COORDS: usize = 16;

/// Real coordinates `(ρ₀₀..ρ₃₃, Re ρ_ij, Im ρ_ij for i<j)`.
pub fn hermitian_coords(m: &OperatorMatrix) -> [f64; HERMITIAN_COORDS] {
    let mut c = [0.0; HERMITIAN_COORDS];
    for i in 0..4 {
        c[i] = m.get(i, i).re;
    }
    let mut k = 4;
    for i in 0..4 {
        for j in i + 1..4 {
            let v = m.get(i, j);
            c[k] = v.re;
            c[k + 1] = v.im;
            k += 2;
        }
    }
    c
}

pub fn from_hermitian_coords(c: &[f64]) -> Matrix4<C64> {
    let mut m = Matrix4::<C64>::zeros();
    for i in 0..4 {
        m[(i, i)] = C64::new(c[i], 0.0);
    }
    let mut k = 4;
    for i in 0..4 {
        for j in i + 1..4 {
            m[(i, j)] = C64::new(c[k], c[k + 1]);
            m[(j, i)] = C64::new(c[k], -c[k + 1]);
            k += 2;
        }
    }
    m
}

/// Hermitian basis element for coordinate `k` (inverse of [`hermitian_coords`]).
pub fn hermitian_basis(k: usize) -> OperatorMatrix {
    let mut c = [0.0; HERMITIAN_COORDS];
    c[k] = 1.0;
    let m = from_hermitian_coords(&c);
    OperatorMatrix::from_fn(4, |i, j| m[(i, j)])
}

/// Sampled linear map `ρ_s(0) ↦ ρ_s(t_k)` on 4×4 Hermitian matrices,
/// stored as real 16×16 matrices on [`hermitian_coords`].
#[derive(Clone, Debug)]
pub struct DynamicalMap {
    pub times: Vec<f64>,
    /// `maps[k * 256 + 16 * out + in]`.
    maps: Vec<f64>,
    /// Columns: labelled-basis vectors in orbital ⊗ spin coordinates.
    pub basis: DMatrix<C64>,
}

impl DynamicalMap {
    /// `columns[in][k]` is the image of Hermitian basis element `in` at `t_k`.
    pub fn from_columns(times: Vec<f64>, columns: &[Vec<[f64; HERMITIAN_COORDS]>], basis: DMatrix<C64>) -> Result<Self> {
        if columns.len() != HERMITIAN_COORDS || columns.iter().any(|c| c.len() != times.len()) {
            return Err(Error::Dimension("dynamical map needs 16 columns sampled on the time grid".into()));
        }
        let n = HERMITIAN_COORDS;
        let mut maps = vec![0.0; times.len() * n * n];
        for (input, col) in columns.iter().enumerate() {
            for (k, out) in col.iter().enumerate() {
                for (o, v) in out.iter().enumerate() {
                    maps[k * n * n + n * o + input] = *v;
                }
            }
        }
        Ok(Self { times, maps, basis })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Image of a labelled-basis Hermitian operator at sample `k`.
    pub fn apply_coords(&self, k: usize, input: &[f64; HERMITIAN_COORDS]) -> [f64; HERMITIAN_COORDS] {
        let n = HERMITIAN_COORDS;
        let block = &self.maps[k * n * n..(k + 1) * n * n];
        let mut out = [0.0; HERMITIAN_COORDS];
        for (o, row) in out.iter_mut().zip(block.chunks_exact(n)) {
            *o = row.iter().zip(input).map(|(a, b)| a * b).sum();
        }
        out
    }

    pub fn apply(&self, k: usize, rho: &OperatorMatrix) -> OperatorMatrix {
        let out = from_hermitian_coords(&self.apply_coords(k, &hermitian_coords(rho)));
        OperatorMatrix::from_fn(4, |i, j| out[(i, j)])
    }

    /// Sub-sampled copy keeping every `stride`-th time (and the last).
    pub fn subsample(&self, stride: usize) -> Self {
        let n = HERMITIAN_COORDS * HERMITIAN_COORDS;
        let mut keep: Vec<usize> = (0..self.len()).step_by(stride.max(1)).collect();
        if keep.last() != Some(&(self.len() - 1)) {
            keep.push(self.len() - 1);
        }
        let mut maps = Vec::with_capacity(keep.len() * n);
        for &k in &keep {
            maps.extend_from_slice(&self.maps[k * n..(k + 1) * n]);
        }
        Self { times: keep.iter().map(|&k| self.times[k]).collect(), maps, basis: self.basis.clone() }
    }
}

/// Half the trace norm of a Hermitian 4×4 matrix given by coordinates.
fn half_trace_norm(c: &[f64; HERMITIAN_COORDS]) -> f64 {
    let m = from_hermitian_coords(c);
    0.5 * m.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>()
}

/// `Σ` of positive increments of `½‖ρ₁(t) - ρ₂(t)‖` for the two Bloch
/// product states, evolved by the sampled map.
pub fn blp_functional(map: &DynamicalMap, x1: &BlochAngles, x2: &BlochAngles) -> Result<f64> {
    x1.check()?;
    x2.check()?;
    if map.len() < MIN_SAMPLES {
        return Err(Error::Resolution(format!("{} samples, at least {MIN_SAMPLES} required", map.len())));
    }
    let u = &map.basis;
    let v1 = product_vector(x1);
    let v2 = product_vector(x2);
    let r1 = OperatorMatrix::outer(&v1, &v1)?;
    let r2 = OperatorMatrix::outer(&v2, &v2)?;
    let diff = to_labelled_basis(&(&r1 - &r2), u);
    let c = hermitian_coords(&diff);
    let mut prev = half_trace_norm(&map.apply_coords(0, &c));
    let mut total = 0.0;
    for k in 1..map.len() {
        let d = half_trace_norm(&map.apply_coords(k, &c));
        if d > prev {
            total += d - prev;
        }
        prev = d;
    }
    Ok(total)
}

/// Per-sample trace distance `½‖ρ₁(t) - ρ₂(t)‖` (for reporting).
pub fn blp_series(map: &DynamicalMap, x1: &BlochAngles, x2: &BlochAngles) -> Result<Vec<f64>> {
    x1.check()?;
    x2.check()?;
    let v1 = product_vector(x1);
    let v2 = product_vector(x2);
    let diff = &OperatorMatrix::outer(&v1, &v1)? - &OperatorMatrix::outer(&v2, &v2)?;
    let c = hermitian_coords(&to_labelled_basis(&diff, &map.basis));
    Ok((0..map.len()).map(|k| half_trace_norm(&map.apply_coords(k, &c))).collect())
}

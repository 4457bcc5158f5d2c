//! Structured phonon bath: Lorentzian spectral density, time-dependent
//! rates and the time-local master equation in the SiV⁻ eigenbasis.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lindblad::{Trajectory, TrajectoryDiagnostics};
use crate::measures::{hermitian_basis, hermitian_coords, DynamicalMap, HERMITIAN_COORDS};
use crate::ode::{integrate as ode_integrate, OdeOptions, OdeStats, Output};
use crate::quadrature::{integrate, QuadOptions};
use crate::quantum::{pauli, tensor, DensityMatrix, OperatorMatrix, C64};
use crate::siv::{build_siv_hamiltonian, reference_basis, EnergySpectrum, SivParams};
use crate::units::HBAR_OVER_KB;

/// Which cross spectral density `J₃` couples the two strain channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrossMode {
    /// `J₃ = sqrt(J₁ J₂) = J` (coherent, real `g_n = f_n`).
    Full,
    /// `J₃ = 0` (uncorrelated channels).
    Zero,
}

impl std::str::FromStr for CrossMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "zero" => Ok(Self::Zero),
            other => Err(Error::InvalidParameter(format!("cross_mode must be 'full' or 'zero', got '{other}'"))),
        }
    }
}

/// `J(ω) = J₀ ω³ / ((ω/Δ)² + 1) · (Γ/2) / ((ω - Δ)² + (Γ/2)²)`, used for
/// both strain channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BathParams {
    /// Amplitude in s/rad, so that J is in rad/s.
    pub j0: f64,
    /// Lorentzian width Γ (rad/s).
    pub width: f64,
    /// Peak position Δ (rad/s).
    pub center: f64,
    /// Kelvin.
    pub temperature: f64,
    /// Upper integration cutoff (rad/s).
    pub omega_max: f64,
    pub cross_mode: CrossMode,
}

impl BathParams {
    /// Bath centred at `delta` with `j0` given in units of `1/Δ`, width in
    /// units of Δ and the default cutoff 5Δ.
    pub fn resonant(delta: f64, j0_per_delta: f64, width_per_delta: f64, temperature: f64) -> Result<Self> {
        let p = Self {
            j0: j0_per_delta / delta,
            width: width_per_delta * delta,
            center: delta,
            temperature,
            omega_max: 5.0 * delta,
            cross_mode: CrossMode::Full,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("j0", self.j0), ("temperature", self.temperature)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("width", self.width), ("center", self.center), ("omega_max", self.omega_max)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.omega_max <= self.center {
            return Err(Error::InvalidParameter("omega_max must exceed the peak position".into()));
        }
        Ok(())
    }

    pub fn with_temperature(&self, temperature: f64) -> Self {
        Self { temperature, ..self.clone() }
    }

    fn cross(&self) -> f64 {
        match self.cross_mode {
            CrossMode::Full => 1.0,
            CrossMode::Zero => 0.0,
        }
    }

    /// Natural rate scale `J₀Δ²` used for absolute quadrature tolerances.
    fn rate_scale(&self) -> f64 {
        (self.j0 * self.center * self.center).max(f64::MIN_POSITIVE)
    }
}

pub fn spectral_density(omega: f64, p: &BathParams) -> f64 {
    if omega <= 0.0 {
        return 0.0;
    }
    let half = 0.5 * p.width;
    let x = omega / p.center;
    p.j0 * omega.powi(3) / (x * x + 1.0) * half / ((omega - p.center).powi(2) + half * half)
}

fn peak_breakpoints(p: &BathParams) -> Vec<f64> {
    let mut pts = vec![0.0, p.center, p.omega_max];
    for k in [0.5, 2.0, 8.0, 32.0] {
        pts.push(p.center - k * p.width);
        pts.push(p.center + k * p.width);
    }
    pts
}

fn clean_points(mut pts: Vec<f64>, hi: f64) -> Vec<f64> {
    pts.retain(|x| x.is_finite() && *x >= 0.0 && *x <= hi);
    pts.push(0.0);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * hi);
    pts
}

/// `∫₀^{ω_max} J(ω) dω`.
pub fn bath_integral(p: &BathParams) -> Result<f64> {
    p.validate()?;
    let pts = clean_points(peak_breakpoints(p), p.omega_max);
    let opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-11, max_panels: 20_000 };
    Ok(integrate(|w| spectral_density(w, p), &pts, &opts)?.value)
}

/// Amplitude `J₀` for which `∫J dω = target_sum` (rad²/s²).
pub fn normalize_j0(target_sum: f64, p: &BathParams) -> Result<f64> {
    if !(target_sum > 0.0) {
        return Err(Error::InvalidParameter(format!("target sum must be positive, got {target_sum}")));
    }
    // J is linear in J₀
    let unit = BathParams { j0: 1.0, ..p.clone() };
    Ok(target_sum / bath_integral(&unit)?)
}

/// Bose occupation that tolerates ω → 0 inside quadrature panels.
fn occupation(omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 || omega <= 0.0 {
        return 0.0;
    }
    1.0 / (HBAR_OVER_KB * omega / temperature).exp_m1()
}

/// `sin(x t) / x` with the removable singularity evaluated as `t`.
fn sinc_kernel(x: f64, t: f64) -> f64 {
    let z = x * t;
    if z.abs() < 1e-4 {
        t * (1.0 - z * z / 6.0)
    } else {
        z.sin() / x
    }
}

/// The eight kernels `γ₁₁..γ₄₃` at one `(ω, t)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub g11: f64,
    pub g12: f64,
    pub g22: f64,
    pub g21: f64,
    pub g33: f64,
    pub g34: f64,
    pub g44: f64,
    pub g43: f64,
}

impl Rates {
    /// With `J₁ = J₂ = J` and real `J₃ = c·J` the eight kernels reduce to an
    /// absorption integral `K_a` (factor `n`) and an emission integral `K_e`
    /// (factor `n + 1`).
    pub fn from_kernels(absorption: f64, emission: f64, cross: f64) -> Self {
        Self {
            g11: absorption,
            g12: cross * absorption,
            g22: absorption,
            g21: cross * absorption,
            g33: emission,
            g34: cross * emission,
            g44: emission,
            g43: cross * emission,
        }
    }

    pub fn as_array(&self) -> [f64; 8] {
        [self.g11, self.g12, self.g22, self.g21, self.g33, self.g34, self.g44, self.g43]
    }
}

/// `K_a = 2∫J n sin((ω+ω')t)/(ω+ω')` and `K_e = 2∫J (n+1) sin((ω-ω')t)/(ω-ω')`.
pub fn rate_kernels(omega: f64, t: f64, p: &BathParams) -> Result<(f64, f64)> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("rates need t >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok((0.0, 0.0));
    }
    let opts = QuadOptions { abs_tol: 1e-11 * p.rate_scale(), rel_tol: 1e-9, max_panels: 20_000 };
    let kernel_points = |s: f64| {
        let mut pts = peak_breakpoints(p);
        pts.push(s);
        for k in [1.0, 4.0, 16.0] {
            let dw = k * std::f64::consts::PI / t;
            pts.push(s - dw);
            pts.push(s + dw);
        }
        clean_points(pts, p.omega_max)
    };
    let temp = p.temperature;
    let absorption = if temp > 0.0 {
        let pts = kernel_points(-omega);
        2.0 * integrate(|w| spectral_density(w, p) * occupation(w, temp) * sinc_kernel(omega + w, t), &pts, &opts)?.value
    } else {
        0.0
    };
    let pts = kernel_points(omega);
    let emission =
        2.0 * integrate(|w| spectral_density(w, p) * (occupation(w, temp) + 1.0) * sinc_kernel(omega - w, t), &pts, &opts)?.value;
    Ok((absorption, emission))
}

pub fn rate_integrals(omega: f64, t: f64, p: &BathParams) -> Result<Rates> {
    let (a, e) = rate_kernels(omega, t, p)?;
    Ok(Rates::from_kernels(a, e, p.cross()))
}

/// Long-time emission plateau `2πJ(ω)(n(ω)+1)`.
pub fn golden_rule_emission(omega: f64, p: &BathParams) -> f64 {
    2.0 * std::f64::consts::PI * spectral_density(omega, p) * (occupation(omega, p.temperature) + 1.0)
}

/// Eigenbasis of the SiV⁻ Hamiltonian with deterministic tie-breaking:
/// inside a degenerate cluster (|ΔE| < 1e-9 Δ) the vectors are the
/// orthonormalised projections of the zero-field reference states, taken
/// in order of decreasing overlap; every phase makes the dominant
/// reference overlap real and positive.
pub fn siv_eigenbasis(p: &SivParams) -> Result<EnergySpectrum> {
    let h = build_siv_hamiltonian(p)?;
    let (energies, v) = h.eigh()?;
    let reference = reference_basis(&p.clone().with_field([0.0; 3]))?;
    let tol = 1e-9 * p.delta();
    let mut states = DMatrix::<C64>::zeros(4, 4);
    let mut start = 0;
    while start < 4 {
        let mut end = start + 1;
        while end < 4 && energies[end] - energies[end - 1] < tol {
            end += 1;
        }
        let cluster = v.columns(start, end - start).into_owned();
        if end - start == 1 {
            states.set_column(start, &cluster.column(0));
        } else {
            let overlaps = cluster.adjoint() * &reference;
            let mut order: Vec<usize> = (0..4).collect();
            let weight = |r: usize| overlaps.column(r).norm_squared();
            order.sort_by(|&a, &b| weight(b).total_cmp(&weight(a)).then(a.cmp(&b)));
            let mut chosen: Vec<(usize, nalgebra::DVector<C64>)> = Vec::new();
            for r in order {
                if chosen.len() == end - start {
                    break;
                }
                let mut w = &cluster * overlaps.column(r);
                for (_, c) in &chosen {
                    let proj = c.dotc(&w);
                    w -= c * proj;
                }
                let norm = w.norm();
                if norm > 1e-6 {
                    chosen.push((r, w / C64::new(norm, 0.0)));
                }
            }
            if chosen.len() != end - start {
                return Err(Error::Contract("degenerate cluster could not be resolved".into()));
            }
            chosen.sort_by_key(|(r, _)| *r);
            for (k, (_, c)) in chosen.into_iter().enumerate() {
                states.set_column(start + k, &c);
            }
        }
        start = end;
    }
    for j in 0..4 {
        let overlaps = reference.adjoint() * states.column(j);
        let (best, _) = overlaps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .expect("four overlaps");
        let o = overlaps[best];
        if o.norm() > 1e-12 {
            let phase = o / o.norm();
            let col = states.column(j) / phase;
            states.set_column(j, &col);
        }
    }
    Ok(EnergySpectrum { energies, states })
}

/// `A_ij = <φ_i|σ_z ⊗ 1|φ_j>`, `B_ij = <φ_i|σ_x ⊗ 1|φ_j>` in the eigenbasis.
#[derive(Clone, Debug)]
pub struct CouplingTensors {
    pub a: Matrix4<C64>,
    pub b: Matrix4<C64>,
    pub energies: [f64; 4],
    /// Eigenvectors (columns) in the orbital ⊗ spin basis.
    pub basis: DMatrix<C64>,
}

pub fn coupling_tensors(p: &SivParams) -> Result<CouplingTensors> {
    let spec = siv_eigenbasis(p)?;
    let id = OperatorMatrix::identity(2);
    let sz = tensor(&pauli::z(), &id)?;
    let sx = tensor(&pauli::x(), &id)?;
    let v = &spec.states;
    let a = v.adjoint() * sz.matrix() * v;
    let b = v.adjoint() * sx.matrix() * v;
    let to4 = |m: DMatrix<C64>| Matrix4::from_fn(|i, j| m[(i, j)]);
    Ok(CouplingTensors {
        a: to4(a),
        b: to4(b),
        energies: [spec.energies[0], spec.energies[1], spec.energies[2], spec.energies[3]],
        basis: spec.states,
    })
}

/// Clamped cubic spline through `(x_k, y_k)`; end slopes come from
/// one-sided four-point differences so the end intervals stay O(h⁴).
#[derive(Clone, Debug)]
struct Spline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

fn end_slope(x: &[f64], y: &[f64]) -> f64 {
    // derivative at x[0] of the cubic through the first four points
    let mut s = 0.0;
    for i in 0..4 {
        let mut li = 0.0;
        for j in 0..4 {
            if j == i {
                continue;
            }
            let mut term = 1.0 / (x[i] - x[j]);
            for k in 0..4 {
                if k != i && k != j {
                    term *= (x[0] - x[k]) / (x[i] - x[k]);
                }
            }
            li += term;
        }
        s += y[i] * li;
    }
    s
}

impl Spline {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        if n < 4 {
            // linear interpolation
            return Self { m: vec![0.0; n], x, y };
        }
        let s0 = end_slope(&x, &y);
        let xr: Vec<f64> = x.iter().rev().copied().collect();
        let yr: Vec<f64> = y.iter().rev().copied().collect();
        let sn = end_slope(&xr, &yr);
        // tridiagonal system for the second derivatives
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let h0 = x[1] - x[0];
        diag[0] = 2.0 * h0;
        sup[0] = h0;
        rhs[0] = 6.0 * ((y[1] - y[0]) / h0 - s0);
        for i in 1..n - 1 {
            let (ha, hb) = (x[i] - x[i - 1], x[i + 1] - x[i]);
            sub[i] = ha;
            diag[i] = 2.0 * (ha + hb);
            sup[i] = hb;
            rhs[i] = 6.0 * ((y[i + 1] - y[i]) / hb - (y[i] - y[i - 1]) / ha);
        }
        let hn = x[n - 1] - x[n - 2];
        sub[n - 1] = hn;
        diag[n - 1] = 2.0 * hn;
        rhs[n - 1] = 6.0 * (sn - (y[n - 1] - y[n - 2]) / hn);
        for i in 1..n {
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
        }
        Self { x, y, m }
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let k = match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => return self.y[i],
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let a = (self.x[k + 1] - t) / h;
        let b = (t - self.x[k]) / h;
        a * self.y[k] + b * self.y[k + 1] + ((a * a * a - a) * self.m[k] + (b * b * b - b) * self.m[k + 1]) * h * h / 6.0
    }
}

/// Kernel tables on a (distinct ω) × (time lattice) grid.
#[derive(Clone, Debug)]
pub struct RateTable {
    pub omegas: Vec<f64>,
    pub times: Vec<f64>,
    absorption: Vec<Spline>,
    emission: Vec<Spline>,
    cross: f64,
}

impl RateTable {
    pub fn build(omegas: Vec<f64>, times: Vec<f64>, p: &BathParams) -> Result<Self> {
        use rayon::prelude::*;
        if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) || times[0] != 0.0 {
            return Err(Error::Contract("rate table times must start at 0 and increase".into()));
        }
        let points: Vec<(usize, usize)> =
            (0..omegas.len()).flat_map(|i| (0..times.len()).map(move |k| (i, k))).collect();
        let values = points
            .par_iter()
            .map(|&(i, k)| rate_kernels(omegas[i], times[k], p))
            .collect::<Result<Vec<_>>>()?;
        let nt = times.len();
        let mut absorption = Vec::with_capacity(omegas.len());
        let mut emission = Vec::with_capacity(omegas.len());
        for i in 0..omegas.len() {
            let row = &values[i * nt..(i + 1) * nt];
            absorption.push(Spline::new(times.clone(), row.iter().map(|v| v.0).collect()));
            emission.push(Spline::new(times.clone(), row.iter().map(|v| v.1).collect()));
        }
        Ok(Self { omegas, times, absorption, emission, cross: p.cross() })
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().expect("non-empty table")
    }

    /// Interpolated kernels for frequency index `i`.
    pub fn rates(&self, i: usize, t: f64) -> Rates {
        Rates::from_kernels(self.absorption[i].eval(t), self.emission[i].eval(t), self.cross)
    }

    pub fn tabulated(&self, i: usize, k: usize) -> (f64, f64) {
        (self.absorption[i].y[k], self.emission[i].y[k])
    }
}

/// Time-local master equation for the four SiV⁻ levels.
#[derive(Clone, Debug)]
pub struct TlmeModel {
    pub tensors: CouplingTensors,
    pub bath: BathParams,
    pub table: RateTable,
    /// Table index of `ω_ji = E_j - E_i` for every ordered pair.
    omega_index: [[usize; 4]; 4],
}

impl TlmeModel {
    /// Builds the rate tables on a uniform lattice of `samples` times
    /// covering `[0, t_max]` (seconds).
    pub fn new(siv: &SivParams, bath: BathParams, t_max: f64, samples: usize) -> Result<Self> {
        bath.validate()?;
        if !(t_max > 0.0) || samples < 4 {
            return Err(Error::Contract("rate lattice needs t_max > 0 and at least 4 samples".into()));
        }
        let tensors = coupling_tensors(siv)?;
        let tol = 1e-9 * siv.delta();
        let mut omegas: Vec<f64> = vec![0.0];
        let mut omega_index = [[0usize; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let w = tensors.energies[j] - tensors.energies[i];
                let k = match omegas.iter().position(|o| (o - w).abs() < tol) {
                    Some(k) => k,
                    None => {
                        omegas.push(w);
                        omegas.len() - 1
                    }
                };
                omega_index[i][j] = k;
            }
        }
        let times: Vec<f64> = (0..samples).map(|k| t_max * k as f64 / (samples - 1) as f64).collect();
        let table = RateTable::build(omegas, times, &bath)?;
        Ok(Self { tensors, bath, table, omega_index })
    }

    /// `(Γ_ij(t), Ω_ij(t))`; Γ has a zero diagonal.
    pub fn rates_at(&self, t: f64) -> (Matrix4<f64>, Matrix4<f64>) {
        let a = &self.tensors.a;
        let b = &self.tensors.b;
        let mut gamma = Matrix4::<f64>::zeros();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let (aij, bij) = (a[(i, j)], b[(i, j)]);
                if aij.norm() < 1e-14 && bij.norm() < 1e-14 {
                    continue;
                }
                let r = self.table.rates(self.omega_index[i][j], t);
                let v = aij.norm_sqr() * (r.g11 + r.g33)
                    + bij.norm_sqr() * (r.g22 + r.g44)
                    + bij * aij.conj() * (r.g12 + r.g34)
                    + bij.conj() * aij * (r.g21 + r.g43);
                gamma[(i, j)] = v.re;
            }
        }
        let r0 = self.table.rates(0, t);
        let mut omega = Matrix4::<f64>::zeros();
        for i in 0..4 {
            for j in 0..4 {
                let (aii, ajj, bii, bjj) = (a[(i, i)], a[(j, j)], b[(i, i)], b[(j, j)]);
                let v = aii * ajj.conj() * (r0.g11 + r0.g33)
                    + bii * bjj.conj() * (r0.g22 + r0.g44)
                    + bii * ajj.conj() * (r0.g12 + r0.g34)
                    + bjj * aii.conj() * (r0.g21 + r0.g43);
                omega[(i, j)] = v.re;
            }
        }
        (gamma, omega)
    }

    /// Smallest eigenvalue of the dephasing matrix Ω over the rate lattice.
    pub fn omega_min_eigenvalue(&self) -> f64 {
        self.table
            .times
            .iter()
            .map(|&t| {
                let (_, om) = self.rates_at(t);
                om.symmetric_eigenvalues().min()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Minimum of every Γ_ij over the rate lattice (negative values are the
    /// signature of memory effects).
    pub fn gamma_min(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for &t in &self.table.times {
            let (g, _) = self.rates_at(t);
            for i in 0..4 {
                for j in 0..4 {
                    if i != j && (self.tensors.a[(i, j)].norm() > 1e-14 || self.tensors.b[(i, j)].norm() > 1e-14) {
                        worst = worst.min(g[(i, j)]);
                    }
                }
            }
        }
        worst
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t > self.table.t_max() * (1.0 + 1e-12) {
            return Err(Error::Contract(format!("time {t:e} beyond the rate table ({:e})", self.table.t_max())));
        }
        Ok(())
    }

    /// Converts an orbital ⊗ spin operator to the eigenbasis.
    pub fn to_eigenbasis(&self, rho: &OperatorMatrix) -> OperatorMatrix {
        rho.conjugate_by(&self.tensors.basis)
    }
}

/// Right-hand side of the time-local master equation for given rates.
pub fn tlme_generator(rho: &Matrix4<C64>, gamma: &Matrix4<f64>, omega: &Matrix4<f64>) -> Matrix4<C64> {
    let mut out = Matrix4::<C64>::zeros();
    for i in 0..4 {
        for j in 0..4 {
            let g = gamma[(i, j)];
            if i == j || g == 0.0 {
                continue;
            }
            // g (σ_ij ρ σ_ji - ½{σ_jj, ρ})
            out[(i, i)] += rho[(j, j)] * g;
            for k in 0..4 {
                out[(j, k)] -= rho[(j, k)] * (0.5 * g);
                out[(k, j)] -= rho[(k, j)] * (0.5 * g);
            }
        }
    }
    // Σ Ω_ij (σ_ii ρ σ_jj - ½{σ_ii σ_jj, ρ}) acts elementwise
    for k in 0..4 {
        for l in 0..4 {
            let w = omega[(k, l)] - 0.5 * (omega[(k, k)] + omega[(l, l)]);
            out[(k, l)] += rho[(k, l)] * w;
        }
    }
    out
}

fn to_matrix4(y: &[C64]) -> Matrix4<C64> {
    Matrix4::from_fn(|i, j| y[4 * i + j])
}

fn integrate_tlme<O>(model: &TlmeModel, y0: Vec<C64>, t_grid: &[f64], opts: &OdeOptions, mut output: O) -> Result<OdeStats>
where
    O: FnMut(f64, &mut [C64]) -> Result<()>,
{
    if t_grid.is_empty() {
        return Err(Error::Contract("empty time grid".into()));
    }
    model.check_time(*t_grid.last().expect("non-empty"))?;
    ode_integrate(
        |t, y: &[C64], dy: &mut [C64]| {
            let (g, om) = model.rates_at(t);
            let d = tlme_generator(&to_matrix4(y), &g, &om);
            for i in 0..4 {
                for j in 0..4 {
                    dy[4 * i + j] = d[(i, j)];
                }
            }
        },
        t_grid[0],
        &y0,
        t_grid,
        opts,
        |_, t, y| {
            for r in 0..4 {
                for c in r..4 {
                    let avg = 0.5 * (y[4 * r + c] + y[4 * c + r].conj());
                    y[4 * r + c] = avg;
                    y[4 * c + r] = avg.conj();
                }
            }
            output(t, y)?;
            Ok(Output::Modified)
        },
    )
}

/// Positivity violations below this are flagged on the trajectory.
pub const POSITIVITY_FLAG: f64 = -1e-4;

/// Propagates an eigenbasis density matrix. Transient positivity
/// violations are physical for time-local equations and are flagged in
/// the diagnostics rather than treated as errors.
pub fn propagate_tlme(model: &TlmeModel, rho0: &DensityMatrix, t_grid: &[f64], opts: &OdeOptions) -> Result<Trajectory> {
    if rho0.dim() != 4 {
        return Err(Error::Dimension(format!("structured-bath states are 4x4, got {}", rho0.dim())));
    }
    let y0 = rho0.op().to_row_major();
    let trace0: f64 = (0..4).map(|i| y0[5 * i].re).sum();
    let mut times = Vec::with_capacity(t_grid.len());
    let mut states = Vec::with_capacity(t_grid.len());
    let mut diag = TrajectoryDiagnostics { min_eigenvalue: f64::INFINITY, ..Default::default() };
    let stats = integrate_tlme(model, y0, t_grid, opts, |t, y| {
        let trace: f64 = (0..4).map(|i| y[5 * i].re).sum();
        let err = (trace - trace0).abs();
        if err > 1e-8 {
            return Err(Error::Integrator { t, reason: format!("trace drift {err:e}") });
        }
        diag.max_trace_error = diag.max_trace_error.max(err);
        let op = OperatorMatrix::from_row_major(y)?;
        let min_eig = op.eigvalsh()?[0];
        diag.min_eigenvalue = diag.min_eigenvalue.min(min_eig);
        if min_eig < POSITIVITY_FLAG && !diag.flags.iter().any(|f| f.starts_with("positivity")) {
            diag.flags.push(format!("positivity violated at t = {t:e}: min eigenvalue {min_eig:e}"));
        }
        times.push(t);
        states.push(DensityMatrix::new_unchecked(op));
        Ok(())
    })?;
    diag.ode = stats;
    let mut scalars = BTreeMap::new();
    scalars.insert("min_eigenvalue".to_string(), states.iter().map(|s| s.op().eigvalsh().map(|e| e[0]).unwrap_or(f64::NAN)).collect());
    Ok(Trajectory { times, states, scalars, diagnostics: diag })
}

/// Sampled map of the time-local equation on eigenbasis Hermitian
/// operators; the map's basis converts orbital ⊗ spin states.
pub fn tlme_dynamical_map(model: &TlmeModel, t_grid: &[f64], opts: &OdeOptions) -> Result<DynamicalMap> {
    use rayon::prelude::*;
    let columns = (0..HERMITIAN_COORDS)
        .into_par_iter()
        .map(|k| {
            let mut col = Vec::with_capacity(t_grid.len());
            integrate_tlme(model, hermitian_basis(k).to_row_major(), t_grid, opts, |_, y| {
                col.push(hermitian_coords(&OperatorMatrix::from_row_major(y)?));
                Ok(())
            })?;
            Ok(col)
        })
        .collect::<Result<Vec<_>>>()?;
    DynamicalMap::from_columns(t_grid.to_vec(), &columns, model.tensors.basis.clone())
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::I;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn siv() -> SivParams {
        SivParams::from_ghz(45.0, 1.0, 1.0).unwrap()
    }

    fn bath(width: f64, temperature: f64) -> BathParams {
        BathParams::resonant(siv().delta(), 4.55, width, temperature).unwrap()
    }

    #[test]
    fn spectral_density_values() {
        let p = bath(0.1, 0.0);
        let d = p.center;
        assert_eq!(spectral_density(0.0, &p), 0.0);
        let peak = p.j0 * d.powi(3) / p.width;
        assert!((spectral_density(d, &p) / peak - 1.0).abs() < 1e-14);
        let w = 1e-4 * d;
        let lim = p.j0 * (p.width / 2.0) / (d * d + (p.width / 2.0).powi(2));
        assert!((spectral_density(w, &p) / w.powi(3) / lim - 1.0).abs() < 1e-3);
    }

    #[test]
    fn normalization_round_trip() {
        let p = bath(0.1, 0.0);
        let d = p.center;
        let j1 = normalize_j0(d * d, &p).unwrap();
        let j2 = normalize_j0(2.0 * d * d, &p).unwrap();
        assert!((j2 / j1 - 2.0).abs() < 1e-12);
        let q = BathParams { j0: j1, ..p.clone() };
        assert!((bath_integral(&q).unwrap() / (d * d) - 1.0).abs() < 1e-6);
        let sum = bath_integral(&p).unwrap();
        assert!((normalize_j0(sum, &p).unwrap() / p.j0 - 1.0).abs() < 1e-6);
        // moderate Huang-Rhys range
        assert!(sum > d * d && sum < 10.0 * d * d, "{}", sum / (d * d));
    }

    #[test]
    fn pure_states_at_zero_field_have_offdiagonal_sigma_z() {
        let p = SivParams::new(siv().lambda, 0.0, 0.0).unwrap();
        let ct = coupling_tensors(&p).unwrap();
        for i in 0..4 {
            assert!(ct.a[(i, i)].norm() < 1e-12);
        }
        // |e_+,s> <-> |e_-,s> pairs share spin
        let spin = spin_labels(&ct);
        for i in 0..4 {
            for j in 0..4 {
                if i != j && spin[i] == spin[j] {
                    assert!((ct.a[(i, j)].norm() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    fn spin_labels(ct: &CouplingTensors) -> Vec<i32> {
        let sz = tensor(&OperatorMatrix::identity(2), &pauli::z()).unwrap();
        let m = ct.basis.adjoint() * sz.matrix() * &ct.basis;
        (0..4).map(|i| if m[(i, i)].re > 0.0 { 1 } else { -1 }).collect()
    }

    #[test]
    fn spin_blocks_at_longitudinal_field() {
        let p = siv().with_field([0.0, 0.0, 3.0]);
        let ct = coupling_tensors(&p).unwrap();
        let spin = spin_labels(&ct);
        for i in 0..4 {
            for j in 0..4 {
                if spin[i] != spin[j] {
                    assert!(ct.a[(i, j)].norm() < 1e-12 && ct.b[(i, j)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn tensors_hermitian_over_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let f = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let ct = coupling_tensors(&siv().with_field(f)).unwrap();
            assert!((ct.a - ct.a.adjoint()).norm() < 1e-12);
            assert!((ct.b - ct.b.adjoint()).norm() < 1e-12);
        }
    }

    #[test]
    fn eigenbasis_is_deterministic_and_diagonalizes() {
        let p = siv();
        let s1 = siv_eigenbasis(&p).unwrap();
        let s2 = siv_eigenbasis(&p).unwrap();
        assert_eq!(s1.states, s2.states);
        let h = build_siv_hamiltonian(&p).unwrap();
        let d = s1.states.adjoint() * h.matrix() * &s1.states;
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { s1.energies[i] } else { 0.0 };
                assert!((d[(i, j)] - C64::new(expect, 0.0)).norm() < 1e-6 * p.delta());
            }
        }
    }

    #[test]
    fn rates_vanish_at_t_zero_and_absorption_at_zero_temperature() {
        let p = bath(0.1, 0.0);
        let r = rate_integrals(p.center, 0.0, &p).unwrap();
        assert!(r.as_array().iter().all(|v| *v == 0.0));
        let r = rate_integrals(-p.center, 3.0 / p.center, &p).unwrap();
        for v in [r.g11, r.g22, r.g12, r.g21] {
            assert_eq!(v, 0.0);
        }
        assert!(rate_integrals(p.center, -1.0, &p).is_err());
    }

    #[test]
    fn emission_reaches_golden_rule_plateau() {
        let p = bath(0.01, 0.5);
        let t = 50.0 / p.width;
        let (_, e) = rate_kernels(p.center, t, &p).unwrap();
        let gr = golden_rule_emission(p.center, &p);
        assert!((e / gr - 1.0).abs() < 0.02, "{}", e / gr);
    }

    #[test]
    fn plateau_grows_with_temperature() {
        let mut prev = 0.0;
        for temp in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let p = bath(0.01, temp);
            let (_, e) = rate_kernels(p.center, 50.0 / p.width, &p).unwrap();
            assert!(e > prev, "T = {temp}");
            prev = e;
        }
    }

    #[test]
    fn rates_converge_under_tighter_quadrature() {
        // sinc kernel against a direct Riemann-free check: tighter tolerance agrees
        let p = bath(0.1, 1.0);
        let t = 20.0 / p.center;
        let (a, e) = rate_kernels(p.center * 0.7, t, &p).unwrap();
        let pts = clean_points(peak_breakpoints(&p), p.omega_max);
        let tight = QuadOptions { abs_tol: 0.0, rel_tol: 1e-12, max_panels: 100_000 };
        let w = 0.7 * p.center;
        let e2 = 2.0
            * integrate(|x| spectral_density(x, &p) * (occupation(x, 1.0) + 1.0) * sinc_kernel(w - x, t), &pts, &tight)
                .unwrap()
                .value;
        let a2 =
            2.0 * integrate(|x| spectral_density(x, &p) * occupation(x, 1.0) * sinc_kernel(w + x, t), &pts, &tight).unwrap().value;
        assert!((e / e2 - 1.0).abs() < 1e-6);
        assert!((a / a2 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn spline_reproduces_smooth_function() {
        let x: Vec<f64> = (0..41).map(|k| k as f64 * 0.1).collect();
        let s = Spline::new(x.clone(), x.iter().map(|v| v.sin()).collect());
        for k in 0..400 {
            let t = k as f64 * 0.01 + 0.003;
            assert!((s.eval(t) - t.sin()).abs() < 1e-5, "{t}");
        }
    }

    fn random_hermitian(rng: &mut ChaCha8Rng) -> Matrix4<C64> {
        let m = Matrix4::from_fn(|_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        (m + m.adjoint()) * C64::new(0.5, 0.0)
    }

    #[test]
    fn generator_is_trace_free() {
        let model = TlmeModel::new(&siv(), bath(0.1, 1.0), 10.0 / siv().delta(), 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in 0..16 {
            let (g, om) = model.rates_at(k as f64 * 0.5 / siv().delta());
            let rho = random_hermitian(&mut rng);
            let d = tlme_generator(&rho, &g, &om);
            assert!(d.trace().norm() < 1e-10 * g.norm().max(1.0));
            assert!((d - d.adjoint()).norm() < 1e-10 * g.norm().max(1.0));
        }
    }

    #[test]
    fn zero_rates_give_no_evolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_hermitian(&mut rng);
        let d = tlme_generator(&rho, &Matrix4::zeros(), &Matrix4::zeros());
        assert_eq!(d, Matrix4::zeros());
    }

    #[test]
    fn diagonal_state_follows_pauli_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = Matrix4::from_fn(|_, _| rng.gen_range(0.0..1.0));
        g.fill_diagonal(0.0);
        let p = [0.1, 0.2, 0.3, 0.4];
        let rho = Matrix4::from_diagonal(&nalgebra::Vector4::from_fn(|i, _| C64::new(p[i], 0.0)));
        let d = tlme_generator(&rho, &g, &Matrix4::zeros());
        for i in 0..4 {
            // Γ_ij moves population j → i
            let gain: f64 = (0..4).map(|j| g[(i, j)] * p[j]).sum();
            let loss: f64 = (0..4).map(|j| g[(j, i)]).sum::<f64>() * p[i];
            assert!((d[(i, i)].re - (gain - loss)).abs() < 1e-14);
            for j in 0..4 {
                if i != j {
                    assert_eq!(d[(i, j)], C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn dephasing_only_keeps_populations() {
        let a = [0.3, -0.5, 0.9, 0.1];
        let om = Matrix4::from_fn(|i, j| a[i] * a[j]);
        let rho = Matrix4::from_fn(|i, j| if i == j { C64::new(0.25, 0.0) } else { C64::new(0.1, 0.05) * if i < j { 1.0 } else { -1.0 } });
        let rho = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
        let d = tlme_generator(&rho, &Matrix4::zeros(), &om);
        for k in 0..4 {
            assert!(d[(k, k)].norm() < 1e-15);
            for l in 0..4 {
                if k != l {
                    let rate = -0.5 * (a[k] - a[l]).powi(2);
                    assert!((d[(k, l)] - rho[(k, l)] * rate).norm() < 1e-14);
                }
            }
        }
        let _ = I;
    }

    #[test]
    fn zero_coupling_is_identity_evolution() {
        let p = siv();
        let b = BathParams { j0: 0.0, ..bath(0.1, 1.0) };
        let model = TlmeModel::new(&p, b, 5.0 / p.delta(), 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<C64> = (0..4).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let v: Vec<C64> = v.iter().map(|c| c / norm).collect();
        let rho0 = DensityMatrix::from_pure(&v).unwrap();
        let grid: Vec<f64> = (0..20).map(|k| k as f64 * 0.25 / p.delta()).collect();
        let traj = propagate_tlme(&model, &rho0, &grid, &OdeOptions::default()).unwrap();
        for s in &traj.states {
            assert!((s.op() - rho0.op()).max_abs() < 1e-14);
        }
    }

    #[test]
    fn full_coupling_flags_memory_at_low_temperature() {
        let p = siv();
        let model = TlmeModel::new(&p, bath(0.1, 0.1), 30.0 / p.delta(), 301).unwrap();
        assert!(model.gamma_min() < 0.0);
        // rank-one dephasing matrix
        assert!(model.omega_min_eigenvalue() > -1e-9 * p.delta());
        let rho0 = DensityMatrix::basis_state(4, 3).unwrap();
        let grid: Vec<f64> = (0..301).map(|k| k as f64 * 0.1 / p.delta()).collect();
        let traj = propagate_tlme(&model, &rho0, &grid, &OdeOptions::default()).unwrap();
        assert!(traj.diagnostics.max_trace_error < 1e-8);
        // populations of the excited level must revive at least once
        let pop: Vec<f64> = traj.states.iter().map(|s| s.get(3, 3).re).collect();
        assert!(pop.windows(2).any(|w| w[1] > w[0] + 1e-6));
    }
}

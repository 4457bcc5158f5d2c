//! Lindblad master equation for the SiV⁻ center coupled to one phonon mode.
//!
//! Operators are dense at construction time but the right-hand side uses
//! their sparsity: the Hamiltonian of a 4 ⊗ (n_max+1) system has only a few
//! non-zeros per row. The basis also splits into sectors (connected
//! components of the operator sparsity graph) that never mix, so
//! propagation runs only on the sectors an initial state occupies.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{hermitian_basis, hermitian_coords, DynamicalMap, HERMITIAN_COORDS};
use crate::ode::{integrate, OdeOptions, OdeStats, Output};
use crate::quantum::{tensor, DensityMatrix, DensityTolerances, FockSpace, OperatorMatrix, C64, I, ZERO};
use crate::siv::{build_full_hamiltonian, manifold_lowering, PhononModeParams, SivParams};
use crate::units::bose_occupation;

#[derive(Clone, Debug, PartialEq)]
pub struct Jump {
    pub op: OperatorMatrix,
    pub rate: f64,
    pub label: String,
}

impl Jump {
    pub fn new(op: OperatorMatrix, rate: f64, label: impl Into<String>) -> Self {
        Self { op, rate, label: label.into() }
    }
}

/// `dρ/dt = -i[H, ρ] + Σ_k rate_k (L_k ρ L_k† - ½{L_k† L_k, ρ})` on
/// `system ⊗ Fock` (system-major ordering).
#[derive(Clone, Debug, PartialEq)]
pub struct LindbladModel {
    pub h: OperatorMatrix,
    pub jumps: Vec<Jump>,
    pub system_dim: usize,
    pub fock: FockSpace,
}

impl LindbladModel {
    pub fn new(h: OperatorMatrix, jumps: Vec<Jump>, system_dim: usize, fock: FockSpace) -> Result<Self> {
        let dim = system_dim * fock.dim();
        if h.dim() != dim {
            return Err(Error::Contract(format!(
                "Hamiltonian has dim {} but system {system_dim} x Fock {} = {dim}",
                h.dim(),
                fock.dim()
            )));
        }
        if h.hermiticity_error() > 1e-12 * h.max_abs().max(1.0) {
            return Err(Error::Contract("Hamiltonian is not Hermitian".into()));
        }
        for j in &jumps {
            if j.op.dim() != dim {
                return Err(Error::Contract(format!("jump '{}' has dim {} (expected {dim})", j.label, j.op.dim())));
            }
            if !(j.rate >= 0.0) || !j.rate.is_finite() {
                return Err(Error::Contract(format!("jump '{}' has invalid rate {}", j.label, j.rate)));
            }
        }
        Ok(Self { h, jumps, system_dim, fock })
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    /// Same dynamics in time units of `1/unit`: H and rates divided by `unit`.
    pub fn rescaled(&self, unit: f64) -> Result<Self> {
        if !(unit > 0.0) {
            return Err(Error::InvalidParameter(format!("time unit must be positive, got {unit}")));
        }
        Ok(Self {
            h: self.h.scale(1.0 / unit),
            jumps: self
                .jumps
                .iter()
                .map(|j| Jump { op: j.op.clone(), rate: j.rate / unit, label: j.label.clone() })
                .collect(),
            system_dim: self.system_dim,
            fock: self.fock,
        })
    }

    /// Smallest non-zero jump rate, if any.
    pub fn min_rate(&self) -> Option<f64> {
        self.jumps.iter().map(|j| j.rate).filter(|&r| r > 0.0).min_by(f64::total_cmp)
    }

    /// Connected components of the sparsity graph of H and all jumps,
    /// each sorted ascending; components ordered by their first index.
    pub fn sectors(&self) -> Vec<Vec<usize>> {
        let d = self.dim();
        let mut parent: Vec<usize> = (0..d).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut link = |m: &OperatorMatrix| {
            for i in 0..d {
                for j in 0..d {
                    if i != j && m.get(i, j) != ZERO {
                        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
        };
        link(&self.h);
        for j in self.jumps.iter().filter(|j| j.rate > 0.0) {
            link(&j.op);
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..d {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        groups.into_values().collect()
    }

    fn restricted(&self, indices: &[usize]) -> Restricted {
        let h = self.h.restrict(indices);
        let jumps: Vec<(OperatorMatrix, f64)> =
            self.jumps.iter().filter(|j| j.rate > 0.0).map(|j| (j.op.restrict(indices), j.rate)).collect();
        let d = indices.len();
        let mut h_eff = h.clone();
        for (l, rate) in &jumps {
            let ldl = &l.adjoint() * l;
            h_eff = &h_eff - &ldl.scale_c(C64::new(0.0, 0.5 * rate));
        }
        let sparse_jumps = jumps.iter().map(|(l, rate)| Sparse::from_dense(&l.scale(rate.sqrt()))).collect();
        Restricted { d, h_eff: Sparse::from_dense(&h_eff), jumps: sparse_jumps, dense_h: h, dense_jumps: jumps }
    }
}

/// Row-ordered non-zero entries.
#[derive(Clone, Debug)]
struct Sparse {
    entries: Vec<(usize, usize, C64)>,
}

impl Sparse {
    fn from_dense(m: &OperatorMatrix) -> Self {
        let d = m.dim();
        let mut entries = Vec::new();
        for i in 0..d {
            for j in 0..d {
                let v = m.get(i, j);
                if v != ZERO {
                    entries.push((i, j, v));
                }
            }
        }
        Self { entries }
    }
}

struct Restricted {
    d: usize,
    h_eff: Sparse,
    jumps: Vec<Sparse>,
    dense_h: OperatorMatrix,
    dense_jumps: Vec<(OperatorMatrix, f64)>,
}

impl Restricted {
    /// `dρ = -i H_eff ρ + (−i H_eff ρ)† + Σ L̃ ρ L̃†` for Hermitian row-major ρ.
    fn rhs(&self, rho: &[C64], out: &mut [C64], x: &mut [C64], z: &mut [C64]) {
        let d = self.d;
        x.fill(ZERO);
        for &(r, k, v) in &self.h_eff.entries {
            let (src, dst) = (&rho[k * d..(k + 1) * d], &mut x[r * d..(r + 1) * d]);
            for (o, s) in dst.iter_mut().zip(src) {
                *o += v * s;
            }
        }
        for r in 0..d {
            for c in 0..d {
                out[r * d + c] = -I * x[r * d + c] + I * x[c * d + r].conj();
            }
        }
        for l in &self.jumps {
            z.fill(ZERO);
            for &(r, k, v) in &l.entries {
                let (src, dst) = (&rho[k * d..(k + 1) * d], &mut z[r * d..(r + 1) * d]);
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += v * s;
                }
            }
            // out += Z L̃†, i.e. out[:, c] += conj(v) Z[:, k] for each (c, k, v)
            for &(c, k, v) in &l.entries {
                let vc = v.conj();
                for r in 0..d {
                    out[r * d + c] += vc * z[r * d + k];
                }
            }
        }
    }

    /// Dense Liouvillian acting on row-major vec(ρ).
    fn liouvillian(&self) -> DMatrix<C64> {
        let d = self.d;
        let n = d * d;
        let mut l = DMatrix::<C64>::zeros(n, n);
        let h = self.dense_h.matrix();
        let mut h_eff = h.clone();
        for (j, rate) in &self.dense_jumps {
            let ldl = j.matrix().adjoint() * j.matrix();
            h_eff -= ldl * C64::new(0.0, 0.5 * rate);
        }
        let h_eff_dag = h_eff.adjoint();
        // row-major vec: index (i, j) -> i*d + j ;  A ρ B -> (A ⊗ Bᵀ)
        for i in 0..d {
            for j in 0..d {
                let row = i * d + j;
                for k in 0..d {
                    let a = h_eff[(i, k)];
                    if a != ZERO {
                        l[(row, k * d + j)] += -I * a;
                    }
                    let b = h_eff_dag[(k, j)];
                    if b != ZERO {
                        l[(row, i * d + k)] += I * b;
                    }
                }
            }
        }
        for (jop, rate) in &self.dense_jumps {
            let m = jop.matrix();
            for i in 0..d {
                for k in 0..d {
                    let a = m[(i, k)];
                    if a == ZERO {
                        continue;
                    }
                    for j in 0..d {
                        for q in 0..d {
                            let b = m[(j, q)];
                            if b != ZERO {
                                l[(i * d + j, k * d + q)] += a * b.conj() * *rate;
                            }
                        }
                    }
                }
            }
        }
        l
    }
}

/// Jump list of the SiV⁻ + mode master equation with explicit `N(Δ)`.
///
/// `J₋ = |1><3| + |2><4|` lowers energy inside each manifold; `J₊ = J₋†`.
/// Zero-rate channels are omitted.
pub fn build_lindblad(p: &SivParams, m: &PhononModeParams, gamma_siv: f64, n_delta: f64) -> Result<LindbladModel> {
    if !(gamma_siv >= 0.0) || !(n_delta >= 0.0) {
        return Err(Error::Contract(format!("negative rate parameters: gamma_siv = {gamma_siv}, N(Delta) = {n_delta}")));
    }
    let h = build_full_hamiltonian(p, m)?;
    let fock = m.fock();
    let id_sys = OperatorMatrix::identity(4);
    let n_ph = bose_occupation(m.omega_ph, m.temperature)?;
    let gamma_ph = m.gamma_ph();
    let c = tensor(&id_sys, &fock.annihilation())?;
    let j_minus = tensor(&manifold_lowering(), &fock.identity())?;
    let candidates = [
        (c.adjoint(), gamma_ph * n_ph, "c_dag"),
        (c, gamma_ph * (n_ph + 1.0), "c"),
        (j_minus.adjoint(), gamma_siv * n_delta, "J_plus"),
        (j_minus, gamma_siv * (n_delta + 1.0), "J_minus"),
    ];
    let jumps = candidates
        .into_iter()
        .filter(|(_, rate, _)| *rate > 0.0)
        .map(|(op, rate, label)| Jump::new(op, rate, label))
        .collect();
    LindbladModel::new(h, jumps, 4, fock)
}

/// Thermal SiV occupation `N(Δ, T)` at the zero-field gap.
pub fn n_delta_from_temperature(p: &SivParams, temperature: f64) -> Result<f64> {
    bose_occupation(p.delta(), temperature)
}

/// Which density matrices a trajectory keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Snapshot {
    Full,
    /// Reduced system state after tracing out the mode.
    System,
}

#[derive(Clone, Debug)]
pub struct PropagateOptions {
    pub ode: OdeOptions,
    pub snapshot: Snapshot,
    /// Largest tolerated |Tr ρ(t) - Tr ρ(0)|.
    pub trace_tolerance: f64,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self { ode: OdeOptions::default(), snapshot: Snapshot::Full, trace_tolerance: 1e-9 }
    }
}

impl PropagateOptions {
    pub fn system() -> Self {
        Self { snapshot: Snapshot::System, ..Default::default() }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TrajectoryDiagnostics {
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
    pub ode: OdeStats,
    /// Free-form flags (e.g. transient positivity violations).
    pub flags: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub scalars: BTreeMap<String, Vec<f64>>,
    pub diagnostics: TrajectoryDiagnostics,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.scalars.get(name).map(Vec::as_slice)
    }
}

/// Evenly spaced grid of `samples` points on `[0, t_final]`.
pub fn uniform_grid(t_final: f64, samples: usize) -> Vec<f64> {
    if samples < 2 {
        return vec![0.0];
    }
    (0..samples).map(|k| t_final * k as f64 / (samples - 1) as f64).collect()
}

/// Indices of the sectors in which `rho` has non-zero weight.
fn occupied_indices(model: &LindbladModel, rho: &OperatorMatrix) -> Vec<usize> {
    let mut idx = Vec::new();
    for sector in model.sectors() {
        let occupied = sector.iter().any(|&i| (0..rho.dim()).any(|j| rho.get(i, j) != ZERO));
        if occupied {
            idx.extend(sector);
        }
    }
    idx.sort_unstable();
    idx
}

fn embed(d_full: usize, idx: &[usize], sub: &[C64]) -> OperatorMatrix {
    let d = idx.len();
    let mut m = OperatorMatrix::zeros(d_full);
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            m.set(i, j, sub[a * d + b]);
        }
    }
    m
}

fn reduce_system(model: &LindbladModel, idx: &[usize], sub: &[C64]) -> OperatorMatrix {
    let f = model.fock.dim();
    let d = idx.len();
    let mut out = OperatorMatrix::zeros(model.system_dim);
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            if i % f == j % f {
                let v = out.get(i / f, j / f) + sub[a * d + b];
                out.set(i / f, j / f, v);
            }
        }
    }
    out
}

pub fn propagate(model: &LindbladModel, rho0: &DensityMatrix, t_grid: &[f64]) -> Result<Trajectory> {
    propagate_with(model, rho0, t_grid, &PropagateOptions::default())
}

/// Integrates the master equation from `ρ(t_grid[0]) = rho0`, recording a
/// snapshot at every grid time. Snapshots are re-symmetrised at each output;
/// trace drift beyond the tolerance aborts with the last good time.
pub fn propagate_with(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    opts: &PropagateOptions,
) -> Result<Trajectory> {
    if rho0.dim() != model.dim() {
        return Err(Error::Contract(format!("initial state dim {} does not match model dim {}", rho0.dim(), model.dim())));
    }
    if t_grid.is_empty() {
        return Err(Error::Contract("empty time grid".into()));
    }
    let idx = occupied_indices(model, rho0.op());
    let restricted = model.restricted(&idx);
    let d = idx.len();
    let sub0 = rho0.op().restrict(&idx);
    let y0 = sub0.to_row_major();
    let trace0: C64 = (0..d).map(|i| y0[i * d + i]).sum();

    let mut x = vec![ZERO; d * d];
    let mut z = vec![ZERO; d * d];
    let mut times = Vec::with_capacity(t_grid.len());
    let mut states = Vec::with_capacity(t_grid.len());
    let mut diag = TrajectoryDiagnostics { min_eigenvalue: f64::INFINITY, ..Default::default() };
    let tol = DensityTolerances::default();
    let mut last_good = t_grid[0];

    let stats = integrate(
        |_, y: &[C64], dy: &mut [C64]| restricted.rhs(y, dy, &mut x, &mut z),
        t_grid[0],
        &y0,
        t_grid,
        &opts.ode,
        |_, t, y| {
            let mut changed = false;
            let mut herm = 0.0f64;
            for r in 0..d {
                for c in r..d {
                    let (a, b) = (y[r * d + c], y[c * d + r]);
                    if a != b.conj() {
                        herm = herm.max((a - b.conj()).norm());
                        let avg = 0.5 * (a + b.conj());
                        y[r * d + c] = avg;
                        y[c * d + r] = avg.conj();
                        changed = true;
                    }
                }
            }
            let trace: C64 = (0..d).map(|i| y[i * d + i]).sum();
            let trace_err = (trace - trace0).norm();
            if trace_err > opts.trace_tolerance {
                return Err(Error::Integrator {
                    t: last_good,
                    reason: format!("trace drift {trace_err:e} exceeds {:e} at t = {t}", opts.trace_tolerance),
                });
            }
            last_good = t;
            diag.max_trace_error = diag.max_trace_error.max(trace_err);
            diag.max_hermiticity_error = diag.max_hermiticity_error.max(herm);
            let op = match opts.snapshot {
                Snapshot::Full => embed(model.dim(), &idx, y),
                Snapshot::System => reduce_system(model, &idx, y),
            };
            let state = DensityMatrix::new_unchecked(op);
            let min_eig = state.op().eigvalsh()?.first().copied().unwrap_or(0.0);
            diag.min_eigenvalue = diag.min_eigenvalue.min(min_eig);
            if min_eig < tol.min_eigenvalue && !diag.flags.iter().any(|f| f.starts_with("positivity")) {
                diag.flags.push(format!("positivity violated at t = {t}: min eigenvalue {min_eig:e}"));
            }
            times.push(t);
            states.push(state);
            Ok(if changed { Output::Modified } else { Output::Unchanged })
        },
    )?;
    diag.ode = stats;
    Ok(Trajectory { times, states, scalars: BTreeMap::new(), diagnostics: diag })
}

/// Null vector of one sector's Liouvillian, normalised to unit trace.
fn sector_steady_state(r: &Restricted) -> Result<Vec<C64>> {
    let d = r.d;
    let n = d * d;
    let mut l = r.liouvillian();
    // replace the first row with the trace functional
    for c in 0..n {
        l[(0, c)] = ZERO;
    }
    for i in 0..d {
        l[(0, i * d + i)] = C64::new(1.0, 0.0);
    }
    let lu = l.clone().full_piv_lu();
    let u = lu.u();
    let pivots: Vec<f64> = (0..n).map(|i| u[(i, i)].norm()).collect();
    let max_p = pivots.iter().cloned().fold(0.0, f64::max);
    let min_p = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_p > 1e-12 * max_p) {
        // the trace row cannot pin down a unique state
        return Err(Error::AmbiguousSteadyState { nullity: 1 + (0..n).filter(|&i| pivots[i] <= 1e-12 * max_p).count() });
    }
    let mut rhs = nalgebra::DVector::<C64>::zeros(n);
    rhs[0] = C64::new(1.0, 0.0);
    let x = lu.solve(&rhs).ok_or(Error::AmbiguousSteadyState { nullity: 2 })?;
    Ok(x.iter().copied().collect())
}

fn hermitize(v: &mut [C64], d: usize) {
    for r in 0..d {
        for c in r..d {
            let avg = 0.5 * (v[r * d + c] + v[c * d + r].conj());
            v[r * d + c] = avg;
            v[c * d + r] = avg.conj();
        }
    }
}

/// Unique steady state of the model. Requires at least one dissipator;
/// more than one invariant sector (or a degenerate sector) yields
/// [`Error::AmbiguousSteadyState`].
pub fn steady_state(model: &LindbladModel) -> Result<DensityMatrix> {
    if model.min_rate().is_none() {
        return Err(Error::Contract("steady state requires at least one dissipator".into()));
    }
    let sectors = model.sectors();
    if sectors.len() > 1 {
        return Err(Error::AmbiguousSteadyState { nullity: sectors.len() });
    }
    let all: Vec<usize> = (0..model.dim()).collect();
    let r = model.restricted(&all);
    let mut v = sector_steady_state(&r)?;
    hermitize(&mut v, r.d);
    DensityMatrix::new(embed(model.dim(), &all, &v))
}

/// Steady state reached from `rho0`. Sector populations are conserved by
/// the dynamics, so the result is the population-weighted mixture of each
/// occupied sector's steady state. Sectors whose own steady state is
/// degenerate fall back to long-time propagation.
pub fn steady_state_from(model: &LindbladModel, rho0: &DensityMatrix) -> Result<DensityMatrix> {
    if rho0.dim() != model.dim() {
        return Err(Error::Contract("initial state does not match model".into()));
    }
    let min_rate = model
        .min_rate()
        .ok_or_else(|| Error::Contract("steady state requires at least one dissipator".into()))?;
    let mut total = OperatorMatrix::zeros(model.dim());
    for sector in model.sectors() {
        let weight: f64 = sector.iter().map(|&i| rho0.get(i, i).re).sum();
        if weight.abs() < 1e-15 {
            continue;
        }
        let r = model.restricted(&sector);
        match sector_steady_state(&r) {
            Ok(mut v) => {
                hermitize(&mut v, r.d);
                total += &embed(model.dim(), &sector, &v).scale(weight);
            }
            Err(Error::AmbiguousSteadyState { .. }) => {
                let projected = embed(model.dim(), &sector, &rho0.op().restrict(&sector).to_row_major());
                let state = DensityMatrix::new_unchecked(projected);
                let end = steady_state_by_propagation(model, &state, 10.0 / min_rate)?;
                total += end.op();
            }
            Err(e) => return Err(e),
        }
    }
    DensityMatrix::new(total)
}

/// State after propagating for `t_end`.
pub fn steady_state_by_propagation(model: &LindbladModel, rho0: &DensityMatrix, t_end: f64) -> Result<DensityMatrix> {
    let traj = propagate(model, rho0, &[0.0, t_end])?;
    let last = traj.states.into_iter().last().expect("two outputs");
    Ok(last)
}

/// `max |L ρ| / max |L|` with the dense Liouvillian on the full space.
pub fn steady_state_residual(model: &LindbladModel, rho: &DensityMatrix) -> f64 {
    let all: Vec<usize> = (0..model.dim()).collect();
    let r = model.restricted(&all);
    let l = r.liouvillian();
    let v = nalgebra::DVector::from_vec(rho.op().to_row_major());
    let res = &l * v;
    let max = |it: &mut dyn Iterator<Item = &C64>| it.map(|z| z.norm()).fold(0.0, f64::max);
    max(&mut res.iter()) / max(&mut l.iter())
}

/// Evolves an arbitrary Hermitian operator (not necessarily a state) and
/// returns the reduced system operator at each grid time. The generator is
/// linear, so this is the building block of sampled dynamical maps.
pub fn propagate_reduced_operator(
    model: &LindbladModel,
    input: &OperatorMatrix,
    t_grid: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<OperatorMatrix>> {
    if input.dim() != model.dim() {
        return Err(Error::Contract(format!("operator dim {} does not match model dim {}", input.dim(), model.dim())));
    }
    if t_grid.is_empty() {
        return Err(Error::Contract("empty time grid".into()));
    }
    let idx = occupied_indices(model, input);
    if idx.is_empty() {
        return Ok(vec![OperatorMatrix::zeros(model.system_dim); t_grid.len()]);
    }
    let restricted = model.restricted(&idx);
    let d = idx.len();
    let y0 = input.restrict(&idx).to_row_major();
    let mut x = vec![ZERO; d * d];
    let mut z = vec![ZERO; d * d];
    let mut out = Vec::with_capacity(t_grid.len());
    integrate(
        |_, y: &[C64], dy: &mut [C64]| restricted.rhs(y, dy, &mut x, &mut z),
        t_grid[0],
        &y0,
        t_grid,
        opts,
        |_, _, y| {
            hermitize(y, d);
            out.push(reduce_system(model, &idx, y));
            Ok(Output::Modified)
        },
    )?;
    Ok(out)
}

/// Sampled map `ρ_s ↦ Tr_ph[e^{𝓛t}(ρ_s ⊗ ρ_ph)]` for a 4-level system,
/// built from the 16 Hermitian basis operators in parallel.
pub fn dynamical_map(
    model: &LindbladModel,
    phonon_state: &OperatorMatrix,
    t_grid: &[f64],
    opts: &OdeOptions,
    basis: DMatrix<C64>,
) -> Result<DynamicalMap> {
    use rayon::prelude::*;
    if model.system_dim != 4 {
        return Err(Error::Dimension(format!("dynamical maps need a 4-level system, got {}", model.system_dim)));
    }
    if phonon_state.dim() != model.fock.dim() {
        return Err(Error::Dimension("phonon state does not match the Fock space".into()));
    }
    let columns = (0..HERMITIAN_COORDS)
        .into_par_iter()
        .map(|k| {
            let input = tensor(&hermitian_basis(k), phonon_state)?;
            let images = propagate_reduced_operator(model, &input, t_grid, opts)?;
            Ok(images.iter().map(hermitian_coords).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    DynamicalMap::from_columns(t_grid.to_vec(), &columns, basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::FockSpace;

    fn two_level(up: f64, down: f64) -> LindbladModel {
        let h = OperatorMatrix::from_diagonal(&[0.0, 1.0]);
        let lower = OperatorMatrix::unit(2, 0, 1);
        let jumps = vec![Jump::new(lower.clone(), down, "down"), Jump::new(lower.adjoint(), up, "up")];
        LindbladModel::new(h, jumps, 2, FockSpace::new(0)).unwrap()
    }

    #[test]
    fn detailed_balance_steady_state() {
        let n = 3.0;
        let model = two_level(0.2 * n, 0.2 * (n + 1.0));
        let ss = steady_state(&model).unwrap();
        let pops = ss.populations();
        assert!((pops[0] - (n + 1.0) / (2.0 * n + 1.0)).abs() < 1e-12);
        assert!((pops[1] - n / (2.0 * n + 1.0)).abs() < 1e-12);
        assert!(steady_state_residual(&model, &ss) < 1e-10);
    }

    #[test]
    fn pure_decay_to_ground() {
        let model = two_level(0.0, 1.0);
        let ss = steady_state(&model).unwrap();
        assert!((ss.get(0, 0).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_dissipator_is_rejected() {
        let model = LindbladModel::new(OperatorMatrix::identity(2), vec![], 2, FockSpace::new(0)).unwrap();
        assert!(matches!(steady_state(&model), Err(Error::Contract(_))));
    }

    #[test]
    fn negative_rate_is_rejected() {
        let r = LindbladModel::new(
            OperatorMatrix::zeros(2),
            vec![Jump::new(OperatorMatrix::unit(2, 0, 1), -1.0, "bad")],
            2,
            FockSpace::new(0),
        );
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn phonon_decay_is_exponential() {
        let fock = FockSpace::new(2);
        let gamma = 0.7;
        let model = LindbladModel::new(OperatorMatrix::zeros(3), vec![Jump::new(fock.annihilation(), gamma, "c")], 1, fock)
            .unwrap();
        let rho0 = DensityMatrix::basis_state(3, 1).unwrap();
        let grid = uniform_grid(5.0, 51);
        let traj = propagate(&model, &rho0, &grid).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            assert!((s.get(1, 1).re - (-gamma * t).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn liouvillian_matches_rhs() {
        let model = two_level(0.3, 0.5);
        let all = vec![0, 1];
        let r = model.restricted(&all);
        let rho = [C64::new(0.6, 0.0), C64::new(0.1, 0.2), C64::new(0.1, -0.2), C64::new(0.4, 0.0)];
        let mut out = [ZERO; 4];
        let mut x = [ZERO; 4];
        let mut z = [ZERO; 4];
        r.rhs(&rho, &mut out, &mut x, &mut z);
        let l = r.liouvillian();
        let v = &l * nalgebra::DVector::from_row_slice(&rho);
        for i in 0..4 {
            assert!((v[i] - out[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn sectors_split_disconnected_blocks() {
        let model = two_level(0.0, 0.0);
        assert_eq!(model.sectors().len(), 2);
        let coupled = two_level(0.0, 1.0);
        assert_eq!(coupled.sectors(), vec![vec![0, 1]]);
    }

    #[test]
    fn dynamical_map_matches_direct_propagation() {
        use crate::measures::{initial_state_from_angles, to_labelled_basis, BlochAngles};
        use crate::siv::reference_basis;
        let p = SivParams::from_ghz(45.0, 10.0, 5.0).unwrap().with_field([0.05, 0.0, 0.2]);
        let g = 1e-3 * p.delta();
        let m = PhononModeParams { omega_ph: p.delta(), g1: g, g2: 0.5 * g, quality: 1e4, temperature: 0.5, n_max: 3 };
        let model = build_lindblad(&p, &m, 0.03 * g, 0.2).unwrap().rescaled(m.coupling_abs()).unwrap();
        let grid = uniform_grid(2.0, 33);
        let vac = OperatorMatrix::unit(m.fock().dim(), 0, 0);
        let u = reference_basis(&p).unwrap();
        let ode = OdeOptions { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        let map = dynamical_map(&model, &vac, &grid, &ode, u.clone()).unwrap();
        let angles = BlochAngles([1.1, 0.4, 2.0, 5.0]);
        let rho_s = to_labelled_basis(initial_state_from_angles(&angles).unwrap().op(), &u);
        let rho0 = DensityMatrix::new(tensor(&rho_s, &vac).unwrap()).unwrap();
        let opts = PropagateOptions { ode, ..PropagateOptions::system() };
        let traj = propagate_with(&model, &rho0, &grid, &opts).unwrap();
        for k in [0, 10, 32] {
            let diff = &map.apply(k, &rho_s) - traj.states[k].op();
            assert!(diff.max_abs() < 1e-7, "sample {k}: {}", diff.max_abs());
        }
    }
}

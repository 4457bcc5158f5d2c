//! Fast invariant suite run by `phonon-nm validate`.

use serde::Serialize;

use crate::bath::{rate_integrals, BathParams};
use crate::error::Result;
use crate::experiment::SingleModeSetup;
use crate::lindblad::{build_lindblad, propagate_with, steady_state_from, PropagateOptions};
use crate::measures::trace_distance_series;
use crate::quantum::partial_trace_phonon;
use crate::siv::{build_full_hamiltonian, build_siv_hamiltonian, eigenenergies_longitudinal, PhononModeParams};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, residual: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), residual, tolerance, passed: residual <= tolerance, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Largest time (in `1/|g|`) over which the truncation check compares
/// reduced trajectories.
pub const TRUNCATION_HORIZON: f64 = 10.0;

/// Runs every check; a check that cannot be evaluated is reported failed
/// with an infinite residual rather than aborting the suite.
pub fn validation_suite(s: &SingleModeSetup, bath: &BathParams) -> Result<ValidationReport> {
    s.validate()?;
    bath.validate()?;
    let checks = vec![
        guard("hermiticity", 1e-12, || hermiticity(s)),
        guard("closed_form_energies", 1e-6, || closed_form(s)),
        guard("contractivity_g0", 1e-8, || contractivity(s)),
        guard("rates_vanish_at_t0", 0.0, || rates_at_zero(s, bath)),
        guard("truncation_convergence", 1e-4, || truncation(s)),
    ];
    Ok(ValidationReport { checks })
}

fn guard(name: &str, tol: f64, f: impl FnOnce() -> Result<(f64, String)>) -> Check {
    match f() {
        Ok((r, detail)) => Check::new(name, r, tol, detail),
        Err(e) => Check { name: name.into(), residual: f64::INFINITY, tolerance: tol, passed: false, detail: format!("error: {e}") },
    }
}

fn hermiticity(s: &SingleModeSetup) -> Result<(f64, String)> {
    let h = build_full_hamiltonian(&s.siv, &s.mode)?;
    Ok((h.hermiticity_error() / h.max_abs().max(f64::MIN_POSITIVE), format!("relative, dim {}", h.dim())))
}

fn closed_form(s: &SingleModeSetup) -> Result<(f64, String)> {
    let mut p = s.siv.clone();
    p.field = [0.0, 0.0, p.field[2]];
    let mut closed = eigenenergies_longitudinal(&p)?.to_vec();
    closed.sort_by(f64::total_cmp);
    let numeric = build_siv_hamiltonian(&p)?.eigvalsh()?;
    let err = closed.iter().zip(&numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((err / p.delta(), format!("max |dE| / Delta at B_z = {} T", p.field[2])))
}

fn contractivity(s: &SingleModeSetup) -> Result<(f64, String)> {
    let mode = PhononModeParams { g1: 0.0, g2: 0.0, ..s.mode.clone() };
    let model = build_lindblad(&s.siv, &mode, s.gamma_siv, s.n_delta)?.rescaled(s.mode.coupling_abs())?;
    let rho0 = s.initial_state()?;
    let ss = partial_trace_phonon(&steady_state_from(&model, &rho0)?, mode.fock())?;
    let opts = PropagateOptions { ode: s.ode, ..PropagateOptions::system() };
    let traj = propagate_with(&model, &rho0, &s.grid(), &opts)?;
    let d = trace_distance_series(&traj, &ss)?;
    let rise = d.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok((rise, "largest increase of D(t) with g = 0".into()))
}

fn rates_at_zero(s: &SingleModeSetup, bath: &BathParams) -> Result<(f64, String)> {
    let r = rate_integrals(s.siv.delta(), 0.0, bath)?;
    Ok((r.as_array().iter().map(|v| v.abs()).fold(0.0, f64::max), "max |gamma_ij(0)|".into()))
}

fn truncation(s: &SingleModeSetup) -> Result<(f64, String)> {
    let horizon = s.window.min(TRUNCATION_HORIZON);
    let samples = ((s.samples - 1) as f64 * horizon / s.window).round() as usize + 1;
    let run = |n_max: usize| -> Result<Vec<crate::quantum::OperatorMatrix>> {
        let setup = SingleModeSetup { mode: PhononModeParams { n_max, ..s.mode.clone() }, window: horizon, samples: samples.max(2), ..s.clone() };
        let opts = PropagateOptions { ode: s.ode, ..PropagateOptions::system() };
        let traj = propagate_with(&setup.model()?, &setup.initial_state()?, &setup.grid(), &opts)?;
        Ok(traj.states.iter().map(|r| r.op().clone()).collect())
    };
    let (a, b) = (run(s.mode.n_max)?, run(2 * s.mode.n_max)?);
    let diff = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x.matrix() - y.matrix()).iter().map(|v| v.norm()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    Ok((diff, format!("sup |rho_s(n_max={}) - rho_s(n_max={})| for |g|t <= {horizon}", s.mode.n_max, 2 * s.mode.n_max)))
}

//! Single-point experiments shared by the sweeps and the command line:
//! trace-distance runs, BLP optimisation for the single-mode and
//! structured-bath models, and the spectrum ratio.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bath::{tlme_dynamical_map, BathParams, TlmeModel};
use crate::error::{Error, Result};
use crate::fit::{fit_linear_through_origin, r_squared, LinearFit};
use crate::meanfield::{meanfield_nd, MeanFieldParams};
use crate::lindblad::{
    build_lindblad, dynamical_map, propagate_with, steady_state_from, uniform_grid, LindbladModel, PropagateOptions, Trajectory,
};
use crate::measures::{blp_bounds, blp_functional, dynamical_nm_series, BlochAngles, DynamicalMap, NmResult};
use crate::ode::OdeOptions;
use crate::optimize::{mixed_resolution_maximize, Algorithm, Bounds, OptResult};
use crate::quantum::{partial_trace_phonon, tensor, DensityMatrix, OperatorMatrix, C64};
use crate::siv::{build_full_hamiltonian, eigenenergies_longitudinal, reference_basis, PhononModeParams, SivParams, STATE_1, STATE_3};

/// SiV⁻ coupled to one damped mode, initial state `|level⟩ ⊗ |fock⟩`.
/// Times are in units of `1/|g|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleModeSetup {
    pub siv: SivParams,
    pub mode: PhononModeParams,
    /// Γ_SiV (rad/s).
    pub gamma_siv: f64,
    /// Thermal occupation N(Δ) of the SiV bath.
    pub n_delta: f64,
    /// 0-based labelled level `|1⟩..|4⟩`.
    pub level: usize,
    pub fock: usize,
    /// Final dimensionless time |g| t_f.
    pub window: f64,
    pub samples: usize,
    pub ode: OdeOptions,
}

impl SingleModeSetup {
    pub fn validate(&self) -> Result<()> {
        self.siv.validate()?;
        self.mode.validate()?;
        if self.level > 3 {
            return Err(Error::InvalidParameter(format!("level must be 0..=3, got {}", self.level)));
        }
        if self.fock > self.mode.n_max {
            return Err(Error::InvalidParameter(format!("Fock state {} exceeds n_max = {}", self.fock, self.mode.n_max)));
        }
        if !(self.window > 0.0) || self.samples < 2 {
            return Err(Error::InvalidParameter("window must be positive with at least 2 samples".into()));
        }
        if !(self.mode.coupling_abs() > 0.0) {
            return Err(Error::InvalidParameter("times are measured in 1/|g|, which needs g != 0".into()));
        }
        Ok(())
    }

    /// Lindblad model with time measured in `1/|g|`.
    pub fn model(&self) -> Result<LindbladModel> {
        self.validate()?;
        build_lindblad(&self.siv, &self.mode, self.gamma_siv, self.n_delta)?.rescaled(self.mode.coupling_abs())
    }

    pub fn initial_state(&self) -> Result<DensityMatrix> {
        let fock = self.mode.fock();
        let rho = tensor(&OperatorMatrix::unit(4, self.level, self.level), &fock.projector(self.fock)?)?;
        DensityMatrix::new(rho)
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.window, self.samples)
    }

    pub fn phonon_state(&self) -> Result<OperatorMatrix> {
        self.mode.fock().projector(self.fock)
    }

    pub fn with_field(&self, field: [f64; 3]) -> Self {
        Self { siv: self.siv.clone().with_field(field), ..self.clone() }
    }

    pub fn with_coupling(&self, g1: f64, g2: f64) -> Self {
        Self { mode: PhononModeParams { g1, g2, ..self.mode.clone() }, ..self.clone() }
    }
}

/// Output of one trace-distance run.
#[derive(Clone, Debug)]
pub struct TraceDistanceRun {
    pub nd: NmResult,
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    pub trajectory: Trajectory,
    pub steady_state: DensityMatrix,
}

/// Propagates the setup and measures `D(t) = ½‖ρ_s(t) − ρ_SS‖₁`.
pub fn trace_distance_run(s: &SingleModeSetup) -> Result<TraceDistanceRun> {
    let model = s.model()?;
    let rho0 = s.initial_state()?;
    let ss = steady_state_from(&model, &rho0)?;
    let ss_sys = partial_trace_phonon(&ss, s.mode.fock())?;
    let opts = PropagateOptions { ode: s.ode, ..PropagateOptions::system() };
    let traj = propagate_with(&model, &rho0, &s.grid(), &opts)?;
    let (nd, distance) = dynamical_nm_series(&traj, &ss_sys)?;
    Ok(TraceDistanceRun { nd, times: traj.times.clone(), distance, trajectory: traj, steady_state: ss_sys })
}

/// Time window and sample count of one resolution level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub window: f64,
    pub samples: usize,
}

impl Resolution {
    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.window, self.samples)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlpSearch {
    pub algorithm: Algorithm,
    pub low: Resolution,
    pub high: Resolution,
}

pub fn blp_box() -> Bounds {
    let (lo, hi) = blp_bounds();
    Bounds::new(lo, hi).expect("static bounds")
}

/// Maximises the BLP functional over the eight Bloch angles using the two
/// precomputed maps.
pub fn maximize_blp(low: &DynamicalMap, high: &DynamicalMap, search: &BlpSearch, seed: u64) -> Result<OptResult> {
    let objective = |map: &DynamicalMap, x: &[f64]| -> Result<f64> {
        let (a, b) = BlochAngles::pair(x)?;
        blp_functional(map, &a, &b)
    };
    let lo = |x: &[f64]| objective(low, x);
    let hi = |x: &[f64]| objective(high, x);
    mixed_resolution_maximize(&lo, &hi, (low.len(), high.len()), &blp_box(), &search.algorithm, seed)
}

/// Single-mode BLP at the setup's field. The phonon mode starts in the
/// setup's Fock state; `s.window`/`s.samples` are ignored in favour of the
/// search resolutions.
pub fn single_mode_blp(s: &SingleModeSetup, search: &BlpSearch, seed: u64) -> Result<OptResult> {
    let model = s.model()?;
    let phonon = s.phonon_state()?;
    let basis = reference_basis(&s.siv)?;
    let low = dynamical_map(&model, &phonon, &search.low.grid(), &s.ode, basis.clone())?;
    let high = dynamical_map(&model, &phonon, &search.high.grid(), &s.ode, basis)?;
    maximize_blp(&low, &high, search, seed)
}

/// Structured-bath configuration; windows are in units of `1/Δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BathSetup {
    pub siv: SivParams,
    pub bath: BathParams,
    pub ode: OdeOptions,
}

impl BathSetup {
    pub fn model(&self, window: f64, samples: usize) -> Result<TlmeModel> {
        let d = self.siv.delta();
        TlmeModel::new(&self.siv, self.bath.clone(), window / d, samples.max(4))
    }

    pub fn with_temperature(&self, temperature: f64) -> Self {
        Self { bath: self.bath.with_temperature(temperature), ..self.clone() }
    }

    /// Dynamical map on a grid in units of `1/Δ` (converted to seconds).
    pub fn map(&self, model: &TlmeModel, res: &Resolution) -> Result<DynamicalMap> {
        let d = self.siv.delta();
        let grid: Vec<f64> = res.grid().iter().map(|t| t / d).collect();
        tlme_dynamical_map(model, &grid, &self.ode)
    }
}

/// Structured-bath BLP. Rate tables are built once on the longer window.
pub fn bath_blp(s: &BathSetup, search: &BlpSearch, seed: u64) -> Result<OptResult> {
    let window = search.low.window.max(search.high.window);
    let table_samples = search.low.samples.max(search.high.samples).min(4001);
    let model = s.model(window, table_samples)?;
    let low = s.map(&model, &search.low)?;
    let high = s.map(&model, &search.high)?;
    maximize_blp(&low, &high, search, seed)
}

/// `ω_ph / |E_n − E_m|` for 1-based ascending levels of the full
/// Hamiltonian; infinite when the gap is below `1e-12 Δ`. The magnitude
/// makes the value independent of the level-ordering convention.
pub fn spectrum_ratio(siv: &SivParams, mode: &PhononModeParams, levels: (usize, usize)) -> Result<f64> {
    let h = build_full_hamiltonian(siv, mode)?;
    let e = h.eigvalsh()?;
    ratio_from_energies(&e, mode.omega_ph, siv.delta(), levels)
}

pub(crate) fn ratio_from_energies(e: &[f64], omega_ph: f64, delta: f64, (n, m): (usize, usize)) -> Result<f64> {
    if n == 0 || m == 0 || n > e.len() || m > e.len() {
        return Err(Error::InvalidParameter(format!("levels ({n}, {m}) outside 1..={}", e.len())));
    }
    let gap = (e[n - 1] - e[m - 1]).abs();
    if gap < 1e-12 * delta {
        return Ok(f64::INFINITY);
    }
    Ok(omega_ph / gap)
}

/// Mean-field model of the `|1⟩ ↔ |3⟩` transition driven by a coherent
/// mode; rates are expressed in units of `|g|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldSetup {
    pub siv: SivParams,
    pub mode: PhononModeParams,
    pub gamma_siv: f64,
    pub window: f64,
    pub samples: usize,
    pub ode: OdeOptions,
}

impl MeanFieldSetup {
    /// Parameters at emitter temperature `temperature` (K).
    pub fn params(&self, temperature: f64) -> Result<MeanFieldParams> {
        self.mode.validate()?;
        let g = self.mode.coupling_abs();
        if !(g > 0.0) {
            return Err(Error::InvalidParameter("times are measured in 1/|g|, which needs g != 0".into()));
        }
        let e = eigenenergies_longitudinal(&self.siv)?;
        let (gamma, sz_eq) = MeanFieldParams::thermal_relaxation(self.gamma_siv, self.siv.delta(), temperature)?;
        let p = MeanFieldParams {
            omega_ph: self.mode.omega_ph / g,
            omega_s: (e[STATE_3] - e[STATE_1]) / g,
            g: self.mode.coupling() / g,
            gamma_ph: self.mode.gamma_ph() / g,
            gamma: gamma / g,
            sz_eq,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.window, self.samples)
    }
}

/// N_D against `|α(0)|` at one temperature, with the slope through the origin.
#[derive(Clone, Debug, Serialize)]
pub struct MeanFieldScaling {
    pub temperature: f64,
    pub alphas: Vec<f64>,
    pub nd: Vec<f64>,
    pub fit: LinearFit,
    /// Centred R² of the fitted line.
    pub r_squared: f64,
}

pub fn meanfield_scaling(s: &MeanFieldSetup, alphas: &[f64], temperature: f64) -> Result<MeanFieldScaling> {
    let p = s.params(temperature)?;
    let grid = s.grid();
    let nd = alphas
        .par_iter()
        .map(|a| meanfield_nd(C64::new(*a, 0.0), &p, &grid, &s.ode).map(|r| r.value))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_linear_through_origin(alphas, &nd)?;
    let pred: Vec<f64> = alphas.iter().map(|a| fit.slope * a).collect();
    Ok(MeanFieldScaling { temperature, alphas: alphas.to_vec(), r_squared: r_squared(&nd, &pred), nd, fit })
}

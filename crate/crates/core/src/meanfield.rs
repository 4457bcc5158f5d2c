//! Semiclassical equations for ⟨c⟩, ⟨σ₊⟩, ⟨σ_z⟩ in the large-occupation
//! regime of the effective two-level model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{nm_from_series, NmResult};
use crate::ode::{integrate, OdeOptions, Output};
use crate::quantum::C64;
use crate::units::bose_occupation;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub alpha: C64,
    pub sp: C64,
    pub sz: f64,
}

impl MeanFieldState {
    /// Coherent mode amplitude with the emitter in its ground state.
    pub fn ground(alpha: C64) -> Self {
        Self { alpha, sp: C64::new(0.0, 0.0), sz: -1.0 }
    }

    /// `(⟨σ_x⟩, ⟨σ_y⟩, ⟨σ_z⟩)` with σ_x = σ₊ + σ₋, σ_y = -i(σ₊ - σ₋).
    pub fn bloch(&self) -> [f64; 3] {
        [2.0 * self.sp.re, 2.0 * self.sp.im, self.sz]
    }

    fn pack(&self) -> [f64; 5] {
        [self.alpha.re, self.alpha.im, self.sp.re, self.sp.im, self.sz]
    }

    fn unpack(y: &[f64]) -> Self {
        Self { alpha: C64::new(y[0], y[1]), sp: C64::new(y[2], y[3]), sz: y[4] }
    }
}

/// All rates in one consistent unit (typically |g|).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldParams {
    pub omega_ph: f64,
    pub omega_s: f64,
    pub g: C64,
    pub gamma_ph: f64,
    /// Effective population decay rate Γ.
    pub gamma: f64,
    /// Value ⟨σ_z⟩ relaxes to; 0 reproduces the bare `-Γ⟨σ_z⟩` term,
    /// `-1/(2N + 1)` the thermal two-level dissipator.
    pub sz_eq: f64,
}

impl MeanFieldParams {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.omega_ph, self.omega_s, self.g.re, self.g.im, self.gamma_ph, self.gamma, self.sz_eq];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("mean-field parameters must be finite".into()));
        }
        if self.gamma_ph < 0.0 || self.gamma < 0.0 {
            return Err(Error::InvalidParameter("damping rates must be >= 0".into()));
        }
        if self.sz_eq.abs() > 1.0 {
            return Err(Error::InvalidParameter(format!("sz_eq must lie in [-1, 1], got {}", self.sz_eq)));
        }
        Ok(())
    }

    /// Thermal population decay `Γ_SiV (2N(Δ, T) + 1)`; `delta` and
    /// `gamma_siv` in rad/s, the result in the same unit as `gamma_siv`.
    pub fn thermal_gamma(gamma_siv: f64, delta: f64, temperature: f64) -> Result<f64> {
        Ok(gamma_siv * (2.0 * bose_occupation(delta, temperature)? + 1.0))
    }

    /// `(Γ, sz_eq)` of the thermal dissipator with down/up rates
    /// `Γ_SiV (N + 1)` and `Γ_SiV N`.
    pub fn thermal_relaxation(gamma_siv: f64, delta: f64, temperature: f64) -> Result<(f64, f64)> {
        let n = if temperature > 0.0 { bose_occupation(delta, temperature)? } else { 0.0 };
        Ok((gamma_siv * (2.0 * n + 1.0), -1.0 / (2.0 * n + 1.0)))
    }
}

pub fn meanfield_rhs(s: &MeanFieldState, p: &MeanFieldParams) -> MeanFieldState {
    let i = C64::new(0.0, 1.0);
    let sm = s.sp.conj();
    let x = 2.0 * s.alpha.re; // α + α*
    let alpha = -i * p.omega_ph * s.alpha - i * (p.g.conj() * s.sp + p.g * sm) - p.gamma_ph * s.alpha;
    let sp = i * p.omega_s * s.sp - i * p.g * x * s.sz - 0.5 * p.gamma * s.sp;
    let sz = (2.0 * i * x * (p.g * sm - p.g.conj() * s.sp)).re - p.gamma * (s.sz - p.sz_eq);
    MeanFieldState { alpha, sp, sz }
}

/// Samples the trajectory on `t_grid` (starting at `t_grid[0]`).
pub fn integrate_meanfield(s0: &MeanFieldState, p: &MeanFieldParams, t_grid: &[f64], opts: &OdeOptions) -> Result<Vec<MeanFieldState>> {
    p.validate()?;
    if t_grid.is_empty() {
        return Err(Error::Contract("empty time grid".into()));
    }
    let mut out = Vec::with_capacity(t_grid.len());
    integrate(
        |_, y: &[f64], dy: &mut [f64]| {
            let d = meanfield_rhs(&MeanFieldState::unpack(y), p);
            dy.copy_from_slice(&d.pack());
        },
        t_grid[0],
        &s0.pack(),
        t_grid,
        opts,
        |_, t, y| {
            let s = MeanFieldState::unpack(y);
            if s.sz.abs() > 1.0 + 1e-6 || s.sp.norm() > 1.0 + 1e-6 {
                return Err(Error::Integrator { t, reason: format!("Bloch bound violated: sz = {}, |sp| = {}", s.sz, s.sp.norm()) });
            }
            out.push(s);
            Ok(Output::Unchanged)
        },
    )?;
    Ok(out)
}

/// Half the Euclidean distance of each Bloch vector to `reference`.
pub fn bloch_distance_series(states: &[MeanFieldState], reference: [f64; 3]) -> Vec<f64> {
    states
        .iter()
        .map(|s| {
            let b = s.bloch();
            0.5 * ((b[0] - reference[0]).powi(2) + (b[1] - reference[1]).powi(2) + (b[2] - reference[2]).powi(2)).sqrt()
        })
        .collect()
}

/// Dynamical non-Markovianity of the emitter for a coherent initial
/// amplitude, measured against the damped fixed point `(0, 0, sz_eq)`.
pub fn meanfield_nd(alpha0: C64, p: &MeanFieldParams, t_grid: &[f64], opts: &OdeOptions) -> Result<NmResult> {
    if alpha0.norm_sqr() < 4.0 {
        log::warn!("|alpha(0)|^2 = {:.3} is outside the large-occupation regime", alpha0.norm_sqr());
    }
    let states = integrate_meanfield(&MeanFieldState::ground(alpha0), p, t_grid, opts)?;
    let d = bloch_distance_series(&states, [0.0, 0.0, p.sz_eq]);
    nm_from_series(t_grid, &d, format!("mean-field |alpha(0)| = {:.4}", alpha0.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(g: f64) -> MeanFieldParams {
        MeanFieldParams { omega_ph: 1.3, omega_s: 1.3, g: C64::new(g, 0.4 * g), gamma_ph: 0.05, gamma: 0.2, sz_eq: 0.0 }
    }

    fn grid(t: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| t * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn free_mode_and_emitter_decay_exactly() {
        let p = params(0.0);
        let a0 = C64::new(2.0, -1.0);
        let s0 = MeanFieldState { alpha: a0, sp: C64::new(0.1, 0.2), sz: 0.7 };
        let g = grid(10.0, 41);
        let opts = OdeOptions { rtol: 1e-12, atol: 1e-14, ..Default::default() };
        let traj = integrate_meanfield(&s0, &p, &g, &opts).unwrap();
        for (t, s) in g.iter().zip(&traj) {
            let expect = a0 * (C64::new(-p.gamma_ph, -p.omega_ph) * *t).exp();
            assert!((s.alpha - expect).norm() < 1e-10);
            assert!((s.sz - 0.7 * (-p.gamma * t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn thermal_fixed_point_is_stationary() {
        let p = MeanFieldParams { sz_eq: -0.3, ..params(0.3) };
        let d = meanfield_rhs(&MeanFieldState { alpha: C64::new(0.0, 0.0), sp: C64::new(0.0, 0.0), sz: -0.3 }, &p);
        assert_eq!(d.pack(), [0.0; 5]);
        let (g, s) = MeanFieldParams::thermal_relaxation(2.0, 1e11, 0.0).unwrap();
        assert_eq!((g, s), (2.0, -1.0));
    }

    #[test]
    fn rotation_alone_cannot_show_backflow_towards_origin() {
        // with sz_eq = 0 the distance is the Bloch length, which only shrinks
        let r = meanfield_nd(C64::new(6.0, 0.0), &params(0.1), &grid(30.0, 3001), &OdeOptions::default()).unwrap();
        assert!(r.value < 1e-6, "{}", r.value);
    }

    #[test]
    fn origin_is_a_fixed_point() {
        let d = meanfield_rhs(&MeanFieldState { alpha: C64::new(0.0, 0.0), sp: C64::new(0.0, 0.0), sz: 0.0 }, &params(0.3));
        assert_eq!(d.pack(), [0.0; 5]);
    }

    #[test]
    fn undriven_relaxation_is_markovian() {
        let p = MeanFieldParams { sz_eq: -0.5, ..params(0.1) };
        let r = meanfield_nd(C64::new(0.0, 0.0), &p, &grid(30.0, 3001), &OdeOptions::default()).unwrap();
        assert!(r.value < 1e-12, "{}", r.value);
    }

    #[test]
    fn bloch_vector_stays_bounded() {
        let p = params(0.05);
        let traj = integrate_meanfield(&MeanFieldState::ground(C64::new(8.0, 0.0)), &p, &grid(50.0, 501), &OdeOptions::default()).unwrap();
        assert!(traj.iter().all(|s| s.sz.abs() <= 1.0 + 1e-6));
    }

    #[test]
    fn thermal_gamma_grows() {
        let d = 2.0 * std::f64::consts::PI * 46e9;
        let a = MeanFieldParams::thermal_gamma(1.0, d, 1.0).unwrap();
        let b = MeanFieldParams::thermal_gamma(1.0, d, 10.0).unwrap();
        assert!(a > 1.0 && b > a);
    }
}

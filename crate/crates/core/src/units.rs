//! Physical constants and unit conversions.
//!
//! Internally every frequency is an angular frequency in rad/s with ħ = 1.
//! Configuration files speak ordinary frequencies in GHz.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// ħ / k_B in kelvin·seconds.
pub const HBAR_OVER_KB: f64 = 7.6382e-12;

/// Reduced Planck constant in J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Electron spin gyromagnetic ratio, 2π · 2.8 MHz/G, in rad/s per tesla.
pub const GAMMA_SPIN: f64 = 2.0 * PI * 2.8e6 * 1e4;

/// Speed of sound in diamond (m/s).
pub const DIAMOND_SOUND_SPEED: f64 = 1.2e4;

/// Mass density of diamond used for mode-volume coupling estimates (kg/m³).
pub const DIAMOND_DENSITY: f64 = 3500.0;

/// Ordinary frequency in GHz to angular frequency in rad/s.
pub fn ghz_to_rad(nu_ghz: f64) -> f64 {
    2.0 * PI * nu_ghz * 1e9
}

/// Angular frequency in rad/s to ordinary frequency in GHz.
pub fn rad_to_ghz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e9)
}

/// Bose-Einstein occupation `1 / (exp(ħω / k_B T) - 1)`.
pub fn bose_occupation(omega: f64, temperature: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::Domain(format!("Bose occupation needs omega > 0, got {omega}")));
    }
    if temperature < 0.0 {
        return Err(Error::Domain(format!("negative temperature {temperature}")));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    let x = HBAR_OVER_KB * omega / temperature;
    Ok(1.0 / x.exp_m1())
}

/// Coupling of a SiV center to a compression mode of volume `l·w·t`:
/// `g ≈ d / v_s · sqrt(ħ ω / (2 ρ l w t))`.
///
/// `strain_sensitivity` is in rad/s per unit strain, lengths in metres.
pub fn estimate_phonon_coupling(strain_sensitivity: f64, l: f64, w: f64, t: f64, omega_ph: f64) -> Result<f64> {
    for (name, v) in [("strain sensitivity", strain_sensitivity), ("l", l), ("w", w), ("t", t), ("omega_ph", omega_ph)] {
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    let zero_point = (HBAR * omega_ph / (2.0 * DIAMOND_DENSITY * l * w * t)).sqrt();
    Ok(strain_sensitivity / DIAMOND_SOUND_SPEED * zero_point)
}

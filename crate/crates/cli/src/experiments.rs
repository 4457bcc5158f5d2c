//! Config → experiment plan → tabular outcome.

use std::path::{Path, PathBuf};

use phonon_nm::bath::{BathParams, CrossMode, TlmeModel};
use phonon_nm::experiment::{
    meanfield_scaling, trace_distance_run, BathSetup, BlpSearch, MeanFieldSetup, Resolution, SingleModeSetup,
};
use phonon_nm::fit::fit_linear_through_origin;
use phonon_nm::lindblad::uniform_grid;
use phonon_nm::ode::OdeOptions;
use phonon_nm::optimize::{Algorithm, DeConfig, SaConfig};
use phonon_nm::siv::{PhononModeParams, SivParams};
use phonon_nm::sweep::{self, Axis, SweepResult};
use phonon_nm::units::{ghz_to_rad, rad_to_ghz};
use phonon_nm::validation::validation_suite;
use serde_json::{json, Value};

use crate::config::Config;
use crate::CliError;

pub const EXPERIMENTS: [&str; 8] =
    ["trace-distance", "nd-bz", "blp-map", "blp-temp", "meanfield-scaling", "spectrum-map", "rates-dump", "validate"];

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
}

/// Tabular result plus a JSON summary for the sidecar.
#[derive(Debug)]
pub struct Outcome {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub summary: Value,
    pub flags: Vec<String>,
    /// Set when the run completed but its checks failed.
    pub failure: Option<String>,
}

impl Outcome {
    fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new(), summary: json!({}), flags: Vec::new(), failure: None }
    }
}

#[derive(Debug)]
pub enum Plan {
    TraceDistance { setup: SingleModeSetup, contrast: Option<f64> },
    NdBz { setup: SingleModeSetup, g: Vec<f64>, bz: Vec<f64> },
    BlpMap { setup: SingleModeSetup, bx: Axis, bz: Axis, search: BlpSearch, seed: u64 },
    BlpTemp { setup: BathSetup, temperatures: Vec<f64>, search: BlpSearch, seed: u64 },
    MeanField { setup: MeanFieldSetup, temperatures: Vec<f64>, alphas: Vec<f64> },
    Spectrum { siv: SivParams, mode: PhononModeParams, bx: Axis, bz: Axis, levels: (usize, usize) },
    Rates { siv: SivParams, bath: BathParams, window: f64, samples: usize },
    Validate { setup: SingleModeSetup, bath: BathParams },
}

impl Plan {
    pub fn uses_seed(&self) -> bool {
        matches!(self, Plan::BlpMap { .. } | Plan::BlpTemp { .. })
    }

    pub fn checkpointed(&self) -> bool {
        matches!(self, Plan::NdBz { .. } | Plan::BlpMap { .. } | Plan::BlpTemp { .. })
    }
}

fn lib(e: phonon_nm::Error) -> CliError {
    CliError::Lib(e)
}

fn siv_block(c: &mut Config, with_field: bool) -> Result<SivParams, CliError> {
    let s = "siv";
    let mut p = SivParams::from_ghz(c.require_f64(s, "lambda_ghz")?, c.require_f64(s, "gamma_x_ghz")?, c.require_f64(s, "gamma_y_ghz")?).map_err(lib)?;
    p.ham_factor = c.require_f64(s, "ham_factor")?;
    p.gamma_s = ghz_to_rad(c.require_f64(s, "gamma_s_ghz_per_t")?);
    if with_field {
        p.field = [c.require_f64(s, "b_x_t")?, 0.0, c.require_f64(s, "b_z_t")?];
    }
    p.validate().map_err(lib)?;
    Ok(p)
}

#[derive(Clone, Copy)]
struct ModeKeys {
    coupling: bool,
    quality: bool,
    temperature: bool,
    truncation: bool,
}

const FULL_MODE: ModeKeys = ModeKeys { coupling: true, quality: true, temperature: true, truncation: true };

fn mode_block(c: &mut Config, delta: f64, keys: ModeKeys) -> Result<PhononModeParams, CliError> {
    let s = "mode";
    let omega_ph = c.frequency(s, "omega_ph", delta)?;
    let (g1, g2) = if keys.coupling { (c.frequency(s, "g1", delta)?, c.frequency(s, "g2", delta)?) } else { (0.0, 0.0) };
    let quality = if keys.quality { c.require_f64(s, "quality")? } else { f64::INFINITY };
    let temperature = if keys.temperature { c.require_f64(s, "temperature_k")? } else { 0.0 };
    let n_max = if keys.truncation { c.numeric(s, "n_max", 15usize)? } else { 1 };
    let m = PhononModeParams { omega_ph, g1, g2, quality, temperature, n_max };
    m.validate().map_err(lib)?;
    for w in m.regime_warnings() {
        log::warn!("{w}");
    }
    Ok(m)
}

/// `(Γ_SiV, N(Δ))`; N from `n_delta` or `temperature_k`, never both.
fn emitter_block(c: &mut Config, siv: &SivParams) -> Result<(f64, f64), CliError> {
    let s = "emitter";
    let gamma_siv = c.frequency(s, "gamma_siv", siv.delta())?;
    let n_delta = match (c.has(s, "n_delta"), c.has(s, "temperature_k")) {
        (true, false) => c.require_f64(s, "n_delta")?,
        (false, true) => phonon_nm::lindblad::n_delta_from_temperature(siv, c.require_f64(s, "temperature_k")?).map_err(lib)?,
        (true, true) => return Err(CliError::Config("give only one of emitter.n_delta and emitter.temperature_k".into())),
        (false, false) => return Err(CliError::Config("missing required key emitter.n_delta (or emitter.temperature_k)".into())),
    };
    Ok((gamma_siv, n_delta))
}

fn ode_block(c: &mut Config) -> Result<OdeOptions, CliError> {
    let d = OdeOptions::default();
    let o = OdeOptions { rtol: c.numeric("ode", "rtol", d.rtol)?, atol: c.numeric("ode", "atol", d.atol)?, max_step: d.max_step, max_steps: c.numeric("ode", "max_steps", d.max_steps)? };
    if !(o.rtol > 0.0 && o.atol > 0.0) {
        return Err(CliError::Config("ode tolerances must be positive".into()));
    }
    Ok(o)
}

fn window_block(c: &mut Config) -> Result<(f64, usize), CliError> {
    let t = c.require_f64("window", "t_final")?;
    let n = c.numeric("window", "samples", 1001usize)?;
    if !(t > 0.0) || n < 2 {
        return Err(CliError::Config("window.t_final must be positive and window.samples >= 2".into()));
    }
    Ok((t, n))
}

fn optimizer_block(c: &mut Config, seed_override: Option<u64>) -> Result<(Algorithm, u64), CliError> {
    let s = "optimizer";
    let algorithm: String = c.require(s, "algorithm")?;
    let alg = match algorithm.as_str() {
        "de" => {
            let d = DeConfig::default();
            let budget: Option<usize> = c.optional(s, "budget")?;
            let cfg = DeConfig {
                pop_size: c.numeric(s, "pop_size", d.pop_size)?,
                f_weight: c.numeric(s, "f_weight", d.f_weight)?,
                cr: c.numeric(s, "cr", d.cr)?,
                max_gen: c.numeric(s, "generations", d.max_gen)?,
                tol: c.numeric(s, "tol", d.tol)?,
                budget,
            };
            cfg.validate().map_err(lib)?;
            Algorithm::De(cfg)
        }
        "sa" => {
            let d = SaConfig::default();
            let cfg = SaConfig {
                t_initial: c.numeric(s, "t_initial", d.t_initial)?,
                t_final: c.numeric(s, "t_final", d.t_final)?,
                cooling: c.numeric(s, "cooling", d.cooling)?,
                steps_per_temperature: c.numeric(s, "steps_per_temperature", d.steps_per_temperature)?,
                step: c.numeric(s, "step", d.step)?,
            };
            cfg.validate().map_err(lib)?;
            Algorithm::Sa(cfg)
        }
        other => return Err(CliError::Config(format!("optimizer.algorithm must be 'de' or 'sa', got '{other}'"))),
    };
    let seed = match seed_override {
        Some(v) => {
            c.apply_override(&format!("{s}.seed={v}"))?;
            c.require(s, "seed")?
        }
        None => c.numeric(s, "seed", 0u64)?,
    };
    Ok((alg, seed))
}

fn resolution_block(c: &mut Config, algorithm: Algorithm) -> Result<BlpSearch, CliError> {
    let s = "resolution";
    let low = Resolution { window: c.require_f64(s, "low_window")?, samples: c.require(s, "low_samples")? };
    let high = Resolution { window: c.require_f64(s, "high_window")?, samples: c.require(s, "high_samples")? };
    for r in [low, high] {
        if !(r.window > 0.0) || r.samples < 2 {
            return Err(CliError::Config("resolution windows must be positive with >= 2 samples".into()));
        }
    }
    Ok(BlpSearch { algorithm, low, high })
}

fn bath_block(c: &mut Config, siv: &SivParams, with_temperature: bool) -> Result<BathParams, CliError> {
    let s = "bath";
    let delta = siv.delta();
    let cross: String = c.require(s, "cross")?;
    let p = BathParams {
        j0: c.require_f64(s, "j0_per_delta")? / delta,
        width: c.frequency(s, "width", delta)?,
        center: c.frequency(s, "center", delta)?,
        temperature: if with_temperature { c.require_f64(s, "temperature_k")? } else { 0.0 },
        omega_max: c.frequency(s, "omega_max", delta)?,
        cross_mode: cross.parse::<CrossMode>().map_err(lib)?,
    };
    p.validate().map_err(lib)?;
    Ok(p)
}

/// Quadrant axis `[0, max]` with `count` points.
fn quadrant_axis(c: &mut Config, name: &str, key: &str, count: usize) -> Result<Axis, CliError> {
    let max = c.require_f64("grid", key)?;
    if !(max > 0.0) {
        return Err(CliError::Config(format!("grid.{key} must be positive")));
    }
    Axis::linspace(name, 0.0, max, count).map_err(lib)
}

fn grid_count(c: &mut Config) -> Result<usize, CliError> {
    let n: usize = c.require("grid", "count")?;
    if n < 2 {
        return Err(CliError::Config("grid.count must be >= 2".into()));
    }
    Ok(n)
}

fn linspace_block(c: &mut Config, min_key: &str, max_key: &str) -> Result<Vec<f64>, CliError> {
    let (lo, hi) = (c.require_f64("grid", min_key)?, c.require_f64("grid", max_key)?);
    let n = grid_count(c)?;
    Ok(Axis::linspace("grid", lo, hi, n).map_err(lib)?.values)
}

fn single_mode(c: &mut Config, with_field: bool, mode_keys: ModeKeys, state: bool) -> Result<SingleModeSetup, CliError> {
    let siv = siv_block(c, with_field)?;
    let mode = mode_block(c, siv.delta(), mode_keys)?;
    let (gamma_siv, n_delta) = emitter_block(c, &siv)?;
    let level = if state { c.require::<usize>("state", "level")? } else { 1 };
    if !(1..=4).contains(&level) {
        return Err(CliError::Config(format!("state.level must be 1..=4, got {level}")));
    }
    let fock = c.require("state", "fock")?;
    Ok(SingleModeSetup { siv, mode, gamma_siv, n_delta, level: level - 1, fock, window: 1.0, samples: 2, ode: ode_block(c)? })
}

pub fn plan(c: &mut Config, experiment: &str, seed_override: Option<u64>) -> Result<Plan, CliError> {
    let fmt: String = c.numeric("output", "format", "csv".to_string())?;
    if fmt != "csv" {
        return Err(CliError::Config(format!("output.format must be 'csv', got '{fmt}'")));
    }
    let p = match experiment {
        "trace-distance" => {
            let mut setup = single_mode(c, true, FULL_MODE, true)?;
            (setup.window, setup.samples) = window_block(c)?;
            let contrast = if c.has_section("contrast") { Some(c.frequency("contrast", "omega_ph", setup.siv.delta())?) } else { None };
            setup.validate().map_err(lib)?;
            Plan::TraceDistance { setup, contrast }
        }
        "nd-bz" => {
            let mut setup = single_mode(c, false, ModeKeys { coupling: false, ..FULL_MODE }, true)?;
            (setup.window, setup.samples) = window_block(c)?;
            let g = c.frequency_list("scan", "g", setup.siv.delta())?;
            if g.iter().any(|v| !(*v > 0.0)) {
                return Err(CliError::Config("scan.g values must be positive".into()));
            }
            let bz = linspace_block(c, "bz_min_t", "bz_max_t")?;
            setup = setup.with_coupling(g[0], g[0]);
            setup.validate().map_err(lib)?;
            Plan::NdBz { setup, g, bz }
        }
        "blp-map" => {
            let mut setup = single_mode(c, false, FULL_MODE, false)?;
            let n = grid_count(c)?;
            let bx = quadrant_axis(c, "B_x", "bx_max_t", n)?;
            let bz = quadrant_axis(c, "B_z", "bz_max_t", n)?;
            let (alg, seed) = optimizer_block(c, seed_override)?;
            let search = resolution_block(c, alg)?;
            (setup.window, setup.samples) = (search.high.window, search.high.samples);
            setup.validate().map_err(lib)?;
            Plan::BlpMap { setup, bx, bz, search, seed }
        }
        "blp-temp" => {
            let siv = siv_block(c, true)?;
            let bath = bath_block(c, &siv, false)?;
            let ode = ode_block(c)?;
            let temperatures = linspace_block(c, "t_min_k", "t_max_k")?;
            if temperatures[0] <= 0.0 {
                return Err(CliError::Config("grid.t_min_k must be positive".into()));
            }
            let (alg, seed) = optimizer_block(c, seed_override)?;
            let search = resolution_block(c, alg)?;
            Plan::BlpTemp { setup: BathSetup { siv, bath, ode }, temperatures, search, seed }
        }
        "meanfield-scaling" => {
            let siv = siv_block(c, true)?;
            let mode = mode_block(c, siv.delta(), ModeKeys { truncation: false, temperature: false, ..FULL_MODE })?;
            let gamma_siv = c.frequency("emitter", "gamma_siv", siv.delta())?;
            let (window, samples) = window_block(c)?;
            let temperatures = c.require_list("scan", "temperatures_k")?;
            let alphas = linspace_block(c, "alpha_min", "alpha_max")?;
            let setup = MeanFieldSetup { siv, mode, gamma_siv, window, samples, ode: ode_block(c)? };
            for t in &temperatures {
                setup.params(*t).map_err(lib)?;
            }
            Plan::MeanField { setup, temperatures, alphas }
        }
        "spectrum-map" => {
            let siv = siv_block(c, false)?;
            let mode = mode_block(c, siv.delta(), ModeKeys { quality: false, temperature: false, ..FULL_MODE })?;
            let n = grid_count(c)?;
            let bx = quadrant_axis(c, "B_x", "bx_max_t", n)?;
            let bz = quadrant_axis(c, "B_z", "bz_max_t", n)?;
            let levels = (c.require("spectrum", "level_n")?, c.require("spectrum", "level_m")?);
            let dim = 4 * (mode.n_max + 1);
            if levels.0 == 0 || levels.1 == 0 || levels.0 > dim || levels.1 > dim {
                return Err(CliError::Config(format!("spectrum levels must lie in 1..={dim}")));
            }
            Plan::Spectrum { siv, mode, bx, bz, levels }
        }
        "rates-dump" => {
            let siv = siv_block(c, true)?;
            let bath = bath_block(c, &siv, true)?;
            let (window, samples) = window_block(c)?;
            Plan::Rates { siv, bath, window, samples }
        }
        "validate" => {
            let mut setup = single_mode(c, true, FULL_MODE, true)?;
            (setup.window, setup.samples) = window_block(c)?;
            let bath = bath_block(c, &setup.siv, true)?;
            setup.validate().map_err(lib)?;
            Plan::Validate { setup, bath }
        }
        other => return Err(CliError::Config(format!("unknown experiment '{other}'; expected one of {}", EXPERIMENTS.join(", ")))),
    };
    Ok(p)
}

fn sweep_summary(r: &SweepResult) -> Value {
    json!({
        "points": r.records.len(),
        "failures": r.failures(),
        "failed_points": r.records.iter().filter(|x| !x.is_ok()).map(|x| json!({"index": x.index, "coords": x.coords, "status": x.status})).collect::<Vec<_>>(),
        "evaluations": r.records.iter().map(|x| x.evaluations).sum::<usize>(),
        "seeds": r.records.iter().map(|x| x.seed).collect::<Vec<_>>(),
        "wall_time_per_point_s": r.records.iter().map(|x| x.wall_time).collect::<Vec<_>>(),
        "metadata": r.metadata,
    })
}

fn unconverged(r: &SweepResult) -> usize {
    r.records.iter().filter(|x| x.extra.get("converged") == Some(&0.0)).count()
}

pub fn execute(plan: &Plan, checkpoint: Option<&Path>) -> Result<Outcome, CliError> {
    match plan {
        Plan::TraceDistance { setup, contrast } => {
            let (main, other) = match contrast {
                Some(w) => {
                    let alt = SingleModeSetup { mode: PhononModeParams { omega_ph: *w, ..setup.mode.clone() }, ..setup.clone() };
                    let (a, b) = rayon::join(|| trace_distance_run(setup), || trace_distance_run(&alt));
                    (a.map_err(lib)?, Some(b.map_err(lib)?))
                }
                None => (trace_distance_run(setup).map_err(lib)?, None),
            };
            let mut out = Outcome::new(if other.is_some() { &["t_dimensionless", "D_resonant", "D_offresonant"] } else { &["t_dimensionless", "D"] });
            for (k, t) in main.times.iter().enumerate() {
                let mut row = vec![Cell::Num(*t), Cell::Num(main.distance[k])];
                if let Some(o) = &other {
                    row.push(Cell::Num(o.distance[k]));
                }
                out.rows.push(row);
            }
            out.flags.extend(main.trajectory.diagnostics.flags.iter().cloned());
            out.summary = json!({
                "N_D": main.nd.value,
                "backflow_intervals": main.nd.intervals,
                "diagnostics": main.trajectory.diagnostics,
                "steady_state_populations": main.steady_state.populations(),
            });
            if let Some(o) = other {
                out.flags.extend(o.trajectory.diagnostics.flags.iter().cloned());
                out.summary["N_D_offresonant"] = json!(o.nd.value);
                out.summary["contrast_omega_ph_ghz"] = json!(rad_to_ghz(contrast.unwrap_or_default()));
                out.summary["diagnostics_offresonant"] = json!(o.trajectory.diagnostics);
            }
            Ok(out)
        }
        Plan::NdBz { setup, g, bz } => {
            let r = sweep::nd_vs_bz(setup, g, bz, checkpoint).map_err(lib)?;
            let mut out = Outcome::new(&["g_ghz", "B_z_T", "N_D"]);
            for rec in &r.records {
                out.rows.push(vec![Cell::Num(rad_to_ghz(rec.coords[0])), Cell::Num(rec.coords[1]), Cell::Num(rec.value)]);
            }
            let maxima = sweep::row_maxima(&r).map_err(lib)?;
            let xs: Vec<f64> = maxima.iter().map(|m| rad_to_ghz(m.0)).collect();
            let ys: Vec<f64> = maxima.iter().map(|m| m.1).collect();
            let fit = match fit_linear_through_origin(&xs, &ys) {
                Ok(f) => json!({"slope_per_ghz": f.slope, "half_width_95": f.half_width, "r_squared": f.r_squared}),
                Err(e) => json!({"error": e.to_string()}),
            };
            out.summary = json!({
                "maxima": maxima.iter().map(|m| json!({"g_ghz": rad_to_ghz(m.0), "N_D_max": m.1, "B_z_T": m.2})).collect::<Vec<_>>(),
                "linear_fit": fit,
                "sweep": sweep_summary(&r),
            });
            if r.failures() > 0 {
                out.flags.push(format!("{} sweep points failed", r.failures()));
            }
            Ok(out)
        }
        Plan::BlpMap { setup, bx, bz, search, seed } => {
            let (q, full) = sweep::blp_map(setup, bx, bz, search, *seed, checkpoint).map_err(lib)?;
            let mut out = Outcome::new(&["B_x_T", "B_z_T", "N_BLP"]);
            for rec in &full.records {
                out.rows.push(vec![Cell::Num(rec.coords[0]), Cell::Num(rec.coords[1]), Cell::Num(rec.value)]);
            }
            let nc = unconverged(&q);
            if nc > 0 {
                out.flags.push(format!("{nc} quadrant points hit the optimizer budget before converging"));
            }
            if q.failures() > 0 {
                out.flags.push(format!("{} quadrant points failed", q.failures()));
            }
            out.summary = json!({"base_seed": seed, "quadrant": sweep_summary(&q), "reflected": "both axes"});
            Ok(out)
        }
        Plan::BlpTemp { setup, temperatures, search, seed } => {
            let scan = sweep::blp_vs_temperature(setup, temperatures, search, *seed, checkpoint).map_err(lib)?;
            let mut out = Outcome::new(&["T_K", "N_BLP", "evaluations"]);
            for rec in &scan.sweep.records {
                out.rows.push(vec![Cell::Num(rec.coords[0]), Cell::Num(rec.value), Cell::Int(rec.evaluations as u64)]);
            }
            let vals = scan.sweep.values();
            let range = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max) - vals.iter().copied().fold(f64::INFINITY, f64::min);
            let fit = match &scan.fit {
                Ok(f) => json!({"a": f.a, "b": f.b, "c": f.c, "sigma": f.sigma, "mse": f.mse, "mse_over_range": f.mse / range, "iterations": f.iterations}),
                Err(e) => {
                    out.flags.push(format!("tanh fit failed: {e}"));
                    json!({"error": e})
                }
            };
            let nc = unconverged(&scan.sweep);
            if nc > 0 {
                out.flags.push(format!("{nc} temperatures hit the optimizer budget before converging"));
            }
            out.summary = json!({
                "fit": fit,
                "strictly_decreasing": vals.windows(2).all(|w| w[1] < w[0]),
                "base_seed": seed,
                "sweep": sweep_summary(&scan.sweep),
            });
            Ok(out)
        }
        Plan::MeanField { setup, temperatures, alphas } => {
            let mut out = Outcome::new(&["T_K", "alpha_abs", "N_D"]);
            let mut fits = Vec::new();
            for t in temperatures {
                let s = meanfield_scaling(setup, alphas, *t).map_err(lib)?;
                for (a, nd) in s.alphas.iter().zip(&s.nd) {
                    out.rows.push(vec![Cell::Num(*t), Cell::Num(*a), Cell::Num(*nd)]);
                }
                fits.push(json!({
                    "T_K": t, "slope": s.fit.slope, "half_width_95": s.fit.half_width,
                    "r_squared_uncentred": s.fit.r_squared, "r_squared_centred": s.r_squared,
                }));
            }
            let mut by_t: Vec<(f64, f64)> = fits.iter().map(|f| (f["T_K"].as_f64().unwrap_or(0.0), f["slope"].as_f64().unwrap_or(f64::NAN))).collect();
            by_t.sort_by(|a, b| a.0.total_cmp(&b.0));
            out.summary = json!({"fits": fits, "slope_strictly_decreasing_in_T": by_t.windows(2).all(|w| w[1].1 < w[0].1)});
            Ok(out)
        }
        Plan::Spectrum { siv, mode, bx, bz, levels } => {
            let r = sweep::spectrum_ratio_map(siv, mode, bx, bz, *levels).map_err(lib)?;
            let mut out = Outcome::new(&["B_x_T", "B_z_T", "ratio"]);
            for rec in &r.records {
                out.rows.push(vec![Cell::Num(rec.coords[0]), Cell::Num(rec.coords[1]), Cell::Num(rec.value)]);
            }
            let mut radii = sweep::unit_ratio_crossings(&r).map_err(lib)?;
            radii.sort_by(f64::total_cmp);
            out.summary = json!({
                "levels": [levels.0, levels.1],
                "unit_crossings": radii.len(),
                "crossing_radius_t": if radii.is_empty() { Value::Null } else {
                    json!({"min": radii[0], "median": radii[radii.len() / 2], "max": radii[radii.len() - 1]})
                },
                "metadata": r.metadata,
            });
            Ok(out)
        }
        Plan::Rates { siv, bath, window, samples } => {
            let d = siv.delta();
            let model = TlmeModel::new(siv, bath.clone(), window / d, (*samples).max(4)).map_err(lib)?;
            let pairs: Vec<(usize, usize)> = (0..4).flat_map(|i| (0..4).filter(move |j| *j != i).map(move |j| (i, j))).collect();
            let mut cols = vec!["t_delta".to_string()];
            cols.extend(pairs.iter().map(|(i, j)| format!("Gamma_{}{}_per_delta", i + 1, j + 1)));
            let mut out = Outcome { columns: cols, ..Outcome::new(&[]) };
            for t in uniform_grid(*window, *samples) {
                let (g, _) = model.rates_at(t / d);
                let mut row = vec![Cell::Num(t)];
                row.extend(pairs.iter().map(|(i, j)| Cell::Num(g[(*i, *j)] / d)));
                out.rows.push(row);
            }
            let gmin = model.gamma_min();
            out.summary = json!({
                "gamma_min_per_delta": gmin / d,
                "divisible": gmin >= 0.0,
                "omega_min_eigenvalue_per_delta": model.omega_min_eigenvalue() / d,
                "energies_per_delta": model.tensors.energies.iter().map(|e| e / d).collect::<Vec<_>>(),
            });
            Ok(out)
        }
        Plan::Validate { setup, bath } => {
            let report = validation_suite(setup, bath).map_err(lib)?;
            let mut out = Outcome::new(&["check", "residual", "tolerance", "passed", "detail"]);
            for c in &report.checks {
                out.rows.push(vec![
                    Cell::Text(c.name.clone()),
                    Cell::Num(c.residual),
                    Cell::Num(c.tolerance),
                    Cell::Text(c.passed.to_string()),
                    Cell::Text(c.detail.clone()),
                ]);
                eprintln!("{} {}: residual {:e} (tolerance {:e}) {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.residual, c.tolerance, c.detail);
            }
            out.summary = json!({"checks": report.checks, "all_passed": report.all_passed()});
            if !report.all_passed() {
                let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                out.failure = Some(format!("validation checks failed: {}", failed.join(", ")));
            }
            Ok(out)
        }
    }
}

/// Checkpoint file for sweeps, keyed by the resolved-config hash so a
/// changed config never resumes from stale points.
pub fn checkpoint_path(out_dir: &Path, stem: &str, hash: &str) -> PathBuf {
    out_dir.join(format!("{stem}.{}.checkpoint.jsonl", &hash[..16]))
}

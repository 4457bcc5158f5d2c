//! Derivative-free box-constrained minimisers: differential evolution,
//! simulated annealing and a two-stage mixed-resolution driver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Objective to be minimised.
pub trait Objective: Sync {
    fn eval(&self, x: &[f64]) -> Result<f64>;
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    fn eval(&self, x: &[f64]) -> Result<f64> {
        self(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Dimension("bounds need matching, non-empty lower/upper".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
            return Err(Error::InvalidParameter("bounds must be finite with lower <= upper".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    fn clamp(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Mirrors coordinates back into the box.
    fn reflect(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            let w = u - l;
            if w <= 0.0 {
                *v = *l;
                continue;
            }
            // fold onto [0, 2w) then mirror the upper half
            let mut r = (*v - l).rem_euclid(2.0 * w);
            if r > w {
                r = 2.0 * w - r;
            }
            *v = l + r;
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| if u > l { rng.gen_range(*l..*u) } else { *l }).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    /// `(generation or temperature step, best so far)`.
    pub history: Vec<(usize, f64)>,
    pub seed: u64,
    pub converged: bool,
    /// Distinct final candidates, best first.
    pub candidates: Vec<(Vec<f64>, f64)>,
    pub warnings: Vec<String>,
    pub provenance: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub pop_size: usize,
    pub f_weight: f64,
    pub cr: f64,
    pub max_gen: usize,
    /// Stop once the population's value spread is below
    /// `tol·(1 + |best|)`.
    pub tol: f64,
    /// Evaluation budget; `None` means `pop_size·(max_gen + 1)`.
    pub budget: Option<usize>,
}

impl Default for DeConfig {
    fn default() -> Self {
        Self { pop_size: 120, f_weight: 0.8, cr: 0.7, max_gen: 60, tol: 1e-8, budget: None }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pop_size < 8 {
            return Err(Error::InvalidParameter(format!("pop_size must be >= 8, got {}", self.pop_size)));
        }
        if !(self.cr > 0.0 && self.cr <= 1.0) {
            return Err(Error::InvalidParameter(format!("cr must be in (0, 1], got {}", self.cr)));
        }
        if !(self.f_weight > 0.0 && self.f_weight <= 2.0) {
            return Err(Error::InvalidParameter(format!("f_weight must be in (0, 2], got {}", self.f_weight)));
        }
        Ok(())
    }
}

/// Independent stream per generation so parallel evaluation never touches
/// the RNG.
fn generation_rng(seed: u64, generation: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(generation as u64);
    rng
}

fn evaluate_all<O: Objective + ?Sized>(f: &O, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    points.par_iter().map(|x| f.eval(x)).collect()
}

fn ranked_candidates(pop: &[Vec<f64>], values: &[f64], keep: usize) -> Vec<(Vec<f64>, f64)> {
    let mut idx: Vec<usize> = (0..pop.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in idx {
        if out.len() == keep {
            break;
        }
        if !out.iter().any(|(x, _)| x == &pop[i]) {
            out.push((pop[i].clone(), values[i]));
        }
    }
    out
}

/// DE/rand/1/bin with clamp-to-bounds repair (minimisation).
pub fn differential_evolution<O: Objective + ?Sized>(f: &O, bounds: &Bounds, cfg: &DeConfig, seed: u64) -> Result<OptResult> {
    cfg.validate()?;
    let dim = bounds.dim();
    let np = cfg.pop_size;
    let budget = cfg.budget.unwrap_or(np * (cfg.max_gen + 1));
    let mut rng = generation_rng(seed, 0);
    let mut pop: Vec<Vec<f64>> = (0..np).map(|_| bounds.sample(&mut rng)).collect();
    let mut values = evaluate_all(f, &pop)?;
    let mut evaluations = np;
    let best_of = |v: &[f64]| v.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))).unwrap();
    let mut history = vec![(0, best_of(&values).1)];
    let mut converged = false;
    for generation in 1..=cfg.max_gen {
        let (_, best) = best_of(&values);
        let worst = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if worst - best <= cfg.tol * (1.0 + best.abs()) {
            converged = true;
            break;
        }
        if evaluations + np > budget {
            break;
        }
        let mut rng = generation_rng(seed, generation);
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let pick = |rng: &mut ChaCha8Rng, taken: &[usize]| loop {
                    let r = rng.gen_range(0..np);
                    if !taken.contains(&r) {
                        return r;
                    }
                };
                let r1 = pick(&mut rng, &[i]);
                let r2 = pick(&mut rng, &[i, r1]);
                let r3 = pick(&mut rng, &[i, r1, r2]);
                let jrand = rng.gen_range(0..dim);
                let mut trial = pop[i].clone();
                for j in 0..dim {
                    if j == jrand || rng.gen::<f64>() < cfg.cr {
                        trial[j] = pop[r1][j] + cfg.f_weight * (pop[r2][j] - pop[r3][j]);
                    }
                }
                bounds.clamp(&mut trial);
                trial
            })
            .collect();
        let trial_values = evaluate_all(f, &trials)?;
        evaluations += np;
        for (i, (t, v)) in trials.into_iter().zip(trial_values).enumerate() {
            if v <= values[i] {
                pop[i] = t;
                values[i] = v;
            }
        }
        history.push((generation, best_of(&values).1));
    }
    if !converged {
        let (_, best) = best_of(&values);
        let worst = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        converged = worst - best <= cfg.tol * (1.0 + best.abs());
    }
    let (ib, _) = best_of(&values);
    let best_x = pop[ib].clone();
    // re-evaluated to guard against stale values
    let best_value = f.eval(&best_x)?;
    evaluations += 1;
    Ok(OptResult {
        best_x,
        best_value,
        evaluations,
        history,
        seed,
        converged,
        candidates: ranked_candidates(&pop, &values, 8),
        warnings: Vec::new(),
        provenance: format!(
            "DE/rand/1/bin pop={} F={} CR={} max_gen={} seed={seed}",
            np, cfg.f_weight, cfg.cr, cfg.max_gen
        ),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaConfig {
    pub t_initial: f64,
    pub t_final: f64,
    /// Geometric cooling factor in (0, 1).
    pub cooling: f64,
    pub steps_per_temperature: usize,
    /// Proposal standard deviation as a fraction of the box width; it is
    /// scaled by `sqrt(T/T₀)` with a floor of 1e-3.
    pub step: f64,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self { t_initial: 0.1, t_final: 1e-4, cooling: 0.85, steps_per_temperature: 25, step: 0.2 }
    }
}

impl SaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_initial >= 0.0 && self.t_final >= 0.0 && self.t_final <= self.t_initial) {
            return Err(Error::InvalidParameter("need 0 <= t_final <= t_initial".into()));
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(Error::InvalidParameter(format!("cooling must be in (0, 1), got {}", self.cooling)));
        }
        if self.steps_per_temperature == 0 || !(self.step > 0.0) {
            return Err(Error::InvalidParameter("need steps_per_temperature >= 1 and step > 0".into()));
        }
        Ok(())
    }

    /// Number of temperature levels in the schedule.
    pub fn levels(&self) -> usize {
        if self.t_initial == 0.0 || self.t_final == 0.0 {
            // zero-temperature descent: a fixed number of levels
            return 40;
        }
        ((self.t_final / self.t_initial).ln() / self.cooling.ln()).ceil().max(0.0) as usize + 1
    }
}

/// Metropolis annealing on box-reflected Gaussian proposals (minimisation).
pub fn simulated_annealing<O: Objective + ?Sized>(f: &O, bounds: &Bounds, cfg: &SaConfig, seed: u64) -> Result<OptResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = bounds.sample(&mut rng);
    let mut fx = f.eval(&x)?;
    let mut evaluations = 1;
    let mut best = (x.clone(), fx);
    let mut visited: Vec<(Vec<f64>, f64)> = vec![(x.clone(), fx)];
    let mut history = vec![(0, fx)];
    let widths: Vec<f64> = bounds.lower.iter().zip(&bounds.upper).map(|(l, u)| u - l).collect();
    let mut temperature = cfg.t_initial;
    for level in 1..=cfg.levels() {
        let scale = if cfg.t_initial > 0.0 { (temperature / cfg.t_initial).sqrt().max(1e-3) } else { 1.0 };
        for _ in 0..cfg.steps_per_temperature {
            let mut y: Vec<f64> = x
                .iter()
                .zip(&widths)
                .map(|(v, w)| v + cfg.step * scale * w * rng.sample::<f64, _>(StandardNormal))
                .collect();
            bounds.reflect(&mut y);
            let fy = f.eval(&y)?;
            evaluations += 1;
            let delta = fy - fx;
            let u: f64 = rng.gen();
            let accept = delta <= 0.0 || (temperature > 0.0 && u < (-delta / temperature).exp());
            if accept {
                x = y;
                fx = fy;
                visited.push((x.clone(), fx));
                if fx < best.1 {
                    best = (x.clone(), fx);
                }
            }
        }
        history.push((level, best.1));
        temperature *= cfg.cooling;
    }
    let (xs, vs): (Vec<_>, Vec<_>) = visited.into_iter().unzip();
    let best_value = f.eval(&best.0)?;
    evaluations += 1;
    Ok(OptResult {
        best_x: best.0,
        best_value,
        evaluations,
        history,
        seed,
        converged: true,
        candidates: ranked_candidates(&xs, &vs, 8),
        warnings: Vec::new(),
        provenance: format!(
            "SA T0={} Tf={} cooling={} steps={} step={} seed={seed}",
            cfg.t_initial, cfg.t_final, cfg.cooling, cfg.steps_per_temperature, cfg.step
        ),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum Algorithm {
    De(DeConfig),
    Sa(SaConfig),
}

impl Default for Algorithm {
    fn default() -> Self {
        Self::De(DeConfig::default())
    }
}

pub fn minimize<O: Objective + ?Sized>(f: &O, bounds: &Bounds, algorithm: &Algorithm, seed: u64) -> Result<OptResult> {
    match algorithm {
        Algorithm::De(c) => differential_evolution(f, bounds, c, seed),
        Algorithm::Sa(c) => simulated_annealing(f, bounds, c, seed),
    }
}

/// Number of stage-1 candidates re-scored at high resolution.
pub const RESCORE_TOP_K: usize = 3;

/// Low resolutions below this many samples are flagged.
pub const MIN_LOW_SAMPLES: usize = 16;

/// Maximises `high` by optimising the cheap `low` first and re-scoring the
/// best few stage-1 candidates with `high`. The returned value is the best
/// high-resolution value (positive, maximisation convention).
pub fn mixed_resolution_maximize<L, H>(
    low: &L,
    high: &H,
    resolutions: (usize, usize),
    bounds: &Bounds,
    algorithm: &Algorithm,
    seed: u64,
) -> Result<OptResult>
where
    L: Objective + ?Sized,
    H: Objective + ?Sized,
{
    let (low_samples, high_samples) = resolutions;
    if low_samples >= high_samples {
        return Err(Error::Contract(format!(
            "low resolution ({low_samples}) must be below high resolution ({high_samples})"
        )));
    }
    let mut warnings = Vec::new();
    if low_samples < MIN_LOW_SAMPLES {
        let w = format!("low resolution of {low_samples} samples is insufficient; stage-1 ranking may be sub-optimal");
        log::warn!("{w}");
        warnings.push(w);
    }
    let neg = |x: &[f64]| low.eval(x).map(|v| -v);
    let stage1 = minimize(&neg, bounds, algorithm, seed)?;
    let top: Vec<Vec<f64>> = stage1.candidates.iter().take(RESCORE_TOP_K).map(|(x, _)| x.clone()).collect();
    let scores = evaluate_all(high, &top)?;
    let (ib, best_value) = scores
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .expect("at least one candidate");
    warnings.extend(stage1.warnings.iter().cloned());
    Ok(OptResult {
        best_x: top[ib].clone(),
        best_value,
        evaluations: stage1.evaluations + top.len(),
        history: stage1.history.iter().map(|(g, v)| (*g, -v)).collect(),
        seed,
        converged: stage1.converged,
        candidates: top.into_iter().zip(scores).collect(),
        warnings,
        provenance: format!(
            "stage 1: {} at {low_samples} samples, best {:.6e}; stage 2: top-{RESCORE_TOP_K} re-scored at {high_samples} samples",
            stage1.provenance, -stage1.best_value
        ),
    })
}

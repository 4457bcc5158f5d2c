//! Adaptive Dormand–Prince 8(5,3) integrator.
//!
//! Steps are clamped so that every requested output time is hit exactly; no
//! dense-output interpolation is involved, which keeps sampled trajectories
//! reproducible bit for bit.

use std::ops::{Add, Mul};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Vector component the integrator can work with.
pub trait Component: Copy + Default + Add<Output = Self> + Mul<f64, Output = Self> + Send + Sync {
    fn modulus(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Component for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Component for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest admissible step; `f64::INFINITY` for none.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_step: f64::INFINITY, max_steps: 20_000_000 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct OdeStats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const N_STAGES: usize = 12;

const C: [f64; N_STAGES] = [
    0.0,
    0.052_600_151_958_767_73,
    0.078_900_227_938_151_6,
    0.118_350_341_907_227_4,
    0.281_649_658_092_772_6,
    0.333_333_333_333_333_3,
    0.25,
    0.307_692_307_692_307_7,
    0.651_282_051_282_051_3,
    0.6,
    0.857_142_857_142_857_1,
    1.0,
];

const B: [f64; N_STAGES] = [
    0.054_293_734_116_568_765,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450_312_892_752_409,
    1.891_517_899_314_500_3,
    -5.801_203_960_010_585,
    0.311_164_366_957_819_9,
    -0.152_160_949_662_516_1,
    0.201_365_400_804_030_34,
    0.044_710_615_727_772_59,
];

const E3: [f64; N_STAGES + 1] = [
    -0.189_800_754_072_407_62,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450_312_892_752_409,
    1.891_517_899_314_500_3,
    -5.801_203_960_010_585,
    -0.422_682_321_323_791_9,
    -0.152_160_949_662_516_1,
    0.201_365_400_804_030_34,
    0.022_651_792_198_360_82,
    0.0,
];

const E5: [f64; N_STAGES + 1] = [
    0.013_120_044_994_194_88,
    0.0,
    0.0,
    0.0,
    0.0,
    -1.225_156_446_376_204_4,
    -0.495_758_949_657_250_2,
    1.664_377_182_454_986_4,
    -0.350_328_848_749_973_66,
    0.334_179_118_713_017_5,
    0.081_923_206_485_115_71,
    -0.022_355_307_863_886_294,
    0.0,
];

const A: [&[f64]; N_STAGES] = [
    &[],
    &[0.052_600_151_958_767_73],
    &[0.019_725_056_984_537_9, 0.059_175_170_953_613_7],
    &[0.029_587_585_476_806_85, 0.0, 0.088_762_756_430_420_54],
    &[0.241_365_134_159_266_7, 0.0, -0.884_549_479_328_286_1, 0.924_834_003_261_792],
    &[0.037_037_037_037_037_035, 0.0, 0.0, 0.170_828_608_729_473_86, 0.125_467_687_566_822_42],
    &[0.037_109_375, 0.0, 0.0, 0.170_252_211_019_544_05, 0.060_216_538_980_455_96, -0.017_578_125],
    &[
        0.037_092_000_118_504_79,
        0.0,
        0.0,
        0.170_383_925_712_239_98,
        0.107_262_030_446_373_28,
        -0.015_319_437_748_624_402,
        0.008_273_789_163_814_023,
    ],
    &[
        0.624_110_958_716_075_7,
        0.0,
        0.0,
        -3.360_892_629_446_941_4,
        -0.868_219_346_841_726,
        27.592_099_699_446_71,
        20.154_067_550_477_894,
        -43.489_884_181_069_96,
    ],
    &[
        0.477_662_536_438_264_34,
        0.0,
        0.0,
        -2.488_114_619_971_667_7,
        -0.590_290_826_836_843,
        21.230_051_448_181_193,
        15.279_233_632_882_423,
        -33.288_210_968_984_86,
        -0.020_331_201_708_508_627,
    ],
    &[
        -0.937_142_430_085_987_3,
        0.0,
        0.0,
        5.186_372_428_844_064,
        1.091_437_348_996_729_5,
        -8.149_787_010_746_927,
        -18.520_065_659_996_96,
        22.739_487_099_350_505,
        2.493_605_552_679_652_3,
        -3.046_764_471_898_219_6,
    ],
    &[
        2.273_310_147_516_538,
        0.0,
        0.0,
        -10.534_495_466_737_25,
        -2.000_872_058_224_862_5,
        -17.958_931_863_118_8,
        27.948_884_529_419_96,
        -2.858_998_277_135_023_5,
        -8.872_856_933_530_63,
        12.360_567_175_794_303,
        0.643_392_746_015_763_6,
    ],
];

/// What the output callback did to the state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Output {
    Unchanged,
    /// The state was modified in place (e.g. re-symmetrised); the cached
    /// derivative must be recomputed.
    Modified,
}

fn weighted_rms(err: &[impl Component], scale: &[f64]) -> f64 {
    let s: f64 = err.iter().zip(scale).map(|(e, s)| (e.modulus() / s).powi(2)).sum();
    s
}

/// Integrates `dy/dt = f(t, y)` from `t0` through every time in `t_out`
/// (strictly increasing, all ≥ `t0`), calling `output(k, t_k, y)` at each.
pub fn integrate<T, F, O>(
    mut f: F,
    t0: f64,
    y0: &[T],
    t_out: &[f64],
    opts: &OdeOptions,
    mut output: O,
) -> Result<OdeStats>
where
    T: Component,
    F: FnMut(f64, &[T], &mut [T]),
    O: FnMut(usize, f64, &mut [T]) -> Result<Output>,
{
    let n = y0.len();
    let mut stats = OdeStats::default();
    if t_out.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Contract("output times must be strictly increasing".into()));
    }
    if t_out.first().is_some_and(|&t| t < t0) {
        return Err(Error::Contract("output times precede the initial time".into()));
    }
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k: Vec<Vec<T>> = vec![vec![T::default(); n]; N_STAGES + 1];
    let mut y_new = vec![T::default(); n];
    let mut tmp = vec![T::default(); n];
    let mut scale = vec![0.0; n];
    let mut err3 = vec![T::default(); n];
    let mut err5 = vec![T::default(); n];

    f(t, &y, &mut k[0]);
    stats.evaluations += 1;

    let mut idx = 0;
    // emit outputs coinciding with t0
    while idx < t_out.len() && t_out[idx] == t {
        if output(idx, t, &mut y)? == Output::Modified {
            f(t, &y, &mut k[0]);
            stats.evaluations += 1;
        }
        idx += 1;
    }
    if idx == t_out.len() {
        return Ok(stats);
    }

    let span = t_out[t_out.len() - 1] - t0;
    let mut h = initial_step(&mut f, t, &y, &k[0], opts, span, &mut tmp, &mut y_new, &mut stats);
    let exponent = -1.0 / 8.0;

    while idx < t_out.len() {
        let target = t_out[idx];
        let remaining = target - t;
        let clamped = h >= remaining;
        let h_step = if clamped { remaining } else { h };
        if h_step <= 16.0 * f64::EPSILON * t.abs().max(span) {
            return Err(Error::Integrator { t, reason: format!("step size underflow (h = {h_step:e})") });
        }
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(Error::Integrator { t, reason: format!("exceeded {} steps", opts.max_steps) });
        }

        for s in 1..N_STAGES {
            for i in 0..n {
                let mut acc = y[i];
                for (j, &a) in A[s].iter().enumerate() {
                    if a != 0.0 {
                        acc = acc + k[j][i] * (a * h_step);
                    }
                }
                tmp[i] = acc;
            }
            let (head, tail) = k.split_at_mut(s);
            let _ = head;
            f(t + C[s] * h_step, &tmp, &mut tail[0]);
        }
        for i in 0..n {
            let mut acc = y[i];
            for s in 0..N_STAGES {
                if B[s] != 0.0 {
                    acc = acc + k[s][i] * (B[s] * h_step);
                }
            }
            y_new[i] = acc;
        }
        {
            let (head, tail) = k.split_at_mut(N_STAGES);
            let _ = head;
            f(t + h_step, &y_new, &mut tail[0]);
        }
        stats.evaluations += N_STAGES;

        let mut finite = true;
        for i in 0..n {
            scale[i] = opts.atol + opts.rtol * y[i].modulus().max(y_new[i].modulus());
            let mut e3 = T::default();
            let mut e5 = T::default();
            for s in 0..=N_STAGES {
                if E3[s] != 0.0 {
                    e3 = e3 + k[s][i] * E3[s];
                }
                if E5[s] != 0.0 {
                    e5 = e5 + k[s][i] * E5[s];
                }
            }
            err3[i] = e3;
            err5[i] = e5;
            finite &= y_new[i].is_finite();
        }
        let err5_sq = weighted_rms(&err5, &scale);
        let err3_sq = weighted_rms(&err3, &scale);
        let err = if err5_sq == 0.0 && err3_sq == 0.0 {
            0.0
        } else {
            h_step.abs() * err5_sq / ((err5_sq + 0.01 * err3_sq) * n as f64).sqrt()
        };

        if !finite || !err.is_finite() {
            stats.rejected += 1;
            h = 0.2 * h_step;
            continue;
        }
        if err <= 1.0 {
            stats.steps += 1;
            t = if clamped { target } else { t + h_step };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, N_STAGES);
            let factor = if err == 0.0 { 10.0 } else { (0.9 * err.powf(exponent)).min(10.0) };
            if !clamped {
                h = h_step * factor;
            } else if factor < 1.0 {
                h = h.min(h_step * factor.max(0.2));
            }
            h = h.min(opts.max_step);
            if clamped {
                if output(idx, t, &mut y)? == Output::Modified {
                    f(t, &y, &mut k[0]);
                    stats.evaluations += 1;
                }
                idx += 1;
            }
        } else {
            stats.rejected += 1;
            h = h_step * (0.9 * err.powf(exponent)).max(0.2);
        }
    }
    Ok(stats)
}

#[allow(clippy::too_many_arguments)]
fn initial_step<T: Component, F: FnMut(f64, &[T], &mut [T])>(
    f: &mut F,
    t0: f64,
    y0: &[T],
    f0: &[T],
    opts: &OdeOptions,
    span: f64,
    y1: &mut [T],
    f1: &mut [T],
    stats: &mut OdeStats,
) -> f64 {
    let n = y0.len().max(1) as f64;
    let scale: Vec<f64> = y0.iter().map(|y| opts.atol + opts.rtol * y.modulus()).collect();
    let d0 = (weighted_rms(y0, &scale) / n).sqrt();
    let d1 = (weighted_rms(f0, &scale) / n).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span).min(opts.max_step);
    for i in 0..y0.len() {
        y1[i] = y0[i] + f0[i] * h0;
    }
    f(t0 + h0, y1, f1);
    stats.evaluations += 1;
    let d2: f64 = f1
        .iter()
        .zip(f0)
        .zip(&scale)
        .map(|((a, b), s)| ((*a + *b * -1.0).modulus() / s).powi(2))
        .sum::<f64>();
    let d2 = (d2 / n).sqrt() / h0;
    let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
        (1e-6f64).max(h0 * 1e-3)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 8.0)
    };
    (100.0 * h0).min(h1).min(span).min(opts.max_step)
}

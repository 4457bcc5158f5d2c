//! Curve fits: slope through the origin and the `a·tanh(b/T) + c` law.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    /// Half-width of the 95% confidence interval.
    pub half_width: f64,
    pub r_squared: f64,
}

fn t_quantile(dof: usize) -> Result<f64> {
    let dist = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::Fit(e.to_string()))?;
    Ok(dist.inverse_cdf(0.975))
}

/// Least-squares `y = a x`. R² is the uncentred coefficient appropriate for
/// a model without intercept.
pub fn fit_linear_through_origin(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension("xs and ys differ in length".into()));
    }
    if xs.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", xs.len())));
    }
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all abscissae are zero".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let slope = sxy / sxx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let dof = xs.len() - 1;
    let se = (sse / dof as f64 / sxx).sqrt();
    Ok(LinearFit {
        slope,
        half_width: t_quantile(dof)? * se,
        r_squared: if syy > 0.0 { 1.0 - sse / syy } else { 1.0 },
    })
}

/// Ordinary (centred) coefficient of determination of `pred` against `ys`.
pub fn r_squared(ys: &[f64], pred: &[f64]) -> f64 {
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let sst: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    let sse: f64 = ys.iter().zip(pred).map(|(y, p)| (y - p).powi(2)).sum();
    if sst > 0.0 {
        1.0 - sse / sst
    } else {
        1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TanhFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// One-sigma standard errors of (a, b, c).
    pub sigma: [f64; 3],
    pub mse: f64,
    pub iterations: usize,
}

impl TanhFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.a * (self.b / t).tanh() + self.c
    }
}

fn tanh_residuals(p: &Vector3<f64>, xs: &[f64], ys: &[f64]) -> Vec<f64> {
    xs.iter().zip(ys).map(|(x, y)| p[0] * (p[1] / x).tanh() + p[2] - y).collect()
}

fn tanh_jacobian(p: &Vector3<f64>, xs: &[f64]) -> Vec<[f64; 3]> {
    xs.iter()
        .map(|x| {
            let th = (p[1] / x).tanh();
            [th, p[0] * (1.0 - th * th) / x, 1.0]
        })
        .collect()
}

fn normal_equations(jac: &[[f64; 3]], r: &[f64]) -> (Matrix3<f64>, Vector3<f64>) {
    let mut jtj = Matrix3::zeros();
    let mut jtr = Vector3::zeros();
    for (row, res) in jac.iter().zip(r) {
        for i in 0..3 {
            jtr[i] += row[i] * res;
            for j in 0..3 {
                jtj[(i, j)] += row[i] * row[j];
            }
        }
    }
    (jtj, jtr)
}

/// Levenberg–Marquardt fit of `y = a·tanh(b/T) + c` started from
/// `a = max y − min y`, `b = median T`, `c = min y`.
pub fn fit_tanh(xs: &[f64], ys: &[f64]) -> Result<TanhFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension("xs and ys differ in length".into()));
    }
    let n = xs.len();
    if n < 4 {
        return Err(Error::Fit(format!("need at least 4 points, got {n}")));
    }
    if xs.iter().any(|x| !(*x > 0.0) || !x.is_finite()) || ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::Fit("temperatures must be positive and values finite".into()));
    }
    let ymax = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ymin = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let range = ymax - ymin;
    if range <= 1e-14 * ymax.abs().max(1.0) {
        return Err(Error::Fit("constant data: b is unidentifiable".into()));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    let mut p = Vector3::new(range, median, ymin);
    let mut r = tanh_residuals(&p, xs, ys);
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    for it in 0..500 {
        iterations = it + 1;
        let jac = tanh_jacobian(&p, xs);
        let (jtj, jtr) = normal_equations(&jac, &r);
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj;
            for i in 0..3 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let rt = tanh_residuals(&trial, xs, ys);
            let ct: f64 = rt.iter().map(|v| v * v).sum();
            if ct.is_finite() && ct <= cost {
                let rel = (cost - ct) / cost.max(f64::MIN_POSITIVE);
                let small_step = step.norm() <= 1e-12 * (p.norm() + 1e-12);
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-15 || small_step {
                    return finish(p, &r, xs, iterations);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no descent direction left: converged to machine precision
            return finish(p, &r, xs, iterations);
        }
    }
    finish(p, &r, xs, iterations)
}

fn finish(p: Vector3<f64>, r: &[f64], xs: &[f64], iterations: usize) -> Result<TanhFit> {
    let n = xs.len();
    let sse: f64 = r.iter().map(|v| v * v).sum();
    let jac = tanh_jacobian(&p, xs);
    let (jtj, _) = normal_equations(&jac, r);
    let svd = jtj.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-13 * smax) {
        return Err(Error::Fit(format!("singular Jacobian: condition number {:.3e}", smax / smin)));
    }
    let cov = jtj.try_inverse().ok_or_else(|| Error::Fit("singular normal matrix".into()))?;
    let s2 = if n > 3 { sse / (n - 3) as f64 } else { 0.0 };
    Ok(TanhFit {
        a: p[0],
        b: p[1],
        c: p[2],
        sigma: [(s2 * cov[(0, 0)]).sqrt(), (s2 * cov[(1, 1)]).sqrt(), (s2 * cov[(2, 2)]).sqrt()],
        mse: sse / n as f64,
        iterations,
    })
}

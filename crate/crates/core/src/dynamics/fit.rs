//! Levenberg-Marquardt fits of decay curves.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayModel {
    /// A exp(-t/tau)
    Exponential,
    /// A exp(-(t/T)^2)
    Gaussian,
    /// A exp(-t/tau) cos(w t + phi) + c
    DampedCosine,
}

impl DecayModel {
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            DecayModel::Exponential => &["amplitude", "tau"],
            DecayModel::Gaussian => &["amplitude", "t_e"],
            DecayModel::DampedCosine => &["amplitude", "tau", "omega", "phase", "offset"],
        }
    }

    pub fn eval(&self, p: &[f64], t: f64) -> f64 {
        match self {
            DecayModel::Exponential => p[0] * (-t / p[1]).exp(),
            DecayModel::Gaussian => p[0] * (-(t / p[1]).powi(2)).exp(),
            DecayModel::DampedCosine => p[0] * (-t / p[1]).exp() * (p[2] * t + p[3]).cos() + p[4],
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub model: DecayModel,
    pub params: Vec<f64>,
    /// One-sigma widths from the covariance estimate.
    pub std_errors: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl FitResult {
    /// tau for exponential and damped cosine, the 1/e time for the Gaussian.
    pub fn time_constant(&self) -> f64 {
        self.params[1].abs()
    }

    pub fn time_constant_error(&self) -> f64 {
        self.std_errors[1]
    }

    pub fn frequency(&self) -> Option<f64> {
        match self.model {
            DecayModel::DampedCosine => Some(self.params[2].abs()),
            _ => None,
        }
    }

    /// Root-mean-square residual per point.
    pub fn rms(&self, n: usize) -> f64 {
        self.residual_norm / (n as f64).sqrt()
    }
}

fn residuals(model: DecayModel, p: &[f64], t: &[f64], y: &[f64]) -> DVector<f64> {
    DVector::from_iterator(t.len(), t.iter().zip(y).map(|(&ti, &yi)| model.eval(p, ti) - yi))
}

fn jacobian(model: DecayModel, p: &[f64], t: &[f64]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(t.len(), p.len());
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let h = 1e-7 * p[k].abs().max(1e-6);
        q[k] = p[k] + h;
        let up: Vec<f64> = t.iter().map(|&ti| model.eval(&q, ti)).collect();
        q[k] = p[k] - h;
        for (i, &ti) in t.iter().enumerate() {
            j[(i, k)] = (up[i] - model.eval(&q, ti)) / (2.0 * h);
        }
        q[k] = p[k];
    }
    j
}

fn levenberg_marquardt(model: DecayModel, p0: Vec<f64>, t: &[f64], y: &[f64]) -> (Vec<f64>, f64, usize, DMatrix<f64>) {
    let mut p = p0;
    let mut r = residuals(model, &p, t, y);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut it = 0;
    for _ in 0..500 {
        it += 1;
        let j = jacobian(model, &p, t);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..p.len() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = residuals(model, &trial, t, y);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct < cost {
                let rel = (cost - ct) / cost.max(1e-300);
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel < 1e-14 {
                    return (p, cost, it, j);
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    let j = jacobian(model, &p, t);
    (p, cost, it, j)
}

fn initial_guesses(model: DecayModel, t: &[f64], y: &[f64]) -> Vec<Vec<f64>> {
    let span = t[t.len() - 1] - t[0];
    let a0 = y[0];
    // time at which |y| first falls below |y0|/e
    let te = t
        .iter()
        .zip(y)
        .find(|(_, v)| v.abs() < a0.abs() / std::f64::consts::E)
        .map(|(ti, _)| *ti - t[0])
        .unwrap_or(span)
        .max(span * 1e-3);
    match model {
        DecayModel::Exponential => vec![vec![a0, te]],
        DecayModel::Gaussian => vec![vec![a0, te]],
        DecayModel::DampedCosine => {
            let n = y.len();
            let tail = &y[n - n / 3..];
            let c0 = tail.iter().sum::<f64>() / tail.len() as f64;
            let mean = y.iter().sum::<f64>() / n as f64;
            let mut crossings = Vec::new();
            for k in 1..n {
                if (y[k - 1] - mean) * (y[k] - mean) < 0.0 {
                    crossings.push(t[k]);
                }
            }
            let w0 = if crossings.len() >= 2 {
                std::f64::consts::PI * (crossings.len() - 1) as f64 / (crossings[crossings.len() - 1] - crossings[0])
            } else {
                std::f64::consts::PI / span
            };
            let amp = y.iter().cloned().fold(f64::MIN, f64::max) - y.iter().cloned().fold(f64::MAX, f64::min);
            let mut out = Vec::new();
            for k in 0..8 {
                let phi = k as f64 * std::f64::consts::PI / 4.0;
                out.push(vec![amp / 2.0, span / 2.0, w0, phi, c0]);
            }
            out
        }
    }
}

/// Least-squares fit of a decay model to (t, y).
pub fn fit_decay(t: &[f64], y: &[f64], model: DecayModel) -> Result<FitResult> {
    let np = model.param_names().len();
    if t.len() != y.len() || t.len() <= np {
        return Err(Error::FitFailed {
            residual: f64::NAN,
            reason: format!("need more than {np} points with matching lengths"),
        });
    }
    if y.iter().chain(t).any(|v| !v.is_finite()) {
        return Err(Error::FitFailed { residual: f64::NAN, reason: "non-finite data".into() });
    }
    let mut best: Option<(Vec<f64>, f64, usize, DMatrix<f64>)> = None;
    for g in initial_guesses(model, t, y) {
        let res = levenberg_marquardt(model, g, t, y);
        if best.as_ref().is_none_or(|b| res.1 < b.1) {
            best = Some(res);
        }
    }
    let (p, cost, it, j) = best.unwrap();
    if !cost.is_finite() || p.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailed { residual: cost.sqrt(), reason: "diverged".into() });
    }
    let dof = (t.len() - np) as f64;
    let s2 = cost / dof;
    let cov = (j.transpose() * &j).try_inverse();
    let std_errors = match cov {
        Some(c) => (0..np).map(|k| (c[(k, k)] * s2).max(0.0).sqrt()).collect(),
        None => vec![f64::INFINITY; np],
    };
    let mut params = p;
    if matches!(model, DecayModel::Exponential | DecayModel::Gaussian | DecayModel::DampedCosine) {
        params[1] = params[1].abs();
    }
    Ok(FitResult { model, params, std_errors, residual_norm: cost.sqrt(), iterations: it })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::linspace;

    #[test]
    fn exponential_self_test() {
        let t = linspace(0.0, 4.0, 80);
        let y: Vec<f64> = t.iter().map(|x| (-x).exp()).collect();
        let f = fit_decay(&t, &y, DecayModel::Exponential).unwrap();
        assert!((f.time_constant() - 1.0).abs() < 0.01);
    }

    #[test]
    fn gaussian_preferred_for_gaussian_data() {
        let s = 0.7;
        let t = linspace(0.0, 5.0, 100);
        let y: Vec<f64> = t.iter().map(|x| (-s * s * x * x / 2.0).exp()).collect();
        let g = fit_decay(&t, &y, DecayModel::Gaussian).unwrap();
        let e = fit_decay(&t, &y, DecayModel::Exponential).unwrap();
        assert!(g.residual_norm < e.residual_norm);
        assert!((g.time_constant() - 2f64.sqrt() / s).abs() < 1e-6);
    }

    #[test]
    fn damped_cosine_recovers_frequency() {
        let t = linspace(0.0, 20.0, 400);
        let y: Vec<f64> = t.iter().map(|x| 0.5 * (-x / 6.0).exp() * (2.3 * x).cos() + 0.5).collect();
        let f = fit_decay(&t, &y, DecayModel::DampedCosine).unwrap();
        assert!((f.frequency().unwrap() - 2.3).abs() < 1e-6);
        assert!((f.time_constant() - 6.0).abs() < 1e-4);
    }

    #[test]
    fn too_few_points_fail() {
        assert!(fit_decay(&[0.0, 1.0], &[1.0, 0.5], DecayModel::Exponential).is_err());
    }
}

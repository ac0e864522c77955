//! Time evolution: unitary, Lindblad and stochastic (noise-averaged).

mod fit;
mod lindblad;
mod noise;
mod propagate;

pub use fit::{fit_decay, DecayModel, FitResult};
pub use lindblad::{evolve_lindblad, liouvillian, validate_density_matrix};
pub use noise::{evolve_noisy, rng_for, NoiseKind, NoiseProcess, NoisyOptions, OuPath};
pub use propagate::{evolve_unitary, integrate, normalized, propagate_columns, propagator, schrodinger_rhs, RkOptions};

use serde::Serialize;

use crate::linalg::{CMat, CVec, C64};

#[derive(Clone, Debug, Default, Serialize)]
pub struct TraceDiagnostics {
    /// Largest |norm - 1| (pure states) or |tr rho - 1| seen at output times.
    pub max_norm_drift: f64,
    /// Smallest density-matrix eigenvalue seen at output times.
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FittedConstants {
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub t2_star: Option<f64>,
    pub rabi_frequency: Option<f64>,
}

/// Density matrices on a time grid plus derived series.
#[derive(Clone, Debug, Serialize)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    /// populations[k][i] = rho_ii at times[k]
    pub populations: Vec<Vec<f64>>,
    pub diagnostics: TraceDiagnostics,
    pub fitted: FittedConstants,
    #[serde(skip)]
    pub rhos: Vec<CMat>,
}

impl SimulationTrace {
    pub fn from_density(times: Vec<f64>, rhos: Vec<CMat>) -> Self {
        let populations = rhos.iter().map(|r| (0..r.nrows()).map(|i| r[(i, i)].re).collect()).collect();
        let mut drift: f64 = 0.0;
        for r in &rhos {
            drift = drift.max((r.trace().re - 1.0).abs());
        }
        SimulationTrace {
            times,
            populations,
            diagnostics: TraceDiagnostics { max_norm_drift: drift, min_eigenvalue: 0.0 },
            fitted: FittedConstants::default(),
            rhos,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// tr(rho A) at every time.
    pub fn expectation(&self, op: &CMat) -> Vec<f64> {
        self.rhos.iter().map(|r| (r * op).trace().re).collect()
    }

    /// <v|rho|v> at every time.
    pub fn overlap(&self, v: &CVec) -> Vec<f64> {
        self.rhos.iter().map(|r| (v.adjoint() * r * v)[(0, 0)].re).collect()
    }

    /// <a|rho|b> at every time.
    pub fn coherence(&self, a: &CVec, b: &CVec) -> Vec<C64> {
        self.rhos.iter().map(|r| (a.adjoint() * r * b)[(0, 0)]).collect()
    }

    /// Total population of the listed basis states.
    pub fn population_of(&self, states: &[usize]) -> Vec<f64> {
        self.populations.iter().map(|p| states.iter().map(|&i| p[i]).sum()).collect()
    }

    /// CSV with a time column and one column per basis population.
    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut s = String::from("t");
        for l in labels {
            s.push(',');
            s.push_str(l);
        }
        s.push('\n');
        for (t, p) in self.times.iter().zip(&self.populations) {
            s.push_str(&format!("{t:e}"));
            for x in p {
                s.push_str(&format!(",{x:e}"));
            }
            s.push('\n');
        }
        s
    }
}

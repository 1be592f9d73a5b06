//! Inference: oscillation fits, threshold law, eigenstate locator and metrology.

pub mod fit;
pub mod locator;
pub mod metrology;

pub use fit::{fit_damped_sinusoid, fit_sqrt_threshold, sqrt_law, FitParameter, FitResult};
pub use locator::{locate_eigenstates, population_shift, LocatedState, LocatorResult, Plane};
pub use metrology::{
    bures_distance, cramer_rao, equator_time, postselection_cost, qfi_coupling, PostselectionCost, QfiConvention,
    QfiResult,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::integrate_block;
use crate::ode::StepControl;
use crate::trajectories::{run_ensemble, EnsembleOptions};
use crate::types::{QubitState, SystemParams, ONE, ZERO};

/// Where the `P^n_f(t)` series comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PfnSource {
    /// Block master equation, noiseless.
    Exact,
    /// Post-selected trajectory averages; point `k` of a scan uses `seed + k`.
    Trajectories { n_traj: usize, seed: u64 },
}

/// `P^n_f` from `|f⟩` at `times` with optional least-squares weights.
///
/// Trajectory series are fitted unweighted: `P^n_f` is only approximately a
/// damped sinusoid, and binomial weights concentrate on the early transient
/// where `P^n_f ≈ 1`, which biases the fitted frequency low. Points with fewer
/// than two survivors are dropped.
pub fn pfn_series(p: &SystemParams, times: &[f64], source: PfnSource) -> Result<(Vec<f64>, Vec<f64>, Option<Vec<f64>>)> {
    match source {
        PfnSource::Exact => {
            let r = integrate_block(&QubitState::F.block(), p, times, &StepControl::default())?;
            Ok((times.to_vec(), r.pfn, None))
        }
        PfnSource::Trajectories { n_traj, seed } => {
            let ens = run_ensemble(&[ZERO, ZERO, ONE], p, times, n_traj, seed, EnsembleOptions::default())?;
            let mut t = Vec::new();
            let mut y = Vec::new();
            for (i, &ti) in times.iter().enumerate() {
                if let Some(c) = ens.conditional[i] {
                    if ens.n_surviving[i] >= 2 {
                        t.push(ti);
                        y.push(c.pfn);
                    }
                }
            }
            if t.is_empty() {
                return Err(Error::EmptyEnsemble { t: times.last().copied().unwrap_or(0.0) });
            }
            Ok((t, y, None))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationPoint {
    pub j: f64,
    pub delta: f64,
    pub omega: f64,
    pub omega_se: f64,
    pub gamma_r: f64,
    pub gamma_r_se: f64,
    pub converged: bool,
}

/// Fits the damped oscillation of `P^n_f` for each parameter set, in parallel,
/// keeping the input order.
pub fn oscillation_scan(points: &[SystemParams], times: &[f64], source: PfnSource) -> Result<Vec<OscillationPoint>> {
    points
        .par_iter()
        .enumerate()
        .map(|(k, p)| {
            let src = match source {
                PfnSource::Trajectories { n_traj, seed } => PfnSource::Trajectories { n_traj, seed: seed.wrapping_add(k as u64) },
                s => s,
            };
            let (t, y, w) = pfn_series(p, times, src)?;
            let fit = match fit_damped_sinusoid(&t, &y, w.as_deref()) {
                Ok(f) => f,
                Err(Error::NonConvergence { .. }) | Err(Error::RankDeficient) => {
                    return Ok(OscillationPoint {
                        j: p.j,
                        delta: p.delta,
                        omega: f64::NAN,
                        omega_se: f64::NAN,
                        gamma_r: f64::NAN,
                        gamma_r_se: f64::NAN,
                        converged: false,
                    })
                }
                Err(e) => return Err(e),
            };
            let get = |n: &str| fit.value(n).unwrap_or(f64::NAN);
            let se = |n: &str| fit.std_error(n).unwrap_or(f64::NAN);
            Ok(OscillationPoint {
                j: p.j,
                delta: p.delta,
                omega: get("Omega"),
                omega_se: se("Omega"),
                gamma_r: get("Gamma"),
                gamma_r_se: se("Gamma"),
                converged: fit.converged && fit.diagnostic.is_none(),
            })
        })
        .collect()
}

/// Threshold-law fit over the converged points of a `J` scan, weighted by the
/// fitted frequency uncertainties.
pub fn threshold_from_scan(points: &[OscillationPoint]) -> Result<FitResult> {
    let good: Vec<&OscillationPoint> =
        points.iter().filter(|p| p.converged && p.omega.is_finite() && p.omega_se.is_finite() && p.omega_se > 0.0).collect();
    let js: Vec<f64> = good.iter().map(|p| p.j).collect();
    let om: Vec<f64> = good.iter().map(|p| p.omega).collect();
    let w: Vec<f64> = good.iter().map(|p| 1.0 / (p.omega_se * p.omega_se)).collect();
    fit_sqrt_threshold(&js, &om, Some(&w))
}

//! Two-point eigenstate locator: states whose normalized f population does not
//! change over a probe interval are the stationary states of the conditional
//! dynamics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{block_at, expm_neg_i};
use crate::eigen::build_heff;
use crate::types::{state_from_angles, QubitBlock, QubitState, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plane {
    /// Polar angle θ at azimuth φ = π/2 (negative θ reaches φ = −π/2).
    #[serde(rename = "YZ_polar")]
    YzPolar,
    /// Azimuth φ on the equator θ = π/2.
    #[serde(rename = "XY_azimuthal")]
    XyAzimuthal,
}

impl Plane {
    pub fn state(self, angle: f64) -> QubitState {
        match self {
            Plane::YzPolar => state_from_angles(angle, std::f64::consts::FRAC_PI_2),
            Plane::XyAzimuthal => state_from_angles(std::f64::consts::FRAC_PI_2, angle),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocatedState {
    pub angle: f64,
    /// Distance to the nearest other local minimum of `|δP^n_f|`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocatorResult {
    pub states: Vec<LocatedState>,
    /// `δP^n_f = P^n_f(0) − P^n_f(t_probe)` at each grid angle.
    pub signal: Vec<f64>,
}

fn evolved_block(psi: &QubitState, p: &SystemParams, t: f64) -> QubitBlock {
    if p.gamma_f == 0.0 && p.gamma_phi == 0.0 {
        QubitState::from_vector(&(expm_neg_i(&build_heff(p), t) * psi.to_vector())).block()
    } else {
        block_at(&psi.block(), p, t)
    }
}

/// `P^n_f(0) − P^n_f(t)` with `P_f` scaled by `e^{γ_f t}` before normalization.
pub fn population_shift(psi: &QubitState, p: &SystemParams, t: f64) -> f64 {
    let b = evolved_block(psi, p, t);
    let pf = b.rho_ff * (p.gamma_f * t).exp();
    let norm = pf + b.rho_ee;
    let p0 = psi.block().pfn();
    if norm > 0.0 {
        p0 - pf / norm
    } else {
        f64::NAN
    }
}

fn stationarity(plane: Plane, angle: f64, p: &SystemParams, t: f64) -> f64 {
    [0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|s| population_shift(&plane.state(angle), p, s * t).abs())
        .fold(0.0, f64::max)
}

/// Scans prepared states along `plane` and returns the (at most two) angles
/// at which `|δP^n_f|` has its most stationary local minima, sorted by angle.
///
/// Candidate minima of `|δP^n_f(t_probe)|` are refined by interpolating the
/// zero crossing of `δP^n_f` and ranked by the largest shift over the
/// sub-probe times `t/4, t/2, 3t/4, t`, which rejects accidental returns of
/// `P^n_f` to its initial value.
pub fn locate_eigenstates(p: &SystemParams, plane: Plane, grid: &[f64], t_probe: f64) -> Result<LocatorResult> {
    if !(t_probe > 0.0) {
        return Err(Error::Precondition("t_probe must be positive".into()));
    }
    if grid.len() < 16 {
        return Err(Error::Precondition("angle grid needs at least 16 points".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("angle grid must be strictly increasing".into()));
    }
    p.validate()?;

    let signal: Vec<f64> = grid.iter().map(|&a| population_shift(&plane.state(a), p, t_probe)).collect();
    let n = grid.len();
    let mag: Vec<f64> = signal.iter().map(|s| s.abs()).collect();

    let mut minima = Vec::new();
    for i in 0..n {
        let left = i == 0 || mag[i] <= mag[i - 1];
        let right = i + 1 == n || mag[i] <= mag[i + 1];
        let interior = i > 0 && i + 1 < n;
        let crossing = (i + 1 < n && signal[i] * signal[i + 1] <= 0.0) || (i > 0 && signal[i] * signal[i - 1] <= 0.0);
        if left && right && (interior || crossing || mag[i] == 0.0) {
            minima.push(i);
        }
    }
    if minima.is_empty() {
        return Err(Error::NoMinimum);
    }

    let refined: Vec<f64> = minima
        .iter()
        .map(|&i| {
            let mut best = grid[i];
            for k in [i.wrapping_sub(1), i] {
                if k < n && k + 1 < n && signal[k] * signal[k + 1] < 0.0 {
                    let (a, b) = (signal[k], signal[k + 1]);
                    best = grid[k] + (grid[k + 1] - grid[k]) * a / (a - b);
                    if (best - grid[i]).abs() <= (grid[k + 1] - grid[k]) {
                        break;
                    }
                }
            }
            best
        })
        .collect();

    let mut ranked: Vec<(f64, usize)> =
        refined.iter().enumerate().map(|(k, &a)| (stationarity(plane, a, p, t_probe), k)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut states: Vec<LocatedState> = ranked
        .iter()
        .take(2)
        .map(|&(_, k)| {
            let error = refined
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != k)
                .map(|(_, &a)| (a - refined[k]).abs())
                .fold(f64::INFINITY, f64::min);
            LocatedState { angle: refined[k], error }
        })
        .collect();
    states.sort_by(|a, b| a.angle.total_cmp(&b.angle));
    Ok(LocatorResult { states, signal })
}

//! Embedded Dormand–Prince 5(4) integrator for small real systems.
//!
//! Steps are clipped so that every requested output time is hit exactly;
//! no interpolation is involved in the reported states.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub atol: f64,
    pub rtol: f64,
    /// Initial step; chosen from the derivative scale when `None`.
    pub h_init: Option<f64>,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { atol: 1e-10, rtol: 1e-8, h_init: None, h_min: 1e-14, max_steps: 5_000_000 }
    }
}

impl StepControl {
    pub fn tight() -> Self {
        Self { atol: 1e-13, rtol: 1e-11, ..Self::default() }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Fifth-order minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `dy/dt = f(t, y)` from `(t0, y0)` and returns the state at each
/// entry of `times` (non-decreasing, all `≥ t0`). `on_step` sees every accepted step.
pub fn integrate<F, S>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    times: &[f64],
    ctl: &StepControl,
    mut on_step: S,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    S: FnMut(f64, &[f64]) -> Result<()>,
{
    let n = y0.len();
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < t0) {
        return Err(Error::Precondition("output times must be non-decreasing and start at or after t0".into()));
    }

    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    f(t, &y, &mut k[0]);

    let mut h = ctl.h_init.unwrap_or_else(|| initial_step(&y, &k[0], ctl));
    let mut out = Vec::with_capacity(times.len());
    let mut steps = 0usize;

    for &target in times {
        while t < target {
            steps += 1;
            if steps > ctl.max_steps {
                return Err(Error::StepSizeFailure { t, h });
            }
            let remaining = target - t;
            // Land exactly on the output time, avoiding a sliver step afterwards.
            let (h_try, lands) = if h >= remaining * (1.0 - 1e-12) {
                (remaining, true)
            } else if h > 0.5 * remaining {
                (0.5 * remaining, false)
            } else {
                (h, false)
            };

            stage(&y, &[(A21, 0)], h_try, &k, &mut tmp);
            f(t + C2 * h_try, &tmp, &mut k[1]);
            stage(&y, &[(A31, 0), (A32, 1)], h_try, &k, &mut tmp);
            f(t + C3 * h_try, &tmp, &mut k[2]);
            stage(&y, &[(A41, 0), (A42, 1), (A43, 2)], h_try, &k, &mut tmp);
            f(t + C4 * h_try, &tmp, &mut k[3]);
            stage(&y, &[(A51, 0), (A52, 1), (A53, 2), (A54, 3)], h_try, &k, &mut tmp);
            f(t + C5 * h_try, &tmp, &mut k[4]);
            stage(&y, &[(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)], h_try, &k, &mut tmp);
            f(t + h_try, &tmp, &mut k[5]);
            stage(&y, &[(B1, 0), (B3, 2), (B4, 3), (B5, 4), (B6, 5)], h_try, &k, &mut y_new);
            f(t + h_try, &y_new, &mut k[6]);

            let mut acc = 0.0;
            for i in 0..n {
                let e = h_try
                    * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
                let sc = ctl.atol + ctl.rtol * y[i].abs().max(y_new[i].abs());
                acc += (e / sc).powi(2);
            }
            let err = (acc / n.max(1) as f64).sqrt();

            if err <= 1.0 {
                t = if lands { target } else { t + h_try };
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6);
                on_step(t, &y)?;
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // A clipped landing step says nothing about the natural step size.
                h = if lands { h.max(h_try * grow) } else { h_try * grow };
            } else {
                h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if h < ctl.h_min {
                    return Err(Error::StepSizeFailure { t, h });
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

fn stage(y: &[f64], coeffs: &[(f64, usize)], h: f64, k: &[Vec<f64>; 7], out: &mut [f64]) {
    for i in 0..y.len() {
        let mut s = 0.0;
        for &(a, j) in coeffs {
            s += a * k[j][i];
        }
        out[i] = y[i] + h * s;
    }
}

fn initial_step(y: &[f64], dy: &[f64], ctl: &StepControl) -> f64 {
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for (yi, di) in y.iter().zip(dy) {
        let sc = ctl.atol + ctl.rtol * yi.abs();
        d0 = d0.max((yi / sc).abs());
        d1 = d1.max((di / sc).abs());
    }
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        (0.01 * d0 / d1).clamp(1e-6, 1e-1)
    }
}

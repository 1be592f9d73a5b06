//! Nonlinear least-squares fits: damped sinusoid and square-root threshold law.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;
pub const MIN_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: Vec<FitParameter>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Set when a parameter could not be identified from the data.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diagnostic: Option<String>,
}

impl FitResult {
    fn new(names: &[&str], values: &[f64], errors: &[f64]) -> Self {
        let parameters = names
            .iter()
            .zip(values.iter().zip(errors))
            .map(|(n, (&value, &std_error))| FitParameter { name: n.to_string(), value, std_error })
            .collect();
        Self { parameters, residual_norm: 0.0, converged: false, iterations: 0, diagnostic: None }
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.std_error)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit results serialize")
    }
}

const SINUSOID_NAMES: [&str; 5] = ["A", "Gamma", "Omega", "phi", "C"];

fn sinusoid(theta: &[f64], t: f64) -> f64 {
    theta[0] * (-theta[1] * t).exp() * (theta[2] * t + theta[3]).cos() + theta[4]
}

fn sinusoid_row(theta: &[f64], t: f64) -> [f64; 5] {
    let e = (-theta[1] * t).exp();
    let (s, c) = (theta[2] * t + theta[3]).sin_cos();
    let a = theta[0];
    [e * c, -t * a * e * c, -t * a * e * s, -a * e * s, 1.0]
}

fn wrap_angle(x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let y = (x + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI;
    if y <= -std::f64::consts::PI {
        y + tau
    } else {
        y
    }
}

struct Problem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    sw: Vec<f64>,
}

impl Problem<'_> {
    fn residuals(&self, theta: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.t.len(), (0..self.t.len()).map(|i| self.sw[i] * (sinusoid(theta, self.t[i]) - self.y[i])))
    }

    fn jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.t.len(), 5);
        for i in 0..self.t.len() {
            let row = sinusoid_row(theta, self.t[i]);
            for k in 0..5 {
                j[(i, k)] = self.sw[i] * row[k];
            }
        }
        j
    }
}

fn median_step(t: &[f64]) -> f64 {
    let mut dts: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    dts.sort_by(f64::total_cmp);
    dts[dts.len() / 2]
}

/// Peak of the periodogram of `y − c` on a dense frequency grid up to Nyquist.
fn spectral_peak(t: &[f64], y: &[f64], c: f64) -> f64 {
    let span = t[t.len() - 1] - t[0];
    let w_max = std::f64::consts::PI / median_step(t);
    let dw = std::f64::consts::PI / (8.0 * span);
    let n = ((w_max / dw).ceil() as usize).max(1);
    let power = |w: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for (ti, yi) in t.iter().zip(y) {
            let (s, co) = (w * ti).sin_cos();
            re += (yi - c) * co;
            im += (yi - c) * s;
        }
        re * re + im * im
    };
    let mut best = (dw, power(dw));
    for k in 2..=n {
        let w = k as f64 * dw;
        let pw = power(w);
        if pw > best.1 {
            best = (w, pw);
        }
    }
    best.0
}

/// Decay rate from a log-linear regression through the local extrema of `|y − c|`.
fn envelope_rate(t: &[f64], y: &[f64], c: f64) -> f64 {
    let d: Vec<f64> = y.iter().map(|v| (v - c).abs()).collect();
    let mut pts = Vec::new();
    for i in 0..d.len() {
        let left = i == 0 || d[i] >= d[i - 1];
        let right = i + 1 == d.len() || d[i] >= d[i + 1];
        if left && right && d[i] > 0.0 {
            pts.push((t[i], d[i].ln()));
        }
    }
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx > 0.0 {
        (-sxy / sxx).max(0.0)
    } else {
        0.0
    }
}

fn initial_guess(t: &[f64], y: &[f64]) -> [f64; 5] {
    let c = y.iter().sum::<f64>() / y.len() as f64;
    let omega = spectral_peak(t, y, c);
    let gamma = envelope_rate(t, y, c);
    let first = (1..y.len().saturating_sub(1))
        .find(|&i| {
            let (a, b, d) = (y[i - 1] - c, y[i] - c, y[i + 1] - c);
            (b.abs() >= a.abs()) && (b.abs() >= d.abs())
        })
        .unwrap_or(0);
    let amp = (y[first] - c).abs() * (gamma * (t[first] - t[0])).exp();
    // Phase from the value at the first sample relative to the amplitude.
    let ratio = ((y[0] - c) / amp.max(1e-300)).clamp(-1.0, 1.0);
    let mut phi = ratio.acos() - omega * t[0];
    // Choose the branch whose initial slope agrees with the data.
    if y.len() > 1 {
        let slope = y[1] - y[0];
        let model_slope = -(omega * t[0] + phi).sin();
        if slope * model_slope < 0.0 {
            phi = -ratio.acos() - omega * t[0];
        }
    }
    [amp, gamma, omega, phi, c]
}

fn solve_damped(jtj: &DMatrix<f64>, g: &DVector<f64>, mu: f64) -> Option<DVector<f64>> {
    let mut a = jtj.clone();
    for k in 0..a.nrows() {
        a[(k, k)] += mu * jtj[(k, k)].max(1e-12);
    }
    a.cholesky().map(|ch| ch.solve(&(-g)))
}

fn lm(problem: &Problem, theta0: [f64; 5], grad_tol: f64) -> Result<([f64; 5], usize, bool)> {
    let mut theta = theta0;
    let mut r = problem.residuals(&theta);
    let mut cost = r.norm_squared();
    let mut mu = 1e-3;
    for it in 1..=MAX_ITERATIONS {
        let j = problem.jacobian(&theta);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        if g.amax() == 0.0 {
            return Ok((theta, it, true));
        }
        let mut improved = false;
        let mut tiny = false;
        for _ in 0..60 {
            let Some(step) = solve_damped(&jtj, &g, mu) else {
                mu *= 10.0;
                continue;
            };
            let mut trial = theta;
            for k in 0..5 {
                trial[k] += step[k];
            }
            let rt = problem.residuals(&trial);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct <= cost {
                tiny = (0..5).all(|k| step[k].abs() <= 1e-13 * (1.0 + theta[k].abs()));
                theta = trial;
                r = rt;
                cost = ct;
                mu = (mu / 3.0).max(1e-15);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        if !improved || tiny {
            let g = problem.jacobian(&theta).transpose() * &r;
            return Ok((theta, it, g.amax() <= grad_tol));
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS })
}

/// Fits `y = A e^{−Γt} cos(Ωt + φ) + C` by Levenberg–Marquardt.
///
/// `weights` multiply the squared residuals (use `1/σ²`). The result reports
/// `A ≥ 0`, `Ω ≥ 0` and `φ ∈ (−π, π]`. Fewer than [`MIN_SAMPLES`] points, or a
/// fitted frequency completing less than one period over the data span, give
/// a non-converged result with a diagnostic.
pub fn fit_damped_sinusoid(t: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<FitResult> {
    if t.len() != y.len() || weights.is_some_and(|w| w.len() != t.len()) {
        return Err(Error::Precondition("t, y and weights must have equal lengths".into()));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("sample times must be strictly increasing".into()));
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                return Err(Error::Precondition("weights must be finite and non-negative".into()));
            }
            w.to_vec()
        }
        None => vec![1.0; t.len()],
    };
    if t.len() < MIN_SAMPLES {
        let mut r = FitResult::new(&SINUSOID_NAMES, &[f64::NAN; 5], &[f64::NAN; 5]);
        r.diagnostic = Some(format!("need at least {MIN_SAMPLES} samples, got {}", t.len()));
        return Ok(r);
    }

    let wsum: f64 = w.iter().sum();
    let mean = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / wsum;
    let spread = y.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    if spread <= 1e-12 * scale {
        let mut r = FitResult::new(&SINUSOID_NAMES, &[0.0, 0.0, 0.0, 0.0, mean], &[f64::NAN, f64::NAN, f64::NAN, f64::NAN, 0.0]);
        r.converged = true;
        r.residual_norm = y.iter().zip(&w).map(|(v, wi)| wi * (v - mean).powi(2)).sum::<f64>().sqrt();
        r.diagnostic = Some("constant data: frequency unidentifiable".into());
        return Ok(r);
    }

    let problem = Problem { t, y, sw: w.iter().map(|x| x.sqrt()).collect() };
    let data_scale: f64 = y.iter().zip(&w).map(|(v, wi)| wi * v * v).sum::<f64>().max(1e-300);
    let grad_tol = 1e-8 * data_scale;

    let guess = initial_guess(t, y);
    let (mut theta, iterations, converged) = lm(&problem, guess, grad_tol)?;

    if theta[0] < 0.0 {
        theta[0] = -theta[0];
        theta[3] += std::f64::consts::PI;
    }
    if theta[2] < 0.0 {
        theta[2] = -theta[2];
        theta[3] = -theta[3];
    }
    theta[3] = wrap_angle(theta[3]);

    let r = problem.residuals(&theta);
    let cost = r.norm_squared();
    let j = problem.jacobian(&theta);
    let jtj = j.transpose() * &j;
    let svd = jtj.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-14 * smax) {
        return Err(Error::RankDeficient);
    }
    let cov = jtj.try_inverse().ok_or(Error::RankDeficient)?;
    let dof = (t.len() as f64 - 5.0).max(1.0);
    let s2 = cost / dof;
    let errors: Vec<f64> = (0..5).map(|k| (s2 * cov[(k, k)]).max(0.0).sqrt()).collect();

    let mut out = FitResult::new(&SINUSOID_NAMES, &theta, &errors);
    out.residual_norm = cost.sqrt();
    out.iterations = iterations;
    out.converged = converged;
    let span = t[t.len() - 1] - t[0];
    let nyquist = std::f64::consts::PI / median_step(t);
    if theta[2] > nyquist {
        out.converged = false;
        out.diagnostic = Some(format!("fitted Omega = {:.4} exceeds the Nyquist frequency {nyquist:.4}", theta[2]));
    } else if theta[2] * span < std::f64::consts::TAU {
        out.converged = false;
        out.diagnostic = Some(format!(
            "fitted Omega = {:.4} completes less than one period over the span {span}; frequency not identifiable",
            theta[2]
        ));
    }
    Ok(out)
}

pub fn sqrt_law(j: f64, j0: f64) -> f64 {
    if j > j0 {
        2.0 * (j * j - j0 * j0).sqrt()
    } else {
        0.0
    }
}

/// Fits `Ω = 2√(J² − J₀²)` (zero for `J ≤ J₀`) with `J₀ ∈ [0, max J]` as the only
/// free parameter. Optional weights multiply the squared residuals.
pub fn fit_sqrt_threshold(js: &[f64], omegas: &[f64], weights: Option<&[f64]>) -> Result<FitResult> {
    if js.len() != omegas.len() || weights.is_some_and(|w| w.len() != js.len()) {
        return Err(Error::Precondition("J, Omega and weights must have equal lengths".into()));
    }
    if omegas.iter().filter(|&&o| o > 0.0).count() < 3 {
        return Err(Error::Precondition("need at least 3 points with Omega > 0".into()));
    }
    let w: Vec<f64> = weights.map(<[f64]>::to_vec).unwrap_or_else(|| vec![1.0; js.len()]);
    let objective = |j0: f64| -> f64 {
        js.iter().zip(omegas).zip(&w).map(|((&j, &o), &wi)| wi * (o - sqrt_law(j, j0)).powi(2)).sum()
    };
    let j_max = js.iter().copied().fold(0.0, f64::max);

    let n_scan = 4000;
    let step = j_max / n_scan as f64;
    let mut best = (0.0, objective(0.0));
    for k in 1..=n_scan {
        let x = k as f64 * step;
        let f = objective(x);
        if f < best.1 {
            best = (x, f);
        }
    }

    let (mut a, mut b) = ((best.0 - step).max(0.0), (best.0 + step).min(j_max));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    let mut iterations = 0;
    while (b - a) > 1e-14 * (1.0 + j_max) && iterations < 200 {
        iterations += 1;
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = objective(d);
        }
    }
    let mut j0 = 0.5 * (a + b);
    if best.1 < objective(j0) {
        j0 = best.0;
    }

    // Gauss–Newton refinement on points above threshold.
    for _ in 0..20 {
        let (mut num, mut den) = (0.0, 0.0);
        for ((&j, &o), &wi) in js.iter().zip(omegas).zip(&w) {
            if j > j0 {
                let m = sqrt_law(j, j0);
                let dm = -2.0 * j0 / (j * j - j0 * j0).sqrt();
                num += wi * dm * (o - m);
                den += wi * dm * dm;
            }
        }
        if den <= 0.0 || !den.is_finite() {
            break;
        }
        let next = (j0 + num / den).clamp(0.0, j_max);
        if !(objective(next) <= objective(j0)) {
            break;
        }
        let done = (next - j0).abs() <= 1e-15 * (1.0 + j0);
        j0 = next;
        if done {
            break;
        }
    }

    let cost = objective(j0);
    let mut info = 0.0;
    for (&j, &wi) in js.iter().zip(&w) {
        if j > j0 {
            let dm = -2.0 * j0 / (j * j - j0 * j0).sqrt();
            info += wi * dm * dm;
        }
    }
    let dof = (js.len() as f64 - 1.0).max(1.0);
    let se = if info > 0.0 { (cost / dof / info).sqrt() } else { f64::NAN };
    let mut out = FitResult::new(&["J0"], &[j0], &[se]);
    out.residual_norm = cost.sqrt();
    out.converged = true;
    out.iterations = iterations;
    Ok(out)
}

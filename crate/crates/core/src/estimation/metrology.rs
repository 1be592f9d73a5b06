//! Sensitivity of the post-selected state to the coupling `J`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{conditional_block, conditional_pfn};
use crate::types::{QubitState, SystemParams};

/// Operating points with `P^n_f` outside this window are flagged.
pub const QFI_WINDOW: (f64, f64) = (0.35, 0.65);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QfiConvention {
    /// `I = (dP^n_f/dJ)²`.
    #[default]
    Printed,
    /// `I = 4 (dP^n_f/dJ)²`, the pure-state value implied by the Bures metric.
    Bures,
}

impl QfiConvention {
    fn factor(self) -> f64 {
        match self {
            QfiConvention::Printed => 1.0,
            QfiConvention::Bures => 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QfiResult {
    pub qfi: f64,
    pub derivative: f64,
    pub pfn: f64,
    /// `P^n_f` lies inside [`QFI_WINDOW`].
    pub in_window: bool,
}

pub fn default_dj(j: f64) -> f64 {
    1e-3 * j.max(1e-3)
}

/// Central-difference QFI about `J` for the post-selected state evolved from `|f⟩`.
pub fn qfi_coupling(p: &SystemParams, t: f64, dj: Option<f64>, convention: QfiConvention) -> Result<QfiResult> {
    p.validate()?;
    if !(t >= 0.0) {
        return Err(Error::Precondition("t must be non-negative".into()));
    }
    let dj = dj.unwrap_or_else(|| default_dj(p.j));
    if !(dj > 0.0) {
        return Err(Error::Precondition("dJ must be positive".into()));
    }
    let lo = (p.j - dj).max(0.0);
    let hi = p.j + dj;
    let derivative = (conditional_pfn(&p.with_j(hi), t) - conditional_pfn(&p.with_j(lo), t)) / (hi - lo);
    let pfn = conditional_pfn(p, t);
    Ok(QfiResult {
        qfi: convention.factor() * derivative * derivative,
        derivative,
        pfn,
        in_window: (QFI_WINDOW.0..=QFI_WINDOW.1).contains(&pfn),
    })
}

/// First time at which `P^n_f` (from `|f⟩`) reaches 1/2, or `t_max` if it never does.
pub fn equator_time(p: &SystemParams, t_max: f64) -> f64 {
    let f = |t: f64| conditional_pfn(p, t) - 0.5;
    let rate = (2.0 * p.j + p.delta.abs() + p.gamma_e + p.gamma_f + p.gamma_phi).max(1e-9);
    let dt = (0.05 / rate).min(t_max / 64.0);
    let mut a = 0.0;
    let mut fa = f(a);
    while a < t_max {
        let b = (a + dt).min(t_max);
        let fb = f(b);
        if fa > 0.0 && fb <= 0.0 {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
        a = b;
        fa = fb;
    }
    t_max
}

pub fn bures_distance(a: &QubitState, b: &QubitState) -> Result<f64> {
    if !a.is_normalized() || !b.is_normalized() {
        return Err(Error::Precondition("states must be normalized".into()));
    }
    Ok(2.0 * (1.0 - a.inner(b).norm()))
}

/// Cramér–Rao bound `1/(ν I)` on the mean squared deviation.
pub fn cramer_rao(info: f64, repetitions: f64) -> Result<f64> {
    if !(info > 0.0) || !(repetitions > 0.0) {
        return Err(Error::Domain(format!("Cramér–Rao bound needs I > 0 and v > 0, got I = {info}, v = {repetitions}")));
    }
    Ok(1.0 / (repetitions * info))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostselectionCost {
    pub qfi: f64,
    /// Probability of finding the system in the qubit manifold at `t`.
    pub success: f64,
    pub effective_info: f64,
    pub in_window: bool,
}

pub fn postselection_cost(p: &SystemParams, t: f64, dj: Option<f64>, convention: QfiConvention) -> Result<PostselectionCost> {
    let q = qfi_coupling(p, t, dj, convention)?;
    let success = conditional_block(p, t).weight();
    Ok(PostselectionCost { qfi: q.qfi, success, effective_info: q.qfi * success, in_window: q.in_window })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ONE;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn params(j: f64, ge: f64) -> SystemParams {
        SystemParams::new(j, 0.0, ge, 0.0, 0.0).unwrap()
    }

    #[test]
    fn bures_reference_values() {
        let f = QubitState::F;
        assert_eq!(bures_distance(&f, &f).unwrap(), 0.0);
        assert!((bures_distance(&f, &QubitState::E).unwrap() - 2.0).abs() < 1e-15);
        let plus = QubitState::new(ONE * FRAC_1_SQRT_2, ONE * FRAC_1_SQRT_2);
        assert!((bures_distance(&f, &plus).unwrap() - 2.0 * (1.0 - FRAC_1_SQRT_2)).abs() < 1e-12);
        assert!(bures_distance(&f, &QubitState::new(ONE, ONE)).is_err());
    }

    #[test]
    fn cramer_rao_reference_values() {
        assert_eq!(cramer_rao(4.0, 1.0).unwrap(), 0.25);
        assert!((cramer_rao(1.0, 100.0).unwrap() - 0.01).abs() < 1e-15);
        assert!((cramer_rao(3.0, 20.0).unwrap() / cramer_rao(3.0, 10.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(cramer_rao(0.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(cramer_rao(1.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn hermitian_baseline() {
        for &(j, t) in &[(1.0, 0.3), (2.7, 0.2), (0.5, 1.7), (3.0, 0.9)] {
            let q = qfi_coupling(&params(j, 0.0), t, None, QfiConvention::Printed).unwrap();
            let expect = t * t * (2.0 * j * t).sin().powi(2);
            assert!((q.qfi - expect).abs() <= 5e-3 * expect, "J={j} t={t}: {} vs {expect}", q.qfi);
            let b = qfi_coupling(&params(j, 0.0), t, None, QfiConvention::Bures).unwrap();
            assert!((b.qfi - 4.0 * q.qfi).abs() < 1e-12 * b.qfi.max(1.0));
        }
    }

    #[test]
    fn step_halving_is_stable() {
        let p = params(2.7, 8.0);
        let t = equator_time(&p, 10.0);
        let a = qfi_coupling(&p, t, Some(2.7e-3), QfiConvention::Printed).unwrap().qfi;
        let b = qfi_coupling(&p, t, Some(1.35e-3), QfiConvention::Printed).unwrap().qfi;
        assert!((a - b).abs() < 0.01 * b);
    }

    #[test]
    fn agrees_with_analytic_derivative() {
        // d/dJ of cos²(αt − θ)/(sin²(αt) + cos²(αt − θ)) by a high-order stencil on the closed form.
        let ge = 8.0;
        let pfn = |j: f64, t: f64| {
            let g = ge / 4.0;
            let a = (j * j - g * g).sqrt();
            let th = (g / j).asin();
            let c2 = (a * t - th).cos().powi(2);
            c2 / ((a * t).sin().powi(2) + c2)
        };
        for &(j, t) in &[(2.7, 0.4), (3.5, 0.25), (2.2, 0.8)] {
            let h = 1e-4;
            let d = (-pfn(j + 2.0 * h, t) + 8.0 * pfn(j + h, t) - 8.0 * pfn(j - h, t) + pfn(j - 2.0 * h, t)) / (12.0 * h);
            let q = qfi_coupling(&params(j, ge), t, None, QfiConvention::Printed).unwrap();
            assert!((q.qfi - d * d).abs() <= 5e-3 * d * d, "J={j}: {} vs {}", q.qfi, d * d);
        }
    }

    #[test]
    fn window_flag_and_small_time_limit() {
        let p = params(2.7, 8.0);
        let q = qfi_coupling(&p, 1e-6, None, QfiConvention::Printed).unwrap();
        assert!(q.qfi < 1e-10 && !q.in_window);
        let c = postselection_cost(&p, 1e-6, None, QfiConvention::Printed).unwrap();
        assert!((c.success - 1.0).abs() < 1e-5);
        let t = equator_time(&p, 10.0);
        assert!(qfi_coupling(&p, t, None, QfiConvention::Printed).unwrap().in_window);
    }

    #[test]
    fn postselection_cost_weights_information() {
        let herm = params(1.5, 0.0);
        let c = postselection_cost(&herm, 0.4, None, QfiConvention::Printed).unwrap();
        assert!((c.success - 1.0).abs() < 1e-12);
        assert_eq!(c.effective_info, c.qfi);

        let near = params(2.05, 8.0);
        let t = equator_time(&near, 10.0);
        let c = postselection_cost(&near, t, None, QfiConvention::Printed).unwrap();
        assert!(c.success < 1.0 && c.effective_info.is_finite());
        assert!((c.effective_info - c.qfi * c.success).abs() < 1e-12 * c.qfi.max(1.0));
    }

    #[test]
    fn equator_time_matches_rabi_quarter_period() {
        let p = params(2.0, 0.0);
        assert!((equator_time(&p, 10.0) - std::f64::consts::PI / 8.0).abs() < 1e-9);
        // Broken phase from |f⟩ never reaches the equator.
        assert_eq!(equator_time(&params(1.0, 8.0), 7.0), 7.0);
    }
}

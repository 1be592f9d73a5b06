//! Closed-form analysis of the 2×2 effective Hamiltonian
//! `H = [[Δ − iγ_e/2, J], [J, −iγ_f/2]]` in the `(|e⟩, |f⟩)` basis.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{LinRange, Mat2, QubitState, SystemParams, ONE, ZERO};

/// Relative tolerance for declaring eigenvalue coalescence.
pub const EP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    PTSymmetric,
    PTBroken,
    ExceptionalPoint,
    MixedDetuned,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenSystem {
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
    pub v_plus: QubitState,
    pub v_minus: QubitState,
    /// `λ₊ − λ₋`, on the principal branch.
    pub delta_lambda: Complex64,
    pub at_ep: bool,
    pub phase: Phase,
}

pub fn build_heff(p: &SystemParams) -> Mat2 {
    let j = Complex64::from(p.j);
    Mat2::new(Complex64::new(p.delta, -0.5 * p.gamma_e), j, j, Complex64::new(0.0, -0.5 * p.gamma_f))
}

/// `√(4J² + (Δ − iγ/2)²)` with `Re ≥ 0`, and `Im ≥ 0` when the real part vanishes.
pub fn delta_lambda(p: &SystemParams) -> Complex64 {
    let d = Complex64::new(p.delta, -0.5 * p.gamma());
    let sq = 4.0 * p.j * p.j + d * d;
    // `+ 0.0` folds a negative zero so the branch cut does not flip the sign.
    principal_sqrt(Complex64::new(sq.re + 0.0, sq.im + 0.0))
}

fn principal_sqrt(z: Complex64) -> Complex64 {
    let s = z.sqrt();
    if s.re == 0.0 && s.im < 0.0 {
        -s
    } else {
        s
    }
}

pub fn ep_tolerance(p: &SystemParams) -> f64 {
    EP_TOLERANCE * [1.0, p.j, p.delta.abs(), p.gamma_e].into_iter().fold(0.0, f64::max)
}

pub fn eigensystem(p: &SystemParams) -> EigenSystem {
    let h = build_heff(p);
    let center = 0.5 * (h[(0, 0)] + h[(1, 1)]);
    let delta_lambda = delta_lambda(p);
    let lambda_plus = center + 0.5 * delta_lambda;
    let lambda_minus = center - 0.5 * delta_lambda;
    let at_ep = delta_lambda.norm() < ep_tolerance(p);

    let v_plus = right_eigenvector(&h, lambda_plus);
    let v_minus = if at_ep { v_plus } else { right_eigenvector(&h, lambda_minus) };

    let j0 = 0.25 * p.gamma();
    let phase = if at_ep {
        Phase::ExceptionalPoint
    } else if p.delta != 0.0 {
        Phase::MixedDetuned
    } else if p.j > j0 {
        Phase::PTSymmetric
    } else {
        Phase::PTBroken
    };

    EigenSystem { lambda_plus, lambda_minus, v_plus, v_minus, delta_lambda, at_ep, phase }
}

/// Null vector of `H − λ` picked from whichever row gives the better-conditioned candidate.
fn right_eigenvector(h: &Mat2, lambda: Complex64) -> QubitState {
    let a = h[(0, 0)] - lambda;
    let d = h[(1, 1)] - lambda;
    let from_row0 = QubitState::new(h[(0, 1)], -a);
    let from_row1 = QubitState::new(-d, h[(1, 0)]);
    let best = if from_row0.norm_sqr() >= from_row1.norm_sqr() { from_row0 } else { from_row1 };
    if best.norm_sqr() > 1e-300 {
        best.normalized().expect("nonzero candidate")
    } else if (h[(0, 0)] - lambda).norm() <= (h[(1, 1)] - lambda).norm() {
        QubitState::new(ONE, ZERO)
    } else {
        QubitState::new(ZERO, ONE)
    }
}

/// EP coupling `(γ_e − γ_f)/4` on the zero-detuning line.
pub fn ep_coupling(p: &SystemParams) -> Result<f64> {
    if p.gamma_f > p.gamma_e {
        return Err(Error::InvalidHierarchy { gamma_e: p.gamma_e, gamma_f: p.gamma_f });
    }
    Ok(0.25 * p.gamma())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlap {
    pub value: f64,
    pub at_ep: bool,
}

/// `|⟨v₊|v₋⟩|` of the normalized right eigenvectors. Equals `min(x, 1/x)`,
/// `x = 4J/γ`, on the zero-detuning line.
pub fn eigenstate_overlap(p: &SystemParams) -> Overlap {
    let es = eigensystem(p);
    if es.at_ep {
        return Overlap { value: 1.0, at_ep: true };
    }
    Overlap { value: es.v_plus.inner(&es.v_minus).norm().min(1.0), at_ep: false }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigGrid {
    pub delta: LinRange,
    pub j: LinRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigRow {
    pub delta: f64,
    pub j: f64,
    pub re_dlam: f64,
    pub im_dlam: f64,
    pub overlap: f64,
}

/// Evaluates `δλ` and the eigenstate overlap over a (Δ, J) grid, Δ-major.
pub fn sweep_eigs(base: &SystemParams, grid: &EigGrid) -> Result<Vec<EigRow>> {
    let deltas = grid.delta.values();
    let js = grid.j.values();
    if deltas.is_empty() || js.is_empty() {
        return Err(Error::Precondition("eigenvalue sweep grid is empty".into()));
    }
    let points: Vec<(f64, f64)> =
        deltas.iter().flat_map(|&d| js.iter().map(move |&j| (d, j))).collect();
    Ok(points
        .par_iter()
        .map(|&(delta, j)| {
            let p = base.with_delta(delta).with_j(j);
            let dl = delta_lambda(&p);
            EigRow { delta, j, re_dlam: dl.re, im_dlam: dl.im, overlap: eigenstate_overlap(&p).value }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn params(j: f64, delta: f64, ge: f64, gf: f64) -> SystemParams {
        SystemParams::new(j, delta, ge, gf, 0.0).unwrap()
    }

    #[test]
    fn heff_reference_matrices() {
        assert_eq!(build_heff(&params(0.0, 0.0, 0.0, 0.0)), Mat2::zeros());
        let h = build_heff(&params(1.0, 0.0, 4.0, 0.0));
        assert_eq!(h, Mat2::new(Complex64::new(0.0, -2.0), ONE, ONE, ZERO));
        // Substitution by hand.
        let h = build_heff(&params(1.0, 2.0, 4.0, 1.0));
        let expect = Mat2::new(Complex64::new(2.0, -2.0), ONE, ONE, Complex64::new(0.0, -0.5));
        assert_eq!(h, expect);
    }

    /// Independent eigenvalues from the characteristic polynomial
    /// `λ² − tr λ + det = 0` via the quadratic formula.
    fn char_poly_roots(h: &Mat2) -> (Complex64, Complex64) {
        let tr = h[(0, 0)] + h[(1, 1)];
        let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
        let disc = (tr * tr - 4.0 * det).sqrt();
        ((tr + disc) / 2.0, (tr - disc) / 2.0)
    }

    #[test]
    fn exceptional_point_on_resonance() {
        let es = eigensystem(&params(1.0, 0.0, 4.0, 0.0));
        assert!(es.delta_lambda.norm() < 1e-9);
        assert!(es.at_ep);
        assert_eq!(es.phase, Phase::ExceptionalPoint);
        assert!(es.v_plus.inner(&es.v_minus).norm() > 1.0 - 1e-9);
    }

    #[test]
    fn symmetric_and_broken_gaps_match_char_poly() {
        let p = params(2.0, 0.0, 4.0, 0.0);
        let es = eigensystem(&p);
        let (a, b) = char_poly_roots(&build_heff(&p));
        let oracle = (a - b).norm();
        assert_abs_diff_eq!(oracle, 12f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(es.delta_lambda.re, 12f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(es.delta_lambda.im, 0.0, epsilon = 1e-12);
        assert_eq!(es.phase, Phase::PTSymmetric);

        let p = params(0.5, 0.0, 4.0, 0.0);
        let es = eigensystem(&p);
        let (a, b) = char_poly_roots(&build_heff(&p));
        assert_abs_diff_eq!((a - b).norm(), 3f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(es.delta_lambda.re, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(es.delta_lambda.im, 3f64.sqrt(), epsilon = 1e-12);
        assert_eq!(es.phase, Phase::PTBroken);
    }

    #[test]
    fn ep_coupling_values() {
        assert_abs_diff_eq!(ep_coupling(&params(1.0, 0.0, 6.7, 0.25)).unwrap(), 1.6125, epsilon = 1e-12);
        assert_abs_diff_eq!(ep_coupling(&params(1.0, 0.0, 4.0, 0.0)).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ep_coupling(&params(1.0, 0.0, 5.25, 0.25)).unwrap(), 1.25, epsilon = 1e-15);
        assert!(matches!(
            ep_coupling(&params(1.0, 0.0, 0.2, 0.3)),
            Err(Error::InvalidHierarchy { .. })
        ));
    }

    #[test]
    fn overlap_reference_points() {
        let at = |x: f64| eigenstate_overlap(&params(x * 4.0 / 4.0, 0.0, 4.0, 0.0));
        let ep = at(1.0);
        assert_eq!(ep, Overlap { value: 1.0, at_ep: true });
        assert_abs_diff_eq!(at(2.0).value, 0.5, epsilon = 1e-12);
        assert!(eigenstate_overlap(&params(1e6, 0.0, 4.0, 0.0)).value < 1e-5);
        // Hermitian: exactly orthogonal.
        assert_abs_diff_eq!(eigenstate_overlap(&params(1.0, 0.3, 0.0, 0.0)).value, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn overlap_law_log_spaced() {
        let gamma = 4.0;
        for k in 0..200 {
            let x = 0.05 * (400f64).powf(k as f64 / 199.0);
            let ov = eigenstate_overlap(&params(x * gamma / 4.0, 0.0, gamma, 0.0)).value;
            assert_abs_diff_eq!(ov, x.min(1.0 / x), epsilon = 1e-10);
        }
    }

    #[test]
    fn overlap_law_uses_effective_gamma() {
        let p = params(0.8, 0.0, 5.25, 0.25);
        let x: f64 = 4.0 * 0.8 / 5.0;
        assert_abs_diff_eq!(eigenstate_overlap(&p).value, x.min(1.0 / x), epsilon = 1e-12);
    }

    #[test]
    fn phase_flips_at_ep_coupling() {
        let base = params(0.0, 0.0, 6.7, 0.25);
        let j0 = ep_coupling(&base).unwrap();
        assert_eq!(eigensystem(&base.with_j(j0 - 1e-9)).phase, Phase::PTBroken);
        assert_eq!(eigensystem(&base.with_j(j0 + 1e-9)).phase, Phase::PTSymmetric);
        assert_eq!(eigensystem(&base.with_j(j0 + 1e-9).with_delta(0.1)).phase, Phase::MixedDetuned);
    }

    #[test]
    fn sweep_shapes() {
        let base = params(0.0, 0.0, 4.0, 0.0);
        let rows = sweep_eigs(&base, &EigGrid { delta: LinRange::point(0.0), j: LinRange::point(1.0) }).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].re_dlam.abs() < 1e-12 && rows[0].im_dlam.abs() < 1e-12);

        let rows = sweep_eigs(&base, &EigGrid { delta: LinRange::point(0.0), j: LinRange::new(0.0, 2.0, 41) }).unwrap();
        for r in &rows {
            if r.j < 1.0 - 1e-12 {
                assert_abs_diff_eq!(r.re_dlam, 0.0, epsilon = 1e-12);
            } else if r.j > 1.0 + 1e-12 {
                assert_abs_diff_eq!(r.im_dlam, 0.0, epsilon = 1e-12);
            }
        }

        let rows = sweep_eigs(&base, &EigGrid { delta: LinRange::new(-3.0, 3.0, 7), j: LinRange::new(0.0, 2.0, 5) }).unwrap();
        assert_eq!(rows.len(), 35);
        assert_eq!((rows[0].delta, rows[0].j), (-3.0, 0.0));
        assert_eq!((rows[1].delta, rows[1].j), (-3.0, 0.5));

        let empty = EigGrid { delta: LinRange::new(0.0, 1.0, 0), j: LinRange::point(1.0) };
        assert!(sweep_eigs(&base, &empty).is_err());
    }

    fn arb_params() -> impl Strategy<Value = SystemParams> {
        (0.0..10.0f64, -10.0..10.0f64, 0.0..10.0f64, 0.0..1.0f64)
            .prop_map(|(j, d, ge, r)| params(j, d, ge, ge * r))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn eigenpairs_satisfy_heff(p in arb_params()) {
            let es = eigensystem(&p);
            let h = build_heff(&p);
            for (lam, v) in [(es.lambda_plus, es.v_plus), (es.lambda_minus, es.v_minus)] {
                let r = h * v.to_vector() - v.to_vector() * lam;
                let scale = p.rate_scale();
                // Defective matrices only satisfy the residual to √ε·scale near the EP.
                let tol = if es.delta_lambda.norm() < 1e-6 * scale { 1e-7 * scale } else { 1e-10 * scale };
                prop_assert!(r.norm() < tol, "residual {} for {:?}", r.norm(), p);
                prop_assert!((v.norm_sqr() - 1.0).abs() < 1e-12);
            }
            let tr = h[(0, 0)] + h[(1, 1)];
            let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
            let scale = p.rate_scale();
            prop_assert!((es.lambda_plus + es.lambda_minus - tr).norm() <= 1e-12 * scale);
            prop_assert!((es.lambda_plus * es.lambda_minus - det).norm() <= 1e-12 * scale * scale);
        }

        #[test]
        fn delta_lambda_squared_identity(p in arb_params()) {
            let dl = delta_lambda(&p);
            let d = Complex64::new(p.delta, -0.5 * p.gamma());
            let expect = 4.0 * p.j * p.j + d * d;
            prop_assert!((dl * dl - expect).norm() <= 1e-12 * expect.norm().max(1.0));
            prop_assert!(dl.re >= 0.0);
        }
    }
}

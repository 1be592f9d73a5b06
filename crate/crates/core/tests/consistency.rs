use nalgebra::Matrix3;
use num_complex::Complex64;
use proptest::prelude::*;

use nhqubit::evolution::{analytic_populations, integrate_block, integrate_lindblad};
use nhqubit::io::ensemble_table;
use nhqubit::ode::StepControl;
use nhqubit::trajectories::{run_ensemble, sample_tomography_stream, Axis, EnsembleOptions};
use nhqubit::{state_from_angles, QubitBlock, SystemParams};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn grid(t_max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| t_max * k as f64 / (n - 1) as f64).collect()
}

fn f_density() -> Matrix3<Complex64> {
    QubitBlock::new(1.0, 0.0, ZERO).to_density()
}

#[test]
fn block_equations_reproduce_lindblad_manifold() {
    let cases = [
        SystemParams::new(3.0, 0.0, 6.7, 0.25, 0.0).unwrap(),
        SystemParams::new(1.1, -2.0, 4.0, 0.5, 0.8).unwrap(),
        SystemParams::new(0.4, 1.5, 8.0, 0.0, 0.3).unwrap(),
    ];
    let times = grid(2.0, 41);
    for p in cases {
        let lind = integrate_lindblad(&f_density(), &p, &times, &StepControl::tight()).unwrap();
        let block = integrate_block(&QubitBlock::new(1.0, 0.0, ZERO), &p, &times, &StepControl::tight()).unwrap();
        for (a, b) in lind.evolution.blocks.iter().zip(&block.blocks) {
            assert!((a.rho_ff - b.rho_ff).abs() < 1e-8, "{p:?}");
            assert!((a.rho_ee - b.rho_ee).abs() < 1e-8, "{p:?}");
            assert!((a.rho_ef - b.rho_ef).norm() < 1e-8, "{p:?}");
        }
        for (g, w) in lind.ground.iter().zip(&lind.evolution.weight) {
            assert!((g + w - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn closed_forms_match_block_integration() {
    let p = SystemParams::resonant(2.2, 5.0);
    let times = grid(3.0, 31);
    let r = integrate_block(&QubitBlock::new(1.0, 0.0, ZERO), &p, &times, &StepControl::tight()).unwrap();
    for (k, &t) in times.iter().enumerate() {
        let a = analytic_populations(&p, t).unwrap();
        assert!((a.p_f - r.blocks[k].rho_ff).abs() < 1e-9);
        assert!((a.p_e - r.blocks[k].rho_ee).abs() < 1e-9);
        assert!((a.pfn - r.pfn[k]).abs() < 1e-8);
    }
}

#[test]
fn trajectory_averages_converge_to_lindblad() {
    let p = SystemParams::new(2.0, 0.7, 4.0, 0.6, 0.5).unwrap();
    let times = grid(1.5, 16);
    let lind = integrate_lindblad(&f_density(), &p, &times, &StepControl::tight()).unwrap();
    let psi0 = [ZERO, ZERO, Complex64::new(1.0, 0.0)];
    let ens = run_ensemble(&psi0, &p, &times, 20_000, 77, EnsembleOptions::default()).unwrap();
    for (i, u) in ens.unconditional.iter().enumerate() {
        let rho = &lind.states[i];
        let exact = [rho[(0, 0)].re, rho[(1, 1)].re, rho[(2, 2)].re, rho[(1, 2)].re, rho[(1, 2)].im];
        for c in 0..5 {
            let tol = 5.0 * u.se[c] + 1e-12;
            assert!((u.mean[c] - exact[c]).abs() <= tol, "t={} component {c}: {} vs {}", times[i], u.mean[c], exact[c]);
        }
    }
}

#[test]
fn ensemble_csv_parses_back() {
    let p = SystemParams::new(1.5, 0.0, 6.0, 0.2, 0.0).unwrap();
    let times = grid(3.0, 7);
    let psi0 = [ZERO, ZERO, Complex64::new(1.0, 0.0)];
    let ens = run_ensemble(&psi0, &p, &times, 200, 3, EnsembleOptions::default()).unwrap();
    let csv = ensemble_table(&ens).to_csv_string(None);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,n_surviving,x,y,z,pfn,se_x,se_y,se_z,se_pfn");
    for (i, line) in lines.enumerate() {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(v[0], times[i]);
        assert_eq!(v[1] as usize, ens.n_surviving[i]);
        match ens.conditional[i] {
            Some(c) => assert_eq!(v[5], c.pfn),
            None => assert!(v[2..].iter().all(|x| x.is_nan())),
        }
    }
}

#[test]
fn tomography_estimates_are_unbiased() {
    let block = state_from_angles(1.1, 0.6).block().scaled(0.35);
    let w = block.weight();
    let truth = [2.0 * block.rho_ef.re / w, -2.0 * block.rho_ef.im / w, (block.rho_ee - block.rho_ff) / w];
    for (axis, exact) in [Axis::X, Axis::Y, Axis::Z].into_iter().zip(truth) {
        let n = 400;
        let (mut sum, mut se2) = (0.0, 0.0);
        for s in 0..n {
            let e = sample_tomography_stream(&block, axis, 4000, 0.03, 11, s).unwrap();
            sum += e.estimate;
            se2 += e.se * e.se;
        }
        let mean = sum / n as f64;
        let se_mean = (se2 / n as f64).sqrt() / (n as f64).sqrt();
        assert!((mean - exact).abs() < 4.0 * se_mean, "{axis:?}: {mean} vs {exact} (se {se_mean})");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lindblad_state_stays_physical(
        j in 0.0..5.0f64,
        delta in -4.0..4.0f64,
        ge in 0.0..8.0f64,
        gf_frac in 0.0..1.0f64,
        gp in 0.0..2.0f64,
    ) {
        let p = SystemParams::new(j, delta, ge, gf_frac * ge, gp).unwrap();
        let times = grid(2.0, 9);
        let r = integrate_lindblad(&f_density(), &p, &times, &StepControl::default()).unwrap();
        for rho in &r.states {
            prop_assert!((rho.trace().re - 1.0).abs() < 1e-7);
            prop_assert!((rho - rho.adjoint()).norm() < 1e-9);
        }
        for b in &r.evolution.blocks {
            prop_assert!(b.is_positive(1e-7));
        }
        for w in r.evolution.weight.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn block_bloch_vector_is_unit_bounded(
        j in 0.0..5.0f64,
        delta in -4.0..4.0f64,
        ge in 0.0..8.0f64,
        gp in 0.0..2.0f64,
        theta in 0.0..std::f64::consts::PI,
        phi in 0.0..std::f64::consts::TAU,
    ) {
        let p = SystemParams::new(j, delta, ge, 0.0, gp).unwrap();
        let b0 = state_from_angles(theta, phi).block();
        let r = integrate_block(&b0, &p, &grid(3.0, 13), &StepControl::default()).unwrap();
        for v in &r.bloch {
            prop_assert!(v.x * v.x + v.y * v.y + v.z * v.z <= 1.0 + 1e-7);
        }
    }
}

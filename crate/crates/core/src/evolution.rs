//! Time evolution of the qubit manifold.
//!
//! Three levels of description are provided and cross-checked in tests:
//! the pure-state propagator of the effective Hamiltonian, the closed
//! equations for the qubit block of the density matrix, and the full
//! three-level Lindblad equation.
//!
//! Inside the Lindblad generator the drive Hamiltonian is written as
//! `J(|e⟩⟨f| + |f⟩⟨e|) + Δ_c(|f⟩⟨f| − |e⟩⟨e|)` with `Δ_c = −Δ/2`, which gives
//! the same e–f splitting `Δ` as the effective Hamiltonian.

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::build_heff;
use crate::error::{Error, Result};
use crate::ode::{self, StepControl};
use crate::types::{
    bloch_from_block, BlochVector, LinRange, Mat2, Mat3, QubitBlock, QubitState, SystemParams, I, ONE, ZERO,
};

/// Below this value of `|δλ|·t` the propagator uses the Jordan (EP) form.
pub const JORDAN_SWITCH: f64 = 1e-6;
/// Block positivity tolerance checked after every integrator step.
pub const POSITIVITY_TOL: f64 = 1e-8;
/// Manifold weight below which a steady-state map cell is flagged.
pub const INSUFFICIENT_WEIGHT: f64 = 1e-4;
pub const DEFAULT_T_EVAL: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub blocks: Vec<QubitBlock>,
    /// Normalized Bloch vector; NaN where the manifold weight has vanished.
    pub bloch: Vec<BlochVector>,
    pub pfn: Vec<f64>,
    /// Manifold weight, i.e. the post-selection success probability.
    pub weight: Vec<f64>,
}

impl EvolutionResult {
    fn from_blocks(times: Vec<f64>, blocks: Vec<QubitBlock>, weight: Vec<f64>) -> Self {
        let (bloch, pfn) = blocks
            .iter()
            .map(|b| match bloch_from_block(b) {
                Ok((v, _)) => (v, b.pfn()),
                Err(_) => (BlochVector::new(f64::NAN, f64::NAN, f64::NAN), f64::NAN),
            })
            .unzip();
        Self { times, blocks, bloch, pfn, weight }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `exp(−iHt)` for an arbitrary complex 2×2 `H`.
///
/// Uses `exp(−iHt) = e^{−ict}[cos(qt) I − i sin(qt)/q (H − c)]` with `c = tr/2`
/// and `q² = −det(H − c)`; when `2|q|t` is below [`JORDAN_SWITCH`] the
/// nilpotent (Jordan) form `e^{−ict}[I − it(H − c)]` is used instead.
pub fn expm_neg_i(h: &Mat2, t: f64) -> Mat2 {
    let c = 0.5 * (h[(0, 0)] + h[(1, 1)]);
    let m = h - Mat2::identity() * c;
    let q2 = m[(0, 0)] * m[(0, 0)] + m[(0, 1)] * m[(1, 0)];
    let q = q2.sqrt();
    let phase = (-I * c * t).exp();
    let core = if 2.0 * q.norm() * t < JORDAN_SWITCH {
        Mat2::identity() - m * (I * t)
    } else {
        let qt = q * t;
        Mat2::identity() * qt.cos() - m * (I * qt.sin() / q)
    };
    core * phase
}

pub fn propagator(p: &SystemParams, t: f64) -> Result<Mat2> {
    if !(t >= 0.0) {
        return Err(Error::Precondition(format!("propagation time {t} must be non-negative")));
    }
    Ok(expm_neg_i(&build_heff(p), t))
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(t >= &0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("times must be non-negative and non-decreasing".into()));
    }
    Ok(())
}

/// Post-selected evolution of a pure state under the effective Hamiltonian.
/// Valid only when there are no in-manifold jumps (`γ_f = Γ_φ = 0`).
pub fn evolve_pure_conditional(psi0: &QubitState, p: &SystemParams, times: &[f64]) -> Result<EvolutionResult> {
    if p.gamma_f != 0.0 || p.gamma_phi != 0.0 {
        return Err(Error::Precondition(
            "pure conditional evolution requires gamma_f = 0 and gamma_phi = 0; use block integration".into(),
        ));
    }
    if !psi0.is_normalized() {
        return Err(Error::Precondition("initial state must be normalized".into()));
    }
    check_times(times)?;
    let h = build_heff(p);
    let v0 = psi0.to_vector();
    let blocks: Vec<QubitBlock> =
        times.iter().map(|&t| QubitState::from_vector(&(expm_neg_i(&h, t) * v0)).block()).collect();
    let weight = blocks.iter().map(QubitBlock::weight).collect();
    Ok(EvolutionResult::from_blocks(times.to_vec(), blocks, weight))
}

/// Right-hand side of the closed qubit-block equations, including dephasing.
pub fn qubit_block_derivative(b: &QubitBlock, p: &SystemParams) -> QubitBlock {
    let coherence_gap = b.rho_ef - b.rho_ef.conj();
    let damping = Complex64::new(0.5 * (p.gamma_e + p.gamma_f + 2.0 * p.gamma_phi), p.delta);
    QubitBlock {
        rho_ff: (-I * p.j * coherence_gap).re - p.gamma_f * b.rho_ff,
        rho_ee: (I * p.j * coherence_gap).re - p.gamma_e * b.rho_ee + p.gamma_f * b.rho_ff,
        rho_ef: -I * p.j * (b.rho_ff - b.rho_ee) - damping * b.rho_ef,
    }
}

/// The block generator as a real 4×4 matrix on `(ρ_ff, ρ_ee, Re ρ_ef, Im ρ_ef)`.
pub fn block_generator(p: &SystemParams) -> Matrix4<f64> {
    let mut g = Matrix4::zeros();
    for k in 0..4 {
        let mut basis = [0.0; 4];
        basis[k] = 1.0;
        let d = qubit_block_derivative(&QubitBlock::from_real(&basis), p).to_real();
        for r in 0..4 {
            g[(r, k)] = d[r];
        }
    }
    g
}

/// Block at time `t` via the matrix exponential of the block generator.
pub fn block_at(block0: &QubitBlock, p: &SystemParams, t: f64) -> QubitBlock {
    let v = (block_generator(p) * t).exp() * Vector4::from(block0.to_real());
    QubitBlock::from_real(v.as_slice())
}

fn block_min_eigenvalue(b: &QubitBlock) -> f64 {
    let mean = 0.5 * (b.rho_ff + b.rho_ee);
    let half = 0.5 * (b.rho_ff - b.rho_ee);
    mean - (half * half + b.rho_ef.norm_sqr()).sqrt()
}

/// Integrates the qubit-block equations. The state is renormalized in chunks
/// (the equations are linear), so the Bloch vector stays accurate
/// long after the manifold weight has decayed.
pub fn integrate_block(
    block0: &QubitBlock,
    p: &SystemParams,
    times: &[f64],
    ctl: &StepControl,
) -> Result<EvolutionResult> {
    check_times(times)?;
    let w0 = block0.weight();
    if !(w0 > 0.0) {
        return Err(Error::DegenerateWeight { weight: w0 });
    }
    // Weight decays at most at rate γ_e, so each chunk loses at most a factor e⁻⁴.
    let chunk = if p.gamma_e > 0.0 { 4.0 / p.gamma_e } else { f64::INFINITY };
    let mut unit = block0.scaled(1.0 / w0);
    let mut log_w = w0.ln();
    let mut t_prev = 0.0;
    let mut blocks = Vec::with_capacity(times.len());
    let mut weight = Vec::with_capacity(times.len());
    let mut bloch = Vec::with_capacity(times.len());
    let mut pfn = Vec::with_capacity(times.len());
    let mut dead = false;

    for &t in times {
        while !dead && t > t_prev {
            let t_next = (t_prev + chunk).min(t);
            let y = ode::integrate(
                |_, y, dy| dy.copy_from_slice(&qubit_block_derivative(&QubitBlock::from_real(y), p).to_real()),
                t_prev,
                &unit.to_real(),
                &[t_next],
                ctl,
                |ts, y| {
                    let b = QubitBlock::from_real(y);
                    let min = block_min_eigenvalue(&b);
                    if min < -POSITIVITY_TOL.max(100.0 * ctl.rtol) * b.weight() {
                        Err(Error::PositivityViolation { t: ts, min_eigenvalue: min })
                    } else {
                        Ok(())
                    }
                },
            )?;
            let b = QubitBlock::from_real(&y[0]);
            let w = b.weight();
            if w < 1e-300 {
                dead = true;
            } else {
                log_w += w.ln();
                unit = b.scaled(1.0 / w);
            }
            t_prev = t_next;
        }
        if dead {
            blocks.push(QubitBlock::new(0.0, 0.0, ZERO));
            weight.push(0.0);
            bloch.push(BlochVector::new(f64::NAN, f64::NAN, f64::NAN));
            pfn.push(f64::NAN);
            continue;
        }
        let total = log_w.exp();
        blocks.push(unit.scaled(total));
        weight.push(total);
        bloch.push(bloch_from_block(&unit)?.0);
        pfn.push(unit.pfn());
    }
    Ok(EvolutionResult { times: times.to_vec(), blocks, bloch, pfn, weight })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LindbladResult {
    pub evolution: EvolutionResult,
    pub ground: Vec<f64>,
    pub states: Vec<Mat3>,
}

/// Drive Hamiltonian of the three-level system, basis `(|g⟩, |e⟩, |f⟩)`.
pub fn lindblad_hamiltonian(p: &SystemParams) -> Mat3 {
    let delta_c = -0.5 * p.delta;
    let j = Complex64::from(p.j);
    let mut h = Mat3::zeros();
    h[(1, 2)] = j;
    h[(2, 1)] = j;
    h[(1, 1)] = Complex64::from(-delta_c);
    h[(2, 2)] = Complex64::from(delta_c);
    h
}

/// Jump operators `L_e = √γ_e |g⟩⟨e|`, `L_f = √γ_f |e⟩⟨f|`, `L_φ = √(Γ_φ/2)(|f⟩⟨f| − |e⟩⟨e|)`.
pub fn jump_operators(p: &SystemParams) -> Vec<Mat3> {
    let mut ops = Vec::with_capacity(3);
    let mut le = Mat3::zeros();
    le[(0, 1)] = Complex64::from(p.gamma_e.sqrt());
    ops.push(le);
    let mut lf = Mat3::zeros();
    lf[(1, 2)] = Complex64::from(p.gamma_f.sqrt());
    ops.push(lf);
    if p.gamma_phi > 0.0 {
        let a = (0.5 * p.gamma_phi).sqrt();
        let mut lp = Mat3::zeros();
        lp[(2, 2)] = Complex64::from(a);
        lp[(1, 1)] = Complex64::from(-a);
        ops.push(lp);
    }
    ops
}

/// Full Lindblad right-hand side `−i[H, ρ] + Σ_k (L ρ L† − ½{L†L, ρ})`.
pub struct Liouvillian {
    h: Mat3,
    jumps: Vec<(Mat3, Mat3)>,
    decay: Mat3,
}

impl Liouvillian {
    pub fn new(p: &SystemParams) -> Self {
        let jumps: Vec<(Mat3, Mat3)> = jump_operators(p).into_iter().map(|l| (l, l.adjoint())).collect();
        let decay = jumps.iter().fold(Mat3::zeros(), |acc, (l, ld)| acc + ld * l);
        Self { h: lindblad_hamiltonian(p), jumps, decay }
    }

    pub fn apply(&self, rho: &Mat3) -> Mat3 {
        let mut d = (self.h * rho - rho * self.h) * (-I);
        for (l, ld) in &self.jumps {
            d += l * rho * ld;
        }
        d - (self.decay * rho + rho * self.decay) * Complex64::from(0.5)
    }
}

fn mat3_to_real(m: &Mat3, out: &mut [f64]) {
    for r in 0..3 {
        for c in 0..3 {
            let z = m[(r, c)];
            out[2 * (3 * r + c)] = z.re;
            out[2 * (3 * r + c) + 1] = z.im;
        }
    }
}

fn mat3_from_real(v: &[f64]) -> Mat3 {
    Mat3::from_fn(|r, c| Complex64::new(v[2 * (3 * r + c)], v[2 * (3 * r + c) + 1]))
}

fn min_hermitian_eigenvalue(rho: &Mat3) -> f64 {
    let herm = (rho + rho.adjoint()) * Complex64::from(0.5);
    herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Adaptive integration of the three-level Lindblad equation.
pub fn integrate_lindblad(rho0: &Mat3, p: &SystemParams, times: &[f64], ctl: &StepControl) -> Result<LindbladResult> {
    check_times(times)?;
    if (rho0 - rho0.adjoint()).norm() > 1e-10 {
        return Err(Error::Precondition("initial density matrix is not Hermitian".into()));
    }
    if (rho0.trace() - ONE).norm() > 1e-10 {
        return Err(Error::Precondition("initial density matrix must have unit trace".into()));
    }
    if min_hermitian_eigenvalue(rho0) < -1e-10 {
        return Err(Error::Precondition("initial density matrix is not positive semidefinite".into()));
    }

    let liou = Liouvillian::new(p);
    let mut y0 = vec![0.0; 18];
    mat3_to_real(rho0, &mut y0);
    let ys = ode::integrate(
        |_, y, dy| mat3_to_real(&liou.apply(&mat3_from_real(y)), dy),
        0.0,
        &y0,
        times,
        ctl,
        |t, y| {
            let min = min_hermitian_eigenvalue(&mat3_from_real(y));
            if min < -POSITIVITY_TOL {
                Err(Error::PositivityViolation { t, min_eigenvalue: min })
            } else {
                Ok(())
            }
        },
    )?;

    let states: Vec<Mat3> = ys.iter().map(|y| mat3_from_real(y)).collect();
    let blocks: Vec<QubitBlock> = states.iter().map(QubitBlock::from_density).collect();
    let weight = blocks.iter().map(QubitBlock::weight).collect();
    let ground = states.iter().map(|r| r[(0, 0)].re).collect();
    Ok(LindbladResult { evolution: EvolutionResult::from_blocks(times.to_vec(), blocks, weight), ground, states })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticPopulations {
    pub p_e: f64,
    pub p_f: f64,
    pub pfn: f64,
}

/// Closed-form populations from `|f⟩` in the PT-symmetric phase at zero detuning:
/// `P_e = e^{−γ_e t/2}(J/α)² sin²(αt)`, `P_f = e^{−γ_e t/2}(J/α)² cos²(αt − θ)`,
/// with `α = √(J² − (γ_e/4)²)` and `θ = arcsin(γ_e/4J)`.
pub fn analytic_populations(p: &SystemParams, t: f64) -> Result<AnalyticPopulations> {
    if p.delta != 0.0 || p.gamma_f != 0.0 || p.gamma_phi != 0.0 {
        return Err(Error::Precondition("closed forms require Delta = 0, gamma_f = 0, gamma_phi = 0".into()));
    }
    let g = 0.25 * p.gamma_e;
    if !(p.j > g) {
        return Err(Error::Precondition(format!("closed forms require J > gamma_e/4 = {g}")));
    }
    let alpha = (p.j * p.j - g * g).sqrt();
    let theta = (g / p.j).asin();
    let envelope = (-0.5 * p.gamma_e * t).exp() * (p.j / alpha).powi(2);
    let s2 = (alpha * t).sin().powi(2);
    let c2 = (alpha * t - theta).cos().powi(2);
    Ok(AnalyticPopulations { p_e: envelope * s2, p_f: envelope * c2, pfn: c2 / (s2 + c2) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalSteadyState {
    pub bloch: BlochVector,
    /// Real-part gap between the two slowest modes of the block generator.
    pub gap: f64,
    /// Decay rate of the slowest mode (its eigenvalue is `−rate`).
    pub rate: f64,
}

/// Long-time limit of the post-selected state: the slowest-decaying mode of
/// the block generator, normalized to unit manifold weight.
pub fn steady_state_conditional(p: &SystemParams) -> Result<ConditionalSteadyState> {
    let g = block_generator(p);
    let mut eig: Vec<Complex64> = g.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.abs().total_cmp(&a.im.abs())));
    let gap = eig[0].re - eig[1].re;
    if gap <= 1e-9 * p.rate_scale() {
        return Err(Error::DegenerateGap { gap });
    }
    let lead = eig[0].re;
    let shifted = g - Matrix4::identity() * lead;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let k = svd.singular_values.imin();
    let v = v_t.row(k);
    let b = QubitBlock::from_real(&[v[0], v[1], v[2], v[3]]);
    let w = b.weight();
    if w.abs() < 1e-12 {
        return Err(Error::DegenerateWeight { weight: w });
    }
    let (bloch, _) = bloch_from_block(&b.scaled(1.0 / w))?;
    Ok(ConditionalSteadyState { bloch, gap, rate: -lead })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyGrid {
    pub delta: LinRange,
    pub j: LinRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyRow {
    pub delta: f64,
    pub j: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub weight: f64,
    /// Weight below [`INSUFFICIENT_WEIGHT`]: too few successful post-selections.
    pub insufficient: bool,
}

/// Post-selected Bloch vector after `t_eval` from `|f⟩` across a (Δ, J) grid, Δ-major.
pub fn steady_state_map(grid: &SteadyGrid, base: &SystemParams, t_eval: f64) -> Result<Vec<SteadyRow>> {
    let deltas = grid.delta.values();
    let js = grid.j.values();
    if deltas.is_empty() || js.is_empty() {
        return Err(Error::Precondition("steady-state grid is empty".into()));
    }
    let cells: Vec<(f64, f64)> = deltas.iter().flat_map(|&d| js.iter().map(move |&j| (d, j))).collect();
    cells
        .par_iter()
        .map(|&(delta, j)| {
            let p = base.with_delta(delta).with_j(j);
            let r = integrate_block(&QubitState::F.block(), &p, &[t_eval], &StepControl::default())?;
            let b = r.bloch[0];
            Ok(SteadyRow { delta, j, x: b.x, y: b.y, z: b.z, weight: r.weight[0], insufficient: r.weight[0] < INSUFFICIENT_WEIGHT })
        })
        .collect()
}

/// Normalized f population at `t` starting from `|f⟩`.
///
/// Uses the closed-form propagator when there are no in-manifold jumps and the
/// block-generator exponential otherwise.
pub fn conditional_pfn(p: &SystemParams, t: f64) -> f64 {
    conditional_block(p, t).pfn()
}

/// Qubit block at `t` starting from `|f⟩` (weight included).
pub fn conditional_block(p: &SystemParams, t: f64) -> QubitBlock {
    if p.gamma_f == 0.0 && p.gamma_phi == 0.0 {
        let u = expm_neg_i(&build_heff(p), t);
        QubitState::new(u[(0, 1)], u[(1, 1)]).block()
    } else {
        block_at(&QubitState::F.block(), p, t)
    }
}

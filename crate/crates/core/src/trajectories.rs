//! Quantum-jump unraveling of the three-level dynamics with post-selection on
//! the {e, f} manifold, and finite-shot tomography with assignment error.
//!
//! Jump times are sampled exactly: the no-jump evolution is propagated in
//! closed form and the waiting time solves `‖ψ(τ)‖² = r` by bisection (the
//! norm is monotone). Trajectory `i` of an ensemble draws from
//! `ChaCha8Rng::seed_from_u64(master_seed)` on stream `i`.

use nalgebra::Vector2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::build_heff;
use crate::error::{Error, Result};
use crate::evolution::expm_neg_i;
use crate::types::{BlochVector, Mat2, QubitBlock, QubitState, SystemParams, I, ONE, ZERO};

/// Three-level pure state in `(g, e, f)` order.
pub type State3 = [Complex64; 3];

pub const GROUND: State3 = [ONE, ZERO, ZERO];

/// Trajectories are simulated in blocks of this size and reduced in index order.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpChannel {
    /// `|e⟩ → |g⟩` at rate γ_e.
    Decay,
    /// `|f⟩ → |e⟩` at rate γ_f.
    Relax,
    Dephase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub t: f64,
    pub channel: JumpChannel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    /// Normalized state at each requested time.
    pub states: Vec<State3>,
    pub jumps: Vec<JumpEvent>,
    /// Number of jumps that had occurred by each requested time.
    pub jumps_before: Vec<usize>,
}

pub fn in_manifold(s: &State3) -> bool {
    s[0].norm_sqr() < 0.5
}

fn manifold_state(s: &State3) -> QubitState {
    QubitState::new(s[1], s[2])
}

struct NoJump {
    h: Mat2,
    p: SystemParams,
}

impl NoJump {
    fn new(p: &SystemParams) -> Self {
        let h = build_heff(p) - Mat2::identity() * (I * 0.25 * p.gamma_phi);
        Self { h, p: *p }
    }

    fn evolve(&self, v: &Vector2<Complex64>, tau: f64) -> Vector2<Complex64> {
        expm_neg_i(&self.h, tau) * v
    }

    fn total_rate(&self) -> f64 {
        self.p.gamma_e + self.p.gamma_f + self.p.gamma_phi
    }
}

fn check_trajectory_times(times: &[f64]) -> Result<()> {
    if times.first().is_some_and(|&t| t < 0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("trajectory times must be non-negative and strictly increasing".into()));
    }
    Ok(())
}

fn check_state(psi0: &State3) -> Result<()> {
    let n: f64 = psi0.iter().map(|z| z.norm_sqr()).sum();
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::Precondition("initial state must be normalized".into()));
    }
    if psi0[0].norm_sqr() > 1e-12 && psi0[0].norm_sqr() < 1.0 - 1e-12 {
        return Err(Error::Precondition("initial state must lie either in |g⟩ or in the {e, f} manifold".into()));
    }
    Ok(())
}

fn draw_threshold(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let r: f64 = rng.random();
        if r > 0.0 {
            return r;
        }
    }
}

fn simulate(psi0: &State3, nj: &NoJump, times: &[f64], rng: &mut ChaCha8Rng) -> TrajectoryRecord {
    let mut states = Vec::with_capacity(times.len());
    let mut jumps = Vec::new();
    let mut jumps_before = Vec::with_capacity(times.len());

    let mut grounded = !in_manifold(psi0);
    let mut psi = Vector2::new(psi0[1], psi0[2]);
    let mut t_ref = 0.0;
    let mut r = draw_threshold(rng);
    let active = nj.total_rate() > 0.0;

    for &t in times {
        while !grounded && active {
            let v = nj.evolve(&psi, t - t_ref);
            if v.norm_squared() > r {
                break;
            }
            // The jump happened in (t_ref, t]; bisect for the waiting time.
            let (mut lo, mut hi) = (0.0, t - t_ref);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if nj.evolve(&psi, mid).norm_squared() > r {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let tj = t_ref + hi;
            let v = nj.evolve(&psi, hi);
            let norm = v.norm_squared();
            let we = nj.p.gamma_e * v[0].norm_sqr();
            let wf = nj.p.gamma_f * v[1].norm_sqr();
            let wp = 0.5 * nj.p.gamma_phi * norm;
            let u: f64 = rng.random::<f64>() * (we + wf + wp);
            let channel = if u < we {
                grounded = true;
                JumpChannel::Decay
            } else if u < we + wf {
                psi = Vector2::new(ONE, ZERO);
                JumpChannel::Relax
            } else {
                let s = norm.sqrt();
                psi = Vector2::new(-v[0] / s, v[1] / s);
                JumpChannel::Dephase
            };
            jumps.push(JumpEvent { t: tj, channel });
            t_ref = tj;
            r = draw_threshold(rng);
        }
        jumps_before.push(jumps.len());
        if grounded {
            states.push(GROUND);
        } else {
            let v = nj.evolve(&psi, t - t_ref);
            let s = v.norm();
            states.push([ZERO, v[0] / s, v[1] / s]);
        }
    }
    TrajectoryRecord { states, jumps, jumps_before }
}

pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// A single trajectory (stream 0 of `seed`).
pub fn run_trajectory(psi0: &State3, p: &SystemParams, times: &[f64], seed: u64) -> Result<TrajectoryRecord> {
    p.validate()?;
    check_state(psi0)?;
    check_trajectory_times(times)?;
    Ok(simulate(psi0, &NoJump::new(p), times, &mut trajectory_rng(seed, 0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnsembleOptions {
    /// Keep only trajectories that never jumped (pure non-Hermitian evolution).
    pub strict: bool,
    pub record_jumps: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPoint {
    pub bloch: BlochVector,
    pub pfn: f64,
    pub se: BlochVector,
    pub se_pfn: f64,
}

/// Population and coherence averages over all trajectories, `|g⟩` included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnconditionalPoint {
    /// `(ρ_gg, ρ_ee, ρ_ff, Re ρ_ef, Im ρ_ef)`.
    pub mean: [f64; 5],
    pub se: [f64; 5],
}

impl UnconditionalPoint {
    pub fn block(&self) -> QubitBlock {
        QubitBlock::new(self.mean[2], self.mean[1], Complex64::new(self.mean[3], self.mean[4]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryJumps {
    pub trajectory: usize,
    pub jumps: Vec<JumpEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    pub n_requested: usize,
    pub master_seed: u64,
    pub strict: bool,
    pub times: Vec<f64>,
    pub n_surviving: Vec<usize>,
    /// `None` where no trajectory survived post-selection.
    pub conditional: Vec<Option<ConditionalPoint>>,
    pub unconditional: Vec<UnconditionalPoint>,
    pub decay_jumps: usize,
    pub relax_jumps: usize,
    pub dephase_jumps: usize,
    pub jump_log: Option<Vec<TrajectoryJumps>>,
}

impl TrajectoryEnsemble {
    pub fn survival_fraction(&self, i: usize) -> f64 {
        self.n_surviving[i] as f64 / self.n_requested as f64
    }

    /// Post-selected averages at time index `i`.
    pub fn conditional_at(&self, i: usize) -> Result<ConditionalPoint> {
        self.conditional[i].ok_or(Error::EmptyEnsemble { t: self.times[i] })
    }

    pub fn mean_block(&self, i: usize) -> QubitBlock {
        self.unconditional[i].block()
    }
}

#[derive(Clone)]
struct Acc {
    n: usize,
    cond: [f64; 4],
    cond2: [f64; 4],
    unc: [f64; 5],
    unc2: [f64; 5],
}

impl Acc {
    fn new() -> Self {
        Self { n: 0, cond: [0.0; 4], cond2: [0.0; 4], unc: [0.0; 5], unc2: [0.0; 5] }
    }
}

fn mean_se(sum: f64, sum2: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sum2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Runs `n` independent trajectories. Output is bit-identical for a given
/// `master_seed` regardless of the size of the rayon pool.
pub fn run_ensemble(
    psi0: &State3,
    p: &SystemParams,
    times: &[f64],
    n: usize,
    master_seed: u64,
    opts: EnsembleOptions,
) -> Result<TrajectoryEnsemble> {
    if n == 0 {
        return Err(Error::Precondition("ensemble size must be at least 1".into()));
    }
    p.validate()?;
    check_state(psi0)?;
    check_trajectory_times(times)?;

    let nj = NoJump::new(p);
    let mut acc = vec![Acc::new(); times.len()];
    let mut counts = [0usize; 3];
    let mut log = opts.record_jumps.then(Vec::new);

    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let records: Vec<TrajectoryRecord> = (start..end)
            .into_par_iter()
            .map(|i| simulate(psi0, &nj, times, &mut trajectory_rng(master_seed, i as u64)))
            .collect();
        for (offset, rec) in records.into_iter().enumerate() {
            for (k, s) in rec.states.iter().enumerate() {
                let a = &mut acc[k];
                let unc = [s[0].norm_sqr(), s[1].norm_sqr(), s[2].norm_sqr(), (s[1] * s[2].conj()).re, (s[1] * s[2].conj()).im];
                for c in 0..5 {
                    a.unc[c] += unc[c];
                    a.unc2[c] += unc[c] * unc[c];
                }
                let selected = in_manifold(s) && !(opts.strict && rec.jumps_before[k] > 0);
                if selected {
                    let q = manifold_state(s);
                    let b = q.bloch().expect("manifold states are normalized");
                    let v = [b.x, b.y, b.z, q.amp_f.norm_sqr()];
                    a.n += 1;
                    for c in 0..4 {
                        a.cond[c] += v[c];
                        a.cond2[c] += v[c] * v[c];
                    }
                }
            }
            for j in &rec.jumps {
                counts[j.channel as usize] += 1;
            }
            if let Some(log) = log.as_mut() {
                if !rec.jumps.is_empty() {
                    log.push(TrajectoryJumps { trajectory: start + offset, jumps: rec.jumps });
                }
            }
        }
        start = end;
    }

    let mut n_surviving = Vec::with_capacity(times.len());
    let mut conditional = Vec::with_capacity(times.len());
    let mut unconditional = Vec::with_capacity(times.len());
    for a in &acc {
        n_surviving.push(a.n);
        conditional.push((a.n > 0).then(|| {
            let m: Vec<(f64, f64)> = (0..4).map(|c| mean_se(a.cond[c], a.cond2[c], a.n)).collect();
            ConditionalPoint {
                bloch: BlochVector::new(m[0].0, m[1].0, m[2].0),
                pfn: m[3].0,
                se: BlochVector::new(m[0].1, m[1].1, m[2].1),
                se_pfn: m[3].1,
            }
        }));
        let mut mean = [0.0; 5];
        let mut se = [0.0; 5];
        for c in 0..5 {
            (mean[c], se[c]) = mean_se(a.unc[c], a.unc2[c], n);
        }
        unconditional.push(UnconditionalPoint { mean, se });
    }

    Ok(TrajectoryEnsemble {
        n_requested: n,
        master_seed,
        strict: opts.strict,
        times: times.to_vec(),
        n_surviving,
        conditional,
        unconditional,
        decay_jumps: counts[0],
        relax_jumps: counts[1],
        dephase_jumps: counts[2],
        jump_log: log,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X" | "x" => Ok(Axis::X),
            "Y" | "y" => Ok(Axis::Y),
            "Z" | "z" => Ok(Axis::Z),
            other => Err(Error::Precondition(format!("unknown axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub axis: Axis,
    pub shots: u64,
    /// Reported outcome counts `(e, f, g)`.
    pub counts: [u64; 3],
    pub assignment_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TomographyEstimate {
    pub record: ShotRecord,
    pub estimate: f64,
    pub se: f64,
}

/// Outcome probabilities `(e, f, g)` after pre-rotating `axis` onto σ_z.
pub fn axis_probabilities(block: &QubitBlock, axis: Axis) -> [f64; 3] {
    let w = block.weight();
    let s = match axis {
        Axis::X => 2.0 * block.rho_ef.re,
        Axis::Y => -2.0 * block.rho_ef.im,
        Axis::Z => block.rho_ee - block.rho_ff,
    };
    [(0.5 * (w + s)).max(0.0), (0.5 * (w - s)).max(0.0), (1.0 - w).max(0.0)]
}

fn multinomial(n: u64, probs: &[f64; 3], rng: &mut ChaCha8Rng) -> [u64; 3] {
    let mut out = [0u64; 3];
    let mut left = n;
    let mut mass: f64 = probs.iter().sum();
    for k in 0..2 {
        if left == 0 || mass <= 0.0 {
            break;
        }
        let q = (probs[k] / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(left, q).expect("probability in [0, 1]").sample(rng);
        out[k] = draw;
        left -= draw;
        mass -= probs[k];
    }
    out[2] = left;
    out
}

/// Simulates `shots` projective measurements along `axis` with symmetric
/// assignment error `ε` (each level is misreported with total probability ε,
/// split evenly between the other two labels), discards `g` outcomes, and
/// returns the confusion-corrected expectation value with its delta-method
/// standard error.
pub fn sample_tomography(
    block: &QubitBlock,
    axis: Axis,
    shots: u64,
    assignment_error: f64,
    seed: u64,
) -> Result<TomographyEstimate> {
    sample_tomography_stream(block, axis, shots, assignment_error, seed, 0)
}

/// [`sample_tomography`] drawing from stream `stream` of `master_seed`.
pub fn sample_tomography_stream(
    block: &QubitBlock,
    axis: Axis,
    shots: u64,
    assignment_error: f64,
    master_seed: u64,
    stream: u64,
) -> Result<TomographyEstimate> {
    if shots == 0 {
        return Err(Error::Precondition("shots must be at least 1".into()));
    }
    if !(0.0..0.5).contains(&assignment_error) {
        return Err(Error::Precondition("assignment_error must lie in [0, 0.5)".into()));
    }
    let mut rng = trajectory_rng(master_seed, stream);
    let truth = multinomial(shots, &axis_probabilities(block, axis), &mut rng);
    let eps = assignment_error;
    let mut counts = [0u64; 3];
    for (i, &n_i) in truth.iter().enumerate() {
        let mut probs = [0.5 * eps; 3];
        probs[i] = 1.0 - eps;
        let reported = multinomial(n_i, &probs, &mut rng);
        for k in 0..3 {
            counts[k] += reported[k];
        }
    }
    let record = ShotRecord { axis, shots, counts, assignment_error };
    if counts[0] + counts[1] == 0 {
        return Err(Error::AllShotsDiscarded);
    }
    let nf = shots as f64;
    let (a, b) = (counts[0] as f64 / nf, counts[1] as f64 / nf);
    let c = eps;
    let d = a + b - c;
    if d <= 0.0 {
        return Err(Error::AllShotsDiscarded);
    }
    let estimate = (a - b) / d;
    let ga = (2.0 * b - c) / (d * d);
    let gb = (c - 2.0 * a) / (d * d);
    let var = (ga * ga * a * (1.0 - a) + gb * gb * b * (1.0 - b) - 2.0 * ga * gb * a * b) / nf;
    Ok(TomographyEstimate { record, estimate, se: var.max(0.0).sqrt() })
}

//! Parameters, states, and the Bloch-frame conventions shared by every module.
//!
//! Basis ordering is `(|e⟩, |f⟩)` for the qubit manifold and `(|g⟩, |e⟩, |f⟩)`
//! for the full transmon. The Bloch frame uses `σ_z = |e⟩⟨e| − |f⟩⟨f|` and
//! `σ_y = −i|e⟩⟨f| + i|f⟩⟨e|`, which places `(|e⟩ + i|f⟩)/√2` at `y = +1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const I: Complex64 = Complex64::new(0.0, 1.0);
pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub type Mat2 = nalgebra::Matrix2<Complex64>;
pub type Mat3 = nalgebra::Matrix3<Complex64>;

/// Physical rates of the driven three-level system, all angular and in μs⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Drive coupling between |e⟩ and |f⟩.
    #[serde(rename = "J")]
    pub j: f64,
    /// Drive detuning, placed on |e⟩.
    #[serde(rename = "Delta", default)]
    pub delta: f64,
    /// |e⟩ → |g⟩ decay.
    pub gamma_e: f64,
    /// |f⟩ → |e⟩ decay.
    #[serde(default)]
    pub gamma_f: f64,
    /// Pure dephasing inside the {e, f} manifold.
    #[serde(default)]
    pub gamma_phi: f64,
}

impl SystemParams {
    pub fn new(j: f64, delta: f64, gamma_e: f64, gamma_f: f64, gamma_phi: f64) -> Result<Self> {
        let p = Self { j, delta, gamma_e, gamma_f, gamma_phi };
        p.validate()?;
        Ok(p)
    }

    /// Zero detuning, no `γ_f`, no dephasing.
    pub fn resonant(j: f64, gamma_e: f64) -> Self {
        Self { j, delta: 0.0, gamma_e, gamma_f: 0.0, gamma_phi: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool); 5] = [
            ("J", self.j, false),
            ("Delta", self.delta, true),
            ("gamma_e", self.gamma_e, false),
            ("gamma_f", self.gamma_f, false),
            ("gamma_phi", self.gamma_phi, false),
        ];
        for (name, value, signed) in checks {
            if !value.is_finite() {
                return Err(Error::InvalidParams { name, reason: format!("{value} is not finite") });
            }
            if !signed && value < 0.0 {
                return Err(Error::InvalidParams { name, reason: format!("{value} is negative") });
            }
        }
        Ok(())
    }

    /// Effective dissipation scale `γ = γ_e − γ_f`.
    pub fn gamma(&self) -> f64 {
        self.gamma_e - self.gamma_f
    }

    pub fn with_j(mut self, j: f64) -> Self {
        self.j = j;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// Largest rate magnitude, used to scale tolerances.
    pub fn rate_scale(&self) -> f64 {
        [1.0, self.j, self.delta.abs(), self.gamma_e, self.gamma_f, self.gamma_phi]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Pure (possibly unnormalized) state of the qubit manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitState {
    pub amp_e: Complex64,
    pub amp_f: Complex64,
}

impl QubitState {
    pub const E: QubitState = QubitState { amp_e: ONE, amp_f: ZERO };
    pub const F: QubitState = QubitState { amp_e: ZERO, amp_f: ONE };

    pub fn new(amp_e: Complex64, amp_f: Complex64) -> Self {
        Self { amp_e, amp_f }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp_e.norm_sqr() + self.amp_f.norm_sqr()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() < 1e-12
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr();
        if n < 1e-300 {
            return Err(Error::DegenerateWeight { weight: n });
        }
        let s = 1.0 / n.sqrt();
        Ok(Self { amp_e: self.amp_e * s, amp_f: self.amp_f * s })
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &QubitState) -> Complex64 {
        self.amp_e.conj() * other.amp_e + self.amp_f.conj() * other.amp_f
    }

    pub fn to_vector(&self) -> nalgebra::Vector2<Complex64> {
        nalgebra::Vector2::new(self.amp_e, self.amp_f)
    }

    pub fn from_vector(v: &nalgebra::Vector2<Complex64>) -> Self {
        Self { amp_e: v[0], amp_f: v[1] }
    }

    /// `|ψ⟩⟨ψ|` restricted to the manifold; the norm carries over as manifold weight.
    pub fn block(&self) -> QubitBlock {
        QubitBlock {
            rho_ff: self.amp_f.norm_sqr(),
            rho_ee: self.amp_e.norm_sqr(),
            rho_ef: self.amp_e * self.amp_f.conj(),
        }
    }

    pub fn bloch(&self) -> Result<BlochVector> {
        bloch_from_block(&self.block()).map(|(b, _)| b)
    }
}

/// Qubit-manifold block of the three-level density matrix. `rho_ef = ⟨e|ρ|f⟩`;
/// `rho_fe` is its conjugate. Ground population is `1 − rho_ff − rho_ee`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitBlock {
    pub rho_ff: f64,
    pub rho_ee: f64,
    pub rho_ef: Complex64,
}

impl QubitBlock {
    pub fn new(rho_ff: f64, rho_ee: f64, rho_ef: Complex64) -> Self {
        Self { rho_ff, rho_ee, rho_ef }
    }

    pub fn weight(&self) -> f64 {
        self.rho_ff + self.rho_ee
    }

    /// Normalized f population `ρ_ff / (ρ_ff + ρ_ee)`.
    pub fn pfn(&self) -> f64 {
        self.rho_ff / self.weight()
    }

    /// Checks the block invariants at absolute tolerance `tol`.
    pub fn is_positive(&self, tol: f64) -> bool {
        self.rho_ff >= -tol
            && self.rho_ee >= -tol
            && self.weight() <= 1.0 + tol
            && self.rho_ef.norm_sqr() <= self.rho_ff * self.rho_ee + tol
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { rho_ff: self.rho_ff * s, rho_ee: self.rho_ee * s, rho_ef: self.rho_ef * s }
    }

    /// Real coordinates `(ρ_ff, ρ_ee, Re ρ_ef, Im ρ_ef)`.
    pub fn to_real(&self) -> [f64; 4] {
        [self.rho_ff, self.rho_ee, self.rho_ef.re, self.rho_ef.im]
    }

    pub fn from_real(v: &[f64]) -> Self {
        Self { rho_ff: v[0], rho_ee: v[1], rho_ef: Complex64::new(v[2], v[3]) }
    }

    /// Embeds the block in a 3×3 density matrix with the remaining weight on |g⟩.
    pub fn to_density(&self) -> Mat3 {
        let mut rho = Mat3::zeros();
        rho[(0, 0)] = Complex64::from(1.0 - self.weight());
        rho[(1, 1)] = Complex64::from(self.rho_ee);
        rho[(2, 2)] = Complex64::from(self.rho_ff);
        rho[(1, 2)] = self.rho_ef;
        rho[(2, 1)] = self.rho_ef.conj();
        rho
    }

    pub fn from_density(rho: &Mat3) -> Self {
        Self { rho_ff: rho[(2, 2)].re, rho_ee: rho[(1, 1)].re, rho_ef: rho[(1, 2)] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn length(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_valid(&self) -> bool {
        self.length().powi(2) <= 1.0 + 1e-9
    }

    /// Polar and azimuthal angles `(θ, φ)` with `φ ∈ (−π, π]`.
    pub fn angles(&self) -> (f64, f64) {
        let r = self.length();
        let theta = (self.z / r).clamp(-1.0, 1.0).acos();
        (theta, self.y.atan2(self.x))
    }
}

/// `cos(θ/2)|e⟩ + e^{iφ} sin(θ/2)|f⟩`.
pub fn state_from_angles(theta: f64, phi: f64) -> QubitState {
    let (s, c) = (0.5 * theta).sin_cos();
    QubitState { amp_e: Complex64::from(c), amp_f: Complex64::from_polar(s, phi) }
}

/// Inclusive linear range with `steps` samples; a single step yields `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinRange {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl LinRange {
    pub fn new(start: f64, stop: f64, steps: usize) -> Self {
        Self { start, stop, steps }
    }

    pub fn point(value: f64) -> Self {
        Self { start: value, stop: value, steps: 1 }
    }

    pub fn values(&self) -> Vec<f64> {
        match self.steps {
            0 => Vec::new(),
            1 => vec![self.start],
            n => {
                let h = (self.stop - self.start) / (n - 1) as f64;
                (0..n).map(|k| if k + 1 == n { self.stop } else { self.start + h * k as f64 }).collect()
            }
        }
    }
}

pub const WEIGHT_FLOOR: f64 = 1e-14;

/// Normalized Bloch vector of a block, plus the manifold weight it was normalized by.
pub fn bloch_from_block(block: &QubitBlock) -> Result<(BlochVector, f64)> {
    let w = block.weight();
    if !(w >= WEIGHT_FLOOR) {
        return Err(Error::DegenerateWeight { weight: w });
    }
    let b = BlochVector {
        x: 2.0 * block.rho_ef.re / w,
        y: -2.0 * block.rho_ef.im / w,
        z: (block.rho_ee - block.rho_ff) / w,
    };
    Ok((b, w))
}

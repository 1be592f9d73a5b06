//! Run configuration: JSON document, strict keys, validated before any work starts.

use std::path::Path;

use nhqubit::estimation::{Plane, QfiConvention};
use nhqubit::{LinRange, SystemParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const PARAM_NAMES: [&str; 5] = ["J", "Delta", "gamma_e", "gamma_f", "gamma_phi"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Eigs,
    Evolve,
    Transition,
    Eigenstates,
    Steadystate,
    Tomo,
    Qfi,
    Traj,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Eigs => "eigs",
            Experiment::Evolve => "evolve",
            Experiment::Transition => "transition",
            Experiment::Eigenstates => "eigenstates",
            Experiment::Steadystate => "steadystate",
            Experiment::Tomo => "tomo",
            Experiment::Qfi => "qfi",
            Experiment::Traj => "traj",
        }
    }

    /// Parameters this experiment may sweep; `None` forbids sweeps.
    fn sweepable(self) -> Option<&'static [&'static str]> {
        match self {
            Experiment::Eigs | Experiment::Steadystate => Some(&["Delta", "J"]),
            Experiment::Transition | Experiment::Tomo | Experiment::Qfi => Some(&PARAM_NAMES),
            Experiment::Evolve | Experiment::Eigenstates | Experiment::Traj => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub param: String,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl Sweep {
    pub fn range(&self) -> LinRange {
        LinRange::new(self.start, self.stop, self.steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_max: f64,
    pub n_points: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { t_max: 2.0, n_points: 101 }
    }
}

impl TimeGrid {
    pub fn times(&self) -> Vec<f64> {
        LinRange::new(0.0, self.t_max, self.n_points).values()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub shots: u64,
    pub assignment_error: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { n_traj: 10_000, shots: 2_000, assignment_error: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pure,
    #[default]
    Block,
    Lindblad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Exact,
    Trajectories,
}

/// Bloch angles of the prepared state: `cos(θ/2)|e⟩ + e^{iφ} sin(θ/2)|f⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Angles {
    pub theta: f64,
    #[serde(default)]
    pub phi: f64,
}

impl Default for Angles {
    fn default() -> Self {
        Self { theta: std::f64::consts::PI, phi: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    pub initial: Angles,
    pub method: Method,
    pub source: Source,
    pub plane: Plane,
    pub t_probe: f64,
    pub angles: Option<LinRange>,
    pub t_eval: f64,
    pub qfi_time: Option<f64>,
    pub qfi_convention: QfiConvention,
    pub dj: Option<f64>,
    pub strict: bool,
    pub jump_log: bool,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            initial: Angles::default(),
            method: Method::default(),
            source: Source::default(),
            plane: Plane::YzPolar,
            t_probe: 0.5,
            angles: None,
            t_eval: nhqubit::evolution::DEFAULT_T_EVAL,
            qfi_time: None,
            qfi_convention: QfiConvention::default(),
            dj: None,
            strict: false,
            jump_log: false,
        }
    }
}

impl Options {
    pub fn angle_grid(&self) -> LinRange {
        self.angles.unwrap_or(match self.plane {
            Plane::YzPolar => LinRange::new(0.0, std::f64::consts::PI, 64),
            Plane::XyAzimuthal => {
                let n = 64;
                LinRange::new(0.0, 2.0 * std::f64::consts::PI * (n - 1) as f64 / n as f64, n)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub params: SystemParams,
    #[serde(default)]
    pub sweep: Vec<Sweep>,
    #[serde(default)]
    pub time: TimeGrid,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub options: Options,
}

pub const CONFIG_HELP: &str = "\
Config file (JSON, unknown keys rejected):
  experiment      eigs | evolve | transition | eigenstates | steadystate | tomo | qfi | traj
  params          {J, gamma_e, Delta = 0, gamma_f = 0, gamma_phi = 0}   rates in 1/us
  sweep           [{param, start, stop, steps}]   default []
                    eigs, steadystate: Delta and J (Delta-major grid)
                    transition, tomo, qfi: any parameter (cartesian product, first sweep outermost)
  time            {t_max = 2, n_points = 101}   samples on [0, t_max]
  ensemble        {n_traj = 10000, shots = 2000, assignment_error = 0}
  master_seed     0
  output_dir      \"out\"   (--out takes precedence)
  options
    initial         {theta = pi, phi = 0}   prepared state, default |f>
    method          block | pure | lindblad   (evolve; default block)
    source          exact | trajectories      (transition; default exact)
    plane           YZ_polar | XY_azimuthal   (eigenstates; default YZ_polar)
    t_probe         0.5
    angles          {start, stop, steps}      default [0, pi] x 64 or [0, 2pi) x 64
    t_eval          4                         (steadystate)
    qfi_time        first time P^n_f = 1/2, capped at t_max, unless set
    qfi_convention  printed | bures           (default printed)
    dj              1e-3 * J
    strict          false                     (traj: keep only jump-free trajectories)
    jump_log        false                     (traj: write jumps.jsonl)
";

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn err<T>(key: &str, msg: impl std::fmt::Display) -> Result<T, ConfigError> {
    Err(ConfigError(format!("{key}: {msg}")))
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
        let line = text.lines().nth(e.line().saturating_sub(1)).unwrap_or("").trim();
        ConfigError(format!("{}:{}:{}: {e}\n    {line}", path.display(), e.line(), e.column()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn set_param(p: &mut SystemParams, name: &str, v: f64) {
    match name {
        "J" => p.j = v,
        "Delta" => p.delta = v,
        "gamma_e" => p.gamma_e = v,
        "gamma_f" => p.gamma_f = v,
        "gamma_phi" => p.gamma_phi = v,
        _ => unreachable!("validated parameter name"),
    }
}

fn check_params(key: &str, p: &SystemParams) -> Result<(), ConfigError> {
    if let Err(e) = p.validate() {
        return err(key, e);
    }
    if p.gamma_f > p.gamma_e {
        return err(key, format!("gamma_f = {} exceeds gamma_e = {}", p.gamma_f, p.gamma_e));
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_params("params", &self.params)?;

        let mut seen = Vec::new();
        for (k, s) in self.sweep.iter().enumerate() {
            let key = format!("sweep[{k}]");
            if !PARAM_NAMES.contains(&s.param.as_str()) {
                return err(&format!("{key}.param"), format!("unknown parameter {:?}, expected one of {PARAM_NAMES:?}", s.param));
            }
            match self.experiment.sweepable() {
                None => return err(&key, format!("experiment {} takes no sweeps", self.experiment.name())),
                Some(ok) if !ok.contains(&s.param.as_str()) => {
                    return err(&format!("{key}.param"), format!("experiment {} can only sweep {ok:?}", self.experiment.name()))
                }
                _ => {}
            }
            if seen.contains(&s.param) {
                return err(&format!("{key}.param"), format!("{} is swept twice", s.param));
            }
            seen.push(s.param.clone());
            if s.steps < 1 {
                return err(&format!("{key}.steps"), "must be at least 1");
            }
            if !s.start.is_finite() || !s.stop.is_finite() {
                return err(&key, "start and stop must be finite");
            }
        }
        for (k, p) in self.points().iter().enumerate() {
            check_params(&format!("sweep point {k}"), p)?;
        }

        if !(self.time.t_max > 0.0) || !self.time.t_max.is_finite() {
            return err("time.t_max", "must be positive and finite");
        }
        if self.time.n_points < 1 {
            return err("time.n_points", "must be at least 1");
        }
        if self.ensemble.n_traj < 1 {
            return err("ensemble.n_traj", "must be at least 1");
        }
        if self.ensemble.shots < 1 {
            return err("ensemble.shots", "must be at least 1");
        }
        if !(0.0..0.5).contains(&self.ensemble.assignment_error) {
            return err("ensemble.assignment_error", "must lie in [0, 0.5)");
        }

        let o = &self.options;
        if !o.initial.theta.is_finite() || !o.initial.phi.is_finite() {
            return err("options.initial", "angles must be finite");
        }
        if !(o.t_probe > 0.0) {
            return err("options.t_probe", "must be positive");
        }
        if let Some(a) = o.angles {
            if a.steps < 16 || !(a.stop > a.start) {
                return err("options.angles", "needs stop > start and at least 16 steps");
            }
        }
        if !(o.t_eval > 0.0) {
            return err("options.t_eval", "must be positive");
        }
        if let Some(t) = o.qfi_time {
            if !(t >= 0.0) {
                return err("options.qfi_time", "must be non-negative");
            }
        }
        if let Some(d) = o.dj {
            if !(d > 0.0) {
                return err("options.dj", "must be positive");
            }
        }
        if self.experiment == Experiment::Evolve && o.method == Method::Pure && (self.params.gamma_f != 0.0 || self.params.gamma_phi != 0.0)
        {
            return err("options.method", "pure evolution needs gamma_f = 0 and gamma_phi = 0");
        }
        if self.experiment == Experiment::Transition {
            if self.time.n_points < 8 {
                return err("time.n_points", "oscillation fits need at least 8 samples");
            }
            if !self.sweep.iter().any(|s| s.param == "J") {
                return err("sweep", "transition needs a J sweep");
            }
        }
        Ok(())
    }

    /// Parameter sets of the sweep product, first sweep outermost.
    pub fn points(&self) -> Vec<SystemParams> {
        let mut out = vec![self.params];
        for s in &self.sweep {
            if !PARAM_NAMES.contains(&s.param.as_str()) {
                continue;
            }
            let vals = s.range().values();
            out = out.iter().flat_map(|p| vals.iter().map(move |&v| (p, v))).map(|(p, v)| {
                let mut q = *p;
                set_param(&mut q, &s.param, v);
                q
            }).collect();
        }
        out
    }

    pub fn range_of(&self, name: &str, fallback: f64) -> LinRange {
        self.sweep.iter().find(|s| s.param == name).map(Sweep::range).unwrap_or(LinRange::point(fallback))
    }

    /// SHA-256 of the canonical JSON echo, without the output directory.
    pub fn sha256(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig, ConfigError> {
        let c: RunConfig = serde_json::from_str(s).map_err(|e| ConfigError(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(r#"{"experiment":"eigs","params":{"J":1,"gamma_e":4}}"#).unwrap();
        assert_eq!(c.params.delta, 0.0);
        assert_eq!(c.params.gamma_f, 0.0);
        assert_eq!(c.params.gamma_phi, 0.0);
        assert_eq!(c.points().len(), 1);
    }

    #[test]
    fn hierarchy_and_keys() {
        let e = parse(r#"{"experiment":"eigs","params":{"J":1,"gamma_e":1,"gamma_f":2}}"#).unwrap_err();
        assert!(e.0.starts_with("params:"), "{e}");
        let e = parse(r#"{"experiment":"eigs","params":{"J":1,"gamma_e":4},"bogus":1}"#).unwrap_err();
        assert!(e.0.contains("unknown field `bogus`") && e.0.contains("experiment"), "{e}");
        let e = parse(r#"{"experiment":"eigs","params":{"J":1,"gamma_e":4},"sweep":[{"param":"K","start":0,"stop":1,"steps":2}]}"#)
            .unwrap_err();
        assert!(e.0.starts_with("sweep[0].param"), "{e}");
        let e = parse(r#"{"experiment":"eigs","params":{"J":1,"gamma_e":4},"sweep":[{"param":"J","start":0,"stop":1,"steps":0}]}"#)
            .unwrap_err();
        assert!(e.0.starts_with("sweep[0].steps"), "{e}");
        let e = parse(r#"{"experiment":"evolve","params":{"J":1,"gamma_e":4},"time":{"t_max":0,"n_points":3}}"#).unwrap_err();
        assert!(e.0.starts_with("time.t_max"), "{e}");
    }

    #[test]
    fn sweep_points_hit_the_hierarchy_rule() {
        let e = parse(
            r#"{"experiment":"qfi","params":{"J":1,"gamma_e":1},"sweep":[{"param":"gamma_f","start":0,"stop":2,"steps":3}]}"#,
        )
        .unwrap_err();
        assert!(e.0.starts_with("sweep point 2"), "{e}");
    }

    #[test]
    fn product_order_and_hash() {
        let c = parse(
            r#"{"experiment":"qfi","params":{"J":1,"gamma_e":4},
                "sweep":[{"param":"Delta","start":0,"stop":1,"steps":2},{"param":"J","start":1,"stop":3,"steps":3}]}"#,
        )
        .unwrap();
        let pts: Vec<(f64, f64)> = c.points().iter().map(|p| (p.delta, p.j)).collect();
        assert_eq!(pts, vec![(0.0, 1.0), (0.0, 2.0), (0.0, 3.0), (1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]);
        let mut d = c.clone();
        d.output_dir = Some("elsewhere".into());
        assert_eq!(c.sha256(), d.sha256());
        d.master_seed = 9;
        assert_ne!(c.sha256(), d.sha256());
    }
}

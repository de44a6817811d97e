//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Angles may be written as
//! multiples of pi (`0.7pi`). Serialisation writes every key with full
//! round-trip precision, so a written file reproduces the same run.

use crate::adjoint::AdjointOptions;
use crate::forces::{Control, ForceParams};
use crate::optimize::{CostWeights, CostateQuadrature, LineSearchConfig};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?}: cannot parse {value:?}")]
    BadValue { key: String, value: String },
    #[error("unknown preset {0:?} (expected paper, desk, p1, p2, p3, desk-p1, desk-p2, desk-p3)")]
    UnknownPreset(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_particles: usize,
    pub dt: f64,
    pub steps: usize,
    pub params: ForceParams,
    pub weights: CostWeights,
    pub eps_stop: f64,
    pub seed_data: u64,
    pub seed_init: u64,
    pub u0: Control,
    pub u_data: Control,
    pub output_dir: PathBuf,
    pub export_stride: usize,
    pub line_search: LineSearchConfig,
    pub max_iterations: usize,
    pub adjoint: AdjointOptions,
    pub quadrature: CostateQuadrature,
}

impl Default for ExperimentConfig {
    /// Paper-scale run of the first identification problem.
    fn default() -> Self {
        Self {
            n_particles: 1200,
            dt: 2.0,
            steps: 5000,
            params: ForceParams::default(),
            weights: CostWeights::default(),
            eps_stop: 0.05,
            seed_data: 1,
            seed_init: 2,
            u0: Control::new(0.3 * PI, 0.98),
            u_data: Control::new(0.7 * PI, 1.0),
            output_dir: PathBuf::from("out"),
            export_stride: 500,
            line_search: LineSearchConfig::default(),
            max_iterations: 50,
            adjoint: AdjointOptions::default(),
            quadrature: CostateQuadrature::default(),
        }
    }
}

impl ExperimentConfig {
    /// Named presets. `paper`/`p1..p3` are paper scale (`N = 1200`, 5000
    /// steps); the `desk` variants use `N = 200`, 2500 steps.
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let paper = Self::default();
        let desk = Self { n_particles: 200, steps: 2500, export_stride: 250, ..Self::default() };
        let p2 = |c: Self| Self { u0: Control::new(0.8 * PI, 0.98), u_data: Control::new(0.3 * PI, 0.9), ..c };
        let p3 = |c: Self| Self { u0: Control::new(0.0, 0.98), u_data: Control::new(0.5 * PI, 0.95), ..c };
        Ok(match name {
            "paper" | "p1" => paper,
            "p2" => p2(paper),
            "p3" => p3(paper),
            "desk" | "desk-p1" => desk,
            "desk-p2" => p2(desk),
            "desk-p3" => p3(desk),
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.n_particles == 0 {
            return Err(ConfigError::Invalid("n_particles must be at least 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ConfigError::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.eps_stop.is_nan() || self.eps_stop <= 0.0 {
            return Err(ConfigError::Invalid("eps_stop must be positive".into()));
        }
        if !(self.u0.is_finite() && self.u_data.is_finite()) {
            return Err(ConfigError::Invalid("controls must be finite".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: k + 1 })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue { key: key.to_string(), value: value.to_string() };
        let f = || parse_real(value).ok_or_else(bad);
        let n = || value.parse::<usize>().map_err(|_| bad());
        let s = || value.parse::<u64>().map_err(|_| bad());
        match key {
            "n_particles" => self.n_particles = n()?,
            "dt" => self.dt = f()?,
            "steps" => self.steps = n()?,
            "alpha" => self.params.alpha = f()?,
            "beta" => self.params.beta = f()?,
            "gamma" => self.params.gamma = f()?,
            "e_r" => self.params.e_r = f()?,
            "e_a" => self.params.e_a = f()?,
            "chi" => self.params.chi = f()?,
            "eta_min" => self.params.eta_min = f()?,
            "eta_max" => self.params.eta_max = f()?,
            "lambda_theta" => self.weights.lambda_theta = f()?,
            "lambda_eta" => self.weights.lambda_eta = f()?,
            "theta_ref" => self.weights.theta_ref = f()?,
            "eta_ref" => self.weights.eta_ref = f()?,
            "eps_stop" => self.eps_stop = f()?,
            "seed_data" => self.seed_data = s()?,
            "seed_init" => self.seed_init = s()?,
            "theta0" => self.u0.theta = f()?,
            "eta0" => self.u0.eta = f()?,
            "theta_data" => self.u_data.theta = f()?,
            "eta_data" => self.u_data.eta = f()?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "export_stride" => self.export_stride = n()?,
            "ls_c" => self.line_search.c = f()?,
            "ls_shrink" => self.line_search.shrink = f()?,
            "ls_tau0" => self.line_search.tau0 = f()?,
            "ls_max_backtracks" => self.line_search.max_backtracks = n()?,
            "max_iterations" => self.max_iterations = n()?,
            "adjoint_orientation" => self.adjoint.orientation = value.parse().map_err(|_| bad())?,
            "adjoint_scheme" => self.adjoint.scheme = value.parse().map_err(|_| bad())?,
            "adjoint_tolerance" => self.adjoint.tolerance = f()?,
            "adjoint_max_iterations" => self.adjoint.max_iterations = n()?,
            "gradient_quadrature" => self.quadrature = value.parse().map_err(|_| bad())?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Every key, in a stable order, with round-trip float formatting.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n_particles", self.n_particles.to_string()),
            ("dt", self.dt.to_string()),
            ("steps", self.steps.to_string()),
            ("alpha", self.params.alpha.to_string()),
            ("beta", self.params.beta.to_string()),
            ("gamma", self.params.gamma.to_string()),
            ("e_r", self.params.e_r.to_string()),
            ("e_a", self.params.e_a.to_string()),
            ("chi", self.params.chi.to_string()),
            ("eta_min", self.params.eta_min.to_string()),
            ("eta_max", self.params.eta_max.to_string()),
            ("lambda_theta", self.weights.lambda_theta.to_string()),
            ("lambda_eta", self.weights.lambda_eta.to_string()),
            ("theta_ref", self.weights.theta_ref.to_string()),
            ("eta_ref", self.weights.eta_ref.to_string()),
            ("eps_stop", self.eps_stop.to_string()),
            ("seed_data", self.seed_data.to_string()),
            ("seed_init", self.seed_init.to_string()),
            ("theta0", self.u0.theta.to_string()),
            ("eta0", self.u0.eta.to_string()),
            ("theta_data", self.u_data.theta.to_string()),
            ("eta_data", self.u_data.eta.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("export_stride", self.export_stride.to_string()),
            ("ls_c", self.line_search.c.to_string()),
            ("ls_shrink", self.line_search.shrink.to_string()),
            ("ls_tau0", self.line_search.tau0.to_string()),
            ("ls_max_backtracks", self.line_search.max_backtracks.to_string()),
            ("max_iterations", self.max_iterations.to_string()),
            ("adjoint_orientation", self.adjoint.orientation.to_string()),
            ("adjoint_scheme", self.adjoint.scheme.to_string()),
            ("adjoint_tolerance", self.adjoint.tolerance.to_string()),
            ("adjoint_max_iterations", self.adjoint.max_iterations.to_string()),
            ("gradient_quadrature", self.quadrature.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Parses a real number, optionally written as a multiple of pi
/// (`pi`, `-0.5pi`, `0.7*pi`).
pub fn parse_real(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Some(head) = s.strip_suffix("pi") {
        let head = head.trim().trim_end_matches('*').trim();
        let factor = match head {
            "" | "+" => 1.0,
            "-" => -1.0,
            h => h.parse::<f64>().ok()?,
        };
        return Some(factor * PI);
    }
    s.parse::<f64>().ok()
}

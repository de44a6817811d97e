//! Identification runs, gradient validation and the convergence-in-N study.

use super::config::{ConfigError, ExperimentConfig};
use super::data::{generate_artificial_data, uniform_positions};
use super::plots;
use crate::dynamics::{max_speed, simulate_final, DynamicsError, ParticleState};
use crate::forces::Control;
use crate::optimize::{
    evaluate_with_gradient, optimize_with_observer, reduced_cost, write_history_csv, Gradient, IterationRecord,
    OptimizeConfig, OptimizeError, OptimizeResult,
};
use crate::par;
use crate::transport::w2_squared;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// `d` reduced modulo pi into `[-pi/2, pi/2)`.
pub fn angle_mod_pi(d: f64) -> f64 {
    let r = d - PI * (d / PI + 0.5).floor();
    if r >= 0.5 * PI {
        r - PI
    } else {
        r
    }
}

/// Euclidean control error with the angle compared modulo pi.
pub fn control_error(u: Control, reference: Control) -> f64 {
    angle_mod_pi(u.theta - reference.theta).hypot(u.eta - reference.eta)
}

pub fn optimize_config(cfg: &ExperimentConfig, initial: ParticleState, desired: ParticleState) -> OptimizeConfig {
    OptimizeConfig {
        params: cfg.params,
        weights: cfg.weights,
        dt: cfg.dt,
        steps: cfg.steps,
        initial,
        desired,
        u0: cfg.u0,
        eps_stop: cfg.eps_stop,
        max_iterations: cfg.max_iterations,
        line_search: cfg.line_search,
        adjoint: cfg.adjoint,
        quadrature: cfg.quadrature,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timings {
    pub data_s: f64,
    pub optimize_s: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub result: OptimizeResult,
    pub initial: ParticleState,
    pub desired: ParticleState,
    /// Final state reached from the starting control.
    pub start_final: ParticleState,
    pub timings: Timings,
    /// Largest particle speed at the final time under the optimised control.
    pub final_max_speed: f64,
    pub final_w2_squared: f64,
}

impl ExperimentReport {
    pub fn theta_error_raw(&self) -> f64 {
        self.result.control.theta - self.config.u_data.theta
    }

    pub fn theta_error_mod_pi(&self) -> f64 {
        angle_mod_pi(self.theta_error_raw())
    }

    pub fn eta_error(&self) -> f64 {
        self.result.control.eta - self.config.u_data.eta
    }

    /// Config echo followed by results, in the same `key = value` format.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# configuration\n");
        out.push_str(&self.config.to_text());
        let r = &self.result;
        let c = r.final_cost();
        let _ = writeln!(out, "# results");
        let _ = writeln!(out, "# theta_opt = {}", r.control.theta);
        let _ = writeln!(out, "# theta_opt_over_pi = {}", r.control.theta / PI);
        let _ = writeln!(out, "# eta_opt = {}", r.control.eta);
        let _ = writeln!(out, "# theta_error_raw = {}", self.theta_error_raw());
        let _ = writeln!(out, "# theta_error_mod_pi = {}", self.theta_error_mod_pi());
        let _ = writeln!(out, "# eta_error = {}", self.eta_error());
        let _ = writeln!(out, "# iterations = {}", r.iterations);
        let _ = writeln!(out, "# converged = {}", r.converged);
        let _ = writeln!(out, "# stalled = {}", r.stalled);
        let _ = writeln!(out, "# j1 = {}", c.j1);
        let _ = writeln!(out, "# j2 = {}", c.j2);
        let _ = writeln!(out, "# j3 = {}", c.j3);
        let _ = writeln!(out, "# total = {}", c.total);
        let _ = writeln!(out, "# final_w2_squared = {}", self.final_w2_squared);
        let _ = writeln!(out, "# final_max_speed = {}", self.final_max_speed);
        let _ = writeln!(out, "# time_data_s = {:.3}", self.timings.data_s);
        let _ = writeln!(out, "# time_optimize_s = {:.3}", self.timings.optimize_s);
        out
    }
}

/// Generates the data, runs the optimisation and collects diagnostics
/// without touching the filesystem.
pub fn run_identification(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    run_identification_with(cfg, |_| {})
}

fn run_identification_with<O: FnMut(&IterationRecord)>(
    cfg: &ExperimentConfig,
    observe: O,
) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let t0 = Instant::now();
    let desired = generate_artificial_data(cfg.seed_data, cfg.u_data, cfg)?;
    let initial = uniform_positions(cfg.n_particles, cfg.seed_init)?;
    let data_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let ocfg = optimize_config(cfg, initial.clone(), desired.clone());
    let result = optimize_with_observer(&ocfg, observe)?;
    let optimize_s = t1.elapsed().as_secs_f64();

    let start_final = simulate_final(&initial, ocfg.u0, &cfg.params, cfg.dt, cfg.steps)?;
    let final_max_speed = max_speed(&result.final_state, result.control, &cfg.params);
    let final_w2_squared = w2_squared(&result.final_state, &desired).map_err(OptimizeError::from)?;
    Ok(ExperimentReport {
        config: cfg.clone(),
        result,
        initial,
        desired,
        start_final,
        timings: Timings { data_s, optimize_s },
        final_max_speed,
        final_w2_squared,
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, HarnessError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Runs an identification and writes all outputs into `cfg.output_dir`:
/// `config.txt`, `positions_desired.csv`, `positions_initial.csv`,
/// `positions_start_final.csv`, `positions_final.csv`, `cost_history.csv`,
/// `report.txt` and the plots. The cost history is rewritten after every
/// iteration, so it survives a run that fails part-way.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    run_experiment_with(cfg, |_| {})
}

/// As [`run_experiment`], calling `observe` after every recorded iteration.
pub fn run_experiment_with<O: FnMut(&IterationRecord)>(
    cfg: &ExperimentConfig,
    mut observe: O,
) -> Result<ExperimentReport, HarnessError> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    let history_path = dir.join("cost_history.csv");
    let mut history = Vec::new();
    let mut write_error = None;
    let outcome = run_identification_with(cfg, |r| {
        history.push(*r);
        if write_error.is_none() {
            let written = File::create(&history_path)
                .map_err(HarnessError::from)
                .and_then(|f| write_history_csv(BufWriter::new(f), &history).map_err(HarnessError::from));
            write_error = written.err();
        }
        observe(r);
    });
    let report = outcome?;
    if let Some(e) = write_error {
        return Err(e);
    }
    crate::io::write_state_csv(create(&dir, "positions_initial.csv")?, &report.initial)?;
    crate::io::write_state_csv(create(&dir, "positions_start_final.csv")?, &report.start_final)?;
    plots::emit_plots(&dir, &report.desired, &report.result.final_state, &report.result.history)?;
    fs::write(dir.join("report.txt"), report.to_text())?;
    Ok(report)
}

/// One finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheckRow {
    pub control: Control,
    pub step: f64,
    pub adjoint: Gradient,
    pub finite_difference: Gradient,
    pub rel_theta: f64,
    pub rel_eta: f64,
}

impl GradientCheckRow {
    pub fn worst(&self) -> f64 {
        self.rel_theta.max(self.rel_eta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    pub rows: Vec<GradientCheckRow>,
}

impl GradientCheckReport {
    pub fn worst(&self) -> f64 {
        self.rows.iter().map(GradientCheckRow::worst).fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theta", "eta", "step", "adj_theta", "adj_eta", "fd_theta", "fd_eta", "rel_theta", "rel_eta"])?;
        for r in &self.rows {
            w.write_record([
                r.control.theta.to_string(),
                r.control.eta.to_string(),
                r.step.to_string(),
                r.adjoint.theta.to_string(),
                r.adjoint.eta.to_string(),
                r.finite_difference.theta.to_string(),
                r.finite_difference.eta.to_string(),
                r.rel_theta.to_string(),
                r.rel_eta.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `count` controls with `theta` uniform in `[0, pi)` and `eta` uniform in
/// the interior `[eta_min + margin, eta_max - margin]`.
pub fn sample_interior_controls(count: usize, seed: u64, cfg: &ExperimentConfig, margin: f64) -> Vec<Control> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (cfg.params.eta_min + margin, cfg.params.eta_max - margin);
    (0..count)
        .map(|_| {
            let t: f64 = rng.random();
            let e: f64 = rng.random();
            Control::new(PI * t, lo + (hi - lo) * e)
        })
        .collect()
}

fn relative(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Adjoint gradient versus central differences of the reduced cost at each
/// control and finite-difference step.
pub fn validate_gradient(
    cfg: &ExperimentConfig,
    controls: &[Control],
    steps: &[f64],
) -> Result<GradientCheckReport, HarnessError> {
    cfg.validate()?;
    let desired = generate_artificial_data(cfg.seed_data, cfg.u_data, cfg)?;
    let initial = uniform_positions(cfg.n_particles, cfg.seed_init)?;
    let ocfg = optimize_config(cfg, initial, desired);
    let f = |u: Control| -> Result<f64, HarnessError> { Ok(reduced_cost(&ocfg, u)?.0.total) };
    let mut rows = Vec::new();
    for &u in controls {
        let adjoint = evaluate_with_gradient(&ocfg, u)?.gradient;
        for &h in steps {
            let fd_theta = (f(Control::new(u.theta + h, u.eta))? - f(Control::new(u.theta - h, u.eta))?) / (2.0 * h);
            let fd_eta = (f(Control::new(u.theta, u.eta + h))? - f(Control::new(u.theta, u.eta - h))?) / (2.0 * h);
            rows.push(GradientCheckRow {
                control: u,
                step: h,
                adjoint,
                finite_difference: Gradient { theta: fd_theta, eta: fd_eta },
                rel_theta: relative(adjoint.theta, fd_theta),
                rel_eta: relative(adjoint.eta, fd_eta),
            });
        }
    }
    Ok(GradientCheckReport { rows })
}

/// Result of one identification inside the convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRun {
    pub n_particles: usize,
    pub seed_index: usize,
    pub seed_data: u64,
    pub seed_init: u64,
    pub control: Control,
    pub error: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub n_particles: usize,
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub runs: Vec<StudyRun>,
    pub rows: Vec<StudyRow>,
}

impl ConvergenceReport {
    pub fn medians(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.median).collect()
    }

    pub fn write_runs_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "n",
            "seed_index",
            "seed_data",
            "seed_init",
            "theta",
            "eta",
            "error",
            "iterations",
            "converged",
        ])?;
        for r in &self.runs {
            w.write_record([
                r.n_particles.to_string(),
                r.seed_index.to_string(),
                r.seed_data.to_string(),
                r.seed_init.to_string(),
                r.control.theta.to_string(),
                r.control.eta.to_string(),
                r.error.to_string(),
                r.iterations.to_string(),
                r.converged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "median", "mean", "min", "max"])?;
        for r in &self.rows {
            w.write_record([
                r.n_particles.to_string(),
                r.median.to_string(),
                r.mean.to_string(),
                r.min.to_string(),
                r.max.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Seeds of run `s`: data and initial samples are offset so that every
/// `(N, s)` job is independent.
pub fn study_seeds(cfg: &ExperimentConfig, s: usize) -> (u64, u64) {
    let off = 1000 * s as u64;
    (cfg.seed_data + off, cfg.seed_init + off)
}

/// Runs the identification for every `N` in `n_list` and `n_seeds` seed pairs,
/// reporting the control error `|u^N - u_data|` (angle modulo pi) per `N`.
pub fn convergence_study(
    cfg: &ExperimentConfig,
    n_list: &[usize],
    n_seeds: usize,
) -> Result<ConvergenceReport, HarnessError> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ConfigError::Invalid("n_list must be strictly ascending".into()).into());
    }
    let jobs: Vec<(usize, usize)> = n_list.iter().flat_map(|&n| (0..n_seeds).map(move |s| (n, s))).collect();
    let outcomes = par::map_jobs(jobs, |(n, s)| -> Result<StudyRun, HarnessError> {
        let (seed_data, seed_init) = study_seeds(cfg, s);
        let run_cfg = ExperimentConfig { n_particles: n, seed_data, seed_init, ..cfg.clone() };
        let rep = run_identification(&run_cfg)?;
        Ok(StudyRun {
            n_particles: n,
            seed_index: s,
            seed_data,
            seed_init,
            control: rep.result.control,
            error: control_error(rep.result.control, cfg.u_data),
            iterations: rep.result.iterations,
            converged: rep.result.converged,
        })
    });
    let runs = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    let rows = n_list
        .iter()
        .map(|&n| {
            let errs: Vec<f64> = runs.iter().filter(|r| r.n_particles == n).map(|r| r.error).collect();
            StudyRow {
                n_particles: n,
                median: median(&errs),
                mean: errs.iter().sum::<f64>() / errs.len().max(1) as f64,
                min: errs.iter().copied().fold(f64::INFINITY, f64::min),
                max: errs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    Ok(ConvergenceReport { runs, rows })
}

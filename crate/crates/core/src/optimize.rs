//! Discrete cost functional, adjoint-based reduced gradient, and projected
//! gradient descent with Armijo backtracking.

use crate::adjoint::{solve_adjoint, terminal_condition_with_plan, AdjointError, AdjointOptions, AdjointTrajectory};
use crate::dynamics::{simulate, simulate_final, DynamicsError, ParticleState, Trajectory};
use crate::forces::{Control, Displacement, ForceKernel, ForceParams, Vec2};
use crate::par;
use crate::transport::{optimal_plan, TransportError};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Adjoint(#[from] AdjointError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Regularisation weights and reference control of the cost functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub lambda_theta: f64,
    pub lambda_eta: f64,
    pub theta_ref: f64,
    pub eta_ref: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { lambda_theta: 1e-5, lambda_eta: 1e-3, theta_ref: 0.5 * PI, eta_ref: 1.0 }
    }
}

/// `J = J1 + J2 + J3` with `J1 = (N/2) W2^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub total: f64,
}

pub fn evaluate_cost(
    final_state: &ParticleState,
    desired: &ParticleState,
    u: Control,
    w: &CostWeights,
) -> Result<CostBreakdown, TransportError> {
    let plan = optimal_plan(final_state, desired)?;
    Ok(breakdown(plan.total_cost, u, w))
}

fn breakdown(total_transport_cost: f64, u: Control, w: &CostWeights) -> CostBreakdown {
    // (N/2) * (total / N)
    let j1 = 0.5 * total_transport_cost;
    let j2 = 0.5 * w.lambda_theta * (u.theta - w.theta_ref).powi(2);
    let j3 = 0.5 * w.lambda_eta * (u.eta - w.eta_ref).powi(2);
    CostBreakdown { j1, j2, j3, total: j1 + j2 + j3 }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gradient {
    pub theta: f64,
    pub eta: f64,
}

impl Gradient {
    pub fn l1_norm(&self) -> f64 {
        self.theta.abs() + self.eta.abs()
    }

    pub fn norm_squared(&self) -> f64 {
        self.theta * self.theta + self.eta * self.eta
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.eta.is_finite()
    }
}

/// Which costate snapshot is paired with the positions at `t_k` in the
/// time integral of the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostateQuadrature {
    /// `xi(t_k)` with `x(t_k)`: left-endpoint rectangle rule.
    LeftEndpoint,
    /// `xi(t_{k+1})` with `x(t_k)`: the pairing of the exact discrete adjoint
    /// of the explicit Euler forward map. Agrees with finite differences of
    /// the discrete cost to `O(dt^2)` per step instead of `O(dt)`.
    #[default]
    Staggered,
}

impl std::str::FromStr for CostateQuadrature {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" | "left_endpoint" => Ok(Self::LeftEndpoint),
            "staggered" => Ok(Self::Staggered),
            other => Err(format!("unknown quadrature {other:?}")),
        }
    }
}

impl std::fmt::Display for CostateQuadrature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::LeftEndpoint => "left_endpoint",
            Self::Staggered => "staggered",
        })
    }
}

/// Regularisation part of the gradient, `(lambda_1 (theta - theta_ref), lambda_2 (eta - eta_ref))`.
pub fn regularization_gradient(u: Control, w: &CostWeights) -> Gradient {
    Gradient { theta: w.lambda_theta * (u.theta - w.theta_ref), eta: w.lambda_eta * (u.eta - w.eta_ref) }
}

/// `sum_i sum_j grad_u F(x_i - x_j, u) . xi_i` at one time level.
fn interaction_term(kernel: &ForceKernel, x: &[Vec2], xi: &[Vec2]) -> Gradient {
    let n = x.len();
    // grad_u F is odd in the displacement, so pairs combine as (xi_i - xi_j)
    let rows = par::map_indices(n, |i| {
        let mut acc = Gradient { theta: 0.0, eta: 0.0 };
        for j in (i + 1)..n {
            let d = Displacement::wrap_unchecked(x[i] - x[j]).vector();
            let g = kernel.grad_control(d);
            let diff = xi[i] - xi[j];
            acc.theta += g.theta.dot(&diff);
            acc.eta += g.eta.dot(&diff);
        }
        acc
    });
    rows.iter()
        .fold(Gradient { theta: 0.0, eta: 0.0 }, |a, r| Gradient { theta: a.theta + r.theta, eta: a.eta + r.eta })
}

/// Reduced gradient
/// `g = grad(J2 + J3) - (1/N^2) sum_k dt sum_i sum_j grad_u F(x_i(t_k) - x_j(t_k), u) . xi_i`.
pub fn reduced_gradient(
    traj: &Trajectory,
    adj: &AdjointTrajectory,
    u: Control,
    p: &ForceParams,
    w: &CostWeights,
    rule: CostateQuadrature,
) -> Result<Gradient, OptimizeError> {
    if adj.states.len() != traj.states().len() {
        return Err(OptimizeError::InvalidConfig(format!(
            "adjoint grid has {} levels, forward grid {}",
            adj.states.len(),
            traj.states().len()
        )));
    }
    let n = traj.n_particles();
    let kernel = ForceKernel::new(u, p);
    let mut integral = Gradient { theta: 0.0, eta: 0.0 };
    for k in 0..traj.steps() {
        let xi = match rule {
            CostateQuadrature::LeftEndpoint => &adj.states[k].costates,
            CostateQuadrature::Staggered => &adj.states[k + 1].costates,
        };
        if xi.iter().all(|v| *v == Vec2::zeros()) {
            continue;
        }
        let term = interaction_term(&kernel, traj.states()[k].positions(), xi);
        integral.theta += traj.dt() * term.theta;
        integral.eta += traj.dt() * term.eta;
    }
    let scale = 1.0 / (n as f64 * n as f64);
    let reg = regularization_gradient(u, w);
    Ok(Gradient { theta: reg.theta - scale * integral.theta, eta: reg.eta - scale * integral.eta })
}

/// Clamps `eta` into the admissible box; `theta` is unconstrained.
pub fn project_control(u: Control, p: &ForceParams) -> Control {
    Control { theta: u.theta, eta: u.eta.clamp(p.eta_min, p.eta_max) }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchConfig {
    /// Armijo sufficient-decrease constant.
    pub c: f64,
    pub shrink: f64,
    pub tau0: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self { c: 1e-4, shrink: 0.5, tau0: 1.0, max_backtracks: 30 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LineSearchOutcome<T> {
    Accepted {
        tau: f64,
        control: Control,
        value: f64,
        payload: T,
        trials: usize,
    },
    /// No step size satisfied the Armijo condition.
    Stalled {
        trials: usize,
    },
}

/// Backtracking from `tau0`, accepting the first `tau` with
/// `f(P(u - tau g)) <= f(u) - c tau |g|^2`.
///
/// `eval` returns the total cost of a trial control and an arbitrary payload
/// that is handed back for the accepted trial.
pub fn line_search<T, E, F>(
    u: Control,
    f_u: f64,
    g: Gradient,
    p: &ForceParams,
    cfg: &LineSearchConfig,
    mut eval: F,
) -> Result<LineSearchOutcome<T>, E>
where
    F: FnMut(Control) -> Result<(f64, T), E>,
{
    let g2 = g.norm_squared();
    let mut tau = cfg.tau0;
    for trial in 0..=cfg.max_backtracks {
        let candidate = project_control(Control { theta: u.theta - tau * g.theta, eta: u.eta - tau * g.eta }, p);
        let (value, payload) = eval(candidate)?;
        if value.is_finite() && value <= f_u - cfg.c * tau * g2 {
            return Ok(LineSearchOutcome::Accepted { tau, control: candidate, value, payload, trials: trial + 1 });
        }
        tau *= cfg.shrink;
    }
    Ok(LineSearchOutcome::Stalled { trials: cfg.max_backtracks + 1 })
}

/// Everything needed to run the identification loop.
#[derive(Debug, Clone)]
pub struct OptimizeConfig {
    pub params: ForceParams,
    pub weights: CostWeights,
    pub dt: f64,
    pub steps: usize,
    pub initial: ParticleState,
    pub desired: ParticleState,
    pub u0: Control,
    pub eps_stop: f64,
    pub max_iterations: usize,
    pub line_search: LineSearchConfig,
    pub adjoint: AdjointOptions,
    pub quadrature: CostateQuadrature,
}

impl OptimizeConfig {
    pub fn new(initial: ParticleState, desired: ParticleState, u0: Control, dt: f64, steps: usize) -> Self {
        Self {
            params: ForceParams::default(),
            weights: CostWeights::default(),
            dt,
            steps,
            initial,
            desired,
            u0,
            eps_stop: 0.05,
            max_iterations: 50,
            line_search: LineSearchConfig::default(),
            adjoint: AdjointOptions::default(),
            quadrature: CostateQuadrature::default(),
        }
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        self.params.validate().map_err(|e| OptimizeError::InvalidConfig(e.to_string()))?;
        if self.initial.len() != self.desired.len() {
            return Err(OptimizeError::InvalidConfig(format!(
                "initial state has {} particles, desired has {}",
                self.initial.len(),
                self.desired.len()
            )));
        }
        if self.steps == 0 {
            return Err(OptimizeError::InvalidConfig("steps must be at least 1".into()));
        }
        if !self.u0.is_finite() {
            return Err(OptimizeError::InvalidConfig("initial control is not finite".into()));
        }
        let ls = &self.line_search;
        if !(ls.tau0 > 0.0 && ls.shrink > 0.0 && ls.shrink < 1.0 && ls.c >= 0.0) {
            return Err(OptimizeError::InvalidConfig("line search needs tau0 > 0, 0 < shrink < 1, c >= 0".into()));
        }
        Ok(())
    }
}

/// One row of the optimisation history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: CostBreakdown,
    pub grad: Gradient,
    /// `|g_k|_1 / |g_0|_1`.
    pub grad_rel: f64,
    pub control: Control,
    /// Accepted step size; `None` for the starting point.
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub control: Control,
    pub history: Vec<IterationRecord>,
    /// Number of accepted control updates.
    pub iterations: usize,
    pub converged: bool,
    /// The last line search found no admissible step.
    pub stalled: bool,
    pub final_state: ParticleState,
}

impl OptimizeResult {
    pub fn final_cost(&self) -> CostBreakdown {
        self.history.last().expect("history is never empty").cost
    }
}

/// State, cost and gradient at one control.
pub struct Evaluation {
    pub trajectory: Trajectory,
    pub cost: CostBreakdown,
    pub gradient: Gradient,
}

/// Forward solve, terminal condition, backward solve and gradient at `u`.
pub fn evaluate_with_gradient(cfg: &OptimizeConfig, u: Control) -> Result<Evaluation, OptimizeError> {
    let trajectory = simulate(&cfg.initial, u, &cfg.params, cfg.dt, cfg.steps)?;
    let (terminal, plan) = terminal_condition_with_plan(trajectory.final_state(), &cfg.desired, cfg.steps)?;
    let cost = breakdown(plan.total_cost, u, &cfg.weights);
    let adj = solve_adjoint(&trajectory, u, &terminal, &cfg.params, &cfg.adjoint)?;
    let gradient = reduced_gradient(&trajectory, &adj, u, &cfg.params, &cfg.weights, cfg.quadrature)?;
    Ok(Evaluation { trajectory, cost, gradient })
}

/// Reduced cost `u -> J(S(u), u)` without storing the trajectory.
pub fn reduced_cost(cfg: &OptimizeConfig, u: Control) -> Result<(CostBreakdown, ParticleState), OptimizeError> {
    let fin = simulate_final(&cfg.initial, u, &cfg.params, cfg.dt, cfg.steps)?;
    let cost = evaluate_cost(&fin, &cfg.desired, u, &cfg.weights)?;
    Ok((cost, fin))
}

/// Projected gradient descent until `|g_k|_1 / |g_0|_1 < eps_stop`, a
/// stalled line search, or the iteration cap.
pub fn optimize(cfg: &OptimizeConfig) -> Result<OptimizeResult, OptimizeError> {
    optimize_with_observer(cfg, |_| {})
}

/// As [`optimize`], calling `observe` after every recorded iteration.
pub fn optimize_with_observer<O>(cfg: &OptimizeConfig, mut observe: O) -> Result<OptimizeResult, OptimizeError>
where
    O: FnMut(&IterationRecord),
{
    cfg.validate()?;
    let mut u = project_control(cfg.u0, &cfg.params);
    let mut eval = evaluate_with_gradient(cfg, u)?;
    let g0 = eval.gradient.l1_norm();
    let first = IterationRecord { iter: 0, cost: eval.cost, grad: eval.gradient, grad_rel: 1.0, control: u, tau: None };
    observe(&first);
    let mut history = vec![first];
    let mut converged = g0 == 0.0;
    let mut stalled = false;
    let mut iterations = 0;

    while !converged && iterations < cfg.max_iterations {
        let step = line_search(u, eval.cost.total, eval.gradient, &cfg.params, &cfg.line_search, |trial| {
            reduced_cost(cfg, trial).map(|(c, _)| (c.total, ()))
        })?;
        let (tau, next) = match step {
            LineSearchOutcome::Accepted { tau, control, .. } => (tau, control),
            LineSearchOutcome::Stalled { .. } => {
                stalled = true;
                break;
            }
        };
        u = next;
        iterations += 1;
        eval = evaluate_with_gradient(cfg, u)?;
        let grad_rel = eval.gradient.l1_norm() / g0;
        let rec = IterationRecord {
            iter: iterations,
            cost: eval.cost,
            grad: eval.gradient,
            grad_rel,
            control: u,
            tau: Some(tau),
        };
        observe(&rec);
        history.push(rec);
        converged = grad_rel < cfg.eps_stop;
    }

    Ok(OptimizeResult {
        control: u,
        history,
        iterations,
        converged,
        stalled,
        final_state: eval.trajectory.final_state().clone(),
    })
}

pub const COST_HISTORY_HEADER: [&str; 11] =
    ["iter", "j1", "j2", "j3", "total", "grad_theta", "grad_eta", "grad_rel", "theta", "eta", "tau"];

/// Writes `iter,j1,j2,j3,total,grad_theta,grad_eta,grad_rel,theta,eta,tau`;
/// `tau` is empty for the starting point.
pub fn write_history_csv<W: std::io::Write>(out: W, history: &[IterationRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COST_HISTORY_HEADER)?;
    for r in history {
        w.write_record([
            r.iter.to_string(),
            r.cost.j1.to_string(),
            r.cost.j2.to_string(),
            r.cost.j3.to_string(),
            r.cost.total.to_string(),
            r.grad.theta.to_string(),
            r.grad.eta.to_string(),
            r.grad_rel.to_string(),
            r.control.theta.to_string(),
            r.control.eta.to_string(),
            r.tau.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a file written by [`write_history_csv`].
pub fn read_history_csv<R: std::io::Read>(input: R) -> Result<Vec<IterationRecord>, String> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let f = |i: usize| -> Result<f64, String> {
            rec.get(i).unwrap_or("").parse::<f64>().map_err(|e| format!("column {i}: {e}"))
        };
        let tau = match rec.get(10).unwrap_or("") {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|e| e.to_string())?),
        };
        out.push(IterationRecord {
            iter: rec.get(0).unwrap_or("").parse().map_err(|e: std::num::ParseIntError| e.to_string())?,
            cost: CostBreakdown { j1: f(1)?, j2: f(2)?, j3: f(3)?, total: f(4)? },
            grad: Gradient { theta: f(5)?, eta: f(6)? },
            grad_rel: f(7)?,
            control: Control { theta: f(8)?, eta: f(9)? },
            tau,
        });
    }
    Ok(out)
}

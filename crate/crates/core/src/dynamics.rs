//! Forward particle system and its explicit Euler integrator.
//!
//! `dx_i/dt = (1/N) sum_j F(wrap(x_i - x_j), u)`, advanced with
//! `x_i <- wrap_unit(x_i + dt * v_i)`.

use crate::forces::{wrap_unit, Control, Displacement, ForceKernel, ForceParams, Vec2};
use crate::par;
use thiserror::Error;

/// Default cap on stored trajectory size (4 GiB).
pub const DEFAULT_MEMORY_BUDGET: usize = 4 << 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid particle state: {0}")]
    InvalidState(String),
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("at least one time step is required")]
    NoSteps,
    #[error("trajectory needs {required} bytes, budget is {budget}")]
    MemoryBudget { required: usize, budget: usize },
}

/// Positions of `N >= 1` particles on the unit torus, components in `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    positions: Vec<Vec2>,
}

impl ParticleState {
    pub fn new(positions: Vec<Vec2>) -> Result<Self, DynamicsError> {
        if positions.is_empty() {
            return Err(DynamicsError::InvalidState("no particles".into()));
        }
        for (i, x) in positions.iter().enumerate() {
            let ok = |c: f64| c.is_finite() && (0.0..1.0).contains(&c);
            if !(ok(x.x) && ok(x.y)) {
                return Err(DynamicsError::InvalidState(format!(
                    "particle {i} at ({}, {}) is outside [0,1)^2",
                    x.x, x.y
                )));
            }
        }
        Ok(Self { positions })
    }

    /// Wraps arbitrary finite coordinates onto the torus.
    pub fn from_wrapped(positions: Vec<Vec2>) -> Result<Self, DynamicsError> {
        if positions.iter().any(|x| !(x.x.is_finite() && x.y.is_finite())) {
            return Err(DynamicsError::InvalidState("non-finite coordinate".into()));
        }
        Self::new(positions.into_iter().map(|x| Vec2::new(wrap_unit(x.x), wrap_unit(x.y))).collect())
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Translates every particle by `c` modulo 1.
    pub fn translated(&self, c: Vec2) -> Self {
        Self {
            positions: self.positions.iter().map(|x| Vec2::new(wrap_unit(x.x + c.x), wrap_unit(x.y + c.y))).collect(),
        }
    }
}

/// Stored forward solution on the uniform grid `t_k = k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: Vec<ParticleState>,
    dt: f64,
}

impl Trajectory {
    pub fn states(&self) -> &[ParticleState] {
        &self.states
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.time(self.steps())
    }

    pub fn initial(&self) -> &ParticleState {
        &self.states[0]
    }

    pub fn final_state(&self) -> &ParticleState {
        self.states.last().expect("trajectory holds at least one state")
    }

    pub fn n_particles(&self) -> usize {
        self.states[0].len()
    }

    /// Writes `step,time,particle_id,x,y` rows every `stride` steps (the
    /// final step is always included).
    pub fn write_csv<W: std::io::Write>(&self, out: W, stride: usize) -> csv::Result<()> {
        let rows = sampled_steps(self.steps(), stride).map(|k| (k, self.time(k), self.states[k].positions()));
        crate::io::write_vectors_csv(out, rows)
    }
}

/// Step indices `0, stride, 2*stride, ..` plus the last step.
pub fn sampled_steps(steps: usize, stride: usize) -> impl Iterator<Item = usize> {
    let stride = stride.max(1);
    (0..=steps).filter(move |&k| k % stride == 0 || k == steps)
}

/// Reusable buffer for the pairwise force pass.
///
/// Row `i` holds `F(wrap(x_i - x_j))` for `j > i`; the lower triangle is
/// recovered from antisymmetry.
#[derive(Debug, Default)]
pub struct ForceWorkspace {
    pair: Vec<Vec2>,
    n: usize,
}

impl ForceWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare(&mut self, n: usize) {
        if self.n != n {
            self.pair = vec![Vec2::zeros(); n * n];
            self.n = n;
        }
    }

    /// Velocities `v_i = (1/N) sum_j F(x_i - x_j)`, summed in ascending `j`.
    pub fn velocities(&mut self, state: &ParticleState, kernel: &ForceKernel) -> Vec<Vec2> {
        let n = state.len();
        self.prepare(n);
        let x = state.positions();
        par::for_each_row(&mut self.pair, n, |i, row| {
            for j in (i + 1)..n {
                let d = Displacement::wrap_unchecked(x[i] - x[j]).vector();
                row[j] = kernel.force(d);
            }
        });
        let pair = &self.pair;
        let inv_n = 1.0 / n as f64;
        par::map_indices(n, |i| {
            let mut acc = Vec2::zeros();
            for j in 0..n {
                if j < i {
                    acc -= pair[j * n + i];
                } else if j > i {
                    acc += pair[i * n + j];
                }
            }
            acc * inv_n
        })
    }
}

pub fn velocity_field(state: &ParticleState, u: Control, p: &ForceParams) -> Vec<Vec2> {
    ForceWorkspace::new().velocities(state, &ForceKernel::new(u, p))
}

fn advance(state: &ParticleState, v: &[Vec2], dt: f64) -> ParticleState {
    ParticleState {
        positions: state
            .positions
            .iter()
            .zip(v)
            .map(|(x, v)| {
                let y = x + dt * v;
                Vec2::new(wrap_unit(y.x), wrap_unit(y.y))
            })
            .collect(),
    }
}

fn check_dt(dt: f64) -> Result<(), DynamicsError> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(DynamicsError::InvalidTimeStep(dt))
    }
}

pub fn step_forward(
    state: &ParticleState,
    u: Control,
    p: &ForceParams,
    dt: f64,
) -> Result<ParticleState, DynamicsError> {
    check_dt(dt)?;
    let v = velocity_field(state, u, p);
    Ok(advance(state, &v, dt))
}

/// Bytes needed to store a trajectory of `n` particles over `steps` steps.
pub fn trajectory_bytes(n: usize, steps: usize) -> usize {
    n.saturating_mul(std::mem::size_of::<Vec2>()).saturating_mul(steps.saturating_add(1))
}

pub fn simulate(
    initial: &ParticleState,
    u: Control,
    p: &ForceParams,
    dt: f64,
    steps: usize,
) -> Result<Trajectory, DynamicsError> {
    simulate_with_budget(initial, u, p, dt, steps, DEFAULT_MEMORY_BUDGET)
}

pub fn simulate_with_budget(
    initial: &ParticleState,
    u: Control,
    p: &ForceParams,
    dt: f64,
    steps: usize,
    budget: usize,
) -> Result<Trajectory, DynamicsError> {
    check_dt(dt)?;
    if steps == 0 {
        return Err(DynamicsError::NoSteps);
    }
    let required = trajectory_bytes(initial.len(), steps);
    if required > budget {
        return Err(DynamicsError::MemoryBudget { required, budget });
    }
    let kernel = ForceKernel::new(u, p);
    let mut ws = ForceWorkspace::new();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(initial.clone());
    for _ in 0..steps {
        let cur = states.last().expect("non-empty");
        let v = ws.velocities(cur, &kernel);
        let next = advance(cur, &v, dt);
        states.push(next);
    }
    Ok(Trajectory { states, dt })
}

/// Runs the same scheme as [`simulate`] but keeps only the final state.
/// `steps == 0` returns the initial state.
pub fn simulate_final(
    initial: &ParticleState,
    u: Control,
    p: &ForceParams,
    dt: f64,
    steps: usize,
) -> Result<ParticleState, DynamicsError> {
    check_dt(dt)?;
    let kernel = ForceKernel::new(u, p);
    let mut ws = ForceWorkspace::new();
    let mut cur = initial.clone();
    for _ in 0..steps {
        let v = ws.velocities(&cur, &kernel);
        cur = advance(&cur, &v, dt);
    }
    Ok(cur)
}

/// Largest particle speed; a stationarity diagnostic for the final state.
pub fn max_speed(state: &ParticleState, u: Control, p: &ForceParams) -> f64 {
    velocity_field(state, u, p).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

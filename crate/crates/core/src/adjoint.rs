//! Costate system integrated backward in time.
//!
//! The costates `xi_i` satisfy a linear system driven by the pair Jacobians
//! `A_ij = grad_d F(wrap(x_i - x_j), u)` at the stored forward positions.
//! Written as an operator `L_t`,
//!
//! ```text
//! (L_t xi)_i = (1/N) sum_j B_ij xi_i - (1/N) sum_j B_ij xi_j
//! ```
//!
//! with `B_ij = A_ij^T` ([`JacobianOrientation::Transposed`], the default) or
//! `B_ij = A_ij` ([`JacobianOrientation::AsWritten`]). Each backward step is an
//! implicit Euler step `(I - dt L_t) xi_t = xi_{t+dt}` solved by a
//! block-Jacobi preconditioned BiCGSTAB iteration.
//!
//! The default orientation is the one whose reduced gradient agrees with
//! central finite differences of the discrete cost; see the crate tests.
//!
//! [`AdjointScheme::Discrete`] replaces the implicit step by the explicit
//! update `xi_t = (I + dt L_t) xi_{t+dt}`, the exact transpose of the forward
//! Euler map. Its gradient matches finite differences of the discrete cost
//! to rounding, while the implicit scheme differs from them by `O(dt)`.

use crate::dynamics::{sampled_steps, ParticleState, Trajectory};
use crate::forces::{Control, Displacement, ForceKernel, ForceParams, Mat2, Vec2};
use crate::par;
use crate::transport::{optimal_plan, transport_displacements, TransportError, TransportPlan};
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdjointError {
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("implicit solve did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("dense solve failed: singular system")]
    Singular,
}

/// Which way the pair Jacobians enter the costate operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianOrientation {
    /// `B_ij = A_ij^T`.
    #[default]
    Transposed,
    /// `B_ij = A_ij`.
    AsWritten,
}

impl std::str::FromStr for JacobianOrientation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "transposed" => Ok(Self::Transposed),
            "as_written" | "as-written" => Ok(Self::AsWritten),
            other => Err(format!("unknown orientation {other:?}")),
        }
    }
}

impl std::fmt::Display for JacobianOrientation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Transposed => "transposed",
            Self::AsWritten => "as_written",
        })
    }
}

/// Time discretisation of the backward sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdjointScheme {
    /// `(I - dt L_t) xi_t = xi_{t+dt}`.
    #[default]
    Implicit,
    /// `xi_t = (I + dt L_t) xi_{t+dt}`.
    Discrete,
}

impl std::str::FromStr for AdjointScheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "implicit" => Ok(Self::Implicit),
            "discrete" => Ok(Self::Discrete),
            other => Err(format!("unknown adjoint scheme {other:?}")),
        }
    }
}

impl std::fmt::Display for AdjointScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Implicit => "implicit",
            Self::Discrete => "discrete",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjointOptions {
    pub orientation: JacobianOrientation,
    pub scheme: AdjointScheme,
    /// Relative max-norm residual target of each implicit step.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for AdjointOptions {
    fn default() -> Self {
        Self {
            orientation: JacobianOrientation::default(),
            scheme: AdjointScheme::default(),
            tolerance: 1e-10,
            max_iterations: 500,
        }
    }
}

/// Costates at one grid index.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointState {
    pub costates: Vec<Vec2>,
    pub step: usize,
}

impl AdjointState {
    pub fn zeros(n: usize, step: usize) -> Self {
        Self { costates: vec![Vec2::zeros(); n], step }
    }

    pub fn len(&self) -> usize {
        self.costates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costates.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.costates.iter().all(|v| v.x.is_finite() && v.y.is_finite())
    }
}

/// Costates on the forward grid, `states[k]` at `t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub states: Vec<AdjointState>,
}

impl AdjointTrajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    /// Same `step,time,particle_id,x,y` layout as position exports.
    pub fn write_csv<W: std::io::Write>(&self, out: W, dt: f64, stride: usize) -> csv::Result<()> {
        let rows = sampled_steps(self.steps(), stride).map(|k| (k, k as f64 * dt, self.states[k].costates.as_slice()));
        crate::io::write_vectors_csv(out, rows)
    }
}

/// `xi_i(T) = N * wrap(x_des[sigma(i)] - x_i(T))`, together with the plan.
pub fn terminal_condition_with_plan(
    final_state: &ParticleState,
    desired: &ParticleState,
    step: usize,
) -> Result<(AdjointState, TransportPlan), AdjointError> {
    if final_state.len() != desired.len() {
        return Err(AdjointError::SizeMismatch(format!(
            "final state has {} particles, desired has {}",
            final_state.len(),
            desired.len()
        )));
    }
    let plan = optimal_plan(final_state, desired)?;
    let n = final_state.len() as f64;
    let costates = transport_displacements(final_state, desired, &plan).into_iter().map(|d| n * d).collect();
    Ok((AdjointState { costates, step }, plan))
}

pub fn terminal_condition(final_state: &ParticleState, desired: &ParticleState) -> Result<AdjointState, AdjointError> {
    terminal_condition_with_plan(final_state, desired, 0).map(|(s, _)| s)
}

/// The costate operator `L_t` assembled from cached pair Jacobians.
#[derive(Debug, Clone)]
pub struct AdjointOperator {
    n: usize,
    /// `B_ij / N`, row-major.
    blocks: Vec<Mat2>,
    /// `sum_j B_ij / N`.
    row_sums: Vec<Mat2>,
}

impl AdjointOperator {
    pub fn new(state: &ParticleState, kernel: &ForceKernel, orientation: JacobianOrientation) -> Self {
        let n = state.len();
        let x = state.positions();
        let inv_n = 1.0 / n as f64;
        let mut blocks = vec![Mat2::zeros(); n * n];
        let self_block = kernel.jacobian(Vec2::zeros());
        par::for_each_row(&mut blocks, n, |i, row| {
            row[i] = self_block;
            for j in (i + 1)..n {
                let d = Displacement::wrap_unchecked(x[i] - x[j]).vector();
                row[j] = kernel.jacobian(d);
            }
        });
        // A_ij is even in the displacement, so the lower triangle mirrors the upper
        for i in 0..n {
            for j in 0..i {
                blocks[i * n + j] = blocks[j * n + i];
            }
        }
        par::for_each_indexed(&mut blocks, |_, b| {
            let m = match orientation {
                JacobianOrientation::Transposed => b.transpose(),
                JacobianOrientation::AsWritten => *b,
            };
            *b = m * inv_n;
        });
        let row_sums = par::map_indices(n, |i| blocks[i * n..(i + 1) * n].iter().fold(Mat2::zeros(), |acc, b| acc + b));
        Self { n, blocks, row_sums }
    }

    pub fn from_positions(
        state: &ParticleState,
        u: Control,
        p: &ForceParams,
        orientation: JacobianOrientation,
    ) -> Self {
        Self::new(state, &ForceKernel::new(u, p), orientation)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn apply(&self, xi: &[Vec2]) -> Vec<Vec2> {
        let n = self.n;
        par::map_indices(n, |i| {
            let row = &self.blocks[i * n..(i + 1) * n];
            let coupled = row.iter().zip(xi).fold(Vec2::zeros(), |acc, (b, x)| acc + b * x);
            self.row_sums[i] * xi[i] - coupled
        })
    }

    /// `(I - dt L) xi`.
    fn apply_implicit(&self, xi: &[Vec2], dt: f64) -> Vec<Vec2> {
        self.apply(xi).iter().zip(xi).map(|(l, x)| x - dt * l).collect()
    }

    /// Inverses of the diagonal 2x2 blocks of `I - dt L`.
    fn block_jacobi(&self, dt: f64) -> Vec<Mat2> {
        (0..self.n)
            .map(|i| {
                let diag = Mat2::identity() - dt * (self.row_sums[i] - self.blocks[i * self.n + i]);
                diag.try_inverse().unwrap_or_else(Mat2::identity)
            })
            .collect()
    }

    /// Dense `2N x 2N` matrix of `L`, entry order `(x_0, y_0, x_1, y_1, ..)`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let mut blk = -self.blocks[i * n + j];
                if i == j {
                    blk += self.row_sums[i];
                }
                m.fixed_view_mut::<2, 2>(2 * i, 2 * j).copy_from(&blk);
            }
        }
        m
    }
}

pub fn adjoint_rhs(
    positions: &ParticleState,
    u: Control,
    xi: &AdjointState,
    p: &ForceParams,
    orientation: JacobianOrientation,
) -> Result<Vec<Vec2>, AdjointError> {
    if positions.len() != xi.len() {
        return Err(AdjointError::SizeMismatch(format!("{} positions vs {} costates", positions.len(), xi.len())));
    }
    Ok(AdjointOperator::from_positions(positions, u, p, orientation).apply(&xi.costates))
}

fn max_norm(v: &[Vec2]) -> f64 {
    v.iter().map(|x| x.x.abs().max(x.y.abs())).fold(0.0, f64::max)
}

fn dot(a: &[Vec2], b: &[Vec2]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn precondition(inv: &[Mat2], v: &[Vec2]) -> Vec<Vec2> {
    inv.iter().zip(v).map(|(m, x)| m * x).collect()
}

/// Solves `(I - dt L) xi = rhs` to relative max-norm residual `tol`.
///
/// Returns the solution and the number of operator applications.
pub fn solve_implicit(
    op: &AdjointOperator,
    rhs: &[Vec2],
    dt: f64,
    tol: f64,
    max_iterations: usize,
) -> Result<(Vec<Vec2>, usize), AdjointError> {
    let scale = max_norm(rhs);
    if scale == 0.0 {
        return Ok((vec![Vec2::zeros(); rhs.len()], 0));
    }
    let target = tol * scale;
    let inv = op.block_jacobi(dt);
    let residual_of =
        |x: &[Vec2]| -> Vec<Vec2> { op.apply_implicit(x, dt).iter().zip(rhs).map(|(ax, b)| b - ax).collect() };

    let mut x: Vec<Vec2> = rhs.to_vec();
    let mut r = residual_of(&x);
    let mut applications = 1;
    if max_norm(&r) <= target {
        return Ok((x, applications));
    }
    let mut iterations = 0;
    // restarts guard against BiCGSTAB breakdown and drift of the recursive residual
    while iterations < max_iterations {
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
        let mut v = vec![Vec2::zeros(); rhs.len()];
        let mut pdir = vec![Vec2::zeros(); rhs.len()];
        while iterations < max_iterations {
            iterations += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new == 0.0 || !rho_new.is_finite() {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for ((pk, rk), vk) in pdir.iter_mut().zip(&r).zip(&v) {
                *pk = rk + beta * (*pk - omega * vk);
            }
            let y = precondition(&inv, &pdir);
            v = op.apply_implicit(&y, dt);
            applications += 1;
            let denom = dot(&r_hat, &v);
            if denom == 0.0 || !denom.is_finite() {
                break;
            }
            alpha = rho / denom;
            let s: Vec<Vec2> = r.iter().zip(&v).map(|(rk, vk)| rk - alpha * vk).collect();
            x.iter_mut().zip(&y).for_each(|(xk, yk)| *xk += alpha * yk);
            if max_norm(&s) <= target {
                break;
            }
            let z = precondition(&inv, &s);
            let t = op.apply_implicit(&z, dt);
            applications += 1;
            let tt = dot(&t, &t);
            if tt == 0.0 || !tt.is_finite() {
                break;
            }
            omega = dot(&t, &s) / tt;
            x.iter_mut().zip(&z).for_each(|(xk, zk)| *xk += omega * zk);
            r = s.iter().zip(&t).map(|(sk, tk)| sk - omega * tk).collect();
            if max_norm(&r) <= target || omega == 0.0 {
                break;
            }
        }
        r = residual_of(&x);
        applications += 1;
        if max_norm(&r) <= target {
            return Ok((x, applications));
        }
    }
    Err(AdjointError::NotConverged { iterations, residual: max_norm(&r) / scale })
}

fn check_dt(dt: f64) -> Result<(), AdjointError> {
    if dt.is_finite() && dt > 0.0 {
        Ok(())
    } else {
        Err(AdjointError::InvalidTimeStep(dt))
    }
}

/// One implicit Euler step backward: `(I - dt L_t) xi_t = xi_{t+dt}` with
/// `L_t` built at `positions_at_t`.
pub fn step_backward(
    xi_next: &AdjointState,
    positions_at_t: &ParticleState,
    u: Control,
    p: &ForceParams,
    dt: f64,
    opts: &AdjointOptions,
) -> Result<AdjointState, AdjointError> {
    check_dt(dt)?;
    if positions_at_t.len() != xi_next.len() {
        return Err(AdjointError::SizeMismatch(format!(
            "{} positions vs {} costates",
            positions_at_t.len(),
            xi_next.len()
        )));
    }
    let op = AdjointOperator::from_positions(positions_at_t, u, p, opts.orientation);
    let next = &xi_next.costates;
    let costates = match opts.scheme {
        AdjointScheme::Implicit => solve_implicit(&op, next, dt, opts.tolerance, opts.max_iterations)?.0,
        AdjointScheme::Discrete => next.iter().zip(op.apply(next)).map(|(x, lx)| x + dt * lx).collect(),
    };
    Ok(AdjointState { costates, step: xi_next.step.saturating_sub(1) })
}

/// Dense LU reference for [`step_backward`].
pub fn step_backward_dense(
    xi_next: &AdjointState,
    positions_at_t: &ParticleState,
    u: Control,
    p: &ForceParams,
    dt: f64,
    orientation: JacobianOrientation,
) -> Result<AdjointState, AdjointError> {
    check_dt(dt)?;
    let n = positions_at_t.len();
    if n != xi_next.len() {
        return Err(AdjointError::SizeMismatch(format!("{n} positions vs {} costates", xi_next.len())));
    }
    let l = AdjointOperator::from_positions(positions_at_t, u, p, orientation).to_dense();
    let system = DMatrix::identity(2 * n, 2 * n) - dt * l;
    let rhs = nalgebra::DVector::from_iterator(2 * n, xi_next.costates.iter().flat_map(|v| [v.x, v.y]));
    let sol = system.lu().solve(&rhs).ok_or(AdjointError::Singular)?;
    let costates = (0..n).map(|i| Vec2::new(sol[2 * i], sol[2 * i + 1])).collect();
    Ok(AdjointState { costates, step: xi_next.step.saturating_sub(1) })
}

/// Backward sweep `k = steps-1 .. 0` from `terminal`, using the forward
/// snapshot at `t_k` for each step.
pub fn solve_adjoint(
    traj: &Trajectory,
    u: Control,
    terminal: &AdjointState,
    p: &ForceParams,
    opts: &AdjointOptions,
) -> Result<AdjointTrajectory, AdjointError> {
    let steps = traj.steps();
    if terminal.len() != traj.n_particles() {
        return Err(AdjointError::SizeMismatch(format!(
            "terminal has {} costates, trajectory has {} particles",
            terminal.len(),
            traj.n_particles()
        )));
    }
    let kernel = ForceKernel::new(u, p);
    let dt = traj.dt();
    let mut states = vec![AdjointState::zeros(0, 0); steps + 1];
    states[steps] = AdjointState { costates: terminal.costates.clone(), step: steps };
    for k in (0..steps).rev() {
        let next = &states[k + 1].costates;
        let costates = if max_norm(next) == 0.0 {
            vec![Vec2::zeros(); next.len()]
        } else {
            let op = AdjointOperator::new(&traj.states()[k], &kernel, opts.orientation);
            match opts.scheme {
                AdjointScheme::Implicit => solve_implicit(&op, next, dt, opts.tolerance, opts.max_iterations)?.0,
                AdjointScheme::Discrete => next.iter().zip(op.apply(next)).map(|(x, lx)| x + dt * lx).collect(),
            }
        };
        states[k] = AdjointState { costates, step: k };
    }
    Ok(AdjointTrajectory { states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::simulate;
    use approx::assert_relative_eq;

    fn st(pts: &[(f64, f64)]) -> ParticleState {
        ParticleState::new(pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect()).unwrap()
    }

    fn cluster() -> ParticleState {
        st(&[(0.50, 0.50), (0.505, 0.51), (0.49, 0.497), (0.512, 0.49), (0.498, 0.52)])
    }

    #[test]
    fn terminal_examples() {
        let a = cluster();
        let xi = terminal_condition(&a, &a).unwrap();
        assert!(xi.costates.iter().all(|v| *v == Vec2::zeros()));

        let xi = terminal_condition(&st(&[(0.9, 0.5)]), &st(&[(0.1, 0.5)])).unwrap();
        assert_relative_eq!(xi.costates[0], Vec2::new(0.2, 0.0), epsilon = 1e-15);

        assert!(matches!(terminal_condition(&st(&[(0.9, 0.5)]), &cluster()), Err(AdjointError::SizeMismatch(_))));
    }

    #[test]
    fn terminal_norm_matches_plan_cost() {
        let a = cluster();
        let b = st(&[(0.1, 0.2), (0.8, 0.9), (0.3, 0.35), (0.95, 0.05), (0.6, 0.4)]);
        let (xi, plan) = terminal_condition_with_plan(&a, &b, 3).unwrap();
        let sq: f64 = xi.costates.iter().map(|v| v.norm_squared()).sum();
        assert_relative_eq!(sq, 5.0 * 5.0 * plan.total_cost, max_relative = 1e-13);
        assert_eq!(xi.step, 3);
    }

    #[test]
    fn rhs_trivial_cases() {
        let p = ForceParams::default();
        let u = Control::new(0.6, 1.0);
        let zero = AdjointState::zeros(5, 0);
        let rhs = adjoint_rhs(&cluster(), u, &zero, &p, JacobianOrientation::Transposed).unwrap();
        assert!(rhs.iter().all(|v| *v == Vec2::zeros()));
        let one = AdjointState { costates: vec![Vec2::new(1.0, -2.0)], step: 0 };
        let rhs = adjoint_rhs(&st(&[(0.2, 0.2)]), u, &one, &p, JacobianOrientation::AsWritten).unwrap();
        assert_eq!(rhs, vec![Vec2::zeros()]);
    }

    #[test]
    fn rhs_matches_entrywise_dense_assembly() {
        let p = ForceParams::default();
        let u = Control::new(0.6, 1.04);
        let s = cluster();
        let xi = AdjointState {
            costates: vec![
                Vec2::new(0.3, -0.1),
                Vec2::new(-0.7, 0.2),
                Vec2::new(0.05, 0.9),
                Vec2::new(-0.4, -0.4),
                Vec2::new(0.1, 0.0),
            ],
            step: 0,
        };
        for orientation in [JacobianOrientation::Transposed, JacobianOrientation::AsWritten] {
            let rhs = adjoint_rhs(&s, u, &xi, &p, orientation).unwrap();
            let x = s.positions();
            let n = x.len();
            for i in 0..n {
                let mut expect = Vec2::zeros();
                for j in 0..n {
                    let d = crate::forces::wrap_displacement(x[i] - x[j]).unwrap();
                    let mut a = crate::forces::force_jacobian_position(d, u, &p);
                    if orientation == JacobianOrientation::Transposed {
                        a = a.transpose();
                    }
                    expect += a * xi.costates[i] / n as f64 - a * xi.costates[j] / n as f64;
                }
                assert_relative_eq!(rhs[i], expect, epsilon = 1e-15, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn implicit_step_matches_dense_lu() {
        let p = ForceParams::default();
        let u = Control::new(1.2, 0.93);
        let s = cluster();
        let xi =
            AdjointState { costates: (0..5).map(|i| Vec2::new(i as f64 - 2.0, 0.5 * i as f64)).collect(), step: 10 };
        for dt in [0.5, 2.0, 40.0] {
            let opts = AdjointOptions::default();
            let it = step_backward(&xi, &s, u, &p, dt, &opts).unwrap();
            let lu = step_backward_dense(&xi, &s, u, &p, dt, opts.orientation).unwrap();
            assert_eq!(it.step, 9);
            let scale = max_norm(&lu.costates);
            for (a, b) in it.costates.iter().zip(&lu.costates) {
                assert_relative_eq!(a, b, epsilon = 1e-10 * scale);
            }
            let op = AdjointOperator::from_positions(&s, u, &p, opts.orientation);
            let resid: Vec<Vec2> =
                op.apply_implicit(&it.costates, dt).iter().zip(&xi.costates).map(|(a, b)| a - b).collect();
            assert!(max_norm(&resid) <= 1e-10 * max_norm(&xi.costates));
        }
    }

    #[test]
    fn single_particle_and_tiny_dt_leave_costates_unchanged() {
        let p = ForceParams::default();
        let u = Control::new(0.0, 1.0);
        let xi = AdjointState { costates: vec![Vec2::new(0.4, -0.3)], step: 1 };
        let out = step_backward(&xi, &st(&[(0.3, 0.3)]), u, &p, 2.0, &AdjointOptions::default()).unwrap();
        assert_eq!(out.costates, xi.costates);

        let xi = AdjointState { costates: vec![Vec2::new(1.0, 0.0); 5], step: 1 };
        let out = step_backward(&xi, &cluster(), u, &p, 1e-12, &AdjointOptions::default()).unwrap();
        for v in &out.costates {
            assert_relative_eq!(*v, Vec2::new(1.0, 0.0), epsilon = 1e-12);
        }
        assert!(step_backward(&xi, &cluster(), u, &p, 0.0, &AdjointOptions::default()).is_err());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let p = ForceParams::default();
        let u = Control::new(0.3, 1.0);
        let xi = AdjointState { costates: (0..5).map(|i| Vec2::new(1.0, i as f64)).collect(), step: 1 };
        let opts = AdjointOptions { tolerance: 1e-300, max_iterations: 1, ..Default::default() };
        let err = step_backward(&xi, &cluster(), u, &p, 5.0, &opts).unwrap_err();
        assert!(matches!(err, AdjointError::NotConverged { iterations: 1, .. }));
    }

    #[test]
    fn sweep_zero_and_single_particle() {
        let p = ForceParams::default();
        let u = Control::new(0.3, 1.0);
        let traj = simulate(&cluster(), u, &p, 0.5, 6).unwrap();
        let adj = solve_adjoint(&traj, u, &AdjointState::zeros(5, 6), &p, &AdjointOptions::default()).unwrap();
        assert_eq!(adj.states.len(), 7);
        assert!(adj.states.iter().all(|s| s.costates.iter().all(|v| *v == Vec2::zeros())));

        let one = simulate(&st(&[(0.4, 0.1)]), u, &p, 0.5, 4).unwrap();
        let term = AdjointState { costates: vec![Vec2::new(0.2, 0.1)], step: 4 };
        let adj = solve_adjoint(&one, u, &term, &p, &AdjointOptions::default()).unwrap();
        assert!(adj.states.iter().all(|s| s.costates == term.costates));
        assert!(adj.states.iter().enumerate().all(|(k, s)| s.step == k));
    }

    #[test]
    fn sweep_is_linear_in_terminal() {
        let p = ForceParams::default();
        let u = Control::new(0.8, 1.02);
        let traj = simulate(&cluster(), u, &p, 1.0, 10).unwrap();
        let a = AdjointState { costates: (0..5).map(|i| Vec2::new(i as f64, 1.0)).collect(), step: 10 };
        let b = AdjointState { costates: (0..5).map(|i| Vec2::new(-1.0, 0.3 * i as f64)).collect(), step: 10 };
        let sum = AdjointState { costates: a.costates.iter().zip(&b.costates).map(|(x, y)| x + y).collect(), step: 10 };
        let opts = AdjointOptions::default();
        let (ra, rb, rs) = (
            solve_adjoint(&traj, u, &a, &p, &opts).unwrap(),
            solve_adjoint(&traj, u, &b, &p, &opts).unwrap(),
            solve_adjoint(&traj, u, &sum, &p, &opts).unwrap(),
        );
        for k in 0..=10 {
            for i in 0..5 {
                let lhs = rs.states[k].costates[i];
                let rhs = ra.states[k].costates[i] + rb.states[k].costates[i];
                assert_relative_eq!(lhs, rhs, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn orientation_parses() {
        assert_eq!("transposed".parse::<JacobianOrientation>().unwrap(), JacobianOrientation::Transposed);
        assert_eq!("as_written".parse::<JacobianOrientation>().unwrap(), JacobianOrientation::AsWritten);
        assert!("sideways".parse::<JacobianOrientation>().is_err());
        assert_eq!(JacobianOrientation::AsWritten.to_string(), "as_written");
    }
}

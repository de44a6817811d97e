//! Control identification for an anisotropic interacting particle system on
//! the unit torus.
//!
//! Particles interact through a short-range repulsive, long-range attractive
//! force whose attraction is damped transverse to a preferred direction
//! `theta`; `eta` rescales the interaction length. Given a target pattern,
//! [`optimize::optimize`] recovers `(theta, eta)` by projected gradient
//! descent on a Wasserstein-2 misfit, with gradients from a backward costate
//! solve.
//!
//! Modules, bottom-up:
//! - [`forces`]: force law, periodic wrap and analytic derivatives
//! - [`dynamics`]: explicit Euler forward solver
//! - [`transport`]: exact assignment-based optimal transport
//! - [`adjoint`]: terminal condition and implicit backward costate solver
//! - [`optimize`]: cost, reduced gradient, line search and the descent loop
//! - [`harness`]: configuration, data generation, experiments and reports

pub mod adjoint;
pub mod dynamics;
pub mod forces;
pub mod harness;
pub mod io;
pub mod optimize;
pub mod par;
pub mod transport;

pub use adjoint::{AdjointOptions, AdjointScheme, AdjointState, AdjointTrajectory, JacobianOrientation};
pub use dynamics::{ParticleState, Trajectory};
pub use forces::{Control, ForceParams, Vec2};
pub use optimize::{CostBreakdown, CostWeights, Gradient, OptimizeConfig, OptimizeResult};
pub use transport::{GroundCost, TransportPlan};

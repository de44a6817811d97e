//! Anisotropic pairwise interaction force on the unit torus.
//!
//! The force between two particles separated by the (minimum-image)
//! displacement `d` under control `u = (theta, eta)` is
//!
//! ```text
//! F(d, u) = eta * f_R(eta |d|) * d  +  eta * f_A(eta |d|) * T(theta) * d
//! T(theta) = R(theta) diag(1, chi) R(theta)^T
//! ```
//!
//! with the exponential coefficient family
//! `f_R(s) = (alpha s^2 + beta) exp(-e_R s)` and `f_A(s) = -gamma s exp(-e_A s)`.
//! Analytic derivatives with respect to `d`, `theta` and `eta` are provided for
//! the adjoint solver and the reduced gradient.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForceError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("scaled distance must be non-negative, got {0}")]
    NegativeDistance(f64),
    #[error("invalid force parameters: {0}")]
    InvalidParams(String),
}

/// Force-law constants and the admissible box for `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub e_r: f64,
    pub e_a: f64,
    pub chi: f64,
    pub eta_min: f64,
    pub eta_max: f64,
}

impl Default for ForceParams {
    fn default() -> Self {
        Self { alpha: 270.0, beta: 0.1, gamma: 35.0, e_r: 100.0, e_a: 95.0, chi: 0.2, eta_min: 0.9, eta_max: 1.1 }
    }
}

impl ForceParams {
    pub fn validate(&self) -> Result<(), ForceError> {
        let all = [self.alpha, self.beta, self.gamma, self.e_r, self.e_a, self.chi, self.eta_min, self.eta_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ForceError::NonFinite("force parameters"));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(ForceError::InvalidParams("alpha, beta and gamma must be non-negative".into()));
        }
        if self.e_r <= 0.0 || self.e_a <= 0.0 {
            return Err(ForceError::InvalidParams("e_R and e_A must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.chi) {
            return Err(ForceError::InvalidParams(format!("chi = {} outside [0, 1]", self.chi)));
        }
        if !(self.eta_min > 0.0 && self.eta_min < self.eta_max) {
            return Err(ForceError::InvalidParams(format!(
                "need 0 < eta_min < eta_max, got [{}, {}]",
                self.eta_min, self.eta_max
            )));
        }
        Ok(())
    }
}

/// Spatially homogeneous control: pattern angle `theta` (radians) and force scaling `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Control {
    pub theta: f64,
    pub eta: f64,
}

impl Control {
    pub const fn new(theta: f64, eta: f64) -> Self {
        Self { theta, eta }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite() && self.eta.is_finite()
    }
}

/// A displacement reduced to its minimum image, components in `[-0.5, 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Displacement(Vec2);

impl Displacement {
    pub fn vector(&self) -> Vec2 {
        self.0
    }

    /// Wraps without checking finiteness. Used on hot paths where inputs are
    /// positions already known to be finite.
    #[inline]
    pub fn wrap_unchecked(raw: Vec2) -> Self {
        Self(Vec2::new(wrap_component(raw.x), wrap_component(raw.y)))
    }
}

/// Shifts `x` by an integer into `[-0.5, 0.5)`.
#[inline]
pub fn wrap_component(x: f64) -> f64 {
    let mut r = x - (x + 0.5).floor();
    // rounding in `x + 0.5` can leave r one ulp outside the half-open interval
    if r >= 0.5 {
        r -= 1.0;
    } else if r < -0.5 {
        r += 1.0;
    }
    r
}

/// Shifts `x` by an integer into `[0, 1)`.
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

pub fn wrap_displacement(raw: Vec2) -> Result<Displacement, ForceError> {
    if !(raw.x.is_finite() && raw.y.is_finite()) {
        return Err(ForceError::NonFinite("displacement"));
    }
    Ok(Displacement::wrap_unchecked(raw))
}

pub fn rotation_matrix(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// `R(theta) diag(1, chi) R(theta)^T`.
pub fn anisotropy_tensor(theta: f64, chi: f64) -> Mat2 {
    let r = rotation_matrix(theta);
    r * Mat2::new(1.0, 0.0, 0.0, chi) * r.transpose()
}

/// Derivative of [`anisotropy_tensor`] with respect to `theta`.
pub fn anisotropy_tensor_dtheta(theta: f64, chi: f64) -> Mat2 {
    let r = rotation_matrix(theta);
    let (s, c) = theta.sin_cos();
    let dr = Mat2::new(-s, -c, c, -s);
    let diag = Mat2::new(1.0, 0.0, 0.0, chi);
    dr * diag * r.transpose() + r * diag * dr.transpose()
}

pub fn repulsion_coeff(s: f64, p: &ForceParams) -> Result<f64, ForceError> {
    check_scaled(s)?;
    Ok(repulsion(s, p))
}

pub fn attraction_coeff(s: f64, p: &ForceParams) -> Result<f64, ForceError> {
    check_scaled(s)?;
    Ok(attraction(s, p))
}

fn check_scaled(s: f64) -> Result<(), ForceError> {
    if !s.is_finite() {
        return Err(ForceError::NonFinite("scaled distance"));
    }
    if s < 0.0 {
        return Err(ForceError::NegativeDistance(s));
    }
    Ok(())
}

#[inline]
fn repulsion(s: f64, p: &ForceParams) -> f64 {
    (p.alpha * s * s + p.beta) * (-p.e_r * s).exp()
}

#[inline]
fn attraction(s: f64, p: &ForceParams) -> f64 {
    -p.gamma * s * (-p.e_a * s).exp()
}

/// Coefficient values and their derivatives at one scaled distance.
#[derive(Debug, Clone, Copy)]
struct Coeffs {
    f_r: f64,
    df_r: f64,
    f_a: f64,
    df_a: f64,
}

#[inline]
fn coeffs(s: f64, p: &ForceParams) -> Coeffs {
    let er = (-p.e_r * s).exp();
    let ea = (-p.e_a * s).exp();
    let poly = p.alpha * s * s + p.beta;
    Coeffs {
        f_r: poly * er,
        df_r: (2.0 * p.alpha * s - p.e_r * poly) * er,
        f_a: -p.gamma * s * ea,
        df_a: -p.gamma * (1.0 - p.e_a * s) * ea,
    }
}

/// Partial derivatives of the force with respect to the two control components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlGradient {
    pub theta: Vec2,
    pub eta: Vec2,
}

/// Everything the adjoint pipeline needs about one pair, sharing the
/// exponential evaluations.
#[derive(Debug, Clone, Copy)]
pub struct PairTerms {
    pub force: Vec2,
    pub jacobian: Mat2,
    pub grad: ControlGradient,
}

/// The force law specialised to one control value.
///
/// Precomputes the anisotropy tensor and its `theta` derivative so the
/// per-pair evaluations only cost two exponentials.
#[derive(Debug, Clone, Copy)]
pub struct ForceKernel {
    params: ForceParams,
    eta: f64,
    tensor: Mat2,
    tensor_dtheta: Mat2,
}

impl ForceKernel {
    pub fn new(u: Control, params: &ForceParams) -> Self {
        Self {
            params: *params,
            eta: u.eta,
            tensor: anisotropy_tensor(u.theta, params.chi),
            tensor_dtheta: anisotropy_tensor_dtheta(u.theta, params.chi),
        }
    }

    pub fn params(&self) -> &ForceParams {
        &self.params
    }

    /// Force at an already wrapped displacement.
    #[inline]
    pub fn force(&self, d: Vec2) -> Vec2 {
        let s = self.eta * d.norm();
        let p = &self.params;
        self.eta * (repulsion(s, p) * d + attraction(s, p) * (self.tensor * d))
    }

    #[inline]
    pub fn jacobian(&self, d: Vec2) -> Mat2 {
        let r = d.norm();
        let c = coeffs(self.eta * r, &self.params);
        self.jacobian_from(d, r, &c)
    }

    #[inline]
    pub fn grad_control(&self, d: Vec2) -> ControlGradient {
        let r = d.norm();
        let c = coeffs(self.eta * r, &self.params);
        self.grad_from(d, r, &c)
    }

    #[inline]
    pub fn pair_terms(&self, d: Vec2) -> PairTerms {
        let r = d.norm();
        let c = coeffs(self.eta * r, &self.params);
        let td = self.tensor * d;
        PairTerms {
            force: self.eta * (c.f_r * d + c.f_a * td),
            jacobian: self.jacobian_from(d, r, &c),
            grad: self.grad_from(d, r, &c),
        }
    }

    #[inline]
    fn jacobian_from(&self, d: Vec2, r: f64, c: &Coeffs) -> Mat2 {
        let eta = self.eta;
        let mut jac = eta * (c.f_r * Mat2::identity() + c.f_a * self.tensor);
        if r > 0.0 {
            // d (d/|d|)^T and T d (d/|d|)^T; both vanish continuously at d = 0
            let unit_t = d.transpose() / r;
            let eta2 = eta * eta;
            jac += eta2 * (c.df_r * (d * unit_t) + c.df_a * ((self.tensor * d) * unit_t));
        }
        jac
    }

    #[inline]
    fn grad_from(&self, d: Vec2, r: f64, c: &Coeffs) -> ControlGradient {
        let s = self.eta * r;
        let td = self.tensor * d;
        ControlGradient {
            theta: self.eta * c.f_a * (self.tensor_dtheta * d),
            eta: (c.f_r + s * c.df_r) * d + (c.f_a + s * c.df_a) * td,
        }
    }
}

pub fn total_force(d: Displacement, u: Control, p: &ForceParams) -> Vec2 {
    ForceKernel::new(u, p).force(d.0)
}

pub fn force_jacobian_position(d: Displacement, u: Control, p: &ForceParams) -> Mat2 {
    ForceKernel::new(u, p).jacobian(d.0)
}

pub fn force_grad_control(d: Displacement, u: Control, p: &ForceParams) -> ControlGradient {
    ForceKernel::new(u, p).grad_control(d.0)
}

//! Forward-backward machinery for `minimize psi(x) + indicator_C(x)`.
//!
//! The proximal operator of a box indicator is the projection onto the box,
//! so a forward-backward step is a projected gradient step
//! `x_hat = proj_C(x - gamma * grad psi(x))`. The forward-backward envelope
//!
//! ```text
//! phi_gamma(x) = psi(x) - gamma/2 |grad psi(x)|^2 + 1/(2 gamma) dist^2(x - gamma grad psi(x), C)
//!              = psi(x) + grad psi(x)^T p + 1/(2 gamma) |p|^2,      p = x_hat - x
//! ```
//!
//! is the merit function of the PANOC line search. The second form is the
//! one evaluated: it avoids the cancellation between the two middle terms of
//! the first.

use std::cell::Cell;

use crate::boxset::BoxSet;
use crate::error::{check_len, Error, Result};
use crate::problem::EvalCounters;
use crate::vecops::{all_finite, dot, norm_sq};

/// The smooth part `psi` of the inner problem, plus the box `C`.
pub trait SmoothOracle {
    fn box_c(&self) -> &BoxSet;
    fn psi(&self, x: &[f64]) -> f64;
    fn grad_psi(&self, x: &[f64], grad: &mut [f64]);

    /// Value and gradient at the same point. Implementations may share work
    /// between the two.
    fn psi_grad_psi(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let v = self.psi(x);
        self.grad_psi(x, grad);
        v
    }

    fn dim(&self) -> usize {
        self.box_c().len()
    }
}

impl<T: SmoothOracle + ?Sized> SmoothOracle for &T {
    fn box_c(&self) -> &BoxSet {
        (**self).box_c()
    }
    fn psi(&self, x: &[f64]) -> f64 {
        (**self).psi(x)
    }
    fn grad_psi(&self, x: &[f64], grad: &mut [f64]) {
        (**self).grad_psi(x, grad)
    }
    fn psi_grad_psi(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).psi_grad_psi(x, grad)
    }
}

/// Oracle built from a pair of closures.
pub struct FnOracle<P, G> {
    box_c: BoxSet,
    psi: P,
    grad: G,
}

impl<P, G> FnOracle<P, G>
where
    P: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    pub fn new(box_c: BoxSet, psi: P, grad: G) -> Self {
        Self { box_c, psi, grad }
    }
}

impl<P, G> SmoothOracle for FnOracle<P, G>
where
    P: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    fn box_c(&self) -> &BoxSet {
        &self.box_c
    }
    fn psi(&self, x: &[f64]) -> f64 {
        (self.psi)(x)
    }
    fn grad_psi(&self, x: &[f64], grad: &mut [f64]) {
        (self.grad)(x, grad)
    }
}

/// Wraps an oracle and counts `psi` and `grad psi` evaluations.
pub struct Counted<O> {
    inner: O,
    psi_evals: Cell<u64>,
    grad_evals: Cell<u64>,
}

impl<O: SmoothOracle> Counted<O> {
    pub fn new(inner: O) -> Self {
        Self { inner, psi_evals: Cell::new(0), grad_evals: Cell::new(0) }
    }

    /// Only the `psi_evals` and `grad_psi_evals` fields are populated.
    pub fn counters(&self) -> EvalCounters {
        EvalCounters { psi_evals: self.psi_evals.get(), grad_psi_evals: self.grad_evals.get(), ..Default::default() }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: SmoothOracle> SmoothOracle for Counted<O> {
    fn box_c(&self) -> &BoxSet {
        self.inner.box_c()
    }
    fn psi(&self, x: &[f64]) -> f64 {
        self.psi_evals.set(self.psi_evals.get() + 1);
        self.inner.psi(x)
    }
    fn grad_psi(&self, x: &[f64], grad: &mut [f64]) {
        self.grad_evals.set(self.grad_evals.get() + 1);
        self.inner.grad_psi(x, grad)
    }
    fn psi_grad_psi(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.psi_evals.set(self.psi_evals.get() + 1);
        self.grad_evals.set(self.grad_evals.get() + 1);
        self.inner.psi_grad_psi(x, grad)
    }
}

/// Result of a forward-backward step.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxGradStep {
    pub x_hat: Vec<f64>,
    pub p: Vec<f64>,
}

/// Projected gradient step from a known gradient.
pub fn forward_backward(box_c: &BoxSet, x: &[f64], grad: &[f64], gamma: f64) -> ProxGradStep {
    let mut x_hat = vec![0.0; x.len()];
    let mut p = vec![0.0; x.len()];
    forward_backward_into(box_c, x, grad, gamma, &mut x_hat, &mut p);
    ProxGradStep { x_hat, p }
}

pub(crate) fn forward_backward_into(
    box_c: &BoxSet,
    x: &[f64],
    grad: &[f64],
    gamma: f64,
    x_hat: &mut [f64],
    p: &mut [f64],
) {
    for i in 0..x.len() {
        x_hat[i] = box_c.clamp(i, x[i] - gamma * grad[i]);
        p[i] = x_hat[i] - x[i];
    }
}

/// `T_gamma(x)` and `p = T_gamma(x) - x`, evaluating the gradient at `x`.
pub fn prox_grad_step<O: SmoothOracle + ?Sized>(oracle: &O, x: &[f64], gamma: f64) -> Result<ProxGradStep> {
    check_len(oracle.dim(), x.len())?;
    check_step(gamma)?;
    let mut grad = vec![0.0; x.len()];
    oracle.grad_psi(x, &mut grad);
    if !all_finite(&grad) {
        return Err(Error::NotFinite("gradient of psi"));
    }
    Ok(forward_backward(oracle.box_c(), x, &grad, gamma))
}

/// `R_gamma(x) = (x - T_gamma(x)) / gamma = -p / gamma`.
pub fn fixed_point_residual(p: &[f64], gamma: f64) -> Vec<f64> {
    p.iter().map(|pi| -pi / gamma).collect()
}

/// Forward-backward envelope from the step `p` computed at `gamma`.
#[inline]
pub fn fbe_from_step(psi_x: f64, grad: &[f64], p: &[f64], gamma: f64) -> f64 {
    psi_x + dot(grad, p) + norm_sq(p) / (2.0 * gamma)
}

/// Forward-backward envelope `phi_gamma(x)` of `psi + indicator_C`.
pub fn eval_fbe(box_c: &BoxSet, x: &[f64], psi_x: f64, grad_psi_x: &[f64], gamma: f64) -> f64 {
    let step = forward_backward(box_c, x, grad_psi_x, gamma);
    fbe_from_step(psi_x, grad_psi_x, &step.p, gamma)
}

fn qub_slack(psi_x: f64) -> f64 {
    10.0 * f64::EPSILON * psi_x.abs().max(1.0)
}

/// Quadratic upper bound test from precomputed values.
#[inline]
pub fn qub_satisfied(psi_x_hat: f64, psi_x: f64, grad: &[f64], p: &[f64], lipschitz: f64) -> bool {
    psi_x_hat <= psi_x + dot(grad, p) + 0.5 * lipschitz * norm_sq(p) + qub_slack(psi_x)
}

/// Evaluates `psi(x_hat)` and tests
/// `psi(x_hat) <= psi(x) + grad psi(x)^T p + L/2 |p|^2` (plus a rounding slack).
pub fn qub_holds<O: SmoothOracle + ?Sized>(
    oracle: &O,
    x_hat: &[f64],
    p: &[f64],
    psi_x: f64,
    grad_psi_x: &[f64],
    lipschitz: f64,
) -> bool {
    let psi_hat = oracle.psi(x_hat);
    qub_satisfied(psi_hat, psi_x, grad_psi_x, p, lipschitz)
}

/// Step size `gamma`, Lipschitz estimate `L` and decrease coefficient `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizeState {
    pub gamma: f64,
    pub lipschitz: f64,
    pub sigma: f64,
}

impl StepSizeState {
    /// Derives `sigma = coeff * (1 - gamma L) / (2 gamma)`.
    pub fn new(gamma: f64, lipschitz: f64, sigma_coeff: f64) -> Self {
        Self { gamma, lipschitz, sigma: sigma_rule(gamma, lipschitz, sigma_coeff) }
    }

    /// Checks `gamma L < 1` and `0 < sigma < (1 - gamma L) / (2 gamma)`.
    pub fn is_valid(&self) -> bool {
        let gl = self.gamma * self.lipschitz;
        self.gamma > 0.0
            && self.lipschitz > 0.0
            && gl < 1.0
            && self.sigma > 0.0
            && self.sigma < (1.0 - gl) / (2.0 * self.gamma)
    }
}

#[inline]
pub fn sigma_rule(gamma: f64, lipschitz: f64, coeff: f64) -> f64 {
    coeff * (1.0 - gamma * lipschitz) / (2.0 * gamma)
}

/// Everything known at `x` once the step size has been settled.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSizeUpdate {
    pub state: StepSizeState,
    pub x_hat: Vec<f64>,
    pub p: Vec<f64>,
    pub psi_x: f64,
    pub grad_psi_x: Vec<f64>,
    pub psi_x_hat: f64,
}

/// Halves `gamma` and doubles `L` until the quadratic upper bound holds at
/// `x`. Fails once `gamma` drops below `gamma_min`.
pub fn update_step_size<O: SmoothOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    state: StepSizeState,
    sigma_coeff: f64,
    gamma_min: f64,
) -> Result<StepSizeUpdate> {
    check_len(oracle.dim(), x.len())?;
    check_step(state.gamma)?;
    let mut grad = vec![0.0; x.len()];
    let psi_x = oracle.psi_grad_psi(x, &mut grad);
    if !psi_x.is_finite() || !all_finite(&grad) {
        return Err(Error::NotFinite("psi"));
    }
    let found = settle_step_size(oracle, x, psi_x, &grad, state.gamma, state.lipschitz, gamma_min)?;
    Ok(StepSizeUpdate {
        state: StepSizeState::new(found.gamma, found.lipschitz, sigma_coeff),
        x_hat: found.x_hat,
        p: found.p,
        psi_x,
        grad_psi_x: grad,
        psi_x_hat: found.psi_x_hat,
    })
}

pub(crate) struct SettledStep {
    pub gamma: f64,
    pub lipschitz: f64,
    pub x_hat: Vec<f64>,
    pub p: Vec<f64>,
    pub psi_x_hat: f64,
}

/// Step size loop with `psi(x)` and its gradient already known.
pub(crate) fn settle_step_size<O: SmoothOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    psi_x: f64,
    grad: &[f64],
    mut gamma: f64,
    mut lipschitz: f64,
    gamma_min: f64,
) -> Result<SettledStep> {
    let n = x.len();
    let mut x_hat = vec![0.0; n];
    let mut p = vec![0.0; n];
    loop {
        forward_backward_into(oracle.box_c(), x, grad, gamma, &mut x_hat, &mut p);
        let psi_x_hat = if p.iter().all(|&pi| pi == 0.0) { psi_x } else { oracle.psi(&x_hat) };
        if qub_satisfied(psi_x_hat, psi_x, grad, &p, lipschitz) {
            return Ok(SettledStep { gamma, lipschitz, x_hat, p, psi_x_hat });
        }
        gamma *= 0.5;
        lipschitz *= 2.0;
        if gamma < gamma_min {
            return Err(Error::StepSizeUnderflow { gamma_min });
        }
    }
}

/// Initial Lipschitz estimate and matching step size `gamma_0 = 0.95 / L_0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    pub lipschitz: f64,
    pub gamma: f64,
}

pub const LIPSCHITZ_FD_DELTA: f64 = 1e-4;
const LIPSCHITZ_MIN: f64 = 1e-10;
const LIPSCHITZ_MAX: f64 = 1e10;

/// Forward-difference estimate of the local Lipschitz constant of
/// `grad psi` at `x0`.
pub fn estimate_initial_lipschitz<O: SmoothOracle + ?Sized>(oracle: &O, x0: &[f64]) -> Result<LipschitzEstimate> {
    check_len(oracle.dim(), x0.len())?;
    let mut grad = vec![0.0; x0.len()];
    oracle.grad_psi(x0, &mut grad);
    if !all_finite(&grad) {
        return Err(Error::NotFinite("gradient of psi"));
    }
    estimate_lipschitz_from(oracle, x0, &grad)
}

pub(crate) fn estimate_lipschitz_from<O: SmoothOracle + ?Sized>(
    oracle: &O,
    x0: &[f64],
    grad0: &[f64],
) -> Result<LipschitzEstimate> {
    let d: Vec<f64> = x0.iter().map(|xi| LIPSCHITZ_FD_DELTA * xi.abs().max(1.0)).collect();
    let xd: Vec<f64> = x0.iter().zip(&d).map(|(x, di)| x + di).collect();
    let mut grad_d = vec![0.0; x0.len()];
    oracle.grad_psi(&xd, &mut grad_d);
    if !all_finite(&grad_d) {
        return Err(Error::NotFinite("gradient of psi"));
    }
    let diff: f64 = grad_d.iter().zip(grad0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let lipschitz = if diff == 0.0 { 1.0 } else { (diff / norm_sq(&d).sqrt()).clamp(LIPSCHITZ_MIN, LIPSCHITZ_MAX) };
    Ok(LipschitzEstimate { lipschitz, gamma: 0.95 / lipschitz })
}

fn check_step(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("step size must be positive, got {gamma}")))
    }
}

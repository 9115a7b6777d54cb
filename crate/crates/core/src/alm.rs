//! Augmented Lagrangian outer loop.
//!
//! The general constraints `g(x) in D` are relaxed through a slack `z in D`
//! and the augmented Lagrangian
//!
//! ```text
//! L_S(x, z, y) = f(x) + <y, g(x) - z> + 1/2 |g(x) - z|_S^2
//! ```
//!
//! with a diagonal penalty `S`. Minimizing over `z` in closed form leaves
//!
//! ```text
//! psi(x; y) = f(x) + 1/2 dist_S^2(g(x) + S^-1 y, D)
//! ```
//!
//! which is minimized over `x in C` by PANOC. Between inner solves the
//! multipliers take a projected first-order update and the penalties of the
//! constraints whose violation did not shrink enough are increased.

use std::time::{Duration, Instant};

use crate::boxset::{check_weights, BoxSet};
use crate::error::{check_len, Error, Result};
use crate::lbfgs::DEFAULT_MEMORY;
use crate::panoc::{panoc_solve, stationarity_inf, DirectionProvider, IterationRecord, LbfgsDirection, PanocParams};
use crate::problem::{EvalCounters, ProblemSpec, SolveStatus};
use crate::prox::SmoothOracle;
use crate::structured::{StructuredDirParams, StructuredLbfgsDirection};
use crate::vecops::{all_finite, norm_inf};

#[derive(Debug, Clone, PartialEq)]
pub struct AlmParams {
    /// initial penalty, applied to every constraint
    pub sigma0: f64,
    /// penalty growth factor `Delta > 1`
    pub delta_growth: f64,
    /// required violation decrease ratio `theta in (0, 1)`
    pub theta: f64,
    pub sigma_max: f64,
    /// multipliers are kept in `[-y_max, y_max]`
    pub y_max: f64,
    pub eps0: f64,
    pub eps_final: f64,
    pub delta_final: f64,
    /// inner tolerance shrink factor per outer iteration
    pub rho_eps: f64,
    pub max_outer: usize,
    /// Scale the initial penalty by `max(1, |f(x0)|) / max(1, 1/2 dist^2(g(x0), D))`.
    pub scale_initial_penalty: bool,
    pub max_time: Option<Duration>,
}

impl Default for AlmParams {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            delta_growth: 10.0,
            theta: 0.25,
            sigma_max: 1e9,
            y_max: 1e9,
            eps0: 1.0,
            eps_final: 1e-3,
            delta_final: 1e-3,
            rho_eps: 0.1,
            max_outer: 100,
            scale_initial_penalty: false,
            max_time: None,
        }
    }
}

impl AlmParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_owned()));
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad("theta must lie in (0, 1)");
        }
        if !(self.delta_growth > 1.0) {
            return bad("delta_growth must exceed 1");
        }
        if !(self.eps_final > 0.0 && self.delta_final > 0.0) {
            return bad("final tolerances must be positive");
        }
        if !(self.rho_eps > 0.0 && self.rho_eps < 1.0) {
            return bad("rho_eps must lie in (0, 1)");
        }
        if !(self.sigma0 > 0.0 && self.sigma0 <= self.sigma_max) {
            return bad("sigma0 must lie in (0, sigma_max]");
        }
        if !(self.y_max > 0.0) {
            return bad("y_max must be positive");
        }
        if !(self.eps0 > 0.0) {
            return bad("eps0 must be positive");
        }
        Ok(())
    }
}

/// Outer-loop state between two inner solves.
#[derive(Debug, Clone, PartialEq)]
pub struct AlmState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `g(x) - z` of the previous outer iteration
    pub prev_error: Option<Vec<f64>>,
    pub outer_iter: usize,
    pub eps_inner: f64,
}

/// `z_hat = proj_D(g(x) + S^-1 y)`.
pub fn eval_zhat(g_x: &[f64], y: &[f64], sigma: &[f64], box_d: &BoxSet) -> Vec<f64> {
    (0..g_x.len()).map(|i| box_d.clamp(i, g_x[i] + y[i] / sigma[i])).collect()
}

/// `y_hat = S (g(x) + S^-1 y - proj_D(g(x) + S^-1 y))`, exactly zero where
/// `g(x) + S^-1 y` lies in `D`.
pub fn eval_yhat(g_x: &[f64], y: &[f64], sigma: &[f64], box_d: &BoxSet) -> Vec<f64> {
    (0..g_x.len())
        .map(|i| {
            let w = g_x[i] + y[i] / sigma[i];
            sigma[i] * (w - box_d.clamp(i, w))
        })
        .collect()
}

fn check_state(problem: &ProblemSpec, x: &[f64], y: &[f64], sigma: &[f64]) -> Result<()> {
    check_len(problem.n(), x.len())?;
    check_len(problem.m(), y.len())?;
    check_len(problem.m(), sigma.len())?;
    check_weights(sigma)
}

/// `psi(x; y)` and the minimizing slack `z_hat`.
pub fn eval_psi(problem: &ProblemSpec, x: &[f64], y: &[f64], sigma: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_state(problem, x, y, sigma)?;
    let oracle = AugLagOracle::new(problem, y, sigma);
    let mut gx = vec![0.0; problem.m()];
    let psi = oracle.psi_with_g(x, &mut gx);
    if !psi.is_finite() || !all_finite(&gx) {
        return Err(Error::NotFinite("psi"));
    }
    Ok((psi, eval_zhat(&gx, y, sigma, problem.box_d())))
}

/// `grad psi(x; y) = grad f(x) + grad g(x)^T y_hat(x)`.
pub fn eval_grad_psi(problem: &ProblemSpec, x: &[f64], y: &[f64], sigma: &[f64]) -> Result<Vec<f64>> {
    check_state(problem, x, y, sigma)?;
    let oracle = AugLagOracle::new(problem, y, sigma);
    let mut grad = vec![0.0; problem.n()];
    oracle.grad_psi(x, &mut grad);
    if !all_finite(&grad) {
        return Err(Error::NotFinite("gradient of psi"));
    }
    Ok(grad)
}

/// `y+ = clamp(y + S (g(x) - z_hat), -y_max, y_max)`.
pub fn update_multipliers(y: &[f64], sigma: &[f64], g_x: &[f64], zhat: &[f64], y_max: f64) -> Vec<f64> {
    (0..y.len()).map(|i| (y[i] + sigma[i] * (g_x[i] - zhat[i])).clamp(-y_max, y_max)).collect()
}

/// Raises `sigma_i` by `max(1, Delta |e_i| / |e|_inf)` for every constraint
/// with `|e_i| > theta |e_prev_i|`. Without a previous error nothing changes.
pub fn update_sigma(
    sigma: &[f64],
    e_now: &[f64],
    e_prev: Option<&[f64]>,
    theta: f64,
    delta_growth: f64,
    sigma_max: f64,
) -> Vec<f64> {
    let mut out = sigma.to_vec();
    let Some(e_prev) = e_prev else {
        return out;
    };
    let e_norm = norm_inf(e_now);
    if e_norm == 0.0 {
        return out;
    }
    for i in 0..out.len() {
        if e_now[i].abs() > theta * e_prev[i].abs() {
            let factor = (delta_growth * e_now[i].abs() / e_norm).max(1.0);
            out[i] = (out[i] * factor).min(sigma_max);
        }
    }
    out
}

/// `psi(.; y)` of a problem as a [`SmoothOracle`] for the inner solver.
/// Evaluations go through the problem's counters.
pub struct AugLagOracle<'a> {
    problem: &'a ProblemSpec,
    y: &'a [f64],
    sigma: &'a [f64],
}

impl<'a> AugLagOracle<'a> {
    pub fn new(problem: &'a ProblemSpec, y: &'a [f64], sigma: &'a [f64]) -> Self {
        Self { problem, y, sigma }
    }

    fn psi_with_g(&self, x: &[f64], gx: &mut [f64]) -> f64 {
        self.problem.count_psi();
        let f = self.problem.eval_f(x);
        self.problem.eval_g(x, gx);
        let box_d = self.problem.box_d();
        let penalty: f64 = (0..gx.len())
            .map(|i| {
                let w = gx[i] + self.y[i] / self.sigma[i];
                let d = w - box_d.clamp(i, w);
                self.sigma[i] * d * d
            })
            .sum();
        f + 0.5 * penalty
    }

    fn grad_from_g(&self, x: &[f64], gx: &[f64], grad: &mut [f64]) {
        self.problem.count_grad_psi();
        let yhat = eval_yhat(gx, self.y, self.sigma, self.problem.box_d());
        self.problem.eval_grad_f(x, grad);
        let mut tmp = vec![0.0; grad.len()];
        self.problem.eval_grad_g_prod(x, &yhat, &mut tmp);
        for (gi, ti) in grad.iter_mut().zip(&tmp) {
            *gi += ti;
        }
    }
}

impl SmoothOracle for AugLagOracle<'_> {
    fn box_c(&self) -> &BoxSet {
        self.problem.box_c()
    }

    fn psi(&self, x: &[f64]) -> f64 {
        let mut gx = vec![0.0; self.problem.m()];
        self.psi_with_g(x, &mut gx)
    }

    fn grad_psi(&self, x: &[f64], grad: &mut [f64]) {
        let mut gx = vec![0.0; self.problem.m()];
        self.problem.eval_g(x, &mut gx);
        self.grad_from_g(x, &gx, grad)
    }

    fn psi_grad_psi(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut gx = vec![0.0; self.problem.m()];
        let psi = self.psi_with_g(x, &mut gx);
        self.grad_from_g(x, &gx, grad);
        psi
    }
}

/// Which quasi-Newton direction the inner PANOC solver uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DirectionKind {
    /// L-BFGS on the fixed-point residual
    Lbfgs,
    /// masked L-BFGS on the inactive coordinates
    Structured { include_hessian_vec: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolver {
    pub panoc: PanocParams,
    pub direction: DirectionKind,
    pub memory: usize,
}

impl Default for InnerSolver {
    fn default() -> Self {
        Self { panoc: PanocParams::default(), direction: DirectionKind::Lbfgs, memory: DEFAULT_MEMORY }
    }
}

impl InnerSolver {
    pub fn make_direction(&self, n: usize) -> Box<dyn DirectionProvider> {
        match self.direction {
            DirectionKind::Lbfgs => Box::new(LbfgsDirection::new(n, self.memory)),
            DirectionKind::Structured { include_hessian_vec } => Box::new(StructuredLbfgsDirection::new(
                n,
                self.memory,
                StructuredDirParams { include_hessian_vec, ..Default::default() },
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// inner solves that stopped without reaching their tolerance
    pub inner_failures: usize,
    pub forced_steps: usize,
    pub counters: EvalCounters,
    /// `|x - proj_C(x - grad psi(x))|_inf` of the last inner solve
    pub final_stationarity: f64,
    /// `|g(x) - z_hat|_inf`
    pub final_violation: f64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlmOutcome {
    pub x: Vec<f64>,
    /// updated multipliers
    pub y: Vec<f64>,
    /// multipliers and penalties that defined the last inner problem
    pub y_inner: Vec<f64>,
    pub sigma_inner: Vec<f64>,
    pub report: SolveReport,
    /// one trace per inner solve when `record_trace` is set on the inner solver
    pub traces: Vec<Vec<IterationRecord>>,
}

impl AlmOutcome {
    /// Recomputes both termination measures at the returned point.
    pub fn verify(&self, problem: &ProblemSpec) -> Result<KktCheck> {
        verify_kkt(problem, &self.x, &self.y_inner, &self.sigma_inner)
    }
}

/// Termination measures recomputed from fresh evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktCheck {
    pub stationarity: f64,
    pub violation: f64,
}

impl KktCheck {
    pub fn passes(&self, eps: f64, delta: f64) -> bool {
        self.stationarity <= eps && self.violation <= delta
    }
}

pub fn verify_kkt(problem: &ProblemSpec, x: &[f64], y: &[f64], sigma: &[f64]) -> Result<KktCheck> {
    let grad = eval_grad_psi(problem, x, y, sigma)?;
    let (_, zhat) = eval_psi(problem, x, y, sigma)?;
    let gx = problem.g_vec(x)?;
    let violation = gx.iter().zip(&zhat).fold(0.0, |m: f64, (g, z)| m.max((g - z).abs()));
    Ok(KktCheck { stationarity: stationarity_inf(problem.box_c(), x, &grad), violation })
}

/// Runs the augmented Lagrangian method from `(x0, y0)`.
pub fn alm_solve(
    problem: &ProblemSpec,
    x0: &[f64],
    y0: &[f64],
    params: &AlmParams,
    inner: &InnerSolver,
) -> Result<AlmOutcome> {
    params.validate()?;
    inner.panoc.validate()?;
    check_len(problem.n(), x0.len())?;
    check_len(problem.m(), y0.len())?;
    if !all_finite(x0) || !all_finite(y0) {
        return Err(Error::NotFinite("initial guess"));
    }
    let started = Instant::now();
    let start_counters = problem.counters();
    let (n, m) = (problem.n(), problem.m());

    let x = problem.box_c().project(x0)?;
    let y: Vec<f64> = y0.iter().map(|v| v.clamp(-params.y_max, params.y_max)).collect();
    let mut sigma0 = params.sigma0;
    if params.scale_initial_penalty && m > 0 {
        let f0 = problem.eval_f(&x);
        let g0 = problem.g_vec(&x)?;
        let viol = crate::boxset::dist_sq_weighted(&g0, problem.box_d(), &vec![1.0; m])?;
        sigma0 = (f0.abs().max(1.0) / (0.5 * viol).max(1.0)).clamp(f64::MIN_POSITIVE, params.sigma_max);
    }
    let mut state = AlmState {
        x,
        y,
        sigma: vec![sigma0; m],
        prev_error: None,
        outer_iter: 0,
        eps_inner: if m == 0 { params.eps_final } else { params.eps0 },
    };

    let mut report = SolveReport {
        status: SolveStatus::MaxOuterIter,
        outer_iterations: 0,
        inner_iterations: 0,
        inner_failures: 0,
        forced_steps: 0,
        counters: EvalCounters::default(),
        final_stationarity: f64::INFINITY,
        final_violation: f64::INFINITY,
        wall_time: Duration::ZERO,
    };
    let mut traces = Vec::new();
    let mut y_inner = state.y.clone();
    let mut sigma_inner = state.sigma.clone();

    while state.outer_iter < params.max_outer {
        state.outer_iter += 1;
        report.outer_iterations = state.outer_iter;
        y_inner.clone_from(&state.y);
        sigma_inner.clone_from(&state.sigma);

        let oracle = AugLagOracle::new(problem, &y_inner, &sigma_inner);
        let mut dir = inner.make_direction(n);
        let mut panoc = inner.panoc.clone();
        panoc.epsilon = state.eps_inner;
        if let Some(limit) = params.max_time {
            panoc.max_time = Some(limit.saturating_sub(started.elapsed()));
        }
        let mut r = panoc_solve(&oracle, &state.x, &panoc, dir.as_mut())?;
        if panoc.record_trace {
            traces.push(std::mem::take(&mut r.trace));
        }
        state.x = r.x;
        report.inner_iterations += r.iterations;
        report.forced_steps += r.forced_steps;
        report.final_stationarity = r.final_residual_inf;
        match r.status {
            SolveStatus::NotFinite | SolveStatus::Interrupted => {
                report.status = r.status;
                break;
            }
            SolveStatus::Converged => {}
            _ => report.inner_failures += 1,
        }
        let inner_ok = r.status == SolveStatus::Converged && r.final_residual_inf <= params.eps_final;

        let gx = problem.g_vec(&state.x)?;
        if !all_finite(&gx) {
            report.status = SolveStatus::NotFinite;
            break;
        }
        let zhat = eval_zhat(&gx, &y_inner, &sigma_inner, problem.box_d());
        let e: Vec<f64> = gx.iter().zip(&zhat).map(|(g, z)| g - z).collect();
        report.final_violation = norm_inf(&e);
        state.y = update_multipliers(&y_inner, &sigma_inner, &gx, &zhat, params.y_max);

        if inner_ok && report.final_violation <= params.delta_final {
            report.status = SolveStatus::Converged;
            break;
        }
        if m == 0 {
            report.status = r.status;
            break;
        }
        if params.max_time.is_some_and(|t| started.elapsed() > t) {
            report.status = SolveStatus::Interrupted;
            break;
        }
        state.sigma = update_sigma(
            &state.sigma,
            &e,
            state.prev_error.as_deref(),
            params.theta,
            params.delta_growth,
            params.sigma_max,
        );
        state.prev_error = Some(e);
        state.eps_inner = (params.rho_eps * state.eps_inner).max(params.eps_final);
    }

    report.counters = accumulate(problem.counters(), start_counters);
    report.wall_time = started.elapsed();
    Ok(AlmOutcome { x: state.x, y: state.y, y_inner, sigma_inner, report, traces })
}

fn accumulate(now: EvalCounters, before: EvalCounters) -> EvalCounters {
    EvalCounters {
        f_evals: now.f_evals - before.f_evals,
        grad_f_evals: now.grad_f_evals - before.grad_f_evals,
        g_evals: now.g_evals - before.g_evals,
        grad_g_prod_evals: now.grad_g_prod_evals - before.grad_g_prod_evals,
        psi_evals: now.psi_evals - before.psi_evals,
        grad_psi_evals: now.grad_psi_evals - before.grad_psi_evals,
    }
}

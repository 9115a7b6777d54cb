//! PANOC for `minimize psi(x)` over a box.
//!
//! Each iteration blends the projected gradient step `p` with a quasi-Newton
//! direction `q`,
//!
//! ```text
//! x+ = proj_C(x + (1 - tau) p + tau q),
//! ```
//!
//! halving `tau` from 1 until the forward-backward envelope decreases
//! sufficiently. Two acceptance tests are available:
//!
//! * [`LineSearch::Original`]: `phi_{gamma_k}(x+) <= phi_{gamma_k}(x) - sigma_k |p|^2`,
//!   with the step size refreshed at `x+` after acceptance;
//! * [`LineSearch::Improved`]: the step size is refreshed at every candidate
//!   first, and the candidate's own `gamma_{k+1}` is used on the left-hand
//!   side. Since the envelope is nonincreasing in `gamma`, this test implies
//!   the original one. Candidates that would force a step size collapse are
//!   rejected.
//!
//! Once `tau` drops below `tau_min` (or the line search budget runs out) the
//! plain projected gradient point `x_hat` is taken.

use std::time::{Duration, Instant};

use crate::boxset::BoxSet;
use crate::error::{check_len, Error, Result};
use crate::lbfgs::{LbfgsBuffer, LbfgsMode};
use crate::problem::{EvalCounters, SolveStatus};
use crate::prox::{
    estimate_lipschitz_from, fbe_from_step, forward_backward, settle_step_size, sigma_rule, Counted, LipschitzEstimate,
    SmoothOracle,
};
use crate::vecops::{all_finite, norm_sq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LineSearch {
    Original,
    Improved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanocParams {
    pub max_iter: usize,
    /// Tolerance on `|x - proj_C(x - grad psi(x))|_inf`.
    pub epsilon: f64,
    pub tau_min: f64,
    pub line_search: LineSearch,
    pub max_ls_iter: usize,
    /// The coefficient in `sigma = coeff * (1 - gamma L) / (2 gamma)`.
    pub sigma_coeff: f64,
    /// Skip the finite-difference estimate and start from this `L_0`.
    pub initial_lipschitz: Option<f64>,
    /// Abort once `gamma < gamma_min_factor * gamma_0`.
    pub gamma_min_factor: f64,
    pub max_time: Option<Duration>,
    pub record_trace: bool,
}

impl Default for PanocParams {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            epsilon: 1e-8,
            tau_min: 1.0 / 256.0,
            line_search: LineSearch::Improved,
            max_ls_iter: 20,
            sigma_coeff: 0.1,
            initial_lipschitz: None,
            gamma_min_factor: 1e-12,
            max_time: None,
            record_trace: false,
        }
    }
}

impl PanocParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_owned()));
        if !(self.tau_min > 0.0 && self.tau_min < 1.0) {
            return bad("tau_min must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.sigma_coeff > 0.0 && self.sigma_coeff < 1.0) {
            return bad("sigma_coeff must lie in (0, 1)");
        }
        if let Some(l) = self.initial_lipschitz {
            if !(l > 0.0 && l.is_finite()) {
                return bad("initial_lipschitz must be positive and finite");
            }
        }
        Ok(())
    }
}

/// Read-only view of an iterate handed to direction providers.
#[derive(Debug, Clone, Copy)]
pub struct IterateView<'a> {
    pub x: &'a [f64],
    pub grad: &'a [f64],
    /// projected gradient step at `x` under `gamma`
    pub p: &'a [f64],
    pub gamma: f64,
}

/// Source of the quasi-Newton direction `q^k`.
pub trait DirectionProvider {
    fn initialize(&mut self, at: &IterateView<'_>);

    /// Called once per accepted step. A step size change is visible as
    /// `old.gamma != new.gamma`.
    fn update(&mut self, old: &IterateView<'_>, new: &IterateView<'_>);

    fn compute(&mut self, oracle: &dyn SmoothOracle, at: &IterateView<'_>) -> Vec<f64>;

    /// Active index set used by the last `compute`, for providers that split
    /// coordinates.
    fn last_active_set(&self) -> Option<&[usize]> {
        None
    }
}

/// L-BFGS on the fixed-point residual `R_gamma`, as in the original PANOC.
#[derive(Debug, Clone)]
pub struct LbfgsDirection {
    buffer: LbfgsBuffer,
}

impl LbfgsDirection {
    pub fn new(n: usize, memory: usize) -> Self {
        Self { buffer: LbfgsBuffer::new(n, memory, LbfgsMode::Standard) }
    }

    pub fn buffer(&self) -> &LbfgsBuffer {
        &self.buffer
    }
}

impl DirectionProvider for LbfgsDirection {
    fn initialize(&mut self, _at: &IterateView<'_>) {
        self.buffer.reset();
    }

    fn update(&mut self, old: &IterateView<'_>, new: &IterateView<'_>) {
        if old.gamma != new.gamma {
            // pairs gathered under another gamma describe another residual map
            self.buffer.reset();
            return;
        }
        let gamma = new.gamma;
        let s: Vec<f64> = new.x.iter().zip(old.x).map(|(a, b)| a - b).collect();
        // R(x) = -p / gamma
        let y: Vec<f64> = new.p.iter().zip(old.p).map(|(pn, po)| (po - pn) / gamma).collect();
        self.buffer.push(&s, &y);
    }

    fn compute(&mut self, _oracle: &dyn SmoothOracle, at: &IterateView<'_>) -> Vec<f64> {
        if self.buffer.is_empty() {
            return at.p.to_vec();
        }
        // q = -H R = H p / gamma
        let mut q = self.buffer.apply(at.p);
        for qi in &mut q {
            *qi /= at.gamma;
        }
        q
    }
}

/// One accepted PANOC iteration, recorded when `record_trace` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    /// iterate before the step
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub active: Option<Vec<usize>>,
    pub tau: f64,
    pub gamma: f64,
    pub gamma_next: f64,
    pub sigma: f64,
    pub p_norm_sq: f64,
    /// `phi_{gamma_k}(x^k)`
    pub phi: f64,
    /// `phi_{gamma_k}(x^{k+1})`
    pub phi_next_old_gamma: f64,
    /// `phi_{gamma_{k+1}}(x^{k+1})`
    pub phi_next: f64,
    /// accepted at `tau = 0` without passing the decrease test
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanocResult {
    pub x: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub final_residual_inf: f64,
    pub gamma: f64,
    pub lipschitz: f64,
    pub counters: EvalCounters,
    pub forced_steps: usize,
    pub trace: Vec<IterationRecord>,
}

/// `|x - proj_C(x - grad)|_inf`, the unit-step stationarity measure.
pub fn stationarity_inf(box_c: &BoxSet, x: &[f64], grad: &[f64]) -> f64 {
    x.iter().zip(grad).enumerate().fold(0.0, |m, (i, (&xi, &gi))| m.max((xi - box_c.clamp(i, xi - gi)).abs()))
}

struct Iterate {
    x: Vec<f64>,
    grad: Vec<f64>,
    x_hat: Vec<f64>,
    p: Vec<f64>,
    gamma: f64,
    lipschitz: f64,
    sigma: f64,
    phi: f64,
}

impl Iterate {
    fn view(&self) -> IterateView<'_> {
        IterateView { x: &self.x, grad: &self.grad, p: &self.p, gamma: self.gamma }
    }
}

#[allow(clippy::too_many_arguments)]
fn settle<O: SmoothOracle + ?Sized>(
    oracle: &O,
    x: Vec<f64>,
    psi: f64,
    grad: Vec<f64>,
    gamma: f64,
    lipschitz: f64,
    sigma_coeff: f64,
    gamma_min: f64,
) -> Result<Iterate> {
    let s = settle_step_size(oracle, &x, psi, &grad, gamma, lipschitz, gamma_min)?;
    let phi = fbe_from_step(psi, &grad, &s.p, s.gamma);
    Ok(Iterate {
        x,
        grad,
        x_hat: s.x_hat,
        p: s.p,
        gamma: s.gamma,
        lipschitz: s.lipschitz,
        sigma: sigma_rule(s.gamma, s.lipschitz, sigma_coeff),
        phi,
    })
}

/// Runs PANOC from `x0` (projected onto `C` first).
///
/// Invalid arguments are reported as `Err`; every solver outcome, including
/// failures, comes back as a [`PanocResult`] with the matching status.
pub fn panoc_solve<O: SmoothOracle + ?Sized>(
    oracle: &O,
    x0: &[f64],
    params: &PanocParams,
    dir: &mut dyn DirectionProvider,
) -> Result<PanocResult> {
    params.validate()?;
    check_len(oracle.dim(), x0.len())?;
    let started = Instant::now();
    let oracle = Counted::new(oracle);
    let box_c = oracle.box_c();
    let n = x0.len();

    let x = box_c.project(x0)?;
    let mut grad = vec![0.0; n];
    let psi = oracle.psi_grad_psi(&x, &mut grad);

    let mut result = PanocResult {
        x: x.clone(),
        status: SolveStatus::NotFinite,
        iterations: 0,
        final_residual_inf: f64::INFINITY,
        gamma: f64::NAN,
        lipschitz: f64::NAN,
        counters: EvalCounters::default(),
        forced_steps: 0,
        trace: Vec::new(),
    };
    if !psi.is_finite() || !all_finite(&grad) {
        result.counters = oracle.counters();
        return Ok(result);
    }

    let est = match params.initial_lipschitz {
        Some(lipschitz) => LipschitzEstimate { lipschitz, gamma: 0.95 / lipschitz },
        None => match estimate_lipschitz_from(&oracle, &x, &grad) {
            Ok(est) => est,
            Err(_) => {
                result.counters = oracle.counters();
                return Ok(result);
            }
        },
    };
    let gamma_min = params.gamma_min_factor * est.gamma;
    let sc = params.sigma_coeff;

    let mut cur = match settle(&oracle, x, psi, grad, est.gamma, est.lipschitz, sc, gamma_min) {
        Ok(it) => it,
        Err(_) => {
            result.counters = oracle.counters();
            return Ok(result);
        }
    };
    dir.initialize(&cur.view());

    let finish = |cur: &Iterate, mut result: PanocResult, status, iterations, counters| {
        result.final_residual_inf = stationarity_inf(box_c, &cur.x, &cur.grad);
        result.x = cur.x.clone();
        result.gamma = cur.gamma;
        result.lipschitz = cur.lipschitz;
        result.status = status;
        result.iterations = iterations;
        result.counters = counters;
        result
    };

    for k in 0..params.max_iter {
        if stationarity_inf(box_c, &cur.x, &cur.grad) <= params.epsilon {
            return Ok(finish(&cur, result, SolveStatus::Converged, k, oracle.counters()));
        }
        if params.max_time.is_some_and(|t| started.elapsed() > t) {
            return Ok(finish(&cur, result, SolveStatus::Interrupted, k, oracle.counters()));
        }

        let mut q = dir.compute(&oracle, &cur.view());
        if q.len() != n || !all_finite(&q) {
            q = cur.p.clone();
        }
        let p_norm_sq = norm_sq(&cur.p);
        let target = cur.phi - cur.sigma * p_norm_sq;

        let mut tau = 1.0;
        let mut accepted = None;
        for ls in 0..=params.max_ls_iter {
            if tau < params.tau_min || ls == params.max_ls_iter {
                tau = 0.0;
            }
            let cand_x: Vec<f64> = if tau == 0.0 {
                cur.x_hat.clone()
            } else {
                // kept in C so that phi <= psi holds at every iterate
                (0..n).map(|i| box_c.clamp(i, cur.x[i] + (1.0 - tau) * cur.p[i] + tau * q[i])).collect()
            };
            let mut cand_grad = vec![0.0; n];
            let cand_psi = oracle.psi_grad_psi(&cand_x, &mut cand_grad);
            if !cand_psi.is_finite() || !all_finite(&cand_grad) {
                if tau == 0.0 {
                    return Ok(finish(&cur, result, SolveStatus::NotFinite, k, oracle.counters()));
                }
                tau *= 0.5;
                continue;
            }
            let step_old = forward_backward(box_c, &cand_x, &cand_grad, cur.gamma);
            let phi_old_gamma = fbe_from_step(cand_psi, &cand_grad, &step_old.p, cur.gamma);

            match params.line_search {
                LineSearch::Original => {
                    let passed = phi_old_gamma <= target;
                    if passed || tau == 0.0 {
                        let cand =
                            settle(&oracle, cand_x, cand_psi, cand_grad, cur.gamma, cur.lipschitz, sc, gamma_min);
                        match cand {
                            Ok(next) => accepted = Some((next, tau, !passed, phi_old_gamma)),
                            Err(_) => return Ok(finish(&cur, result, SolveStatus::NotFinite, k, oracle.counters())),
                        }
                        break;
                    }
                }
                LineSearch::Improved => {
                    let cand = settle(&oracle, cand_x, cand_psi, cand_grad, cur.gamma, cur.lipschitz, sc, gamma_min);
                    match cand {
                        Ok(next) => {
                            let passed = next.phi <= target;
                            if passed || tau == 0.0 {
                                accepted = Some((next, tau, !passed, phi_old_gamma));
                                break;
                            }
                        }
                        Err(_) if tau == 0.0 => {
                            return Ok(finish(&cur, result, SolveStatus::NotFinite, k, oracle.counters()))
                        }
                        // gamma collapsed at this candidate: reject it
                        Err(_) => {}
                    }
                }
            }
            tau *= 0.5;
        }
        let (next, tau, forced, phi_next_old_gamma) = accepted.expect("the line search always terminates at tau = 0");

        if forced {
            result.forced_steps += 1;
        }
        if params.record_trace {
            result.trace.push(IterationRecord {
                k,
                x: cur.x.clone(),
                p: cur.p.clone(),
                q: q.clone(),
                active: dir.last_active_set().map(<[usize]>::to_vec),
                tau,
                gamma: cur.gamma,
                gamma_next: next.gamma,
                sigma: cur.sigma,
                p_norm_sq,
                phi: cur.phi,
                phi_next_old_gamma,
                phi_next: next.phi,
                forced,
            });
        }
        dir.update(&cur.view(), &next.view());
        cur = next;
    }

    let status = if stationarity_inf(box_c, &cur.x, &cur.grad) <= params.epsilon {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIter
    };
    Ok(finish(&cur, result, status, params.max_iter, oracle.counters()))
}

//! Problem representation and evaluation bookkeeping.

use std::cell::Cell;
use std::fmt;

use crate::boxset::BoxSet;
use crate::error::{check_len, Result};

/// A nonlinear program
///
/// ```text
/// minimize f(x)  subject to  x in C,  g(x) in D
/// ```
///
/// with `C` and `D` rectangular. Gradients are supplied analytically; the
/// constraint Jacobian is only ever needed as the product `grad g(x)^T v`.
///
/// Implementations must be deterministic: the same input always yields the
/// same output, bit for bit. The line searches rely on it.
pub trait Problem {
    fn box_c(&self) -> &BoxSet;
    fn box_d(&self) -> &BoxSet;
    fn f(&self, x: &[f64]) -> f64;
    fn grad_f(&self, x: &[f64], grad: &mut [f64]);
    fn g(&self, x: &[f64], gx: &mut [f64]);
    /// Writes `grad g(x)^T v` into `out`.
    fn grad_g_prod(&self, x: &[f64], v: &[f64], out: &mut [f64]);
}

/// Number of evaluations of each callback.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounters {
    pub f_evals: u64,
    pub grad_f_evals: u64,
    pub g_evals: u64,
    pub grad_g_prod_evals: u64,
    pub psi_evals: u64,
    pub grad_psi_evals: u64,
}

impl std::ops::Add for EvalCounters {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            f_evals: self.f_evals + o.f_evals,
            grad_f_evals: self.grad_f_evals + o.grad_f_evals,
            g_evals: self.g_evals + o.g_evals,
            grad_g_prod_evals: self.grad_g_prod_evals + o.grad_g_prod_evals,
            psi_evals: self.psi_evals + o.psi_evals,
            grad_psi_evals: self.grad_psi_evals + o.grad_psi_evals,
        }
    }
}

impl std::ops::AddAssign for EvalCounters {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Outcome of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    MaxOuterIter,
    NotFinite,
    Interrupted,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "Converged",
            SolveStatus::MaxIter => "MaxIter",
            SolveStatus::MaxOuterIter => "MaxOuterIter",
            SolveStatus::NotFinite => "NotFinite",
            SolveStatus::Interrupted => "Interrupted",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A [`Problem`] together with its evaluation counters.
///
/// Counters live in `Cell`s so evaluation works through a shared reference;
/// a `ProblemSpec` is therefore `Send` but not `Sync`, and one instance
/// serves one solver at a time.
pub struct ProblemSpec {
    problem: Box<dyn Problem + Send>,
    counters: Cell<EvalCounters>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("n", &self.n())
            .field("m", &self.m())
            .field("counters", &self.counters.get())
            .finish()
    }
}

macro_rules! bump {
    ($self:ident, $field:ident) => {{
        let mut c = $self.counters.get();
        c.$field += 1;
        $self.counters.set(c);
    }};
}

impl ProblemSpec {
    pub fn new<P: Problem + Send + 'static>(problem: P) -> Self {
        Self { problem: Box::new(problem), counters: Cell::new(EvalCounters::default()) }
    }

    pub fn n(&self) -> usize {
        self.problem.box_c().len()
    }

    pub fn m(&self) -> usize {
        self.problem.box_d().len()
    }

    pub fn box_c(&self) -> &BoxSet {
        self.problem.box_c()
    }

    pub fn box_d(&self) -> &BoxSet {
        self.problem.box_d()
    }

    pub fn counters(&self) -> EvalCounters {
        self.counters.get()
    }

    pub fn reset_counters(&self) {
        self.counters.set(EvalCounters::default());
    }

    pub(crate) fn count_psi(&self) {
        bump!(self, psi_evals);
    }

    pub(crate) fn count_grad_psi(&self) {
        bump!(self, grad_psi_evals);
    }

    pub fn eval_f(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n());
        bump!(self, f_evals);
        self.problem.f(x)
    }

    pub fn eval_grad_f(&self, x: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.n());
        bump!(self, grad_f_evals);
        self.problem.grad_f(x, grad)
    }

    pub fn eval_g(&self, x: &[f64], gx: &mut [f64]) {
        debug_assert_eq!(gx.len(), self.m());
        bump!(self, g_evals);
        self.problem.g(x, gx)
    }

    pub fn eval_grad_g_prod(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.m());
        debug_assert_eq!(out.len(), self.n());
        bump!(self, grad_g_prod_evals);
        self.problem.grad_g_prod(x, v, out)
    }

    /// Length-checked `g(x)` returning a fresh vector.
    pub fn g_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n(), x.len())?;
        let mut gx = vec![0.0; self.m()];
        self.eval_g(x, &mut gx);
        Ok(gx)
    }
}

/// A [`Problem`] assembled from closures, mostly for tests and small
/// examples.
pub struct FnProblem<F, GF, G, GG> {
    pub box_c: BoxSet,
    pub box_d: BoxSet,
    pub f: F,
    pub grad_f: GF,
    pub g: G,
    pub grad_g_prod: GG,
}

impl<F, GF, G, GG> Problem for FnProblem<F, GF, G, GG>
where
    F: Fn(&[f64]) -> f64,
    GF: Fn(&[f64], &mut [f64]),
    G: Fn(&[f64], &mut [f64]),
    GG: Fn(&[f64], &[f64], &mut [f64]),
{
    fn box_c(&self) -> &BoxSet {
        &self.box_c
    }
    fn box_d(&self) -> &BoxSet {
        &self.box_d
    }
    fn f(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn grad_f(&self, x: &[f64], grad: &mut [f64]) {
        (self.grad_f)(x, grad)
    }
    fn g(&self, x: &[f64], gx: &mut [f64]) {
        (self.g)(x, gx)
    }
    fn grad_g_prod(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        (self.grad_g_prod)(x, v, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_problem() -> ProblemSpec {
        ProblemSpec::new(FnProblem {
            box_c: BoxSet::unbounded(1),
            box_d: BoxSet::new(vec![f64::NEG_INFINITY], vec![1.0]).unwrap(),
            f: |x: &[f64]| (x[0] - 2.0).powi(2),
            grad_f: |x: &[f64], g: &mut [f64]| g[0] = 2.0 * (x[0] - 2.0),
            g: |x: &[f64], gx: &mut [f64]| gx[0] = x[0],
            grad_g_prod: |_: &[f64], v: &[f64], out: &mut [f64]| out[0] = v[0],
        })
    }

    #[test]
    fn counters_track_each_callback() {
        let p = scalar_problem();
        let mut buf = [0.0];
        p.eval_f(&[0.0]);
        p.eval_f(&[1.0]);
        p.eval_grad_f(&[0.0], &mut buf);
        p.eval_g(&[0.0], &mut buf);
        p.eval_grad_g_prod(&[0.0], &[1.0], &mut buf);
        let c = p.counters();
        assert_eq!((c.f_evals, c.grad_f_evals, c.g_evals, c.grad_g_prod_evals), (2, 1, 1, 1));
        assert_eq!((c.psi_evals, c.grad_psi_evals), (0, 0));
        p.reset_counters();
        assert_eq!(p.counters(), EvalCounters::default());
    }

    #[test]
    fn dimensions_come_from_boxes() {
        let p = scalar_problem();
        assert_eq!((p.n(), p.m()), (1, 1));
        assert!(p.g_vec(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn counters_add() {
        let a = EvalCounters { f_evals: 1, psi_evals: 2, ..Default::default() };
        let mut b = EvalCounters { f_evals: 3, grad_psi_evals: 4, ..Default::default() };
        b += a;
        assert_eq!(b, EvalCounters { f_evals: 4, psi_evals: 2, grad_psi_evals: 4, ..Default::default() });
    }
}

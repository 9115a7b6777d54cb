//! Structured PANOC directions for box-constrained `psi`.
//!
//! With `h` the indicator of a box, the Jacobian of the fixed-point residual
//! splits along the coordinates whose gradient step lands on or beyond a
//! bound (the active set `K`) and the rest (`J`). A semismooth Newton step
//! then reads
//!
//! ```text
//! q_K = p_K
//! hess_JJ psi(x) q_J = -grad_J psi(x) - hess_JK psi(x) q_K
//! ```
//!
//! The `J`-block inverse is approximated by a masked L-BFGS estimate of the
//! Hessian of `psi`. The cross term `hess_JK q_K` is either obtained from a
//! forward difference of `grad psi` (one extra gradient evaluation) or
//! dropped.

use crate::boxset::BoxSet;
use crate::lbfgs::{LbfgsBuffer, LbfgsMode};
use crate::panoc::{DirectionProvider, IterateView};
use crate::prox::SmoothOracle;
use crate::vecops::{all_finite, norm_inf};

/// Active (`K`) and inactive (`J`) coordinates, both sorted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexSplit {
    pub active: Vec<usize>,
    pub inactive: Vec<usize>,
}

/// `i` is active iff `x_i - gamma grad_i <= lower_i` or `upper_i <= x_i - gamma grad_i`.
pub fn split_indices(x: &[f64], grad_psi_x: &[f64], gamma: f64, box_c: &BoxSet) -> IndexSplit {
    let mut split = IndexSplit::default();
    for (i, (&xi, &gi)) in x.iter().zip(grad_psi_x).enumerate() {
        let t = xi - gamma * gi;
        if t <= box_c.lower()[i] || box_c.upper()[i] <= t {
            split.active.push(i);
        } else {
            split.inactive.push(i);
        }
    }
    split
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuredDirParams {
    pub include_hessian_vec: bool,
    /// relative finite-difference step for the cross term
    pub fd_step: f64,
}

impl Default for StructuredDirParams {
    fn default() -> Self {
        Self { include_hessian_vec: false, fd_step: f64::EPSILON.sqrt() }
    }
}

/// Forward difference `(grad psi(x + h q) - grad psi(x)) / h` restricted to
/// `J`, where `q_k_padded` carries `q_K` and zeros elsewhere. Costs exactly
/// one gradient evaluation.
pub fn fd_hessian_vec_term(
    oracle: &dyn SmoothOracle,
    x: &[f64],
    grad_psi_x: &[f64],
    q_k_padded: &[f64],
    split: &IndexSplit,
    fd_step: f64,
) -> Vec<f64> {
    let h = fd_step * (1.0 + norm_inf(x)) / norm_inf(q_k_padded).max(f64::EPSILON);
    let xh: Vec<f64> = x.iter().zip(q_k_padded).map(|(xi, qi)| xi + h * qi).collect();
    let mut gh = vec![0.0; x.len()];
    oracle.grad_psi(&xh, &mut gh);
    if !(h > 0.0 && h.is_finite()) {
        return vec![0.0; split.inactive.len()];
    }
    split.inactive.iter().map(|&j| (gh[j] - grad_psi_x[j]) / h).collect()
}

/// Structured direction at `x`. `p` must be the projected gradient step at
/// `(x, gamma)`. Returns `None` if the finite-difference gradient is not
/// finite; callers then fall back to `p`.
pub fn structured_direction(
    oracle: &dyn SmoothOracle,
    x: &[f64],
    p: &[f64],
    gamma: f64,
    grad_psi_x: &[f64],
    buffer: &LbfgsBuffer,
    params: &StructuredDirParams,
) -> (IndexSplit, Option<Vec<f64>>) {
    let split = split_indices(x, grad_psi_x, gamma, oracle.box_c());
    let q = direction_for_split(oracle, x, p, grad_psi_x, buffer, params, &split);
    (split, q)
}

fn direction_for_split(
    oracle: &dyn SmoothOracle,
    x: &[f64],
    p: &[f64],
    grad_psi_x: &[f64],
    buffer: &LbfgsBuffer,
    params: &StructuredDirParams,
    split: &IndexSplit,
) -> Option<Vec<f64>> {
    let mut q = p.to_vec();
    if split.inactive.is_empty() {
        return Some(q);
    }
    let mut rhs: Vec<f64> = split.inactive.iter().map(|&j| -grad_psi_x[j]).collect();
    if params.include_hessian_vec {
        let mut padded = vec![0.0; x.len()];
        for &k in &split.active {
            padded[k] = p[k];
        }
        let hv = fd_hessian_vec_term(oracle, x, grad_psi_x, &padded, split, params.fd_step);
        if !all_finite(&hv) {
            return None;
        }
        for (r, h) in rhs.iter_mut().zip(&hv) {
            *r -= h;
        }
    }
    let q_j = buffer.apply_masked(&rhs, &split.inactive);
    for (&j, qj) in split.inactive.iter().zip(q_j) {
        q[j] = qj;
    }
    Some(q)
}

/// Direction provider for structured PANOC. Its masked L-BFGS pairs live in
/// gradient space and are kept across step size changes, since they estimate
/// the Hessian of `psi`, which does not depend on `gamma`.
#[derive(Debug, Clone)]
pub struct StructuredLbfgsDirection {
    buffer: LbfgsBuffer,
    params: StructuredDirParams,
    last_split: IndexSplit,
}

impl StructuredLbfgsDirection {
    pub fn new(n: usize, memory: usize, params: StructuredDirParams) -> Self {
        Self { buffer: LbfgsBuffer::new(n, memory, LbfgsMode::Masked), params, last_split: IndexSplit::default() }
    }

    pub fn buffer(&self) -> &LbfgsBuffer {
        &self.buffer
    }

    pub fn last_split(&self) -> &IndexSplit {
        &self.last_split
    }
}

impl DirectionProvider for StructuredLbfgsDirection {
    fn initialize(&mut self, _at: &IterateView<'_>) {
        self.buffer.reset();
    }

    fn update(&mut self, old: &IterateView<'_>, new: &IterateView<'_>) {
        let s: Vec<f64> = new.x.iter().zip(old.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new.grad.iter().zip(old.grad).map(|(a, b)| a - b).collect();
        self.buffer.push(&s, &y);
    }

    fn compute(&mut self, oracle: &dyn SmoothOracle, at: &IterateView<'_>) -> Vec<f64> {
        let (split, q) = structured_direction(oracle, at.x, at.p, at.gamma, at.grad, &self.buffer, &self.params);
        self.last_split = split;
        q.unwrap_or_else(|| at.p.to_vec())
    }

    fn last_active_set(&self) -> Option<&[usize]> {
        Some(&self.last_split.active)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::{forward_backward, Counted, FnOracle};

    fn separable(weights: Vec<f64>, box_c: BoxSet) -> impl SmoothOracle {
        let w2 = weights.clone();
        FnOracle::new(
            box_c,
            move |x: &[f64]| 0.5 * x.iter().zip(&weights).map(|(a, w)| w * a * a).sum::<f64>(),
            move |x: &[f64], g: &mut [f64]| {
                for i in 0..x.len() {
                    g[i] = w2[i] * x[i];
                }
            },
        )
    }

    #[test]
    fn split_examples() {
        let b = BoxSet::uniform(2, 0.0, 1.0).unwrap();
        let s = split_indices(&[0.5, 0.5], &[1.0, -0.2], 1.0, &b);
        assert_eq!(s, IndexSplit { active: vec![0], inactive: vec![1] });

        let free = BoxSet::unbounded(3);
        assert!(split_indices(&[1e9, -3.0, 0.0], &[-5.0, 1e3, 0.0], 10.0, &free).active.is_empty());

        // landing exactly on a bound counts as active
        let s = split_indices(&[0.5], &[0.5], 1.0, &BoxSet::uniform(1, 0.0, 1.0).unwrap());
        assert_eq!(s.active, vec![0]);
    }

    #[test]
    fn all_active_gives_prox_step() {
        let b = BoxSet::uniform(2, -1.0, 1.0).unwrap();
        let o = separable(vec![1.0, 1.0], b.clone());
        let (x, g) = ([3.0, -3.0], [3.0, -3.0]);
        let step = forward_backward(&b, &x, &g, 0.1);
        let buf = LbfgsBuffer::new(2, 5, LbfgsMode::Masked);
        let params = StructuredDirParams { include_hessian_vec: true, ..Default::default() };
        let (split, q) = structured_direction(&o, &x, &step.p, 0.1, &g, &buf, &params);
        assert_eq!(split.active, vec![0, 1]);
        assert_eq!(q.unwrap(), step.p);
    }

    #[test]
    fn empty_buffer_unconstrained_gives_negative_gradient() {
        let o = separable(vec![2.0, 5.0], BoxSet::unbounded(2));
        let (x, g) = ([1.0, -1.0], [2.0, -5.0]);
        let step = forward_backward(o.box_c(), &x, &g, 0.1);
        let buf = LbfgsBuffer::new(2, 5, LbfgsMode::Masked);
        let (_, q) = structured_direction(&o, &x, &step.p, 0.1, &g, &buf, &StructuredDirParams::default());
        assert_eq!(q.unwrap(), vec![-2.0, 5.0]);
    }

    #[test]
    fn block_newton_on_separable_quadratic() {
        // psi = 1/2 (x1^2 + 4 x2^2), C = [-1, 1]^2, x = (2, 1), gamma = 0.1
        let b = BoxSet::uniform(2, -1.0, 1.0).unwrap();
        let o = separable(vec![1.0, 4.0], b.clone());
        let (x, g) = ([2.0, 1.0], [2.0, 4.0]);
        let step = forward_backward(&b, &x, &g, 0.1);
        assert_eq!(step.p[0], -1.0);
        let mut buf = LbfgsBuffer::new(2, 5, LbfgsMode::Masked);
        // one exact pair along the second axis
        buf.push(&[0.0, 1.0], &[0.0, 4.0]);
        let (split, q) = structured_direction(&o, &x, &step.p, 0.1, &g, &buf, &StructuredDirParams::default());
        assert_eq!(split.active, vec![0]);
        let q = q.unwrap();
        assert_eq!(q[0], -1.0);
        assert!((q[1] + x[1]).abs() < 1e-15);
    }

    #[test]
    fn fd_term_is_exact_on_quadratics_and_costs_one_gradient() {
        // psi = 1/2 x^T Q x with a coupled Q
        let q = [[4.0, 1.0, -0.5], [1.0, 3.0, 0.25], [-0.5, 0.25, 2.0]];
        let o = Counted::new(FnOracle::new(
            BoxSet::unbounded(3),
            move |x: &[f64]| 0.5 * (0..3).map(|i| (0..3).map(|j| x[i] * q[i][j] * x[j]).sum::<f64>()).sum::<f64>(),
            move |x: &[f64], g: &mut [f64]| {
                for i in 0..3 {
                    g[i] = (0..3).map(|j| q[i][j] * x[j]).sum();
                }
            },
        ));
        let x = [0.4, -0.3, 0.8];
        let mut g = [0.0; 3];
        o.inner().grad_psi(&x, &mut g);
        let split = IndexSplit { active: vec![0], inactive: vec![1, 2] };
        let padded = [0.7, 0.0, 0.0];
        let hv = fd_hessian_vec_term(&o, &x, &g, &padded, &split, StructuredDirParams::default().fd_step);
        assert_eq!(o.counters().grad_psi_evals, 1);
        assert!((hv[0] - q[1][0] * 0.7).abs() < 1e-6);
        assert!((hv[1] - q[2][0] * 0.7).abs() < 1e-6);

        let zero = fd_hessian_vec_term(&o, &x, &g, &[0.0; 3], &split, 1e-8);
        assert_eq!(zero, vec![0.0, 0.0]);
    }

    #[test]
    fn split_invariant_under_matched_scaling() {
        let b = BoxSet::new(vec![-1.0, 0.0, -2.0], vec![1.0, 0.5, 2.0]).unwrap();
        let x = [0.2, 0.4, -1.0];
        let g = [0.5, -0.3, 4.0];
        let g_half: Vec<f64> = g.iter().map(|v| v * 0.5).collect();
        assert_eq!(split_indices(&x, &g, 0.8, &b), split_indices(&x, &g_half, 1.6, &b));
    }
}

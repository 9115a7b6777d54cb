//! Limited-memory BFGS inverse-Hessian estimates.
//!
//! Pairs `(s, y)` are always stored at full dimension. In
//! [`LbfgsMode::Masked`] the two-loop recursion is run on the components
//! selected by an index set that may change on every call, so the curvature
//! condition `y_J^T s_J > 0` can only be checked at application time.

use crate::vecops::{all_finite, dot, norm_sq};

pub const DEFAULT_MEMORY: usize = 10;
pub const DEFAULT_CURVATURE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsMode {
    /// Curvature checked when a pair is pushed.
    Standard,
    /// Curvature checked per application on the masked components.
    Masked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsBuffer {
    mode: LbfgsMode,
    n: usize,
    memory: usize,
    curvature_eps: f64,
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    /// slot that the next push writes to
    head: usize,
    count: usize,
}

impl LbfgsBuffer {
    pub fn new(n: usize, memory: usize, mode: LbfgsMode) -> Self {
        assert!(memory > 0, "L-BFGS memory must be positive");
        Self {
            mode,
            n,
            memory,
            curvature_eps: DEFAULT_CURVATURE_EPS,
            s: vec![vec![0.0; n]; memory],
            y: vec![vec![0.0; n]; memory],
            head: 0,
            count: 0,
        }
    }

    pub fn with_curvature_eps(mut self, eps: f64) -> Self {
        self.curvature_eps = eps;
        self
    }

    pub fn mode(&self) -> LbfgsMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Stores `(s, y)`, evicting the oldest pair at capacity. Returns whether
    /// the pair was stored.
    pub fn push(&mut self, s: &[f64], y: &[f64]) -> bool {
        assert_eq!(s.len(), self.n);
        assert_eq!(y.len(), self.n);
        if !all_finite(s) || !all_finite(y) {
            return false;
        }
        if self.mode == LbfgsMode::Standard && !(dot(s, y) > self.curvature_eps * norm_sq(s)) {
            return false;
        }
        self.s[self.head].copy_from_slice(s);
        self.y[self.head].copy_from_slice(y);
        self.head = (self.head + 1) % self.memory;
        self.count = (self.count + 1).min(self.memory);
        true
    }

    pub fn reset(&mut self) {
        self.head = 0;
        self.count = 0;
    }

    /// Storage slots from newest to oldest.
    fn slots_newest_first(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.count).map(move |j| (self.head + self.memory - 1 - j) % self.memory)
    }

    /// `H v` with the full-dimension pairs.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        let mut q = v.to_vec();
        self.two_loop(&mut q, None);
        q
    }

    /// `H_J v_sub` where every pair is restricted to the indices in `mask`.
    /// `v_sub` holds one entry per mask index.
    pub fn apply_masked(&self, v_sub: &[f64], mask: &[usize]) -> Vec<f64> {
        assert_eq!(v_sub.len(), mask.len());
        let mut q = v_sub.to_vec();
        self.two_loop(&mut q, Some(mask));
        q
    }

    fn two_loop(&self, q: &mut [f64], mask: Option<&[usize]>) {
        // restricted views of the stored pairs
        let at = |v: &[f64], k: usize| match mask {
            Some(m) => v[m[k]],
            None => v[k],
        };
        let len = q.len();
        let dot_full = |a: &[f64], b: &[f64]| (0..len).map(|k| at(a, k) * at(b, k)).sum::<f64>();

        // (slot, rho, alpha), newest first, skipping pairs that fail the
        // curvature test on this restriction
        let mut used: Vec<(usize, f64, f64)> = Vec::with_capacity(self.count);
        for slot in self.slots_newest_first() {
            let (s, y) = (&self.s[slot], &self.y[slot]);
            let sy = dot_full(s, y);
            let ss = dot_full(s, s);
            if !(sy > self.curvature_eps * ss) {
                continue;
            }
            let rho = 1.0 / sy;
            let alpha = rho * (0..q.len()).map(|k| at(s, k) * q[k]).sum::<f64>();
            for (k, qk) in q.iter_mut().enumerate() {
                *qk -= alpha * at(y, k);
            }
            used.push((slot, rho, alpha));
        }
        let Some(&(newest, rho_newest, _)) = used.first() else {
            return;
        };
        let yy = dot_full(&self.y[newest], &self.y[newest]);
        let h0 = 1.0 / (rho_newest * yy);
        for qk in q.iter_mut() {
            *qk *= h0;
        }
        for &(slot, rho, alpha) in used.iter().rev() {
            let (s, y) = (&self.s[slot], &self.y[slot]);
            let beta = rho * (0..q.len()).map(|k| at(y, k) * q[k]).sum::<f64>();
            for (k, qk) in q.iter_mut().enumerate() {
                *qk += (alpha - beta) * at(s, k);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_examples() {
        let mut b = LbfgsBuffer::new(2, 3, LbfgsMode::Standard);
        assert!(b.push(&[1.0, 0.0], &[1.0, 0.0]));
        assert!(!b.push(&[1.0, 0.0], &[-1.0, 0.0]));
        assert_eq!(b.len(), 1);

        let mut m = LbfgsBuffer::new(2, 3, LbfgsMode::Masked);
        assert!(m.push(&[1.0, 0.0], &[-1.0, 0.0]));
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn non_finite_pairs_rejected() {
        for mode in [LbfgsMode::Standard, LbfgsMode::Masked] {
            let mut b = LbfgsBuffer::new(2, 3, mode);
            let before = b.clone();
            assert!(!b.push(&[f64::NAN, 1.0], &[1.0, 1.0]));
            assert!(!b.push(&[1.0, 1.0], &[f64::INFINITY, 1.0]));
            assert_eq!(b, before);
        }
    }

    #[test]
    fn capacity_evicts_oldest() {
        let mut b = LbfgsBuffer::new(1, 2, LbfgsMode::Standard);
        for k in 1..=5 {
            assert!(b.push(&[1.0], &[k as f64]));
            assert!(b.len() <= 2);
        }
        // newest pair has y = 5 so H = 1/5 in one dimension
        assert!((b.apply(&[1.0])[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn apply_examples() {
        let b = LbfgsBuffer::new(2, 5, LbfgsMode::Standard);
        assert_eq!(b.apply(&[3.0, -1.0]), vec![3.0, -1.0]);

        let mut b = LbfgsBuffer::new(2, 5, LbfgsMode::Standard);
        b.push(&[1.0, 0.0], &[1.0, 0.0]);
        assert_eq!(b.apply(&[1.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn masked_examples() {
        let mut b = LbfgsBuffer::new(2, 5, LbfgsMode::Masked);
        b.push(&[1.0, 2.0], &[1.0, 8.0]);
        assert_eq!(b.apply_masked(&[1.0], &[0]), vec![1.0]);
        assert_eq!(b.apply_masked(&[0.3, -0.7], &[0, 1]), b.apply(&[0.3, -0.7]));

        let mut neg = LbfgsBuffer::new(2, 5, LbfgsMode::Masked);
        neg.push(&[1.0, 1.0], &[-1.0, 3.0]);
        let before = neg.clone();
        assert_eq!(neg.apply_masked(&[2.5], &[0]), vec![2.5]);
        assert_eq!(neg, before);
    }

    #[test]
    fn reset_examples() {
        let mut b = LbfgsBuffer::new(2, 5, LbfgsMode::Standard);
        b.push(&[1.0, 0.5], &[2.0, 1.0]);
        b.reset();
        assert_eq!(b.apply(&[1.0, 2.0]), vec![1.0, 2.0]);
        b.reset();
        assert!(b.is_empty());
        b.push(&[1.0, 0.0], &[2.0, 0.0]);
        assert_eq!(b.len(), 1);
        assert_eq!(b.apply(&[1.0, 0.0]), vec![0.5, 0.0]);
    }
}

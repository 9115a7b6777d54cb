//! Rectangular sets with extended-real bounds.

use crate::error::{check_len, Error, Result};

/// Cartesian product of closed intervals `[lower_i, upper_i]`.
///
/// Infinite bounds are encoded as IEEE infinities, so one-sided and free
/// coordinates need no special casing.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_len(lower.len(), upper.len())?;
        for (index, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            // NaN bounds fail this test as well
            if !(lo <= hi) || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(Error::InvalidBounds { index, lower: lo, upper: hi });
            }
        }
        Ok(Self { lower, upper })
    }

    /// The whole space `R^n`.
    pub fn unbounded(n: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n] }
    }

    /// `[lower, upper]^n`.
    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; n], vec![upper; n])
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.len() && v.iter().zip(&self.lower).zip(&self.upper).all(|((&x, &lo), &hi)| lo <= x && x <= hi)
    }

    /// Euclidean projection onto the box.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), v.len())?;
        let mut out = vec![0.0; v.len()];
        self.project_into(v, &mut out);
        Ok(out)
    }

    /// Projection into a caller-provided buffer. Panics on length mismatch.
    pub fn project_into(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.len());
        assert_eq!(out.len(), self.len());
        for (((o, &x), &lo), &hi) in out.iter_mut().zip(v).zip(&self.lower).zip(&self.upper) {
            *o = x.max(lo).min(hi);
        }
    }

    /// Projection of a single coordinate.
    #[inline]
    pub fn clamp(&self, i: usize, x: f64) -> f64 {
        x.max(self.lower[i]).min(self.upper[i])
    }
}

/// Squared distance to `box_set` in the diagonal weighted norm
/// `sum_i sigma_i (v_i - proj(v)_i)^2`.
pub fn dist_sq_weighted(v: &[f64], box_set: &BoxSet, sigma_diag: &[f64]) -> Result<f64> {
    check_len(box_set.len(), v.len())?;
    check_len(box_set.len(), sigma_diag.len())?;
    check_weights(sigma_diag)?;
    Ok(v.iter()
        .zip(sigma_diag)
        .enumerate()
        .map(|(i, (&x, &s))| {
            let d = x - box_set.clamp(i, x);
            s * d * d
        })
        .sum())
}

pub(crate) fn check_weights(sigma: &[f64]) -> Result<()> {
    match sigma.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        Some(index) => Err(Error::NonPositiveWeight { index, value: sigma[index] }),
        None => Ok(()),
    }
}

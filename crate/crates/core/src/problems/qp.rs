use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::boxset::BoxSet;
use crate::problem::Problem;

/// `f(x) = 1/2 x^T Q x + c^T x`, `g(x) = A x`, with dense row-major data.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub q: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub box_c: BoxSet,
    pub box_d: BoxSet,
}

fn mat_vec<'a>(m: &'a [Vec<f64>], x: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    m.iter().map(move |row| row.iter().zip(x).map(|(a, b)| a * b).sum())
}

impl Problem for DenseQp {
    fn box_c(&self) -> &BoxSet {
        &self.box_c
    }
    fn box_d(&self) -> &BoxSet {
        &self.box_d
    }
    fn f(&self, x: &[f64]) -> f64 {
        mat_vec(&self.q, x).zip(x).zip(&self.c).map(|((qx, xi), ci)| 0.5 * qx * xi + ci * xi).sum()
    }
    fn grad_f(&self, x: &[f64], grad: &mut [f64]) {
        for ((gi, qx), ci) in grad.iter_mut().zip(mat_vec(&self.q, x)).zip(&self.c) {
            *gi = qx + ci;
        }
    }
    fn g(&self, x: &[f64], gx: &mut [f64]) {
        for (gi, ax) in gx.iter_mut().zip(mat_vec(&self.a, x)) {
            *gi = ax;
        }
    }
    fn grad_g_prod(&self, _x: &[f64], v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (row, vi) in self.a.iter().zip(v) {
            for (o, aij) in out.iter_mut().zip(row) {
                *o += aij * vi;
            }
        }
    }
}

/// Random matrix with entries uniform in `[-1, 1)`.
pub(crate) fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

/// `M^T M / n + shift I` for a random square `M`.
pub(crate) fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Vec<Vec<f64>> {
    let m = random_matrix(rng, n, n);
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            q[i][j] = (0..n).map(|k| m[k][i] * m[k][j]).sum::<f64>() / n as f64;
        }
        q[i][i] += shift;
    }
    q
}

pub(crate) fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Solves `A x = b` by LU with partial pivoting. `None` if `A` is singular
/// to working precision.
pub(crate) fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            let (upper, lower) = a.split_at_mut(row);
            for (t, &s) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *t -= factor * s;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

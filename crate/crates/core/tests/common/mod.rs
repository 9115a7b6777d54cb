#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Random point in `[lo, hi]` intersected with the box, with infinite
/// bounds replaced by the sampling range.
pub fn sample_in_box(rng: &mut ChaCha8Rng, lower: &[f64], upper: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    lower
        .iter()
        .zip(upper)
        .map(|(&l, &u)| {
            let (a, b) = (l.max(lo), u.min(hi));
            if a >= b {
                a
            } else {
                rng.random_range(a..b)
            }
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Largest violation of `|fd_i - grad_i| <= tol * max(1, |grad_i|)` over all
/// components, as a ratio to the allowance (`<= 1` passes). Central
/// differences with step `1e-6 (1 + |x_i|)`.
pub fn fd_check(f: impl Fn(&[f64]) -> f64, grad: &[f64], x: &[f64], tol: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        let (mut up, mut dn) = (x.to_vec(), x.to_vec());
        up[i] += h;
        dn[i] -= h;
        let fd = (f(&up) - f(&dn)) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / (tol * grad[i].abs().max(1.0)));
    }
    worst
}

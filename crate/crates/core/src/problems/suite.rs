use super::analytic::{analytic_suite, rosenbrock, rosenbrock_grad};
use super::chain::{chain_ocp, equidistant_chain, ChainParams};
use super::qp::{random_matrix, random_spd, seeded, DenseQp};
use super::TestProblem;
use crate::boxset::BoxSet;
use crate::problem::{FnProblem, ProblemSpec};

const NEG_INF: f64 = f64::NEG_INFINITY;
const INF: f64 = f64::INFINITY;

fn bounds(lo: &[f64], hi: &[f64]) -> BoxSet {
    BoxSet::new(lo.to_vec(), hi.to_vec()).expect("static bounds are valid")
}

fn hs071() -> TestProblem {
    let spec = ProblemSpec::new(FnProblem {
        box_c: BoxSet::uniform(4, 1.0, 5.0).unwrap(),
        box_d: bounds(&[25.0, 40.0], &[INF, 40.0]),
        f: |x: &[f64]| x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2],
        grad_f: |x: &[f64], g: &mut [f64]| {
            g[0] = x[3] * (2.0 * x[0] + x[1] + x[2]);
            g[1] = x[0] * x[3];
            g[2] = x[0] * x[3] + 1.0;
            g[3] = x[0] * (x[0] + x[1] + x[2]);
        },
        g: |x: &[f64], gx: &mut [f64]| {
            gx[0] = x.iter().product();
            gx[1] = x.iter().map(|v| v * v).sum();
        },
        grad_g_prod: |x: &[f64], v: &[f64], out: &mut [f64]| {
            for i in 0..4 {
                let others: f64 = (0..4).filter(|&j| j != i).map(|j| x[j]).product();
                out[i] = v[0] * others + 2.0 * v[1] * x[i];
            }
        },
    });
    TestProblem::new("hs071", spec, vec![1.0, 5.0, 5.0, 1.0], vec![0.0; 2])
}

fn hs021() -> TestProblem {
    let spec = ProblemSpec::new(FnProblem {
        box_c: bounds(&[2.0, -50.0], &[50.0, 50.0]),
        box_d: bounds(&[10.0], &[INF]),
        f: |x: &[f64]| 0.01 * x[0] * x[0] + x[1] * x[1] - 100.0,
        grad_f: |x: &[f64], g: &mut [f64]| {
            g[0] = 0.02 * x[0];
            g[1] = 2.0 * x[1];
        },
        g: |x: &[f64], gx: &mut [f64]| gx[0] = 10.0 * x[0] - x[1],
        grad_g_prod: |_: &[f64], v: &[f64], out: &mut [f64]| {
            out[0] = 10.0 * v[0];
            out[1] = -v[0];
        },
    });
    TestProblem::new("hs021", spec, vec![-1.0, -1.0], vec![0.0])
}

fn hs035() -> TestProblem {
    let spec = ProblemSpec::new(FnProblem {
        box_c: bounds(&[0.0; 3], &[INF; 3]),
        box_d: bounds(&[NEG_INF], &[3.0]),
        f: |x: &[f64]| {
            9.0 - 8.0 * x[0] - 6.0 * x[1] - 4.0 * x[2]
                + 2.0 * x[0] * x[0]
                + 2.0 * x[1] * x[1]
                + x[2] * x[2]
                + 2.0 * x[0] * x[1]
                + 2.0 * x[0] * x[2]
        },
        grad_f: |x: &[f64], g: &mut [f64]| {
            g[0] = -8.0 + 4.0 * x[0] + 2.0 * x[1] + 2.0 * x[2];
            g[1] = -6.0 + 4.0 * x[1] + 2.0 * x[0];
            g[2] = -4.0 + 2.0 * x[2] + 2.0 * x[0];
        },
        g: |x: &[f64], gx: &mut [f64]| gx[0] = x[0] + x[1] + 2.0 * x[2],
        grad_g_prod: |_: &[f64], v: &[f64], out: &mut [f64]| {
            out[0] = v[0];
            out[1] = v[0];
            out[2] = 2.0 * v[0];
        },
    });
    TestProblem::new("hs035", spec, vec![0.5; 3], vec![0.0])
}

fn hs076() -> TestProblem {
    let spec = ProblemSpec::new(DenseQp {
        q: vec![
            vec![2.0, 0.0, -1.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![-1.0, 0.0, 2.0, 1.0],
            vec![0.0, 0.0, 1.0, 1.0],
        ],
        c: vec![-1.0, -3.0, 1.0, -1.0],
        a: vec![vec![1.0, 2.0, 1.0, 1.0], vec![3.0, 1.0, 2.0, -1.0], vec![0.0, 1.0, 4.0, 0.0]],
        box_c: bounds(&[0.0; 4], &[INF; 4]),
        box_d: bounds(&[NEG_INF, NEG_INF, 1.5], &[5.0, 4.0, INF]),
    });
    TestProblem::new("hs076", spec, vec![0.5; 4], vec![0.0; 3])
}

fn hs065() -> TestProblem {
    let spec = ProblemSpec::new(FnProblem {
        box_c: bounds(&[-4.5, -4.5, -5.0], &[4.5, 4.5, 5.0]),
        box_d: bounds(&[NEG_INF], &[48.0]),
        f: |x: &[f64]| (x[0] - x[1]).powi(2) + (x[0] + x[1] - 10.0).powi(2) / 9.0 + (x[2] - 5.0).powi(2),
        grad_f: |x: &[f64], g: &mut [f64]| {
            let s = 2.0 * (x[0] + x[1] - 10.0) / 9.0;
            g[0] = 2.0 * (x[0] - x[1]) + s;
            g[1] = -2.0 * (x[0] - x[1]) + s;
            g[2] = 2.0 * (x[2] - 5.0);
        },
        g: |x: &[f64], gx: &mut [f64]| gx[0] = x.iter().map(|v| v * v).sum(),
        grad_g_prod: |x: &[f64], v: &[f64], out: &mut [f64]| {
            for (o, xi) in out.iter_mut().zip(x) {
                *o = 2.0 * xi * v[0];
            }
        },
    });
    TestProblem::new("hs065", spec, vec![-5.0, 5.0, 0.0], vec![0.0])
}

fn rosenbrock_disk() -> TestProblem {
    let spec = ProblemSpec::new(FnProblem {
        box_c: BoxSet::uniform(2, -1.5, 1.5).unwrap(),
        box_d: bounds(&[NEG_INF], &[1.0]),
        f: rosenbrock,
        grad_f: rosenbrock_grad,
        g: |x: &[f64], gx: &mut [f64]| gx[0] = x[0] * x[0] + x[1] * x[1],
        grad_g_prod: |x: &[f64], v: &[f64], out: &mut [f64]| {
            out[0] = 2.0 * x[0] * v[0];
            out[1] = 2.0 * x[1] * v[0];
        },
    });
    TestProblem::new("rosenbrock-disk", spec, vec![0.0, 0.0], vec![0.0])
}

fn chained_rosenbrock(n: usize) -> TestProblem {
    let spec = ProblemSpec::new(FnProblem {
        box_c: BoxSet::uniform(n, -2.0, 2.0).unwrap(),
        box_d: BoxSet::unbounded(0),
        f: |x: &[f64]| x.windows(2).map(rosenbrock).sum(),
        grad_f: |x: &[f64], g: &mut [f64]| {
            g.fill(0.0);
            let mut part = [0.0; 2];
            for i in 0..x.len() - 1 {
                rosenbrock_grad(&x[i..i + 2], &mut part);
                g[i] += part[0];
                g[i + 1] += part[1];
            }
        },
        g: |_: &[f64], _: &mut [f64]| {},
        grad_g_prod: |_: &[f64], _: &[f64], out: &mut [f64]| out.fill(0.0),
    });
    let x0 = (0..n).map(|i| if i % 2 == 0 { -1.2 } else { 1.0 }).collect();
    TestProblem::new(format!("chained-rosenbrock-{n}"), spec, x0, vec![])
}

fn circle_linear() -> TestProblem {
    let spec = ProblemSpec::new(FnProblem {
        box_c: BoxSet::uniform(2, -2.0, 2.0).unwrap(),
        box_d: bounds(&[1.0], &[1.0]),
        f: |x: &[f64]| x[0] + x[1],
        grad_f: |_: &[f64], g: &mut [f64]| g.fill(1.0),
        g: |x: &[f64], gx: &mut [f64]| gx[0] = x[0] * x[0] + x[1] * x[1],
        grad_g_prod: |x: &[f64], v: &[f64], out: &mut [f64]| {
            out[0] = 2.0 * x[0] * v[0];
            out[1] = 2.0 * x[1] * v[0];
        },
    });
    TestProblem::new("circle-linear", spec, vec![1.0, 0.5], vec![0.0])
}

fn double_well(n: usize) -> TestProblem {
    let spec = ProblemSpec::new(FnProblem {
        box_c: BoxSet::uniform(n, -2.0, 2.0).unwrap(),
        box_d: BoxSet::unbounded(0),
        f: |x: &[f64]| x.iter().map(|v| (v * v - 1.0).powi(2) + 0.1 * v).sum(),
        grad_f: |x: &[f64], g: &mut [f64]| {
            for (gi, v) in g.iter_mut().zip(x) {
                *gi = 4.0 * v * (v * v - 1.0) + 0.1;
            }
        },
        g: |_: &[f64], _: &mut [f64]| {},
        grad_g_prod: |_: &[f64], _: &[f64], out: &mut [f64]| out.fill(0.0),
    });
    TestProblem::new(format!("double-well-{n}"), spec, vec![0.3; n], vec![])
}

/// Strongly convex QP over `[-2, 2]^n` with `n / 2` random inequalities
/// `A x <= b`, `b > 0` so that the origin is strictly feasible.
fn random_convex_qp(n: usize, index: usize, seed: u64) -> TestProblem {
    let m = n / 2;
    let mut rng = seeded(seed);
    let q = random_spd(&mut rng, n, 0.1);
    let c: Vec<f64> = random_matrix(&mut rng, 1, n).remove(0).into_iter().map(|v| 5.0 * v).collect();
    let a = random_matrix(&mut rng, m, n);
    let b: Vec<f64> = random_matrix(&mut rng, 1, m).remove(0).into_iter().map(|v| 0.55 + 0.45 * v).collect();
    let spec = ProblemSpec::new(DenseQp {
        q,
        c,
        a,
        box_c: BoxSet::uniform(n, -2.0, 2.0).unwrap(),
        box_d: BoxSet::new(vec![NEG_INF; m], b).unwrap(),
    });
    TestProblem::new(format!("random-qp-{index}-n{n}"), spec, vec![0.0; n], vec![0.0; m])
}

/// Indefinite quadratic over `[-1, 1]^n` restricted to the ball `|x|^2 <= n / 2`.
fn random_nonconvex_qp(n: usize, index: usize, seed: u64) -> TestProblem {
    let mut rng = seeded(seed);
    let m = random_matrix(&mut rng, n, n);
    let q: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| 0.5 * (m[i][j] + m[j][i])).collect()).collect();
    let c: Vec<f64> = random_matrix(&mut rng, 1, n).remove(0);
    let (qf, cf, qg, cg) = (q.clone(), c.clone(), q, c);
    let spec = ProblemSpec::new(FnProblem {
        box_c: BoxSet::uniform(n, -1.0, 1.0).unwrap(),
        box_d: bounds(&[NEG_INF], &[n as f64 / 2.0]),
        f: move |x: &[f64]| {
            let quad: f64 = (0..x.len()).map(|i| x[i] * (0..x.len()).map(|j| qf[i][j] * x[j]).sum::<f64>()).sum();
            0.5 * quad + cf.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        },
        grad_f: move |x: &[f64], g: &mut [f64]| {
            for i in 0..x.len() {
                g[i] = cg[i] + (0..x.len()).map(|j| qg[i][j] * x[j]).sum::<f64>();
            }
        },
        g: |x: &[f64], gx: &mut [f64]| gx[0] = x.iter().map(|v| v * v).sum(),
        grad_g_prod: |x: &[f64], v: &[f64], out: &mut [f64]| {
            for (o, xi) in out.iter_mut().zip(x) {
                *o = 2.0 * xi * v[0];
            }
        },
    });
    TestProblem::new(format!("nonconvex-qp-{index}-n{n}"), spec, vec![0.1; n], vec![0.0])
}

fn chain_small() -> TestProblem {
    let params = ChainParams { n_balls: 3, horizon: 5, ..ChainParams::default() };
    let x_init = equidistant_chain(&params);
    let spec = chain_ocp(&params, &x_init).expect("default chain parameters are valid");
    let (n, m) = (spec.n(), spec.m());
    TestProblem::new("chain-3x5", spec, vec![0.0; n], vec![0.0; m])
}

/// Robustness suite: the analytic problems plus classical small NLPs,
/// seeded random QPs and a short chain control problem.
pub fn internal_suite(seed: u64) -> Vec<TestProblem> {
    let mut out = analytic_suite();
    out.extend([
        hs071(),
        hs021(),
        hs035(),
        hs076(),
        hs065(),
        rosenbrock_disk(),
        chained_rosenbrock(10),
        circle_linear(),
        double_well(5),
    ]);
    let base = seed.wrapping_mul(1_000);
    for (i, n) in [5, 10, 20, 5, 10, 20].into_iter().enumerate() {
        out.push(random_convex_qp(n, i, base + i as u64));
    }
    for (i, n) in [6, 12].into_iter().enumerate() {
        out.push(random_nonconvex_qp(n, i, base + 100 + i as u64));
    }
    out.push(chain_small());
    out
}

use super::qp::{random_matrix, random_spd, seeded, solve_dense, DenseQp};
use super::{KnownSolution, TestProblem};
use crate::boxset::BoxSet;
use crate::problem::{FnProblem, ProblemSpec};

const NEG_INF: f64 = f64::NEG_INFINITY;
const INF: f64 = f64::INFINITY;

fn bounds(lo: &[f64], hi: &[f64]) -> BoxSet {
    BoxSet::new(lo.to_vec(), hi.to_vec()).expect("static bounds are valid")
}

/// `min (x - 2)^2` subject to `x <= 1`.
pub fn penalty_1d() -> TestProblem {
    let spec = ProblemSpec::new(FnProblem {
        box_c: BoxSet::unbounded(1),
        box_d: bounds(&[NEG_INF], &[1.0]),
        f: |x: &[f64]| (x[0] - 2.0).powi(2),
        grad_f: |x: &[f64], g: &mut [f64]| g[0] = 2.0 * (x[0] - 2.0),
        g: |x: &[f64], gx: &mut [f64]| gx[0] = x[0],
        grad_g_prod: |_: &[f64], v: &[f64], out: &mut [f64]| out[0] = v[0],
    });
    TestProblem::new("penalty-1d", spec, vec![0.0], vec![0.0])
        .with_solution(KnownSolution { x: vec![1.0], y: vec![2.0] })
}

/// Rosenbrock on `[-2, 2]^2` with `x1^2 + x2^2 <= 2`. The unconstrained
/// minimizer `(1, 1)` sits on the constraint boundary with a zero multiplier.
pub fn rosenbrock_box() -> TestProblem {
    let spec = ProblemSpec::new(FnProblem {
        box_c: BoxSet::uniform(2, -2.0, 2.0).unwrap(),
        box_d: bounds(&[NEG_INF], &[2.0]),
        f: rosenbrock,
        grad_f: rosenbrock_grad,
        g: |x: &[f64], gx: &mut [f64]| gx[0] = x[0] * x[0] + x[1] * x[1],
        grad_g_prod: |x: &[f64], v: &[f64], out: &mut [f64]| {
            out[0] = 2.0 * x[0] * v[0];
            out[1] = 2.0 * x[1] * v[0];
        },
    });
    TestProblem::new("rosenbrock-box", spec, vec![-1.2, 1.0], vec![0.0])
        .with_solution(KnownSolution { x: vec![1.0, 1.0], y: vec![0.0] })
}

pub(crate) fn rosenbrock(x: &[f64]) -> f64 {
    (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
}

pub(crate) fn rosenbrock_grad(x: &[f64], g: &mut [f64]) {
    let r = x[1] - x[0] * x[0];
    g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * r;
    g[1] = 200.0 * r;
}

/// `min (x - 2)^2` subject to `x = 0.5`, written as `g(x) = x in [0.5, 0.5]`.
pub fn equality_1d() -> TestProblem {
    let spec = ProblemSpec::new(FnProblem {
        box_c: BoxSet::unbounded(1),
        box_d: bounds(&[0.5], &[0.5]),
        f: |x: &[f64]| (x[0] - 2.0).powi(2),
        grad_f: |x: &[f64], g: &mut [f64]| g[0] = 2.0 * (x[0] - 2.0),
        g: |x: &[f64], gx: &mut [f64]| gx[0] = x[0],
        grad_g_prod: |_: &[f64], v: &[f64], out: &mut [f64]| out[0] = v[0],
    });
    TestProblem::new("equality-1d", spec, vec![0.0], vec![0.0])
        .with_solution(KnownSolution { x: vec![0.5], y: vec![3.0] })
}

/// `min x1^2 + x2^2` over `[0, 2]^2` subject to `x1 + x2 >= 1`.
pub fn halfplane_2d() -> TestProblem {
    let spec = ProblemSpec::new(FnProblem {
        box_c: BoxSet::uniform(2, 0.0, 2.0).unwrap(),
        box_d: bounds(&[1.0], &[INF]),
        f: |x: &[f64]| x[0] * x[0] + x[1] * x[1],
        grad_f: |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * x[0];
            g[1] = 2.0 * x[1];
        },
        g: |x: &[f64], gx: &mut [f64]| gx[0] = x[0] + x[1],
        grad_g_prod: |_: &[f64], v: &[f64], out: &mut [f64]| out.fill(v[0]),
    });
    TestProblem::new("halfplane-2d", spec, vec![2.0, 0.0], vec![0.0])
        .with_solution(KnownSolution { x: vec![0.5, 0.5], y: vec![-1.0] })
}

/// Strongly convex QP in 10 variables with 3 random equality constraints.
/// The KKT solution comes from a dense solve of
///
/// ```text
/// [Q  A^T] [x]   [-c]
/// [A  0  ] [y] = [ b]
/// ```
pub fn qp_10(seed: u64) -> TestProblem {
    let (n, m) = (10, 3);
    let mut rng = seeded(seed);
    let q = random_spd(&mut rng, n, 0.5);
    let c: Vec<f64> = random_matrix(&mut rng, 1, n).remove(0);
    let a = random_matrix(&mut rng, m, n);
    let b: Vec<f64> = random_matrix(&mut rng, 1, m).remove(0);

    let mut kkt = vec![vec![0.0; n + m]; n + m];
    for i in 0..n {
        kkt[i][..n].copy_from_slice(&q[i]);
    }
    for (r, row) in a.iter().enumerate() {
        for j in 0..n {
            kkt[n + r][j] = row[j];
            kkt[j][n + r] = row[j];
        }
    }
    let rhs: Vec<f64> = c.iter().map(|v| -v).chain(b.iter().copied()).collect();
    let sol = solve_dense(kkt, rhs).expect("KKT matrix of a full-rank random QP is regular");

    let spec =
        ProblemSpec::new(DenseQp { q, c, a, box_c: BoxSet::unbounded(n), box_d: BoxSet::new(b.clone(), b).unwrap() });
    TestProblem::new("qp-10", spec, vec![0.0; n], vec![0.0; m])
        .with_solution(KnownSolution { x: sol[..n].to_vec(), y: sol[n..].to_vec() })
}

/// Problems with hand-verified primal and dual solutions.
pub fn analytic_suite() -> Vec<TestProblem> {
    vec![penalty_1d(), rosenbrock_box(), equality_1d(), halfplane_2d(), qp_10(10)]
}

mod common;

use alm_panoc::alm::{eval_psi, eval_yhat, eval_zhat, update_multipliers, update_sigma, AugLagOracle};
use alm_panoc::boxset::dist_sq_weighted;
use alm_panoc::lbfgs::{LbfgsBuffer, LbfgsMode};
use alm_panoc::panoc::{panoc_solve, IterationRecord, LbfgsDirection, LineSearch, PanocParams};
use alm_panoc::problems::{internal_suite, TestProblem};
use alm_panoc::prox::{eval_fbe, fixed_point_residual, prox_grad_step, FnOracle, SmoothOracle};
use alm_panoc::structured::{StructuredDirParams, StructuredLbfgsDirection};
use alm_panoc::vecops::{dot, norm_sq};
use alm_panoc::{alm_solve, AlmParams, BoxSet, SolverVariant};
use common::{max_abs_diff, rng, sample_in_box, uniform_vec};
use proptest::prelude::*;
use rand::Rng;

fn suite() -> Vec<TestProblem> {
    internal_suite(0).into_iter().filter(|p| p.spec.n() <= 40).collect()
}

fn random_multipliers(p: &TestProblem, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let m = p.spec.m();
    (uniform_vec(&mut r, m, -2.0, 2.0), uniform_vec(&mut r, m, 0.5, 20.0))
}

fn trace_of(p: &TestProblem, seed: u64, ls: LineSearch, structured: bool) -> Vec<IterationRecord> {
    let (y, sigma) = random_multipliers(p, seed);
    let oracle = AugLagOracle::new(&p.spec, &y, &sigma);
    let params =
        PanocParams { max_iter: 150, epsilon: 1e-9, line_search: ls, record_trace: true, ..Default::default() };
    let n = p.spec.n();
    let res = if structured {
        let dp = StructuredDirParams { include_hessian_vec: seed % 2 == 0, ..Default::default() };
        panoc_solve(&oracle, &p.x0, &params, &mut StructuredLbfgsDirection::new(n, 10, dp))
    } else {
        panoc_solve(&oracle, &p.x0, &params, &mut LbfgsDirection::new(n, 10))
    };
    res.unwrap().trace
}

fn slack(v: f64) -> f64 {
    1e-10 * v.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn accepted_steps_decrease_the_envelope(idx in 0usize..64, seed in any::<u64>(), improved in any::<bool>(), structured in any::<bool>()) {
        let probs = suite();
        let p = &probs[idx % probs.len()];
        let ls = if improved { LineSearch::Improved } else { LineSearch::Original };
        let trace = trace_of(p, seed, ls, structured);
        for rec in trace.iter().filter(|r| !r.forced) {
            let target = rec.phi - rec.sigma * rec.p_norm_sq;
            // both modes imply the original test, by monotonicity of the envelope in gamma
            prop_assert!(rec.phi_next_old_gamma <= target + slack(target), "{}: k={} {:?}", p.name, rec.k, rec);
            if improved {
                prop_assert!(rec.phi_next <= target + slack(target));
            }
            prop_assert!(rec.gamma_next <= rec.gamma);
        }
        for rec in &trace {
            prop_assert!(p.spec.box_c().contains(&rec.x), "{}: iterate left C", p.name);
        }
    }

    #[test]
    fn improved_search_telescopes(idx in 0usize..64, seed in any::<u64>()) {
        let probs = suite();
        let p = &probs[idx % probs.len()];
        let trace = trace_of(p, seed, LineSearch::Improved, seed % 3 == 0);
        prop_assume!(!trace.is_empty() && trace.iter().all(|r| !r.forced));
        for w in trace.windows(2) {
            prop_assert_eq!(w[0].phi_next, w[1].phi);
        }
        let total: f64 = trace.iter().map(|r| r.sigma * r.p_norm_sq).sum();
        let drop = trace[0].phi - trace.last().unwrap().phi_next;
        prop_assert!(drop >= total - slack(trace[0].phi));
    }

    #[test]
    fn psi_matches_lagrangian_decomposition(idx in 0usize..64, seed in any::<u64>()) {
        let probs = suite();
        let p = &probs[idx % probs.len()];
        prop_assume!(p.spec.m() > 0);
        let mut r = rng(seed);
        let (c, d) = (p.spec.box_c(), p.spec.box_d());
        let x = sample_in_box(&mut r, c.lower(), c.upper(), -2.0, 2.0);
        let (y, sigma) = random_multipliers(p, seed ^ 0x5a5a);
        let (psi, z) = eval_psi(&p.spec, &x, &y, &sigma).unwrap();
        let g = p.spec.g_vec(&x).unwrap();
        prop_assert_eq!(&z, &eval_zhat(&g, &y, &sigma, d));
        prop_assert!(d.contains(&z));
        let e: Vec<f64> = g.iter().zip(&z).map(|(a, b)| a - b).collect();
        let lag = p.spec.eval_f(&x)
            + dot(&y, &e)
            + 0.5 * e.iter().zip(&sigma).map(|(ei, si)| si * ei * ei).sum::<f64>();
        let y_term = 0.5 * y.iter().zip(&sigma).map(|(yi, si)| yi * yi / si).sum::<f64>();
        let expected = psi - y_term;
        prop_assert!((lag - expected).abs() <= 1e-10 * expected.abs().max(1.0), "{lag} vs {expected}");
    }

    #[test]
    fn multiplier_update_is_clamped_yhat(m in 1usize..12, seed in any::<u64>(), y_max in 0.5f64..50.0) {
        let mut r = rng(seed);
        let lo = uniform_vec(&mut r, m, -3.0, 0.0);
        let hi: Vec<f64> = lo.iter().map(|l| l + r.random_range(0.0..3.0)).collect();
        let d = BoxSet::new(lo, hi).unwrap();
        let g = uniform_vec(&mut r, m, -5.0, 5.0);
        let y = uniform_vec(&mut r, m, -10.0, 10.0);
        let sigma = uniform_vec(&mut r, m, 0.1, 100.0);
        let z = eval_zhat(&g, &y, &sigma, &d);
        let got = update_multipliers(&y, &sigma, &g, &z, y_max);
        let want: Vec<f64> = eval_yhat(&g, &y, &sigma, &d).iter().map(|v| v.clamp(-y_max, y_max)).collect();
        prop_assert!(max_abs_diff(&got, &want) <= 1e-12 * y_max.max(1.0));
    }

    #[test]
    fn sigma_update_never_decreases(m in 1usize..10, seed in any::<u64>()) {
        let mut r = rng(seed);
        let sigma = uniform_vec(&mut r, m, 0.1, 1e3);
        let e = uniform_vec(&mut r, m, -1.0, 1.0);
        let e_prev = uniform_vec(&mut r, m, -1.0, 1.0);
        let out = update_sigma(&sigma, &e, Some(&e_prev), 0.25, 10.0, 1e4);
        for i in 0..m {
            prop_assert!(out[i] >= sigma[i].min(1e4) && out[i] <= sigma[i].max(1e4));
            if e[i].abs() <= 0.25 * e_prev[i].abs() {
                prop_assert_eq!(out[i], sigma[i]);
            }
        }
    }

    #[test]
    fn grad_g_prod_is_linear(idx in 0usize..64, seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let probs = suite();
        let p = &probs[idx % probs.len()];
        prop_assume!(p.spec.m() > 0);
        let mut r = rng(seed);
        let (n, m) = (p.spec.n(), p.spec.m());
        let c = p.spec.box_c();
        let x = sample_in_box(&mut r, c.lower(), c.upper(), -2.0, 2.0);
        let v = uniform_vec(&mut r, m, -1.0, 1.0);
        let w = uniform_vec(&mut r, m, -1.0, 1.0);
        let mix: Vec<f64> = v.iter().zip(&w).map(|(vi, wi)| a * vi + b * wi).collect();
        let (mut gv, mut gw, mut gm) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        p.spec.eval_grad_g_prod(&x, &v, &mut gv);
        p.spec.eval_grad_g_prod(&x, &w, &mut gw);
        p.spec.eval_grad_g_prod(&x, &mix, &mut gm);
        let want: Vec<f64> = gv.iter().zip(&gw).map(|(s, t)| a * s + b * t).collect();
        let scale = want.iter().fold(1.0f64, |s, v| s.max(v.abs()));
        prop_assert!(max_abs_diff(&gm, &want) <= 1e-10 * scale);
    }

    #[test]
    fn projection_is_idempotent_and_nonexpansive(n in 1usize..12, seed in any::<u64>()) {
        let mut r = rng(seed);
        let lo = uniform_vec(&mut r, n, -2.0, 1.0);
        let hi: Vec<f64> = lo.iter().map(|l| l + r.random_range(0.0..2.0)).collect();
        let bx = BoxSet::new(lo, hi).unwrap();
        let u = uniform_vec(&mut r, n, -5.0, 5.0);
        let v = uniform_vec(&mut r, n, -5.0, 5.0);
        let (pu, pv) = (bx.project(&u).unwrap(), bx.project(&v).unwrap());
        prop_assert!(bx.contains(&pu));
        prop_assert_eq!(&bx.project(&pu).unwrap(), &pu);
        let d_after: f64 = norm_sq(&pu.iter().zip(&pv).map(|(a, b)| a - b).collect::<Vec<_>>());
        let d_before: f64 = norm_sq(&u.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
        prop_assert!(d_after <= d_before + 1e-12);
        let ones = vec![1.0; n];
        let dist = dist_sq_weighted(&u, &bx, &ones).unwrap();
        let direct = norm_sq(&u.iter().zip(&pu).map(|(a, b)| a - b).collect::<Vec<_>>());
        prop_assert!((dist - direct).abs() <= 1e-12 * direct.max(1.0));
    }
}

fn quadratic_oracle(seed: u64, n: usize) -> impl SmoothOracle {
    let mut r = rng(seed);
    let diag = uniform_vec(&mut r, n, 0.1, 10.0);
    let shift = uniform_vec(&mut r, n, -2.0, 2.0);
    let (d1, s1) = (diag.clone(), shift.clone());
    FnOracle::new(
        BoxSet::uniform(n, -1.0, 1.0).unwrap(),
        move |x: &[f64]| 0.5 * (0..x.len()).map(|i| d1[i] * (x[i] - s1[i]).powi(2)).sum::<f64>(),
        move |x: &[f64], g: &mut [f64]| {
            for i in 0..x.len() {
                g[i] = diag[i] * (x[i] - shift[i]);
            }
        },
    )
}

proptest! {
    #[test]
    fn fbe_is_monotone_in_gamma(seed in any::<u64>(), n in 1usize..8, g1 in 1e-3f64..1.0, ratio in 0.01f64..1.0) {
        let o = quadratic_oracle(seed, n);
        let x = uniform_vec(&mut rng(seed ^ 1), n, -3.0, 3.0);
        let mut g = vec![0.0; n];
        let psi = o.psi_grad_psi(&x, &mut g);
        let small = g1 * ratio;
        let (a, b) = (eval_fbe(o.box_c(), &x, psi, &g, small), eval_fbe(o.box_c(), &x, psi, &g, g1));
        prop_assert!(a >= b - 1e-12 * a.abs().max(1.0));
        let xc = o.box_c().project(&x).unwrap();
        let psi_c = o.psi_grad_psi(&xc, &mut g);
        prop_assert!(eval_fbe(o.box_c(), &xc, psi_c, &g, g1) <= psi_c + 1e-12 * psi_c.abs().max(1.0));
    }

    #[test]
    fn prox_step_lands_in_c(seed in any::<u64>(), n in 1usize..8, gamma in 1e-4f64..10.0) {
        let o = quadratic_oracle(seed, n);
        let x = uniform_vec(&mut rng(seed ^ 2), n, -3.0, 3.0);
        let step = prox_grad_step(&o, &x, gamma).unwrap();
        let (lo, hi) = (o.box_c().lower(), o.box_c().upper());
        prop_assert!(step.x_hat.iter().enumerate().all(|(i, v)| *v >= lo[i] && *v <= hi[i]));
        let r = fixed_point_residual(&step.p, gamma);
        let (nr, np) = (norm_sq(&r).sqrt(), norm_sq(&step.p).sqrt());
        prop_assert!((nr - np / gamma).abs() <= 1e-14 * nr.max(1.0));
    }

    #[test]
    fn lbfgs_apply_is_homogeneous(seed in any::<u64>(), n in 2usize..10, alpha in 1e-3f64..1e3) {
        let mut r = rng(seed);
        let mut buf = LbfgsBuffer::new(n, 5, LbfgsMode::Standard);
        for _ in 0..7 {
            let s = uniform_vec(&mut r, n, -1.0, 1.0);
            let y: Vec<f64> = s.iter().map(|v| v * r.random_range(0.5..4.0)).collect();
            buf.push(&s, &y);
        }
        let v = uniform_vec(&mut r, n, -1.0, 1.0);
        let scaled: Vec<f64> = v.iter().map(|x| alpha * x).collect();
        let want: Vec<f64> = buf.apply(&v).iter().map(|x| alpha * x).collect();
        let got = buf.apply(&scaled);
        let scale = want.iter().fold(1e-300f64, |s, x| s.max(x.abs()));
        prop_assert!(max_abs_diff(&got, &want) <= 1e-12 * scale);
    }

    #[test]
    fn masked_apply_leaves_buffer_untouched(seed in any::<u64>(), n in 3usize..10) {
        let mut r = rng(seed);
        let mut buf = LbfgsBuffer::new(n, 4, LbfgsMode::Masked);
        for _ in 0..6 {
            let s = uniform_vec(&mut r, n, -1.0, 1.0);
            // mixed-sign curvature so that some masked pairs are skipped
            let y = uniform_vec(&mut r, n, -1.0, 1.0);
            buf.push(&s, &y);
        }
        let before = format!("{buf:?}");
        let mask: Vec<usize> = (0..n).filter(|_| r.random_bool(0.5)).collect();
        let v = uniform_vec(&mut r, mask.len(), -1.0, 1.0);
        let out = buf.apply_masked(&v, &mask);
        prop_assert_eq!(out.len(), mask.len());
        prop_assert_eq!(before, format!("{buf:?}"));
    }
}

/// Runs the outer loop with `max_outer = k` for growing `k` and checks that
/// the penalty handed to the last inner solve never shrinks.
#[test]
fn penalties_grow_monotonically_across_outer_iterations() {
    for p in suite().iter().filter(|p| p.spec.m() > 0).take(8) {
        let inner = SolverVariant::PanocIls.inner_solver(&PanocParams::default(), 10);
        let mut prev: Option<Vec<f64>> = None;
        for k in 1..=6 {
            let params = AlmParams { max_outer: k, ..AlmParams::default() };
            let out = alm_solve(&p.spec, &p.x0, &p.y0, &params, &inner).unwrap();
            if let Some(prev) = &prev {
                if out.report.outer_iterations == k {
                    for (a, b) in out.sigma_inner.iter().zip(prev) {
                        assert!(a >= b, "{}: sigma dropped from {b} to {a} at outer {k}", p.name);
                    }
                }
            }
            if out.report.outer_iterations < k {
                break;
            }
            prev = Some(out.sigma_inner);
        }
    }
}

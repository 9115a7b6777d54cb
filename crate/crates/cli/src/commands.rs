use std::io::Write;
use std::path::Path;

use alm_panoc::problem::EvalCounters;
use alm_panoc::problems::{internal_suite, mpc_simulate, problem_by_name, MpcConfig, TestProblem};
use alm_panoc::{alm_solve, SolveReport, SolveStatus, SolverVariant};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Settings;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CountersJson {
    pub f: u64,
    pub grad_f: u64,
    pub g: u64,
    pub grad_g_prod: u64,
    pub psi: u64,
    pub grad_psi: u64,
}

impl From<EvalCounters> for CountersJson {
    fn from(c: EvalCounters) -> Self {
        Self {
            f: c.f_evals,
            grad_f: c.grad_f_evals,
            g: c.g_evals,
            grad_g_prod: c.grad_g_prod_evals,
            psi: c.psi_evals,
            grad_psi: c.grad_psi_evals,
        }
    }
}

/// Report of a single `solve`. The stationarity and violation fields come
/// from a fresh evaluation at the returned point, not from the solver.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveJson {
    pub problem: String,
    pub variant: String,
    pub status: String,
    pub kkt_verified: bool,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub inner_failures: usize,
    pub forced_steps: usize,
    pub counters: CountersJson,
    pub eps: f64,
    pub delta: f64,
    pub stationarity: f64,
    pub violation: f64,
    pub wall_time_s: Option<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl SolveJson {
    pub fn success(&self) -> bool {
        self.status == SolveStatus::Converged.as_str() && self.kkt_verified
    }
}

/// One row of the `mpc` CSV. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpcRow {
    pub step: usize,
    pub variant: String,
    pub warm: bool,
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub f_evals: u64,
    pub grad_f_evals: u64,
    pub g_evals: u64,
    pub grad_g_prod_evals: u64,
    pub grad_psi_evals: u64,
    pub wall_time_s: Option<f64>,
    pub status: String,
}

/// One row of the `suite` CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteRow {
    pub problem: String,
    pub variant: String,
    pub status: String,
    pub inner_iters: usize,
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub rows: Vec<SuiteRow>,
    pub solved: Vec<(SolverVariant, usize)>,
    pub total: usize,
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} worker threads: {e}")))
}

fn single_variant(s: &Settings) -> Result<SolverVariant, CliError> {
    match s.variants.as_slice() {
        [] => Ok(SolverVariant::StructPanocIls),
        [v] => Ok(*v),
        _ => Err(CliError::Config("solve takes a single variant".into())),
    }
}

/// Solves one problem, checking `status` against a fresh KKT evaluation.
fn solve_checked(p: &TestProblem, variant: SolverVariant, s: &Settings) -> Result<(SolveReport, SolveJson), CliError> {
    let inner = variant.inner_solver(&s.panoc, s.memory);
    let out = alm_solve(&p.spec, &p.x0, &p.y0, &s.alm, &inner)?;
    let kkt = out.verify(&p.spec)?;
    let report = out.report.clone();
    let json = SolveJson {
        problem: p.name.clone(),
        variant: variant.to_string(),
        status: report.status.to_string(),
        kkt_verified: kkt.passes(s.alm.eps_final, s.alm.delta_final),
        outer_iters: report.outer_iterations,
        inner_iters: report.inner_iterations,
        inner_failures: report.inner_failures,
        forced_steps: report.forced_steps,
        counters: report.counters.into(),
        eps: s.alm.eps_final,
        delta: s.alm.delta_final,
        stationarity: kkt.stationarity,
        violation: kkt.violation,
        wall_time_s: Some(report.wall_time.as_secs_f64()),
        x: out.x,
        y: out.y,
    };
    Ok((report, json))
}

pub fn cmd_solve(s: &Settings) -> Result<SolveJson, CliError> {
    let name = s.problem.as_deref().ok_or_else(|| CliError::Config("solve needs --problem".into()))?;
    let variant = single_variant(s)?;
    let p = problem_by_name(name, s.seed).ok_or_else(|| CliError::Config(format!("unknown problem '{name}'")))?;
    Ok(solve_checked(&p, variant, s)?.1)
}

/// Runs every selected variant in cold and/or warm mode. Rows are ordered by
/// variant, then cold before warm, then step.
pub fn cmd_mpc(s: &Settings) -> Result<Vec<MpcRow>, CliError> {
    let modes: Vec<bool> = match s.warm_start {
        Some(w) => vec![w],
        None => vec![false, true],
    };
    let runs: Vec<(SolverVariant, bool)> =
        s.variants_or_all().into_iter().flat_map(|v| modes.iter().map(move |&w| (v, w))).collect();
    let results = pool(s.jobs)?.install(|| {
        runs.par_iter()
            .map(|&(variant, warm)| {
                let config = MpcConfig { variant, alm: s.alm.clone(), panoc: s.panoc.clone(), memory: s.memory };
                mpc_simulate(&s.chain, &config, s.n_steps, warm).map(|run| (variant, warm, run))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut rows = Vec::new();
    for (variant, warm, run) in results {
        for step in run.steps {
            let r = &step.report;
            rows.push(MpcRow {
                step: step.step,
                variant: variant.to_string(),
                warm,
                inner_iters: r.inner_iterations,
                outer_iters: r.outer_iterations,
                f_evals: r.counters.f_evals,
                grad_f_evals: r.counters.grad_f_evals,
                g_evals: r.counters.g_evals,
                grad_g_prod_evals: r.counters.grad_g_prod_evals,
                grad_psi_evals: r.counters.grad_psi_evals,
                wall_time_s: Some(r.wall_time.as_secs_f64()),
                status: r.status.to_string(),
            });
        }
    }
    Ok(rows)
}

/// Runs the selected variants over the internal suite. A problem counts as
/// solved when the solver converged and the KKT re-check agrees.
pub fn cmd_suite(s: &Settings) -> Result<SuiteOutcome, CliError> {
    let variants = s.variants_or_all();
    let problems = internal_suite(s.seed);
    let total = problems.len();
    let per_problem = pool(s.jobs)?.install(|| {
        problems
            .into_par_iter()
            .map(|p| {
                variants
                    .iter()
                    .map(|&v| {
                        let (report, json) = solve_checked(&p, v, s)?;
                        let status = if json.success() || report.status != SolveStatus::Converged {
                            json.status
                        } else {
                            "Unverified".to_owned()
                        };
                        Ok(SuiteRow {
                            problem: p.name.clone(),
                            variant: v.to_string(),
                            status,
                            inner_iters: report.inner_iterations,
                            wall_time_s: json.wall_time_s,
                        })
                    })
                    .collect::<Result<Vec<_>, CliError>>()
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    let rows: Vec<SuiteRow> = per_problem.into_iter().flatten().collect();
    let solved = variants
        .iter()
        .map(|v| {
            let name = v.as_str();
            (*v, rows.iter().filter(|r| r.variant == name && r.status == SolveStatus::Converged.as_str()).count())
        })
        .collect();
    Ok(SuiteOutcome { rows, solved, total })
}

fn open_out(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(path) => Box::new(std::fs::File::create(path).map_err(|e| CliError::io(path, e))?),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let mut w = open_out(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Output(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::Output(e.to_string()))
}

pub fn write_csv<T: Serialize>(rows: &[T], out: Option<&Path>) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(open_out(out)?);
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Output(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Output(e.to_string()))
}

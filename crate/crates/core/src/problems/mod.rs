//! Benchmark problems with analytic gradients.

mod analytic;
pub mod chain;
pub mod mpc;
mod qp;
mod suite;

pub use analytic::{analytic_suite, equality_1d, halfplane_2d, penalty_1d, qp_10, rosenbrock_box};
pub use chain::{chain_ocp, chain_ode, chain_step_rk4, equidistant_chain, rk4_step, ChainParams, ChainState};
pub use mpc::{mpc_simulate, MpcConfig, MpcRun, MpcStep};
pub use qp::DenseQp;
pub use suite::internal_suite;

use crate::problem::ProblemSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct KnownSolution {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// A problem instance with its starting point.
#[derive(Debug)]
pub struct TestProblem {
    pub name: String,
    pub spec: ProblemSpec,
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub solution: Option<KnownSolution>,
}

impl TestProblem {
    pub fn new(name: impl Into<String>, spec: ProblemSpec, x0: Vec<f64>, y0: Vec<f64>) -> Self {
        Self { name: name.into(), spec, x0, y0, solution: None }
    }

    pub fn with_solution(mut self, solution: KnownSolution) -> Self {
        self.solution = Some(solution);
        self
    }
}

/// Looks a problem up in the internal suite.
pub fn problem_by_name(name: &str, seed: u64) -> Option<TestProblem> {
    internal_suite(seed).into_iter().find(|p| p.name == name)
}

pub fn suite_names(seed: u64) -> Vec<String> {
    internal_suite(seed).into_iter().map(|p| p.name).collect()
}

//! Augmented Lagrangian solver with PANOC inner iterations for problems of
//! the form
//!
//! ```text
//! minimize f(x)  subject to  x in C,  g(x) in D
//! ```
//!
//! where `C` and `D` are boxes and `f`, `g` are smooth.

// `!(a > b)` is used deliberately so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alm;
pub mod boxset;
pub mod error;
pub mod lbfgs;
pub mod panoc;
pub mod problem;
pub mod problems;
pub mod prox;
pub mod structured;
pub mod variant;
pub mod vecops;

pub use alm::{alm_solve, AlmOutcome, AlmParams, DirectionKind, InnerSolver, SolveReport};
pub use boxset::BoxSet;
pub use error::{Error, Result};
pub use lbfgs::{LbfgsBuffer, LbfgsMode};
pub use panoc::{panoc_solve, LineSearch, PanocParams, PanocResult};
pub use problem::{EvalCounters, FnProblem, Problem, ProblemSpec, SolveStatus};
pub use prox::SmoothOracle;
pub use variant::SolverVariant;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/panoc.md")]
    mod panoc {}
    #[doc = include_str!("../../../book/src/directions.md")]
    mod directions {}
    #[doc = include_str!("../../../book/src/alm.md")]
    mod alm {}
    #[doc = include_str!("../../../book/src/chain.md")]
    mod chain {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

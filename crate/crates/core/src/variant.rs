//! The six named inner-solver configurations.

use std::fmt;
use std::str::FromStr;

use crate::alm::{DirectionKind, InnerSolver};
use crate::error::Error;
use crate::panoc::{LineSearch, PanocParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolverVariant {
    Panoc,
    PanocIls,
    StructPanoc,
    StructPanocIls,
    ApproxStructPanoc,
    ApproxStructPanocIls,
}

impl SolverVariant {
    pub const ALL: [SolverVariant; 6] = [
        SolverVariant::Panoc,
        SolverVariant::PanocIls,
        SolverVariant::StructPanoc,
        SolverVariant::StructPanocIls,
        SolverVariant::ApproxStructPanoc,
        SolverVariant::ApproxStructPanocIls,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverVariant::Panoc => "panoc",
            SolverVariant::PanocIls => "panoc-ils",
            SolverVariant::StructPanoc => "struct-panoc",
            SolverVariant::StructPanocIls => "struct-panoc-ils",
            SolverVariant::ApproxStructPanoc => "approx-struct-panoc",
            SolverVariant::ApproxStructPanocIls => "approx-struct-panoc-ils",
        }
    }

    pub fn direction(self) -> DirectionKind {
        match self {
            SolverVariant::Panoc | SolverVariant::PanocIls => DirectionKind::Lbfgs,
            SolverVariant::StructPanoc | SolverVariant::StructPanocIls => {
                DirectionKind::Structured { include_hessian_vec: true }
            }
            SolverVariant::ApproxStructPanoc | SolverVariant::ApproxStructPanocIls => {
                DirectionKind::Structured { include_hessian_vec: false }
            }
        }
    }

    pub fn line_search(self) -> LineSearch {
        match self {
            SolverVariant::Panoc | SolverVariant::StructPanoc | SolverVariant::ApproxStructPanoc => {
                LineSearch::Original
            }
            _ => LineSearch::Improved,
        }
    }

    pub fn include_hessian_vec(self) -> bool {
        matches!(self.direction(), DirectionKind::Structured { include_hessian_vec: true })
    }

    /// Inner solver for this variant, with the line search overriding the
    /// one in `panoc`.
    pub fn inner_solver(self, panoc: &PanocParams, memory: usize) -> InnerSolver {
        InnerSolver {
            panoc: PanocParams { line_search: self.line_search(), ..panoc.clone() },
            direction: self.direction(),
            memory,
        }
    }
}

impl fmt::Display for SolverVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        SolverVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown solver variant `{s}`")))
    }
}

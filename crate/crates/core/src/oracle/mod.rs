//! Independent checks: a mesh-discretized energy minimization, a
//! finite-difference operator, and truncation studies for countable state
//! sets.

use std::sync::Arc;

use thiserror::Error;

use crate::bvp::SolveError;
use crate::process::ProcessError;
use crate::tree::{TemporalTree, TreeError};

mod convergence;
mod operator;
mod qp;

pub use convergence::{
    converge_generator, converge_truncation, converge_truncation_with_budget, TruncationReport, TruncationRow,
};
pub use operator::{form_defect, operator_matrix, operator_report, DiscreteOperator, DomainFunction, OperatorReport};
pub use qp::{qp_minimize, qp_reference, QpReference, QpSolution};

/// Smallest admissible number of cells per edge.
pub const MIN_CELLS: usize = 8;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("mesh of {0} cells per edge is too coarse (minimum {MIN_CELLS})")]
    MeshTooCoarse(usize),
    #[error("mesh sizes {0:?} must double from level to level")]
    MeshSequence(Vec<usize>),
    #[error("reduced system is not positive definite at node {node} (pivot {pivot})")]
    Indefinite { node: usize, pivot: f64 },
    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),
    #[error("truncation level {needed} exceeds the {available} available states")]
    NotEnoughStates { needed: usize, available: usize },
    #[error("truncation level {k}: {source}")]
    Tree { k: usize, source: TreeError },
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// A tree together with a uniform mesh of `m` cells on every edge.
#[derive(Clone, Debug)]
pub struct DiscretizedInstance {
    pub tree: Arc<TemporalTree>,
    pub m: usize,
}

impl DiscretizedInstance {
    pub fn new(tree: Arc<TemporalTree>, m: usize) -> Result<Self, OracleError> {
        if m < MIN_CELLS {
            return Err(OracleError::MeshTooCoarse(m));
        }
        Ok(Self { tree, m })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Grid values before vertex identification, `E (M + 1)`.
    pub fn unknowns(&self) -> usize {
        self.tree.edge_count() * (self.m + 1)
    }

    /// `α_j` per edge.
    pub fn weights(&self) -> Vec<f64> {
        self.tree.edges().iter().map(|e| e.alpha).collect()
    }
}

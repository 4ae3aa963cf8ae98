use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::bvp::{solve, BoundaryData};
use crate::control::extract_controls;
use crate::process::{truncate, ProcessSpec, StateGenerator, TruncationPolicy};
use crate::tree::{build_tree_with_budget, EdgeId, DEFAULT_EDGE_BUDGET};

/// Sample points for the root-edge control.
pub const ROOT_SAMPLES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationRow {
    pub k: usize,
    pub edges: usize,
    pub energy: f64,
    /// `u_1(t)` at [`ROOT_SAMPLES`].
    pub root_control: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub rows: Vec<TruncationRow>,
}

impl TruncationReport {
    /// `|J(K_{i+1}) - J(K_i)|` for consecutive levels.
    pub fn differences(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| (w[1].energy - w[0].energy).abs()).collect()
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.differences().windows(2).all(|w| w[1] < w[0])
    }

    pub fn spread(&self) -> f64 {
        let max = self.rows.iter().map(|r| r.energy).fold(f64::NEG_INFINITY, f64::max);
        let min = self.rows.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min);
        if self.rows.is_empty() {
            0.0
        } else {
            max - min
        }
    }
}

pub fn converge_truncation(spec: &ProcessSpec, data: &BoundaryData, k_list: &[usize]) -> Result<TruncationReport, OracleError> {
    converge_truncation_with_budget(spec, data, k_list, DEFAULT_EDGE_BUDGET)
}

/// Solves the problem for the first `K` states (renormalized) of the base
/// distribution, one level per thread.
pub fn converge_truncation_with_budget(
    spec: &ProcessSpec,
    data: &BoundaryData,
    k_list: &[usize],
    budget: usize,
) -> Result<TruncationReport, OracleError> {
    let available = spec.base.len();
    if let Some(&needed) = k_list.iter().find(|&&k| k > available || k == 0) {
        return Err(OracleError::NotEnoughStates { needed, available });
    }
    let results: Vec<Result<TruncationRow, OracleError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = k_list
            .iter()
            .map(|&k| scope.spawn(move || level(spec, data, k, budget)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("truncation worker panicked")).collect()
    });
    Ok(TruncationReport {
        rows: results.into_iter().collect::<Result<_, _>>()?,
    })
}

fn level(spec: &ProcessSpec, data: &BoundaryData, k: usize, budget: usize) -> Result<TruncationRow, OracleError> {
    let truncated = truncate(spec, TruncationPolicy::new(k));
    let tree = Arc::new(build_tree_with_budget(&truncated, budget).map_err(|source| OracleError::Tree { k, source })?);
    let traj = solve(tree.clone(), data)?;
    let fam = extract_controls(&traj);
    let root = fam.control(EdgeId::ROOT);
    Ok(TruncationRow {
        k,
        edges: tree.edge_count(),
        energy: fam.energy,
        root_control: ROOT_SAMPLES.iter().map(|&t| root.value(t)).collect(),
    })
}

/// Materializes `max(k_list)` states from `generator` into `template`'s base
/// distribution and runs the truncation study.
pub fn converge_generator(
    generator: &StateGenerator,
    template: &ProcessSpec,
    data: &BoundaryData,
    k_list: &[usize],
) -> Result<TruncationReport, OracleError> {
    let count = k_list.iter().copied().max().unwrap_or(0);
    let mut spec = template.clone();
    spec.base = generator.materialize(count)?;
    converge_truncation(&spec, data, k_list)
}

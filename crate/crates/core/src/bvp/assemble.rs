use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{beta_unchecked, BoundaryData, SolveError};
use crate::edge::EdgeBasis;
use crate::tree::{EdgeId, TemporalTree};

/// Which vertex condition a row encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Root,
    Continuity,
    Leaf,
    Kirchhoff,
}

impl fmt::Display for RowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RowKind::Root => "root",
            RowKind::Continuity => "continuity",
            RowKind::Leaf => "leaf",
            RowKind::Kirchhoff => "Kirchhoff",
        };
        f.write_str(s)
    }
}

/// Sparse `2E × 2E` system in triplet form. Unknowns of the edge at position
/// `k` of the ordering are columns `2k` (c₁) and `2k + 1` (c₂); rows `2k` and
/// `2k + 1` hold its start and end conditions.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub dim: usize,
    pub entries: Vec<(usize, usize, Complex64)>,
    pub rhs: Vec<Complex64>,
    pub rows: Vec<(EdgeId, RowKind)>,
    pub order: Vec<EdgeId>,
    pub bases: Vec<EdgeBasis>,
}

impl LinearSystem {
    pub fn count(&self, kind: RowKind) -> usize {
        self.rows.iter().filter(|(_, k)| *k == kind).count()
    }

    /// Position of every edge in the ordering, indexed by slot.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (k, id) in self.order.iter().enumerate() {
            pos[id.slot()] = k;
        }
        pos
    }

    /// Max absolute column sum.
    pub fn norm1(&self) -> f64 {
        let mut cols = vec![0.0; self.dim];
        for &(_, c, v) in &self.entries {
            cols[c] += v.norm();
        }
        cols.into_iter().fold(0.0, f64::max)
    }
}

/// Assembles with breadth-first ordering.
pub fn assemble(tree: &TemporalTree, data: &BoundaryData) -> LinearSystem {
    let order: Vec<EdgeId> = tree.ids().collect();
    assemble_ordered(tree, data, &order).expect("identity ordering is valid")
}

pub fn assemble_ordered(
    tree: &TemporalTree,
    data: &BoundaryData,
    order: &[EdgeId],
) -> Result<LinearSystem, SolveError> {
    let n = tree.edge_count();
    let mut pos = vec![usize::MAX; n];
    if order.len() != n {
        return Err(SolveError::BadOrder(n));
    }
    for (k, id) in order.iter().enumerate() {
        if id.0 == 0 || id.0 > n || pos[id.slot()] != usize::MAX {
            return Err(SolveError::BadOrder(n));
        }
        pos[id.slot()] = k;
    }
    let bases: Vec<EdgeBasis> = tree.edges().iter().map(|e| EdgeBasis::new(e.b)).collect();
    let dim = 2 * n;
    let mut entries = Vec::with_capacity(8 * n);
    let mut rhs = vec![Complex64::new(0.0, 0.0); dim];
    let mut rows = vec![(EdgeId::ROOT, RowKind::Root); dim];
    let col = |id: EdgeId| 2 * pos[id.slot()];

    for e in tree.edges() {
        let basis = &bases[e.id.slot()];
        let r_start = 2 * pos[e.id.slot()];
        let r_end = r_start + 1;
        let cj = col(e.id);
        let f0 = basis.values(0.0);

        // start vertex
        match e.parent {
            None => {
                entries.push((r_start, cj, f0[0]));
                entries.push((r_start, cj + 1, f0[1]));
                rhs[r_start] = data.initial;
                rows[r_start] = (e.id, RowKind::Root);
            }
            Some(p) => {
                let fp = bases[p.slot()].values(1.0);
                let cp = col(p);
                entries.push((r_start, cp, fp[0]));
                entries.push((r_start, cp + 1, fp[1]));
                entries.push((r_start, cj, -f0[0]));
                entries.push((r_start, cj + 1, -f0[1]));
                rows[r_start] = (e.id, RowKind::Continuity);
            }
        }

        // end vertex
        let f1 = basis.values(1.0);
        if e.is_leaf() {
            entries.push((r_end, cj, f1[0]));
            entries.push((r_end, cj + 1, f1[1]));
            rhs[r_end] = data.target_for(tree, e.id);
            rows[r_end] = (e.id, RowKind::Leaf);
        } else {
            let d1 = basis.derivatives(1.0);
            let beta = beta_unchecked(tree, e.id);
            entries.push((r_end, cj, d1[0] + beta * f1[0]));
            entries.push((r_end, cj + 1, d1[1] + beta * f1[1]));
            for &nu in &e.children {
                let p = tree.edge(nu).p_tilde;
                let dn = bases[nu.slot()].derivatives(0.0);
                let cn = col(nu);
                entries.push((r_end, cn, -p * dn[0]));
                entries.push((r_end, cn + 1, -p * dn[1]));
            }
            rows[r_end] = (e.id, RowKind::Kirchhoff);
        }
    }
    Ok(LinearSystem {
        dim,
        entries,
        rhs,
        rows,
        order: order.to_vec(),
        bases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{Distribution, ProcessSpec};
    use crate::tree::build_tree;

    fn tree(states: &[f64], probs: &[f64], horizon: usize) -> TemporalTree {
        let spec = ProcessSpec::new(
            Distribution::real(states, probs),
            horizon,
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
        );
        build_tree(&spec).unwrap()
    }

    #[test]
    fn single_edge_is_the_interval_problem() {
        let t = tree(&[1.0], &[1.0], 1);
        let sys = assemble(&t, &BoundaryData::uniform(Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)));
        assert_eq!(sys.dim, 2);
        assert_eq!(sys.count(RowKind::Root), 1);
        assert_eq!(sys.count(RowKind::Leaf), 1);
        assert_eq!(sys.rhs, vec![Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)]);
    }

    #[test]
    fn row_counts_for_binary_tree() {
        let t = tree(&[1.0, 2.0], &[0.5, 0.5], 2);
        let sys = assemble(&t, &BoundaryData::uniform(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)));
        assert_eq!(sys.dim, 6);
        assert_eq!(sys.count(RowKind::Root), 1);
        assert_eq!(sys.count(RowKind::Continuity), 2);
        assert_eq!(sys.count(RowKind::Leaf), 2);
        assert_eq!(sys.count(RowKind::Kirchhoff), 1);
    }

    #[test]
    fn bad_orderings_are_rejected() {
        let t = tree(&[1.0, 2.0], &[0.5, 0.5], 2);
        let d = BoundaryData::uniform(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        assert!(assemble_ordered(&t, &d, &[EdgeId(1), EdgeId(1), EdgeId(2)]).is_err());
        assert!(assemble_ordered(&t, &d, &[EdgeId(1), EdgeId(2)]).is_err());
        assert!(assemble_ordered(&t, &d, &[EdgeId(3), EdgeId(1), EdgeId(2)]).is_ok());
    }
}

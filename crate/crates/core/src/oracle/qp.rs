//! Brute-force minimization of the discretized energy.
//!
//! Each edge carries `M` cells. The energy of a grid function is
//! `Σ_j α_j h Σ_m |(y_{m+1} - y_m)/h + b_j (y_m + y_{m+1})/2|²`. Vertex values
//! are shared between a parent edge and its children, the root value and leaf
//! values are fixed. The Hessian graph of the free nodes is a forest, so the
//! normal equations are solved by eliminating leaves first without fill-in.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{DiscretizedInstance, OracleError};
use crate::bvp::{BoundaryData, TreeTrajectory};
use crate::tree::EdgeId;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Grid minimizer: `values[slot][m]` is `y_j(m h)` for `m = 0..=M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub m: usize,
    pub values: Vec<Vec<Complex64>>,
    pub energy: f64,
}

impl QpSolution {
    pub fn value(&self, id: EdgeId, m: usize) -> Complex64 {
        self.values[id.slot()][m]
    }

    /// `max |y_h - y(t_m)| / max |y(t_m)|` over the whole grid.
    pub fn relative_gap(&self, traj: &TreeTrajectory) -> f64 {
        let mut gap: f64 = 0.0;
        let mut size: f64 = 0.0;
        for (slot, row) in self.values.iter().enumerate() {
            let sol = traj.edge(EdgeId::from_slot(slot));
            for (m, v) in row.iter().enumerate() {
                let exact = sol.value(m as f64 / self.m as f64);
                gap = gap.max((exact - v).norm());
                size = size.max(exact.norm());
            }
        }
        if size == 0.0 {
            gap
        } else {
            gap / size
        }
    }
}

struct Node {
    parent: Option<usize>,
    diag: f64,
    /// Hessian entry coupling this node to its parent, `H[i, parent]`.
    off: Complex64,
    rhs: Complex64,
}

/// Grid index of `(edge slot, m)` for `m ≥ 1`: each edge owns its interior
/// nodes and its end vertex.
fn node_index(m_cells: usize, slot: usize, m: usize) -> usize {
    slot * m_cells + m - 1
}

pub fn qp_minimize(inst: &DiscretizedInstance, data: &BoundaryData) -> Result<QpSolution, OracleError> {
    let tree = &inst.tree;
    data.validate(tree)?;
    let mc = inst.m;
    let h = inst.h();
    let n = tree.edge_count() * mc;

    let mut fixed: Vec<Option<Complex64>> = vec![None; n];
    let mut nodes: Vec<Node> = Vec::with_capacity(n);
    for e in tree.edges() {
        let s = e.id.slot();
        for m in 1..=mc {
            let parent = if m > 1 {
                Some(node_index(mc, s, m - 1))
            } else {
                e.parent.map(|p| node_index(mc, p.slot(), mc))
            };
            nodes.push(Node {
                parent,
                diag: 0.0,
                off: ZERO,
                rhs: ZERO,
            });
        }
        if e.is_leaf() {
            fixed[node_index(mc, s, mc)] = Some(data.target_for(tree, e.id));
        }
    }

    // Cell (a, b) with a the grid parent of b.
    for e in tree.edges() {
        let s = e.id.slot();
        let w = e.alpha * h;
        let c0 = Complex64::new(-1.0 / h, 0.0) + e.b * 0.5;
        let c1 = Complex64::new(1.0 / h, 0.0) + e.b * 0.5;
        let h_ab = w * c0.conj() * c1;
        for m in 0..mc {
            let b = node_index(mc, s, m + 1);
            let a = if m == 0 { nodes[b].parent } else { Some(node_index(mc, s, m)) };
            let a_value = match a {
                None => Some(data.initial),
                Some(a) => fixed[a],
            };
            match (a, a_value, fixed[b]) {
                (_, Some(va), None) => {
                    nodes[b].diag += w * c1.norm_sqr();
                    nodes[b].rhs -= h_ab.conj() * va;
                }
                (Some(a), None, Some(vb)) => {
                    nodes[a].diag += w * c0.norm_sqr();
                    nodes[a].rhs -= h_ab * vb;
                }
                (Some(a), None, None) => {
                    nodes[a].diag += w * c0.norm_sqr();
                    nodes[b].diag += w * c1.norm_sqr();
                    nodes[b].off = h_ab.conj();
                }
                _ => return Err(OracleError::Indefinite { node: b, pivot: 0.0 }),
            }
        }
    }

    // Free nodes whose parent is fixed or absent are roots of the forest.
    for i in 0..n {
        if let Some(p) = nodes[i].parent {
            if fixed[p].is_some() {
                nodes[i].parent = None;
            }
        }
    }

    // Parents precede children in index order, so reverse order eliminates
    // every child before its parent.
    for i in (0..n).rev() {
        if fixed[i].is_some() {
            continue;
        }
        let d = nodes[i].diag;
        if !(d > 0.0) {
            return Err(OracleError::Indefinite { node: i, pivot: d });
        }
        if let Some(p) = nodes[i].parent {
            let off = nodes[i].off;
            let rhs = nodes[i].rhs;
            nodes[p].diag -= off.norm_sqr() / d;
            nodes[p].rhs -= off.conj() * rhs / d;
        }
    }
    let mut x = vec![ZERO; n];
    for i in 0..n {
        x[i] = match fixed[i] {
            Some(v) => v,
            None => {
                let coupled = nodes[i].parent.map_or(ZERO, |p| nodes[i].off * x[p]);
                (nodes[i].rhs - coupled) / nodes[i].diag
            }
        };
    }

    let mut values = Vec::with_capacity(tree.edge_count());
    let mut energy = 0.0;
    for e in tree.edges() {
        let s = e.id.slot();
        let start = e.parent.map_or(data.initial, |p| x[node_index(mc, p.slot(), mc)]);
        let mut row = Vec::with_capacity(mc + 1);
        row.push(start);
        row.extend_from_slice(&x[node_index(mc, s, 1)..=node_index(mc, s, mc)]);
        let cell_sum: f64 = row
            .windows(2)
            .map(|w| ((w[1] - w[0]) / h + e.b * (w[0] + w[1]) * 0.5).norm_sqr())
            .sum();
        energy += e.alpha * h * cell_sum;
        values.push(row);
    }
    Ok(QpSolution { m: mc, values, energy })
}

/// `J_h` over a sequence of mesh sizes with a Richardson estimate of the
/// limit from the two finest levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QpReference {
    pub ms: Vec<usize>,
    pub energies: Vec<f64>,
    pub extrapolated: f64,
    /// `log2` of the ratio of successive differences; `None` with fewer than
    /// three levels or a zero difference.
    pub observed_order: Option<f64>,
    /// Minimizer at the finest level.
    pub finest: QpSolution,
}

/// Meshes must double from one level to the next.
pub fn qp_reference(
    tree: std::sync::Arc<crate::tree::TemporalTree>,
    data: &BoundaryData,
    ms: &[usize],
) -> Result<QpReference, OracleError> {
    if ms.is_empty() || ms.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(OracleError::MeshSequence(ms.to_vec()));
    }
    let mut energies = Vec::with_capacity(ms.len());
    let mut finest = None;
    for &m in ms {
        let sol = qp_minimize(&DiscretizedInstance::new(tree.clone(), m)?, data)?;
        energies.push(sol.energy);
        finest = Some(sol);
    }
    let k = energies.len();
    let extrapolated = if k >= 2 {
        (4.0 * energies[k - 1] - energies[k - 2]) / 3.0
    } else {
        energies[0]
    };
    let observed_order = if k >= 3 {
        let d1 = energies[k - 3] - energies[k - 2];
        let d2 = energies[k - 2] - energies[k - 1];
        (d1 != 0.0 && d2 != 0.0).then(|| (d1 / d2).abs().log2())
    } else {
        None
    };
    Ok(QpReference {
        ms: ms.to_vec(),
        energies,
        extrapolated,
        observed_order,
        finest: finest.expect("non-empty mesh list"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{Distribution, ProcessSpec};
    use crate::tree::build_tree;
    use std::sync::Arc;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn instance(states: &[f64], probs: &[f64], horizon: usize, m: usize) -> DiscretizedInstance {
        let spec = ProcessSpec::new(Distribution::real(states, probs), horizon, c(0.0), c(0.0));
        DiscretizedInstance::new(Arc::new(build_tree(&spec).unwrap()), m).unwrap()
    }

    #[test]
    fn straight_line_energy() {
        for horizon in [1, 2, 3] {
            let inst = instance(&[0.0, 0.0], &[0.3, 0.7], horizon, 1000);
            let sol = qp_minimize(&inst, &BoundaryData::uniform(c(0.0), c(1.0))).unwrap();
            assert!((sol.energy - 1.0 / horizon as f64).abs() <= 1e-5);
        }
    }

    #[test]
    fn zero_data_zero_grid() {
        let inst = instance(&[1.0, 2.0], &[0.5, 0.5], 3, 16);
        let sol = qp_minimize(&inst, &BoundaryData::uniform(c(0.0), c(0.0))).unwrap();
        assert_eq!(sol.energy, 0.0);
        assert!(sol.values.iter().flatten().all(|v| *v == c(0.0)));
    }

    #[test]
    fn vertex_values_are_shared() {
        let inst = instance(&[1.0, 2.0], &[0.5, 0.5], 3, 20);
        let sol = qp_minimize(&inst, &BoundaryData::uniform(c(1.0), c(-0.5))).unwrap();
        let tree = &inst.tree;
        for e in tree.edges() {
            match e.parent {
                None => assert_eq!(sol.value(e.id, 0), c(1.0)),
                Some(p) => assert_eq!(sol.value(e.id, 0), sol.value(p, 20)),
            }
            if e.is_leaf() {
                assert_eq!(sol.value(e.id, 20), c(-0.5));
            }
        }
    }

    #[test]
    fn mesh_sequence_must_double() {
        let inst = instance(&[1.0], &[1.0], 2, 8);
        let data = BoundaryData::uniform(c(1.0), c(0.0));
        assert!(matches!(
            qp_reference(inst.tree.clone(), &data, &[8, 12]),
            Err(OracleError::MeshSequence(_))
        ));
        let r = qp_reference(inst.tree.clone(), &data, &[16, 32, 64]).unwrap();
        assert!((r.observed_order.unwrap() - 2.0).abs() < 0.1);
    }
}

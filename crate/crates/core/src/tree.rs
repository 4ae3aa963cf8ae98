//! The finite temporal tree: one unit-length edge per partial realization of
//! the coefficient process.
//!
//! Edges are numbered breadth-first starting from 1 (the single edge leaving
//! the root). Edge `j` runs from the vertex at the end of its parent edge
//! `k_j` to its own end vertex `v_j`, so interior vertices are identified with
//! the edges that end at them.

use std::fmt;
use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::process::ProcessSpec;

pub const DEFAULT_EDGE_BUDGET: usize = 200_000;

/// 1-based edge index; `EdgeId(1)` is the root edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub usize);

impl EdgeId {
    pub const ROOT: EdgeId = EdgeId(1);

    /// Zero-based storage slot.
    pub fn slot(self) -> usize {
        self.0 - 1
    }

    pub fn from_slot(slot: usize) -> Self {
        EdgeId(slot + 1)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("instance too large: {edges} edges exceed the budget of {budget}")]
    TooLarge { edges: u128, budget: usize },
    #[error("edge index {0} out of range 1..={1}")]
    OutOfRange(usize, usize),
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("vertex at the end of edge {0} has no outgoing branch with positive probability")]
    NoBranches(EdgeId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    /// `k_j`; `None` for the root edge (`k_1 = 0`).
    pub parent: Option<EdgeId>,
    /// `V_j`, empty for leaf edges.
    pub children: Vec<EdgeId>,
    /// Number of edges on the path to the root, `ν_j + 1`.
    pub depth: usize,
    pub b: Complex64,
    /// Branch probability at the parent vertex (`1` for the root edge).
    pub p_tilde: f64,
    /// Path probability `α_j`.
    pub alpha: f64,
    /// Index of the process state this edge realizes (`None` for the root edge).
    pub branch: Option<usize>,
}

impl Edge {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalTree {
    edges: Vec<Edge>,
    horizon: usize,
    levels: Vec<Range<usize>>,
    interior: Vec<EdgeId>,
    leaves: Vec<EdgeId>,
    leaf_rank: Vec<Option<usize>>,
    root_defaulted: bool,
}

/// Builds the tree with the default edge budget.
pub fn build_tree(spec: &ProcessSpec) -> Result<TemporalTree, TreeError> {
    build_tree_with_budget(spec, DEFAULT_EDGE_BUDGET)
}

pub fn build_tree_with_budget(spec: &ProcessSpec, budget: usize) -> Result<TemporalTree, TreeError> {
    if spec.horizon < 1 {
        return Err(TreeError::EmptyHorizon);
    }
    let projected = projected_edge_count(spec);
    if projected > budget as u128 {
        return Err(TreeError::TooLarge {
            edges: projected,
            budget,
        });
    }

    let (b_root, root_defaulted) = spec.root_coefficient();
    let mut edges = vec![Edge {
        id: EdgeId::ROOT,
        parent: None,
        children: Vec::new(),
        depth: 1,
        b: b_root,
        p_tilde: 1.0,
        alpha: 1.0,
        branch: None,
    }];
    let mut levels = vec![0..1];
    for depth in 1..spec.horizon {
        let level = levels[depth - 1].clone();
        let start = edges.len();
        for slot in level {
            let parent = EdgeId::from_slot(slot);
            let dist = spec.distribution_for(parent, depth);
            let parent_alpha = edges[slot].alpha;
            let mut kids = Vec::new();
            for (l, theta, p) in dist.branches() {
                let id = EdgeId::from_slot(edges.len());
                edges.push(Edge {
                    id,
                    parent: Some(parent),
                    children: Vec::new(),
                    depth: depth + 1,
                    b: theta,
                    p_tilde: p,
                    alpha: p * parent_alpha,
                    branch: Some(l),
                });
                kids.push(id);
            }
            if kids.is_empty() {
                return Err(TreeError::NoBranches(parent));
            }
            edges[slot].children = kids;
        }
        levels.push(start..edges.len());
    }

    let interior: Vec<EdgeId> = edges.iter().filter(|e| !e.is_leaf()).map(|e| e.id).collect();
    let leaves: Vec<EdgeId> = edges.iter().filter(|e| e.is_leaf()).map(|e| e.id).collect();
    let mut leaf_rank = vec![None; edges.len()];
    for (rank, id) in leaves.iter().enumerate() {
        leaf_rank[id.slot()] = Some(rank);
    }
    Ok(TemporalTree {
        edges,
        horizon: spec.horizon,
        levels,
        interior,
        leaves,
        leaf_rank,
        root_defaulted,
    })
}

/// Edge count implied by the spec, computed level by level without building
/// the tree. Saturates on overflow.
pub fn projected_edge_count(spec: &ProcessSpec) -> u128 {
    use crate::process::VertexSelector;
    let vertex_overrides: Vec<(usize, u128)> = spec
        .overrides
        .iter()
        .filter_map(|o| match o.at {
            VertexSelector::Vertex(id) => Some((id.0, o.distribution.branch_count() as u128)),
            VertexSelector::Level(_) => None,
        })
        .collect();
    // Level k occupies ids [first, first + width).
    let mut first: u128 = 1;
    let mut width: u128 = 1;
    let mut total: u128 = 1;
    for depth in 1..spec.horizon {
        let level_k = spec.distribution_for(EdgeId(0), depth).branch_count() as u128;
        let mut next = width.saturating_mul(level_k);
        for &(id, k) in &vertex_overrides {
            let id = id as u128;
            if id >= first && id < first.saturating_add(width) {
                next = next.saturating_sub(level_k).saturating_add(k);
            }
        }
        first = first.saturating_add(width);
        width = next;
        total = total.saturating_add(next);
    }
    total
}

impl TemporalTree {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.slot()]
    }

    pub fn get(&self, id: EdgeId) -> Result<&Edge, TreeError> {
        if id.0 == 0 || id.0 > self.edges.len() {
            return Err(TreeError::OutOfRange(id.0, self.edges.len()));
        }
        Ok(&self.edges[id.slot()])
    }

    pub fn ids(&self) -> impl DoubleEndedIterator<Item = EdgeId> + ExactSizeIterator {
        (0..self.edges.len()).map(EdgeId::from_slot)
    }

    pub fn parent(&self, id: EdgeId) -> Option<EdgeId> {
        self.edge(id).parent
    }

    pub fn children(&self, id: EdgeId) -> &[EdgeId] {
        &self.edge(id).children
    }

    pub fn b(&self, id: EdgeId) -> Complex64 {
        self.edge(id).b
    }

    pub fn alpha(&self, id: EdgeId) -> f64 {
        self.edge(id).alpha
    }

    /// Edges ending at interior vertices (the set `ℕ₁` of the construction).
    pub fn interior(&self) -> &[EdgeId] {
        &self.interior
    }

    /// Edges ending at leaf vertices (`ℕ₂`), all of depth `T`.
    pub fn leaves(&self) -> &[EdgeId] {
        &self.leaves
    }

    pub fn leaf_rank(&self, id: EdgeId) -> Option<usize> {
        self.leaf_rank[id.slot()]
    }

    /// Edges of level `k ∈ 1..=T`, in breadth-first order.
    pub fn level(&self, k: usize) -> &[Edge] {
        &self.edges[self.levels[k - 1].clone()]
    }

    pub fn root_defaulted(&self) -> bool {
        self.root_defaulted
    }

    pub fn sup_coefficient(&self) -> f64 {
        self.edges.iter().map(|e| e.b.norm()).fold(0.0, f64::max)
    }

    /// `[j, k_j, k_j^{(2)}, …, 1]`.
    pub fn path_to_root(&self, id: EdgeId) -> Result<Vec<EdgeId>, TreeError> {
        self.get(id)?;
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.parent(cur) {
            path.push(p);
            cur = p;
        }
        Ok(path)
    }

    /// `α_j` as the product of branch probabilities along the path, the
    /// non-recursive form of the weight.
    pub fn alpha_product(&self, id: EdgeId) -> f64 {
        let mut cur = id;
        let mut acc = 1.0;
        while let Some(p) = self.parent(cur) {
            acc *= self.edge(cur).p_tilde;
            cur = p;
        }
        acc
    }

    /// One entry per leaf: the coefficient sequence root→leaf and its probability.
    pub fn realizations(&self) -> impl Iterator<Item = Realization> + '_ {
        self.leaves.iter().map(move |&leaf| {
            let mut coefficients: Vec<Complex64> = self
                .path_to_root(leaf)
                .expect("leaf ids are in range")
                .into_iter()
                .map(|e| self.b(e))
                .collect();
            coefficients.reverse();
            Realization {
                leaf,
                coefficients,
                probability: self.alpha(leaf),
            }
        })
    }

    /// Structured edge list for debugging and fixtures.
    pub fn export(&self) -> TreeExport {
        TreeExport {
            horizon: self.horizon,
            root_defaulted: self.root_defaulted,
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    index: e.id.0,
                    parent: e.parent.map_or(0, |p| p.0),
                    depth: e.depth,
                    b: e.b,
                    p_tilde: e.p_tilde,
                    alpha: e.alpha,
                })
                .collect(),
        }
    }

    /// The same tree with every edge coefficient replaced.
    pub fn with_coefficients(&self, mut f: impl FnMut(&Edge) -> Complex64) -> Self {
        let mut out = self.clone();
        for e in &mut out.edges {
            e.b = f(e);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub leaf: EdgeId,
    pub coefficients: Vec<Complex64>,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub index: usize,
    /// `0` denotes the root vertex.
    pub parent: usize,
    pub depth: usize,
    pub b: Complex64,
    pub p_tilde: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeExport {
    pub horizon: usize,
    pub root_defaulted: bool,
    pub edges: Vec<EdgeRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{Distribution, VertexSelector};

    fn spec(states: &[f64], probs: &[f64], horizon: usize) -> ProcessSpec {
        ProcessSpec::new(
            Distribution::real(states, probs),
            horizon,
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
        )
    }

    #[test]
    fn binary_two_level_tree() {
        let t = build_tree(&spec(&[1.0, 2.0], &[0.5, 0.5], 2)).unwrap();
        assert_eq!(t.edge_count(), 3);
        let alpha: Vec<f64> = t.edges().iter().map(|e| e.alpha).collect();
        assert_eq!(alpha, vec![1.0, 0.5, 0.5]);
        assert_eq!(t.children(EdgeId(1)), &[EdgeId(2), EdgeId(3)]);
        assert_eq!(t.interior(), &[EdgeId(1)]);
        assert_eq!(t.leaves(), &[EdgeId(2), EdgeId(3)]);
        assert!(t.root_defaulted());
        assert_eq!(t.b(EdgeId(1)), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn three_levels_have_quarter_leaves() {
        let t = build_tree(&spec(&[1.0, 2.0], &[0.5, 0.5], 3)).unwrap();
        assert_eq!(t.edge_count(), 7);
        for &leaf in t.leaves() {
            assert_eq!(t.alpha(leaf), 0.25);
            assert_eq!(t.edge(leaf).depth, 3);
        }
        for k in 1..=3 {
            let s: f64 = t.level(k).iter().map(|e| e.alpha).sum();
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn single_state_gives_a_path() {
        let t = build_tree(&spec(&[1.0], &[1.0], 2)).unwrap();
        assert_eq!(t.edge_count(), 2);
        assert_eq!(t.path_to_root(EdgeId(2)).unwrap(), vec![EdgeId(2), EdgeId(1)]);
        assert_eq!(t.realizations().count(), 1);
    }

    #[test]
    fn path_to_root_checks_range() {
        let t = build_tree(&spec(&[1.0, 2.0], &[0.5, 0.5], 2)).unwrap();
        assert_eq!(t.path_to_root(EdgeId(1)).unwrap(), vec![EdgeId(1)]);
        assert_eq!(t.path_to_root(EdgeId(3)).unwrap(), vec![EdgeId(3), EdgeId(1)]);
        assert_eq!(t.path_to_root(EdgeId(4)), Err(TreeError::OutOfRange(4, 3)));
        assert_eq!(t.path_to_root(EdgeId(0)), Err(TreeError::OutOfRange(0, 3)));
    }

    #[test]
    fn realizations_enumerate_coefficient_sequences() {
        let s = spec(&[1.0, 2.0], &[0.5, 0.5], 2).with_b_root(Complex64::new(5.0, 0.0));
        let t = build_tree(&s).unwrap();
        let r: Vec<_> = t.realizations().collect();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].coefficients, vec![Complex64::new(5.0, 0.0), Complex64::new(1.0, 0.0)]);
        assert_eq!(r[1].coefficients, vec![Complex64::new(5.0, 0.0), Complex64::new(2.0, 0.0)]);
        assert_eq!(r[0].probability, 0.5);
        assert!(!t.root_defaulted());
    }

    #[test]
    fn budget_is_enforced_with_computed_count() {
        let s = spec(&[1.0, 2.0, 3.0], &[0.2, 0.3, 0.5], 12);
        let err = build_tree_with_budget(&s, 1000).unwrap_err();
        // Σ_{k<12} 3^k
        assert_eq!(
            err,
            TreeError::TooLarge {
                edges: (3u128.pow(12) - 1) / 2,
                budget: 1000
            }
        );
    }

    #[test]
    fn zero_probabilities_drop_edges() {
        let t = build_tree(&spec(&[1.0, 2.0, 3.0], &[0.5, 0.5, 0.0], 3)).unwrap();
        assert_eq!(t.edge_count(), 7);
        assert_eq!(t.leaves().len(), 4);
    }

    #[test]
    fn conditional_distributions_shape_the_tree() {
        let s = spec(&[1.0, 2.0], &[0.5, 0.5], 3).with_override(
            VertexSelector::Vertex(EdgeId(2)),
            Distribution::real(&[3.0, 4.0, 5.0], &[0.2, 0.3, 0.5]),
        );
        let t = build_tree(&s).unwrap();
        // root, 2 children; edge 2 has 3 children, edge 3 has 2.
        assert_eq!(t.edge_count(), 1 + 2 + 5);
        assert_eq!(t.children(EdgeId(2)).len(), 3);
        let sum: f64 = t.level(3).iter().map(|e| e.alpha).sum();
        assert!((sum - 1.0).abs() < 1e-15);
        assert_eq!(t.b(t.children(EdgeId(2))[2]), Complex64::new(5.0, 0.0));
    }
}

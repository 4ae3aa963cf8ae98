//! The tree boundary value problem.
//!
//! On every edge the optimal trajectory solves
//! `-y'' - 2i Im(b_j) y' + |b_j|² y = 0`, subject to
//!
//! - `y₁(0) = φ₀` at the root,
//! - `y_{k_j}(1) = y_j(0)` at interior vertices,
//! - `y_j(1) = ψ_j` at leaves,
//! - `y_j'(1) + β_j y_j(1) = Σ_{ν∈V_j} p̃_ν y_ν'(0)` at interior vertices, with
//!   `β_j = b_j - Σ p̃_ν b_ν`.
//!
//! With two basis coefficients per edge this is a square `2E × 2E` complex
//! system: each edge contributes one row for its start vertex (root or
//! continuity) and one for its end vertex (leaf or Kirchhoff). Two backends
//! solve it: a global sparse LU and a leaf-to-root Dirichlet-to-Neumann sweep.

mod assemble;
mod interval;
mod recursive;
mod sparse;

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edge::{edge_sobolev, EdgeError, EdgeSolution, SobolevOrder};
use crate::process::{ProcessSpec, Targets};
use crate::tree::{EdgeId, TemporalTree};

pub use assemble::{assemble, assemble_ordered, LinearSystem, RowKind};
pub use interval::{interval_gap, solve_interval, IntervalSolution};

/// Constraint residuals must stay below this multiple of [`TreeTrajectory::scale`].
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Condition estimates above this are flagged in the diagnostics.
pub const CONDITION_WARN: f64 = 1e12;
/// Condition estimates above this are treated as numerically singular.
pub const CONDITION_FAIL: f64 = 1e15;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("boundary data: {0}")]
    Data(String),
    #[error("structurally singular system at the {kind} row of edge {edge}")]
    Structural { edge: EdgeId, kind: RowKind },
    #[error("numerically singular system (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("sub-tree reduction broke down at edge {0}")]
    Reduction(EdgeId),
    #[error("edge order is not a permutation of 1..={0}")]
    BadOrder(usize),
    #[error(transparent)]
    Edge(#[from] EdgeError),
}

/// Dirichlet data at the root and at every leaf.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub initial: Complex64,
    pub targets: Targets,
}

impl BoundaryData {
    pub fn uniform(initial: Complex64, target: Complex64) -> Self {
        Self {
            initial,
            targets: Targets::Uniform(target),
        }
    }

    pub fn from_spec(spec: &ProcessSpec) -> Self {
        Self {
            initial: spec.initial,
            targets: spec.targets.clone(),
        }
    }

    pub fn target_for(&self, tree: &TemporalTree, leaf: EdgeId) -> Complex64 {
        self.targets.at(tree.leaf_rank(leaf).expect("edge is a leaf"))
    }

    pub fn sup_target(&self) -> f64 {
        self.targets.sup_modulus()
    }

    pub fn validate(&self, tree: &TemporalTree) -> Result<(), SolveError> {
        if let Targets::PerLeaf(v) = &self.targets {
            if v.len() != tree.leaves().len() {
                return Err(SolveError::Data(format!(
                    "{} per-leaf targets for {} leaves",
                    v.len(),
                    tree.leaves().len()
                )));
            }
        }
        let finite = |z: Complex64| z.re.is_finite() && z.im.is_finite();
        if !finite(self.initial) || !self.sup_target().is_finite() {
            return Err(SolveError::Data("non-finite boundary value".into()));
        }
        Ok(())
    }

    /// Scaled copy.
    pub fn scaled(&self, k: Complex64) -> Self {
        Self {
            initial: k * self.initial,
            targets: self.targets.scaled(k),
        }
    }
}

/// `β_j = b_j - Σ_{ν∈V_j} p̃_ν b_ν` for an interior vertex.
///
/// Evaluated as `Σ p̃_ν (b_j - b_ν) + b_j (1 - Σ p̃_ν)`, which is exactly zero
/// when all coefficients agree and the branch probabilities sum to one.
pub fn kirchhoff_beta(tree: &TemporalTree, j: EdgeId) -> Result<Complex64, SolveError> {
    let e = tree.get(j).map_err(|_| SolveError::Data(format!("edge {j} out of range")))?;
    if e.is_leaf() {
        return Err(SolveError::Data(format!("edge {j} does not end at an interior vertex")));
    }
    Ok(beta_unchecked(tree, j))
}

pub(crate) fn beta_unchecked(tree: &TemporalTree, j: EdgeId) -> Complex64 {
    let bj = tree.b(j);
    let mut mixed = Complex64::new(0.0, 0.0);
    let mut mass = 0.0;
    for &nu in tree.children(j) {
        let e = tree.edge(nu);
        mixed += e.p_tilde * (bj - e.b);
        mass += e.p_tilde;
    }
    mixed + bj * (1.0 - mass)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Global sparse LU on the `2E × 2E` system.
    #[default]
    SparseLu,
    /// Leaf-to-root Dirichlet-to-Neumann elimination, linear in `E`.
    Recursive,
}

#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    pub backend: Backend,
    /// Alternative ordering of unknowns and rows (sparse backend only).
    pub edge_order: Option<Vec<EdgeId>>,
    /// Skip the condition estimate (saves two extra solves per iteration).
    pub skip_condition: bool,
}

impl SolveOptions {
    pub fn recursive() -> Self {
        Self {
            backend: Backend::Recursive,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub root: f64,
    pub continuity: f64,
    pub leaf: f64,
    pub kirchhoff: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.root.max(self.continuity).max(self.leaf).max(self.kirchhoff)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub backend: Backend,
    pub residuals: Residuals,
    /// `(1 + sup|b|)(|φ₀| + sup|ψ|)`.
    pub scale: f64,
    /// 1-norm condition estimate of the global system, when computed.
    pub condition: Option<f64>,
    pub condition_warning: bool,
}

impl Diagnostics {
    pub fn within_tolerance(&self) -> bool {
        self.residuals.max() <= RESIDUAL_TOL * self.scale
    }
}

/// The solution of the boundary value problem: one [`EdgeSolution`] per edge.
#[derive(Clone, Debug)]
pub struct TreeTrajectory {
    pub tree: Arc<TemporalTree>,
    pub data: BoundaryData,
    pub edges: Vec<EdgeSolution>,
    pub diagnostics: Diagnostics,
}

impl TreeTrajectory {
    pub(crate) fn new(
        tree: Arc<TemporalTree>,
        data: BoundaryData,
        edges: Vec<EdgeSolution>,
        backend: Backend,
        condition: Option<f64>,
    ) -> Self {
        let scale = problem_scale(&tree, &data);
        let residuals = residuals(&tree, &data, &edges);
        Self {
            tree,
            data,
            edges,
            diagnostics: Diagnostics {
                backend,
                residuals,
                scale,
                condition,
                condition_warning: condition.is_some_and(|c| c > CONDITION_WARN),
            },
        }
    }

    pub fn edge(&self, id: EdgeId) -> &EdgeSolution {
        &self.edges[id.slot()]
    }

    pub fn eval(&self, id: EdgeId, t: f64) -> Result<(Complex64, Complex64), SolveError> {
        Ok(self.edge(id).eval(t)?)
    }

    pub fn scale(&self) -> f64 {
        self.diagnostics.scale
    }

    /// `‖y‖_s = (Σ α_j ‖y_j‖²_{W₂^s})^{1/2}` for `s ∈ {0, 1}`.
    pub fn weighted_norm(&self, s: u32) -> Result<f64, SolveError> {
        let order = SobolevOrder::try_from(s)?;
        let sum: f64 = self
            .tree
            .edges()
            .iter()
            .zip(&self.edges)
            .map(|(e, y)| e.alpha * edge_sobolev(y, order))
            .sum();
        Ok(sum.sqrt())
    }

    /// Maximum coefficient distance to another trajectory on the same tree.
    pub fn max_coefficient_gap(&self, other: &TreeTrajectory) -> f64 {
        self.edges
            .iter()
            .zip(&other.edges)
            .map(|(a, b)| (a.c1 - b.c1).norm().max((a.c2 - b.c2).norm()))
            .fold(0.0, f64::max)
    }

    /// Maximum pointwise distance sampled at `n + 1` points per edge.
    pub fn max_value_gap(&self, other: &TreeTrajectory, n: usize) -> f64 {
        let mut gap: f64 = 0.0;
        for (a, b) in self.edges.iter().zip(&other.edges) {
            for k in 0..=n {
                let t = k as f64 / n as f64;
                gap = gap.max((a.value(t) - b.value(t)).norm());
            }
        }
        gap
    }
}

pub fn problem_scale(tree: &TemporalTree, data: &BoundaryData) -> f64 {
    (1.0 + tree.sup_coefficient()) * (data.initial.norm() + data.sup_target())
}

/// Evaluates the four families of vertex conditions on `edges`.
pub fn residuals(tree: &TemporalTree, data: &BoundaryData, edges: &[EdgeSolution]) -> Residuals {
    let mut r = Residuals::default();
    for e in tree.edges() {
        let y = &edges[e.id.slot()];
        let (start, _) = y.eval_unchecked(0.0);
        let (end, dend) = y.eval_unchecked(1.0);
        match e.parent {
            None => r.root = (start - data.initial).norm(),
            Some(p) => {
                let parent_end = edges[p.slot()].value(1.0);
                r.continuity = r.continuity.max((parent_end - start).norm());
            }
        }
        if e.is_leaf() {
            let target = data.target_for(tree, e.id);
            r.leaf = r.leaf.max((end - target).norm());
        } else {
            let beta = beta_unchecked(tree, e.id);
            let flux: Complex64 = e
                .children
                .iter()
                .map(|&nu| tree.edge(nu).p_tilde * edges[nu.slot()].eval_unchecked(0.0).1)
                .sum();
            r.kirchhoff = r.kirchhoff.max((dend + beta * end - flux).norm());
        }
    }
    r
}

/// Solves with the default (sparse LU) backend.
pub fn solve(tree: Arc<TemporalTree>, data: &BoundaryData) -> Result<TreeTrajectory, SolveError> {
    solve_with(tree, data, &SolveOptions::default())
}

pub fn solve_with(
    tree: Arc<TemporalTree>,
    data: &BoundaryData,
    options: &SolveOptions,
) -> Result<TreeTrajectory, SolveError> {
    data.validate(&tree)?;
    let (edges, condition) = match options.backend {
        Backend::SparseLu => sparse::solve(&tree, data, options)?,
        Backend::Recursive => (recursive::solve(&tree, data)?, None),
    };
    if edges
        .iter()
        .any(|e| !(e.c1.is_finite() && e.c2.is_finite()))
    {
        return Err(SolveError::Singular {
            condition: condition.unwrap_or(f64::INFINITY),
        });
    }
    Ok(TreeTrajectory::new(tree, data.clone(), edges, options.backend, condition))
}

/// Copy of `traj` with `c₂` of edge `id` shifted by `delta`; diagnostics are
/// recomputed, so the residuals expose the corruption.
pub fn perturb_c2(traj: &TreeTrajectory, id: EdgeId, delta: Complex64) -> TreeTrajectory {
    let mut edges = traj.edges.clone();
    edges[id.slot()].c2 += delta;
    TreeTrajectory::new(
        traj.tree.clone(),
        traj.data.clone(),
        edges,
        traj.diagnostics.backend,
        traj.diagnostics.condition,
    )
}

/// Empirical a priori constant: `‖y‖₁ / (|φ₀| + |φ₁|)` over random uniform
/// boundary pairs.
///
/// The ratio is a norm over the `ℓ¹` ball of `(φ₀, φ₁)`, so its supremum sits
/// at pairs with one component zero. Moduli are drawn log-uniformly on
/// `[1e-3, 1]` so that such pairs are approached often.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    pub seed: u64,
    pub samples: usize,
    /// Max ratio over the first `samples` pairs.
    pub max_ratio: f64,
    /// Max ratio over `2 · samples` pairs.
    pub max_ratio_doubled: f64,
}

impl AprioriReport {
    pub fn relative_change(&self) -> f64 {
        (self.max_ratio_doubled - self.max_ratio) / self.max_ratio
    }
}

pub fn apriori_sweep(tree: Arc<TemporalTree>, samples: usize, seed: u64) -> Result<AprioriReport, SolveError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let modulus = 10f64.powf(rng.random_range(-3.0..0.0));
        Complex64::from_polar(modulus, rng.random_range(0.0..std::f64::consts::TAU))
    };
    let mut max_ratio = 0.0f64;
    let mut max_ratio_doubled = 0.0f64;
    for k in 0..2 * samples {
        let (phi0, phi1) = (draw(), draw());
        let traj = solve(tree.clone(), &BoundaryData::uniform(phi0, phi1))?;
        let ratio = traj.weighted_norm(1)? / (phi0.norm() + phi1.norm());
        if k < samples {
            max_ratio = max_ratio.max(ratio);
        }
        max_ratio_doubled = max_ratio_doubled.max(ratio);
    }
    Ok(AprioriReport {
        seed,
        samples,
        max_ratio,
        max_ratio_doubled,
    })
}

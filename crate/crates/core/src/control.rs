//! Controls extracted from an optimal trajectory, their energy, scenario
//! playback and optimality certificates.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bvp::{TreeTrajectory, RESIDUAL_TOL};
use crate::edge::{ControlShape, EdgeError, EdgeSolution};
use crate::quadrature::GaussLegendre;
use crate::tree::{EdgeId, TemporalTree};

/// `|⟨u, ℓz⟩₀| ≤ FIRST_ORDER_TOL · ‖u‖₀ ‖ℓz‖₀` for every admissible `z`.
pub const FIRST_ORDER_TOL: f64 = 1e-8;
/// `J(y + z) - J(y) ≥ -ENERGY_GAIN_TOL · scale²`.
pub const ENERGY_GAIN_TOL: f64 = 1e-10;
/// Playback terminal error tolerance relative to the problem scale.
pub const TERMINAL_TOL: f64 = 1e-10;

const QUADRATURE_NODES: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("path has {got} branch choices, expected {expected}")]
    PathLength { expected: usize, got: usize },
    #[error("choice {choice} at time {time} is not a branch of the vertex at the end of edge {vertex}")]
    InvalidChoice {
        time: usize,
        choice: usize,
        vertex: EdgeId,
    },
    #[error("edge {0} is not a leaf")]
    NotALeaf(EdgeId),
    #[error("controls live in L2 only; norm order {0} requested")]
    ControlNormOrder(u32),
    #[error(transparent)]
    Edge(#[from] EdgeError),
}

/// The optimal control family `u_j = ℓ_j y_j` with its energy.
#[derive(Clone, Debug)]
pub struct ControlFamily {
    pub tree: Arc<TemporalTree>,
    pub controls: Vec<ControlShape>,
    /// Unweighted `∫_0^1 |u_j|²` per edge.
    pub edge_energies: Vec<f64>,
    /// `J = Σ α_j ∫ |u_j|²`.
    pub energy: f64,
}

pub fn extract_controls(traj: &TreeTrajectory) -> ControlFamily {
    let controls: Vec<ControlShape> = traj.edges.iter().map(EdgeSolution::control).collect();
    let edge_energies: Vec<f64> = controls.iter().map(ControlShape::energy).collect();
    let energy = traj
        .tree
        .edges()
        .iter()
        .zip(&edge_energies)
        .map(|(e, en)| e.alpha * en)
        .sum();
    ControlFamily {
        tree: traj.tree.clone(),
        controls,
        edge_energies,
        energy,
    }
}

impl ControlFamily {
    pub fn control(&self, id: EdgeId) -> &ControlShape {
        &self.controls[id.slot()]
    }

    pub fn value(&self, id: EdgeId, t: f64) -> Result<Complex64, ControlError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(EdgeError::OutOfRange(t).into());
        }
        Ok(self.control(id).value(t))
    }

    /// `‖u‖_s`; only `s = 0` is meaningful and equals `√J`.
    pub fn weighted_norm(&self, s: u32) -> Result<f64, ControlError> {
        match s {
            0 => Ok(self.energy.sqrt()),
            other => Err(ControlError::ControlNormOrder(other)),
        }
    }
}

/// The branch realized at each integer time `k = 1..T-1`, as state indices
/// into the distribution of the vertex reached so far.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioPath {
    pub branch_choices: Vec<usize>,
    /// The `T` edges visited, root to leaf.
    pub edge_sequence: Vec<EdgeId>,
}

impl ScenarioPath {
    pub fn from_choices(tree: &TemporalTree, choices: &[usize]) -> Result<Self, ControlError> {
        let expected = tree.horizon() - 1;
        if choices.len() != expected {
            return Err(ControlError::PathLength {
                expected,
                got: choices.len(),
            });
        }
        let mut edge_sequence = vec![EdgeId::ROOT];
        let mut cur = EdgeId::ROOT;
        for (k, &choice) in choices.iter().enumerate() {
            let next = tree
                .children(cur)
                .iter()
                .copied()
                .find(|&c| tree.edge(c).branch == Some(choice))
                .ok_or(ControlError::InvalidChoice {
                    time: k + 1,
                    choice,
                    vertex: cur,
                })?;
            edge_sequence.push(next);
            cur = next;
        }
        Ok(Self {
            branch_choices: choices.to_vec(),
            edge_sequence,
        })
    }

    pub fn to_leaf(tree: &TemporalTree, leaf: EdgeId) -> Result<Self, ControlError> {
        if tree.get(leaf).map(|e| !e.is_leaf()).unwrap_or(true) {
            return Err(ControlError::NotALeaf(leaf));
        }
        let mut edge_sequence = tree.path_to_root(leaf).expect("checked above");
        edge_sequence.reverse();
        let branch_choices = edge_sequence[1..]
            .iter()
            .map(|&e| tree.edge(e).branch.expect("non-root edges carry a branch"))
            .collect();
        Ok(Self {
            branch_choices,
            edge_sequence,
        })
    }

    pub fn leaf(&self) -> EdgeId {
        *self.edge_sequence.last().expect("paths are non-empty")
    }
}

/// Seeded path sampler. Sample `i` draws from its own ChaCha stream, so
/// samples are independent of the order they are requested in.
#[derive(Clone, Debug)]
pub struct PathSampler {
    seed: u64,
}

impl PathSampler {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn sample(&self, tree: &TemporalTree, index: u64) -> ScenarioPath {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let mut cur = EdgeId::ROOT;
        let mut choices = Vec::with_capacity(tree.horizon().saturating_sub(1));
        let mut edge_sequence = vec![cur];
        while !tree.edge(cur).is_leaf() {
            let kids = tree.children(cur);
            let total: f64 = kids.iter().map(|&k| tree.edge(k).p_tilde).sum();
            let draw = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = *kids.last().expect("interior vertices have children");
            for &k in kids {
                acc += tree.edge(k).p_tilde;
                if draw < acc {
                    pick = k;
                    break;
                }
            }
            choices.push(tree.edge(pick).branch.expect("non-root edge"));
            edge_sequence.push(pick);
            cur = pick;
        }
        ScenarioPath {
            branch_choices: choices,
            edge_sequence,
        }
    }
}

pub fn sample_path(tree: &TemporalTree, seed: u64) -> ScenarioPath {
    PathSampler::new(seed).sample(tree, 0)
}

/// Leaf hit counts (by leaf rank) over `n` seeded samples.
pub fn leaf_frequencies(tree: &TemporalTree, seed: u64, n: u64) -> Vec<u64> {
    let sampler = PathSampler::new(seed);
    let mut counts = vec![0u64; tree.leaves().len()];
    for i in 0..n {
        let leaf = sampler.sample(tree, i).leaf();
        counts[tree.leaf_rank(leaf).expect("sampled paths end at leaves")] += 1;
    }
    counts
}

/// One realized scenario: stitched trajectory and control on `[0, T]`.
#[derive(Clone, Debug)]
pub struct PlaybackRecord {
    pub path: ScenarioPath,
    pieces: Vec<(Complex64, EdgeSolution, ControlShape)>,
    /// `y(T)` obtained by driving the state equation with the stitched control.
    pub terminal: Complex64,
    pub target: Complex64,
    pub terminal_error: f64,
    /// `∫_0^T |u|² dt` along this path.
    pub realized_energy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaybackSample {
    pub t: f64,
    pub y: Complex64,
    pub u: Complex64,
}

impl PlaybackRecord {
    pub fn horizon(&self) -> usize {
        self.pieces.len()
    }

    /// `(y(t), u(t))`; at an integer time the later edge is used except at `T`.
    pub fn eval(&self, t: f64) -> Option<(Complex64, Complex64)> {
        let horizon = self.pieces.len() as f64;
        if !(0.0..=horizon).contains(&t) {
            return None;
        }
        let k = (t.floor() as usize).min(self.pieces.len() - 1);
        let local = t - k as f64;
        let (_, y, u) = &self.pieces[k];
        Some((y.value(local), u.value(local)))
    }

    pub fn sample(&self, per_unit: usize) -> Vec<PlaybackSample> {
        let n = per_unit.max(1) * self.pieces.len();
        (0..=n)
            .map(|i| {
                let t = i as f64 / per_unit.max(1) as f64;
                let (y, u) = self.eval(t).expect("grid lies in [0, T]");
                PlaybackSample { t, y, u }
            })
            .collect()
    }
}

/// Applies the control family along `path`: on `(k, k+1)` the control of the
/// edge realized at time `k` is used.
pub fn playback(
    fam: &ControlFamily,
    traj: &TreeTrajectory,
    path: &ScenarioPath,
) -> Result<PlaybackRecord, ControlError> {
    let tree = &fam.tree;
    let leaf = path.leaf();
    if !tree.edge(leaf).is_leaf() || path.edge_sequence.len() != tree.horizon() {
        return Err(ControlError::NotALeaf(leaf));
    }
    for w in path.edge_sequence.windows(2) {
        if tree.parent(w[1]) != Some(w[0]) {
            let time = tree.edge(w[0]).depth;
            return Err(ControlError::InvalidChoice {
                time,
                choice: tree.edge(w[1]).branch.unwrap_or(usize::MAX),
                vertex: w[0],
            });
        }
    }
    let mut state = traj.data.initial;
    let mut pieces = Vec::with_capacity(path.edge_sequence.len());
    let mut realized_energy = 0.0;
    for &id in &path.edge_sequence {
        let u = *fam.control(id);
        let b = tree.b(id);
        pieces.push((state, *traj.edge(id), u));
        realized_energy += fam.edge_energies[id.slot()];
        state = u.integrate(b, state, 1.0);
    }
    let target = traj.data.target_for(tree, leaf);
    Ok(PlaybackRecord {
        path: path.clone(),
        pieces,
        terminal: state,
        target,
        terminal_error: (state - target).norm(),
        realized_energy,
    })
}

/// Playback along every root-to-leaf path, in leaf order.
pub fn playback_all(fam: &ControlFamily, traj: &TreeTrajectory) -> Vec<PlaybackRecord> {
    fam.tree
        .leaves()
        .iter()
        .map(|&leaf| {
            let path = ScenarioPath::to_leaf(&fam.tree, leaf).expect("leaf ids are leaves");
            playback(fam, traj, &path).expect("tree paths are consistent")
        })
        .collect()
}

/// Starting values of every edge obtained by integrating `y' + b y = u`
/// forward from `y₁(0) = φ₀` with continuity at interior vertices.
#[derive(Clone, Debug)]
pub struct CauchySolution {
    pub starts: Vec<Complex64>,
}

pub fn integrate_cauchy(fam: &ControlFamily, initial: Complex64) -> CauchySolution {
    let tree = &fam.tree;
    let mut starts = vec![Complex64::new(0.0, 0.0); tree.edge_count()];
    let mut ends = vec![Complex64::new(0.0, 0.0); tree.edge_count()];
    for e in tree.edges() {
        let s = match e.parent {
            None => initial,
            Some(p) => ends[p.slot()],
        };
        starts[e.id.slot()] = s;
        ends[e.id.slot()] = fam.control(e.id).integrate(e.b, s, 1.0);
    }
    CauchySolution { starts }
}

impl CauchySolution {
    pub fn value(&self, fam: &ControlFamily, id: EdgeId, t: f64) -> Complex64 {
        fam.control(id)
            .integrate(fam.tree.b(id), self.starts[id.slot()], t)
    }
}

/// Max distance between `traj` and the forward integration of its own
/// controls, sampled at `samples + 1` points per edge.
pub fn roundtrip_error(traj: &TreeTrajectory, fam: &ControlFamily, samples: usize) -> f64 {
    let cauchy = integrate_cauchy(fam, traj.data.initial);
    let mut err: f64 = 0.0;
    for id in fam.tree.ids() {
        for k in 0..=samples {
            let t = k as f64 / samples as f64;
            err = err.max((cauchy.value(fam, id, t) - traj.edge(id).value(t)).norm());
        }
    }
    err
}

/// Admissible variation `z`: zero at the root and leaves, continuous at
/// interior vertices. On each edge
/// `z(t) = s(1 - t) + e t + q t²(1 - t)²`.
#[derive(Clone, Debug)]
pub struct Perturbation {
    /// `(s, e, q)` per edge.
    pub pieces: Vec<(Complex64, Complex64, Complex64)>,
}

impl Perturbation {
    pub fn random(tree: &TemporalTree, rng: &mut impl Rng) -> Self {
        let mut draw = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let vertex: Vec<Complex64> = tree
            .edges()
            .iter()
            .map(|e| if e.is_leaf() { Complex64::new(0.0, 0.0) } else { draw() })
            .collect();
        let pieces = tree
            .edges()
            .iter()
            .map(|e| {
                let s = e.parent.map_or(Complex64::new(0.0, 0.0), |p| vertex[p.slot()]);
                (s, vertex[e.id.slot()], draw())
            })
            .collect();
        Self { pieces }
    }

    pub fn eval(&self, id: EdgeId, t: f64) -> (Complex64, Complex64) {
        let (s, e, q) = self.pieces[id.slot()];
        let bump = t * t * (1.0 - t) * (1.0 - t);
        let dbump = 2.0 * t - 6.0 * t * t + 4.0 * t * t * t;
        (s * (1.0 - t) + e * t + q * bump, (e - s) + q * dbump)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub trials: usize,
    pub seed: u64,
    /// `max |⟨u, ℓz⟩₀| / (‖u‖₀ ‖ℓz‖₀)` (zero when `u = 0`).
    pub max_first_order_ratio: f64,
    /// `min J(y + z) - J(y)`.
    pub min_energy_gain: f64,
    /// Largest root, continuity or leaf residual divided by the scale.
    pub feasibility_residual: f64,
    pub first_order_pass: bool,
    pub energy_pass: bool,
    pub feasibility_pass: bool,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.first_order_pass && self.energy_pass && self.feasibility_pass
    }
}

/// `(⟨u, ℓz⟩₀, ‖ℓz‖₀²)` by Gauss–Legendre quadrature on each edge.
pub fn variation_products(fam: &ControlFamily, z: &Perturbation, rule: &GaussLegendre) -> (Complex64, f64) {
    let mut inner = Complex64::new(0.0, 0.0);
    let mut norm2 = 0.0;
    for e in fam.tree.edges() {
        let u = fam.control(e.id);
        let mut ip = Complex64::new(0.0, 0.0);
        let mut nn = 0.0;
        for (t, w) in rule.iter() {
            let (zv, dz) = z.eval(e.id, t);
            let lz = dz + e.b * zv;
            ip += w * u.value(t) * lz.conj();
            nn += w * lz.norm_sqr();
        }
        inner += e.alpha * ip;
        norm2 += e.alpha * nn;
    }
    (inner, norm2)
}

/// First-order optimality and direct energy comparison against `trials`
/// random admissible variations, plus feasibility of `traj` itself (root,
/// continuity and leaf conditions). Without the feasibility part a function
/// from the kernel of `ℒ` with wrong boundary values passes on a single edge.
pub fn optimality_certificate(
    fam: &ControlFamily,
    traj: &TreeTrajectory,
    trials: usize,
    seed: u64,
) -> CertificateReport {
    let rule = GaussLegendre::new(QUADRATURE_NODES);
    let u_norm = fam.energy.sqrt();
    let scale = traj.scale();
    let mut max_ratio: f64 = 0.0;
    let mut min_gain = f64::INFINITY;
    let mut first_order_pass = true;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let z = Perturbation::random(&fam.tree, &mut rng);
        let (inner, lz2) = variation_products(fam, &z, &rule);
        let lz_norm = lz2.sqrt();
        if inner.norm() > FIRST_ORDER_TOL * u_norm * lz_norm {
            first_order_pass = false;
        }
        if u_norm > 0.0 && lz_norm > 0.0 {
            max_ratio = max_ratio.max(inner.norm() / (u_norm * lz_norm));
        }
        // J(y + z) - J(y) = 2 Re⟨u, ℓz⟩ + ‖ℓz‖²
        min_gain = min_gain.min(2.0 * inner.re + lz2);
    }
    if trials == 0 {
        min_gain = 0.0;
    }
    let r = &traj.diagnostics.residuals;
    let feasibility = r.root.max(r.continuity).max(r.leaf);
    let feasibility_residual = if scale > 0.0 { feasibility / scale } else { feasibility };
    CertificateReport {
        trials,
        seed,
        max_first_order_ratio: max_ratio,
        min_energy_gain: min_gain,
        feasibility_residual,
        first_order_pass,
        energy_pass: min_gain >= -ENERGY_GAIN_TOL * scale * scale,
        feasibility_pass: feasibility <= RESIDUAL_TOL * scale,
    }
}

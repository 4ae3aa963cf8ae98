//! Finite-difference discretization of `ℒ y = -y'' - 2i Im(b) y' + |b|² y`
//! on the tree with zero data at the root and leaves, continuity and the
//! Kirchhoff condition at interior vertices.
//!
//! Unknowns are the interior grid values `y_j(m h)`, `m = 1..M-1`. A vertex
//! value is eliminated through the Kirchhoff condition written with
//! three-point one-sided derivatives:
//! `v (3 + 3 Σ p̃ + 2 h β) = 4 y_{M-1} - y_{M-2} + Σ p̃ (4 z_1 - z_2)`.

use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DiscretizedInstance, OracleError};
use crate::bvp::beta_unchecked;
use crate::tree::{EdgeId, TemporalTree};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// The pair `(A, W)`: `A` acts on interior grid values, `W = diag(α_j h)`.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub m: usize,
    pub a: Mat<Complex64>,
    pub weights: Vec<f64>,
}

impl DiscreteOperator {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Index of `y_j(m h)` for `m = 1..M-1`.
    pub fn index(&self, id: EdgeId, m: usize) -> usize {
        id.slot() * (self.m - 1) + m - 1
    }

    pub fn apply(&self, y: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|k| self.a[(i, k)] * y[k]).sum())
            .collect()
    }

    /// `⟨y, z⟩_W = Σ w_i y_i conj(z_i)`.
    pub fn inner(&self, y: &[Complex64], z: &[Complex64]) -> Complex64 {
        self.weights
            .iter()
            .zip(y.iter().zip(z))
            .map(|(w, (a, b))| *w * a * b.conj())
            .sum()
    }

    /// `‖W A - (W A)*‖_max`.
    pub fn entrywise_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for k in i..n {
                let wa = self.weights[i] * self.a[(i, k)];
                let wa_t = self.weights[k] * self.a[(k, i)];
                worst = worst.max((wa - wa_t.conj()).norm());
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Result<Vec<Complex64>, OracleError> {
        let mut ev = self.a.eigenvalues().map_err(|e| OracleError::Eigen(format!("{e:?}")))?;
        ev.sort_by(|x, y| x.re.total_cmp(&y.re));
        Ok(ev)
    }
}

/// Linear combination of unknowns giving a vertex value.
type Combo = Vec<(usize, Complex64)>;

pub fn operator_matrix(inst: &DiscretizedInstance) -> DiscreteOperator {
    let tree: &TemporalTree = &inst.tree;
    let mc = inst.m;
    let h = inst.h();
    let per_edge = mc - 1;
    let n = tree.edge_count() * per_edge;
    let idx = |id: EdgeId, m: usize| id.slot() * per_edge + m - 1;

    // End-vertex value of every edge; empty for leaves.
    let end_vertex: Vec<Combo> = tree
        .edges()
        .iter()
        .map(|e| {
            if e.is_leaf() {
                return Vec::new();
            }
            let beta = beta_unchecked(tree, e.id);
            let mass: f64 = e.children.iter().map(|&c| tree.edge(c).p_tilde).sum();
            let denom = Complex64::new(3.0 + 3.0 * mass, 0.0) + 2.0 * h * beta;
            let mut combo = vec![
                (idx(e.id, per_edge), Complex64::new(4.0, 0.0) / denom),
                (idx(e.id, per_edge - 1), Complex64::new(-1.0, 0.0) / denom),
            ];
            for &c in &e.children {
                let p = tree.edge(c).p_tilde;
                combo.push((idx(c, 1), Complex64::new(4.0 * p, 0.0) / denom));
                combo.push((idx(c, 2), Complex64::new(-p, 0.0) / denom));
            }
            combo
        })
        .collect();

    let mut a = Mat::<Complex64>::zeros(n, n);
    let mut weights = vec![0.0; n];
    for e in tree.edges() {
        let c = e.b.im;
        let inv_h2 = 1.0 / (h * h);
        let prev = Complex64::new(-inv_h2, c / h);
        let next = Complex64::new(-inv_h2, -c / h);
        let diag = Complex64::new(2.0 * inv_h2 + e.b.norm_sqr(), 0.0);
        let start: &[(usize, Complex64)] = match e.parent {
            Some(p) => &end_vertex[p.slot()],
            None => &[],
        };
        let end = &end_vertex[e.id.slot()];
        for m in 1..mc {
            let row = idx(e.id, m);
            weights[row] = e.alpha * h;
            a[(row, row)] += diag;
            if m == 1 {
                for &(col, w) in start {
                    a[(row, col)] += prev * w;
                }
            } else {
                a[(row, idx(e.id, m - 1))] += prev;
            }
            if m == mc - 1 {
                for &(col, w) in end {
                    a[(row, col)] += next * w;
                }
            } else {
                a[(row, idx(e.id, m + 1))] += next;
            }
        }
    }
    DiscreteOperator { m: mc, a, weights }
}

/// Smooth function in the operator domain: a cubic Hermite interpolant per
/// edge, zero at the root and leaves, with derivatives chosen so that the
/// Kirchhoff condition holds exactly.
#[derive(Clone, Debug)]
pub struct DomainFunction {
    /// `(y(0), y(1), y'(0), y'(1))` per edge.
    pub pieces: Vec<[Complex64; 4]>,
}

impl DomainFunction {
    pub fn random(tree: &TemporalTree, rng: &mut impl Rng) -> Self {
        let mut draw = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = tree.edge_count();
        let end: Vec<Complex64> = tree
            .edges()
            .iter()
            .map(|e| if e.is_leaf() { ZERO } else { draw() })
            .collect();
        let dstart: Vec<Complex64> = (0..n).map(|_| draw()).collect();
        let mut pieces = Vec::with_capacity(n);
        for e in tree.edges() {
            let s = e.id.slot();
            let y0 = e.parent.map_or(ZERO, |p| end[p.slot()]);
            let d1 = if e.is_leaf() {
                draw()
            } else {
                let flux: Complex64 = e
                    .children
                    .iter()
                    .map(|&c| tree.edge(c).p_tilde * dstart[c.slot()])
                    .sum();
                flux - beta_unchecked(tree, e.id) * end[s]
            };
            pieces.push([y0, end[s], dstart[s], d1]);
        }
        Self { pieces }
    }

    pub fn value(&self, id: EdgeId, t: f64) -> Complex64 {
        let [y0, y1, d0, d1] = self.pieces[id.slot()];
        let t2 = t * t;
        let t3 = t2 * t;
        y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + d0 * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + d1 * (t3 - t2)
    }

    pub fn sample(&self, op: &DiscreteOperator, tree: &TemporalTree) -> Vec<Complex64> {
        let mut out = vec![ZERO; op.dim()];
        for id in tree.ids() {
            for m in 1..op.m {
                out[op.index(id, m)] = self.value(id, m as f64 / op.m as f64);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorReport {
    pub m: usize,
    pub dim: usize,
    /// `max |⟨Ay, z⟩_W - ⟨y, Az⟩_W| / (‖Ay‖_W ‖z‖_W + ‖y‖_W ‖Az‖_W)` over
    /// sampled domain functions.
    pub form_defect: f64,
    pub entrywise_defect: f64,
    /// Eigenvalue with the smallest real part.
    pub min_eigenvalue: Complex64,
    pub max_imaginary_part: f64,
}

pub fn form_defect(op: &DiscreteOperator, tree: &TemporalTree, pairs: usize, seed: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let y = DomainFunction::random(tree, &mut rng).sample(op, tree);
        let z = DomainFunction::random(tree, &mut rng).sample(op, tree);
        let ay = op.apply(&y);
        let az = op.apply(&z);
        let norm = |v: &[Complex64]| op.inner(v, v).re.sqrt();
        let denom = norm(&ay) * norm(&z) + norm(&y) * norm(&az);
        if denom > 0.0 {
            worst = worst.max((op.inner(&ay, &z) - op.inner(&y, &az)).norm() / denom);
        }
    }
    worst
}

pub fn operator_report(inst: &DiscretizedInstance, pairs: usize, seed: u64) -> Result<OperatorReport, OracleError> {
    let op = operator_matrix(inst);
    let ev = op.eigenvalues()?;
    Ok(OperatorReport {
        m: inst.m,
        dim: op.dim(),
        form_defect: form_defect(&op, &inst.tree, pairs, seed),
        entrywise_defect: op.entrywise_defect(),
        min_eigenvalue: ev[0],
        max_imaginary_part: ev.iter().map(|z| z.im.abs()).fold(0.0, f64::max),
    })
}

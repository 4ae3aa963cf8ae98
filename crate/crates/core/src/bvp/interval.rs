use num_complex::Complex64;

use super::TreeTrajectory;
use crate::edge::{solve2, EdgeBasis, EdgeSolution};
use crate::process::Targets;

/// Closed-form solution of `-y'' - 2i Im(b) y' + |b|² y = 0` on `[0, T]`
/// with `y(0) = φ₀`, `y(T) = φ₁`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalSolution {
    /// Coefficients with respect to the basis evaluated at global time.
    pub solution: EdgeSolution,
    pub horizon: f64,
}

impl IntervalSolution {
    pub fn eval(&self, t: f64) -> Option<(Complex64, Complex64)> {
        (0.0..=self.horizon)
            .contains(&t)
            .then(|| self.solution.eval_unchecked(t))
    }

    /// The piece on `[k-1, k]` as a unit-edge solution.
    pub fn restrict(&self, k: usize) -> EdgeSolution {
        self.solution.shifted(k as f64 - 1.0)
    }

    /// `∫_0^T |y' + b y|² dt`.
    pub fn energy(&self) -> f64 {
        let whole = self.horizon.floor() as usize;
        (1..=whole).map(|k| self.restrict(k).energy()).sum()
    }
}

pub fn solve_interval(b: Complex64, horizon: usize, phi0: Complex64, phi1: Complex64) -> IntervalSolution {
    let basis = EdgeBasis::new(b);
    let t = horizon as f64;
    let (c1, c2) = solve2([basis.values(0.0), basis.values(t)], [phi0, phi1])
        .expect("interval boundary problem is uniquely solvable");
    IntervalSolution {
        solution: EdgeSolution::new(basis, c1, c2),
        horizon: t,
    }
}

/// If every edge carries the same coefficient and the terminal value is
/// uniform, the largest distance between `traj` and the interval solution on
/// `[0, T]` over `samples + 1` points per edge. `None` otherwise.
pub fn interval_gap(traj: &TreeTrajectory, samples: usize) -> Option<f64> {
    let tree = &traj.tree;
    let b = tree.b(crate::tree::EdgeId::ROOT);
    if tree.edges().iter().any(|e| e.b != b) {
        return None;
    }
    let Targets::Uniform(target) = traj.data.targets else {
        return None;
    };
    let interval = solve_interval(b, tree.horizon(), traj.data.initial, target);
    let n = samples.max(1);
    let mut gap: f64 = 0.0;
    for e in tree.edges() {
        let piece = interval.restrict(e.depth);
        for s in 0..=n {
            let t = s as f64 / n as f64;
            gap = gap.max((traj.edge(e.id).value(t) - piece.value(t)).norm());
        }
    }
    Some(gap)
}

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat};
use num_complex::Complex64;

use super::{assemble_ordered, BoundaryData, SolveError, SolveOptions, CONDITION_FAIL};
use crate::edge::EdgeSolution;
use crate::tree::{EdgeId, TemporalTree};

type Lu = faer::sparse::linalg::solvers::Lu<usize, Complex64>;

pub(super) fn solve(
    tree: &TemporalTree,
    data: &BoundaryData,
    options: &SolveOptions,
) -> Result<(Vec<EdgeSolution>, Option<f64>), SolveError> {
    let order: Vec<EdgeId> = match &options.edge_order {
        Some(o) => o.clone(),
        None => tree.ids().collect(),
    };
    let sys = assemble_ordered(tree, data, &order)?;
    let triplets: Vec<Triplet<usize, usize, Complex64>> = sys
        .entries
        .iter()
        .map(|&(r, c, v)| Triplet::new(r, c, v))
        .collect();
    let matrix = SparseColMat::<usize, Complex64>::try_new_from_triplets(sys.dim, sys.dim, &triplets)
        .expect("triplet indices are in range");
    let lu = matrix.sp_lu().map_err(|e| match e {
        LuError::SymbolicSingular { index } => {
            let (edge, kind) = sys.rows[index.min(sys.dim - 1)];
            SolveError::Structural { edge, kind }
        }
        LuError::Generic(_) => SolveError::Singular {
            condition: f64::INFINITY,
        },
    })?;

    let mut x = Mat::<Complex64>::from_fn(sys.dim, 1, |i, _| sys.rhs[i]);
    lu.solve_in_place_with_conj(Conj::No, x.as_mut());

    let condition = if options.skip_condition {
        None
    } else {
        let c = sys.norm1() * inverse_norm1_estimate(&lu, sys.dim);
        if !(c < CONDITION_FAIL) {
            return Err(SolveError::Singular { condition: c });
        }
        Some(c)
    };

    let pos = sys.positions();
    let edges = tree
        .edges()
        .iter()
        .map(|e| {
            let k = pos[e.id.slot()];
            EdgeSolution::new(sys.bases[e.id.slot()], x[(2 * k, 0)], x[(2 * k + 1, 0)])
        })
        .collect();
    Ok((edges, condition))
}

/// Hager's estimate of `‖A⁻¹‖₁` from solves with `A` and `Aᴴ`.
fn inverse_norm1_estimate(lu: &Lu, n: usize) -> f64 {
    let mut x = Mat::<Complex64>::from_fn(n, 1, |_, _| Complex64::new(1.0 / n as f64, 0.0));
    let mut estimate = 0.0;
    let mut last = usize::MAX;
    for _ in 0..5 {
        let mut y = x.clone();
        lu.solve_in_place_with_conj(Conj::No, y.as_mut());
        estimate = (0..n).map(|i| y[(i, 0)].norm()).sum::<f64>();
        if !estimate.is_finite() {
            return f64::INFINITY;
        }
        let mut z = Mat::<Complex64>::from_fn(n, 1, |i, _| {
            let v = y[(i, 0)];
            if v.norm() > 0.0 {
                v / v.norm()
            } else {
                Complex64::new(1.0, 0.0)
            }
        });
        lu.solve_transpose_in_place_with_conj(Conj::Yes, z.as_mut());
        let (jmax, zmax) = (0..n)
            .map(|i| (i, z[(i, 0)].norm()))
            .fold((0, 0.0), |acc, v| if v.1 > acc.1 { v } else { acc });
        let ztx: f64 = (0..n).map(|i| (z[(i, 0)].conj() * x[(i, 0)]).re).sum();
        if zmax <= ztx || jmax == last {
            break;
        }
        last = jmax;
        x = Mat::<Complex64>::zeros(n, 1);
        x[(jmax, 0)] = Complex64::new(1.0, 0.0);
    }
    estimate
}

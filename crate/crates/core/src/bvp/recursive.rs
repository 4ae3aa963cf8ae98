//! Leaf-to-root elimination.
//!
//! Each subtree hanging below a vertex responds to a prescribed vertex value
//! `s` with a start slope `y'(0) = A s + g` on its first edge. Leaves fix the
//! far end; interior vertices turn the children's responses into a Robin
//! condition `y'(1) = R y(1) + G`, with `R = Σ p̃_ν A_ν - β_j` and
//! `G = Σ p̃_ν g_ν`, via the Kirchhoff condition. A forward sweep from `φ₀`
//! then recovers every edge.

use num_complex::Complex64;

use super::{beta_unchecked, BoundaryData, SolveError};
use crate::edge::{solve2, EdgeBasis, EdgeSolution};
use crate::tree::TemporalTree;

#[derive(Clone, Copy)]
struct Response {
    /// Coefficients for a unit start value.
    unit: (Complex64, Complex64),
    /// Coefficients for zero start value (inhomogeneous end data).
    offset: (Complex64, Complex64),
    /// `y'(0) = slope * s + shift`.
    slope: Complex64,
    shift: Complex64,
}

pub(super) fn solve(tree: &TemporalTree, data: &BoundaryData) -> Result<Vec<EdgeSolution>, SolveError> {
    let n = tree.edge_count();
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let bases: Vec<EdgeBasis> = tree.edges().iter().map(|e| EdgeBasis::new(e.b)).collect();
    let mut resp: Vec<Option<Response>> = vec![None; n];

    for e in tree.edges().iter().rev() {
        let basis = &bases[e.id.slot()];
        let f0 = basis.values(0.0);
        let f1 = basis.values(1.0);
        let (end_row, end_rhs) = if e.is_leaf() {
            (f1, data.target_for(tree, e.id))
        } else {
            let mut robin = -beta_unchecked(tree, e.id);
            let mut forcing = zero;
            for &nu in &e.children {
                let p = tree.edge(nu).p_tilde;
                let r = resp[nu.slot()].expect("children are reduced first");
                robin += p * r.slope;
                forcing += p * r.shift;
            }
            let d1 = basis.derivatives(1.0);
            ([d1[0] - robin * f1[0], d1[1] - robin * f1[1]], forcing)
        };
        let rows = [f0, end_row];
        let unit = solve2(rows, [one, zero]).ok_or(SolveError::Reduction(e.id))?;
        let offset = solve2(rows, [zero, end_rhs]).ok_or(SolveError::Reduction(e.id))?;
        let d0 = basis.derivatives(0.0);
        resp[e.id.slot()] = Some(Response {
            unit,
            offset,
            slope: d0[0] * unit.0 + d0[1] * unit.1,
            shift: d0[0] * offset.0 + d0[1] * offset.1,
        });
    }

    let mut out: Vec<EdgeSolution> = Vec::with_capacity(n);
    for e in tree.edges() {
        let start = match e.parent {
            None => data.initial,
            Some(p) => out[p.slot()].value(1.0),
        };
        let r = resp[e.id.slot()].expect("all edges reduced");
        out.push(EdgeSolution::new(
            bases[e.id.slot()],
            start * r.unit.0 + r.offset.0,
            start * r.unit.1 + r.offset.1,
        ));
    }
    debug_assert_eq!(out.len(), n);
    Ok(out)
}

//! Closed-form machinery on a single edge.
//!
//! On an edge with constant coefficient `b = a + iβ` the Euler–Lagrange
//! equation `-y'' - 2iβ y' + |b|² y = 0` has characteristic roots `-b` and
//! `conj(b)`. When `a` is (numerically) zero the roots merge into `-iβ` and
//! the basis becomes `{e^{-iβt}, t e^{-iβt}}`.
//!
//! Every solution is summarized by the control it induces,
//! `u = y' + b y = e^{κt} (A + B t)` (see [`ControlShape`]), which makes the
//! energy and the forward integration of the state equation exact.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::special::{exp_mean_re, exp_moment};

/// `|Re b|` at or below this uses the degenerate basis.
pub const BASIS_SWITCH_TOL: f64 = 1e-8;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error, PartialEq)]
pub enum EdgeError {
    #[error("local time {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("Sobolev order {0} not supported (expected 0 or 1)")]
    SobolevOrder(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// `{e^{-bt}, e^{conj(b) t}}`.
    Generic,
    /// `{e^{-iβt}, t e^{-iβt}}` for `Re b ≈ 0`.
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeBasis {
    pub kind: BasisKind,
    pub b: Complex64,
}

pub fn make_basis(b: Complex64, tol: f64) -> EdgeBasis {
    let kind = if b.re.abs() > tol {
        BasisKind::Generic
    } else {
        BasisKind::Degenerate
    };
    EdgeBasis { kind, b }
}

impl EdgeBasis {
    pub fn new(b: Complex64) -> Self {
        make_basis(b, BASIS_SWITCH_TOL)
    }

    pub fn with_kind(b: Complex64, kind: BasisKind) -> Self {
        Self { kind, b }
    }

    /// Exponents of the two basis functions (equal in the degenerate case).
    pub fn exponents(&self) -> (Complex64, Complex64) {
        match self.kind {
            BasisKind::Generic => (-self.b, self.b.conj()),
            BasisKind::Degenerate => {
                let mu = -I * self.b.im;
                (mu, mu)
            }
        }
    }

    /// `[f₁(t), f₂(t)]`.
    pub fn values(&self, t: f64) -> [Complex64; 2] {
        let (l1, l2) = self.exponents();
        match self.kind {
            BasisKind::Generic => [(l1 * t).exp(), (l2 * t).exp()],
            BasisKind::Degenerate => {
                let e = (l1 * t).exp();
                [e, t * e]
            }
        }
    }

    /// `[f₁'(t), f₂'(t)]`.
    pub fn derivatives(&self, t: f64) -> [Complex64; 2] {
        let (l1, l2) = self.exponents();
        match self.kind {
            BasisKind::Generic => [l1 * (l1 * t).exp(), l2 * (l2 * t).exp()],
            BasisKind::Degenerate => {
                let e = (l1 * t).exp();
                [l1 * e, e * (1.0 + l1 * t)]
            }
        }
    }

    /// `[f₁''(t), f₂''(t)]`.
    pub fn second_derivatives(&self, t: f64) -> [Complex64; 2] {
        let (l1, l2) = self.exponents();
        match self.kind {
            BasisKind::Generic => [l1 * l1 * (l1 * t).exp(), l2 * l2 * (l2 * t).exp()],
            BasisKind::Degenerate => {
                let e = (l1 * t).exp();
                [l1 * l1 * e, e * (2.0 * l1 + l1 * l1 * t)]
            }
        }
    }
}

/// Control induced by an edge solution: `u(t) = e^{rate·t} (constant + slope·t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlShape {
    pub rate: Complex64,
    pub constant: Complex64,
    pub slope: Complex64,
}

impl ControlShape {
    pub const ZERO: ControlShape = ControlShape {
        rate: ZERO,
        constant: ZERO,
        slope: ZERO,
    };

    pub fn value(&self, t: f64) -> Complex64 {
        (self.rate * t).exp() * (self.constant + self.slope * t)
    }

    /// `∫_0^1 |u|² dt`, exact.
    pub fn energy(&self) -> f64 {
        let lam = Complex64::new(2.0 * self.rate.re, 0.0);
        let a = self.constant;
        let b = self.slope;
        let mut e = a.norm_sqr() * exp_mean_re(2.0 * self.rate.re);
        if b != ZERO {
            e += 2.0 * (a * b.conj()).re * exp_moment(lam, 1.0, 1).re
                + b.norm_sqr() * exp_moment(lam, 1.0, 2).re;
        }
        e.max(0.0)
    }

    /// Solution of `y' + b y = u`, `y(0) = y0`, at local time `t`, by variation
    /// of constants: `y(t) = e^{-bt} (y0 + ∫_0^t e^{bs} u(s) ds)`.
    pub fn integrate(&self, b: Complex64, y0: Complex64, t: f64) -> Complex64 {
        let lam = b + self.rate;
        let mut integral = self.constant * exp_moment(lam, t, 0);
        if self.slope != ZERO {
            integral += self.slope * exp_moment(lam, t, 1);
        }
        (-b * t).exp() * (y0 + integral)
    }
}

/// `y = c₁ f₁ + c₂ f₂` on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSolution {
    pub basis: EdgeBasis,
    pub c1: Complex64,
    pub c2: Complex64,
}

impl EdgeSolution {
    pub fn new(basis: EdgeBasis, c1: Complex64, c2: Complex64) -> Self {
        Self { basis, c1, c2 }
    }

    pub fn zero(b: Complex64) -> Self {
        Self::new(EdgeBasis::new(b), ZERO, ZERO)
    }

    pub fn b(&self) -> Complex64 {
        self.basis.b
    }

    /// `(y(t), y'(t))`.
    pub fn eval(&self, t: f64) -> Result<(Complex64, Complex64), EdgeError> {
        check_range(t)?;
        Ok(self.eval_unchecked(t))
    }

    /// As [`eval`](Self::eval) without the range check; used for intervals
    /// longer than one unit.
    pub fn eval_unchecked(&self, t: f64) -> (Complex64, Complex64) {
        let f = self.basis.values(t);
        let d = self.basis.derivatives(t);
        (self.c1 * f[0] + self.c2 * f[1], self.c1 * d[0] + self.c2 * d[1])
    }

    pub fn value(&self, t: f64) -> Complex64 {
        self.eval_unchecked(t).0
    }

    /// `ℓy(t) = y'(t) + b y(t)`.
    pub fn apply_l(&self, t: f64) -> Result<Complex64, EdgeError> {
        check_range(t)?;
        Ok(self.control().value(t))
    }

    /// `ℓy` in closed form.
    ///
    /// Generic: `ℓf₁ = 0` and `ℓf₂ = 2 Re(b) f₂`. Degenerate with `μ = -iβ`:
    /// `ℓf₁ = a f₁`, `ℓf₂ = e^{μt}(1 + a t)`, where `a = Re b` is below the
    /// switch tolerance.
    pub fn control(&self) -> ControlShape {
        let b = self.b();
        match self.basis.kind {
            BasisKind::Generic => ControlShape {
                rate: b.conj(),
                constant: 2.0 * b.re * self.c2,
                slope: ZERO,
            },
            BasisKind::Degenerate => ControlShape {
                rate: -I * b.im,
                constant: b.re * self.c1 + self.c2,
                slope: b.re * self.c2,
            },
        }
    }

    /// Residual of `-y'' - 2i Im(b) y' + |b|² y` at `t`, from exact derivatives.
    pub fn residual(&self, t: f64) -> Complex64 {
        let b = self.b();
        let f = self.basis.values(t);
        let d = self.basis.derivatives(t);
        let dd = self.basis.second_derivatives(t);
        let y = self.c1 * f[0] + self.c2 * f[1];
        let dy = self.c1 * d[0] + self.c2 * d[1];
        let ddy = self.c1 * dd[0] + self.c2 * dd[1];
        -ddy - 2.0 * I * b.im * dy + b.norm_sqr() * y
    }

    pub fn energy(&self) -> f64 {
        edge_energy(self)
    }

    /// The same function re-based at `s`: `t ↦ y(t + s)`.
    pub fn shifted(&self, s: f64) -> Self {
        let (l1, l2) = self.basis.exponents();
        let (c1, c2) = match self.basis.kind {
            BasisKind::Generic => (self.c1 * (l1 * s).exp(), self.c2 * (l2 * s).exp()),
            BasisKind::Degenerate => {
                let e = (l1 * s).exp();
                ((self.c1 + self.c2 * s) * e, self.c2 * e)
            }
        };
        Self::new(self.basis, c1, c2)
    }

    /// Adds `other`, which must share the basis.
    pub fn plus(&self, other: &Self) -> Self {
        debug_assert_eq!(self.basis, other.basis);
        Self::new(self.basis, self.c1 + other.c1, self.c2 + other.c2)
    }

    pub fn scaled(&self, k: Complex64) -> Self {
        Self::new(self.basis, k * self.c1, k * self.c2)
    }
}

fn check_range(t: f64) -> Result<(), EdgeError> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(EdgeError::OutOfRange(t))
    }
}

/// `∫_0^1 |ℓy|² dt`, exact.
pub fn edge_energy(sol: &EdgeSolution) -> f64 {
    sol.control().energy()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SobolevOrder {
    L2,
    H1,
}

impl TryFrom<u32> for SobolevOrder {
    type Error = EdgeError;

    fn try_from(s: u32) -> Result<Self, Self::Error> {
        match s {
            0 => Ok(SobolevOrder::L2),
            1 => Ok(SobolevOrder::H1),
            other => Err(EdgeError::SobolevOrder(other)),
        }
    }
}

/// `∫|y|²` (L2) or `∫|y|² + |y'|²` (H1) over `[0, 1]`, exact.
pub fn edge_sobolev(sol: &EdgeSolution, s: SobolevOrder) -> f64 {
    let b = sol.b();
    let (c1, c2) = (sol.c1, sol.c2);
    let (l2, h1) = match sol.basis.kind {
        BasisKind::Generic => {
            // |f₁|² = e^{-2at}, |f₂|² = e^{2at}, f₁ conj(f₂) = 1.
            let a = b.re;
            let em = exp_mean_re(-2.0 * a);
            let ep = exp_mean_re(2.0 * a);
            let cross = c1 * c2.conj();
            let l2 = c1.norm_sqr() * em + c2.norm_sqr() * ep + 2.0 * cross.re;
            let d = b.norm_sqr() * (c1.norm_sqr() * em + c2.norm_sqr() * ep)
                + 2.0 * (-b * b * cross).re;
            (l2, d)
        }
        BasisKind::Degenerate => {
            // y = e^{μt}(c₁ + c₂t), y' = e^{μt}((μc₁ + c₂) + μc₂t), |e^{μt}| = 1.
            let mu = -I * b.im;
            let linear = |p: Complex64, q: Complex64| {
                p.norm_sqr() + (p * q.conj()).re + q.norm_sqr() / 3.0
            };
            (linear(c1, c2), linear(mu * c1 + c2, mu * c2))
        }
    };
    match s {
        SobolevOrder::L2 => l2.max(0.0),
        SobolevOrder::H1 => (l2 + h1).max(0.0),
    }
}

/// Solves for the coefficients of `basis` given the two linear conditions
/// `rows[k] · (c₁, c₂) = rhs[k]`.
pub(crate) fn solve2(rows: [[Complex64; 2]; 2], rhs: [Complex64; 2]) -> Option<(Complex64, Complex64)> {
    let det = rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0];
    let scale = rows
        .iter()
        .flatten()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    if det.norm() <= f64::EPSILON * scale * scale || !det.is_finite() {
        return None;
    }
    let c1 = (rhs[0] * rows[1][1] - rows[0][1] * rhs[1]) / det;
    let c2 = (rows[0][0] * rhs[1] - rows[1][0] * rhs[0]) / det;
    Some((c1, c2))
}

/// Edge solution with `y(0) = start`, `y(1) = end`.
pub fn dirichlet(basis: EdgeBasis, start: Complex64, end: Complex64) -> Option<EdgeSolution> {
    let rows = [basis.values(0.0), basis.values(1.0)];
    solve2(rows, [start, end]).map(|(c1, c2)| EdgeSolution::new(basis, c1, c2))
}

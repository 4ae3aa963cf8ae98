//! Exponential moment integrals used by the closed-form edge formulas.

use num_complex::Complex64;

const SERIES_RADIUS: f64 = 0.5;

/// `e^z - 1` without cancellation for small `|z|`.
pub fn cexpm1(z: Complex64) -> Complex64 {
    let (s, c) = z.im.sin_cos();
    let half = (0.5 * z.im).sin();
    let em1 = z.re.exp_m1();
    Complex64::new(em1 * c - 2.0 * half * half, z.re.exp() * s)
}

/// Mean of `e^{λt}` over `[0, 1]`, i.e. `(e^λ - 1)/λ`, continuous at `λ = 0`.
pub fn exp_mean(lambda: Complex64) -> Complex64 {
    if lambda == Complex64::new(0.0, 0.0) {
        return Complex64::new(1.0, 0.0);
    }
    cexpm1(lambda) / lambda
}

/// Real-argument version of [`exp_mean`].
pub fn exp_mean_re(lambda: f64) -> f64 {
    if lambda == 0.0 {
        1.0
    } else {
        lambda.exp_m1() / lambda
    }
}

/// `∫_0^t s^n e^{λ s} ds` for `n ≤ 2`.
///
/// Uses the power series when `|λ t|` is small and the integration-by-parts
/// recurrence otherwise.
pub fn exp_moment(lambda: Complex64, t: f64, n: u32) -> Complex64 {
    assert!(n <= 2, "moments above order 2 are not needed");
    if t == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let z = lambda * t;
    if z.norm() < SERIES_RADIUS {
        // t^{n+1} Σ_k z^k / (k! (n+k+1))
        let mut term = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..40u32 {
            let add = term / f64::from(n + k + 1);
            acc += add;
            if add.norm() <= 1e-18 * acc.norm() {
                break;
            }
            term *= z / f64::from(k + 1);
        }
        return acc * t.powi(n as i32 + 1);
    }
    let e = (lambda * t).exp();
    let m0 = cexpm1(z) / lambda;
    if n == 0 {
        return m0;
    }
    let m1 = (t * e - m0) / lambda;
    if n == 1 {
        return m1;
    }
    (t * t * e - 2.0 * m1) / lambda
}

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttc_core::export::{OracleFixture, TruncationFixture};
use ttc_core::process::{renormalize, Distribution};
use ttc_core::{build_tree, BoundaryData, Complex64, ProcessSpec, TemporalTree};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Composite Simpson rule on `[0, 1]` with `n` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    assert!(n.is_multiple_of(2));
    let h = 1.0 / n as f64;
    let mut sum = f(0.0) + f(1.0);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(k as f64 * h);
    }
    sum * h / 3.0
}

pub fn canonical_spec() -> ProcessSpec {
    ProcessSpec::new(Distribution::real(&[1.0, 2.0], &[0.5, 0.5]), 2, c(1.0, 0.0), c(0.0, 0.0)).with_b_root(c(1.0, 0.0))
}

pub fn instance(spec: &ProcessSpec) -> (Arc<TemporalTree>, BoundaryData) {
    (Arc::new(build_tree(spec).expect("tree")), BoundaryData::from_spec(spec))
}

pub fn random_coefficient(rng: &mut ChaCha8Rng, max_modulus: f64) -> Complex64 {
    let r = rng.random_range(0.0..max_modulus);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    Complex64::from_polar(r, phase)
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> Complex64 {
    c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn random_probs(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|x| x / total).collect();
    renormalize(&mut p);
    p
}

/// Random instance with `|b| ≤ max_modulus`, `T ≤ max_horizon`, `K ≤ max_states`.
pub fn random_spec(seed: u64, max_modulus: f64, max_horizon: usize, max_states: usize) -> ProcessSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(1..=max_states);
    let horizon = rng.random_range(1..=max_horizon);
    let states: Vec<Complex64> = (0..k).map(|_| random_coefficient(&mut rng, max_modulus)).collect();
    let probs = random_probs(&mut rng, k);
    let b_root = random_coefficient(&mut rng, max_modulus);
    let phi0 = random_unit(&mut rng);
    let phi1 = random_unit(&mut rng);
    ProcessSpec::new(Distribution::new(states, probs), horizon, phi0, phi1).with_b_root(b_root)
}

/// Constant coefficient `b` on every edge with `k` branches of random weight.
pub fn constant_spec(b: Complex64, k: usize, horizon: usize, probs: Vec<f64>) -> ProcessSpec {
    assert_eq!(probs.len(), k);
    ProcessSpec::new(Distribution::new(vec![b; k], probs), horizon, c(1.0, 0.5), c(-0.25, 1.0))
}

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn oracle_fixture(name: &str) -> OracleFixture {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture file");
    serde_json::from_str(&text).expect("fixture json")
}

pub fn truncation_fixture(name: &str) -> TruncationFixture {
    let text = std::fs::read_to_string(fixture_path(name)).expect("fixture file");
    serde_json::from_str(&text).expect("fixture json")
}

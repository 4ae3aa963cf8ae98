//! The discrete coefficient process: states, probabilities, horizon and
//! boundary data, plus validation and finite truncation.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::EdgeId;

/// Tolerance on `|Σ p_l - 1|` for an input distribution.
pub const PROB_SUM_TOL: f64 = 1e-12;

/// Coefficients with modulus above this are rejected: `e^{|b|}` would overflow
/// the per-edge exponentials.
pub const MAX_COEFFICIENT_MODULUS: f64 = 700.0;

#[derive(Debug, Error, PartialEq)]
pub enum ProcessError {
    #[error("state generator produced |θ_{index}| = {modulus}, above its declared bound {bound}")]
    BoundExceeded {
        index: usize,
        modulus: f64,
        bound: f64,
    },
    #[error("state generator requires a positive count")]
    EmptyGeneration,
    #[error("invalid generator parameter: {0}")]
    InvalidGenerator(String),
}

/// A finite list of coefficient values with their branch probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub states: Vec<Complex64>,
    pub probs: Vec<f64>,
}

impl Distribution {
    pub fn new(states: Vec<Complex64>, probs: Vec<f64>) -> Self {
        Self { states, probs }
    }

    /// Real-valued states with the given probabilities.
    pub fn real(states: &[f64], probs: &[f64]) -> Self {
        Self {
            states: states.iter().map(|&s| Complex64::new(s, 0.0)).collect(),
            probs: probs.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Branches with strictly positive probability, as `(state index, θ, p)`.
    /// Zero-probability states correspond to absent edges.
    pub fn branches(&self) -> impl Iterator<Item = (usize, Complex64, f64)> + '_ {
        self.states
            .iter()
            .zip(&self.probs)
            .enumerate()
            .filter(|(_, (_, &p))| p > 0.0)
            .map(|(l, (&s, &p))| (l, s, p))
    }

    pub fn branch_count(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    pub fn sup_modulus(&self) -> f64 {
        self.states.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    /// Drops zero-probability states, keeping order.
    pub fn pruned(&self) -> Self {
        let (states, probs) = self
            .states
            .iter()
            .zip(&self.probs)
            .filter(|(_, &p)| p != 0.0)
            .map(|(&s, &p)| (s, p))
            .unzip();
        Self { states, probs }
    }

    /// Keeps the first `K` states. With renormalization the kept
    /// probabilities are rescaled unless they already sum to exactly 1, so a
    /// normalized list with `K ≥ len` comes back unchanged.
    pub fn truncated(&self, policy: TruncationPolicy) -> Self {
        let keep = policy.max_states.max(1).min(self.len());
        let states = self.states[..keep].to_vec();
        let mut probs = self.probs[..keep].to_vec();
        if policy.renormalize && probs.iter().sum::<f64>() != 1.0 {
            renormalize(&mut probs);
        }
        Self { states, probs }
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.states.is_empty() {
            out.push(Violation::EmptyStates);
        }
        if self.states.len() != self.probs.len() {
            out.push(Violation::LengthMismatch {
                states: self.states.len(),
                probs: self.probs.len(),
            });
        }
        for (index, &p) in self.probs.iter().enumerate() {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                out.push(Violation::InvalidProbability { index, value: p });
            }
        }
        let sum = self.total();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            out.push(Violation::ProbabilitySum { sum });
        }
        for (index, s) in self.states.iter().enumerate() {
            if !(s.re.is_finite() && s.im.is_finite()) {
                out.push(Violation::UnboundedState { index });
            } else if s.norm() > MAX_COEFFICIENT_MODULUS {
                out.push(Violation::CoefficientTooLarge {
                    index,
                    modulus: s.norm(),
                });
            }
        }
        out
    }
}

/// Rescales to unit sum. The last entry absorbs the rounding so that the
/// left-to-right floating-point sum is exactly 1.
pub fn renormalize(probs: &mut [f64]) {
    let total: f64 = probs.iter().sum();
    if total <= 0.0 || probs.is_empty() {
        return;
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1);
    let head: f64 = probs[..last].iter().sum();
    probs[last] = 1.0 - head;
}

/// Terminal data: one value for every leaf, or a bounded per-leaf family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targets {
    Uniform(Complex64),
    /// Indexed by leaf rank (breadth-first order of the leaf edges).
    PerLeaf(Vec<Complex64>),
}

impl Targets {
    pub fn sup_modulus(&self) -> f64 {
        match self {
            Targets::Uniform(v) => v.norm(),
            Targets::PerLeaf(vs) => vs.iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    pub fn at(&self, leaf_rank: usize) -> Complex64 {
        match self {
            Targets::Uniform(v) => *v,
            Targets::PerLeaf(vs) => vs[leaf_rank],
        }
    }

    pub fn scaled(&self, k: Complex64) -> Self {
        match self {
            Targets::Uniform(v) => Targets::Uniform(k * v),
            Targets::PerLeaf(vs) => Targets::PerLeaf(vs.iter().map(|v| k * v).collect()),
        }
    }

    fn is_finite(&self) -> bool {
        let ok = |v: &Complex64| v.re.is_finite() && v.im.is_finite();
        match self {
            Targets::Uniform(v) => ok(v),
            Targets::PerLeaf(vs) => vs.iter().all(ok),
        }
    }
}

/// Which interior vertices a conditional distribution applies to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexSelector {
    /// All vertices at integer time `t = level`.
    Level(usize),
    /// The vertex at the end of the given edge.
    Vertex(EdgeId),
}

/// A per-vertex conditional branch distribution. A vertex-specific entry wins
/// over a level entry, which wins over the base distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalOverride {
    pub at: VertexSelector,
    pub distribution: Distribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    /// Branch distribution used at every interior vertex unless overridden.
    pub base: Distribution,
    /// Horizon `T` in unit steps.
    pub horizon: usize,
    /// Coefficient on `(0, 1)`. Defaults to the first state when absent.
    pub b_root: Option<Complex64>,
    pub initial: Complex64,
    pub targets: Targets,
    #[serde(default)]
    pub overrides: Vec<ConditionalOverride>,
}

impl ProcessSpec {
    pub fn new(base: Distribution, horizon: usize, initial: Complex64, target: Complex64) -> Self {
        Self {
            base,
            horizon,
            b_root: None,
            initial,
            targets: Targets::Uniform(target),
            overrides: Vec::new(),
        }
    }

    pub fn with_b_root(mut self, b: Complex64) -> Self {
        self.b_root = Some(b);
        self
    }

    pub fn with_targets(mut self, targets: Targets) -> Self {
        self.targets = targets;
        self
    }

    pub fn with_override(mut self, at: VertexSelector, distribution: Distribution) -> Self {
        self.overrides.push(ConditionalOverride { at, distribution });
        self
    }

    /// Effective root coefficient and whether it was defaulted.
    pub fn root_coefficient(&self) -> (Complex64, bool) {
        match self.b_root {
            Some(b) => (b, false),
            None => (
                self.base.states.first().copied().unwrap_or_default(),
                true,
            ),
        }
    }

    pub fn distribution_for(&self, vertex: EdgeId, level: usize) -> &Distribution {
        let by_vertex = self
            .overrides
            .iter()
            .find(|o| o.at == VertexSelector::Vertex(vertex));
        let by_level = || {
            self.overrides
                .iter()
                .find(|o| o.at == VertexSelector::Level(level))
        };
        by_vertex
            .or_else(by_level)
            .map(|o| &o.distribution)
            .unwrap_or(&self.base)
    }

    /// Largest coefficient modulus that can appear on any edge.
    pub fn sup_coefficient(&self) -> f64 {
        let mut sup = self.base.sup_modulus().max(self.root_coefficient().0.norm());
        for o in &self.overrides {
            sup = sup.max(o.distribution.sup_modulus());
        }
        sup
    }

    pub fn pruned(&self) -> Self {
        let mut out = self.clone();
        out.base = self.base.pruned();
        for o in &mut out.overrides {
            o.distribution = o.distribution.pruned();
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Number of leading states kept (`K ≥ 1`).
    pub max_states: usize,
    pub renormalize: bool,
}

impl TruncationPolicy {
    pub fn new(max_states: usize) -> Self {
        Self {
            max_states,
            renormalize: true,
        }
    }

    pub fn raw(max_states: usize) -> Self {
        Self {
            max_states,
            renormalize: false,
        }
    }
}

/// Keeps the first `K` states of every distribution in the spec.
pub fn truncate(spec: &ProcessSpec, policy: TruncationPolicy) -> ProcessSpec {
    let mut out = spec.clone();
    out.base = spec.base.truncated(policy);
    for o in &mut out.overrides {
        o.distribution = o.distribution.truncated(policy);
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    EmptyStates,
    LengthMismatch { states: usize, probs: usize },
    ProbabilitySum { sum: f64 },
    InvalidProbability { index: usize, value: f64 },
    UnboundedState { index: usize },
    CoefficientTooLarge { index: usize, modulus: f64 },
    RootCoefficient,
    HorizonTooShort { horizon: usize },
    NonFiniteBoundary,
    Override { index: usize, inner: Box<Violation> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyStates => write!(f, "state list is empty"),
            Violation::LengthMismatch { states, probs } => {
                write!(f, "{states} states but {probs} probabilities")
            }
            Violation::ProbabilitySum { sum } => write!(f, "probability sum {sum} ≠ 1"),
            Violation::InvalidProbability { index, value } => {
                write!(f, "probability p_{} = {value} outside [0, 1]", index + 1)
            }
            Violation::UnboundedState { index } => {
                write!(f, "state θ_{} is not finite", index + 1)
            }
            Violation::CoefficientTooLarge { index, modulus } => write!(
                f,
                "|θ_{}| = {modulus} exceeds {MAX_COEFFICIENT_MODULUS}",
                index + 1
            ),
            Violation::RootCoefficient => write!(f, "root coefficient is not finite or too large"),
            Violation::HorizonTooShort { horizon } => write!(f, "horizon T = {horizon} < 1"),
            Violation::NonFiniteBoundary => write!(f, "boundary data is not finite"),
            Violation::Override { index, inner } => {
                write!(f, "conditional distribution #{index}: {inner}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// States of the base distribution that survive zero-probability pruning.
    pub retained_states: usize,
    pub zero_probability_states: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Collects every admissibility problem. Zero probabilities are not
/// violations; those states are pruned as absent edges.
pub fn validate_spec(spec: &ProcessSpec) -> ValidationReport {
    let mut violations = spec.base.violations();
    if spec.horizon < 1 {
        violations.push(Violation::HorizonTooShort {
            horizon: spec.horizon,
        });
    }
    if let Some(b) = spec.b_root {
        if !(b.re.is_finite() && b.im.is_finite()) || b.norm() > MAX_COEFFICIENT_MODULUS {
            violations.push(Violation::RootCoefficient);
        }
    }
    let init_ok = spec.initial.re.is_finite() && spec.initial.im.is_finite();
    if !init_ok || !spec.targets.is_finite() {
        violations.push(Violation::NonFiniteBoundary);
    }
    for (index, o) in spec.overrides.iter().enumerate() {
        for v in o.distribution.violations() {
            violations.push(Violation::Override {
                index,
                inner: Box::new(v),
            });
        }
    }
    let zero = spec.base.probs.iter().filter(|&&p| p == 0.0).count();
    ValidationReport {
        violations,
        retained_states: spec.base.len() - zero.min(spec.base.len()),
        zero_probability_states: zero,
    }
}

/// Rule for the `l`-th state of a countable state set (`l ≥ 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateRule {
    Constant { value: Complex64 },
    /// `θ_l = base + scale / l`.
    AffineInverse { base: Complex64, scale: Complex64 },
}

/// Rule for the `l`-th probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbRule {
    /// `p_l = (1 - r) r^{l-1}`; `r = 1/2` gives `p_l = 2^{-l}`.
    Geometric { ratio: f64 },
}

/// A countable state set given by rules plus a declared bound on `|θ_l|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateGenerator {
    pub states: StateRule,
    pub probs: ProbRule,
    pub bound: f64,
}

impl StateGenerator {
    /// First `count` states with their raw (untruncated) probabilities.
    pub fn materialize(&self, count: usize) -> Result<Distribution, ProcessError> {
        if count == 0 {
            return Err(ProcessError::EmptyGeneration);
        }
        let ProbRule::Geometric { ratio } = self.probs;
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(ProcessError::InvalidGenerator(format!(
                "geometric ratio {ratio} outside (0, 1)"
            )));
        }
        let mut states = Vec::with_capacity(count);
        let mut probs = Vec::with_capacity(count);
        for l in 1..=count {
            let theta = match &self.states {
                StateRule::Constant { value } => *value,
                StateRule::AffineInverse { base, scale } => base + scale / l as f64,
            };
            if theta.norm() > self.bound {
                return Err(ProcessError::BoundExceeded {
                    index: l,
                    modulus: theta.norm(),
                    bound: self.bound,
                });
            }
            states.push(theta);
            probs.push((1.0 - ratio) * ratio.powi(l as i32 - 1));
        }
        Ok(Distribution { states, probs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(states: &[f64], probs: &[f64], horizon: usize) -> ProcessSpec {
        ProcessSpec::new(
            Distribution::real(states, probs),
            horizon,
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
        )
    }

    #[test]
    fn admissible_spec_has_no_violations() {
        let r = validate_spec(&spec(&[1.0, 2.0], &[0.5, 0.5], 2));
        assert!(r.is_valid(), "{:?}", r.violations);
        assert_eq!(r.retained_states, 2);
    }

    #[test]
    fn probability_defect_is_reported() {
        let r = validate_spec(&spec(&[1.0, 2.0], &[0.5, 0.4], 2));
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].to_string(), "probability sum 0.9 ≠ 1");
    }

    #[test]
    fn zero_probability_states_are_pruned_not_rejected() {
        let s = spec(&[1.0, 2.0, 3.0], &[0.5, 0.5, 0.0], 2);
        let r = validate_spec(&s);
        assert!(r.is_valid());
        assert_eq!(r.retained_states, 2);
        assert_eq!(s.pruned().base.len(), 2);
    }

    #[test]
    fn every_problem_is_listed() {
        let mut s = spec(&[1.0, f64::INFINITY], &[-0.1, 0.5, 0.6], 0);
        s.b_root = Some(Complex64::new(1e3, 0.0));
        let r = validate_spec(&s);
        let msgs: Vec<String> = r.violations.iter().map(|v| v.to_string()).collect();
        assert!(msgs.iter().any(|m| m.contains("2 states but 3")));
        assert!(msgs.iter().any(|m| m.contains("p_1 = -0.1")));
        assert!(msgs.iter().any(|m| m.contains("θ_2 is not finite")));
        assert!(msgs.iter().any(|m| m.contains("T = 0")));
        assert!(msgs.iter().any(|m| m.contains("root coefficient")));
    }

    #[test]
    fn geometric_truncation_renormalizes() {
        let gen = StateGenerator {
            states: StateRule::AffineInverse {
                base: Complex64::new(1.0, 0.0),
                scale: Complex64::new(1.0, 0.0),
            },
            probs: ProbRule::Geometric { ratio: 0.5 },
            bound: 2.0,
        };
        let d = gen.materialize(10).unwrap();
        let t = d.truncated(TruncationPolicy::new(3));
        let want = [4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0];
        for (p, w) in t.probs.iter().zip(want) {
            assert!((p - w).abs() < 1e-15);
        }
        assert_eq!(t.total(), 1.0);
        assert_eq!(t.states[2], Complex64::new(1.0 + 1.0 / 3.0, 0.0));
    }

    #[test]
    fn truncation_identity_and_degenerate_cases() {
        let s = spec(&[1.0, 2.0], &[0.5, 0.5], 2);
        assert_eq!(truncate(&s, TruncationPolicy::new(5)), s);
        let one = truncate(&s, TruncationPolicy::new(1));
        assert_eq!(one.base.probs, vec![1.0]);
        let raw = truncate(&s, TruncationPolicy::raw(1));
        assert_eq!(raw.base.probs, vec![0.5]);
    }

    #[test]
    fn generator_enforces_declared_bound() {
        let gen = StateGenerator {
            states: StateRule::AffineInverse {
                base: Complex64::new(1.0, 0.0),
                scale: Complex64::new(1.0, 0.0),
            },
            probs: ProbRule::Geometric { ratio: 0.5 },
            bound: 1.6,
        };
        assert!(matches!(
            gen.materialize(3),
            Err(ProcessError::BoundExceeded { index: 1, .. })
        ));
    }

    #[test]
    fn override_lookup_prefers_vertex_then_level() {
        let s = spec(&[1.0], &[1.0], 3)
            .with_override(VertexSelector::Level(1), Distribution::real(&[2.0], &[1.0]))
            .with_override(
                VertexSelector::Vertex(EdgeId(1)),
                Distribution::real(&[3.0], &[1.0]),
            );
        assert_eq!(s.distribution_for(EdgeId(1), 1).states[0].re, 3.0);
        assert_eq!(s.distribution_for(EdgeId(2), 1).states[0].re, 2.0);
        assert_eq!(s.distribution_for(EdgeId(2), 2).states[0].re, 1.0);
    }
}

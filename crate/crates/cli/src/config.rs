//! Run configuration (TOML) and tolerance overrides from the environment.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use ttc_core::process::{
    truncate, Distribution, StateGenerator, Targets, TruncationPolicy, VertexSelector,
};
use ttc_core::tree::DEFAULT_EDGE_BUDGET;
use ttc_core::{EdgeId, ProcessSpec};

/// A complex value written either as a real number or as `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Real(f64),
    Pair([f64; 2]),
}

impl Value {
    pub fn complex(self) -> Complex64 {
        match self {
            Value::Real(re) => Complex64::new(re, 0.0),
            Value::Pair([re, im]) => Complex64::new(re, im),
        }
    }
}

fn complexes(values: &[Value]) -> Vec<Complex64> {
    values.iter().map(|v| v.complex()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default = "yes")]
    pub renormalize: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideConfig {
    /// All vertices at this integer time.
    pub level: Option<usize>,
    /// The vertex at the end of this edge.
    pub vertex: Option<usize>,
    pub states: Vec<Value>,
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    /// Grid points per unit edge in the CSV outputs.
    pub samples: Option<usize>,
    /// Oracle fixture to compare `J` against, relative to the config file.
    pub fixture: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaybackConfig {
    /// Branch choice at each integer time `1..T`; sampled when absent.
    pub choices: Option<Vec<usize>>,
    pub samples: Option<usize>,
    /// Also play back every leaf and check the energy identity.
    #[serde(default)]
    pub exhaustive: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub trials: Option<usize>,
    pub mesh: Option<Vec<usize>>,
    /// Domain-function pairs for the bilinear-form defect.
    pub pairs: Option<usize>,
    pub apriori_samples: Option<usize>,
    /// Shift `c₂` of the root edge by this amount before certifying.
    pub corrupt: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    #[serde(rename = "K_list")]
    pub k_list: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: usize,
    pub states: Option<Vec<Value>>,
    pub probs: Option<Vec<f64>>,
    /// Countable state set; replaces `states`/`probs`.
    pub generator: Option<StateGenerator>,
    pub b_root: Option<Value>,
    pub phi0: Value,
    pub phi1: Option<Value>,
    /// Per-leaf terminal values in breadth-first leaf order.
    pub psi: Option<Vec<Value>>,
    pub seed: Option<u64>,
    pub truncation: Option<TruncationConfig>,
    #[serde(default)]
    pub overrides: Vec<OverrideConfig>,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub playback: PlaybackConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub converge: ConvergeConfig,
}

/// A parsed config together with its source bytes and location.
pub struct Loaded {
    pub config: RunConfig,
    pub bytes: Vec<u8>,
    pub dir: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let bytes = std::fs::read(path).with_context(|| format!("reading config {}", path.display()))?;
    let text = std::str::from_utf8(&bytes).context("config is not UTF-8")?;
    let config: RunConfig = toml::from_str(text).with_context(|| format!("parsing config {}", path.display()))?;
    config.check()?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    if let Some(f) = &config.solve.fixture {
        let full = dir.join(f);
        ensure!(full.is_file(), "fixture {} does not exist", full.display());
    }
    Ok(Loaded { config, bytes, dir })
}

impl RunConfig {
    fn check(&self) -> Result<()> {
        match (&self.states, &self.probs, &self.generator) {
            (Some(s), Some(p), None) => ensure!(s.len() == p.len(), "{} states but {} probabilities", s.len(), p.len()),
            (None, None, Some(_)) => {}
            _ => bail!("give either `states` and `probs` or a `generator`"),
        }
        match (&self.phi1, &self.psi) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => bail!("give exactly one of `phi1` and `psi`"),
        }
        for o in &self.overrides {
            ensure!(
                o.level.is_some() != o.vertex.is_some(),
                "an override needs exactly one of `level` and `vertex`"
            );
            ensure!(o.states.len() == o.probs.len(), "override states and probabilities differ in length");
        }
        Ok(())
    }

    fn base(&self, needed: usize) -> Result<Distribution> {
        match (&self.states, &self.probs, &self.generator) {
            (Some(s), Some(p), _) => Ok(Distribution::new(complexes(s), p.clone())),
            (_, _, Some(g)) => {
                let count = self.truncation.as_ref().map_or(needed, |t| t.k.max(needed));
                ensure!(count > 0, "a generator needs `truncation.K` or `converge.K_list`");
                Ok(g.materialize(count)?)
            }
            _ => unreachable!("checked on load"),
        }
    }

    fn process(&self, needed: usize) -> Result<ProcessSpec> {
        let target = self.phi1.map_or(Complex64::new(0.0, 0.0), Value::complex);
        let mut spec = ProcessSpec::new(self.base(needed)?, self.horizon, self.phi0.complex(), target);
        if let Some(psi) = &self.psi {
            spec = spec.with_targets(Targets::PerLeaf(complexes(psi)));
        }
        if let Some(b) = self.b_root {
            spec = spec.with_b_root(b.complex());
        }
        for o in &self.overrides {
            let at = match (o.level, o.vertex) {
                (Some(level), _) => VertexSelector::Level(level),
                (_, Some(v)) => VertexSelector::Vertex(EdgeId(v)),
                _ => unreachable!("checked on load"),
            };
            spec = spec.with_override(at, Distribution::new(complexes(&o.states), o.probs.clone()));
        }
        Ok(spec)
    }

    /// The process after optional truncation. Every command except
    /// `converge` runs on this.
    pub fn spec(&self) -> Result<ProcessSpec> {
        let spec = self.process(0)?;
        Ok(match &self.truncation {
            Some(t) => truncate(
                &spec,
                TruncationPolicy {
                    max_states: t.k,
                    renormalize: t.renormalize,
                },
            ),
            None => spec,
        })
    }

    /// Untruncated process with at least `needed` states for a truncation study.
    pub fn study_spec(&self, needed: usize) -> Result<ProcessSpec> {
        self.process(needed)
    }
}

/// Numerical tolerances; each can be overridden by a `TTC_*` variable.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    /// Constraint residuals relative to the problem scale.
    pub residual: f64,
    /// First-order ratio in the optimality certificate.
    pub certificate: f64,
    pub condition_warn: f64,
    /// Playback terminal error relative to the problem scale.
    pub playback: f64,
    /// Relative deviation of `J` from an oracle fixture.
    pub fixture: f64,
    /// Relative change of the a priori constant when the sample doubles.
    pub apriori: f64,
    pub edge_budget: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            residual: ttc_core::bvp::RESIDUAL_TOL,
            certificate: ttc_core::control::FIRST_ORDER_TOL,
            condition_warn: ttc_core::bvp::CONDITION_WARN,
            playback: ttc_core::control::TERMINAL_TOL,
            fixture: 1e-4,
            apriori: 0.05,
            edge_budget: DEFAULT_EDGE_BUDGET,
        }
    }
}

pub const ENV_VARS: [&str; 7] = [
    "TTC_RESIDUAL_TOL",
    "TTC_CERT_TOL",
    "TTC_CONDITION_WARN",
    "TTC_PLAYBACK_TOL",
    "TTC_FIXTURE_TOL",
    "TTC_APRIORI_TOL",
    "TTC_EDGE_BUDGET",
];

fn env<T: std::str::FromStr>(name: &str, slot: &mut T) -> Result<()> {
    if let Ok(raw) = std::env::var(name) {
        *slot = raw
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("{name}={raw:?} is not a valid number"))?;
    }
    Ok(())
}

impl Tolerances {
    pub fn from_env() -> Result<Self> {
        let mut t = Self::default();
        env(ENV_VARS[0], &mut t.residual)?;
        env(ENV_VARS[1], &mut t.certificate)?;
        env(ENV_VARS[2], &mut t.condition_warn)?;
        env(ENV_VARS[3], &mut t.playback)?;
        env(ENV_VARS[4], &mut t.fixture)?;
        env(ENV_VARS[5], &mut t.apriori)?;
        env(ENV_VARS[6], &mut t.edge_budget)?;
        for (name, v) in [
            ("residual", t.residual),
            ("certificate", t.certificate),
            ("condition_warn", t.condition_warn),
            ("playback", t.playback),
            ("fixture", t.fixture),
            ("apriori", t.apriori),
        ] {
            ensure!(v.is_finite() && v > 0.0, "tolerance {name} must be positive, got {v}");
        }
        Ok(t)
    }
}

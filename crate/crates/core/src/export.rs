//! Text outputs: tree JSON, CSV tables, content hashes and oracle fixtures.
//!
//! CSV files carry complex numbers as two real columns (`re_*`, `im_*`).

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bvp::TreeTrajectory;
use crate::control::{ControlFamily, PlaybackRecord};
use crate::edge::BasisKind;
use crate::oracle::{QpReference, TruncationReport};
use crate::process::{ProcessSpec, StateGenerator};
use crate::tree::{EdgeId, TemporalTree};

/// SHA-256 over `blob <len>\0<bytes>`, hex encoded, as git hashes blobs.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", bytes.len()).as_bytes());
    hasher.update(bytes);
    hasher.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn tree_json(tree: &TemporalTree) -> String {
    serde_json::to_string_pretty(&tree.export()).expect("tree export serializes")
}

/// Hash of the compact tree export; identifies an instance independently of
/// how it was configured.
pub fn instance_hash(tree: &TemporalTree) -> String {
    content_hash(&serde_json::to_vec(&tree.export()).expect("tree export serializes"))
}

fn grid(samples: usize) -> impl Iterator<Item = f64> {
    let n = samples.max(1);
    (0..=n).map(move |k| k as f64 / n as f64)
}

/// `edge,t,re_y,im_y,re_dy,im_dy` at `samples + 1` points per edge.
pub fn trajectory_csv(traj: &TreeTrajectory, samples: usize) -> String {
    let mut out = String::from("edge,t,re_y,im_y,re_dy,im_dy\n");
    for id in traj.tree.ids() {
        for t in grid(samples) {
            let (y, dy) = traj.edge(id).eval_unchecked(t);
            let _ = writeln!(out, "{id},{t},{:e},{:e},{:e},{:e}", y.re, y.im, dy.re, dy.im);
        }
    }
    out
}

/// One row per edge: structure, weight, coefficient and basis coefficients.
pub fn coefficients_csv(traj: &TreeTrajectory) -> String {
    let mut out = String::from("edge,parent,depth,alpha,re_b,im_b,basis,re_c1,im_c1,re_c2,im_c2\n");
    for e in traj.tree.edges() {
        let sol = traj.edge(e.id);
        let kind = match sol.basis.kind {
            BasisKind::Generic => "generic",
            BasisKind::Degenerate => "degenerate",
        };
        let _ = writeln!(
            out,
            "{},{},{},{:e},{:e},{:e},{kind},{:e},{:e},{:e},{:e}",
            e.id,
            e.parent.map_or(0, |p| p.0),
            e.depth,
            e.alpha,
            e.b.re,
            e.b.im,
            sol.c1.re,
            sol.c1.im,
            sol.c2.re,
            sol.c2.im
        );
    }
    out
}

/// `edge,t,re_u,im_u` at `samples + 1` points per edge.
pub fn controls_csv(fam: &ControlFamily, samples: usize) -> String {
    let mut out = String::from("edge,t,re_u,im_u\n");
    for id in fam.tree.ids() {
        for t in grid(samples) {
            let u = fam.control(id).value(t);
            let _ = writeln!(out, "{id},{t},{:e},{:e}", u.re, u.im);
        }
    }
    out
}

/// `t,re_y,im_y,re_u,im_u` for one stitched path.
pub fn playback_csv(rec: &PlaybackRecord, per_unit: usize) -> String {
    let mut out = String::from("t,re_y,im_y,re_u,im_u\n");
    for s in rec.sample(per_unit) {
        let _ = writeln!(out, "{},{:e},{:e},{:e},{:e}", s.t, s.y.re, s.y.im, s.u.re, s.u.im);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureSample {
    pub edge: EdgeId,
    pub t: f64,
    /// Grid value at the finest mesh.
    pub finest: Complex64,
    /// Richardson combination of the two finest meshes.
    pub extrapolated: Complex64,
}

/// Frozen oracle output for one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleFixture {
    pub name: String,
    pub instance_hash: String,
    pub spec: ProcessSpec,
    pub seed: Option<u64>,
    pub ms: Vec<usize>,
    pub energies: Vec<f64>,
    pub extrapolated: f64,
    pub observed_order: Option<f64>,
    pub samples: Vec<FixtureSample>,
}

impl OracleFixture {
    /// Samples grid values at `times` (which must be grid points of every
    /// mesh) on all edges. `coarse` is the minimizer one level below the
    /// finest.
    pub fn from_reference(
        name: &str,
        spec: &ProcessSpec,
        tree: &TemporalTree,
        seed: Option<u64>,
        reference: &QpReference,
        coarse: &crate::oracle::QpSolution,
        times: &[f64],
    ) -> Self {
        let fine = &reference.finest;
        let mut samples = Vec::new();
        for id in tree.ids() {
            for &t in times {
                let mf = (t * fine.m as f64).round() as usize;
                let mc = (t * coarse.m as f64).round() as usize;
                let f = fine.value(id, mf);
                let c = coarse.value(id, mc);
                samples.push(FixtureSample {
                    edge: id,
                    t,
                    finest: f,
                    extrapolated: (f * 4.0 - c) / 3.0,
                });
            }
        }
        Self {
            name: name.to_string(),
            instance_hash: instance_hash(tree),
            spec: spec.clone(),
            seed,
            ms: reference.ms.clone(),
            energies: reference.energies.clone(),
            extrapolated: reference.extrapolated,
            observed_order: reference.observed_order,
            samples,
        }
    }
}

/// Frozen truncation study for a generated state set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationFixture {
    pub name: String,
    pub generator: StateGenerator,
    pub template: ProcessSpec,
    pub report: TruncationReport,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_git_blob_format() {
        // `printf 'hello\n' | git hash-object --stdin` with the sha256 object format
        assert_eq!(
            content_hash(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
        assert_eq!(content_hash(b""), content_hash(b""));
        assert_ne!(content_hash(b"a"), content_hash(b"b"));
    }
}

//! Regenerates the oracle fixtures under `tests/fixtures/`.
//!
//! cargo run -p ttc-core --example make_fixtures --release

use std::path::PathBuf;
use std::sync::Arc;

use ttc_core::export::{OracleFixture, TruncationFixture};
use ttc_core::oracle::{converge_generator, qp_minimize, qp_reference, DiscretizedInstance};
use ttc_core::process::{Distribution, ProbRule, StateGenerator, StateRule};
use ttc_core::{build_tree, BoundaryData, Complex64, ProcessSpec};

const MS: [usize; 3] = [250, 500, 1000];
const TIMES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn oracle_fixture(name: &str, spec: &ProcessSpec) -> OracleFixture {
    let tree = Arc::new(build_tree(spec).expect("fixture tree"));
    let data = BoundaryData::from_spec(spec);
    let reference = qp_reference(tree.clone(), &data, &MS).expect("oracle");
    let coarse = qp_minimize(&DiscretizedInstance::new(tree.clone(), MS[MS.len() - 2]).unwrap(), &data).unwrap();
    OracleFixture::from_reference(name, spec, &tree, None, &reference, &coarse, &TIMES)
}

fn main() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    std::fs::create_dir_all(&dir).expect("fixture directory");
    let write = |file: &str, json: String| {
        std::fs::write(dir.join(file), json + "\n").expect("write fixture");
        println!("wrote {file}");
    };

    let canonical = ProcessSpec::new(Distribution::real(&[1.0, 2.0], &[0.5, 0.5]), 2, c(1.0), c(0.0)).with_b_root(c(1.0));
    write("canonical.json", serde_json::to_string_pretty(&oracle_fixture("canonical", &canonical)).unwrap());

    let interval = ProcessSpec::new(Distribution::real(&[1.0], &[1.0]), 2, c(1.0), c(0.0));
    write("interval.json", serde_json::to_string_pretty(&oracle_fixture("interval", &interval)).unwrap());

    let generator = StateGenerator {
        states: StateRule::AffineInverse { base: c(1.0), scale: c(1.0) },
        probs: ProbRule::Geometric { ratio: 0.5 },
        bound: 2.0,
    };
    let template = ProcessSpec::new(Distribution::real(&[1.0], &[1.0]), 2, c(1.0), c(0.0));
    let data = BoundaryData::from_spec(&template);
    let report = converge_generator(&generator, &template, &data, &[2, 4, 8, 16, 32]).expect("truncation study");
    let fixture = TruncationFixture {
        name: "geometric-tail".into(),
        generator,
        template,
        report,
    };
    write("truncation.json", serde_json::to_string_pretty(&fixture).unwrap());
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const CANONICAL: &str = "horizon = 2
states = [[1.0, 0.0], [2.0, 0.0]]
probs = [0.5, 0.5]
b_root = [1.0, 0.0]
phi0 = [1.0, 0.0]
phi1 = [0.0, 0.0]
seed = 11
";

const CONSTANT: &str = "horizon = 3
states = [[0.8, -0.6], [0.8, -0.6]]
probs = [0.3, 0.7]
b_root = [0.8, -0.6]
phi0 = [1.0, 0.5]
phi1 = [-0.5, 0.0]
";

const ZERO: &str = "horizon = 3
states = [1.0, [2.0, 1.0]]
probs = [0.4, 0.6]
phi0 = 0
phi1 = 0
";

const GEOMETRIC: &str = r#"horizon = 2
phi0 = 1.0
phi1 = 0.0
[generator]
states = { kind = "affine_inverse", base = [1.0, 0.0], scale = [1.0, 0.0] }
probs = { kind = "geometric", ratio = 0.5 }
bound = 2.0
[converge]
K_list = [2, 4, 8, 16]
"#;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

struct Case {
    dir: TempDir,
}

impl Case {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), config).unwrap();
        Self { dir }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, cmd: &str, out: &str, extra: &[&str], env: &[(&str, &str)]) -> Output {
        let mut c = Command::new(env!("CARGO_BIN_EXE_ttc"));
        c.arg(cmd)
            .arg("--config")
            .arg(self.dir.path().join("run.toml"))
            .arg("--out")
            .arg(self.out(out))
            .args(extra);
        for var in ["TTC_RESIDUAL_TOL", "TTC_CERT_TOL", "TTC_PLAYBACK_TOL", "TTC_EDGE_BUDGET"] {
            c.env_remove(var);
        }
        c.envs(env.iter().copied());
        c.output().unwrap()
    }

    fn json(&self, out: &str, file: &str) -> Value {
        serde_json::from_slice(&std::fs::read(self.out(out).join(file)).unwrap()).unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn zero_data_solve() {
    let case = Case::new(ZERO);
    let o = case.run("solve", "out", &["--seed", "3"], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = case.json("out", "report.json");
    assert_eq!(report["energy"], 0.0);
    assert_eq!(report["empirical_c"], Value::Null);
    assert_eq!(report["root_defaulted"], true);
    for file in ["tree.json", "trajectory.csv", "coefficients.csv", "controls.csv", "manifest.json"] {
        assert!(case.out("out").join(file).is_file(), "{file}");
    }
    let manifest = case.json("out", "manifest.json");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["seed_source"], "flag");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 5);
}

#[test]
fn constant_coefficients_are_interval_equivalent() {
    let case = Case::new(CONSTANT);
    assert_eq!(code(&case.run("solve", "out", &[], &[])), 0);
    assert_eq!(case.json("out", "report.json")["interval_equivalent"], true);
    assert_eq!(case.json("out", "manifest.json")["seed_source"], "random");

    let canonical = Case::new(CANONICAL);
    assert_eq!(code(&canonical.run("solve", "out", &[], &[])), 0);
    assert_eq!(canonical.json("out", "report.json")["interval_equivalent"], false);
}

#[test]
fn fixture_comparison() {
    let fixture = fixture_dir().join("canonical.json");
    let config = format!("{CANONICAL}[solve]\nfixture = {:?}\n", fixture.display().to_string());
    let case = Case::new(&config);
    let o = case.run("solve", "out", &[], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = case.json("out", "report.json");
    assert!(report["fixture"]["relative_error"].as_f64().unwrap() <= 1e-4);
    let manifest = case.json("out", "manifest.json");
    assert_eq!(manifest["fixtures"][0]["hash"].as_str().unwrap().len(), 64);

    // same fixture, different instance
    let other = Case::new(&config.replace("phi0 = [1.0, 0.0]", "phi0 = [2.0, 0.0]").replace("b_root = [1.0, 0.0]", "b_root = 3.0"));
    assert_eq!(code(&other.run("solve", "out", &[], &[])), 1);
}

#[test]
fn runs_are_reproducible() {
    let case = Case::new(CANONICAL);
    for out in ["a", "b"] {
        assert_eq!(code(&case.run("verify", out, &[], &[])), 0);
        assert_eq!(code(&case.run("playback", &format!("{out}-p"), &[], &[])), 0);
    }
    for (a, b, file) in [("a", "b", "verify.json"), ("a-p", "b-p", "playback.json"), ("a-p", "b-p", "path.csv")] {
        let x = std::fs::read(case.out(a).join(file)).unwrap();
        let y = std::fs::read(case.out(b).join(file)).unwrap();
        assert_eq!(x, y, "{file}");
    }
    assert_eq!(case.json("a", "manifest.json"), case.json("b", "manifest.json"));
}

#[test]
fn residual_tolerance_override_breaches() {
    let case = Case::new(CANONICAL);
    let o = case.run("solve", "out", &[], &[("TTC_RESIDUAL_TOL", "1e-30")]);
    assert_eq!(code(&o), 2);
    assert_eq!(case.json("out", "report.json")["residual_pass"], false);
    assert_eq!(case.json("out", "manifest.json")["tolerances"]["residual"], 1e-30);
    assert_eq!(code(&case.run("solve", "bad", &[], &[("TTC_RESIDUAL_TOL", "tiny")])), 1);
}

#[test]
fn playback_cases() {
    let zero = Case::new(ZERO);
    assert_eq!(code(&zero.run("playback", "out", &["--seed", "5"], &[])), 0);
    assert_eq!(zero.json("out", "playback.json")["terminal_error"], 0.0);

    let constant = Case::new(&format!("{CONSTANT}[playback]\nchoices = [1, 0]\nexhaustive = true\n"));
    let o = constant.run("playback", "out", &[], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report = constant.json("out", "playback.json");
    assert_eq!(report["sampled"], false);
    assert_eq!(report["exhaustive"]["leaves"], 4);
    assert!(report["exhaustive"]["energy_identity_gap"].as_f64().unwrap() <= 1e-10);

    let canonical = Case::new(CANONICAL);
    assert_eq!(code(&canonical.run("playback", "out", &[], &[])), 0);
    let report = canonical.json("out", "playback.json");
    assert!(report["terminal_error"].as_f64().unwrap() <= 1e-10);
    let csv = std::fs::read_to_string(canonical.out("out").join("path.csv")).unwrap();
    assert!(csv.starts_with("t,re_y,im_y,re_u,im_u\n"));

    let invalid = Case::new(&format!("{CANONICAL}[playback]\nchoices = [4]\n"));
    let o = invalid.run("playback", "out", &[], &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains('4'));
}

#[test]
fn verify_cases() {
    let small = "[verify]\ntrials = 30\nmesh = [20, 40]\napriori_samples = 40\n";
    let zero = Case::new(&format!("{ZERO}{small}"));
    assert_eq!(code(&zero.run("verify", "out", &[], &[])), 0);

    let canonical = Case::new(CANONICAL);
    let o = canonical.run("verify", "out", &[], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report = canonical.json("out", "verify.json");
    assert_eq!(report["operator"]["reports"].as_array().unwrap().len(), 3);
    assert_eq!(report["certificate"]["trials"], 100);

    let corrupt = Case::new(&format!("{CANONICAL}[verify]\ncorrupt = 1e-3\n"));
    assert_eq!(code(&corrupt.run("verify", "out", &[], &[])), 2);
    let report = corrupt.json("out", "verify.json");
    assert_eq!(report["certificate"]["pass"], false);
    assert_eq!(report["pass"], false);
    assert!(corrupt.out("out").join("manifest.json").is_file());
}

#[test]
fn converge_cases() {
    let flat = Case::new(&format!("{CONSTANT}[converge]\nK_list = [1, 2]\n"));
    assert_eq!(code(&flat.run("converge", "out", &[], &[])), 0);
    assert!(flat.json("out", "converge.json")["spread"].as_f64().unwrap() <= 1e-12);

    let single = Case::new(&format!("{CANONICAL}[converge]\nK_list = [1]\n"));
    assert_eq!(code(&single.run("converge", "out", &[], &[])), 0);
    let csv = std::fs::read_to_string(single.out("out").join("converge.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("K,edges,energy,difference\n"));

    let geometric = Case::new(GEOMETRIC);
    assert_eq!(code(&geometric.run("converge", "out", &[], &[])), 0);
    assert_eq!(geometric.json("out", "converge.json")["strictly_decreasing"], true);

    let o = geometric.run("converge", "budget", &[], &[("TTC_EDGE_BUDGET", "10")]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("too large"));
}

#[test]
fn usage_and_config_errors() {
    let broken = Case::new("horizon = 2\nstates = [1.0]\n");
    assert_eq!(code(&broken.run("solve", "out", &[], &[])), 1);
    let missing = Command::new(env!("CARGO_BIN_EXE_ttc")).arg("solve").output().unwrap();
    assert_eq!(code(&missing), 1);
    let absent = Case::new(&format!("{CANONICAL}[solve]\nfixture = \"nowhere.json\"\n"));
    assert_eq!(code(&absent.run("solve", "out", &[], &[])), 1);
}

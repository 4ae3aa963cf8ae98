use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;
use ttc_core::bvp::{apriori_sweep, interval_gap, perturb_c2, AprioriReport, Residuals, SolveError};
use ttc_core::control::{optimality_certificate, playback, playback_all, CertificateReport, PathSampler};
use ttc_core::export::{
    coefficients_csv, content_hash, controls_csv, instance_hash, playback_csv, trajectory_csv, tree_json,
    OracleFixture,
};
use ttc_core::oracle::{converge_truncation_with_budget, operator_report, DiscretizedInstance, OperatorReport, OracleError};
use ttc_core::tree::{build_tree_with_budget, TreeError};
use ttc_core::{extract_controls, solve, BoundaryData, ControlFamily, EdgeId, ScenarioPath, TemporalTree, TreeTrajectory};

use crate::config::{Loaded, RunConfig, Tolerances};

/// Largest operator dimension for which the dense eigenvalue check runs.
pub const OPERATOR_MAX_DIM: usize = 2000;

const DEFAULT_SAMPLES: usize = 20;
const DEFAULT_TRIALS: usize = 100;
const DEFAULT_MESH: [usize; 3] = [50, 100, 200];
const DEFAULT_PAIRS: usize = 10;
const DEFAULT_APRIORI_SAMPLES: usize = 100;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: unreadable or inconsistent config, budget exceeded, bad paths.
    #[error("{0:#}")]
    Config(anyhow::Error),
    /// The numerics broke down (singular system and the like).
    #[error("{0:#}")]
    Numerical(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Config(e.into())
}

fn solve_err(e: SolveError) -> CliError {
    match e {
        SolveError::Data(_) | SolveError::BadOrder(_) => config_err(e),
        _ => CliError::Numerical(e.into()),
    }
}

fn oracle_err(e: OracleError) -> CliError {
    match e {
        OracleError::Tree { .. }
        | OracleError::NotEnoughStates { .. }
        | OracleError::Process(_)
        | OracleError::MeshTooCoarse(_)
        | OracleError::MeshSequence(_) => config_err(e),
        OracleError::Solve(s) => solve_err(s),
        _ => CliError::Numerical(e.into()),
    }
}

fn tree_err(e: TreeError) -> CliError {
    config_err(e)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Flag,
    Config,
    Random,
}

#[derive(Debug, Serialize)]
struct FileHash {
    path: String,
    hash: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
    config_hash: String,
    seed: u64,
    seed_source: SeedSource,
    tolerances: &'a Tolerances,
    instance_hash: &'a Option<String>,
    fixtures: &'a [FileHash],
    outputs: &'a [FileHash],
    pass: bool,
}

/// State shared by all commands: where to write, what was used.
pub struct Run {
    pub command: &'static str,
    pub out: PathBuf,
    pub loaded: Loaded,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub tol: Tolerances,
    instance: Option<String>,
    fixtures: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

impl Run {
    pub fn new(
        command: &'static str,
        out: &Path,
        loaded: Loaded,
        seed: u64,
        seed_source: SeedSource,
        tol: Tolerances,
    ) -> Result<Self, CliError> {
        std::fs::create_dir_all(out)
            .map_err(|e| config_err(anyhow::anyhow!("creating output directory {}: {e}", out.display())))?;
        Ok(Self {
            command,
            out: out.to_path_buf(),
            loaded,
            seed,
            seed_source,
            tol,
            instance: None,
            fixtures: Vec::new(),
            outputs: Vec::new(),
        })
    }

    fn config(&self) -> &RunConfig {
        &self.loaded.config
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| config_err(anyhow::anyhow!("writing {}: {e}", path.display())))?;
        self.outputs.push(FileHash {
            path: name.to_string(),
            hash: content_hash(contents.as_bytes()),
        });
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
        text.push('\n');
        self.write(name, &text)
    }

    fn tree(&mut self) -> Result<(Arc<TemporalTree>, BoundaryData), CliError> {
        let spec = self.config().spec().map_err(config_err)?;
        let tree = Arc::new(build_tree_with_budget(&spec, self.tol.edge_budget).map_err(tree_err)?);
        self.instance = Some(instance_hash(&tree));
        Ok((tree, BoundaryData::from_spec(&spec)))
    }

    /// Writes `manifest.json`; called last so it lists every output.
    pub fn finish(mut self, pass: bool) -> Result<bool, CliError> {
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config: &self.loaded.config,
            config_hash: content_hash(&self.loaded.bytes),
            seed: self.seed,
            seed_source: self.seed_source,
            tolerances: &self.tol,
            instance_hash: &self.instance,
            fixtures: &self.fixtures,
            outputs: &self.outputs,
            pass,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.out.join("manifest.json");
        std::fs::write(&path, text).map_err(|e| config_err(anyhow::anyhow!("writing {}: {e}", path.display())))?;
        self.outputs.clear();
        Ok(pass)
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

fn solve_checked(tree: Arc<TemporalTree>, data: &BoundaryData) -> Result<(TreeTrajectory, ControlFamily), CliError> {
    let traj = solve(tree, data).map_err(solve_err)?;
    let fam = extract_controls(&traj);
    Ok((traj, fam))
}

#[derive(Serialize)]
struct FixtureCheck {
    path: String,
    extrapolated: f64,
    relative_error: f64,
    pass: bool,
}

#[derive(Serialize)]
struct SolveReport {
    edges: usize,
    leaves: usize,
    energy: f64,
    residuals: Residuals,
    scale: f64,
    residual_pass: bool,
    condition: Option<f64>,
    condition_warning: bool,
    /// `‖y‖₁ / (|φ₀| + sup|ψ|)`; absent for zero data.
    empirical_c: Option<f64>,
    interval_equivalent: bool,
    root_defaulted: bool,
    fixture: Option<FixtureCheck>,
    pass: bool,
}

pub fn cmd_solve(mut run: Run) -> Result<bool, CliError> {
    let (tree, data) = run.tree()?;
    let (traj, fam) = solve_checked(tree.clone(), &data)?;
    let samples = run.config().solve.samples.unwrap_or(DEFAULT_SAMPLES);

    run.write("tree.json", &tree_json(&tree))?;
    run.write("trajectory.csv", &trajectory_csv(&traj, samples))?;
    run.write("coefficients.csv", &coefficients_csv(&traj))?;
    run.write("controls.csv", &controls_csv(&fam, samples))?;

    let d = &traj.diagnostics;
    let residual_pass = d.residuals.max() <= run.tol.residual * d.scale;
    let data_size = data.initial.norm() + data.sup_target();
    let empirical_c = if data_size > 0.0 {
        Some(traj.weighted_norm(1).map_err(solve_err)? / data_size)
    } else {
        None
    };
    let interval_equivalent = interval_gap(&traj, samples).is_some_and(|g| g <= run.tol.residual * d.scale);

    let fixture = match run.config().solve.fixture.clone() {
        Some(rel) => Some(check_fixture(&mut run, &rel, &tree, fam.energy)?),
        None => None,
    };
    let pass = residual_pass && fixture.as_ref().is_none_or(|f| f.pass);
    let report = SolveReport {
        edges: tree.edge_count(),
        leaves: tree.leaves().len(),
        energy: fam.energy,
        residuals: d.residuals,
        scale: d.scale,
        residual_pass,
        condition: d.condition,
        condition_warning: d.condition.is_some_and(|c| c > run.tol.condition_warn),
        empirical_c,
        interval_equivalent,
        root_defaulted: tree.root_defaulted(),
        fixture,
        pass,
    };
    run.write_json("report.json", &report)?;

    println!("edges: {}", report.edges);
    println!("J = {:.12e}", report.energy);
    println!(
        "residuals: max {:.3e} (scale {:.3e}) {}",
        d.residuals.max(),
        d.scale,
        verdict(residual_pass)
    );
    if report.condition_warning {
        println!("warning: condition estimate {:.3e}", d.condition.unwrap_or(f64::NAN));
    }
    if report.root_defaulted {
        println!("note: b_root not given, using the first state");
    }
    println!("interval-equivalent: {interval_equivalent}");
    if let Some(f) = &report.fixture {
        println!("fixture: relative error {:.3e} {}", f.relative_error, verdict(f.pass));
    }
    run.finish(pass)
}

fn check_fixture(run: &mut Run, rel: &Path, tree: &TemporalTree, energy: f64) -> Result<FixtureCheck, CliError> {
    let path = run.loaded.dir.join(rel);
    let bytes = std::fs::read(&path).map_err(|e| config_err(anyhow::anyhow!("reading {}: {e}", path.display())))?;
    let fixture: OracleFixture = serde_json::from_slice(&bytes)
        .map_err(|e| config_err(anyhow::anyhow!("parsing fixture {}: {e}", path.display())))?;
    if fixture.instance_hash != instance_hash(tree) {
        return Err(config_err(anyhow::anyhow!(
            "fixture {} was computed for a different instance",
            path.display()
        )));
    }
    run.fixtures.push(FileHash {
        path: rel.display().to_string(),
        hash: content_hash(&bytes),
    });
    let relative_error = (energy - fixture.extrapolated).abs() / fixture.extrapolated.abs().max(f64::MIN_POSITIVE);
    Ok(FixtureCheck {
        path: rel.display().to_string(),
        extrapolated: fixture.extrapolated,
        relative_error,
        pass: relative_error <= run.tol.fixture,
    })
}

#[derive(Serialize)]
struct Exhaustive {
    leaves: usize,
    max_terminal_error: f64,
    /// `|Σ α_leaf E_leaf - J| / J`; checked only when the leaf weights sum to one.
    energy_identity_gap: f64,
    energy_identity_checked: bool,
    pass: bool,
}

#[derive(Serialize)]
struct PlaybackReport {
    path: ScenarioPath,
    sampled: bool,
    terminal: Complex64,
    target: Complex64,
    terminal_error: f64,
    realized_energy: f64,
    scale: f64,
    exhaustive: Option<Exhaustive>,
    pass: bool,
}

pub fn cmd_playback(mut run: Run) -> Result<bool, CliError> {
    let (tree, data) = run.tree()?;
    let (traj, fam) = solve_checked(tree.clone(), &data)?;
    let cfg = run.config().playback.clone();
    let (path, sampled) = match &cfg.choices {
        Some(choices) => (ScenarioPath::from_choices(&tree, choices).map_err(config_err)?, false),
        None => (PathSampler::new(run.seed).sample(&tree, 0), true),
    };
    let rec = playback(&fam, &traj, &path).map_err(config_err)?;
    let scale = traj.scale();
    let limit = run.tol.playback * scale;
    run.write("path.csv", &playback_csv(&rec, cfg.samples.unwrap_or(DEFAULT_SAMPLES)))?;

    let exhaustive = cfg.exhaustive.then(|| {
        let records = playback_all(&fam, &traj);
        let max_terminal_error = records.iter().map(|r| r.terminal_error).fold(0.0, f64::max);
        let weights: f64 = tree.leaves().iter().map(|&l| tree.alpha(l)).sum();
        let weighted: f64 = records.iter().map(|r| tree.alpha(r.path.leaf()) * r.realized_energy).sum();
        let energy_identity_gap = if fam.energy > 0.0 {
            (weighted - fam.energy).abs() / fam.energy
        } else {
            weighted.abs()
        };
        let energy_identity_checked = (weights - 1.0).abs() <= 1e-12;
        let pass = max_terminal_error <= limit && (!energy_identity_checked || energy_identity_gap <= 1e-10);
        Exhaustive {
            leaves: records.len(),
            max_terminal_error,
            energy_identity_gap,
            energy_identity_checked,
            pass,
        }
    });
    let pass = rec.terminal_error <= limit && exhaustive.as_ref().is_none_or(|e| e.pass);
    let choices: Vec<String> = path.branch_choices.iter().map(usize::to_string).collect();
    let report = PlaybackReport {
        path,
        sampled,
        terminal: rec.terminal,
        target: rec.target,
        terminal_error: rec.terminal_error,
        realized_energy: rec.realized_energy,
        scale,
        exhaustive,
        pass,
    };
    run.write_json("playback.json", &report)?;

    println!("choices: [{}]", choices.join(", "));
    println!("terminal error: {:.3e} {}", report.terminal_error, verdict(report.terminal_error <= limit));
    if let Some(e) = &report.exhaustive {
        println!(
            "all {} leaves: max terminal error {:.3e}, energy identity gap {:.3e} {}",
            e.leaves,
            e.max_terminal_error,
            e.energy_identity_gap,
            verdict(e.pass)
        );
    }
    run.finish(pass)
}

#[derive(Serialize)]
struct CertificateCheck {
    #[serde(flatten)]
    report: CertificateReport,
    corrupted_by: Option<f64>,
    pass: bool,
}

#[derive(Serialize)]
struct OperatorCheck {
    reports: Vec<OperatorReport>,
    /// Meshes left out because the dense eigenvalue problem would be too big.
    skipped: Vec<usize>,
    defect_decreasing: bool,
    positive: bool,
    pass: bool,
}

#[derive(Serialize)]
struct AprioriCheck {
    #[serde(flatten)]
    report: AprioriReport,
    relative_change: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    certificate: CertificateCheck,
    operator: OperatorCheck,
    apriori: AprioriCheck,
    pass: bool,
}

pub fn cmd_verify(mut run: Run) -> Result<bool, CliError> {
    let (tree, data) = run.tree()?;
    let (mut traj, mut fam) = solve_checked(tree.clone(), &data)?;
    let cfg = run.config().verify.clone();
    if let Some(delta) = cfg.corrupt {
        traj = perturb_c2(&traj, EdgeId::ROOT, Complex64::new(delta, 0.0));
        fam = extract_controls(&traj);
    }

    let report = optimality_certificate(&fam, &traj, cfg.trials.unwrap_or(DEFAULT_TRIALS), run.seed);
    let cert_pass = report.max_first_order_ratio <= run.tol.certificate
        && report.energy_pass
        && report.feasibility_residual <= run.tol.residual;
    let certificate = CertificateCheck {
        report,
        corrupted_by: cfg.corrupt,
        pass: cert_pass,
    };

    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for &m in cfg.mesh.as_deref().unwrap_or(&DEFAULT_MESH) {
        if tree.edge_count() * m.saturating_sub(1) > OPERATOR_MAX_DIM {
            skipped.push(m);
            continue;
        }
        let inst = DiscretizedInstance::new(tree.clone(), m).map_err(oracle_err)?;
        reports.push(operator_report(&inst, cfg.pairs.unwrap_or(DEFAULT_PAIRS), run.seed).map_err(oracle_err)?);
    }
    // Symmetric matrices give a defect at rounding level that need not decrease.
    let defect_decreasing = reports.iter().all(|r| r.form_defect <= 1e-12)
        || reports.windows(2).all(|w| w[1].form_defect < w[0].form_defect);
    let positive = reports.iter().all(|r| r.min_eigenvalue.re > 0.0);
    let operator = OperatorCheck {
        pass: defect_decreasing && positive,
        reports,
        skipped,
        defect_decreasing,
        positive,
    };

    let samples = cfg.apriori_samples.unwrap_or(DEFAULT_APRIORI_SAMPLES);
    let report = apriori_sweep(tree.clone(), samples, run.seed).map_err(solve_err)?;
    let relative_change = report.relative_change();
    let apriori = AprioriCheck {
        pass: relative_change.abs() <= run.tol.apriori,
        report,
        relative_change,
    };

    let pass = certificate.pass && operator.pass && apriori.pass;
    let summary = VerifyReport {
        certificate,
        operator,
        apriori,
        pass,
    };
    run.write_json("verify.json", &summary)?;

    let c = &summary.certificate;
    println!(
        "certificate: first-order ratio {:.3e}, min energy gain {:.3e}, feasibility {:.3e} {}",
        c.report.max_first_order_ratio,
        c.report.min_energy_gain,
        c.report.feasibility_residual,
        verdict(c.pass)
    );
    let o = &summary.operator;
    let defects: Vec<String> = o.reports.iter().map(|r| format!("M={} {:.3e}", r.m, r.form_defect)).collect();
    let min_ev = o.reports.iter().map(|r| r.min_eigenvalue.re).fold(f64::INFINITY, f64::min);
    println!(
        "operator: defect [{}], min eigenvalue {:.4e}{} {}",
        defects.join(", "),
        min_ev,
        if o.skipped.is_empty() { String::new() } else { format!(", skipped M {:?}", o.skipped) },
        verdict(o.pass)
    );
    println!(
        "a priori: max ratio {:.4e}, doubled {:.4e}, change {:.2}% {}",
        summary.apriori.report.max_ratio,
        summary.apriori.report.max_ratio_doubled,
        100.0 * summary.apriori.relative_change,
        verdict(summary.apriori.pass)
    );
    run.finish(pass)
}

#[derive(Serialize)]
struct ConvergeReport {
    rows: Vec<ttc_core::oracle::TruncationRow>,
    differences: Vec<f64>,
    strictly_decreasing: bool,
    spread: f64,
}

pub fn cmd_converge(mut run: Run) -> Result<bool, CliError> {
    let cfg = run.config().clone();
    let k_list = match (&cfg.converge.k_list, &cfg.states) {
        (Some(ks), _) => ks.clone(),
        (None, Some(states)) => (1..=states.len()).collect(),
        (None, None) => return Err(config_err(anyhow::anyhow!("a generator needs `converge.K_list`"))),
    };
    let needed = k_list.iter().copied().max().unwrap_or(0);
    let spec = cfg.study_spec(needed).map_err(config_err)?;
    let data = BoundaryData::from_spec(&spec);
    let report = converge_truncation_with_budget(&spec, &data, &k_list, run.tol.edge_budget).map_err(oracle_err)?;

    let differences = report.differences();
    let mut csv = String::from("K,edges,energy,difference\n");
    for (i, row) in report.rows.iter().enumerate() {
        let diff = if i == 0 { String::new() } else { format!("{:e}", differences[i - 1]) };
        let _ = writeln!(csv, "{},{},{:e},{diff}", row.k, row.edges, row.energy);
    }
    run.write("converge.csv", &csv)?;
    let summary = ConvergeReport {
        strictly_decreasing: report.strictly_decreasing(),
        spread: report.spread(),
        differences,
        rows: report.rows,
    };
    run.write_json("converge.json", &summary)?;

    println!("{:>6} {:>10} {:>22} {:>12}", "K", "edges", "J", "|dJ|");
    for (i, row) in summary.rows.iter().enumerate() {
        let diff = if i == 0 { String::new() } else { format!("{:.3e}", summary.differences[i - 1]) };
        println!("{:>6} {:>10} {:>22.15e} {:>12}", row.k, row.edges, row.energy, diff);
    }
    println!("differences strictly decreasing: {}", summary.strictly_decreasing);
    run.finish(true)
}

mod common;

use std::sync::Arc;

use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ttc_core::bvp::{assemble, solve_interval, solve_with, RowKind, SolveOptions};
use ttc_core::export::instance_hash;
use ttc_core::process::Distribution;
use ttc_core::{build_tree, extract_controls, solve, BoundaryData, EdgeId, ProcessSpec, Targets};

#[test]
fn canonical_matches_oracle_fixture() {
    let fixture = oracle_fixture("canonical.json");
    let (tree, data) = instance(&fixture.spec);
    assert_eq!(fixture.instance_hash, instance_hash(&tree));
    let traj = solve(tree, &data).unwrap();
    let size = fixture.samples.iter().map(|s| s.finest.norm()).fold(0.0, f64::max);
    for s in &fixture.samples {
        let y = traj.edge(s.edge).value(s.t);
        assert!((y - s.finest).norm() <= 1e-4 * size, "{s:?}");
        assert!((y - s.extrapolated).norm() <= 1e-8 * size, "{s:?}");
    }
    let j = extract_controls(&traj).energy;
    assert!((j - fixture.extrapolated).abs() <= 1e-4 * fixture.extrapolated);
    assert!((j - fixture.extrapolated).abs() <= 1e-10);
}

#[test]
fn interval_matches_oracle_fixture() {
    let fixture = oracle_fixture("interval.json");
    let sol = solve_interval(c(1.0, 0.0), 2, c(1.0, 0.0), c(0.0, 0.0));
    let at_one = fixture
        .samples
        .iter()
        .find(|s| s.edge == EdgeId(1) && s.t == 1.0)
        .unwrap();
    let (y1, _) = sol.eval(1.0).unwrap();
    assert!((y1 - at_one.extrapolated).norm() <= 1e-6);
    let e4 = 4f64.exp();
    assert!((y1.re - (e4 * (-1f64).exp() - 1f64.exp()) / (e4 - 1.0)).abs() <= 1e-14);
    assert!((sol.energy() - fixture.extrapolated).abs() <= 1e-8);
}

#[test]
fn interval_special_cases() {
    let line = solve_interval(c(0.0, 0.0), 3, c(1.0, 0.0), c(4.0, 0.0));
    for k in 0..=6 {
        let t = 0.5 * k as f64;
        assert!((line.eval(t).unwrap().0 - c(1.0 + t, 0.0)).norm() < 1e-14);
    }
    let zero = solve_interval(c(0.5, 2.0), 2, c(0.0, 0.0), c(0.0, 0.0));
    assert_eq!(zero.eval(1.3).unwrap().0, c(0.0, 0.0));
}

#[test]
fn system_shapes() {
    let single = ProcessSpec::new(Distribution::real(&[0.5], &[1.0]), 1, c(1.0, 0.0), c(2.0, 0.0));
    let (tree, data) = instance(&single);
    let sys = assemble(&tree, &data);
    assert_eq!(sys.dim, 2);
    assert_eq!((sys.count(RowKind::Root), sys.count(RowKind::Leaf)), (1, 1));

    let (tree, data) = instance(&canonical_spec());
    let sys = assemble(&tree, &data);
    assert_eq!(sys.dim, 6);
    assert_eq!(sys.count(RowKind::Root), 1);
    assert_eq!(sys.count(RowKind::Continuity), 2);
    assert_eq!(sys.count(RowKind::Leaf), 2);
    assert_eq!(sys.count(RowKind::Kirchhoff), 1);
}

#[test]
fn row_count_on_large_trees() {
    for (k, horizon) in [(3, 9), (2, 13), (10, 4), (4, 6), (7, 5)] {
        let states: Vec<f64> = (0..k).map(|l| 0.5 - 0.2 * l as f64).collect();
        let spec = ProcessSpec::new(Distribution::real(&states, &vec![1.0 / k as f64; k]), horizon, c(1.0, 0.0), c(0.0, 0.0));
        let (tree, data) = instance(&spec);
        assert!(tree.edge_count() <= 12_000);
        let sys = assemble(&tree, &data);
        let e = tree.edge_count();
        assert_eq!(sys.dim, 2 * e);
        assert_eq!(sys.rows.len(), 2 * e);
        assert_eq!(sys.count(RowKind::Leaf) + sys.count(RowKind::Kirchhoff), e);
        assert_eq!(sys.count(RowKind::Root) + sys.count(RowKind::Continuity), e);
    }
}

#[test]
fn per_leaf_targets() {
    let spec = ProcessSpec::new(Distribution::real(&[1.0, -0.5], &[0.4, 0.6]), 3, c(1.0, 0.0), c(0.0, 0.0))
        .with_targets(Targets::PerLeaf(vec![c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 2.0), c(3.0, -1.0)]));
    let (tree, data) = instance(&spec);
    let traj = solve(tree.clone(), &data).unwrap();
    for (rank, &leaf) in tree.leaves().iter().enumerate() {
        assert!((traj.edge(leaf).value(1.0) - data.targets.at(rank)).norm() < 1e-12);
    }
    let wrong = BoundaryData { initial: c(1.0, 0.0), targets: Targets::PerLeaf(vec![c(0.0, 0.0); 3]) };
    assert!(solve(tree, &wrong).is_err());
}

#[test]
fn permuted_ordering_gives_same_trajectory() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..8 {
        let spec = random_spec(200 + seed, 4.0, 4, 3);
        let (tree, data) = instance(&spec);
        let base = solve(tree.clone(), &data).unwrap();
        let mut order: Vec<EdgeId> = tree.ids().collect();
        order.shuffle(&mut rng);
        let options = SolveOptions { edge_order: Some(order), ..SolveOptions::default() };
        let permuted = solve_with(tree.clone(), &data, &options).unwrap();
        assert!(base.max_value_gap(&permuted, 20) <= 1e-10 * base.scale().max(1.0));
        let recursive = solve_with(tree, &data, &SolveOptions::recursive()).unwrap();
        assert!(base.max_value_gap(&recursive, 20) <= 1e-10 * base.scale().max(1.0));
    }
}

#[test]
fn same_level_symmetry_for_constant_coefficient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = constant_spec(c(0.6, -1.1), 3, 4, random_probs(&mut rng, 3));
    let (tree, data) = instance(&spec);
    let traj = solve(tree.clone(), &data).unwrap();
    for level in 1..=4 {
        let edges = tree.level(level);
        let first = traj.edge(edges[0].id);
        for e in edges {
            for k in 0..=10 {
                let t = k as f64 / 10.0;
                assert!((traj.edge(e.id).value(t) - first.value(t)).norm() <= 1e-10);
            }
        }
    }
}

#[test]
fn straight_line_on_any_tree() {
    let spec = ProcessSpec::new(Distribution::real(&[0.0; 3], &[0.2, 0.3, 0.5]), 4, c(0.0, 0.0), c(1.0, 0.0));
    let (tree, data) = instance(&spec);
    let traj = solve(tree.clone(), &data).unwrap();
    for e in tree.edges() {
        for k in 0..=4 {
            let t = k as f64 / 4.0;
            let want = (e.depth as f64 - 1.0 + t) / 4.0;
            assert!((traj.edge(e.id).value(t) - c(want, 0.0)).norm() <= 1e-12);
        }
    }
}

#[test]
fn weighted_norms() {
    let (tree, data) = instance(&random_spec(31, 3.0, 3, 3));
    let traj = solve(tree.clone(), &data).unwrap();
    for (s, h1) in [(0u32, false), (1, true)] {
        let quad: f64 = tree
            .edges()
            .iter()
            .map(|e| {
                let y = traj.edge(e.id);
                e.alpha
                    * simpson(
                        |t| {
                            let (v, d) = y.eval(t).unwrap();
                            v.norm_sqr() + if h1 { d.norm_sqr() } else { 0.0 }
                        },
                        20_000,
                    )
            })
            .sum();
        let norm = traj.weighted_norm(s).unwrap();
        assert!((norm * norm - quad).abs() <= 1e-8 * quad);
    }
    assert!(traj.weighted_norm(2).is_err());
    let zero = solve(Arc::new(build_tree(&canonical_spec()).unwrap()), &BoundaryData::uniform(c(0.0, 0.0), c(0.0, 0.0))).unwrap();
    assert_eq!(zero.weighted_norm(1).unwrap(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn superposition(seed in any::<u64>(), k in complex_unit(), l in complex_unit()) {
        let spec = random_spec(seed, 4.0, 3, 3);
        let (tree, data) = instance(&spec);
        let zero = c(0.0, 0.0);
        let full = solve(tree.clone(), &BoundaryData { initial: k * data.initial, targets: data.targets.scaled(l) }).unwrap();
        let a = solve(tree.clone(), &BoundaryData { initial: data.initial, targets: data.targets.scaled(zero) }).unwrap();
        let b = solve(tree.clone(), &BoundaryData { initial: zero, targets: data.targets.clone() }).unwrap();
        for id in tree.ids() {
            for s in 0..=8 {
                let t = s as f64 / 8.0;
                let sum = k * a.edge(id).value(t) + l * b.edge(id).value(t);
                prop_assert!((sum - full.edge(id).value(t)).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn residuals_within_tolerance(seed in any::<u64>()) {
        let spec = random_spec(seed, 6.0, 5, 3);
        let (tree, data) = instance(&spec);
        let traj = solve(tree, &data).unwrap();
        prop_assert!(traj.diagnostics.within_tolerance(), "{:?}", traj.diagnostics);
        prop_assert!(!traj.diagnostics.condition_warning);
    }
}

fn complex_unit() -> impl Strategy<Value = ttc_core::Complex64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| c(re, im))
}

#[test]
fn interval_gap_only_for_constant_coefficients() {
    let mut rng = rand::SeedableRng::seed_from_u64(8);
    let (tree, data) = instance(&constant_spec(c(0.7, -0.2), 2, 3, random_probs(&mut rng, 2)));
    let gap = ttc_core::bvp::interval_gap(&solve(tree, &data).unwrap(), 20).unwrap();
    assert!(gap <= 1e-10);
    let (tree, data) = instance(&canonical_spec());
    assert!(ttc_core::bvp::interval_gap(&solve(tree, &data).unwrap(), 20).is_none());
}

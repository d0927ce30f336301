use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use wlingam::bootstrap::{percentile_interval, resample_indices};
use wlingam::effects::{build_stacked, total_effect, NodeId, StackedSystem};
use wlingam::fit::predict_one_step;
use wlingam::mask::{build_default_mask, validate_mask, BlockOrder};
use wlingam::panel::{PanelSchema, Role, ValueType, Variable};
use wlingam::simulator::{forward_query, goal_seek, EffectBundle, QueryMode, SimQuery, SimStatus};
use wlingam::{fixture, synth};

/// Random DAG on `n` nodes: strictly lower triangular under a permutation.
fn dag() -> impl Strategy<Value = Array2<f64>> {
    (2usize..=10)
        .prop_flat_map(|n| {
            (
                Just(n),
                Just((0..n).collect::<Vec<_>>()).prop_shuffle(),
                prop::collection::vec(prop_oneof![2 => Just(0.0), 3 => -1.5f64..1.5], n * n),
            )
        })
        .prop_map(|(n, perm, vals)| {
            let mut a = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..i {
                    a[[perm[i], perm[j]]] = vals[i * n + j];
                }
            }
            a
        })
}

fn system(a: Array2<f64>) -> StackedSystem {
    let nodes = (0..a.nrows()).map(|i| NodeId::new(i, 0)).collect();
    StackedSystem::from_matrix(nodes, a).unwrap()
}

fn neumann(a: &Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let mut sum = Array2::eye(n);
    let mut term = Array2::eye(n);
    for _ in 0..n {
        term = a.dot(&term);
        sum += &term;
    }
    sum
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn checkup_layout_inverse_matches_neumann_series() {
    let spec = synth::paper_shaped(10, 0).unwrap();
    let sys = build_stacked(&spec.true_model, false).unwrap();
    let a = sys.a().clone();
    let n = a.nrows();
    let mut power = a.clone();
    for _ in 1..n {
        power = power.dot(&a);
    }
    assert!(power.iter().all(|&x| x == 0.0), "A^N must vanish");
    let (inv, series) = (sys.inverse(), neumann(&a));
    for (x, y) in inv.iter().zip(series.iter()) {
        assert!(close(*x, *y, 1e-12), "{x} vs {y}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn inverse_matches_neumann_series(a in dag()) {
        let sys = system(a.clone());
        let (inv, series) = (sys.inverse(), neumann(&a));
        for (x, y) in inv.iter().zip(series.iter()) {
            prop_assert!(close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn total_effect_is_affine_in_one_edge(a in dag(), pick in any::<prop::sample::Index>(), c in -2.0f64..2.0) {
        let edges: Vec<(usize, usize)> = a.indexed_iter().filter(|(_, v)| **v != 0.0).map(|(ij, _)| ij).collect();
        prop_assume!(!edges.is_empty());
        let (child, parent) = edges[pick.index(edges.len())];
        let n = a.nrows();
        let at = |coef: f64| {
            let mut m = a.clone();
            m[[child, parent]] = coef;
            system(m).inverse()
        };
        let (f0, f1, fc) = (at(0.0), at(1.0), at(c));
        for s in 0..n {
            for t in 0..n {
                let predicted = f0[[t, s]] + c * (f1[[t, s]] - f0[[t, s]]);
                prop_assert!(close(fc[[t, s]], predicted, 1e-9));
            }
        }
    }

    #[test]
    fn effects_without_direct_edge_route_through_parents(a in dag()) {
        let sys = system(a.clone());
        let n = a.nrows();
        for s in 0..n {
            let eff = sys.effects_from(s);
            for t in 0..n {
                if t == s || a[[t, s]] != 0.0 {
                    continue;
                }
                let via: f64 = (0..n).map(|p| a[[t, p]] * eff[p]).sum();
                let te = total_effect(&sys, NodeId::new(s, 0), NodeId::new(t, 0)).unwrap().value;
                prop_assert!(close(te, via, 1e-12));
            }
        }
    }

    #[test]
    fn one_step_prediction_solves_the_structural_equations(
        x_prev in prop::collection::vec(-5.0f64..5.0, 5),
        z in prop::collection::vec(0.0f64..1.0, 8),
        v in 0.0f64..1.0,
        t in 2usize..4,
    ) {
        let model = fixture::model().unwrap();
        let (xp, zz) = (Array1::from(x_prev), Array1::from(z));
        let x = predict_one_step(&model, t, xp.view(), v, zz.view(), zz.view(), None).unwrap();
        let eq = model.at(t);
        let mut rhs = Array1::from(eq.intercepts.clone()) + &(Array1::from(eq.alpha.clone()) * v);
        rhs += &eq.b_within.dot(&x);
        rhs += &eq.b_cross.dot(&xp);
        rhs += &eq.c_within.dot(&zz);
        rhs += &eq.c_cross.dot(&zz);
        for (a, b) in x.iter().zip(rhs.iter()) {
            prop_assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn default_mask_is_admissible(p in 1usize..5, q in 0usize..4, t in 2usize..5, baseline in any::<bool>()) {
        let mut vars = vec![Variable::new("v", Role::Intervention, ValueType::Binary)];
        vars.extend((0..p).map(|i| Variable::new(format!("x{i}"), Role::Outcome, ValueType::Continuous)));
        vars.extend((0..q).map(|i| Variable::new(format!("z{i}"), Role::ExogenousInput, ValueType::Binary)));
        if baseline {
            vars.push(Variable::new("w", Role::BaselineOnly, ValueType::Categorical));
        }
        let schema = PanelSchema::new(vars, (0..t as i32).collect()).unwrap();
        let mask = build_default_mask(&schema, &BlockOrder::coarse(&schema)).unwrap();
        prop_assert!(validate_mask(&mask, &schema).unwrap().is_admissible());
    }

    #[test]
    fn resampling_depends_only_on_seed_and_replicate(seed in any::<u64>(), b in 0usize..1000, n in 1usize..200) {
        let a = resample_indices(seed, b, n);
        prop_assert_eq!(&a, &resample_indices(seed, b, n));
        prop_assert!(a.iter().all(|&i| i < n));
    }

    #[test]
    fn percentile_interval_is_ordered(draws in prop::collection::vec(-10.0f64..10.0, 1..300), level in 0.01f64..0.99) {
        let (lo, hi) = percentile_interval(&draws, level);
        prop_assert!(lo <= hi);
    }
}

fn fixture_bundle() -> EffectBundle {
    fixture::bundle(&fixture::model().unwrap()).unwrap()
}

fn query(source: &str, target: &str, lag: usize, mode: QueryMode, x: f64) -> SimQuery {
    SimQuery {
        mode: Some(mode),
        baseline: fixture::typical_profile(),
        source_variable: source.into(),
        target_variable: target.into(),
        horizon: lag,
        forward_value: (mode == QueryMode::Forward).then_some(x),
        desired_target: (mode == QueryMode::GoalSeek).then_some(x),
    }
}

fn cell_strategy() -> impl Strategy<Value = (&'static str, &'static str, usize)> {
    (
        prop::sample::select(vec!["BMI", "Drug-HT", "Health-guidance"]),
        prop::sample::select(vec!["BMI", "SBP", "DBP", "HbA1c", "LDL"]),
        0usize..3,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn forward_is_affine_and_intervals_are_ordered(cell in cell_strategy(), x1 in 15.0f64..40.0, x2 in 15.0f64..40.0) {
        let bundle = fixture_bundle();
        let (s, t, l) = cell;
        let binary = s != "BMI";
        let (x1, x2) = if binary { ((x1 > 27.5) as u8 as f64, (x2 > 27.5) as u8 as f64) } else { (x1, x2) };
        let a = forward_query(&bundle, &query(s, t, l, QueryMode::Forward, x1)).unwrap();
        let b = forward_query(&bundle, &query(s, t, l, QueryMode::Forward, x2)).unwrap();
        prop_assert_eq!(a.status, b.status);
        if a.status == SimStatus::Estimate {
            let base = fixture::typical_profile()[s];
            let (ca, cb) = (a.value.unwrap(), b.value.unwrap());
            if x1 != base {
                prop_assert!(close(cb, ca * (x2 - base) / (x1 - base), 1e-12));
            }
            for iv in [a.interval.unwrap(), b.interval.unwrap()] {
                prop_assert!(iv[0] <= iv[1]);
            }
        } else {
            prop_assert!(a.value.is_none() && a.interval.is_none());
        }
    }

    #[test]
    fn goal_then_forward_is_identity(target in prop::sample::select(vec!["SBP", "DBP", "HbA1c", "LDL"]), lag in 0usize..3, offset in -3.0f64..3.0) {
        let bundle = fixture_bundle();
        let desired = fixture::typical_profile()[target] + offset;
        let goal = goal_seek(&bundle, &query("BMI", target, lag, QueryMode::GoalSeek, desired)).unwrap();
        prop_assume!(goal.status == SimStatus::Estimate);
        let value = goal.value.unwrap();
        let [lo, hi] = goal.interval.unwrap();
        prop_assert!(lo <= value && value <= hi);
        let fwd = forward_query(&bundle, &query("BMI", target, lag, QueryMode::Forward, value)).unwrap();
        // a required BMI outside its plausible range cannot be fed back in
        if fwd.status == SimStatus::InputImplausible {
            prop_assert!(!(10.0..=80.0).contains(&value));
        } else {
            prop_assert!((fwd.level.unwrap() - desired).abs() <= 1e-9);
        }
    }
}

#[test]
fn every_zero_including_cell_is_refused() {
    let bundle = fixture_bundle();
    let mut refused = 0;
    for (l, &lag) in bundle.lags.iter().enumerate() {
        for (s, source) in bundle.sources.iter().enumerate() {
            for (t, target) in bundle.targets.iter().enumerate() {
                let c = bundle.cell(l, s, t);
                if !(c.ci_low <= 0.0 && 0.0 <= c.ci_high) {
                    continue;
                }
                let base = fixture::typical_profile()[source.as_str()];
                let moved = if source == "BMI" { base + 1.0 } else { 1.0 - base };
                let f = forward_query(&bundle, &query(source, target, lag, QueryMode::Forward, moved)).unwrap();
                let g = goal_seek(&bundle, &query(source, target, lag, QueryMode::GoalSeek, 100.0)).unwrap();
                assert_ne!(f.status, SimStatus::Estimate, "{source} -> {target} lag {lag}");
                assert_ne!(g.status, SimStatus::Estimate, "{source} -> {target} lag {lag}");
                refused += 1;
            }
        }
    }
    assert!(refused >= 8, "fixture should contain zero-including cells, found {refused}");
}

#[test]
fn binary_goal_on_fixture_picks_enrolment() {
    let bundle = fixture_bundle();
    let f0 = forward_query(&bundle, &query("Health-guidance", "BMI", 0, QueryMode::Forward, 0.0)).unwrap();
    let f1 = forward_query(&bundle, &query("Health-guidance", "BMI", 0, QueryMode::Forward, 1.0)).unwrap();
    assert!((f0.level.unwrap() - 24.9).abs() < 1e-12);
    assert!((f1.level.unwrap() - 24.771).abs() < 1e-12);
    let g = goal_seek(&bundle, &query("Health-guidance", "BMI", 0, QueryMode::GoalSeek, 24.8)).unwrap();
    assert_eq!(g.setting, Some(1));
    assert!((g.gap.unwrap() - 0.03).abs() < 0.005);
}

#[test]
fn unknown_baseline_key_is_a_request_error() {
    let bundle = fixture_bundle();
    let mut q = query("BMI", "SBP", 0, QueryMode::Forward, 26.0);
    q.baseline = BTreeMap::from([("Weight".to_string(), 70.0)]);
    assert!(forward_query(&bundle, &q).is_err());
}

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::{build_instance, compile_proportionality, equal_split_spec, LinearRelation, Relation};

fn thm3() -> Instance {
    build_instance(&[vec![1.0, 0.0], vec![1.0, 1.0]], None).unwrap()
}

fn split(inst: &Instance, agent: usize) -> ConstraintSet {
    compile_proportionality(&equal_split_spec(inst, agent).unwrap(), inst.m_items()).unwrap()
}

fn run(inst: &Instance, rule: WelfareRule, cons: &[ConstraintSet]) -> SolveReport {
    maximize_welfare(inst, &rule, cons, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap()
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, budgets: bool) -> Instance {
    let values: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.gen_range(0.05..2.0)).collect()).collect();
    let b: Option<Vec<f64>> = budgets.then(|| (0..n).map(|_| rng.gen_range(0.2..2.0)).collect());
    build_instance(&values, b.as_deref()).unwrap()
}

#[test]
fn thm3_nash_unconstrained() {
    let r = run(&thm3(), WelfareRule::Nash, &[]);
    assert_abs_diff_eq!(r.values[0], 1.0, epsilon = 1e-4);
    assert_abs_diff_eq!(r.values[1], 1.0, epsilon = 1e-4);
    assert_abs_diff_eq!(r.allocation.get(0, 0), 1.0, epsilon = 1e-4);
    assert_abs_diff_eq!(r.allocation.get(1, 0), 0.0, epsilon = 1e-4);
    assert_abs_diff_eq!(r.allocation.get(1, 1), 1.0, epsilon = 1e-4);
    assert!(r.converged);
}

#[test]
fn thm3_nash_with_equal_split() {
    let inst = thm3();
    let r = run(&inst, WelfareRule::Nash, &[split(&inst, 1)]);
    assert_abs_diff_eq!(r.allocation.get(1, 0), 0.5, epsilon = 1e-4);
    assert_abs_diff_eq!(r.allocation.get(1, 1), 0.5, epsilon = 1e-4);
    assert_abs_diff_eq!(r.values[0], 0.5, epsilon = 1e-4);
    assert_abs_diff_eq!(r.values[1], 1.0, epsilon = 1e-4);
}

#[test]
fn thm1_social_with_equal_split() {
    let inst = build_instance(&[vec![2.0, 0.0], vec![0.0, 1.0]], None).unwrap();
    let rel = LinearRelation { agent: 0, coeffs: vec![1.0, -1.0], relation: Relation::Eq, rhs: 0.0 };
    let set = ConstraintSet::new(0, vec![rel]).unwrap();
    let r = run(&inst, WelfareRule::Social, &[set]);
    assert_abs_diff_eq!(r.values[0], 2.0, epsilon = 1e-6);
    assert!(r.values[1] <= 1e-6);
}

#[test]
fn budget_caps_bind() {
    let inst = build_instance(&[vec![1.0, 1.0], vec![1.0, 1.0]], Some(&[0.5, 10.0])).unwrap();
    let r = run(&inst, WelfareRule::Nash, &[]);
    assert_abs_diff_eq!(r.values[0], 0.5, epsilon = 1e-4);
    assert_abs_diff_eq!(r.values[1], 1.5, epsilon = 1e-4);
    let s = run(&inst, WelfareRule::Social, &[]);
    assert_abs_diff_eq!(s.objective, 2.0, epsilon = 1e-6);
}

#[test]
fn zero_row_agent_stays_in_report() {
    let inst = build_instance(&[vec![0.0, 0.0], vec![1.0, 2.0]], None).unwrap();
    let r = run(&inst, WelfareRule::Nash, &[]);
    assert_eq!(r.active_agents, vec![1]);
    assert_eq!(r.values.len(), 2);
    assert_eq!(r.values[0], 0.0);
    assert_abs_diff_eq!(r.objective, 3f64.ln(), epsilon = 1e-9);
}

#[test]
fn bad_tolerance_rejected() {
    for tol in [0.0, -1.0, f64::NAN] {
        assert!(matches!(
            maximize_welfare(&thm3(), &WelfareRule::Nash, &[], tol, 10),
            Err(Error::InvalidTolerance(_))
        ));
    }
}

#[test]
fn iteration_cap_returns_report() {
    let inst = thm3();
    match maximize_welfare(&inst, &WelfareRule::Nash, &[], 1e-12, 0) {
        Err(Error::ToleranceNotReached { report, .. }) => {
            assert!(!report.converged);
            assert!(report.fw_gap > 1e-12);
            assert!(report.allocation.is_feasible(&[]));
        }
        other => panic!("expected ToleranceNotReached, got {other:?}"),
    }
}

#[test]
fn report_json_fields() {
    let r = run(&thm3(), WelfareRule::Nash, &[]);
    let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    for key in ["objective", "fw_gap", "iterations", "values", "allocation"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["allocation"].as_array().unwrap().len(), 2);
}

#[test]
fn certificate_recomputed_independently() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for k in 0..12 {
        let inst = random_instance(&mut rng, 3, 4, k % 2 == 0);
        let cons = [split(&inst, k % 3)];
        for rule in [WelfareRule::Nash, WelfareRule::GammaFair(0.5), WelfareRule::GammaFair(-1.0)] {
            let r = run(&inst, rule, &cons);
            assert!(r.allocation.is_feasible(&cons));
            let gap = certify(&inst, &rule, &cons, &r.allocation, &r.active_agents).unwrap();
            assert!(gap <= DEFAULT_TOL * (1.0 + r.objective.abs()), "{rule}: gap {gap}");
            assert!((gap - r.fw_gap).abs() <= 1e-8 * (1.0 + r.objective.abs()));
        }
    }
}

#[test]
fn oracle_single_item() {
    let inst = build_instance(&[vec![3.0]], None).unwrap();
    assert_abs_diff_eq!(brute_force_oracle(&inst, &WelfareRule::Social, &[], 10).unwrap(), 3.0);
}

#[test]
fn oracle_thm3_constrained() {
    let inst = thm3();
    let f = brute_force_oracle(&inst, &WelfareRule::Nash, &[split(&inst, 1)], 1000).unwrap();
    assert_abs_diff_eq!(f, 0.5f64.ln(), epsilon = 1e-3);
}

#[test]
fn oracle_all_zero() {
    let inst = build_instance(&[vec![0.0, 0.0], vec![0.0, 0.0]], None).unwrap();
    assert_eq!(brute_force_oracle(&inst, &WelfareRule::Social, &[], 5).unwrap(), 0.0);
}

#[test]
fn oracle_refuses_large() {
    let inst = build_instance(&[vec![1.0; 4], vec![1.0; 4]], None).unwrap();
    assert!(matches!(brute_force_oracle(&inst, &WelfareRule::Nash, &[], 5), Err(Error::TooLargeForOracle(8))));
}

#[test]
fn solver_agrees_with_oracle_on_small_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for k in 0..6 {
        let inst = random_instance(&mut rng, 2, 2, false);
        let cons = if k % 2 == 0 { vec![] } else { vec![split(&inst, k % 2)] };
        for rule in [WelfareRule::Social, WelfareRule::Nash, WelfareRule::GammaFair(0.5), WelfareRule::GammaFair(-1.0)] {
            let r = run(&inst, rule, &cons);
            let o = brute_force_oracle(&inst, &rule, &cons, 20).unwrap();
            assert!(r.objective >= o - 1e-9, "{rule}: solver {} below oracle {o}", r.objective);
            assert!(r.objective - o <= 1e-3, "{rule}: solver {} oracle {o}", r.objective);
        }
    }
}

#[test]
fn zero_feasible_budget_instance_starts_positive() {
    let inst = build_instance(&[vec![1.0, 0.0, 2.0], vec![0.0, 1.0, 1.0]], Some(&[0.3, 5.0])).unwrap();
    let r = run(&inst, WelfareRule::Nash, &[split(&inst, 0)]);
    assert!(r.values.0.iter().all(|&v| v > 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn nash_scale_invariant(seed in 0u64..10_000, agent in 0usize..3, up in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 3, 3, false);
        let scaled = inst.scale_agent(agent, if up { 10.0 } else { 0.1 }).unwrap();
        let a = run(&inst, WelfareRule::Nash, &[]);
        let b = run(&scaled, WelfareRule::Nash, &[]);
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((a.allocation.get(i, j) - b.allocation.get(i, j)).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn nash_is_proportional(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 3, 4, seed % 2 == 0);
        let r = run(&inst, WelfareRule::Nash, &[]);
        for i in 0..3 {
            prop_assert!(r.values[i] >= inst.solo_value(i) / 3.0 - 1e-6);
        }
    }

    #[test]
    fn constraints_never_help(seed in 0u64..10_000, agent in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 3, 3, seed % 3 == 0);
        for rule in [WelfareRule::Social, WelfareRule::Nash, WelfareRule::GammaFair(-1.0)] {
            let a = run(&inst, rule, &[]);
            let b = run(&inst, rule, &[split(&inst, agent)]);
            prop_assert!(b.objective <= a.objective + 1e-6);
        }
    }
}

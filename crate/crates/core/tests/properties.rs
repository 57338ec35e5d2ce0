use fairdiv::audit::{sweep, SweepMode};
use fairdiv::exec::ExecMode;
use fairdiv::forge::{random_budget_instance, RandomSpec, ValueDist};
use fairdiv::model::{compile_proportionality, equal_split_spec, ConstraintSet};
use fairdiv::solver::{solve, SolverOptions};
use fairdiv::welfare::WelfareRule;
use proptest::prelude::*;

fn spec(seed: u64) -> RandomSpec {
    RandomSpec { n: 3, m: 4, budget_cap: 5.0, seed, dist: ValueDist::Uniform { lo: 0.1, hi: 2.0 }, sparsity: 0.2 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    // Relabeling agents relabels the values and nothing else.
    #[test]
    fn anonymity(seed in 0u64..1000, rot in 1usize..3) {
        let inst = random_budget_instance(&spec(seed)).unwrap();
        let perm: Vec<usize> = (0..3).map(|i| (i + rot) % 3).collect();
        let permuted = inst.permute_agents(&perm).unwrap();
        for rule in [WelfareRule::Nash, WelfareRule::GammaFair(0.5), WelfareRule::GammaFair(-1.0)] {
            let a = solve(&inst, &rule, &[], &SolverOptions::default()).unwrap();
            let b = solve(&permuted, &rule, &[], &SolverOptions::default()).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert!((b.values[k] - a.values[i]).abs() < 1e-4, "{rule}: {:?} vs {:?}", a.values, b.values);
            }
        }
    }

    #[test]
    fn constraints_follow_their_agent(seed in 0u64..1000) {
        let inst = random_budget_instance(&spec(seed)).unwrap();
        let Ok(eq) = equal_split_spec(&inst, 0) else { return Ok(()) };
        let set = compile_proportionality(&eq, 4).unwrap();
        let perm = [2, 0, 1];
        let permuted = inst.permute_agents(&perm).unwrap();
        let moved: ConstraintSet = set.reassigned(1);
        let a = solve(&inst, &WelfareRule::Nash, &[set], &SolverOptions::default()).unwrap();
        let b = solve(&permuted, &WelfareRule::Nash, &[moved], &SolverOptions::default()).unwrap();
        prop_assert!((a.objective - b.objective).abs() < 1e-5);
    }
}

#[test]
fn sweeps_agree_across_exec_modes() {
    let inst = random_budget_instance(&RandomSpec { n: 5, m: 8, ..spec(3) }).unwrap();
    for mode in [SweepMode::Single, SweepMode::Pairs, SweepMode::Mon] {
        let s = sweep(&inst, &WelfareRule::GammaFair(0.5), mode, 0.1, &SolverOptions::default(), ExecMode::Sequential)
            .unwrap();
        let p = sweep(&inst, &WelfareRule::GammaFair(0.5), mode, 0.1, &SolverOptions::default(), ExecMode::Parallel)
            .unwrap();
        assert_eq!(s, p);
    }
}

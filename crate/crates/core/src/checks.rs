//! The acceptance criteria as runnable checks, shared by the test suite and the
//! `paper-check` command.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audit::{audit, sweep, SweepMode};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::forge::{paper_instance, random_budget_instance, thm4_min_beta, ForgeRecipe, RandomSpec, ValueDist};
use crate::model::{compile_proportionality, equal_split_spec, ConstraintSet, Instance};
use crate::solver::{brute_force_oracle, certify, solve, SolverOptions, DEFAULT_TOL};
use crate::welfare::{pmon_bound, WelfareRule};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "criterion {} [{mark}] {}: {}", self.id, self.name, self.detail)
    }
}

pub const NAMES: [&str; 8] = [
    "oracle equivalence",
    "NW externality guarantee",
    "two-agent tightness",
    "externality blow-up for non-NW rules",
    "k-agent guarantee",
    "monotonicity bound",
    "synthetic budget-capped suite",
    "property suites",
];

fn outcome(id: u8, body: Result<(bool, String)>) -> CheckResult {
    let (passed, detail) = body.unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult { id, name: NAMES[id as usize - 1], passed, detail }
}

pub fn run(id: u8, mode: ExecMode) -> CheckResult {
    let body = match id {
        1 => oracle_equivalence(mode),
        2 => nw_externality(mode),
        3 => two_agent_tightness(),
        4 => blow_up(),
        5 => k_agent(),
        6 => monotonicity(mode),
        7 => synthetic_suite(mode),
        8 => properties(mode),
        _ => Err(Error::BadParams(format!("no criterion {id}"))),
    };
    outcome(id, body)
}

pub fn run_all(mode: ExecMode) -> Vec<CheckResult> {
    (1..=8).map(|id| run(id, mode)).collect()
}

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn split(inst: &Instance, agent: usize) -> Result<ConstraintSet> {
    compile_proportionality(&equal_split_spec(inst, agent)?, inst.m_items())
}

fn strip_budgets(inst: Instance) -> Result<Instance> {
    Instance::new(inst.rows(), None)
}

const ORACLE_RULES: [WelfareRule; 4] =
    [WelfareRule::Social, WelfareRule::Nash, WelfareRule::GammaFair(0.5), WelfareRule::GammaFair(-1.0)];
const ORACLE_GRID: usize = 24;

fn oracle_equivalence(mode: ExecMode) -> Result<(bool, String)> {
    let seeds: Vec<u64> = (0..100).collect();
    let worst = exec::map(mode, &seeds, |&seed| -> Result<f64> {
        let spec = RandomSpec {
            n: 2,
            m: 2,
            budget_cap: 1.0,
            seed,
            dist: ValueDist::Uniform { lo: 0.1, hi: 2.0 },
            sparsity: 0.0,
        };
        let inst = strip_budgets(random_budget_instance(&spec)?)?;
        let constrained = [split(&inst, (seed % 2) as usize)?];
        let mut worst = 0.0f64;
        for cons in [&[][..], &constrained[..]] {
            for rule in &ORACLE_RULES {
                let s = solve(&inst, rule, cons, &opts())?;
                let o = brute_force_oracle(&inst, rule, cons, ORACLE_GRID)?;
                worst = worst.max((s.objective - o).abs());
            }
        }
        Ok(worst)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let max = worst.iter().copied().fold(0.0, f64::max);
    Ok((max <= 1e-3, format!("max |solver - oracle| = {max:.2e} over 800 solves (limit 1e-3)")))
}

fn construction_grid() -> Vec<ForgeRecipe> {
    let mut out = Vec::new();
    for alpha in [0.1, 0.5, 1.0, 2.0, 10.0, 100.0] {
        out.push(ForgeRecipe::Thm1 { alpha, beta: 1.0 });
    }
    for eps in [1.0, 0.5, 0.1, 0.01, 0.001] {
        out.push(ForgeRecipe::Thm3 { eps });
    }
    for k in 1..=3 {
        for eps in [1.0, 0.1, 0.01] {
            out.push(ForgeRecipe::Cor3 { k, eps });
        }
    }
    out
}

fn nw_externality(mode: ExecMode) -> Result<(bool, String)> {
    let rule = WelfareRule::Nash;
    let mut q_all = Vec::new();
    // Each construction's constraint sets, imposed one agent at a time.
    for recipe in construction_grid() {
        let (inst, sets) = paper_instance(&recipe)?;
        for set in sets {
            let r = audit(&inst, &rule, &[set], 0.0, &opts())?;
            q_all.extend(r.q_min);
        }
    }
    let seeds: Vec<u64> = (0..200).collect();
    let random = exec::map(mode, &seeds, |&seed| -> Result<Option<f64>> {
        let spec = RandomSpec {
            n: 4,
            m: 6,
            budget_cap: 10.0,
            seed: 1000 + seed,
            dist: ValueDist::LogNormal { mu: 0.0, sigma: 1.0 },
            sparsity: 0.3,
        };
        let inst = random_budget_instance(&spec)?;
        let eligible: Vec<usize> = (0..4).filter(|&i| equal_split_spec(&inst, i).is_ok()).collect();
        let Some(&agent) = eligible.get(seed as usize % eligible.len().max(1)) else { return Ok(None) };
        match audit(&inst, &rule, &[split(&inst, agent)?], 0.0, &opts()) {
            Ok(r) => Ok(r.q_min),
            Err(Error::DegenerateBaseline) => Ok(None),
            Err(e) => Err(e),
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    q_all.extend(random.into_iter().flatten());
    let min = q_all.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((min >= 0.25 - 1e-3, format!("min q_min = {min:.4} over {} audits (limit 0.249)", q_all.len())))
}

fn two_agent_tightness() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for eps in [1.0, 0.1, 0.001] {
        let (inst, sets) = paper_instance(&ForgeRecipe::Thm3 { eps })?;
        let r = audit(&inst, &WelfareRule::Nash, &sets, 0.0, &opts())?;
        let v0 = r.values_after[0];
        let q = r.q_min.unwrap_or(f64::NAN);
        let bound = (1.0 + eps) / (2.0 + eps);
        ok &= (v0 - 0.5).abs() <= 1e-3 && (q - 0.5).abs() <= 1e-3 && q <= bound;
        parts.push(format!("eps={eps}: V_0={v0:.5}, q={q:.5} (bound {bound:.5})"));
    }
    Ok((ok, parts.join("; ")))
}

fn blow_up() -> Result<(bool, String)> {
    let mut ok = true;
    let mut parts = Vec::new();
    for t in 1..=3 {
        let alpha = 10f64.powi(t);
        let (inst, sets) = paper_instance(&ForgeRecipe::Thm1 { alpha, beta: 1.0 })?;
        let r = audit(&inst, &WelfareRule::GammaFair(0.5), &sets, 0.0, &opts())?;
        let q = r.q_min.unwrap_or(f64::NAN);
        let expect = 1.0 / (1.0 + alpha);
        ok &= (q - expect).abs() <= 1e-3;
        parts.push(format!("gamma=0.5 alpha=1e{t}: q={q:.5} (expect {expect:.5})"));
    }
    let (inst, sets) = paper_instance(&ForgeRecipe::Thm1 { alpha: 2.0, beta: 1.0 })?;
    let r = audit(&inst, &WelfareRule::Social, &sets, 0.0, &opts())?;
    let q = r.q_min.unwrap_or(f64::NAN);
    ok &= q <= 1e-4;
    parts.push(format!("social alpha=2: q={q:.2e}"));
    Ok((ok, parts.join("; ")))
}

fn k_agent() -> Result<(bool, String)> {
    let (k, eps) = (2usize, 0.01);
    let (inst, sets) = paper_instance(&ForgeRecipe::Cor3 { k, eps })?;
    let r = audit(&inst, &WelfareRule::Nash, &sets, 0.0, &opts())?;
    let q = r.q_min.unwrap_or(f64::NAN);
    let upper = (1.0 + eps) / (k as f64 + 1.0 + eps);
    let lower = 1.0 / (2.0 * (k as f64 + 1.0));
    let spread = (r.values_after[1] - r.values_after[2]).abs();
    let ok = q >= lower - 1e-3 && q <= upper + 1e-3 && spread <= 1e-4;
    Ok((ok, format!("q={q:.5} in [{lower:.4}, {upper:.4}]; symmetric agents differ by {spread:.1e}")))
}

fn monotonicity(mode: ExecMode) -> Result<(bool, String)> {
    let gammas = [0.9, 0.5, 0.0];
    let rule_of = |g: f64| if g == 0.0 { WelfareRule::Nash } else { WelfareRule::GammaFair(g) };
    let mut ok = true;
    let mut parts = Vec::new();

    // (a) full MON sweeps on smaller constructions and random instances.
    let mut instances: Vec<Instance> = Vec::new();
    for recipe in construction_grid() {
        instances.push(paper_instance(&recipe)?.0);
    }
    for g in gammas {
        for n in [10, 40] {
            instances.push(paper_instance(&ForgeRecipe::Thm4 { n, gamma: g, beta: None })?.0);
        }
    }
    for seed in 0..20 {
        let spec = RandomSpec {
            n: 4,
            m: 6,
            budget_cap: 10.0,
            seed: 5000 + seed,
            dist: ValueDist::LogNormal { mu: 0.0, sigma: 1.0 },
            sparsity: 0.3,
        };
        instances.push(random_budget_instance(&spec)?);
    }
    for g in gammas {
        let rule = rule_of(g);
        let bound = pmon_bound(g);
        let p = exec::map(mode, &instances, |inst| -> Result<Option<f64>> {
            Ok(sweep(inst, &rule, SweepMode::Mon, 0.0, &opts(), ExecMode::Sequential)?.value)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let min = p.into_iter().flatten().fold(f64::INFINITY, f64::min);
        ok &= min >= bound - 1e-3;
        parts.push(format!("(a) {rule}: min p = {min:.4} over {} sweeps (bound {bound:.4})", instances.len()));
    }

    // (b) tightness at n = 500: the constrained agent's p against the bound.
    let big = exec::map(mode, &gammas, |&g| -> Result<(f64, f64)> {
        let (inst, sets) = paper_instance(&ForgeRecipe::Thm4 { n: 500, gamma: g, beta: None })?;
        let r = audit(&inst, &rule_of(g), &sets, 0.0, &opts())?;
        Ok((g, r.p_min.unwrap_or(f64::NAN)))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    for (g, p) in big {
        let bound = pmon_bound(g);
        ok &= (p - bound).abs() <= 0.05 * bound && p >= bound - 1e-3;
        parts.push(format!(
            "(b) gamma={g} beta={:.4}: p = {p:.4} vs bound {bound:.4}",
            thm4_min_beta(g)?
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub const EXPERIMENT_RULES: [WelfareRule; 5] = [
    WelfareRule::Social,
    WelfareRule::GammaFair(0.5),
    WelfareRule::GammaFair(0.1),
    WelfareRule::Nash,
    WelfareRule::GammaFair(-1.0),
];

pub fn synthetic_spec(seed: u64) -> RandomSpec {
    RandomSpec { n: 6, m: 20, budget_cap: 10.0, seed, dist: ValueDist::LogNormal { mu: 0.0, sigma: 1.0 }, sparsity: 0.3 }
}

fn synthetic_suite(mode: ExecMode) -> Result<(bool, String)> {
    let seeds: Vec<u64> = (1..=10).collect();
    let instances: Vec<Instance> =
        seeds.iter().map(|&s| random_budget_instance(&synthetic_spec(s))).collect::<Result<_>>()?;
    let mut medians = Vec::new();
    for rule in &EXPERIMENT_RULES {
        let losses = exec::map(mode, &instances, |inst| -> Result<Option<f64>> {
            let s = sweep(inst, rule, SweepMode::Single, 0.1, &opts(), ExecMode::Sequential)?;
            Ok(s.value.map(|q| 1.0 - q))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        medians.push((*rule, median(losses.into_iter().flatten().collect())));
    }
    let med = |r: WelfareRule| medians.iter().find(|(x, _)| *x == r).map_or(f64::NAN, |m| m.1);
    let good = [WelfareRule::Nash, WelfareRule::GammaFair(0.1)];
    let worse = [WelfareRule::Social, WelfareRule::GammaFair(0.5), WelfareRule::GammaFair(-1.0)];
    // Differences below the solver tolerance are roundoff, not an ordering.
    let ordered = good.iter().all(|&g| worse.iter().all(|&w| med(g) < med(w) - DEFAULT_TOL));

    let p = exec::map(mode, &instances, |inst| -> Result<Option<f64>> {
        Ok(sweep(inst, &WelfareRule::Nash, SweepMode::Mon, 0.1, &opts(), ExecMode::Sequential)?.value)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let p_min = p.iter().map(|x| x.unwrap_or(f64::NAN)).fold(f64::INFINITY, f64::min);
    let monotone = p.iter().all(|x| x.is_some_and(|x| x >= 1.0 - 1e-3));

    let table = medians.iter().map(|(r, m)| format!("{r}={m:.4}")).collect::<Vec<_>>().join(", ");
    Ok((ordered && monotone, format!("median 1-q_min: {table}; NW MON p_min over seeds = {p_min:.5}")))
}

fn properties(mode: ExecMode) -> Result<(bool, String)> {
    let seeds: Vec<u64> = (0..40).collect();
    let results = exec::map(mode, &seeds, |&seed| -> Result<Vec<&'static str>> {
        let mut failed = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7000 + seed);
        let budgets = seed % 2 == 0;
        let spec = RandomSpec {
            n: 3,
            m: 4,
            budget_cap: 4.0,
            seed: 8000 + seed,
            dist: ValueDist::Uniform { lo: 0.1, hi: 2.0 },
            sparsity: 0.0,
        };
        let raw = random_budget_instance(&spec)?;
        let inst = if budgets { raw.clone() } else { strip_budgets(raw.clone())? };
        let agent = rng.gen_range(0..3);
        let cons = [split(&inst, agent)?];
        for rule in &ORACLE_RULES {
            let free = solve(&inst, rule, &[], &opts())?;
            let tied = solve(&inst, rule, &cons, &opts())?;
            for (r, c) in [(&free, &[][..]), (&tied, &cons[..])] {
                if !r.allocation.is_feasible(c) {
                    failed.push("feasibility");
                }
                let gap = certify(&inst, rule, c, &r.allocation, &r.active_agents)?;
                if gap > DEFAULT_TOL * (1.0 + r.objective.abs()) {
                    failed.push("certificate");
                }
            }
            if tied.objective > free.objective + 1e-6 {
                failed.push("shrinkage");
            }
            let again = solve(&inst, rule, &cons, &opts())?;
            if again.to_json()? != tied.to_json()? {
                failed.push("determinism");
            }
        }
        let nash = solve(&inst, &WelfareRule::Nash, &[], &opts())?;
        for i in 0..3 {
            if nash.values[i] < inst.solo_value(i) / 3.0 - 1e-6 {
                failed.push("proportionality");
            }
        }
        if !budgets {
            let factor = if rng.gen_bool(0.5) { 10.0 } else { 0.1 };
            let scaled = solve(&inst.scale_agent(agent, factor)?, &WelfareRule::Nash, &[], &opts())?;
            let drift = (0..3)
                .flat_map(|i| (0..4).map(move |j| (i, j)))
                .map(|(i, j)| (nash.allocation.get(i, j) - scaled.allocation.get(i, j)).abs())
                .fold(0.0, f64::max);
            if drift > 1e-4 {
                failed.push("scale invariance");
            }
        }
        Ok(failed)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut failed: Vec<&str> = results.into_iter().flatten().collect();
    failed.sort_unstable();
    failed.dedup();

    // Sweeps must not depend on the execution mode or on reruns.
    let inst = random_budget_instance(&synthetic_spec(3))?;
    let a = sweep(&inst, &WelfareRule::Nash, SweepMode::Single, 0.1, &opts(), ExecMode::Sequential)?;
    let b = sweep(&inst, &WelfareRule::Nash, SweepMode::Single, 0.1, &opts(), mode)?;
    let csv_a = crate::audit::write_csv(&crate::audit::sweep_rows(&a))?;
    let csv_b = crate::audit::write_csv(&crate::audit::sweep_rows(&b))?;
    if csv_a != csv_b {
        failed.push("determinism");
    }
    if failed.is_empty() {
        Ok((true, format!("{} instances x {} rules: all properties hold", seeds.len(), ORACLE_RULES.len())))
    } else {
        Ok((false, format!("violated: {}", failed.join(", "))))
    }
}

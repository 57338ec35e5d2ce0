//! Externality and monotonicity audits.
//!
//! An audit solves the program twice, without and with a set of agent constraints,
//! and compares values: `q` ratios `B_l / A_l` for the agents that did not add
//! constraints, `p` ratios `A_i / B_i` for those that did (`A` before, `B` after).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::model::{compile_proportionality, equal_split_spec, ConstraintSet, Instance, ValueVector};
use crate::solver::{solve, SolveReport, SolverOptions};
use crate::welfare::WelfareRule;

/// Baseline values at or below this count as zero.
const ZERO_BASELINE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FilterReason {
    /// Unconstrained value below `filter_frac` times the budget.
    LowValue,
    /// Unconstrained value zero; no ratio exists.
    ZeroBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilteredAgent {
    pub agent: usize,
    pub reason: FilterReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub rule: WelfareRule,
    pub constrained_agents: Vec<usize>,
    pub values_before: ValueVector,
    pub values_after: ValueVector,
    pub q_ratios: BTreeMap<usize, f64>,
    pub p_ratios: BTreeMap<usize, f64>,
    pub q_min: Option<f64>,
    pub p_min: Option<f64>,
    pub filtered_agents: Vec<FilteredAgent>,
    pub gap_before: f64,
    pub gap_after: f64,
}

impl AuditReport {
    pub fn is_filtered(&self, agent: usize) -> bool {
        self.filtered_agents.iter().any(|f| f.agent == agent)
    }
}

fn min_of<'a>(xs: impl Iterator<Item = &'a f64>) -> Option<f64> {
    xs.copied().reduce(f64::min)
}

/// Builds the report from two solves. `filter_frac` applies only with budgets.
pub fn compare(
    instance: &Instance,
    before: &SolveReport,
    after: &SolveReport,
    constrained_agents: &[usize],
    filter_frac: f64,
) -> AuditReport {
    let (a, b) = (&before.values, &after.values);
    let mut q_ratios = BTreeMap::new();
    let mut p_ratios = BTreeMap::new();
    let mut filtered_agents = Vec::new();
    for l in 0..instance.n_agents() {
        if constrained_agents.contains(&l) {
            if b[l] > 0.0 {
                p_ratios.insert(l, a[l] / b[l]);
            }
            continue;
        }
        if a[l] <= ZERO_BASELINE {
            filtered_agents.push(FilteredAgent { agent: l, reason: FilterReason::ZeroBaseline });
        } else if instance.budget(l).is_some_and(|budget| a[l] < filter_frac * budget) {
            filtered_agents.push(FilteredAgent { agent: l, reason: FilterReason::LowValue });
        } else {
            q_ratios.insert(l, b[l] / a[l]);
        }
    }
    AuditReport {
        rule: before.rule,
        constrained_agents: constrained_agents.to_vec(),
        values_before: a.clone(),
        values_after: b.clone(),
        q_min: min_of(q_ratios.values()),
        p_min: min_of(p_ratios.values()),
        q_ratios,
        p_ratios,
        filtered_agents,
        gap_before: before.fw_gap,
        gap_after: after.fw_gap,
    }
}

fn check_filter(filter_frac: f64) -> Result<()> {
    if (0.0..1.0).contains(&filter_frac) {
        Ok(())
    } else {
        Err(Error::BadParams(format!("filter fraction {filter_frac} outside [0, 1)")))
    }
}

/// Solves without and with `constrained`, then compares values.
///
/// Fails with [`Error::DegenerateBaseline`] when every unconstrained agent has
/// zero value before the constraints are added.
pub fn audit(
    instance: &Instance,
    rule: &WelfareRule,
    constrained: &[ConstraintSet],
    filter_frac: f64,
    options: &SolverOptions,
) -> Result<AuditReport> {
    if constrained.is_empty() {
        return Err(Error::BadParams("audit needs at least one constrained agent".into()));
    }
    check_filter(filter_frac)?;
    let before = solve(instance, rule, &[], options)?;
    let after = solve(instance, rule, constrained, options)?;
    let mut agents: Vec<usize> = constrained.iter().map(ConstraintSet::agent).collect();
    agents.sort_unstable();
    agents.dedup();
    let report = compare(instance, &before, &after, &agents, filter_frac);
    let all_zero = (0..instance.n_agents())
        .filter(|l| !agents.contains(l))
        .all(|l| report.filtered_agents.contains(&FilteredAgent { agent: l, reason: FilterReason::ZeroBaseline }));
    if all_zero && agents.len() < instance.n_agents() {
        return Err(Error::DegenerateBaseline);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SweepMode {
    /// Each agent alone adds an equal-split constraint.
    Single,
    /// Every unordered pair of agents adds equal-split constraints together.
    Pairs,
    /// Each agent alone; reports how much its own value can rise.
    Mon,
}

impl SweepMode {
    pub fn statistic(self) -> &'static str {
        match self {
            SweepMode::Mon => "p_min",
            _ => "q_min",
        }
    }
}

impl fmt::Display for SweepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepMode::Single => "single",
            SweepMode::Pairs => "pairs",
            SweepMode::Mon => "mon",
        })
    }
}

impl FromStr for SweepMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "single" => Ok(SweepMode::Single),
            "pairs" | "double" => Ok(SweepMode::Pairs),
            "mon" => Ok(SweepMode::Mon),
            other => Err(Error::BadParams(format!("unknown sweep mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub rule: WelfareRule,
    pub mode: SweepMode,
    /// `q_min` over trials for SINGLE and PAIRS, `p_min` for MON; `None` when no
    /// trial produced a ratio.
    pub value: Option<f64>,
    pub baseline: SolveReport,
    pub trials: Vec<AuditReport>,
}

/// Runs every trial of `mode` against one shared baseline solve.
pub fn sweep(
    instance: &Instance,
    rule: &WelfareRule,
    mode: SweepMode,
    filter_frac: f64,
    options: &SolverOptions,
    exec_mode: ExecMode,
) -> Result<SweepSummary> {
    check_filter(filter_frac)?;
    let n = instance.n_agents();
    if mode != SweepMode::Mon && n < 2 {
        return Err(Error::BadParams(format!("{mode} sweep needs at least two agents")));
    }
    let splits: BTreeMap<usize, ConstraintSet> = (0..n)
        .filter_map(|i| {
            let spec = equal_split_spec(instance, i).ok()?;
            compile_proportionality(&spec, instance.m_items()).ok().map(|c| (i, c))
        })
        .collect();
    let eligible: Vec<usize> = splits.keys().copied().collect();
    let groups: Vec<Vec<usize>> = match mode {
        SweepMode::Single | SweepMode::Mon => eligible.iter().map(|&i| vec![i]).collect(),
        SweepMode::Pairs => eligible
            .iter()
            .enumerate()
            .flat_map(|(k, &i)| eligible[k + 1..].iter().map(move |&j| vec![i, j]))
            .collect(),
    };
    if groups.is_empty() {
        return Err(Error::NoEligibleAgents);
    }

    let baseline = solve(instance, rule, &[], options)?;
    let trials = exec::map(exec_mode, &groups, |group| -> Result<AuditReport> {
        let sets: Vec<ConstraintSet> = group.iter().map(|i| splits[i].clone()).collect();
        let after = solve(instance, rule, &sets, options)?;
        Ok(compare(instance, &baseline, &after, group, filter_frac))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let value = match mode {
        SweepMode::Mon => min_of(trials.iter().filter_map(|t| t.p_min.as_ref())),
        _ => min_of(trials.iter().filter_map(|t| t.q_min.as_ref())),
    };
    Ok(SweepSummary { rule: *rule, mode, value, baseline, trials })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Constrained,
    Other,
    Filtered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioKind {
    Q,
    P,
}

/// One row of the per-trial report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub trial_id: usize,
    /// Constrained agents joined with `;`.
    pub constrained_agents: String,
    pub agent: usize,
    pub role: Role,
    pub value_before: f64,
    pub value_after: f64,
    pub ratio: Option<f64>,
    pub kind: RatioKind,
}

/// One row of the summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub rule: String,
    pub mode: String,
    pub statistic: String,
    pub value: Option<f64>,
    pub seed: Option<u64>,
}

pub fn report_rows(trial_id: usize, report: &AuditReport) -> Vec<ReportRow> {
    let joined = report.constrained_agents.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
    (0..report.values_before.len())
        .map(|l| {
            let (role, kind, ratio) = if report.constrained_agents.contains(&l) {
                (Role::Constrained, RatioKind::P, report.p_ratios.get(&l).copied())
            } else if report.is_filtered(l) {
                let a = report.values_before[l];
                (Role::Filtered, RatioKind::Q, (a > ZERO_BASELINE).then(|| report.values_after[l] / a))
            } else {
                (Role::Other, RatioKind::Q, report.q_ratios.get(&l).copied())
            };
            ReportRow {
                trial_id,
                constrained_agents: joined.clone(),
                agent: l,
                role,
                value_before: report.values_before[l],
                value_after: report.values_after[l],
                ratio,
                kind,
            }
        })
        .collect()
}

pub fn sweep_rows(summary: &SweepSummary) -> Vec<ReportRow> {
    summary.trials.iter().enumerate().flat_map(|(k, t)| report_rows(k, t)).collect()
}

pub fn summary_row(summary: &SweepSummary, seed: Option<u64>) -> SummaryRow {
    SummaryRow {
        rule: summary.rule.to_string(),
        mode: summary.mode.to_string(),
        statistic: summary.mode.statistic().to_string(),
        value: summary.value,
        seed,
    }
}

/// Serializes rows with a header line, no quoting.
pub fn write_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Never).from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::MalformedCsv(e.to_string()))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().quoting(false).from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_instance, LinearRelation, Relation};

    fn thm3() -> Instance {
        build_instance(&[vec![1.0, 0.0], vec![1.0, 1.0]], None).unwrap()
    }

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    fn split(inst: &Instance, agent: usize) -> ConstraintSet {
        compile_proportionality(&equal_split_spec(inst, agent).unwrap(), inst.m_items()).unwrap()
    }

    #[test]
    fn thm3_audit() {
        let inst = thm3();
        let r = audit(&inst, &WelfareRule::Nash, &[split(&inst, 1)], 0.0, &opts()).unwrap();
        assert!((r.q_min.unwrap() - 0.5).abs() < 1e-3);
        assert!((r.p_ratios[&1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn thm1_social_audit() {
        let inst = build_instance(&[vec![2.0, 0.0], vec![0.0, 1.0]], None).unwrap();
        let rel = LinearRelation { agent: 0, coeffs: vec![1.0, -1.0], relation: Relation::Eq, rhs: 0.0 };
        let set = ConstraintSet::new(0, vec![rel]).unwrap();
        let r = audit(&inst, &WelfareRule::Social, &[set], 0.0, &opts()).unwrap();
        assert!(r.q_min.unwrap() <= 1e-4);
    }

    #[test]
    fn vacuous_constraint_changes_nothing() {
        let inst = build_instance(&[vec![1.0, 2.0, 0.5], vec![0.3, 1.0, 2.0], vec![1.0, 1.0, 1.0]], None).unwrap();
        for rule in [WelfareRule::Nash, WelfareRule::GammaFair(0.5), WelfareRule::GammaFair(-1.0)] {
            let r = audit(&inst, &rule, &[ConstraintSet::vacuous(1)], 0.0, &opts()).unwrap();
            assert!((r.q_min.unwrap() - 1.0).abs() < 1e-4, "{rule}");
            assert!((r.p_min.unwrap() - 1.0).abs() < 1e-4, "{rule}");
        }
    }

    #[test]
    fn degenerate_baseline() {
        let inst = build_instance(&[vec![1.0, 1.0], vec![0.0, 0.0]], None).unwrap();
        assert!(matches!(
            audit(&inst, &WelfareRule::Nash, &[split(&inst, 0)], 0.0, &opts()),
            Err(Error::DegenerateBaseline)
        ));
    }

    #[test]
    fn low_value_filter_uses_budget() {
        // Agent 2 competes for item 1 only and ends far below 10% of its large budget.
        let inst = build_instance(
            &[vec![1.0, 1.0], vec![1.0, 1.0], vec![0.0, 0.01]],
            Some(&[5.0, 5.0, 100.0]),
        )
        .unwrap();
        let r = audit(&inst, &WelfareRule::Nash, &[split(&inst, 0)], 0.1, &opts()).unwrap();
        assert!(r.filtered_agents.contains(&FilteredAgent { agent: 2, reason: FilterReason::LowValue }));
        assert!(!r.q_ratios.contains_key(&2));
        let unfiltered = audit(&inst, &WelfareRule::Nash, &[split(&inst, 0)], 0.0, &opts()).unwrap();
        assert!(unfiltered.q_ratios.contains_key(&2));
    }

    #[test]
    fn thm3_single_sweep() {
        let s = sweep(&thm3(), &WelfareRule::Nash, SweepMode::Single, 0.0, &opts(), ExecMode::Sequential).unwrap();
        let q = s.value.unwrap();
        assert!(q <= 0.5 + 1e-3 && q >= 0.25 - 1e-3, "{q}");
        assert_eq!(s.trials.len(), 2);
    }

    #[test]
    fn disjoint_items_are_monotone() {
        let inst = build_instance(&[vec![1.0, 2.0, 0.0, 0.0], vec![0.0, 0.0, 3.0, 1.0]], None).unwrap();
        for rule in [WelfareRule::Social, WelfareRule::Nash, WelfareRule::GammaFair(-1.0)] {
            let s = sweep(&inst, &rule, SweepMode::Mon, 0.0, &opts(), ExecMode::Sequential).unwrap();
            assert!((s.value.unwrap() - 1.0).abs() < 1e-4, "{rule}");
        }
    }

    #[test]
    fn no_eligible_agents() {
        let inst = build_instance(&[vec![0.0], vec![0.0]], None).unwrap();
        assert!(matches!(
            sweep(&inst, &WelfareRule::Social, SweepMode::Single, 0.0, &opts(), ExecMode::Sequential),
            Err(Error::NoEligibleAgents)
        ));
    }

    #[test]
    fn sweep_modes_agree() {
        let inst = build_instance(
            &[vec![1.0, 2.0, 0.5], vec![0.3, 1.0, 2.0], vec![1.0, 0.0, 1.0]],
            Some(&[2.0, 1.5, 1.0]),
        )
        .unwrap();
        for mode in [SweepMode::Single, SweepMode::Pairs, SweepMode::Mon] {
            let a = sweep(&inst, &WelfareRule::Nash, mode, 0.1, &opts(), ExecMode::Sequential).unwrap();
            let b = sweep(&inst, &WelfareRule::Nash, mode, 0.1, &opts(), ExecMode::Parallel).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn csv_round_trip() {
        let inst = thm3();
        let s = sweep(&inst, &WelfareRule::Nash, SweepMode::Pairs, 0.0, &opts(), ExecMode::Sequential).unwrap();
        let rows = sweep_rows(&s);
        assert_eq!(rows[0].constrained_agents, "0;1");
        let text = write_csv(&rows).unwrap();
        assert!(text.starts_with("trial_id,constrained_agents,agent,role,value_before,value_after,ratio,kind\n"));
        let back: Vec<ReportRow> = read_csv(&text).unwrap();
        assert_eq!(back, rows);
        assert_eq!(write_csv(&back).unwrap(), text);

        let summary = vec![summary_row(&s, Some(7)), summary_row(&s, None)];
        let text = write_csv(&summary).unwrap();
        assert!(text.starts_with("rule,mode,statistic,value,seed\n"));
        let back: Vec<SummaryRow> = read_csv(&text).unwrap();
        assert_eq!(write_csv(&back).unwrap(), text);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("PAIRS".parse::<SweepMode>().unwrap(), SweepMode::Pairs);
        assert!("both".parse::<SweepMode>().is_err());
    }
}

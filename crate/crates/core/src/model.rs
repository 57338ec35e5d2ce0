//! Allocation instances, agent constraint sets and budget-capped valuations.
//!
//! An [`Instance`] holds `n` agents, `m` divisible items with unit supply and a
//! nonnegative value matrix. Agents may carry a budget, in which case their value
//! for an allocation is `min(B_i, sum_j v_ij x_ij)`. Diversity constraints are
//! finite intersections of [`LinearRelation`]s over one agent's row of the
//! allocation; each relation must admit the zero allocation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack used by every feasibility check.
pub const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    n_agents: usize,
    m_items: usize,
    values: Vec<f64>,
    budgets: Option<Vec<f64>>,
    pub agent_labels: Option<Vec<String>>,
    pub item_labels: Option<Vec<String>>,
}

/// Validates a value matrix (and optional budgets) into an [`Instance`].
pub fn build_instance(values: &[Vec<f64>], budgets: Option<&[f64]>) -> Result<Instance> {
    Instance::new(values.to_vec(), budgets.map(<[f64]>::to_vec))
}

impl Instance {
    pub fn new(values: Vec<Vec<f64>>, budgets: Option<Vec<f64>>) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("instance needs at least one agent".into()));
        }
        let m = values[0].len();
        if m == 0 {
            return Err(Error::DimensionMismatch("instance needs at least one item".into()));
        }
        let mut flat = Vec::with_capacity(n * m);
        for (i, row) in values.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::NegativeValue { agent: i, item: j, value: v });
                }
            }
            flat.extend_from_slice(row);
        }
        if let Some(b) = &budgets {
            if b.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} budgets for {n} agents",
                    b.len()
                )));
            }
            for (i, &bi) in b.iter().enumerate() {
                if !bi.is_finite() || bi <= 0.0 {
                    return Err(Error::NonPositiveBudget { agent: i, budget: bi });
                }
            }
        }
        Ok(Instance {
            n_agents: n,
            m_items: m,
            values: flat,
            budgets,
            agent_labels: None,
            item_labels: None,
        })
    }

    pub fn with_labels(mut self, agents: Vec<String>, items: Vec<String>) -> Result<Self> {
        if agents.len() != self.n_agents || items.len() != self.m_items {
            return Err(Error::DimensionMismatch("label count does not match instance".into()));
        }
        self.agent_labels = Some(agents);
        self.item_labels = Some(items);
        Ok(self)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn m_items(&self) -> usize {
        self.m_items
    }

    #[inline]
    pub fn value(&self, agent: usize, item: usize) -> f64 {
        self.values[agent * self.m_items + item]
    }

    pub fn row(&self, agent: usize) -> &[f64] {
        &self.values[agent * self.m_items..(agent + 1) * self.m_items]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.m_items).map(<[f64]>::to_vec).collect()
    }

    pub fn budgets(&self) -> Option<&[f64]> {
        self.budgets.as_deref()
    }

    pub fn budget(&self, agent: usize) -> Option<f64> {
        self.budgets.as_ref().map(|b| b[agent])
    }

    /// Value the agent would get if it received every item.
    pub fn solo_value(&self, agent: usize) -> f64 {
        let total: f64 = self.row(agent).iter().sum();
        match self.budget(agent) {
            Some(b) => total.min(b),
            None => total,
        }
    }

    /// Same instance with a permuted agent order: new agent `k` is old agent `perm[k]`.
    pub fn permute_agents(&self, perm: &[usize]) -> Result<Instance> {
        check_permutation(perm, self.n_agents)?;
        let rows = perm.iter().map(|&i| self.row(i).to_vec()).collect();
        let budgets = self.budgets.as_ref().map(|b| perm.iter().map(|&i| b[i]).collect());
        Instance::new(rows, budgets)
    }

    /// Multiplies one agent's value row by `factor` (> 0).
    pub fn scale_agent(&self, agent: usize, factor: f64) -> Result<Instance> {
        if agent >= self.n_agents {
            return Err(Error::IndexOutOfRange { index: agent, bound: self.n_agents });
        }
        let mut rows = self.rows();
        rows[agent].iter_mut().for_each(|v| *v *= factor);
        Instance::new(rows, self.budgets.clone())
    }
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let seen: BTreeSet<usize> = perm.iter().copied().collect();
    if perm.len() != n || seen.len() != n || seen.iter().any(|&i| i >= n) {
        return Err(Error::BadParams(format!("{perm:?} is not a permutation of 0..{n}")));
    }
    Ok(())
}

/// Fractional allocation `x[i][j]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    n_agents: usize,
    m_items: usize,
    x: Vec<f64>,
}

impl Allocation {
    pub fn zeros(n_agents: usize, m_items: usize) -> Self {
        Allocation { n_agents, m_items, x: vec![0.0; n_agents * m_items] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::DimensionMismatch("ragged allocation matrix".into()));
        }
        Ok(Allocation { n_agents: n, m_items: m, x: rows.concat() })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn m_items(&self) -> usize {
        self.m_items
    }

    #[inline]
    pub fn get(&self, agent: usize, item: usize) -> f64 {
        self.x[agent * self.m_items + item]
    }

    #[inline]
    pub fn set(&mut self, agent: usize, item: usize, v: f64) {
        self.x[agent * self.m_items + item] = v;
    }

    pub fn row(&self, agent: usize) -> &[f64] {
        &self.x[agent * self.m_items..(agent + 1) * self.m_items]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        if self.m_items == 0 {
            return vec![Vec::new(); self.n_agents];
        }
        self.x.chunks(self.m_items).map(<[f64]>::to_vec).collect()
    }

    /// Largest violation of nonnegativity or unit supply.
    pub fn supply_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for &v in &self.x {
            worst = worst.max(-v);
        }
        for j in 0..self.m_items {
            let used: f64 = (0..self.n_agents).map(|i| self.get(i, j)).sum();
            worst = worst.max(used - 1.0);
        }
        worst
    }

    pub fn is_feasible(&self, constraints: &[ConstraintSet]) -> bool {
        self.supply_violation() <= FEAS_TOL
            && constraints.iter().all(|c| c.violation(self.row(c.agent)) <= FEAS_TOL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Eq,
    Leq,
}

/// `sum_j coeffs[j] * x[agent][j]  (relation)  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRelation {
    pub agent: usize,
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinearRelation {
    /// True when the zero allocation satisfies the relation.
    pub fn admits_zero(&self) -> bool {
        match self.relation {
            Relation::Eq => self.rhs.abs() <= FEAS_TOL,
            Relation::Leq => self.rhs >= -FEAS_TOL,
        }
    }

    pub fn lhs(&self, row: &[f64]) -> f64 {
        self.coeffs.iter().zip(row).map(|(a, x)| a * x).sum()
    }

    pub fn violation(&self, row: &[f64]) -> f64 {
        let r = self.lhs(row) - self.rhs;
        match self.relation {
            Relation::Eq => r.abs(),
            Relation::Leq => r.max(0.0),
        }
    }
}

/// The polyhedral constraint set `P_i` of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    agent: usize,
    relations: Vec<LinearRelation>,
}

impl ConstraintSet {
    pub fn new(agent: usize, relations: Vec<LinearRelation>) -> Result<Self> {
        for (k, r) in relations.iter().enumerate() {
            if r.agent != agent {
                return Err(Error::MixedAgents(agent, r.agent));
            }
            if r.coeffs.iter().any(|c| !c.is_finite()) || !r.rhs.is_finite() {
                return Err(Error::BadParams(format!("relation {k} has non-finite entries")));
            }
            if !r.admits_zero() {
                return Err(Error::ZeroInfeasibleConstraint { agent, relation: k });
            }
        }
        Ok(ConstraintSet { agent, relations })
    }

    #[cfg(test)]
    pub(crate) fn new_unchecked(agent: usize, relations: Vec<LinearRelation>) -> Self {
        ConstraintSet { agent, relations }
    }

    /// A constraint set with no relations.
    pub fn vacuous(agent: usize) -> Self {
        ConstraintSet { agent, relations: Vec::new() }
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn relations(&self) -> &[LinearRelation] {
        &self.relations
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn violation(&self, row: &[f64]) -> f64 {
        self.relations.iter().map(|r| r.violation(row)).fold(0.0, f64::max)
    }

    /// Same relations, attached to a different agent index.
    pub fn reassigned(&self, agent: usize) -> ConstraintSet {
        let relations = self
            .relations
            .iter()
            .map(|r| LinearRelation { agent, ..r.clone() })
            .collect();
        ConstraintSet { agent, relations }
    }

    pub(crate) fn check_items(&self, m_items: usize) -> Result<()> {
        for r in &self.relations {
            if r.coeffs.len() != m_items {
                return Err(Error::DimensionMismatch(format!(
                    "relation of agent {} has {} coefficients for {m_items} items",
                    self.agent,
                    r.coeffs.len()
                )));
            }
        }
        Ok(())
    }
}

/// Agent `agent` wants `sum_{j in groups[r]} x_ij = shares[r] * sum_j x_ij` for every group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionalitySpec {
    pub agent: usize,
    pub groups: Vec<Vec<usize>>,
    pub shares: Vec<f64>,
}

pub fn compile_proportionality(spec: &ProportionalitySpec, m_items: usize) -> Result<ConstraintSet> {
    if spec.groups.len() != spec.shares.len() {
        return Err(Error::InvalidProportionality(format!(
            "{} groups but {} shares",
            spec.groups.len(),
            spec.shares.len()
        )));
    }
    let mut seen = vec![false; m_items];
    for group in &spec.groups {
        for &j in group {
            if j >= m_items {
                return Err(Error::IndexOutOfRange { index: j, bound: m_items });
            }
            if seen[j] {
                return Err(Error::InvalidProportionality(format!("item {j} is in two groups")));
            }
            seen[j] = true;
        }
    }
    if spec.shares.iter().any(|&a| !a.is_finite() || a < 0.0) {
        return Err(Error::InvalidProportionality("shares must be nonnegative".into()));
    }
    let sum: f64 = spec.shares.iter().sum();
    if sum > 1.0 + 1e-12 {
        return Err(Error::SharesExceedOne { sum });
    }

    let relations = spec
        .groups
        .iter()
        .zip(&spec.shares)
        .map(|(group, &share)| {
            let mut coeffs = vec![-share; m_items];
            for &j in group {
                coeffs[j] = 1.0 - share;
            }
            LinearRelation { agent: spec.agent, coeffs, relation: Relation::Eq, rhs: 0.0 }
        })
        .collect();
    ConstraintSet::new(spec.agent, relations)
}

/// Equal allocation across every item the agent values positively.
pub fn equal_split_spec(instance: &Instance, agent: usize) -> Result<ProportionalitySpec> {
    if agent >= instance.n_agents() {
        return Err(Error::IndexOutOfRange { index: agent, bound: instance.n_agents() });
    }
    let items: Vec<usize> = (0..instance.m_items())
        .filter(|&j| instance.value(agent, j) > 0.0)
        .collect();
    if items.is_empty() {
        return Err(Error::NoPositiveValueItems { agent });
    }
    let share = 1.0 / items.len() as f64;
    Ok(ProportionalitySpec {
        agent,
        shares: vec![share; items.len()],
        groups: items.into_iter().map(|j| vec![j]).collect(),
    })
}

/// Per-agent values, capped by budgets when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueVector(pub Vec<f64>);

impl ValueVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for ValueVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub fn capped_values(instance: &Instance, allocation: &Allocation) -> Result<ValueVector> {
    if allocation.n_agents() != instance.n_agents() || allocation.m_items() != instance.m_items() {
        return Err(Error::DimensionMismatch(format!(
            "allocation is {}x{}, instance is {}x{}",
            allocation.n_agents(),
            allocation.m_items(),
            instance.n_agents(),
            instance.m_items()
        )));
    }
    let values = (0..instance.n_agents())
        .map(|i| {
            let linear: f64 = instance
                .row(i)
                .iter()
                .zip(allocation.row(i))
                .map(|(v, x)| v * x)
                .sum();
            match instance.budget(i) {
                Some(b) => linear.min(b),
                None => linear,
            }
        })
        .collect();
    Ok(ValueVector(values))
}

// JSON instance schema.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelationJson {
    pub coeffs: Vec<f64>,
    pub rel: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintJson {
    pub agent: usize,
    pub relations: Vec<RelationJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ValuesJson {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceJson {
    pub agents: usize,
    pub items: usize,
    values: ValuesJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budgets: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<ConstraintJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_labels: Option<Vec<String>>,
}

/// An instance together with the constraint sets stored alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile {
    pub instance: Instance,
    pub constraints: Vec<ConstraintSet>,
}

impl InstanceFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: InstanceJson = serde_json::from_str(text)?;
        let rows = match raw.values {
            ValuesJson::Rows(rows) => rows,
            ValuesJson::Flat(flat) => {
                if flat.len() != raw.agents * raw.items || raw.items == 0 {
                    return Err(Error::DimensionMismatch(format!(
                        "{} values for {}x{} instance",
                        flat.len(),
                        raw.agents,
                        raw.items
                    )));
                }
                flat.chunks(raw.items).map(<[f64]>::to_vec).collect()
            }
        };
        if rows.len() != raw.agents || rows.iter().any(|r| r.len() != raw.items) {
            return Err(Error::DimensionMismatch(format!(
                "values do not form a {}x{} matrix",
                raw.agents, raw.items
            )));
        }
        let mut instance = Instance::new(rows, raw.budgets)?;
        if let (Some(a), Some(i)) = (raw.agent_labels, raw.item_labels) {
            instance = instance.with_labels(a, i)?;
        }
        let mut constraints = Vec::with_capacity(raw.constraints.len());
        for c in raw.constraints {
            if c.agent >= instance.n_agents() {
                return Err(Error::IndexOutOfRange { index: c.agent, bound: instance.n_agents() });
            }
            let relations = c
                .relations
                .into_iter()
                .map(|r| LinearRelation { agent: c.agent, coeffs: r.coeffs, relation: r.rel, rhs: r.rhs })
                .collect();
            let set = ConstraintSet::new(c.agent, relations)?;
            set.check_items(instance.m_items())?;
            constraints.push(set);
        }
        Ok(InstanceFile { instance, constraints })
    }

    pub fn to_json_value(&self) -> InstanceJson {
        let inst = &self.instance;
        InstanceJson {
            agents: inst.n_agents(),
            items: inst.m_items(),
            values: ValuesJson::Rows(inst.rows()),
            budgets: inst.budgets().map(<[f64]>::to_vec),
            constraints: self
                .constraints
                .iter()
                .map(|c| ConstraintJson {
                    agent: c.agent(),
                    relations: c
                        .relations()
                        .iter()
                        .map(|r| RelationJson { coeffs: r.coeffs.clone(), rel: r.relation, rhs: r.rhs })
                        .collect(),
                })
                .collect(),
            agent_labels: inst.agent_labels.clone(),
            item_labels: inst.item_labels.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_json_value())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn thm3() -> Instance {
        build_instance(&[vec![1.0, 0.0], vec![1.0, 1.0]], None).unwrap()
    }

    #[test]
    fn build_validates() {
        let inst = thm3();
        assert_eq!((inst.n_agents(), inst.m_items()), (2, 2));
        let zero = build_instance(&[vec![0.0]], None).unwrap();
        assert_eq!(zero.row(0), &[0.0]);
        assert!(matches!(
            build_instance(&[vec![1.0, 2.0]], Some(&[-1.0])),
            Err(Error::NonPositiveBudget { agent: 0, .. })
        ));
        assert!(matches!(
            build_instance(&[vec![1.0, 2.0], vec![1.0]], None),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            build_instance(&[vec![1.0, -2.0]], None),
            Err(Error::NegativeValue { agent: 0, item: 1, .. })
        ));
        assert!(matches!(
            build_instance(&[vec![f64::NAN]], None),
            Err(Error::NegativeValue { .. })
        ));
    }

    #[test]
    fn proportionality_two_halves() {
        let spec = ProportionalitySpec { agent: 0, groups: vec![vec![0], vec![1]], shares: vec![0.5, 0.5] };
        let set = compile_proportionality(&spec, 2).unwrap();
        let rels = set.relations();
        assert_eq!(rels.len(), 2);
        assert_eq!(rels[0].coeffs, vec![0.5, -0.5]);
        assert_eq!(rels[1].coeffs, vec![-0.5, 0.5]);
        assert!(rels.iter().all(|r| r.relation == Relation::Eq && r.rhs == 0.0));
        // forces x_00 = x_01
        assert!(set.violation(&[0.3, 0.3]) < 1e-15);
        assert!(set.violation(&[0.3, 0.2]) > 1e-3);
    }

    #[test]
    fn proportionality_single_group_half() {
        let spec = ProportionalitySpec { agent: 1, groups: vec![vec![1]], shares: vec![0.5] };
        let set = compile_proportionality(&spec, 2).unwrap();
        assert_eq!(set.relations()[0].coeffs, vec![-0.5, 0.5]);
        assert_eq!(set.agent(), 1);
    }

    #[test]
    fn proportionality_rejects_bad_specs() {
        let spec = ProportionalitySpec { agent: 0, groups: vec![vec![0], vec![5]], shares: vec![0.9, 0.2] };
        assert!(matches!(compile_proportionality(&spec, 6), Err(Error::SharesExceedOne { .. })));
        let spec = ProportionalitySpec { agent: 0, groups: vec![vec![0], vec![5]], shares: vec![0.5, 0.2] };
        assert!(matches!(
            compile_proportionality(&spec, 3),
            Err(Error::IndexOutOfRange { index: 5, bound: 3 })
        ));
        let spec = ProportionalitySpec { agent: 0, groups: vec![vec![0, 1], vec![1]], shares: vec![0.5, 0.2] };
        assert!(matches!(compile_proportionality(&spec, 3), Err(Error::InvalidProportionality(_))));
    }

    #[test]
    fn equal_split_cases() {
        let inst = build_instance(&[vec![3.0, 0.0, 7.0], vec![1.0, 1.0, 1.0], vec![0.0, 0.0, 0.0]], None)
            .unwrap();
        let s = equal_split_spec(&inst, 0).unwrap();
        assert_eq!(s.groups, vec![vec![0], vec![2]]);
        assert_eq!(s.shares, vec![0.5, 0.5]);
        let wide = build_instance(&[vec![1.0; 4]], None).unwrap();
        let s = equal_split_spec(&wide, 0).unwrap();
        assert_eq!(s.groups.len(), 4);
        assert!(s.shares.iter().all(|&a| a == 0.25));
        assert!(matches!(equal_split_spec(&inst, 2), Err(Error::NoPositiveValueItems { agent: 2 })));
    }

    #[test]
    fn capped_value_examples() {
        let inst = build_instance(&[vec![2.0]], Some(&[1.0])).unwrap();
        let x = Allocation::from_rows(&[vec![1.0]]).unwrap();
        assert_eq!(capped_values(&inst, &x).unwrap().0, vec![1.0]);

        let inst = thm3();
        let x = Allocation::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(capped_values(&inst, &x).unwrap().0, vec![1.0, 1.0]);
        let zero = Allocation::zeros(2, 2);
        assert_eq!(capped_values(&inst, &zero).unwrap().0, vec![0.0, 0.0]);
        assert!(capped_values(&inst, &Allocation::zeros(3, 2)).is_err());
    }

    #[test]
    fn zero_infeasible_relation_rejected() {
        let bad = LinearRelation { agent: 0, coeffs: vec![1.0], relation: Relation::Leq, rhs: -1.0 };
        assert!(matches!(
            ConstraintSet::new(0, vec![bad]),
            Err(Error::ZeroInfeasibleConstraint { agent: 0, relation: 0 })
        ));
        let other = LinearRelation { agent: 1, coeffs: vec![1.0], relation: Relation::Leq, rhs: 1.0 };
        assert!(matches!(ConstraintSet::new(0, vec![other]), Err(Error::MixedAgents(0, 1))));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"agents": 2, "items": 2, "values": [1, 0, 1, 1], "budgets": [1.5, 2],
            "constraints": [{"agent": 1, "relations": [{"coeffs": [-0.5, 0.5], "rel": "eq", "rhs": 0}]}]}"#;
        let file = InstanceFile::from_json(text).unwrap();
        assert_eq!(file.instance.rows(), vec![vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert_eq!(file.constraints.len(), 1);
        let again = InstanceFile::from_json(&file.to_json().unwrap()).unwrap();
        assert_eq!(again, file);

        let bad = r#"{"agents": 1, "items": 1, "values": [[1]],
            "constraints": [{"agent": 0, "relations": [{"coeffs": [1], "rel": "leq", "rhs": -1}]}]}"#;
        assert!(matches!(
            InstanceFile::from_json(bad),
            Err(Error::ZeroInfeasibleConstraint { .. })
        ));
    }

    fn spec_strategy() -> impl Strategy<Value = (ProportionalitySpec, usize)> {
        (2usize..7).prop_flat_map(|m| {
            (proptest::collection::vec(0usize..4, m), proptest::collection::vec(0.01f64..1.0, 3))
                .prop_map(move |(labels, raw)| {
                    // label 3 means "outside every group"
                    let groups: Vec<Vec<usize>> = (0..3)
                        .map(|g| (0..m).filter(|&j| labels[j] == g).collect::<Vec<_>>())
                        .filter(|g| !g.is_empty())
                        .collect();
                    let total: f64 = raw.iter().take(groups.len()).sum::<f64>() * 1.1;
                    let shares = raw.iter().take(groups.len()).map(|a| a / total).collect();
                    (ProportionalitySpec { agent: 0, groups, shares }, m)
                })
        })
    }

    proptest! {
        #[test]
        fn compiled_groups_hold_their_share(
            (spec, m) in spec_strategy(),
            seed in proptest::collection::vec(0.0f64..1.0, 8),
        ) {
            let set = compile_proportionality(&spec, m).unwrap();
            prop_assert!(set.relations().iter().all(LinearRelation::admits_zero));
            // Build a point satisfying the constraint: group r gets share_r of total mass T,
            // the rest goes outside the groups (or nowhere if shares sum to one).
            let total = 0.5 * seed[0] + 0.1;
            let mut x = vec![0.0; m];
            for (g, &a) in spec.groups.iter().zip(&spec.shares) {
                for &j in g {
                    x[j] = a * total / g.len() as f64;
                }
            }
            let inside: f64 = spec.shares.iter().sum();
            let outside: Vec<usize> = (0..m).filter(|j| !spec.groups.iter().any(|g| g.contains(j))).collect();
            if !outside.is_empty() {
                for &j in &outside {
                    x[j] = (1.0 - inside) * total / outside.len() as f64;
                }
                prop_assert!(set.violation(&x) <= 1e-9);
                let mass: f64 = x.iter().sum();
                for (g, &a) in spec.groups.iter().zip(&spec.shares) {
                    let got: f64 = g.iter().map(|&j| x[j]).sum();
                    prop_assert!((got - a * mass).abs() <= 1e-9);
                }
            }
        }

        #[test]
        fn capped_values_monotone_and_concave(
            vals in proptest::collection::vec(0.0f64..5.0, 6),
            budgets in proptest::collection::vec(0.1f64..4.0, 2),
            a in proptest::collection::vec(0.0f64..0.5, 6),
            b in proptest::collection::vec(0.0f64..0.5, 6),
        ) {
            let inst = build_instance(&[vals[..3].to_vec(), vals[3..].to_vec()], Some(&budgets)).unwrap();
            let lo = Allocation::from_rows(&[a[..3].to_vec(), a[3..].to_vec()]).unwrap();
            let hi_rows: Vec<Vec<f64>> = (0..2)
                .map(|i| (0..3).map(|j| a[3 * i + j] + b[3 * i + j]).collect())
                .collect();
            let hi = Allocation::from_rows(&hi_rows).unwrap();
            let v_lo = capped_values(&inst, &lo).unwrap();
            let v_hi = capped_values(&inst, &hi).unwrap();
            for i in 0..2 {
                prop_assert!(v_lo[i] <= v_hi[i] + 1e-12);
            }
            let other = Allocation::from_rows(&[b[..3].to_vec(), b[3..].to_vec()]).unwrap();
            let mid_rows: Vec<Vec<f64>> = (0..2)
                .map(|i| (0..3).map(|j| 0.5 * (a[3 * i + j] + b[3 * i + j])).collect())
                .collect();
            let mid = Allocation::from_rows(&mid_rows).unwrap();
            let v_b = capped_values(&inst, &other).unwrap();
            let v_mid = capped_values(&inst, &mid).unwrap();
            for i in 0..2 {
                prop_assert!(v_mid[i] >= 0.5 * (v_lo[i] + v_b[i]) - 1e-12);
            }
        }
    }
}

//! Exact linear programming over allocation regions.
//!
//! A [`Region`] is the polytope of feasible allocations: unit supply per item,
//! each agent's constraint relations, and (with budgets) the epigraph rows
//! `t_i <= B_i`, `t_i - sum_j v_ij x_ij <= 0`. Every region contains the origin.

mod simplex;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{ConstraintSet, Instance, Relation, FEAS_TOL};

use simplex::{FeasibleTableau, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    /// `x[agent][item]`.
    Alloc { agent: usize, item: usize },
    /// Epigraph variable standing for the budget-capped value of `agent`.
    Cap { agent: usize },
    /// Helper variable of an auxiliary program (e.g. the slack radius).
    Aux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowOrigin {
    Supply { item: usize },
    Constraint { agent: usize, relation: usize },
    BudgetCap { agent: usize },
    BudgetLink { agent: usize },
    Aux,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// Sparse `(variable, coefficient)` pairs.
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
    pub origin: RowOrigin,
}

impl Row {
    pub fn lhs(&self, point: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * point[j]).sum()
    }

    fn scale(&self) -> f64 {
        self.coeffs.iter().fold(1.0f64, |s, &(_, a)| s.max(a.abs()))
    }

    /// Violation relative to the largest coefficient of the row.
    pub fn violation(&self, point: &[f64]) -> f64 {
        let r = self.lhs(point) - self.rhs;
        let raw = match self.relation {
            Relation::Eq => r.abs(),
            Relation::Leq => r.max(0.0),
        };
        raw / self.scale()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    vars: Vec<VarKind>,
    rows: Vec<Row>,
}

impl Region {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn vars(&self) -> &[VarKind] {
        &self.vars
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn var_index(&self, kind: VarKind) -> Option<usize> {
        self.vars.iter().position(|&v| v == kind)
    }

    /// Worst violation over rows (row-scaled) and nonnegativity bounds.
    pub fn max_violation(&self, point: &[f64]) -> f64 {
        let bounds = point.iter().fold(0.0f64, |w, &x| w.max(-x));
        self.rows.iter().fold(bounds, |w, r| w.max(r.violation(point)))
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.num_vars() && self.max_violation(point) <= FEAS_TOL
    }

    fn check_zero_feasible(&self) -> Result<()> {
        for row in &self.rows {
            let ok = match row.relation {
                Relation::Eq => row.rhs.abs() <= FEAS_TOL,
                Relation::Leq => row.rhs >= -FEAS_TOL,
            };
            if !ok {
                let (agent, relation) = match row.origin {
                    RowOrigin::Constraint { agent, relation } => (agent, relation),
                    RowOrigin::BudgetCap { agent } | RowOrigin::BudgetLink { agent } => (agent, 0),
                    _ => (0, 0),
                };
                return Err(Error::ZeroInfeasibleConstraint { agent, relation });
            }
        }
        Ok(())
    }

    fn raw_rows(&self) -> Vec<(Vec<(usize, f64)>, Relation, f64)> {
        self.rows.iter().map(|r| (r.coeffs.clone(), r.relation, r.rhs)).collect()
    }
}

/// Supply rows, agent constraint rows and budget epigraph rows over all `n * m`
/// allocation variables (plus one cap variable per agent when budgets exist).
pub fn assemble_region(instance: &Instance, constraints: &[ConstraintSet]) -> Result<Region> {
    let active = vec![true; instance.n_agents()];
    assemble_masked(instance, constraints, &active, |_, _| true)
}

/// Like [`assemble_region`], restricted to agents with `active[i]` and to the
/// allocation variables accepted by `keep`. Dropped variables are fixed at zero.
pub(crate) fn assemble_masked(
    instance: &Instance,
    constraints: &[ConstraintSet],
    active: &[bool],
    keep: impl Fn(usize, usize) -> bool,
) -> Result<Region> {
    let (n, m) = (instance.n_agents(), instance.m_items());
    for c in constraints {
        if c.agent() >= n {
            return Err(Error::IndexOutOfRange { index: c.agent(), bound: n });
        }
        c.check_items(m)?;
    }

    let mut vars = Vec::new();
    let mut index = HashMap::new();
    for i in (0..n).filter(|&i| active[i]) {
        for j in 0..m {
            if keep(i, j) {
                index.insert((i, j), vars.len());
                vars.push(VarKind::Alloc { agent: i, item: j });
            }
        }
    }
    let mut cap_index = HashMap::new();
    if instance.budgets().is_some() {
        for i in (0..n).filter(|&i| active[i]) {
            cap_index.insert(i, vars.len());
            vars.push(VarKind::Cap { agent: i });
        }
    }

    let mut rows = Vec::new();
    for j in 0..m {
        let coeffs: Vec<(usize, f64)> =
            (0..n).filter_map(|i| index.get(&(i, j)).map(|&k| (k, 1.0))).collect();
        if !coeffs.is_empty() {
            rows.push(Row { coeffs, relation: Relation::Leq, rhs: 1.0, origin: RowOrigin::Supply { item: j } });
        }
    }
    for set in constraints.iter().filter(|c| active[c.agent()]) {
        let i = set.agent();
        for (k, rel) in set.relations().iter().enumerate() {
            let coeffs: Vec<(usize, f64)> = rel
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, &a)| a != 0.0)
                .filter_map(|(j, &a)| index.get(&(i, j)).map(|&v| (v, a)))
                .collect();
            let row = Row {
                coeffs,
                relation: rel.relation,
                rhs: rel.rhs,
                origin: RowOrigin::Constraint { agent: i, relation: k },
            };
            if row.coeffs.is_empty() {
                // Only the zero-feasibility check matters for an empty row.
                Region { vars: Vec::new(), rows: vec![row] }.check_zero_feasible()?;
                continue;
            }
            rows.push(row);
        }
    }
    if let Some(budgets) = instance.budgets() {
        for i in (0..n).filter(|&i| active[i]) {
            let t = cap_index[&i];
            rows.push(Row {
                coeffs: vec![(t, 1.0)],
                relation: Relation::Leq,
                rhs: budgets[i],
                origin: RowOrigin::BudgetCap { agent: i },
            });
            let mut link = vec![(t, 1.0)];
            link.extend(
                (0..m)
                    .filter(|&j| instance.value(i, j) != 0.0)
                    .filter_map(|j| index.get(&(i, j)).map(|&k| (k, -instance.value(i, j)))),
            );
            rows.push(Row {
                coeffs: link,
                relation: Relation::Leq,
                rhs: 0.0,
                origin: RowOrigin::BudgetLink { agent: i },
            });
        }
    }

    let region = Region { vars, rows };
    region.check_zero_feasible()?;
    Ok(region)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexSolution {
    pub point: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
}

/// A region with its phase-1 basis computed once, reusable for many objectives.
#[derive(Debug, Clone)]
pub struct PreparedRegion {
    num_vars: usize,
    tableau: FeasibleTableau,
}

impl PreparedRegion {
    pub fn new(region: &Region) -> Result<Self> {
        let tableau =
            simplex::phase_one(region.num_vars(), &region.raw_rows()).ok_or(Error::InfeasibleRegion)?;
        Ok(PreparedRegion { num_vars: region.num_vars(), tableau })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    fn check_len(&self, objective: &[f64]) -> Result<()> {
        if objective.len() != self.num_vars {
            return Err(Error::DimensionMismatch(format!(
                "objective has {} entries for {} variables",
                objective.len(),
                self.num_vars
            )));
        }
        Ok(())
    }

    pub fn maximize(&self, objective: &[f64]) -> Result<VertexSolution> {
        self.check_len(objective)?;
        Ok(Self::solution(self.tableau.maximize(objective)))
    }

    /// Same optimum value as [`maximize`](Self::maximize), starting from the basis
    /// the previous warm call ended in. Cheap when objectives change slowly.
    pub fn maximize_warm(&mut self, objective: &[f64]) -> Result<VertexSolution> {
        self.check_len(objective)?;
        Ok(Self::solution(self.tableau.maximize_warm(objective)))
    }

    fn solution(outcome: Outcome) -> VertexSolution {
        match outcome {
            Outcome::Optimal { point, objective } => {
                VertexSolution { point, objective, status: LpStatus::Optimal }
            }
            Outcome::Unbounded => VertexSolution {
                point: Vec::new(),
                objective: f64::INFINITY,
                status: LpStatus::Unbounded,
            },
        }
    }
}

/// Maximizes `objective . z` over the region with the simplex method.
pub fn lp_maximize(objective: &[f64], region: &Region) -> Result<VertexSolution> {
    PreparedRegion::new(region)?.maximize(objective)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorPoint {
    pub point: Vec<f64>,
    /// Radius of the largest box around `point` kept inside every inequality.
    pub slack: f64,
    /// Some inequality is tight at every feasible point; it was excluded from the radius.
    pub degenerate: bool,
}

/// Center of the largest axis-aligned box inside the region's inequalities.
///
/// Maximizes `s` subject to `a.z + |a|_1 s <= b` for every inequality row,
/// `z_j >= s` for every variable, and the equality rows unchanged. When the
/// optimum is `s = 0`, inequalities that are tight at every feasible point are
/// found with one LP each and removed from the radius requirement.
pub fn interior_point(region: &Region) -> InteriorPoint {
    let nv = region.num_vars();
    let best_effort = |tight_rows: &[bool], tight_vars: &[bool]| -> Option<(Vec<f64>, f64)> {
        let s = nv;
        let mut rows: Vec<(Vec<(usize, f64)>, Relation, f64)> = Vec::new();
        for (r, row) in region.rows().iter().enumerate() {
            let mut coeffs = row.coeffs.clone();
            if row.relation == Relation::Leq && !tight_rows[r] {
                let norm: f64 = row.coeffs.iter().map(|(_, a)| a.abs()).sum();
                coeffs.push((s, norm));
            }
            rows.push((coeffs, row.relation, row.rhs));
        }
        for j in (0..nv).filter(|&j| !tight_vars[j]) {
            rows.push((vec![(j, -1.0), (s, 1.0)], Relation::Leq, 0.0));
        }
        // Keeps the program bounded when nothing else limits the radius.
        rows.push((vec![(s, 1.0)], Relation::Leq, 1.0));
        let tableau = simplex::phase_one(nv + 1, &rows)?;
        let mut c = vec![0.0; nv + 1];
        c[s] = 1.0;
        match tableau.maximize(&c) {
            Outcome::Optimal { mut point, objective } => {
                point.truncate(nv);
                Some((point, objective))
            }
            Outcome::Unbounded => None,
        }
    };

    let n_rows = region.rows().len();
    let zero = || InteriorPoint { point: vec![0.0; nv], slack: 0.0, degenerate: true };
    let Some((point, slack)) = best_effort(&vec![false; n_rows], &vec![false; nv]) else {
        return zero();
    };
    if slack > 1e-12 {
        return InteriorPoint { point, slack, degenerate: false };
    }

    // Find inequalities that no feasible point can make slack.
    let Ok(prepared) = PreparedRegion::new(region) else { return zero() };
    let max_slack = |c: Vec<f64>, offset: f64| match prepared.maximize(&c) {
        Ok(sol) if sol.status == LpStatus::Optimal => sol.objective + offset,
        Ok(_) => f64::INFINITY,
        Err(_) => 0.0,
    };
    let tight_rows: Vec<bool> = region
        .rows()
        .iter()
        .map(|row| {
            row.relation == Relation::Leq && {
                let mut c = vec![0.0; nv];
                for &(j, a) in &row.coeffs {
                    c[j] -= a;
                }
                max_slack(c, row.rhs) <= 1e-12
            }
        })
        .collect();
    let tight_vars: Vec<bool> = (0..nv)
        .map(|j| {
            let mut c = vec![0.0; nv];
            c[j] = 1.0;
            max_slack(c, 0.0) <= 1e-12
        })
        .collect();
    match best_effort(&tight_rows, &tight_vars) {
        Some((point, slack)) => InteriorPoint { point, slack, degenerate: true },
        None => zero(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_instance, compile_proportionality, ProportionalitySpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn thm3_region(with_constraint: bool) -> Region {
        let inst = build_instance(&[vec![1.0, 0.0], vec![1.0, 1.0]], None).unwrap();
        let cons = if with_constraint {
            let spec = ProportionalitySpec { agent: 1, groups: vec![vec![1]], shares: vec![0.5] };
            vec![compile_proportionality(&spec, 2).unwrap()]
        } else {
            vec![]
        };
        assemble_region(&inst, &cons).unwrap()
    }

    /// Rejection-samples feasible points from the unit cube (cap variables up to `cap`).
    fn random_feasible(region: &Region, count: usize, cap: f64, seed: u64) -> Vec<Vec<f64>> {
        random_feasible_with(region, count, cap, seed, |_| {})
    }

    /// Rejection sampler; `project` may overwrite coordinates to land on equality rows.
    fn random_feasible_with(
        region: &Region,
        count: usize,
        cap: f64,
        seed: u64,
        project: impl Fn(&mut Vec<f64>),
    ) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        let mut tries = 0;
        while out.len() < count && tries < 2_000_000 {
            tries += 1;
            let mut p: Vec<f64> = region
                .vars()
                .iter()
                .map(|v| match v {
                    VarKind::Cap { .. } => rng.gen_range(0.0..cap),
                    _ => rng.gen_range(0.0..1.0),
                })
                .collect();
            project(&mut p);
            if region.contains(&p) {
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn plain_region_counts() {
        let r = thm3_region(false);
        assert_eq!(r.num_vars(), 4);
        assert_eq!(r.rows().len(), 2);
        assert!(r.contains(&[0.0; 4]));
        let r = thm3_region(true);
        assert_eq!(r.num_vars(), 4);
        assert_eq!(r.rows().iter().filter(|r| r.relation == Relation::Eq).count(), 1);
        assert_eq!(r.rows().len(), 3);
    }

    #[test]
    fn budget_region_encoding() {
        let inst = build_instance(&[vec![2.0]], Some(&[1.0])).unwrap();
        let r = assemble_region(&inst, &[]).unwrap();
        assert_eq!(r.vars(), &[VarKind::Alloc { agent: 0, item: 0 }, VarKind::Cap { agent: 0 }]);
        let rows: Vec<(Vec<(usize, f64)>, f64)> = r.rows().iter().map(|r| (r.coeffs.clone(), r.rhs)).collect();
        assert_eq!(rows, vec![(vec![(0, 1.0)], 1.0), (vec![(1, 1.0)], 1.0), (vec![(1, 1.0), (0, -2.0)], 0.0)]);
    }

    #[test]
    fn rejects_relation_excluding_zero() {
        use crate::model::LinearRelation;
        let inst = build_instance(&[vec![1.0, 1.0]], None).unwrap();
        let bad = LinearRelation { agent: 0, coeffs: vec![1.0, 0.0], relation: Relation::Leq, rhs: -0.5 };
        let set = ConstraintSet::new_unchecked(0, vec![bad]);
        assert!(matches!(
            assemble_region(&inst, &[set]),
            Err(Error::ZeroInfeasibleConstraint { agent: 0, relation: 0 })
        ));
    }

    #[test]
    fn transportation_argmax() {
        let r = thm3_region(false);
        // c[i*2 + j]
        let c = [3.0, -1.0, 2.0, 0.5];
        let sol = lp_maximize(&c, &r).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 3.5).abs() < 1e-12);
        assert_eq!(sol.point, vec![1.0, 0.0, 0.0, 1.0]);
        let zero = lp_maximize(&[0.0; 4], &r).unwrap();
        assert_eq!(zero.objective, 0.0);
        assert!(r.contains(&zero.point));
    }

    #[test]
    fn constrained_vertex_beats_random_points() {
        let r = thm3_region(true);
        // V-gradient of Nash welfare at the uniform point x = 1/4: V = (1/4, 1/2).
        let c = [4.0, 0.0, 2.0, 2.0];
        let sol = lp_maximize(&c, &r).unwrap();
        assert!(r.contains(&sol.point));
        assert!((sol.point[2] - sol.point[3]).abs() < 1e-12);
        for p in random_feasible(&r, 10_000, 1.0, 7) {
            let val: f64 = p.iter().zip(&c).map(|(a, b)| a * b).sum();
            assert!(sol.objective >= val - 1e-12);
        }
    }

    #[test]
    fn random_objectives_dominate_samples() {
        let inst = build_instance(&[vec![1.0, 2.0, 0.5], vec![0.3, 1.0, 2.0]], Some(&[1.5, 2.0])).unwrap();
        let spec = ProportionalitySpec { agent: 0, groups: vec![vec![0], vec![1, 2]], shares: vec![0.4, 0.6] };
        let r = assemble_region(&inst, &[compile_proportionality(&spec, 3).unwrap()]).unwrap();
        let idx = |i| r.var_index(VarKind::Alloc { agent: 0, item: i }).unwrap();
        let (x0, x1, x2) = (idx(0), idx(1), idx(2));
        let samples = random_feasible_with(&r, 10_000, 2.0, 11, |p| p[x0] = (p[x1] + p[x2]) * 0.4 / 0.6);
        assert!(samples.len() > 100);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let c: Vec<f64> = (0..r.num_vars()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sol = lp_maximize(&c, &r).unwrap();
            assert!(r.contains(&sol.point));
            let again = lp_maximize(&c, &r).unwrap();
            assert_eq!(sol.point, again.point);
            for p in &samples {
                let val: f64 = p.iter().zip(&c).map(|(a, b)| a * b).sum();
                assert!(sol.objective >= val - 1e-9);
            }
        }
    }

    #[test]
    fn warm_calls_match_cold_calls() {
        let inst = build_instance(&[vec![1.0, 2.0, 0.5], vec![0.3, 1.0, 2.0]], Some(&[1.5, 2.0])).unwrap();
        let spec = ProportionalitySpec { agent: 0, groups: vec![vec![0], vec![1, 2]], shares: vec![0.4, 0.6] };
        let r = assemble_region(&inst, &[compile_proportionality(&spec, 3).unwrap()]).unwrap();
        let mut warm = PreparedRegion::new(&r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let c: Vec<f64> = (0..r.num_vars()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let cold = lp_maximize(&c, &r).unwrap();
            let hot = warm.maximize_warm(&c).unwrap();
            assert!((cold.objective - hot.objective).abs() < 1e-10);
            assert!(r.contains(&hot.point));
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let region = Region {
            vars: vec![VarKind::Aux],
            rows: vec![Row { coeffs: vec![(0, 1.0)], relation: Relation::Leq, rhs: -1.0, origin: RowOrigin::Aux }],
        };
        assert!(matches!(lp_maximize(&[1.0], &region), Err(Error::InfeasibleRegion)));
        let open = Region {
            vars: vec![VarKind::Aux, VarKind::Aux],
            rows: vec![Row { coeffs: vec![(0, 1.0)], relation: Relation::Leq, rhs: 1.0, origin: RowOrigin::Aux }],
        };
        assert_eq!(lp_maximize(&[0.0, 1.0], &open).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_with_nonzero_rhs() {
        let region = Region {
            vars: vec![VarKind::Aux, VarKind::Aux],
            rows: vec![
                Row { coeffs: vec![(0, 1.0), (1, 1.0)], relation: Relation::Eq, rhs: 1.0, origin: RowOrigin::Aux },
                Row { coeffs: vec![(0, 1.0)], relation: Relation::Leq, rhs: 0.25, origin: RowOrigin::Aux },
            ],
        };
        let sol = lp_maximize(&[1.0, 0.0], &region).unwrap();
        assert_eq!(sol.point, vec![0.25, 0.75]);
    }

    #[test]
    fn interior_of_plain_square() {
        let r = thm3_region(false);
        let ip = interior_point(&r);
        assert!(!ip.degenerate);
        for x in &ip.point {
            assert!((x - 0.25).abs() < 1e-12);
        }
        for row in r.rows() {
            assert!((row.rhs - row.lhs(&ip.point) - 0.5).abs() < 1e-12);
        }
        let one = assemble_region(&build_instance(&[vec![1.0]], None).unwrap(), &[]).unwrap();
        let ip = interior_point(&one);
        assert!((ip.point[0] - 0.5).abs() < 1e-12 && (ip.slack - 0.5).abs() < 1e-12);
    }

    #[test]
    fn interior_respects_equalities() {
        let r = thm3_region(true);
        let ip = interior_point(&r);
        assert!(r.max_violation(&ip.point) <= 1e-9);
        assert!(ip.point.iter().sum::<f64>() > 0.0);
        assert!(ip.slack > 0.0);
    }

    #[test]
    fn interior_flags_forced_zero() {
        use crate::model::LinearRelation;
        let inst = build_instance(&[vec![1.0, 1.0], vec![1.0, 1.0]], None).unwrap();
        let pin = LinearRelation { agent: 0, coeffs: vec![1.0, 0.0], relation: Relation::Leq, rhs: 0.0 };
        let r = assemble_region(&inst, &[ConstraintSet::new(0, vec![pin]).unwrap()]).unwrap();
        let ip = interior_point(&r);
        assert!(ip.degenerate);
        assert!(ip.slack > 0.0);
        assert!(r.contains(&ip.point));
        assert!(ip.point[0].abs() < 1e-12);
        assert!(ip.point[1] > 0.0 && ip.point[2] > 0.0 && ip.point[3] > 0.0);
    }
}

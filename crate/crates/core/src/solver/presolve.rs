//! Shrinks the program before iterating: drops agents that cannot get positive
//! value and allocation variables that are either useless or forced to zero.

use crate::error::Result;
use crate::lp::{assemble_masked, PreparedRegion, VarKind};
use crate::model::{ConstraintSet, Instance, Relation};

const COEF_EPS: f64 = 1e-12;
/// Agents whose best achievable value is below this are treated as inactive.
pub(crate) const ACTIVE_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct Presolved {
    pub active: Vec<bool>,
    pub constrained: Vec<bool>,
    m_items: usize,
    keep: Vec<bool>,
}

impl Presolved {
    pub fn keeps(&self, agent: usize, item: usize) -> bool {
        self.keep[agent * self.m_items + item]
    }
}

/// Variables of `agent` that every feasible allocation sets to zero, judged from
/// rows with zero right-hand side whose nonzero coefficients share one sign
/// (including the sum of all such equality rows).
fn forced_zero(agent_sets: &[&ConstraintSet], m: usize) -> Vec<bool> {
    let mut forced = vec![false; m];
    let mut mark = |coeffs: &[f64], eq: bool| {
        let pos = coeffs.iter().any(|&a| a > COEF_EPS);
        let neg = coeffs.iter().any(|&a| a < -COEF_EPS);
        // An Leq row with rhs 0 pins its variables only when all coefficients are positive.
        if (pos != neg) && (eq || pos) {
            for (j, &a) in coeffs.iter().enumerate() {
                if a.abs() > COEF_EPS {
                    forced[j] = true;
                }
            }
        }
    };
    let mut eq_sum = vec![0.0; m];
    for set in agent_sets {
        for rel in set.relations() {
            if rel.rhs != 0.0 {
                continue;
            }
            let eq = rel.relation == Relation::Eq;
            mark(&rel.coeffs, eq);
            if eq {
                for (s, a) in eq_sum.iter_mut().zip(&rel.coeffs) {
                    *s += a;
                }
            }
        }
    }
    let scale = eq_sum.iter().fold(1.0f64, |s, a| s.max(a.abs()));
    let cleaned: Vec<f64> = eq_sum.iter().map(|&a| if a.abs() <= 1e-10 * scale { 0.0 } else { a }).collect();
    mark(&cleaned, true);
    forced
}

pub(crate) fn presolve(instance: &Instance, constraints: &[ConstraintSet]) -> Result<Presolved> {
    let (n, m) = (instance.n_agents(), instance.m_items());
    let mut constrained = vec![false; n];
    for set in constraints {
        if set.agent() < n && !set.is_empty() {
            constrained[set.agent()] = true;
        }
    }
    let mut keep = vec![false; n * m];
    for i in 0..n {
        let sets: Vec<&ConstraintSet> = constraints.iter().filter(|c| c.agent() == i).collect();
        let forced = if constrained[i] { forced_zero(&sets, m) } else { vec![false; m] };
        for j in 0..m {
            let touched = sets.iter().any(|s| s.relations().iter().any(|r| r.coeffs.get(j).is_some_and(|a| *a != 0.0)));
            keep[i * m + j] = !forced[j] && (instance.value(i, j) > 0.0 || touched);
        }
    }

    let mut active = vec![false; n];
    for i in 0..n {
        let row_positive = (0..m).any(|j| keep[i * m + j] && instance.value(i, j) > 0.0);
        if !row_positive {
            continue;
        }
        if !constrained[i] {
            active[i] = true;
            continue;
        }
        let mut alone = vec![false; n];
        alone[i] = true;
        let region = assemble_masked(instance, constraints, &alone, |a, j| keep[a * m + j])?;
        let c: Vec<f64> = region
            .vars()
            .iter()
            .map(|v| match *v {
                VarKind::Cap { .. } => 1.0,
                VarKind::Alloc { agent, item } if instance.budgets().is_none() => instance.value(agent, item),
                _ => 0.0,
            })
            .collect();
        let best = PreparedRegion::new(&region)?.maximize(&c)?;
        active[i] = best.objective > ACTIVE_EPS;
    }
    for i in (0..n).filter(|&i| !active[i]) {
        keep[i * m..(i + 1) * m].iter_mut().for_each(|k| *k = false);
    }
    Ok(Presolved { active, constrained, m_items: m, keep })
}

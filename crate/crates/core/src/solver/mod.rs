//! Welfare maximization `max sum_i f(V_i)` over the constrained allocation polytope.
//!
//! The iteration is an away-step Frank-Wolfe method whose linear subproblems go to
//! the exact simplex oracle in [`crate::lp`]. Its stopping test is the gradient
//! optimality condition: the gap `max_V grad f(V*) . (V - V*)` must fall below
//! `tol * (1 + |objective|)`.

mod fw;
mod oracle;
mod presolve;

use serde_json::json;

use crate::error::{Error, Result};
use crate::lp::{assemble_masked, PreparedRegion, VarKind};
use crate::model::{capped_values, Allocation, ConstraintSet, Instance, ValueVector};
use crate::welfare::WelfareRule;

pub use oracle::brute_force_oracle;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 50_000;
/// Values are floored here inside `f` and `f'` while iterating.
pub const VALUE_FLOOR: f64 = 1e-12;
/// Restarts allowed when snapping cap variables re-opens the gap.
const MAX_RESTARTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub allocation: Allocation,
    pub values: ValueVector,
    pub objective: f64,
    /// Absolute Frank-Wolfe gap at the returned allocation.
    pub fw_gap: f64,
    pub iterations: usize,
    pub rule: WelfareRule,
    /// Agents included in the objective, ascending.
    pub active_agents: Vec<usize>,
    pub converged: bool,
}

impl SolveReport {
    pub fn to_json_value(&self) -> serde_json::Value {
        json!({
            "rule": self.rule.to_string(),
            "objective": self.objective,
            "fw_gap": self.fw_gap,
            "iterations": self.iterations,
            "converged": self.converged,
            "active_agents": self.active_agents,
            "values": self.values.0,
            "allocation": self.allocation.rows(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_json_value())?)
    }
}

/// Sum of `f(V_i)` over `active` agents, with unfloored values.
pub fn welfare_objective(rule: &WelfareRule, values: &[f64], active: &[usize]) -> f64 {
    active.iter().map(|&i| rule.f(values[i])).sum()
}

/// Maximizes `sum_i f(V_i)` subject to unit supply, the given constraint sets and
/// budget caps. Agents that cannot receive positive value are left out of the
/// objective and get nothing.
///
/// On non-convergence the best iterate is returned inside
/// [`Error::ToleranceNotReached`].
pub fn maximize_welfare(
    instance: &Instance,
    rule: &WelfareRule,
    constraints: &[ConstraintSet],
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidTolerance(tol));
    }
    rule.validate()?;
    let (n, m) = (instance.n_agents(), instance.m_items());
    for set in constraints {
        if set.agent() >= n {
            return Err(Error::IndexOutOfRange { index: set.agent(), bound: n });
        }
    }
    let pre = presolve::presolve(instance, constraints)?;
    let active_agents: Vec<usize> = (0..n).filter(|&i| pre.active[i]).collect();
    let region = assemble_masked(instance, constraints, &pre.active, |i, j| pre.keeps(i, j))?;

    let finish = |allocation: Allocation, fw_gap: f64, iterations: usize, converged: bool| -> Result<SolveReport> {
        let values = capped_values(instance, &allocation)?;
        let objective = welfare_objective(rule, &values.0, &active_agents);
        let report = SolveReport {
            allocation,
            values,
            objective,
            fw_gap,
            iterations,
            rule: *rule,
            active_agents: active_agents.clone(),
            converged,
        };
        if converged {
            Ok(report)
        } else {
            Err(Error::ToleranceNotReached { tol, report: Box::new(report) })
        }
    };
    if active_agents.is_empty() {
        return finish(Allocation::zeros(n, m), 0.0, 0, true);
    }

    let mut problem = fw::Problem::new(instance, rule, region, pre.active.clone())?;
    let start = start_points(instance, &mut problem, &pre)?;
    let mut run = problem.run(start, tol, max_iter)?;
    let mut iterations = run.iterations;
    let mut restarts = 0;
    loop {
        let z = snap_caps(instance, &problem.region, &run.z);
        let values = problem.values(&z);
        let threshold = tol * (1.0 + welfare_objective(rule, &values, &active_agents).abs());
        let gap = if z == run.z { run.gap } else { problem.gap_at(&z)? };
        let done = !run.converged || gap <= threshold || restarts >= MAX_RESTARTS;
        if done {
            let converged = run.converged && gap <= threshold;
            return finish(to_allocation(instance, &problem.region, &z), gap, iterations, converged);
        }
        restarts += 1;
        run = problem.run(vec![z], tol, max_iter.saturating_sub(iterations))?;
        iterations += run.iterations;
    }
}

/// [`maximize_welfare`] with [`SolverOptions`].
pub fn solve(
    instance: &Instance,
    rule: &WelfareRule,
    constraints: &[ConstraintSet],
    options: &SolverOptions,
) -> Result<SolveReport> {
    maximize_welfare(instance, rule, constraints, options.tol, options.max_iter)
}

/// Recomputes the Frank-Wolfe gap of `allocation` from scratch over the full
/// (unreduced) region, counting only `active` agents in the objective.
pub fn certify(
    instance: &Instance,
    rule: &WelfareRule,
    constraints: &[ConstraintSet],
    allocation: &Allocation,
    active: &[usize],
) -> Result<f64> {
    let n = instance.n_agents();
    let values = capped_values(instance, allocation)?;
    let mut w = vec![0.0; n];
    for &i in active {
        w[i] = rule.f_prime(values[i].max(VALUE_FLOOR));
    }
    let mask = vec![true; n];
    let region = assemble_masked(instance, constraints, &mask, |_, _| true)?;
    let budgets = instance.budgets().is_some();
    let c: Vec<f64> = region
        .vars()
        .iter()
        .map(|v| match *v {
            VarKind::Cap { agent } => w[agent],
            VarKind::Alloc { agent, item } if !budgets => w[agent] * instance.value(agent, item),
            _ => 0.0,
        })
        .collect();
    let best = PreparedRegion::new(&region)?.maximize(&c)?;
    let here: f64 = w.iter().zip(&values.0).map(|(a, b)| a * b).sum();
    Ok((best.objective - here).max(0.0))
}

/// Equal-weight start: a fair-share point for unconstrained agents plus, for each
/// constrained agent, a vertex maximizing that agent's value alone. Every active
/// agent has positive value at the average.
fn start_points(instance: &Instance, problem: &mut fw::Problem, pre: &presolve::Presolved) -> Result<Vec<Vec<f64>>> {
    let n = instance.n_agents();
    let vars = problem.region.vars().to_vec();
    let free = |i: usize| pre.active[i] && !pre.constrained[i];
    let mut points = Vec::new();

    if (0..n).any(free) {
        let mut takers = vec![0usize; instance.m_items()];
        for v in &vars {
            if let VarKind::Alloc { agent, item } = *v {
                if free(agent) && instance.value(agent, item) > 0.0 {
                    takers[item] += 1;
                }
            }
        }
        let mut z: Vec<f64> = vars
            .iter()
            .map(|v| match *v {
                VarKind::Alloc { agent, item } if free(agent) && instance.value(agent, item) > 0.0 => {
                    1.0 / takers[item] as f64
                }
                _ => 0.0,
            })
            .collect();
        z = snap_caps(instance, &problem.region, &z);
        points.push(z);
    }
    for i in (0..n).filter(|&i| pre.active[i] && pre.constrained[i]) {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        points.push(problem.linear_max(&w)?);
    }
    Ok(points)
}

/// Raises every cap variable to `min(B_i, sum_j v_ij x_ij)`.
fn snap_caps(instance: &Instance, region: &crate::lp::Region, z: &[f64]) -> Vec<f64> {
    let Some(budgets) = instance.budgets() else { return z.to_vec() };
    let mut linear = vec![0.0; instance.n_agents()];
    for (k, v) in region.vars().iter().enumerate() {
        if let VarKind::Alloc { agent, item } = *v {
            linear[agent] += instance.value(agent, item) * z[k];
        }
    }
    let mut out = z.to_vec();
    for (k, v) in region.vars().iter().enumerate() {
        if let VarKind::Cap { agent } = *v {
            out[k] = linear[agent].min(budgets[agent]);
        }
    }
    out
}

fn to_allocation(instance: &Instance, region: &crate::lp::Region, z: &[f64]) -> Allocation {
    let mut alloc = Allocation::zeros(instance.n_agents(), instance.m_items());
    for (k, v) in region.vars().iter().enumerate() {
        if let VarKind::Alloc { agent, item } = *v {
            alloc.set(agent, item, z[k].clamp(0.0, 1.0));
        }
    }
    alloc
}

#[cfg(test)]
mod tests;

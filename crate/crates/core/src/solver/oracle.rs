//! Exhaustive grid search for tiny instances, independent of the LP machinery.

use crate::error::{Error, Result};
use crate::model::{ConstraintSet, Instance, Relation};
use crate::welfare::WelfareRule;

const MAX_FREE_DIMS: usize = 6;
const SLACK: f64 = 1e-9;
const ELIM_TOL: f64 = 1e-12;

struct Grid<'a> {
    instance: &'a Instance,
    /// `(agent, item)` of each retained variable.
    vars: Vec<(usize, usize)>,
    free: Vec<usize>,
    /// `x_pivot = rhs - sum_k coef_k * y_k` over free coordinates `y`.
    pivots: Vec<(usize, f64, Vec<f64>)>,
    /// Inequalities as `(coefficients over vars, rhs)`.
    leq: Vec<(Vec<f64>, f64)>,
}

impl Grid<'_> {
    /// Fills `x` and `v`; returns false if the point is infeasible.
    fn eval(&self, y: &[f64], x: &mut [f64], v: &mut [f64], supply: &mut [f64]) -> bool {
        for (k, &f) in self.free.iter().enumerate() {
            x[f] = y[k];
        }
        for (p, rhs, coef) in &self.pivots {
            let val = rhs - coef.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
            if !(-SLACK..=1.0 + SLACK).contains(&val) {
                return false;
            }
            x[*p] = val.max(0.0);
        }
        supply.iter_mut().for_each(|a| *a = 0.0);
        v.iter_mut().for_each(|a| *a = 0.0);
        for (k, &(i, j)) in self.vars.iter().enumerate() {
            supply[j] += x[k];
            v[i] += self.instance.value(i, j) * x[k];
        }
        if supply.iter().any(|&s| s > 1.0 + SLACK) {
            return false;
        }
        for (coef, rhs) in &self.leq {
            let lhs: f64 = coef.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
            if lhs > rhs + SLACK {
                return false;
            }
        }
        if let Some(b) = self.instance.budgets() {
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi = vi.min(*bi);
            }
        }
        true
    }

    /// Visits every point `lo + k * step` (per coordinate, `k = 0..=steps`) inside `[0, 1]`.
    fn scan(&self, lo: &[f64], step: f64, steps: usize, mut visit: impl FnMut(&[f64], &[f64])) {
        let d = self.free.len();
        let mut idx = vec![0usize; d];
        let mut y = vec![0.0; d];
        let mut x = vec![0.0; self.vars.len()];
        let mut v = vec![0.0; self.instance.n_agents()];
        let mut supply = vec![0.0; self.instance.m_items()];
        loop {
            let mut inside = true;
            for k in 0..d {
                y[k] = lo[k] + idx[k] as f64 * step;
                inside &= (-1e-12..=1.0 + 1e-12).contains(&y[k]);
                y[k] = y[k].clamp(0.0, 1.0);
            }
            if inside && self.eval(&y, &mut x, &mut v, &mut supply) {
                visit(&y, &v);
            }
            let mut k = 0;
            loop {
                if k == d {
                    return;
                }
                idx[k] += 1;
                if idx[k] <= steps {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
}

/// Best objective over a grid of feasible allocations with spacing `1/grid_steps`,
/// refined once on a finer grid around the best point.
///
/// Equality relations are eliminated first; at most six coordinates may remain free.
/// Agents whose value is zero at every grid point are left out of the objective.
pub fn brute_force_oracle(
    instance: &Instance,
    rule: &WelfareRule,
    constraints: &[ConstraintSet],
    grid_steps: usize,
) -> Result<f64> {
    rule.validate()?;
    if grid_steps == 0 {
        return Err(Error::BadParams("grid_steps must be positive".into()));
    }
    let (n, m) = (instance.n_agents(), instance.m_items());
    let touched = |i: usize, j: usize| {
        constraints
            .iter()
            .filter(|c| c.agent() == i)
            .any(|c| c.relations().iter().any(|r| r.coeffs.get(j).is_some_and(|a| *a != 0.0)))
    };
    let vars: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|&(i, j)| instance.value(i, j) > 0.0 || touched(i, j))
        .collect();
    let nv = vars.len();
    let dense = |set: &ConstraintSet, coeffs: &[f64]| -> Vec<f64> {
        vars.iter().map(|&(i, j)| if i == set.agent() { coeffs.get(j).copied().unwrap_or(0.0) } else { 0.0 }).collect()
    };

    let mut eq: Vec<Vec<f64>> = Vec::new();
    let mut leq = Vec::new();
    for set in constraints {
        if set.agent() >= n {
            return Err(Error::IndexOutOfRange { index: set.agent(), bound: n });
        }
        for r in set.relations() {
            let mut row = dense(set, &r.coeffs);
            match r.relation {
                Relation::Eq => {
                    row.push(r.rhs);
                    eq.push(row);
                }
                Relation::Leq => leq.push((row, r.rhs)),
            }
        }
    }

    // Reduced row echelon form of the equality system.
    let mut pivot_cols = Vec::new();
    let mut rank = 0;
    for col in 0..nv {
        let Some(best) = (rank..eq.len()).max_by(|&a, &b| eq[a][col].abs().total_cmp(&eq[b][col].abs())) else {
            break;
        };
        if eq[best][col].abs() <= ELIM_TOL {
            continue;
        }
        eq.swap(rank, best);
        let piv = eq[rank][col];
        eq[rank].iter_mut().for_each(|a| *a /= piv);
        for r in 0..eq.len() {
            if r != rank && eq[r][col] != 0.0 {
                let f = eq[r][col];
                let (src, dst) = if r < rank {
                    let (a, b) = eq.split_at_mut(rank);
                    (&b[0], &mut a[r])
                } else {
                    let (a, b) = eq.split_at_mut(r);
                    (&a[rank], &mut b[0])
                };
                for (d, s) in dst.iter_mut().zip(src.iter()) {
                    *d -= f * s;
                }
            }
        }
        pivot_cols.push(col);
        rank += 1;
    }
    if eq[rank..].iter().any(|row| row[nv].abs() > 1e-9) {
        return Err(Error::InfeasibleRegion);
    }
    let free: Vec<usize> = (0..nv).filter(|c| !pivot_cols.contains(c)).collect();
    if free.len() > MAX_FREE_DIMS {
        return Err(Error::TooLargeForOracle(free.len()));
    }
    let pivots = pivot_cols
        .iter()
        .enumerate()
        .map(|(r, &p)| (p, eq[r][nv], free.iter().map(|&f| eq[r][f]).collect()))
        .collect();
    let grid = Grid { instance, vars, free, pivots, leq };
    let d = grid.free.len();

    let step = 1.0 / grid_steps as f64;
    let origin = vec![0.0; d];
    let mut best_v = vec![0.0f64; n];
    let mut any = false;
    grid.scan(&origin, step, grid_steps, |_, v| {
        any = true;
        for (b, x) in best_v.iter_mut().zip(v) {
            *b = b.max(*x);
        }
    });
    if !any {
        return Err(Error::InfeasibleRegion);
    }
    let active: Vec<usize> = (0..n).filter(|&i| best_v[i] > 1e-12).collect();
    let objective = |v: &[f64]| -> f64 { active.iter().map(|&i| rule.f(v[i])).sum() };

    let best_on = |lo: &[f64], step: f64, best: &mut (f64, Vec<f64>)| {
        grid.scan(lo, step, grid_steps, |y, v| {
            let f = objective(v);
            if f > best.0 {
                *best = (f, y.to_vec());
            }
        });
    };
    let mut best = (f64::NEG_INFINITY, origin.clone());
    best_on(&origin, step, &mut best);
    let lo: Vec<f64> = best.1.iter().map(|y| y - step).collect();
    best_on(&lo, 2.0 * step / grid_steps as f64, &mut best);
    Ok(best.0)
}

//! Away-step Frank-Wolfe in the reduced variable space.
//!
//! Every quantity the iteration needs is linear in the agents' values: for a
//! point `z` of the region, `V_i(z)` is `sum_j v_ij x_ij` (or the cap variable
//! `t_i` when budgets exist). Atoms therefore carry their value vectors, and the
//! gradient of `sum_i f(V_i)` pulled back to `z` is `f'(V_i)` times that map.

use crate::error::Result;
use crate::lp::{PreparedRegion, Region, VarKind};
use crate::model::Instance;
use crate::welfare::WelfareRule;

use super::VALUE_FLOOR;

const LINE_SEARCH_STEPS: usize = 80;
/// Cap on pairwise steps within the active set between two oracle calls.
const CORRECTIVE_STEPS: usize = 1000;
const SAME_ATOM: f64 = 1e-12;

struct Atom {
    z: Vec<f64>,
    v: Vec<f64>,
    weight: f64,
}

pub(crate) struct Problem<'a> {
    pub rule: &'a WelfareRule,
    pub region: Region,
    lp: PreparedRegion,
    /// For each variable, the agent whose value it feeds and the coefficient.
    value_map: Vec<Option<(usize, f64)>>,
    active: Vec<bool>,
    n_agents: usize,
}

pub(crate) struct Iterate {
    pub z: Vec<f64>,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl<'a> Problem<'a> {
    pub fn new(instance: &Instance, rule: &'a WelfareRule, region: Region, active: Vec<bool>) -> Result<Self> {
        let budgets = instance.budgets().is_some();
        let value_map = region
            .vars()
            .iter()
            .map(|v| match *v {
                VarKind::Cap { agent } => Some((agent, 1.0)),
                VarKind::Alloc { agent, item } if !budgets => Some((agent, instance.value(agent, item))),
                _ => None,
            })
            .collect();
        let lp = PreparedRegion::new(&region)?;
        Ok(Problem { rule, region, lp, value_map, active, n_agents: instance.n_agents() })
    }

    pub fn values(&self, z: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.n_agents];
        for (k, entry) in self.value_map.iter().enumerate() {
            if let Some((i, a)) = *entry {
                v[i] += a * z[k];
            }
        }
        v
    }

    /// Objective with values floored, as seen by the iteration.
    fn objective(&self, v: &[f64]) -> f64 {
        (0..self.n_agents).filter(|&i| self.active[i]).map(|i| self.rule.f(v[i].max(VALUE_FLOOR))).sum()
    }

    fn weights(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n_agents)
            .map(|i| if self.active[i] { self.rule.f_prime(v[i].max(VALUE_FLOOR)) } else { 0.0 })
            .collect()
    }

    fn dot(w: &[f64], v: &[f64]) -> f64 {
        w.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Maximizes `sum_i w_i V_i(z)` over the region, continuing from the last basis.
    pub fn linear_max(&mut self, w: &[f64]) -> Result<Vec<f64>> {
        let c: Vec<f64> = self.value_map.iter().map(|e| e.map_or(0.0, |(i, a)| w[i] * a)).collect();
        Ok(self.lp.maximize_warm(&c)?.point)
    }

    /// Frank-Wolfe gap at `z`: `max_s grad . (s - z)`.
    pub fn gap_at(&mut self, z: &[f64]) -> Result<f64> {
        let v = self.values(z);
        let w = self.weights(&v);
        let s = self.linear_max(&w)?;
        Ok((Self::dot(&w, &self.values(&s)) - Self::dot(&w, &v)).max(0.0))
    }

    /// Exact line search on `eta -> F(V + eta d)` over `[0, eta_max]` by
    /// bisection on its derivative.
    fn line_search(&self, v: &[f64], d: &[f64], eta_max: f64) -> f64 {
        let slope = |eta: f64| -> f64 {
            (0..self.n_agents)
                .filter(|&i| self.active[i] && d[i] != 0.0)
                .map(|i| self.rule.f_prime((v[i] + eta * d[i]).max(VALUE_FLOOR)) * d[i])
                .sum()
        };
        if slope(eta_max) >= 0.0 {
            return eta_max;
        }
        let (mut lo, mut hi) = (0.0, eta_max);
        for _ in 0..LINE_SEARCH_STEPS {
            let mid = 0.5 * (lo + hi);
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Runs the iteration from a convex combination of `start` points (equal weights).
    pub fn run(&mut self, start: Vec<Vec<f64>>, tol: f64, max_iter: usize) -> Result<Iterate> {
        let mut atoms: Vec<Atom> = Vec::new();
        let share = 1.0 / start.len() as f64;
        let nv = self.region.num_vars();
        let mut z = vec![0.0; nv];
        for p in start {
            for (a, b) in z.iter_mut().zip(&p) {
                *a += share * b;
            }
            let pv = self.values(&p);
            push_atom(&mut atoms, p, pv, share);
        }
        let mut v = self.values(&z);
        let mut iterations = 0;
        loop {
            let w = self.weights(&v);
            let s = self.linear_max(&w)?;
            let sv = self.values(&s);
            let here = Self::dot(&w, &v);
            let gap = (Self::dot(&w, &sv) - here).max(0.0);
            if gap <= tol * (1.0 + self.objective(&v).abs()) {
                return Ok(Iterate { z, gap, iterations, converged: true });
            }
            if iterations >= max_iter {
                return Ok(Iterate { z, gap, iterations, converged: false });
            }
            iterations += 1;

            let (away, away_val) = atoms
                .iter()
                .enumerate()
                .map(|(k, a)| (k, Self::dot(&w, &a.v)))
                .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
            let away_gap = here - away_val;

            if gap >= away_gap || atoms.len() == 1 {
                let d: Vec<f64> = sv.iter().zip(&v).map(|(a, b)| a - b).collect();
                let eta = self.line_search(&v, &d, 1.0);
                if eta <= 0.0 {
                    continue;
                }
                for (zk, sk) in z.iter_mut().zip(&s) {
                    *zk += eta * (sk - *zk);
                }
                if eta >= 1.0 {
                    atoms.clear();
                } else {
                    atoms.iter_mut().for_each(|a| a.weight *= 1.0 - eta);
                }
                push_atom(&mut atoms, s, sv, eta);
            } else {
                let lambda = atoms[away].weight;
                let eta_max = lambda / (1.0 - lambda);
                let d: Vec<f64> = v.iter().zip(&atoms[away].v).map(|(a, b)| a - b).collect();
                let eta = self.line_search(&v, &d, eta_max);
                if eta <= 0.0 {
                    continue;
                }
                for (zk, ak) in z.iter_mut().zip(&atoms[away].z) {
                    *zk += eta * (*zk - ak);
                }
                atoms.iter_mut().for_each(|a| a.weight *= 1.0 + eta);
                if eta >= eta_max {
                    atoms.swap_remove(away);
                } else {
                    atoms[away].weight -= eta;
                }
            }
            z.iter_mut().for_each(|x| *x = x.max(0.0));
            v = self.values(&z);
            let threshold = tol * (1.0 + self.objective(&v).abs());
            self.corrective(&mut atoms, &mut z, &mut v, 0.5 * threshold);
        }
    }

    /// Pairwise steps between the best and worst atoms of the active set, which
    /// need no oracle call. Stops once their gap drops below `threshold`.
    fn corrective(&self, atoms: &mut Vec<Atom>, z: &mut [f64], v: &mut Vec<f64>, threshold: f64) {
        for _ in 0..CORRECTIVE_STEPS {
            if atoms.len() < 2 {
                return;
            }
            let w = self.weights(v);
            let scores: Vec<f64> = atoms.iter().map(|a| Self::dot(&w, &a.v)).collect();
            let (mut to, mut from) = (0, 0);
            for k in 1..atoms.len() {
                if scores[k] > scores[to] {
                    to = k;
                }
                if scores[k] < scores[from] {
                    from = k;
                }
            }
            if scores[to] - scores[from] <= threshold {
                return;
            }
            let eta_max = atoms[from].weight;
            let d: Vec<f64> = atoms[to].v.iter().zip(&atoms[from].v).map(|(a, b)| a - b).collect();
            let eta = self.line_search(v, &d, eta_max);
            if eta <= 0.0 {
                return;
            }
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = (*zk + eta * (atoms[to].z[k] - atoms[from].z[k])).max(0.0);
            }
            atoms[to].weight += eta;
            if eta >= eta_max {
                atoms.swap_remove(from);
            } else {
                atoms[from].weight -= eta;
            }
            *v = self.values(z);
        }
    }
}

fn push_atom(atoms: &mut Vec<Atom>, z: Vec<f64>, v: Vec<f64>, weight: f64) {
    let same = atoms
        .iter()
        .position(|a| a.z.iter().zip(&z).all(|(p, q)| (p - q).abs() <= SAME_ATOM));
    match same {
        Some(k) => atoms[k].weight += weight,
        None => atoms.push(Atom { z, v, weight }),
    }
}

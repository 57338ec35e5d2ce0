//! Dense two-phase tableau simplex.
//!
//! Rows are kept in a flat row-major buffer. Pivots skip rows whose entry in
//! the pivot column is zero and only touch the nonzero columns of the pivot row,
//! which keeps the structured allocation tableaux cheap without a sparse LU.

use crate::model::Relation;

/// Entries smaller than this are never used as pivots.
pub(crate) const PIVOT_TOL: f64 = 1e-10;
const REDUCED_COST_TOL: f64 = 1e-11;
const PHASE1_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-14;
/// Consecutive degenerate pivots before pricing falls back to Bland's rule.
const DEGENERATE_STREAK: usize = 64;

#[derive(Debug)]
pub(crate) enum Outcome {
    Optimal { point: Vec<f64>, objective: f64 },
    Unbounded,
}

/// A tableau whose basis is primal feasible; artificial columns already removed.
#[derive(Debug, Clone)]
pub(crate) struct FeasibleTableau {
    n_struct: usize,
    width: usize,
    a: Vec<f64>,
    basis: Vec<usize>,
}

struct Working {
    width: usize,
    a: Vec<f64>,
    basis: Vec<usize>,
    red: Vec<f64>,
}

impl Working {
    fn rows(&self) -> usize {
        self.basis.len()
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, r: usize, c: usize, nz: &mut Vec<usize>) {
        let w = self.width;
        let inv = 1.0 / self.at(r, c);
        nz.clear();
        {
            let row = &mut self.a[r * w..(r + 1) * w];
            for (k, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= inv;
                    if v.abs() < DROP_TOL {
                        *v = 0.0;
                    } else {
                        nz.push(k);
                    }
                }
            }
            row[c] = 1.0;
        }
        let (head, rest) = self.a.split_at_mut(r * w);
        let (prow, tail) = rest.split_at_mut(w);
        let eliminate = |row: &mut [f64]| {
            let f = row[c];
            if f != 0.0 {
                for &k in nz.iter() {
                    row[k] -= f * prow[k];
                }
                row[c] = 0.0;
            }
        };
        head.chunks_exact_mut(w).for_each(eliminate);
        tail.chunks_exact_mut(w).for_each(eliminate);
        eliminate(&mut self.red);
        self.basis[r] = c;
    }

    /// Runs primal simplex on columns `0..limit`. Returns false when unbounded.
    fn optimize(&mut self, limit: usize) -> bool {
        let mut nz = Vec::new();
        let mut streak = 0usize;
        loop {
            let bland = streak >= DEGENERATE_STREAK;
            let entering = if bland {
                (0..limit).find(|&j| self.red[j] > REDUCED_COST_TOL)
            } else {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..limit {
                    let d = self.red[j];
                    if d > REDUCED_COST_TOL && best.is_none_or(|(_, b)| d > b) {
                        best = Some((j, d));
                    }
                }
                best.map(|(j, _)| j)
            };
            let Some(c) = entering else { return true };

            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows() {
                let arc = self.at(r, c);
                if arc > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / arc;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio.abs());
                            if ratio < lratio && !tie
                                || tie && self.basis[r] < self.basis[lr]
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((r, ratio)) = leave else { return false };
            streak = if ratio <= 1e-14 { streak + 1 } else { 0 };
            self.pivot(r, c, &mut nz);
        }
    }
}

/// Phase 1: finds a feasible basis for `rows` over `n_struct` nonnegative variables.
/// Returns `None` when the system is infeasible.
pub(crate) fn phase_one(
    n_struct: usize,
    rows: &[(Vec<(usize, f64)>, Relation, f64)],
) -> Option<FeasibleTableau> {
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 == Relation::Leq).count();
    // Leq rows with negative rhs flip into Geq rows, which need an artificial.
    let needs_art = |rel: Relation, rhs: f64| rel == Relation::Eq || rhs < 0.0;
    let n_art = rows.iter().filter(|r| needs_art(r.1, r.2)).count();
    let art_start = n_struct + n_slack;
    let width = art_start + n_art + 1;

    let mut a = vec![0.0; m * width];
    let mut basis = vec![0; m];
    let mut red = vec![0.0; width];
    let (mut slack, mut art) = (n_struct, art_start);
    for (r, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
        let row = &mut a[r * width..(r + 1) * width];
        for &(j, v) in coeffs {
            row[j] += sign * v;
        }
        row[width - 1] = sign * rhs;
        if *rel == Relation::Leq {
            row[slack] = sign;
            if sign > 0.0 {
                basis[r] = slack;
            }
            slack += 1;
        }
        if needs_art(*rel, *rhs) {
            row[art] = 1.0;
            basis[r] = art;
            art += 1;
            for (k, v) in row.iter().enumerate() {
                if k < art_start {
                    red[k] += v;
                }
            }
            red[width - 1] += row[width - 1];
        }
    }

    let mut w = Working { width, a, basis, red };
    if n_art > 0 {
        w.optimize(art_start);
        if w.red[width - 1] > PHASE1_TOL * (1.0 + rows.iter().map(|r| r.2.abs()).sum::<f64>()) {
            return None;
        }
        // Drive remaining (zero-level) artificials out of the basis; drop redundant rows.
        let mut nz = Vec::new();
        let mut keep = vec![true; m];
        for r in 0..m {
            if w.basis[r] < art_start {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..art_start {
                let v = w.at(r, j).abs();
                if v > 1e-9 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((j, v));
                }
            }
            match best {
                Some((j, _)) => w.pivot(r, j, &mut nz),
                None => keep[r] = false,
            }
        }
        // Compact: drop artificial columns and redundant rows.
        let new_width = art_start + 1;
        let mut compact = Vec::with_capacity(m * new_width);
        let mut new_basis = Vec::with_capacity(m);
        for r in 0..m {
            if !keep[r] {
                continue;
            }
            let row = &w.a[r * width..(r + 1) * width];
            compact.extend_from_slice(&row[..art_start]);
            compact.push(row[width - 1].max(0.0));
            new_basis.push(w.basis[r]);
        }
        return Some(FeasibleTableau { n_struct, width: new_width, a: compact, basis: new_basis });
    }
    Some(FeasibleTableau { n_struct, width, a: w.a, basis: w.basis })
}

impl FeasibleTableau {
    fn priced(&self, c: &[f64]) -> Vec<f64> {
        let width = self.width;
        let mut red = vec![0.0; width];
        red[..self.n_struct].copy_from_slice(&c[..self.n_struct]);
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = if b < self.n_struct { c[b] } else { 0.0 };
            if cb != 0.0 {
                let row = &self.a[r * width..(r + 1) * width];
                for (k, v) in row.iter().enumerate() {
                    if *v != 0.0 {
                        red[k] -= cb * v;
                    }
                }
            }
        }
        for &b in &self.basis {
            red[b] = 0.0;
        }
        red
    }

    fn finish(&self, w: &Working, c: &[f64]) -> Outcome {
        let mut point = vec![0.0; self.n_struct];
        for (r, &b) in w.basis.iter().enumerate() {
            if b < self.n_struct {
                point[b] = w.rhs(r).max(0.0);
            }
        }
        let objective = point.iter().zip(c).map(|(x, c)| x * c).sum();
        Outcome::Optimal { point, objective }
    }

    /// Phase 2 from this feasible basis: maximize `c . x`.
    pub(crate) fn maximize(&self, c: &[f64]) -> Outcome {
        let red = self.priced(c);
        let mut w = Working { width: self.width, a: self.a.clone(), basis: self.basis.clone(), red };
        if !w.optimize(self.width - 1) {
            return Outcome::Unbounded;
        }
        self.finish(&w, c)
    }

    /// Like [`maximize`](Self::maximize), but keeps the final basis so the next
    /// call starts from it. Pivoting preserves primal feasibility, so the
    /// tableau stays valid even after an unbounded outcome.
    pub(crate) fn maximize_warm(&mut self, c: &[f64]) -> Outcome {
        let red = self.priced(c);
        let mut w = Working {
            width: self.width,
            a: std::mem::take(&mut self.a),
            basis: std::mem::take(&mut self.basis),
            red,
        };
        let bounded = w.optimize(self.width - 1);
        let out = if bounded { self.finish(&w, c) } else { Outcome::Unbounded };
        self.a = w.a;
        self.basis = w.basis;
        out
    }
}

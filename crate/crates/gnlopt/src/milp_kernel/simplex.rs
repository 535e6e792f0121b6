//! Bounded-variable revised simplex with a product-form basis inverse.
//!
//! Column layout: structurals `0..n`, one logical per row `n..n+m` holding
//! the row activity (bounds encode the row sense), then phase-one artificial
//! columns as needed. The right-hand side of the linear system is zero by
//! construction.

use super::{
    Basis, LpProblem, LpSolution, LpStatus, Row, RowSense, FEAS_TOL, OPT_TOL, REFACTOR_EVERY,
};
use crate::{Error, Result};

/// Entries smaller than this never serve as ratio-test pivots.
const PIVOT_EPS: f64 = 1e-9;
/// A step shorter than this counts as degenerate.
const DEGEN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColStatus {
    NbLower,
    NbUpper,
    Basic,
}

/// Outcome of the dual repair pass over a warm basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DualOutcome {
    /// Primal feasibility restored; phase two can start here.
    Feasible,
    /// No progress possible from this basis; restart cold.
    Stuck,
}

/// Dense LU with partial pivoting. `perm[i]` is the source row of pivot i.
struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    fn factor(mut a: Vec<f64>, n: usize) -> Option<DenseLu> {
        // Scaled partial pivoting: candidates are judged relative to their
        // row's largest original entry, so a steep tangent row sitting next
        // to unit rows neither fakes singularity nor gets overrun.
        let mut scale = vec![0.0f64; n];
        for r in 0..n {
            for c in 0..n {
                scale[r] = scale[r].max(a[r * n + c].abs());
            }
            if scale[r] == 0.0 {
                return None;
            }
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut best = k;
            let mut best_ratio = a[perm[k] * n + k].abs() / scale[perm[k]];
            for r in k + 1..n {
                let cand = a[perm[r] * n + k].abs() / scale[perm[r]];
                if cand > best_ratio {
                    best_ratio = cand;
                    best = r;
                }
            }
            if best_ratio < 1e-13 {
                return None;
            }
            perm.swap(k, best);
            let pk = perm[k];
            let pivot = a[pk * n + k];
            for r in k + 1..n {
                let pr = perm[r];
                let mult = a[pr * n + k] / pivot;
                a[pr * n + k] = mult;
                if mult != 0.0 {
                    for c in k + 1..n {
                        a[pr * n + c] -= mult * a[pk * n + c];
                    }
                }
            }
        }
        Some(DenseLu { n, lu: a, perm })
    }

    /// Solves `B w = b` in place.
    fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut acc = b[self.perm[i]];
            for j in 0..i {
                acc -= self.lu[self.perm[i] * n + j] * w[j];
            }
            w[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = w[i];
            for j in i + 1..n {
                acc -= self.lu[self.perm[i] * n + j] * b[j];
            }
            b[i] = acc / self.lu[self.perm[i] * n + i];
        }
    }

    /// Solves `Bᵀ y = c` in place.
    fn solve_t(&self, c: &mut [f64]) {
        let n = self.n;
        // B = Pᵀ L U with row permutation perm: solve Uᵀ w = c forward,
        // then Lᵀ v = w backward, then scatter through the permutation.
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mut acc = c[i];
            for j in 0..i {
                acc -= self.lu[self.perm[j] * n + i] * w[j];
            }
            w[i] = acc / self.lu[self.perm[i] * n + i];
        }
        for i in (0..n).rev() {
            let mut acc = w[i];
            for j in i + 1..n {
                acc -= self.lu[self.perm[j] * n + i] * c[j];
            }
            c[i] = acc;
        }
        let v = c.to_vec();
        for i in 0..n {
            c[self.perm[i]] = v[i];
        }
    }
}

struct Tableau {
    m: usize,
    n_struct: usize,
    n_logical: usize,
    /// Sparse columns (row, coefficient), structurals then logicals then
    /// artificials.
    cols: Vec<Vec<(usize, f64)>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    status: Vec<ColStatus>,
    basis: Vec<usize>,
    x: Vec<f64>,
    lu: DenseLu,
    etas: Vec<(usize, Vec<f64>)>,
    iterations: u64,
}

impl Tableau {
    fn n_cols(&self) -> usize {
        self.cols.len()
    }

    fn ftran(&self, b: &mut Vec<f64>) {
        self.lu.solve(b);
        for (r, eta) in &self.etas {
            let zr = b[*r] / eta[*r];
            for i in 0..self.m {
                if i != *r {
                    b[i] -= eta[i] * zr;
                }
            }
            b[*r] = zr;
        }
    }

    fn btran(&self, c: &mut Vec<f64>) {
        for (r, eta) in self.etas.iter().rev() {
            let mut acc = c[*r];
            for i in 0..self.m {
                if i != *r {
                    acc -= eta[i] * c[i];
                }
            }
            c[*r] = acc / eta[*r];
        }
        self.lu.solve_t(c);
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        self.cols[j].iter().map(|&(i, c)| c * y[i]).sum()
    }

    /// `B^-1 A_q` with one round of residual correction against the current
    /// basis columns. The ratio test consumes every entry of this vector, so
    /// eta-file noise here turns directly into infeasible steps.
    fn ftran_refined(&self, q: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(i, c) in &self.cols[q] {
            alpha[i] = c;
        }
        self.ftran(&mut alpha);
        let mut resid = vec![0.0; m];
        for &(i, c) in &self.cols[q] {
            resid[i] = c;
        }
        for (k, &j) in self.basis.iter().enumerate() {
            if alpha[k] != 0.0 {
                for &(i, c) in &self.cols[j] {
                    resid[i] -= c * alpha[k];
                }
            }
        }
        self.ftran(&mut resid);
        for k in 0..m {
            alpha[k] += resid[k];
        }
        alpha
    }

    fn primal_infeasible(&self) -> bool {
        self.basis
            .iter()
            .any(|&j| self.x[j] < self.lo[j] - FEAS_TOL || self.x[j] > self.hi[j] + FEAS_TOL)
    }

    /// Recomputes the basic values from the nonbasic ones with the current
    /// factorization and eta file; one refinement round, as in `refactor`.
    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.n_cols() {
            if self.status[j] != ColStatus::Basic && self.x[j] != 0.0 {
                for &(i, c) in &self.cols[j] {
                    rhs[i] -= c * self.x[j];
                }
            }
        }
        let mut sol = rhs.clone();
        self.ftran(&mut sol);
        let mut resid = rhs;
        for (k, &j) in self.basis.iter().enumerate() {
            for &(i, c) in &self.cols[j] {
                resid[i] -= c * sol[k];
            }
        }
        self.ftran(&mut resid);
        for k in 0..m {
            sol[k] += resid[k];
        }
        for (k, &j) in self.basis.iter().enumerate() {
            self.x[j] = sol[k];
        }
    }

    /// The primal simplex keeps basic variables inside their bounds only as
    /// accurately as the eta file lets it; a clean refactorization can reveal
    /// that they actually left. Such a state cannot be repaired by further
    /// primal pivots, so it surfaces as an error and the caller restarts.
    fn check_drift(&self) -> Result<()> {
        for &j in &self.basis {
            let v = self.x[j];
            let off = (self.lo[j] - v).max(v - self.hi[j]);
            if off > 1e-5 * (1.0 + v.abs()) {
                return Err(Error::Numerical(format!(
                    "numerical drift: basic variable left its bounds by {off:.3e}"
                )));
            }
        }
        Ok(())
    }

    /// Dual simplex pass: from a dual-feasible basis, pivots until every
    /// basic value respects its bounds. This is the cheap repair for a warm
    /// basis whose primal feasibility was broken by bound fixings or by
    /// appended cut rows; the reduced costs are untouched by either, so the
    /// parent optimum stays dual feasible. Bails out (`Stuck`) instead of
    /// certifying infeasibility, leaving that verdict to a cold phase one:
    /// a wrong prune is the one failure mode this code path must never risk.
    fn dual_repair(&mut self) -> Result<DualOutcome> {
        let m = self.m;
        let limit = 500 + 10 * (m as u64);
        let mut pivots = 0u64;
        // Restore dual feasibility first. A variable whose reduced cost has
        // the wrong sign for its bound (typical after a branching fix is
        // reverted: while pinned it was exempt from pricing) flips to its
        // other bound, where the same sign is the correct one. Only a
        // wrong-signed column with nothing to flip to forces a cold start.
        let mut y: Vec<f64> = self.basis.iter().map(|&j| self.cost[j]).collect();
        self.btran(&mut y);
        let mut flipped = false;
        for j in 0..self.n_cols() {
            if self.status[j] == ColStatus::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.cost[j] - self.col_dot(j, &y);
            match self.status[j] {
                ColStatus::NbLower if d < -1e-7 => {
                    if !self.hi[j].is_finite() {
                        return Ok(DualOutcome::Stuck);
                    }
                    self.status[j] = ColStatus::NbUpper;
                    self.x[j] = self.hi[j];
                    flipped = true;
                }
                ColStatus::NbUpper if d > 1e-7 => {
                    if !self.lo[j].is_finite() {
                        return Ok(DualOutcome::Stuck);
                    }
                    self.status[j] = ColStatus::NbLower;
                    self.x[j] = self.lo[j];
                    flipped = true;
                }
                _ => {}
            }
        }
        if flipped {
            self.recompute_basics();
        }
        loop {
            // Leaving variable: the basic most outside its bounds.
            let mut worst = FEAS_TOL;
            let mut leave: Option<(usize, f64)> = None;
            for (k, &j) in self.basis.iter().enumerate() {
                let below = self.lo[j] - self.x[j];
                let above = self.x[j] - self.hi[j];
                if below > worst {
                    worst = below;
                    leave = Some((k, -1.0));
                }
                if above > worst {
                    worst = above;
                    leave = Some((k, 1.0));
                }
            }
            let Some((r, s_r)) = leave else {
                // Clean recomputation before trusting the repaired values.
                if !self.etas.is_empty() {
                    self.refactor()?;
                    if self.basis.iter().any(|&j| {
                        self.x[j] < self.lo[j] - FEAS_TOL || self.x[j] > self.hi[j] + FEAS_TOL
                    }) {
                        continue;
                    }
                }
                return Ok(DualOutcome::Feasible);
            };
            pivots += 1;
            self.iterations += 1;
            if pivots > limit {
                return Ok(DualOutcome::Stuck);
            }
            // Row r of B^-1, then the pivot row over the nonbasic columns.
            let mut rho = vec![0.0; m];
            rho[r] = 1.0;
            self.btran(&mut rho);
            let mut y: Vec<f64> = self.basis.iter().map(|&j| self.cost[j]).collect();
            self.btran(&mut y);
            // Entering variable: the admissible column whose reduced cost
            // ratio is smallest, so dual feasibility survives the exchange.
            let mut best: Option<(usize, f64, f64)> = None;
            for j in 0..self.n_cols() {
                if self.status[j] == ColStatus::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let a = s_r * self.col_dot(j, &rho);
                let admissible = match self.status[j] {
                    ColStatus::NbLower => a > PIVOT_EPS,
                    ColStatus::NbUpper => a < -PIVOT_EPS,
                    ColStatus::Basic => unreachable!(),
                };
                if !admissible {
                    continue;
                }
                let d = self.cost[j] - self.col_dot(j, &y);
                let ratio = (d / a).max(0.0);
                let better = match best {
                    None => true,
                    Some((bj, br, ba)) => {
                        ratio < br - DEGEN_EPS
                            || (ratio < br + DEGEN_EPS
                                && (a.abs() > ba + DEGEN_EPS
                                    || (a.abs() > ba - DEGEN_EPS && j < bj)))
                    }
                };
                if better {
                    best = Some((j, ratio, a.abs()));
                }
            }
            // No admissible column: the row may prove infeasibility, but a
            // cold phase one re-derives that without trusting this basis.
            let Some((q, _, _)) = best else {
                return Ok(DualOutcome::Stuck);
            };
            let alpha = self.ftran_refined(q);
            if alpha[r].abs() < PIVOT_EPS {
                return Ok(DualOutcome::Stuck);
            }
            let b = self.basis[r];
            let target = if s_r > 0.0 { self.hi[b] } else { self.lo[b] };
            // The entering variable may overshoot its own span; the surplus
            // becomes primal infeasibility at q and a later pivot clears it.
            let delta = (self.x[b] - target) / alpha[r];
            for (k, &j) in self.basis.iter().enumerate() {
                self.x[j] -= delta * alpha[k];
            }
            self.x[b] = target;
            self.status[b] = if s_r > 0.0 { ColStatus::NbUpper } else { ColStatus::NbLower };
            self.x[q] += delta;
            self.status[q] = ColStatus::Basic;
            self.basis[r] = q;
            self.etas.push((r, alpha));
            if self.etas.len() >= REFACTOR_EVERY {
                self.refactor()?;
            }
        }
    }

    /// Rebuilds the dense basis matrix, refactorizes, and recomputes the
    /// basic values from the nonbasic ones.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut dense = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            for &(i, c) in &self.cols[j] {
                dense[i * m + k] = c;
            }
        }
        let lu = DenseLu::factor(dense, m)
            .ok_or_else(|| Error::Numerical("singular basis during refactorization".into()))?;
        self.lu = lu;
        self.etas.clear();
        // rhs of the system is zero: B x_B = -N x_N.
        let mut rhs = vec![0.0; m];
        for j in 0..self.n_cols() {
            if self.status[j] != ColStatus::Basic && self.x[j] != 0.0 {
                for &(i, c) in &self.cols[j] {
                    rhs[i] -= c * self.x[j];
                }
            }
        }
        let mut sol = rhs.clone();
        self.lu.solve(&mut sol);
        // Two rounds of iterative refinement: with steep tangent rows in the
        // basis the raw back substitution alone can be several digits short.
        for _ in 0..2 {
            let mut resid = rhs.clone();
            for (k, &j) in self.basis.iter().enumerate() {
                for &(i, c) in &self.cols[j] {
                    resid[i] -= c * sol[k];
                }
            }
            self.lu.solve(&mut resid);
            for k in 0..m {
                sol[k] += resid[k];
            }
        }
        for (k, &j) in self.basis.iter().enumerate() {
            self.x[j] = sol[k];
        }
        Ok(())
    }

    /// One simplex phase on the current costs. Returns false when the
    /// problem is unbounded in the minimization direction.
    fn optimize(&mut self) -> Result<bool> {
        let m = self.m;
        let iter_limit = 20_000 + 200 * (self.n_cols() as u64 + m as u64);
        let mut degen_run = 0usize;
        let bland_after = 10 * m.max(1);
        let mut bland = false;
        let mut basic_x = vec![0.0; m];
        loop {
            self.iterations += 1;
            if self.iterations > iter_limit {
                return Err(Error::Numerical("simplex iteration limit exceeded".into()));
            }
            // Prices.
            let mut y: Vec<f64> = self.basis.iter().map(|&j| self.cost[j]).collect();
            self.btran(&mut y);
            // Pricing: most violated reduced cost, lowest index on ties;
            // Bland's rule (lowest eligible index) after a degenerate run.
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..self.n_cols() {
                match self.status[j] {
                    ColStatus::Basic => continue,
                    _ if self.lo[j] == self.hi[j] => continue,
                    st => {
                        let d = self.cost[j] - self.col_dot(j, &y);
                        let viol = match st {
                            ColStatus::NbLower => -d,
                            ColStatus::NbUpper => d,
                            ColStatus::Basic => unreachable!(),
                        };
                        if viol > OPT_TOL {
                            if bland {
                                enter = Some((j, viol));
                                break;
                            }
                            if enter.map_or(true, |(_, best)| viol > best) {
                                enter = Some((j, viol));
                            }
                        }
                    }
                }
            }
            let Some((q, _)) = enter else {
                // Tentative claim: the caller audits against the original
                // problem and refactorizes only when the audit fails, so the
                // clean recheck is not paid on every solve.
                return Ok(true);
            };
            // Direction of movement for the entering variable.
            let t = if self.status[q] == ColStatus::NbLower { 1.0 } else { -1.0 };
            let alpha = self.ftran_refined(q);
            for (k, &j) in self.basis.iter().enumerate() {
                basic_x[k] = self.x[j];
            }
            // Ratio test: the entering bound span competes with every basic
            // variable hitting one of its bounds.
            let own_span = self.hi[q] - self.lo[q];
            let mut best_step = own_span;
            let mut leave: Option<usize> = None;
            for k in 0..m {
                let rate = t * alpha[k];
                let b = self.basis[k];
                let step = if rate > PIVOT_EPS {
                    if self.lo[b] == f64::NEG_INFINITY {
                        continue;
                    }
                    (basic_x[k] - self.lo[b]).max(0.0) / rate
                } else if rate < -PIVOT_EPS {
                    if self.hi[b] == f64::INFINITY {
                        continue;
                    }
                    (self.hi[b] - basic_x[k]).max(0.0) / -rate
                } else {
                    continue;
                };
                let better = match leave {
                    None => step < best_step - DEGEN_EPS,
                    Some(cur) => {
                        step < best_step - DEGEN_EPS
                            || (step < best_step + DEGEN_EPS
                                && (alpha[k].abs() > alpha[cur].abs() + DEGEN_EPS
                                    || (alpha[k].abs() > alpha[cur].abs() - DEGEN_EPS
                                        && self.basis[k] < self.basis[cur])))
                    }
                };
                if better {
                    best_step = step.min(best_step);
                    leave = Some(k);
                }
            }
            if best_step == f64::INFINITY {
                return Ok(false);
            }
            let step = best_step.max(0.0);
            if step < DEGEN_EPS {
                degen_run += 1;
                if degen_run > bland_after {
                    bland = true;
                }
            } else {
                degen_run = 0;
                bland = false;
            }
            match leave {
                None => {
                    // Bound flip: the entering variable crosses its whole
                    // span; the basis is unchanged.
                    for (k, &j) in self.basis.iter().enumerate() {
                        self.x[j] = basic_x[k] - t * step * alpha[k];
                    }
                    self.status[q] = if t > 0.0 { ColStatus::NbUpper } else { ColStatus::NbLower };
                    self.x[q] = if t > 0.0 { self.hi[q] } else { self.lo[q] };
                }
                Some(r) => {
                    let b = self.basis[r];
                    for (k, &j) in self.basis.iter().enumerate() {
                        self.x[j] = basic_x[k] - t * step * alpha[k];
                    }
                    // Pin the leaving variable exactly on the bound it hit.
                    if t * alpha[r] > 0.0 {
                        self.x[b] = self.lo[b];
                        self.status[b] = ColStatus::NbLower;
                    } else {
                        self.x[b] = self.hi[b];
                        self.status[b] = ColStatus::NbUpper;
                    }
                    self.x[q] += t * step;
                    self.status[q] = ColStatus::Basic;
                    self.basis[r] = q;
                    self.etas.push((r, alpha.clone()));
                    if self.etas.len() >= REFACTOR_EVERY {
                        self.refactor()?;
                        self.check_drift()?;
                    }
                }
            }
        }
    }
}

fn logical_bounds(row: &Row) -> (f64, f64) {
    match row.sense {
        RowSense::Le => (f64::NEG_INFINITY, row.rhs),
        RowSense::Ge => (row.rhs, f64::INFINITY),
        RowSense::Eq => (row.rhs, row.rhs),
    }
}

fn build_tableau(p: &LpProblem, warm: Option<&Basis>) -> Result<Tableau> {
    let n = p.n_vars();
    let m = p.n_rows();
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + m];
    for (i, row) in p.rows.iter().enumerate() {
        for &(j, c) in &row.coeffs {
            if c != 0.0 {
                cols[j].push((i, c));
            }
        }
        cols[n + i].push((i, -1.0));
    }
    let mut lo = p.lo.clone();
    let mut hi = p.hi.clone();
    let mut cost = vec![0.0; n + m];
    cost[..n].copy_from_slice(&p.cost);
    for row in &p.rows {
        let (l, h) = logical_bounds(row);
        lo.push(l);
        hi.push(h);
    }

    // Warm start: reuse a compatible basis when the caller supplies one.
    // The basis may cover fewer rows than the problem now has (callers only
    // ever append cut rows); the extra rows enter with their logicals basic,
    // which keeps the basis matrix block triangular and nonsingular.
    if let Some(b) = warm {
        let m_old = b.n_rows;
        if b.n_structural == n && m_old <= m && b.status.len() == n + m_old {
            let mut status = Vec::with_capacity(n + m);
            let mut ok =
                b.basic_cols.len() == m_old && b.basic_cols.iter().all(|&j| j < n + m_old);
            // Old logical ids carry over unchanged: rows keep their positions.
            for (j, &s) in b.status.iter().enumerate() {
                status.push(match s {
                    0 => ColStatus::NbLower,
                    1 => ColStatus::NbUpper,
                    2 => ColStatus::Basic,
                    _ => {
                        ok = false;
                        ColStatus::NbLower
                    }
                });
                if s == 0 && lo[j] == f64::NEG_INFINITY {
                    ok = false;
                }
                if s == 1 && hi[j] == f64::INFINITY {
                    ok = false;
                }
            }
            for _ in m_old..m {
                status.push(ColStatus::Basic);
            }
            let mut basis = b.basic_cols.clone();
            for i in m_old..m {
                basis.push(n + i);
            }
            if ok {
                let mut x = vec![0.0; n + m];
                for j in 0..n + m {
                    x[j] = match status[j] {
                        ColStatus::NbLower => lo[j],
                        ColStatus::NbUpper => hi[j],
                        ColStatus::Basic => 0.0,
                    };
                }
                let mut t = Tableau {
                    m,
                    n_struct: n,
                    n_logical: m,
                    cols,
                    lo,
                    hi,
                    cost,
                    status,
                    basis,
                    x,
                    lu: DenseLu { n: 0, lu: Vec::new(), perm: Vec::new() },
                    etas: Vec::new(),
                    iterations: 0,
                };
                if t.refactor().is_ok() {
                    // A warm basis may be primal infeasible after bound
                    // changes; phase one below repairs it if needed.
                    return Ok(t);
                }
                cols = t.cols;
                lo = t.lo;
                hi = t.hi;
                cost = t.cost;
            } else {
                // fall through to the cold start
            }
        }
    }

    // Cold start: structurals at their finite lower bound, each row served
    // by its logical when the activity fits the row bounds.
    let mut status = vec![ColStatus::NbLower; n + m];
    let mut x = vec![0.0; n + m];
    for j in 0..n {
        x[j] = lo[j];
    }
    let mut basis = Vec::with_capacity(m);
    let act = p.activities(&x[..n]);
    for i in 0..m {
        let (sl, sh) = (lo[n + i], hi[n + i]);
        let clamped = act[i].clamp(sl, sh);
        if clamped == act[i] {
            status[n + i] = ColStatus::Basic;
            x[n + i] = act[i];
            basis.push(n + i);
        } else {
            // Logical pinned at the violated bound; an artificial column
            // carries the residual so the start is phase-one feasible.
            x[n + i] = clamped;
            status[n + i] = if clamped == sl { ColStatus::NbLower } else { ColStatus::NbUpper };
            let resid = clamped - act[i];
            let coef = if resid > 0.0 { 1.0 } else { -1.0 };
            cols.push(vec![(i, coef)]);
            lo.push(0.0);
            hi.push(f64::INFINITY);
            cost.push(0.0);
            status.push(ColStatus::Basic);
            x.push(resid.abs());
            basis.push(cols.len() - 1);
        }
    }
    let mut t = Tableau {
        m,
        n_struct: n,
        n_logical: m,
        cols,
        lo,
        hi,
        cost,
        status,
        basis,
        x,
        lu: DenseLu { n: 0, lu: Vec::new(), perm: Vec::new() },
        etas: Vec::new(),
        iterations: 0,
    };
    t.refactor()?;
    Ok(t)
}

/// Solves the LP to proven optimality, infeasibility, or unboundedness.
/// Deterministic for identical inputs: all pivoting ties are index-ordered.
/// A numerically derailed warm-started run is retried once from a cold
/// start before the failure is reported.
pub fn lp_solve(problem: &LpProblem, warm_start: Option<&Basis>) -> Result<LpSolution> {
    match lp_attempt(problem, warm_start) {
        Err(Error::Numerical(_)) if warm_start.is_some() => lp_attempt(problem, None),
        other => other,
    }
}

fn lp_attempt(problem: &LpProblem, warm_start: Option<&Basis>) -> Result<LpSolution> {
    let mut t = build_tableau(problem, warm_start)?;

    let n_art = t.n_cols() - t.n_struct - t.n_logical;
    if n_art == 0 && t.primal_infeasible() {
        // A warm basis broken by new bounds or rows: dual pivots repair it
        // in place; only when they cannot does the cold phase one run.
        if t.dual_repair()? == DualOutcome::Stuck {
            t = build_tableau(problem, None)?;
        }
    }
    let arts: Vec<usize> = (t.n_struct + t.n_logical..t.n_cols()).collect();
    if !phase1(&mut t, &arts)? {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            x: t.x[..problem.n_vars()].to_vec(),
            objective: f64::INFINITY,
            basis: None,
            iterations: t.iterations,
        });
    }
    finish_tableau(&mut t, problem, 0, true)
}

/// Minimizes total artificial mass, then freezes the artificials at zero
/// and restores the real costs. Returns false when mass remains, i.e. the
/// problem is infeasible; the costs are restored either way.
fn phase1(t: &mut Tableau, arts: &[usize]) -> Result<bool> {
    if arts.is_empty() {
        return Ok(true);
    }
    let real_cost = t.cost.clone();
    for c in t.cost.iter_mut() {
        *c = 0.0;
    }
    for &j in arts {
        t.cost[j] = 1.0;
    }
    // The infeasibility verdict must not rest on eta-stale values, and a
    // claim made on stale reduced costs may dissolve after refactoring, so
    // iterate until a claim survives a clean factorization. Root-only cost.
    for _ in 0..20 {
        let bounded = t.optimize()?;
        debug_assert!(bounded, "phase one is bounded below by zero");
        if t.etas.is_empty() {
            break;
        }
        t.refactor()?;
        t.check_drift()?;
    }
    let infeas: f64 = arts.iter().map(|&j| t.x[j].max(0.0)).sum();
    t.cost = real_cost;
    if infeas > FEAS_TOL {
        return Ok(false);
    }
    // Freeze artificials for phase two. Basic ones may carry a residual
    // below the feasibility tolerance; their values stay system-defined.
    for &j in arts {
        t.lo[j] = 0.0;
        t.hi[j] = 0.0;
    }
    Ok(true)
}

/// Phase two plus the optimal-claim audit; assembles the solution. The
/// basis snapshot is only meaningful while logicals sit contiguously after
/// the structurals, so callers with interleaved appended rows skip it.
fn finish_tableau(
    t: &mut Tableau,
    problem: &LpProblem,
    iter_base: u64,
    snapshot: bool,
) -> Result<LpSolution> {
    let n = problem.n_vars();
    // Independent feasibility audit of every claimed optimum, row-relative
    // so that cut rows with steep slopes are judged on their own scale. A
    // claim reached through accumulated eta updates can be stale; such a
    // failure gets one clean refactorization and a re-optimization before
    // it counts as a real numerical breakdown.
    let mut retries = 0;
    let x = loop {
        let bounded = t.optimize()?;
        if !bounded {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                x: t.x[..n].to_vec(),
                objective: f64::NEG_INFINITY,
                basis: None,
                iterations: t.iterations - iter_base,
            });
        }
        let x = t.x[..n].to_vec();
        if problem.max_relative_violation(&x) <= FEAS_TOL {
            break x;
        }
        if t.etas.is_empty() || retries >= 3 {
            return Err(Error::Numerical(format!(
                "optimal claim violates feasibility by {:.3e} (relative {:.3e})",
                problem.max_violation(&x),
                problem.max_relative_violation(&x)
            )));
        }
        retries += 1;
        t.refactor()?;
        t.check_drift()?;
    };
    let objective = (0..n).map(|j| problem.cost[j] * x[j]).sum();
    // Only snapshot clean bases (no artificial left inside).
    let basis = if snapshot && t.basis.iter().all(|&j| j < t.n_struct + t.n_logical) {
        let mut status = vec![0u8; t.n_struct + t.n_logical];
        for j in 0..t.n_struct + t.n_logical {
            status[j] = match t.status[j] {
                ColStatus::NbLower => 0,
                ColStatus::NbUpper => 1,
                ColStatus::Basic => 2,
            };
        }
        Some(Basis {
            n_structural: t.n_struct,
            n_rows: t.m,
            status,
            basic_cols: t.basis.clone(),
        })
    } else {
        None
    };
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        basis,
        iterations: t.iterations - iter_base,
    })
}

/// One LP kept factorized across many related solves.
///
/// Branch and bound re-solves the same problem hundreds of times, changing
/// only variable bounds between nodes and appending cut rows at integral
/// points. Neither change warrants a cold start: bound fixings leave the
/// basis matrix untouched and dual pivots restore primal feasibility, while
/// appended rows enter with their logicals basic and cost exactly one
/// refactorization. The caller must only ever append rows and never touch
/// costs or existing rows; structural bound edits are free.
pub(super) struct PersistentLp {
    t: Tableau,
    /// Rows of the caller's problem already mirrored into the tableau.
    synced_rows: usize,
    /// Artificial columns created by the initial cold start; frozen to zero
    /// once the first phase one succeeds.
    arts: Vec<usize>,
    needs_phase1: bool,
}

impl PersistentLp {
    pub fn new(problem: &LpProblem) -> Result<PersistentLp> {
        let t = build_tableau(problem, None)?;
        let arts: Vec<usize> = (t.n_struct + t.n_logical..t.n_cols()).collect();
        let needs_phase1 = !arts.is_empty();
        Ok(PersistentLp { t, synced_rows: problem.n_rows(), arts, needs_phase1 })
    }

    pub fn solve(&mut self, problem: &LpProblem) -> Result<LpSolution> {
        match self.attempt(problem) {
            Err(Error::Numerical(_)) => {
                // The persistent state may have degraded; rebuild once.
                *self = PersistentLp::new(problem)?;
                self.attempt(problem)
            }
            other => other,
        }
    }

    fn attempt(&mut self, problem: &LpProblem) -> Result<LpSolution> {
        let iter_base = self.t.iterations;
        self.sync(problem)?;
        if self.needs_phase1 {
            if !phase1(&mut self.t, &self.arts)? {
                return Ok(LpSolution {
                    status: LpStatus::Infeasible,
                    x: self.t.x[..problem.n_vars()].to_vec(),
                    objective: f64::INFINITY,
                    basis: None,
                    iterations: self.t.iterations - iter_base,
                });
            }
            self.needs_phase1 = false;
        } else if self.t.primal_infeasible() {
            if self.t.dual_repair()? == DualOutcome::Stuck {
                // Includes the possibly-infeasible case: a throwaway cold
                // solve settles it without risking a wrong verdict, and the
                // persistent basis stays dual feasible for later nodes.
                let mut sol = lp_attempt(problem, None)?;
                sol.iterations += self.t.iterations - iter_base;
                return Ok(sol);
            }
        }
        finish_tableau(&mut self.t, problem, iter_base, false)
    }

    /// Mirrors appended rows and changed structural bounds into the tableau.
    fn sync(&mut self, problem: &LpProblem) -> Result<()> {
        let t = &mut self.t;
        if problem.n_vars() != t.n_struct {
            return Err(Error::InvalidInput(
                "persistent LP was handed a structurally different problem".into(),
            ));
        }
        let appended = problem.n_rows() > self.synced_rows;
        for i in self.synced_rows..problem.n_rows() {
            let row = &problem.rows[i];
            for &(j, c) in &row.coeffs {
                if c != 0.0 {
                    t.cols[j].push((i, c));
                }
            }
            let col_id = t.cols.len();
            t.cols.push(vec![(i, -1.0)]);
            let (l, h) = logical_bounds(row);
            t.lo.push(l);
            t.hi.push(h);
            t.cost.push(0.0);
            t.status.push(ColStatus::Basic);
            t.x.push(0.0);
            t.basis.push(col_id);
            t.m += 1;
            t.n_logical += 1;
        }
        self.synced_rows = problem.n_rows();
        let mut moved = false;
        for j in 0..t.n_struct {
            if t.lo[j] == problem.lo[j] && t.hi[j] == problem.hi[j] {
                continue;
            }
            t.lo[j] = problem.lo[j];
            t.hi[j] = problem.hi[j];
            let target = match t.status[j] {
                ColStatus::NbLower => t.lo[j],
                ColStatus::NbUpper => t.hi[j],
                ColStatus::Basic => continue,
            };
            if !target.is_finite() {
                return Err(Error::Numerical(
                    "nonbasic variable left on an infinite bound".into(),
                ));
            }
            if t.x[j] != target {
                t.x[j] = target;
                moved = true;
            }
        }
        if appended {
            // The eta vectors are sized to the old row count; only a fresh
            // factorization restores a usable representation.
            t.refactor()?;
        } else if moved {
            t.recompute_basics();
        }
        Ok(())
    }
}

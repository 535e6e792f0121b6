//! Self-contained LP and branch-and-bound machinery sized for desk-scale
//! master problems (up to a few hundred columns and rows).
//!
//! The LP side is a bounded-variable revised simplex over the system
//! `[A | -I] [x; s] = 0`, where every row's constant lives in the bounds of
//! its logical column `s`. The MILP side is a best-bound tree search with a
//! lazy-cut callback: whenever a node relaxation lands on an integral point,
//! the callback may reject it by returning violated globally-valid cuts.

mod bnb;
mod simplex;

use std::collections::{BTreeMap, HashSet};

use crate::reformulate::{CutOrigin, LinearCut, Sense};
use crate::{Error, Result};

pub use bnb::{
    add_cut_global, bnb_solve, BnbConfig, BranchRule, NodeSelection, SolveResult, Termination,
};
pub use simplex::lp_solve;

/// Primal feasibility tolerance (absolute, per row and bound).
pub const FEAS_TOL: f64 = 1e-7;
/// Reduced-cost optimality tolerance.
pub const OPT_TOL: f64 = 1e-9;
/// Pivots between dense refactorizations of the basis.
pub const REFACTOR_EVERY: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

/// Minimization LP with finite bounds on every structural variable.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub rows: Vec<Row>,
}

impl LpProblem {
    pub fn new(cost: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if cost.len() != lo.len() || cost.len() != hi.len() {
            return Err(Error::DimensionMismatch(format!(
                "cost/lo/hi lengths {} / {} / {}",
                cost.len(),
                lo.len(),
                hi.len()
            )));
        }
        for j in 0..cost.len() {
            if !cost[j].is_finite() || !lo[j].is_finite() || !hi[j].is_finite() {
                return Err(Error::InvalidInput(format!("variable {j}: non-finite data")));
            }
            if lo[j] > hi[j] {
                return Err(Error::InvalidInput(format!(
                    "variable {j}: bounds [{}, {}] inverted",
                    lo[j], hi[j]
                )));
            }
        }
        Ok(LpProblem { cost, lo, hi, rows: Vec::new() })
    }

    pub fn n_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) -> Result<()> {
        if !rhs.is_finite() {
            return Err(Error::InvalidInput("non-finite row rhs".into()));
        }
        for &(j, c) in &coeffs {
            if j >= self.n_vars() {
                return Err(Error::DimensionMismatch(format!(
                    "row references variable {j}, problem has {}",
                    self.n_vars()
                )));
            }
            if !c.is_finite() {
                return Err(Error::InvalidInput("non-finite row coefficient".into()));
            }
        }
        self.rows.push(Row { coeffs, sense, rhs });
        Ok(())
    }

    /// Appends a cut as an ordinary row.
    pub fn add_cut_row(&mut self, cut: &LinearCut) -> Result<()> {
        let coeffs: Vec<(usize, f64)> = cut.coeffs.iter().map(|(&j, &c)| (j, c)).collect();
        let sense = match cut.sense {
            Sense::Le => RowSense::Le,
            Sense::Ge => RowSense::Ge,
        };
        self.add_row(coeffs, sense, cut.rhs)
    }

    /// Activity of each row at `x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.coeffs.iter().map(|&(j, c)| c * x[j]).sum())
            .collect()
    }

    /// Largest absolute row or bound violation at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.n_vars() {
            worst = worst.max(self.lo[j] - x[j]).max(x[j] - self.hi[j]);
        }
        for (r, act) in self.rows.iter().zip(self.activities(x)) {
            let v = match r.sense {
                RowSense::Le => act - r.rhs,
                RowSense::Ge => r.rhs - act,
                RowSense::Eq => (act - r.rhs).abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Largest row or bound violation at `x`, with each row's violation
    /// measured against the magnitude of its own terms. A residual on a row
    /// whose coefficients reach `1e7` is only as bad as the factorization
    /// allows, so the yardstick must grow with the row.
    pub fn max_relative_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.n_vars() {
            let scale = 1.0 + x[j].abs();
            worst = worst.max((self.lo[j] - x[j]) / scale).max((x[j] - self.hi[j]) / scale);
        }
        for r in &self.rows {
            let mut act = 0.0;
            let mut mag = 0.0;
            for &(j, c) in &r.coeffs {
                act += c * x[j];
                mag += (c * x[j]).abs();
            }
            let v = match r.sense {
                RowSense::Le => act - r.rhs,
                RowSense::Ge => r.rhs - act,
                RowSense::Eq => (act - r.rhs).abs(),
            };
            worst = worst.max(v / (1.0 + mag.max(r.rhs.abs())));
        }
        worst
    }

    /// Plain-text dump: a variable block (`index lo hi cost`) and a row
    /// block (`index sense rhs : var:coef ...`). Test and debugging aid.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "vars {}", self.n_vars());
        for j in 0..self.n_vars() {
            let _ = writeln!(out, "{j} {} {} {}", self.lo[j], self.hi[j], self.cost[j]);
        }
        let _ = writeln!(out, "rows {}", self.rows.len());
        for (i, r) in self.rows.iter().enumerate() {
            let sense = match r.sense {
                RowSense::Le => "<=",
                RowSense::Eq => "==",
                RowSense::Ge => ">=",
            };
            let terms: Vec<String> =
                r.coeffs.iter().map(|(j, c)| format!("{j}:{c}")).collect();
            let _ = writeln!(out, "{i} {sense} {} : {}", r.rhs, terms.join(" "));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Basis snapshot for warm starts: status of every structural and logical
/// column plus the basic column per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub n_structural: usize,
    pub n_rows: usize,
    /// 0 = nonbasic at lower, 1 = nonbasic at upper, 2 = basic.
    pub status: Vec<u8>,
    pub basic_cols: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub basis: Option<Basis>,
    pub iterations: u64,
}

/// Deduplicating store of globally valid cuts, shared across a whole solve.
#[derive(Debug, Default)]
pub struct CutPool {
    cuts: Vec<LinearCut>,
    keys: HashSet<(u8, u8, Vec<(usize, i64)>, i64)>,
    counts: BTreeMap<CutOrigin, u64>,
}

impl CutPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts unless an equivalent cut is already pooled; true when new.
    pub fn add(&mut self, cut: LinearCut) -> bool {
        if self.keys.insert(cut.dedup_key()) {
            *self.counts.entry(cut.origin).or_insert(0) += 1;
            self.cuts.push(cut);
            true
        } else {
            false
        }
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LinearCut> {
        self.cuts.iter()
    }

    pub fn cuts(&self) -> &[LinearCut] {
        &self.cuts
    }

    pub fn count_for(&self, origin: CutOrigin) -> u64 {
        self.counts.get(&origin).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<CutOrigin, u64> {
        &self.counts
    }
}

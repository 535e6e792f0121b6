//! Exact assortment optimization.
//!
//! Two independent exact paths are provided and cross-checked by the test
//! battery: a bisection over the scalar `delta` that repeatedly minimizes an
//! auxiliary function via a branch-and-cut master, and a single-shot
//! branch-and-cut on the log-transformed convex master. A mixture variant
//! handles several customer segments sharing one assortment, and a dedicated
//! variant handles nests whose opt-out weight is zero.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crate::choice_core::{
    Assortment, GnlModel, LinearConstraintSet, MgnlModel, DEGENERATE_W,
};
use crate::milp_kernel::{
    bnb_solve, lp_solve, BnbConfig, CutPool, LpProblem, LpStatus, RowSense,
    SolveResult as KernelResult, Termination,
};
use crate::reformulate::{
    mccormick, oa_cut_exp, oa_cut_h, oa_cut_k, oa_cut_logsum, oa_cut_logw,
    oa_cut_prop5, submodular_cut_z, supermodular_cut_y_floored, variable_bounds,
    CutOrigin, LinearCut, VarBounds,
};
use crate::{Error, Result};

/// Relative tolerance for accepting an integral point whose nonlinear rows
/// are only approximately satisfied; scaled by `1 + |row value|`.
pub const ACCEPT_TOL: f64 = 1e-6;

/// Iteration ceiling for the bisection loop; the bracket width halves every
/// step, so this is never reached for any representable tolerance.
const BISECTION_ITER_CAP: u32 = 200;

/// Knobs shared by every solve path.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Relative optimality gap of the single-shot branch-and-cut runs.
    pub rel_gap: f64,
    /// Relative gap of each bisection subproblem; tighter than `rel_gap`
    /// because the sign of the subproblem optimum drives the bracket.
    pub subproblem_rel_gap: f64,
    /// Bisection stops once the bracket width is below `tol * max(1, beta)`.
    pub bisection_tol: f64,
    pub node_limit: u64,
    pub time_limit: Option<Duration>,
    /// Emit the all-nest log-sum-exp lower bound on `z` (needs every
    /// dissimilarity strictly below one).
    pub use_prop5: bool,
    /// Emit set-function cuts in addition to tangent cuts.
    pub use_sc_cuts: bool,
    /// Multiplier on the zero-opt-out floors; any value in (0, 1] keeps the
    /// floors strictly below the smallest positive membership weight, so
    /// results must not depend on it.
    pub floor_scale: f64,
    /// Random restarts of the continuous price polish.
    pub polish_starts: u32,
    /// Seed for the polish restarts; all other paths are deterministic.
    pub seed: u64,
    /// Ceiling on the per-product price-grid size induced by the secant
    /// certificate; grids past the cap are thinned evenly (endpoints kept).
    /// Small dissimilarities otherwise blow the grid up exponentially.
    pub cp_grid_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_gap: 1e-6,
            subproblem_rel_gap: 1e-9,
            bisection_tol: 1e-9,
            node_limit: u64::MAX,
            time_limit: None,
            use_prop5: true,
            use_sc_cuts: true,
            floor_scale: 1.0,
            polish_starts: 10,
            seed: 0,
            cp_grid_cap: 64,
        }
    }
}

impl SolverConfig {
    fn bnb(&self, rel_gap: f64, deadline: Option<Instant>) -> BnbConfig {
        BnbConfig {
            rel_gap,
            node_limit: self.node_limit,
            time_limit: deadline.map(|d| d.saturating_duration_since(Instant::now())),
            ..BnbConfig::default()
        }
    }
}

/// Bracket state of the parametric search for
/// `delta* = min { delta : min_x G(delta, x) <= 0 }`.
///
/// `width` is the authoritative bracket size: it starts at `beta` and is
/// multiplied by exactly one half per iteration, so after `k` iterations it
/// equals `beta * 2^-k` with no rounding. `delta_hi` is re-derived as
/// `delta_lo + width` and may differ from the previous `delta_hi` by one ulp.
#[derive(Debug, Clone)]
pub struct BisectionState {
    pub delta_lo: f64,
    pub delta_hi: f64,
    pub width: f64,
    pub tol: f64,
    pub iterations: u32,
    /// Argmin of the last subproblem whose optimum was nonpositive; it
    /// witnesses that `delta_hi` is achievable.
    pub best: Option<Assortment>,
}

impl BisectionState {
    pub fn new(beta: f64, tol: f64) -> Self {
        BisectionState {
            delta_lo: 0.0,
            delta_hi: beta,
            width: beta,
            tol,
            iterations: 0,
            best: None,
        }
    }

    pub fn midpoint(&self) -> f64 {
        self.delta_lo + 0.5 * self.width
    }

    pub fn converged(&self, beta: f64) -> bool {
        self.width <= self.tol * beta.abs().max(1.0)
    }

    /// Keep the lower half: the midpoint was achievable.
    fn take_lower(&mut self) {
        self.width *= 0.5;
        self.delta_hi = self.delta_lo + self.width;
        self.iterations += 1;
    }

    /// Keep the upper half: the subproblem at the midpoint stayed positive.
    fn take_upper(&mut self) {
        self.delta_lo = self.midpoint();
        self.width *= 0.5;
        self.delta_hi = self.delta_lo + self.width;
        self.iterations += 1;
    }
}

/// Column index maps of a master problem. Single-model paths use one
/// segment slot; the mixture path has one slot per segment. Every entry is
/// a distinct column id below `n_cols`.
#[derive(Debug, Clone)]
pub struct MasterVariables {
    pub x: Vec<usize>,
    /// Inclusive-value columns, `w[segment][nest]`.
    pub w: Vec<Vec<usize>>,
    /// Denominator copies of the inclusive values (zero-opt-out path only).
    pub u: Option<Vec<usize>>,
    /// Power columns `W^(sigma-1)` of the bisection master.
    pub h: Option<Vec<usize>>,
    /// Power columns `W^sigma` of the bisection master.
    pub k: Option<Vec<usize>>,
    pub y: Option<Vec<Vec<usize>>>,
    /// One log-denominator column per segment.
    pub z: Option<Vec<usize>>,
    pub t: Option<Vec<Vec<usize>>>,
    /// Product columns, `s[segment][(nest, product)]`; only pairs with a
    /// positive membership weight get a column.
    pub s: Vec<BTreeMap<(usize, usize), usize>>,
    /// Stand-in lower bounds for zero-opt-out nests.
    pub floors: Option<Vec<f64>>,
    pub n_cols: usize,
}

impl MasterVariables {
    /// True when every mapped column id is unique and in range.
    pub fn well_formed(&self) -> bool {
        let mut seen = vec![false; self.n_cols];
        let mut mark = |id: usize| -> bool {
            if id >= seen.len() || seen[id] {
                return false;
            }
            seen[id] = true;
            true
        };
        for &id in &self.x {
            if !mark(id) {
                return false;
            }
        }
        for seg in &self.w {
            for &id in seg {
                if !mark(id) {
                    return false;
                }
            }
        }
        for opt in [&self.u, &self.h, &self.k, &self.z] {
            if let Some(ids) = opt {
                for &id in ids {
                    if !mark(id) {
                        return false;
                    }
                }
            }
        }
        for opt in [&self.y, &self.t] {
            if let Some(segs) = opt {
                for seg in segs {
                    for &id in seg {
                        if !mark(id) {
                            return false;
                        }
                    }
                }
            }
        }
        for seg in &self.s {
            for &id in seg.values() {
                if !mark(id) {
                    return false;
                }
            }
        }
        true
    }
}

/// Outcome of a solve, in revenue space. `revenue` is the exact expected
/// revenue of `assortment`, recomputed from the model; `bound` is a proven
/// upper limit on the revenue of any feasible assortment.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub assortment: Assortment,
    pub revenue: f64,
    pub bound: f64,
    /// `(bound - revenue) / max(1, |revenue|)`, clamped to zero.
    pub gap: f64,
    pub nodes: u64,
    pub lp_iterations: u64,
    pub cuts_oa: u64,
    pub cuts_sc: u64,
    /// Static linearization rows for the binary products `s = t x`.
    pub cuts_mc: u64,
    pub seconds: f64,
    pub termination: Termination,
    /// Full master column values at the incumbent.
    pub columns: Vec<f64>,
    pub vars: MasterVariables,
    pub bisection: Option<BisectionState>,
    /// Proven revenue upper bounds over the course of the solve,
    /// non-increasing; every entry is valid on its own.
    pub bound_history: Vec<f64>,
}

fn revenue_gap(revenue: f64, bound: f64) -> f64 {
    ((bound - revenue) / revenue.abs().max(1.0)).max(0.0)
}

fn pool_split(pool: &CutPool) -> (u64, u64) {
    let mut oa = 0;
    let mut sc = 0;
    for (&origin, &count) in pool.counts() {
        match origin {
            CutOrigin::ScZ | CutOrigin::ScY => sc += count,
            CutOrigin::McCormick => {}
            _ => oa += count,
        }
    }
    (oa, sc)
}

fn row_tol(value: f64) -> f64 {
    ACCEPT_TOL * (1.0 + value.abs())
}

/// Snaps the leading `m` master columns to a binary assortment.
fn snap_assortment(solution: &[f64], m: usize) -> Assortment {
    Assortment::new(
        (0..m)
            .map(|i| if solution[i] >= 0.5 { 1 } else { 0 })
            .collect(),
    )
}

fn constraint_rows(problem: &mut LpProblem, constraints: &LinearConstraintSet, x: &[usize]) -> Result<()> {
    for (row, &rhs) in constraints.a.iter().zip(&constraints.b) {
        let coeffs: Vec<(usize, f64)> = row
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0.0)
            .map(|(i, &c)| (x[i], c))
            .collect();
        // An empty row is a pure feasibility statement on the constants.
        if coeffs.is_empty() {
            if rhs < 0.0 {
                return Err(Error::Infeasible);
            }
            continue;
        }
        problem.add_row(coeffs, RowSense::Le, rhs)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Bisection path
// ---------------------------------------------------------------------------

struct BisectionMaster {
    problem: LpProblem,
    vars: MasterVariables,
    mc_rows: u64,
}

/// Master of the subproblem: columns `(x, W, h, k, s)`, weight-definition
/// equalities, and the four-row linearization of every product `s = h x`.
/// The `k` costs carry the `-delta` factor and are rewritten per iteration.
fn build_bisection_master(
    model: &GnlModel,
    constraints: &LinearConstraintSet,
    beta: f64,
    bounds: &VarBounds,
) -> Result<BisectionMaster> {
    let m = model.m;
    let nn = model.n_nests;
    let mut cost = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let push = |c: f64, l: f64, h: f64, cost: &mut Vec<f64>, lo: &mut Vec<f64>, hi: &mut Vec<f64>| -> usize {
        cost.push(c);
        lo.push(l);
        hi.push(h);
        cost.len() - 1
    };

    let x: Vec<usize> =
        (0..m).map(|_| push(0.0, 0.0, 1.0, &mut cost, &mut lo, &mut hi)).collect();
    let w: Vec<usize> = (0..nn)
        .map(|n| push(0.0, bounds.w_lo[n], bounds.w_hi[n], &mut cost, &mut lo, &mut hi))
        .collect();
    let h: Vec<usize> = (0..nn)
        .map(|n| {
            push(beta * model.v0[n], bounds.h_lo[n], bounds.h_hi[n], &mut cost, &mut lo, &mut hi)
        })
        .collect();
    let k: Vec<usize> = (0..nn)
        .map(|n| push(0.0, bounds.k_lo[n], bounds.k_hi[n], &mut cost, &mut lo, &mut hi))
        .collect();
    let mut s = BTreeMap::new();
    for n in 0..nn {
        for i in 0..m {
            let weight = model.alpha[i][n] * model.v[i][n];
            if weight > 0.0 {
                let id = push(
                    weight * (beta - model.r[i]),
                    0.0_f64.min(bounds.h_lo[n]),
                    bounds.h_hi[n].max(0.0),
                    &mut cost,
                    &mut lo,
                    &mut hi,
                );
                s.insert((n, i), id);
            }
        }
    }

    let mut problem = LpProblem::new(cost, lo, hi)?;
    for n in 0..nn {
        let mut coeffs = vec![(w[n], 1.0)];
        for i in 0..m {
            let weight = model.alpha[i][n] * model.v[i][n];
            if weight > 0.0 {
                coeffs.push((x[i], -weight));
            }
        }
        problem.add_row(coeffs, RowSense::Eq, model.v0[n])?;
    }
    let mut mc_rows = 0;
    for (&(n, i), &sid) in &s {
        for cut in mccormick(sid, h[n], x[i], bounds.h_lo[n], bounds.h_hi[n])? {
            problem.add_cut_row(&cut)?;
            mc_rows += 1;
        }
    }
    constraint_rows(&mut problem, constraints, &x)?;

    let n_cols = problem.n_vars();
    Ok(BisectionMaster {
        problem,
        vars: MasterVariables {
            x,
            w: vec![w],
            u: None,
            h: Some(h),
            k: Some(k),
            y: None,
            z: None,
            t: None,
            s: vec![s],
            floors: None,
            n_cols,
        },
        mc_rows,
    })
}

/// Closed form of the auxiliary function at a binary point:
/// `G(delta, x) = sum_n K_n(x) * (beta - F(x) - delta)`.
fn auxiliary_value(model: &GnlModel, x: &Assortment, beta: f64, delta: f64) -> Result<f64> {
    let mut denom = 0.0;
    for n in 0..model.n_nests {
        denom += model.set_k(n, x)?;
    }
    Ok(denom * (model.min_objective(x, beta)? - delta))
}

/// Root anchors for the power-column tangents: empty and full assortment.
fn seed_bisection_pool(
    model: &GnlModel,
    vars: &MasterVariables,
    pool: &mut CutPool,
) -> Result<()> {
    let m = model.m;
    let h_ids = vars.h.as_ref().expect("h columns");
    let k_ids = vars.k.as_ref().expect("k columns");
    for point in [vec![0.0; m], vec![1.0; m]] {
        for n in 0..model.n_nests {
            pool.add(oa_cut_h(model, n, &point, h_ids[n], &vars.x)?);
            pool.add(oa_cut_k(model, n, &point, k_ids[n], &vars.x)?);
        }
    }
    Ok(())
}

/// Tangent-cut separation for the bisection master at an integral point.
fn bisection_cuts(
    model: &GnlModel,
    vars: &MasterVariables,
    solution: &[f64],
) -> Result<Vec<LinearCut>> {
    let assort = snap_assortment(solution, model.m);
    let point: Vec<f64> = assort.x.iter().map(|&b| f64::from(b)).collect();
    let h_ids = vars.h.as_ref().expect("bisection master has h columns");
    let k_ids = vars.k.as_ref().expect("bisection master has k columns");
    let mut cuts = Vec::new();
    for n in 0..model.n_nests {
        let h_true = model.set_h(n, &assort)?;
        if h_true - solution[h_ids[n]] > row_tol(h_true) {
            cuts.push(oa_cut_h(model, n, &point, h_ids[n], &vars.x)?);
        }
        let k_true = model.set_k(n, &assort)?;
        if solution[k_ids[n]] - k_true > row_tol(k_true) {
            cuts.push(oa_cut_k(model, n, &point, k_ids[n], &vars.x)?);
        }
    }
    Ok(cuts)
}

struct SubproblemOutcome {
    /// Exact auxiliary value at the argmin; absent when a limit stopped the
    /// solve before any integral point appeared.
    minimum: Option<(f64, Assortment)>,
    kernel: KernelResult,
}

fn run_bisection_subproblem(
    model: &GnlModel,
    master: &mut BisectionMaster,
    pool: &mut CutPool,
    beta: f64,
    delta: f64,
    config: &SolverConfig,
    deadline: Option<Instant>,
) -> Result<SubproblemOutcome> {
    let k_ids = master.vars.k.as_ref().expect("k columns").clone();
    for &kid in &k_ids {
        master.problem.cost[kid] = -delta;
    }
    let vars = master.vars.clone();
    let result = bnb_solve(
        &master.problem,
        &vars.x,
        pool,
        |solution| bisection_cuts(model, &vars, solution),
        &config.bnb(config.subproblem_rel_gap, deadline),
    )?;
    if result.termination == Termination::Infeasible {
        return Err(Error::Infeasible);
    }
    let minimum = if result.x.is_empty() {
        None
    } else {
        let argmin = snap_assortment(&result.x, model.m);
        let g_value = auxiliary_value(model, &argmin, beta, delta)?;
        Some((g_value, argmin))
    };
    Ok(SubproblemOutcome { minimum, kernel: result })
}

/// Minimizes `G(delta, x) = sum_n W_n^{sigma_n-1} (beta V_0n + sum_i alpha
/// x_i (beta - r_i) V_in) - delta sum_n W_n^{sigma_n}` over the feasible
/// assortments. Returns the exact closed-form value at the argmin.
pub fn bisection_subproblem(
    model: &GnlModel,
    constraints: &LinearConstraintSet,
    beta: f64,
    delta: f64,
    config: &SolverConfig,
) -> Result<(f64, Assortment)> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidInput(format!("delta {delta} must be nonnegative")));
    }
    let bounds = variable_bounds(model, beta, None)?;
    let mut master = build_bisection_master(model, constraints, beta, &bounds)?;
    let mut pool = CutPool::new();
    seed_bisection_pool(model, &master.vars, &mut pool)?;
    let deadline = config.time_limit.map(|d| Instant::now() + d);
    let outcome =
        run_bisection_subproblem(model, &mut master, &mut pool, beta, delta, config, deadline)?;
    outcome.minimum.ok_or_else(|| {
        Error::Numerical("subproblem hit a limit before finding any integral point".into())
    })
}

/// Exact assortment optimization by bisection on `delta`. The bracket
/// starts at `[0, beta]`; each iteration solves one subproblem at the
/// midpoint and keeps the half whose edge stays consistent with the sign of
/// the subproblem optimum. Tangent cuts for the power columns do not depend
/// on `delta`, so one cut pool serves every iteration.
pub fn solve_gnl_bisection(
    model: &GnlModel,
    constraints: &LinearConstraintSet,
    beta: f64,
    tol: f64,
    config: &SolverConfig,
) -> Result<SolveResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance {tol} must be positive")));
    }
    let start = Instant::now();
    let deadline = config.time_limit.map(|d| start + d);
    let bounds = variable_bounds(model, beta, None)?;
    let mut master = build_bisection_master(model, constraints, beta, &bounds)?;
    let mut pool = CutPool::new();
    seed_bisection_pool(model, &master.vars, &mut pool)?;
    let mut state = BisectionState::new(beta, tol);
    let mut nodes = 0;
    let mut lp_iterations = 0;
    let mut termination = Termination::Optimal;
    let mut last_accept: Option<KernelResult> = None;
    let mut bound_history = Vec::new();

    while !state.converged(beta) && state.iterations < BISECTION_ITER_CAP {
        let delta = state.midpoint();
        let outcome = run_bisection_subproblem(
            model, &mut master, &mut pool, beta, delta, config, deadline,
        )?;
        nodes += outcome.kernel.nodes;
        lp_iterations += outcome.kernel.lp_iterations;
        if outcome.kernel.termination != Termination::Optimal {
            termination = outcome.kernel.termination;
            break;
        }
        let (g_value, argmin) = outcome.minimum.ok_or_else(|| {
            Error::Numerical("subproblem finished without an integral point".into())
        })?;
        if g_value <= 0.0 {
            state.best = Some(argmin);
            last_accept = Some(outcome.kernel);
            state.take_lower();
        } else {
            state.take_upper();
        }
        bound_history.push(beta - state.delta_lo);
    }

    // A bracket that never saw a nonpositive subproblem can only occur when
    // the loop broke early on a limit; the top edge itself is achievable.
    if state.best.is_none() && termination == Termination::Optimal {
        let outcome = run_bisection_subproblem(
            model, &mut master, &mut pool, beta, state.delta_hi, config, deadline,
        )?;
        nodes += outcome.kernel.nodes;
        lp_iterations += outcome.kernel.lp_iterations;
        if let Some((g_value, argmin)) = outcome.minimum {
            if g_value <= 0.0 {
                state.best = Some(argmin);
                last_accept = Some(outcome.kernel);
            }
        }
    }

    let best = state.best.clone().ok_or_else(|| {
        Error::Numerical("bisection found no achievable delta in [0, beta]".into())
    })?;
    let kernel = last_accept.expect("an accepted subproblem accompanies the witness");
    let revenue = model.expected_revenue(&best)?;
    let bound = beta - state.delta_lo;
    let (cuts_oa, cuts_sc) = pool_split(&pool);
    Ok(SolveResult {
        assortment: best,
        revenue,
        bound,
        gap: revenue_gap(revenue, bound),
        nodes,
        lp_iterations,
        cuts_oa,
        cuts_sc,
        cuts_mc: master.mc_rows,
        seconds: start.elapsed().as_secs_f64(),
        termination,
        columns: kernel.x,
        vars: master.vars,
        bisection: Some(state),
        bound_history,
    })
}

// ---------------------------------------------------------------------------
// Log-transformed convex path (single model, mixture, zero opt-out)
// ---------------------------------------------------------------------------

struct ConvexMaster {
    problem: LpProblem,
    vars: MasterVariables,
    mc_rows: u64,
}

/// Master columns `(x, W_tn, y_tn, z_t, t_tn, s_tni)` with weight-definition
/// equalities per segment and the linearized products `s = t x`. The
/// objective carries `theta_t (beta V_t0n t_tn + alpha_tin (beta - r_ti)
/// V_tin s_tni)`.
fn build_convex_master(
    segments: &[&GnlModel],
    theta: &[f64],
    constraints: &LinearConstraintSet,
    beta: f64,
    bounds: &[VarBounds],
) -> Result<ConvexMaster> {
    let m = segments[0].m;
    let mut cost = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let push = |c: f64, l: f64, h: f64, cost: &mut Vec<f64>, lo: &mut Vec<f64>, hi: &mut Vec<f64>| -> usize {
        cost.push(c);
        lo.push(l);
        hi.push(h);
        cost.len() - 1
    };

    let x: Vec<usize> =
        (0..m).map(|_| push(0.0, 0.0, 1.0, &mut cost, &mut lo, &mut hi)).collect();
    let mut w = Vec::new();
    let mut y = Vec::new();
    let mut z = Vec::new();
    let mut t = Vec::new();
    let mut s = Vec::new();
    for (seg, model) in segments.iter().enumerate() {
        let nn = model.n_nests;
        let b = &bounds[seg];
        w.push(
            (0..nn)
                .map(|n| push(0.0, b.w_lo[n], b.w_hi[n], &mut cost, &mut lo, &mut hi))
                .collect::<Vec<_>>(),
        );
        y.push(
            (0..nn)
                .map(|n| push(0.0, b.y_lo[n], b.y_hi[n], &mut cost, &mut lo, &mut hi))
                .collect::<Vec<_>>(),
        );
        z.push(push(0.0, b.z_lo, b.z_hi, &mut cost, &mut lo, &mut hi));
        t.push(
            (0..nn)
                .map(|n| {
                    push(
                        theta[seg] * beta * model.v0[n],
                        b.t_lo[n],
                        b.t_hi[n],
                        &mut cost,
                        &mut lo,
                        &mut hi,
                    )
                })
                .collect::<Vec<_>>(),
        );
        let mut seg_s = BTreeMap::new();
        for n in 0..nn {
            for i in 0..m {
                let weight = model.alpha[i][n] * model.v[i][n];
                if weight > 0.0 {
                    let id = push(
                        theta[seg] * weight * (beta - model.r[i]),
                        0.0_f64.min(b.t_lo[n]),
                        b.t_hi[n].max(0.0),
                        &mut cost,
                        &mut lo,
                        &mut hi,
                    );
                    seg_s.insert((n, i), id);
                }
            }
        }
        s.push(seg_s);
    }

    let mut problem = LpProblem::new(cost, lo, hi)?;
    for (seg, model) in segments.iter().enumerate() {
        for n in 0..model.n_nests {
            let mut coeffs = vec![(w[seg][n], 1.0)];
            for i in 0..m {
                let weight = model.alpha[i][n] * model.v[i][n];
                if weight > 0.0 {
                    coeffs.push((x[i], -weight));
                }
            }
            problem.add_row(coeffs, RowSense::Eq, model.v0[n])?;
        }
    }
    let mut mc_rows = 0;
    for (seg, _) in segments.iter().enumerate() {
        let b = &bounds[seg];
        for (&(n, i), &sid) in &s[seg] {
            for cut in mccormick(sid, t[seg][n], x[i], b.t_lo[n], b.t_hi[n])? {
                problem.add_cut_row(&cut)?;
                mc_rows += 1;
            }
        }
    }
    constraint_rows(&mut problem, constraints, &x)?;

    let n_cols = problem.n_vars();
    Ok(ConvexMaster {
        problem,
        vars: MasterVariables {
            x,
            w,
            u: None,
            h: None,
            k: None,
            y: Some(y),
            z: Some(z),
            t: Some(t),
            s,
            floors: None,
            n_cols,
        },
        mc_rows,
    })
}

/// Root anchors for the set-function and tangent cuts: the empty and the
/// full assortment.
fn seed_convex_pool(
    segments: &[&GnlModel],
    vars: &MasterVariables,
    pool: &mut CutPool,
    use_sc: bool,
) -> Result<()> {
    let m = segments[0].m;
    let anchors = [Assortment::empty(m), Assortment::new(vec![1; m])];
    let y_ids = vars.y.as_ref().expect("convex master has y columns");
    let z_ids = vars.z.as_ref().expect("convex master has z columns");
    let t_ids = vars.t.as_ref().expect("convex master has t columns");
    for (seg, model) in segments.iter().enumerate() {
        for anchor in &anchors {
            let w0 = model.inclusive_value(anchor)?;
            let z0 = model.set_z(anchor)?;
            pool.add(oa_cut_logsum(model, &w0, z_ids[seg], &vars.w[seg])?);
            if use_sc {
                pool.add(submodular_cut_z(model, anchor, z_ids[seg], &vars.x)?);
            }
            for n in 0..model.n_nests {
                pool.add(oa_cut_logw(model, n, w0[n], y_ids[seg][n], vars.w[seg][n])?);
                if use_sc {
                    pool.add(supermodular_cut_y_floored(
                        model,
                        n,
                        anchor,
                        None,
                        y_ids[seg][n],
                        &vars.x,
                    )?);
                }
                let y0 = model.set_y(n, anchor)?;
                pool.add(oa_cut_exp(y0, z0, t_ids[seg][n], y_ids[seg][n], z_ids[seg])?);
            }
        }
    }
    Ok(())
}

/// Tangent and set-function separation for the convex master at an integral
/// point. One segment at a time; all rows are checked against their exact
/// nonlinear values at the snapped assortment.
fn convex_cuts(
    segments: &[&GnlModel],
    vars: &MasterVariables,
    solution: &[f64],
    use_sc: bool,
    use_prop5: bool,
) -> Result<Vec<LinearCut>> {
    let m = segments[0].m;
    let assort = snap_assortment(solution, m);
    let y_ids = vars.y.as_ref().expect("y columns");
    let z_ids = vars.z.as_ref().expect("z columns");
    let t_ids = vars.t.as_ref().expect("t columns");
    let mut cuts = Vec::new();
    for (seg, model) in segments.iter().enumerate() {
        let w_true = model.inclusive_value(&assort)?;
        let z_true = model.set_z(&assort)?;
        let z_val = solution[z_ids[seg]];
        if z_val - z_true > row_tol(z_true) {
            cuts.push(oa_cut_logsum(model, &w_true, z_ids[seg], &vars.w[seg])?);
            if use_sc {
                cuts.push(submodular_cut_z(model, &assort, z_ids[seg], &vars.x)?);
            }
        }
        for n in 0..model.n_nests {
            let y_true = model.set_y(n, &assort)?;
            let y_val = solution[y_ids[seg][n]];
            if y_true - y_val > row_tol(y_true) {
                cuts.push(oa_cut_logw(model, n, w_true[n], y_ids[seg][n], vars.w[seg][n])?);
                if use_sc {
                    cuts.push(supermodular_cut_y_floored(
                        model,
                        n,
                        &assort,
                        None,
                        y_ids[seg][n],
                        &vars.x,
                    )?);
                }
            }
            let t_val = solution[t_ids[seg][n]];
            let exp_true = (y_val - z_val).exp();
            if exp_true - t_val > row_tol(exp_true) {
                cuts.push(oa_cut_exp(y_val, z_val, t_ids[seg][n], y_ids[seg][n], z_ids[seg])?);
            }
        }
        if use_prop5 && model.sigma.iter().all(|&sgm| sgm < 1.0) {
            let y_vals: Vec<f64> = y_ids[seg].iter().map(|&id| solution[id]).collect();
            if let Some(cut) = prop5_if_violated(model, &y_vals, z_val, z_ids[seg], &y_ids[seg])? {
                cuts.push(cut);
            }
        }
    }
    Ok(cuts)
}

fn prop5_if_violated(
    model: &GnlModel,
    y_vals: &[f64],
    z_val: f64,
    z_id: usize,
    y_ids: &[usize],
) -> Result<Option<LinearCut>> {
    let args: Vec<f64> = (0..model.n_nests)
        .map(|n| model.sigma[n] / (model.sigma[n] - 1.0) * y_vals[n])
        .collect();
    let amax = args.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = amax + args.iter().map(|&a| (a - amax).exp()).sum::<f64>().ln();
    if lse - z_val > row_tol(lse) {
        return Ok(Some(oa_cut_prop5(&model.sigma, y_vals, z_id, y_ids)?));
    }
    Ok(None)
}

/// Tangent separation valid at any master point. The weight equality rows
/// pin each W column to the binaries, so tangents anchored at the point's
/// own W values are globally valid even while the binaries are fractional;
/// set-function cuts need an integral anchor and stay in [`convex_cuts`].
fn convex_cuts_at_point(
    segments: &[&GnlModel],
    vars: &MasterVariables,
    solution: &[f64],
    use_prop5: bool,
) -> Result<Vec<LinearCut>> {
    let y_ids = vars.y.as_ref().expect("y columns");
    let z_ids = vars.z.as_ref().expect("z columns");
    let t_ids = vars.t.as_ref().expect("t columns");
    let mut cuts = Vec::new();
    for (seg, model) in segments.iter().enumerate() {
        let w_vals: Vec<f64> = vars.w[seg].iter().map(|&id| solution[id]).collect();
        let z_val = solution[z_ids[seg]];
        let denom: f64 =
            (0..model.n_nests).map(|n| w_vals[n].powf(model.sigma[n])).sum();
        let z_curve = denom.ln();
        if z_val - z_curve > row_tol(z_curve) {
            cuts.push(oa_cut_logsum(model, &w_vals, z_ids[seg], &vars.w[seg])?);
        }
        for n in 0..model.n_nests {
            let y_val = solution[y_ids[seg][n]];
            let y_curve = (model.sigma[n] - 1.0) * w_vals[n].ln();
            if y_curve - y_val > row_tol(y_curve) {
                cuts.push(oa_cut_logw(model, n, w_vals[n], y_ids[seg][n], vars.w[seg][n])?);
            }
            let t_val = solution[t_ids[seg][n]];
            let exp_true = (y_val - z_val).exp();
            if exp_true - t_val > row_tol(exp_true) {
                cuts.push(oa_cut_exp(y_val, z_val, t_ids[seg][n], y_ids[seg][n], z_ids[seg])?);
            }
        }
        if use_prop5 && model.sigma.iter().all(|&sgm| sgm < 1.0) {
            let y_vals: Vec<f64> = y_ids[seg].iter().map(|&id| solution[id]).collect();
            if let Some(cut) = prop5_if_violated(model, &y_vals, z_val, z_ids[seg], &y_ids[seg])? {
                cuts.push(cut);
            }
        }
    }
    Ok(cuts)
}

/// Ceiling on root separation rounds; each round costs one LP solve.
const ROOT_CUT_ROUNDS: u32 = 100;

/// Tightens the pool at the root before any branching: solve the relaxation
/// with every pooled cut, separate at its optimum, repeat. All cuts produced
/// here are globally valid, so they carry into the whole tree. Without this
/// the relaxation holds only the seed tangents and branching has to grope
/// toward the curve one integral point at a time. Infeasibility and limits
/// are left for the branch-and-bound run to diagnose.
fn root_cut_loop(
    problem: &LpProblem,
    pool: &mut CutPool,
    mut separate: impl FnMut(&[f64]) -> Result<Vec<LinearCut>>,
    deadline: Option<Instant>,
) -> Result<()> {
    let mut work = problem.clone();
    for cut in pool.iter() {
        work.add_cut_row(cut)?;
    }
    let mut last_obj = f64::NAN;
    let mut stalled = 0u32;
    let mut warm = None;
    for _ in 0..ROOT_CUT_ROUNDS {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            break;
        }
        let sol = lp_solve(&work, warm.as_ref())?;
        if sol.status != LpStatus::Optimal {
            break;
        }
        warm = sol.basis.clone();
        let mut any_new = false;
        for cut in separate(&sol.x)? {
            if pool.add(cut.clone()) {
                work.add_cut_row(&cut)?;
                any_new = true;
            }
        }
        if !any_new {
            break;
        }
        // The kernel minimizes, so the root bound only rises as cuts arrive;
        // three rounds without measurable progress means tailing off.
        if last_obj.is_finite() && sol.objective - last_obj <= 1e-10 * (1.0 + last_obj.abs()) {
            stalled += 1;
            if stalled >= 3 {
                break;
            }
        } else {
            stalled = 0;
        }
        last_obj = sol.objective;
    }
    Ok(())
}

fn finish_convex(
    revenue: f64,
    assortment: Assortment,
    beta: f64,
    kernel: KernelResult,
    pool: &CutPool,
    master: ConvexMaster,
    start: Instant,
) -> SolveResult {
    let bound = beta - kernel.bound;
    let (cuts_oa, cuts_sc) = pool_split(pool);
    SolveResult {
        assortment,
        revenue,
        bound,
        gap: revenue_gap(revenue, bound),
        nodes: kernel.nodes,
        lp_iterations: kernel.lp_iterations,
        cuts_oa,
        cuts_sc,
        cuts_mc: master.mc_rows,
        seconds: start.elapsed().as_secs_f64(),
        termination: kernel.termination,
        columns: kernel.x,
        vars: master.vars,
        bisection: None,
        bound_history: kernel.bound_history.iter().map(|&b| beta - b).collect(),
    }
}

/// Exact assortment optimization for a mixture of segments sharing one
/// assortment: a single branch-and-cut run on the per-segment convex
/// masters. The reported revenue is `sum_t theta_t F_t` at the incumbent.
pub fn solve_mgnl(
    mixed: &MgnlModel,
    constraints: &LinearConstraintSet,
    beta: f64,
    config: &SolverConfig,
) -> Result<SolveResult> {
    let start = Instant::now();
    let deadline = config.time_limit.map(|d| start + d);
    let segments: Vec<&GnlModel> = mixed.segments.iter().collect();
    let bounds = segments
        .iter()
        .map(|seg| variable_bounds(seg, beta, None))
        .collect::<Result<Vec<_>>>()?;
    let master = build_convex_master(&segments, &mixed.theta, constraints, beta, &bounds)?;
    let mut pool = CutPool::new();
    seed_convex_pool(&segments, &master.vars, &mut pool, config.use_sc_cuts)?;
    let use_sc = config.use_sc_cuts;
    let use_p5 = config.use_prop5;
    root_cut_loop(
        &master.problem,
        &mut pool,
        |solution| convex_cuts_at_point(&segments, &master.vars, solution, use_p5),
        deadline,
    )?;
    let vars = master.vars.clone();
    let kernel = bnb_solve(
        &master.problem,
        &vars.x,
        &mut pool,
        |solution| convex_cuts(&segments, &vars, solution, use_sc, use_p5),
        &config.bnb(config.rel_gap, deadline),
    )?;
    if kernel.termination == Termination::Infeasible {
        return Err(Error::Infeasible);
    }
    if kernel.x.is_empty() {
        return Err(Error::Numerical(
            "branch-and-cut hit a limit before finding any integral point".into(),
        ));
    }
    let assortment = snap_assortment(&kernel.x, mixed.m());
    let revenue = mixed.expected_revenue(&assortment)?;
    Ok(finish_convex(revenue, assortment, beta, kernel, &pool, master, start))
}

/// Single-segment front end of [`solve_mgnl`]: the standard exact path for
/// one model with positive opt-out weights.
pub fn solve_gnl_logconvex(
    model: &GnlModel,
    constraints: &LinearConstraintSet,
    beta: f64,
    config: &SolverConfig,
) -> Result<SolveResult> {
    let mixed = MgnlModel::new(vec![model.clone()], vec![1.0])?;
    solve_mgnl(&mixed, constraints, beta, config)
}

// ---------------------------------------------------------------------------
// Zero opt-out path
// ---------------------------------------------------------------------------

/// Stand-in lower bounds for nests whose opt-out weight vanishes: half the
/// smallest positive membership weight (times the configured scale),
/// strictly below anything a nonempty nest can attain. `None` for nests
/// with a positive opt-out weight.
fn optout_floors(model: &GnlModel, scale: f64) -> Result<Vec<Option<f64>>> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "floor scale {scale} must lie in (0, 1]"
        )));
    }
    let mut floors = vec![None; model.n_nests];
    for n in 0..model.n_nests {
        if model.v0[n] >= DEGENERATE_W {
            continue;
        }
        let min_weight = (0..model.m)
            .map(|i| model.alpha[i][n] * model.v[i][n])
            .filter(|&wgt| wgt > 0.0)
            .fold(f64::INFINITY, f64::min);
        if !min_weight.is_finite() {
            return Err(Error::InvalidModel(vec![format!(
                "nest {n} has zero opt-out weight and no member products"
            )]));
        }
        floors[n] = Some(0.5 * scale * min_weight);
    }
    Ok(floors)
}

fn floored_y(model: &GnlModel, n: usize, s: &Assortment, floor: Option<f64>) -> Result<f64> {
    match floor {
        Some(f) => model.set_y_floored(n, s, f),
        None => model.set_y(n, s),
    }
}

/// Separation for the zero-opt-out master. The inclusive-value columns are
/// only bounded from below here, so every binding relation is expressed in
/// assortment space: set-function cuts pin `y` and `z`, tangents pin the
/// exponential rows.
fn zero_optout_cuts(
    model: &GnlModel,
    vars: &MasterVariables,
    floors: &[Option<f64>],
    solution: &[f64],
    use_prop5: bool,
) -> Result<Vec<LinearCut>> {
    let assort = snap_assortment(solution, model.m);
    let y_ids = vars.y.as_ref().expect("y columns");
    let z_ids = vars.z.as_ref().expect("z columns");
    let t_ids = vars.t.as_ref().expect("t columns");
    let z_val = solution[z_ids[0]];
    let mut cuts = Vec::new();
    let z_true = model.set_z(&assort)?;
    if z_val - z_true > row_tol(z_true) {
        cuts.push(submodular_cut_z(model, &assort, z_ids[0], &vars.x)?);
    }
    for n in 0..model.n_nests {
        let y_true = floored_y(model, n, &assort, floors[n])?;
        let y_val = solution[y_ids[0][n]];
        if y_true - y_val > row_tol(y_true) {
            cuts.push(supermodular_cut_y_floored(
                model,
                n,
                &assort,
                floors[n],
                y_ids[0][n],
                &vars.x,
            )?);
        }
        let t_val = solution[t_ids[0][n]];
        let exp_true = (y_val - z_val).exp();
        if exp_true - t_val > row_tol(exp_true) {
            cuts.push(oa_cut_exp(y_val, z_val, t_ids[0][n], y_ids[0][n], z_ids[0])?);
        }
    }
    if use_prop5 && model.sigma.iter().all(|&sgm| sgm < 1.0) {
        let y_vals: Vec<f64> = y_ids[0].iter().map(|&id| solution[id]).collect();
        let args: Vec<f64> = (0..model.n_nests)
            .map(|n| model.sigma[n] / (model.sigma[n] - 1.0) * y_vals[n])
            .collect();
        let amax = args.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = amax + args.iter().map(|&a| (a - amax).exp()).sum::<f64>().ln();
        if lse - z_val > row_tol(lse) {
            cuts.push(oa_cut_prop5(&model.sigma, &y_vals, z_ids[0], &y_ids[0])?);
        }
    }
    Ok(cuts)
}

/// Exact assortment optimization when some nests have zero opt-out weight.
/// The master keeps separate numerator (`W`, floored) and denominator (`U`,
/// unfloored) copies of each inclusive value; assortments that empty every
/// nest leave the choice probabilities undefined and are excluded from the
/// search, matching the enumeration oracle.
pub fn solve_zero_optout(
    model: &GnlModel,
    constraints: &LinearConstraintSet,
    beta: f64,
    config: &SolverConfig,
) -> Result<SolveResult> {
    let floors = optout_floors(model, config.floor_scale)?;
    if floors.iter().all(|f| f.is_none()) {
        return solve_gnl_logconvex(model, constraints, beta, config);
    }
    let start = Instant::now();
    let deadline = config.time_limit.map(|d| start + d);
    let m = model.m;
    let all_zero = floors.iter().all(|f| f.is_some());

    // Single-product corner: with every opt-out weight zero there is exactly
    // one candidate, and the set-function machinery has no interior sets to
    // anchor on.
    if all_zero && m == 1 {
        let only = Assortment::new(vec![1]);
        let point = [1.0];
        if !constraints.satisfied(&point, 1e-9) {
            return Err(Error::Infeasible);
        }
        let revenue = model.expected_revenue(&only)?;
        let vars = MasterVariables {
            x: vec![0],
            w: vec![vec![]],
            u: None,
            h: None,
            k: None,
            y: None,
            z: None,
            t: None,
            s: vec![BTreeMap::new()],
            floors: Some(floors.iter().map(|f| f.unwrap_or(0.0)).collect()),
            n_cols: 1,
        };
        return Ok(SolveResult {
            assortment: only,
            revenue,
            bound: revenue,
            gap: 0.0,
            nodes: 1,
            lp_iterations: 0,
            cuts_oa: 0,
            cuts_sc: 0,
            cuts_mc: 0,
            seconds: start.elapsed().as_secs_f64(),
            termination: Termination::Optimal,
            columns: vec![1.0],
            vars,
            bisection: None,
            bound_history: vec![revenue],
        });
    }

    let floor_vec: Vec<f64> = (0..model.n_nests)
        .map(|n| floors[n].unwrap_or(model.v0[n]))
        .collect();
    let mut bounds = variable_bounds(model, beta, Some(&floor_vec))?;
    // The floored bounds overstate the smallest denominator: an empty nest
    // with zero opt-out weight truly contributes nothing. The attainable
    // minimum of `z` is at the empty set (when defined) or at a singleton.
    let mut z_lo = f64::INFINITY;
    if let Ok(v) = model.set_z(&Assortment::empty(m)) {
        z_lo = v;
    }
    for i in 0..m {
        if let Ok(v) = model.set_z(&Assortment::from_support(m, &[i])) {
            z_lo = z_lo.min(v);
        }
    }
    if !z_lo.is_finite() {
        return Err(Error::InvalidModel(vec![
            "no assortment yields a positive choice denominator".into(),
        ]));
    }
    bounds.z_lo = z_lo;
    for n in 0..model.n_nests {
        bounds.t_hi[n] = (bounds.y_hi[n] - bounds.z_lo).exp();
        bounds.t_lo[n] = (bounds.y_lo[n] - bounds.z_hi).exp();
    }

    let mut cost = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let push = |c: f64, l: f64, h: f64, cost: &mut Vec<f64>, lo: &mut Vec<f64>, hi: &mut Vec<f64>| -> usize {
        cost.push(c);
        lo.push(l);
        hi.push(h);
        cost.len() - 1
    };
    let nn = model.n_nests;
    let x: Vec<usize> =
        (0..m).map(|_| push(0.0, 0.0, 1.0, &mut cost, &mut lo, &mut hi)).collect();
    let w: Vec<usize> = (0..nn)
        .map(|n| push(0.0, bounds.w_lo[n], bounds.w_hi[n], &mut cost, &mut lo, &mut hi))
        .collect();
    let u: Vec<usize> = (0..nn)
        .map(|n| {
            let u_lo = if floors[n].is_some() { 0.0 } else { model.v0[n] };
            push(0.0, u_lo, bounds.w_hi[n], &mut cost, &mut lo, &mut hi)
        })
        .collect();
    let y: Vec<usize> = (0..nn)
        .map(|n| push(0.0, bounds.y_lo[n], bounds.y_hi[n], &mut cost, &mut lo, &mut hi))
        .collect();
    let z = push(0.0, bounds.z_lo, bounds.z_hi, &mut cost, &mut lo, &mut hi);
    let t: Vec<usize> = (0..nn)
        .map(|n| {
            push(beta * model.v0[n], bounds.t_lo[n], bounds.t_hi[n], &mut cost, &mut lo, &mut hi)
        })
        .collect();
    let mut s = BTreeMap::new();
    for n in 0..nn {
        for i in 0..m {
            let weight = model.alpha[i][n] * model.v[i][n];
            if weight > 0.0 {
                let id = push(
                    weight * (beta - model.r[i]),
                    0.0_f64.min(bounds.t_lo[n]),
                    bounds.t_hi[n].max(0.0),
                    &mut cost,
                    &mut lo,
                    &mut hi,
                );
                s.insert((n, i), id);
            }
        }
    }

    let mut problem = LpProblem::new(cost, lo, hi)?;
    for n in 0..nn {
        let mut w_coeffs = vec![(w[n], 1.0)];
        let mut u_coeffs = vec![(u[n], 1.0)];
        for i in 0..m {
            let weight = model.alpha[i][n] * model.v[i][n];
            if weight > 0.0 {
                w_coeffs.push((x[i], -weight));
                u_coeffs.push((x[i], -weight));
            }
        }
        problem.add_row(w_coeffs, RowSense::Ge, model.v0[n])?;
        problem.add_row(u_coeffs, RowSense::Ge, model.v0[n])?;
    }
    let mut mc_rows = 0;
    for (&(n, i), &sid) in &s {
        for cut in mccormick(sid, t[n], x[i], bounds.t_lo[n], bounds.t_hi[n])? {
            problem.add_cut_row(&cut)?;
            mc_rows += 1;
        }
    }
    constraint_rows(&mut problem, constraints, &x)?;
    if all_zero {
        // Every nest empty leaves the denominator at zero; such assortments
        // are undefined under the model and excluded from the search.
        problem.add_row(x.iter().map(|&id| (id, 1.0)).collect(), RowSense::Ge, 1.0)?;
    }

    let vars = MasterVariables {
        x,
        w: vec![w],
        u: Some(u),
        h: None,
        k: None,
        y: Some(vec![y]),
        z: Some(vec![z]),
        t: Some(vec![t]),
        s: vec![s],
        floors: Some(floor_vec),
        n_cols: problem.n_vars(),
    };

    let mut pool = CutPool::new();
    let full = Assortment::new(vec![1; m]);
    let mut anchors = vec![full];
    if model.set_z(&Assortment::empty(m)).is_ok() {
        anchors.push(Assortment::empty(m));
    }
    let y_ids = vars.y.as_ref().expect("y columns");
    let z_ids = vars.z.as_ref().expect("z columns");
    let t_ids = vars.t.as_ref().expect("t columns");
    for anchor in &anchors {
        if config.use_sc_cuts {
            pool.add(submodular_cut_z(model, anchor, z_ids[0], &vars.x)?);
        }
        let z0 = model.set_z(anchor)?;
        for n in 0..nn {
            if config.use_sc_cuts {
                pool.add(supermodular_cut_y_floored(
                    model,
                    n,
                    anchor,
                    floors[n],
                    y_ids[0][n],
                    &vars.x,
                )?);
            }
            let y0 = floored_y(model, n, anchor, floors[n])?;
            pool.add(oa_cut_exp(y0, z0, t_ids[0][n], y_ids[0][n], z_ids[0])?);
        }
    }

    let cb_vars = vars.clone();
    let cb_floors = floors.clone();
    let use_p5 = config.use_prop5;
    let kernel = bnb_solve(
        &problem,
        &vars.x,
        &mut pool,
        |solution| zero_optout_cuts(model, &cb_vars, &cb_floors, solution, use_p5),
        &config.bnb(config.rel_gap, deadline),
    )?;
    if kernel.termination == Termination::Infeasible {
        return Err(Error::Infeasible);
    }
    if kernel.x.is_empty() {
        return Err(Error::Numerical(
            "branch-and-cut hit a limit before finding any integral point".into(),
        ));
    }
    let assortment = snap_assortment(&kernel.x, m);
    let revenue = model.expected_revenue(&assortment)?;
    let bound = beta - kernel.bound;
    let (cuts_oa, cuts_sc) = pool_split(&pool);
    Ok(SolveResult {
        assortment,
        revenue,
        bound,
        gap: revenue_gap(revenue, bound),
        nodes: kernel.nodes,
        lp_iterations: kernel.lp_iterations,
        cuts_oa,
        cuts_sc,
        cuts_mc: mc_rows,
        seconds: start.elapsed().as_secs_f64(),
        termination: kernel.termination,
        columns: kernel.x,
        vars,
        bisection: None,
        bound_history: kernel.bound_history.iter().map(|&b| beta - b).collect(),
    })
}

// ---------------------------------------------------------------------------
// Bilinear mixture formulation (printer only)
// ---------------------------------------------------------------------------

/// Renders the bilinear mixture formulation as text for documentation and
/// constraint cross-checking. The per-segment ratio variables multiply the
/// summed power columns, a product the linear kernel does not support, so
/// this formulation is printed rather than solved; the convex path solves
/// the same problem exactly.
pub fn format_mgnl_bi(mixed: &MgnlModel, beta: f64) -> String {
    let mut out = String::new();
    let tt = mixed.n_segments();
    let m = mixed.m();
    out.push_str(&format!(
        "minimize  sum_t theta_t delta_t   over t in 1..{tt}\n"
    ));
    out.push_str(&format!("  theta = {:?}\n", mixed.theta));
    out.push_str(&format!("  beta = {beta}\n"));
    out.push_str("subject to, for each segment t:\n");
    out.push_str(
        "  sum_n h[t,n] * (beta*V0[t,n] + sum_i alphaV[t,n,i]*(beta - r[t,i])*x[i])\n",
    );
    out.push_str("      = delta_t * sum_n k[t,n]\n");
    out.push_str("  k[t,n] = W[t,n] * h[t,n]\n");
    out.push_str("  h[t,n] >= W[t,n]^(sigma[t,n]-1),  k[t,n] <= W[t,n]^sigma[t,n]\n");
    for (t, seg) in mixed.segments.iter().enumerate() {
        for n in 0..seg.n_nests {
            let mut terms = String::new();
            for i in 0..m {
                let weight = seg.alpha[i][n] * seg.v[i][n];
                if weight > 0.0 {
                    terms.push_str(&format!(" + {weight}*x[{i}]"));
                }
            }
            out.push_str(&format!(
                "  W[{t},{n}] = {}{terms}   (sigma = {})\n",
                seg.v0[n], seg.sigma[n]
            ));
        }
    }
    out.push_str(&format!(
        "  x in {{0,1}}^{m}, W, h, k >= 0, delta_t >= 0\n"
    ));
    out
}

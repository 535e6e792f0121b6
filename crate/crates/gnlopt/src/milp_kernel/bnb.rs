//! Best-bound branch and bound over binary variables with a lazy-cut
//! callback.
//!
//! The callback is consulted at every node relaxation whose binaries are
//! integral within tolerance. It returns violated globally-valid cuts; the
//! point becomes an incumbent only when it returns none. All cuts live in a
//! shared deduplicating pool and apply to every open node.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use super::simplex::PersistentLp;
use super::{CutPool, LpProblem, LpStatus};
use crate::reformulate::LinearCut;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSelection {
    BestBound,
    DepthFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchRule {
    MostFractional,
}

#[derive(Debug, Clone)]
pub struct BnbConfig {
    pub int_tol: f64,
    pub rel_gap: f64,
    pub node_limit: u64,
    pub time_limit: Option<Duration>,
    pub node_selection: NodeSelection,
    pub branch_rule: BranchRule,
    /// Ceiling on cut rounds at a single node before giving up.
    pub callback_round_limit: u32,
}

impl Default for BnbConfig {
    fn default() -> Self {
        BnbConfig {
            int_tol: 1e-6,
            rel_gap: 1e-6,
            node_limit: u64::MAX,
            time_limit: None,
            node_selection: NodeSelection::BestBound,
            branch_rule: BranchRule::MostFractional,
            callback_round_limit: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Optimal,
    NodeLimit,
    TimeLimit,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: u64,
    pub lp_iterations: u64,
    pub wall: Duration,
    pub termination: Termination,
    /// Best bound recorded at each node pop; non-decreasing by construction.
    pub bound_history: Vec<f64>,
}

struct Node {
    /// (variable, lo, hi) fixings accumulated from the root.
    fixings: Vec<(usize, f64, f64)>,
    bound: f64,
    depth: u32,
    seq: u64,
}

/// Heap ordering: smallest bound first (best-bound), then FIFO by sequence.
/// Depth-first mode orders by depth before bound.
struct Prioritized {
    key_depth: Option<u32>,
    bound: f64,
    seq: u64,
    node: Node,
}

impl PartialEq for Prioritized {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Prioritized {}
impl PartialOrd for Prioritized {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Prioritized {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; reverse to pop the best node first.
        let primary = match (self.key_depth, other.key_depth) {
            (Some(a), Some(b)) => a.cmp(&b), // deeper pops first
            _ => Ordering::Equal,
        };
        primary
            .then_with(|| other.bound.partial_cmp(&self.bound).expect("finite bounds"))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Adds a cut to the shared pool; false means an equivalent cut was already
/// present. Pool cuts are globally valid, so they apply to all open nodes.
pub fn add_cut_global(pool: &mut CutPool, cut: LinearCut) -> bool {
    pool.add(cut)
}

/// Branch-and-cut driver. `binaries` lists the variable ids subject to
/// integrality (their bounds must be within [0, 1]); `pool` may arrive
/// pre-seeded with root cuts and returns holding every cut accepted during
/// the solve. The callback sees the node solution and returns violated cuts,
/// or nothing to accept the point as an incumbent.
pub fn bnb_solve<F>(
    problem: &LpProblem,
    binaries: &[usize],
    pool: &mut CutPool,
    mut cut_oracle: F,
    config: &BnbConfig,
) -> Result<SolveResult>
where
    F: FnMut(&[f64]) -> Result<Vec<LinearCut>>,
{
    let start = Instant::now();
    if config.int_tol <= 0.0 || config.rel_gap < 0.0 {
        return Err(Error::InvalidInput("tolerances must be positive".into()));
    }
    for &j in binaries {
        if j >= problem.n_vars() || problem.lo[j] < -1e-12 || problem.hi[j] > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "binary variable {j} lacks [0,1] bounds"
            )));
        }
    }

    // Working copy: base rows plus every pooled cut, with per-node bound
    // fixings applied and reverted around each LP solve. The persistent LP
    // keeps one factorized basis across all nodes; bound fixings are
    // absorbed by dual pivots, only appended cut rows force refactoring.
    let mut work = problem.clone();
    for cut in pool.iter() {
        work.add_cut_row(cut)?;
    }
    let mut lp = PersistentLp::new(&work)?;

    let mut heap: BinaryHeap<Prioritized> = BinaryHeap::new();
    let mut seq: u64 = 0;
    let mut nodes: u64 = 0;
    let mut lp_iterations: u64 = 0;
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut reported_bound = f64::NEG_INFINITY;
    let mut bound_history = Vec::new();

    let root = Node { fixings: Vec::new(), bound: f64::NEG_INFINITY, depth: 0, seq };
    heap.push(prioritize(root, config));
    seq += 1;

    let gap_of = |inc: f64, bound: f64| (inc - bound) / f64::max(1.0, inc.abs());

    let mut termination = Termination::Optimal;
    while let Some(top) = heap.pop() {
        let node = top.node;
        let inc_obj = incumbent.as_ref().map(|(_, o)| *o).unwrap_or(f64::INFINITY);
        // Node bounds only improve along the tree, so the first popped bound
        // that closes the gap proves optimality (best-bound order).
        if node.bound > f64::NEG_INFINITY && gap_of(inc_obj, node.bound) <= config.rel_gap {
            reported_bound = reported_bound.max(node.bound);
            continue;
        }
        if nodes >= config.node_limit {
            termination = Termination::NodeLimit;
            heap.push(prioritize(node, config));
            break;
        }
        if let Some(lim) = config.time_limit {
            if start.elapsed() >= lim {
                termination = Termination::TimeLimit;
                heap.push(prioritize(node, config));
                break;
            }
        }
        nodes += 1;
        reported_bound = reported_bound.max(node.bound.max(f64::NEG_INFINITY));
        if node.bound > f64::NEG_INFINITY {
            bound_history.push(reported_bound);
        }

        // Solve the node relaxation, re-solving while the callback keeps
        // producing new cuts at integral points.
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        let mut node_bound = node.bound;
        apply_fixings(&mut work, &node.fixings);
        let mut rounds = 0u32;
        let verdict = loop {
            let sol = lp.solve(&work)?;
            lp_iterations += sol.iterations;
            match sol.status {
                LpStatus::Infeasible => break NodeVerdict::Pruned,
                LpStatus::Unbounded => {
                    revert_fixings(&mut work, problem, &node.fixings);
                    return Err(Error::Unbounded);
                }
                LpStatus::Optimal => {}
            }
            node_bound = node_bound.max(sol.objective);
            let inc_obj = incumbent.as_ref().map(|(_, o)| *o).unwrap_or(f64::INFINITY);
            if gap_of(inc_obj, node_bound) <= config.rel_gap {
                break NodeVerdict::Pruned;
            }
            let frac = most_fractional(&sol.x, binaries, config.int_tol);
            match frac {
                Some(j) => break NodeVerdict::Branch(j),
                None => {
                    let cuts = cut_oracle(&sol.x)?;
                    if cuts.is_empty() {
                        accepted = Some((sol.x.clone(), sol.objective));
                        break NodeVerdict::Pruned;
                    }
                    let mut any_new = false;
                    for cut in cuts {
                        if pool.add(cut.clone()) {
                            work.add_cut_row(&cut)?;
                            any_new = true;
                        }
                    }
                    if !any_new {
                        revert_fixings(&mut work, problem, &node.fixings);
                        return Err(Error::Numerical(
                            "cut callback stalled: every returned cut was already pooled"
                                .into(),
                        ));
                    }
                    rounds += 1;
                    if rounds > config.callback_round_limit {
                        revert_fixings(&mut work, problem, &node.fixings);
                        return Err(Error::Numerical(format!(
                            "cut callback exceeded {} rounds at one node",
                            config.callback_round_limit
                        )));
                    }
                }
            }
        };
        revert_fixings(&mut work, problem, &node.fixings);

        if let Some((x, obj)) = accepted {
            let inc_obj = incumbent.as_ref().map(|(_, o)| *o).unwrap_or(f64::INFINITY);
            if obj < inc_obj {
                let mut snapped = x;
                for &j in binaries {
                    snapped[j] = snapped[j].round();
                }
                incumbent = Some((snapped, obj));
            }
        }

        if let NodeVerdict::Branch(j) = verdict {
            for (fix_lo, fix_hi) in [(0.0, 0.0), (1.0, 1.0)] {
                let mut fixings = node.fixings.clone();
                fixings.push((j, fix_lo, fix_hi));
                heap.push(prioritize(
                    Node { fixings, bound: node_bound, depth: node.depth + 1, seq },
                    config,
                ));
                seq += 1;
            }
        }
    }

    let inc = incumbent.as_ref();
    let objective = inc.map(|(_, o)| *o).unwrap_or(f64::INFINITY);
    // Proven dual bound: the weakest open subtree, clamped by the incumbent;
    // with the tree exhausted the incumbent itself is proven.
    let bound = if heap.is_empty() {
        objective
    } else {
        heap.iter()
            .map(|p| p.node.bound)
            .fold(f64::INFINITY, f64::min)
            .min(objective)
    };
    let (termination, gap) = match (inc, termination) {
        (None, Termination::Optimal) => (Termination::Infeasible, 0.0),
        (None, t) => (t, f64::INFINITY),
        (Some((_, o)), t) => (t, gap_of(*o, bound).max(0.0)),
    };
    Ok(SolveResult {
        x: inc.map(|(x, _)| x.clone()).unwrap_or_default(),
        objective,
        bound,
        gap,
        nodes,
        lp_iterations,
        wall: start.elapsed(),
        termination,
        bound_history,
    })
}

enum NodeVerdict {
    Pruned,
    Branch(usize),
}

fn prioritize(node: Node, config: &BnbConfig) -> Prioritized {
    Prioritized {
        key_depth: match config.node_selection {
            NodeSelection::BestBound => None,
            NodeSelection::DepthFirst => Some(node.depth),
        },
        bound: if node.bound == f64::NEG_INFINITY { f64::MIN } else { node.bound },
        seq: node.seq,
        node,
    }
}

fn apply_fixings(work: &mut LpProblem, fixings: &[(usize, f64, f64)]) {
    for &(j, lo, hi) in fixings {
        work.lo[j] = lo;
        work.hi[j] = hi;
    }
}

fn revert_fixings(work: &mut LpProblem, base: &LpProblem, fixings: &[(usize, f64, f64)]) {
    for &(j, _, _) in fixings {
        work.lo[j] = base.lo[j];
        work.hi[j] = base.hi[j];
    }
}

/// Binary whose fractional part is closest to one half; `None` when every
/// binary is integral within `tol`. Ties break to the lowest index.
fn most_fractional(x: &[f64], binaries: &[usize], tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in binaries {
        let frac = (x[j] - x[j].round()).abs();
        if frac > tol {
            let centrality = (0.5 - (x[j] - x[j].floor() - 0.5).abs()).abs();
            // Larger fractional centrality wins; lowest index on ties.
            let better = match best {
                None => true,
                Some((_, bc)) => centrality > bc + 1e-15,
            };
            if better {
                best = Some((j, centrality));
            }
        }
    }
    best.map(|(j, _)| j)
}

//! Joint assortment and pricing.
//!
//! Two price regimes. A finite ladder per product expands into virtual
//! product-price items and is solved exactly by the assortment machinery.
//! A continuous price box per product goes through an adaptive secant
//! overestimate of the price exponentials: the breakpoint grid induces a
//! ladder (solved exactly), coordinate search polishes the prices between
//! grid points, and the grid is re-solved with the polished prices added.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assort_solver::{solve_gnl_logconvex, solve_mgnl, SolveResult, SolverConfig};
use crate::choice_core::{Assortment, GnlModel, LinearConstraintSet, MgnlModel};
use crate::{Error, Result};

/// A full coordinate pass that improves the objective by less than this
/// (relative) terminates the pass loop.
const POLISH_PASS_TOL: f64 = 1e-10;
/// Coordinate passes per start; cyclic search converges much faster.
const POLISH_PASS_LIMIT: usize = 60;
/// Points of the coarse scan that brackets the 1-D slice maxima before
/// golden-section refinement. The slice need not be unimodal.
const SLICE_SCAN: usize = 64;
/// Rounds of grid solve + polish.
const CP_ROUND_LIMIT: u32 = 3;
/// A round that improves the incumbent revenue by less than this stops the
/// round loop.
const CP_ROUND_TOL: f64 = 1e-6;

/// Admissible discrete prices per product, with the utility response
/// `utility(i, l) = kappa[i] - eta[i] * prices[i][l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceLadder {
    /// Strictly increasing positive prices per product.
    pub prices: Vec<Vec<f64>>,
    /// Price sensitivity per product, strictly positive.
    pub eta: Vec<f64>,
    /// Intrinsic attractiveness per product.
    pub kappa: Vec<f64>,
}

impl PriceLadder {
    pub fn new(prices: Vec<Vec<f64>>, eta: Vec<f64>, kappa: Vec<f64>) -> Result<Self> {
        let m = prices.len();
        if eta.len() != m || kappa.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} price rows but {} sensitivities and {} intercepts",
                eta.len(),
                kappa.len()
            )));
        }
        for i in 0..m {
            if !(eta[i] > 0.0) || !eta[i].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "product {i}: sensitivity {} must be positive",
                    eta[i]
                )));
            }
            if !kappa[i].is_finite() {
                return Err(Error::InvalidInput(format!("product {i}: non-finite intercept")));
            }
            let row = &prices[i];
            for (l, &p) in row.iter().enumerate() {
                if !(p > 0.0) || !p.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "product {i} level {l}: price {p} must be positive"
                    )));
                }
                if l > 0 && !(p > row[l - 1]) {
                    return Err(Error::InvalidInput(format!(
                        "product {i}: prices must increase strictly at level {l}"
                    )));
                }
            }
        }
        Ok(PriceLadder { prices, eta, kappa })
    }

    pub fn m(&self) -> usize {
        self.prices.len()
    }

    pub fn n_virtual(&self) -> usize {
        self.prices.iter().map(Vec::len).sum()
    }

    /// Deterministic utility of product `i` at its `l`-th price.
    pub fn utility(&self, i: usize, l: usize) -> f64 {
        self.kappa[i] - self.eta[i] * self.prices[i][l]
    }
}

/// Continuous price boxes `[lo, hi]` per product, with the same utility
/// response as [`PriceLadder`].
#[derive(Debug, Clone, PartialEq)]
pub struct PriceBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub eta: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl PriceBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, eta: Vec<f64>, kappa: Vec<f64>) -> Result<Self> {
        let m = lo.len();
        if hi.len() != m || eta.len() != m || kappa.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "price box arrays have lengths {m}/{}/{}/{}",
                hi.len(),
                eta.len(),
                kappa.len()
            )));
        }
        for i in 0..m {
            if !(lo[i] > 0.0) || !(hi[i] >= lo[i]) || !hi[i].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "product {i}: price box [{}, {}] is not 0 < lo <= hi",
                    lo[i], hi[i]
                )));
            }
            if !(eta[i] > 0.0) || !eta[i].is_finite() || !kappa[i].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "product {i}: bad price response ({}, {})",
                    eta[i], kappa[i]
                )));
            }
        }
        Ok(PriceBounds { lo, hi, eta, kappa })
    }

    pub fn m(&self) -> usize {
        self.lo.len()
    }

    /// Range of `w = (kappa - eta * y) / sigma` as `y` sweeps the box;
    /// decreasing in `y`, so the low end comes from the high price.
    pub fn w_domain(&self, i: usize, sigma_n: f64) -> (f64, f64) {
        (
            (self.kappa[i] - self.eta[i] * self.hi[i]) / sigma_n,
            (self.kappa[i] - self.eta[i] * self.lo[i]) / sigma_n,
        )
    }

    /// Inverse of the `w` map; prices outside the box are clamped back in.
    pub fn price_of_w(&self, i: usize, sigma_n: f64, w: f64) -> f64 {
        ((self.kappa[i] - sigma_n * w) / self.eta[i]).clamp(self.lo[i], self.hi[i])
    }
}

/// Secant overestimate of `exp` on `[q[0], q[H]]`: segment `h` interpolates
/// between `(q[h], e^{q[h]})` and `(q[h+1], e^{q[h+1]})`. Certified so that
/// the overshoot on every segment is at most `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Breakpoints {
    /// Strictly increasing grid; `q.len()` is the segment count plus one.
    pub q: Vec<f64>,
    /// Per-segment secant slope `(e^{q[h+1]} - e^{q[h]}) / (q[h+1] - q[h])`.
    pub slopes: Vec<f64>,
    /// Certified maximum overshoot per segment.
    pub epsilon: f64,
    /// Binary-search tolerance the construction used.
    pub tau: f64,
}

impl Breakpoints {
    pub fn segments(&self) -> usize {
        self.q.len() - 1
    }

    pub fn lo(&self) -> f64 {
        self.q[0]
    }

    pub fn hi(&self) -> f64 {
        *self.q.last().unwrap()
    }
}

/// Largest overshoot of the secant of `exp` through `q_h` and `q_next` over
/// the exact function on `[q_h, q_next]`. Nonnegative by convexity.
pub fn pwla_theta(q_h: f64, q_next: f64) -> Result<f64> {
    if !(q_next > q_h) {
        return Err(Error::InvalidInput(format!(
            "interval end {q_next} must exceed start {q_h}"
        )));
    }
    let e_next = q_next.exp();
    if !e_next.is_finite() {
        return Err(Error::Numerical(format!("exp overflow at breakpoint {q_next}")));
    }
    let e_h = q_h.exp();
    let slope = (e_next - e_h) / (q_next - q_h);
    if slope <= 0.0 {
        // Cancellation on an ulp-wide interval; the true overshoot there is
        // about e^q * width^2 / 8, below any representable tolerance.
        return Ok(0.0);
    }
    // The gap secant(w) - e^w is concave with stationary point ln(slope).
    Ok((e_h + (slope.ln() - q_h - 1.0) * slope).max(0.0))
}

/// Largest `q` in `(q_h, w_hi]` whose secant segment stays within `epsilon`,
/// located by bisection to within `tau`. Returns `w_hi` itself whenever the
/// whole remaining interval already certifies.
pub fn pwla_next_breakpoint(q_h: f64, w_hi: f64, epsilon: f64, tau: f64) -> Result<f64> {
    if !(w_hi > q_h) {
        return Err(Error::InvalidInput(format!("domain end {w_hi} must exceed {q_h}")));
    }
    if !(epsilon > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tolerances must be positive, got epsilon {epsilon} and tau {tau}"
        )));
    }
    if pwla_theta(q_h, w_hi)? <= epsilon {
        return Ok(w_hi);
    }
    // Invariants: theta(l) <= epsilon (once l has moved off q_h, where the
    // gap is zero by definition), theta(u) > epsilon.
    let (mut l, mut u) = (q_h, w_hi);
    loop {
        let w = 0.5 * (l + u);
        if w <= l || w >= u {
            // Adjacent floats; take whichever endpoint still certifies.
            if pwla_theta(q_h, u)? <= epsilon {
                return Ok(u);
            }
            if l > q_h {
                return Ok(l);
            }
            return Err(Error::Numerical(format!(
                "no certifiable step from {q_h} at tolerance {epsilon}"
            )));
        }
        if pwla_theta(q_h, w)? <= epsilon {
            l = w;
        } else {
            u = w;
        }
        if u - l <= tau && l > q_h {
            return Ok(l);
        }
    }
}

/// Builds the breakpoint grid over `[w_lo, w_hi]` by repeatedly taking the
/// widest certifiable step. A degenerate domain yields zero segments.
pub fn pwla_build(w_lo: f64, w_hi: f64, epsilon: f64, tau: f64) -> Result<Breakpoints> {
    if !(w_hi >= w_lo) || !w_lo.is_finite() || !w_hi.is_finite() {
        return Err(Error::InvalidInput(format!("bad approximation domain [{w_lo}, {w_hi}]")));
    }
    if !(epsilon > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tolerances must be positive, got epsilon {epsilon} and tau {tau}"
        )));
    }
    let mut q = vec![w_lo];
    while *q.last().unwrap() < w_hi {
        let last = *q.last().unwrap();
        let next = pwla_next_breakpoint(last, w_hi, epsilon, tau)?;
        if !(next > last) {
            return Err(Error::Numerical(format!("breakpoint search stalled at {last}")));
        }
        q.push(next);
    }
    let slopes = q
        .windows(2)
        .map(|pair| (pair[1].exp() - pair[0].exp()) / (pair[1] - pair[0]))
        .collect();
    Ok(Breakpoints { q, slopes, epsilon, tau })
}

/// Evaluates the secant overestimate at `w`. Exact at every grid point.
pub fn pwla_eval(bp: &Breakpoints, w: f64) -> Result<f64> {
    if !(w >= bp.lo() && w <= bp.hi()) {
        return Err(Error::InvalidInput(format!(
            "w = {w} outside the approximated domain [{}, {}]",
            bp.lo(),
            bp.hi()
        )));
    }
    // Exactness at breakpoints is part of the contract; never interpolate
    // across one.
    if let Ok(j) = bp.q.binary_search_by(|probe| probe.partial_cmp(&w).unwrap()) {
        return Ok(bp.q[j].exp());
    }
    let h = bp.q.partition_point(|&x| x < w) - 1;
    Ok(bp.q[h].exp() + bp.slopes[h] * (w - bp.q[h]))
}

/// Closed-form ceiling on the segment count the adaptive construction can
/// produce for the price box `[lo, hi]` mapped through `(kappa - eta*y) /
/// sigma`, at overshoot tolerance `epsilon`.
pub fn pwla_bound(
    lo: f64,
    hi: f64,
    eta: f64,
    kappa: f64,
    sigma: f64,
    epsilon: f64,
) -> Result<usize> {
    if !(hi >= lo) || !lo.is_finite() || !hi.is_finite() || !kappa.is_finite() {
        return Err(Error::InvalidInput(format!("bad price range [{lo}, {hi}]")));
    }
    if !(eta > 0.0) || !(sigma > 0.0 && sigma <= 1.0) || !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need eta > 0, sigma in (0, 1], epsilon > 0; got {eta}, {sigma}, {epsilon}"
        )));
    }
    let half_top = (kappa - eta * lo) / (2.0 * sigma);
    let value = half_top.exp() * eta * (hi - lo) / (2.0 * (2.0 * epsilon).sqrt() * sigma);
    Ok(value.ceil() as usize)
}

/// Expands every product into one virtual item per admissible price. The
/// virtual item for price `p` carries weight `exp((kappa - eta*p) / sigma_n)`
/// in each nest the product belongs to (membership read from `alpha` alone,
/// matching the oracle's evaluation convention) and earns `p`. The returned
/// rows let each product keep at most one active price.
pub fn expand_discrete(
    model: &GnlModel,
    ladder: &PriceLadder,
) -> Result<(GnlModel, LinearConstraintSet)> {
    if ladder.m() != model.m {
        return Err(Error::DimensionMismatch(format!(
            "ladder covers {} products, model has {}",
            ladder.m(),
            model.m
        )));
    }
    for (i, row) in ladder.prices.iter().enumerate() {
        if row.is_empty() {
            return Err(Error::InvalidInput(format!("product {i} has no admissible prices")));
        }
    }
    let total = ladder.n_virtual();
    let mut v = Vec::with_capacity(total);
    let mut alpha = Vec::with_capacity(total);
    let mut r = Vec::with_capacity(total);
    for i in 0..model.m {
        for l in 0..ladder.prices[i].len() {
            let util = ladder.utility(i, l);
            v.push(
                (0..model.n_nests)
                    .map(|n| {
                        if model.alpha[i][n] > 0.0 {
                            (util / model.sigma[n]).exp()
                        } else {
                            0.0
                        }
                    })
                    .collect::<Vec<f64>>(),
            );
            alpha.push(model.alpha[i].clone());
            r.push(ladder.prices[i][l]);
        }
    }
    let expanded = if model.v0.iter().all(|&w0| w0 > 0.0) {
        GnlModel::new(model.v0.clone(), v, alpha, model.sigma.clone(), r)?
    } else {
        GnlModel::new_allow_zero_optout(model.v0.clone(), v, alpha, model.sigma.clone(), r)?
    };
    let mut a = Vec::with_capacity(model.m);
    let mut offset = 0usize;
    for i in 0..model.m {
        let mut row = vec![0.0; total];
        for slot in row.iter_mut().skip(offset).take(ladder.prices[i].len()) {
            *slot = 1.0;
        }
        offset += ladder.prices[i].len();
        a.push(row);
    }
    let one_price = LinearConstraintSet::new(total, a, vec![1.0; model.m])?;
    Ok((expanded, one_price))
}

/// Same expansion applied to every segment of a mixture; the ladder (and so
/// the virtual index space) is shared across segments.
pub fn expand_discrete_mgnl(
    mixed: &MgnlModel,
    ladder: &PriceLadder,
) -> Result<(MgnlModel, LinearConstraintSet)> {
    let mut segments = Vec::with_capacity(mixed.segments.len());
    let mut rows: Option<LinearConstraintSet> = None;
    for segment in &mixed.segments {
        let (expanded, one_price) = expand_discrete(segment, ladder)?;
        segments.push(expanded);
        rows.get_or_insert(one_price);
    }
    Ok((MgnlModel::new(segments, mixed.theta.clone())?, rows.unwrap()))
}

/// Maps product-space rows onto the virtual items: a coefficient on `x_i`
/// lands on every price level of product `i`.
fn lift_product_rows(constraints: &LinearConstraintSet, ladder: &PriceLadder) -> Vec<Vec<f64>> {
    let total = ladder.n_virtual();
    let mut out = Vec::with_capacity(constraints.n_rows());
    for row in &constraints.a {
        let mut lifted = vec![0.0; total];
        let mut offset = 0usize;
        for (i, &coeff) in row.iter().enumerate() {
            for slot in lifted.iter_mut().skip(offset).take(ladder.prices[i].len()) {
                *slot = coeff;
            }
            offset += ladder.prices[i].len();
        }
        out.push(lifted);
    }
    out
}

/// Ladder-priced solve mapped back to product space.
#[derive(Debug, Clone)]
pub struct DpSolveResult {
    /// Offered set over the real products.
    pub assortment: Assortment,
    /// Chosen price per product; zero where the product is not offered.
    pub prices: Vec<f64>,
    /// Ladder level per product.
    pub price_index: Vec<Option<usize>>,
    /// The virtual-item solve everything above was read from.
    pub inner: SolveResult,
}

/// Rescales nest weights without changing any expected revenue.
///
/// Multiplying `v0[n]` and every `v[i][n]` by `c_n = C^(1/sigma[n])` with a
/// shared `C` scales each nest's contribution to the numerator and the
/// denominator of the choice probabilities by the same factor `C`, so the
/// revenue of every assortment is untouched. `C` is picked to pull the
/// largest weight magnitude of every nest toward one; virtual items built
/// from small dissimilarities otherwise put coefficients like `exp(20)` into
/// the master rows and wreck the factorization.
fn balance_nest_scales(model: &GnlModel) -> GnlModel {
    // Both ends of each nest's attainable weight range matter: the top end
    // sets the master row coefficients, the bottom end (the opt-out weight,
    // hit whenever the nest empties) sets the slopes of the log tangents.
    let mut logs = Vec::new();
    for n in 0..model.n_nests {
        let mut total = model.v0[n];
        for i in 0..model.m {
            total += model.alpha[i][n] * model.v[i][n];
        }
        if model.v0[n] > 0.0 {
            logs.push((model.sigma[n], model.v0[n].ln()));
        }
        if total > 0.0 {
            logs.push((model.sigma[n], total.ln()));
        }
    }
    let worst = logs.iter().map(|&(_, m)| m.abs()).fold(0.0f64, f64::max);
    if worst <= 6.0 {
        return model.clone();
    }
    // max_n |M_n + u / sigma_n| is convex piecewise linear in the shared
    // log shift u; its minimizer lies between the per-nest roots.
    let score = |u: f64| logs.iter().map(|&(s, m)| (m + u / s).abs()).fold(0.0f64, f64::max);
    let mut lo = logs.iter().map(|&(s, m)| -s * m).fold(f64::INFINITY, f64::min);
    let mut hi = logs.iter().map(|&(s, m)| -s * m).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if score(a) <= score(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let u = 0.5 * (lo + hi);
    if !u.is_finite() || u.abs() < 1e-9 || score(u) >= worst {
        return model.clone();
    }
    let scale: Vec<f64> = model.sigma.iter().map(|&s| (u / s).exp()).collect();
    let v0: Vec<f64> = model.v0.iter().zip(&scale).map(|(&w, &c)| w * c).collect();
    // A live opt-out weight must stay clear of the degeneracy floor.
    if v0.iter().zip(&model.v0).any(|(&s, &o)| o > 0.0 && s < 1e-250) {
        return model.clone();
    }
    let v: Vec<Vec<f64>> = model
        .v
        .iter()
        .map(|row| row.iter().zip(&scale).map(|(&w, &c)| w * c).collect())
        .collect();
    GnlModel::new_allow_zero_optout(
        v0,
        v,
        model.alpha.clone(),
        model.sigma.clone(),
        model.r.clone(),
    )
    .unwrap_or_else(|_| model.clone())
}

/// Solves the ladder-priced problem exactly: expand, append the lifted
/// product-space rows, run the single-shot convex solve, map back.
pub fn solve_jap_dp(
    model: &GnlModel,
    ladder: &PriceLadder,
    extra_constraints: &LinearConstraintSet,
    config: &SolverConfig,
) -> Result<DpSolveResult> {
    let (expanded, one_price) = expand_discrete(model, ladder)?;
    let expanded = balance_nest_scales(&expanded);
    let combined = combine_virtual_rows(&one_price, extra_constraints, ladder, model.m)?;
    let beta = crate::reformulate::choose_beta(&expanded);
    let inner = solve_gnl_logconvex(&expanded, &combined, beta, config)?;
    map_back(model.m, ladder, inner)
}

/// Mixture version of [`solve_jap_dp`]; all segments share the ladder.
pub fn solve_jap_dp_mgnl(
    mixed: &MgnlModel,
    ladder: &PriceLadder,
    extra_constraints: &LinearConstraintSet,
    config: &SolverConfig,
) -> Result<DpSolveResult> {
    let (expanded, one_price) = expand_discrete_mgnl(mixed, ladder)?;
    let expanded = MgnlModel::new(
        expanded.segments.iter().map(balance_nest_scales).collect(),
        expanded.theta.clone(),
    )?;
    let combined = combine_virtual_rows(&one_price, extra_constraints, ladder, mixed.m())?;
    let beta = crate::reformulate::choose_beta_mgnl(&expanded);
    let inner = solve_mgnl(&expanded, &combined, beta, config)?;
    map_back(mixed.m(), ladder, inner)
}

fn combine_virtual_rows(
    one_price: &LinearConstraintSet,
    extra: &LinearConstraintSet,
    ladder: &PriceLadder,
    m: usize,
) -> Result<LinearConstraintSet> {
    if extra.dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "extra constraints are over {} variables, expected the {m} products",
            extra.dim()
        )));
    }
    let mut a = one_price.a.clone();
    let mut b = one_price.b.clone();
    a.extend(lift_product_rows(extra, ladder));
    b.extend_from_slice(&extra.b);
    LinearConstraintSet::new(ladder.n_virtual(), a, b)
}

fn map_back(m: usize, ladder: &PriceLadder, inner: SolveResult) -> Result<DpSolveResult> {
    let mut offered = vec![0u8; m];
    let mut prices = vec![0.0; m];
    let mut price_index = vec![None; m];
    let mut flat = 0usize;
    for i in 0..m {
        for l in 0..ladder.prices[i].len() {
            if inner.assortment.x[flat] == 1 {
                debug_assert_eq!(offered[i], 0, "one-price rows admit a single level");
                offered[i] = 1;
                prices[i] = ladder.prices[i][l];
                price_index[i] = Some(l);
            }
            flat += 1;
        }
    }
    Ok(DpSolveResult { assortment: Assortment::new(offered), prices, price_index, inner })
}

/// True expected revenue of the continuous-price model at `(x, y)`:
/// weights `exp((kappa - eta*y_i) / sigma_n)` on the shell's nest structure.
pub fn cp_revenue(
    shell: &GnlModel,
    bounds: &PriceBounds,
    x: &Assortment,
    y: &[f64],
) -> Result<f64> {
    if x.len() != shell.m || y.len() != shell.m || bounds.m() != shell.m {
        return Err(Error::DimensionMismatch(format!(
            "assortment/prices/bounds over {}/{}/{} entries, model has {} products",
            x.len(),
            y.len(),
            bounds.m(),
            shell.m
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for n in 0..shell.n_nests {
        let mut w = shell.v0[n];
        let mut rev = 0.0;
        for i in 0..shell.m {
            if x.x[i] == 1 && shell.alpha[i][n] > 0.0 {
                let weight =
                    shell.alpha[i][n] * ((bounds.kappa[i] - bounds.eta[i] * y[i]) / shell.sigma[n]).exp();
                w += weight;
                rev += weight * y[i];
            }
        }
        if w <= 0.0 {
            continue;
        }
        let scale = ((shell.sigma[n] - 1.0) * w.ln()).exp();
        num += scale * rev;
        den += scale * w;
    }
    if den <= 0.0 {
        return Err(Error::DegenerateNest { nest: 0, value: den });
    }
    Ok(num / den)
}

/// Continuous-price solve report.
#[derive(Debug, Clone)]
pub struct CpSolveReport {
    pub assortment: Assortment,
    /// Final prices, inside the (possibly row-tightened) boxes for every
    /// product; entries for unoffered products sit at their lower bound.
    pub prices: Vec<f64>,
    /// True expected revenue at the incumbent.
    pub revenue: f64,
    /// Revenue with every price exponential replaced by its secant
    /// overestimate; differs from `revenue` only between grid points.
    pub surrogate: f64,
    /// Best revenue the final discrete grid achieved on its own.
    pub grid_revenue: f64,
    /// Dual bound of the final grid solve. Valid for that grid only, not
    /// for the continuous problem; reported for information.
    pub grid_bound: f64,
    /// Relative gap of the final grid solve.
    pub grid_gap: f64,
    /// Grid-solve-plus-polish rounds executed.
    pub rounds: u32,
    /// Random restarts attempted per polish phase.
    pub polish_starts: u32,
    /// Restarts (over all rounds) that improved the incumbent.
    pub polish_accepted: u32,
    /// Incumbent revenue minus the first grid revenue; nonnegative.
    pub polish_gain: f64,
    /// `w[i][n] = (kappa[i] - eta[i]*prices[i]) / sigma[n]` at the incumbent.
    pub w: Vec<Vec<f64>>,
    /// Secant value of `exp(w[i][n])` at the incumbent, from the per-pair
    /// certified grids.
    pub t_hat: Vec<Vec<f64>>,
    /// True-objective evaluations spent in polish.
    pub evaluations: u64,
}

/// Splits joint rows over `(x, y)` into product-space assortment rows and
/// per-product price-box tightenings. Rows mixing the two spaces, or
/// coupling several prices, have no exact image on a price grid.
fn split_cp_constraints(
    constraints: &LinearConstraintSet,
    bounds: &PriceBounds,
) -> Result<(LinearConstraintSet, PriceBounds)> {
    let m = bounds.m();
    let mut x_rows = Vec::new();
    let mut x_rhs = Vec::new();
    let mut tightened = bounds.clone();
    if constraints.dim() == m {
        // Pure assortment rows.
        return Ok((constraints.clone(), tightened));
    }
    if constraints.dim() != 2 * m {
        return Err(Error::DimensionMismatch(format!(
            "joint constraints must be over x (dim {m}) or (x, y) (dim {}), got {}",
            2 * m,
            constraints.dim()
        )));
    }
    for (k, row) in constraints.a.iter().enumerate() {
        let (xs, ys) = row.split_at(m);
        let y_support: Vec<usize> = (0..m).filter(|&i| ys[i] != 0.0).collect();
        if y_support.is_empty() {
            x_rows.push(xs.to_vec());
            x_rhs.push(constraints.b[k]);
            continue;
        }
        let x_empty = xs.iter().all(|&c| c == 0.0);
        if !x_empty || y_support.len() > 1 {
            return Err(Error::UnsupportedConstraint(format!(
                "row {k} couples prices with other variables; only per-product price \
                 bounds are exactly representable on a price grid"
            )));
        }
        let i = y_support[0];
        let c = ys[i];
        let limit = constraints.b[k] / c;
        if c > 0.0 {
            tightened.hi[i] = tightened.hi[i].min(limit);
        } else {
            tightened.lo[i] = tightened.lo[i].max(limit);
        }
        if tightened.lo[i] > tightened.hi[i] {
            return Err(Error::Infeasible);
        }
    }
    Ok((LinearConstraintSet::new(m, x_rows, x_rhs)?, tightened))
}

/// Certified breakpoint grids for every product-nest membership pair, over
/// the pair's own `w` domain.
fn pair_breakpoints(
    shell: &GnlModel,
    bounds: &PriceBounds,
    epsilon: f64,
) -> Result<Vec<Vec<Option<Breakpoints>>>> {
    let mut out = vec![Vec::with_capacity(shell.n_nests); shell.m];
    for i in 0..shell.m {
        for n in 0..shell.n_nests {
            if shell.alpha[i][n] > 0.0 {
                let (w_lo, w_hi) = bounds.w_domain(i, shell.sigma[n]);
                let tau = (1e-9 * (w_hi - w_lo)).max(f64::MIN_POSITIVE);
                out[i].push(Some(pwla_build(w_lo, w_hi, epsilon, tau)?));
            } else {
                out[i].push(None);
            }
        }
    }
    Ok(out)
}

/// Phase-1 price grid: per product, the breakpoints of the nest that needed
/// the most segments, mapped back to price space, plus the box endpoints.
/// Grids larger than `cap` are thinned evenly over the breakpoint index, so
/// the adaptive density pattern survives and the endpoints stay.
pub fn cp_price_grid(
    shell: &GnlModel,
    bounds: &PriceBounds,
    epsilon: f64,
    cap: usize,
) -> Result<Vec<Vec<f64>>> {
    if bounds.m() != shell.m {
        return Err(Error::DimensionMismatch(format!(
            "bounds cover {} products, model has {}",
            bounds.m(),
            shell.m
        )));
    }
    if cap < 2 {
        return Err(Error::InvalidInput(format!("grid cap {cap} leaves no room for endpoints")));
    }
    let pairs = pair_breakpoints(shell, bounds, epsilon)?;
    let mut grids = Vec::with_capacity(shell.m);
    for i in 0..shell.m {
        let finest = pairs[i]
            .iter()
            .enumerate()
            .filter_map(|(n, bp)| bp.as_ref().map(|bp| (bp.segments(), n)))
            .max_by_key(|&(h, n)| (h, n));
        let mut prices = vec![bounds.lo[i], bounds.hi[i]];
        if let Some((_, n)) = finest {
            let q = &pairs[i][n].as_ref().unwrap().q;
            if q.len() <= cap {
                for &w in q {
                    prices.push(bounds.price_of_w(i, shell.sigma[n], w));
                }
            } else {
                // The certificate ladder piles its points where the secant
                // error is largest, which can be a sliver of the price box;
                // feeding near-duplicate prices to the ladder solve yields
                // near-parallel columns. When the cap binds, keep the ladder
                // points closest to evenly spread target prices instead.
                let mut mapped: Vec<f64> =
                    q.iter().map(|&w| bounds.price_of_w(i, shell.sigma[n], w)).collect();
                mapped.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let span = bounds.hi[i] - bounds.lo[i];
                for j in 0..cap {
                    let target = bounds.lo[i] + span * j as f64 / (cap - 1) as f64;
                    let pos = mapped.partition_point(|&p| p < target);
                    let mut best = f64::INFINITY;
                    let mut pick = mapped[pos.min(mapped.len() - 1)];
                    for &cand in
                        &mapped[pos.saturating_sub(1)..(pos + 1).min(mapped.len())]
                    {
                        if (cand - target).abs() < best {
                            best = (cand - target).abs();
                            pick = cand;
                        }
                    }
                    prices.push(pick);
                }
            }
        }
        prices.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prices.dedup();
        grids.push(prices);
    }
    Ok(grids)
}

/// Golden-section maximization on `[lo, hi]`; assumes unimodality there.
fn golden_max<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    (mid, f(mid))
}

/// Maximizes a 1-D slice that may hold several peaks: a coarse scan brackets
/// every local maximum, golden-section refines each bracket, and the best
/// refined point wins.
fn slice_max<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        return (lo, f(lo));
    }
    let step = (hi - lo) / (SLICE_SCAN as f64);
    let values: Vec<f64> = (0..=SLICE_SCAN).map(|k| f(lo + step * k as f64)).collect();
    let tol = (hi - lo) * 1e-11 + 1e-13;
    let mut best = (lo, values[0]);
    for k in 0..=SLICE_SCAN {
        let is_peak = (k == 0 || values[k] >= values[k - 1])
            && (k == SLICE_SCAN || values[k] >= values[k + 1]);
        if !is_peak {
            continue;
        }
        let a = lo + step * k.saturating_sub(1) as f64;
        let b = lo + step * (k + 1).min(SLICE_SCAN) as f64;
        let (arg, val) = golden_max(f, a, b, tol);
        if val > best.1 {
            best = (arg, val);
        }
    }
    best
}

struct PolishOutcome {
    prices: Vec<f64>,
    revenue: f64,
    accepted: u32,
    evaluations: u64,
}

/// Multi-start cyclic coordinate ascent on the true revenue with the
/// assortment held fixed. Start 0 is the grid incumbent; the rest draw
/// uniform prices. Only improvements are ever kept, so the result never
/// falls below the seed revenue.
fn polish_prices(
    shell: &GnlModel,
    bounds: &PriceBounds,
    x: &Assortment,
    seed_prices: &[f64],
    seed_revenue: f64,
    config: &SolverConfig,
) -> Result<PolishOutcome> {
    let offered: Vec<usize> = (0..shell.m).filter(|&i| x.x[i] == 1).collect();
    let mut best = PolishOutcome {
        prices: seed_prices.to_vec(),
        revenue: seed_revenue,
        accepted: 0,
        evaluations: 0,
    };
    if offered.is_empty() {
        return Ok(best);
    }
    let mut evaluations = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for start in 0..=config.polish_starts {
        let mut y = if start == 0 {
            seed_prices.to_vec()
        } else {
            (0..shell.m)
                .map(|i| rng.gen_range(bounds.lo[i]..=bounds.hi[i]))
                .collect()
        };
        let mut current = cp_revenue(shell, bounds, x, &y)?;
        evaluations += 1;
        for _pass in 0..POLISH_PASS_LIMIT {
            let before = current;
            for &i in &offered {
                let mut slice = |t: f64| {
                    evaluations += 1;
                    let saved = y[i];
                    y[i] = t;
                    // Shapes were validated up front, so evaluation cannot fail.
                    let value = cp_revenue(shell, bounds, x, &y).unwrap_or(f64::NEG_INFINITY);
                    y[i] = saved;
                    value
                };
                let (arg, val) = slice_max(&mut slice, bounds.lo[i], bounds.hi[i]);
                if val > current {
                    y[i] = arg;
                    current = val;
                }
            }
            if current - before <= POLISH_PASS_TOL * (1.0 + before.abs()) {
                break;
            }
        }
        if current > best.revenue {
            best.prices = y;
            best.revenue = current;
            best.accepted += 1;
        }
    }
    best.evaluations = evaluations;
    Ok(best)
}

/// Continuous-price joint solve: certify a secant grid, solve the induced
/// ladder problem exactly, polish prices between grid points by coordinate
/// search, then re-solve with the polished prices added to the grid.
/// `shell` supplies the nest structure (`alpha`, `sigma`, `v0`); its own
/// item weights and revenues are ignored. Joint linear rows may cover the
/// assortment freely; price rows must be per-product bounds.
pub fn solve_jap_cp(
    shell: &GnlModel,
    bounds: &PriceBounds,
    constraints: &LinearConstraintSet,
    epsilon: f64,
    config: &SolverConfig,
) -> Result<CpSolveReport> {
    if bounds.m() != shell.m {
        return Err(Error::DimensionMismatch(format!(
            "bounds cover {} products, model has {}",
            bounds.m(),
            shell.m
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let (x_rows, bounds) = split_cp_constraints(constraints, bounds)?;
    let mut grids = cp_price_grid(shell, &bounds, epsilon, config.cp_grid_cap)?;

    let mut incumbent_x = Assortment::empty(shell.m);
    let mut incumbent_y = bounds.lo.clone();
    let mut incumbent_f = f64::NEG_INFINITY;
    let mut first_grid_revenue = f64::NEG_INFINITY;
    let mut last_dp: Option<DpSolveResult> = None;
    let mut accepted = 0u32;
    let mut evaluations = 0u64;
    let mut rounds = 0u32;

    for round in 0..CP_ROUND_LIMIT {
        rounds = round + 1;
        let ladder = PriceLadder::new(grids.clone(), bounds.eta.clone(), bounds.kappa.clone())?;
        let dp = solve_jap_dp(shell, &ladder, &x_rows, config)?;
        let grid_x = dp.assortment.clone();
        let grid_y: Vec<f64> = (0..shell.m)
            .map(|i| if grid_x.x[i] == 1 { dp.prices[i] } else { bounds.lo[i] })
            .collect();
        let grid_f = cp_revenue(shell, &bounds, &grid_x, &grid_y)?;
        if round == 0 {
            first_grid_revenue = grid_f;
        }
        let previous_f = incumbent_f;
        if grid_f > incumbent_f {
            incumbent_x = grid_x.clone();
            incumbent_y = grid_y.clone();
            incumbent_f = grid_f;
        }
        let polish = polish_prices(shell, &bounds, &grid_x, &grid_y, grid_f, config)?;
        evaluations += polish.evaluations;
        accepted += polish.accepted;
        if polish.revenue > incumbent_f {
            incumbent_x = grid_x;
            incumbent_y = polish.prices;
            incumbent_f = polish.revenue;
        }
        last_dp = Some(dp);
        if round > 0 && incumbent_f - previous_f < CP_ROUND_TOL {
            break;
        }
        // Seed the next grid with the polished prices.
        for i in 0..shell.m {
            let p = incumbent_y[i].clamp(bounds.lo[i], bounds.hi[i]);
            if !grids[i].contains(&p) {
                grids[i].push(p);
                grids[i].sort_by(|a, b| a.partial_cmp(b).unwrap());
            }
        }
    }

    let dp = last_dp.expect("at least one grid round runs");
    let pairs = pair_breakpoints(shell, &bounds, epsilon)?;
    let mut w = vec![vec![0.0; shell.n_nests]; shell.m];
    let mut t_hat = vec![vec![0.0; shell.n_nests]; shell.m];
    for i in 0..shell.m {
        for n in 0..shell.n_nests {
            let value = (bounds.kappa[i] - bounds.eta[i] * incumbent_y[i]) / shell.sigma[n];
            w[i][n] = value;
            t_hat[i][n] = match &pairs[i][n] {
                Some(bp) => pwla_eval(bp, value.clamp(bp.lo(), bp.hi()))?,
                None => value.exp(),
            };
        }
    }
    let surrogate = surrogate_revenue(shell, &incumbent_x, &incumbent_y, &t_hat)?;
    Ok(CpSolveReport {
        assortment: incumbent_x,
        prices: incumbent_y,
        revenue: incumbent_f,
        surrogate,
        grid_revenue: dp.inner.revenue,
        grid_bound: dp.inner.bound,
        grid_gap: dp.inner.gap,
        rounds,
        polish_starts: config.polish_starts,
        polish_accepted: accepted,
        polish_gain: incumbent_f - first_grid_revenue,
        w,
        t_hat,
        evaluations,
    })
}

/// Revenue with every price exponential replaced by the supplied values.
fn surrogate_revenue(
    shell: &GnlModel,
    x: &Assortment,
    y: &[f64],
    t_hat: &[Vec<f64>],
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for n in 0..shell.n_nests {
        let mut w = shell.v0[n];
        let mut rev = 0.0;
        for i in 0..shell.m {
            if x.x[i] == 1 && shell.alpha[i][n] > 0.0 {
                let weight = shell.alpha[i][n] * t_hat[i][n];
                w += weight;
                rev += weight * y[i];
            }
        }
        if w <= 0.0 {
            continue;
        }
        let scale = ((shell.sigma[n] - 1.0) * w.ln()).exp();
        num += scale * rev;
        den += scale * w;
    }
    if den <= 0.0 {
        return Err(Error::DegenerateNest { nest: 0, value: den });
    }
    Ok(num / den)
}

/// `|F - F_hat|` at `(x, y)`: the true revenue against the revenue with
/// every price exponential replaced by its certified secant overestimate.
pub fn pwla_objective_gap(
    shell: &GnlModel,
    bounds: &PriceBounds,
    x: &Assortment,
    y: &[f64],
    epsilon: f64,
) -> Result<f64> {
    if y.len() != shell.m || x.len() != shell.m {
        return Err(Error::DimensionMismatch(format!(
            "point over {}/{} entries, model has {} products",
            x.len(),
            y.len(),
            shell.m
        )));
    }
    for i in 0..shell.m {
        if !(y[i] >= bounds.lo[i] && y[i] <= bounds.hi[i]) {
            return Err(Error::InvalidInput(format!(
                "price {} outside [{}, {}] for product {i}",
                y[i], bounds.lo[i], bounds.hi[i]
            )));
        }
    }
    let pairs = pair_breakpoints(shell, bounds, epsilon)?;
    let mut t_hat = vec![vec![0.0; shell.n_nests]; shell.m];
    for i in 0..shell.m {
        for n in 0..shell.n_nests {
            let value = (bounds.kappa[i] - bounds.eta[i] * y[i]) / shell.sigma[n];
            t_hat[i][n] = match &pairs[i][n] {
                Some(bp) => pwla_eval(bp, value.clamp(bp.lo(), bp.hi()))?,
                None => value.exp(),
            };
        }
    }
    let true_f = cp_revenue(shell, bounds, x, y)?;
    let hat_f = surrogate_revenue(shell, x, y, &t_hat)?;
    Ok((true_f - hat_f).abs())
}

/// Text dump of the continuous-price bilinear program this module
/// approximates. The exponential and the two bilinear rows with both sides
/// continuous put the exact program outside what the linear kernel can
/// branch on; the dump exists so the approximated rows stay auditable.
pub fn format_cp_gnl_bi(shell: &GnlModel, bounds: &PriceBounds) -> String {
    use std::fmt::Write as _;
    let beta = bounds.hi.iter().cloned().fold(0.0, f64::max) + 1.0;
    let mut out = String::new();
    let _ = writeln!(out, "continuous-price bilinear program (beta = {beta})");
    let _ = writeln!(out, "minimize  delta");
    let _ = writeln!(out, "subject to");
    let _ = writeln!(
        out,
        "  sum_n h[n] * (beta*V0[n] + sum_i alpha[i,n]*s[i,n]) <= delta * sum_n k[n]"
    );
    let _ = writeln!(out, "  s[i,n] = x[i] * u[i,n]                     for every product and nest");
    let _ = writeln!(out, "  u[i,n] = (beta - y[i]) * t[i,n]            for every product and nest");
    for i in 0..shell.m {
        for n in 0..shell.n_nests {
            if shell.alpha[i][n] > 0.0 {
                let _ = writeln!(
                    out,
                    "  w[{i},{n}] = ({} - {}*y[{i}]) / {}",
                    bounds.kappa[i], bounds.eta[i], shell.sigma[n]
                );
            }
        }
    }
    let _ = writeln!(out, "  t[i,n] = exp(w[i,n])                       for every product and nest");
    for n in 0..shell.n_nests {
        let terms: Vec<String> = (0..shell.m)
            .filter(|&i| shell.alpha[i][n] > 0.0)
            .map(|i| format!("{}*x[{i}]*t[{i},{n}]", shell.alpha[i][n]))
            .collect();
        let _ = writeln!(out, "  W[{n}] = {} + {}", shell.v0[n], terms.join(" + "));
    }
    let _ = writeln!(out, "  h[n] >= W[n]^(sigma[n]-1)                  for every nest");
    let _ = writeln!(out, "  k[n] <= W[n]^sigma[n]                      for every nest");
    let _ = writeln!(out, "  k[n] = W[n] * h[n]                         for every nest");
    for i in 0..shell.m {
        let _ = writeln!(out, "  y[{i}] in [{}, {}]", bounds.lo[i], bounds.hi[i]);
    }
    let _ = writeln!(out, "  x binary; y, t, u, s, W, h, k, delta >= 0");
    out
}

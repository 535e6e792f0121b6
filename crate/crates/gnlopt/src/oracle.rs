//! Brute-force ground truth at desk scale: exhaustive assortment and
//! price-pattern enumeration plus grid search for continuous prices.
//!
//! Candidate feasibility is checked directly against constraint rows and
//! revenue is recomputed from the weight formulas inline, so these results
//! do not depend on the LP kernel or the cut machinery they help test.

use crate::choice_core::{Assortment, GnlModel, LinearConstraintSet, MgnlModel, DEGENERATE_W};
use crate::{Error, Result};

/// Cap on exhaustive assortment enumeration (2^m candidates).
pub const MAX_ENUM_PRODUCTS: usize = 24;
/// Cap on exhaustive price-pattern enumeration (prod of ladder sizes + 1).
pub const MAX_ENUM_PATTERNS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best_x: Option<Assortment>,
    /// Chosen price per offered product (entries for absent products are 0).
    pub best_prices: Option<Vec<f64>>,
    pub best_objective: f64,
    pub evaluated: u64,
}

fn feasible(constraints: &LinearConstraintSet, x: &Assortment) -> bool {
    let point: Vec<f64> = x.x.iter().map(|&b| f64::from(b)).collect();
    constraints.satisfied(&point, 1e-9)
}

fn enumerate_core<F>(
    m: usize,
    constraints: &LinearConstraintSet,
    mut objective: F,
) -> Result<OracleResult>
where
    F: FnMut(&Assortment) -> Result<Option<f64>>,
{
    if m > MAX_ENUM_PRODUCTS {
        return Err(Error::SizeGuard(format!(
            "{m} products exceeds the exhaustive enumeration cap of {MAX_ENUM_PRODUCTS}"
        )));
    }
    if constraints.dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "constraints over {} variables, model has {m} products",
            constraints.dim()
        )));
    }
    let mut best: Option<(Assortment, f64)> = None;
    let mut evaluated = 0u64;
    for mask in 0u64..(1u64 << m) {
        let s = Assortment::from_mask(m, mask);
        if !feasible(constraints, &s) {
            continue;
        }
        evaluated += 1;
        let Some(obj) = objective(&s)? else { continue };
        // Strict improvement keeps the lowest mask on ties.
        if best.as_ref().map_or(true, |(_, cur)| obj > *cur) {
            best = Some((s, obj));
        }
    }
    Ok(match best {
        Some((x, obj)) => OracleResult {
            best_x: Some(x),
            best_prices: None,
            best_objective: obj,
            evaluated,
        },
        None => OracleResult {
            best_x: None,
            best_prices: None,
            best_objective: f64::NEG_INFINITY,
            evaluated,
        },
    })
}

/// Exhaustive revenue maximization over feasible assortments.
pub fn enumerate_assortments(
    model: &GnlModel,
    constraints: &LinearConstraintSet,
) -> Result<OracleResult> {
    enumerate_core(model.m, constraints, |s| match model.expected_revenue(s) {
        Ok(v) => Ok(Some(v)),
        // All-empty nests make the choice probabilities undefined; such
        // candidates cannot carry revenue and are skipped.
        Err(Error::DegenerateNest { .. }) => Ok(None),
        Err(e) => Err(e),
    })
}

/// Mixture version of [`enumerate_assortments`].
pub fn enumerate_assortments_mgnl(
    mix: &MgnlModel,
    constraints: &LinearConstraintSet,
) -> Result<OracleResult> {
    enumerate_core(mix.m(), constraints, |s| match mix.expected_revenue(s) {
        Ok(v) => Ok(Some(v)),
        Err(Error::DegenerateNest { .. }) => Ok(None),
        Err(e) => Err(e),
    })
}

/// Expected revenue when product `i` is offered at price `prices[i]` for
/// the supports of `offered`, with deterministic utility `kappa - eta * p`.
/// Recomputed from first principles, independent of the model evaluators.
fn revenue_at_prices(
    base: &GnlModel,
    kappa: &[f64],
    eta: &[f64],
    offered: &[bool],
    prices: &[f64],
) -> f64 {
    let mut num = 0.0;
    let mut denom = 0.0;
    for n in 0..base.n_nests {
        let mut w = base.v0[n];
        let mut rev = 0.0;
        for i in 0..base.m {
            if offered[i] && base.alpha[i][n] > 0.0 {
                let weight = ((kappa[i] - eta[i] * prices[i]) / base.sigma[n]).exp();
                w += base.alpha[i][n] * weight;
                rev += base.alpha[i][n] * weight * prices[i];
            }
        }
        if w < DEGENERATE_W {
            continue;
        }
        let h = ((base.sigma[n] - 1.0) * w.ln()).exp();
        num += h * rev;
        denom += h * w;
    }
    if denom < DEGENERATE_W {
        return f64::NEG_INFINITY;
    }
    num / denom
}

/// Exhaustive search over "absent or one ladder price" patterns.
/// `constraints` are product-space rows applied to the offered indicator.
pub fn enumerate_jap_dp(
    base: &GnlModel,
    kappa: &[f64],
    eta: &[f64],
    ladder: &[Vec<f64>],
    constraints: &LinearConstraintSet,
) -> Result<OracleResult> {
    let m = base.m;
    if kappa.len() != m || eta.len() != m || ladder.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "kappa/eta/ladder lengths {}/{}/{} for {m} products",
            kappa.len(),
            eta.len(),
            ladder.len()
        )));
    }
    let mut patterns: u64 = 1;
    for l in ladder {
        patterns = patterns.saturating_mul(l.len() as u64 + 1);
        if patterns > MAX_ENUM_PATTERNS {
            return Err(Error::SizeGuard(format!(
                "price-pattern count exceeds the cap of {MAX_ENUM_PATTERNS}"
            )));
        }
    }
    if constraints.dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "constraints over {} variables, model has {m} products",
            constraints.dim()
        )));
    }
    // Mixed-radix counter: digit 0 = absent, digit k = ladder price k-1.
    let mut digits = vec![0usize; m];
    let mut best: Option<(Assortment, Vec<f64>, f64)> = None;
    let mut evaluated = 0u64;
    loop {
        let offered: Vec<bool> = digits.iter().map(|&d| d > 0).collect();
        let s = Assortment::new(offered.iter().map(|&b| u8::from(b)).collect());
        if feasible(constraints, &s) {
            evaluated += 1;
            let prices: Vec<f64> = (0..m)
                .map(|i| if digits[i] > 0 { ladder[i][digits[i] - 1] } else { 0.0 })
                .collect();
            let obj = if s.is_empty() {
                0.0
            } else {
                revenue_at_prices(base, kappa, eta, &offered, &prices)
            };
            if obj.is_finite() && best.as_ref().map_or(true, |(_, _, cur)| obj > *cur) {
                best = Some((s, prices, obj));
            }
        }
        // Advance the counter.
        let mut pos = 0;
        loop {
            if pos == m {
                return Ok(match best {
                    Some((x, prices, obj)) => OracleResult {
                        best_x: Some(x),
                        best_prices: Some(prices),
                        best_objective: obj,
                        evaluated,
                    },
                    None => OracleResult {
                        best_x: None,
                        best_prices: None,
                        best_objective: f64::NEG_INFINITY,
                        evaluated,
                    },
                });
            }
            digits[pos] += 1;
            if digits[pos] <= ladder[pos].len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// Maximizes a unimodal-ish scalar function on [lo, hi] by golden-section;
/// returns (argmax, max). Deterministic.
pub fn golden_section_max<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
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

/// Grid search plus coordinate polish for continuous prices on a fixed
/// assortment. Full tensor grid up to 4 offered products; beyond that,
/// `starts` rounds of cyclic coordinate ascent seeded along the diagonal
/// of the price box.
pub fn grid_multistart_prices(
    base: &GnlModel,
    kappa: &[f64],
    eta: &[f64],
    lo: &[f64],
    hi: &[f64],
    x: &Assortment,
    grid_n: usize,
    starts: usize,
) -> Result<OracleResult> {
    let m = base.m;
    if kappa.len() != m || eta.len() != m || lo.len() != m || hi.len() != m || x.len() != m {
        return Err(Error::DimensionMismatch("pricing shell lengths disagree".into()));
    }
    if grid_n < 2 || starts == 0 {
        return Err(Error::InvalidInput("need grid_n >= 2 and starts >= 1".into()));
    }
    let support = x.support();
    let offered: Vec<bool> = x.x.iter().map(|&b| b == 1).collect();
    if support.is_empty() {
        return Ok(OracleResult {
            best_x: Some(x.clone()),
            best_prices: Some(vec![0.0; m]),
            best_objective: 0.0,
            evaluated: 1,
        });
    }
    let coord = |i: usize, k: usize| lo[i] + (hi[i] - lo[i]) * (k as f64) / ((grid_n - 1) as f64);
    let mut evaluated = 0u64;
    let mut seeds: Vec<(Vec<f64>, f64)> = Vec::new();
    if support.len() <= 4 {
        // Full tensor grid over the support coordinates.
        let mut digits = vec![0usize; support.len()];
        let mut prices = vec![0.0; m];
        loop {
            for (k, &i) in support.iter().enumerate() {
                prices[i] = coord(i, digits[k]);
            }
            let obj = revenue_at_prices(base, kappa, eta, &offered, &prices);
            evaluated += 1;
            seeds.push((prices.clone(), obj));
            let mut pos = 0;
            loop {
                if pos == digits.len() {
                    break;
                }
                digits[pos] += 1;
                if digits[pos] < grid_n {
                    break;
                }
                digits[pos] = 0;
                pos += 1;
            }
            if pos == digits.len() {
                break;
            }
        }
        seeds.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        seeds.truncate(starts.max(1));
    } else {
        // Diagonal seeds: evenly spaced fractions of every price box.
        for s in 0..starts {
            let frac = (s as f64 + 0.5) / starts as f64;
            let mut prices = vec![0.0; m];
            for &i in &support {
                prices[i] = lo[i] + (hi[i] - lo[i]) * frac;
            }
            let obj = revenue_at_prices(base, kappa, eta, &offered, &prices);
            evaluated += 1;
            seeds.push((prices, obj));
        }
    }
    // Cyclic coordinate ascent from each seed.
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (mut prices, mut obj) in seeds {
        for _sweep in 0..12 {
            let before = obj;
            for &i in &support {
                let (pi, fi) = golden_section_max(
                    |p| {
                        let mut trial = prices.clone();
                        trial[i] = p;
                        revenue_at_prices(base, kappa, eta, &offered, &trial)
                    },
                    lo[i],
                    hi[i],
                    1e-10 * (hi[i] - lo[i]).max(1.0),
                );
                if fi > obj {
                    prices[i] = pi;
                    obj = fi;
                }
            }
            if obj - before <= 1e-12 * (1.0 + obj.abs()) {
                break;
            }
        }
        if best.as_ref().map_or(true, |(_, cur)| obj > *cur) {
            best = Some((prices, obj));
        }
    }
    let (prices, obj) = best.expect("at least one seed");
    Ok(OracleResult {
        best_x: Some(x.clone()),
        best_prices: Some(prices),
        best_objective: obj,
        evaluated,
    })
}

/// Strict local maxima of a sampled scalar function on a uniform grid:
/// interior points above both neighbors, endpoints above their single
/// neighbor.
pub fn local_maxima_scan<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    grid_n: usize,
) -> Result<Vec<(f64, f64)>> {
    if grid_n < 3 {
        return Err(Error::InvalidInput("need at least 3 grid points".into()));
    }
    let xs: Vec<f64> =
        (0..grid_n).map(|k| lo + (hi - lo) * (k as f64) / ((grid_n - 1) as f64)).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut out = Vec::new();
    for k in 0..grid_n {
        let up = if k == 0 { true } else { ys[k] > ys[k - 1] };
        let down = if k == grid_n - 1 { true } else { ys[k] > ys[k + 1] };
        if up && down {
            out.push((xs[k], ys[k]));
        }
    }
    Ok(out)
}

//! Linearization machinery: objective shift, auxiliary-variable box bounds,
//! outer-approximation tangents, submodular/supermodular inequalities, and
//! McCormick products.
//!
//! Every cut is a sparse linear inequality over caller-assigned variable ids,
//! so the same builders serve all master problems regardless of column
//! layout.

use std::collections::BTreeMap;

use crate::choice_core::{Assortment, GnlModel, MgnlModel, DEGENERATE_W};
use crate::{Error, Result};

/// Exponent guard: `exp` of anything larger overflows f64 range well before
/// this, and a tangent that steep is numerically useless anyway.
const EXP_ARG_LIMIT: f64 = 700.0;

/// Which family produced a cut. Used for pool bookkeeping and reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CutOrigin {
    OaH,
    OaK,
    OaExp,
    OaLogW,
    OaLogSum,
    OaP5,
    ScZ,
    ScY,
    McCormick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sense {
    Le,
    Ge,
}

/// Sparse linear inequality `sum coeffs[id] * var[id] (<= | >=) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearCut {
    pub coeffs: BTreeMap<usize, f64>,
    pub rhs: f64,
    pub sense: Sense,
    pub origin: CutOrigin,
}

impl LinearCut {
    pub fn new(
        origin: CutOrigin,
        sense: Sense,
        coeffs: BTreeMap<usize, f64>,
        rhs: f64,
    ) -> Result<Self> {
        let coeffs: BTreeMap<usize, f64> =
            coeffs.into_iter().filter(|&(_, c)| c != 0.0).collect();
        if coeffs.is_empty() {
            return Err(Error::InvalidInput("cut has no nonzero coefficient".into()));
        }
        if coeffs.values().any(|c| !c.is_finite()) || !rhs.is_finite() {
            return Err(Error::Numerical(format!("non-finite cut data ({origin:?})")));
        }
        Ok(LinearCut { coeffs, rhs, sense, origin })
    }

    pub fn lhs(&self, point: &[f64]) -> f64 {
        self.coeffs.iter().map(|(&id, &c)| c * point[id]).sum()
    }

    /// Positive when `point` violates the inequality, by that amount.
    pub fn violation(&self, point: &[f64]) -> f64 {
        match self.sense {
            Sense::Le => self.lhs(point) - self.rhs,
            Sense::Ge => self.rhs - self.lhs(point),
        }
    }

    /// Violation threshold scaled by the right-hand side magnitude.
    pub fn violation_tol(&self) -> f64 {
        1e-6 * (1.0 + self.rhs.abs())
    }

    pub fn is_violated(&self, point: &[f64]) -> bool {
        self.violation(point) > self.violation_tol()
    }

    /// Pool key: origin, sense, and all numbers quantized to 1e-12 relative
    /// to the cut's largest magnitude. Cuts regenerated at the same anchor
    /// across iterations collapse to one key.
    pub fn dedup_key(&self) -> (u8, u8, Vec<(usize, i64)>, i64) {
        let scale = self
            .coeffs
            .values()
            .map(|c| c.abs())
            .chain(std::iter::once(self.rhs.abs()))
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let q = |v: f64| (v / scale / 1e-12).round() as i64;
        (
            self.origin as u8,
            self.sense as u8,
            self.coeffs.iter().map(|(&id, &c)| (id, q(c))).collect(),
            q(self.rhs),
        )
    }
}

fn cut(
    origin: CutOrigin,
    sense: Sense,
    entries: impl IntoIterator<Item = (usize, f64)>,
    rhs: f64,
) -> Result<LinearCut> {
    let mut coeffs = BTreeMap::new();
    for (id, c) in entries {
        if c != 0.0 {
            *coeffs.entry(id).or_insert(0.0) += c;
        }
    }
    LinearCut::new(origin, sense, coeffs, rhs)
}

/// Objective shift: strictly above every revenue, scaled to the data.
pub fn choose_beta(model: &GnlModel) -> f64 {
    let max_r = model.max_revenue();
    max_r + f64::max(1.0, 0.01 * max_r)
}

/// Mixture version: strictly above every segment's revenue.
pub fn choose_beta_mgnl(mix: &MgnlModel) -> f64 {
    let max_r = mix.max_revenue();
    max_r + f64::max(1.0, 0.01 * max_r)
}

/// Box bounds for the auxiliary variables of one segment's master problem.
#[derive(Debug, Clone, PartialEq)]
pub struct VarBounds {
    pub w_lo: Vec<f64>,
    pub w_hi: Vec<f64>,
    pub h_lo: Vec<f64>,
    pub h_hi: Vec<f64>,
    pub k_lo: Vec<f64>,
    pub k_hi: Vec<f64>,
    pub y_lo: Vec<f64>,
    pub y_hi: Vec<f64>,
    pub z_lo: f64,
    pub z_hi: f64,
    pub t_lo: Vec<f64>,
    pub t_hi: Vec<f64>,
}

/// Computes the attainable range of every auxiliary variable from the
/// model's weight data. `floors` supplies a strictly positive stand-in
/// minimum for nests whose opt-out weight is zero (the zero-opt-out path);
/// without it such nests are an error because their power/log ranges are
/// unbounded.
pub fn variable_bounds(
    model: &GnlModel,
    beta: f64,
    floors: Option<&[f64]>,
) -> Result<VarBounds> {
    let max_r = model.max_revenue();
    if !(beta > max_r) {
        return Err(Error::BetaTooSmall { beta, max_r });
    }
    let nn = model.n_nests;
    let mut w_lo = vec![0.0; nn];
    let mut w_hi = vec![0.0; nn];
    let mut h_lo = vec![0.0; nn];
    let mut h_hi = vec![0.0; nn];
    let mut k_lo = vec![0.0; nn];
    let mut k_hi = vec![0.0; nn];
    let mut y_lo = vec![0.0; nn];
    let mut y_hi = vec![0.0; nn];
    let (mut z_arg_lo, mut z_arg_hi) = (0.0f64, 0.0f64);
    for n in 0..nn {
        let mut lo = model.v0[n];
        if lo < DEGENERATE_W {
            match floors {
                Some(f) if f[n] >= DEGENERATE_W => lo = f[n],
                _ => {
                    return Err(Error::DegenerateNest { nest: n, value: model.v0[n] });
                }
            }
        }
        let hi = model.v0[n]
            + (0..model.m).map(|i| model.alpha[i][n] * model.v[i][n]).sum::<f64>();
        let s = model.sigma[n];
        w_lo[n] = lo;
        w_hi[n] = hi;
        // sigma - 1 <= 0: powers and logs swap ends.
        h_lo[n] = hi.powf(s - 1.0);
        h_hi[n] = lo.powf(s - 1.0);
        k_lo[n] = lo.powf(s);
        k_hi[n] = hi.powf(s);
        y_lo[n] = (s - 1.0) * hi.ln();
        y_hi[n] = (s - 1.0) * lo.ln();
        z_arg_lo += k_lo[n];
        z_arg_hi += k_hi[n];
    }
    let z_lo = z_arg_lo.ln();
    let z_hi = z_arg_hi.ln();
    let t_lo: Vec<f64> = (0..nn).map(|n| (y_lo[n] - z_hi).exp()).collect();
    let t_hi: Vec<f64> = (0..nn).map(|n| (y_hi[n] - z_lo).exp()).collect();
    Ok(VarBounds { w_lo, w_hi, h_lo, h_hi, k_lo, k_hi, y_lo, y_hi, z_lo, z_hi, t_lo, t_hi })
}

/// Tangent underestimator of the convex map `x -> W_n(x)^{sigma_n - 1}`,
/// anchored at the fractional point `x0`:
/// `h - sum_i g_i x_i >= H(x0) - sum_i g_i x0_i` with
/// `g_i = (sigma-1) W(x0)^{sigma-2} alpha_in V_in`.
pub fn oa_cut_h(
    model: &GnlModel,
    n: usize,
    x0: &[f64],
    h_var: usize,
    x_vars: &[usize],
) -> Result<LinearCut> {
    let w0 = model.inclusive_value_frac(x0)?[n];
    if w0 < DEGENERATE_W {
        return Err(Error::DegenerateNest { nest: n, value: w0 });
    }
    let s = model.sigma[n];
    let h0 = w0.powf(s - 1.0);
    let gscale = (s - 1.0) * w0.powf(s - 2.0);
    let mut rhs = h0;
    let mut entries = vec![(h_var, 1.0)];
    for i in 0..model.m {
        let g = gscale * model.alpha[i][n] * model.v[i][n];
        if g != 0.0 {
            entries.push((x_vars[i], -g));
            rhs -= g * x0[i];
        }
    }
    cut(CutOrigin::OaH, Sense::Ge, entries, rhs)
}

/// Tangent overestimator of the concave map `x -> W_n(x)^{sigma_n}`:
/// `k - sum_i g_i x_i <= K(x0) - sum_i g_i x0_i` with
/// `g_i = sigma W(x0)^{sigma-1} alpha_in V_in`.
pub fn oa_cut_k(
    model: &GnlModel,
    n: usize,
    x0: &[f64],
    k_var: usize,
    x_vars: &[usize],
) -> Result<LinearCut> {
    let w0 = model.inclusive_value_frac(x0)?[n];
    if w0 < DEGENERATE_W {
        return Err(Error::DegenerateNest { nest: n, value: w0 });
    }
    let s = model.sigma[n];
    let k0 = w0.powf(s);
    let gscale = s * w0.powf(s - 1.0);
    let mut rhs = k0;
    let mut entries = vec![(k_var, 1.0)];
    for i in 0..model.m {
        let g = gscale * model.alpha[i][n] * model.v[i][n];
        if g != 0.0 {
            entries.push((x_vars[i], -g));
            rhs -= g * x0[i];
        }
    }
    cut(CutOrigin::OaK, Sense::Le, entries, rhs)
}

/// Tangent of `t >= exp(y - z)` at `(y0, z0)`:
/// `t - e^a y + e^a z >= e^a (1 - a)` with `a = y0 - z0`.
pub fn oa_cut_exp(
    y0: f64,
    z0: f64,
    t_var: usize,
    y_var: usize,
    z_var: usize,
) -> Result<LinearCut> {
    let a = y0 - z0;
    if !a.is_finite() || a > EXP_ARG_LIMIT {
        return Err(Error::Numerical(format!("exp tangent anchor {a} out of range")));
    }
    let ea = a.exp();
    cut(
        CutOrigin::OaExp,
        Sense::Ge,
        [(t_var, 1.0), (y_var, -ea), (z_var, ea)],
        ea * (1.0 - a),
    )
}

/// Tangent of the convex map `W -> (sigma_n - 1) log W` at `W0`:
/// `y - g W >= (sigma-1)(log W0 - 1)` with `g = (sigma-1)/W0`.
pub fn oa_cut_logw(
    model: &GnlModel,
    n: usize,
    w0: f64,
    y_var: usize,
    w_var: usize,
) -> Result<LinearCut> {
    if !(w0 >= DEGENERATE_W) {
        return Err(Error::DegenerateNest { nest: n, value: w0 });
    }
    let s = model.sigma[n];
    if s == 1.0 {
        // The map is identically zero; the tangent is the constant bound.
        return cut(CutOrigin::OaLogW, Sense::Ge, [(y_var, 1.0)], 0.0);
    }
    let g = (s - 1.0) / w0;
    cut(
        CutOrigin::OaLogW,
        Sense::Ge,
        [(y_var, 1.0), (w_var, -g)],
        (s - 1.0) * (w0.ln() - 1.0),
    )
}

/// Tangent of the concave map `W -> log sum_n W_n^{sigma_n}` at `W0`:
/// `z - sum_n g_n W_n <= log D0 - sum_n g_n W0_n` with
/// `g_n = sigma_n W0_n^{sigma_n - 1} / D0`, `D0 = sum_n W0_n^{sigma_n}`.
pub fn oa_cut_logsum(
    model: &GnlModel,
    w0: &[f64],
    z_var: usize,
    w_vars: &[usize],
) -> Result<LinearCut> {
    if w0.len() != model.n_nests {
        return Err(Error::DimensionMismatch(format!(
            "anchor has {} entries, model has {} nests",
            w0.len(),
            model.n_nests
        )));
    }
    for (n, &w) in w0.iter().enumerate() {
        if !(w >= DEGENERATE_W) {
            return Err(Error::DegenerateNest { nest: n, value: w });
        }
    }
    let d0: f64 = (0..model.n_nests).map(|n| w0[n].powf(model.sigma[n])).sum();
    let mut rhs = d0.ln();
    let mut entries = vec![(z_var, 1.0)];
    for n in 0..model.n_nests {
        let g = model.sigma[n] * w0[n].powf(model.sigma[n] - 1.0) / d0;
        entries.push((w_vars[n], -g));
        rhs -= g * w0[n];
    }
    cut(CutOrigin::OaLogSum, Sense::Le, entries, rhs)
}

/// Tangent of the convex lower bound `z >= log sum_n exp(c_n y_n)` with
/// `c_n = sigma_n / (sigma_n - 1)`, valid when every `sigma_n < 1`.
pub fn oa_cut_prop5(
    sigma: &[f64],
    y0: &[f64],
    z_var: usize,
    y_vars: &[usize],
) -> Result<LinearCut> {
    if sigma.len() != y0.len() || sigma.len() != y_vars.len() {
        return Err(Error::DimensionMismatch(format!(
            "sigma/anchor/vars lengths {} / {} / {}",
            sigma.len(),
            y0.len(),
            y_vars.len()
        )));
    }
    if let Some(n) = sigma.iter().position(|&s| s >= 1.0) {
        return Err(Error::InvalidInput(format!(
            "nest {n} has sigma = {}, bound needs every sigma < 1",
            sigma[n]
        )));
    }
    let c: Vec<f64> = sigma.iter().map(|&s| s / (s - 1.0)).collect();
    // Stabilised log-sum-exp at the anchor.
    let args: Vec<f64> = c.iter().zip(y0).map(|(&cn, &yn)| cn * yn).collect();
    let amax = args.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !amax.is_finite() || amax > EXP_ARG_LIMIT {
        return Err(Error::Numerical(format!("logsumexp anchor {amax} out of range")));
    }
    let total: f64 = args.iter().map(|&a| (a - amax).exp()).sum();
    let lse = amax + total.ln();
    let mut rhs = lse;
    let mut entries = vec![(z_var, 1.0)];
    for n in 0..sigma.len() {
        let weight = (args[n] - amax).exp() / total;
        let g = weight * c[n];
        entries.push((y_vars[n], -g));
        rhs -= g * y0[n];
    }
    cut(CutOrigin::OaP5, Sense::Ge, entries, rhs)
}

/// Linear upper bound on the increasing submodular set map
/// `S -> log sum_n W_n(S)^{sigma_n}`, anchored at `s0`:
/// `z <= Z(S0) + sum_{j not in S0} rho_j(S0) x_j
///        - sum_{j in S0} rho_j([m] minus j) (1 - x_j)`
/// with `rho_j(S) = Z(S + j) - Z(S)`. Valid at every binary point, tight at
/// the anchor.
pub fn submodular_cut_z(
    model: &GnlModel,
    s0: &Assortment,
    z_var: usize,
    x_vars: &[usize],
) -> Result<LinearCut> {
    let m = model.m;
    let z_s0 = model.set_z(s0)?;
    let mut rhs = z_s0;
    let mut entries = vec![(z_var, 1.0)];
    let full = Assortment::new(vec![1; m]);
    let z_full = model.set_z(&full)?;
    for j in 0..m {
        if s0.x[j] == 0 {
            let mut grown = s0.clone();
            grown.x[j] = 1;
            let rho = model.set_z(&grown)? - z_s0;
            entries.push((x_vars[j], -rho));
        } else {
            let mut less = full.clone();
            less.x[j] = 0;
            let rho = z_full - model.set_z(&less)?;
            // minus rho * (1 - x_j)
            entries.push((x_vars[j], -rho));
            rhs -= rho;
        }
    }
    cut(CutOrigin::ScZ, Sense::Le, entries, rhs)
}

/// Linear lower bound on the decreasing supermodular set map
/// `S -> (sigma_n - 1) log W_n(S)`, anchored at `s0`; mirror image of
/// [`submodular_cut_z`]. `floor` (when given) replaces the inclusive value
/// by `max(W, floor)` throughout, which the zero-opt-out path needs to keep
/// the map finite on sets that empty the nest.
pub fn supermodular_cut_y_floored(
    model: &GnlModel,
    n: usize,
    s0: &Assortment,
    floor: Option<f64>,
    y_var: usize,
    x_vars: &[usize],
) -> Result<LinearCut> {
    let m = model.m;
    let yv = |s: &Assortment| -> Result<f64> {
        match floor {
            Some(f) => model.set_y_floored(n, s, f),
            None => model.set_y(n, s),
        }
    };
    let y_s0 = yv(s0)?;
    let mut rhs = y_s0;
    let mut entries = vec![(y_var, 1.0)];
    let full = Assortment::new(vec![1; m]);
    let y_full = yv(&full)?;
    for j in 0..m {
        if s0.x[j] == 0 {
            let mut grown = s0.clone();
            grown.x[j] = 1;
            let rho = yv(&grown)? - y_s0;
            entries.push((x_vars[j], -rho));
        } else {
            let mut less = full.clone();
            less.x[j] = 0;
            let rho = y_full - yv(&less)?;
            entries.push((x_vars[j], -rho));
            rhs -= rho;
        }
    }
    cut(CutOrigin::ScY, Sense::Ge, entries, rhs)
}

/// [`supermodular_cut_y_floored`] without a floor: the standard form for
/// models with positive opt-out weights.
pub fn supermodular_cut_y(
    model: &GnlModel,
    n: usize,
    s0: &Assortment,
    y_var: usize,
    x_vars: &[usize],
) -> Result<LinearCut> {
    supermodular_cut_y_floored(model, n, s0, None, y_var, x_vars)
}

/// The four inequalities forcing `s = h * x` for binary `x` and
/// `h in [h_lo, h_hi]`:
/// `s >= h_lo x`, `s <= h_hi x`, `s >= h - (1-x) h_hi`, `s <= h - (1-x) h_lo`.
pub fn mccormick(
    s_id: usize,
    h_id: usize,
    x_id: usize,
    h_lo: f64,
    h_hi: f64,
) -> Result<[LinearCut; 4]> {
    if !(h_lo <= h_hi) || !h_lo.is_finite() || !h_hi.is_finite() {
        return Err(Error::InvalidInput(format!(
            "inverted or non-finite product bounds [{h_lo}, {h_hi}]"
        )));
    }
    let o = CutOrigin::McCormick;
    Ok([
        cut(o, Sense::Ge, [(s_id, 1.0), (x_id, -h_lo)], 0.0)?,
        cut(o, Sense::Le, [(s_id, 1.0), (x_id, -h_hi)], 0.0)?,
        cut(o, Sense::Ge, [(s_id, 1.0), (h_id, -1.0), (x_id, -h_hi)], -h_hi)?,
        cut(o, Sense::Le, [(s_id, 1.0), (h_id, -1.0), (x_id, -h_lo)], -h_lo)?,
    ])
}

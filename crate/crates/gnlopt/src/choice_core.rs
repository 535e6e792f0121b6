//! GNL / mixed-GNL model data and forward evaluation.
//!
//! A model has `m` products and `n_nests` nests. Product `i` belongs to nest
//! `n` with membership weight `alpha[i][n] >= 0` (zero means not a member),
//! carries a preference weight `v[i][n]` (stored post-exponentiation), and
//! earns revenue `r[i]` when sold. Each nest has an opt-out weight `v0[n]`
//! and a dissimilarity parameter `sigma[n]` in (0, 1].

use crate::{Error, Result};

/// Inclusive values below this are treated as degenerate: powers and logs of
/// them are refused rather than evaluated with platform-dependent results.
pub const DEGENERATE_W: f64 = 1e-300;

/// One customer segment's choice model.
#[derive(Debug, Clone, PartialEq)]
pub struct GnlModel {
    pub m: usize,
    pub n_nests: usize,
    /// Opt-out weight per nest.
    pub v0: Vec<f64>,
    /// Preference weight of product i in nest n, `m x n_nests`.
    pub v: Vec<Vec<f64>>,
    /// Membership weight of product i in nest n, `m x n_nests`.
    pub alpha: Vec<Vec<f64>>,
    /// Dissimilarity parameter per nest, in (0, 1].
    pub sigma: Vec<f64>,
    /// Revenue per product.
    pub r: Vec<f64>,
}

/// A binary product selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assortment {
    pub x: Vec<u8>,
}

impl Assortment {
    pub fn new(x: Vec<u8>) -> Self {
        debug_assert!(x.iter().all(|&b| b <= 1));
        Assortment { x }
    }

    pub fn empty(m: usize) -> Self {
        Assortment { x: vec![0; m] }
    }

    /// Bit `i` of `mask` selects product `i`.
    pub fn from_mask(m: usize, mask: u64) -> Self {
        Assortment {
            x: (0..m).map(|i| ((mask >> i) & 1) as u8).collect(),
        }
    }

    pub fn from_support(m: usize, support: &[usize]) -> Self {
        let mut x = vec![0u8; m];
        for &i in support {
            x[i] = 1;
        }
        Assortment { x }
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.x.len()).filter(|&i| self.x[i] == 1).collect()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.iter().all(|&b| b == 0)
    }
}

/// General linear inequalities `A * var <= b` over some decision space.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearConstraintSet {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    dim: usize,
}

impl LinearConstraintSet {
    /// Unconstrained set over `dim` variables.
    pub fn free(dim: usize) -> Self {
        LinearConstraintSet { a: Vec::new(), b: Vec::new(), dim }
    }

    pub fn new(dim: usize, a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} constraint rows but {} right-hand sides",
                a.len(),
                b.len()
            )));
        }
        for (k, row) in a.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "row {k} has {} coefficients, expected {dim}",
                    row.len()
                )));
            }
            if !row.iter().all(|c| c.is_finite()) || !b[k].is_finite() {
                return Err(Error::InvalidInput(format!("row {k} has non-finite data")));
            }
        }
        Ok(LinearConstraintSet { a, b, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.a.len()
    }

    /// True when `point` satisfies every row within `tol`.
    pub fn satisfied(&self, point: &[f64], tol: f64) -> bool {
        debug_assert_eq!(point.len(), self.dim);
        self.a.iter().zip(&self.b).all(|(row, &rhs)| {
            let lhs: f64 = row.iter().zip(point).map(|(c, v)| c * v).sum();
            lhs <= rhs + tol
        })
    }
}

/// `w^p` via `exp(p * ln w)`, refusing degenerate bases.
pub(crate) fn pow_checked(w: f64, p: f64, nest: usize) -> Result<f64> {
    if !(w >= DEGENERATE_W) {
        return Err(Error::DegenerateNest { nest, value: w });
    }
    Ok((p * w.ln()).exp())
}

impl GnlModel {
    /// Standard constructor: requires a strictly positive opt-out weight in
    /// every nest. Use [`GnlModel::new_allow_zero_optout`] for models meant
    /// for the zero-opt-out solver path.
    pub fn new(
        v0: Vec<f64>,
        v: Vec<Vec<f64>>,
        alpha: Vec<Vec<f64>>,
        sigma: Vec<f64>,
        r: Vec<f64>,
    ) -> Result<Self> {
        let model = Self::assemble(v0, v, alpha, sigma, r)?;
        if let Some(n) = (0..model.n_nests).find(|&n| model.v0[n] <= 0.0) {
            return Err(Error::InvalidModel(vec![format!(
                "nest {n}: opt-out weight must be strictly positive here (zero weights \
                 require the zero-opt-out solver path)"
            )]));
        }
        Ok(model)
    }

    /// Constructor that permits `v0[n] = 0`; such models must be solved with
    /// the zero-opt-out path.
    pub fn new_allow_zero_optout(
        v0: Vec<f64>,
        v: Vec<Vec<f64>>,
        alpha: Vec<Vec<f64>>,
        sigma: Vec<f64>,
        r: Vec<f64>,
    ) -> Result<Self> {
        Self::assemble(v0, v, alpha, sigma, r)
    }

    fn assemble(
        v0: Vec<f64>,
        v: Vec<Vec<f64>>,
        alpha: Vec<Vec<f64>>,
        sigma: Vec<f64>,
        r: Vec<f64>,
    ) -> Result<Self> {
        let n_nests = v0.len();
        let m = r.len();
        let model = GnlModel { m, n_nests, v0, v, alpha, sigma, r };
        let violations = model.validate();
        if violations.is_empty() {
            Ok(model)
        } else {
            Err(Error::InvalidModel(violations))
        }
    }

    /// Lists every invariant violation; empty means the model is well formed.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.m == 0 {
            out.push("m must be positive".into());
        }
        if self.n_nests == 0 {
            out.push("n_nests must be positive".into());
        }
        if self.v0.len() != self.n_nests {
            out.push(format!("v0 has {} entries, expected {}", self.v0.len(), self.n_nests));
        }
        if self.sigma.len() != self.n_nests {
            out.push(format!("sigma has {} entries, expected {}", self.sigma.len(), self.n_nests));
        }
        if self.r.len() != self.m {
            out.push(format!("r has {} entries, expected {}", self.r.len(), self.m));
        }
        if self.v.len() != self.m || self.alpha.len() != self.m {
            out.push(format!(
                "v/alpha have {}/{} rows, expected {}",
                self.v.len(),
                self.alpha.len(),
                self.m
            ));
        } else {
            for i in 0..self.m {
                if self.v[i].len() != self.n_nests || self.alpha[i].len() != self.n_nests {
                    out.push(format!("product {i}: v/alpha row length mismatch"));
                }
            }
        }
        if !out.is_empty() {
            return out; // shape is broken; value checks would index out of bounds
        }
        for (n, &s) in self.sigma.iter().enumerate() {
            if !(s > 0.0 && s <= 1.0) {
                out.push(format!("nest {n}: sigma = {s} outside (0, 1]"));
            }
        }
        for (n, &w0) in self.v0.iter().enumerate() {
            if !(w0 >= 0.0) || !w0.is_finite() {
                out.push(format!("nest {n}: opt-out weight {w0} is not a nonnegative real"));
            }
        }
        for i in 0..self.m {
            if !(self.r[i] >= 0.0) || !self.r[i].is_finite() {
                out.push(format!("product {i}: revenue {} is not a nonnegative real", self.r[i]));
            }
            let mut best = 0.0f64;
            for n in 0..self.n_nests {
                let a = self.alpha[i][n];
                let w = self.v[i][n];
                if !(a >= 0.0) || !a.is_finite() {
                    out.push(format!("product {i} nest {n}: alpha {a} is not a nonnegative real"));
                }
                if !(w >= 0.0) || !w.is_finite() {
                    out.push(format!("product {i} nest {n}: weight {w} is not a nonnegative real"));
                }
                best = best.max(a * w);
            }
            if !(best > 0.0) {
                out.push(format!("product {i}: belongs to no nest (all alpha*v are zero)"));
            }
        }
        out
    }

    pub fn max_revenue(&self) -> f64 {
        self.r.iter().cloned().fold(0.0, f64::max)
    }

    fn check_x(&self, x: &Assortment) -> Result<()> {
        if x.len() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "assortment has {} entries, model has {} products",
                x.len(),
                self.m
            )));
        }
        Ok(())
    }

    /// Total preference weight per nest: `W_n = v0[n] + sum_i alpha[i][n] * x_i * v[i][n]`.
    pub fn inclusive_value(&self, x: &Assortment) -> Result<Vec<f64>> {
        self.check_x(x)?;
        Ok((0..self.n_nests)
            .map(|n| {
                self.v0[n]
                    + (0..self.m)
                        .filter(|&i| x.x[i] == 1)
                        .map(|i| self.alpha[i][n] * self.v[i][n])
                        .sum::<f64>()
            })
            .collect())
    }

    /// Inclusive values at a fractional selection in `[0,1]^m`; used by cut
    /// generation and relaxation checks.
    pub fn inclusive_value_frac(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.m {
            return Err(Error::DimensionMismatch(format!(
                "point has {} entries, model has {} products",
                x.len(),
                self.m
            )));
        }
        Ok((0..self.n_nests)
            .map(|n| {
                self.v0[n]
                    + (0..self.m).map(|i| self.alpha[i][n] * x[i] * self.v[i][n]).sum::<f64>()
            })
            .collect())
    }

    /// Probability of first choosing each nest.
    pub fn nest_choice_prob(&self, x: &Assortment) -> Result<Vec<f64>> {
        let w = self.inclusive_value(x)?;
        let mut num = vec![0.0; self.n_nests];
        let mut denom = 0.0;
        for n in 0..self.n_nests {
            // A vanished inclusive value with sigma < 1 means the two-stage
            // formulas are undefined; callers must use the zero-opt-out path.
            if w[n] < DEGENERATE_W && self.sigma[n] < 1.0 {
                return Err(Error::DegenerateNest { nest: n, value: w[n] });
            }
            num[n] = if w[n] < DEGENERATE_W { 0.0 } else { pow_checked(w[n], self.sigma[n], n)? };
            denom += num[n];
        }
        if denom < DEGENERATE_W {
            return Err(Error::DegenerateNest { nest: 0, value: denom });
        }
        Ok(num.into_iter().map(|t| t / denom).collect())
    }

    /// Unconditional purchase probability per product.
    pub fn product_choice_prob(&self, x: &Assortment) -> Result<Vec<f64>> {
        let w = self.inclusive_value(x)?;
        let mut denom = 0.0;
        let mut hpow = vec![0.0; self.n_nests]; // W_n^{sigma_n - 1}
        for n in 0..self.n_nests {
            if w[n] < DEGENERATE_W {
                if self.sigma[n] < 1.0 {
                    return Err(Error::DegenerateNest { nest: n, value: w[n] });
                }
                hpow[n] = 1.0; // sigma = 1: the exponent is zero
                continue;
            }
            hpow[n] = pow_checked(w[n], self.sigma[n] - 1.0, n)?;
            denom += pow_checked(w[n], self.sigma[n], n)?;
        }
        if denom < DEGENERATE_W {
            return Err(Error::DegenerateNest { nest: 0, value: denom });
        }
        let mut p = vec![0.0; self.m];
        for i in 0..self.m {
            if x.x[i] == 0 {
                continue;
            }
            p[i] = (0..self.n_nests)
                .map(|n| hpow[n] * self.alpha[i][n] * self.v[i][n])
                .sum::<f64>()
                / denom;
        }
        Ok(p)
    }

    /// Probability that no product is purchased.
    pub fn no_purchase_prob(&self, x: &Assortment) -> Result<f64> {
        let w = self.inclusive_value(x)?;
        let mut denom = 0.0;
        let mut num = 0.0;
        for n in 0..self.n_nests {
            if w[n] < DEGENERATE_W {
                if self.sigma[n] < 1.0 {
                    return Err(Error::DegenerateNest { nest: n, value: w[n] });
                }
                continue;
            }
            num += pow_checked(w[n], self.sigma[n] - 1.0, n)? * self.v0[n];
            denom += pow_checked(w[n], self.sigma[n], n)?;
        }
        if denom < DEGENERATE_W {
            return Err(Error::DegenerateNest { nest: 0, value: denom });
        }
        Ok(num / denom)
    }

    /// Expected revenue of an assortment.
    ///
    /// Nests whose inclusive value vanishes contribute zero to both the
    /// numerator and the denominator; that situation only arises for nests
    /// with zero opt-out weight and no offered member, whose revenue
    /// contribution is zero anyway.
    pub fn expected_revenue(&self, x: &Assortment) -> Result<f64> {
        self.check_x(x)?;
        let w = self.inclusive_value(x)?;
        let mut num = 0.0;
        let mut denom = 0.0;
        for n in 0..self.n_nests {
            if w[n] < DEGENERATE_W {
                continue;
            }
            let member_rev: f64 = (0..self.m)
                .filter(|&i| x.x[i] == 1)
                .map(|i| self.alpha[i][n] * self.v[i][n] * self.r[i])
                .sum();
            num += pow_checked(w[n], self.sigma[n] - 1.0, n)? * member_rev;
            denom += pow_checked(w[n], self.sigma[n], n)?;
        }
        if denom < DEGENERATE_W {
            return Err(Error::DegenerateNest { nest: 0, value: denom });
        }
        Ok(num / denom)
    }

    /// Value of the equivalent minimization objective at `x`:
    /// `[sum_n W_n^{sigma_n-1} (beta*v0[n] + sum_i alpha x_i (beta-r_i) v)] / [sum_n W_n^{sigma_n}]`.
    ///
    /// Equals `beta - expected_revenue(x)` for every valid `x`.
    pub fn min_objective(&self, x: &Assortment, beta: f64) -> Result<f64> {
        self.check_x(x)?;
        let max_r = self.max_revenue();
        if !(beta > max_r) {
            return Err(Error::BetaTooSmall { beta, max_r });
        }
        let w = self.inclusive_value(x)?;
        let mut num = 0.0;
        let mut denom = 0.0;
        for n in 0..self.n_nests {
            if w[n] < DEGENERATE_W {
                continue;
            }
            let inner: f64 = beta * self.v0[n]
                + (0..self.m)
                    .filter(|&i| x.x[i] == 1)
                    .map(|i| self.alpha[i][n] * self.v[i][n] * (beta - self.r[i]))
                    .sum::<f64>();
            num += pow_checked(w[n], self.sigma[n] - 1.0, n)? * inner;
            denom += pow_checked(w[n], self.sigma[n], n)?;
        }
        if denom < DEGENERATE_W {
            return Err(Error::DegenerateNest { nest: 0, value: denom });
        }
        Ok(num / denom)
    }

    // Set-function forms over offered sets, used by the cut machinery.

    /// `H_n(S) = W_n(S)^{sigma_n - 1}`.
    pub fn set_h(&self, n: usize, s: &Assortment) -> Result<f64> {
        let w = self.inclusive_value(s)?[n];
        pow_checked(w, self.sigma[n] - 1.0, n)
    }

    /// `K_n(S) = W_n(S)^{sigma_n}`. Zero inclusive value gives zero.
    pub fn set_k(&self, n: usize, s: &Assortment) -> Result<f64> {
        let w = self.inclusive_value(s)?[n];
        if w < DEGENERATE_W {
            return Ok(0.0);
        }
        pow_checked(w, self.sigma[n], n)
    }

    /// `Y_n(S) = (sigma_n - 1) * log W_n(S)`.
    pub fn set_y(&self, n: usize, s: &Assortment) -> Result<f64> {
        let w = self.inclusive_value(s)?[n];
        if w < DEGENERATE_W {
            return Err(Error::DegenerateNest { nest: n, value: w });
        }
        Ok((self.sigma[n] - 1.0) * w.ln())
    }

    /// `Y_n` with the inclusive value floored from below, used by the
    /// zero-opt-out path where empty nests would otherwise vanish.
    pub fn set_y_floored(&self, n: usize, s: &Assortment, floor: f64) -> Result<f64> {
        let w = self.inclusive_value(s)?[n].max(floor);
        if w < DEGENERATE_W {
            return Err(Error::DegenerateNest { nest: n, value: w });
        }
        Ok((self.sigma[n] - 1.0) * w.ln())
    }

    /// `Z(S) = log sum_n W_n(S)^{sigma_n}`. Vanished nests contribute zero.
    pub fn set_z(&self, s: &Assortment) -> Result<f64> {
        let w = self.inclusive_value(s)?;
        let mut total = 0.0;
        for n in 0..self.n_nests {
            if w[n] < DEGENERATE_W {
                continue;
            }
            total += pow_checked(w[n], self.sigma[n], n)?;
        }
        if total < DEGENERATE_W {
            return Err(Error::DegenerateNest { nest: 0, value: total });
        }
        Ok(total.ln())
    }

    // Continuous extensions over [0,1]^m of the same functions.

    pub fn h_frac(&self, n: usize, x: &[f64]) -> Result<f64> {
        let w = self.inclusive_value_frac(x)?[n];
        pow_checked(w, self.sigma[n] - 1.0, n)
    }

    pub fn k_frac(&self, n: usize, x: &[f64]) -> Result<f64> {
        let w = self.inclusive_value_frac(x)?[n];
        if w < DEGENERATE_W {
            return Ok(0.0);
        }
        pow_checked(w, self.sigma[n], n)
    }

    pub fn y_frac(&self, n: usize, x: &[f64]) -> Result<f64> {
        let w = self.inclusive_value_frac(x)?[n];
        if w < DEGENERATE_W {
            return Err(Error::DegenerateNest { nest: n, value: w });
        }
        Ok((self.sigma[n] - 1.0) * w.ln())
    }

    pub fn z_frac(&self, x: &[f64]) -> Result<f64> {
        let w = self.inclusive_value_frac(x)?;
        let mut total = 0.0;
        for n in 0..self.n_nests {
            if w[n] < DEGENERATE_W {
                continue;
            }
            total += pow_checked(w[n], self.sigma[n], n)?;
        }
        if total < DEGENERATE_W {
            return Err(Error::DegenerateNest { nest: 0, value: total });
        }
        Ok(total.ln())
    }
}

/// A finite mixture of GNL segments with arrival probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct MgnlModel {
    pub segments: Vec<GnlModel>,
    pub theta: Vec<f64>,
}

impl MgnlModel {
    pub fn new(segments: Vec<GnlModel>, theta: Vec<f64>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidModel(vec!["at least one segment required".into()]));
        }
        if segments.len() != theta.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} segments but {} arrival probabilities",
                segments.len(),
                theta.len()
            )));
        }
        let m = segments[0].m;
        if segments.iter().any(|s| s.m != m) {
            return Err(Error::InvalidModel(vec![
                "all segments must share the same product count".into(),
            ]));
        }
        if theta.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidModel(vec![
                "arrival probabilities must be strictly positive".into(),
            ]));
        }
        let total: f64 = theta.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(vec![format!(
                "arrival probabilities sum to {total}, expected 1"
            )]));
        }
        Ok(MgnlModel { segments, theta })
    }

    pub fn m(&self) -> usize {
        self.segments[0].m
    }

    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn max_revenue(&self) -> f64 {
        self.segments.iter().map(|s| s.max_revenue()).fold(0.0, f64::max)
    }

    /// Arrival-weighted expected revenue.
    pub fn expected_revenue(&self, x: &Assortment) -> Result<f64> {
        let mut total = 0.0;
        for (seg, &th) in self.segments.iter().zip(&self.theta) {
            total += th * seg.expected_revenue(x)?;
        }
        Ok(total)
    }
}

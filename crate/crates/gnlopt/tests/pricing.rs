use gnlopt::assort_solver::SolverConfig;
use gnlopt::choice_core::{Assortment, GnlModel, LinearConstraintSet, MgnlModel};
use gnlopt::oracle::{enumerate_jap_dp, golden_section_max, local_maxima_scan};
use gnlopt::pricing::{
    cp_price_grid, cp_revenue, expand_discrete, format_cp_gnl_bi, pwla_bound, pwla_build,
    pwla_eval, pwla_next_breakpoint, pwla_objective_gap, pwla_theta, solve_jap_cp, solve_jap_dp,
    solve_jap_dp_mgnl, PriceBounds, PriceLadder,
};
use gnlopt::Error;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn shell(seed: u64, m: usize, nn: usize) -> GnlModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma: Vec<f64> = (0..nn).map(|_| rng.gen_range(0.3..=1.0)).collect();
    let mut alpha = vec![vec![0.0; nn]; m];
    for (i, row) in alpha.iter_mut().enumerate() {
        for slot in row.iter_mut() {
            if rng.gen_bool(0.6) {
                *slot = rng.gen_range(0.2..1.0);
            }
        }
        if row.iter().all(|&a| a == 0.0) {
            row[i % nn] = 1.0;
        }
    }
    let v0: Vec<f64> = (0..nn).map(|_| rng.gen_range(0.5..1.5)).collect();
    // Item weights and revenues are placeholders; pricing reads the nest
    // structure only.
    let v = vec![vec![1.0; nn]; m];
    let r = vec![1.0; m];
    GnlModel::new(v0, v, alpha, sigma, r).unwrap()
}

fn random_box(seed: u64, m: usize) -> PriceBounds {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo: Vec<f64> = (0..m).map(|_| rng.gen_range(0.3..0.8)).collect();
    let hi: Vec<f64> = lo.iter().map(|&l| l + rng.gen_range(0.3..1.2)).collect();
    let eta: Vec<f64> = (0..m).map(|_| rng.gen_range(0.4..1.2)).collect();
    let kappa: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.5..1.0)).collect();
    PriceBounds::new(lo, hi, eta, kappa).unwrap()
}

fn cardinality(m: usize, cap: usize) -> LinearConstraintSet {
    LinearConstraintSet::new(m, vec![vec![1.0; m]], vec![cap as f64]).unwrap()
}

// --------------------------------------------------------------------------
// expand_discrete / solve_jap_dp
// --------------------------------------------------------------------------

#[test]
fn expand_single_level_is_a_fixed_price_model() {
    let base = shell(7, 4, 2);
    let prices = vec![vec![1.2], vec![0.9], vec![2.0], vec![1.5]];
    let eta = vec![1.0, 0.7, 1.1, 0.5];
    let kappa = vec![0.5, 0.2, 1.0, -0.1];
    let ladder = PriceLadder::new(prices.clone(), eta.clone(), kappa.clone()).unwrap();
    let (expanded, one_price) = expand_discrete(&base, &ladder).unwrap();
    assert_eq!(expanded.m, 4);
    assert_eq!(one_price.n_rows(), 4);
    // Direct construction of the same fixed-price model.
    let v: Vec<Vec<f64>> = (0..4)
        .map(|i| {
            (0..2)
                .map(|n| {
                    if base.alpha[i][n] > 0.0 {
                        ((kappa[i] - eta[i] * prices[i][0]) / base.sigma[n]).exp()
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let direct = GnlModel::new(
        base.v0.clone(),
        v,
        base.alpha.clone(),
        base.sigma.clone(),
        vec![1.2, 0.9, 2.0, 1.5],
    )
    .unwrap();
    for mask in 0u64..16 {
        let x = Assortment::from_mask(4, mask);
        let a = expanded.expected_revenue(&x).unwrap();
        let b = direct.expected_revenue(&x).unwrap();
        assert_eq!(a.to_bits(), b.to_bits(), "mask {mask}");
    }
}

#[test]
fn expand_rejects_empty_ladders() {
    let base = shell(8, 2, 2);
    let ladder =
        PriceLadder::new(vec![vec![1.0], vec![]], vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
    let err = expand_discrete(&base, &ladder).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)), "got {err:?}");
}

#[test]
fn ladder_validation_rejects_bad_rows() {
    assert!(PriceLadder::new(vec![vec![1.0, 1.0]], vec![1.0], vec![0.0]).is_err());
    assert!(PriceLadder::new(vec![vec![2.0, 1.0]], vec![1.0], vec![0.0]).is_err());
    assert!(PriceLadder::new(vec![vec![-1.0]], vec![1.0], vec![0.0]).is_err());
    assert!(PriceLadder::new(vec![vec![1.0]], vec![0.0], vec![0.0]).is_err());
}

#[test]
fn one_price_rows_select_single_level() {
    let base = shell(9, 2, 2);
    let ladder = PriceLadder::new(
        vec![vec![0.8, 1.3, 2.0], vec![1.0, 1.7]],
        vec![1.0, 0.8],
        vec![0.6, 0.4],
    )
    .unwrap();
    let (_, one_price) = expand_discrete(&base, &ladder).unwrap();
    assert_eq!(one_price.n_rows(), 2);
    assert_eq!(one_price.dim(), 5);
    assert_eq!(one_price.a[0], vec![1.0, 1.0, 1.0, 0.0, 0.0]);
    assert_eq!(one_price.a[1], vec![0.0, 0.0, 0.0, 1.0, 1.0]);
    assert_eq!(one_price.b, vec![1.0, 1.0]);
    // Both levels of one product at once violates the rows.
    assert!(!one_price.satisfied(&[1.0, 1.0, 0.0, 0.0, 0.0], 1e-9));
    assert!(one_price.satisfied(&[0.0, 1.0, 0.0, 0.0, 1.0], 1e-9));
}

#[test]
fn dp_matches_pattern_enumeration() {
    for (seed, m, nn) in [(11u64, 2, 2), (12, 3, 2), (13, 4, 3)] {
        let base = shell(seed, m, nn);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
        let prices: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let lo = rng.gen_range(0.5..1.0);
                vec![lo, lo + rng.gen_range(0.2..0.8), lo + rng.gen_range(1.0..1.8)]
            })
            .collect();
        let eta: Vec<f64> = (0..m).map(|_| rng.gen_range(0.5..1.2)).collect();
        let kappa: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.3..0.8)).collect();
        let ladder = PriceLadder::new(prices.clone(), eta.clone(), kappa.clone()).unwrap();
        let constraints = cardinality(m, m.div_ceil(2));
        let truth = enumerate_jap_dp(&base, &kappa, &eta, &prices, &constraints).unwrap();
        let result = solve_jap_dp(
            &base,
            &ladder,
            &constraints,
            &SolverConfig { rel_gap: 1e-9, ..SolverConfig::default() },
        )
        .unwrap();
        let best = truth.best_objective;
        assert!(
            (result.inner.revenue - best).abs() <= 2e-6 * best.abs().max(1.0),
            "seed {seed}: ladder solve {} vs enumeration {best}",
            result.inner.revenue
        );
        // The mapping back to products is consistent.
        for i in 0..m {
            match result.price_index[i] {
                Some(l) => {
                    assert_eq!(result.assortment.x[i], 1);
                    assert_eq!(result.prices[i], prices[i][l]);
                }
                None => {
                    assert_eq!(result.assortment.x[i], 0);
                    assert_eq!(result.prices[i], 0.0);
                }
            }
        }
    }
}

#[test]
fn dp_revenue_monotone_in_ladder_growth() {
    let base = shell(21, 3, 2);
    let eta = vec![0.8, 1.0, 0.6];
    let kappa = vec![0.4, 0.1, 0.7];
    let small = vec![vec![0.8, 1.5], vec![1.0, 2.0], vec![0.9, 1.4]];
    let large: Vec<Vec<f64>> = small
        .iter()
        .map(|row| {
            let mut grown = row.clone();
            grown.push(row[1] + 0.6);
            grown.insert(1, 0.5 * (row[0] + row[1]));
            grown
        })
        .collect();
    let constraints = cardinality(3, 2);
    let config = SolverConfig { rel_gap: 1e-9, ..SolverConfig::default() };
    let a = solve_jap_dp(
        &base,
        &PriceLadder::new(small, eta.clone(), kappa.clone()).unwrap(),
        &constraints,
        &config,
    )
    .unwrap();
    let b = solve_jap_dp(
        &base,
        &PriceLadder::new(large, eta, kappa).unwrap(),
        &constraints,
        &config,
    )
    .unwrap();
    assert!(
        b.inner.revenue >= a.inner.revenue - 1e-8,
        "larger ladder dropped revenue: {} vs {}",
        b.inner.revenue,
        a.inner.revenue
    );
}

#[test]
fn dp_mixture_matches_weighted_enumeration() {
    let m = 3;
    let seg_a = shell(31, m, 2);
    let seg_b = shell(32, m, 2);
    let mixed = MgnlModel::new(vec![seg_a.clone(), seg_b.clone()], vec![0.45, 0.55]).unwrap();
    let prices = vec![vec![0.9, 1.6], vec![1.1, 1.9], vec![0.7, 1.3]];
    let eta = vec![0.9, 0.7, 1.1];
    let kappa = vec![0.3, 0.6, -0.2];
    let ladder = PriceLadder::new(prices.clone(), eta.clone(), kappa.clone()).unwrap();
    let constraints = cardinality(m, 2);

    // Independent ground truth: mixed-radix enumeration of price-or-absent
    // patterns, weighting each segment's closed-form revenue.
    let revenue_one = |seg: &GnlModel, offered: &[bool], y: &[f64]| -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for n in 0..seg.n_nests {
            let mut w = seg.v0[n];
            let mut rev = 0.0;
            for i in 0..m {
                if offered[i] && seg.alpha[i][n] > 0.0 {
                    let t = ((kappa[i] - eta[i] * y[i]) / seg.sigma[n]).exp();
                    w += seg.alpha[i][n] * t;
                    rev += seg.alpha[i][n] * t * y[i];
                }
            }
            let scale = ((seg.sigma[n] - 1.0) * w.ln()).exp();
            num += scale * rev;
            den += scale * w;
        }
        num / den
    };
    let mut best = f64::NEG_INFINITY;
    let mut digits = vec![0usize; m];
    'outer: loop {
        let offered: Vec<bool> = digits.iter().map(|&d| d > 0).collect();
        let count = offered.iter().filter(|&&b| b).count();
        if count <= 2 {
            let y: Vec<f64> =
                (0..m).map(|i| if digits[i] > 0 { prices[i][digits[i] - 1] } else { 0.0 }).collect();
            let value = 0.45 * revenue_one(&seg_a, &offered, &y)
                + 0.55 * revenue_one(&seg_b, &offered, &y);
            best = best.max(value);
        }
        let mut pos = 0;
        loop {
            if pos == m {
                break 'outer;
            }
            digits[pos] += 1;
            if digits[pos] <= prices[pos].len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }

    let result = solve_jap_dp_mgnl(
        &mixed,
        &ladder,
        &constraints,
        &SolverConfig { rel_gap: 1e-9, ..SolverConfig::default() },
    )
    .unwrap();
    assert!(
        (result.inner.revenue - best).abs() <= 2e-6 * best.abs().max(1.0),
        "mixture ladder solve {} vs enumeration {best}",
        result.inner.revenue
    );
}

// --------------------------------------------------------------------------
// secant overestimate construction
// --------------------------------------------------------------------------

#[test]
fn theta_matches_dense_grid() {
    let theta = pwla_theta(0.0, 1.0).unwrap();
    assert!((theta - 0.2119).abs() < 1e-4, "theta(0,1) = {theta}");
    // Independent check: dense maximization of secant - exp.
    let slope = (1f64.exp() - 1.0) / 1.0;
    let mut grid_max = 0.0f64;
    for k in 0..=100_000 {
        let w = k as f64 / 100_000.0;
        grid_max = grid_max.max(1.0 + slope * w - w.exp());
    }
    assert!((theta - grid_max).abs() <= 1e-8, "closed form {theta} vs grid {grid_max}");
}

#[test]
fn theta_degenerate_and_monotone() {
    assert!(pwla_theta(0.5, 0.5 + 1e-12).unwrap() <= 1e-10);
    assert!(pwla_theta(1.0, 0.5).is_err());
    assert!(pwla_theta(1.0, 1.0).is_err());
    let mut prev = 0.0;
    for step in 1..=20 {
        let t = 0.1 * step as f64;
        let theta = pwla_theta(0.0, t).unwrap();
        assert!(theta > prev, "theta must increase with the interval end");
        prev = theta;
    }
}

#[test]
fn next_breakpoint_shortcut_and_boundary() {
    // Huge tolerance swallows the whole interval in one step.
    assert_eq!(pwla_next_breakpoint(0.0, 1.0, 10.0, 1e-9).unwrap(), 1.0);
    // Tolerance exactly at theta(0, 1): the search lands at 1 within tau.
    let eps = pwla_theta(0.0, 1.0).unwrap();
    let q = pwla_next_breakpoint(0.0, 2.0, eps, 1e-9).unwrap();
    assert!((q - 1.0).abs() <= 1e-8, "expected ~1, got {q}");
    // Returned point certifies; the point one tolerance further does not.
    assert!(pwla_theta(0.0, q).unwrap() <= eps);
    assert!(pwla_theta(0.0, q + 1e-9).unwrap() > eps);
}

#[test]
fn next_breakpoint_stable_under_tau_refinement() {
    let eps = 0.01;
    for (lo, hi) in [(0.0, 3.0), (-2.0, 1.5), (1.0, 4.0)] {
        let coarse = pwla_next_breakpoint(lo, hi, eps, 1e-6).unwrap();
        let fine = pwla_next_breakpoint(lo, hi, eps, 1e-7).unwrap();
        assert!(
            (coarse - fine).abs() <= 1e-6,
            "tau refinement moved the breakpoint by {}",
            (coarse - fine).abs()
        );
        assert!(fine >= coarse - 1e-12, "finer tau can only move up within the old window");
    }
}

#[test]
fn build_certificate_and_bound() {
    let bp = pwla_build(-1.0, 0.0, 0.01, 1e-9).unwrap();
    assert_eq!(pwla_bound(0.0, 1.0, 1.0, 0.0, 1.0, 0.01).unwrap(), 4);
    assert!(bp.segments() <= 4, "construction used {} segments", bp.segments());
    assert_eq!(bp.lo(), -1.0);
    assert_eq!(bp.hi(), 0.0);
    for pair in bp.q.windows(2) {
        assert!(pwla_theta(pair[0], pair[1]).unwrap() <= 0.01 + 1e-12);
    }
    for pair in bp.slopes.windows(2) {
        assert!(pair[1] > pair[0], "secant slopes of exp must increase");
    }
    // Dense certificate scan.
    for k in 0..=10_000 {
        let w = -1.0 + k as f64 / 10_000.0;
        let gap = pwla_eval(&bp, w).unwrap() - w.exp();
        assert!((-1e-12..=0.01 + 1e-12).contains(&gap), "gap {gap} at w = {w}");
    }
}

#[test]
fn build_degenerate_domain() {
    let bp = pwla_build(0.7, 0.7, 0.01, 1e-9).unwrap();
    assert_eq!(bp.segments(), 0);
    assert_eq!(bp.q, vec![0.7]);
    assert_eq!(pwla_eval(&bp, 0.7).unwrap().to_bits(), 0.7f64.exp().to_bits());
}

#[test]
fn eval_exact_at_breakpoints_and_midpoints() {
    let bp = pwla_build(-0.5, 2.0, 0.05, 1e-9).unwrap();
    for &q in &bp.q {
        assert_eq!(pwla_eval(&bp, q).unwrap().to_bits(), q.exp().to_bits());
    }
    for pair in bp.q.windows(2) {
        let mid = 0.5 * (pair[0] + pair[1]);
        let expected = 0.5 * (pair[0].exp() + pair[1].exp());
        let got = pwla_eval(&bp, mid).unwrap();
        assert!(
            (got - expected).abs() <= 1e-12 * expected,
            "midpoint interpolation {got} vs {expected}"
        );
    }
    assert!(pwla_eval(&bp, -0.6).is_err());
    assert!(pwla_eval(&bp, 2.1).is_err());
}

#[test]
fn bound_examples_and_scaling() {
    assert_eq!(pwla_bound(1.0, 1.0, 1.0, 0.0, 0.5, 0.01).unwrap(), 0);
    let at = pwla_bound(0.0, 1.0, 1.0, 0.0, 1.0, 0.01).unwrap();
    let at_quarter = pwla_bound(0.0, 1.0, 1.0, 0.0, 1.0, 0.0025).unwrap();
    assert!(at_quarter >= 2 * at - 2 && at_quarter <= 2 * at, "{at} vs {at_quarter}");
    assert!(pwla_bound(1.0, 0.5, 1.0, 0.0, 0.5, 0.01).is_err());
    assert!(pwla_bound(0.5, 1.0, -1.0, 0.0, 0.5, 0.01).is_err());
    assert!(pwla_bound(0.5, 1.0, 1.0, 0.0, 1.5, 0.01).is_err());
}

#[test]
fn construction_respects_bound_on_random_battery() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts = Vec::new();
    let mut counts_quarter = Vec::new();
    for _ in 0..100 {
        let lo = rng.gen_range(0.1..2.0);
        let hi = lo + rng.gen_range(0.05..3.0);
        let eta = rng.gen_range(0.2..2.0);
        let kappa = rng.gen_range(-1.0..1.0);
        let sigma = rng.gen_range(0.25..1.0);
        let eps = rng.gen_range(0.002..0.02);
        let w_lo = (kappa - eta * hi) / sigma;
        let w_hi = (kappa - eta * lo) / sigma;
        let tau = 1e-9 * (w_hi - w_lo);
        let bp = pwla_build(w_lo, w_hi, eps, tau).unwrap();
        let cap = pwla_bound(lo, hi, eta, kappa, sigma, eps).unwrap();
        assert!(
            bp.segments() <= cap,
            "construction used {} segments, ceiling is {cap}",
            bp.segments()
        );
        counts.push(bp.segments() as f64);
        let fine = pwla_build(w_lo, w_hi, eps / 4.0, tau).unwrap();
        counts_quarter.push(fine.segments() as f64);
    }
    let mean: f64 = counts.iter().sum::<f64>() / counts.len() as f64;
    let mean_quarter: f64 = counts_quarter.iter().sum::<f64>() / counts.len() as f64;
    let ratio = mean_quarter / mean;
    assert!(
        (1.5..=2.5).contains(&ratio),
        "quartering the tolerance should roughly double segment counts, got x{ratio}"
    );
}

// --------------------------------------------------------------------------
// continuous prices
// --------------------------------------------------------------------------

#[test]
fn cp_single_product_single_nest_unimodal() {
    let model = GnlModel::new(
        vec![1.0],
        vec![vec![1.0]],
        vec![vec![1.0]],
        vec![0.8],
        vec![1.0],
    )
    .unwrap();
    let bounds =
        PriceBounds::new(vec![0.5], vec![5.0], vec![1.0], vec![1.5]).unwrap();
    let x = Assortment::from_support(1, &[0]);
    let (_, truth) = golden_section_max(
        |y| cp_revenue(&model, &bounds, &x, &[y]).unwrap(),
        0.5,
        5.0,
        1e-10,
    );
    let report = solve_jap_cp(
        &model,
        &bounds,
        &LinearConstraintSet::free(1),
        1e-3,
        &SolverConfig::default(),
    )
    .unwrap();
    assert_eq!(report.assortment.x, vec![1]);
    assert!(
        (report.revenue - truth).abs() <= 1e-4 * truth.max(1.0),
        "continuous solve {} vs scalar maximization {truth}",
        report.revenue
    );
    assert!(report.prices[0] >= 0.5 && report.prices[0] <= 5.0);
}

#[test]
fn cp_two_nest_price_curve_has_two_peaks() {
    // Single product, two nests with sharply different correlation; the
    // revenue curve in price is known to carry two separated maxima.
    let model = GnlModel::new(
        vec![1.0, 1.0],
        vec![vec![1.0, 1.0]],
        vec![vec![0.1, 5.0]],
        vec![0.1, 0.9],
        vec![1.0],
    )
    .unwrap();
    let bounds = PriceBounds::new(vec![0.01], vec![10.0], vec![1.0], vec![2.0]).unwrap();
    let x = Assortment::from_support(1, &[0]);
    let f = |y: f64| cp_revenue(&model, &bounds, &x, &[y]).unwrap();
    let maxima = local_maxima_scan(f, 0.01, 10.0, 10_000).unwrap();
    assert_eq!(maxima.len(), 2, "expected two peaks, found {maxima:?}");

    let mut scan_best = f64::NEG_INFINITY;
    for k in 0..=10_000 {
        let y = 0.01 + (10.0 - 0.01) * k as f64 / 10_000.0;
        scan_best = scan_best.max(f(y));
    }
    let report = solve_jap_cp(
        &model,
        &bounds,
        &LinearConstraintSet::free(1),
        0.05,
        &SolverConfig::default(),
    )
    .unwrap();
    assert!(
        report.revenue >= scan_best - 1e-6,
        "solve {} missed the global peak {scan_best}",
        report.revenue
    );
    assert!((report.revenue - scan_best).abs() <= 1e-3);
}

#[test]
fn cp_small_instance_close_to_oracle() {
    for seed in [41u64, 42] {
        let m = 4;
        let model = shell(seed, m, 2);
        let bounds = random_box(seed ^ 0xbeef, m);
        let constraints = cardinality(m, 2);
        let config = SolverConfig::default();
        let report = solve_jap_cp(&model, &bounds, &constraints, 1e-3, &config).unwrap();
        // Oracle: every feasible assortment, dense grid per coordinate with
        // coordinate refinement.
        let mut truth = 0.0f64;
        for mask in 0u64..(1 << m) {
            let x = Assortment::from_mask(m, mask);
            if x.support().len() > 2 {
                continue;
            }
            if x.is_empty() {
                continue;
            }
            let best = gnlopt::oracle::grid_multistart_prices(
                &model,
                &bounds.kappa,
                &bounds.eta,
                &bounds.lo,
                &bounds.hi,
                &x,
                96,
                4,
            )
            .unwrap();
            truth = truth.max(best.best_objective);
        }
        assert!(
            report.revenue >= truth * 0.99,
            "seed {seed}: continuous solve {} fell more than 1% under the oracle {truth}",
            report.revenue
        );
        // The reported revenue is a true evaluation, so it cannot beat the
        // oracle by more than the oracle's own grid slack.
        assert!(report.revenue <= truth * 1.01);
        for i in 0..m {
            assert!(report.prices[i] >= bounds.lo[i] - 1e-12);
            assert!(report.prices[i] <= bounds.hi[i] + 1e-12);
        }
        assert!(report.polish_gain >= 0.0);
        assert!(report.revenue >= report.grid_revenue - 1e-9);
    }
}

#[test]
fn cp_grid_growth_is_monotone() {
    let model = shell(51, 3, 2);
    let bounds = random_box(151, 3);
    let constraints = cardinality(3, 2);
    let config = SolverConfig { rel_gap: 1e-9, ..SolverConfig::default() };
    let coarse = cp_price_grid(&model, &bounds, 2e-2, usize::MAX).unwrap();
    let fine = cp_price_grid(&model, &bounds, 5e-3, usize::MAX).unwrap();
    // Adding breakpoints to a ladder can only help the induced solve.
    let union: Vec<Vec<f64>> = (0..3)
        .map(|i| {
            let mut merged = coarse[i].clone();
            merged.extend_from_slice(&fine[i]);
            merged.sort_by(|a, b| a.partial_cmp(b).unwrap());
            merged.dedup();
            merged
        })
        .collect();
    let base = solve_jap_dp(
        &model,
        &PriceLadder::new(coarse, bounds.eta.clone(), bounds.kappa.clone()).unwrap(),
        &constraints,
        &config,
    )
    .unwrap();
    let grown = solve_jap_dp(
        &model,
        &PriceLadder::new(union, bounds.eta.clone(), bounds.kappa.clone()).unwrap(),
        &constraints,
        &config,
    )
    .unwrap();
    assert!(
        grown.inner.revenue >= base.inner.revenue - 1e-8,
        "denser grid lost revenue: {} vs {}",
        grown.inner.revenue,
        base.inner.revenue
    );
}

#[test]
fn cp_constraint_handling() {
    let m = 3;
    let model = shell(61, m, 2);
    let bounds = random_box(161, m);
    let config = SolverConfig::default();
    // Joint rows: cardinality on x, an upper bound on one price.
    let price_cap = 0.5 * (bounds.lo[1] + bounds.hi[1]);
    let mut rows = vec![vec![0.0; 2 * m]; 2];
    rows[0][..m].copy_from_slice(&[1.0, 1.0, 1.0]);
    rows[1][m + 1] = 1.0;
    let joint =
        LinearConstraintSet::new(2 * m, rows, vec![2.0, price_cap]).unwrap();
    let report = solve_jap_cp(&model, &bounds, &joint, 1e-3, &config).unwrap();
    assert!(report.assortment.support().len() <= 2);
    assert!(report.prices[1] <= price_cap + 1e-9);

    // Mixing x and y in one row has no exact grid image.
    let mut bad = vec![0.0; 2 * m];
    bad[0] = 1.0;
    bad[m] = 1.0;
    let err = solve_jap_cp(
        &model,
        &bounds,
        &LinearConstraintSet::new(2 * m, vec![bad], vec![1.0]).unwrap(),
        1e-3,
        &config,
    )
    .unwrap_err();
    assert!(matches!(err, Error::UnsupportedConstraint(_)), "got {err:?}");

    // Coupling two prices is just as unsupported.
    let mut pair = vec![0.0; 2 * m];
    pair[m] = 1.0;
    pair[m + 1] = -1.0;
    let err = solve_jap_cp(
        &model,
        &bounds,
        &LinearConstraintSet::new(2 * m, vec![pair], vec![0.0]).unwrap(),
        1e-3,
        &config,
    )
    .unwrap_err();
    assert!(matches!(err, Error::UnsupportedConstraint(_)), "got {err:?}");

    // A price floor above the box is infeasible.
    let mut floor = vec![0.0; 2 * m];
    floor[m] = -1.0;
    let err = solve_jap_cp(
        &model,
        &bounds,
        &LinearConstraintSet::new(2 * m, vec![floor], vec![-(bounds.hi[0] + 1.0)]).unwrap(),
        1e-3,
        &config,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Infeasible), "got {err:?}");
}

#[test]
fn cp_deterministic() {
    let model = shell(71, 3, 2);
    let bounds = random_box(171, 3);
    let constraints = cardinality(3, 2);
    let config = SolverConfig::default();
    let a = solve_jap_cp(&model, &bounds, &constraints, 1e-3, &config).unwrap();
    let b = solve_jap_cp(&model, &bounds, &constraints, 1e-3, &config).unwrap();
    assert_eq!(a.assortment.x, b.assortment.x);
    assert_eq!(a.revenue.to_bits(), b.revenue.to_bits());
    for (p, q) in a.prices.iter().zip(&b.prices) {
        assert_eq!(p.to_bits(), q.to_bits());
    }
    assert_eq!(a.evaluations, b.evaluations);
}

// --------------------------------------------------------------------------
// objective gap
// --------------------------------------------------------------------------

#[test]
fn gap_zero_on_breakpoints() {
    // With sigma = 1, eta = 1, kappa = 0 the price-to-w map is pure negation,
    // so grid prices land exactly on breakpoints.
    let model = GnlModel::new(
        vec![1.0],
        vec![vec![1.0]],
        vec![vec![1.0]],
        vec![1.0],
        vec![1.0],
    )
    .unwrap();
    let bounds = PriceBounds::new(vec![0.5], vec![2.0], vec![1.0], vec![0.0]).unwrap();
    let grids = cp_price_grid(&model, &bounds, 1e-3, usize::MAX).unwrap();
    let x = Assortment::from_support(1, &[0]);
    for &p in &grids[0] {
        let gap = pwla_objective_gap(&model, &bounds, &x, &[p], 1e-3).unwrap();
        assert!(gap <= 1e-14, "gap {gap} at grid price {p}");
    }
    // Between breakpoints the surrogate overestimates the weight, so the
    // objective moves; still bounded by the certificate scale.
    let mid = 0.5 * (grids[0][0] + grids[0][1]);
    let gap = pwla_objective_gap(&model, &bounds, &x, &[mid], 1e-3).unwrap();
    assert!(gap > 0.0);
}

#[test]
fn gap_scales_linearly_with_epsilon() {
    let m = 3;
    let model = shell(81, m, 2);
    let bounds = random_box(181, m);
    let mut rng = ChaCha8Rng::seed_from_u64(281);
    let mut max_coarse = 0.0f64;
    let mut max_fine = 0.0f64;
    for _ in 0..200 {
        let mask = rng.gen_range(1u64..(1 << m));
        let x = Assortment::from_mask(m, mask);
        let y: Vec<f64> =
            (0..m).map(|i| rng.gen_range(bounds.lo[i]..=bounds.hi[i])).collect();
        max_coarse =
            max_coarse.max(pwla_objective_gap(&model, &bounds, &x, &y, 4e-3).unwrap());
        max_fine =
            max_fine.max(pwla_objective_gap(&model, &bounds, &x, &y, 1e-3).unwrap());
    }
    assert!(max_coarse > 0.0 && max_fine > 0.0);
    let ratio = max_coarse / max_fine;
    assert!(
        (1.3..=7.0).contains(&ratio),
        "quartering epsilon should shrink the worst gap about linearly, got x{ratio}"
    );
    // Empirical constant check at the operating tolerance.
    let x = Assortment::from_mask(m, 0b111);
    let y: Vec<f64> = (0..m).map(|i| 0.5 * (bounds.lo[i] + bounds.hi[i])).collect();
    let f = cp_revenue(&model, &bounds, &x, &y).unwrap();
    let gap = pwla_objective_gap(&model, &bounds, &x, &y, 1e-3).unwrap();
    assert!(gap <= 10.0 * 1e-3 * f.max(1.0), "gap {gap} too large for revenue {f}");
}

#[test]
fn gap_rejects_out_of_box_prices() {
    let model = shell(91, 2, 2);
    let bounds = random_box(191, 2);
    let x = Assortment::from_mask(2, 0b11);
    let y = vec![bounds.hi[0] + 0.5, bounds.lo[1]];
    assert!(pwla_objective_gap(&model, &bounds, &x, &y, 1e-3).is_err());
}

// --------------------------------------------------------------------------
// formulation printer
// --------------------------------------------------------------------------

#[test]
fn cp_printer_shows_bilinear_rows() {
    let model = shell(101, 2, 2);
    let bounds = random_box(201, 2);
    let text = format_cp_gnl_bi(&model, &bounds);
    assert!(text.contains("delta * sum_n k[n]"));
    assert!(text.contains("u[i,n] = (beta - y[i]) * t[i,n]"));
    assert!(text.contains("t[i,n] = exp(w[i,n])"));
    assert!(text.contains("k[n] = W[n] * h[n]"));
    assert!(text.contains("y[0] in ["));
    assert_eq!(text, format_cp_gnl_bi(&model, &bounds));
}

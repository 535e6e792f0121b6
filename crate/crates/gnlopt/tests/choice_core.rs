//! Forward-evaluation tests against values frozen from an independent
//! reference implementation, plus structural property tests.

use gnlopt::choice_core::{Assortment, GnlModel, LinearConstraintSet, MgnlModel};
use gnlopt::Error;
use proptest::prelude::*;

const TOL: f64 = 1e-12;

fn nl_case() -> GnlModel {
    // Two nests that partition three products, unit memberships.
    GnlModel::new(
        vec![1.0, 2.0],
        vec![vec![2.0, 0.0], vec![3.0, 0.0], vec![0.0, 4.0]],
        vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![0.5, 0.8],
        vec![1.0, 1.5, 2.25],
    )
    .unwrap()
}

fn gnl_case() -> GnlModel {
    // Fractional memberships: products 0 and 2 split across both nests.
    GnlModel::new(
        vec![0.5, 1.2],
        vec![vec![1.5, 2.5], vec![3.0, 1.0], vec![2.0, 4.0]],
        vec![vec![0.3, 0.7], vec![1.0, 0.0], vec![0.4, 0.6]],
        vec![0.35, 0.9],
        vec![2.0, 1.0, 3.5],
    )
    .unwrap()
}

fn assert_close(got: f64, want: f64, tol: f64) {
    assert!(
        (got - want).abs() <= tol * (1.0 + want.abs()),
        "got {got:.17e}, want {want:.17e}"
    );
}

#[test]
fn single_nest_sigma_one_is_plain_logit() {
    let m = GnlModel::new(
        vec![1.0],
        vec![vec![1.0], vec![1.0]],
        vec![vec![1.0], vec![1.0]],
        vec![1.0],
        vec![1.0, 2.0],
    )
    .unwrap();
    assert_close(m.expected_revenue(&Assortment::new(vec![0, 1])).unwrap(), 1.0, TOL);
    assert_close(m.expected_revenue(&Assortment::new(vec![1, 1])).unwrap(), 1.0, TOL);
    assert_close(m.expected_revenue(&Assortment::new(vec![1, 0])).unwrap(), 0.5, TOL);
    let p = m.product_choice_prob(&Assortment::new(vec![1, 1])).unwrap();
    assert_close(p[0], 1.0 / 3.0, TOL);
    assert_close(p[1], 1.0 / 3.0, TOL);
}

#[test]
fn partitioned_nests_frozen_values() {
    let m = nl_case();
    let x = Assortment::new(vec![1, 0, 1]);
    let w = m.inclusive_value(&x).unwrap();
    assert_close(w[0], 3.0, TOL);
    assert_close(w[1], 6.0, TOL);
    let pn = m.nest_choice_prob(&x).unwrap();
    assert_close(pn[0], 0.29232858316091959, TOL);
    assert_close(pn[1], 0.7076714168390803, TOL);
    let p = m.product_choice_prob(&x).unwrap();
    assert_close(p[0], 0.19488572210727972, TOL);
    assert_eq!(p[1], 0.0);
    assert_close(p[2], 0.47178094455938691, TOL);
    assert_close(m.no_purchase_prob(&x).unwrap(), 0.33333333333333331, TOL);
    assert_close(m.expected_revenue(&x).unwrap(), 1.2563928473659003, TOL);
}

#[test]
fn fractional_membership_frozen_values() {
    let m = gnl_case();

    let x = Assortment::new(vec![1, 1, 1]);
    let w = m.inclusive_value(&x).unwrap();
    assert_close(w[0], 4.75, TOL);
    assert_close(w[1], 5.3500000000000005, TOL);
    let p = m.product_choice_prob(&x).unwrap();
    assert_close(p[0], 0.26295334893108824, TOL);
    assert_close(p[1], 0.17436049951837984, TOL);
    assert_close(p[2], 0.37124942326661281, TOL);
    assert_close(m.no_purchase_prob(&x).unwrap(), 0.19143672828391906, TOL);
    assert_close(m.expected_revenue(&x).unwrap(), 1.9996401788137013, TOL);

    let x = Assortment::new(vec![1, 0, 1]);
    assert_close(m.expected_revenue(&x).unwrap(), 2.2009874358157426, TOL);

    let x = Assortment::new(vec![0, 1, 0]);
    assert_close(m.expected_revenue(&x).unwrap(), 0.48700053549044198, TOL);
    assert_close(m.no_purchase_prob(&x).unwrap(), 0.51299946450955791, TOL);
}

#[test]
fn min_objective_matches_frozen_and_identity() {
    let m = gnl_case();
    let x = Assortment::new(vec![1, 0, 1]);
    let got = m.min_objective(&x, 4.5).unwrap();
    assert_close(got, 2.2990125641842569, 1e-12);
    assert_close(got, 4.5 - m.expected_revenue(&x).unwrap(), 1e-12);
}

#[test]
fn min_objective_rejects_small_beta() {
    let m = gnl_case();
    let x = Assortment::new(vec![1, 0, 1]);
    assert!(matches!(
        m.min_objective(&x, 3.5),
        Err(Error::BetaTooSmall { .. })
    ));
}

#[test]
fn mixture_revenue_frozen() {
    let mix = MgnlModel::new(vec![nl_case(), gnl_case()], vec![0.4, 0.6]).unwrap();
    let x = Assortment::new(vec![1, 0, 1]);
    assert_close(mix.expected_revenue(&x).unwrap(), 1.8231496004358057, TOL);
}

#[test]
fn mixture_validation() {
    assert!(MgnlModel::new(vec![nl_case()], vec![0.5]).is_err());
    assert!(MgnlModel::new(vec![nl_case(), gnl_case()], vec![0.7, 0.2]).is_err());

    let mut short = gnl_case();
    short.m = 2;
    short.r.truncate(2);
    short.v.truncate(2);
    short.alpha.truncate(2);
    assert!(MgnlModel::new(vec![nl_case(), short], vec![0.5, 0.5]).is_err());
}

#[test]
fn set_functions_frozen() {
    let m = gnl_case();
    let s = Assortment::new(vec![1, 0, 1]);
    assert_close(m.set_h(0, &s).unwrap(), 0.69506475704192827, TOL);
    assert_close(m.set_k(0, &s).unwrap(), 1.2163633248233745, TOL);
    assert_close(m.set_y(0, &s).unwrap(), -0.36375026215802475, TOL);
    assert_close(m.set_z(&s).unwrap(), 1.7475148974370709, TOL);
    assert_close(m.set_y_floored(0, &s, 2.0).unwrap(), -0.45054566736396445, TOL);
    // Floor below the actual value changes nothing.
    assert_close(
        m.set_y_floored(0, &s, 0.1).unwrap(),
        m.set_y(0, &s).unwrap(),
        TOL,
    );
}

#[test]
fn frac_extensions_agree_at_binary_points() {
    let m = gnl_case();
    for mask in 0u64..8 {
        let s = Assortment::from_mask(3, mask);
        let xf: Vec<f64> = s.x.iter().map(|&b| b as f64).collect();
        let wi = m.inclusive_value(&s).unwrap();
        let wf = m.inclusive_value_frac(&xf).unwrap();
        for n in 0..2 {
            assert_close(wf[n], wi[n], TOL);
            assert_close(m.h_frac(n, &xf).unwrap(), m.set_h(n, &s).unwrap(), TOL);
            assert_close(m.k_frac(n, &xf).unwrap(), m.set_k(n, &s).unwrap(), TOL);
            assert_close(m.y_frac(n, &xf).unwrap(), m.set_y(n, &s).unwrap(), TOL);
        }
        assert_close(m.z_frac(&xf).unwrap(), m.set_z(&s).unwrap(), TOL);
    }
}

#[test]
fn degenerate_nest_detection() {
    // Zero opt-out weight in a sigma < 1 nest, nothing offered there.
    let m = GnlModel::new_allow_zero_optout(
        vec![0.0, 1.0],
        vec![vec![2.0, 1.0]],
        vec![vec![1.0, 1.0]],
        vec![0.5, 1.0],
        vec![1.0],
    )
    .unwrap();
    let empty = Assortment::empty(1);
    assert!(matches!(
        m.nest_choice_prob(&empty),
        Err(Error::DegenerateNest { nest: 0, .. })
    ));
    assert!(matches!(m.set_y(0, &empty), Err(Error::DegenerateNest { .. })));
    // Revenue stays defined: the empty nest contributes nothing.
    assert_close(m.expected_revenue(&empty).unwrap(), 0.0, TOL);
    let full = Assortment::new(vec![1]);
    assert!(m.expected_revenue(&full).unwrap() > 0.0);
    // Floored variant stays defined on the empty set.
    assert!(m.set_y_floored(0, &empty, 1.0).unwrap().abs() < TOL);
}

#[test]
fn validation_catches_bad_fields() {
    let violations = GnlModel::new(
        vec![1.0, -0.5],
        vec![vec![1.0, 0.0], vec![0.0, 0.0]],
        vec![vec![1.0, 0.0], vec![0.0, -1.0]],
        vec![0.0, 1.5],
        vec![1.0, -2.0],
    )
    .map(|_| ())
    .unwrap_err();
    match violations {
        Error::InvalidModel(list) => {
            assert!(list.iter().any(|s| s.contains("sigma")));
            assert!(list.iter().any(|s| s.contains("opt-out")));
            assert!(list.iter().any(|s| s.contains("revenue")));
            assert!(list.iter().any(|s| s.contains("alpha")));
            assert!(list.iter().any(|s| s.contains("no nest")));
        }
        other => panic!("expected InvalidModel, got {other:?}"),
    }
}

#[test]
fn strict_constructor_rejects_zero_optout() {
    let res = GnlModel::new(
        vec![0.0],
        vec![vec![1.0]],
        vec![vec![1.0]],
        vec![0.5],
        vec![1.0],
    );
    assert!(matches!(res, Err(Error::InvalidModel(_))));
}

#[test]
fn dimension_mismatch_is_reported() {
    let m = gnl_case();
    assert!(matches!(
        m.expected_revenue(&Assortment::empty(5)),
        Err(Error::DimensionMismatch(_))
    ));
    assert!(matches!(m.inclusive_value_frac(&[0.5]), Err(Error::DimensionMismatch(_))));
}

#[test]
fn constraint_set_membership() {
    let c = LinearConstraintSet::new(
        3,
        vec![vec![1.0, 1.0, 1.0], vec![0.0, 2.0, 0.0]],
        vec![2.0, 1.0],
    )
    .unwrap();
    assert!(c.satisfied(&[1.0, 0.5, 0.5], 1e-9));
    assert!(!c.satisfied(&[1.0, 1.0, 1.0], 1e-9));
    assert!(!c.satisfied(&[0.0, 0.7, 0.0], 1e-9));
    assert!(LinearConstraintSet::new(3, vec![vec![1.0, 0.0]], vec![1.0]).is_err());
    assert!(LinearConstraintSet::new(2, vec![vec![1.0, f64::NAN]], vec![1.0]).is_err());
    assert_eq!(LinearConstraintSet::free(4).n_rows(), 0);
}

// Random well-formed models for property checks.
fn arb_model() -> impl Strategy<Value = GnlModel> {
    (1usize..=5, 1usize..=3).prop_flat_map(|(m, n)| {
        let v0 = proptest::collection::vec(0.1f64..3.0, n);
        let sigma = proptest::collection::vec(0.05f64..=1.0, n);
        let r = proptest::collection::vec(0.0f64..5.0, m);
        let v = proptest::collection::vec(proptest::collection::vec(0.1f64..4.0, n), m);
        let alpha = proptest::collection::vec(proptest::collection::vec(0.0f64..2.0, n), m);
        (v0, sigma, r, v, alpha).prop_map(move |(v0, sigma, r, v, mut alpha)| {
            for i in 0..m {
                // Guarantee every product belongs somewhere.
                let col = i % n;
                if alpha[i][col] < 0.1 {
                    alpha[i][col] = 0.1;
                }
            }
            GnlModel::new(v0, v, alpha, sigma, r).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn probabilities_form_a_distribution(m in arb_model(), mask in 0u64..32) {
        let x = Assortment::from_mask(m.m, mask & ((1 << m.m) - 1));
        let pn = m.nest_choice_prob(&x).unwrap();
        let p = m.product_choice_prob(&x).unwrap();
        let p0 = m.no_purchase_prob(&x).unwrap();
        prop_assert!((pn.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(pn.iter().all(|&t| (-1e-12..=1.0 + 1e-12).contains(&t)));
        prop_assert!(p.iter().all(|&t| (-1e-12..=1.0 + 1e-12).contains(&t)));
        let total = p.iter().sum::<f64>() + p0;
        prop_assert!((total - 1.0).abs() < 1e-9, "probabilities sum to {total}");
        // Products not offered never get probability.
        for i in 0..m.m {
            if x.x[i] == 0 { prop_assert!(p[i] == 0.0); }
        }
    }

    #[test]
    fn revenue_is_probability_weighted(m in arb_model(), mask in 0u64..32) {
        let x = Assortment::from_mask(m.m, mask & ((1 << m.m) - 1));
        let p = m.product_choice_prob(&x).unwrap();
        let direct = m.expected_revenue(&x).unwrap();
        let weighted: f64 = (0..m.m).map(|i| m.r[i] * p[i]).sum();
        prop_assert!((direct - weighted).abs() < 1e-9 * (1.0 + weighted.abs()));
    }

    #[test]
    fn min_objective_identity(m in arb_model(), mask in 0u64..32) {
        let x = Assortment::from_mask(m.m, mask & ((1 << m.m) - 1));
        let beta = m.max_revenue() + 1.0;
        let lhs = m.min_objective(&x, beta).unwrap();
        let rhs = beta - m.expected_revenue(&x).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn set_h_decreasing_k_increasing(m in arb_model(), mask in 0u64..32, extra in 0usize..5) {
        let mask = mask & ((1 << m.m) - 1);
        let extra = extra % m.m;
        if mask >> extra & 1 == 0 {
            let small = Assortment::from_mask(m.m, mask);
            let large = Assortment::from_mask(m.m, mask | (1 << extra));
            for n in 0..m.n_nests {
                let eps = 1e-12;
                prop_assert!(m.set_h(n, &large).unwrap() <= m.set_h(n, &small).unwrap() + eps);
                prop_assert!(m.set_k(n, &large).unwrap() + eps >= m.set_k(n, &small).unwrap());
                prop_assert!(m.set_y(n, &large).unwrap() <= m.set_y(n, &small).unwrap() + eps);
            }
            prop_assert!(m.set_z(&large).unwrap() + 1e-12 >= m.set_z(&small).unwrap());
        }
    }
}

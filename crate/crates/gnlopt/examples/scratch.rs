use gnlopt::assort_solver::SolverConfig;
use gnlopt::choice_core::{GnlModel, LinearConstraintSet};
use gnlopt::pricing::{cp_price_grid, solve_jap_dp, PriceBounds, PriceLadder};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

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

fn main() {
    let model = shell(71, 3, 2);
    let bounds = random_box(171, 3);
    let constraints = LinearConstraintSet::new(3, vec![vec![1.0; 3]], vec![2.0]).unwrap();
    for cap in [4usize, 8, 12, 16, 24, 32, 48, 64] {
        let grids = cp_price_grid(&model, &bounds, 1e-3, cap).unwrap();
        let nlev: Vec<usize> = grids.iter().map(|g| g.len()).collect();
        let ladder =
            PriceLadder::new(grids, bounds.eta.clone(), bounds.kappa.clone()).unwrap();
        let t0 = Instant::now();
        let res = solve_jap_dp(&model, &ladder, &constraints, &SolverConfig::default());
        let dt = t0.elapsed().as_secs_f64();
        match res {
            Ok(r) => println!(
                "cap {cap:3} levels {nlev:?} rev {:.6} nodes {} lp_it {} oa {} sc {} [{dt:.2}s]",
                r.inner.revenue, r.inner.nodes, r.inner.lp_iterations, r.inner.cuts_oa,
                r.inner.cuts_sc
            ),
            Err(e) => println!("cap {cap:3} levels {nlev:?} ERR {e} [{dt:.2}s]"),
        }
    }
}

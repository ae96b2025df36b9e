use proptest::prelude::*;
use sdmatch::experiments::schedule;
use sdmatch::fields::{laplacian, ScalarField};
use sdmatch::geometry::{dist_sq, exp_map, log_map, Domain, Grid, Point};
use sdmatch::heat_poisson::{
    heat_semigroup, matching_potential_heat_then_solve, matching_potential_solve_then_heat, sample_cloud, solve_poisson,
    PointCloud,
};
use sdmatch::transport::{discrete_ot_exact, solve_semidiscrete};
use std::f64::consts::PI;

fn point() -> impl Strategy<Value = Point> {
    (0.0..1.0f64, 0.0..1.0f64).prop_map(|(a, b)| Point::new(a, b))
}

/// A smooth density `1 + Σ a_k cos(2π(k·x) + φ_k)` with small amplitudes.
fn density(g: Grid, modes: &[(i32, i32, f64, f64)]) -> ScalarField {
    ScalarField::from_fn(g, |p| {
        1.0 + modes
            .iter()
            .map(|&(k1, k2, a, ph)| a * (2.0 * PI * (k1 as f64 * p.x1 + k2 as f64 * p.x2) + ph).cos())
            .sum::<f64>()
    })
}

fn modes() -> impl Strategy<Value = Vec<(i32, i32, f64, f64)>> {
    prop::collection::vec((-4i32..=4, -4i32..=4, -0.1..0.1f64, 0.0..6.3f64), 1..5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn torus_distance_is_symmetric_and_invariant(p in point(), q in point(), s in point()) {
        let d = Domain::Torus;
        let a = dist_sq(d, p, q);
        prop_assert!((a - dist_sq(d, q, p)).abs() < 1e-15);
        prop_assert!(a <= 0.5 + 1e-15);
        let shift = |x: Point| d.canonical(Point::new(x.x1 + s.x1, x.x2 + s.x2));
        prop_assert!((a - dist_sq(d, shift(p), shift(q))).abs() < 1e-12);
    }

    #[test]
    fn exp_inverts_log(p in point(), q in point(), square in any::<bool>()) {
        let d = if square { Domain::Square } else { Domain::Torus };
        let r = exp_map(d, p, log_map(d, p, q));
        prop_assert!(dist_sq(d, r, q) < 1e-24);
    }

    #[test]
    fn schedule_decreases_beyond_e4(n in 60usize..100_000) {
        let (t0, xi0) = schedule(n).unwrap();
        let (t1, xi1) = schedule(n + 1).unwrap();
        prop_assert!(t1 < t0);
        prop_assert!(xi1 < xi0);
        prop_assert!((xi0 - 1.0 / (n as f64).ln()).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn poisson_solution_has_the_right_laplacian(m in modes()) {
        let g = Grid::new(Domain::Torus, 32);
        let rho = density(g, &m);
        let f = solve_poisson(&rho).unwrap();
        prop_assert!(f.mean().abs() < 1e-14);
        let mean = rho.mean();
        let lap = laplacian(&f);
        let err = lap.values().iter().zip(rho.values()).map(|(l, r)| (-l - (r - mean)).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10, "residual {err:e}");
    }

    #[test]
    fn heat_preserves_mass_and_composes(m in modes(), s in 0.001..0.02f64, t in 0.001..0.02f64) {
        let g = Grid::new(Domain::Torus, 32);
        let rho = density(g, &m);
        let a = heat_semigroup(&heat_semigroup(&rho, s).unwrap(), t).unwrap();
        let b = heat_semigroup(&rho, s + t).unwrap();
        prop_assert!((a.mean() - rho.mean()).abs() < 1e-13);
        prop_assert!(a.sup_distance(&b).unwrap() < 1e-12);
        prop_assert!(a.max() - a.min() <= rho.max() - rho.min() + 1e-12);
    }

    #[test]
    fn heat_and_poisson_commute(seed in 0u64..1000, n in 2usize..12) {
        let g = Grid::new(Domain::Torus, 64);
        let cloud = sample_cloud(Domain::Torus, n, seed).unwrap();
        let a = matching_potential_heat_then_solve(&cloud, 0.01, g).unwrap();
        let b = matching_potential_solve_then_heat(&cloud, 0.01, g).unwrap();
        prop_assert!(a.sup_distance(&b).unwrap() < 1e-10 * (1.0 + a.sup_norm()));
    }

    #[test]
    fn exact_lp_is_certified_and_order_free(seed in 0u64..1000, n in 2usize..20) {
        let d = Domain::Torus;
        let src = sample_cloud(d, n, seed).unwrap().points;
        let dst = sample_cloud(d, n + 3, seed + 7).unwrap().points;
        let a: Vec<(Point, f64)> = src.iter().map(|&p| (p, 1.0 / n as f64)).collect();
        let b: Vec<(Point, f64)> = dst.iter().map(|&p| (p, 1.0 / (n + 3) as f64)).collect();
        let plan = discrete_ot_exact(d, &a, &b).unwrap();
        let wa: Vec<f64> = a.iter().map(|x| x.1).collect();
        let wb: Vec<f64> = b.iter().map(|x| x.1).collect();
        prop_assert!((plan.cost - plan.dual_value(&wa, &wb)).abs() < 1e-12);
        let mut rev_a = a.clone();
        rev_a.reverse();
        prop_assert!((discrete_ot_exact(d, &rev_a, &b).unwrap().cost - plan.cost).abs() < 1e-12);
        let swapped = discrete_ot_exact(d, &b, &a).unwrap();
        prop_assert!((swapped.cost - plan.cost).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn semidiscrete_plan_balances_mass_and_is_translation_covariant(seed in 0u64..1000, n in 2usize..6, s1 in 0.0..1.0f64) {
        let g = Grid::new(Domain::Torus, 64);
        let cloud = sample_cloud(Domain::Torus, n, seed).unwrap();
        let plan = solve_semidiscrete(&cloud, g, 1e-6).unwrap();
        for m in &plan.cell_masses {
            prop_assert!((m * n as f64 - 1.0).abs() < 1e-6);
        }
        prop_assert!((plan.dual_value - plan.w2sq).abs() < g.h() * g.h());
        // a whole-cell shift moves the raster with the cloud
        let k = (s1 * 64.0).floor() / 64.0;
        let shifted = solve_semidiscrete(&cloud.translated(k, 0.0), g, 1e-6).unwrap();
        prop_assert!((shifted.dual_value - plan.dual_value).abs() < 1e-6);
    }

    #[test]
    fn single_atom_cost_does_not_depend_on_position(p in point()) {
        let g = Grid::new(Domain::Torus, 64);
        let cloud = PointCloud::from_points(Domain::Torus, vec![p]).unwrap();
        let plan = solve_semidiscrete(&cloud, g, 1e-6).unwrap();
        prop_assert!((plan.w2sq - 1.0 / 6.0).abs() < 5e-3);
    }
}

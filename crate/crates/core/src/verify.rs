//! The named property suite run by `sdmatch verify`.
//!
//! Every property measures a defect and passes when
//! `defect ≤ tolerance · scale`. Scaling the tolerances down is the
//! supported way to inject a violation.

use crate::experiments::{run_trial, TrialConfig};
use crate::fields::{self, ScalarField};
use crate::geometry::{dist, exp_map, log_map, Domain, Grid, Point};
use crate::heat_poisson::{heat_evolve, heat_semigroup, matching_field, sample_cloud};
use crate::hopflax::{forward_characteristics, hopflax_characteristics, hopflax_grid, test_family, DatumNorms, TestShape, C_M};
use crate::rng::rng_from;
use crate::stability::{calibration_suite, stability_check, StabilityOptions, C_STAB};
use crate::transport::{
    c_cyclical_violation, discrete_ot_exact, solve_semidiscrete, solve_semidiscrete_with, SolveOptions,
    TransportMapGrid,
};
use crate::Result;
use rand::Rng;
use std::f64::consts::PI;
use std::time::Instant;

pub struct Property {
    pub module: &'static str,
    pub name: &'static str,
    pub tolerance: f64,
    check: fn() -> Result<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub module: &'static str,
    pub name: &'static str,
    pub defect: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub error: Option<String>,
    pub seconds: f64,
}

impl Property {
    pub fn run(&self, tolerance_scale: f64) -> Outcome {
        let start = Instant::now();
        let res = (self.check)();
        let tolerance = self.tolerance * tolerance_scale;
        let (defect, error) = match res {
            Ok(d) => (d, None),
            Err(e) => (f64::NAN, Some(e.to_string())),
        };
        Outcome {
            module: self.module,
            name: self.name,
            defect,
            tolerance,
            passed: error.is_none() && defect <= tolerance,
            error,
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

fn band_limited(grid: Grid, seed: u64, modes: usize) -> ScalarField {
    let mut rng = rng_from(seed);
    let terms: Vec<(f64, f64, f64, f64)> = (0..modes)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(1..5) as f64,
                rng.gen_range(0..5) as f64,
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let f = ScalarField::from_fn(grid, |p| {
        terms
            .iter()
            .map(|&(a, k1, k2, ph)| a * (2.0 * PI * (k1 * p.x1 + k2 * p.x2) + ph).cos())
            .sum()
    });
    let m = f.mean();
    f.zip_with(&f, |v, _| v - m).expect("same grid")
}

fn random_points(seed: u64, count: usize) -> Vec<Point> {
    let mut rng = rng_from(seed);
    (0..count).map(|_| Point::new(rng.gen(), rng.gen())).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// --- geometry --------------------------------------------------------------------

fn exp_inverts_log() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for dom in [Domain::Torus, Domain::Square] {
        let g = Grid::new(dom, 32);
        for p in g.nodes() {
            for q in g.nodes() {
                let v = log_map(dom, p, q);
                if dom == Domain::Torus && (v.v1 == 0.5 || v.v2 == 0.5) {
                    continue;
                }
                worst = worst.max(dist(dom, exp_map(dom, p, v), q));
            }
        }
    }
    Ok(worst)
}

fn translation_invariance() -> Result<f64> {
    let pts = random_points(21, 30_000);
    Ok(pts
        .chunks_exact(3)
        .map(|c| {
            let (p, q, s) = (c[0], c[1], c[2]);
            let sh = |x: Point| Domain::Torus.canonical(Point::new(x.x1 + s.x1, x.x2 + s.x2));
            (dist(Domain::Torus, sh(p), sh(q)) - dist(Domain::Torus, p, q)).abs()
        })
        .fold(0.0, f64::max))
}

fn triangle_inequality() -> Result<f64> {
    let pts = random_points(22, 30_000);
    let mut worst = f64::NEG_INFINITY;
    for dom in [Domain::Torus, Domain::Square] {
        for c in pts.chunks_exact(3) {
            worst = worst.max(dist(dom, c[0], c[2]) - dist(dom, c[0], c[1]) - dist(dom, c[1], c[2]));
        }
    }
    Ok(worst)
}

// --- fields ----------------------------------------------------------------------

fn parseval() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for dom in [Domain::Torus, Domain::Square] {
        let g = Grid::new(dom, 64);
        let f = band_limited(g, 31, 6);
        let grid_sum = f.values().iter().map(|v| v * v).sum::<f64>() * g.quadrature_weight();
        worst = worst.max(rel(grid_sum, fields::transform(&f).l2_norm_sq()));
    }
    Ok(worst)
}

fn gradient_linear() -> Result<f64> {
    let g = Grid::new(Domain::Torus, 32);
    let (f, h) = (band_limited(g, 32, 3), band_limited(g, 33, 3));
    let sum = f.zip_with(&h, |a, b| a + b)?;
    let via_spectrum = fields::gradient_of(&fields::transform(&f).add(&fields::transform(&h))?);
    let direct = fields::gradient(&sum);
    Ok((0..g.len()).map(|k| (direct.get(k) - via_spectrum.get(k)).norm()).fold(0.0, f64::max))
}

fn hessian_homogeneous() -> Result<f64> {
    let g = Grid::new(Domain::Square, 64);
    let f = band_limited(g, 34, 4);
    let base = fields::hessian_sup_norm(&f);
    Ok([-2.5, 0.1, 3.0]
        .iter()
        .map(|&a: &f64| rel(fields::hessian_sup_norm(&f.scaled(a)), a.abs() * base))
        .fold(0.0, f64::max))
}

// --- heat and Poisson ------------------------------------------------------------

fn heat_mass() -> Result<f64> {
    let g = Grid::new(Domain::Torus, 64);
    let mut worst: f64 = 0.0;
    for seed in 0..4 {
        for n in [1, 30] {
            let c = sample_cloud(Domain::Torus, n, seed)?;
            for t in [0.01, 0.1, 1.0] {
                worst = worst.max((heat_evolve(&c, t, g)?.mean() - 1.0).abs());
            }
        }
    }
    Ok(worst)
}

fn heat_semigroup_property() -> Result<f64> {
    let g = Grid::new(Domain::Torus, 64);
    let c = sample_cloud(Domain::Torus, 30, 5)?;
    let r1 = heat_evolve(&c, 0.01, g)?;
    let direct = heat_evolve(&c, 0.03, g)?;
    let via = heat_semigroup(&r1, 0.02)?;
    Ok(direct.sup_distance(&via)? / r1.max())
}

fn maximum_principle() -> Result<f64> {
    let g = Grid::new(Domain::Torus, 64);
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..10 {
        let c = sample_cloud(Domain::Torus, 30, seed)?;
        let r1 = heat_evolve(&c, 0.01, g)?;
        let r2 = heat_evolve(&c, 0.02, g)?;
        let a = (0..g.len()).max_by(|&a, &b| r1.values()[a].total_cmp(&r1.values()[b])).unwrap_or(0);
        worst = worst.max(-r1.min()).max(-r2.min());
        if r2.values()[a] >= r1.values()[a] {
            worst = f64::INFINITY;
        }
    }
    Ok(worst)
}

fn energy_identity() -> Result<f64> {
    let g = Grid::new(Domain::Torus, 64);
    let c = sample_cloud(Domain::Torus, 200, 6)?;
    let mut worst: f64 = 0.0;
    for t in [0.005, 0.05] {
        let (f, _) = matching_field(&c, t, g)?;
        worst = worst.max(rel(fields::dirichlet_energy(&f), fields::dirichlet_energy_quadrature(&f)));
    }
    Ok(worst)
}

// --- Hopf–Lax ----------------------------------------------------------------------

const HL_N: usize = 64;

fn hl_datum(shape: TestShape) -> ScalarField {
    ScalarField::from_fn(Grid::new(Domain::Torus, HL_N), |p| 0.01 * shape.eval(p))
}

fn hl_semigroup() -> Result<f64> {
    let f = hl_datum(TestShape::CosineSine);
    let (s, t) = (0.1, 0.2);
    let direct = hopflax_grid(&f, s + t)?.q;
    let composed = hopflax_grid(&hopflax_grid(&f, t)?.q, s)?.q;
    direct.sup_distance(&composed)
}

fn hl_contraction() -> Result<f64> {
    let f = hl_datum(TestShape::CosineSine);
    let g = hl_datum(TestShape::SmoothRandom);
    let t = 0.2;
    Ok(hopflax_grid(&f, t)?.q.sup_distance(&hopflax_grid(&g, t)?.q)? - f.sup_distance(&g)?)
}

fn hl_bi_lipschitz() -> Result<f64> {
    let g = Grid::new(Domain::Torus, HL_N);
    let mut worst = f64::NEG_INFINITY;
    for datum in test_family(HL_N) {
        let norms = DatumNorms::of(&datum.field);
        let t = C_M / (norms.grad_sup + norms.hess_sup);
        let (images, _) = forward_characteristics(&datum.field, &fields::gradient(&datum.field), t);
        let inverse = hopflax_characteristics(&datum.field, t)?.argmin;
        for map in [&images, &inverse] {
            for i2 in 0..g.n {
                for i1 in 0..g.n {
                    let a = g.index(i1, i2);
                    for b in [g.index((i1 + 1) % g.n, i2), g.index(i1, (i2 + 1) % g.n)] {
                        let r = dist(g.domain, map[a], map[b]) / g.h();
                        worst = worst.max(0.5 - r).max(r - 2.0);
                    }
                }
            }
        }
    }
    Ok(worst)
}

fn hl_below_datum() -> Result<f64> {
    let f = hl_datum(TestShape::SmoothRandom);
    let q1 = hopflax_grid(&f, 0.2)?.q;
    let q2 = hopflax_grid(&f, 0.4)?.q;
    let above = q1.values().iter().zip(f.values()).map(|(q, v)| q - v);
    let later = q2.values().iter().zip(q1.values()).map(|(a, b)| a - b);
    Ok(above.chain(later).fold(f64::NEG_INFINITY, f64::max))
}

// --- transport ---------------------------------------------------------------------

fn plan_fixture() -> Result<crate::transport::SemiDiscretePlan> {
    let cloud = sample_cloud(Domain::Torus, 40, 41)?;
    solve_semidiscrete(&cloud, Grid::new(Domain::Torus, 64), 1e-4)
}

fn dual_feasibility() -> Result<f64> {
    let plan = plan_fixture()?;
    let (g, pts, w) = (plan.grid, &plan.cloud.points, &plan.weights);
    let mut rng = rng_from(42);
    Ok((0..1000)
        .map(|_| {
            let c = rng.gen_range(0..g.len());
            let j = rng.gen_range(0..pts.len());
            let x = g.node_at(c);
            let a = plan.assignment[c] as usize;
            let d = |k: usize| crate::geometry::dist_sq(g.domain, x, pts[k]) - w[k];
            d(a) - d(j)
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

fn c_cyclical() -> Result<f64> {
    let plan = plan_fixture()?;
    let t = TransportMapGrid::from_plan(&plan);
    Ok(c_cyclical_violation(&t, &crate::hopflax::random_pairs(plan.grid, 1000, 43)))
}

fn cost_sandwich() -> Result<f64> {
    let cloud = sample_cloud(Domain::Torus, 12, 44)?;
    let fine = solve_semidiscrete(&cloud, Grid::new(Domain::Torus, 128), 1e-5)?.w2sq;
    // 45² = 2025 cells as equal-mass atoms
    let coarse = Grid::new(Domain::Torus, 45);
    let src: Vec<(Point, f64)> = coarse.nodes().map(|p| (p, coarse.quadrature_weight())).collect();
    let dst: Vec<(Point, f64)> = cloud.points.iter().map(|&p| (p, 1.0 / cloud.len() as f64)).collect();
    let exact = discrete_ot_exact(Domain::Torus, &src, &dst)?.cost;
    Ok(rel(fine, exact))
}

fn gauge_invariance() -> Result<f64> {
    let plan = plan_fixture()?;
    let src = vec![plan.grid.quadrature_weight(); plan.grid.len()];
    let solve = |shift: f64| {
        solve_semidiscrete_with(
            &plan.cloud,
            plan.grid,
            &src,
            &SolveOptions {
                tol_mass: 1e-4,
                max_iterations: 0,
                initial_weights: Some(plan.weights.iter().map(|w| w + shift).collect()),
            },
        )
    };
    let (a, b) = (solve(0.0)?, solve(0.125)?);
    let moved = a.assignment.iter().zip(&b.assignment).filter(|(x, y)| x != y).count();
    Ok(moved as f64 + (a.w2sq - b.w2sq).abs())
}

// --- stability ---------------------------------------------------------------------

fn stability_bound() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for case in calibration_suite()? {
        if !DatumNorms::of(&case.f).admissible(1.0) {
            continue;
        }
        let r = stability_check(&case.f, &case.cloud, &StabilityOptions::default())?;
        worst = worst.max(r.ratio_high.unwrap_or(0.0));
    }
    Ok(worst)
}

fn stability_matched_atoms() -> Result<f64> {
    let g = crate::stability::suite_grid();
    let f = ScalarField::from_fn(g, |p| 0.004 * (2.0 * PI * p.x1).cos() * (2.0 * PI * p.x2).cos());
    let grad = fields::gradient(&f);
    let k = 8;
    let pts = (0..k * k)
        .map(|i| {
            let x = Point::new(((i % k) as f64 + 0.5) / k as f64, ((i / k) as f64 + 0.5) / k as f64);
            exp_map(Domain::Torus, x, grad.sample(x))
        })
        .collect();
    let cloud = crate::heat_poisson::PointCloud::from_points(Domain::Torus, pts)?;
    let r = stability_check(&f, &cloud, &StabilityOptions::default())?;
    Ok(r.lhs / r.rhs_a)
}

fn stability_anchor() -> Result<f64> {
    let cloud = sample_cloud(Domain::Torus, 40, 3)?;
    let zero = ScalarField::constant(crate::stability::suite_grid(), 0.0);
    let r = stability_check(&zero, &cloud, &StabilityOptions::default())?;
    Ok(r.ratio.map_or(f64::INFINITY, |x| (x - 1.0).abs()))
}

// --- experiments -------------------------------------------------------------------

fn small_trial() -> Result<TrialConfig> {
    let mut c = TrialConfig::new(Domain::Torus, 16, 17)?.with_alpha(2.0)?;
    c.resolution = 64;
    Ok(c)
}

fn determinism() -> Result<f64> {
    let c = small_trial()?;
    Ok((run_trial(&c)?.canonical_json() != run_trial(&c)?.canonical_json()) as u8 as f64)
}

fn trial_measure(f: fn(&crate::experiments::Measurements) -> f64) -> Result<f64> {
    let r = run_trial(&small_trial()?)?;
    match (r.measurements, r.failure) {
        (Some(m), _) => Ok(f(&m)),
        (None, Some(fail)) => Err(crate::Error::InvalidArgument(format!("{}: {}", fail.stage, fail.reason))),
        (None, None) => Ok(f64::INFINITY),
    }
}

fn triangle_sanity() -> Result<f64> {
    trial_measure(|m| m.w2sq_m_mun.sqrt() - m.w2sq_m_munt.upper.sqrt() - m.w2sq_mun_munt.upper.sqrt())
}

fn stability_cross_check() -> Result<f64> {
    trial_measure(|m| if m.event_a { m.l2_t_vs_ansatz - m.stability_bound } else { f64::NEG_INFINITY })
}

fn transport_inequality() -> Result<f64> {
    trial_measure(|m| m.w2sq_m_munt.lower - crate::experiments::C_TI * m.dirichlet)
}

/// Every property, in report order.
pub fn properties() -> Vec<Property> {
    let h64 = 1.0 / 64.0;
    let p = |module, name, tolerance, check| Property {
        module,
        name,
        tolerance,
        check,
    };
    vec![
        p("geometry", "exp inverts log on grid pairs", 1e-14, exp_inverts_log),
        p("geometry", "torus distance is translation invariant", 1e-14, translation_invariance),
        p("geometry", "triangle inequality", 1e-12, triangle_inequality),
        p("fields", "Parseval identity", 1e-10, parseval),
        p("fields", "gradient is linear in spectral space", 1e-12, gradient_linear),
        p("fields", "Hessian sup norm is homogeneous", 1e-12, hessian_homogeneous),
        p("heat_poisson", "heat flow conserves mass", 1e-12, heat_mass),
        p("heat_poisson", "heat flow is a semigroup", 1e-12, heat_semigroup_property),
        p("heat_poisson", "discrete maximum principle", 1e-8, maximum_principle),
        p("heat_poisson", "energy identity", 1e-8, energy_identity),
        p("hopflax", "Hopf-Lax semigroup", 3.0 * h64, hl_semigroup),
        p("hopflax", "monotone contraction", 1e-15, hl_contraction),
        p("hopflax", "characteristic maps are bi-Lipschitz", h64, hl_bi_lipschitz),
        p("hopflax", "Q_t f below f and nonincreasing in t", 0.0, hl_below_datum),
        p("transport", "dual feasibility", 1e-12, dual_feasibility),
        p("transport", "c-cyclical monotonicity", 1e-10, c_cyclical),
        p("transport", "cost sandwich against the exact LP", 0.02, cost_sandwich),
        p("transport", "weight gauge invariance", 1e-15, gauge_invariance),
        p("stability", "admissible ratio below C_stab", C_STAB, stability_bound),
        p("stability", "matched atoms give small lhs", 4.0, stability_matched_atoms),
        p("stability", "zero perturbation anchor", 1e-6, stability_anchor),
        p("experiments", "determinism", 0.0, determinism),
        p("experiments", "triangle sanity", h64, triangle_sanity),
        p("experiments", "stability cross-check", 0.0, stability_cross_check),
        p("experiments", "transport inequality", 0.0, transport_inequality),
    ]
}

/// Runs the properties whose `module/name` contains `filter`.
pub fn run_suite(tolerance_scale: f64, filter: Option<&str>) -> Vec<Outcome> {
    properties()
        .iter()
        .filter(|p| filter.map_or(true, |f| format!("{}/{}", p.module, p.name).contains(f)))
        .map(|p| p.run(tolerance_scale))
        .collect()
}

pub fn format_table(outcomes: &[Outcome]) -> String {
    let mut out = format!("{:<6} {:<13} {:<44} {:>12} {:>12} {:>8}\n", "result", "module", "property", "defect", "tolerance", "seconds");
    for o in outcomes {
        out.push_str(&format!(
            "{:<6} {:<13} {:<44} {:>12.3e} {:>12.3e} {:>8.2}\n",
            if o.passed { "PASS" } else { "FAIL" },
            o.module,
            o.name,
            o.defect,
            o.tolerance,
            o.seconds
        ));
        if let Some(e) = &o.error {
            out.push_str(&format!("       error: {e}\n"));
        }
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    out.push_str(&format!("{} properties, {} failed\n", outcomes.len(), failed));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let props = properties();
        let mut names: Vec<String> = props.iter().map(|p| format!("{}/{}", p.module, p.name)).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), props.len());
    }

    #[test]
    fn fast_properties_pass_and_fail_when_tightened() {
        let out = run_suite(1.0, Some("geometry/"));
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|o| o.passed), "{}", format_table(&out));
        let tight = run_suite(0.0, Some("geometry/torus"));
        assert!(!tight[0].passed);
        assert!(format_table(&tight).contains("FAIL"));
    }
}

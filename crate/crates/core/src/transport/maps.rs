//! Transport maps sampled on grid cells and their metrics.

use super::laguerre::SemiDiscretePlan;
use crate::fields::{ScalarField, VectorField};
use crate::geometry::{dist, dist_sq, exp_map_checked, log_map, Domain, Grid, Point, TangentVector};
use crate::rng::rng_from;
use crate::{Error, Result};
use rand::Rng;

/// A map `T` given by its value at every grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportMapGrid {
    pub grid: Grid,
    pub target: Vec<Point>,
}

impl TransportMapGrid {
    pub fn new(grid: Grid, target: Vec<Point>) -> Result<Self> {
        if target.len() != grid.len() {
            return Err(Error::ResolutionMismatch {
                expected: grid.len(),
                found: target.len(),
            });
        }
        if let Some(p) = target.iter().find(|p| !grid.domain.contains(**p)) {
            return Err(Error::InvalidArgument(format!("map target {p:?} outside the {}", grid.domain)));
        }
        Ok(TransportMapGrid { grid, target })
    }

    pub fn identity(grid: Grid) -> Self {
        TransportMapGrid {
            grid,
            target: grid.nodes().collect(),
        }
    }

    /// `Tⁿ(x) = X_{assignment(x)}`.
    pub fn from_plan(plan: &SemiDiscretePlan) -> Self {
        TransportMapGrid {
            grid: plan.grid,
            target: (0..plan.grid.len()).map(|c| plan.target(c)).collect(),
        }
    }

    /// `x ↦ exp_x(g(x))`; also returns the largest boundary clamp (square).
    pub fn from_field(g: &VectorField) -> (Self, f64) {
        let grid = g.grid();
        let mut clamp: f64 = 0.0;
        let target = grid
            .nodes()
            .zip(g.iter())
            .map(|(x, v)| {
                let l = exp_map_checked(grid.domain, x, v);
                clamp = clamp.max(l.clamp);
                l.point
            })
            .collect();
        (TransportMapGrid { grid, target }, clamp)
    }
}

/// `∫ d²(T₁(x), T₂(x)) dm` by grid quadrature.
pub fn map_l2_distance(a: &TransportMapGrid, b: &TransportMapGrid) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::ResolutionMismatch {
            expected: a.grid.len(),
            found: b.grid.len(),
        });
    }
    let dom = a.grid.domain;
    Ok(a.target.iter().zip(&b.target).map(|(p, q)| dist_sq(dom, *p, *q)).sum::<f64>() * a.grid.quadrature_weight())
}

/// `max_x d(x, T(x))`.
pub fn linf_map_distance(t: &TransportMapGrid) -> f64 {
    let dom = t.grid.domain;
    t.grid.nodes().zip(&t.target).map(|(x, y)| dist(dom, x, *y)).fold(0.0, f64::max)
}

/// `∇φ(x) = log_x T(x)`, the displacement field of `T = exp(∇φ)`. Fails at
/// the first cell whose displacement reaches half a period on the torus,
/// where the logarithm is ambiguous.
pub fn grad_potential_from_map(t: &TransportMapGrid) -> Result<VectorField> {
    let grid = t.grid;
    let dom = grid.domain;
    let mut v1 = Vec::with_capacity(grid.len());
    let mut v2 = Vec::with_capacity(grid.len());
    for (cell, (x, y)) in grid.nodes().zip(&t.target).enumerate() {
        let v = log_map(dom, x, *y);
        if dom == Domain::Torus && (v.v1.abs() >= 0.5 - 1e-12 || v.v2.abs() >= 0.5 - 1e-12) {
            return Err(Error::Antipodal { cell });
        }
        v1.push(v.v1);
        v2.push(v.v2);
    }
    VectorField::new(grid, v1, v2)
}

/// Largest value over the node pairs of
/// `d²(x,T(x)) + d²(x′,T(x′)) − d²(x,T(x′)) − d²(x′,T(x))`; nonpositive for a
/// c-cyclically monotone map.
pub fn c_cyclical_violation(t: &TransportMapGrid, pairs: &[(usize, usize)]) -> f64 {
    let grid = t.grid;
    let dom = grid.domain;
    pairs
        .iter()
        .map(|&(a, b)| {
            let (x, xp) = (grid.node_at(a), grid.node_at(b));
            let (tx, txp) = (t.target[a], t.target[b]);
            dist_sq(dom, x, tx) + dist_sq(dom, xp, txp) - dist_sq(dom, x, txp) - dist_sq(dom, xp, tx)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest accepted `Q / N²` for [`pushforward_density`].
pub const MIN_SAMPLES_PER_CELL: usize = 10;

/// Monte Carlo push-forward of `m` through `exp(g)`.
#[derive(Clone, Debug)]
pub struct Pushforward {
    pub density: ScalarField,
    /// Expected per-cell relative standard error, `(Q/N²)^{-1/2}`.
    pub sigma: f64,
    /// Largest boundary clamp met by a sample (square only).
    pub max_clamp: f64,
}

/// Pushes `m` forward through `x ↦ exp_x(g(x))` with `samples_per_cell`
/// stratified samples in every grid cell; `g` is interpolated between nodes.
/// The landing points are binned on the grid and normalized to mean 1.
pub fn pushforward_density(g: &VectorField, samples_per_cell: usize, seed: u64) -> Result<Pushforward> {
    if samples_per_cell < MIN_SAMPLES_PER_CELL {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_SAMPLES_PER_CELL} samples per cell are required, got {samples_per_cell}"
        )));
    }
    let grid = g.grid();
    let dom = grid.domain;
    let h = grid.h();
    let mut rng = rng_from(seed);
    let mut counts = vec![0u64; grid.len()];
    let mut max_clamp: f64 = 0.0;
    for x in grid.nodes() {
        for _ in 0..samples_per_cell {
            let p = dom.canonical(Point::new(
                x.x1 + (rng.gen::<f64>() - 0.5) * h,
                x.x2 + (rng.gen::<f64>() - 0.5) * h,
            ));
            let v: TangentVector = g.sample(p);
            let l = exp_map_checked(dom, p, v);
            max_clamp = max_clamp.max(l.clamp);
            counts[grid.cell_of(l.point)] += 1;
        }
    }
    let scale = 1.0 / samples_per_cell as f64;
    let density = ScalarField::new(grid, counts.iter().map(|&c| c as f64 * scale).collect())?;
    Ok(Pushforward {
        density,
        sigma: (samples_per_cell as f64).powf(-0.5),
        max_clamp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields;
    use std::f64::consts::PI;

    #[test]
    fn map_metrics_examples() {
        let g = Grid::new(Domain::Torus, 32);
        let id = TransportMapGrid::identity(g);
        assert_eq!(map_l2_distance(&id, &id).unwrap(), 0.0);
        assert_eq!(linf_map_distance(&id), 0.0);
        let s = TangentVector::new(0.1, -0.05);
        let (shift, clamp) = TransportMapGrid::from_field(&VectorField::from_fn(g, |_| s));
        assert_eq!(clamp, 0.0);
        assert!((map_l2_distance(&id, &shift).unwrap() - s.norm_sq()).abs() < 1e-15);
        let grad = grad_potential_from_map(&shift).unwrap();
        assert!(grad.iter().all(|v| (v - s).norm() < 1e-15));
        assert!(grad_potential_from_map(&id).unwrap().sup_norm() == 0.0);

        let mut one = id.clone();
        one.target[5] = dom_shift(g, 5, 0.3);
        assert!((linf_map_distance(&one) - 0.3).abs() < 1e-15);
    }

    fn dom_shift(g: Grid, cell: usize, d: f64) -> Point {
        let x = g.node_at(cell);
        g.domain.canonical(Point::new(x.x1 + d, x.x2))
    }

    #[test]
    fn map_l2_matches_direct_sum() {
        let g = Grid::new(Domain::Square, 16);
        let a = TransportMapGrid::new(g, g.nodes().map(|p| Point::new(p.x2, p.x1)).collect()).unwrap();
        let b = TransportMapGrid::new(g, g.nodes().map(|p| Point::new(1.0 - p.x1, p.x2)).collect()).unwrap();
        let mut direct = 0.0;
        for (p, _) in g.nodes().zip(0..) {
            let (u, v) = (Point::new(p.x2, p.x1), Point::new(1.0 - p.x1, p.x2));
            direct += (u.x1 - v.x1).powi(2) + (u.x2 - v.x2).powi(2);
        }
        assert!((map_l2_distance(&a, &b).unwrap() - direct / 256.0).abs() < 1e-14);
        assert_eq!(map_l2_distance(&a, &b).unwrap(), map_l2_distance(&b, &a).unwrap());
    }

    #[test]
    fn antipodal_displacement_is_flagged() {
        let g = Grid::new(Domain::Torus, 8);
        let mut t = TransportMapGrid::identity(g);
        t.target[3] = dom_shift(g, 3, 0.5);
        assert!(matches!(grad_potential_from_map(&t), Err(Error::Antipodal { cell: 3 })));
    }

    #[test]
    fn pushforward_of_identity_and_translation_is_uniform() {
        let g = Grid::new(Domain::Torus, 32);
        let p = pushforward_density(&VectorField::zeros(g), 10, 4).unwrap();
        assert!(p.density.values().iter().all(|&v| (v - 1.0).abs() <= 3.0 * p.sigma));
        assert_eq!(p.density.mean(), 1.0);
        assert!(pushforward_density(&VectorField::zeros(g), 9, 4).is_err());
        // an exact multiple of the cell size keeps strata intact
        let s = TangentVector::new(3.0 * g.h(), -g.h());
        let p = pushforward_density(&VectorField::from_fn(g, |_| s), 10, 4).unwrap();
        assert!(p.density.values().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn pushforward_matches_change_of_variables() {
        let g = Grid::new(Domain::Torus, 32);
        let eps = 0.003;
        let f = ScalarField::from_fn(g, |p| eps * (2.0 * PI * p.x1).cos());
        let grad = fields::gradient(&f);
        let spc = 4000;
        let push = pushforward_density(&grad, spc, 9).unwrap();
        let lap = fields::laplacian(&f);
        // exact oracle: the cell [y-h/2, y+h/2) receives the mass of its
        // preimage under x ↦ x − 2πε sin(2πx)
        let preimage = |y: f64| {
            let mut x = y;
            for _ in 0..50 {
                let r = x - 2.0 * PI * eps * (2.0 * PI * x).sin() - y;
                x -= r / (1.0 - 4.0 * PI * PI * eps * (2.0 * PI * x).cos());
            }
            x
        };
        // column averages sharpen the Monte Carlo error to σ/√N
        let sigma = push.sigma / (g.n as f64).sqrt();
        let h = g.h();
        for i1 in 0..g.n {
            let y = g.coord(i1);
            let measured: f64 = (0..g.n).map(|i2| push.density.at(i1, i2)).sum::<f64>() / g.n as f64;
            let exact = (preimage(y + 0.5 * h) - preimage(y - 0.5 * h)) / h;
            assert!((measured - exact).abs() <= 3.0 * sigma + 1e-2 * eps, "{i1}: {measured} vs {exact}");
            // first order in ε: 1 − Δf
            let first = 1.0 - lap.at(i1, 0);
            assert!((exact - first).abs() <= 2.0 * (4.0 * PI * PI * eps).powi(2));
        }
    }
}

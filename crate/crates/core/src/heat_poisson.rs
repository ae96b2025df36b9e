//! The regularized ansatz: smooth the empirical measure `μⁿ` with the heat
//! semigroup to get `μ^{n,t}`, then solve `-Δf^{n,t} = μ^{n,t} - 1` with zero
//! mean. Both steps are diagonal in the spectral basis and are applied exactly
//! up to the grid band limit.

use crate::fields::{self, FieldKind, ScalarField, Spectrum, VectorField};
use crate::geometry::{Domain, Grid, Point};
use crate::rng::rng_from;
use crate::{Error, Result};
use rand::Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Spectral tail allowed at the Nyquist frequency.
pub const NYQUIST_TAIL: f64 = 1e-14;

/// Heat multipliers below this underflow-safe floor are dropped when
/// assembling `μ^{n,t}`.
const MODE_CUTOFF: f64 = 1e-300;

/// Negative undershoot of a smoothed density tolerated as truncation noise.
pub const POSITIVITY_SLACK: f64 = 1e-8;

/// `n` atoms defining the empirical measure `μⁿ = (1/n) Σ δ_{X_i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub domain: Domain,
    pub points: Vec<Point>,
    /// Seed the cloud was drawn with; 0 for explicitly constructed clouds.
    pub seed: u64,
}

impl PointCloud {
    pub fn from_points(domain: Domain, points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("a point cloud needs at least one point".into()));
        }
        if let Some(p) = points.iter().find(|p| !domain.contains(**p)) {
            return Err(Error::InvalidArgument(format!("point {p:?} outside the {domain}")));
        }
        Ok(PointCloud { domain, points, seed: 0 })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Rigid translation (torus only).
    pub fn translated(&self, s1: f64, s2: f64) -> PointCloud {
        PointCloud {
            domain: self.domain,
            points: self
                .points
                .iter()
                .map(|p| self.domain.canonical(Point::new(p.x1 + s1, p.x2 + s2)))
                .collect(),
            seed: self.seed,
        }
    }
}

/// Draws `n` i.i.d. `m`-uniform points. Deterministic in `(domain, n, seed)`.
pub fn sample_cloud(domain: Domain, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidArgument("cloud size must be at least 1".into()));
    }
    let mut rng = rng_from(seed);
    let points = (0..n)
        .map(|_| Point::new(rng.gen::<f64>(), rng.gen::<f64>()))
        .collect();
    Ok(PointCloud { domain, points, seed })
}

/// Smallest power-of-two resolution whose Nyquist heat multiplier is below
/// [`NYQUIST_TAIL`].
pub fn required_resolution(t: f64) -> usize {
    let mut n = 2usize;
    while nyquist_tail(n, t) >= NYQUIST_TAIL {
        n *= 2;
    }
    n
}

#[inline]
fn nyquist_tail(n: usize, t: f64) -> f64 {
    let k = n as f64 / 2.0;
    (-4.0 * PI * PI * k * k * t).exp()
}

fn check_resolution(grid: Grid, t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("heat time must be positive, got {t}")));
    }
    let tail = nyquist_tail(grid.n, t);
    if tail >= NYQUIST_TAIL {
        return Err(Error::UnderResolved {
            t,
            tail,
            required: required_resolution(t),
        });
    }
    Ok(())
}

/// Spectrum of `P_t μⁿ` (or of the raw empirical measure when `t = 0`)
/// restricted to the grid band, computed directly from the atoms.
fn empirical_spectrum(cloud: &PointCloud, t: f64, grid: Grid) -> Spectrum {
    let n = grid.n;
    let inv_n = 1.0 / cloud.len() as f64;
    // largest index with a multiplier above the cutoff (eigenvalue (2πk)² or (πk)²)
    let freq = match grid.domain {
        Domain::Torus => 2.0 * PI,
        Domain::Square => PI,
    };
    let kmax_heat = if t > 0.0 {
        ((-MODE_CUTOFF.ln()) / (freq * freq * t)).sqrt().floor() as usize
    } else {
        usize::MAX
    };
    match grid.domain {
        Domain::Torus => {
            let kmax = kmax_heat.min(n / 2 - 1);
            let width = 2 * kmax + 1;
            let mut coeffs = vec![Complex64::new(0.0, 0.0); n * n];
            let mut e1 = vec![Complex64::new(0.0, 0.0); width];
            let mut e2 = vec![Complex64::new(0.0, 0.0); width];
            let mut acc = vec![Complex64::new(0.0, 0.0); width * width];
            for p in &cloud.points {
                for (j, k) in (-(kmax as i64)..=kmax as i64).enumerate() {
                    e1[j] = Complex64::from_polar(1.0, -2.0 * PI * k as f64 * p.x1);
                    e2[j] = Complex64::from_polar(1.0, -2.0 * PI * k as f64 * p.x2);
                }
                for (j2, b) in e2.iter().enumerate() {
                    let row = &mut acc[j2 * width..(j2 + 1) * width];
                    for (a, out) in e1.iter().zip(row.iter_mut()) {
                        *out += a * b;
                    }
                }
            }
            for j2 in 0..width {
                let k2 = j2 as i64 - kmax as i64;
                for j1 in 0..width {
                    let k1 = j1 as i64 - kmax as i64;
                    let lambda = 4.0 * PI * PI * ((k1 * k1 + k2 * k2) as f64);
                    let mult = if t > 0.0 { (-lambda * t).exp() } else { 1.0 };
                    if mult < MODE_CUTOFF {
                        continue;
                    }
                    let idx = grid.index(k1.rem_euclid(n as i64) as usize, k2.rem_euclid(n as i64) as usize);
                    coeffs[idx] = acc[j2 * width + j1] * (inv_n * mult);
                }
            }
            Spectrum::Fourier { grid, coeffs }
        }
        Domain::Square => {
            let kmax = kmax_heat.min(n - 1);
            let width = kmax + 1;
            let mut coeffs = vec![0.0; n * n];
            let mut c1 = vec![0.0; width];
            let mut c2 = vec![0.0; width];
            let mut acc = vec![0.0; width * width];
            for p in &cloud.points {
                for k in 0..width {
                    c1[k] = (PI * k as f64 * p.x1).cos();
                    c2[k] = (PI * k as f64 * p.x2).cos();
                }
                for (k2, b) in c2.iter().enumerate() {
                    let row = &mut acc[k2 * width..(k2 + 1) * width];
                    for (a, out) in c1.iter().zip(row.iter_mut()) {
                        *out += a * b;
                    }
                }
            }
            for k2 in 0..width {
                for k1 in 0..width {
                    let lambda = PI * PI * ((k1 * k1 + k2 * k2) as f64);
                    let mult = if t > 0.0 { (-lambda * t).exp() } else { 1.0 };
                    if mult < MODE_CUTOFF {
                        continue;
                    }
                    // L²-normalized Neumann eigenfunctions carry √2 per nonzero index
                    let norm = if k1 == 0 { 1.0 } else { 2.0 } * if k2 == 0 { 1.0 } else { 2.0 };
                    coeffs[grid.index(k1, k2)] = acc[k2 * width + k1] * inv_n * norm * mult;
                }
            }
            Spectrum::Cosine { grid, coeffs }
        }
    }
}

/// `μ^{n,t} = P_t μⁿ` sampled on the grid, as a density against `m`.
pub fn heat_evolve(cloud: &PointCloud, t: f64, grid: Grid) -> Result<ScalarField> {
    if cloud.domain != grid.domain {
        return Err(Error::InvalidArgument("cloud and grid live on different domains".into()));
    }
    check_resolution(grid, t)?;
    let spec = empirical_spectrum(cloud, t, grid);
    let mut rho = fields::inverse_transform(&spec).into_values();
    // the constant mode is exactly 1; remove the round-off drift of the synthesis
    let drift = rho.iter().sum::<f64>() * grid.quadrature_weight() - 1.0;
    rho.iter_mut().for_each(|v| *v -= drift);
    ScalarField::new(grid, rho)?.with_kind(FieldKind::Density)
}

/// Applies the heat semigroup `P_t` to a grid field.
pub fn heat_semigroup(field: &ScalarField, t: f64) -> Result<ScalarField> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("heat time must be nonnegative, got {t}")));
    }
    let mut spec = fields::transform(field);
    spec.apply_multiplier(|l| (-l * t).exp());
    Ok(fields::inverse_transform(&spec))
}

/// Clamps the tiny negative undershoots of a smoothed density to zero and
/// renormalizes to mean 1. Returns the density and the clamp magnitude
/// (the most negative value removed).
pub fn clamp_density(rho: &ScalarField) -> Result<(ScalarField, f64)> {
    let min = rho.min();
    if min < -POSITIVITY_SLACK {
        return Err(Error::InvalidArgument(format!(
            "density undershoots to {min:e}, beyond truncation noise"
        )));
    }
    let clamp = (-min).max(0.0);
    let clamped: Vec<f64> = rho.values().iter().map(|v| v.max(0.0)).collect();
    let mean = clamped.iter().sum::<f64>() * rho.grid().quadrature_weight();
    let field = ScalarField::new(rho.grid(), clamped.iter().map(|v| v / mean).collect())?;
    Ok((field, clamp))
}

/// Null-mean solution of `-Δf = ρ - 1`.
pub fn solve_poisson(rho: &ScalarField) -> Result<ScalarField> {
    let mut spec = fields::transform(rho);
    let mean = spec.mean();
    if (mean - 1.0).abs() > 1e-8 {
        return Err(Error::BadMean { expected: 1.0, found: mean });
    }
    spec.apply_multiplier(|l| if l == 0.0 { 0.0 } else { 1.0 / l });
    let f = fields::inverse_transform(&spec);
    // the zero mode is exactly zero; strip synthesis round-off
    let m = f.mean();
    let values = f.values().iter().map(|v| v - m).collect();
    ScalarField::new(rho.grid(), values)?.with_kind(FieldKind::Potential)
}

/// `f^{n,t}` and its gradient. The potential is assembled directly from the
/// smoothed empirical spectrum divided by the Laplacian eigenvalues, which
/// keeps fluctuations far below the round-off level of the density itself.
pub fn matching_field(cloud: &PointCloud, t: f64, grid: Grid) -> Result<(ScalarField, VectorField)> {
    if cloud.domain != grid.domain {
        return Err(Error::InvalidArgument("cloud and grid live on different domains".into()));
    }
    check_resolution(grid, t)?;
    let mut spec = empirical_spectrum(cloud, t, grid);
    spec.apply_multiplier(|l| if l == 0.0 { 0.0 } else { 1.0 / l });
    let g = fields::gradient_of(&spec);
    let f = fields::inverse_transform(&spec);
    let m = f.mean();
    let f = ScalarField::new(grid, f.values().iter().map(|v| v - m).collect())?.with_kind(FieldKind::Potential)?;
    Ok((f, g))
}

/// `f^{n,t}` assembled the other way round: heat smoothing to a grid density,
/// then the Poisson solve.
pub fn matching_potential_heat_then_solve(cloud: &PointCloud, t: f64, grid: Grid) -> Result<ScalarField> {
    solve_poisson(&heat_evolve(cloud, t, grid)?)
}

/// `f^{n,t}` as `P_t fⁿ`: the band-limited spectrum of
/// `fⁿ = (-Δ)⁻¹(μⁿ - 1)` is formed first and then smoothed.
pub fn matching_potential_solve_then_heat(cloud: &PointCloud, t: f64, grid: Grid) -> Result<ScalarField> {
    check_resolution(grid, t)?;
    let mut spec = empirical_spectrum(cloud, 0.0, grid);
    spec.apply_multiplier(|l| if l == 0.0 { 0.0 } else { 1.0 / l });
    spec.apply_multiplier(|l| {
        let m = (-l * t).exp();
        if m < MODE_CUTOFF {
            0.0
        } else {
            m
        }
    });
    // drop the Fourier Nyquist row/column, which the forward assembly never fills
    if let Spectrum::Fourier { coeffs, .. } = &mut spec {
        let n = grid.n;
        for j in 0..n {
            coeffs[grid.index(n / 2, j)] = Complex64::new(0.0, 0.0);
            coeffs[grid.index(j, n / 2)] = Complex64::new(0.0, 0.0);
        }
    }
    let f = fields::inverse_transform(&spec);
    let m = f.mean();
    ScalarField::new(grid, f.values().iter().map(|v| v - m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{dirichlet_energy, dirichlet_energy_quadrature, laplacian};

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_cloud(Domain::Torus, 100, 42).unwrap();
        let b = sample_cloud(Domain::Torus, 100, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_cloud(Domain::Torus, 100, 43).unwrap());
        assert!(sample_cloud(Domain::Torus, 0, 1).is_err());
    }

    #[test]
    fn sample_means_within_clt_bound() {
        let c = sample_cloud(Domain::Square, 100_000, 5).unwrap();
        let n = c.len() as f64;
        let m1 = c.points.iter().map(|p| p.x1).sum::<f64>() / n;
        let m2 = c.points.iter().map(|p| p.x2).sum::<f64>() / n;
        // 6σ with σ = sqrt(1/12 / n) ≈ 5.5e-3; the stated band ±0.01 is tighter
        assert!((m1 - 0.5).abs() < 0.01 && (m2 - 0.5).abs() < 0.01);
    }

    #[test]
    fn chi_square_uniformity() {
        let c = sample_cloud(Domain::Torus, 100_000, 17).unwrap();
        let mut bins = [0usize; 64];
        for p in &c.points {
            let b = ((p.x1 * 8.0) as usize).min(7) + 8 * ((p.x2 * 8.0) as usize).min(7);
            bins[b] += 1;
        }
        let expected = c.len() as f64 / 64.0;
        let stat: f64 = bins.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        // 99.9% quantile of chi-square with 63 degrees of freedom
        assert!(stat < 103.4, "chi-square {stat}");
    }

    #[test]
    fn large_time_reaches_equilibrium() {
        for dom in [Domain::Torus, Domain::Square] {
            let c = sample_cloud(dom, 50, 3).unwrap();
            let rho = heat_evolve(&c, 10.0, Grid::new(dom, 32)).unwrap();
            assert!(rho.sup_distance(&ScalarField::constant(rho.grid(), 1.0)).unwrap() < 1e-10);
        }
    }

    #[test]
    fn single_atom_is_symmetric_about_itself() {
        let grid = Grid::new(Domain::Torus, 64);
        let c = PointCloud::from_points(Domain::Torus, vec![Point::new(0.5, 0.5)]).unwrap();
        let rho = heat_evolve(&c, 0.01, grid).unwrap();
        let n = grid.n;
        let centre = grid.index(n / 2, n / 2);
        assert!((rho.max() - rho.values()[centre]).abs() < 1e-12);
        for i2 in 1..n {
            for i1 in 1..n {
                let a = rho.at(i1, i2);
                let b = rho.at(n - i1, n - i2);
                assert!((a - b).abs() < 1e-11);
            }
        }
    }

    /// Periodized Gaussian kernel by direct image summation.
    fn image_sum(x: Point, atom: Point, t: f64) -> f64 {
        let mut s = 0.0;
        for m1 in -3i32..=3 {
            for m2 in -3i32..=3 {
                if m1 * m1 + m2 * m2 > 9 {
                    continue;
                }
                let d1 = x.x1 - atom.x1 + m1 as f64;
                let d2 = x.x2 - atom.x2 + m2 as f64;
                s += (-(d1 * d1 + d2 * d2) / (4.0 * t)).exp();
            }
        }
        s / (4.0 * PI * t)
    }

    #[test]
    fn heat_matches_image_sum_oracle() {
        let grid = Grid::new(Domain::Torus, 64);
        let atom = Point::new(0.3141, 0.7182);
        let c = PointCloud::from_points(Domain::Torus, vec![atom]).unwrap();
        let rho = heat_evolve(&c, 0.01, grid).unwrap();
        let err = grid
            .nodes()
            .zip(rho.values())
            .map(|(p, v)| (image_sum(p, atom, 0.01) - v).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "sup error {err}");
    }

    #[test]
    fn square_single_atom_matches_reflected_images() {
        // Neumann kernel on [0,1]² = periodic kernel of period 2 summed over the four mirror images
        let grid = Grid::new(Domain::Square, 64);
        let atom = Point::new(0.2, 0.65);
        let c = PointCloud::from_points(Domain::Square, vec![atom]).unwrap();
        let t = 0.005;
        let rho = heat_evolve(&c, t, grid).unwrap();
        let mut err: f64 = 0.0;
        for (p, v) in grid.nodes().zip(rho.values()) {
            let mut s = 0.0;
            for (a1, a2) in [(atom.x1, atom.x2), (-atom.x1, atom.x2), (atom.x1, -atom.x2), (-atom.x1, -atom.x2)] {
                for m1 in -2i32..=2 {
                    for m2 in -2i32..=2 {
                        let d1 = p.x1 - a1 + 2.0 * m1 as f64;
                        let d2 = p.x2 - a2 + 2.0 * m2 as f64;
                        s += (-(d1 * d1 + d2 * d2) / (4.0 * t)).exp();
                    }
                }
            }
            err = err.max((s / (4.0 * PI * t) - v).abs());
        }
        assert!(err < 1e-8, "sup error {err}");
    }

    #[test]
    fn under_resolved_grid_reports_required_size() {
        let c = sample_cloud(Domain::Torus, 4, 1).unwrap();
        match heat_evolve(&c, 1e-3, Grid::new(Domain::Torus, 16)) {
            Err(Error::UnderResolved { required, .. }) => {
                assert!(required > 16);
                assert!(heat_evolve(&c, 1e-3, Grid::new(Domain::Torus, required)).is_ok());
            }
            other => panic!("expected under-resolution, got {other:?}"),
        }
    }

    #[test]
    fn mass_positivity_and_semigroup() {
        let grid = Grid::new(Domain::Torus, 64);
        for seed in 0..10 {
            let c = sample_cloud(Domain::Torus, 30, seed).unwrap();
            let r1 = heat_evolve(&c, 0.01, grid).unwrap();
            assert!((r1.mean() - 1.0).abs() < 1e-12);
            assert!(r1.min() >= -POSITIVITY_SLACK);
            let r2 = heat_evolve(&c, 0.02, grid).unwrap();
            let via = heat_semigroup(&r1, 0.01).unwrap();
            assert!(r2.sup_distance(&via).unwrap() < 1e-12 * r1.max());
            // the maximum decreases under further smoothing at its location
            let argmax = (0..grid.len()).max_by(|&a, &b| r1.values()[a].total_cmp(&r1.values()[b])).unwrap();
            assert!(r2.values()[argmax] < r1.values()[argmax]);
        }
    }

    #[test]
    fn poisson_examples() {
        for dom in [Domain::Torus, Domain::Square] {
            let g = Grid::new(dom, 32);
            let f = solve_poisson(&ScalarField::constant(g, 1.0)).unwrap();
            assert!(f.sup_norm() < 1e-15);
            assert!(solve_poisson(&ScalarField::constant(g, 1.1)).is_err());
        }
        let g = Grid::new(Domain::Torus, 64);
        let rho = ScalarField::from_fn(g, |p| 1.0 + (2.0 * PI * p.x1).cos());
        let f = solve_poisson(&rho).unwrap();
        let exact = ScalarField::from_fn(g, |p| (2.0 * PI * p.x1).cos() / (4.0 * PI * PI));
        assert!(f.sup_distance(&exact).unwrap() < 1e-10 * exact.sup_norm());
    }

    #[test]
    fn poisson_residual_on_band_limited_density() {
        for dom in [Domain::Torus, Domain::Square] {
            let g = Grid::new(dom, 64);
            let c = sample_cloud(dom, 20, 8).unwrap();
            let rho = heat_evolve(&c, 0.01, g).unwrap();
            let f = solve_poisson(&rho).unwrap();
            assert!(f.mean().abs() < 1e-14);
            let lap = laplacian(&f);
            let resid = lap
                .values()
                .iter()
                .zip(rho.values())
                .map(|(l, r)| (-l - (r - 1.0)).abs())
                .fold(0.0, f64::max);
            assert!(resid < 1e-10 * rho.sup_norm(), "{dom}: {resid}");
        }
    }

    #[test]
    fn heat_and_inverse_laplacian_commute() {
        for dom in [Domain::Torus, Domain::Square] {
            let g = Grid::new(dom, 64);
            let c = sample_cloud(dom, 25, 2).unwrap();
            let (f, _) = matching_field(&c, 0.005, g).unwrap();
            let f1 = matching_potential_heat_then_solve(&c, 0.005, g).unwrap();
            let f2 = matching_potential_solve_then_heat(&c, 0.005, g).unwrap();
            assert!(f.sup_distance(&f1).unwrap() < 1e-12, "{dom}");
            assert!(f.sup_distance(&f2).unwrap() < 1e-12, "{dom}");
            // and on a generic grid field
            let rho = heat_evolve(&c, 0.01, g).unwrap();
            let a = heat_semigroup(&solve_poisson(&rho).unwrap(), 0.003).unwrap();
            let b = solve_poisson(&heat_semigroup(&rho, 0.003).unwrap()).unwrap();
            assert!(a.sup_distance(&b).unwrap() < 1e-12);
        }
    }

    #[test]
    fn large_time_gradient_vanishes() {
        let c = sample_cloud(Domain::Torus, 64, 4).unwrap();
        let (_, g) = matching_field(&c, 10.0, Grid::new(Domain::Torus, 32)).unwrap();
        assert!(g.sup_norm() < 1e-8);
    }

    #[test]
    fn energy_identity_on_matching_field() {
        let n = 1024;
        let t = (n as f64).ln().powi(4) / n as f64;
        let grid = Grid::new(Domain::Torus, 64);
        let c = sample_cloud(Domain::Torus, n, 99).unwrap();
        let (f, _) = matching_field(&c, t, grid).unwrap();
        let e = dirichlet_energy(&f);
        assert!(e > 0.0 && e.is_finite(), "energy {e}");
        let eq = dirichlet_energy_quadrature(&f);
        assert!((e - eq).abs() <= 1e-8 * e);
        // smaller times keep more of the empirical fluctuation
        let (fs, _) = matching_field(&c, 0.01, grid).unwrap();
        let es = dirichlet_energy(&fs);
        assert!((es - dirichlet_energy_quadrature(&fs)).abs() <= 1e-8 * es);
        assert!(es > e);
    }
}

//! Entropic bracket for `W₂²` between two grid densities.
//!
//! The densities are block-averaged onto a coarse grid of at most
//! `coarse_resolution` nodes per side and treated as atoms at the coarse
//! nodes. Log-domain Sinkhorn with ε-scaling runs on the coarse problem; the
//! squared-distance kernel is a product of two one-dimensional kernels, so
//! every kernel application costs `O(M³)`.
//!
//! Both ends of the bracket are certified whatever the convergence state:
//! the lower end is the dual value of the doubly c-transformed potentials,
//! the upper end the cost of the Sinkhorn plan rounded onto the exact
//! marginals. The quantization distance from each density to its coarse
//! atoms widens the coarse bracket into a bracket for the grid densities.

use crate::fields::ScalarField;
use crate::geometry::{dist_sq, Domain, Grid};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SinkhornOptions {
    /// Decreasing ε values, in units of `diam²`.
    pub schedule: Vec<f64>,
    pub coarse_resolution: usize,
    /// Iteration cap per ε.
    pub max_iterations: usize,
    /// Target L1 marginal violation.
    pub tol: f64,
    /// Over-relaxation factor ω ∈ [1, 2).
    pub relaxation: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        SinkhornOptions {
            schedule: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4],
            coarse_resolution: 64,
            max_iterations: 1000,
            tol: 1e-4,
            relaxation: 1.5,
        }
    }
}

/// Marginal violation above which the final stage counts as failed.
const FAIL_MARGINAL: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    /// Bracket for the coarse atomic problem.
    pub coarse_lower: f64,
    pub coarse_upper: f64,
    /// `W₂(ρA, ρA_coarse) + W₂(ρB, ρB_coarse)` upper bound.
    pub quantization: f64,
    pub resolution: usize,
    pub eps_final: f64,
    /// L1 marginal violation of the unrounded plan.
    pub marginal_error: f64,
    pub iterations: usize,
}

impl Bracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.upper + self.lower)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// One-dimensional squared distances between the nodes of an `m`-grid.
fn axis_cost(domain: Domain, m: usize) -> Vec<f64> {
    let g = Grid::new(domain, m);
    let mut c = vec![0.0; m * m];
    for x in 0..m {
        for y in 0..m {
            let d = domain.delta(g.coord(x), g.coord(y));
            c[x * m + y] = d * d;
        }
    }
    c
}

/// A one-dimensional log-kernel with its exponential.
struct Kernel {
    log: Vec<f64>,
    exp: Vec<f64>,
}

impl Kernel {
    fn new(log: Vec<f64>) -> Self {
        let exp = log.iter().map(|l| l.exp()).collect();
        Kernel { log, exp }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// `out[i·m + x] = log Σ_y exp(data[i·m + y] + k.log[x·m + y])`.
fn lse_rows(data: &[f64], m: usize, k: &Kernel) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; m * m];
    let mut e = vec![0.0; m];
    for i in 0..m {
        let row = &data[i * m..(i + 1) * m];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if mx == f64::NEG_INFINITY {
            continue;
        }
        for (ey, r) in e.iter_mut().zip(row) {
            *ey = (r - mx).exp();
        }
        for x in 0..m {
            let kr = &k.exp[x * m..(x + 1) * m];
            let s = dot(&e, kr);
            out[i * m + x] = if s > 1e-250 {
                mx + s.ln()
            } else {
                // every term underflowed; redo in the log domain
                let kl = &k.log[x * m..(x + 1) * m];
                let t = row.iter().zip(kl).map(|(a, b)| a + b).fold(f64::NEG_INFINITY, f64::max);
                if t == f64::NEG_INFINITY {
                    t
                } else {
                    let s: f64 = row
                        .iter()
                        .zip(kl)
                        .map(|(a, b)| a + b - t)
                        .filter(|&d| d > -50.0)
                        .map(f64::exp)
                        .sum();
                    t + s.ln()
                }
            };
        }
    }
    out
}

fn transpose(a: &[f64], m: usize) -> Vec<f64> {
    let mut t = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            t[j * m + i] = a[i * m + j];
        }
    }
    t
}

/// `log Σ_Y exp(data(Y)) k1(x1,y1) k2(x2,y2)` for data indexed `y2·m + y1`.
fn apply(data: &[f64], m: usize, k1: &Kernel, k2: &Kernel) -> Vec<f64> {
    let a = lse_rows(data, m, k1);
    transpose(&lse_rows(&transpose(&a, m), m, k2), m)
}

/// L1 violation of both marginals of `diag(e^{f/ε}a) K diag(e^{g/ε}b)`.
#[allow(clippy::too_many_arguments)]
fn marginal_violation(
    f: &[f64],
    g: &[f64],
    la: &[f64],
    lb: &[f64],
    a: &[f64],
    b: &[f64],
    eps: f64,
    m: usize,
    k: &Kernel,
) -> f64 {
    let u: Vec<f64> = f.iter().zip(la).map(|(f, l)| f / eps + l).collect();
    let v: Vec<f64> = g.iter().zip(lb).map(|(g, l)| g / eps + l).collect();
    let side = |u: &[f64], v: &[f64], a: &[f64]| -> f64 {
        let s = apply(v, m, k, k);
        s.iter().zip(u).zip(a).map(|((s, u), a)| ((s + u).exp() - a).abs()).sum()
    };
    side(&u, &v, a) + side(&v, &u, b)
}

/// `p ← (1−ω)p + ω(−ε·lse)`; plain Sinkhorn for ω = 1.
fn relax(p: &mut [f64], lse: &[f64], eps: f64, omega: f64) {
    for (p, s) in p.iter_mut().zip(lse) {
        let next = -eps * s;
        *p = if p.is_finite() { (1.0 - omega) * *p + omega * next } else { next };
    }
}

/// `min_Y c(X,Y) − g(Y)` for the separable cost.
fn c_transform(g: &[f64], m: usize, c1: &[f64]) -> Vec<f64> {
    let mut t = vec![f64::INFINITY; m * m];
    for y2 in 0..m {
        let row = &g[y2 * m..(y2 + 1) * m];
        for x1 in 0..m {
            let cr = &c1[x1 * m..(x1 + 1) * m];
            t[y2 * m + x1] = cr.iter().zip(row).map(|(c, g)| c - g).fold(f64::INFINITY, f64::min);
        }
    }
    let mut out = vec![f64::INFINITY; m * m];
    for x2 in 0..m {
        let cr = &c1[x2 * m..(x2 + 1) * m];
        for x1 in 0..m {
            out[x2 * m + x1] = (0..m).map(|y2| cr[y2] + t[y2 * m + x1]).fold(f64::INFINITY, f64::min);
        }
    }
    out
}

fn check_density(rho: &ScalarField, name: &str) -> Result<()> {
    if let Some(v) = rho.values().iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{name} contains {v}")));
    }
    if rho.min() < 0.0 {
        return Err(Error::InvalidArgument(format!("{name} is negative somewhere")));
    }
    let mean = rho.mean();
    if (mean - 1.0).abs() > 1e-8 {
        return Err(Error::BadMean {
            expected: 1.0,
            found: mean,
        });
    }
    Ok(())
}

/// Coarse masses and the `W₂` bound between the fine atoms and them.
fn quantize(rho: &ScalarField, m: usize) -> Result<(Vec<f64>, f64)> {
    let grid = rho.grid();
    let n = grid.n;
    let factor = n / m;
    let coarse = rho.coarsen(factor)?;
    let total: f64 = coarse.values().iter().sum();
    let mass: Vec<f64> = coarse.values().iter().map(|v| v / total).collect();
    if factor == 1 {
        return Ok((mass, 0.0));
    }
    let cg = coarse.grid();
    let shift = match grid.domain {
        Domain::Torus => factor / 2,
        Domain::Square => 0,
    };
    let fine_total: f64 = rho.values().iter().sum();
    let mut q = 0.0;
    for j2 in 0..n {
        let c2 = ((j2 + shift) % n) / factor;
        for j1 in 0..n {
            let c1 = ((j1 + shift) % n) / factor;
            let w = rho.at(j1, j2) / fine_total;
            q += w * dist_sq(grid.domain, grid.node(j1, j2), cg.node(c1, c2));
        }
    }
    Ok((mass, q.sqrt()))
}

/// Certified bracket for `W₂²(ρA m, ρB m)`, both densities taken as atoms
/// at the grid nodes.
pub fn sinkhorn_w2(rho_a: &ScalarField, rho_b: &ScalarField, options: &SinkhornOptions) -> Result<Bracket> {
    let grid = rho_a.grid();
    if rho_b.grid() != grid {
        return Err(Error::ResolutionMismatch {
            expected: grid.len(),
            found: rho_b.grid().len(),
        });
    }
    check_density(rho_a, "first density")?;
    check_density(rho_b, "second density")?;
    let sched = &options.schedule;
    if sched.is_empty()
        || sched.windows(2).any(|w| !(w[1] < w[0]))
        || !(sched[sched.len() - 1] >= 1e-4)
        || !sched[0].is_finite()
    {
        return Err(Error::InvalidArgument(
            "ε schedule must be strictly decreasing and end at or above 1e-4".into(),
        ));
    }
    if !(1.0..2.0).contains(&options.relaxation) {
        return Err(Error::InvalidArgument("relaxation factor must lie in [1, 2)".into()));
    }
    if options.coarse_resolution < 2 {
        return Err(Error::InvalidArgument("coarse resolution must be at least 2".into()));
    }
    let n = grid.n;
    if rho_a.values() == rho_b.values() {
        // the identity coupling is optimal
        return Ok(Bracket {
            lower: 0.0,
            upper: 0.0,
            coarse_lower: 0.0,
            coarse_upper: 0.0,
            quantization: 0.0,
            resolution: n,
            eps_final: 0.0,
            marginal_error: 0.0,
            iterations: 0,
        });
    }
    let factor = (1..=n).find(|f| n % f == 0 && n / f <= options.coarse_resolution).unwrap_or(n);
    let m = n / factor;
    let domain = grid.domain;
    let c1 = axis_cost(domain, m);
    let (a, qa) = quantize(rho_a, m)?;
    let (b, qb) = quantize(rho_b, m)?;
    let full = solve_coarse(&a, &b, m, &c1, domain, options)?;
    let coarse_lower = dual_lower(&full.g, &a, &b, m, &c1);
    let coarse_upper = rounded_cost(&full, &a, &b, m, &c1);
    let mut iterations = full.iterations;
    let q = qa + qb;

    // total variation: move only the excess mass
    let tv = 0.5 * rho_a.values().iter().zip(rho_b.values()).map(|(x, y)| (x - y).abs()).sum::<f64>() / grid.len() as f64;
    let mut upper = (coarse_upper.sqrt() + q).powi(2).min(domain.diameter().powi(2) * tv);
    let mut lower = coarse_lower;
    if factor > 1 {
        lower = fine_lower(&full.g, rho_a, rho_b, factor);
        if tv < 0.5 {
            let excess = |x: &ScalarField, y: &ScalarField| {
                ScalarField::new(grid, x.values().iter().zip(y.values()).map(|(u, v)| (u - u.min(*v)) / tv).collect())
            };
            let (ra, rb) = (excess(rho_a, rho_b)?, excess(rho_b, rho_a)?);
            let (ea, qea) = quantize(&ra, m)?;
            let (eb, qeb) = quantize(&rb, m)?;
            let res = solve_coarse(&ea, &eb, m, &c1, domain, options)?;
            iterations += res.iterations;
            let cu = rounded_cost(&res, &ea, &eb, m, &c1);
            upper = upper.min(tv * (cu.sqrt() + qea + qeb).powi(2));
        }
    }
    Ok(Bracket {
        lower: lower.min(upper),
        upper,
        coarse_lower,
        coarse_upper,
        quantization: q,
        resolution: m,
        eps_final: full.eps,
        marginal_error: full.err,
        iterations,
    })
}

/// Sinkhorn state at the end of the ε schedule.
struct CoarseSolve {
    f: Vec<f64>,
    g: Vec<f64>,
    eps: f64,
    kernel: Kernel,
    err: f64,
    iterations: usize,
}

fn solve_coarse(
    a: &[f64],
    b: &[f64],
    m: usize,
    c1: &[f64],
    domain: Domain,
    options: &SinkhornOptions,
) -> Result<CoarseSolve> {
    let la: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let lb: Vec<f64> = b.iter().map(|v| v.ln()).collect();
    let diam_sq = domain.diameter().powi(2);
    let sched = &options.schedule;
    let mut f = vec![0.0; m * m];
    let mut g = vec![0.0; m * m];
    let mut iterations = 0;
    let mut err = f64::INFINITY;
    let mut eps = 0.0;
    let mut kernel = Kernel::new(Vec::new());
    for (stage, &rel) in sched.iter().enumerate() {
        eps = rel * diam_sq;
        kernel = Kernel::new(c1.iter().map(|c| -c / eps).collect());
        for it in 0..options.max_iterations {
            let d: Vec<f64> = g.iter().zip(&lb).map(|(g, l)| g / eps + l).collect();
            let fresh = apply(&d, m, &kernel, &kernel);
            relax(&mut f, &fresh, eps, options.relaxation);
            let d: Vec<f64> = f.iter().zip(&la).map(|(f, l)| f / eps + l).collect();
            let fresh = apply(&d, m, &kernel, &kernel);
            relax(&mut g, &fresh, eps, options.relaxation);
            iterations += 1;
            if it % 10 == 9 || it + 1 == options.max_iterations {
                err = marginal_violation(&f, &g, &la, &lb, a, b, eps, m, &kernel);
                if err <= options.tol {
                    break;
                }
            }
        }
        if stage + 1 == sched.len() && err > FAIL_MARGINAL {
            return Err(Error::NotConverged {
                iterations,
                residual: err,
            });
        }
    }
    Ok(CoarseSolve {
        f,
        g,
        eps,
        kernel,
        err,
        iterations,
    })
}

/// Dual value of `(g^c, g^cc)`.
fn dual_lower(g: &[f64], a: &[f64], b: &[f64], m: usize, c1: &[f64]) -> f64 {
    let ft = c_transform(g, m, c1);
    let gt = c_transform(&ft, m, c1);
    (ft.iter().zip(a).map(|(f, a)| f * a).sum::<f64>() + gt.iter().zip(b).map(|(g, b)| g * b).sum::<f64>()).max(0.0)
}

/// The coarse potential, extended constant over each block, doubly
/// c-transformed on the fine grid and evaluated against the fine masses.
fn fine_lower(g: &[f64], rho_a: &ScalarField, rho_b: &ScalarField, factor: usize) -> f64 {
    let grid = rho_a.grid();
    let n = grid.n;
    let m = n / factor;
    let shift = match grid.domain {
        Domain::Torus => factor / 2,
        Domain::Square => 0,
    };
    let mut gf = vec![0.0; n * n];
    for j2 in 0..n {
        let c2 = ((j2 + shift) % n) / factor;
        for j1 in 0..n {
            let c1 = ((j1 + shift) % n) / factor;
            gf[j2 * n + j1] = g[c2 * m + c1];
        }
    }
    let norm = |rho: &ScalarField| {
        let s: f64 = rho.values().iter().sum();
        rho.values().iter().map(|v| v / s).collect::<Vec<f64>>()
    };
    dual_lower(&gf, &norm(rho_a), &norm(rho_b), n, &axis_cost(grid.domain, n))
}

/// Cost of the final plan rounded onto the exact marginals `(a, b)`.
fn rounded_cost(cs: &CoarseSolve, a: &[f64], b: &[f64], m: usize, c1: &[f64]) -> f64 {
    let (eps, kernel) = (cs.eps, &cs.kernel);
    let u0: Vec<f64> = cs.f.iter().zip(a).map(|(f, a)| f / eps + a.ln()).collect();
    let v0: Vec<f64> = cs.g.iter().zip(b).map(|(g, b)| g / eps + b.ln()).collect();
    let rows = apply(&v0, m, kernel, kernel);
    let u: Vec<f64> = u0
        .iter()
        .zip(&rows)
        .zip(a)
        .map(|((u, r), a)| u + (a.ln() - (u + r)).min(0.0))
        .collect();
    let cols = apply(&u, m, kernel, kernel);
    let v: Vec<f64> = v0
        .iter()
        .zip(&cols)
        .zip(b)
        .map(|((v, c), b)| v + (b.ln() - (v + c)).min(0.0))
        .collect();
    let rows = apply(&v, m, kernel, kernel);
    let cols = apply(&u, m, kernel, kernel);
    let err_r: Vec<f64> = a.iter().zip(&u).zip(&rows).map(|((a, u), r)| (a - (u + r).exp()).max(0.0)).collect();
    let err_c: Vec<f64> = b.iter().zip(&v).zip(&cols).map(|((b, v), c)| (b - (v + c).exp()).max(0.0)).collect();
    let weighted = Kernel::new(kernel.log.iter().zip(c1).map(|(k, c)| k + c.ln()).collect());
    let along1 = apply(&v, m, &weighted, kernel);
    let along2 = apply(&v, m, kernel, &weighted);
    let mut cost: f64 = u
        .iter()
        .zip(along1.iter().zip(&along2))
        .map(|(u, (p, q))| (u + p).exp() + (u + q).exp())
        .sum();
    let delta = err_r.iter().sum::<f64>().max(err_c.iter().sum());
    if delta > 0.0 {
        // rank-one correction err_r err_cᵀ / δ, whose cost splits by axis
        let mut r1 = vec![0.0; m];
        let mut r2 = vec![0.0; m];
        let mut s1 = vec![0.0; m];
        let mut s2 = vec![0.0; m];
        for i2 in 0..m {
            for i1 in 0..m {
                r1[i1] += err_r[i2 * m + i1];
                r2[i2] += err_r[i2 * m + i1];
                s1[i1] += err_c[i2 * m + i1];
                s2[i2] += err_c[i2 * m + i1];
            }
        }
        let mut extra = 0.0;
        for x in 0..m {
            for y in 0..m {
                extra += (r1[x] * s1[y] + r2[x] * s2[y]) * c1[x * m + y];
            }
        }
        cost += extra / delta;
    }
    cost
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat_poisson::{heat_evolve, PointCloud};
    use crate::geometry::Point;
    use crate::transport::discrete_ot_exact;
    use std::f64::consts::PI;

    fn bump(g: Grid, c: Point, sigma: f64) -> ScalarField {
        let raw = ScalarField::from_fn(g, |p| (-dist_sq(g.domain, p, c) / (2.0 * sigma * sigma)).exp());
        let mean = raw.mean();
        raw.scaled(1.0 / mean)
    }

    #[test]
    fn identical_densities_bracket_zero() {
        let g = Grid::new(Domain::Torus, 32);
        let rho = ScalarField::from_fn(g, |p| 1.0 + 0.5 * (2.0 * PI * p.x1).cos() * (2.0 * PI * p.x2).sin());
        assert_eq!(sinkhorn_w2(&rho, &rho, &SinkhornOptions::default()).unwrap().upper, 0.0);
        // a copy perturbed below the solver's resolution still brackets 0
        let near = rho.zip_with(&rho, |a, _| a * (1.0 + 1e-15)).unwrap();
        let near = near.scaled(1.0 / near.mean());
        let br = sinkhorn_w2(&rho, &near, &SinkhornOptions::default()).unwrap();
        assert!(br.contains(0.0));
        assert_eq!(br.quantization, 0.0);
        assert!(br.upper <= 2.0 * br.eps_final * ((32 * 32) as f64).ln());
    }

    #[test]
    fn translated_bump_brackets_squared_shift() {
        // shift of five cells, so the atoms are exact translates
        let g = Grid::new(Domain::Torus, 50);
        let a = bump(g, Point::new(0.3, 0.5), 0.05);
        let b = bump(g, Point::new(0.4, 0.5), 0.05);
        let br = sinkhorn_w2(&a, &b, &SinkhornOptions::default()).unwrap();
        assert!(br.contains(0.01), "{br:?}");
        assert!(br.width() < 2e-3, "{br:?}");
    }

    #[test]
    fn heat_atom_is_closer_than_the_atom() {
        let g = Grid::new(Domain::Torus, 64);
        let cloud = PointCloud::from_points(Domain::Torus, vec![Point::new(0.25, 0.75)]).unwrap();
        let rho = heat_evolve(&cloud, 0.005, g).unwrap();
        let br = sinkhorn_w2(&ScalarField::constant(g, 1.0), &rho, &SinkhornOptions::default()).unwrap();
        // uniform to the atom itself costs ∫ d² dm = 1/6, and the heat atom
        // lies within √(4t) of the atom
        let t: f64 = 0.005;
        assert!(br.upper <= 1.0 / 6.0);
        assert!(br.lower >= ((1.0f64 / 6.0).sqrt() - (4.0 * t).sqrt()).powi(2), "{br:?}");
    }

    #[test]
    fn coarse_bracket_contains_exact_discrete_cost() {
        let g = Grid::new(Domain::Square, 16);
        let a = ScalarField::from_fn(g, |p| 0.5 + p.x1);
        let b = bump(g, Point::new(0.6, 0.4), 0.2);
        let br = sinkhorn_w2(&a, &b, &SinkhornOptions::default()).unwrap();
        let atoms = |rho: &ScalarField| -> Vec<(Point, f64)> {
            let s: f64 = rho.values().iter().sum();
            g.nodes().zip(rho.values()).map(|(p, v)| (p, v / s)).collect()
        };
        let exact = discrete_ot_exact(Domain::Square, &atoms(&a), &atoms(&b)).unwrap();
        assert!(br.contains(exact.cost), "{br:?} vs {}", exact.cost);
        assert!(br.width() < 1e-3 * exact.cost.max(1e-3) + 2.0 * br.eps_final, "{br:?}");
    }

    #[test]
    fn coarsened_bracket_still_contains() {
        let g = Grid::new(Domain::Torus, 120);
        let a = bump(g, Point::new(0.3, 0.5), 0.08);
        let b = bump(g, Point::new(0.4, 0.5), 0.08);
        let opts = SinkhornOptions {
            coarse_resolution: 30,
            ..SinkhornOptions::default()
        };
        let br = sinkhorn_w2(&a, &b, &opts).unwrap();
        assert_eq!(br.resolution, 30);
        assert!(br.quantization > 0.0);
        assert!(br.contains(0.01), "{br:?}");
        assert!(br.lower > 0.009, "{br:?}");
    }

    #[test]
    fn nearly_identical_densities_have_a_tiny_bracket() {
        let g = Grid::new(Domain::Torus, 128);
        let a = ScalarField::from_fn(g, |p| 1.0 + 0.3 * (2.0 * PI * p.x1).sin());
        let b = ScalarField::from_fn(g, |p| 1.0 + 0.3 * (2.0 * PI * (p.x1 - 1e-4)).sin());
        let br = sinkhorn_w2(&a, &b, &SinkhornOptions::default()).unwrap();
        // the translation by 1e-4 couples them at cost 1e-8
        assert!(br.lower <= 1e-8, "{br:?}");
        assert!(br.upper < 1e-4, "{br:?}");
    }

    #[test]
    fn rejects_bad_input() {
        let g = Grid::new(Domain::Torus, 8);
        let one = ScalarField::constant(g, 1.0);
        let two = ScalarField::constant(g, 2.0);
        assert!(matches!(sinkhorn_w2(&one, &two, &SinkhornOptions::default()), Err(Error::BadMean { .. })));
        let opts = SinkhornOptions {
            schedule: vec![1e-2, 1e-5],
            ..SinkhornOptions::default()
        };
        assert!(sinkhorn_w2(&one, &one, &opts).is_err());
        let other = ScalarField::constant(Grid::new(Domain::Torus, 16), 1.0);
        assert!(sinkhorn_w2(&one, &other, &SinkhornOptions::default()).is_err());
    }
}

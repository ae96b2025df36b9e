//! The Hopf–Lax semigroup
//!
//! ```text
//! Q_t f(y) = min_x  d²(x, y) / (2t) + f(x)
//! ```
//!
//! computed two ways: by direct minimization over grid nodes, and by the
//! method of characteristics (each node `x` travels to `x + t∇f(x)` carrying
//! the value `f(x) + t/2 |∇f(x)|²`). At `t = 1` the semigroup is the
//! c-conjugation for the cost `d²/2`.

use crate::fields::{self, ScalarField, VectorField};
use crate::geometry::{dist_sq, exp_map, log_map, Domain, Grid, Point, TangentVector};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Admissibility constant: characteristics are used only while
/// `t·(‖∇f‖∞ + ‖∇²f‖∞) ≤ C_M`. Half of the injectivity threshold measured by
/// [`calibrate_admissibility`] on [`test_family`].
pub const C_M: f64 = 0.54;

/// Constant in the strict-convexity estimate, frozen after calibration.
pub const C_CAL: f64 = 8.0;

/// Number of forward images used by the moving-least-squares resampler.
const MLS_NEIGHBOURS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    GridMin,
    Characteristics,
}

#[derive(Clone, Debug)]
pub struct HopfLaxResult {
    pub q: ScalarField,
    /// Minimizer `x_t(y) = φ_t⁻¹(y)` for every grid node `y`.
    pub argmin: Vec<Point>,
    /// `∇Q_t f(y) = ∇f(φ_t⁻¹(y))`; only produced by characteristics.
    pub grad: Option<VectorField>,
    pub method: Method,
}

/// Sup norms of the datum that control admissibility.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatumNorms {
    pub grad_sup: f64,
    pub hess_sup: f64,
}

impl DatumNorms {
    pub fn of(f: &ScalarField) -> Self {
        DatumNorms {
            grad_sup: fields::gradient(f).sup_norm(),
            hess_sup: fields::hessian_sup_norm(f),
        }
    }

    pub fn product(&self, t: f64) -> f64 {
        t * (self.grad_sup + self.hess_sup)
    }

    pub fn admissible(&self, t: f64) -> bool {
        self.product(t) <= C_M
    }
}

// --- grid minimization -------------------------------------------------------

/// Largest difference quotient between neighbouring nodes.
fn discrete_lipschitz(f: &ScalarField) -> f64 {
    let g = f.grid();
    let n = g.n;
    let v = f.values();
    let mut lip: f64 = 0.0;
    for i2 in 0..n {
        for i1 in 0..n {
            let here = v[g.index(i1, i2)];
            if i1 + 1 < n || g.domain == Domain::Torus {
                lip = lip.max((v[g.index((i1 + 1) % n, i2)] - here).abs());
            }
            if i2 + 1 < n || g.domain == Domain::Torus {
                lip = lip.max((v[g.index(i1, (i2 + 1) % n)] - here).abs());
            }
        }
    }
    lip / g.h()
}

/// Search radius for the grid minimization: the minimizer lies within
/// `2t·Lip(f)` of `y`, plus a buffer of grid cells.
pub fn search_radius(f: &ScalarField, t: f64) -> f64 {
    let g = f.grid();
    let lip = discrete_lipschitz(f).max(fields::gradient(f).sup_norm());
    (2.0 * t * lip + 8.0 * g.h()).min(g.domain.diameter())
}

/// One-dimensional windowed inf-convolution along `axis`. Returns the minimum
/// and the source index of the minimizer for every node.
fn min_along_axis(values: &[f64], grid: Grid, axis: usize, t: f64, reach: usize) -> (Vec<f64>, Vec<u32>) {
    let n = grid.n;
    let h = grid.h();
    let (lo, hi): (isize, isize) = match grid.domain {
        Domain::Torus if 2 * reach + 1 >= n => (-((n / 2) as isize), (n - 1 - n / 2) as isize),
        _ => (-(reach as isize), reach as isize),
    };
    let costs: Vec<f64> = (lo..=hi).map(|o| (o as f64 * h).powi(2) / (2.0 * t)).collect();
    let mut out = vec![f64::INFINITY; n * n];
    let mut arg = vec![0u32; n * n];
    let mut line = vec![0.0; n];
    for other in 0..n {
        for (j, slot) in line.iter_mut().enumerate() {
            *slot = values[if axis == 0 { grid.index(j, other) } else { grid.index(other, j) }];
        }
        for j in 0..n {
            let mut best = f64::INFINITY;
            let mut best_i = j;
            for (c, o) in costs.iter().zip(lo..=hi) {
                let i = j as isize + o;
                let i = match grid.domain {
                    Domain::Torus => i.rem_euclid(n as isize) as usize,
                    Domain::Square => {
                        if i < 0 || i >= n as isize {
                            continue;
                        }
                        i as usize
                    }
                };
                let v = c + line[i];
                if v < best {
                    best = v;
                    best_i = i;
                }
            }
            let idx = if axis == 0 { grid.index(j, other) } else { grid.index(other, j) };
            out[idx] = best;
            arg[idx] = best_i as u32;
        }
    }
    (out, arg)
}

/// `Q_t f` at every node by exact minimization over grid nodes within the
/// search radius. The squared distance splits across axes, so the
/// two-dimensional minimum is computed as two one-dimensional passes.
pub fn hopflax_grid(f: &ScalarField, t: f64) -> Result<HopfLaxResult> {
    hopflax_grid_with_radius(f, t, search_radius(f, t))
}

pub fn hopflax_grid_with_radius(f: &ScalarField, t: f64, radius: f64) -> Result<HopfLaxResult> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("Hopf–Lax time must be positive, got {t}")));
    }
    let grid = f.grid();
    let reach = (radius / grid.h()).ceil() as usize;
    let (m1, a1) = min_along_axis(f.values(), grid, 0, t, reach);
    let (q, a2) = min_along_axis(&m1, grid, 1, t, reach);
    let argmin = (0..grid.len())
        .map(|idx| {
            let j1 = idx % grid.n;
            let i2 = a2[idx] as usize;
            let i1 = a1[grid.index(j1, i2)] as usize;
            grid.node(i1, i2)
        })
        .collect();
    Ok(HopfLaxResult {
        q: ScalarField::new(grid, q)?,
        argmin,
        grad: None,
        method: Method::GridMin,
    })
}

// --- characteristics ---------------------------------------------------------

/// Forward images bucketed by grid cell.
struct Buckets {
    grid: Grid,
    start: Vec<usize>,
    items: Vec<usize>,
}

impl Buckets {
    fn new(grid: Grid, pts: &[Point]) -> Self {
        let mut count = vec![0usize; grid.len() + 1];
        let cells: Vec<usize> = pts.iter().map(|&p| grid.cell_of(p)).collect();
        for &c in &cells {
            count[c + 1] += 1;
        }
        for i in 0..grid.len() {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut items = vec![0; pts.len()];
        for (i, &c) in cells.iter().enumerate() {
            items[fill[c]] = i;
            fill[c] += 1;
        }
        Buckets { grid, start: count, items }
    }

    /// Items in the `(2r+1)²` block of cells around `(c1, c2)`.
    fn around(&self, c1: usize, c2: usize, r: usize, out: &mut Vec<usize>) {
        let n = self.grid.n as isize;
        out.clear();
        for d2 in -(r as isize)..=r as isize {
            for d1 in -(r as isize)..=r as isize {
                let (j1, j2) = (c1 as isize + d1, c2 as isize + d2);
                let (j1, j2) = match self.grid.domain {
                    Domain::Torus => (j1.rem_euclid(n), j2.rem_euclid(n)),
                    Domain::Square => {
                        if j1 < 0 || j2 < 0 || j1 >= n || j2 >= n {
                            continue;
                        }
                        (j1, j2)
                    }
                };
                let c = self.grid.index(j1 as usize, j2 as usize);
                out.extend_from_slice(&self.items[self.start[c]..self.start[c + 1]]);
            }
        }
    }
}

/// Weighted linear least-squares fit `D(z) ≈ a + B (z - y)` of a tangent
/// field known at scattered points; returns `a`.
fn mls_linear(offsets: &[TangentVector], data: &[TangentVector], h: f64) -> TangentVector {
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [[0.0f64; 3]; 2];
    for (o, d) in offsets.iter().zip(data) {
        let w = 1.0 / (o.norm_sq() + h * h);
        let row = [1.0, o.v1 / h, o.v2 / h];
        for a in 0..3 {
            for b in 0..3 {
                ata[a][b] += w * row[a] * row[b];
            }
            atb[0][a] += w * row[a] * d.v1;
            atb[1][a] += w * row[a] * d.v2;
        }
    }
    let solve = |rhs: [f64; 3]| -> Option<f64> {
        // Cramer's rule for the constant coefficient
        let det3 = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d = det3(ata);
        if d.abs() < 1e-14 * ata[0][0].powi(3) {
            return None;
        }
        let mut m = ata;
        for r in 0..3 {
            m[r][0] = rhs[r];
        }
        Some(det3(m) / d)
    };
    match (solve(atb[0]), solve(atb[1])) {
        (Some(a1), Some(a2)) => TangentVector::new(a1, a2),
        _ => {
            // degenerate stencil: weighted average
            let wsum: f64 = offsets.iter().map(|o| 1.0 / (o.norm_sq() + h * h)).sum();
            let (mut s1, mut s2) = (0.0, 0.0);
            for (o, d) in offsets.iter().zip(data) {
                let w = 1.0 / (o.norm_sq() + h * h);
                s1 += w * d.v1;
                s2 += w * d.v2;
            }
            TangentVector::new(s1 / wsum, s2 / wsum)
        }
    }
}

/// Forward characteristics of `f` at time `t`: images `x + t∇f(x)` of every
/// node and the transported values `f(x) + t/2 |∇f(x)|²`.
pub fn forward_characteristics(f: &ScalarField, grad: &VectorField, t: f64) -> (Vec<Point>, Vec<f64>) {
    let grid = f.grid();
    let images = (0..grid.len())
        .map(|i| exp_map(grid.domain, grid.node_at(i), grad.get(i).scale(t)))
        .collect();
    let values = (0..grid.len())
        .map(|i| f.values()[i] + 0.5 * t * grad.get(i).norm_sq())
        .collect();
    (images, values)
}

/// `Q_t f` by the method of characteristics. The preimage `φ_t⁻¹(y)` of each
/// node is first estimated by moving least squares over the 8 nearest forward
/// images, then refined by Newton's method on `x − y + t∇f(x) = 0`, whose
/// Jacobian `I + t∇²f` stays invertible for admissible data.
pub fn hopflax_characteristics(f: &ScalarField, t: f64) -> Result<HopfLaxResult> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("Hopf–Lax time must be positive, got {t}")));
    }
    let norms = DatumNorms::of(f);
    let product = norms.product(t);
    if product > C_M {
        return Err(Error::TimeTooLarge { product, limit: C_M });
    }
    let grid = f.grid();
    let dom = grid.domain;
    let h = grid.h();
    let grad = fields::gradient(f);
    let (images, _) = forward_characteristics(f, &grad, t);
    let buckets = Buckets::new(grid, &images);

    let [h11, h12, h22] = fields::hessian(f);
    let hess = [
        ScalarField::new(grid, h11)?,
        ScalarField::new(grid, h12)?,
        ScalarField::new(grid, h22)?,
    ];

    let solve_node = |idx: usize| -> (f64, Point, TangentVector) {
        let y = grid.node_at(idx);
        let (c1, c2) = (idx % grid.n, idx / grid.n);
        let mut cand = Vec::new();
        let mut r = 1;
        loop {
            buckets.around(c1, c2, r, &mut cand);
            if cand.len() >= MLS_NEIGHBOURS || r >= grid.n / 2 {
                break;
            }
            r += 1;
        }
        let mut ranked: Vec<(f64, usize)> = cand.iter().map(|&i| (dist_sq(dom, y, images[i]), i)).collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (offsets, data): (Vec<TangentVector>, Vec<TangentVector>) = ranked
            .iter()
            .take(MLS_NEIGHBOURS)
            .map(|&(_, i)| (log_map(dom, y, images[i]), grad.get(i).scale(-t)))
            .unzip();
        let mut x = exp_map(dom, y, mls_linear(&offsets, &data, h));
        // Newton refinement of x − y + t∇f(x) = 0
        for _ in 0..50 {
            let g = grad.sample(x);
            let res = log_map(dom, y, x) + g.scale(t);
            if res.norm_sq() < 1e-32 {
                break;
            }
            let (a, b, c) = (
                1.0 + t * hess[0].sample(x),
                t * hess[1].sample(x),
                1.0 + t * hess[2].sample(x),
            );
            let det = a * c - b * b;
            let step = TangentVector::new(-(c * res.v1 - b * res.v2) / det, -(a * res.v2 - b * res.v1) / det);
            x = exp_map(dom, x, step);
        }
        let gx = grad.sample(x);
        (dist_sq(dom, x, y) / (2.0 * t) + f.sample(x), x, gx)
    };
    let solved: Vec<(f64, Point, TangentVector)> = (0..grid.len()).into_par_iter().map(solve_node).collect();
    let q = solved.iter().map(|s| s.0).collect();
    let argmin = solved.iter().map(|s| s.1).collect();
    let g1 = solved.iter().map(|s| s.2.v1).collect();
    let g2 = solved.iter().map(|s| s.2.v2).collect();
    Ok(HopfLaxResult {
        q: ScalarField::new(grid, q)?,
        argmin,
        grad: Some(VectorField::new(grid, g1, g2)?),
        method: Method::Characteristics,
    })
}

// --- diagnostics -------------------------------------------------------------

/// Sup norm over the grid of `∂_t Q + c |∇Q|²`, with the time derivative by
/// central differences and `∇Q` the transported gradient.
pub fn hj_residual_with(f: &ScalarField, t: f64, dt: f64, c: f64) -> Result<f64> {
    if !(t - dt > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("need 0 < dt < t, got t = {t}, dt = {dt}")));
    }
    let plus = hopflax_characteristics(f, t + dt)?;
    let minus = hopflax_characteristics(f, t - dt)?;
    let mid = hopflax_characteristics(f, t)?;
    let grad = mid.grad.expect("characteristics produce gradients");
    Ok(plus
        .q
        .values()
        .iter()
        .zip(minus.q.values())
        .zip(grad.iter())
        .map(|((p, m), g)| ((p - m) / (2.0 * dt) + c * g.norm_sq()).abs())
        .fold(0.0, f64::max))
}

/// Residual of `∂_t Q_t f + ½|∇Q_t f|² = 0`.
pub fn hj_residual(f: &ScalarField, t: f64, dt: f64) -> Result<f64> {
    hj_residual_with(f, t, dt, 0.5)
}

/// Largest violation over node pairs `(y, y′)` of
///
/// ```text
/// d²(y,y′)/t ≤ C [ Q(y) − Q(y′) + (d²(x,y′) − d²(x,y)) / (2t) ],   x = φ_t⁻¹(y).
/// ```
///
/// Nonpositive when the estimate holds with constant `c`.
pub fn strict_convexity_gap(res: &HopfLaxResult, t: f64, pairs: &[(usize, usize)], c: f64) -> f64 {
    let grid = res.q.grid();
    let dom = grid.domain;
    let q = res.q.values();
    pairs
        .iter()
        .map(|&(a, b)| {
            let (y, yp) = (grid.node_at(a), grid.node_at(b));
            let x = res.argmin[a];
            let rhs = q[a] - q[b] + (dist_sq(dom, x, yp) - dist_sq(dom, x, y)) / (2.0 * t);
            dist_sq(dom, y, yp) / t - c * rhs
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Uniformly drawn node pairs for [`strict_convexity_gap`].
pub fn random_pairs(grid: Grid, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (rng.gen_range(0..grid.len()), rng.gen_range(0..grid.len())))
        .collect()
}

/// `‖∇(Q_t f − f)‖∞` from the spectral gradient of the difference.
pub fn lip_defect(f: &ScalarField, t: f64) -> Result<f64> {
    let q = hopflax_characteristics(f, t)?.q;
    let diff = q.zip_with(f, |a, b| a - b)?;
    Ok(fields::gradient(&diff).sup_norm())
}

/// The bound `t ‖∇f‖∞ ‖∇²f‖∞` on [`lip_defect`].
pub fn lip_bound(f: &ScalarField, t: f64) -> f64 {
    let n = DatumNorms::of(f);
    t * n.grad_sup * n.hess_sup
}

/// `Q_1 f`, by grid minimization.
pub fn c_transform(f: &ScalarField) -> Result<ScalarField> {
    Ok(hopflax_grid(f, 1.0)?.q)
}

/// c-conjugate for the cost `d²/2`: `f^c(y) = min_x d²(x,y)/2 − f(x) = Q_1(−f)(y)`.
pub fn c_conjugate(f: &ScalarField) -> Result<ScalarField> {
    c_transform(&f.scaled(-1.0))
}

// --- calibration -------------------------------------------------------------

/// Smallest value of `1 + t λ_min(∇²f)` over the grid; the forward map
/// `x ↦ x + t∇f(x)` is a local diffeomorphism while it stays positive.
pub fn min_jacobian(f: &ScalarField, t: f64) -> f64 {
    let [h11, h12, h22] = fields::hessian(f);
    h11.iter()
        .zip(&h12)
        .zip(&h22)
        .map(|((a, b), c)| {
            let (a, b, c) = (1.0 + t * a, t * b, 1.0 + t * c);
            // determinant and smallest eigenvalue of the symmetric Jacobian
            let half_tr = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            half_tr - rad
        })
        .fold(f64::INFINITY, f64::min)
}

/// Largest `t·(‖∇f‖∞ + ‖∇²f‖∞)` for which forward characteristics stay
/// injective on the grid, minimized over the given data. Found by bisection
/// on `t`.
pub fn calibrate_admissibility(data: &[ScalarField]) -> f64 {
    data.iter()
        .map(|f| {
            let norms = DatumNorms::of(f);
            if norms.hess_sup == 0.0 {
                return f64::INFINITY;
            }
            let (mut lo, mut hi) = (0.0, 4.0 / norms.hess_sup);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if min_jacobian(f, mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            norms.product(lo)
        })
        .fold(f64::INFINITY, f64::min)
}

// --- pinned test family ------------------------------------------------------

/// Amplitudes of the pinned test family.
pub const TEST_EPSILONS: [f64; 3] = [0.003, 0.01, 0.03];

/// Shapes of the pinned test family, each with unit-order amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestShape {
    Cosine,
    CosineSine,
    SmoothRandom,
}

impl TestShape {
    pub const ALL: [TestShape; 3] = [TestShape::Cosine, TestShape::CosineSine, TestShape::SmoothRandom];

    pub fn name(self) -> &'static str {
        match self {
            TestShape::Cosine => "cos",
            TestShape::CosineSine => "cos+sin",
            TestShape::SmoothRandom => "smooth-random",
        }
    }

    /// Analytic value at `p`.
    pub fn eval(self, p: Point) -> f64 {
        match self {
            TestShape::Cosine => (2.0 * PI * p.x1).cos(),
            TestShape::CosineSine => (2.0 * PI * p.x1).cos() + (2.0 * PI * p.x2).sin(),
            TestShape::SmoothRandom => smooth_random(p),
        }
    }
}

/// Fixed band-limited field: modes `|k|∞ ≤ 3` with pinned pseudo-random
/// coefficients decaying like `e^{-|k|²/4}`, scaled to unit sup norm.
fn smooth_random(p: Point) -> f64 {
    use std::sync::OnceLock;
    static MODES: OnceLock<(Vec<(f64, f64, f64, f64)>, f64)> = OnceLock::new();
    let (modes, scale) = MODES.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f1e1d);
        let mut modes = Vec::new();
        for k1 in -3i32..=3 {
            for k2 in 0i32..=3 {
                if k2 == 0 && k1 <= 0 {
                    continue;
                }
                let decay = (-((k1 * k1 + k2 * k2) as f64) / 4.0).exp();
                modes.push((k1 as f64, k2 as f64, decay * rng.gen_range(-1.0..1.0), decay * rng.gen_range(-1.0..1.0)));
            }
        }
        let raw = |p: Point| -> f64 {
            modes
                .iter()
                .map(|&(k1, k2, a, b)| {
                    let ph = 2.0 * PI * (k1 * p.x1 + k2 * p.x2);
                    a * ph.cos() + b * ph.sin()
                })
                .sum()
        };
        let m = 256;
        let sup = (0..m * m)
            .map(|i| raw(Point::new((i % m) as f64 / m as f64, (i / m) as f64 / m as f64)).abs())
            .fold(0.0, f64::max);
        (modes, 1.0 / sup)
    });
    scale
        * modes
            .iter()
            .map(|&(k1, k2, a, b)| {
                let ph = 2.0 * PI * (k1 * p.x1 + k2 * p.x2);
                a * ph.cos() + b * ph.sin()
            })
            .sum::<f64>()
}

/// One member of the pinned test family.
#[derive(Clone, Debug)]
pub struct TestDatum {
    pub shape: TestShape,
    pub eps: f64,
    pub field: ScalarField,
}

impl TestDatum {
    pub fn label(&self) -> String {
        format!("{}·{}", self.eps, self.shape.name())
    }
}

/// The nine pinned data `ε·shape` sampled on a torus grid.
pub fn test_family(n: usize) -> Vec<TestDatum> {
    let grid = Grid::new(Domain::Torus, n);
    let mut out = Vec::new();
    for shape in TestShape::ALL {
        for eps in TEST_EPSILONS {
            out.push(TestDatum {
                shape,
                eps,
                field: ScalarField::from_fn(grid, |p| eps * shape.eval(p)),
            });
        }
    }
    out
}

//! Flat two-dimensional domains of unit area: the torus `R²/Z²` and the unit
//! square `[0,1]²`, together with their distance, exponential/logarithm maps
//! and the regular grids that discretize the reference measure `m`.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// The ambient flat geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Torus,
    Square,
}

impl Domain {
    /// Diameter of the domain (side length is always 1).
    pub fn diameter(self) -> f64 {
        match self {
            Domain::Torus => std::f64::consts::FRAC_1_SQRT_2,
            Domain::Square => std::f64::consts::SQRT_2,
        }
    }

    /// Total measure of the domain. Always 1: `m` is a probability.
    pub fn volume(self) -> f64 {
        1.0
    }

    /// Brings a point into the canonical coordinate range: `[0,1)` on the
    /// torus, `[0,1]` (clamped) on the square.
    pub fn canonical(self, p: Point) -> Point {
        match self {
            Domain::Torus => Point::new(wrap_unit(p.x1), wrap_unit(p.x2)),
            Domain::Square => Point::new(p.x1.clamp(0.0, 1.0), p.x2.clamp(0.0, 1.0)),
        }
    }

    /// Coordinate difference `q - p` along one axis, taking the shortest
    /// periodic representative on the torus. The antipodal tie `±1/2`
    /// resolves to `+1/2`.
    #[inline]
    pub fn delta(self, from: f64, to: f64) -> f64 {
        let d = to - from;
        match self {
            Domain::Torus => wrap_half(d),
            Domain::Square => d,
        }
    }

    pub fn contains(self, p: Point) -> bool {
        let ok = |c: f64| match self {
            Domain::Torus => (0.0..1.0).contains(&c),
            Domain::Square => (0.0..=1.0).contains(&c),
        };
        ok(p.x1) && ok(p.x2)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Torus => write!(f, "torus"),
            Domain::Square => write!(f, "square"),
        }
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "torus" => Ok(Domain::Torus),
            "square" => Ok(Domain::Square),
            other => Err(format!("unknown domain `{other}` (expected torus or square)")),
        }
    }
}

/// Wraps a coordinate into `[0, 1)`.
#[inline]
pub fn wrap_unit(c: f64) -> f64 {
    let w = c - c.floor();
    // `c - floor(c)` can round up to exactly 1.0 for tiny negative inputs.
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Wraps a difference into `(-1/2, 1/2]`.
#[inline]
pub fn wrap_half(d: f64) -> f64 {
    let w = d - d.round();
    if w == -0.5 {
        0.5
    } else {
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x1: f64,
    pub x2: f64,
}

impl Point {
    pub const fn new(x1: f64, x2: f64) -> Self {
        Point { x1, x2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct TangentVector {
    pub v1: f64,
    pub v2: f64,
}

impl TangentVector {
    pub const ZERO: TangentVector = TangentVector { v1: 0.0, v2: 0.0 };

    pub const fn new(v1: f64, v2: f64) -> Self {
        TangentVector { v1, v2 }
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.v1 * self.v1 + self.v2 * self.v2
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    #[inline]
    pub fn scale(self, s: f64) -> Self {
        TangentVector::new(self.v1 * s, self.v2 * s)
    }

    pub fn is_finite(self) -> bool {
        self.v1.is_finite() && self.v2.is_finite()
    }
}

impl std::ops::Sub for TangentVector {
    type Output = TangentVector;
    fn sub(self, o: Self) -> Self {
        TangentVector::new(self.v1 - o.v1, self.v2 - o.v2)
    }
}

impl std::ops::Add for TangentVector {
    type Output = TangentVector;
    fn add(self, o: Self) -> Self {
        TangentVector::new(self.v1 + o.v1, self.v2 + o.v2)
    }
}

/// Squared geodesic distance.
#[inline]
pub fn dist_sq(domain: Domain, p: Point, q: Point) -> f64 {
    let d1 = domain.delta(p.x1, q.x1);
    let d2 = domain.delta(p.x2, q.x2);
    d1 * d1 + d2 * d2
}

pub fn dist(domain: Domain, p: Point, q: Point) -> f64 {
    dist_sq(domain, p, q).sqrt()
}

/// Inverse of [`exp_map`]: the shortest tangent vector at `p` pointing to `q`.
#[inline]
pub fn log_map(domain: Domain, p: Point, q: Point) -> TangentVector {
    TangentVector::new(domain.delta(p.x1, q.x1), domain.delta(p.x2, q.x2))
}

/// Result of shooting a geodesic on a domain that may have a boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landing {
    pub point: Point,
    /// Distance between the unconstrained endpoint `p + v` and the returned
    /// point. Always 0 on the torus; positive on the square when `p + v`
    /// leaves `[0,1]²`.
    pub clamp: f64,
}

/// Exponential map with boundary bookkeeping (see [`Landing`]).
pub fn exp_map_checked(domain: Domain, p: Point, v: TangentVector) -> Landing {
    let raw = Point::new(p.x1 + v.v1, p.x2 + v.v2);
    match domain {
        Domain::Torus => Landing {
            point: domain.canonical(raw),
            clamp: 0.0,
        },
        Domain::Square => {
            let point = domain.canonical(raw);
            let c1 = raw.x1 - point.x1;
            let c2 = raw.x2 - point.x2;
            Landing {
                point,
                clamp: (c1 * c1 + c2 * c2).sqrt(),
            }
        }
    }
}

/// Flat exponential map: translation by `v`, wrapped on the torus and
/// clamped to the boundary on the square.
#[inline]
pub fn exp_map(domain: Domain, p: Point, v: TangentVector) -> Point {
    exp_map_checked(domain, p, v).point
}

/// Regular `n × n` discretization of a domain. Each node carries the
/// quadrature weight `1/n²` of the reference measure.
///
/// Node positions follow the spectral basis of each domain: `i/n` on the
/// torus (Fourier nodes) and `(i + 1/2)/n` on the square (cosine nodes).
/// Values are stored row-major with the `x1` index varying fastest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub domain: Domain,
    pub n: usize,
}

impl Grid {
    pub fn new(domain: Domain, n: usize) -> Self {
        assert!(n >= 2, "grid resolution must be at least 2");
        Grid { domain, n }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Mesh width `h = 1/n`.
    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    #[inline]
    pub fn quadrature_weight(&self) -> f64 {
        let n = self.n as f64;
        1.0 / (n * n)
    }

    /// Offset of node 0 from the origin, in units of `h`.
    #[inline]
    pub fn node_offset(&self) -> f64 {
        match self.domain {
            Domain::Torus => 0.0,
            Domain::Square => 0.5,
        }
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 + self.node_offset()) / self.n as f64
    }

    #[inline]
    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i2 * self.n + i1
    }

    #[inline]
    pub fn node(&self, i1: usize, i2: usize) -> Point {
        Point::new(self.coord(i1), self.coord(i2))
    }

    #[inline]
    pub fn node_at(&self, idx: usize) -> Point {
        self.node(idx % self.n, idx / self.n)
    }

    pub fn nodes(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |k| self.node_at(k))
    }

    /// Index of the cell containing `p`.
    pub fn cell_of(&self, p: Point) -> usize {
        let p = self.domain.canonical(p);
        let n = self.n as f64;
        let locate = |c: f64| -> usize {
            let s = match self.domain {
                // torus cells are centred on the nodes i/n
                Domain::Torus => wrap_unit(c + 0.5 / n) * n,
                Domain::Square => c * n,
            };
            (s.floor() as usize).min(self.n - 1)
        };
        self.index(locate(p.x1), locate(p.x2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn distance_examples() {
        let d = dist(Domain::Torus, Point::new(0.1, 0.1), Point::new(0.9, 0.1));
        assert!((d - 0.2).abs() < 1e-15);
        let d = dist(Domain::Square, Point::new(0.0, 0.0), Point::new(1.0, 1.0));
        assert!((d - 1.414_213_56).abs() < 1e-8);
        for dom in [Domain::Torus, Domain::Square] {
            let p = Point::new(0.3, 0.7);
            assert_eq!(dist(dom, p, p), 0.0);
        }
    }

    #[test]
    fn log_exp_examples() {
        let v = log_map(Domain::Torus, Point::new(0.9, 0.5), Point::new(0.1, 0.5));
        assert!((v.v1 - 0.2).abs() < 1e-15 && v.v2 == 0.0);
        let v = log_map(Domain::Square, Point::new(0.2, 0.2), Point::new(0.5, 0.6));
        assert!((v.v1 - 0.3).abs() < 1e-15 && (v.v2 - 0.4).abs() < 1e-15);
        let p = Point::new(0.4, 0.1);
        assert_eq!(log_map(Domain::Torus, p, p), TangentVector::ZERO);

        let q = exp_map(Domain::Torus, Point::new(0.9, 0.5), TangentVector::new(0.2, 0.0));
        assert!((q.x1 - 0.1).abs() < 1e-15 && q.x2 == 0.5);
        assert_eq!(exp_map(Domain::Square, p, TangentVector::ZERO), p);
        let q = exp_map(Domain::Square, Point::new(0.5, 0.5), TangentVector::new(0.1, -0.2));
        assert!((q.x1 - 0.6).abs() < 1e-15 && (q.x2 - 0.3).abs() < 1e-15);
    }

    #[test]
    fn antipodal_tie_takes_positive_representative() {
        let v = log_map(Domain::Torus, Point::new(0.25, 0.0), Point::new(0.75, 0.5));
        assert_eq!(v, TangentVector::new(0.5, 0.5));
        let v = log_map(Domain::Torus, Point::new(0.75, 0.5), Point::new(0.25, 0.0));
        assert_eq!(v, TangentVector::new(0.5, 0.5));
    }

    #[test]
    fn square_exp_reports_clamp() {
        let l = exp_map_checked(Domain::Square, Point::new(0.9, 0.5), TangentVector::new(0.3, 0.0));
        assert_eq!(l.point, Point::new(1.0, 0.5));
        assert!((l.clamp - 0.2).abs() < 1e-12);
        let l = exp_map_checked(Domain::Torus, Point::new(0.9, 0.5), TangentVector::new(0.3, 0.0));
        assert_eq!(l.clamp, 0.0);
    }

    #[test]
    fn exp_inverts_log_on_grid_pairs() {
        for dom in [Domain::Torus, Domain::Square] {
            let g = Grid::new(dom, 32);
            for p in g.nodes() {
                for q in g.nodes() {
                    let v = log_map(dom, p, q);
                    // skip exact antipodal ties, whose inverse is not unique
                    if dom == Domain::Torus && (v.v1 == 0.5 || v.v2 == 0.5) {
                        continue;
                    }
                    let r = exp_map(dom, p, v);
                    assert!(dist(dom, r, q) < 1e-14, "{dom} {p:?} {q:?}");
                    assert!((v.norm() - dist(dom, p, q)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn triangle_inequality_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dom in [Domain::Torus, Domain::Square] {
            for _ in 0..10_000 {
                let mut p = || Point::new(rng.gen(), rng.gen());
                let (a, b, c) = (p(), p(), p());
                assert!(dist(dom, a, c) <= dist(dom, a, b) + dist(dom, b, c) + 1e-12);
            }
        }
    }

    #[test]
    fn grid_weights_sum_to_one() {
        for n in [2, 3, 64, 512] {
            let g = Grid::new(Domain::Torus, n);
            let s: f64 = (0..g.len()).map(|_| g.quadrature_weight()).sum();
            assert!((s - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn cell_of_recovers_nodes() {
        for dom in [Domain::Torus, Domain::Square] {
            let g = Grid::new(dom, 16);
            for k in 0..g.len() {
                assert_eq!(g.cell_of(g.node_at(k)), k);
            }
        }
    }

    proptest! {
        #[test]
        fn torus_distance_is_translation_invariant(
            a1 in 0.0..1.0f64, a2 in 0.0..1.0f64, b1 in 0.0..1.0f64, b2 in 0.0..1.0f64,
            s1 in -3.0..3.0f64, s2 in -3.0..3.0f64,
        ) {
            let dom = Domain::Torus;
            let (p, q) = (Point::new(a1, a2), Point::new(b1, b2));
            let ps = dom.canonical(Point::new(a1 + s1, a2 + s2));
            let qs = dom.canonical(Point::new(b1 + s1, b2 + s2));
            prop_assert!((dist(dom, ps, qs) - dist(dom, p, q)).abs() < 1e-14);
        }

        #[test]
        fn distance_bounds(a1 in 0.0..1.0f64, a2 in 0.0..1.0f64, b1 in 0.0..1.0f64, b2 in 0.0..1.0f64) {
            let (p, q) = (Point::new(a1, a2), Point::new(b1, b2));
            let v = log_map(Domain::Torus, p, q);
            prop_assert!(v.v1.abs() <= 0.5 && v.v2.abs() <= 0.5);
            prop_assert!(dist(Domain::Square, p, q) <= std::f64::consts::SQRT_2);
            prop_assert!((dist(Domain::Torus, p, q) - dist(Domain::Torus, q, p)).abs() < 1e-15);
        }
    }
}

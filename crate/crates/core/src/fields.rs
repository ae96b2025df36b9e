//! Grid-sampled scalar and vector fields and their spectral calculus.
//!
//! On the torus the spectral basis is the discrete Fourier basis
//! `e^{2πi k·x}` sampled at nodes `i/N`; on the square it is the Neumann
//! cosine basis `cos(πk₁x₁)cos(πk₂x₂)` sampled at cell centres
//! `(i+½)/N`. In both cases the Laplacian is diagonal, which is what the heat
//! and Poisson solvers rely on.

use crate::geometry::{Domain, Grid, Point, TangentVector};
use crate::{Error, Result};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// What a scalar field represents; used only for invariant checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Generic,
    /// Probability density with respect to `m` (mean 1).
    Density,
    /// Null-mean potential.
    Potential,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    kind: FieldKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    v1: Vec<f64>,
    v2: Vec<f64>,
}

/// Spectral coefficients of a scalar field.
#[derive(Clone, Debug, PartialEq)]
pub enum Spectrum {
    /// `f(x) = Σ c_k e^{2πi k·x}`, FFT ordering, `c_k = N⁻² Σ f e^{-2πi k·x}`.
    Fourier { grid: Grid, coeffs: Vec<Complex64> },
    /// `f(x) = Σ a_k cos(πk₁x₁) cos(πk₂x₂)`, `k ∈ [0, N)²`.
    Cosine { grid: Grid, coeffs: Vec<f64> },
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ResolutionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("scalar field value {v}")));
        }
        Ok(ScalarField {
            grid,
            values,
            kind: FieldKind::Generic,
        })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        ScalarField {
            grid,
            values,
            kind: FieldKind::Generic,
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.len()],
            kind: FieldKind::Generic,
        }
    }

    /// Tags the field as a density or potential after checking the mean.
    pub fn with_kind(mut self, kind: FieldKind) -> Result<Self> {
        let mean = self.mean();
        match kind {
            FieldKind::Density if (mean - 1.0).abs() > 1e-10 => {
                return Err(Error::BadMean { expected: 1.0, found: mean })
            }
            FieldKind::Potential if mean.abs() > 1e-10 => {
                return Err(Error::BadMean { expected: 0.0, found: mean })
            }
            _ => {}
        }
        self.kind = kind;
        Ok(self)
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i1: usize, i2: usize) -> f64 {
        self.values[self.grid.index(i1, i2)]
    }

    /// Integral against `m` by grid quadrature.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.quadrature_weight()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|v| v * s).collect(),
            kind: self.kind,
        }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        same_grid(self.grid, other.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect(),
            kind: FieldKind::Generic,
        })
    }

    /// `max |self - other|` over the grid.
    pub fn sup_distance(&self, other: &ScalarField) -> Result<f64> {
        same_grid(self.grid, other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Value at an arbitrary point by tensor-product cubic interpolation.
    pub fn sample(&self, p: Point) -> f64 {
        interpolate(self.grid, &self.values, p, Parity::Even, Parity::Even)
    }

    /// Mass-preserving block average onto a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<ScalarField> {
        let n = self.grid.n;
        if factor == 0 || n % factor != 0 || n / factor < 2 {
            return Err(Error::InvalidArgument(format!(
                "cannot coarsen a {n}-grid by {factor}"
            )));
        }
        let m = n / factor;
        let coarse = Grid::new(self.grid.domain, m);
        // torus cells are centred on their nodes, so blocks straddle the seam
        let shift = match self.grid.domain {
            Domain::Torus => factor / 2,
            Domain::Square => 0,
        };
        let mut out = vec![0.0; m * m];
        for j2 in 0..n {
            let c2 = ((j2 + shift) % n) / factor;
            for j1 in 0..n {
                let c1 = ((j1 + shift) % n) / factor;
                out[c2 * m + c1] += self.values[j2 * n + j1];
            }
        }
        let inv = 1.0 / (factor * factor) as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        Ok(ScalarField {
            grid: coarse,
            values: out,
            kind: self.kind,
        })
    }

    /// Flat little-endian dump: `b"SDMF"`, domain byte, `u32` resolution,
    /// then `N²` row-major `f64` values. A debugging aid, not a stable format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(9 + 8 * self.values.len());
        out.extend_from_slice(b"SDMF");
        out.push(match self.grid.domain {
            Domain::Torus => 0,
            Domain::Square => 1,
        });
        out.extend_from_slice(&(self.grid.n as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ScalarField> {
        let bad = |m: &str| Error::InvalidArgument(format!("field dump: {m}"));
        if bytes.len() < 9 || &bytes[..4] != b"SDMF" {
            return Err(bad("missing header"));
        }
        let domain = match bytes[4] {
            0 => Domain::Torus,
            1 => Domain::Square,
            _ => return Err(bad("unknown domain tag")),
        };
        let n = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let payload = &bytes[9..];
        if n < 2 || payload.len() != 8 * n * n {
            return Err(bad("payload length does not match resolution"));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        ScalarField::new(Grid::new(domain, n), values)
    }
}

impl VectorField {
    pub fn new(grid: Grid, v1: Vec<f64>, v2: Vec<f64>) -> Result<Self> {
        for comp in [&v1, &v2] {
            if comp.len() != grid.len() {
                return Err(Error::ResolutionMismatch {
                    expected: grid.len(),
                    found: comp.len(),
                });
            }
            if comp.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("vector field component".into()));
            }
        }
        Ok(VectorField { grid, v1, v2 })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> TangentVector) -> Self {
        let (v1, v2) = grid.nodes().map(|p| {
            let v = f(p);
            (v.v1, v.v2)
        }).unzip();
        VectorField { grid, v1, v2 }
    }

    pub fn zeros(grid: Grid) -> Self {
        VectorField {
            grid,
            v1: vec![0.0; grid.len()],
            v2: vec![0.0; grid.len()],
        }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn get(&self, idx: usize) -> TangentVector {
        TangentVector::new(self.v1[idx], self.v2[idx])
    }

    pub fn components(&self) -> (&[f64], &[f64]) {
        (&self.v1, &self.v2)
    }

    pub fn iter(&self) -> impl Iterator<Item = TangentVector> + '_ {
        self.v1.iter().zip(&self.v2).map(|(a, b)| TangentVector::new(*a, *b))
    }

    pub fn scaled(&self, s: f64) -> VectorField {
        VectorField {
            grid: self.grid,
            v1: self.v1.iter().map(|v| v * s).collect(),
            v2: self.v2.iter().map(|v| v * s).collect(),
        }
    }

    /// `max |v(x)|` over the grid.
    pub fn sup_norm(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// `∫ |v|² dm` by grid quadrature.
    pub fn l2_norm_sq(&self) -> f64 {
        self.iter().map(TangentVector::norm_sq).sum::<f64>() * self.grid.quadrature_weight()
    }

    /// Interpolated value. On the square the normal component of a Neumann
    /// gradient is odd across the boundary and is reflected accordingly.
    pub fn sample(&self, p: Point) -> TangentVector {
        TangentVector::new(
            interpolate(self.grid, &self.v1, p, Parity::Odd, Parity::Even),
            interpolate(self.grid, &self.v2, p, Parity::Even, Parity::Odd),
        )
    }
}

fn same_grid(a: Grid, b: Grid) -> Result<()> {
    if a != b {
        return Err(Error::ResolutionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

// --- interpolation ---------------------------------------------------------

#[derive(Clone, Copy, PartialEq, Eq)]
enum Parity {
    Even,
    Odd,
}

#[inline]
fn lagrange_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Resolves a possibly out-of-range node index; the returned sign is the
/// reflection parity on the square.
#[inline]
fn resolve(domain: Domain, n: usize, i: isize, parity: Parity) -> (usize, f64) {
    let n_i = n as isize;
    match domain {
        Domain::Torus => (i.rem_euclid(n_i) as usize, 1.0),
        Domain::Square => {
            let sign = if parity == Parity::Odd { -1.0 } else { 1.0 };
            if i < 0 {
                ((-i - 1) as usize, sign)
            } else if i >= n_i {
                ((2 * n_i - 1 - i) as usize, sign)
            } else {
                (i as usize, 1.0)
            }
        }
    }
}

fn interpolate(grid: Grid, values: &[f64], p: Point, p1: Parity, p2: Parity) -> f64 {
    let n = grid.n;
    let p = grid.domain.canonical(p);
    let s1 = p.x1 * n as f64 - grid.node_offset();
    let s2 = p.x2 * n as f64 - grid.node_offset();
    let b1 = s1.floor();
    let b2 = s2.floor();
    let w1 = lagrange_weights(s1 - b1);
    let w2 = lagrange_weights(s2 - b2);
    let (b1, b2) = (b1 as isize, b2 as isize);
    let mut acc = 0.0;
    for (a, wa) in w2.iter().enumerate() {
        let (j2, sg2) = resolve(grid.domain, n, b2 - 1 + a as isize, p2);
        let mut row = 0.0;
        for (b, wb) in w1.iter().enumerate() {
            let (j1, sg1) = resolve(grid.domain, n, b1 - 1 + b as isize, p1);
            row += wb * sg1 * values[j2 * n + j1];
        }
        acc += wa * sg2 * row;
    }
    acc
}

// --- 1-D transforms -----------------------------------------------------------

/// Cached FFT plans for one resolution.
struct Plans {
    n: usize,
    fwd_n: Arc<dyn Fft<f64>>,
    inv_n: Arc<dyn Fft<f64>>,
    fwd_2n: Arc<dyn Fft<f64>>,
    inv_2n: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Plans {
            n,
            fwd_n: planner.plan_fft_forward(n),
            inv_n: planner.plan_fft_inverse(n),
            fwd_2n: planner.plan_fft_forward(2 * n),
            inv_2n: planner.plan_fft_inverse(2 * n),
        }
    }

    /// `a_k = (c_k/N) Σ_j f_j cos(πk(j+½)/N)` with `c_0 = 1`, `c_k = 2`.
    fn dct_forward(&self, line: &mut [f64], buf: &mut Vec<Complex64>) {
        let n = self.n;
        buf.clear();
        buf.extend(line.iter().map(|&v| Complex64::new(v, 0.0)));
        buf.resize(2 * n, Complex64::new(0.0, 0.0));
        self.fwd_2n.process(buf);
        for (k, out) in line.iter_mut().enumerate() {
            let phase = Complex64::from_polar(1.0, -PI * k as f64 / (2.0 * n as f64));
            let c = if k == 0 { 1.0 } else { 2.0 };
            *out = c / n as f64 * (phase * buf[k]).re;
        }
    }

    /// `out_j = Σ_k b_k cos(πk(j+½)/N)` (or `sin`), `k ∈ [0, N)`.
    fn trig_synthesis(&self, line: &mut [f64], sine: bool, buf: &mut Vec<Complex64>) {
        let n = self.n;
        buf.clear();
        buf.extend(line.iter().enumerate().map(|(k, &b)| {
            b * Complex64::from_polar(1.0, PI * k as f64 / (2.0 * n as f64))
        }));
        buf.resize(2 * n, Complex64::new(0.0, 0.0));
        self.inv_2n.process(buf);
        for (j, out) in line.iter_mut().enumerate() {
            *out = if sine { buf[j].im } else { buf[j].re };
        }
    }
}

/// Applies `op` to every line of an `n × n` row-major array along `axis`
/// (0: along `x1`, contiguous; 1: along `x2`).
fn for_each_line<T: Copy + Default>(data: &mut [T], n: usize, axis: usize, mut op: impl FnMut(&mut [T])) {
    if axis == 0 {
        data.chunks_exact_mut(n).for_each(op);
    } else {
        let mut line = vec![T::default(); n];
        for i1 in 0..n {
            for i2 in 0..n {
                line[i2] = data[i2 * n + i1];
            }
            op(&mut line);
            for i2 in 0..n {
                data[i2 * n + i1] = line[i2];
            }
        }
    }
}

/// Signed integer frequency of FFT bin `k`.
#[inline]
pub fn signed_frequency(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

// --- spectral operations ------------------------------------------------------

/// Forward spectral transform.
pub fn transform(field: &ScalarField) -> Spectrum {
    let grid = field.grid;
    let n = grid.n;
    let plans = Plans::new(n);
    match grid.domain {
        Domain::Torus => {
            let mut data: Vec<Complex64> =
                field.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            for axis in 0..2 {
                for_each_line(&mut data, n, axis, |line| plans.fwd_n.process(line));
            }
            let scale = 1.0 / (n * n) as f64;
            data.iter_mut().for_each(|c| *c *= scale);
            Spectrum::Fourier { grid, coeffs: data }
        }
        Domain::Square => {
            let mut data = field.values.clone();
            let mut buf = Vec::with_capacity(2 * n);
            for axis in 0..2 {
                for_each_line(&mut data, n, axis, |line| plans.dct_forward(line, &mut buf));
            }
            Spectrum::Cosine { grid, coeffs: data }
        }
    }
}

/// Inverse spectral transform.
pub fn inverse_transform(spec: &Spectrum) -> ScalarField {
    let grid = spec.grid();
    let values = synthesize(spec, [Basis::Cos, Basis::Cos]);
    ScalarField {
        grid,
        values,
        kind: FieldKind::Generic,
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Basis {
    Cos,
    Sin,
}

/// Evaluates a spectrum on the grid. For Fourier spectra `basis` is ignored
/// (derivatives are already folded into the coefficients); for cosine
/// spectra it selects cosine or sine synthesis per axis.
fn synthesize(spec: &Spectrum, basis: [Basis; 2]) -> Vec<f64> {
    let grid = spec.grid();
    let n = grid.n;
    let plans = Plans::new(n);
    match spec {
        Spectrum::Fourier { coeffs, .. } => {
            let mut data = coeffs.clone();
            for axis in 0..2 {
                for_each_line(&mut data, n, axis, |line| plans.inv_n.process(line));
            }
            data.iter().map(|c| c.re).collect()
        }
        Spectrum::Cosine { coeffs, .. } => {
            let mut data = coeffs.clone();
            let mut buf = Vec::with_capacity(2 * n);
            for (axis, b) in basis.iter().enumerate() {
                for_each_line(&mut data, n, axis, |line| {
                    plans.trig_synthesis(line, *b == Basis::Sin, &mut buf)
                });
            }
            data
        }
    }
}

impl Spectrum {
    pub fn grid(&self) -> Grid {
        match self {
            Spectrum::Fourier { grid, .. } | Spectrum::Cosine { grid, .. } => *grid,
        }
    }

    /// Coefficient of the constant mode (the mean of the field).
    pub fn mean(&self) -> f64 {
        match self {
            Spectrum::Fourier { coeffs, .. } => coeffs[0].re,
            Spectrum::Cosine { coeffs, .. } => coeffs[0],
        }
    }

    /// Angular wavenumbers `(ω₁, ω₂)` of coefficient `idx`, so that
    /// `-Δ` acts as multiplication by `ω₁² + ω₂²`. The Fourier Nyquist bin
    /// is reported with a positive frequency.
    pub fn wavenumbers(&self, idx: usize) -> (f64, f64) {
        let grid = self.grid();
        let n = grid.n;
        let (k1, k2) = (idx % n, idx / n);
        match self {
            Spectrum::Fourier { .. } => (
                2.0 * PI * signed_frequency(k1, n) as f64,
                2.0 * PI * signed_frequency(k2, n) as f64,
            ),
            Spectrum::Cosine { .. } => (PI * k1 as f64, PI * k2 as f64),
        }
    }

    /// Eigenvalue of `-Δ` on coefficient `idx`.
    pub fn laplacian_eigenvalue(&self, idx: usize) -> f64 {
        let (w1, w2) = self.wavenumbers(idx);
        w1 * w1 + w2 * w2
    }

    pub fn len(&self) -> usize {
        self.grid().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multiplies every coefficient by `mult(λ_k)` where `λ_k` is the
    /// eigenvalue of `-Δ`.
    pub fn apply_multiplier(&mut self, mult: impl Fn(f64) -> f64) {
        let eig: Vec<f64> = (0..self.len()).map(|k| self.laplacian_eigenvalue(k)).collect();
        match self {
            Spectrum::Fourier { coeffs, .. } => {
                coeffs.iter_mut().zip(&eig).for_each(|(c, &l)| *c *= mult(l))
            }
            Spectrum::Cosine { coeffs, .. } => {
                coeffs.iter_mut().zip(&eig).for_each(|(c, &l)| *c *= mult(l))
            }
        }
    }

    /// `∫ f² dm` from the coefficients (Parseval).
    pub fn l2_norm_sq(&self) -> f64 {
        self.weighted_energy(|_| 1.0)
    }

    /// `Σ_k w(λ_k) · ∫ |mode_k|² dm`, the building block of Parseval sums.
    pub fn weighted_energy(&self, w: impl Fn(f64) -> f64) -> f64 {
        let n = self.grid().n;
        match self {
            Spectrum::Fourier { coeffs, .. } => coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c.norm_sqr() * w(self.laplacian_eigenvalue(k)))
                .sum(),
            Spectrum::Cosine { coeffs, .. } => coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| {
                    let (k1, k2) = (k % n, k / n);
                    let norm = if k1 == 0 { 1.0 } else { 0.5 } * if k2 == 0 { 1.0 } else { 0.5 };
                    a * a * norm * w(self.laplacian_eigenvalue(k))
                })
                .sum(),
        }
    }

    /// Adds another spectrum coefficient-wise.
    pub fn add(&self, other: &Spectrum) -> Result<Spectrum> {
        match (self, other) {
            (Spectrum::Fourier { grid, coeffs }, Spectrum::Fourier { grid: g2, coeffs: c2 }) => {
                same_grid(*grid, *g2)?;
                Ok(Spectrum::Fourier {
                    grid: *grid,
                    coeffs: coeffs.iter().zip(c2).map(|(a, b)| a + b).collect(),
                })
            }
            (Spectrum::Cosine { grid, coeffs }, Spectrum::Cosine { grid: g2, coeffs: c2 }) => {
                same_grid(*grid, *g2)?;
                Ok(Spectrum::Cosine {
                    grid: *grid,
                    coeffs: coeffs.iter().zip(c2).map(|(a, b)| a + b).collect(),
                })
            }
            _ => Err(Error::InvalidArgument("spectra of different bases".into())),
        }
    }
}

/// Partial derivative `∂^{a₁}_1 ∂^{a₂}_2` of a spectrum, evaluated on the grid.
/// Only orders `a₁ + a₂ ≤ 2` are used.
fn derivative(spec: &Spectrum, a1: u32, a2: u32) -> Vec<f64> {
    let n = spec.grid().n;
    let nyq = n / 2;
    match spec {
        Spectrum::Fourier { grid, coeffs } => {
            let out: Vec<Complex64> = coeffs
                .iter()
                .enumerate()
                .map(|(idx, c)| {
                    let (k1, k2) = (idx % n, idx / n);
                    // odd derivatives of the unpaired Nyquist mode vanish
                    if (a1 % 2 == 1 && k1 == nyq) || (a2 % 2 == 1 && k2 == nyq) {
                        return Complex64::new(0.0, 0.0);
                    }
                    let i1 = Complex64::new(0.0, 2.0 * PI * signed_frequency(k1, n) as f64);
                    let i2 = Complex64::new(0.0, 2.0 * PI * signed_frequency(k2, n) as f64);
                    c * i1.powu(a1) * i2.powu(a2)
                })
                .collect();
            synthesize(&Spectrum::Fourier { grid: *grid, coeffs: out }, [Basis::Cos, Basis::Cos])
        }
        Spectrum::Cosine { grid, coeffs } => {
            // d/dx cos(ωx) = -ω sin(ωx);  d²/dx² cos(ωx) = -ω² cos(ωx)
            let factor = |k: usize, a: u32| -> (f64, Basis) {
                let w = PI * k as f64;
                match a {
                    0 => (1.0, Basis::Cos),
                    1 => (-w, Basis::Sin),
                    _ => (-w * w, Basis::Cos),
                }
            };
            let (b1, b2) = (factor(0, a1).1, factor(0, a2).1);
            let out: Vec<f64> = coeffs
                .iter()
                .enumerate()
                .map(|(idx, a)| a * factor(idx % n, a1).0 * factor(idx / n, a2).0)
                .collect();
            synthesize(&Spectrum::Cosine { grid: *grid, coeffs: out }, [b1, b2])
        }
    }
}

/// Spectral gradient.
pub fn gradient(f: &ScalarField) -> VectorField {
    gradient_of(&transform(f))
}

pub fn gradient_of(spec: &Spectrum) -> VectorField {
    VectorField {
        grid: spec.grid(),
        v1: derivative(spec, 1, 0),
        v2: derivative(spec, 0, 1),
    }
}

/// Spectral Laplacian `Δf`.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let mut spec = transform(f);
    spec.apply_multiplier(|l| -l);
    inverse_transform(&spec)
}

/// Pointwise spectral Hessian `(f₁₁, f₁₂, f₂₂)`.
pub fn hessian(f: &ScalarField) -> [Vec<f64>; 3] {
    let spec = transform(f);
    [derivative(&spec, 2, 0), derivative(&spec, 1, 1), derivative(&spec, 0, 2)]
}

/// `max_x |∇²f(x)|_op` over grid nodes, using the largest singular value of
/// the symmetric spectral Hessian at each node.
pub fn hessian_sup_norm(f: &ScalarField) -> f64 {
    let [h11, h12, h22] = hessian(f);
    h11.iter()
        .zip(&h12)
        .zip(&h22)
        .map(|((a, b), c)| {
            let half_tr = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            half_tr.abs() + rad
        })
        .fold(0.0, f64::max)
}

/// `∫ |∇f|² dm` via Parseval.
pub fn dirichlet_energy(f: &ScalarField) -> f64 {
    transform(f).weighted_energy(|l| l)
}

/// `∫ |∇f|² dm` via grid quadrature of the spectral gradient.
pub fn dirichlet_energy_quadrature(f: &ScalarField) -> f64 {
    gradient(f).l2_norm_sq()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn band_limited(grid: Grid, seed: u64, kmax: i32) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut modes = Vec::new();
        for k1 in 0..=kmax {
            for k2 in 0..=kmax {
                modes.push((k1 as f64, k2 as f64, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            }
        }
        let domain = grid.domain;
        ScalarField::from_fn(grid, move |p| {
            modes.iter().map(|&(k1, k2, a, b)| match domain {
                Domain::Torus => {
                    let ph = 2.0 * PI * (k1 * p.x1 + k2 * p.x2);
                    a * ph.cos() + b * ph.sin()
                }
                Domain::Square => a * (PI * k1 * p.x1).cos() * (PI * k2 * p.x2).cos(),
            }).sum()
        })
    }

    #[test]
    fn constant_field_has_single_zero_mode() {
        for dom in [Domain::Torus, Domain::Square] {
            let g = Grid::new(dom, 16);
            let spec = transform(&ScalarField::constant(g, 1.0));
            assert!((spec.mean() - 1.0).abs() < 1e-15);
            for k in 1..g.len() {
                let mag = match &spec {
                    Spectrum::Fourier { coeffs, .. } => coeffs[k].norm(),
                    Spectrum::Cosine { coeffs, .. } => coeffs[k].abs(),
                };
                assert!(mag < 1e-15, "mode {k}: {mag}");
            }
        }
    }

    #[test]
    fn single_cosine_is_one_conjugate_pair() {
        let g = Grid::new(Domain::Torus, 32);
        let f = ScalarField::from_fn(g, |p| (2.0 * PI * p.x1).cos());
        let Spectrum::Fourier { coeffs, .. } = transform(&f) else { panic!() };
        let big: Vec<usize> = (0..g.len()).filter(|&k| coeffs[k].norm() > 1e-12).collect();
        assert_eq!(big, vec![g.index(1, 0), g.index(31, 0)]);
        assert!((coeffs[g.index(1, 0)].re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn round_trip_random_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dom in [Domain::Torus, Domain::Square] {
            let g = Grid::new(dom, 64);
            let f = ScalarField::new(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let back = inverse_transform(&transform(&f));
            assert!(back.sup_distance(&f).unwrap() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_single_mode() {
        let g = Grid::new(Domain::Torus, 64);
        let f = ScalarField::from_fn(g, |p| (2.0 * PI * p.x1).cos());
        let grad = gradient(&f);
        for (k, p) in g.nodes().enumerate() {
            let v = grad.get(k);
            assert!((v.v1 + 2.0 * PI * (2.0 * PI * p.x1).sin()).abs() < 1e-11);
            assert!(v.v2.abs() < 1e-11);
        }
        let zero = gradient(&ScalarField::constant(g, 3.0));
        assert!(zero.sup_norm() < 1e-13);
    }

    #[test]
    fn square_gradient_is_boundary_tangent() {
        let g = Grid::new(Domain::Square, 64);
        let f = ScalarField::from_fn(g, |p| (PI * p.x1).cos() * (2.0 * PI * p.x2).cos());
        let grad = gradient(&f);
        for (k, p) in g.nodes().enumerate() {
            let exact = -PI * (PI * p.x1).sin() * (2.0 * PI * p.x2).cos();
            assert!((grad.get(k).v1 - exact).abs() < 1e-11);
        }
        // the normal component vanishes on the boundary
        assert!(grad.sample(Point::new(0.0, 0.3)).v1.abs() < 1e-6);
        assert!(grad.sample(Point::new(0.7, 1.0)).v2.abs() < 1e-6);
    }

    /// Fourth-order centred differences as an independent oracle.
    fn fd4(values: &[f64], grid: Grid, idx: usize, axis: usize) -> f64 {
        let n = grid.n as isize;
        let (i1, i2) = ((idx % grid.n) as isize, (idx / grid.n) as isize);
        let at = |d: isize| {
            let (j1, j2) = if axis == 0 { ((i1 + d).rem_euclid(n), i2) } else { (i1, (i2 + d).rem_euclid(n)) };
            values[(j2 * n + j1) as usize]
        };
        let h = grid.h();
        (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h)
    }

    #[test]
    fn gradient_matches_finite_difference_oracle() {
        let g = Grid::new(Domain::Torus, 256);
        let f = band_limited(g, 5, 1);
        let grad = gradient(&f);
        let mut worst: f64 = 0.0;
        for k in 0..g.len() {
            let v = grad.get(k);
            worst = worst.max((v.v1 - fd4(f.values(), g, k, 0)).abs());
            worst = worst.max((v.v2 - fd4(f.values(), g, k, 1)).abs());
        }
        assert!(worst < 1e-6, "max error {worst}");
    }

    #[test]
    fn hessian_sup_norm_examples() {
        let g = Grid::new(Domain::Torus, 64);
        let f = ScalarField::from_fn(g, |p| (2.0 * PI * p.x1).cos());
        assert!((hessian_sup_norm(&f) - 4.0 * PI * PI).abs() < 1e-9);
        assert!(hessian_sup_norm(&ScalarField::constant(g, 2.0)) < 1e-12);

        // adding a mode does not decrease the norm here
        let a = 0.7;
        let f2 = ScalarField::from_fn(g, |p| a * (2.0 * PI * p.x1).cos() + a * (2.0 * PI * p.x2).cos());
        // dense eigenvalue oracle at every node: the Hessian is diagonal
        let oracle = g
            .nodes()
            .map(|p| {
                let d1 = -4.0 * PI * PI * a * (2.0 * PI * p.x1).cos();
                let d2 = -4.0 * PI * PI * a * (2.0 * PI * p.x2).cos();
                d1.abs().max(d2.abs())
            })
            .fold(0.0, f64::max);
        let got = hessian_sup_norm(&f2);
        assert!((got - oracle).abs() < 1e-9);
        assert!((got - 4.0 * PI * PI * a).abs() < 1e-9);
        assert!(got >= hessian_sup_norm(&f.scaled(a)) - 1e-9);
    }

    #[test]
    fn hessian_sup_norm_is_homogeneous() {
        let g = Grid::new(Domain::Square, 64);
        let f = band_limited(g, 9, 3);
        let base = hessian_sup_norm(&f);
        for alpha in [-2.5, 0.1, 3.0] {
            let s = hessian_sup_norm(&f.scaled(alpha));
            assert!((s - alpha.abs() * base).abs() <= 1e-12 * s.max(1.0));
        }
    }

    #[test]
    fn sampling_examples() {
        for dom in [Domain::Torus, Domain::Square] {
            let g = Grid::new(dom, 256);
            let f = match dom {
                Domain::Torus => ScalarField::from_fn(g, |p| (2.0 * PI * p.x1).cos() * (2.0 * PI * p.x2).sin()),
                Domain::Square => ScalarField::from_fn(g, |p| (PI * p.x1).cos() * (2.0 * PI * p.x2).cos()),
            };
            for k in (0..g.len()).step_by(97) {
                assert_eq!(f.sample(g.node_at(k)), f.values()[k]);
            }
            let c = ScalarField::constant(g, 1.25);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut worst: f64 = 0.0;
            for _ in 0..1000 {
                let p = Point::new(rng.gen(), rng.gen());
                assert!((c.sample(p) - 1.25).abs() < 1e-14);
                let exact = match dom {
                    Domain::Torus => (2.0 * PI * p.x1).cos() * (2.0 * PI * p.x2).sin(),
                    Domain::Square => (PI * p.x1).cos() * (2.0 * PI * p.x2).cos(),
                };
                worst = worst.max((f.sample(p) - exact).abs());
            }
            assert!(worst < 1e-6, "{dom}: {worst}");
        }
    }

    #[test]
    fn dirichlet_energy_examples() {
        for dom in [Domain::Torus, Domain::Square] {
            let g = Grid::new(dom, 64);
            assert!(dirichlet_energy(&ScalarField::constant(g, 5.0)).abs() < 1e-20);
        }
        let g = Grid::new(Domain::Torus, 64);
        let f = ScalarField::from_fn(g, |p| (2.0 * PI * p.x1).cos() / (4.0 * PI * PI));
        // Parseval oracle: two coefficients of 1/(8π²), each with |2πk|² = 4π²
        let c = 1.0 / (8.0 * PI * PI);
        let oracle = 2.0 * c * c * 4.0 * PI * PI;
        assert!((oracle - 0.012_665).abs() < 1e-6);
        let e = dirichlet_energy(&f);
        assert!((e - oracle).abs() < 1e-14);
        assert!((dirichlet_energy(&f.scaled(2.0)) - 4.0 * e).abs() < 1e-14);
    }

    #[test]
    fn parseval_and_energy_identity() {
        for dom in [Domain::Torus, Domain::Square] {
            let g = Grid::new(dom, 64);
            let f = band_limited(g, 21, 6);
            let grid_sum: f64 = f.values().iter().map(|v| v * v).sum::<f64>() * g.quadrature_weight();
            let spec = transform(&f).l2_norm_sq();
            assert!((grid_sum - spec).abs() <= 1e-10 * grid_sum);
            let e1 = dirichlet_energy(&f);
            let e2 = dirichlet_energy_quadrature(&f);
            assert!((e1 - e2).abs() <= 1e-8 * e1, "{dom}: {e1} vs {e2}");
        }
    }

    #[test]
    fn gradient_is_linear() {
        let g = Grid::new(Domain::Torus, 32);
        let f = band_limited(g, 1, 3);
        let h = band_limited(g, 2, 3);
        let sum = f.zip_with(&h, |a, b| a + b).unwrap();
        let spec_sum = transform(&f).add(&transform(&h)).unwrap();
        let (ga, gb) = (gradient(&sum), gradient_of(&spec_sum));
        for k in 0..g.len() {
            assert!((ga.get(k) - gb.get(k)).norm() < 1e-12);
        }
    }

    #[test]
    fn coarsen_preserves_mass() {
        for dom in [Domain::Torus, Domain::Square] {
            let g = Grid::new(dom, 64);
            let f = band_limited(g, 4, 5);
            let c = f.coarsen(4).unwrap();
            assert_eq!(c.grid().n, 16);
            assert!((c.mean() - f.mean()).abs() < 1e-13);
        }
    }

    #[test]
    fn binary_dump_round_trips() {
        let g = Grid::new(Domain::Square, 8);
        let f = band_limited(g, 8, 2);
        let back = ScalarField::from_bytes(&f.to_bytes()).unwrap();
        assert_eq!(back.values(), f.values());
        assert!(ScalarField::from_bytes(b"nope").is_err());
    }

    #[test]
    fn kind_tags_check_mean() {
        let g = Grid::new(Domain::Torus, 8);
        assert!(ScalarField::constant(g, 1.0).with_kind(FieldKind::Density).is_ok());
        assert!(ScalarField::constant(g, 1.1).with_kind(FieldKind::Density).is_err());
        assert!(ScalarField::constant(g, 0.1).with_kind(FieldKind::Potential).is_err());
        assert!(ScalarField::new(g, vec![1.0; 3]).is_err());
    }
}

//! Semi-discrete transport from a grid source to a point cloud.
//!
//! Each grid cell is assigned to the atom minimizing `d²(x, X_i) − w_i`
//! (ties to the lowest index). For the mass balance, the competing
//! functions `d²(x, X_i) − w_i` are linearized at the cell centre and the
//! square cell is split between atoms by the exact areas of the lower
//! envelope of these affine functions. Cell masses are then continuous and
//! piecewise smooth in the weights, and the Newton system is the weighted
//! graph Laplacian of the interface lengths.

use crate::geometry::{dist, dist_sq, log_map, Grid, Point};
use crate::heat_poisson::PointCloud;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Default relative mass tolerance: cell masses within 0.1% of their target.
pub const DEFAULT_TOL_MASS: f64 = 1e-3;

/// Cells per block side in the candidate pruning.
const BLOCK: usize = 8;

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Converged when `max_i |m_i − ν_i| ≤ tol_mass · ν_i`.
    pub tol_mass: f64,
    pub max_iterations: usize,
    /// Warm start; defaults to zero weights.
    pub initial_weights: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol_mass: DEFAULT_TOL_MASS,
            max_iterations: 100,
            initial_weights: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub newton_steps: usize,
    pub evaluations: usize,
    /// `max_i |m_i − ν_i| / ν_i` at exit.
    pub max_mass_error: f64,
    /// `Σ_i |m_i − ν_i|` at exit.
    pub gradient_l1: f64,
    /// `w2sq − dual_value`.
    pub duality_gap: f64,
}

/// Converged semi-discrete plan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemiDiscretePlan {
    pub cloud: PointCloud,
    pub grid: Grid,
    /// Kantorovich weights, normalized to mean 0.
    pub weights: Vec<f64>,
    /// Atom index of every grid cell (raster argmin). Serialized separately
    /// as a binary array.
    #[serde(skip)]
    pub assignment: Vec<u32>,
    /// Source mass received by each atom, counting split cells fractionally.
    pub cell_masses: Vec<f64>,
    /// `Σ_cells ρ_c min_i (d²(x_c, X_i) − w_i) + Σ_i w_i ν_i`.
    pub dual_value: f64,
    /// `Σ_cells ρ_c d²(x_c, X_{assignment(c)})`.
    pub w2sq: f64,
    pub diagnostics: SolveDiagnostics,
}

impl SemiDiscretePlan {
    pub fn target(&self, cell: usize) -> Point {
        self.cloud.points[self.assignment[cell] as usize]
    }

    /// JSON document with weights, masses, costs and diagnostics.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plans serialize")
    }

    /// Assignment as little-endian `u32`, row-major with `x1` fastest.
    pub fn assignment_bytes(&self) -> Vec<u8> {
        self.assignment.iter().flat_map(|a| a.to_le_bytes()).collect()
    }

    /// Rebuilds a plan from its two serialized parts.
    pub fn from_parts(json: &str, assignment: &[u8]) -> Result<Self> {
        let mut plan: SemiDiscretePlan =
            serde_json::from_str(json).map_err(|e| Error::InvalidArgument(format!("plan JSON: {e}")))?;
        if assignment.len() != 4 * plan.grid.len() {
            return Err(Error::ResolutionMismatch {
                expected: 4 * plan.grid.len(),
                found: assignment.len(),
            });
        }
        plan.assignment = assignment
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(plan)
    }
}

/// Uniform source `m` on `grid`.
pub fn solve_semidiscrete(cloud: &PointCloud, grid: Grid, tol_mass: f64) -> Result<SemiDiscretePlan> {
    let source = vec![grid.quadrature_weight(); grid.len()];
    solve_semidiscrete_with(
        cloud,
        grid,
        &source,
        &SolveOptions {
            tol_mass,
            ..Default::default()
        },
    )
}

/// Source with density `rho` (mean 1, nonnegative) against `m`.
pub fn solve_semidiscrete_density(
    cloud: &PointCloud,
    rho: &crate::fields::ScalarField,
    options: &SolveOptions,
) -> Result<SemiDiscretePlan> {
    let grid = rho.grid();
    if rho.min() < 0.0 {
        return Err(Error::InvalidArgument(format!("source density is negative ({})", rho.min())));
    }
    let w = grid.quadrature_weight();
    let mut source: Vec<f64> = rho.values().iter().map(|v| v * w).collect();
    let total: f64 = source.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::BadMean {
            expected: 1.0,
            found: total,
        });
    }
    source.iter_mut().for_each(|v| *v /= total);
    solve_semidiscrete_with(cloud, grid, &source, options)
}

/// General entry point: `source[c]` is the mass of grid cell `c` (sum 1).
pub fn solve_semidiscrete_with(
    cloud: &PointCloud,
    grid: Grid,
    source: &[f64],
    options: &SolveOptions,
) -> Result<SemiDiscretePlan> {
    let n = cloud.len();
    if cloud.domain != grid.domain {
        return Err(Error::InvalidArgument("cloud and grid live on different domains".into()));
    }
    if source.len() != grid.len() {
        return Err(Error::ResolutionMismatch {
            expected: grid.len(),
            found: source.len(),
        });
    }
    if grid.len() < 50 * n {
        return Err(Error::InvalidArgument(format!(
            "grid of {} cells is too coarse for {n} atoms (need at least 50 cells per atom)",
            grid.len()
        )));
    }
    let total: f64 = source.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::MassMismatch(total, 1.0));
    }
    let raster = Raster::new(grid, source, &cloud.points);
    let nu = vec![1.0 / n as f64; n];
    let mut w = match &options.initial_weights {
        Some(w0) if w0.len() == n => w0.clone(),
        Some(w0) => {
            return Err(Error::ResolutionMismatch {
                expected: n,
                found: w0.len(),
            })
        }
        None => vec![0.0; n],
    };

    let mut evaluations = 0;
    let mut eval = raster.evaluate(&w);
    evaluations += 1;
    // give every atom a foothold: it must win the cell containing it
    for _ in 0..20 {
        let empty: Vec<usize> = (0..n).filter(|&i| eval.masses[i] <= 0.0).collect();
        if empty.is_empty() {
            break;
        }
        for i in empty {
            let c = grid.cell_of(cloud.points[i]);
            let x = grid.node_at(c);
            let margin = 0.25 * grid.h() * grid.h();
            w[i] = dist_sq(grid.domain, x, cloud.points[i]) - eval.best_value[c] + margin;
        }
        eval = raster.evaluate(&w);
        evaluations += 1;
    }
    if let Some(atom) = (0..n).find(|&i| eval.masses[i] <= 0.0) {
        return Err(Error::EmptyCell { atom });
    }
    let floor = 0.5 * nu[0].min(eval.masses.iter().cloned().fold(f64::INFINITY, f64::min));

    let l1 = |m: &[f64]| m.iter().zip(&nu).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let rel = |m: &[f64]| m.iter().zip(&nu).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
    let mut steps = 0;
    while rel(&eval.masses) > options.tol_mass {
        if steps >= options.max_iterations {
            return Err(Error::NotConverged {
                iterations: steps,
                residual: rel(&eval.masses),
            });
        }
        steps += 1;
        let rhs: Vec<f64> = nu.iter().zip(&eval.masses).map(|(a, b)| a - b).collect();
        let delta = eval.hessian(n).solve(&rhs);
        let g0 = l1(&eval.masses);
        let mut tau = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().zip(&delta).map(|(a, d)| a + tau * d).collect();
            let e = raster.evaluate(&trial);
            evaluations += 1;
            let min_mass = e.masses.iter().cloned().fold(f64::INFINITY, f64::min);
            if min_mass >= floor && l1(&e.masses) <= (1.0 - 0.5 * tau) * g0 {
                w = trial;
                eval = e;
                break;
            }
            tau *= 0.5;
            if tau < 1e-12 {
                return Err(Error::NotConverged {
                    iterations: steps,
                    residual: rel(&eval.masses),
                });
            }
        }
    }

    let mean = w.iter().sum::<f64>() / n as f64;
    w.iter_mut().for_each(|v| *v -= mean);
    // the dual is invariant under the gauge shift
    let dual_value = eval.dual;
    Ok(SemiDiscretePlan {
        cloud: cloud.clone(),
        grid,
        diagnostics: SolveDiagnostics {
            newton_steps: steps,
            evaluations,
            max_mass_error: rel(&eval.masses),
            gradient_l1: l1(&eval.masses),
            duality_gap: eval.hard_cost - dual_value,
        },
        weights: w,
        assignment: eval.assignment,
        cell_masses: eval.masses,
        dual_value,
        w2sq: eval.hard_cost,
    })
}

// --- raster evaluation ---------------------------------------------------------

struct Raster<'a> {
    grid: Grid,
    source: &'a [f64],
    atoms: &'a [Point],
    blocks_per_side: usize,
}

/// Most atoms sharing one cell.
const MAX_SPLIT: usize = 8;

/// Per-cell outcome of the Laguerre competition.
#[derive(Clone, Debug, Default)]
struct CellResult {
    best: u32,
    best_value: f64,
    /// `(atom, area fraction)` when the cell is shared.
    shares: Vec<(u32, f64)>,
    /// `(a, b, ∂area_a/∂w_a)` over shared interfaces.
    couplings: Vec<(u32, u32, f64)>,
}

struct Evaluation {
    masses: Vec<f64>,
    assignment: Vec<u32>,
    best_value: Vec<f64>,
    hard_cost: f64,
    dual: f64,
    /// `(a, b, ρ·∂area_a/∂w_a)` for every shared interface.
    couplings: Vec<(u32, u32, f64)>,
}

impl<'a> Raster<'a> {
    fn new(grid: Grid, source: &'a [f64], atoms: &'a [Point]) -> Self {
        Raster {
            grid,
            source,
            atoms,
            blocks_per_side: grid.n.div_ceil(BLOCK),
        }
    }

    /// Atoms that can be best or split-relevant somewhere in the block.
    fn candidates(&self, b1: usize, b2: usize, w: &[f64]) -> Vec<u32> {
        let g = self.grid;
        let h = g.h();
        let lo1 = b1 * BLOCK;
        let lo2 = b2 * BLOCK;
        let hi1 = (lo1 + BLOCK).min(g.n) - 1;
        let hi2 = (lo2 + BLOCK).min(g.n) - 1;
        let centre = Point::new(
            0.5 * (g.coord(lo1) + g.coord(hi1)),
            0.5 * (g.coord(lo2) + g.coord(hi2)),
        );
        // half-diagonal of the block of cells
        let rb = 0.5 * ((hi1 - lo1 + 1) as f64 * h) * std::f64::consts::SQRT_2;
        let dists: Vec<f64> = self.atoms.iter().map(|&x| dist(g.domain, centre, x)).collect();
        let (mut upper, mut d_upper) = (f64::INFINITY, 0.0);
        for (i, &d) in dists.iter().enumerate() {
            let u = (d + rb).powi(2) - w[i];
            if u < upper {
                upper = u;
                d_upper = d;
            }
        }
        dists
            .iter()
            .enumerate()
            .filter(|&(i, &d)| {
                let lower = (d - rb).max(0.0).powi(2) - w[i];
                // a runner-up within the split band |∇ψ|·h of the best still matters
                let band = 2.0 * std::f64::consts::SQRT_2 * h * (d + d_upper + 2.0 * rb);
                lower <= upper + band
            })
            .map(|(i, _)| i as u32)
            .collect()
    }

    fn cell(&self, idx: usize, cands: &[u32], w: &[f64]) -> CellResult {
        let g = self.grid;
        let dom = g.domain;
        let x = g.node_at(idx);
        let h = g.h();
        let mut vals: Vec<(f64, u32)> = cands
            .iter()
            .map(|&i| (dist_sq(dom, x, self.atoms[i as usize]) - w[i as usize], i))
            .collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (v1, b) = vals[0];
        let mut out = CellResult {
            best: b,
            best_value: v1,
            ..Default::default()
        };
        // u-gradient of the linearized function, u ∈ [−½, ½]²
        let grad = |i: u32| {
            let d = log_map(dom, self.atoms[i as usize], x);
            (2.0 * h * d.v1, 2.0 * h * d.v2)
        };
        let g1 = grad(b);
        let reach = |gv: (f64, f64)| 0.5 * ((gv.0 - g1.0).abs() + (gv.1 - g1.1).abs());
        let live: Vec<(f64, u32, (f64, f64))> = vals
            .iter()
            .skip(1)
            .map(|&(v, i)| (v, i, grad(i)))
            .filter(|&(v, _, gv)| v - v1 < reach(gv))
            .take(MAX_SPLIT - 1)
            .collect();
        if live.is_empty() {
            return out;
        }
        let mut all = vec![(v1, b, g1)];
        all.extend(live);
        for (j, &(vj, aj, gj)) in all.iter().enumerate() {
            let mut poly = unit_square();
            for (k, &(vk, _, gk)) in all.iter().enumerate() {
                if k != j {
                    poly = clip(&poly, gj.0 - gk.0, gj.1 - gk.1, vk - vj, k as i32);
                    if poly.is_empty() {
                        break;
                    }
                }
            }
            let area = polygon_area(&poly);
            if area > 0.0 {
                out.shares.push((aj, area));
            }
            for (e, v) in poly.iter().enumerate() {
                let k = v.2;
                if k > j as i32 {
                    let q = &poly[(e + 1) % poly.len()];
                    let len = ((q.0 - v.0).powi(2) + (q.1 - v.1).powi(2)).sqrt();
                    let gk = all[k as usize].2;
                    let norm = ((gj.0 - gk.0).powi(2) + (gj.1 - gk.1).powi(2)).sqrt();
                    if len > 0.0 && norm > 0.0 {
                        out.couplings.push((aj, all[k as usize].1, len / norm));
                    }
                }
            }
        }
        out
    }

    fn evaluate(&self, w: &[f64]) -> Evaluation {
        let g = self.grid;
        let nb = self.blocks_per_side;
        let per_block: Vec<Vec<(usize, CellResult)>> = (0..nb * nb)
            .into_par_iter()
            .map(|blk| {
                let (b1, b2) = (blk % nb, blk / nb);
                let cands = self.candidates(b1, b2, w);
                let mut out = Vec::with_capacity(BLOCK * BLOCK);
                for i2 in b2 * BLOCK..((b2 + 1) * BLOCK).min(g.n) {
                    for i1 in b1 * BLOCK..((b1 + 1) * BLOCK).min(g.n) {
                        let idx = g.index(i1, i2);
                        out.push((idx, self.cell(idx, &cands, w)));
                    }
                }
                out
            })
            .collect();
        let mut cells = vec![CellResult::default(); g.len()];
        for block in per_block {
            for (idx, r) in block {
                cells[idx] = r;
            }
        }
        // sequential reduction in cell order keeps results independent of threading
        let n = self.atoms.len();
        let mut masses = vec![0.0; n];
        let mut couplings = Vec::new();
        let (mut hard_cost, mut dual) = (0.0, 0.0);
        for (idx, r) in cells.iter().enumerate() {
            let rho = self.source[idx];
            let b = r.best as usize;
            if r.shares.is_empty() {
                masses[b] += rho;
            } else {
                let total: f64 = r.shares.iter().map(|s| s.1).sum();
                for &(a, area) in &r.shares {
                    masses[a as usize] += rho * area / total;
                }
            }
            if rho > 0.0 {
                couplings.extend(r.couplings.iter().map(|&(a, c, v)| (a, c, rho * v)));
            }
            hard_cost += rho * (r.best_value + w[b]);
            dual += rho * r.best_value;
        }
        dual += w.iter().sum::<f64>() / n as f64;
        Evaluation {
            masses,
            assignment: cells.iter().map(|r| r.best).collect(),
            best_value: cells.iter().map(|r| r.best_value).collect(),
            hard_cost,
            dual,
            couplings,
        }
    }
}

/// Polygon vertex with the label of the edge leaving it (−1 for the cell
/// boundary).
type Vertex = (f64, f64, i32);

fn unit_square() -> Vec<Vertex> {
    vec![(-0.5, -0.5, -1), (0.5, -0.5, -1), (0.5, 0.5, -1), (-0.5, 0.5, -1)]
}

/// Clips a convex polygon to `a u₁ + b u₂ ≤ c`; the new edge gets `label`.
fn clip(poly: &[Vertex], a: f64, b: f64, c: f64, label: i32) -> Vec<Vertex> {
    let side = |v: &Vertex| a * v.0 + b * v.1 - c;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for (i, p) in poly.iter().enumerate() {
        let q = &poly[(i + 1) % poly.len()];
        let (sp, sq) = (side(p), side(q));
        let cross = |t: f64, l: i32| (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1), l);
        match (sp <= 0.0, sq <= 0.0) {
            (true, true) => out.push(*p),
            (true, false) => {
                out.push(*p);
                out.push(cross(sp / (sp - sq), label));
            }
            (false, true) => out.push(cross(sp / (sp - sq), p.2)),
            (false, false) => {}
        }
    }
    out
}

fn polygon_area(poly: &[Vertex]) -> f64 {
    let mut s = 0.0;
    for (i, p) in poly.iter().enumerate() {
        let q = &poly[(i + 1) % poly.len()];
        s += p.0 * q.1 - q.0 * p.1;
    }
    0.5 * s.abs()
}

impl Evaluation {
    fn hessian(&self, n: usize) -> Laplacian {
        let mut pairs: Vec<(u32, u32, f64)> = self
            .couplings
            .iter()
            .map(|&(a, b, v)| if a < b { (a, b, v) } else { (b, a, v) })
            .collect();
        pairs.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        let mut merged: Vec<(u32, u32, f64)> = Vec::new();
        for (a, b, v) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == a && last.1 == b => last.2 += v,
                _ => merged.push((a, b, v)),
            }
        }
        Laplacian::new(n, &merged)
    }
}

// --- Newton system -------------------------------------------------------------

/// Weighted graph Laplacian in CSR form (off-diagonal part) plus diagonal.
struct Laplacian {
    diag: Vec<f64>,
    start: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Laplacian {
    fn new(n: usize, edges: &[(u32, u32, f64)]) -> Self {
        let mut diag = vec![0.0; n];
        let mut count = vec![0usize; n + 1];
        for &(a, b, v) in edges {
            diag[a as usize] += v;
            diag[b as usize] += v;
            count[a as usize + 1] += 1;
            count[b as usize + 1] += 1;
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut cols = vec![0u32; 2 * edges.len()];
        let mut vals = vec![0.0; 2 * edges.len()];
        for &(a, b, v) in edges {
            for (r, c) in [(a, b), (b, a)] {
                let k = fill[r as usize];
                cols[k] = c;
                vals[k] = v;
                fill[r as usize] += 1;
            }
        }
        Laplacian {
            diag,
            start: count,
            cols,
            vals,
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = self.diag[i] * x[i];
            for k in self.start[i]..self.start[i + 1] {
                acc -= self.vals[k] * x[self.cols[k] as usize];
            }
            *o = acc;
        }
    }

    /// Jacobi-preconditioned conjugate gradients on the zero-sum subspace.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mean = rhs.iter().sum::<f64>() / n as f64;
        let b: Vec<f64> = rhs.iter().map(|v| v - mean).collect();
        let ridge = 1e-12 * self.diag.iter().cloned().fold(0.0, f64::max);
        let pre: Vec<f64> = self.diag.iter().map(|&d| if d > 0.0 { 1.0 / (d + ridge) } else { 0.0 }).collect();
        let mut x = vec![0.0; n];
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&pre).map(|(a, p)| a * p).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let norm_b = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_b == 0.0 {
            return x;
        }
        for _ in 0..4 * n + 100 {
            self.apply(&p, &mut ap);
            ap.iter_mut().zip(&p).for_each(|(a, q)| *a += ridge * q);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            x.iter_mut().zip(&p).for_each(|(a, q)| *a += alpha * q);
            r.iter_mut().zip(&ap).for_each(|(a, q)| *a -= alpha * q);
            if r.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-11 * norm_b {
                break;
            }
            z.iter_mut().zip(r.iter().zip(&pre)).for_each(|(zi, (ri, pi))| *zi = ri * pi);
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use crate::heat_poisson::sample_cloud;

    #[test]
    fn envelope_areas_match_quadrature() {
        // three affine competitors on the unit cell against a midpoint rule
        let fns = [(0.0, 0.3, -0.2), (0.05, -0.4, 0.1), (0.02, 0.1, 0.5)];
        let m = 1000;
        let mut count = [0usize; 3];
        for i in 0..m {
            for j in 0..m {
                let u = ((i as f64 + 0.5) / m as f64 - 0.5, (j as f64 + 0.5) / m as f64 - 0.5);
                let v: Vec<f64> = fns.iter().map(|f| f.0 + f.1 * u.0 + f.2 * u.1).collect();
                let k = (0..3).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
                count[k] += 1;
            }
        }
        let mut sum = 0.0;
        for j in 0..3 {
            let mut poly = unit_square();
            for k in 0..3 {
                if k != j {
                    let (fj, fk) = (fns[j], fns[k]);
                    poly = clip(&poly, fj.1 - fk.1, fj.2 - fk.2, fk.0 - fj.0, k as i32);
                }
            }
            let area = polygon_area(&poly);
            sum += area;
            assert!((area - count[j] as f64 / (m * m) as f64).abs() < 2e-3, "{j}: {area}");
        }
        assert!((sum - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_atom_torus_cost_is_one_sixth() {
        let grid = Grid::new(Domain::Torus, 256);
        let cloud = PointCloud::from_points(Domain::Torus, vec![Point::new(0.37, 0.81)]).unwrap();
        let plan = solve_semidiscrete(&cloud, grid, DEFAULT_TOL_MASS).unwrap();
        assert!((plan.w2sq - 1.0 / 6.0).abs() < 0.005 / 6.0);
        assert_eq!(plan.diagnostics.newton_steps, 0);
    }

    #[test]
    fn symmetric_pair_cost() {
        let grid = Grid::new(Domain::Torus, 256);
        let cloud =
            PointCloud::from_points(Domain::Torus, vec![Point::new(0.25, 0.5), Point::new(0.75, 0.5)]).unwrap();
        let plan = solve_semidiscrete(&cloud, grid, DEFAULT_TOL_MASS).unwrap();
        assert!((plan.w2sq - 5.0 / 48.0).abs() < 0.01 * 5.0 / 48.0, "{}", plan.w2sq);
        assert!((plan.weights[0] - plan.weights[1]).abs() < 1e-12);
    }

    #[test]
    fn masses_converge_and_dual_is_consistent() {
        for dom in [Domain::Torus, Domain::Square] {
            let grid = Grid::new(dom, 128);
            let cloud = sample_cloud(dom, 200, 11).unwrap();
            let plan = solve_semidiscrete(&cloud, grid, 1e-6).unwrap();
            let total: f64 = plan.cell_masses.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(plan.diagnostics.max_mass_error <= 1e-6);
            assert!(plan.weights.iter().sum::<f64>().abs() < 1e-12);
            // the raster plan is within the discretization band of the dual
            assert!(plan.diagnostics.duality_gap.abs() < 1e-3 * plan.w2sq, "{dom}: {:?}", plan.diagnostics);
            // argmin property
            let w = &plan.weights;
            for c in (0..grid.len()).step_by(37) {
                let x = grid.node_at(c);
                let a = plan.assignment[c] as usize;
                let va = dist_sq(dom, x, cloud.points[a]) - w[a];
                for (j, p) in cloud.points.iter().enumerate() {
                    assert!(va <= dist_sq(dom, x, *p) - w[j] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn weight_gauge_and_serialization() {
        let grid = Grid::new(Domain::Torus, 64);
        let cloud = sample_cloud(Domain::Torus, 30, 2).unwrap();
        let plan = solve_semidiscrete(&cloud, grid, 1e-4).unwrap();
        let shifted: Vec<f64> = plan.weights.iter().map(|w| w + 0.125).collect();
        let src = vec![grid.quadrature_weight(); grid.len()];
        let r = Raster::new(grid, &src, &cloud.points);
        let (e0, e1) = (r.evaluate(&plan.weights), r.evaluate(&shifted));
        assert_eq!(e0.assignment, e1.assignment);
        assert!((e0.hard_cost - plan.w2sq).abs() < 1e-15);
        assert!((e1.hard_cost - e0.hard_cost).abs() < 1e-15);

        let back = SemiDiscretePlan::from_parts(&plan.to_json(), &plan.assignment_bytes()).unwrap();
        assert_eq!(back.assignment, plan.assignment);
        assert_eq!(back.weights, plan.weights);
        assert_eq!(back.w2sq, plan.w2sq);
    }

    #[test]
    fn too_coarse_grid_is_rejected() {
        let cloud = sample_cloud(Domain::Torus, 100, 1).unwrap();
        assert!(solve_semidiscrete(&cloud, Grid::new(Domain::Torus, 64), 1e-3).is_err());
    }
}

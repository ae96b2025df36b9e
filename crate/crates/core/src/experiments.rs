//! Seeded Monte Carlo trials of the matching pipeline and their aggregation.
//!
//! One trial samples `n` uniform points, builds `μ^{n,t}` and the potential
//! `f^{n,t}`, solves the semi-discrete problem `m → μⁿ`, and compares the
//! optimal map `Tⁿ` with `exp(∇f^{n,t})`. A sweep repeats this over cloud
//! sizes and seeds; [`aggregate`] reduces the records to per-`n` means with
//! 95% confidence intervals and the normalized ratios `r₁ … r₄`.

use crate::fields::{self, ScalarField, VectorField};
use crate::geometry::{dist_sq, Domain, Grid};
use crate::heat_poisson::{heat_evolve, matching_field, required_resolution, sample_cloud};
use crate::hopflax::random_pairs;
use crate::rng::{rng_from, stage, sub_seed, trial_seed};
use crate::stability::C_STAB;
use crate::transport::{
    c_cyclical_violation, grad_potential_from_map, linf_map_distance, map_l2_distance, pushforward_density,
    sinkhorn_w2, solve_semidiscrete_density, solve_semidiscrete_with, Bracket, SemiDiscretePlan, SinkhornOptions,
    SolveOptions, TransportMapGrid, DEFAULT_TOL_MASS, MIN_SAMPLES_PER_CELL,
};
use crate::{Error, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::f64::consts::PI;
use std::time::Instant;

pub const SCHEMA_VERSION: u32 = 1;

/// Constant in `W₂²(m, μ^{n,t}) ≤ C_TI ∫|∇f^{n,t}|² dm`.
pub const C_TI: f64 = 4.0;

/// Frozen constant in `linf ≤ C_FIT · l2^{1/4}`, fitted once on the
/// standard sweep (largest observed quotient 0.72).
pub const C_FIT: f64 = 1.0;

/// Band for the log-log slope of `linf` against `l2`.
pub const SLOPE_BAND: (f64, f64) = (0.1, 0.35);

/// Random pairs per plan in the monotonicity and feasibility spot checks.
pub const CHECK_PAIRS: usize = 1000;

pub const MONOTONE_TOL: f64 = 1e-10;
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// `(t, ξ) = ((ln n)^α / n, 1 / ln n)`.
pub fn schedule_with_alpha(n: usize, alpha: f64) -> Result<(f64, f64)> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("the schedule needs n ≥ 3, got {n}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("exponent α must be positive, got {alpha}")));
    }
    let l = (n as f64).ln();
    Ok((l.powf(alpha) / n as f64, 1.0 / l))
}

/// The default schedule, `α = 4`.
pub fn schedule(n: usize) -> Result<(f64, f64)> {
    schedule_with_alpha(n, 4.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub domain: Domain,
    pub n: usize,
    pub seed: u64,
    /// Grid resolution `N`.
    pub resolution: usize,
    pub alpha: f64,
    pub t: f64,
    pub xi: f64,
    pub tol_mass: f64,
    pub sinkhorn: SinkhornOptions,
    /// Pushforward samples per cell, `Q / N²`.
    pub samples_per_cell: usize,
}

impl TrialConfig {
    /// Desk-scale defaults: `N = 512`, `α = 4`, `Q = 10 N²`.
    pub fn new(domain: Domain, n: usize, seed: u64) -> Result<Self> {
        let (t, xi) = schedule(n)?;
        Ok(TrialConfig {
            domain,
            n,
            seed,
            resolution: 512,
            alpha: 4.0,
            t,
            xi,
            tol_mass: DEFAULT_TOL_MASS,
            sinkhorn: SinkhornOptions::default(),
            samples_per_cell: 10,
        })
    }

    /// Resets `α` and the schedule derived from it.
    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        let (t, xi) = schedule_with_alpha(self.n, alpha)?;
        self.alpha = alpha;
        self.t = t;
        self.xi = xi;
        Ok(self)
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.domain, self.resolution)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidArgument(format!("n must be at least 3, got {}", self.n)));
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::InvalidArgument(format!("t must be positive, got {}", self.t)));
        }
        if !(self.xi > 0.0) || !self.xi.is_finite() {
            return Err(Error::InvalidArgument(format!("xi must be positive, got {}", self.xi)));
        }
        if self.resolution < 8 {
            return Err(Error::InvalidArgument(format!("resolution {} is too small", self.resolution)));
        }
        let required = required_resolution(self.t);
        if self.resolution < required {
            return Err(Error::UnderResolved {
                t: self.t,
                tail: (-PI * PI * (self.resolution as f64).powi(2) * self.t).exp(),
                required,
            });
        }
        if self.resolution * self.resolution < 50 * self.n {
            return Err(Error::InvalidArgument(format!(
                "resolution {} gives fewer than 50 cells per atom for n = {}",
                self.resolution, self.n
            )));
        }
        if !(self.tol_mass > 0.0) {
            return Err(Error::InvalidArgument("tol_mass must be positive".into()));
        }
        if self.samples_per_cell < MIN_SAMPLES_PER_CELL {
            return Err(Error::InvalidArgument(format!(
                "the pushforward needs at least {MIN_SAMPLES_PER_CELL} samples per cell, got {}",
                self.samples_per_cell
            )));
        }
        Ok(())
    }
}

/// Two-sided estimate `lower ≤ value ≤ upper`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    fn of_plan(plan: &SemiDiscretePlan) -> Self {
        Interval {
            lower: plan.dual_value.min(plan.w2sq),
            upper: plan.dual_value.max(plan.w2sq),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: String,
    pub reason: String,
}

/// Every quantity measured by a successful trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurements {
    /// `W₂²(m, μⁿ)`.
    pub w2sq_m_mun: f64,
    pub dual_m_mun: f64,
    /// `∫ d²(Tⁿ, exp ∇f^{n,t}) dm`.
    pub l2_t_vs_ansatz: f64,
    /// `W₂²(μⁿ, μ^{n,t})`, dual and primal values of the reweighted solve.
    pub w2sq_mun_munt: Interval,
    /// `4t`, the heat-flow ceiling for `W₂²(μⁿ, μ^{n,t})`.
    pub heat_ceiling: f64,
    /// `W₂²(μ^{n,t}, μ̂^{n,t})`.
    pub w2sq_munt_hat: Bracket,
    /// `W₂²(m, μ^{n,t})`.
    pub w2sq_m_munt: Bracket,
    /// `W₂²(m, μ̂^{n,t})`.
    pub w2sq_m_hat: Bracket,
    /// `W₂²(μⁿ, μ̂^{n,t})`.
    pub w2sq_mun_hat: Interval,
    /// `‖∇²f^{n,t}‖∞`.
    pub hess_sup: f64,
    pub grad_sup: f64,
    /// `hess_sup < ξ`.
    pub event_a: bool,
    /// `∫ |∇f^{n,t}|² dm`.
    pub dirichlet: f64,
    /// `‖∇fⁿ − ∇f^{n,t}‖² / ‖∇fⁿ‖²`; absent when `Tⁿ` has an antipodal
    /// displacement.
    pub grad_ratio: Option<f64>,
    pub antipodal: bool,
    /// `max_x d(x, Tⁿ(x))`.
    pub linf_disp: f64,
    pub max_mass_error: f64,
    /// Largest c-cyclical monotonicity defect over the sampled pairs.
    pub monotone_violation: f64,
    /// Largest Laguerre argmin defect over the sampled (cell, atom) pairs.
    pub feasibility_violation: f64,
    pub pushforward_sigma: f64,
    /// `C_STAB·[W₂²(μⁿ,μ̂) + W₂(μⁿ,μ̂)·W₂(m,μ̂)]` from upper ends.
    pub stability_bound: f64,
    /// `l2_t_vs_ansatz ≤ stability_bound`, checked on the event only.
    pub stability_ok: Option<bool>,
    pub triangle_ok: bool,
    pub transport_inequality_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    pub config: TrialConfig,
    pub failure: Option<Failure>,
    pub measurements: Option<Measurements>,
    pub runtime_seconds: f64,
}

impl TrialRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }

    /// JSON with the wall-clock field zeroed, for reproducibility checks.
    pub fn canonical_json(&self) -> String {
        let mut r = self.clone();
        r.runtime_seconds = 0.0;
        r.to_json_line()
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::InvalidArgument(format!("trial record: {e}")))
    }

    pub fn key(&self) -> (usize, u64) {
        (self.config.n, self.config.seed)
    }

    pub fn ok(&self) -> Option<&Measurements> {
        self.measurements.as_ref()
    }
}

fn stage_err(stage: &str) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure {
        stage: stage.to_string(),
        reason: e.to_string(),
    }
}

/// Largest `d²(x, X_a) − w_a − (d²(x, X_j) − w_j)` over random (cell, j).
fn feasibility_violation(plan: &SemiDiscretePlan, seed: u64) -> f64 {
    let mut rng = rng_from(seed);
    let (g, dom, pts, w) = (plan.grid, plan.grid.domain, &plan.cloud.points, &plan.weights);
    (0..CHECK_PAIRS)
        .map(|_| {
            let c = rng.gen_range(0..g.len());
            let j = rng.gen_range(0..pts.len());
            let x = g.node_at(c);
            let a = plan.assignment[c] as usize;
            (dist_sq(dom, x, pts[a]) - w[a]) - (dist_sq(dom, x, pts[j]) - w[j])
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn measure(config: &TrialConfig) -> std::result::Result<Measurements, Failure> {
    let grid = config.grid();
    let h = grid.h();
    let cloud = sample_cloud(config.domain, config.n, config.seed).map_err(stage_err("sample"))?;

    let mu_t = heat_evolve(&cloud, config.t, grid).map_err(stage_err("heat"))?;
    let (f, grad_f) = matching_field(&cloud, config.t, grid).map_err(stage_err("poisson"))?;
    let hess_sup = fields::hessian_sup_norm(&f);
    let dirichlet = grad_f.l2_norm_sq();

    let uniform = vec![grid.quadrature_weight(); grid.len()];
    let opts = SolveOptions {
        tol_mass: config.tol_mass,
        ..Default::default()
    };
    let plan = solve_semidiscrete_with(&cloud, grid, &uniform, &opts).map_err(stage_err("semidiscrete"))?;
    let t_map = TransportMapGrid::from_plan(&plan);
    let (s_map, _) = TransportMapGrid::from_field(&grad_f);
    let l2 = map_l2_distance(&t_map, &s_map).map_err(stage_err("maps"))?;
    let linf = linf_map_distance(&t_map);
    let checks = sub_seed(config.seed, stage::CHECKS);
    let monotone_violation = c_cyclical_violation(&t_map, &random_pairs(grid, CHECK_PAIRS, checks));
    let feasibility = feasibility_violation(&plan, checks ^ 1);
    let (grad_ratio, antipodal) = match grad_potential_from_map(&t_map) {
        Ok(grad_n) => {
            let diff = VectorField::new(
                grid,
                grad_n.components().0.iter().zip(grad_f.components().0).map(|(a, b)| a - b).collect(),
                grad_n.components().1.iter().zip(grad_f.components().1).map(|(a, b)| a - b).collect(),
            )
            .map_err(stage_err("maps"))?;
            let denom = grad_n.l2_norm_sq();
            ((denom > 0.0).then(|| diff.l2_norm_sq() / denom), false)
        }
        Err(Error::Antipodal { .. }) => (None, true),
        Err(e) => return Err(stage_err("maps")(e)),
    };

    let warm = SolveOptions {
        tol_mass: config.tol_mass,
        initial_weights: Some(plan.weights.clone()),
        ..Default::default()
    };
    let plan_t = solve_semidiscrete_density(&cloud, &mu_t, &warm).map_err(stage_err("reweighted"))?;

    let push = pushforward_density(&grad_f, config.samples_per_cell, sub_seed(config.seed, stage::PUSHFORWARD))
        .map_err(stage_err("pushforward"))?;
    let hat = push.density;
    let plan_hat = solve_semidiscrete_density(&cloud, &hat, &warm).map_err(stage_err("reweighted"))?;

    let one = ScalarField::constant(grid, 1.0);
    let sk = |a: &ScalarField, b: &ScalarField| sinkhorn_w2(a, b, &config.sinkhorn).map_err(stage_err("sinkhorn"));
    let munt_hat = sk(&mu_t, &hat)?;
    let m_munt = sk(&one, &mu_t)?;
    let m_hat = sk(&one, &hat)?;

    let mun_munt = Interval::of_plan(&plan_t);
    let mun_hat = Interval::of_plan(&plan_hat);
    let event_a = hess_sup < config.xi;
    let stability_bound = C_STAB * (mun_hat.upper + mun_hat.upper.sqrt() * m_hat.upper.sqrt());
    let w_m_mun = plan.w2sq.sqrt();
    // raster discretization: every cost carries an O(h) transport slack
    let triangle_ok = w_m_mun <= m_munt.upper.sqrt() + mun_munt.upper.sqrt() + h;
    Ok(Measurements {
        w2sq_m_mun: plan.w2sq,
        dual_m_mun: plan.dual_value,
        l2_t_vs_ansatz: l2,
        w2sq_mun_munt: mun_munt,
        heat_ceiling: 4.0 * config.t,
        w2sq_munt_hat: munt_hat,
        w2sq_m_munt: m_munt,
        w2sq_m_hat: m_hat,
        w2sq_mun_hat: mun_hat,
        hess_sup,
        grad_sup: grad_f.sup_norm(),
        event_a,
        dirichlet,
        grad_ratio,
        antipodal,
        linf_disp: linf,
        max_mass_error: plan.diagnostics.max_mass_error,
        monotone_violation,
        feasibility_violation: feasibility,
        pushforward_sigma: push.sigma,
        stability_bound,
        stability_ok: event_a.then_some(l2 <= stability_bound),
        triangle_ok,
        transport_inequality_ok: m_munt.lower <= C_TI * dirichlet,
    })
}

/// Runs one trial. Invalid configurations are errors; solver failures
/// produce a record naming the failed stage.
pub fn run_trial(config: &TrialConfig) -> Result<TrialRecord> {
    config.validate()?;
    let start = Instant::now();
    let (failure, measurements) = match measure(config) {
        Ok(m) => (None, Some(m)),
        Err(f) => (Some(f), None),
    };
    Ok(TrialRecord {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        failure,
        measurements,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

// --- sweeps ----------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub ns: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    /// Settings shared by every trial; its `n`, `seed` and schedule are
    /// replaced per trial.
    pub template: TrialConfig,
}

impl SweepPlan {
    /// The standard desk-scale sweep: `n ∈ {256, 1024, 4096}`, 32 trials.
    pub fn standard(domain: Domain, base_seed: u64) -> Result<Self> {
        Ok(SweepPlan {
            ns: vec![256, 1024, 4096],
            trials: 32,
            base_seed,
            template: TrialConfig::new(domain, 256, 0)?,
        })
    }

    pub fn configs(&self) -> Result<Vec<TrialConfig>> {
        if self.ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("sweep sizes must be strictly increasing".into()));
        }
        let mut out = Vec::new();
        for &n in &self.ns {
            for i in 0..self.trials {
                let (t, xi) = schedule_with_alpha(n, self.template.alpha)?;
                let c = TrialConfig {
                    n,
                    seed: trial_seed(self.base_seed, n, i),
                    t,
                    xi,
                    ..self.template.clone()
                };
                c.validate()?;
                out.push(c);
            }
        }
        Ok(out)
    }
}

/// Runs the configs not already in `done` on `jobs` threads, handing each
/// record to `sink` as it completes. Returns the new records in config
/// order.
pub fn run_sweep(
    configs: &[TrialConfig],
    jobs: usize,
    done: &HashSet<(usize, u64)>,
    sink: &(dyn Fn(&TrialRecord) + Sync),
) -> Result<Vec<TrialRecord>> {
    let todo: Vec<&TrialConfig> = configs.iter().filter(|c| !done.contains(&(c.n, c.seed))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    pool.install(|| {
        todo.par_iter()
            .map(|c| {
                let r = run_trial(c)?;
                sink(&r);
                Ok(r)
            })
            .collect()
    })
}

/// Orders records by `(n, position in the plan)`, dropping records outside
/// the plan and duplicates.
pub fn order_records(plan_configs: &[TrialConfig], records: Vec<TrialRecord>) -> Vec<TrialRecord> {
    let mut out = Vec::new();
    for c in plan_configs {
        if let Some(r) = records.iter().find(|r| r.key() == (c.n, c.seed)) {
            out.push(r.clone());
        }
    }
    out
}

// --- aggregation -----------------------------------------------------------------

/// Mean with a normal-approximation 95% confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let k = values.len();
        if k == 0 {
            return Stat {
                mean: f64::NAN,
                ci_low: f64::NAN,
                ci_high: f64::NAN,
                count: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / k as f64;
        let half = if k > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            1.96 * (var / k as f64).sqrt()
        } else {
            0.0
        };
        Stat {
            mean,
            ci_low: mean - half,
            ci_high: mean + half,
            count: k,
        }
    }

    pub fn scaled(&self, s: f64) -> Stat {
        let (a, b) = (self.ci_low * s, self.ci_high * s);
        Stat {
            mean: self.mean * s,
            ci_low: a.min(b),
            ci_high: a.max(b),
            count: self.count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub trials: usize,
    pub failed: usize,
    pub w2sq_m_mun: Stat,
    pub l2_t_vs_ansatz: Stat,
    pub w2sq_mun_munt: Stat,
    pub w2sq_munt_hat: Stat,
    pub hess_sup: Stat,
    pub dirichlet: Stat,
    pub grad_ratio: Stat,
    pub linf_disp: Stat,
    pub runtime_seconds: Stat,
    pub event_frequency: f64,
    pub event_count: usize,
    /// `4πn E[W₂²(m, μⁿ)] / ln n`.
    pub r1: Stat,
    /// `E[l2_t_vs_ansatz] / (ln n / n)`.
    pub r2: Stat,
    /// `√(ln ln n / ln n)`, the rate `r₂` is measured against.
    pub r2_reference: f64,
    /// `E[W₂²(μⁿ, μ^{n,t})] · n / ln ln n`.
    pub r3: Stat,
    /// `E[W₂²(μ^{n,t}, μ̂^{n,t})] · n ln n`.
    pub r4: Stat,
}

/// Per-`n` aggregates in increasing `n`.
pub fn aggregate(records: &[TrialRecord]) -> Vec<Aggregate> {
    let mut ns: Vec<usize> = records.iter().map(|r| r.config.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .map(|n| {
            let rs: Vec<&TrialRecord> = records.iter().filter(|r| r.config.n == n).collect();
            let ms: Vec<&Measurements> = rs.iter().filter_map(|r| r.ok()).collect();
            let col = |f: &dyn Fn(&Measurements) -> f64| Stat::of(&ms.iter().map(|m| f(m)).collect::<Vec<_>>());
            let nf = n as f64;
            let ln = nf.ln();
            let w2 = col(&|m| m.w2sq_m_mun);
            let l2 = col(&|m| m.l2_t_vs_ansatz);
            let d1 = col(&|m| m.w2sq_mun_munt.upper);
            let d2 = col(&|m| m.w2sq_munt_hat.midpoint());
            let grads: Vec<f64> = ms.iter().filter_map(|m| m.grad_ratio).collect();
            let events = ms.iter().filter(|m| m.event_a).count();
            Aggregate {
                n,
                trials: rs.len(),
                failed: rs.len() - ms.len(),
                w2sq_m_mun: w2,
                l2_t_vs_ansatz: l2,
                w2sq_mun_munt: d1,
                w2sq_munt_hat: d2,
                hess_sup: col(&|m| m.hess_sup),
                dirichlet: col(&|m| m.dirichlet),
                grad_ratio: Stat::of(&grads),
                linf_disp: col(&|m| m.linf_disp),
                runtime_seconds: Stat::of(&rs.iter().map(|r| r.runtime_seconds).collect::<Vec<_>>()),
                event_frequency: if ms.is_empty() { f64::NAN } else { events as f64 / ms.len() as f64 },
                event_count: events,
                r1: w2.scaled(4.0 * PI * nf / ln),
                r2: l2.scaled(nf / ln),
                r2_reference: (ln.ln() / ln).sqrt(),
                r3: d1.scaled(nf / ln.ln()),
                r4: d2.scaled(nf * ln),
            }
        })
        .collect()
}

pub fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// Least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len().min(ys.len()) as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Frequency of `{linf_disp > eps}` among the successful trials, per `n`.
pub fn prob_large_displacement(records: &[TrialRecord], eps: f64) -> Vec<(usize, f64)> {
    aggregate_by_n(records, |ms| ms.iter().filter(|m| m.linf_disp > eps).count() as f64 / ms.len() as f64)
}

fn aggregate_by_n(records: &[TrialRecord], f: impl Fn(&[&Measurements]) -> f64) -> Vec<(usize, f64)> {
    let mut ns: Vec<usize> = records.iter().map(|r| r.config.n).collect();
    ns.sort_unstable();
    ns.dedup();
    ns.into_iter()
        .filter_map(|n| {
            let ms: Vec<&Measurements> = records.iter().filter(|r| r.config.n == n).filter_map(|r| r.ok()).collect();
            (!ms.is_empty()).then(|| (n, f(&ms)))
        })
        .collect()
}

// --- L∞ against L² ---------------------------------------------------------------

/// One optimal-map observation for the exponent report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinfSample {
    pub n: usize,
    pub linf: f64,
    /// `∫ d²(id, T) dm`.
    pub l2: f64,
    pub monotone_violation: f64,
}

impl LinfSample {
    pub fn from_record(r: &TrialRecord) -> Option<Self> {
        r.ok().map(|m| LinfSample {
            n: r.config.n,
            linf: m.linf_disp,
            l2: m.w2sq_m_mun,
            monotone_violation: m.monotone_violation,
        })
    }

    /// Measures an arbitrary map; `pairs` feed the monotonicity check.
    pub fn from_map(t: &TransportMapGrid, pairs: &[(usize, usize)]) -> Self {
        LinfSample {
            n: 0,
            linf: linf_map_distance(t),
            l2: map_l2_distance(&TransportMapGrid::identity(t.grid), t).unwrap_or(f64::NAN),
            monotone_violation: c_cyclical_violation(t, pairs),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinfReport {
    pub used: usize,
    /// Samples refused because the map fails the monotonicity check.
    pub rejected: usize,
    /// Largest `linf / l2^{1/4}` among the used samples.
    pub fitted_constant: f64,
    /// Samples above `C_FIT · l2^{1/4}`.
    pub violations: usize,
    /// Log-log regression slope of `linf` on `l2`.
    pub slope: f64,
    pub slope_in_band: bool,
}

/// Checks `linf ≤ C_FIT · l2^{1/4}` on optimal maps only.
pub fn linf_exponent_report(samples: &[LinfSample]) -> LinfReport {
    let (used, rejected): (Vec<&LinfSample>, Vec<&LinfSample>) =
        samples.iter().partition(|s| s.monotone_violation <= MONOTONE_TOL && s.l2 > 0.0);
    let fitted = used.iter().map(|s| s.linf / s.l2.powf(0.25)).fold(0.0, f64::max);
    let violations = used.iter().filter(|s| s.linf > C_FIT * s.l2.powf(0.25)).count();
    let xs: Vec<f64> = used.iter().map(|s| s.l2.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|s| s.linf.ln()).collect();
    let slope = if used.len() >= 2 { ols_slope(&xs, &ys) } else { f64::NAN };
    LinfReport {
        used: used.len(),
        rejected: rejected.len(),
        fitted_constant: fitted,
        violations,
        slope,
        slope_in_band: slope >= SLOPE_BAND.0 && slope <= SLOPE_BAND.1,
    }
}

// --- tables ----------------------------------------------------------------------

/// Header of [`summary_csv`].
pub const SUMMARY_HEADER: &str = "schema_version,n,trials,failed,w2sq_m_mun,w2sq_m_mun_ci_low,w2sq_m_mun_ci_high,\
l2_t_vs_ansatz,l2_ci_low,l2_ci_high,w2sq_mun_munt,w2sq_munt_hat,hess_sup,dirichlet,grad_ratio,linf_disp,\
event_frequency,r1,r2,r2_reference,r3,r4,runtime_seconds";

/// One row per `n`.
pub fn summary_csv(aggs: &[Aggregate]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for a in aggs {
        let cells = [
            a.w2sq_m_mun.mean,
            a.w2sq_m_mun.ci_low,
            a.w2sq_m_mun.ci_high,
            a.l2_t_vs_ansatz.mean,
            a.l2_t_vs_ansatz.ci_low,
            a.l2_t_vs_ansatz.ci_high,
            a.w2sq_mun_munt.mean,
            a.w2sq_munt_hat.mean,
            a.hess_sup.mean,
            a.dirichlet.mean,
            a.grad_ratio.mean,
            a.linf_disp.mean,
            a.event_frequency,
            a.r1.mean,
            a.r2.mean,
            a.r2_reference,
            a.r3.mean,
            a.r4.mean,
            a.runtime_seconds.mean,
        ];
        out.push_str(&format!("{SCHEMA_VERSION},{},{},{}", a.n, a.trials, a.failed));
        for c in cells {
            out.push_str(&format!(",{c:e}"));
        }
        out.push('\n');
    }
    out
}

/// Header of every plot-data table.
pub const PLOT_HEADER: &str = "x,y,ci_low,ci_high";

/// Plot-data tables `(file stem, CSV)`: `r1 … r4` and `grad_ratio` against
/// `n`, and `ln linf` against `ln l2` per trial.
pub fn plot_data(aggs: &[Aggregate], samples: &[LinfSample]) -> Vec<(String, String)> {
    let series = |f: &dyn Fn(&Aggregate) -> Stat| {
        let mut s = format!("{PLOT_HEADER}\n");
        for a in aggs {
            let st = f(a);
            s.push_str(&format!("{},{:e},{:e},{:e}\n", a.n, st.mean, st.ci_low, st.ci_high));
        }
        s
    };
    let mut out = vec![
        ("r1".to_string(), series(&|a| a.r1)),
        ("r2".to_string(), series(&|a| a.r2)),
        ("r3".to_string(), series(&|a| a.r3)),
        ("r4".to_string(), series(&|a| a.r4)),
        ("grad_ratio".to_string(), series(&|a| a.grad_ratio)),
    ];
    let mut s = format!("{PLOT_HEADER}\n");
    for p in samples.iter().filter(|p| p.l2 > 0.0 && p.linf > 0.0) {
        let (x, y) = (p.l2.ln(), p.linf.ln());
        s.push_str(&format!("{x:e},{y:e},{y:e},{y:e}\n"));
    }
    out.push(("linf_exponent".to_string(), s));
    out
}

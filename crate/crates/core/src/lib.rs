//! # sdmatch
//!
//! A numerical laboratory for the semi-discrete random matching problem on
//! the flat torus and the unit square.
//!
//! Given `n` uniform random points, the optimal transport map `Tⁿ` from the
//! reference measure `m` to the empirical measure `μⁿ` is compared with the
//! map `exp(∇f^{n,t})`, where `f^{n,t}` solves `-Δf = P_t μⁿ - 1` with zero
//! mean and `P_t` is the heat semigroup.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`geometry`] | domains, distance, `exp`/`log`, grids |
//! | [`fields`] | spectral transforms, gradient, Hessian, interpolation |
//! | [`heat_poisson`] | point clouds, heat smoothing, Poisson solve |
//! | [`hopflax`] | Hopf–Lax semigroup by grid minimization and by characteristics |
//! | [`transport`] | semi-discrete solver, exact discrete LP, entropic bracket, map metrics |
//! | [`stability`] | quantitative stability of optimal maps under target perturbation |
//! | [`experiments`] | seeded Monte Carlo trials and sweeps |
//! | [`verify`] | the named property suite behind `sdmatch verify` |

use thiserror::Error;

pub mod experiments;
pub mod fields;
pub mod geometry;
pub mod heat_poisson;
pub mod hopflax;
pub mod rng;
pub mod stability;
pub mod transport;
pub mod verify;

pub use geometry::{Domain, Grid, Point, TangentVector};

#[derive(Debug, Error)]
pub enum Error {
    #[error("resolution mismatch: expected {expected} values, found {found}")]
    ResolutionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("mean is {found}, expected {expected}")]
    BadMean { expected: f64, found: f64 },

    #[error("grid under-resolved for t = {t}: spectral tail {tail:e} at Nyquist; need N >= {required}")]
    UnderResolved { t: f64, tail: f64, required: usize },

    #[error("time step outside the admissible range: t·(|∇f|∞ + |∇²f|∞) = {product} > {limit}")]
    TimeTooLarge { product: f64, limit: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("Laguerre cell of atom {atom} is empty at convergence; grid too coarse")]
    EmptyCell { atom: usize },

    #[error("total masses differ: {0:e} vs {1:e}")]
    MassMismatch(f64, f64),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("displacement at cell {cell} reaches the antipodal threshold")]
    Antipodal { cell: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;

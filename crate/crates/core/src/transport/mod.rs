//! Optimal transport solvers and transport-map diagnostics.
//!
//! - [`solve_semidiscrete`] / [`solve_semidiscrete_density`]: grid source
//!   (uniform or weighted) to a point cloud, by damped Newton ascent on the
//!   Kantorovich dual over raster Laguerre cells.
//! - [`solve_atomic_uniform`]: equal-mass atomic source to a point cloud of
//!   the same size, by ε-scaled auction.
//! - [`discrete_ot_exact`]: exact discrete transport between weighted atom
//!   sets (successive shortest paths with potentials).
//! - [`sinkhorn_w2`]: certified entropic bracket for `W₂²` between two grid
//!   densities.
//! - [`TransportMapGrid`] and the map metrics.

mod auction;
mod exact;
mod laguerre;
mod maps;
mod sinkhorn;

pub use auction::{solve_atomic_uniform, AtomicPlan};
pub use exact::{discrete_ot_exact, DiscretePlan, MAX_EXACT_ATOMS};
pub use laguerre::{
    solve_semidiscrete, solve_semidiscrete_density, solve_semidiscrete_with, SemiDiscretePlan, SolveDiagnostics,
    SolveOptions, DEFAULT_TOL_MASS,
};
pub use maps::{
    c_cyclical_violation, grad_potential_from_map, linf_map_distance, map_l2_distance, pushforward_density,
    Pushforward, MIN_SAMPLES_PER_CELL, TransportMapGrid,
};
pub use sinkhorn::{sinkhorn_w2, Bracket, SinkhornOptions};

//! Exponential decay rates of random walks confined to convex cones.
//!
//! The non-exit probability `P^x[τ_K > n]` of a random walk with increment
//! law `μ` decays like `ρ^n`, where `ρ` is the minimum of the Laplace
//! transform of `μ` over the dual cone `K*`. This crate computes `ρ` with a
//! KKT certificate and checks it against exact walk enumeration, Monte Carlo
//! with exponential tilting, and closed-form special families.

pub mod cone;
pub mod corpus;
pub mod enumerate;
pub mod error;
pub mod families;
pub mod laplace;
pub mod linalg;
pub mod lp;
pub mod montecarlo;
pub mod solver;
pub mod step;

pub use cone::{ConeKind, ConeLiteral, ConeSpec};
pub use corpus::CorpusModel;
pub use enumerate::{
    count_walks, cramer_identity_check, default_delta_grid, end_point_counts, end_point_masses,
    estimate_rate, find_delta, series_rows, CountSeries, DeltaSearch, EnumMode, EnumOptions,
    RateEstimate, SeriesRow, SeriesValue,
};
pub use error::{Error, Result};
pub use families::{
    halfspace_model, halfspace_rate, halfspace_verify, segment_rate, HalfspaceReport,
};
pub use laplace::{Direction, LaplaceModel};
pub use montecarlo::{
    band_decay_check, band_survival, default_band_alpha, simulate_survival, survival_profile,
    tilted_survival, BandCheck, BandFit, McEstimate, SimConfig,
};
pub use solver::{
    brownian_rate, growth_constant, hyperplane_scan, minimize_on_dual, upper_bound_at,
    GrowthConstant, HypothesisFlags, RateCertificate, ScanResult, SolverOptions,
};
pub use step::{check_h3, H2Check, H3Check, Lattice, Mode, StepFile, StepMeasure};

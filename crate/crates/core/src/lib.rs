//! Numerical calculus on a graded scale of periodic function spaces.
//!
//! One array of Fourier coefficients on the circle carries a whole family of
//! weighted norms ‖·‖_0 ≤ ‖·‖_1 ≤ …, modelling a nested scale of Banach
//! spaces. On top of that scale the crate provides
//!
//! * frequency-cutoff smoothing operators with certified constants and a
//!   property verifier for their two defining inequalities,
//! * linear operators with declared order, finite-rank smooth perturbations,
//!   and SVD-based kernel/cokernel/index analysis,
//! * nonlinear map bundles with derivative and family inverse, empirical
//!   tame-constant estimation and differentiability probes,
//! * a smoothed Newton iteration on the schedule t_r = b^r together with a
//!   plain Newton comparator, trace instrumentation, decay fits and a local
//!   finite-dimensional reduction,
//! * a catalog of concrete maps: the circle reparametrisation action with
//!   its bump counterexample, a quasilinear derivative-losing map, and
//!   elliptic model operators.

pub mod error;
pub mod graded;
pub mod operators;
pub mod problems;
pub mod reduction;
pub mod smoothing;
pub mod solver;
pub mod tame;

pub use error::{Error, Result};
pub use graded::{
    analyze, fit_decay_exponent, grid_angles, linear_fit, random_vector, weight, DecayEstimate,
    GradedVector, NormScale,
};
pub use operators::{
    analyze_fredholm, bandwidth_stability, certify_order, fredholm_inverse,
    index_additivity_check, index_invariance_experiment, random_strongly_smoothing,
    regularity_check, FredholmReport, GradedOperator, RegularityStatus,
    StronglySmoothingOperator, DEFAULT_RANK_TOL,
};
pub use smoothing::{
    default_t_grid, verify_smoothing_family, CutoffKind, SmoothingFamily, SmoothingReport,
};

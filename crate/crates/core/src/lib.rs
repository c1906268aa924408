//! Robust matrix completion toolkit: recover a low-rank matrix from
//! partially observed entries corrupted by sparse outliers.
//!
//! The solver alternates an entrywise thresholding step for the outlier
//! estimate with a rank-r singular value projection for the low-rank
//! estimate, under a geometrically decaying threshold schedule. The crate
//! also ships the synthetic problem model used to exercise it, a
//! phase-transition benchmark harness, and numerical verification oracles
//! for the deterministic inequalities the method's analysis rests on.
//!
//! Requires a system OpenBLAS (`libopenblas`) for the dense factorization
//! kernels.

pub mod error;
pub mod harness;
mod lapack;
pub mod matrix;
pub mod oracles;
pub mod problem;
pub mod rng;
pub mod solver;
pub mod svd;
pub mod threshold;

pub use error::{Error, Result};
pub use matrix::{DenseMatrix, Norms};
pub use problem::{
    check_assumptions, gen_ground_truth, gen_instance, inject_outliers, sample_mask,
    AssumptionReport, GroundTruth, Instance, InstanceParams, ObservationSet, SampleMask,
    SparsityStats, Triplet,
};
pub use solver::{
    beta_data_driven, l_update, s_update, solve, solve_rrmc, BetaSpec, IterateState,
    IterationRecord, SolveTrace, SolverConfig, TerminationReason,
};
pub use svd::{incoherence, rank_r_project, spectral_norm, truncated_svd, IncoherenceReport, SvdFactors};
pub use threshold::{apply_scalar, apply_sparse, property_grid, verify_properties, PropertyReport, ThresholdKind};

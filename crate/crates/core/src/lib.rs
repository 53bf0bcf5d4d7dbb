//! Generalized unistochastic matrices.
//!
//! A ds×ds unitary `U`, viewed as a d×d grid of s×s blocks, maps to the
//! bistochastic matrix `φ_{d,s}(U)_{ij} = ||U_ij||_F² / s`. This crate builds
//! such unitaries, screens bistochastic matrices with bracelet-type tests,
//! approximates arbitrary bistochastic matrices by images of φ, certifies
//! membership numerically, and samples the pushforward of Haar measure.

pub mod birkhoff;
pub mod blockmaps;
pub mod bracelet;
pub mod error;
pub mod fixtures;
pub mod formats;
mod linalg;
pub mod matcore;
pub mod membership;
pub mod perm;
pub mod randhaar;
pub mod stats;

pub use birkhoff::{
    approximate_by_generalized_unistochastic, birkhoff_decompose, BirkhoffDecomposition, BirkhoffTerm,
    RationalApproximation,
};
pub use blockmaps::{direct_sum_mix, direct_sum_mix_all, phi, realify, tensor_embed, u_q, OrthogonalEmbedding};
pub use bracelet::{
    bracelet_pair, emit_e_set, generalized_necessary, is_bracelet_matrix, is_generalized_bracelet_matrix,
    segment_lattice, slice_membership, unistochastic3, ProbabilityVectorPair, RejectionReason, Verdict,
};
pub use error::{Error, Result};
pub use matcore::{
    frobenius_norm_sq, is_unitary, validate_bistochastic, BistochasticMatrix, BlockUnitary, ComplexMatrix,
    ProbabilityVector, Tolerance, C64,
};
pub use membership::{
    certify_membership, certify_membership_from, numerical_search, objective, pair_feasibility, MembershipVerdict,
    Method, SolverConfig, Status,
};
pub use perm::Permutation;
pub use randhaar::{
    estimate_correlations, estimate_moments, haar_unitary, hypocycloid, sample_mu, sample_simplex_slice, spectrum,
    CorrelationReport, MomentReport,
};

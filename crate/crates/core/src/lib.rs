//! Numerical laboratory for the arithmetic of twisted modular L-functions.
//!
//! The crate implements, and cross-validates against brute force, the
//! explicitly computable objects that drive second-moment computations for
//! `L(1/2, f ⊗ χ)`: Kloosterman sums and their explicit prime-power
//! evaluations, complete sums of products of Kloosterman sums, Weyl
//! differencing and completion, congruence-solution censuses around p-adic
//! stationary phase, Bessel/Hankel kernels, Voronoi summation, Jutila's
//! circle method, and the character-averaged moment experiment itself.
//!
//! Everything is desk-scale by design: moduli fit in `u64`, complete sums
//! are checked against direct summation, and analytic bounds are calibrated
//! empirically through [`report::BoundReport`] rather than asserted with
//! unknowable implied constants.

pub mod arith;
pub mod characters;
pub mod congruence;
pub mod expsum;
pub mod hecke;
pub mod kernels;
pub mod moments;
pub mod ntt;
pub mod report;
pub mod rng;

pub use arith::{Factorization, PrimePowerModulus, SqrtBranch};
pub use report::BoundReport;

use thiserror::Error;

/// Errors shared by all modules.
#[derive(Debug, Error)]
pub enum Error {
    /// Input outside an operation's mathematical domain (non-residue,
    /// non-coprime, wrong congruence class, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// Structurally valid input that the implementation refuses to process
    /// (unsupported weight, modulus too large for exact summation, ...).
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A coefficient table does not extend far enough for the request.
    #[error("table exhausted: {0}")]
    TableExhausted(String),
    /// Hypotheses of a lemma-audit are not met; the audit is inconclusive
    /// rather than failed.
    #[error("hypotheses not met: {0}")]
    HypothesesNotMet(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

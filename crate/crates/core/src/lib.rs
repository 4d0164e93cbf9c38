//! Contextuality certification for prepare-measure fragments.
//!
//! A fragment is a finite list of pure preparations and binary projective
//! tests. Its matrix of conditional outcome probabilities (the COPE matrix)
//! admits a noncontextual ontological model only if it has an equirank
//! nonnegative factorization. This crate builds COPE matrices for the
//! built-in scenarios (two-state discrimination, state-dependent cloning,
//! phase-covariant and universal cloning), bounds the ontic dimension from
//! the zero pattern, and reports a rank-separation verdict.

pub mod cli;
pub mod cloning;
pub mod error;
pub mod fragments;
pub mod io;
pub mod nmf;
pub mod quantum;
pub mod rank;
pub mod solvers;

pub use error::{Error, Result};
pub use fragments::{CopeMatrix, FactoredCope, Fragment, MeqsdParams, SdcParams};
pub use quantum::{CloneCoefficients, HermitianVec, Ket};
pub use rank::{Outcome, SpernerBound, Verdict, ZeroPattern};

/// Dense real matrix used throughout the public API.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Schema tag carried by every file and report this crate writes.
pub const SCHEMA: &str = "copectx/1";

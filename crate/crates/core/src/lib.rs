//! Finite-N microcanonical velocity law and its Stein/Jacobi goodness-of-fit test.
//!
//! The one-dimensional marginal of N particles spread uniformly over the
//! fixed-energy hypersphere (normalised so that `Σ v² = N`) has density
//!
//! ```text
//! p_N(x) = C_N (1 - x²/N)^((N-3)/2),   |x| < √N
//! ```
//!
//! This crate provides:
//!
//! - [`specfun`]: the scalar special functions everything else is built on;
//! - [`dist`]: the law itself (density, CDF, quantile, samplers, likelihoods,
//!   Kullback–Leibler divergence to the standard Gaussian and the associated
//!   large-deviation power proxy);
//! - [`jacobi`]: symmetric Jacobi polynomials, the Stein operator and the
//!   orthonormal Stein basis;
//! - [`stein`]: the targeted test statistic `T = Σ_{k∈K} μ̂_k²` and decision;
//! - [`edf`]: Kolmogorov–Smirnov, Cramér–von Mises and Anderson–Darling
//!   baselines against the same CDF;
//! - [`harness`]: reproducible Monte Carlo calibration, size/power grids,
//!   the Sanov table and the EDF comparison;
//! - [`output`]: CSV/JSON serialisation shared by the CLI.

mod dd;
pub mod dist;
pub mod edf;
mod error;
pub mod harness;
pub mod jacobi;
pub mod output;
pub mod rng;
pub mod specfun;
pub mod stein;

pub use dist::{FiniteNLaw, Sample};
pub use edf::{edf_statistics, EdfStatistics};
pub use error::{Error, Result};
pub use harness::{
    CalibrationEntry, CalibrationTable, CompareRow, CompareSpec, CutoffKind, GridReport, GridSpec, Hypothesis,
    PowerRow, SanovTable,
};
pub use jacobi::JacobiBasis;
pub use stein::{CutoffSource, Standardization, SteinTestConfig, TestReport};

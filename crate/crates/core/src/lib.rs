//! Knockoff-augmented multiple testing for high-dimensional linear models.
//!
//! The pipeline augments a design `X` with model-X knockoff copies `X̃`, fits a
//! Lasso on `Z = (X, X̃)`, debiases it with a CLIME decorrelating matrix, and
//! turns the sum/difference halves of the debiased coefficients into paired
//! z-statistics. Those feed the Benjamini–Hochberg procedure (on the knockoff
//! difference family) or the two-step Bonferroni–BH procedure (on the pairs).
//!
//! Module map:
//!
//! * [`knockoffs`]: second-order Gaussian knockoff construction.
//! * [`sparse`]: Lasso (point, entry path, cross-validation), scaled Lasso, CLIME.
//! * [`inference`]: debiasing, `Λ̂`, paired statistics and the end-to-end fit.
//! * [`testing`]: BH, Bonferroni–BH, the knockoff filter, and scoring.
//! * [`experiments`]: simulation designs and the replication harness.
//! * [`io`]: CSV ingestion and result serialization.

pub mod error;
pub mod experiments;
pub mod inference;
pub mod io;
pub mod knockoffs;
pub mod linalg;
pub mod normal;
pub mod rng;
pub mod sparse;
pub mod testing;

pub use error::{Error, Result};

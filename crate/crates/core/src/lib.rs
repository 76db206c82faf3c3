//! Interior partial singular value decomposition by complex-moment contour
//! integration.
//!
//! Given `A` and an interval `[a, b]`, [`pipeline::solve`] returns the singular
//! triplets with `σ ∈ [a, b]`. Moments of the resolvent of `AᵀA` are sampled on
//! an elliptic contour, optionally after an exponential change of variable
//! that spreads out clustered small singular values.

pub mod bench;
pub mod contour;
pub mod error;
pub mod extract;
pub mod filter;
pub mod matrix;
pub mod moments;
pub mod oracle;
pub mod pipeline;
pub mod postprocess;
pub mod problems;
pub mod report;
pub mod shifted_solver;
pub mod verify;

#[cfg(test)]
mod testutil;

pub use contour::{ContourRule, Transform};
pub use error::{Result, SsError};
pub use extract::TripletSet;
pub use matrix::{CsrMatrix, ProblemMatrix};
pub use moments::SsParams;
pub use pipeline::{solve, Mode, RunConfig, Solution};

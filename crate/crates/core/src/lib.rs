//! Matrix-level simulator of block-encoding algorithms that test convexity and
//! monotonicity of polynomials on a grid of sample points.
//!
//! Modules, bottom-up:
//! - [`poly`]: univariate and multivariate polynomials, derivatives, domain remapping and
//!   certified sup-norm bounds.
//! - [`blockenc`]: simulated block encodings and the lemmas that compose them, each
//!   charging a [`blockenc::ResourceLedger`].
//! - [`qsvt`]: polynomial eigenvalue transformation and the `M`, `M1`, `M2` family.
//! - [`estimate`]: eigenvalue and amplitude estimation with seeded noise, and the overlap gadget.
//! - [`tester`]: the four shape tests and their verdicts.
//! - [`oracle`]: brute-force reference used to check every verdict.
//! - [`cli`]: the `qshape` command-line front end.

pub mod blockenc;
pub mod cli;
pub mod error;
pub mod estimate;
pub mod oracle;
pub mod poly;
pub mod qsvt;
pub mod tester;

pub use error::{Error, Result};

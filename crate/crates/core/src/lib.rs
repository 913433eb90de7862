//! Relative-fit significance tests for Gaussian mixture clustering.
//!
//! The crate provides the RIFT family of tests (log-likelihood, median and
//! L2 variants), the SigClust parametric bootstrap, Mardia and
//! nearest-neighbour normality tests, hierarchical and sequential clustering
//! driven by those tests, and closed-form asymptotics for the SigClust power
//! curve.

pub mod bench;
pub mod dist;
pub mod error;
pub mod fitters;
pub mod hypothesis;
pub mod io;
pub mod quad;
pub mod rng;
pub mod select;
pub mod special;
pub mod theory;
pub mod tree;

pub use dist::{DataMatrix, Density, FitConstraints, Gaussian, Mixture, Region};
pub use error::{Error, Result};
pub use rng::RngStream;

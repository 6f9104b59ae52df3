//! Saliency-aware point cloud simplification for surface reconstruction.
//!
//! The crate reduces a dense, possibly noisy point cloud to a smaller one
//! that still supports faithful, well-shaped triangulation. It combines
//! a learned row-stochastic sampling matrix (annealed toward one-hot
//! selection), a double-scale refinement head that nudges selected points
//! toward uniform coverage, saliency-adaptive patching, and an evaluation
//! suite of fidelity and mesh-quality metrics.
//!
//! Entry points:
//! - [`pipeline::simplify_cloud`] runs the full chain on a cloud.
//! - [`trainer`] fits the network on patch sets.
//! - [`metrics`] scores a candidate against ground truth.
//! - the `pcs` binary exposes everything as subcommands.

pub mod error;
pub mod autodiff;
pub mod geom;
pub mod gradsuite;
pub mod io;
pub mod losses;
pub mod network;
pub mod patching;
pub mod pipeline;
pub mod metrics;

pub mod saliency;
pub mod trainer;

pub use error::{Error, Result};

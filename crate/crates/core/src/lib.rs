//! Provable repair of feedforward neural networks.
//!
//! Given a network and a repair specification — finitely many points or
//! V-polytopes, each paired with a linear formula its outputs must satisfy —
//! this crate computes architecture-preserving parameter edits via linear
//! programming such that the repaired network provably satisfies the
//! specification on the entire convex hull of every polytope, and it
//! independently verifies the result.
//!
//! Module map:
//! - [`nn`]: network representation, concrete execution, slicing.
//! - [`symbolic`]: affine expressions and conditional symbolic execution.
//! - [`lp`]: the repair LP, an embedded simplex solver and a sparse backend.
//! - [`repair`]: the shift-and-assert orchestration.
//! - [`verify`]: exact local-linearity checks and hull certification.
//! - [`metrics`]: accuracy, drawdown and generalization over datasets.
//! - [`io`]: file formats for networks, specs, datasets and reports.
//! - [`gen`], [`demo`]: seeded generators and built-in demo scenarios.

pub mod demo;
pub mod gen;
pub mod io;
pub mod lp;
pub mod metrics;
pub mod nn;
pub mod repair;
pub mod symbolic;
pub mod verify;

/// Tool version echoed into reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

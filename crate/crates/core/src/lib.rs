//! Constrained k-means and k-median clustering in high dimensions.
//!
//! The crate generates candidate center tuples by peeling already-found
//! clusters with balls of guessed radius and enclosing the next unknown
//! center in a small grid (a simplex grid for means, a ball family in a
//! spanning flat for medians), then selects the best tuple by solving the
//! constraint-specific partition problem exactly, via min-cost circulation
//! or bipartite matching.
//!
//! Modules:
//! - [`geometry`]: points, costs, flats, and the grid constructions.
//! - [`sampling`]: seeded randomness, subset means, the Weiszfeld oracle.
//! - [`flow`]: min-cost circulation and the Hungarian algorithm.
//! - [`partitions`]: one partition solver per supported constraint.
//! - [`oracle`]: brute-force exact solvers for desk-scale verification.
//! - [`pne`]: upper-bound estimation, candidate trees, and the solve driver.
//!
//! With the default `parallel` feature, candidate-tuple evaluation runs on
//! rayon; disabling it yields a bit-identical sequential fallback.

pub mod error;
pub mod flow;
pub mod geometry;
pub mod oracle;
mod par;
pub mod partitions;
pub mod pne;
pub mod sampling;

pub use error::{Error, Result};
pub use geometry::{Objective, Point, PointSet};
pub use partitions::{ConstraintSpec, Instance, PartitionOutcome};
pub use pne::{solve, SolveOutput, SolveParams};
pub use sampling::RandomSource;

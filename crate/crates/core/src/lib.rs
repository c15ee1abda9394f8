//! Jointly differentially private dual decomposition for linearly separable
//! convex programs.
//!
//! Agents keep their data behind best-response oracles. A dual player runs
//! noisy projected gradient descent on the prices of the coupling
//! constraints, and every agent's output depends only on the published price
//! sequence and its own data. On top of the core solver sit three mechanisms:
//! price-based repair with payments, tightened constraints with vertex
//! rounding for exact feasibility, and sparse-vector-flagged rounding.

pub mod baseline;
pub mod format;
pub mod mechanisms;
pub mod model;
pub mod ogd;
pub mod privacy;
pub mod problems;
pub mod rng;
pub mod solver;

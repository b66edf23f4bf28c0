//! Laboratory for learnability under physical constraints.
//!
//! The crate collects the constructive pieces of the framework:
//!
//! - [`emx`]: finitely supported distributions, the EMX objective, the
//!   quantile learner and Monte Carlo verification of `(ε, δ)` guarantees.
//! - [`coarse`]: finite-precision interfaces `π: X → Y`, pushforward and
//!   pullback, and learning through a coarse-grained observation channel.
//! - [`compression`]: monotone compression schemes for the finite-subset
//!   class and both directions of the learnability/compression equivalence.
//! - [`quantum`]: density matrices, POVMs, Helstrom-optimal discrimination,
//!   copy-complexity bounds and no-signaling checks.
//! - [`feasibility`]: ε-optimal sets, exact rational LP feasibility and
//!   projection-based SDP feasibility for quantum `d`-copy models.

pub mod coarse;
pub mod compression;
pub mod emx;
pub mod feasibility;
pub mod kernel;
pub mod prob;
pub mod quantum;
pub mod rng;

pub use kernel::Kernel;
pub use prob::{parse_rational, Probability};

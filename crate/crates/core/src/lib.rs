//! Spatial reaction network simulation.
//!
//! Molecules are points `(species, position)` in a box domain. Reactions fire
//! between molecules whose positions are close as measured by a compactly
//! supported proximity kernel, at spatially dependent (and optionally
//! mass-regulated) rates. The crate provides:
//!
//! * [`exact_sim`] — an event-driven simulator of the finite particle system,
//!   exact up to a configurable diffusion micro-step;
//! * [`pide`] — a finite-difference solver for the large-population limit,
//!   a system of reaction-diffusion equations with kernel-convolution
//!   reaction terms, including a Picard fixed-point mode for cross-checking;
//! * [`pdmp`] — a hybrid simulator for networks with a few discrete localized
//!   molecules coupled to abundant species: deterministic flow between jumps
//!   of the discrete counts;
//! * [`harness`] — ensemble orchestration, convergence experiments between
//!   the particle system and its limits, and statistical diagnostics
//!   (generator and quadratic-variation checks).

pub mod bundled;
pub mod error;
pub mod exact_sim;
pub mod geometry;
pub mod harness;
pub mod network;
pub mod pdmp;
pub mod pide;
pub mod rng;
pub mod state;

pub use error::{Result, SimError};

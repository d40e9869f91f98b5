//! Numerical laboratory for the planar periodic Lorentz gas with infinite
//! horizon: discs of radius `r < 1/2` centered on the unit lattice, a point
//! particle moving at unit speed between specular reflections.
//!
//! The crate covers four layers:
//!
//! * [`geometry`] — the disc lattice, collision-free corridors, and exact
//!   free-flight ray tracing by unfolding onto the plane;
//! * [`billiard_map`] — the collision-to-collision map on the phase cylinder
//!   `(s, phi)`, its derivative, the invariant measure, and Lyapunov
//!   estimation;
//! * [`cells`] — empirical reconstruction of the cell / inverse-cell
//!   structure that accumulates at supersingular phase points, one-step
//!   expansion statistics, and the crossing constants `(c, n*)`;
//! * [`symbolic`], [`measures`], [`shadowing`] — countable-state Markov
//!   chains over cell indices: the finite-entropy ladder chain, the
//!   infinite-entropy product chain, and the bridge from symbol frequencies
//!   back to finite-time expansion rates of shadowed orbits.

pub mod billiard_map;
pub mod cells;
pub mod error;
pub mod geometry;
pub mod measures;
pub mod numeric;
pub mod rng;
pub mod shadowing;
pub mod stats;
pub mod symbolic;

pub use error::{Error, Result};

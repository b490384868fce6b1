//! Online steering of unknown strongly monotone games onto target linear
//! constraints.
//!
//! Players repeatedly run noisy projected gradient ascent on their own
//! rewards while a manager, observing nothing but the violation of a set of
//! linear constraints on the joint action, adjusts a low-dimensional control
//! input on a slower timescale. The control input shifts each player's
//! utility by a linear term, which moves the unique equilibrium of the game;
//! driving the observed violation to zero steers that equilibrium onto the
//! constraints.
//!
//! Module map:
//! - [`game_model`]: game data model, gradient operator, constraint signal
//! - [`projection`]: exact projections onto the supported action sets
//! - [`dynamics`]: the coupled two-timescale iteration
//! - [`ne_oracle`]: high-accuracy equilibrium solves and the steering map
//! - [`diagnostics`]: constant estimation, sampled property checks, rate fits
//! - [`scenarios`]: seeded generators for the two experiment families
//! - [`runner`]: experiment configuration, parallel execution, file outputs

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod game_model;
pub mod ne_oracle;
pub mod projection;
pub mod runner;
pub mod scenarios;

pub use error::{Error, Result};

//! Simulation of a double-slit interference experiment with ultracold atoms
//! falling under gravity.
//!
//! A Gaussian cloud of laser-cooled neon drops from rest, is filtered by a
//! two-slit aperture 76 mm below, and lands on a detection plane another
//! 113 mm down. The wavefunction is propagated with closed-form quadratic
//! kernels; the aperture turns the state into an oscillatory integral that is
//! evaluated by guarded Simpson quadrature; detector statistics average over
//! the source's position and velocity spreads; and individual arrival events
//! come from an ensemble of velocity-field-guided trajectories that
//! reproduces the same densities.
//!
//! The `simulate` binary drives named scenarios and writes CSV artifacts; see
//! the crate README for the catalog.

pub mod aperture;
pub mod bohm;
pub mod csvio;
pub mod detector;
pub mod kernels;
pub mod model;
pub mod quad;
pub mod rng;
pub mod runner;
pub mod scaling;
pub mod wavepacket;

pub use model::{default_shimizu_config, ExperimentConfig};

//! Simulation toolkit for tethered multirobot cliff climbing on low-gravity
//! bodies.
//!
//! The crate is split by subsystem:
//!
//! - [`terrain`]: Weierstrass-Mandelbrot rough walls and asperity extraction
//! - [`grip`]: microspine/asperity engagement and grip capacity sampling
//! - [`dynamics`]: single-robot rocket hops with PD reaction-wheel control
//! - [`tether`]: tension-only spring tethers joined at a massless hub
//! - [`climber`]: tethered gait sequencing with slip recovery
//! - [`study`]: Monte Carlo failure probability and fitness trade studies
//! - [`perception`]: pinhole projection and stereo range estimation
//!
//! Every stochastic routine takes an explicit seed; identical inputs give
//! bit-identical outputs regardless of thread count.

pub mod climber;
pub mod dynamics;
pub mod grip;
pub mod perception;
pub mod rng;
pub mod study;
pub mod terrain;
pub mod tether;

pub use nalgebra::{Matrix3, UnitQuaternion, Vector2, Vector3};

/// Standard gravity used to convert specific impulse into exhaust velocity.
pub const STANDARD_GRAVITY: f64 = 9.80665;

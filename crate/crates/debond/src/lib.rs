//! Semi-analytical simulator for a thin film peeled from a substrate with
//! air friction: the weakly damped wave equation on a domain bounded by a
//! moving debonding front, solved through an explicit travelling-wave
//! representation plus a Picard fixed point, both with a prescribed front
//! and with the front driven by its energy-release criterion.
//!
//! Layout:
//! - [`geometry`]: the front, characteristic maps, zone classification and
//!   backward integration regions (all exact piecewise-linear objects);
//! - [`dalembert`]: problem data, compatibility checks and the homogeneous
//!   travelling-wave solution;
//! - [`duhamel`]: the windowed Picard solver for a prescribed front;
//! - [`energy`]: energies, external work, release rates and balance residual;
//! - [`griffith`]: toughness models, the front law and the coupled solver;
//! - [`oracle`]: an independent finite-difference reference solver;
//! - [`scenario`]: scenario files, run orchestration and CSV/report output.

pub mod dalembert;
pub mod duhamel;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod griffith;
pub mod oracle;
pub mod pwlinear;
pub mod sample;
pub mod scenario;

pub use error::{Error, Result};

//! Rigid-contact simulation of a universal joint with radial clearance.
//!
//! The input yoke and the crosspiece are coupled only through two unilateral
//! frictional wall contacts. Contacts are resolved per time step as a linear
//! complementarity problem with Newton restitution and Coulomb friction.
//!
//! - [`lcp`]: dense LCP solvers (Lemke, plus brute-force enumeration).
//! - [`model`]: parameters, Cardan kinematics, equations of motion, gaps.
//! - [`stepper`]: midpoint time-stepping and trajectory recording.
//! - [`analysis`]: impact events, energy budgets, Poincaré sections.
//! - [`config`], [`output`], [`check`], [`cli`]: the command-line front end.

pub mod analysis;
pub mod check;
pub mod cli;
pub mod config;
pub mod lcp;
pub mod model;
pub mod output;
pub mod stepper;

pub use model::{State, SystemParams};

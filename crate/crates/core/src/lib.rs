//! Jump-diffusion LIBOR market models driven by a Levy process.
//!
//! The crate builds tenor structures and initial curves, checks the
//! integrability conditions on the driver, derives the dynamics of every
//! forward rate under forward and spot-LIBOR measures, interpolates the
//! term structure between tenor dates, and simulates the whole system.

pub mod error;
pub mod interpolation;
pub mod lmm_dynamics;
pub mod measure_engine;
pub mod piecewise;
pub mod quadrature;
pub mod simulator;
pub mod stochastic_driver;
pub mod termstructure;
pub mod validation;

pub use error::{Error, Result};

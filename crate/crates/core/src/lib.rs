//! Tick-level fundamental price model for the price impact of meta-orders.
//!
//! The crate simulates the finite-activity market and its diffusion limit,
//! solves for stationary and transient densities of the price position inside
//! the tick, computes expected impact and resilience curves, and estimates the
//! stationary density from order-book trade events.

// `!(x > 0.0)` is used on purpose so that NaN inputs take the rejection branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod estimators;
pub mod fp;
pub mod impact;
pub mod interp;
pub mod model;
pub mod numerics;
pub mod sim;
pub mod stationary;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use model::{CdfSpec, ModelParams, SigmaSpec};
pub use stationary::Density;

//! Sampling-rate design for tracking network flow volumes with Kalman
//! filters.
//!
//! The crate builds the linear measurement model of a sampled network
//! ([`network`]), solves the steady-state E-optimal, myopic and naive
//! sampling designs ([`design`]) on top of a dense simplex ([`lp`]), and
//! evaluates them with a scalar Kalman filter bank ([`filtering`]) inside a
//! closed-loop packet-sampling simulator ([`simulate`], [`harness`]).

pub mod design;
pub mod error;
pub mod filtering;
pub mod harness;
pub mod lp;
pub mod model;
pub mod network;
pub mod simulate;

pub use error::{Error, Result};

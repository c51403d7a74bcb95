//! Simulation and verification toolkit for the fast-reaction limit of the
//! Keller–Rubinow precipitation model: a heat equation on the half-line with
//! a point source moving along `x = alpha sqrt(t)` and a one-sided relay sink.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod front;
pub mod harness;
pub mod io;
pub mod model;
pub mod relay;
pub mod solver;
pub mod toy;

pub use error::{Error, Result};

//! Sample-based linear surrogates of AC power flow with controllable
//! conservative bias, plus the network I/O, power-flow solvers, sampling,
//! and linearized-OPF benchmarking around them.

pub mod cli;
pub mod errfn;
pub mod error;
pub mod netio;
pub mod opf;
pub mod powerflow;
pub mod qp;
pub mod regression;
pub mod sampling;

pub use error::{Error, Result};

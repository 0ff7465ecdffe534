#![no_std]

extern crate alloc;

pub mod compact_fd;
mod error;
pub mod freeboundary;
pub mod hermite;
pub mod model;
pub mod oracle;
pub mod pricing;
pub mod rkf;
pub mod semidiscrete;

pub use error::SolverError;

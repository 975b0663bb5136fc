//! Quantum Otto cycles on periodic Ising chains in a transverse field.

pub mod analytics;
pub mod cycle;
pub mod error;
pub mod kspace;
pub mod linalg;
pub mod models;
pub mod sectors;

pub use error::{Error, Result};

//! Simulation toolkit for a stochastic Keller-Segel chemotaxis system with
//! gradient-type Stratonovich noise: a Crank-Nicolson splitting mixed finite
//! element scheme on periodic meshes, coupled Wiener paths, and a Monte
//! Carlo harness for strong-error, error-inflation and blow-up studies.

pub mod assembly;
pub mod config;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod mesh;
pub mod norms;
pub mod oracle;
pub mod quadrature;
pub mod scheme;
pub mod selftest;
pub mod stochastic;

pub use error::{Error, Result};

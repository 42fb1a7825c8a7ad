//! Plane-wave engine for periodic Maxwell operators and their slowly
//! modulated counterparts.

pub mod cli;
pub mod error;
pub mod groundstate;
pub mod io;
pub mod lattice;
pub mod linalg;
pub mod material;
pub mod planewave;
pub mod projections;
pub mod spectrum;
pub mod symbol;

pub use error::{Error, Invariant, Result};

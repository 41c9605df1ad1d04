//! Polarization matrices and topological derivatives for piezoelectric
//! bodies with small voids.

pub mod commands;
pub mod config;
pub mod error;
pub mod fem;
pub mod interior;
pub mod load;
pub mod manufactured;
pub mod material;
pub mod mesh;
pub mod output;
pub mod polarization;
pub mod topo;
pub mod voigt;
pub mod vtk;

pub use error::{Error, Result};

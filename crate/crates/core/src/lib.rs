//! Numerical workbench for sparse domination of multilinear singular
//! integral operators on dyadic grids.

pub mod bank;
pub mod builder;
pub mod config;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod maximal;
pub mod operator;
pub mod reduce;
pub mod regularity;
pub mod rng;
pub mod runner;
pub mod sparse;
pub mod suite;
pub mod weights;

pub use error::{Error, Result};
pub use grid::{CellBox, DyadicCube, GridFunction, GridSpec, Point};
pub use kernel::{KernelSpec, KernelVariant, Modulus};

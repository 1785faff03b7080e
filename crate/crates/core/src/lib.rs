//! Cavity-QED which-path simulator.
//!
//! An atom crosses a double slit with a micromaser cavity behind each slit.
//! The crate follows the atom's path, internal levels and cavity fields as
//! an explicit branch superposition, applies the dispersive lambda-atom
//! unitary, field injections and resonant probe atoms, and turns the result
//! into screen densities with or without interference fringes.

pub mod branch;
pub mod cli;
pub mod error;
pub mod fock;
pub mod interactions;
pub mod optics;
pub mod oracle;
pub mod scenarios;

pub use error::{Error, Result};

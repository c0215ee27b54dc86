//! Crystal-field and hyperfine structure of a rare-earth ion at an S4 site.
//!
//! The crate builds the `(2J+1)`-dimensional crystal-field Hamiltonian from
//! Stevens operators, couples it to the nuclear spin, classifies the levels
//! by their S4 character, evaluates the second-order hyperfine corrections,
//! synthesizes spectra and fits model parameters to transition data.

pub mod analysis;
pub mod angular;
pub mod error;
pub mod fitting;
pub mod hamiltonian;
pub mod perturbation;
pub mod spectra;
pub mod spin;

pub use error::{Error, Result};
pub use hamiltonian::{
    build_cf_hamiltonian, build_electronuclear_hamiltonian, build_hf_hamiltonian, classify_levels, diagonalize,
    hf_levels_exact, CfLevel, CfLevels, CfParameters, Eigensystem, HfLevel, HfLevels, HyperfineConstants, Irrep,
};
pub use spin::{HalfInt, SpinSystem};

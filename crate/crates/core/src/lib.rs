//! Numerical laboratory for fractional obstacle problems on aperiodic point
//! sets.
//!
//! The crate discretizes nonlocal `W^{s,p}`-type energies on uniform grids,
//! computes variational capacities, builds perforated domains from Delone
//! point sets, and compares minima of perforated obstacle problems with the
//! minimum of the homogenized functional carrying the extra mass term
//! `θ·cap(T)·∫|u|^p β`.

pub mod capacity;
pub mod energy;
pub mod error;
pub mod fft;
pub mod geometry;
pub mod homogenization;
pub mod io;
pub mod lab;
pub mod solver;
pub mod stats;
pub mod stochastic;
pub mod sum;

pub use error::{Error, Result};

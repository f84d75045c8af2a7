//! Discrete nonlocal energies on uniform grids.
//!
//! The energy of a field `u` over a set of node pairs `A×B` is
//! `h^{2n} Σ_{x∈A, y∈B, x≠y} K(x−y)|u(x)−u(y)|^p` with a homogeneous kernel
//! `K(z) = a(z/|z|)|z|^{−(n+sp)}`. For `p = 2` the sums are evaluated with
//! zero-padded FFT convolutions; otherwise by a direct double loop.

mod adams;
mod field;
mod gagliardo;
mod grid;
mod inequalities;
mod kernel;
mod operator;

pub use adams::{adams_bound_check, AdamsRegime, AdamsReport};
pub use field::ScalarField;
pub use gagliardo::{
    column_energies, gagliardo_energy, gagliardo_energy_with, locality_defect, split_energies,
    whole_space_energy, PairRegion,
};
pub use grid::{NodeMask, UniformGrid};
pub use inequalities::{
    ball_mask, poincare_hardy_probe, probe_random_family, pw_scaling_sweep, FamilyReport,
    ProbeGeometry, ProbeReport,
};
pub use kernel::{kernel_eval, unit_ball_volume, Anisotropy, FractionalKernel};
pub(crate) use operator::DirectForm;
pub use operator::{apply_operator, Method, QuadraticForm, DIRECT_NODE_LIMIT};

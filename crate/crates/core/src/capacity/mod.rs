//! Truncated and relative variational capacities of compact sets, their
//! potentials, and the checks on ordering, monotonicity in the truncation
//! radius, and decay of the locality defect.

mod set;
mod solve;
mod table;

pub use set::{contains_full_cell, CompactSetSpec, Shape};
pub use solve::{
    potential_ordering_check, solve_capacity, CapacityProblem, CapacityResult, CapacitySolver,
    OrderingReport,
};
pub use table::{
    capacity_limit_table, locality_defect_decay_check, CapacityRow, CapacityTable,
    DefectDecayReport, TableSpec, Variant,
};

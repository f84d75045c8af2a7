//! Perforated obstacle problems over `ε`-sweeps, the homogenized problem
//! with the extra mass term `θ·cap(T)·∫|u|^p β`, and the slicing, joining
//! and recovery constructions.

mod obstacles;
mod problems;
mod recovery;
mod slicing;
mod study;

pub use obstacles::{build_obstacles, obstacle_scale, ObstacleFamily};
pub use problems::{
    beta_from_histogram, beta_uniform, bump_profile, solve_homogenized, solve_perforated,
    ForcingSpec, HomogenizedProblem, Minimum, PerforatedProblem,
};
pub use recovery::{build_recovery, RecoveryParams, RecoveryReport};
pub use slicing::{
    annulus_means, apply_joining, joining_cutoff, slicing_from_columns, slicing_select,
    JoiningReport, ShellGeometry, SlicingReport,
};
pub use study::{
    capacity_estimate, gamma_study, write_study, CapacitySettings, ConvergenceStudy, GridPolicy,
    Lattice, LimitSource, StudyCase, StudyConfig, StudyRow, Verdict,
};

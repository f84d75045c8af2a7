//! Random obstacles with capacities `ε^n γ(i,ω)` from a stationary site
//! process, weighted ergodic averages, and random Delone sets.
//!
//! Randomness is a seeded counter-based stream per lattice site. The shift
//! `τ_k` re-indexes the streams, so stationarity holds as an identity of
//! floating-point values.

mod delone;
mod obstacles;
mod process;
mod study;

pub use delone::{
    generate_shifted, limit_constancy, random_delone, LimitConstancy, RandomDeloneKind,
    RandomField, StationarityReport,
};
pub use obstacles::{
    capacity_scaling_check, random_obstacles, separation_check, DeltaRule, RandomObstacleFamily,
    ScalingSample, SeparationReport, SeparationRow,
};
pub use process::{
    ergodic_average, ergodic_gate, interior_sites, window_agreement, ErgodicGate, ErgodicRow,
    ErgodicTable, RadiusLaw, StationaryProcess, WindowAgreement, WindowCheck,
};
pub use study::{
    non_ergodic_control, random_gamma_study, write_random_study, ControlRow, NonErgodicControl,
    RandomRow, RandomStudy, RandomStudyConfig, SeedRecord,
};

//! Delone point sets, Voronoi index structures, counting bounds, and
//! empirical limit data.

mod domain;
mod generate;
mod index_sets;
mod limit;
mod points;

pub use domain::Domain;
pub use generate::{generate, site_rng, BaseSet, Diffeomorphism, GeneratorKind};
pub use index_sets::{
    counting_check, index_sets, shell_constant, CountingReport, IndexSets, Inequality,
};
pub use limit::{estimate_limit_data, EmpiricalLimitData};
pub use points::{
    closest_pair, covering_radius, packing_radius, voronoi_index, DeloneCertificate, NearestIndex,
    PointSet,
};

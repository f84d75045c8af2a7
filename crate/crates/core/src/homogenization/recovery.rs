use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::obstacles::ObstacleFamily;
use super::slicing::{annulus_means, apply_joining, nodes_within, slicing_select, ShellGeometry};
use crate::capacity::{solve_capacity, CapacityProblem, CompactSetSpec, Shape};
use crate::energy::{gagliardo_energy, FractionalKernel, PairRegion, ScalarField, UniformGrid};
use crate::error::{Error, Result};
use crate::geometry::{index_sets, DeloneCertificate, Domain, PointSet};
use crate::solver::CgOptions;
use crate::sum::tree_sum_by;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryParams {
    /// Ratio of the joining annuli.
    pub m: usize,
    /// Number of shells offered to the slicing selection.
    pub slices: usize,
    pub theta: f64,
    pub cap_t: f64,
    /// Density `β` of the limit term, constant on `U`.
    pub beta: f64,
    pub cg: CgOptions,
}

impl Default for RecoveryParams {
    fn default() -> Self {
        RecoveryParams {
            m: 2,
            slices: 1,
            theta: 0.25,
            cap_t: 0.0,
            beta: 1.0,
            cg: CgOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub h_selected: usize,
    /// Radius `m^{−3h}r_j` of the balls around interior points.
    pub ball_radius: f64,
    pub interior: usize,
    pub boundary: usize,
    /// `F_j(u_j)`: the energy of the competitor.
    pub f_j: f64,
    /// `F(u) = E(u) + θ·capT·∫β|u|^p`.
    pub f_u: f64,
    pub energy_u: f64,
    pub mass_u: f64,
    pub ratio: f64,
    /// Every obstacle node of `u_j` is exactly zero.
    pub feasible: bool,
    pub sup_u: f64,
    pub sup_uj: f64,
    /// `C(λT, B_ρ)·λ^{−(n−sp)}` of the stored profiles.
    pub profile_capacity: Vec<f64>,
    /// Lipschitz constant of the boundary cutoff in units of `λ`.
    pub cutoff_lip: f64,
    #[serde(skip)]
    pub u_j: Option<ScalarField>,
}

/// Builds the competitor `u_j` for a fixed `u` vanishing on the boundary
/// collar: the joined field off the perforations, `(1 − ξ)·z_i` on the balls
/// around interior points, and `(1 − ζ)·w` around the remaining obstacles.
///
/// `ξ` is the capacitary potential of each obstacle's node pattern with
/// support in the ball around it; `ζ` is `1` on `T` and decays linearly to
/// `0` at the same radius.
pub fn build_recovery(
    u: &ScalarField,
    ps: &PointSet,
    family: &ObstacleFamily,
    domain: &Domain,
    k: &FractionalKernel,
    params: &RecoveryParams,
) -> Result<RecoveryReport> {
    let grid = &u.grid;
    let n = grid.dim();
    if let Some(c) = grid.mask(UniformGrid::BOUNDARY_COLLAR) {
        if c.indices().iter().any(|&i| u.values[i] != 0.0) {
            return Err(Error::InvalidParameter(
                "u must vanish on the boundary collar".into(),
            ));
        }
    }
    let cert = DeloneCertificate::compute(ps, domain, None)?;
    let sets = index_sets(ps, domain, &cert, cert.r_packing / 4.0)?;
    let pos_of: BTreeMap<usize, usize> = family
        .labels
        .iter()
        .enumerate()
        .map(|(p, &l)| (l, p))
        .collect();
    let interior: Vec<usize> = sets
        .interior
        .iter()
        .filter_map(|l| pos_of.get(l).copied())
        .collect();
    let others: Vec<usize> = (0..family.len())
        .filter(|p| !interior.contains(p))
        .collect();
    let centers: Vec<[f64; 3]> = interior.iter().map(|&p| family.centers[p]).collect();
    let lambda = family.lambda_j;
    let m = params.m;

    // Slicing and joining around the interior points.
    let (h_sel, rho, w, z) = if centers.is_empty() {
        (1, family.r_j / (m as f64).powi(3), u.clone(), vec![])
    } else {
        let sl = slicing_select(
            u,
            k,
            &centers,
            family.r_j,
            m,
            params.slices,
            ShellGeometry::Cubed,
        )?;
        let rho = ShellGeometry::Cubed.radius(family.r_j, m, sl.h_selected);
        let z = annulus_means(u, &centers, rho, m)?;
        let jr = apply_joining(u, k, &centers, rho, m, &z)?;
        (sl.h_selected, rho, jr.w.unwrap(), z)
    };
    if rho / lambda <= family.t.extent(grid.h) {
        return Err(Error::UnderResolved(format!(
            "ball radius {rho:.3e} does not exceed the obstacle radius at λ = {lambda:.3e}"
        )));
    }

    let mut values = w.values.clone();
    let mut profiles: BTreeMap<Vec<[i64; 3]>, (ScalarField, f64)> = BTreeMap::new();
    for (ci, &p) in interior.iter().enumerate() {
        let (base, offsets) = pattern(grid, &family.centers[p], &family.masks[p]);
        if !profiles.contains_key(&offsets) {
            let t = CompactSetSpec {
                shape: Shape::Nodes {
                    offsets: offsets.clone(),
                },
                center: vec![0.0; n],
            };
            let mut prob = CapacityProblem::new(t, rho, k.clone(), grid.h);
            prob.cg = params.cg;
            let res = solve_capacity(&prob)?;
            let scaled = res.value * lambda.powf(-k.capacity_exponent());
            profiles.insert(offsets.clone(), (res.potential, scaled));
        }
        let xi = &profiles[&offsets].0;
        let bk = grid.multi_index(base);
        let half = (xi.grid.dims[0] - 1) / 2;
        for (i, d) in nodes_within(grid, &family.centers[p], rho) {
            if d >= rho {
                continue;
            }
            let ki = grid.multi_index(i);
            let local: Option<Vec<usize>> = (0..n)
                .map(|a| {
                    let o = ki[a] as i64 - bk[a] as i64 + half as i64;
                    (o >= 0 && (o as usize) < xi.grid.dims[a]).then_some(o as usize)
                })
                .collect();
            let xv = local.map_or(0.0, |l| xi.values[xi.grid.linear_index(&l)]);
            values[i] = (1.0 - xv) * z[ci];
        }
    }

    // Boundary cutoff (1 − ζ((x − x_i)/λ))·w on the remaining obstacles.
    let t_ext = family.t.extent(grid.h);
    let r_zeta = rho / lambda;
    let cutoff_lip = 1.0 / (r_zeta - t_ext);
    for &p in &others {
        for &i in &family.masks[p] {
            values[i] = 0.0;
        }
        for (i, d) in nodes_within(grid, &family.centers[p], r_zeta * lambda) {
            let y = d / lambda;
            let zeta = if y <= t_ext {
                1.0
            } else {
                ((r_zeta - y) / (r_zeta - t_ext)).clamp(0.0, 1.0)
            };
            values[i] *= 1.0 - zeta;
        }
    }
    let feasible = family.masks.iter().flatten().all(|&i| values[i] == 0.0);
    let u_j = ScalarField {
        grid: grid.clone(),
        values,
        exterior_zero: u.exterior_zero,
    };
    let full = PairRegion::full(grid.len());
    let f_j = gagliardo_energy(&u_j, k, &full)?;
    let energy_u = gagliardo_energy(u, k, &full)?;
    let vol = grid.cell_volume();
    let mass_u = params.theta
        * params.cap_t
        * params.beta
        * vol
        * tree_sum_by(u.values.len(), |i| u.values[i].abs().powf(k.p));
    let f_u = energy_u + mass_u;
    Ok(RecoveryReport {
        h_selected: h_sel,
        ball_radius: rho,
        interior: interior.len(),
        boundary: others.len(),
        f_j,
        f_u,
        energy_u,
        mass_u,
        ratio: if f_u > 0.0 { f_j / f_u } else { 1.0 },
        feasible,
        sup_u: u.max_abs(),
        sup_uj: u_j.max_abs(),
        profile_capacity: profiles.values().map(|v| v.1).collect(),
        cutoff_lip,
        u_j: Some(u_j),
    })
}

/// Node nearest to the centre and the mask as offsets from it.
fn pattern(grid: &UniformGrid, c: &[f64; 3], mask: &[usize]) -> (usize, Vec<[i64; 3]>) {
    let n = grid.dim();
    let base = grid.nearest_node(&c[..n]).unwrap_or(mask[0]);
    let bk = grid.multi_index(base);
    let offsets = mask
        .iter()
        .map(|&i| {
            let k = grid.multi_index(i);
            let mut o = [0i64; 3];
            for a in 0..n {
                o[a] = k[a] as i64 - bk[a] as i64;
            }
            o
        })
        .collect();
    (base, offsets)
}

use serde::{Deserialize, Serialize};

use super::process::StationaryProcess;
use crate::capacity::{solve_capacity, CapacityProblem, CompactSetSpec, Shape};
use crate::energy::{FractionalKernel, NodeMask, UniformGrid};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::homogenization::ObstacleFamily;

/// `δ_j = ε_j^a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaRule {
    pub exponent: f64,
}

impl Default for DeltaRule {
    fn default() -> Self {
        DeltaRule { exponent: 1.3 }
    }
}

impl DeltaRule {
    pub fn delta(&self, epsilon: f64) -> f64 {
        epsilon.powf(self.exponent)
    }
}

/// Obstacles `T^i = ε i + ρ_i λ T` with `λ = ε^{n/(n−sp)}`, so that
/// `cap(T^i) = ε^n γ(i,ω)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomObstacleFamily {
    pub epsilon: f64,
    pub lambda: f64,
    pub delta: f64,
    /// Reference set, centred at the origin.
    pub t: CompactSetSpec,
    pub sites: Vec<[i64; 3]>,
    pub centers: Vec<[f64; 3]>,
    pub rho: Vec<f64>,
}

/// Half-width of the smallest origin-centred cube holding `T`.
fn sup_extent(t: &CompactSetSpec) -> f64 {
    let c = t.center.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    c + match &t.shape {
        Shape::Ball { radius } => *radius,
        Shape::Box { half_widths } => half_widths.iter().fold(0.0f64, |m, v| m.max(*v)),
        _ => t.extent(0.0),
    }
}

/// Sites whose obstacle can meet the bounding box of `region`.
pub fn random_obstacles(
    proc: &StationaryProcess,
    t: &CompactSetSpec,
    k: &FractionalKernel,
    epsilon: f64,
    delta: &DeltaRule,
    region: &Domain,
) -> Result<RandomObstacleFamily> {
    t.validate()?;
    if !matches!(t.shape, Shape::Ball { .. } | Shape::Box { .. }) {
        return Err(Error::InvalidParameter(
            "random obstacles are balls or boxes".into(),
        ));
    }
    let n = proc.n;
    if k.n != n || t.dim() != n || region.dim() != n {
        return Err(Error::GridMismatch(
            "process, kernel, set and region dimensions differ".into(),
        ));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must be positive"
        )));
    }
    let lambda = epsilon.powf(k.obstacle_exponent());
    let (lo, hi) = region.bbox();
    let mut fam = RandomObstacleFamily {
        epsilon,
        lambda,
        delta: delta.delta(epsilon),
        t: t.clone(),
        sites: Vec::new(),
        centers: Vec::new(),
        rho: Vec::new(),
    };
    let reach = proc.law.range().1 * lambda * sup_extent(t);
    let ranges: Vec<(i64, i64)> = (0..n)
        .map(|a| {
            (
                ((lo[a] - reach) / epsilon).floor() as i64,
                ((hi[a] + reach) / epsilon).ceil() as i64,
            )
        })
        .collect();
    let lens: Vec<usize> = ranges.iter().map(|(a, b)| (b - a + 1) as usize).collect();
    let total: usize = lens.iter().product();
    for mut f in 0..total {
        let mut s = [0i64; 3];
        let mut x = [0.0; 3];
        for a in (0..n).rev() {
            s[a] = ranges[a].0 + (f % lens[a]) as i64;
            f /= lens[a];
            x[a] = s[a] as f64 * epsilon;
        }
        if (0..n).all(|a| x[a] >= lo[a] - reach && x[a] <= hi[a] + reach) {
            fam.sites.push(s);
            fam.centers.push(x);
            fam.rho.push(proc.rho(s));
        }
    }
    Ok(fam)
}

impl RandomObstacleFamily {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Node masks on `grid`, as a family for the perforated solver.
    ///
    /// The smallest obstacle must satisfy `ρ_min·λ ≥ 2h`.
    pub fn on_grid(&self, grid: &UniformGrid, rho_min: f64) -> Result<ObstacleFamily> {
        let n = grid.dim();
        let size = sup_extent(&self.t);
        if rho_min * self.lambda * size < 2.0 * grid.h {
            return Err(Error::UnderResolved(format!(
                "smallest obstacle {:.4e} needs h ≤ {:.4e}, grid has h = {:.4e}",
                rho_min * self.lambda * size,
                rho_min * self.lambda * size / 2.0,
                grid.h
            )));
        }
        let mut union = NodeMask::empty(grid.len());
        let mut shared = 0;
        let (mut centers, mut labels, mut masks) = (Vec::new(), Vec::new(), Vec::new());
        for (p, x) in self.centers.iter().enumerate() {
            let scale = self.rho[p] * self.lambda;
            let reach = scale * size;
            let mut lo_k = vec![0usize; n];
            let mut ext = vec![0usize; n];
            let mut outside = false;
            for a in 0..n {
                let l = ((x[a] - reach - grid.origin[a]) / grid.h).floor().max(0.0);
                let u = ((x[a] + reach - grid.origin[a]) / grid.h)
                    .ceil()
                    .min((grid.dims[a] - 1) as f64);
                if u < l {
                    outside = true;
                    break;
                }
                lo_k[a] = l as usize;
                ext[a] = (u - l) as usize + 1;
            }
            if outside {
                continue;
            }
            let total: usize = ext.iter().product();
            let mut nodes = Vec::new();
            let mut kk = vec![0usize; n];
            for mut f in 0..total {
                for a in (0..n).rev() {
                    kk[a] = lo_k[a] + f % ext[a];
                    f /= ext[a];
                }
                let i = grid.linear_index(&kk);
                let c = grid.coord(i);
                let y: Vec<f64> = (0..n).map(|a| (c[a] - x[a]) / scale).collect();
                if self.t.contains(&y) {
                    nodes.push(i);
                }
            }
            if nodes.is_empty() {
                continue;
            }
            nodes.sort_unstable();
            for &i in &nodes {
                if union.get(i) {
                    shared += 1;
                }
                union.set(i, true);
            }
            centers.push(*x);
            labels.push(p);
            masks.push(nodes);
        }
        if shared > 0 {
            return Err(Error::OverlappingMasks(shared));
        }
        Ok(ObstacleFamily::from_masks(
            self.epsilon,
            self.lambda,
            self.lambda,
            self.t.clone(),
            centers,
            labels,
            masks,
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationRow {
    pub epsilon: f64,
    pub delta: f64,
    pub sites: usize,
    /// Largest `ρ_i λ·|T|_∞ / (δ/2)`; containment holds when `≤ 1`.
    pub worst_fill: f64,
    pub containment: bool,
    /// `δ/ε`, which must tend to 0.
    pub small_ratio: f64,
    /// `ε^{1+n/(n−sp)}/δ`, which must stay bounded.
    pub lower_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub rows: Vec<SeparationRow>,
    pub containment: bool,
    /// `δ/ε` strictly decreasing along the sweep.
    pub o_small: bool,
    /// `ε^{1+n/(n−sp)}/δ` non-increasing along the sweep.
    pub o_big: bool,
    /// Both asymptotics for `δ = ε^a`: `a > 1` and `a ≤ 1 + n/(n−sp)`.
    pub symbolic: bool,
}

impl SeparationReport {
    pub fn holds(&self) -> bool {
        self.containment && self.o_small && self.o_big
    }
}

/// Strong separation: every `T^i` lies in the cube `ε i + δ[−½,½]^n`, with
/// `δ = o(ε)` and `ε^{1+n/(n−sp)} = O(δ)` along `epsilon_list`.
pub fn separation_check(
    proc: &StationaryProcess,
    t: &CompactSetSpec,
    k: &FractionalKernel,
    epsilon_list: &[f64],
    delta: &DeltaRule,
    region: &Domain,
) -> Result<SeparationReport> {
    if epsilon_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParameter(
            "epsilon_list must be decreasing".into(),
        ));
    }
    let size = sup_extent(t);
    let big = 1.0 + k.obstacle_exponent();
    let mut rows = Vec::new();
    for &eps in epsilon_list {
        let fam = random_obstacles(proc, t, k, eps, delta, region)?;
        let worst = fam.rho.iter().fold(0.0f64, |m, r| {
            m.max(r * fam.lambda * size / (fam.delta / 2.0))
        });
        rows.push(SeparationRow {
            epsilon: eps,
            delta: fam.delta,
            sites: fam.len(),
            worst_fill: worst,
            containment: worst <= 1.0,
            small_ratio: fam.delta / eps,
            lower_ratio: eps.powf(big) / fam.delta,
        });
    }
    let o_small = rows.windows(2).all(|w| w[1].small_ratio < w[0].small_ratio);
    let o_big = rows
        .windows(2)
        .all(|w| w[1].lower_ratio <= w[0].lower_ratio * (1.0 + 1e-12));
    Ok(SeparationReport {
        containment: rows.iter().all(|r| r.containment),
        o_small,
        o_big,
        symbolic: delta.exponent > 1.0 && delta.exponent <= big,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSample {
    pub site: [i64; 3],
    pub rho: f64,
    /// `C(ρλT, B_{Rρλ})·λ^{−(n−sp)}`.
    pub scaled: f64,
    /// `ρ^{n−sp}·C(T, B_R)`.
    pub predicted: f64,
    pub ratio: f64,
}

/// Checks `cap(ρλT)·λ^{−(n−sp)} = ρ^{n−sp}·cap(T)` on sample sites. Both
/// sides are discretized with `nodes_per_unit` nodes per unit length of
/// `λT` and `T` respectively, so the small obstacles are resolved
/// `ρ`-times coarser.
pub fn capacity_scaling_check(
    proc: &StationaryProcess,
    t: &CompactSetSpec,
    k: &FractionalKernel,
    epsilon: f64,
    sites: &[[i64; 3]],
    support: f64,
    nodes_per_unit: f64,
) -> Result<Vec<ScalingSample>> {
    let lambda = epsilon.powf(k.obstacle_exponent());
    let e = k.capacity_exponent();
    let reference = solve_capacity(&CapacityProblem::new(
        t.clone(),
        support,
        k.clone(),
        1.0 / nodes_per_unit,
    ))?
    .value;
    sites
        .iter()
        .map(|&site| {
            let rho = proc.rho(site);
            let small = scale_set(t, rho * lambda);
            let prob = CapacityProblem::new(
                small,
                support * rho * lambda,
                k.clone(),
                lambda / nodes_per_unit,
            );
            let scaled = solve_capacity(&prob)?.value * lambda.powf(-e);
            let predicted = rho.powf(e) * reference;
            Ok(ScalingSample {
                site,
                rho,
                scaled,
                predicted,
                ratio: scaled / predicted,
            })
        })
        .collect()
}

fn scale_set(t: &CompactSetSpec, f: f64) -> CompactSetSpec {
    let shape = match &t.shape {
        Shape::Ball { radius } => Shape::Ball { radius: radius * f },
        Shape::Box { half_widths } => Shape::Box {
            half_widths: half_widths.iter().map(|w| w * f).collect(),
        },
        s => s.clone(),
    };
    CompactSetSpec {
        shape,
        center: t.center.iter().map(|c| c * f).collect(),
    }
}

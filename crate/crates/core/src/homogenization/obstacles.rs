use serde::{Deserialize, Serialize};

use crate::capacity::{CompactSetSpec, Shape};
use crate::energy::{FractionalKernel, NodeMask, UniformGrid};
use crate::error::{Error, Result};
use crate::geometry::{packing_radius, NearestIndex, PointSet};

/// `λ = r^{n/(n−sp)}`.
pub fn obstacle_scale(r: f64, k: &FractionalKernel) -> f64 {
    r.powf(k.obstacle_exponent())
}

/// Obstacles `T^i = x^i + λT` and their node masks on a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObstacleFamily {
    pub epsilon: f64,
    pub r_j: f64,
    pub lambda_j: f64,
    /// The reference set, centred at the origin.
    pub t: CompactSetSpec,
    /// Centres carrying a non-empty mask, in the order of `masks`.
    pub centers: Vec<[f64; 3]>,
    /// Labels of the centres in the generating point set.
    pub labels: Vec<usize>,
    /// Sorted node indices of each obstacle.
    pub masks: Vec<Vec<usize>>,
    #[serde(skip)]
    union: Option<NodeMask>,
}

impl ObstacleFamily {
    /// Family from precomputed masks, which must be sorted and disjoint.
    pub(crate) fn from_masks(
        epsilon: f64,
        r_j: f64,
        lambda_j: f64,
        t: CompactSetSpec,
        centers: Vec<[f64; 3]>,
        labels: Vec<usize>,
        masks: Vec<Vec<usize>>,
    ) -> Self {
        ObstacleFamily {
            epsilon,
            r_j,
            lambda_j,
            t,
            centers,
            labels,
            masks,
            union: None,
        }
    }

    /// Union of all obstacle masks.
    pub fn union(&self, grid: &UniformGrid) -> NodeMask {
        if let Some(u) = &self.union {
            if u.len() == grid.len() {
                return u.clone();
            }
        }
        let mut m = NodeMask::empty(grid.len());
        for mask in &self.masks {
            for &i in mask {
                m.set(i, true);
            }
        }
        m
    }

    pub fn node_count(&self) -> usize {
        self.masks.iter().map(Vec::len).sum()
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

/// Builds the node masks of `x^i + λT` for every point of `ps` whose
/// obstacle meets the grid box.
///
/// Each mask is checked to lie in the Voronoi cell of its centre and, for
/// centres inside the grid box, to contain a full grid cell.
pub fn build_obstacles(
    ps: &PointSet,
    t: &CompactSetSpec,
    r_j: f64,
    grid: &UniformGrid,
    k: &FractionalKernel,
    epsilon: f64,
) -> Result<ObstacleFamily> {
    t.validate()?;
    if matches!(t.shape, Shape::Nodes { .. }) {
        return Err(Error::InvalidParameter(
            "obstacles need a geometric reference set".into(),
        ));
    }
    let n = grid.dim();
    if ps.n != n || t.dim() != n || k.n != n {
        return Err(Error::GridMismatch(
            "point set, set T, kernel and grid dimensions differ".into(),
        ));
    }
    if !(r_j > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "r_j = {r_j} must be positive"
        )));
    }
    let r_lambda = packing_radius(ps)?;
    if r_j > r_lambda * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "r_j = {r_j} exceeds the packing radius {r_lambda}"
        )));
    }
    let lambda = obstacle_scale(r_j, k);
    if lambda < 2.0 * grid.h {
        return Err(Error::UnderResolved(format!(
            "λ = {lambda:.6e} needs h ≤ λ/2 = {:.6e}, grid has h = {:.6e}",
            lambda / 2.0,
            grid.h
        )));
    }
    let reach = lambda * (t.extent(grid.h) + t.center.iter().map(|c| c * c).sum::<f64>().sqrt());
    let nearest = NearestIndex::new(ps)?;
    let hi = grid.bbox_hi();
    let mut family = ObstacleFamily {
        epsilon,
        r_j,
        lambda_j: lambda,
        t: t.clone(),
        centers: Vec::new(),
        labels: Vec::new(),
        masks: Vec::new(),
        union: None,
    };
    let mut union = NodeMask::empty(grid.len());
    for (pos, x) in ps.points.iter().enumerate() {
        let mut lo_k = vec![0usize; n];
        let mut hi_k = vec![0usize; n];
        let mut outside = false;
        for a in 0..n {
            let lo = ((x[a] - reach - grid.origin[a]) / grid.h).floor().max(0.0);
            let up = ((x[a] + reach - grid.origin[a]) / grid.h)
                .ceil()
                .min((grid.dims[a] - 1) as f64);
            if up < lo {
                outside = true;
                break;
            }
            lo_k[a] = lo as usize;
            hi_k[a] = up as usize;
        }
        if outside {
            continue;
        }
        let extent: Vec<usize> = (0..n).map(|a| hi_k[a] - lo_k[a] + 1).collect();
        let total: usize = extent.iter().product();
        let mut nodes = Vec::new();
        let mut k_idx = vec![0usize; n];
        for mut flat in 0..total {
            for a in (0..n).rev() {
                k_idx[a] = lo_k[a] + flat % extent[a];
                flat /= extent[a];
            }
            let i = grid.linear_index(&k_idx);
            let c = grid.coord(i);
            let y: Vec<f64> = (0..n).map(|a| (c[a] - x[a]) / lambda).collect();
            if t.contains(&y) {
                nodes.push(i);
            }
        }
        if nodes.is_empty() {
            continue;
        }
        nodes.sort_unstable();
        for &i in &nodes {
            let c = grid.coord(i);
            let (q, d2) = nearest.nearest(&c[..n]);
            let d_own: f64 = (0..n).map(|a| (c[a] - x[a]).powi(2)).sum();
            if q != pos && d2 < d_own * (1.0 - 1e-12) {
                return Err(Error::InvalidParameter(format!(
                    "obstacle of point {} leaves its Voronoi cell (λ = {lambda:.4e})",
                    ps.labels[pos]
                )));
            }
            if union.get(i) {
                return Err(Error::InvalidParameter(format!(
                    "obstacles overlap at node {i}; λ is too large for the point spacing"
                )));
            }
            union.set(i, true);
        }
        let inside_box = (0..n).all(|a| x[a] >= grid.origin[a] && x[a] <= hi[a]);
        if inside_box && !has_full_cell(grid, &nodes) {
            return Err(Error::UnderResolved(format!(
                "obstacle of point {} contains no full grid cell at h = {}",
                ps.labels[pos], grid.h
            )));
        }
        family.centers.push(*x);
        family.labels.push(ps.labels[pos]);
        family.masks.push(nodes);
    }
    family.union = Some(union);
    Ok(family)
}

fn has_full_cell(grid: &UniformGrid, sorted: &[usize]) -> bool {
    let n = grid.dim();
    sorted.iter().any(|&i| {
        let k = grid.multi_index(i);
        (0..1usize << n).all(|bits| {
            let c: Option<Vec<usize>> = (0..n)
                .map(|a| {
                    let v = k[a] + ((bits >> a) & 1);
                    (v < grid.dims[a]).then_some(v)
                })
                .collect();
            c.is_some_and(|c| sorted.binary_search(&grid.linear_index(&c)).is_ok())
        })
    })
}

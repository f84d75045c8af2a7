use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A boolean set of grid nodes in row-major order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMask(pub Vec<bool>);

impl NodeMask {
    pub fn empty(len: usize) -> Self {
        NodeMask(vec![false; len])
    }

    pub fn full(len: usize) -> Self {
        NodeMask(vec![true; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.0[i] = v;
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.0.iter().any(|&b| b)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn union(&self, other: &NodeMask) -> NodeMask {
        NodeMask(self.0.iter().zip(&other.0).map(|(a, b)| *a || *b).collect())
    }

    pub fn intersection(&self, other: &NodeMask) -> NodeMask {
        NodeMask(self.0.iter().zip(&other.0).map(|(a, b)| *a && *b).collect())
    }

    pub fn complement(&self) -> NodeMask {
        NodeMask(self.0.iter().map(|b| !b).collect())
    }

    pub fn is_subset_of(&self, other: &NodeMask) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| !*a || *b)
    }

    /// Indicator as a float vector.
    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// A uniform Cartesian grid `origin + h·k`, `0 ≤ k_a < dims[a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub dims: Vec<usize>,
    pub h: f64,
    pub origin: Vec<f64>,
    #[serde(default)]
    pub masks: BTreeMap<String, NodeMask>,
}

impl UniformGrid {
    pub const IN_U: &'static str = "in_U";
    pub const BOUNDARY_COLLAR: &'static str = "boundary_collar";
    pub const EXTERIOR_COLLAR: &'static str = "exterior_collar";

    pub fn new(dims: Vec<usize>, h: f64, origin: Vec<f64>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid spacing h = {h}")));
        }
        if dims.is_empty() || dims.len() > 3 || dims.len() != origin.len() {
            return Err(Error::InvalidParameter(
                "grid dimension must be 1..=3 and match the origin".into(),
            ));
        }
        if dims.iter().any(|&m| m < 4) {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 4 nodes per axis, got {dims:?}"
            )));
        }
        Ok(UniformGrid {
            dims,
            h,
            origin,
            masks: BTreeMap::new(),
        })
    }

    /// Grid on `[0,1]^n` with `cells` cells per axis, carrying `in_U`
    /// (every node) and the one-node `boundary_collar` along the faces.
    pub fn unit_cube(n: usize, cells: usize) -> Result<Self> {
        let mut g = Self::new(vec![cells + 1; n], 1.0 / cells as f64, vec![0.0; n])?;
        let len = g.len();
        g.masks.insert(Self::IN_U.into(), NodeMask::full(len));
        let mut collar = NodeMask::empty(len);
        for i in 0..len {
            let k = g.multi_index(i);
            if k.iter().any(|&c| c == 0 || c == cells) {
                collar.set(i, true);
            }
        }
        g.masks.insert(Self::BOUNDARY_COLLAR.into(), collar);
        Ok(g)
    }

    /// Grid with `half + 1 + half` nodes per axis centred at `center`.
    pub fn centered(n: usize, half: usize, h: f64, center: &[f64]) -> Result<Self> {
        let origin = (0..n).map(|a| center[a] - half as f64 * h).collect();
        Self::new(vec![2 * half + 1; n], h, origin)
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Upper corner of the bounding box.
    pub fn bbox_hi(&self) -> Vec<f64> {
        self.origin
            .iter()
            .zip(&self.dims)
            .map(|(o, &m)| o + (m - 1) as f64 * self.h)
            .collect()
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut k = vec![0; self.dims.len()];
        for a in (0..self.dims.len()).rev() {
            k[a] = i % self.dims[a];
            i /= self.dims[a];
        }
        k
    }

    pub fn linear_index(&self, k: &[usize]) -> usize {
        let mut i = 0;
        for (a, &m) in self.dims.iter().enumerate() {
            i = i * m + k[a];
        }
        i
    }

    /// Coordinates of node `i`, padded with zeros to three components.
    pub fn coord(&self, i: usize) -> [f64; 3] {
        let k = self.multi_index(i);
        let mut x = [0.0; 3];
        for a in 0..self.dims.len() {
            x[a] = self.origin[a] + k[a] as f64 * self.h;
        }
        x
    }

    /// Nearest node to `x`, if `x` lies within half a cell of the grid box.
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        let mut k = vec![0; self.dims.len()];
        for a in 0..self.dims.len() {
            let t = ((x[a] - self.origin[a]) / self.h).round();
            if t < 0.0 || t >= self.dims[a] as f64 {
                return None;
            }
            k[a] = t as usize;
        }
        Some(self.linear_index(&k))
    }

    /// Mask of nodes satisfying a predicate on coordinates.
    pub fn mask_where<F: Fn(&[f64; 3]) -> bool>(&self, f: F) -> NodeMask {
        NodeMask((0..self.len()).map(|i| f(&self.coord(i))).collect())
    }

    pub fn mask(&self, name: &str) -> Option<&NodeMask> {
        self.masks.get(name)
    }

    pub fn insert_mask(&mut self, name: &str, mask: NodeMask) -> Result<()> {
        if mask.len() != self.len() {
            return Err(Error::GridMismatch(format!(
                "mask {name} has {} entries for a grid of {}",
                mask.len(),
                self.len()
            )));
        }
        self.masks.insert(name.into(), mask);
        Ok(())
    }

    /// Volume of one cell, `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    /// Same nodes and spacing, ignoring masks.
    pub fn same_lattice(&self, other: &UniformGrid) -> bool {
        self.dims == other.dims && self.h == other.h && self.origin == other.origin
    }
}

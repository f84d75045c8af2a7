use serde::{Deserialize, Serialize};

use crate::energy::{NodeMask, UniformGrid};
use crate::error::{Error, Result};

/// Shape of a compact set, relative to its centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Ball {
        radius: f64,
    },
    Box {
        half_widths: Vec<f64>,
    },
    /// Two balls of equal radius centred at `±separation/2` along the first
    /// axis.
    TwoBalls {
        radius: f64,
        separation: f64,
    },
    /// Grid nodes at the given integer offsets from the node nearest to the
    /// centre. An empty list is the empty set.
    Nodes {
        offsets: Vec<[i64; 3]>,
    },
}

/// A compact set `T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactSetSpec {
    #[serde(flatten)]
    pub shape: Shape,
    pub center: Vec<f64>,
}

impl CompactSetSpec {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        CompactSetSpec {
            shape: Shape::Ball { radius },
            center,
        }
    }

    pub fn empty(center: Vec<f64>) -> Self {
        CompactSetSpec {
            shape: Shape::Nodes { offsets: vec![] },
            center,
        }
    }

    /// The single node nearest to the centre.
    pub fn single_node(center: Vec<f64>) -> Self {
        CompactSetSpec {
            shape: Shape::Nodes {
                offsets: vec![[0; 3]],
            },
            center,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn is_empty(&self) -> bool {
        matches!(&self.shape, Shape::Nodes { offsets } if offsets.is_empty())
    }

    /// Radius of the smallest centred ball containing the set, for the
    /// geometric shapes; node sets report their offsets times `h`.
    pub fn extent(&self, h: f64) -> f64 {
        match &self.shape {
            Shape::Ball { radius } => *radius,
            Shape::Box { half_widths } => half_widths.iter().map(|w| w * w).sum::<f64>().sqrt(),
            Shape::TwoBalls { radius, separation } => radius + separation / 2.0,
            Shape::Nodes { offsets } => offsets
                .iter()
                .map(|o| h * o.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt())
                .fold(0.0, f64::max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        match &self.shape {
            Shape::Ball { radius } if !(*radius > 0.0) => bad("ball radius must be positive"),
            Shape::Box { half_widths }
                if half_widths.len() != self.dim() || half_widths.iter().any(|w| !(*w > 0.0)) =>
            {
                bad("box half-widths must be positive, one per axis")
            }
            Shape::TwoBalls { radius, separation }
                if !(*radius > 0.0 && *separation > 2.0 * radius) =>
            {
                bad("two balls need positive radius and separation > 2·radius")
            }
            _ => Ok(()),
        }
    }

    /// `x ∈ T` for the geometric shapes (closed sets).
    pub fn contains(&self, x: &[f64]) -> bool {
        let n = self.dim();
        let d: Vec<f64> = (0..n).map(|a| x[a] - self.center[a]).collect();
        match &self.shape {
            Shape::Ball { radius } => d.iter().map(|v| v * v).sum::<f64>() <= radius * radius,
            Shape::Box { half_widths } => d.iter().zip(half_widths).all(|(v, w)| v.abs() <= *w),
            Shape::TwoBalls { radius, separation } => [-0.5, 0.5].iter().any(|s| {
                let mut e = d.clone();
                e[0] -= s * separation;
                e.iter().map(|v| v * v).sum::<f64>() <= radius * radius
            }),
            Shape::Nodes { .. } => false,
        }
    }

    /// Nodes of `grid` in `T`.
    pub fn mask(&self, grid: &UniformGrid) -> Result<NodeMask> {
        match &self.shape {
            Shape::Nodes { offsets } => {
                let mut m = NodeMask::empty(grid.len());
                if offsets.is_empty() {
                    return Ok(m);
                }
                let c = grid
                    .nearest_node(&self.center)
                    .ok_or_else(|| Error::InvalidParameter("set centre outside the grid".into()))?;
                let base = grid.multi_index(c);
                for o in offsets {
                    let k: Option<Vec<usize>> = (0..grid.dim())
                        .map(|a| {
                            let v = base[a] as i64 + o[a];
                            (v >= 0 && v < grid.dims[a] as i64).then_some(v as usize)
                        })
                        .collect();
                    let k = k.ok_or_else(|| {
                        Error::InvalidParameter(format!("node offset {o:?} leaves the grid"))
                    })?;
                    m.set(grid.linear_index(&k), true);
                }
                Ok(m)
            }
            _ => Ok(grid.mask_where(|x| self.contains(x))),
        }
    }
}

/// Whether the mask contains all `2^n` corners of some grid cell.
pub fn contains_full_cell(grid: &UniformGrid, mask: &NodeMask) -> bool {
    let n = grid.dim();
    mask.indices().into_iter().any(|i| {
        let k = grid.multi_index(i);
        (0..1usize << n).all(|bits| {
            let c: Option<Vec<usize>> = (0..n)
                .map(|a| {
                    let v = k[a] + ((bits >> a) & 1);
                    (v < grid.dims[a]).then_some(v)
                })
                .collect();
            c.is_some_and(|c| mask.get(grid.linear_index(&c)))
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks() {
        let g = UniformGrid::centered(2, 10, 0.1, &[0.0, 0.0]).unwrap();
        let b = CompactSetSpec::ball(vec![0.0, 0.0], 0.105);
        assert_eq!(b.mask(&g).unwrap().count(), 5);
        assert!(!contains_full_cell(&g, &b.mask(&g).unwrap()));
        let b = CompactSetSpec::ball(vec![0.0, 0.0], 0.15);
        assert!(contains_full_cell(&g, &b.mask(&g).unwrap()));
        let one = CompactSetSpec::single_node(vec![0.01, -0.02]);
        let m = one.mask(&g).unwrap();
        assert_eq!(m.indices(), vec![g.nearest_node(&[0.0, 0.0]).unwrap()]);
        assert_eq!(
            CompactSetSpec::empty(vec![0.0, 0.0])
                .mask(&g)
                .unwrap()
                .count(),
            0
        );
        let two = CompactSetSpec {
            shape: Shape::TwoBalls {
                radius: 0.2,
                separation: 1.0,
            },
            center: vec![0.0, 0.0],
        };
        assert!(two.contains(&[0.5, 0.1]) && !two.contains(&[0.0, 0.0]));
        assert!(two.validate().is_ok());
    }
}

use serde::{Deserialize, Serialize};

use crate::energy::unit_ball_volume;
use crate::error::{Error, Result};

/// A bounded domain: an axis-aligned box in `R^n` or a convex polygon in the
/// plane (vertices counter-clockwise).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Rect { lo: Vec<f64>, hi: Vec<f64> },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl Domain {
    pub fn rect(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let d = Domain::Rect { lo, hi };
        d.validate()?;
        Ok(d)
    }

    /// The unit cube `(0,1)^n`.
    pub fn unit_cube(n: usize) -> Self {
        Domain::Rect {
            lo: vec![0.0; n],
            hi: vec![1.0; n],
        }
    }

    pub fn polygon(vertices: Vec<[f64; 2]>) -> Result<Self> {
        let d = Domain::Polygon { vertices };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Domain::Rect { lo, hi } => {
                if lo.len() != hi.len() || lo.is_empty() || lo.len() > 3 {
                    return Err(Error::InvalidParameter(
                        "rectangle corners must agree, n ≤ 3".into(),
                    ));
                }
                if lo
                    .iter()
                    .zip(hi)
                    .any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite())
                {
                    return Err(Error::InvalidParameter(
                        "rectangle has empty interior".into(),
                    ));
                }
            }
            Domain::Polygon { vertices } => {
                if vertices.len() < 3 {
                    return Err(Error::InvalidParameter(
                        "polygon needs three vertices".into(),
                    ));
                }
                let m = vertices.len();
                for i in 0..m {
                    let (a, b, c) = (vertices[i], vertices[(i + 1) % m], vertices[(i + 2) % m]);
                    let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
                    if !(cross > 0.0) {
                        return Err(Error::InvalidParameter(
                            "polygon must be convex with counter-clockwise vertices".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Rect { lo, .. } => lo.len(),
            Domain::Polygon { .. } => 2,
        }
    }

    /// Bounding box `(lo, hi)`.
    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::Rect { lo, hi } => (lo.clone(), hi.clone()),
            Domain::Polygon { vertices } => {
                let mut lo = vec![f64::INFINITY; 2];
                let mut hi = vec![f64::NEG_INFINITY; 2];
                for v in vertices {
                    for a in 0..2 {
                        lo[a] = lo[a].min(v[a]);
                        hi[a] = hi[a].max(v[a]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Signed distance to the boundary: negative inside, positive outside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match self {
            Domain::Rect { lo, hi } => {
                let n = lo.len();
                let mut outside = 0.0;
                let mut inside = f64::INFINITY;
                for a in 0..n {
                    let d = (lo[a] - x[a]).max(x[a] - hi[a]);
                    if d > 0.0 {
                        outside += d * d;
                    }
                    inside = inside.min(-d);
                }
                if outside > 0.0 {
                    outside.sqrt()
                } else {
                    -inside
                }
            }
            Domain::Polygon { vertices } => {
                let m = vertices.len();
                let mut min_edge = f64::INFINITY;
                let mut inside = true;
                for i in 0..m {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % m];
                    let e = [b[0] - a[0], b[1] - a[1]];
                    let w = [x[0] - a[0], x[1] - a[1]];
                    if e[0] * w[1] - e[1] * w[0] < 0.0 {
                        inside = false;
                    }
                    let t =
                        ((w[0] * e[0] + w[1] * e[1]) / (e[0] * e[0] + e[1] * e[1])).clamp(0.0, 1.0);
                    let d = ((w[0] - t * e[0]).powi(2) + (w[1] - t * e[1]).powi(2)).sqrt();
                    min_edge = min_edge.min(d);
                }
                if inside {
                    -min_edge
                } else {
                    min_edge
                }
            }
        }
    }

    /// Membership in the open domain.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.signed_distance(x) < 0.0
    }

    /// Lebesgue measure.
    pub fn measure(&self) -> f64 {
        match self {
            Domain::Rect { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
            Domain::Polygon { vertices } => {
                let m = vertices.len();
                0.5 * (0..m)
                    .map(|i| {
                        let (a, b) = (vertices[i], vertices[(i + 1) % m]);
                        a[0] * b[1] - b[0] * a[1]
                    })
                    .sum::<f64>()
            }
        }
    }

    /// `L^n((∂A)_δ)`, the measure of `{x : dist(x, ∂A) < δ}`.
    ///
    /// Boxes use the Steiner formula for the outer parallel set minus the
    /// inner box; polygons add perimeter and corner terms outside and use a
    /// grid quadrature inside.
    pub fn boundary_neighborhood_measure(&self, delta: f64) -> f64 {
        if delta <= 0.0 {
            return 0.0;
        }
        match self {
            Domain::Rect { lo, hi } => {
                let s: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| b - a).collect();
                let inner: f64 = s.iter().map(|l| (l - 2.0 * delta).max(0.0)).product();
                let outer = match s.len() {
                    1 => s[0] + 2.0 * delta,
                    2 => {
                        s[0] * s[1]
                            + 2.0 * (s[0] + s[1]) * delta
                            + std::f64::consts::PI * delta * delta
                    }
                    3 => {
                        let (a, b, c) = (s[0], s[1], s[2]);
                        a * b * c
                            + 2.0 * (a * b + b * c + c * a) * delta
                            + std::f64::consts::PI * (a + b + c) * delta * delta
                            + unit_ball_volume(3) * delta.powi(3)
                    }
                    _ => unreachable!(),
                };
                outer - inner
            }
            Domain::Polygon { vertices } => {
                let m = vertices.len();
                let perimeter: f64 = (0..m)
                    .map(|i| {
                        let (a, b) = (vertices[i], vertices[(i + 1) % m]);
                        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
                    })
                    .sum();
                let outer_band = perimeter * delta + std::f64::consts::PI * delta * delta;
                let (lo, hi) = self.bbox();
                let res = delta.min((hi[0] - lo[0]).min(hi[1] - lo[1])) / 64.0;
                let nx = ((hi[0] - lo[0]) / res).ceil() as usize;
                let ny = ((hi[1] - lo[1]) / res).ceil() as usize;
                let mut count = 0usize;
                for i in 0..nx {
                    for j in 0..ny {
                        let x = [
                            lo[0] + (i as f64 + 0.5) * res,
                            lo[1] + (j as f64 + 0.5) * res,
                        ];
                        let d = self.signed_distance(&x);
                        if d < 0.0 && d > -delta {
                            count += 1;
                        }
                    }
                }
                outer_band + count as f64 * res * res
            }
        }
    }
}

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::domain::Domain;
use super::points::PointSet;
use crate::error::{Error, Result};

const GOLDEN: f64 = 1.618_033_988_749_895;

/// Unscaled base sets for the `rescaled` generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum BaseSet {
    /// Product of the Fibonacci quasicrystal with gaps `1` and the golden
    /// ratio on every axis.
    Fibonacci,
    /// `i + amp·U(−½,½)^n`, one independent draw per site, `amp < 1`.
    Jittered { amp: f64 },
}

impl BaseSet {
    /// Lower bound on the packing radius and upper bound on the covering
    /// radius.
    pub fn radii(&self, n: usize) -> (f64, f64) {
        let rn = (n as f64).sqrt();
        match self {
            BaseSet::Fibonacci => (0.5, rn * GOLDEN / 2.0),
            BaseSet::Jittered { amp } => ((1.0 - amp) / 2.0, rn * (1.0 + amp) / 2.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if let BaseSet::Jittered { amp } = self {
            if !(0.0..1.0).contains(amp) {
                return Err(Error::InvalidParameter(
                    "jitter amplitude must lie in [0, 1)".into(),
                ));
            }
        }
        Ok(())
    }

    fn coord_1d(k: i64) -> f64 {
        k as f64 + (GOLDEN - 1.0) * (k as f64 / GOLDEN).floor()
    }

    /// Index range whose base points cover `[lo, hi]` on one axis.
    fn index_range(&self, lo: f64, hi: f64) -> (i64, i64) {
        match self {
            // coord_1d(k) lies between k and k·τ (k ≥ 0) or k·τ and k (k < 0).
            BaseSet::Fibonacci => {
                let a = if lo < 0.0 {
                    (lo / 1.0).floor()
                } else {
                    (lo / GOLDEN).floor()
                };
                let b = if hi < 0.0 {
                    (hi / GOLDEN).ceil()
                } else {
                    hi.ceil()
                };
                (a as i64 - 1, b as i64 + 1)
            }
            BaseSet::Jittered { .. } => (lo.floor() as i64 - 1, hi.ceil() as i64 + 1),
        }
    }

    fn point(&self, site: [i64; 3], n: usize, seed: u64) -> [f64; 3] {
        let mut x = [0.0; 3];
        match self {
            BaseSet::Fibonacci => {
                for k in 0..n {
                    x[k] = Self::coord_1d(site[k]);
                }
            }
            BaseSet::Jittered { amp } => {
                let mut rng = site_rng(seed, site);
                for k in 0..n {
                    x[k] = site[k] as f64 + amp * (rng.random::<f64>() - 0.5);
                }
            }
        }
        x
    }
}

/// A counter-based generator for lattice site `i`: the stream is a fixed
/// encoding of the site, so draws do not depend on enumeration order.
pub fn site_rng(seed: u64, site: [i64; 3]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(site_stream(site));
    rng
}

pub(crate) fn site_stream(site: [i64; 3]) -> u64 {
    // 21 bits per axis, offset to be non-negative.
    const OFF: i64 = 1 << 20;
    site.iter().fold(0u64, |acc, &c| {
        debug_assert!(c.abs() < OFF);
        (acc << 21) | ((c + OFF) as u64 & ((1 << 21) - 1))
    })
}

/// Built-in smooth diffeomorphisms of `R^n`, periodic perturbations of the
/// identity with analytic Jacobian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum Diffeomorphism {
    Identity,
    /// `Φ = S∘D` with the stretch `D_k(x) = x_k + μ(L/2π)sin(2πx_k/L)` and
    /// the shear `S(y) = (y_1 + η(L/2π)sin(2πy_2/L), y_2, …)`.
    ShearStretch {
        shear: f64,
        stretch: f64,
        period: f64,
    },
}

impl Default for Diffeomorphism {
    fn default() -> Self {
        Diffeomorphism::ShearStretch {
            shear: 0.3,
            stretch: 0.3,
            period: 2.0,
        }
    }
}

impl Diffeomorphism {
    pub fn validate(&self) -> Result<()> {
        if let Diffeomorphism::ShearStretch {
            shear,
            stretch,
            period,
        } = self
        {
            if !(period.is_finite() && *period > 0.0 && shear.is_finite()) {
                return Err(Error::InvalidParameter(
                    "diffeomorphism period must be positive".into(),
                ));
            }
            if !(stretch.abs() < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "stretch {stretch} gives det∇Φ ≥ ν with ν ≤ 0"
                )));
            }
        }
        Ok(())
    }

    /// `(M, ν)` with `‖∇Φ‖ ≤ M` and `det∇Φ ≥ ν`.
    pub fn bounds(&self, n: usize) -> (f64, f64) {
        match self {
            Diffeomorphism::Identity => (1.0, 1.0),
            Diffeomorphism::ShearStretch { shear, stretch, .. } => {
                let mu = stretch.abs();
                let s = (shear.abs() + (shear * shear + 4.0).sqrt()) / 2.0;
                ((1.0 + mu) * s, (1.0 - mu).powi(n as i32))
            }
        }
    }

    /// Sup-norm bound on `Φ(x) − x`.
    pub fn displacement(&self) -> f64 {
        match self {
            Diffeomorphism::Identity => 0.0,
            Diffeomorphism::ShearStretch {
                shear,
                stretch,
                period,
            } => (shear.abs() + stretch.abs()) * period / (2.0 * PI),
        }
    }

    pub fn apply(&self, x: &[f64]) -> [f64; 3] {
        let mut y = [0.0; 3];
        y[..x.len()].copy_from_slice(x);
        if let Diffeomorphism::ShearStretch {
            shear,
            stretch,
            period,
        } = self
        {
            let w = 2.0 * PI / period;
            for v in y.iter_mut().take(x.len()) {
                *v += stretch / w * (w * *v).sin();
            }
            y[0] += shear / w * (w * y[1]).sin();
        }
        y
    }

    pub fn jacobian_det(&self, x: &[f64]) -> f64 {
        match self {
            Diffeomorphism::Identity => 1.0,
            Diffeomorphism::ShearStretch {
                stretch, period, ..
            } => {
                let w = 2.0 * PI / period;
                x.iter().map(|&v| 1.0 + stretch * (w * v).cos()).product()
            }
        }
    }

    /// `Φ^{−1}(y)`: the shear is inverted in closed form and each stretch
    /// coordinate by a safeguarded Newton iteration.
    pub fn inverse(&self, y: &[f64]) -> [f64; 3] {
        let mut x = [0.0; 3];
        x[..y.len()].copy_from_slice(y);
        if let Diffeomorphism::ShearStretch {
            shear,
            stretch,
            period,
        } = self
        {
            let w = 2.0 * PI / period;
            x[0] -= shear / w * (w * x[1]).sin();
            for v in x.iter_mut().take(y.len()) {
                let t = *v;
                let amp = stretch.abs() / w;
                let (mut lo, mut hi) = (t - amp, t + amp);
                let mut z = t;
                for _ in 0..60 {
                    let f = z + stretch / w * (w * z).sin() - t;
                    if f.abs() < 1e-15 * (1.0 + t.abs()) {
                        break;
                    }
                    if f > 0.0 {
                        hi = z;
                    } else {
                        lo = z;
                    }
                    let step = z - f / (1.0 + stretch * (w * z).cos());
                    z = if step > lo && step < hi {
                        step
                    } else {
                        0.5 * (lo + hi)
                    };
                }
                *v = z;
            }
        }
        x
    }
}

/// Point-set generators: lattices, rescaled base sets, and images of the
/// lattice under a diffeomorphism applied after (`outside`) or before
/// (`inside`) scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    Cubic { epsilon: f64 },
    Rescaled { base: BaseSet, epsilon: f64 },
    DiffeoOutside { phi: Diffeomorphism, epsilon: f64 },
    DiffeoInside { phi: Diffeomorphism, epsilon: f64 },
}

impl GeneratorKind {
    pub fn epsilon(&self) -> f64 {
        match self {
            GeneratorKind::Cubic { epsilon }
            | GeneratorKind::Rescaled { epsilon, .. }
            | GeneratorKind::DiffeoOutside { epsilon, .. }
            | GeneratorKind::DiffeoInside { epsilon, .. } => *epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.epsilon();
        if !(e.is_finite() && e > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {e} must be positive"
            )));
        }
        match self {
            GeneratorKind::Rescaled { base, .. } => base.validate(),
            GeneratorKind::DiffeoOutside { phi, .. } | GeneratorKind::DiffeoInside { phi, .. } => {
                phi.validate()
            }
            GeneratorKind::Cubic { .. } => Ok(()),
        }
    }

    /// A priori `(packing lower bound, covering upper bound)`.
    pub fn radii(&self, n: usize) -> (f64, f64) {
        let e = self.epsilon();
        let rn = (n as f64).sqrt();
        match self {
            GeneratorKind::Cubic { .. } => (e / 2.0, rn * e / 2.0),
            GeneratorKind::Rescaled { base, .. } => {
                let (r, big_r) = base.radii(n);
                (e * r, e * big_r)
            }
            GeneratorKind::DiffeoOutside { phi, .. } | GeneratorKind::DiffeoInside { phi, .. } => {
                let (m, nu) = phi.bounds(n);
                (nu * m.powi(1 - n as i32) * e / 2.0, m * rn * e / 2.0)
            }
        }
    }

    /// Density of the limit distribution up to normalization.
    pub fn limit_density(&self, x: &[f64]) -> f64 {
        match self {
            GeneratorKind::DiffeoOutside { phi, .. } => {
                1.0 / phi.jacobian_det(&phi.inverse(x)[..x.len()])
            }
            _ => 1.0,
        }
    }
}

/// Generates the points of the set inside the bounding box of `region`
/// expanded by twice the a priori covering radius.
pub fn generate(kind: &GeneratorKind, region: &Domain, seed: u64) -> Result<PointSet> {
    kind.validate()?;
    let n = region.dim();
    if !(2..=3).contains(&n) {
        return Err(Error::InvalidParameter(
            "point sets live in dimension 2 or 3".into(),
        ));
    }
    let (lo, hi) = region.bbox();
    let margin = 2.0 * kind.radii(n).1;
    let blo: Vec<f64> = lo.iter().map(|v| v - margin).collect();
    let bhi: Vec<f64> = hi.iter().map(|v| v + margin).collect();
    let in_box = |x: &[f64; 3]| (0..n).all(|k| x[k] >= blo[k] && x[k] <= bhi[k]);
    let e = kind.epsilon();

    // Index ranges per axis in the unscaled coordinates.
    let slack = match kind {
        GeneratorKind::DiffeoOutside { phi, .. } => phi.displacement() / e,
        GeneratorKind::DiffeoInside { phi, .. } => phi.displacement(),
        _ => 0.0,
    };
    let ranges: Vec<(i64, i64)> = (0..n)
        .map(|k| {
            let (a, b) = (blo[k] / e - slack, bhi[k] / e + slack);
            match kind {
                GeneratorKind::Rescaled { base, .. } => base.index_range(a, b),
                _ => (a.floor() as i64 - 1, b.ceil() as i64 + 1),
            }
        })
        .collect();

    let mut points = Vec::new();
    let mut sites = Vec::new();
    let mut site = [0i64; 3];
    let total: usize = ranges.iter().map(|(a, b)| (b - a + 1) as usize).product();
    for mut t in 0..total {
        for k in (0..n).rev() {
            let len = (ranges[k].1 - ranges[k].0 + 1) as usize;
            site[k] = ranges[k].0 + (t % len) as i64;
            t /= len;
        }
        let mut i = [0.0; 3];
        for k in 0..n {
            i[k] = site[k] as f64;
        }
        let x = match kind {
            GeneratorKind::Cubic { .. } => scale(&i, e),
            GeneratorKind::Rescaled { base, .. } => scale(&base.point(site, n, seed), e),
            GeneratorKind::DiffeoOutside { phi, .. } => phi.apply(&scale(&i, e)[..n]),
            GeneratorKind::DiffeoInside { phi, .. } => scale(&phi.apply(&i[..n]), e),
        };
        if in_box(&x) {
            points.push(x);
            sites.push(site);
        }
    }
    Ok(PointSet::new(n, points).with_sites(sites))
}

fn scale(x: &[f64; 3], e: f64) -> [f64; 3] {
    [x[0] * e, x[1] * e, x[2] * e]
}

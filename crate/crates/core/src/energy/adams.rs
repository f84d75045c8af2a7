use serde::{Deserialize, Serialize};

use super::grid::{NodeMask, UniformGrid};
use super::kernel::unit_ball_volume;
use crate::error::{Error, Result};
use crate::sum::tree_sum_by;

/// Which of the two Riesz-potential bounds applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdamsRegime {
    /// `ν ∈ (0,n)`: `∫_O |x−z|^{−ν} ≤ c·L(O)^{1−ν/n}`.
    Measure,
    /// `ν > n`, `dist(z,O) > 0`: `∫_O |x−z|^{−ν} ≤ c·dist(z,O)^{n−ν}`.
    Distance,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamsReport {
    pub regime: AdamsRegime,
    pub nu: f64,
    /// `h^n Σ_{x∈O, x≠z} |x−z|^{−ν}`.
    pub quadrature: f64,
    /// `L(O)` as the volume of the cells of `O`.
    pub measure: f64,
    /// Distance from `z` to the union of the cells of `O`.
    pub distance: f64,
    /// The explicit constant of the simplified bound.
    pub constant: f64,
    /// `constant · L^{1−ν/n}` or `constant · dist^{n−ν}`.
    pub bound: f64,
    pub holds: bool,
}

/// Compares the lattice quadrature of `|x−z|^{−ν}` over the nodes of `O`
/// with the explicit constants of the Riesz-potential bounds.
///
/// The node set stands for the union of its closed cells `x + [−h/2,h/2]^n`;
/// measure and distance refer to that union. For `ν > n − 2` the
/// integrand is subharmonic away from `z`, so the node value under-estimates
/// its cell average and the continuum bound applies to the sum.
pub fn adams_bound_check(
    grid: &UniformGrid,
    o: &NodeMask,
    z: &[f64],
    nu: f64,
) -> Result<AdamsReport> {
    let n = grid.dim();
    let nf = n as f64;
    if o.len() != grid.len() {
        return Err(Error::GridMismatch("mask does not match grid".into()));
    }
    if !(nu > 0.0) || nu == nf || !nu.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "nu = {nu} must be positive and ≠ n"
        )));
    }
    let h = grid.h;
    let nodes = o.indices();
    let cell_dist = |i: usize| {
        let x = grid.coord(i);
        (0..n)
            .map(|a| ((x[a] - z[a]).abs() - h / 2.0).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let distance = nodes
        .iter()
        .map(|&i| cell_dist(i))
        .fold(f64::INFINITY, f64::min);
    let regime = if nu < nf {
        AdamsRegime::Measure
    } else {
        if !(distance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "nu = {nu} > n requires dist(z, O) > 0"
            )));
        }
        AdamsRegime::Distance
    };
    let hn = grid.cell_volume();
    let quadrature = hn
        * tree_sum_by(nodes.len(), |k| {
            let x = grid.coord(nodes[k]);
            let r2: f64 = (0..n).map(|a| (x[a] - z[a]).powi(2)).sum();
            if r2 <= (1e-12 * h).powi(2) {
                0.0
            } else {
                r2.powf(-nu / 2.0)
            }
        });
    let measure = hn * nodes.len() as f64;
    let omega = unit_ball_volume(n);
    let (constant, bound) = match regime {
        AdamsRegime::Measure => {
            let c = nf * omega.powf(nu / nf) / (nf - nu);
            (c, c * measure.powf(1.0 - nu / nf))
        }
        AdamsRegime::Distance => {
            let c = nf * omega / (nu - nf);
            let b = if nodes.is_empty() {
                0.0
            } else {
                c * distance.powf(nf - nu)
            };
            (c, b)
        }
    };
    Ok(AdamsReport {
        regime,
        nu,
        quadrature,
        measure,
        distance,
        constant,
        bound,
        holds: quadrature <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn unit_disc_nu_one() {
        let g = UniformGrid::centered(2, 200, 1.0 / 200.0, &[0.0, 0.0]).unwrap();
        let o = g.mask_where(|x| x[0] * x[0] + x[1] * x[1] <= 1.0);
        let r = adams_bound_check(&g, &o, &[0.0, 0.0], 1.0).unwrap();
        assert!((r.quadrature - 2.0 * PI).abs() < 0.03, "{}", r.quadrature);
        assert!((r.bound - 2.0 * PI).abs() < 0.01);
        assert!(r.holds);
    }

    #[test]
    fn exterior_annulus_distance_regime() {
        let g = UniformGrid::centered(2, 300, 0.01, &[0.0, 0.0]).unwrap();
        let o = g.mask_where(|x| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            r >= 0.5 && r <= 3.0
        });
        let nu = 3.0;
        let r = adams_bound_check(&g, &o, &[0.0, 0.0], nu).unwrap();
        // ∫_{0.5<|x|<3} |x|^{-3} = 2π(0.5^{-1} − 3^{-1}).
        let exact = 2.0 * PI * (2.0 - 1.0 / 3.0);
        assert!((r.quadrature - exact).abs() / exact < 0.02);
        assert!(r.holds);
    }

    #[test]
    fn empty_set_and_parameter_errors() {
        let g = UniformGrid::centered(2, 10, 0.1, &[0.0, 0.0]).unwrap();
        let empty = NodeMask::empty(g.len());
        let r = adams_bound_check(&g, &empty, &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(r.quadrature, 0.0);
        assert!(r.holds);
        let full = NodeMask::full(g.len());
        assert!(adams_bound_check(&g, &full, &[0.0, 0.0], 3.0).is_err());
        assert!(adams_bound_check(&g, &full, &[0.0, 0.0], 2.0).is_err());
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::field::ScalarField;
use super::gagliardo::{gagliardo_energy, PairRegion};
use super::grid::{NodeMask, UniformGrid};
use super::kernel::FractionalKernel;
use crate::error::Result;
use crate::stats::loglog_slope;
use crate::sum::tree_sum_by;

/// A ball `B_r(c)` on which the inequalities are probed; `mean_radius`
/// selects the subset `O = B_{mean_radius}(c)` used for the mean.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeGeometry {
    pub center: Vec<f64>,
    pub radius: f64,
    pub mean_radius: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ProbeReport {
    /// `|u|^p` over `A×A`.
    pub seminorm: f64,
    /// `‖u − u_O‖^p / |u|^p`; `None` when both vanish (vacuous).
    pub poincare_wirtinger: Option<f64>,
    /// `‖u‖^p / |u|^p`.
    pub poincare: Option<f64>,
    /// `∫ |u|^p dist(x, ∂A)^{−sp} / |u|^p`.
    pub hardy: Option<f64>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    if den > 0.0 {
        Some(num / den)
    } else if num == 0.0 {
        None
    } else {
        Some(f64::INFINITY)
    }
}

/// Empirical constants of the Poincaré–Wirtinger, Poincaré and Hardy
/// inequalities for `u` on a ball.
pub fn poincare_hardy_probe(
    u: &ScalarField,
    k: &FractionalKernel,
    geom: &ProbeGeometry,
) -> Result<ProbeReport> {
    let g = &u.grid;
    let n = g.dim();
    let dist = |x: &[f64; 3]| {
        (0..n)
            .map(|a| (x[a] - geom.center[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let a = g.mask_where(|x| dist(x) < geom.radius);
    let o = match geom.mean_radius {
        Some(r) => g.mask_where(|x| dist(x) < r),
        None => a.clone(),
    };
    let p = k.p;
    let seminorm = gagliardo_energy(u, k, &PairRegion::square(a.clone()))?;
    let hn = g.cell_volume();
    let oi = o.indices();
    let mean = if oi.is_empty() {
        0.0
    } else {
        tree_sum_by(oi.len(), |i| u.values[oi[i]]) / oi.len() as f64
    };
    let ai = a.indices();
    let pw = hn * tree_sum_by(ai.len(), |i| (u.values[ai[i]] - mean).abs().powf(p));
    let lp = hn * tree_sum_by(ai.len(), |i| u.values[ai[i]].abs().powf(p));
    let sp = k.sp();
    let hardy = hn
        * tree_sum_by(ai.len(), |i| {
            let x = g.coord(ai[i]);
            let d = geom.radius - dist(&x);
            u.values[ai[i]].abs().powf(p) / d.powf(sp)
        });
    Ok(ProbeReport {
        seminorm,
        poincare_wirtinger: ratio(pw, seminorm),
        poincare: ratio(lp, seminorm),
        hardy: ratio(hardy, seminorm),
    })
}

/// Poincaré–Wirtinger ratio of the fixed profile `u(x) = x₁ + x₁x₂ + ...`
/// restricted to balls of radius `r·R` for each `r` in `radii`, on a grid of
/// fixed spacing; returns the ratios and their log-log slope (≈ `sp`).
pub fn pw_scaling_sweep(
    k: &FractionalKernel,
    radii: &[f64],
    nodes_per_unit_radius: usize,
) -> Result<(Vec<f64>, f64)> {
    let h = 1.0 / nodes_per_unit_radius as f64;
    let mut ratios = Vec::with_capacity(radii.len());
    for &r in radii {
        let half = (r / h).ceil() as usize + 1;
        let grid = UniformGrid::centered(k.n, half, h, &vec![0.0; k.n])?;
        // The profile is rescaled with the ball: u_r(x) = φ(x/r).
        let u = ScalarField::from_fn(grid, false, |x| profile(&[x[0] / r, x[1] / r, x[2] / r]));
        let rep = poincare_hardy_probe(
            &u,
            k,
            &ProbeGeometry {
                center: vec![0.0; k.n],
                radius: r,
                mean_radius: None,
            },
        )?;
        ratios.push(rep.poincare_wirtinger.unwrap_or(f64::NAN));
    }
    let slope = loglog_slope(radii, &ratios);
    Ok((ratios, slope))
}

fn profile(x: &[f64; 3]) -> f64 {
    (2.0 * x[0]).sin() + x[0] * x[1] + 0.5 * (x[1] - 0.3).powi(2)
}

/// Summary of the probe over a seeded family of exterior-zero random fields
/// supported in the unit ball.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyReport {
    pub fields: usize,
    pub max_poincare_wirtinger: f64,
    pub max_poincare: f64,
    pub max_hardy: f64,
}

pub fn probe_random_family(
    k: &FractionalKernel,
    fields: usize,
    half_nodes: usize,
    seed: u64,
) -> Result<FamilyReport> {
    let h = 1.0 / half_nodes as f64;
    let grid = UniformGrid::centered(k.n, half_nodes + 1, h, &vec![0.0; k.n])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geom = ProbeGeometry {
        center: vec![0.0; k.n],
        radius: 1.0,
        mean_radius: None,
    };
    let mut rep = FamilyReport {
        fields,
        max_poincare_wirtinger: 0.0,
        max_poincare: 0.0,
        max_hardy: 0.0,
    };
    for _ in 0..fields {
        let bumps: Vec<([f64; 3], f64, f64)> = (0..4)
            .map(|_| {
                let c = [
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.6..0.6),
                ];
                (c, rng.random_range(0.1..0.5), rng.random_range(-1.0..1.0))
            })
            .collect();
        let n = k.n;
        let u = ScalarField::from_fn(grid.clone(), true, |x| {
            let r2: f64 = (0..n).map(|a| x[a] * x[a]).sum();
            if r2 >= 1.0 {
                return 0.0;
            }
            let mut v = 0.0;
            for (c, w, amp) in &bumps {
                let d2: f64 = (0..n).map(|a| (x[a] - c[a]).powi(2)).sum();
                v += amp * (-d2 / (w * w)).exp();
            }
            v * (1.0 - r2)
        });
        let r = poincare_hardy_probe(&u, k, &geom)?;
        let upd = |m: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *m = m.max(v);
            }
        };
        upd(&mut rep.max_poincare_wirtinger, r.poincare_wirtinger);
        upd(&mut rep.max_poincare, r.poincare);
        upd(&mut rep.max_hardy, r.hardy);
    }
    Ok(rep)
}

/// Mask of nodes inside the ball `B_r(c)`.
pub fn ball_mask(grid: &UniformGrid, center: &[f64], r: f64) -> NodeMask {
    let n = grid.dim();
    grid.mask_where(|x| (0..n).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>() <= r * r)
}

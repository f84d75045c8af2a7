use serde::{Deserialize, Serialize};

use super::obstacles::ObstacleFamily;
use crate::energy::{
    unit_ball_volume, DirectForm, FractionalKernel, NodeMask, QuadraticForm, ScalarField,
    UniformGrid,
};
use crate::error::{Error, Result};
use crate::geometry::EmpiricalLimitData;
use crate::solver::{pcg, spg, CgOptions, SpgOptions};
use crate::sum::{dot, tree_sum_by};

/// Right-hand side `f` of the minimization problems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingSpec {
    Zero,
    /// `f(x) = c·(1 − |x−x₀|²/ρ²)²` on `B_ρ(x₀)`, with `c` chosen so that
    /// `∫f = mass`.
    Bump {
        center: Vec<f64>,
        radius: f64,
        mass: f64,
    },
}

impl ForcingSpec {
    /// Unit-mass bump of radius `0.35` at the centre of `(0,1)^n`.
    pub fn default_bump(n: usize) -> Self {
        ForcingSpec::Bump {
            center: vec![0.5; n],
            radius: 0.35,
            mass: 1.0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            ForcingSpec::Zero => Ok(()),
            ForcingSpec::Bump {
                center,
                radius,
                mass,
            } => {
                if center.len() != n || !(*radius > 0.0) || !mass.is_finite() {
                    return Err(Error::InvalidParameter(
                        "bump needs an n-dimensional centre, positive radius and finite mass"
                            .into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ForcingSpec::Zero => 0.0,
            ForcingSpec::Bump {
                center,
                radius,
                mass,
            } => {
                let n = center.len();
                // ∫_{B_ρ} (1 − |x|²/ρ²)² dx = 8ω_nρ^n / ((n+2)(n+4)).
                let norm =
                    8.0 * unit_ball_volume(n) * radius.powi(n as i32) / ((n + 2) * (n + 4)) as f64;
                mass / norm * bump_profile(x, center, *radius)
            }
        }
    }

    pub fn sample(&self, grid: &UniformGrid) -> Vec<f64> {
        (0..grid.len())
            .map(|i| self.eval(&grid.coord(i)[..grid.dim()]))
            .collect()
    }
}

/// `(1 − |x−c|²/ρ²)²` inside `B_ρ(c)`, zero outside.
pub fn bump_profile(x: &[f64], c: &[f64], rho: f64) -> f64 {
    let d2: f64 = c
        .iter()
        .enumerate()
        .map(|(a, ca)| (x[a] - ca).powi(2))
        .sum::<f64>()
        / (rho * rho);
    if d2 < 1.0 {
        (1.0 - d2).powi(2)
    } else {
        0.0
    }
}

/// `min G(u) = E(u) − h^n Σ f·u` over fields vanishing on the obstacles
/// and on the boundary collar of the grid.
#[derive(Clone, Debug)]
pub struct PerforatedProblem {
    /// Grid over `U`, carrying the `boundary_collar` mask.
    pub grid: UniformGrid,
    pub kernel: FractionalKernel,
    pub obstacles: Option<ObstacleFamily>,
    pub forcing: Vec<f64>,
    pub cg: CgOptions,
    pub spg: SpgOptions,
}

/// `min E(u) + θ·capT·h^n Σ β|u|^p − h^n Σ f·u` over fields vanishing on
/// the boundary collar.
#[derive(Clone, Debug)]
pub struct HomogenizedProblem {
    pub grid: UniformGrid,
    pub kernel: FractionalKernel,
    pub theta: f64,
    /// Nodal density of the limit distribution.
    pub beta: Vec<f64>,
    pub cap_t: f64,
    pub forcing: Vec<f64>,
    pub cg: CgOptions,
    pub spg: SpgOptions,
}

/// Minimum value, its parts, and the minimizer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Minimum {
    pub value: f64,
    /// `E(u)` over `U×U`.
    pub energy: f64,
    /// `θ·capT·h^n Σ β|u|^p`; zero for perforated problems.
    pub mass: f64,
    /// `−h^n Σ f·u`.
    pub forcing: f64,
    /// `capT·h^n Σ β|u|^p`: the derivative of the minimum in `θ`.
    pub d_theta: f64,
    pub iterations: usize,
    pub residual: f64,
    #[serde(skip)]
    pub minimizer: Option<ScalarField>,
}

impl Minimum {
    pub fn field(&self) -> &ScalarField {
        self.minimizer.as_ref().expect("minimizer kept in memory")
    }
}

pub fn solve_perforated(prob: &PerforatedProblem) -> Result<Minimum> {
    let mut fixed = collar(&prob.grid)?;
    if let Some(fam) = &prob.obstacles {
        fixed = fixed.union(&fam.union(&prob.grid));
    }
    minimize(
        &prob.grid,
        &prob.kernel,
        &fixed,
        None,
        &prob.forcing,
        &prob.cg,
        &prob.spg,
    )
}

pub fn solve_homogenized(prob: &HomogenizedProblem) -> Result<Minimum> {
    if !(prob.theta >= 0.0 && prob.cap_t >= 0.0) {
        return Err(Error::InvalidParameter(
            "theta and capT must be non-negative".into(),
        ));
    }
    if prob.beta.len() != prob.grid.len() || prob.beta.iter().any(|b| !(*b >= 0.0)) {
        return Err(Error::InvalidParameter(
            "beta must be a non-negative nodal field".into(),
        ));
    }
    let fixed = collar(&prob.grid)?;
    let vol = prob.grid.cell_volume();
    let weight: Vec<f64> = prob.beta.iter().map(|b| prob.cap_t * b * vol).collect();
    let mass: Vec<f64> = weight.iter().map(|w| prob.theta * w).collect();
    let mut m = minimize(
        &prob.grid,
        &prob.kernel,
        &fixed,
        Some(&mass),
        &prob.forcing,
        &prob.cg,
        &prob.spg,
    )?;
    let p = prob.kernel.p;
    let u = &m.field().values;
    m.d_theta = tree_sum_by(u.len(), |i| weight[i] * u[i].abs().powf(p));
    Ok(m)
}

/// Constant density `1/L^n(U)` on every node.
pub fn beta_uniform(grid: &UniformGrid, measure: f64) -> Vec<f64> {
    vec![1.0 / measure; grid.len()]
}

/// Nodal values of a histogram estimate `β̂`.
pub fn beta_from_histogram(data: &EmpiricalLimitData, grid: &UniformGrid) -> Vec<f64> {
    let n = data.histogram_dims.len();
    (0..grid.len())
        .map(|i| {
            let x = grid.coord(i);
            let c = (0..n).fold(0, |acc, a| {
                let t = ((x[a] - data.histogram_lo[a]) / data.histogram_cell[a])
                    .floor()
                    .max(0.0) as usize;
                acc * data.histogram_dims[a] + t.min(data.histogram_dims[a] - 1)
            });
            data.beta_hat[c]
        })
        .collect()
}

fn collar(grid: &UniformGrid) -> Result<NodeMask> {
    grid.mask(UniformGrid::BOUNDARY_COLLAR)
        .cloned()
        .ok_or_else(|| Error::InvalidParameter("grid carries no boundary collar".into()))
}

fn minimize(
    grid: &UniformGrid,
    k: &FractionalKernel,
    fixed: &NodeMask,
    mass: Option<&[f64]>,
    f: &[f64],
    cg: &CgOptions,
    spg_opts: &SpgOptions,
) -> Result<Minimum> {
    if f.len() != grid.len() {
        return Err(Error::GridMismatch(
            "forcing does not match the grid".into(),
        ));
    }
    let vol = grid.cell_volume();
    let free: Vec<bool> = fixed.0.iter().map(|c| !c).collect();
    let p = k.p;
    let (x, stats, energy) = if p == 2.0 {
        let mut form = QuadraticForm::regional(grid, k, None, None)?;
        if let Some(m) = mass {
            form = form.with_mass(m.to_vec());
        }
        // ∇G = 2Au − h^n f.
        let b: Vec<f64> = f
            .iter()
            .zip(&free)
            .map(|(fi, &fr)| if fr { 0.5 * vol * fi } else { 0.0 })
            .collect();
        let (x, st) = pcg(
            |u| form.half_hessian(u),
            &b,
            &free,
            &form.diagonal(),
            vec![0.0; grid.len()],
            cg,
        )?;
        let e = form.seminorm(&x);
        (x, st, e)
    } else {
        let form = DirectForm::new(grid, k, None, false, None)?;
        let mass_term = |u: &[f64]| match mass {
            Some(m) => tree_sum_by(u.len(), |i| m[i] * u[i].abs().powf(p)),
            None => 0.0,
        };
        let g = |u: &[f64]| form.energy(u) + mass_term(u) - vol * dot(f, u);
        let grad = |u: &[f64]| {
            let v = form.operator(u);
            (0..u.len())
                .map(|i| {
                    let mi =
                        mass.map_or(0.0, |m| m[i] * p * u[i].signum() * u[i].abs().powf(p - 1.0));
                    2.0 * v[i] + mi - vol * f[i]
                })
                .collect()
        };
        let project = |u: &mut [f64]| {
            for (ui, &fr) in u.iter_mut().zip(&free) {
                if !fr {
                    *ui = 0.0;
                }
            }
        };
        let (x, st) = spg(g, grad, project, vec![0.0; grid.len()], spg_opts)?;
        let e = form.energy(&x);
        (x, st, e)
    };
    let mass_value = match mass {
        Some(m) => tree_sum_by(x.len(), |i| m[i] * x[i].abs().powf(p)),
        None => 0.0,
    };
    let forcing = -vol * dot(f, &x);
    let mut g = grid.clone();
    g.masks.clear();
    Ok(Minimum {
        value: energy + mass_value + forcing,
        energy,
        mass: mass_value,
        forcing,
        d_theta: 0.0,
        iterations: stats.iterations,
        residual: stats.residual,
        minimizer: Some(ScalarField {
            grid: g,
            values: x,
            exterior_zero: false,
        }),
    })
}

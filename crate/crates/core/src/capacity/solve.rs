use serde::{Deserialize, Serialize};

use super::set::{contains_full_cell, CompactSetSpec};
use crate::energy::{
    ball_mask, DirectForm, FractionalKernel, NodeMask, QuadraticForm, ScalarField, UniformGrid,
};
use crate::error::{Error, Result};
use crate::solver::{pcg, spg, CgOptions, SpgOptions};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacitySolver {
    /// Conjugate gradients for `p = 2`, projected gradient otherwise.
    #[default]
    Auto,
    Cg,
    ProjectedGradient,
}

/// A truncated capacity problem on a grid of spacing `h` centred at `T`.
///
/// With `r_energy = None` the value is `C(T, B_r)`: the whole-space energy
/// of potentials vanishing outside `B̄_r`. With `r_energy = Some(R)` it is
/// `cap(T, B_R; r)`: the same potentials, but only interactions inside
/// `B_R × B_R` are counted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityProblem {
    pub t: CompactSetSpec,
    pub r_support: f64,
    #[serde(default)]
    pub r_energy: Option<f64>,
    pub kernel: FractionalKernel,
    pub h: f64,
    #[serde(default)]
    pub solver: CapacitySolver,
    #[serde(default)]
    pub cg: CgOptions,
    #[serde(default)]
    pub spg: SpgOptions,
}

impl CapacityProblem {
    pub fn new(t: CompactSetSpec, r_support: f64, kernel: FractionalKernel, h: f64) -> Self {
        CapacityProblem {
            t,
            r_support,
            r_energy: None,
            kernel,
            h,
            solver: CapacitySolver::Auto,
            cg: CgOptions::default(),
            spg: SpgOptions::default(),
        }
    }

    pub fn with_energy_window(mut self, r_energy: f64) -> Self {
        self.r_energy = Some(r_energy);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.t.validate()?;
        if self.t.dim() != self.kernel.n {
            return Err(Error::GridMismatch(
                "set and kernel dimensions differ".into(),
            ));
        }
        if !(self.h > 0.0 && self.r_support > 0.0) {
            return Err(Error::InvalidParameter(
                "h and r_support must be positive".into(),
            ));
        }
        if let Some(r_e) = self.r_energy {
            if !(r_e >= self.r_support) {
                return Err(Error::InvalidParameter(format!(
                    "energy window {r_e} smaller than support radius {}",
                    self.r_support
                )));
            }
        }
        if self.t.extent(self.h) > self.r_support {
            return Err(Error::InvalidParameter(
                "T is not contained in the support ball".into(),
            ));
        }
        Ok(())
    }

    /// Grid centred at `T` covering the energy window.
    pub fn grid(&self) -> Result<UniformGrid> {
        let outer = self.r_energy.unwrap_or(self.r_support);
        let half = (outer / self.h).ceil() as usize + 1;
        UniformGrid::centered(self.kernel.n, half.max(2), self.h, &self.t.center)
    }
}

/// Capacitary potential `u^T` and its energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub value: f64,
    pub potential: ScalarField,
    pub t_nodes: usize,
    pub free_nodes: usize,
    pub iterations: usize,
    pub residual: f64,
}

/// Minimizes the energy over potentials equal to 1 on the nodes of `T` and
/// vanishing outside `B̄_r`.
///
/// For `p = 2` the constraint `w ≥ 1` on `T` is active at the minimizer, so
/// the problem reduces to a linear system on the free nodes. The projected
/// gradient path imposes `w = 1` on `T` and `0 ≤ w ≤ 1` elsewhere, which
/// does not change the minimum since truncation lowers the energy.
pub fn solve_capacity(prob: &CapacityProblem) -> Result<CapacityResult> {
    prob.validate()?;
    let grid = prob.grid()?;
    let t_mask = prob.t.mask(&grid)?;
    let whole = prob.r_energy.is_none();
    if t_mask.count() == 0 {
        if !prob.t.is_empty() {
            return Err(Error::UnderResolved(format!(
                "obstacle under-resolved: no grid node of T at h = {}",
                prob.h
            )));
        }
        return Ok(CapacityResult {
            value: 0.0,
            potential: ScalarField::zeros(grid, whole),
            t_nodes: 0,
            free_nodes: 0,
            iterations: 0,
            residual: 0.0,
        });
    }
    if !matches!(prob.t.shape, super::Shape::Nodes { .. }) && !contains_full_cell(&grid, &t_mask) {
        return Err(Error::UnderResolved(format!(
            "obstacle under-resolved: T contains no full grid cell at h = {}",
            prob.h
        )));
    }
    let support = ball_mask(&grid, &prob.t.center, prob.r_support);
    let free: Vec<bool> = (0..grid.len())
        .map(|i| support.get(i) && !t_mask.get(i))
        .collect();
    let mut x0 = t_mask.to_f64();
    let window = prob.r_energy.map(|r| ball_mask(&grid, &prob.t.center, r));

    let use_cg = match prob.solver {
        CapacitySolver::Auto => prob.kernel.p == 2.0,
        CapacitySolver::Cg => true,
        CapacitySolver::ProjectedGradient => false,
    };
    let (values, stats, value) = if use_cg {
        if prob.kernel.p != 2.0 {
            return Err(Error::InvalidParameter(
                "conjugate gradients need p = 2".into(),
            ));
        }
        let form = quadratic_form(&grid, &prob.kernel, window.as_ref())?;
        let b = vec![0.0; grid.len()];
        let (x, st) = pcg(
            |u| form.half_hessian(u),
            &b,
            &free,
            &form.diagonal(),
            x0,
            &prob.cg,
        )?;
        let value = form.energy(&x).max(0.0);
        (x, st, value)
    } else {
        let form = DirectForm::new(&grid, &prob.kernel, window.as_ref(), whole, None)?;
        let project = |u: &mut [f64]| {
            for i in 0..u.len() {
                u[i] = if free[i] {
                    u[i].clamp(0.0, 1.0)
                } else if t_mask.get(i) {
                    1.0
                } else {
                    0.0
                };
            }
        };
        project(&mut x0);
        let grad = |u: &[f64]| form.operator(u).into_iter().map(|v| 2.0 * v).collect();
        let (x, st) = spg(|u| form.energy(u), grad, project, x0, &prob.spg)?;
        let value = form.energy(&x).max(0.0);
        (x, st, value)
    };
    let potential = ScalarField {
        grid,
        values,
        exterior_zero: whole,
    };
    Ok(CapacityResult {
        value,
        potential,
        t_nodes: t_mask.count(),
        free_nodes: free.iter().filter(|&&f| f).count(),
        iterations: stats.iterations,
        residual: stats.residual,
    })
}

fn quadratic_form(
    grid: &UniformGrid,
    k: &FractionalKernel,
    window: Option<&NodeMask>,
) -> Result<QuadraticForm> {
    match window {
        None => QuadraticForm::whole_space(grid, k),
        Some(w) => QuadraticForm::regional(grid, k, Some(w), None),
    }
}

/// Largest violations of the box constraints and of `u^T ≤ u^F`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub value_t: f64,
    pub value_f: f64,
    /// `max (u^T − u^F)⁺` and the node where it occurs.
    pub worst_order_violation: f64,
    pub worst_node: Option<usize>,
    /// `max` of `(−u)⁺` and `(u − 1)⁺` over both potentials.
    pub worst_box_violation: f64,
    pub holds: bool,
}

/// Solves for `T ⊆ F` with otherwise identical parameters and checks
/// `0 ≤ u^T ≤ u^F ≤ 1` nodewise with tolerance `1e−8`.
pub fn potential_ordering_check(
    t: &CompactSetSpec,
    f: &CompactSetSpec,
    params: &CapacityProblem,
) -> Result<OrderingReport> {
    let mut pt = params.clone();
    pt.t = t.clone();
    let mut pf = params.clone();
    pf.t = f.clone();
    // Both grids must coincide; they are centred at the respective sets.
    if t.center != f.center {
        return Err(Error::InvalidParameter(
            "T and F must share a centre".into(),
        ));
    }
    let gt = pt.grid()?;
    let (mt, mf) = (t.mask(&gt)?, f.mask(&gt)?);
    if !mt.is_subset_of(&mf) {
        return Err(Error::InvalidParameter(
            "T is not contained in F on the grid".into(),
        ));
    }
    let ut = solve_capacity(&pt)?;
    let uf = solve_capacity(&pf)?;
    let (mut worst, mut node) = (0.0f64, None);
    for (i, (a, b)) in ut
        .potential
        .values
        .iter()
        .zip(&uf.potential.values)
        .enumerate()
    {
        if a - b > worst {
            worst = a - b;
            node = Some(i);
        }
    }
    let boxv = ut
        .potential
        .values
        .iter()
        .chain(&uf.potential.values)
        .map(|&v| (-v).max(v - 1.0).max(0.0))
        .fold(0.0, f64::max);
    Ok(OrderingReport {
        value_t: ut.value,
        value_f: uf.value,
        worst_order_violation: worst,
        worst_node: node,
        worst_box_violation: boxv,
        holds: worst <= 1e-8 && boxv <= 1e-8,
    })
}

use rayon::prelude::*;

use super::field::ScalarField;
use super::grid::{NodeMask, UniformGrid};
use super::kernel::FractionalKernel;
use crate::error::{Error, Result};
use crate::fft::Convolver;
use crate::sum::{dot, tree_sum_by};

/// Largest node count accepted by the direct `O(N²)` path.
pub const DIRECT_NODE_LIMIT: usize = 128 * 128;

/// How an energy or operator is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// FFT for `p = 2` on grids above a few thousand nodes, direct otherwise.
    #[default]
    Auto,
    Fft,
    Direct,
}

impl Method {
    pub(crate) fn resolve(self, p: f64, nodes: usize) -> Result<Method> {
        match self {
            Method::Fft if p != 2.0 => Err(Error::InvalidParameter(format!(
                "the FFT path requires p = 2, got p = {p}"
            ))),
            Method::Direct if nodes > DIRECT_NODE_LIMIT => Err(Error::InvalidParameter(format!(
                "direct path limited to {DIRECT_NODE_LIMIT} nodes, grid has {nodes}"
            ))),
            Method::Auto if p == 2.0 && nodes > 1024 => Ok(Method::Fft),
            Method::Auto if nodes > DIRECT_NODE_LIMIT => Err(Error::InvalidParameter(format!(
                "p = {p} needs the direct path, limited to {DIRECT_NODE_LIMIT} nodes (grid has {nodes})"
            ))),
            Method::Auto => Ok(Method::Direct),
            m => Ok(m),
        }
    }
}

/// Kernel values on every integer offset reachable within a grid.
pub(crate) struct KernelTable {
    dims: Vec<usize>,
    strides: Vec<usize>,
    values: Vec<f64>,
}

impl KernelTable {
    pub(crate) fn new(grid: &UniformGrid, k: &FractionalKernel, band: Option<f64>) -> Self {
        let dims = grid.dims.clone();
        let d = dims.len();
        let ext: Vec<usize> = dims.iter().map(|&m| 2 * m - 1).collect();
        let mut strides = vec![1; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * ext[a + 1];
        }
        let total: usize = ext.iter().product();
        let h = grid.h;
        let values = (0..total)
            .into_par_iter()
            .map(|mut i| {
                let mut o = [0i64; 3];
                for a in (0..d).rev() {
                    o[a] = (i % ext[a]) as i64 - (dims[a] as i64 - 1);
                    i /= ext[a];
                }
                let o = &o[..d];
                if let Some(delta) = band {
                    let r2: f64 = o.iter().map(|&c| (c as f64 * h).powi(2)).sum();
                    if r2 >= delta * delta {
                        return 0.0;
                    }
                }
                k.eval_offset(o, h)
            })
            .collect();
        KernelTable {
            dims,
            strides,
            values,
        }
    }

    /// `K(x_i − x_j)` for linear node indices.
    #[inline]
    pub(crate) fn between(&self, xi: &[usize], xj: &[usize]) -> f64 {
        let mut idx = 0;
        for a in 0..self.dims.len() {
            idx += (xi[a] + self.dims[a] - 1 - xj[a]) * self.strides[a];
        }
        self.values[idx]
    }
}

pub(crate) fn multi_indices(grid: &UniformGrid) -> Vec<[usize; 3]> {
    (0..grid.len())
        .map(|i| {
            let k = grid.multi_index(i);
            let mut out = [0; 3];
            out[..k.len()].copy_from_slice(&k);
            out
        })
        .collect()
}

/// The `p = 2` energy as a quadratic form `E(u) = Σ u·Au` with
/// `Au = 2h^{2n}(S·u − K*u)` and an optional diagonal mass.
///
/// `S(x)` is `Σ_y K(x−y)` over the interacting nodes: the grid (or a window
/// of it) in the regional case, the whole lattice `hZ^n` in the whole-space
/// case. Fields are assumed to vanish outside the window.
pub struct QuadraticForm {
    pub(crate) grid: UniformGrid,
    conv: Convolver,
    diag: Vec<f64>,
    scale: f64,
    mass: Option<Vec<f64>>,
}

impl std::fmt::Debug for QuadraticForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuadraticForm")
            .field("dims", &self.grid.dims)
            .field("h", &self.grid.h)
            .finish()
    }
}

fn stencil(k: &FractionalKernel, h: f64, band: Option<f64>) -> impl Fn(&[i64]) -> f64 + Sync + '_ {
    move |o: &[i64]| {
        if let Some(delta) = band {
            let r2: f64 = o.iter().map(|&c| (c as f64 * h).powi(2)).sum();
            if r2 >= delta * delta {
                return 0.0;
            }
        }
        k.eval_offset(o, h)
    }
}

fn check_dim(grid: &UniformGrid, k: &FractionalKernel) -> Result<()> {
    if grid.dim() != k.n {
        return Err(Error::GridMismatch(format!(
            "kernel dimension {} vs grid dimension {}",
            k.n,
            grid.dim()
        )));
    }
    Ok(())
}

impl QuadraticForm {
    /// Interactions among nodes of `window` (all nodes when `None`).
    pub fn regional(
        grid: &UniformGrid,
        k: &FractionalKernel,
        window: Option<&NodeMask>,
        band: Option<f64>,
    ) -> Result<Self> {
        check_dim(grid, k)?;
        let conv = Convolver::new(&grid.dims, stencil(k, grid.h, band));
        let ind = match window {
            Some(w) => w.to_f64(),
            None => vec![1.0; grid.len()],
        };
        let diag = conv.apply(&ind);
        Ok(Self::assemble(grid, k, conv, diag))
    }

    /// Interactions with every node of `hZ^n`; the field vanishes outside the
    /// grid box.
    pub fn whole_space(grid: &UniformGrid, k: &FractionalKernel) -> Result<Self> {
        check_dim(grid, k)?;
        let conv = Convolver::new(&grid.dims, stencil(k, grid.h, None));
        let total = k.lattice_sum(grid.h);
        let diag = vec![total; grid.len()];
        Ok(Self::assemble(grid, k, conv, diag))
    }

    fn assemble(grid: &UniformGrid, k: &FractionalKernel, conv: Convolver, diag: Vec<f64>) -> Self {
        let mut g = grid.clone();
        g.masks.clear();
        QuadraticForm {
            grid: g,
            conv,
            diag,
            scale: grid.h.powi(2 * k.n as i32),
            mass: None,
        }
    }

    /// Adds `Σ_x m(x)·u(x)²` to the energy (already multiplied by `h^n` by
    /// the caller when it represents an integral).
    pub fn with_mass(mut self, mass: Vec<f64>) -> Self {
        assert_eq!(mass.len(), self.grid.len());
        self.mass = Some(mass);
        self
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `Σ_y K(x−y)` over the interacting nodes.
    pub fn row_sums(&self) -> &[f64] {
        &self.diag
    }

    /// `K * u` on the grid.
    pub fn convolve(&self, u: &[f64]) -> Vec<f64> {
        self.conv.apply(u)
    }

    /// The nonlocal operator `v = 2h^{2n}(S·u − K*u)`; the energy gradient
    /// is `2v`. The mass term is not included.
    pub fn operator(&self, u: &[f64]) -> Vec<f64> {
        let ku = self.conv.apply(u);
        let c = 2.0 * self.scale;
        u.par_iter()
            .zip(ku.par_iter())
            .zip(self.diag.par_iter())
            .map(|((&ui, &kui), &si)| c * (si * ui - kui))
            .collect()
    }

    /// Half the Hessian applied to `u`: `Au = v + mass·u`, so that
    /// `E(u) = Σ u·Au` and `∇E = 2Au`.
    pub fn half_hessian(&self, u: &[f64]) -> Vec<f64> {
        let mut v = self.operator(u);
        if let Some(m) = &self.mass {
            v.par_iter_mut()
                .zip(m.par_iter().zip(u.par_iter()))
                .for_each(|(vi, (mi, ui))| *vi += mi * ui);
        }
        v
    }

    /// Diagonal of `A`.
    pub fn diagonal(&self) -> Vec<f64> {
        let c = 2.0 * self.scale;
        (0..self.len())
            .map(|i| c * self.diag[i] + self.mass.as_ref().map_or(0.0, |m| m[i]))
            .collect()
    }

    /// `E(u) = Σ u·Au`, including the mass term.
    pub fn energy(&self, u: &[f64]) -> f64 {
        dot(u, &self.half_hessian(u))
    }

    /// Energy without the mass term.
    pub fn seminorm(&self, u: &[f64]) -> f64 {
        dot(u, &self.operator(u))
    }
}

/// Direct evaluation for general `p`, over a window of the grid and
/// optionally with the zero exterior of the whole lattice.
pub(crate) struct DirectForm {
    table: KernelTable,
    idx: Vec<[usize; 3]>,
    d: usize,
    p: f64,
    scale: f64,
    window: Vec<usize>,
    /// `Σ_{y ∉ window} K(x−y)` for whole-space forms.
    exterior: Option<Vec<f64>>,
}

impl DirectForm {
    pub(crate) fn new(
        grid: &UniformGrid,
        k: &FractionalKernel,
        window: Option<&NodeMask>,
        whole_space: bool,
        band: Option<f64>,
    ) -> Result<Self> {
        check_dim(grid, k)?;
        Method::Direct.resolve(k.p, grid.len())?;
        let table = KernelTable::new(grid, k, band);
        let idx = multi_indices(grid);
        let window: Vec<usize> = match window {
            Some(w) => w.indices(),
            None => (0..grid.len()).collect(),
        };
        let d = grid.dim();
        let exterior = if whole_space {
            let total = k.lattice_sum(grid.h);
            Some(
                (0..grid.len())
                    .into_par_iter()
                    .map(|x| {
                        let mut acc = 0.0;
                        for &y in &window {
                            acc += table.between(&idx[x][..d], &idx[y][..d]);
                        }
                        total - acc
                    })
                    .collect(),
            )
        } else {
            None
        };
        Ok(DirectForm {
            table,
            idx,
            d,
            p: k.p,
            scale: grid.h.powi(2 * k.n as i32),
            window,
            exterior,
        })
    }

    /// `v(x) = p h^{2n} Σ_y K(x−y)|u(x)−u(y)|^{p−2}(u(x)−u(y))` (plus the
    /// exterior term for whole-space forms); the gradient is `2v`.
    pub(crate) fn operator(&self, u: &[f64]) -> Vec<f64> {
        let p = self.p;
        let d = self.d;
        (0..u.len())
            .into_par_iter()
            .map(|x| {
                let ux = u[x];
                let mut acc = 0.0;
                for &y in &self.window {
                    if y == x {
                        continue;
                    }
                    let diff = ux - u[y];
                    if diff != 0.0 {
                        let kv = self.table.between(&self.idx[x][..d], &self.idx[y][..d]);
                        acc += kv * signed_pow(diff, p - 1.0);
                    }
                }
                if let Some(ext) = &self.exterior {
                    if ux != 0.0 {
                        acc += ext[x] * signed_pow(ux, p - 1.0);
                    }
                }
                p * self.scale * acc
            })
            .collect()
    }

    pub(crate) fn energy(&self, u: &[f64]) -> f64 {
        let p = self.p;
        let d = self.d;
        let inner = crate::sum::par_rows_sum(self.window.len(), |wi| {
            let x = self.window[wi];
            let ux = u[x];
            let mut acc = 0.0;
            for &y in &self.window {
                if y != x {
                    let diff = (ux - u[y]).abs();
                    if diff != 0.0 {
                        acc +=
                            self.table.between(&self.idx[x][..d], &self.idx[y][..d]) * diff.powf(p);
                    }
                }
            }
            acc
        });
        let ext = match &self.exterior {
            Some(e) => 2.0 * tree_sum_by(u.len(), |x| e[x] * u[x].abs().powf(p)),
            None => 0.0,
        };
        self.scale * (inner + ext)
    }
}

#[inline]
pub(crate) fn signed_pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else {
        x.signum() * x.abs().powf(e)
    }
}

/// The operator `v(x) = p·h^{2n} Σ_y K(x−y)|u(x)−u(y)|^{p−2}(u(x)−u(y))`
/// over all grid nodes `y`; for exterior-zero fields the lattice nodes
/// outside the box (where `u = 0`) are included. The energy gradient of a
/// symmetric kernel is `2v`.
pub fn apply_operator(
    u: &ScalarField,
    k: &FractionalKernel,
    method: Method,
) -> Result<ScalarField> {
    let m = method.resolve(k.p, u.grid.len())?;
    let values = match m {
        Method::Fft => {
            let form = if u.exterior_zero {
                QuadraticForm::whole_space(&u.grid, k)?
            } else {
                QuadraticForm::regional(&u.grid, k, None, None)?
            };
            form.operator(&u.values)
        }
        _ => DirectForm::new(&u.grid, k, None, u.exterior_zero, None)?.operator(&u.values),
    };
    Ok(ScalarField {
        grid: u.grid.clone(),
        values,
        exterior_zero: u.exterior_zero,
    })
}

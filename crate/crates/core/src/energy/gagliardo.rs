use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::ScalarField;
use super::grid::NodeMask;
use super::kernel::FractionalKernel;
use super::operator::{multi_indices, DirectForm, KernelTable, Method, QuadraticForm};
use crate::error::{Error, Result};
use crate::fft::Convolver;
use crate::sum::{par_rows_sum, tree_sum_by};

/// A set of node pairs `A×B`, optionally intersected with the band
/// `{|x − y| < δ}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRegion {
    pub rows: NodeMask,
    pub cols: NodeMask,
    pub band: Option<f64>,
}

impl PairRegion {
    pub fn new(rows: NodeMask, cols: NodeMask) -> Self {
        PairRegion {
            rows,
            cols,
            band: None,
        }
    }

    /// All pairs of grid nodes.
    pub fn full(len: usize) -> Self {
        Self::new(NodeMask::full(len), NodeMask::full(len))
    }

    /// `A×A`.
    pub fn square(a: NodeMask) -> Self {
        Self::new(a.clone(), a)
    }

    pub fn with_band(mut self, delta: f64) -> Self {
        self.band = Some(delta);
        self
    }
}

/// `h^{2n} Σ_{x∈A, y∈B, x≠y} K(x−y)|u(x)−u(y)|^p`.
///
/// Only grid nodes take part; see [`whole_space_energy`] for the exterior.
pub fn gagliardo_energy(u: &ScalarField, k: &FractionalKernel, e: &PairRegion) -> Result<f64> {
    gagliardo_energy_with(u, k, e, Method::Auto)
}

pub fn gagliardo_energy_with(
    u: &ScalarField,
    k: &FractionalKernel,
    e: &PairRegion,
    method: Method,
) -> Result<f64> {
    let n = u.grid.len();
    if e.rows.len() != n || e.cols.len() != n {
        return Err(Error::GridMismatch(
            "pair-region masks do not match the grid".into(),
        ));
    }
    if u.grid.dim() != k.n {
        return Err(Error::GridMismatch(
            "kernel and grid dimensions differ".into(),
        ));
    }
    if !e.rows.any() || !e.cols.any() {
        return Ok(0.0);
    }
    match method.resolve(k.p, n)? {
        Method::Fft => Ok(energy_fft(u, k, e)),
        _ => Ok(energy_direct(u, k, e)),
    }
}

fn energy_direct(u: &ScalarField, k: &FractionalKernel, e: &PairRegion) -> f64 {
    let grid = &u.grid;
    let table = KernelTable::new(grid, k, e.band);
    let idx = multi_indices(grid);
    let d = grid.dim();
    let rows = e.rows.indices();
    let cols = e.cols.indices();
    let p = k.p;
    let vals = &u.values;
    let sum = par_rows_sum(rows.len(), |ri| {
        let x = rows[ri];
        let ux = vals[x];
        let mut acc = 0.0;
        for &y in &cols {
            if y == x {
                continue;
            }
            let diff = (ux - vals[y]).abs();
            if diff != 0.0 {
                let w = if p == 2.0 { diff * diff } else { diff.powf(p) };
                acc += table.between(&idx[x][..d], &idx[y][..d]) * w;
            }
        }
        acc
    });
    grid.h.powi(2 * k.n as i32) * sum
}

fn energy_fft(u: &ScalarField, k: &FractionalKernel, e: &PairRegion) -> f64 {
    let grid = &u.grid;
    let h = grid.h;
    let band = e.band;
    let conv = Convolver::new(&grid.dims, |o: &[i64]| {
        if let Some(delta) = band {
            let r2: f64 = o.iter().map(|&c| (c as f64 * h).powi(2)).sum();
            if r2 >= delta * delta {
                return 0.0;
            }
        }
        k.eval_offset(o, h)
    });
    let r = e.rows.to_f64();
    let c = e.cols.to_f64();
    let v = &u.values;
    let cu: Vec<f64> = c.iter().zip(v).map(|(a, b)| a * b).collect();
    let (kc, (kcu, kr)) = rayon::join(
        || conv.apply(&c),
        || rayon::join(|| conv.apply(&cu), || conv.apply(&r)),
    );
    // Σ_{x∈A,y∈B} K (u_x − u_y)² = Σ_A u²(K*1_B) − 2 Σ_A u (K*(1_B u)) + Σ_B u²(K*1_A).
    let total = tree_sum_by(v.len(), |x| {
        let ux = v[x];
        r[x] * (ux * ux * kc[x] - 2.0 * ux * kcu[x]) + c[x] * ux * ux * kr[x]
    });
    h.powi(2 * k.n as i32) * total
}

/// Per-node column sums `c(y) = h^{2n} Σ_{x≠y} K(x−y)|u(x)−u(y)|^p` over
/// all grid nodes `x`, so that the energy over `grid × B` is `Σ_{y∈B} c(y)`.
pub fn column_energies(u: &ScalarField, k: &FractionalKernel) -> Result<Vec<f64>> {
    let grid = &u.grid;
    if grid.dim() != k.n {
        return Err(Error::GridMismatch(
            "kernel and grid dimensions differ".into(),
        ));
    }
    let scale = grid.h.powi(2 * k.n as i32);
    let v = &u.values;
    match Method::Auto.resolve(k.p, grid.len())? {
        Method::Fft => {
            let conv = Convolver::new(&grid.dims, |o: &[i64]| k.eval_offset(o, grid.h));
            let ones = vec![1.0; v.len()];
            let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
            let (s, (ku, ku2)) = rayon::join(
                || conv.apply(&ones),
                || rayon::join(|| conv.apply(v), || conv.apply(&sq)),
            );
            Ok((0..v.len())
                .into_par_iter()
                .map(|y| scale * (s[y] * v[y] * v[y] - 2.0 * v[y] * ku[y] + ku2[y]).max(0.0))
                .collect())
        }
        _ => {
            let table = KernelTable::new(grid, k, None);
            let idx = multi_indices(grid);
            let d = grid.dim();
            let p = k.p;
            Ok((0..v.len())
                .into_par_iter()
                .map(|y| {
                    let mut acc = 0.0;
                    for x in 0..v.len() {
                        let diff = (v[x] - v[y]).abs();
                        if x != y && diff != 0.0 {
                            acc += table.between(&idx[x][..d], &idx[y][..d]) * diff.powf(p);
                        }
                    }
                    scale * acc
                })
                .collect())
        }
    }
}

/// `D(u, A×B)` for disjoint node sets `A`, `B`.
pub fn locality_defect(
    u: &ScalarField,
    k: &FractionalKernel,
    a: &NodeMask,
    b: &NodeMask,
) -> Result<f64> {
    let shared = a.intersection(b).count();
    if shared > 0 {
        return Err(Error::OverlappingMasks(shared));
    }
    gagliardo_energy(u, k, &PairRegion::new(a.clone(), b.clone()))
}

/// Energy over all pairs of `hZ^n` for a field extended by zero outside the
/// grid box.
pub fn whole_space_energy(u: &ScalarField, k: &FractionalKernel) -> Result<f64> {
    match Method::Auto.resolve(k.p, u.grid.len())? {
        Method::Fft => Ok(QuadraticForm::whole_space(&u.grid, k)?.seminorm(&u.values)),
        _ => Ok(DirectForm::new(&u.grid, k, None, true, None)?.energy(&u.values)),
    }
}

/// Energy of `u` restricted to `A×A` for each mask; convenience for the
/// splitting identity `E(A∪B) = E(A) + E(B) + 2D(A×B)`.
pub fn split_energies(
    u: &ScalarField,
    k: &FractionalKernel,
    a: &NodeMask,
    b: &NodeMask,
) -> Result<(f64, f64, f64, f64)> {
    let ab = a.union(b);
    let parts: Vec<Result<f64>> = [
        PairRegion::square(ab),
        PairRegion::square(a.clone()),
        PairRegion::square(b.clone()),
    ]
    .into_par_iter()
    .map(|e| gagliardo_energy(u, k, &e))
    .collect();
    let d = locality_defect(u, k, a, b)?;
    let mut it = parts.into_iter();
    Ok((
        it.next().unwrap()?,
        it.next().unwrap()?,
        it.next().unwrap()?,
        d,
    ))
}

use serde::{Deserialize, Serialize};

use crate::energy::{
    column_energies, gagliardo_energy, FractionalKernel, NodeMask, PairRegion, ScalarField,
    UniformGrid,
};
use crate::error::{Error, Result};
use crate::sum::tree_sum_by;

/// Radii of the nested balls `B^{i,h}` around each centre.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShellGeometry {
    /// `m^{−3h}·r`: room for the joining annuli inside every shell.
    #[default]
    Cubed,
    /// `m^{−h}·r`: thinner shells, so that more of them fit on a grid.
    Geometric,
}

impl ShellGeometry {
    /// Radius of `B^{i,h}`.
    pub fn radius(self, r: f64, m: usize, h: usize) -> f64 {
        let e = match self {
            ShellGeometry::Cubed => 3 * h,
            ShellGeometry::Geometric => h,
        };
        r / (m as f64).powi(e as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlicingReport {
    /// Selected shell index in `1..=N`.
    pub h_selected: usize,
    /// `D(u, U×A^h)` for `h = 1..=N`.
    pub shell_energies: Vec<f64>,
    pub shell_nodes: Vec<usize>,
    /// `D(u, U×∪_h A^h)`, summed independently of the shells.
    pub total: f64,
    /// `total / N`.
    pub bound: f64,
    pub holds: bool,
}

/// Distance-based annulus masks `{ρ_in < |x − c| < ρ_out}` around each
/// centre, together with the per-centre node counts.
pub(crate) fn annulus_mask(
    grid: &UniformGrid,
    centers: &[[f64; 3]],
    r_in: f64,
    r_out: f64,
) -> (NodeMask, Vec<usize>) {
    let mut mask = NodeMask::empty(grid.len());
    let mut counts = Vec::with_capacity(centers.len());
    for c in centers {
        let nodes = nodes_within(grid, c, r_out);
        let mut cnt = 0;
        for (i, d) in nodes {
            if d > r_in && d < r_out {
                mask.set(i, true);
                cnt += 1;
            }
        }
        counts.push(cnt);
    }
    (mask, counts)
}

/// Nodes with `|x − c| ≤ r` and their distances.
pub(crate) fn nodes_within(grid: &UniformGrid, c: &[f64; 3], r: f64) -> Vec<(usize, f64)> {
    let n = grid.dim();
    let mut lo = vec![0usize; n];
    let mut ext = vec![0usize; n];
    for a in 0..n {
        let l = ((c[a] - r - grid.origin[a]) / grid.h).floor().max(0.0);
        let u = ((c[a] + r - grid.origin[a]) / grid.h)
            .ceil()
            .min((grid.dims[a] - 1) as f64);
        if u < l {
            return vec![];
        }
        lo[a] = l as usize;
        ext[a] = (u - l) as usize + 1;
    }
    let total: usize = ext.iter().product();
    let mut out = Vec::new();
    let mut k = vec![0usize; n];
    for mut t in 0..total {
        for a in (0..n).rev() {
            k[a] = lo[a] + t % ext[a];
            t /= ext[a];
        }
        let i = grid.linear_index(&k);
        let x = grid.coord(i);
        let d = (0..n).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>().sqrt();
        if d <= r {
            out.push((i, d));
        }
    }
    out
}

/// Selects among the shells `A^h = ∪_i B^{i,h} ∖ B̄^{i,h+1}`, `h = 1..=N`,
/// one carrying at most the average share of `D(u, U×∪A^h)`.
///
/// Every shell must contain a node around every centre.
pub fn slicing_select(
    u: &ScalarField,
    k: &FractionalKernel,
    centers: &[[f64; 3]],
    r: f64,
    m: usize,
    n_shells: usize,
    geometry: ShellGeometry,
) -> Result<SlicingReport> {
    let col = column_energies(u, k)?;
    slicing_from_columns(&u.grid, &col, centers, r, m, n_shells, geometry)
}

/// [`slicing_select`] on precomputed column energies
/// `c(y) = h^{2n} Σ_x K(x−y)|u(x) − u(y)|^p`.
pub fn slicing_from_columns(
    grid: &UniformGrid,
    col: &[f64],
    centers: &[[f64; 3]],
    r: f64,
    m: usize,
    n_shells: usize,
    geometry: ShellGeometry,
) -> Result<SlicingReport> {
    if m < 2 || n_shells < 1 {
        return Err(Error::InvalidParameter(
            "slicing needs m ≥ 2 and N ≥ 1".into(),
        ));
    }
    if centers.is_empty() {
        return Err(Error::InvalidParameter(
            "slicing needs at least one centre".into(),
        ));
    }
    if col.len() != grid.len() {
        return Err(Error::GridMismatch(
            "column energies do not match the grid".into(),
        ));
    }
    let mut shells = Vec::with_capacity(n_shells);
    let mut union = NodeMask::empty(grid.len());
    for h in 1..=n_shells {
        let (mask, counts) = annulus_mask(
            grid,
            centers,
            geometry.radius(r, m, h + 1),
            geometry.radius(r, m, h),
        );
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::UnderResolved(format!(
                "shell {h} (radii {:.3e}..{:.3e}) holds no grid node at h = {}",
                geometry.radius(r, m, h + 1),
                geometry.radius(r, m, h),
                grid.h
            )));
        }
        if mask.intersection(&union).any() {
            return Err(Error::InvalidParameter(
                "shells of different centres overlap".into(),
            ));
        }
        union = union.union(&mask);
        shells.push(mask);
    }
    let sum_over =
        |mask: &NodeMask| tree_sum_by(col.len(), |i| if mask.get(i) { col[i] } else { 0.0 });
    let shell_energies: Vec<f64> = shells.iter().map(sum_over).collect();
    let total = sum_over(&union);
    let (mut best, mut best_v) = (0, f64::INFINITY);
    for (i, &v) in shell_energies.iter().enumerate() {
        if v < best_v {
            best = i;
            best_v = v;
        }
    }
    let bound = total / n_shells as f64;
    Ok(SlicingReport {
        h_selected: best + 1,
        shell_nodes: shells.iter().map(NodeMask::count).collect(),
        holds: best_v <= bound + 1e-12 * total.abs(),
        shell_energies,
        total,
        bound,
    })
}

/// Piecewise-linear cutoff: `1` on `[ρ/m², ρ/m]`, `0` outside `(ρ/m³, ρ)`,
/// linear in between.
pub fn joining_cutoff(d: f64, rho: f64, m: usize) -> f64 {
    let m = m as f64;
    let (a, b, c) = (rho / (m * m * m), rho / (m * m), rho / m);
    if d <= a || d >= rho {
        0.0
    } else if d < b {
        (d - a) / (b - a)
    } else if d <= c {
        1.0
    } else {
        (rho - d) / (rho - c)
    }
}

/// Means of `u` over the annuli `ρ/m² < |x − x_i| < ρ/m`.
pub fn annulus_means(
    u: &ScalarField,
    centers: &[[f64; 3]],
    rho: f64,
    m: usize,
) -> Result<Vec<f64>> {
    let mf = m as f64;
    centers
        .iter()
        .map(|c| {
            let vals: Vec<f64> = nodes_within(&u.grid, c, rho / mf)
                .into_iter()
                .filter(|&(_, d)| d > rho / (mf * mf) && d < rho / mf)
                .map(|(i, _)| u.values[i])
                .collect();
            if vals.is_empty() {
                return Err(Error::UnderResolved(format!(
                    "joining annulus around {:?} holds no grid node",
                    &c[..u.grid.dim()]
                )));
            }
            Ok(tree_sum_by(vals.len(), |i| vals[i]) / vals.len() as f64)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JoiningReport {
    /// `w = z_i` on every inner annulus.
    pub matches_on_inner: bool,
    /// `w = u` off the outer annuli.
    pub unchanged_outside: bool,
    pub energy_u: f64,
    pub energy_w: f64,
    /// `|D(w,U×U) − D(u,U×U)|`.
    pub measured_error: f64,
    /// `D(u, U×A) + m^{2p}ρ^{−sp} Σ_i ∫_{A_i}|u − z_i|^p`.
    pub bound_shape: f64,
    /// `measured_error / bound_shape`.
    pub c_fit: f64,
    #[serde(skip)]
    pub w: Option<ScalarField>,
}

/// `w = Σ φ_i z_i + (1 − Σ φ_i) u` with the cutoffs of [`joining_cutoff`].
pub fn apply_joining(
    u: &ScalarField,
    k: &FractionalKernel,
    centers: &[[f64; 3]],
    rho: f64,
    m: usize,
    z: &[f64],
) -> Result<JoiningReport> {
    if z.len() != centers.len() {
        return Err(Error::InvalidParameter("one value z_i per centre".into()));
    }
    if m < 2 {
        return Err(Error::InvalidParameter("joining needs m ≥ 2".into()));
    }
    let grid = &u.grid;
    let mf = m as f64;
    let (inner, counts) = annulus_mask(grid, centers, rho / (mf * mf), rho / mf);
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::UnderResolved(format!(
            "joining annuli of radius {rho:.3e} hold no grid node at h = {}",
            grid.h
        )));
    }
    let mut phi_sum = vec![0.0; grid.len()];
    let mut phi_z = vec![0.0; grid.len()];
    let mut owner: Vec<Option<usize>> = vec![None; grid.len()];
    let mut outer = NodeMask::empty(grid.len());
    for (ci, c) in centers.iter().enumerate() {
        for (i, d) in nodes_within(grid, c, rho) {
            if d > rho / (mf * mf * mf) && d < rho {
                if owner[i].is_some_and(|o| o != ci) {
                    return Err(Error::InvalidParameter(
                        "joining annuli of different centres overlap".into(),
                    ));
                }
                owner[i] = Some(ci);
                outer.set(i, true);
            }
            let phi = joining_cutoff(d, rho, m);
            phi_sum[i] += phi;
            phi_z[i] += phi * z[ci];
        }
    }
    let values: Vec<f64> = (0..grid.len())
        .map(|i| phi_z[i] + (1.0 - phi_sum[i]) * u.values[i])
        .collect();
    let matches_on_inner = (0..grid.len())
        .filter(|&i| inner.get(i))
        .all(|i| values[i] == z[owner[i].unwrap()]);
    let unchanged_outside = (0..grid.len())
        .filter(|&i| !outer.get(i))
        .all(|i| values[i] == u.values[i]);
    let w = ScalarField {
        grid: grid.clone(),
        values,
        exterior_zero: u.exterior_zero,
    };
    let full = PairRegion::full(grid.len());
    let energy_u = gagliardo_energy(u, k, &full)?;
    let energy_w = gagliardo_energy(&w, k, &full)?;
    let p = k.p;
    let d_ua = gagliardo_energy(
        u,
        k,
        &PairRegion::new(NodeMask::full(grid.len()), outer.clone()),
    )?;
    let vol = grid.cell_volume();
    let osc = tree_sum_by(grid.len(), |i| match owner[i] {
        Some(ci) if outer.get(i) => (u.values[i] - z[ci]).abs().powf(p),
        _ => 0.0,
    }) * vol;
    let bound_shape = d_ua + mf.powf(2.0 * p) * rho.powf(-k.sp()) * osc;
    let measured_error = (energy_w - energy_u).abs();
    Ok(JoiningReport {
        matches_on_inner,
        unchanged_outside,
        energy_u,
        energy_w,
        measured_error,
        bound_shape,
        c_fit: if bound_shape > 0.0 {
            measured_error / bound_shape
        } else {
            0.0
        },
        w: Some(w),
    })
}

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::set::CompactSetSpec;
use super::solve::{solve_capacity, CapacityProblem, CapacityResult};
use crate::energy::{ball_mask, FractionalKernel, UniformGrid};
use crate::error::{Error, Result};
use crate::fft::Convolver;
use crate::io::{write_csv, CsvCell};
use crate::solver::CgOptions;
use crate::sum::tree_sum_by;

/// Parameters of a truncated-capacity sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub t: CompactSetSpec,
    /// Strictly increasing support radii.
    pub r_list: Vec<f64>,
    /// `R/r` for the annulus variant `cap(T, B_R; r)`.
    pub r_ratio: f64,
    /// `R/r` values for the consistency sweep at the smallest `r`.
    #[serde(default = "default_sweep")]
    pub ratio_sweep: Vec<f64>,
    pub kernel: FractionalKernel,
    pub h: f64,
    #[serde(default)]
    pub cg: CgOptions,
}

fn default_sweep() -> Vec<f64> {
    vec![2.0, 4.0, 8.0]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `C(T, B_r)`.
    Truncated,
    /// `cap(T, B_R; r)`.
    Annulus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub variant: Variant,
    pub r: f64,
    pub r_energy: f64,
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityTable {
    pub rows: Vec<CapacityRow>,
    /// `C(T, B_r)` at the largest `r`, the estimate of `cap(T)`.
    pub cap_estimate: f64,
    /// `|C(T,B_{r_k}) − C(T,B_{r_{k−1}})|` along the sweep.
    pub increments: Vec<f64>,
    /// Last increment; used as the uncertainty of `cap_estimate`.
    pub cauchy_gap: f64,
    pub monotone: bool,
    pub increments_shrink: bool,
    /// Smallest `C` with `cap(T) − cap(T,B_R;r) ≤ C·(r/(R−r))^{sp}·C(T,B_r)`
    /// over the table.
    pub c_fit: f64,
    /// `(R/r, |C(T,B_r) − cap(T,B_R;r)|)` at the smallest `r`.
    pub ratio_sweep: Vec<(f64, f64)>,
    pub sweep_shrinks: bool,
}

impl CapacityTable {
    pub fn truncated(&self) -> impl Iterator<Item = &CapacityRow> {
        self.rows.iter().filter(|r| r.variant == Variant::Truncated)
    }

    pub fn holds(&self) -> bool {
        self.monotone && self.increments_shrink && self.sweep_shrinks && self.c_fit.is_finite()
    }

    /// Columns `variant,r,R,value,residual,iterations`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<CsvCell>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    CsvCell::S(match r.variant {
                        Variant::Truncated => "truncated".into(),
                        Variant::Annulus => "annulus".into(),
                    }),
                    CsvCell::F(r.r),
                    CsvCell::F(r.r_energy),
                    CsvCell::F(r.value),
                    CsvCell::F(r.residual),
                    CsvCell::U(r.iterations as u64),
                ]
            })
            .collect();
        write_csv(
            path,
            &["variant", "r", "R", "value", "residual", "iterations"],
            &rows,
        )
    }
}

/// Sweeps `C(T, B_r)` and `cap(T, B_{R_ratio·r}; r)` over `r_list` at a
/// fixed grid spacing, plus the `R/r` consistency sweep at the smallest
/// radius. Solves run in parallel.
pub fn capacity_limit_table(spec: &TableSpec) -> Result<CapacityTable> {
    let rl = &spec.r_list;
    if rl.is_empty() || rl.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(
            "r_list must be non-empty and strictly increasing".into(),
        ));
    }
    if spec.t.extent(spec.h) > rl[0] / 2.0 {
        return Err(Error::InvalidParameter(
            "T must lie in half the smallest support ball".into(),
        ));
    }
    if !(spec.r_ratio >= 1.0) || spec.ratio_sweep.iter().any(|q| !(*q >= 1.0)) {
        return Err(Error::InvalidParameter(
            "R/r ratios must be at least 1".into(),
        ));
    }
    let mut jobs: Vec<(Variant, f64, Option<f64>)> = Vec::new();
    for &r in rl {
        jobs.push((Variant::Truncated, r, None));
        jobs.push((Variant::Annulus, r, Some(spec.r_ratio * r)));
    }
    for &q in &spec.ratio_sweep {
        jobs.push((Variant::Annulus, rl[0], Some(q * rl[0])));
    }
    let results: Vec<Result<CapacityRow>> = jobs
        .par_iter()
        .map(|&(variant, r, r_e)| {
            let mut prob = CapacityProblem::new(spec.t.clone(), r, spec.kernel.clone(), spec.h);
            prob.r_energy = r_e;
            prob.cg = spec.cg;
            let res = solve_capacity(&prob)?;
            Ok(CapacityRow {
                variant,
                r,
                r_energy: r_e.unwrap_or(r),
                value: res.value,
                residual: res.residual,
                iterations: res.iterations,
            })
        })
        .collect();
    let rows: Vec<CapacityRow> = results.into_iter().collect::<Result<_>>()?;
    let m = rl.len();
    let main: Vec<CapacityRow> = rows[..2 * m].to_vec();
    let sweep_rows = &rows[2 * m..];
    let c: Vec<f64> = main.iter().step_by(2).map(|r| r.value).collect();
    let ann: Vec<f64> = main.iter().skip(1).step_by(2).map(|r| r.value).collect();

    let cap_estimate = *c.last().unwrap();
    let increments: Vec<f64> = c.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let monotone = c
        .windows(2)
        .all(|w| w[1] <= w[0] + 1e-7 * w[0].abs().max(1e-300));
    let increments_shrink = increments.windows(2).all(|w| w[1] <= w[0]);
    let sp = spec.kernel.sp();
    let mut c_fit: f64 = 0.0;
    for k in 0..m {
        let big_r = spec.r_ratio * rl[k];
        let gap = cap_estimate - ann[k];
        if gap > 0.0 {
            let denom = if big_r > rl[k] {
                (rl[k] / (big_r - rl[k])).powf(sp) * c[k]
            } else {
                f64::INFINITY
            };
            c_fit = c_fit.max(if denom > 0.0 {
                gap / denom
            } else {
                f64::INFINITY
            });
        }
    }
    let ratio_sweep: Vec<(f64, f64)> = spec
        .ratio_sweep
        .iter()
        .zip(sweep_rows)
        .map(|(&q, row)| (q, (c[0] - row.value).abs()))
        .collect();
    let sweep_shrinks = ratio_sweep.windows(2).all(|w| w[1].1 <= w[0].1);
    Ok(CapacityTable {
        rows,
        cap_estimate,
        cauchy_gap: increments.last().copied().unwrap_or(0.0),
        increments,
        monotone,
        increments_shrink,
        c_fit,
        ratio_sweep,
        sweep_shrinks,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectDecayReport {
    pub r_list: Vec<f64>,
    pub defects: Vec<f64>,
    pub capacity: f64,
    pub decreasing: bool,
    /// Final defect relative to the capacity value.
    pub final_ratio: f64,
    pub below_five_percent: bool,
}

/// `D(ξ, B_R × B_R^c)` for a whole-space potential `ξ` vanishing outside
/// `B̄_r`, for every `R ≥ r` in `r_list`.
///
/// Since `ξ = 0` off `B_R`, the defect is `h^{2n} Σ_{x∈B_R} |ξ(x)|^p·S_R(x)`
/// with `S_R(x) = Σ_{y ∉ B_R} K(x−y)` over the whole lattice.
pub fn locality_defect_decay_check(
    res: &CapacityResult,
    center: &[f64],
    r_support: f64,
    k: &FractionalKernel,
    r_list: &[f64],
) -> Result<DefectDecayReport> {
    if r_list.iter().any(|&r| r < r_support) {
        return Err(Error::InvalidParameter(
            "defect radii must be at least the support radius".into(),
        ));
    }
    let g = &res.potential.grid;
    let h = g.h;
    let n = g.dim();
    let r_max = r_list.iter().copied().fold(r_support, f64::max);
    let half = (r_max / h).ceil() as usize + 1;
    let big = UniformGrid::centered(n, half, h, center)?;
    // Embed ξ by matching node coordinates.
    let shift: Vec<i64> = (0..n)
        .map(|a| ((g.origin[a] - big.origin[a]) / h).round() as i64)
        .collect();
    let mut w = vec![0.0; big.len()];
    for i in 0..g.len() {
        let v = res.potential.values[i];
        if v == 0.0 {
            continue;
        }
        let kk = g.multi_index(i);
        let t: Option<Vec<usize>> = (0..n)
            .map(|a| {
                let c = kk[a] as i64 + shift[a];
                (c >= 0 && c < big.dims[a] as i64).then_some(c as usize)
            })
            .collect();
        let t = t.ok_or_else(|| {
            Error::GridMismatch("potential support exceeds the defect grid".into())
        })?;
        w[big.linear_index(&t)] = v.abs().powf(k.p);
    }
    let conv = Convolver::new(&big.dims, |o: &[i64]| k.eval_offset(o, h));
    let total = k.lattice_sum(h);
    let scale = h.powi(2 * n as i32);
    let defects: Vec<f64> = r_list
        .iter()
        .map(|&r| {
            let inside = ball_mask(&big, center, r);
            let s_in = conv.apply(&inside.to_f64());
            scale
                * tree_sum_by(big.len(), |x| {
                    if inside.get(x) {
                        w[x] * (total - s_in[x])
                    } else {
                        0.0
                    }
                })
        })
        .collect();
    let decreasing = defects.windows(2).all(|d| d[1] <= d[0]);
    let final_ratio = if res.value > 0.0 {
        defects.last().copied().unwrap_or(0.0) / res.value
    } else {
        0.0
    };
    Ok(DefectDecayReport {
        r_list: r_list.to_vec(),
        defects,
        capacity: res.value,
        decreasing,
        final_ratio,
        below_five_percent: final_ratio <= 0.05,
    })
}

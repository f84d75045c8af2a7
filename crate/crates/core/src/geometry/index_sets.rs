use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::domain::Domain;
use super::points::{DeloneCertificate, NearestIndex, PointSet};
use crate::energy::unit_ball_volume;
use crate::error::{Error, Result};

/// Labels of the Voronoi cells inside `A` and of those meeting `∂A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexSets {
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
    pub cell_sample_resolution: f64,
    /// Sampled measure of `A` not covered by interior cells.
    pub uncovered_measure: f64,
}

const INSIDE: u8 = 1;
const OUTSIDE: u8 = 2;
const NEAR: u8 = 4;

/// Classifies Voronoi cells against `A` by sampling space at cell centres
/// `lo + (k + ½)·res` and assigning each sample to its nearest point.
///
/// A cell is interior when all of its samples lie in `A` at distance at
/// least `res` from `∂A`; it is a boundary cell when its samples fall on
/// both sides of `∂A` or within `res` of it.
pub fn index_sets(
    ps: &PointSet,
    a: &Domain,
    cert: &DeloneCertificate,
    sample_res: f64,
) -> Result<IndexSets> {
    if !(sample_res > 0.0) || sample_res > cert.r_packing / 4.0 * (1.0 + 1e-12) {
        return Err(Error::UnderResolved(format!(
            "cell sample resolution {sample_res} exceeds r_packing/4 = {}",
            cert.r_packing / 4.0
        )));
    }
    if a.dim() != ps.n {
        return Err(Error::GridMismatch(
            "domain and point set dimensions differ".into(),
        ));
    }
    let idx = NearestIndex::new(ps)?;
    let n = ps.n;
    let (lo, hi) = a.bbox();
    let pad = 2.0 * cert.r_covering + sample_res;
    let origin: Vec<f64> = lo.iter().map(|v| v - pad).collect();
    let counts: Vec<usize> = (0..n)
        .map(|k| ((hi[k] - lo[k] + 2.0 * pad) / sample_res).ceil() as usize)
        .collect();
    let rows = counts[0];
    let per_row: usize = counts[1..].iter().product();
    let m = ps.len();

    let (flags, inside) = (0..rows)
        .into_par_iter()
        .fold(
            || (vec![0u8; m], vec![0u64; m]),
            |(mut flags, mut inside), r| {
                let mut x = [0.0; 3];
                x[0] = origin[0] + (r as f64 + 0.5) * sample_res;
                for mut j in 0..per_row {
                    for k in (1..n).rev() {
                        x[k] = origin[k] + ((j % counts[k]) as f64 + 0.5) * sample_res;
                        j /= counts[k];
                    }
                    let d = a.signed_distance(&x[..n]);
                    let (pos, _) = idx.nearest(&x[..n]);
                    let mut f = if d < 0.0 { INSIDE } else { OUTSIDE };
                    if d.abs() < sample_res {
                        f |= NEAR;
                    }
                    flags[pos] |= f;
                    if d < 0.0 {
                        inside[pos] += 1;
                    }
                }
                (flags, inside)
            },
        )
        .reduce(
            || (vec![0u8; m], vec![0u64; m]),
            |(mut fa, mut ia), (fb, ib)| {
                for i in 0..m {
                    fa[i] |= fb[i];
                    ia[i] += ib[i];
                }
                (fa, ia)
            },
        );

    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    let mut uncovered = 0u64;
    for pos in 0..m {
        let f = flags[pos];
        if f == INSIDE {
            interior.push(ps.labels[pos]);
        } else {
            uncovered += inside[pos];
            if f & NEAR != 0 || f & (INSIDE | OUTSIDE) == INSIDE | OUTSIDE {
                boundary.push(ps.labels[pos]);
            }
        }
    }
    interior.sort_unstable();
    boundary.sort_unstable();
    Ok(IndexSets {
        interior,
        boundary,
        cell_sample_resolution: sample_res,
        uncovered_measure: uncovered as f64 * sample_res.powi(n as i32),
    })
}

/// Universal constant in the shell bound
/// `#{k : m r < |x^i − x^k|_∞ ≤ (m+1) r} ≤ c·m^{n−1}`.
///
/// The balls `B_r(x^k)` are disjoint and lie in the `ℓ^∞` annulus between
/// radii `(m−1)r` and `(m+2)r`, so the count is at most
/// `2^n((m+2)^n − (m−1)^n)/ω_n`; the maximum over `m ≥ 1` of that divided
/// by `m^{n−1}` is attained at `m = 1`.
pub fn shell_constant(n: usize) -> f64 {
    let w = unit_ball_volume(n);
    (1..=64)
        .map(|m| {
            let m = m as f64;
            2f64.powi(n as i32) * ((m + 2.0).powi(n as i32) - (m - 1.0).powi(n as i32))
                / (w * m.powi(n as i32 - 1))
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Inequality {
    fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        Inequality {
            name: name.into(),
            lhs,
            rhs,
            holds: lhs <= rhs * (1.0 + 1e-12),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingReport {
    pub inequalities: Vec<Inequality>,
    /// `max_i #shell_m(i)` for `m = 1..=m_max`.
    pub shell_counts: Vec<usize>,
    /// Smallest `c` with `#shell_m ≤ c·m^{n−1}` over the tested shells.
    pub shell_fitted_c: f64,
    pub shell_bound_c: f64,
}

impl CountingReport {
    pub fn holds(&self) -> bool {
        self.inequalities.iter().all(|q| q.holds)
    }

    pub fn violations(&self) -> Vec<&str> {
        self.inequalities
            .iter()
            .filter(|q| !q.holds)
            .map(|q| q.name.as_str())
            .collect()
    }
}

/// Evaluates the counting inequalities for the index sets of `A`, and the
/// shell bound for `m = 1..=m_max` around every interior point.
pub fn counting_check(
    ps: &PointSet,
    a: &Domain,
    idx: &IndexSets,
    cert: &DeloneCertificate,
    m_max: usize,
) -> Result<CountingReport> {
    let n = ps.n;
    let r = cert.r_packing;
    let ball = unit_ball_volume(n) * r.powi(n as i32);
    let collar = a.boundary_neighborhood_measure(cert.r_covering);
    let mut inequalities = vec![
        Inequality::new(
            "interior_volume",
            ball * idx.interior.len() as f64,
            a.measure(),
        ),
        Inequality::new("boundary_volume", ball * idx.boundary.len() as f64, collar),
        Inequality::new("uncovered_volume", idx.uncovered_measure, collar),
    ];

    let near = NearestIndex::new(ps)?;
    let by_label: std::collections::HashMap<usize, usize> = ps
        .labels
        .iter()
        .enumerate()
        .map(|(pos, &l)| (l, pos))
        .collect();
    let reach = (m_max as f64 + 1.0) * r * (n as f64).sqrt();
    let shell_counts = idx
        .interior
        .par_iter()
        .map(|l| {
            let pos = by_label[l];
            let x = ps.points[pos];
            let mut c = vec![0usize; m_max + 1];
            for (q, _) in near.within(&x[..n], reach) {
                if q == pos {
                    continue;
                }
                let d = (0..n)
                    .map(|k| (ps.points[q][k] - x[k]).abs())
                    .fold(0.0, f64::max);
                // Shell m is (m r, (m+1) r].
                let m = ((d / r).ceil() as usize).saturating_sub(1);
                if (1..=m_max).contains(&m) {
                    c[m] += 1;
                }
            }
            c
        })
        .reduce(
            || vec![0usize; m_max + 1],
            |a, b| a.iter().zip(&b).map(|(x, y)| *x.max(y)).collect(),
        );
    let shell_counts = shell_counts[1..].to_vec();
    let fitted = shell_counts
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 / ((i + 1) as f64).powi(n as i32 - 1))
        .fold(0.0, f64::max);
    let bound = shell_constant(n);
    inequalities.push(Inequality::new("shell_count", fitted, bound));
    Ok(CountingReport {
        inequalities,
        shell_counts,
        shell_fitted_c: fitted,
        shell_bound_c: bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(eps: f64, lo: i64, hi: i64) -> PointSet {
        let mut pts = Vec::new();
        for i in lo..=hi {
            for j in lo..=hi {
                pts.push([i as f64 * eps, j as f64 * eps, 0.0]);
            }
        }
        PointSet::new(2, pts)
    }

    fn cert(eps: f64) -> DeloneCertificate {
        DeloneCertificate {
            r_packing: eps / 2.0,
            r_covering: eps * 2f64.sqrt() / 2.0,
            probe_spacing: eps / 16.0,
        }
    }

    #[test]
    fn cubic_interior_count() {
        let eps = 0.125;
        let ps = lattice(eps, -4, 12);
        let sets = index_sets(&ps, &Domain::unit_cube(2), &cert(eps), eps / 8.0).unwrap();
        assert_eq!(sets.interior.len(), 49);
        // Points on ∂U: the 9×9 square minus its 7×7 interior.
        assert_eq!(sets.boundary.len(), 32);
        assert!(sets.interior.iter().all(|l| !sets.boundary.contains(l)));
        let report = counting_check(&ps, &Domain::unit_cube(2), &sets, &cert(eps), 20).unwrap();
        assert!(report.holds(), "{:?}", report.violations());
    }

    #[test]
    fn shell_constant_values() {
        assert!((shell_constant(2) - 36.0 / std::f64::consts::PI).abs() < 1e-12);
        assert!(shell_constant(3) > 51.0 && shell_constant(3) < 52.0);
    }

    #[test]
    fn shell_counts_on_integer_lattice() {
        let ps = lattice(1.0, -30, 30);
        let c = cert(1.0);
        let a = Domain::rect(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let sets = index_sets(&ps, &a, &c, 0.125).unwrap();
        assert_eq!(sets.interior, vec![ps.labels[30 * 61 + 30]]);
        let report = counting_check(&ps, &a, &sets, &c, 20).unwrap();
        // r = 1/2: shell m holds the ℓ^∞ sphere of radius (m+1)/2 when m is odd.
        assert_eq!(report.shell_counts[0], 8);
        assert_eq!(report.shell_counts[1], 0);
        assert_eq!(report.shell_counts[2], 16);
        assert!(report.holds());
    }

    #[test]
    fn single_point_large_square() {
        let ps = PointSet::new(2, vec![[0.0; 3]]);
        let a = Domain::rect(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let c = DeloneCertificate {
            r_packing: 0.5,
            r_covering: 4.0,
            probe_spacing: 0.1,
        };
        let sets = index_sets(&ps, &a, &c, 0.1).unwrap();
        // The single Voronoi cell is all of space.
        assert!(sets.interior.is_empty());
        assert_eq!(sets.boundary, vec![0]);
    }

    #[test]
    fn margin_and_shrink() {
        let eps = 0.25;
        let ps = lattice(eps, -10, 10);
        let big = Domain::rect(vec![-1.1, -1.1], vec![1.1, 1.1]).unwrap();
        let sets = index_sets(&ps, &big, &cert(eps), eps / 8.0).unwrap();
        assert_eq!(sets.interior.len(), 49);
        let tiny = Domain::rect(vec![0.01, 0.01], vec![0.1, 0.1]).unwrap();
        let sets = index_sets(&ps, &tiny, &cert(eps), eps / 8.0).unwrap();
        assert!(sets.interior.is_empty());
        assert!(index_sets(&ps, &tiny, &cert(eps), eps).is_err());
    }
}

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::domain::Domain;
use crate::error::{Error, Result};

/// A finite family of distinct points in `R^n`, `n ∈ {2, 3}`.
///
/// Coordinates are stored in three slots; unused slots are zero. `sites`
/// records the lattice index a point was generated from, when there is one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub n: usize,
    pub points: Vec<[f64; 3]>,
    pub labels: Vec<usize>,
    #[serde(default)]
    pub sites: Option<Vec<[i64; 3]>>,
}

impl PointSet {
    /// Points labelled `0..len` in the given order.
    pub fn new(n: usize, points: Vec<[f64; 3]>) -> Self {
        let labels = (0..points.len()).collect();
        PointSet {
            n,
            points,
            labels,
            sites: None,
        }
    }

    pub fn with_sites(mut self, sites: Vec<[i64; 3]>) -> Self {
        assert_eq!(sites.len(), self.points.len());
        self.sites = Some(sites);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub(crate) fn dist2(&self, a: &[f64; 3], b: &[f64]) -> f64 {
        (0..self.n).map(|k| (a[k] - b[k]).powi(2)).sum()
    }

    /// Keeps the points satisfying `keep`, preserving labels and sites.
    pub fn filter<F: Fn(&[f64; 3]) -> bool>(&self, keep: F) -> PointSet {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.points[i])).collect();
        PointSet {
            n: self.n,
            points: idx.iter().map(|&i| self.points[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            sites: self
                .sites
                .as_ref()
                .map(|s| idx.iter().map(|&i| s[i]).collect()),
        }
    }

    /// CSV with columns `label,x,y[,z]`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wr = csv::Writer::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
        let mut header = vec!["label", "x", "y"];
        if self.n == 3 {
            header.push("z");
        }
        wr.write_record(&header)
            .map_err(|e| Error::Format(e.to_string()))?;
        for (p, l) in self.points.iter().zip(&self.labels) {
            let mut rec = vec![l.to_string()];
            rec.extend(p[..self.n].iter().map(|c| crate::io::fmt_f64(*c)));
            wr.write_record(&rec)
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        wr.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<PointSet> {
        let mut rd = csv::Reader::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
        let n = rd
            .headers()
            .map_err(|e| Error::Format(e.to_string()))?
            .len()
            .checked_sub(1)
            .filter(|n| (2..=3).contains(n))
            .ok_or_else(|| Error::Format("expected columns label,x,y[,z]".into()))?;
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
            let parse = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad number {:?}", &rec[i])))
            };
            labels.push(
                rec[0]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("bad label {:?}", &rec[0])))?,
            );
            let mut p = [0.0; 3];
            for a in 0..n {
                p[a] = parse(a + 1)?;
            }
            points.push(p);
        }
        Ok(PointSet {
            n,
            points,
            labels,
            sites: None,
        })
    }
}

/// Packing and covering radii of a point set over a region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeloneCertificate {
    pub r_packing: f64,
    pub r_covering: f64,
    pub probe_spacing: f64,
}

impl DeloneCertificate {
    /// Computes both radii; the probe spacing defaults to `r_packing / 8`.
    pub fn compute(ps: &PointSet, region: &Domain, probe_spacing: Option<f64>) -> Result<Self> {
        let r = packing_radius(ps)?;
        let probe = probe_spacing.unwrap_or(r / 8.0);
        let big_r = covering_radius(ps, region, probe)?;
        if !(r > 0.0 && r <= big_r + probe * (ps.n as f64).sqrt()) {
            return Err(Error::DegenerateSet(format!(
                "packing radius {r} exceeds covering radius {big_r}"
            )));
        }
        Ok(DeloneCertificate {
            r_packing: r,
            r_covering: big_r.max(r),
            probe_spacing: probe,
        })
    }
}

/// Half the minimal pairwise distance, computed exactly by a sorted sweep.
pub fn packing_radius(ps: &PointSet) -> Result<f64> {
    Ok(closest_pair(ps)?.0.sqrt() / 2.0)
}

/// Squared minimal distance and the pair of positions realizing it.
pub fn closest_pair(ps: &PointSet) -> Result<(f64, usize, usize)> {
    if ps.len() < 2 {
        return Err(Error::DegenerateSet(format!(
            "{} point(s); a packing radius needs two",
            ps.len()
        )));
    }
    let mut order: Vec<usize> = (0..ps.len()).collect();
    order.sort_by(|&a, &b| ps.points[a][0].total_cmp(&ps.points[b][0]).then(a.cmp(&b)));
    let mut best = (f64::INFINITY, 0, 0);
    for (oi, &i) in order.iter().enumerate() {
        let xi = &ps.points[i];
        for &j in &order[oi + 1..] {
            let dx = ps.points[j][0] - xi[0];
            if dx * dx >= best.0 {
                break;
            }
            let d2 = ps.dist2(xi, &ps.points[j]);
            if d2 < best.0 {
                best = (d2, i.min(j), i.max(j));
            }
        }
    }
    if best.0 == 0.0 {
        return Err(Error::DegenerateSet(format!(
            "points {} and {} coincide",
            ps.labels[best.1], ps.labels[best.2]
        )));
    }
    Ok(best)
}

/// Bucket grid for nearest-point queries with smallest-label tie-breaking.
#[derive(Clone, Debug)]
pub struct NearestIndex<'a> {
    ps: &'a PointSet,
    lo: [f64; 3],
    cell: f64,
    shape: [usize; 3],
    start: Vec<usize>,
    items: Vec<usize>,
}

impl<'a> NearestIndex<'a> {
    pub fn new(ps: &'a PointSet) -> Result<Self> {
        if ps.is_empty() {
            return Err(Error::EmptySet);
        }
        let n = ps.n;
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for a in 0..n {
            lo[a] = ps.points.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
            hi[a] = ps
                .points
                .iter()
                .map(|p| p[a])
                .fold(f64::NEG_INFINITY, f64::max);
        }
        let vol: f64 = (0..n).map(|a| (hi[a] - lo[a]).max(1e-300)).product();
        let mut cell = (2.0 * vol / ps.len() as f64).powf(1.0 / n as f64);
        let extent = (0..n).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        if !(cell > 0.0) || !cell.is_finite() {
            cell = extent.max(1.0);
        }
        // Degenerate extents (collinear sets) would give huge grids.
        cell = cell.max(extent / 512.0);
        let mut shape = [1usize; 3];
        for a in 0..n {
            shape[a] = (((hi[a] - lo[a]) / cell).floor() as usize + 1).max(1);
        }
        let nb: usize = shape.iter().product();
        let bucket_of = |p: &[f64; 3]| -> usize {
            let mut b = 0;
            for a in 0..3 {
                let k = if a < n {
                    (((p[a] - lo[a]) / cell).floor() as usize).min(shape[a] - 1)
                } else {
                    0
                };
                b = b * shape[a] + k;
            }
            b
        };
        let mut counts = vec![0usize; nb + 1];
        for p in &ps.points {
            counts[bucket_of(p) + 1] += 1;
        }
        for i in 0..nb {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0; ps.len()];
        for (i, p) in ps.points.iter().enumerate() {
            let b = bucket_of(p);
            items[fill[b]] = i;
            fill[b] += 1;
        }
        Ok(NearestIndex {
            ps,
            lo,
            cell,
            shape,
            start: counts,
            items,
        })
    }

    /// Position (not label) of a nearest point and the squared distance.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        let n = self.ps.n;
        let mut home = [0i64; 3];
        for a in 0..n {
            let k = ((x[a] - self.lo[a]) / self.cell).floor();
            home[a] = (k.max(0.0) as i64).min(self.shape[a] as i64 - 1);
        }
        let max_ring = self.shape.iter().map(|&s| s as i64).max().unwrap();
        let mut best = (usize::MAX, f64::INFINITY);
        let better = |i: usize, d2: f64, best: &(usize, f64)| {
            d2 < best.1 || (d2 == best.1 && self.ps.labels[i] < self.ps.labels[best.0])
        };
        for ring in 0..=max_ring {
            // Buckets in this ring are at least (ring − 1)·cell away.
            if best.0 != usize::MAX {
                let reach = (ring - 1).max(0) as f64 * self.cell;
                if reach * reach > best.1 {
                    break;
                }
            }
            let r = ring;
            let (r1, r2) = if n >= 2 { (-r, r) } else { (0, 0) };
            let (s1, s2) = if n >= 3 { (-r, r) } else { (0, 0) };
            for di in -r..=r {
                for dj in r1..=r2 {
                    for dk in s1..=s2 {
                        if di.abs().max(dj.abs()).max(dk.abs()) != r {
                            continue;
                        }
                        let k = [home[0] + di, home[1] + dj, home[2] + dk];
                        if (0..3).any(|a| k[a] < 0 || k[a] >= self.shape[a] as i64) {
                            continue;
                        }
                        let b = ((k[0] as usize) * self.shape[1] + k[1] as usize) * self.shape[2]
                            + k[2] as usize;
                        for &i in &self.items[self.start[b]..self.start[b + 1]] {
                            let d2 = self.ps.dist2(&self.ps.points[i], x);
                            if better(i, d2, &best) {
                                best = (i, d2);
                            }
                        }
                    }
                }
            }
        }
        best
    }

    /// Every point position within distance `r` of `x` (squared distance
    /// returned too).
    pub fn within(&self, x: &[f64], r: f64) -> Vec<(usize, f64)> {
        let n = self.ps.n;
        let mut lo_k = [0i64; 3];
        let mut hi_k = [0i64; 3];
        for a in 0..n {
            lo_k[a] = (((x[a] - r - self.lo[a]) / self.cell).floor() as i64).max(0);
            hi_k[a] = (((x[a] + r - self.lo[a]) / self.cell).floor() as i64)
                .min(self.shape[a] as i64 - 1);
            if lo_k[a] > hi_k[a] {
                return Vec::new();
            }
        }
        let mut out = Vec::new();
        for i in lo_k[0]..=hi_k[0] {
            for j in lo_k[1]..=hi_k[1] {
                for k in lo_k[2]..=hi_k[2] {
                    let b =
                        ((i as usize) * self.shape[1] + j as usize) * self.shape[2] + k as usize;
                    for &p in &self.items[self.start[b]..self.start[b + 1]] {
                        let d2 = self.ps.dist2(&self.ps.points[p], x);
                        if d2 <= r * r {
                            out.push((p, d2));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Label of a nearest point to `x`; ties go to the smallest label.
pub fn voronoi_index(ps: &PointSet, x: &[f64]) -> Result<usize> {
    let idx = NearestIndex::new(ps)?;
    Ok(ps.labels[idx.nearest(x).0])
}

/// Largest distance from a probe point in `region` to the set, with probes
/// on a grid of the given spacing. Under-estimates the covering radius over
/// the region by at most `probe_spacing·√n/2`.
pub fn covering_radius(ps: &PointSet, region: &Domain, probe_spacing: f64) -> Result<f64> {
    if !(probe_spacing > 0.0) {
        return Err(Error::InvalidParameter(
            "probe spacing must be positive".into(),
        ));
    }
    let idx = NearestIndex::new(ps)?;
    let probes = probe_grid(region, probe_spacing);
    let worst = probes
        .par_iter()
        .map(|x| idx.nearest(x).1)
        .reduce(|| 0.0, f64::max);
    Ok(worst.sqrt())
}

/// Probe points `lo + k·spacing` (up to and including `hi`) inside the
/// closure of the region.
pub(crate) fn probe_grid(region: &Domain, spacing: f64) -> Vec<[f64; 3]> {
    let (lo, hi) = region.bbox();
    let n = lo.len();
    let counts: Vec<usize> = (0..n)
        .map(|a| ((hi[a] - lo[a]) / spacing).floor() as usize + 1)
        .collect();
    let total: usize = counts.iter().product();
    (0..total)
        .filter_map(|mut i| {
            let mut x = [0.0; 3];
            for a in (0..n).rev() {
                x[a] = lo[a] + (i % counts[a]) as f64 * spacing;
                i /= counts[a];
            }
            (region.signed_distance(&x[..n]) <= 0.0).then_some(x)
        })
        .collect()
}

use serde::{Deserialize, Serialize};

use super::domain::Domain;
use super::index_sets::index_sets;
use super::points::{DeloneCertificate, PointSet};
use crate::error::{Error, Result};

/// Empirical density `θ̂` and histogram estimate `β̂` of the limit
/// distribution of the interior points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalLimitData {
    pub theta_hat: f64,
    /// `#{i : x^i ∈ U}·r^n`, the variant counting every point in `U`.
    pub theta_hat_all: f64,
    pub discrepancy: f64,
    pub interior_count: usize,
    pub in_domain_count: usize,
    pub r_user: f64,
    pub histogram_cell: Vec<f64>,
    pub histogram_lo: Vec<f64>,
    pub histogram_dims: Vec<usize>,
    /// Row-major (last axis fastest) cell values.
    pub beta_hat: Vec<f64>,
    /// `L^n(Q ∩ U)` per cell.
    pub cell_measure: Vec<f64>,
    pub warnings: Vec<String>,
}

impl EmpiricalLimitData {
    fn cell_box(&self, c: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.histogram_dims.len();
        let mut k = vec![0; n];
        let mut t = c;
        for a in (0..n).rev() {
            k[a] = t % self.histogram_dims[a];
            t /= self.histogram_dims[a];
        }
        let lo: Vec<f64> = (0..n)
            .map(|a| self.histogram_lo[a] + k[a] as f64 * self.histogram_cell[a])
            .collect();
        let hi = (0..n).map(|a| lo[a] + self.histogram_cell[a]).collect();
        (lo, hi)
    }

    /// `∫_U β̂ dx`.
    pub fn beta_integral(&self) -> f64 {
        self.beta_hat
            .iter()
            .zip(&self.cell_measure)
            .map(|(b, m)| b * m)
            .sum()
    }

    /// `‖β̂ − ρ/∫_U ρ‖_{L¹(U)}` with midpoint quadrature on `q^n` sub-cells
    /// of every histogram cell.
    pub fn l1_error<F: Fn(&[f64]) -> f64>(&self, u: &Domain, density: F, q: usize) -> f64 {
        let n = self.histogram_dims.len();
        let samples: Vec<Vec<(Vec<f64>, f64)>> = (0..self.beta_hat.len())
            .map(|c| {
                let (lo, hi) = self.cell_box(c);
                let w: f64 = (0..n).map(|a| (hi[a] - lo[a]) / q as f64).product();
                (0..q.pow(n as u32))
                    .filter_map(|mut t| {
                        let x: Vec<f64> = (0..n)
                            .rev()
                            .map(|a| {
                                let k = t % q;
                                t /= q;
                                lo[a] + (k as f64 + 0.5) * (hi[a] - lo[a]) / q as f64
                            })
                            .collect::<Vec<_>>()
                            .into_iter()
                            .rev()
                            .collect();
                        u.contains(&x).then(|| {
                            let d = density(&x);
                            (x, d * w)
                        })
                    })
                    .collect()
            })
            .collect();
        let z: f64 = samples.iter().flatten().map(|(_, m)| m).sum();
        samples
            .iter()
            .zip(&self.beta_hat)
            .map(|(cell, b)| {
                cell.iter()
                    .map(|(x, m)| {
                        let w = m / density(x);
                        (b - density(x) / z).abs() * w
                    })
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Estimates `θ̂ = #I(U)·r^n` and `β̂(Q) = μ(Q)/L^n(Q ∩ U)` with `μ` the
/// normalized counting measure of the interior points.
pub fn estimate_limit_data(
    ps: &PointSet,
    u: &Domain,
    r_user: f64,
    hist_cell: f64,
) -> Result<EmpiricalLimitData> {
    let r_pack = super::packing_radius(ps)?;
    if !(r_user > 0.0 && r_user <= r_pack * (1.0 + 1e-12)) {
        return Err(Error::InvalidParameter(format!(
            "r_user {r_user} must lie in (0, r_packing = {r_pack}]"
        )));
    }
    if !(hist_cell > 0.0) {
        return Err(Error::InvalidParameter(
            "histogram cell must be positive".into(),
        ));
    }
    let n = ps.n;
    let cert = DeloneCertificate::compute(ps, u, None)?;
    let sets = index_sets(ps, u, &cert, cert.r_packing / 4.0)?;
    let mut warnings = Vec::new();
    if hist_cell < 2.0 * cert.r_covering {
        warnings.push("histogram under-resolved relative to point spacing".to_string());
    }

    let (lo, hi) = u.bbox();
    let dims: Vec<usize> = (0..n)
        .map(|a| (((hi[a] - lo[a]) / hist_cell).round() as usize).max(1))
        .collect();
    let cell: Vec<f64> = (0..n).map(|a| (hi[a] - lo[a]) / dims[a] as f64).collect();
    let total: usize = dims.iter().product();
    let bin = |x: &[f64]| -> usize {
        (0..n).fold(0, |acc, a| {
            let k = (((x[a] - lo[a]) / cell[a]).floor().max(0.0) as usize).min(dims[a] - 1);
            acc * dims[a] + k
        })
    };

    let mut counts = vec![0usize; total];
    let interior: std::collections::HashSet<usize> = sets.interior.iter().copied().collect();
    for (p, l) in ps.points.iter().zip(&ps.labels) {
        if interior.contains(l) {
            counts[bin(&p[..n])] += 1;
        }
    }
    let in_domain = ps.points.iter().filter(|p| u.contains(&p[..n])).count();

    let mut data = EmpiricalLimitData {
        theta_hat: sets.interior.len() as f64 * r_user.powi(n as i32),
        theta_hat_all: in_domain as f64 * r_user.powi(n as i32),
        discrepancy: 0.0,
        interior_count: sets.interior.len(),
        in_domain_count: in_domain,
        r_user,
        histogram_cell: cell,
        histogram_lo: lo.clone(),
        histogram_dims: dims,
        beta_hat: vec![0.0; total],
        cell_measure: vec![0.0; total],
        warnings,
    };
    data.discrepancy = data.theta_hat_all - data.theta_hat;
    for c in 0..total {
        data.cell_measure[c] = match u {
            Domain::Rect { .. } => data.histogram_cell.iter().product(),
            Domain::Polygon { .. } => cell_fraction(&data, u, c),
        };
    }
    let norm = sets.interior.len().max(1) as f64;
    for c in 0..total {
        if data.cell_measure[c] > 0.0 {
            data.beta_hat[c] = counts[c] as f64 / norm / data.cell_measure[c];
        }
    }
    Ok(data)
}

fn cell_fraction(data: &EmpiricalLimitData, u: &Domain, c: usize) -> f64 {
    let (lo, hi) = data.cell_box(c);
    let q = 64;
    let inside = (0..q * q)
        .filter(|t| {
            let x = [
                lo[0] + ((t / q) as f64 + 0.5) * (hi[0] - lo[0]) / q as f64,
                lo[1] + ((t % q) as f64 + 0.5) * (hi[1] - lo[1]) / q as f64,
            ];
            u.contains(&x)
        })
        .count();
    inside as f64 / (q * q) as f64 * (hi[0] - lo[0]) * (hi[1] - lo[1])
}

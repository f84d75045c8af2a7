use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    closest_pair, estimate_limit_data, site_rng, DeloneCertificate, Domain, PointSet,
};

/// Random Delone sets whose randomness is indexed by lattice sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RandomDeloneKind {
    /// `x^i = ε(i + X_i)` with `X_i` uniform on `[−M/2, M/2]^n`, `M < 1`.
    PerturbedLattice { m: f64 },
    /// `x^i = Φ(ε i, ω)` for a random field `Φ` on the macroscopic scale.
    StochasticDiffeoOutside { field: RandomField },
    /// `x^i = ε Φ(i, ω)`.
    StochasticDiffeoInside { field: RandomField },
}

/// `Φ(x, ω) = x + Σ_m c_m(ω) ψ(x − m)` over `m ∈ Z^n`, with `c_m` uniform on
/// `[−amp, amp]^n` and `ψ(y) = (1 − |y|²/R²)³` on `B_R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomField {
    pub amp: f64,
    pub support: f64,
}

impl Default for RandomField {
    fn default() -> Self {
        RandomField {
            amp: 0.02,
            support: 1.5,
        }
    }
}

/// Grid of the site perturbations in index coordinates: sums with
/// integers of magnitude below `2^20` are exact.
const QUANTUM: f64 = 4_294_967_296.0;

fn quantize(v: f64) -> f64 {
    (v * QUANTUM).round() / QUANTUM
}

impl RandomField {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.amp >= 0.0 && self.support > 0.0 && self.support < 8.0) {
            return Err(Error::InvalidParameter(
                "field needs amp ≥ 0 and support in (0, 8)".into(),
            ));
        }
        if self.lipschitz(n) >= 1.0 || self.sup_bound(n) >= 0.5 {
            return Err(Error::InvalidParameter(format!(
                "field amplitude {} too large: displacement bound {:.3}, Lipschitz bound {:.3}",
                self.amp,
                self.sup_bound(n),
                self.lipschitz(n)
            )));
        }
        Ok(())
    }

    fn offsets(&self, n: usize) -> Vec<[i64; 3]> {
        let r = self.support.ceil() as i64;
        let mut out = Vec::new();
        let side = (2 * r + 1) as usize;
        for t in 0..side.pow(n as u32) {
            let mut d = [0i64; 3];
            let mut f = t;
            for a in (0..n).rev() {
                d[a] = (f % side) as i64 - r;
                f /= side;
            }
            out.push(d);
        }
        out
    }

    fn psi(&self, y: &[f64]) -> f64 {
        let q = y.iter().map(|v| v * v).sum::<f64>() / (self.support * self.support);
        if q < 1.0 {
            (1.0 - q).powi(3)
        } else {
            0.0
        }
    }

    /// Bound on `sup|Φ − id|_∞`.
    fn sup_bound(&self, n: usize) -> f64 {
        // Any point has at most (2R+1)^n lattice points within R.
        self.amp * (2.0 * self.support + 1.0).powi(n as i32)
    }

    /// Bound on `|∇(Φ − id)|` in the operator ∞-norm.
    fn lipschitz(&self, n: usize) -> f64 {
        // |∇ψ| ≤ 6/R·max (1−q)²·√q ≤ 6/(R·√5)·(4/5)².
        let grad = 6.0 / (self.support * 5f64.sqrt()) * 0.64;
        self.amp * n as f64 * grad * (2.0 * self.support + 1.0).powi(n as i32)
    }

    fn coeff(&self, seed: u64, site: [i64; 3], n: usize) -> [f64; 3] {
        let mut rng = site_rng(seed, site);
        let mut c = [0.0; 3];
        for v in c.iter_mut().take(n) {
            *v = self.amp * (2.0 * rng.random::<f64>() - 1.0);
        }
        c
    }

    /// `Φ(x) − x` at integer `x = i`, summed over a fixed offset order so
    /// that the value only depends on the coefficients around `i`.
    fn displacement_at_site(&self, seed: u64, shift: [i64; 3], i: [i64; 3], n: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        for d in self.offsets(n) {
            let w = self.psi(&d[..n].iter().map(|&v| v as f64).collect::<Vec<_>>());
            if w == 0.0 {
                continue;
            }
            let mut m = [0i64; 3];
            for a in 0..n {
                m[a] = i[a] - d[a] + shift[a];
            }
            let c = self.coeff(seed, m, n);
            for a in 0..n {
                out[a] += c[a] * w;
            }
        }
        out
    }

    /// `Φ(x) − x` at a real point.
    pub fn displacement(&self, seed: u64, x: &[f64]) -> [f64; 3] {
        let n = x.len();
        let base: Vec<i64> = x.iter().map(|v| v.round() as i64).collect();
        let mut out = [0.0; 3];
        for d in self.offsets(n) {
            let mut m = [0i64; 3];
            let mut y = vec![0.0; n];
            for a in 0..n {
                m[a] = base[a] + d[a];
                y[a] = x[a] - m[a] as f64;
            }
            let w = self.psi(&y);
            if w == 0.0 {
                continue;
            }
            let c = self.coeff(seed, m, n);
            for a in 0..n {
                out[a] += c[a] * w;
            }
        }
        out
    }
}

impl RandomDeloneKind {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            RandomDeloneKind::PerturbedLattice { m } if (0.0..1.0).contains(m) => Ok(()),
            RandomDeloneKind::PerturbedLattice { m } => Err(Error::InvalidParameter(format!(
                "perturbation bound M = {m} must lie in [0, 1)"
            ))),
            RandomDeloneKind::StochasticDiffeoOutside { field }
            | RandomDeloneKind::StochasticDiffeoInside { field } => field.validate(n),
        }
    }

    /// Whether the generator satisfies `Λ(τ_k ω) = Λ(ω) − k δ` exactly.
    pub fn has_statlatt(&self) -> bool {
        !matches!(self, RandomDeloneKind::StochasticDiffeoOutside { .. })
    }

    /// Point of site `i` in index coordinates (before scaling by `ε`), for
    /// the generators with exact stationarity.
    fn index_point(&self, seed: u64, shift: [i64; 3], i: [i64; 3], n: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        match self {
            RandomDeloneKind::PerturbedLattice { m } => {
                let mut s = [0i64; 3];
                for a in 0..n {
                    s[a] = i[a] + shift[a];
                }
                let mut rng = site_rng(seed, s);
                for a in 0..n {
                    x[a] = i[a] as f64 + quantize(m * (rng.random::<f64>() - 0.5));
                }
            }
            RandomDeloneKind::StochasticDiffeoInside { field } => {
                let d = field.displacement_at_site(seed, shift, i, n);
                for a in 0..n {
                    x[a] = i[a] as f64 + quantize(d[a]);
                }
            }
            RandomDeloneKind::StochasticDiffeoOutside { .. } => {
                for a in 0..n {
                    x[a] = i[a] as f64;
                }
            }
        }
        x
    }

    fn point(&self, seed: u64, shift: [i64; 3], i: [i64; 3], n: usize, eps: f64) -> [f64; 3] {
        match self {
            RandomDeloneKind::StochasticDiffeoOutside { field } => {
                let mut y = [0.0; 3];
                for a in 0..n {
                    y[a] = (i[a] + shift[a]) as f64 * eps;
                }
                let d = field.displacement(seed, &y[..n]);
                for a in 0..n {
                    y[a] += d[a];
                }
                y
            }
            _ => {
                let x = self.index_point(seed, shift, i, n);
                [x[0] * eps, x[1] * eps, x[2] * eps]
            }
        }
    }

    /// Largest displacement from `ε i`, in units of `ε` for the microscopic
    /// kinds and absolute for the macroscopic one.
    fn reach(&self, n: usize, eps: f64) -> f64 {
        match self {
            RandomDeloneKind::PerturbedLattice { m } => m / 2.0 * eps,
            RandomDeloneKind::StochasticDiffeoInside { field } => field.sup_bound(n) * eps,
            RandomDeloneKind::StochasticDiffeoOutside { field } => field.sup_bound(n),
        }
    }

    /// A priori packing radius.
    pub fn packing_bound(&self, n: usize, eps: f64) -> f64 {
        match self {
            RandomDeloneKind::PerturbedLattice { m } => (1.0 - m) * eps / 2.0,
            RandomDeloneKind::StochasticDiffeoInside { field } => {
                (1.0 - 2.0 * field.sup_bound(n)) * eps / 2.0
            }
            RandomDeloneKind::StochasticDiffeoOutside { field } => {
                (1.0 - field.lipschitz(n)) * eps / 2.0
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub points: usize,
    pub certificate: DeloneCertificate,
    /// Shifts `k` for which regenerating from `τ_k ω` reproduced the
    /// translated set bit for bit.
    pub shifts_checked: Vec<[i64; 3]>,
    /// `None` for kinds without the identity.
    pub exact: Option<bool>,
    pub theta_hat: f64,
    /// `‖β̂ − 1/L^n(U)‖_{L¹(U)}`.
    pub beta_l1_uniform: f64,
}

/// Generates the set over `region` and runs the certificate, the exact
/// stationarity check for `shifts`, and the limit-data estimate.
pub fn random_delone(
    kind: &RandomDeloneKind,
    epsilon: f64,
    region: &Domain,
    seed: u64,
    shifts: &[[i64; 3]],
) -> Result<(PointSet, StationarityReport)> {
    let n = region.dim();
    kind.validate(n)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must lie in (0,1)"
        )));
    }
    let ps = generate_shifted(kind, epsilon, region, seed, [0; 3])?;
    let certificate =
        DeloneCertificate::compute(&ps, region, None).map_err(|e| match closest_pair(&ps) {
            Ok((d2, a, b)) => Error::DegenerateSet(format!(
                "{e}; closest pair {} and {} at distance {:.6e}",
                ps.labels[a],
                ps.labels[b],
                d2.sqrt()
            )),
            Err(_) => e,
        })?;

    let mut shifts_checked = Vec::new();
    let mut exact = kind.has_statlatt().then_some(true);
    if kind.has_statlatt() {
        let sites = ps.sites.clone().unwrap_or_default();
        for &k in shifts {
            let same = sites.iter().all(|&i| {
                let shifted = kind.point(seed, k, i, n, epsilon);
                let mut m = [0i64; 3];
                for a in 0..n {
                    m[a] = i[a] + k[a];
                }
                // Translation by −kε applied in index coordinates.
                let base = kind.index_point(seed, [0; 3], m, n);
                (0..n)
                    .all(|a| shifted[a].to_bits() == ((base[a] - k[a] as f64) * epsilon).to_bits())
            });
            exact = exact.map(|e| e && same);
            shifts_checked.push(k);
        }
    }

    let data = estimate_limit_data(
        &ps,
        region,
        kind.packing_bound(n, epsilon).min(certificate.r_packing),
        0.25,
    )?;
    let uniform = 1.0 / region.measure();
    let beta_l1_uniform = data.l1_error(region, |_| uniform, 4);
    Ok((
        ps.clone(),
        StationarityReport {
            points: ps.len(),
            certificate,
            shifts_checked,
            exact,
            theta_hat: data.theta_hat,
            beta_l1_uniform,
        },
    ))
}

/// The set of `τ_k ω` over `region`, labelled by site.
pub fn generate_shifted(
    kind: &RandomDeloneKind,
    epsilon: f64,
    region: &Domain,
    seed: u64,
    shift: [i64; 3],
) -> Result<PointSet> {
    let n = region.dim();
    kind.validate(n)?;
    let (lo, hi) = region.bbox();
    let margin = kind.reach(n, epsilon) + 2.0 * epsilon;
    let ranges: Vec<(i64, i64)> = (0..n)
        .map(|a| {
            (
                ((lo[a] - margin) / epsilon).floor() as i64,
                ((hi[a] + margin) / epsilon).ceil() as i64,
            )
        })
        .collect();
    let lens: Vec<usize> = ranges.iter().map(|(a, b)| (b - a + 1) as usize).collect();
    let total: usize = lens.iter().product();
    let mut points = Vec::new();
    let mut sites = Vec::new();
    for mut f in 0..total {
        let mut s = [0i64; 3];
        for a in (0..n).rev() {
            s[a] = ranges[a].0 + (f % lens[a]) as i64;
            f /= lens[a];
        }
        let x = kind.point(seed, shift, s, n, epsilon);
        if (0..n).all(|a| x[a] >= lo[a] - margin && x[a] <= hi[a] + margin) {
            points.push(x);
            sites.push(s);
        }
    }
    Ok(PointSet::new(n, points).with_sites(sites))
}

/// Spread of `θ̂` over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitConstancy {
    pub seeds: Vec<u64>,
    pub theta_hat: Vec<f64>,
    pub beta_l1_uniform: Vec<f64>,
    pub spread: f64,
}

pub fn limit_constancy(
    kind: &RandomDeloneKind,
    epsilon: f64,
    region: &Domain,
    seeds: &[u64],
) -> Result<LimitConstancy> {
    let mut theta_hat = Vec::new();
    let mut beta = Vec::new();
    for &s in seeds {
        let (_, rep) = random_delone(kind, epsilon, region, s, &[])?;
        theta_hat.push(rep.theta_hat);
        beta.push(rep.beta_l1_uniform);
    }
    let hi = theta_hat.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = theta_hat.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(LimitConstancy {
        seeds: seeds.to_vec(),
        spread: hi - lo,
        theta_hat,
        beta_l1_uniform: beta,
    })
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{site_rng, Domain};
use crate::sum::tree_sum_by;

/// Law of the per-site radius `ρ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadiusLaw {
    Uniform {
        min: f64,
        max: f64,
    },
    PointMass {
        rho: f64,
    },
    /// A global coin, drawn once per `ω` and ignored by shifts, selects one
    /// of two laws for every site. Shift-invariant but not ergodic.
    CoinMixture {
        heads: Box<RadiusLaw>,
        tails: Box<RadiusLaw>,
        p_heads: f64,
    },
}

impl Default for RadiusLaw {
    fn default() -> Self {
        RadiusLaw::Uniform { min: 0.5, max: 1.0 }
    }
}

/// Stream of the global coin; site streams never reach it.
const COIN_STREAM: u64 = u64::MAX;

impl RadiusLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            RadiusLaw::Uniform { min, max } if *min > 0.0 && min < max && max.is_finite() => Ok(()),
            RadiusLaw::PointMass { rho } if *rho > 0.0 && rho.is_finite() => Ok(()),
            RadiusLaw::CoinMixture {
                heads,
                tails,
                p_heads,
            } if (0.0..=1.0).contains(p_heads) => {
                heads.validate()?;
                tails.validate()
            }
            _ => Err(Error::InvalidParameter(format!(
                "invalid radius law {self:?}"
            ))),
        }
    }

    /// `(ρ_min, ρ_max)` over the support.
    pub fn range(&self) -> (f64, f64) {
        match self {
            RadiusLaw::Uniform { min, max } => (*min, *max),
            RadiusLaw::PointMass { rho } => (*rho, *rho),
            RadiusLaw::CoinMixture { heads, tails, .. } => {
                let (a, b) = (heads.range(), tails.range());
                (a.0.min(b.0), a.1.max(b.1))
            }
        }
    }

    /// `E[ρ^q]`.
    pub fn moment(&self, q: f64) -> f64 {
        match self {
            RadiusLaw::Uniform { min, max } => {
                (max.powf(q + 1.0) - min.powf(q + 1.0)) / ((q + 1.0) * (max - min))
            }
            RadiusLaw::PointMass { rho } => rho.powf(q),
            RadiusLaw::CoinMixture {
                heads,
                tails,
                p_heads,
            } => p_heads * heads.moment(q) + (1.0 - p_heads) * tails.moment(q),
        }
    }

    /// `E[ρ^q | coin]`: the conditional expectation on the invariant
    /// σ-algebra. Equals [`RadiusLaw::moment`] for the ergodic laws.
    pub fn invariant_moment(&self, q: f64, seed: u64) -> f64 {
        match self {
            RadiusLaw::CoinMixture { heads, tails, .. } => {
                if self.coin(seed) {
                    heads.invariant_moment(q, seed)
                } else {
                    tails.invariant_moment(q, seed)
                }
            }
            _ => self.moment(q),
        }
    }

    /// Outcome of the global coin for `seed` (`true` for heads); `true` for
    /// the ergodic laws.
    pub fn coin(&self, seed: u64) -> bool {
        match self {
            RadiusLaw::CoinMixture { p_heads, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(COIN_STREAM);
                rng.random::<f64>() < *p_heads
            }
            _ => true,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, seed: u64) -> f64 {
        match self {
            RadiusLaw::Uniform { min, max } => min + (max - min) * rng.random::<f64>(),
            RadiusLaw::PointMass { rho } => *rho,
            RadiusLaw::CoinMixture { heads, tails, .. } => {
                if self.coin(seed) {
                    heads.draw(rng, seed)
                } else {
                    tails.draw(rng, seed)
                }
            }
        }
    }
}

/// Site process `γ(i,ω) = ρ_i^{n−sp}·capT_unit` on `Z^n`.
///
/// `ω` is a seed together with a shift `k`; site `i` of `τ_k ω` reads the
/// random stream of site `i + k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryProcess {
    pub seed: u64,
    pub law: RadiusLaw,
    pub n: usize,
    /// `n − sp`.
    pub exponent: f64,
    pub cap_unit: f64,
    #[serde(default)]
    pub shift: [i64; 3],
}

impl StationaryProcess {
    pub fn new(seed: u64, law: RadiusLaw, n: usize, exponent: f64, cap_unit: f64) -> Result<Self> {
        law.validate()?;
        if !(2..=3).contains(&n) || !(exponent > 0.0) || !(cap_unit >= 0.0) {
            return Err(Error::InvalidParameter(
                "process needs n in {2,3}, a positive exponent and a non-negative capacity".into(),
            ));
        }
        Ok(StationaryProcess {
            seed,
            law,
            n,
            exponent,
            cap_unit,
            shift: [0; 3],
        })
    }

    /// `τ_k ω`.
    pub fn shifted(&self, k: [i64; 3]) -> Self {
        let mut p = self.clone();
        for a in 0..3 {
            p.shift[a] += k[a];
        }
        p
    }

    pub fn rho(&self, site: [i64; 3]) -> f64 {
        let mut s = [0i64; 3];
        for a in 0..self.n {
            s[a] = site[a] + self.shift[a];
        }
        let mut rng = site_rng(self.seed, s);
        self.law.draw(&mut rng, self.seed)
    }

    pub fn gamma(&self, site: [i64; 3]) -> f64 {
        self.rho(site).powf(self.exponent) * self.cap_unit
    }

    /// `γ₀ = ρ_max^{n−sp}·capT_unit`.
    pub fn gamma0(&self) -> f64 {
        self.law.range().1.powf(self.exponent) * self.cap_unit
    }

    /// `E[γ]`.
    pub fn expected(&self) -> f64 {
        self.cap_unit * self.law.moment(self.exponent)
    }

    /// `E[γ, 𝓘]` for this `ω`.
    pub fn expected_invariant(&self) -> f64 {
        self.cap_unit * self.law.invariant_moment(self.exponent, self.seed)
    }

    /// Standard deviation of `γ`.
    pub fn sigma(&self) -> f64 {
        let m1 = self.law.moment(self.exponent);
        let m2 = self.law.moment(2.0 * self.exponent);
        self.cap_unit * (m2 - m1 * m1).max(0.0).sqrt()
    }
}

/// Lattice sites `i` whose cell `ε(i + [−½,½]^n)` lies in the rectangle
/// `v`, in lexicographic order.
pub fn interior_sites(v: &Domain, epsilon: f64) -> Result<Vec<[i64; 3]>> {
    sites_where(v, epsilon, |lo, hi| {
        let n = lo.len();
        (0..1usize << n).all(|bits| {
            let c: Vec<f64> = (0..n)
                .map(|a| if bits >> a & 1 == 1 { hi[a] } else { lo[a] })
                .collect();
            v.contains(&c)
        })
    })
}

/// Sites with `ε·i` in the half-open box `[lo, hi)`.
fn sites_in_box(lo: &[f64], hi: &[f64], epsilon: f64) -> Vec<[i64; 3]> {
    let n = lo.len();
    let ranges: Vec<(i64, i64)> = (0..n)
        .map(|a| {
            (
                (lo[a] / epsilon).floor() as i64 - 1,
                (hi[a] / epsilon).ceil() as i64 + 1,
            )
        })
        .collect();
    enumerate(&ranges)
        .into_iter()
        .filter(|s| {
            (0..n).all(|a| s[a] as f64 * epsilon >= lo[a] && (s[a] as f64 * epsilon) < hi[a])
        })
        .collect()
}

fn sites_where<F: Fn(&[f64], &[f64]) -> bool>(
    v: &Domain,
    epsilon: f64,
    keep: F,
) -> Result<Vec<[i64; 3]>> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must be positive"
        )));
    }
    let (lo, hi) = v.bbox();
    let n = lo.len();
    let ranges: Vec<(i64, i64)> = (0..n)
        .map(|a| {
            (
                (lo[a] / epsilon).floor() as i64 - 1,
                (hi[a] / epsilon).ceil() as i64 + 1,
            )
        })
        .collect();
    Ok(enumerate(&ranges)
        .into_iter()
        .filter(|s| {
            let c_lo: Vec<f64> = (0..n).map(|a| (s[a] as f64 - 0.5) * epsilon).collect();
            let c_hi: Vec<f64> = (0..n).map(|a| (s[a] as f64 + 0.5) * epsilon).collect();
            keep(&c_lo, &c_hi)
        })
        .collect())
}

fn enumerate(ranges: &[(i64, i64)]) -> Vec<[i64; 3]> {
    let n = ranges.len();
    let lens: Vec<usize> = ranges
        .iter()
        .map(|(a, b)| (b - a + 1).max(0) as usize)
        .collect();
    let total: usize = lens.iter().product();
    let mut out = Vec::with_capacity(total);
    for mut t in 0..total {
        let mut s = [0i64; 3];
        for a in (0..n).rev() {
            s[a] = ranges[a].0 + (t % lens[a]) as i64;
            t /= lens[a];
        }
        out.push(s);
    }
    out
}

/// `∫ Ψ_j χ_Q` for one test rectangle against `E[γ]·L^n(Q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowCheck {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub sites: usize,
    pub integral: f64,
    pub target: f64,
    /// `4σ·ε^n·√N + E[γ]·|N·ε^n − L^n(Q)|`.
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicRow {
    pub epsilon: f64,
    pub sites: usize,
    pub mean: f64,
    pub expected: f64,
    pub sigma: f64,
    /// `4σ/√N`.
    pub tolerance: f64,
    pub pass: bool,
    pub windows: Vec<WindowCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicTable {
    pub seed: u64,
    pub rows: Vec<ErgodicRow>,
}

impl ErgodicTable {
    pub fn pass(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.pass && r.windows.iter().all(|w| w.pass))
    }
}

/// Five test rectangles in relative coordinates of the bounding box.
const WINDOWS: [([f64; 3], [f64; 3]); 5] = [
    ([0.1, 0.2, 0.1], [0.4, 0.7, 0.4]),
    ([0.5, 0.5, 0.5], [0.9, 0.9, 0.9]),
    ([0.0, 0.0, 0.0], [1.0, 0.5, 1.0]),
    ([0.25, 0.05, 0.25], [0.75, 0.3, 0.75]),
    ([0.6, 0.1, 0.2], [0.95, 0.45, 0.8]),
];

/// Mean of `γ` over the interior sites of `v` for each `ε`, with the
/// `4σ/√N` gate and the weak-* check on five test rectangles.
pub fn ergodic_average(
    proc: &StationaryProcess,
    v: &Domain,
    epsilon_list: &[f64],
) -> Result<ErgodicTable> {
    if v.dim() != proc.n {
        return Err(Error::GridMismatch(
            "domain and process dimensions differ".into(),
        ));
    }
    let expected = proc.expected();
    let sigma = proc.sigma();
    let (blo, bhi) = v.bbox();
    let n = proc.n;
    let mut rows = Vec::with_capacity(epsilon_list.len());
    for &eps in epsilon_list {
        let sites = interior_sites(v, eps)?;
        if sites.is_empty() {
            return Err(Error::EmptySet);
        }
        let gammas: Vec<f64> = sites.iter().map(|&s| proc.gamma(s)).collect();
        let count = gammas.len();
        let mean = tree_sum_by(count, |i| gammas[i]) / count as f64;
        let tolerance = 4.0 * sigma / (count as f64).sqrt();
        let vol = eps.powi(n as i32);
        let windows = WINDOWS
            .iter()
            .map(|(a, b)| {
                let lo: Vec<f64> = (0..n).map(|k| blo[k] + a[k] * (bhi[k] - blo[k])).collect();
                let hi: Vec<f64> = (0..n).map(|k| blo[k] + b[k] * (bhi[k] - blo[k])).collect();
                let ws = sites_in_box(&lo, &hi, eps);
                let g: Vec<f64> = ws.iter().map(|&s| proc.gamma(s)).collect();
                let integral = vol * tree_sum_by(g.len(), |i| g[i]);
                let measure: f64 = (0..n).map(|k| hi[k] - lo[k]).product();
                let target = expected * measure;
                let tol = 4.0 * sigma * vol * (ws.len() as f64).sqrt()
                    + expected * (ws.len() as f64 * vol - measure).abs();
                WindowCheck {
                    pass: (integral - target).abs() <= tol + 1e-12 * target.abs(),
                    lo,
                    hi,
                    sites: ws.len(),
                    integral,
                    target,
                    tolerance: tol,
                }
            })
            .collect();
        rows.push(ErgodicRow {
            epsilon: eps,
            sites: count,
            mean,
            expected,
            sigma,
            tolerance,
            pass: (mean - expected).abs() <= tolerance + 1e-12 * expected.abs(),
            windows,
        });
    }
    Ok(ErgodicTable {
        seed: proc.seed,
        rows,
    })
}

/// The ergodic gate over several `ω`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicGate {
    pub tables: Vec<ErgodicTable>,
    pub failures: usize,
    /// Fewer than two failing seeds.
    pub pass: bool,
}

pub fn ergodic_gate(
    template: &StationaryProcess,
    seeds: &[u64],
    v: &Domain,
    epsilon_list: &[f64],
) -> Result<ErgodicGate> {
    let tables = seeds
        .iter()
        .map(|&seed| {
            let p = StationaryProcess {
                seed,
                ..template.clone()
            };
            ergodic_average(&p, v, epsilon_list)
        })
        .collect::<Result<Vec<_>>>()?;
    let failures = tables.iter().filter(|t| !t.pass()).count();
    Ok(ErgodicGate {
        pass: failures < 2,
        failures,
        tables,
    })
}

/// Means over two disjoint windows of equal size, and the additivity of the
/// site sums over their union.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowAgreement {
    pub mean_a: f64,
    pub mean_b: f64,
    /// `4σ·√(1/N_a + 1/N_b)`.
    pub tolerance: f64,
    pub agree: bool,
    /// `F(V_a ∪ V_b) = F(V_a) + F(V_b)` for the site sums, to rounding.
    pub additive: bool,
}

pub fn window_agreement(
    proc: &StationaryProcess,
    a: &Domain,
    b: &Domain,
    epsilon: f64,
) -> Result<WindowAgreement> {
    let sa = interior_sites(a, epsilon)?;
    let sb = interior_sites(b, epsilon)?;
    if sa.is_empty() || sb.is_empty() {
        return Err(Error::EmptySet);
    }
    if sa.iter().any(|s| sb.contains(s)) {
        return Err(Error::InvalidParameter(
            "windows share lattice sites".into(),
        ));
    }
    let sum = |s: &[[i64; 3]]| s.iter().map(|&x| proc.gamma(x)).sum::<f64>();
    let (fa, fb) = (sum(&sa), sum(&sb));
    let mut both = sa.clone();
    both.extend_from_slice(&sb);
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mean_a, mean_b) = (fa / na, fb / nb);
    let tolerance = 4.0 * proc.sigma() * (1.0 / na + 1.0 / nb).sqrt();
    Ok(WindowAgreement {
        agree: (mean_a - mean_b).abs() <= tolerance + 1e-12 * mean_a.abs(),
        additive: (sum(&both) - (fa + fb)).abs() <= 1e-12 * (fa + fb).abs(),
        mean_a,
        mean_b,
        tolerance,
    })
}

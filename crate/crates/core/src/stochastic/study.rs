use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::obstacles::{random_obstacles, separation_check, DeltaRule, SeparationReport};
use super::process::{RadiusLaw, StationaryProcess};
use crate::capacity::CompactSetSpec;
use crate::energy::{FractionalKernel, UniformGrid};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::homogenization::{
    beta_uniform, capacity_estimate, solve_homogenized, solve_perforated, CapacitySettings,
    ForcingSpec, GridPolicy, HomogenizedProblem, Minimum, PerforatedProblem,
};
use crate::io::{write_csv, write_json, CsvCell};
use crate::solver::{CgOptions, SpgOptions};

/// Sweep over `ε` and `ω` with random ball or box obstacles on `U = (0,1)^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomStudyConfig {
    pub epsilon_list: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub kernel: FractionalKernel,
    #[serde(default)]
    pub law: RadiusLaw,
    /// Reference obstacle of unit size, centred at the origin.
    #[serde(default = "default_t")]
    pub t: CompactSetSpec,
    #[serde(default)]
    pub delta: DeltaRule,
    #[serde(default)]
    pub forcing: Option<ForcingSpec>,
    /// `nodes_per_lambda` counts nodes across the smallest obstacle radius.
    #[serde(default)]
    pub grid: GridPolicy,
    #[serde(default)]
    pub capacity: CapacitySettings,
    #[serde(default)]
    pub cg: CgOptions,
    #[serde(default)]
    pub spg: SpgOptions,
}

fn default_t() -> CompactSetSpec {
    CompactSetSpec::ball(vec![0.0, 0.0], 1.0)
}

impl RandomStudyConfig {
    /// `ε ∈ {1/4, 1/6, 1/8}`, three seeds, `ρ` uniform on `[0.5, 1]`.
    pub fn uniform_default() -> Self {
        RandomStudyConfig {
            epsilon_list: vec![0.25, 1.0 / 6.0, 0.125],
            seeds: vec![1, 2, 3],
            kernel: FractionalKernel::default(),
            law: RadiusLaw::default(),
            t: default_t(),
            delta: DeltaRule::default(),
            forcing: None,
            grid: GridPolicy::default(),
            capacity: CapacitySettings::default(),
            cg: CgOptions::default(),
            spg: SpgOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.t.validate()?;
        self.law
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let n = self.kernel.n;
        if self.t.dim() != n {
            return Err(Error::Config("t and kernel dimensions differ".into()));
        }
        if self.epsilon_list.is_empty()
            || self.epsilon_list.iter().any(|e| !(*e > 0.0 && *e < 1.0))
            || self.epsilon_list.windows(2).any(|w| !(w[1] < w[0]))
        {
            return Err(Error::Config(
                "epsilon_list must be decreasing values in (0,1)".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if !(self.grid.nodes_per_lambda >= 2.0) {
            return Err(Error::Config(
                "grid.nodes_per_lambda must be at least 2".into(),
            ));
        }
        if self.capacity.value.is_none() && self.capacity.r_list.is_empty() {
            return Err(Error::Config("capacity needs a value or an r_list".into()));
        }
        if let Some(f) = &self.forcing {
            f.validate(n)?;
        }
        Ok(())
    }

    pub fn lambda(&self, epsilon: f64) -> f64 {
        epsilon.powf(self.kernel.obstacle_exponent())
    }

    /// Radius of the smallest obstacle at the finest `ε`.
    fn smallest_obstacle(&self) -> f64 {
        let finest = self.epsilon_list.last().copied().unwrap_or(1.0);
        self.law.range().0 * self.lambda(finest) * self.t.extent(0.0)
    }

    pub fn cells(&self) -> usize {
        self.grid
            .cells(&self.epsilon_list, self.smallest_obstacle())
    }

    fn forcing(&self) -> ForcingSpec {
        self.forcing
            .clone()
            .unwrap_or_else(|| ForcingSpec::default_bump(self.kernel.n))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomRow {
    pub seed: u64,
    pub epsilon: f64,
    pub obstacles: usize,
    pub m_j: f64,
    pub m_inf: f64,
    pub m_inf_band: f64,
    /// `|m_j − m_∞|/|m_∞|`.
    pub gap_raw: f64,
    /// Gap beyond the band of `m_∞`.
    pub gap: f64,
    /// Largest `γ(i,ω)/γ₀` over the generated sites.
    pub gamma_over_gamma0: f64,
    pub iterations: usize,
}

/// Record persisted per seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub law: RadiusLaw,
    /// `E[γ, 𝓘]` for this `ω`.
    pub expected_gamma: f64,
    pub rows: Vec<RandomRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomStudy {
    pub config: RandomStudyConfig,
    pub cells: usize,
    pub cap_unit: f64,
    pub cap_band: f64,
    pub expected_gamma: f64,
    pub m_inf: f64,
    pub separation: SeparationReport,
    pub records: Vec<SeedRecord>,
    /// `(max − min)/|m_∞|` of the minima at the finest `ε`.
    pub finest_spread: f64,
    /// Mean of `gap_raw` at the finest `ε`.
    pub finest_gap: f64,
    /// Spread below the gap: the minima do not resolve `ω`.
    pub deterministic: bool,
}

/// Capacity of the unit reference set at the pattern resolution of the
/// largest obstacle at the finest `ε`.
fn cap_unit(cfg: &RandomStudyConfig, cells: usize) -> Result<(f64, f64)> {
    if let Some(v) = cfg.capacity.value {
        return Ok((v, cfg.capacity.band.unwrap_or(0.0)));
    }
    let finest = *cfg.epsilon_list.last().unwrap();
    let rho_max = cfg.law.range().1;
    let h = cfg
        .capacity
        .h
        .unwrap_or_else(|| 1.0 / (cells as f64 * rho_max * cfg.lambda(finest)));
    let (c, b, _) = capacity_estimate(&cfg.t, &cfg.kernel, h, &cfg.capacity.r_list, &cfg.cg)?;
    Ok((c, cfg.capacity.band.unwrap_or(b)))
}

struct Setup {
    cells: usize,
    grid: UniformGrid,
    forcing: Vec<f64>,
    cap_unit: f64,
    cap_band: f64,
}

fn setup(cfg: &RandomStudyConfig) -> Result<Setup> {
    cfg.validate()?;
    let cells = cfg.cells();
    let grid = UniformGrid::unit_cube(cfg.kernel.n, cells)?;
    let forcing = cfg.forcing().sample(&grid);
    let (cap_unit, cap_band) = cap_unit(cfg, cells)?;
    Ok(Setup {
        cells,
        grid,
        forcing,
        cap_unit,
        cap_band,
    })
}

fn homogenized(cfg: &RandomStudyConfig, s: &Setup, expected_gamma: f64) -> Result<Minimum> {
    solve_homogenized(&HomogenizedProblem {
        grid: s.grid.clone(),
        kernel: cfg.kernel.clone(),
        theta: 1.0,
        beta: beta_uniform(&s.grid, 1.0),
        cap_t: expected_gamma,
        forcing: s.forcing.clone(),
        cg: cfg.cg,
        spg: cfg.spg,
    })
}

fn perforated(
    cfg: &RandomStudyConfig,
    s: &Setup,
    proc: &StationaryProcess,
    eps: f64,
) -> Result<(usize, f64, Minimum)> {
    let domain = Domain::unit_cube(cfg.kernel.n);
    let fam = random_obstacles(proc, &cfg.t, &cfg.kernel, eps, &cfg.delta, &domain)?;
    let g0 = proc.gamma0();
    let worst = fam
        .sites
        .iter()
        .map(|&i| proc.gamma(i) / g0)
        .fold(0.0f64, f64::max);
    let obstacles = fam.on_grid(&s.grid, cfg.law.range().0)?;
    let count = obstacles.len();
    let m = solve_perforated(&PerforatedProblem {
        grid: s.grid.clone(),
        kernel: cfg.kernel.clone(),
        obstacles: Some(obstacles),
        forcing: s.forcing.clone(),
        cg: cfg.cg,
        spg: cfg.spg,
    })?;
    Ok((count, worst, m))
}

fn process(cfg: &RandomStudyConfig, seed: u64, cap_unit: f64) -> Result<StationaryProcess> {
    StationaryProcess::new(
        seed,
        cfg.law.clone(),
        cfg.kernel.n,
        cfg.kernel.capacity_exponent(),
        cap_unit,
    )
}

/// Runs the perforated problems for every seed and `ε`, and the homogenized
/// problem with mass coefficient `E[γ]`.
///
/// When `out` is given, writes `seed_<s>.json` per seed, `random_minima.csv`
/// and `random_study.json`.
pub fn random_gamma_study(cfg: &RandomStudyConfig, out: Option<&Path>) -> Result<RandomStudy> {
    let s = setup(cfg)?;
    let template = process(cfg, 0, s.cap_unit)?;
    let expected_gamma = template.expected();
    let separation = separation_check(
        &template,
        &cfg.t,
        &cfg.kernel,
        &cfg.epsilon_list,
        &cfg.delta,
        &Domain::unit_cube(cfg.kernel.n),
    )?;
    if !separation.containment {
        let worst = separation
            .rows
            .iter()
            .fold(0.0f64, |m, r| m.max(r.worst_fill));
        return Err(Error::InvalidParameter(format!(
            "obstacles leave their separation cubes: fill ratio {worst:.4} > 1"
        )));
    }
    let jobs: Vec<(u64, f64)> = cfg
        .seeds
        .iter()
        .flat_map(|&seed| cfg.epsilon_list.iter().map(move |&e| (seed, e)))
        .collect();
    let (mh, solved): (Result<Minimum>, Vec<Result<(usize, f64, Minimum)>>) = rayon::join(
        || homogenized(cfg, &s, expected_gamma),
        || {
            jobs.par_iter()
                .map(|&(seed, eps)| perforated(cfg, &s, &process(cfg, seed, s.cap_unit)?, eps))
                .collect()
        },
    );
    let mh = mh?;
    let band = mh.d_theta / expected_gamma.max(f64::MIN_POSITIVE)
        * s.cap_band
        * cfg.law.moment(cfg.kernel.capacity_exponent());
    let scale = mh.value.abs().max(f64::MIN_POSITIVE);
    let mut records: Vec<SeedRecord> = cfg
        .seeds
        .iter()
        .map(|&seed| SeedRecord {
            seed,
            law: cfg.law.clone(),
            expected_gamma: s.cap_unit
                * cfg
                    .law
                    .invariant_moment(cfg.kernel.capacity_exponent(), seed),
            rows: Vec::new(),
        })
        .collect();
    for (&(seed, eps), r) in jobs.iter().zip(solved) {
        let (obstacles, worst, mp) = r?;
        let diff = (mp.value - mh.value).abs();
        let rec = records.iter_mut().find(|r| r.seed == seed).unwrap();
        rec.rows.push(RandomRow {
            seed,
            epsilon: eps,
            obstacles,
            m_j: mp.value,
            m_inf: mh.value,
            m_inf_band: band,
            gap_raw: diff / scale,
            gap: (diff - band).max(0.0) / scale,
            gamma_over_gamma0: worst,
            iterations: mp.iterations,
        });
    }
    let finest: Vec<&RandomRow> = records.iter().filter_map(|r| r.rows.last()).collect();
    let hi = finest
        .iter()
        .map(|r| r.m_j)
        .fold(f64::NEG_INFINITY, f64::max);
    let lo = finest.iter().map(|r| r.m_j).fold(f64::INFINITY, f64::min);
    let finest_spread = (hi - lo) / scale;
    let finest_gap = finest.iter().map(|r| r.gap_raw).sum::<f64>() / finest.len() as f64;
    let study = RandomStudy {
        config: cfg.clone(),
        cells: s.cells,
        cap_unit: s.cap_unit,
        cap_band: s.cap_band,
        expected_gamma,
        m_inf: mh.value,
        separation,
        records,
        finest_spread,
        finest_gap,
        deterministic: finest_spread < finest_gap,
    };
    if let Some(dir) = out {
        write_random_study(&study, dir)?;
    }
    Ok(study)
}

pub fn write_random_study(study: &RandomStudy, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rows = Vec::new();
    for rec in &study.records {
        write_json(&dir.join(format!("seed_{}.json", rec.seed)), rec)?;
        for r in &rec.rows {
            rows.push(vec![
                CsvCell::U(r.seed),
                CsvCell::F(r.epsilon),
                CsvCell::F(r.m_j),
                CsvCell::F(r.gap),
            ]);
        }
    }
    write_csv(
        &dir.join("random_minima.csv"),
        &["seed", "epsilon", "m_j", "gap"],
        &rows,
    )?;
    write_json(&dir.join("random_study.json"), study)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlRow {
    pub seed: u64,
    pub heads: bool,
    pub m_j: f64,
    /// Minimum of the homogenized problem with `E[γ, 𝓘](ω)`.
    pub m_conditional: f64,
}

/// Negative control with a coin mixture: minima at one `ε` over many
/// seeds, split at the widest gap between sorted values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonErgodicControl {
    pub epsilon: f64,
    pub law: RadiusLaw,
    pub rows: Vec<ControlRow>,
    /// `m_∞` with the unconditional `E[γ]`.
    pub m_unconditional: f64,
    /// Widest gap between consecutive sorted minima.
    pub split_gap: f64,
    /// Largest range within either side of the split.
    pub within: f64,
    /// The split separates heads from tails.
    pub matches_coin: bool,
    pub bimodal: bool,
}

/// Requires a [`RadiusLaw::CoinMixture`] law and uses the finest `ε`.
pub fn non_ergodic_control(cfg: &RandomStudyConfig) -> Result<NonErgodicControl> {
    if !matches!(cfg.law, RadiusLaw::CoinMixture { .. }) {
        return Err(Error::Config(
            "the non-ergodic control needs a coin_mixture law".into(),
        ));
    }
    let s = setup(cfg)?;
    let q = cfg.kernel.capacity_exponent();
    let eps = *cfg.epsilon_list.last().unwrap();
    let coins: Vec<bool> = cfg.seeds.iter().map(|&seed| cfg.law.coin(seed)).collect();
    let mut conditional_gamma: Vec<f64> = cfg
        .seeds
        .iter()
        .map(|&seed| s.cap_unit * cfg.law.invariant_moment(q, seed))
        .collect();
    conditional_gamma.push(s.cap_unit * cfg.law.moment(q));
    let mut distinct = conditional_gamma.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let (homs, perfs): (Vec<Result<Minimum>>, Vec<Result<(usize, f64, Minimum)>>) = rayon::join(
        || {
            distinct
                .par_iter()
                .map(|&g| homogenized(cfg, &s, g))
                .collect()
        },
        || {
            cfg.seeds
                .par_iter()
                .map(|&seed| perforated(cfg, &s, &process(cfg, seed, s.cap_unit)?, eps))
                .collect()
        },
    );
    let homs: Vec<f64> = homs
        .into_iter()
        .map(|m| m.map(|m| m.value))
        .collect::<Result<_>>()?;
    let lookup = |g: f64| homs[distinct.iter().position(|&d| d == g).unwrap()];
    let m_unconditional = lookup(*conditional_gamma.last().unwrap());
    let mut rows = Vec::new();
    for (p, r) in perfs.into_iter().enumerate() {
        let (_, _, m) = r?;
        rows.push(ControlRow {
            seed: cfg.seeds[p],
            heads: coins[p],
            m_j: m.value,
            m_conditional: lookup(conditional_gamma[p]),
        });
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[a].m_j.total_cmp(&rows[b].m_j));
    let (mut split_gap, mut at) = (0.0, 0);
    for w in 1..order.len() {
        let g = rows[order[w]].m_j - rows[order[w - 1]].m_j;
        if g > split_gap {
            split_gap = g;
            at = w;
        }
    }
    let range = |ix: &[usize]| match (ix.first(), ix.last()) {
        (Some(&a), Some(&b)) => rows[b].m_j - rows[a].m_j,
        _ => 0.0,
    };
    let within = range(&order[..at]).max(range(&order[at..]));
    let low_side: Vec<bool> = order[..at].iter().map(|&i| rows[i].heads).collect();
    let high_side: Vec<bool> = order[at..].iter().map(|&i| rows[i].heads).collect();
    let uniform = |v: &[bool]| v.iter().all(|&c| c == v[0]);
    let matches_coin =
        at > 0 && uniform(&low_side) && uniform(&high_side) && low_side[0] != high_side[0];
    Ok(NonErgodicControl {
        epsilon: eps,
        law: cfg.law.clone(),
        m_unconditional,
        split_gap,
        within,
        matches_coin,
        bimodal: matches_coin && split_gap > 4.0 * within,
        rows,
    })
}

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::obstacles::{build_obstacles, obstacle_scale, ObstacleFamily};
use super::problems::{
    beta_from_histogram, beta_uniform, solve_homogenized, solve_perforated, ForcingSpec,
    HomogenizedProblem, Minimum, PerforatedProblem,
};
use crate::capacity::{solve_capacity, CapacityProblem, CompactSetSpec};
use crate::energy::{FractionalKernel, UniformGrid};
use crate::error::{Error, Result};
use crate::geometry::{
    estimate_limit_data, generate, BaseSet, Diffeomorphism, Domain, GeneratorKind,
};
use crate::io::{write_csv, write_json, CsvCell};
use crate::solver::{CgOptions, SpgOptions};
use crate::stats::non_increasing;
use crate::sum::tree_sum_by;

/// Lattice family; the scale `ε` comes from the sweep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Lattice {
    #[default]
    Cubic,
    Rescaled {
        base: BaseSet,
    },
    DiffeoOutside {
        phi: Diffeomorphism,
    },
    DiffeoInside {
        phi: Diffeomorphism,
    },
}

impl Lattice {
    pub fn at(&self, epsilon: f64) -> GeneratorKind {
        match self {
            Lattice::Cubic => GeneratorKind::Cubic { epsilon },
            Lattice::Rescaled { base } => GeneratorKind::Rescaled {
                base: base.clone(),
                epsilon,
            },
            Lattice::DiffeoOutside { phi } => GeneratorKind::DiffeoOutside {
                phi: phi.clone(),
                epsilon,
            },
            Lattice::DiffeoInside { phi } => GeneratorKind::DiffeoInside {
                phi: phi.clone(),
                epsilon,
            },
        }
    }
}

/// Common grid of the sweep: the smallest number of cells per axis with
/// `λ/h ≥ nodes_per_lambda` at the finest `ε`, rounded up to a common
/// multiple of every integer `1/ε` (lattice points then sit on nodes),
/// times `refine`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridPolicy {
    pub nodes_per_lambda: f64,
    pub refine: usize,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy {
            nodes_per_lambda: 2.0,
            refine: 1,
        }
    }
}

impl GridPolicy {
    pub fn cells(&self, epsilon_list: &[f64], lambda_finest: f64) -> usize {
        let min_cells = (self.nodes_per_lambda / lambda_finest - 1e-9)
            .ceil()
            .max(4.0) as usize;
        let mut step = 1usize;
        for &eps in epsilon_list {
            let inv = 1.0 / eps;
            let m = inv.round();
            if m >= 1.0 && (inv - m).abs() < 1e-9 * inv {
                step = lcm(step, m as usize);
            }
        }
        step * min_cells.div_ceil(step) * self.refine.max(1)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    let (mut x, mut y) = (a, b);
    while y != 0 {
        (x, y) = (y, x % y);
    }
    a / x * b
}

/// Where `cap(T)` comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacitySettings {
    /// Fixed value; skips the capacity solves.
    pub value: Option<f64>,
    /// Uncertainty of a fixed value.
    pub band: Option<f64>,
    /// Support radii of the truncated solves, in units of `T`.
    pub r_list: Vec<f64>,
    /// Spacing of the capacity grid; by default `h_j/λ_j` at the finest
    /// `ε`, so that `T` is sampled by the same node pattern as the
    /// obstacles.
    pub h: Option<f64>,
}

impl Default for CapacitySettings {
    fn default() -> Self {
        CapacitySettings {
            value: None,
            band: None,
            r_list: vec![4.0, 8.0, 16.0, 32.0, 64.0, 128.0],
            h: None,
        }
    }
}

/// Source of `θ` and `β` in the homogenized problem.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LimitSource {
    /// `θ = c^n·L^n(U)` and `β ≡ 1/L^n(U)` for the cubic lattice with
    /// `r_j = c·ε_j`.
    #[default]
    Analytic,
    /// `θ̂` and the histogram `β̂` of the finest point set.
    Estimated {
        hist_cell: f64,
    },
    Given {
        theta: f64,
    },
}

/// Configuration of an `ε`-sweep on `U = (0,1)^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub epsilon_list: Vec<f64>,
    #[serde(default)]
    pub kernel: FractionalKernel,
    #[serde(default)]
    pub lattice: Lattice,
    /// `c` in `r_j = c·ε_j`.
    #[serde(default = "default_r_convention")]
    pub r_convention: f64,
    /// Reference obstacle, centred at the origin.
    #[serde(default = "default_t")]
    pub t: CompactSetSpec,
    #[serde(default)]
    pub forcing: Option<ForcingSpec>,
    #[serde(default)]
    pub grid: GridPolicy,
    #[serde(default)]
    pub capacity: CapacitySettings,
    #[serde(default)]
    pub limit: LimitSource,
    /// Largest accepted relative gap at the finest `ε`.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// `false` runs the obstacle-free control (and `θ = 0`).
    #[serde(default = "default_true")]
    pub obstacles: bool,
    #[serde(default)]
    pub cg: CgOptions,
    #[serde(default)]
    pub spg: SpgOptions,
    #[serde(default)]
    pub seed: u64,
}

fn default_r_convention() -> f64 {
    0.5
}

fn default_t() -> CompactSetSpec {
    CompactSetSpec::ball(vec![0.0, 0.0], 1.0)
}

fn default_threshold() -> f64 {
    0.10
}

fn default_true() -> bool {
    true
}

impl StudyConfig {
    /// The cubic sweep `ε ∈ {1/4, 1/6, 1/8}` with the default kernel.
    pub fn cubic_default() -> Self {
        StudyConfig {
            epsilon_list: vec![0.25, 1.0 / 6.0, 0.125],
            kernel: FractionalKernel::default(),
            lattice: Lattice::Cubic,
            r_convention: default_r_convention(),
            t: default_t(),
            forcing: None,
            grid: GridPolicy::default(),
            capacity: CapacitySettings::default(),
            limit: LimitSource::Analytic,
            threshold: default_threshold(),
            obstacles: true,
            cg: CgOptions::default(),
            spg: SpgOptions::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.t.validate()?;
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
        if !(self.r_convention > 0.0 && self.r_convention <= 0.5) {
            return Err(Error::Config("r_convention must lie in (0, 1/2]".into()));
        }
        if !(self.grid.nodes_per_lambda >= 2.0) {
            return Err(Error::Config(
                "grid.nodes_per_lambda must be at least 2".into(),
            ));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config("threshold must be positive".into()));
        }
        if self.capacity.value.is_none() && self.capacity.r_list.is_empty() {
            return Err(Error::Config("capacity needs a value or an r_list".into()));
        }
        if let Some(f) = &self.forcing {
            f.validate(n)?;
        }
        if matches!(self.limit, LimitSource::Analytic) && !matches!(self.lattice, Lattice::Cubic) {
            return Err(Error::Config(
                "analytic limit data exist only for the cubic lattice".into(),
            ));
        }
        Ok(())
    }

    fn forcing(&self) -> ForcingSpec {
        self.forcing
            .clone()
            .unwrap_or_else(|| ForcingSpec::default_bump(self.kernel.n))
    }

    pub fn lambda(&self, epsilon: f64) -> f64 {
        obstacle_scale(self.r_convention * epsilon, &self.kernel)
    }

    /// Cells per axis of the common grid.
    pub fn cells(&self) -> usize {
        let finest = self.epsilon_list.last().copied().unwrap_or(1.0);
        self.grid.cells(&self.epsilon_list, self.lambda(finest))
    }
}

/// One row of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub epsilon: f64,
    pub cells: usize,
    pub h: f64,
    pub lambda: f64,
    pub obstacles: usize,
    pub obstacle_nodes: usize,
    pub m_j: f64,
    /// Homogenized minimum on the same grid.
    pub m_inf: f64,
    /// Half-width of `m_inf` induced by the capacity uncertainty.
    pub m_inf_band: f64,
    pub gap_raw: f64,
    /// Relative gap after removing the capacity band.
    pub gap: f64,
    /// `‖u_j − u_∞‖_{L^p} / ‖u_∞‖_{L^p}`.
    pub distance: f64,
    pub iterations_perforated: usize,
    pub iterations_homogenized: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub non_increasing: bool,
    pub finest_gap: f64,
    pub threshold: f64,
    pub note: String,
}

/// Solutions kept in memory for follow-up checks.
#[derive(Clone, Debug)]
pub struct StudyCase {
    pub grid: UniformGrid,
    pub family: Option<ObstacleFamily>,
    pub perforated: Minimum,
    pub homogenized: Minimum,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub config: StudyConfig,
    pub cap_t: f64,
    pub cap_band: f64,
    pub cap_h: Option<f64>,
    /// `(r, C(T,B_r))` of the capacity sweep.
    pub cap_values: Vec<(f64, f64)>,
    pub theta: f64,
    pub rows: Vec<StudyRow>,
    pub verdict: Verdict,
    #[serde(skip)]
    pub cases: Vec<StudyCase>,
}

const THRESHOLD_NOTE: &str = "no convergence rate for the minima is known; \
the threshold on the relative gap is an engineering choice";

/// Capacity of `T` by truncated solves at spacing `h`: the value at the
/// largest support radius and the last increment as its uncertainty.
pub fn capacity_estimate(
    t: &CompactSetSpec,
    k: &FractionalKernel,
    h: f64,
    r_list: &[f64],
    cg: &CgOptions,
) -> Result<(f64, f64, Vec<(f64, f64)>)> {
    let values: Vec<Result<(f64, f64)>> = r_list
        .par_iter()
        .map(|&r| {
            let mut prob = CapacityProblem::new(t.clone(), r, k.clone(), h);
            prob.cg = *cg;
            Ok((r, solve_capacity(&prob)?.value))
        })
        .collect();
    let values: Vec<(f64, f64)> = values.into_iter().collect::<Result<_>>()?;
    let last = values.last().map_or(0.0, |v| v.1);
    let band = if values.len() >= 2 {
        (values[values.len() - 1].1 - values[values.len() - 2].1).abs()
    } else {
        0.0
    };
    Ok((last, band, values))
}

/// Runs the perforated and homogenized problems over the sweep.
///
/// When `out` is given, writes `minima.csv` and `study.json` there; on a
/// failed sub-solve the rows that did finish are written to `study.json`
/// with the error before it is returned.
pub fn gamma_study(cfg: &StudyConfig, out: Option<&Path>) -> Result<ConvergenceStudy> {
    cfg.validate()?;
    let n = cfg.kernel.n;
    let finest = *cfg.epsilon_list.last().unwrap();
    let (cap_t, cap_band, cap_h, cap_values) = if !cfg.obstacles {
        (0.0, 0.0, None, vec![])
    } else if let Some(v) = cfg.capacity.value {
        (v, cfg.capacity.band.unwrap_or(0.0), None, vec![])
    } else {
        let h = cfg
            .capacity
            .h
            .unwrap_or_else(|| 1.0 / (cfg.cells() as f64 * cfg.lambda(finest)));
        let (c, b, vals) = capacity_estimate(&cfg.t, &cfg.kernel, h, &cfg.capacity.r_list, &cfg.cg)
            .map_err(|e| persist_failure(out, cfg, &[], e))?;
        (c, cfg.capacity.band.unwrap_or(b), Some(h), vals)
    };
    let domain = Domain::unit_cube(n);
    let (theta, hist) = if !cfg.obstacles {
        (0.0, None)
    } else {
        match &cfg.limit {
            LimitSource::Analytic => (cfg.r_convention.powi(n as i32), None),
            LimitSource::Given { theta } => (*theta, None),
            LimitSource::Estimated { hist_cell } => {
                let data = generate(&cfg.lattice.at(finest), &domain, cfg.seed)
                    .and_then(|ps| {
                        estimate_limit_data(&ps, &domain, cfg.r_convention * finest, *hist_cell)
                    })
                    .map_err(|e| persist_failure(out, cfg, &[], e))?;
                (data.theta_hat, Some(data))
            }
        }
    };
    let forcing = cfg.forcing();
    let cells = cfg.cells();
    let grid = UniformGrid::unit_cube(n, cells)?;
    let f = forcing.sample(&grid);
    let beta = match &hist {
        Some(d) => beta_from_histogram(d, &grid),
        None => beta_uniform(&grid, 1.0),
    };
    let hom = HomogenizedProblem {
        grid: grid.clone(),
        kernel: cfg.kernel.clone(),
        theta,
        beta,
        cap_t,
        forcing: f.clone(),
        cg: cfg.cg,
        spg: cfg.spg,
    };
    let (mh, perforated): (
        Result<Minimum>,
        Vec<Result<(Option<ObstacleFamily>, Minimum)>>,
    ) = rayon::join(
        || solve_homogenized(&hom),
        || {
            cfg.epsilon_list
                .par_iter()
                .map(|&eps| {
                    let family = if cfg.obstacles {
                        let ps = generate(&cfg.lattice.at(eps), &domain, cfg.seed)?;
                        Some(build_obstacles(
                            &ps,
                            &cfg.t,
                            cfg.r_convention * eps,
                            &grid,
                            &cfg.kernel,
                            eps,
                        )?)
                    } else {
                        None
                    };
                    let perf = PerforatedProblem {
                        grid: grid.clone(),
                        kernel: cfg.kernel.clone(),
                        obstacles: family.clone(),
                        forcing: f.clone(),
                        cg: cfg.cg,
                        spg: cfg.spg,
                    };
                    Ok((family, solve_perforated(&perf)?))
                })
                .collect()
        },
    );

    let results: Vec<Result<(StudyRow, StudyCase)>> = match mh {
        Err(e) => vec![Err(e)],
        Ok(mh) => cfg
            .epsilon_list
            .iter()
            .zip(perforated)
            .map(|(&eps, r)| {
                let (family, mp) = r?;
                // The minimum is concave in capT with derivative θ·∫β|u|^p.
                let band = theta * mh.d_theta / cap_t.max(f64::MIN_POSITIVE) * cap_band;
                let diff = (mp.value - mh.value).abs();
                let scale = mh.value.abs().max(f64::MIN_POSITIVE);
                let p = cfg.kernel.p;
                let (uj, ui) = (&mp.field().values, &mh.field().values);
                let vol = grid.cell_volume();
                let d = tree_sum_by(uj.len(), |i| (uj[i] - ui[i]).abs().powf(p));
                let base = tree_sum_by(ui.len(), |i| ui[i].abs().powf(p));
                let distance = if base > 0.0 {
                    (d / base).powf(1.0 / p)
                } else {
                    (vol * d).powf(1.0 / p)
                };
                let row = StudyRow {
                    epsilon: eps,
                    cells,
                    h: grid.h,
                    lambda: cfg.lambda(eps),
                    obstacles: family.as_ref().map_or(0, |f| f.len()),
                    obstacle_nodes: family.as_ref().map_or(0, |f| f.node_count()),
                    m_j: mp.value,
                    m_inf: mh.value,
                    m_inf_band: band,
                    gap_raw: diff / scale,
                    gap: (diff - band).max(0.0) / scale,
                    distance,
                    iterations_perforated: mp.iterations,
                    iterations_homogenized: mh.iterations,
                };
                Ok((
                    row,
                    StudyCase {
                        grid: grid.clone(),
                        family,
                        perforated: mp,
                        homogenized: mh.clone(),
                    },
                ))
            })
            .collect(),
    };

    let mut rows = Vec::new();
    let mut cases = Vec::new();
    let mut failure = None;
    for r in results {
        match r {
            Ok((row, case)) => {
                rows.push(row);
                cases.push(case);
            }
            Err(e) if failure.is_none() => failure = Some(e),
            Err(_) => {}
        }
    }
    if let Some(e) = failure {
        return Err(persist_failure(out, cfg, &rows, e));
    }

    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let mono = non_increasing(&gaps, 1e-12);
    let finest_gap = *gaps.last().unwrap();
    let study = ConvergenceStudy {
        config: cfg.clone(),
        cap_t,
        cap_band,
        cap_h,
        cap_values,
        theta,
        rows,
        verdict: Verdict {
            pass: mono && finest_gap <= cfg.threshold,
            non_increasing: mono,
            finest_gap,
            threshold: cfg.threshold,
            note: THRESHOLD_NOTE.into(),
        },
        cases,
    };
    if let Some(dir) = out {
        write_study(&study, dir)?;
    }
    Ok(study)
}

/// Writes the finished rows and the error to `study.json`; returns the
/// error, or the I/O error that prevented writing it.
fn persist_failure(out: Option<&Path>, cfg: &StudyConfig, rows: &[StudyRow], e: Error) -> Error {
    let Some(dir) = out else {
        return e;
    };
    let partial = serde_json::json!({
        "config": cfg,
        "rows": rows,
        "error": e.to_string(),
    });
    match std::fs::create_dir_all(dir)
        .map_err(|err| Error::io(dir, err))
        .and_then(|_| write_json(&dir.join("study.json"), &partial))
    {
        Ok(()) => e,
        Err(io) => io,
    }
}

/// `minima.csv` (epsilon,h,m_j,gap,distance plus diagnostics) and
/// `study.json`.
pub fn write_study(study: &ConvergenceStudy, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rows: Vec<Vec<CsvCell>> = study
        .rows
        .iter()
        .map(|r| {
            vec![
                CsvCell::F(r.epsilon),
                CsvCell::F(r.h),
                CsvCell::F(r.m_j),
                CsvCell::F(r.gap),
                CsvCell::F(r.distance),
                CsvCell::F(r.m_inf),
                CsvCell::F(r.m_inf_band),
                CsvCell::F(r.gap_raw),
            ]
        })
        .collect();
    write_csv(
        &dir.join("minima.csv"),
        &[
            "epsilon",
            "h",
            "m_j",
            "gap",
            "distance",
            "m_inf",
            "m_inf_band",
            "gap_raw",
        ],
        &rows,
    )?;
    write_json(&dir.join("study.json"), study)
}

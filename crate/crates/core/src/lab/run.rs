use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::check::run_check;
use super::config::{ControlConfig, DeloneConfig, ErgodicConfig, ExperimentConfig};
use super::plots::emit_plots;
use super::record::RunRecord;
use crate::capacity::capacity_limit_table;
use crate::error::{Error, Result};
use crate::geometry::{
    counting_check, estimate_limit_data, generate, index_sets, DeloneCertificate, PointSet,
};
use crate::homogenization::gamma_study;
use crate::io::{write_csv, write_json, CsvCell};
use crate::stochastic::{
    ergodic_gate, interior_sites, non_ergodic_control, random_delone, random_gamma_study,
    RandomStudyConfig, StationaryProcess,
};

/// Environment variable consulted when no thread count is given.
pub const THREADS_ENV: &str = "FRACLAB_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Delone,
    Capacity,
    Homogenize,
    Random,
    Check,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Delone => "delone",
            Subcommand::Capacity => "capacity",
            Subcommand::Homogenize => "homogenize",
            Subcommand::Random => "random",
            Subcommand::Check => "check",
        }
    }
}

/// Command-line overrides; `None` falls back to the config file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    /// Skip the SVG and gnuplot outputs.
    pub no_plots: bool,
}

/// Process exit status for a finished or failed run.
pub fn exit_code(result: &Result<RunRecord>) -> i32 {
    match result {
        Ok(r) if r.pass() => 0,
        Ok(_) => 1,
        Err(e) if e.is_numerical() => 3,
        Err(Error::DegenerateSet(_)) | Err(Error::EmptySet) => 3,
        Err(_) => 2,
    }
}

/// Thread count: explicit value, then the config, then `FRACLAB_THREADS`,
/// then the number of available cores.
pub fn resolve_threads(cli: Option<usize>, config: Option<usize>) -> Result<usize> {
    if let Some(t) = cli.or(config) {
        return if t == 0 {
            Err(Error::Config("threads must be positive".into()))
        } else {
            Ok(t)
        };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(t),
            _ => Err(Error::Config(format!(
                "{THREADS_ENV}={v:?} is not a positive integer"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn missing(section: &str) -> Error {
    Error::Config(format!("config has no [{section}] table"))
}

/// Applies the global keys and overrides, and checks that the subcommand's
/// table is present, before any computation.
pub fn resolve(
    cmd: Subcommand,
    mut cfg: ExperimentConfig,
    opts: &RunOptions,
) -> Result<ExperimentConfig> {
    let seed = opts.seed.or(cfg.seed).unwrap_or(0);
    cfg.seed = Some(seed);
    if let Some(o) = &opts.out {
        cfg.output_dir = Some(o.clone());
    }
    let tol = cfg.tolerances.clone();
    match cmd {
        Subcommand::Delone => {
            let d = cfg.delone.as_ref().ok_or_else(|| missing("delone"))?;
            if d.generator.is_some() == d.random.is_some() {
                return Err(Error::Config(
                    "[delone] needs exactly one of generator and random".into(),
                ));
            }
        }
        Subcommand::Capacity => {
            let c = cfg.capacity.as_mut().ok_or_else(|| missing("capacity"))?;
            if let Some(t) = tol.cg_tol {
                c.cg.tol = t;
            }
        }
        Subcommand::Homogenize => {
            let s = cfg
                .homogenize
                .as_mut()
                .ok_or_else(|| missing("homogenize"))?;
            s.seed = seed;
            if let Some(t) = tol.cg_tol {
                s.cg.tol = t;
            }
            if let Some(t) = tol.spg_tol {
                s.spg.tol_decrease = t;
            }
            if let Some(t) = tol.gap_threshold {
                s.threshold = t;
            }
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Subcommand::Random => {
            let s = cfg.random.as_mut().ok_or_else(|| missing("random"))?;
            if opts.seed.is_some() || s.seeds.is_empty() {
                let count = s.seeds.len().max(3) as u64;
                s.seeds = (seed..seed + count).collect();
            }
            if let Some(t) = tol.cg_tol {
                s.cg.tol = t;
            }
            if let Some(t) = tol.spg_tol {
                s.spg.tol_decrease = t;
            }
            s.validate()?;
        }
        Subcommand::Check => {
            cfg.check.get_or_insert_with(Default::default);
        }
    }
    Ok(cfg)
}

/// Runs a subcommand inside a dedicated thread pool, writes its artifacts
/// and `run.json` to the output directory, and returns the record.
///
/// Errors raised after the output directory exists are also recorded in
/// `run.json` before they are returned.
pub fn run(cmd: Subcommand, cfg: ExperimentConfig, opts: &RunOptions) -> Result<RunRecord> {
    let cfg = resolve(cmd, cfg, opts)?;
    let threads = resolve_threads(opts.threads, cfg.threads)?;
    let seed = cfg.seed.unwrap_or(0);
    let out = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("fraclab-{}", cmd.name())));
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let snapshot = serde_json::to_value(&cfg).map_err(|e| Error::Format(e.to_string()))?;
    let mut record = RunRecord::new(cmd.name(), seed, threads, snapshot);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let result = pool.install(|| dispatch(cmd, &cfg, &out, &mut record));
    let result = result.and_then(|_| {
        if opts.no_plots {
            Ok(())
        } else {
            record.timed("plots", |r| emit_plots(&out, r))
        }
    });
    if let Err(e) = &result {
        record.error = Some(e.to_string());
    }
    record.write(&out)?;
    result.map(|_| record)
}

fn dispatch(
    cmd: Subcommand,
    cfg: &ExperimentConfig,
    out: &Path,
    record: &mut RunRecord,
) -> Result<()> {
    let seed = cfg.seed.unwrap_or(0);
    match cmd {
        Subcommand::Delone => record.timed("delone", |r| {
            delone(cfg.delone.as_ref().unwrap(), seed, out, r)
        }),
        Subcommand::Capacity => record.timed("capacity", |r| {
            let table = capacity_limit_table(cfg.capacity.as_ref().unwrap())?;
            table.write_csv(&out.join("capacity.csv"))?;
            write_json(&out.join("capacity.json"), &table)?;
            r.artifact("capacity.csv");
            r.artifact("capacity.json");
            r.verdict(
                "capacity.monotone",
                table.monotone,
                format!("C(T,B_r) at the largest r: {:.17e}", table.cap_estimate),
            );
            r.verdict(
                "capacity.cauchy",
                table.increments_shrink,
                format!("increments {:?}", table.increments),
            );
            Ok(())
        }),
        Subcommand::Homogenize => record.timed("homogenize", |r| {
            let study = gamma_study(cfg.homogenize.as_ref().unwrap(), Some(out))?;
            r.artifact("minima.csv");
            r.artifact("study.json");
            if let Some(case) = study.cases.last() {
                case.perforated
                    .field()
                    .save_binary(&out.join("u_perforated.bin"))?;
                case.homogenized
                    .field()
                    .save_binary(&out.join("u_homogenized.bin"))?;
                r.artifact("u_perforated.bin");
                r.artifact("u_homogenized.bin");
            }
            r.verdict(
                "homogenize.non_increasing",
                study.verdict.non_increasing,
                format!(
                    "gaps {:?}",
                    study.rows.iter().map(|x| x.gap).collect::<Vec<_>>()
                ),
            );
            r.verdict(
                "homogenize.finest_gap",
                study.verdict.finest_gap <= study.verdict.threshold,
                format!(
                    "{:.17e} against {}",
                    study.verdict.finest_gap, study.verdict.threshold
                ),
            );
            r.notes.push(study.verdict.note.clone());
            Ok(())
        }),
        Subcommand::Random => random(cfg, seed, out, record),
        Subcommand::Check => record.timed("check", |r| {
            run_check(r, &cfg.check.as_ref().unwrap().skip, seed)?;
            write_json(&out.join("check.json"), &r.verdicts)?;
            r.artifact("check.json");
            Ok(())
        }),
    }
}

fn delone(d: &DeloneConfig, seed: u64, out: &Path, r: &mut RunRecord) -> Result<()> {
    let n = d.domain.dim();
    let mut density: Option<Box<dyn Fn(&[f64]) -> f64>> = None;
    let (ps, a_priori): (PointSet, f64) = match (&d.generator, &d.random) {
        (Some(kind), _) => {
            let k = kind.clone();
            density = Some(Box::new(move |x| k.limit_density(x)));
            (generate(kind, &d.domain, seed)?, kind.radii(n).0)
        }
        (_, Some(rd)) => {
            let (ps, rep) = random_delone(&rd.kind, rd.epsilon, &d.domain, seed, &rd.shifts)?;
            if let Some(exact) = rep.exact {
                r.verdict(
                    "delone.statlatt",
                    exact,
                    format!("{} shifts regenerated", rep.shifts_checked.len()),
                );
            }
            write_json(&out.join("stationarity.json"), &rep)?;
            r.artifact("stationarity.json");
            (ps, rd.kind.packing_bound(n, rd.epsilon))
        }
        _ => unreachable!("checked in resolve"),
    };
    ps.write_csv(&out.join("points.csv"))?;
    r.artifact("points.csv");
    let cert = DeloneCertificate::compute(&ps, &d.domain, None)?;
    let idx = index_sets(&ps, &d.domain, &cert, cert.r_packing / 4.0)?;
    let counting = counting_check(&ps, &d.domain, &idx, &cert, d.m_max)?;
    r.verdict(
        "delone.counting",
        counting.holds(),
        format!("violations {:?}", counting.violations()),
    );
    let r_user = d.r_user.unwrap_or(a_priori.min(cert.r_packing));
    let data = estimate_limit_data(&ps, &d.domain, r_user, d.hist_cell)?;
    write_json(&out.join("limit.json"), &data)?;
    write_json(
        &out.join("delone.json"),
        &serde_json::json!({ "certificate": cert, "counting": counting, "points": ps.len() }),
    )?;
    r.artifact("limit.json");
    r.artifact("delone.json");
    r.notes.extend(data.warnings.iter().cloned());
    if let Some(rho) = density {
        let err = data.l1_error(&d.domain, rho, 4);
        r.notes.push(format!(
            "L1 distance of beta_hat to the limit density: {err:.6e}"
        ));
    }
    Ok(())
}

fn random(cfg: &ExperimentConfig, seed: u64, out: &Path, record: &mut RunRecord) -> Result<()> {
    let rc = cfg.random.as_ref().unwrap();
    record.timed("random_study", |r| {
        let study = random_gamma_study(rc, Some(out))?;
        r.artifact("random_minima.csv");
        r.artifact("random_study.json");
        for s in &rc.seeds {
            r.artifact(&format!("seed_{s}.json"));
        }
        r.verdict(
            "random.separation",
            study.separation.holds(),
            format!("symbolic asymptotics {}", study.separation.symbolic),
        );
        r.verdict(
            "random.deterministic_limit",
            study.deterministic,
            format!(
                "spread {:.6e} against gap {:.6e}",
                study.finest_spread, study.finest_gap
            ),
        );
        Ok(())
    })?;
    if let Some(e) = &cfg.ergodic {
        record.timed("ergodic", |r| ergodic(rc, e, seed, out, r))?;
    }
    if let Some(c) = &cfg.control {
        record.timed("control", |r| control(rc, c, seed, out, r))?;
    }
    Ok(())
}

fn ergodic(
    rc: &RandomStudyConfig,
    e: &ErgodicConfig,
    seed: u64,
    out: &Path,
    r: &mut RunRecord,
) -> Result<()> {
    let k = &rc.kernel;
    let template = StationaryProcess::new(seed, rc.law.clone(), k.n, k.capacity_exponent(), 1.0)?;
    let seeds: Vec<u64> = (seed..seed + e.seeds as u64).collect();
    let gate = ergodic_gate(&template, &seeds, &e.window, &e.epsilon_list)?;
    write_json(&out.join("ergodic.json"), &gate)?;
    r.artifact("ergodic.json");
    r.verdict(
        "random.ergodic_gate",
        gate.pass,
        format!("{} of {} seeds outside 4σ/√N", gate.failures, seeds.len()),
    );
    // Running mean over the finest sites of the first seed.
    let finest = e.epsilon_list.iter().cloned().fold(f64::INFINITY, f64::min);
    let sites = interior_sites(&e.window, finest)?;
    let expected = template.expected();
    let mut sum = 0.0;
    let mut rows = Vec::new();
    let mut next = 1usize;
    for (i, s) in sites.iter().enumerate() {
        sum += template.gamma(*s);
        if i + 1 == next || i + 1 == sites.len() {
            rows.push(vec![
                CsvCell::U((i + 1) as u64),
                CsvCell::F(sum / (i + 1) as f64),
                CsvCell::F(expected),
            ]);
            next = (next as f64 * 1.25).ceil() as usize;
        }
    }
    write_csv(
        &out.join("ergodic_running_mean.csv"),
        &["n", "mean", "expected"],
        &rows,
    )?;
    r.artifact("ergodic_running_mean.csv");
    Ok(())
}

fn control(
    rc: &RandomStudyConfig,
    c: &ControlConfig,
    seed: u64,
    out: &Path,
    r: &mut RunRecord,
) -> Result<()> {
    let cfg = RandomStudyConfig {
        law: c.law.clone(),
        seeds: (seed..seed + c.seeds as u64).collect(),
        ..rc.clone()
    };
    let ctl = non_ergodic_control(&cfg)?;
    write_json(&out.join("control.json"), &ctl)?;
    r.artifact("control.json");
    r.verdict(
        "random.control_bimodal",
        ctl.bimodal,
        format!("split {:.6e}, within {:.6e}", ctl.split_gap, ctl.within),
    );
    Ok(())
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::record::RunRecord;
use crate::capacity::{
    capacity_limit_table, potential_ordering_check, CapacityProblem, CompactSetSpec, TableSpec,
};
use crate::energy::{
    adams_bound_check, apply_operator, ball_mask, gagliardo_energy, FractionalKernel, Method,
    PairRegion, ScalarField, UniformGrid,
};
use crate::error::Result;
use crate::geometry::{
    counting_check, estimate_limit_data, generate, index_sets, DeloneCertificate, Diffeomorphism,
    Domain, GeneratorKind,
};
use crate::homogenization::{
    bump_profile, slicing_select, solve_perforated, ForcingSpec, PerforatedProblem, ShellGeometry,
};
use crate::stochastic::{
    ergodic_gate, random_delone, separation_check, DeltaRule, RadiusLaw, RandomDeloneKind,
    RandomField, StationaryProcess,
};

pub const SUITES: [&str; 5] = [
    "geometry",
    "energy",
    "capacity",
    "homogenization",
    "stochastic",
];

/// Runs the small-scale invariant suites, one verdict per invariant.
pub fn run_check(record: &mut RunRecord, skip: &[String], seed: u64) -> Result<()> {
    for suite in SUITES {
        if skip.iter().any(|s| s == suite) {
            record.notes.push(format!("suite {suite} skipped"));
            continue;
        }
        record.timed(suite, |r| match suite {
            "geometry" => geometry(r, seed),
            "energy" => energy(r, seed),
            "capacity" => capacity(r),
            "homogenization" => homogenization(r, seed),
            _ => stochastic(r, seed),
        })?;
    }
    Ok(())
}

fn geometry(r: &mut RunRecord, seed: u64) -> Result<()> {
    let u = Domain::unit_cube(2);
    let eps = 0.05;
    let ps = generate(&GeneratorKind::Cubic { epsilon: eps }, &u, seed)?;
    let cert = DeloneCertificate::compute(&ps, &u, None)?;
    let big = 2f64.sqrt() * eps / 2.0;
    r.verdict(
        "geometry.cubic_radii",
        (cert.r_packing - eps / 2.0).abs() < 1e-12
            && (cert.r_covering - big).abs() <= cert.probe_spacing * 2f64.sqrt(),
        format!("r = {:.17e}, R = {:.17e}", cert.r_packing, cert.r_covering),
    );
    let kinds = [
        GeneratorKind::Cubic { epsilon: 0.08 },
        GeneratorKind::DiffeoOutside {
            phi: Diffeomorphism::default(),
            epsilon: 0.08,
        },
        GeneratorKind::DiffeoInside {
            phi: Diffeomorphism::default(),
            epsilon: 0.08,
        },
    ];
    for kind in &kinds {
        let ps = generate(kind, &u, seed)?;
        let cert = DeloneCertificate::compute(&ps, &u, None)?;
        let idx = index_sets(&ps, &u, &cert, cert.r_packing / 4.0)?;
        let rep = counting_check(&ps, &u, &idx, &cert, 3)?;
        r.verdict(
            "geometry.counting",
            rep.holds(),
            format!("{kind:?}: violations {:?}", rep.violations()),
        );
    }
    let data = estimate_limit_data(&ps, &u, eps / 2.0, 0.25)?;
    r.verdict(
        "geometry.theta_hat",
        (data.theta_hat - 0.25).abs() <= 3.0 * eps,
        format!("theta_hat = {:.17e}", data.theta_hat),
    );
    Ok(())
}

fn energy(r: &mut RunRecord, seed: u64) -> Result<()> {
    let k = FractionalKernel::default();
    let grid = UniformGrid::unit_cube(2, 24)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..grid.len()).map(|_| rng.random::<f64>() - 0.5).collect();
    let u = ScalarField::new(grid.clone(), values, false)?;
    let a = apply_operator(&u, &k, Method::Fft)?;
    let b = apply_operator(&u, &k, Method::Direct)?;
    let num: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.values.iter().map(|y| y * y).sum::<f64>().sqrt();
    r.verdict(
        "energy.fft_vs_direct",
        num / den <= 1e-10,
        format!("relative error {:.3e}", num / den),
    );

    // E(λu) = λ^p E(u).
    let e1 = gagliardo_energy(&u, &k, &PairRegion::full(grid.len()))?;
    let mut v = u.clone();
    v.values.iter_mut().for_each(|x| *x *= 3.0);
    let e3 = gagliardo_energy(&v, &k, &PairRegion::full(grid.len()))?;
    r.verdict(
        "energy.homogeneity",
        (e3 / e1 - 9.0).abs() < 1e-10,
        format!("E(3u)/E(u) = {:.17e}", e3 / e1),
    );

    let g = UniformGrid::unit_cube(2, 32)?;
    let o = ball_mask(&g, &[0.3, 0.4], 0.2);
    let mut ok = true;
    for (z, nu) in [([0.3, 0.4], 1.2), ([0.9, 0.9], 3.5)] {
        let rep = adams_bound_check(&g, &o, &z, nu)?;
        ok &= rep.holds;
    }
    r.verdict("energy.adams", ok, "measure and distance regimes");
    Ok(())
}

fn capacity(r: &mut RunRecord) -> Result<()> {
    let k = FractionalKernel::default();
    let t = CompactSetSpec::ball(vec![0.0, 0.0], 0.5);
    let f = CompactSetSpec::ball(vec![0.0, 0.0], 1.0);
    let rep = potential_ordering_check(
        &t,
        &f,
        &CapacityProblem::new(t.clone(), 3.0, k.clone(), 0.25),
    )?;
    r.verdict(
        "capacity.ordering",
        rep.holds,
        format!(
            "order {:.3e}, box {:.3e}",
            rep.worst_order_violation, rep.worst_box_violation
        ),
    );
    let table = capacity_limit_table(&TableSpec {
        t: f,
        r_list: vec![2.0, 4.0, 8.0],
        r_ratio: 2.0,
        ratio_sweep: vec![2.0, 4.0, 8.0],
        kernel: k,
        h: 0.25,
        cg: Default::default(),
    })?;
    r.verdict(
        "capacity.monotone",
        table.monotone && table.increments_shrink,
        format!("increments {:?}", table.increments),
    );
    Ok(())
}

fn homogenization(r: &mut RunRecord, seed: u64) -> Result<()> {
    let k = FractionalKernel::isotropic(2, 0.51, 2.0)?;
    let grid = UniformGrid::unit_cube(2, 144)?;
    let forcing = ForcingSpec::default_bump(2).sample(&grid);
    let free = solve_perforated(&PerforatedProblem {
        grid: grid.clone(),
        kernel: k.clone(),
        obstacles: None,
        forcing: forcing.clone(),
        cg: Default::default(),
        spg: Default::default(),
    })?;
    let ps = generate(
        &GeneratorKind::Cubic { epsilon: 0.25 },
        &Domain::unit_cube(2),
        seed,
    )?;
    let fam = crate::homogenization::build_obstacles(
        &ps,
        &CompactSetSpec::ball(vec![0.0, 0.0], 1.0),
        0.125,
        &grid,
        &k,
        0.25,
    )?;
    let perf = solve_perforated(&PerforatedProblem {
        grid: grid.clone(),
        kernel: k.clone(),
        obstacles: Some(fam),
        forcing,
        cg: Default::default(),
        spg: Default::default(),
    })?;
    r.verdict(
        "homogenization.obstacle_monotone",
        perf.value >= free.value,
        format!("m_free = {:.17e}, m_perf = {:.17e}", free.value, perf.value),
    );
    let u = ScalarField::from_fn(grid.clone(), false, |x| {
        bump_profile(&x[..2], &[0.5, 0.5], 0.35)
    });
    let rep = slicing_select(
        &u,
        &k,
        &[[0.5, 0.5, 0.0]],
        0.4,
        2,
        3,
        ShellGeometry::Geometric,
    )?;
    r.verdict(
        "homogenization.pigeonhole",
        rep.holds,
        format!("selected {} of 3", rep.h_selected),
    );
    Ok(())
}

fn stochastic(r: &mut RunRecord, seed: u64) -> Result<()> {
    let k = FractionalKernel::default();
    let p = StationaryProcess::new(seed, RadiusLaw::default(), 2, k.capacity_exponent(), 1.0)?;
    let mut exact = true;
    for i in -20..20 {
        for kk in [[1, 0, 0], [-7, 3, 0], [100, -50, 0]] {
            let site = [i, 2 * i, 0];
            let moved = [i + kk[0], 2 * i + kk[1], 0];
            exact &= p.gamma(moved).to_bits() == p.shifted(kk).gamma(site).to_bits();
        }
    }
    r.verdict("stochastic.statgamma", exact, "γ(i+k, ω) = γ(i, τ_k ω)");
    let kinds = [
        RandomDeloneKind::PerturbedLattice { m: 0.5 },
        RandomDeloneKind::StochasticDiffeoInside {
            field: RandomField::default(),
        },
    ];
    for kind in &kinds {
        let (_, rep) = random_delone(
            kind,
            0.1,
            &Domain::unit_cube(2),
            seed,
            &[[1, 0, 0], [4, -2, 0]],
        )?;
        r.verdict(
            "stochastic.statlatt",
            rep.exact == Some(true),
            format!("{kind:?}"),
        );
    }
    let gate = ergodic_gate(
        &p,
        &[seed, seed + 1, seed + 2, seed + 3, seed + 4],
        &Domain::unit_cube(2),
        &[1.0 / 101.0],
    )?;
    r.verdict(
        "stochastic.ergodic_gate",
        gate.pass,
        format!("{} of 5 seeds failed", gate.failures),
    );
    let sep = separation_check(
        &p,
        &CompactSetSpec::ball(vec![0.0, 0.0], 1.0),
        &k,
        &[0.25, 1.0 / 6.0, 0.125],
        &DeltaRule::default(),
        &Domain::unit_cube(2),
    )?;
    r.verdict(
        "stochastic.separation",
        sep.holds(),
        format!("symbolic {}", sep.symbolic),
    );
    Ok(())
}

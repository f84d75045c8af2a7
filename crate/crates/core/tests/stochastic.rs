use fraclab::capacity::CompactSetSpec;
use fraclab::energy::FractionalKernel;
use fraclab::error::Error;
use fraclab::geometry::Domain;
use fraclab::homogenization::CapacitySettings;
use fraclab::stochastic::*;
use proptest::prelude::*;

fn default_process(seed: u64) -> StationaryProcess {
    let k = FractionalKernel::default();
    StationaryProcess::new(seed, RadiusLaw::default(), 2, k.capacity_exponent(), 1.0).unwrap()
}

fn unit_ball() -> CompactSetSpec {
    CompactSetSpec::ball(vec![0.0, 0.0], 1.0)
}

fn light_study() -> RandomStudyConfig {
    RandomStudyConfig {
        epsilon_list: vec![1.0 / 3.0, 0.25],
        kernel: FractionalKernel::isotropic(2, 0.51, 2.0).unwrap(),
        capacity: CapacitySettings {
            r_list: vec![4.0, 8.0],
            ..Default::default()
        },
        ..RandomStudyConfig::uniform_default()
    }
}

fn coin_law() -> RadiusLaw {
    RadiusLaw::CoinMixture {
        heads: Box::new(RadiusLaw::PointMass { rho: 0.5 }),
        tails: Box::new(RadiusLaw::PointMass { rho: 1.0 }),
        p_heads: 0.5,
    }
}

#[test]
fn uniform_moment_matches_quadrature() {
    let law = RadiusLaw::Uniform { min: 0.5, max: 1.0 };
    for q in [0.9, 1.0, 1.8, 2.5] {
        // Composite Simpson on [0.5, 1].
        let m = 2000;
        let h = 0.5 / m as f64;
        let mut s = 0.5f64.powf(q) + 1.0;
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * (0.5 + i as f64 * h).powf(q);
        }
        let quad = s * h / 3.0 / 0.5;
        assert!((law.moment(q) - quad).abs() < 1e-12, "q = {q}");
    }
}

#[test]
fn point_mass_mean_is_exact() {
    let p = StationaryProcess::new(4, RadiusLaw::PointMass { rho: 0.75 }, 2, 0.9, 2.0).unwrap();
    let t = ergodic_average(&p, &Domain::unit_cube(2), &[0.1, 0.05]).unwrap();
    for r in &t.rows {
        assert!((r.mean - p.expected()).abs() <= 1e-15 * p.expected());
        assert_eq!(r.sigma, 0.0);
        assert!(r.pass);
    }
}

#[test]
fn gamma_bounded_by_gamma0() {
    let p = default_process(11);
    let g0 = p.gamma0();
    for i in -30..30 {
        for j in -30..30 {
            assert!(p.gamma([i, j, 0]) <= g0);
        }
    }
}

#[test]
fn ergodic_gate_at_ten_thousand_sites() {
    let eps = 1.0 / 101.0;
    assert_eq!(
        interior_sites(&Domain::unit_cube(2), eps).unwrap().len(),
        10_000
    );
    let gate = ergodic_gate(
        &default_process(0),
        &[1, 2, 3, 4, 5],
        &Domain::unit_cube(2),
        &[eps],
    )
    .unwrap();
    assert!(gate.pass, "{} failures", gate.failures);
    for t in &gate.tables {
        assert_eq!(t.rows[0].sites, 10_000);
        assert_eq!(t.rows[0].windows.len(), 5);
    }
}

#[test]
fn disjoint_windows_agree() {
    let a = Domain::rect(vec![0.0, 0.0], vec![0.5, 1.0]).unwrap();
    let b = Domain::rect(vec![0.5, 0.0], vec![1.0, 1.0]).unwrap();
    let w = window_agreement(&default_process(9), &a, &b, 0.01).unwrap();
    assert!(w.agree);
    assert!(w.additive);
}

#[test]
fn coin_is_fair_over_seeds() {
    let heads = (0..2000u64).filter(|&s| coin_law().coin(s)).count();
    // 4.5 standard deviations of a fair binomial.
    assert!(
        (heads as f64 - 1000.0).abs() < 4.5 * 500f64.sqrt(),
        "{heads} heads"
    );
}

#[test]
fn conditional_moment_follows_the_coin() {
    let law = coin_law();
    for seed in 0..20 {
        let want = if law.coin(seed) { 0.5f64 } else { 1.0 }.powf(0.9);
        assert_eq!(law.invariant_moment(0.9, seed), want);
    }
    assert!((law.moment(0.9) - 0.5 * (0.5f64.powf(0.9) + 1.0)).abs() < 1e-15);
}

#[test]
fn separation_with_delta_equal_to_epsilon_is_not_small() {
    let k = FractionalKernel::default();
    let rep = separation_check(
        &default_process(1),
        &unit_ball(),
        &k,
        &[0.25, 1.0 / 6.0, 0.125],
        &DeltaRule { exponent: 1.0 },
        &Domain::unit_cube(2),
    )
    .unwrap();
    assert!(!rep.o_small);
    assert!(!rep.symbolic);
    assert!(rep.rows.iter().all(|r| (r.small_ratio - 1.0).abs() < 1e-15));
    assert!(!rep.holds());
}

#[test]
fn separation_with_delta_squared_is_big_enough() {
    let k = FractionalKernel::default();
    // ε^{1+n/(n−sp)} = ε^{3.22} is O(ε²).
    let rep = separation_check(
        &default_process(1),
        &unit_ball(),
        &k,
        &[0.25, 1.0 / 6.0, 0.125],
        &DeltaRule { exponent: 2.0 },
        &Domain::unit_cube(2),
    )
    .unwrap();
    assert!(rep.o_small);
    assert!(rep.o_big);
    assert!(rep.symbolic);
}

#[test]
fn default_separation_holds() {
    let k = FractionalKernel::default();
    let rep = separation_check(
        &default_process(2),
        &unit_ball(),
        &k,
        &[0.25, 1.0 / 6.0, 0.125],
        &DeltaRule::default(),
        &Domain::unit_cube(2),
    )
    .unwrap();
    assert!(rep.holds(), "{rep:?}");
    assert!(rep.symbolic);
}

#[test]
fn capacity_scaling_within_three_percent() {
    let k = FractionalKernel::default();
    let s = capacity_scaling_check(
        &default_process(3),
        &unit_ball(),
        &k,
        0.125,
        &[[1, 1, 0], [2, 3, 0]],
        4.0,
        16.0,
    )
    .unwrap();
    for row in &s {
        assert!((row.ratio - 1.0).abs() <= 0.03, "{row:?}");
    }
}

#[test]
fn obstacles_scale_with_lambda() {
    let k = FractionalKernel::default();
    let fam = random_obstacles(
        &default_process(5),
        &unit_ball(),
        &k,
        0.125,
        &DeltaRule::default(),
        &Domain::unit_cube(2),
    )
    .unwrap();
    assert!((fam.lambda - 0.125f64.powf(2.0 / 0.9)).abs() < 1e-15);
    assert!(fam
        .centers
        .iter()
        .zip(&fam.sites)
        .all(|(c, s)| c[0] == s[0] as f64 * 0.125));
    assert!(fam.rho.iter().all(|r| (0.5..=1.0).contains(r)));
}

#[test]
fn coarse_grid_is_rejected() {
    let k = FractionalKernel::default();
    let fam = random_obstacles(
        &default_process(5),
        &unit_ball(),
        &k,
        0.125,
        &DeltaRule::default(),
        &Domain::unit_cube(2),
    )
    .unwrap();
    let grid = fraclab::energy::UniformGrid::unit_cube(2, 96).unwrap();
    assert!(matches!(
        fam.on_grid(&grid, 0.5),
        Err(Error::UnderResolved(_))
    ));
}

#[test]
fn zero_perturbation_is_the_cubic_lattice() {
    let eps = 0.1;
    let (ps, rep) = random_delone(
        &RandomDeloneKind::PerturbedLattice { m: 0.0 },
        eps,
        &Domain::unit_cube(2),
        3,
        &[[2, 1, 0]],
    )
    .unwrap();
    let sites = ps.sites.as_ref().unwrap();
    for (x, s) in ps.points.iter().zip(sites) {
        assert_eq!(x[0], s[0] as f64 * eps);
        assert_eq!(x[1], s[1] as f64 * eps);
    }
    assert_eq!(rep.exact, Some(true));
}

#[test]
fn stationarity_of_lattices_is_bit_exact() {
    let kinds = [
        RandomDeloneKind::PerturbedLattice { m: 0.6 },
        RandomDeloneKind::StochasticDiffeoInside {
            field: RandomField::default(),
        },
    ];
    for kind in &kinds {
        let (_, rep) = random_delone(
            kind,
            0.05,
            &Domain::unit_cube(2),
            17,
            &[[1, 0, 0], [-3, 5, 0], [40, 40, 0]],
        )
        .unwrap();
        assert_eq!(rep.exact, Some(true), "{kind:?}");
        assert_eq!(rep.shifts_checked.len(), 3);
    }
}

#[test]
fn outside_diffeo_has_no_lattice_identity() {
    let kind = RandomDeloneKind::StochasticDiffeoOutside {
        field: RandomField::default(),
    };
    let (_, rep) = random_delone(&kind, 0.05, &Domain::unit_cube(2), 2, &[[1, 0, 0]]).unwrap();
    assert_eq!(rep.exact, None);
    assert!(rep.shifts_checked.is_empty());
}

#[test]
fn perturbation_bound_must_stay_below_one() {
    let r = random_delone(
        &RandomDeloneKind::PerturbedLattice { m: 1.0 },
        0.1,
        &Domain::unit_cube(2),
        0,
        &[],
    );
    assert!(matches!(r, Err(Error::InvalidParameter(_))));
    let big = RandomField {
        amp: 0.2,
        support: 1.5,
    };
    assert!(big.validate(2).is_err());
}

#[test]
fn identity_inside_gives_uniform_beta_trend() {
    let kind = RandomDeloneKind::StochasticDiffeoInside {
        field: RandomField {
            amp: 0.0,
            support: 1.5,
        },
    };
    let errs: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&e| {
            random_delone(&kind, e, &Domain::unit_cube(2), 1, &[])
                .unwrap()
                .1
                .beta_l1_uniform
        })
        .collect();
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
}

#[test]
fn theta_hat_is_constant_across_seeds() {
    let kind = RandomDeloneKind::PerturbedLattice { m: 0.4 };
    let c = limit_constancy(&kind, 0.02, &Domain::unit_cube(2), &[1, 2, 3]).unwrap();
    let mean = c.theta_hat.iter().sum::<f64>() / 3.0;
    assert!(c.spread <= 0.05 * mean, "{c:?}");
}

#[test]
fn point_mass_study_has_no_spread() {
    let mut cfg = light_study();
    cfg.law = RadiusLaw::PointMass { rho: 0.75 };
    let st = random_gamma_study(&cfg, None).unwrap();
    assert_eq!(st.finest_spread, 0.0);
    let first = &st.records[0].rows;
    for rec in &st.records[1..] {
        for (a, b) in rec.rows.iter().zip(first) {
            assert_eq!(a.m_j.to_bits(), b.m_j.to_bits());
        }
    }
}

#[test]
fn random_study_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = light_study();
    let st = random_gamma_study(&cfg, Some(dir.path())).unwrap();
    assert_eq!(st.records.len(), 3);
    assert!(st.records.iter().all(|r| r.rows.len() == 2));
    assert!(st
        .records
        .iter()
        .flat_map(|r| &r.rows)
        .all(|r| r.gamma_over_gamma0 <= 1.0 && r.m_j < 0.0));
    let csv = std::fs::read_to_string(dir.path().join("random_minima.csv")).unwrap();
    assert!(csv.starts_with("seed,epsilon,m_j,gap\n"));
    assert_eq!(csv.lines().count(), 7);
    for s in &cfg.seeds {
        let rec: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join(format!("seed_{s}.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(rec["seed"], *s);
        assert_eq!(rec["law"]["kind"], "uniform");
    }
    assert!(dir.path().join("random_study.json").exists());
}

#[test]
fn control_requires_a_coin() {
    assert!(matches!(
        non_ergodic_control(&light_study()),
        Err(Error::Config(_))
    ));
}

#[test]
fn control_splits_by_coin() {
    let mut cfg = light_study();
    cfg.law = coin_law();
    cfg.seeds = (0..16).collect();
    let heads = cfg.seeds.iter().filter(|&&s| cfg.law.coin(s)).count();
    assert!(heads > 0 && heads < 16);
    let c = non_ergodic_control(&cfg).unwrap();
    assert!(c.bimodal, "{c:?}");
    // Larger obstacles raise the minimum.
    for r in &c.rows {
        let other = c.rows.iter().find(|o| o.heads != r.heads).unwrap();
        assert_eq!(r.heads, r.m_j < other.m_j);
    }
}

#[test]
fn unknown_config_keys_are_rejected() {
    let text = r#"{"epsilon_list":[0.25],"seeds":[1],"bogus":1}"#;
    assert!(serde_json::from_str::<RandomStudyConfig>(text).is_err());
    let ok = r#"{"epsilon_list":[0.25],"seeds":[1],"law":{"kind":"point_mass","rho":0.5}}"#;
    let cfg: RandomStudyConfig = serde_json::from_str(ok).unwrap();
    assert_eq!(cfg.law, RadiusLaw::PointMass { rho: 0.5 });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shifted_process_reads_the_shifted_site(seed in 0u64..1000, i in -500i64..500, j in -500i64..500, k0 in -500i64..500, k1 in -500i64..500) {
        let p = default_process(seed);
        let lhs = p.gamma([i + k0, j + k1, 0]);
        let rhs = p.shifted([k0, k1, 0]).gamma([i, j, 0]);
        prop_assert_eq!(lhs.to_bits(), rhs.to_bits());
    }

    #[test]
    fn perturbed_lattice_shift_identity(seed in 0u64..1000, k0 in -50i64..50, k1 in -50i64..50, m in 0.0f64..0.9) {
        let (_, rep) = random_delone(
            &RandomDeloneKind::PerturbedLattice { m },
            0.1,
            &Domain::unit_cube(2),
            seed,
            &[[k0, k1, 0]],
        )
        .unwrap();
        prop_assert_eq!(rep.exact, Some(true));
    }
}

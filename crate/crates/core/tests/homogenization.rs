use fraclab::capacity::CompactSetSpec;
use fraclab::energy::{
    column_energies, gagliardo_energy, FractionalKernel, NodeMask, PairRegion, ScalarField,
    UniformGrid,
};
use fraclab::error::Error;
use fraclab::geometry::{estimate_limit_data, generate, Domain, GeneratorKind, PointSet};
use fraclab::homogenization::*;
use proptest::prelude::*;

fn cubic(eps: f64) -> PointSet {
    generate(
        &GeneratorKind::Cubic { epsilon: eps },
        &Domain::unit_cube(2),
        0,
    )
    .unwrap()
}

/// `sp` just above 1 keeps `λ ≈ (ε/2)^{2.04}` large enough for coarse grids.
fn light_kernel() -> FractionalKernel {
    FractionalKernel::isotropic(2, 0.51, 2.0).unwrap()
}

fn light_study() -> StudyConfig {
    StudyConfig {
        epsilon_list: vec![1.0 / 3.0, 0.25],
        kernel: light_kernel(),
        capacity: CapacitySettings {
            r_list: vec![4.0, 8.0],
            ..Default::default()
        },
        ..StudyConfig::cubic_default()
    }
}

fn bump_field(grid: &UniformGrid, amp: f64) -> ScalarField {
    ScalarField::from_fn(grid.clone(), false, |x| {
        amp * bump_profile(&x[..2], &[0.5, 0.5], 0.35)
    })
}

fn light_homogenized(cells: usize, theta: f64, cap_t: f64) -> HomogenizedProblem {
    let grid = UniformGrid::unit_cube(2, cells).unwrap();
    HomogenizedProblem {
        forcing: ForcingSpec::default_bump(2).sample(&grid),
        beta: beta_uniform(&grid, 1.0),
        grid,
        kernel: light_kernel(),
        theta,
        cap_t,
        cg: Default::default(),
        spg: Default::default(),
    }
}

#[test]
fn obstacle_scale_at_quarter() {
    let k = FractionalKernel::default();
    let lambda = obstacle_scale(0.125, &k);
    let oracle = (0.125f64.ln() * 2.0 / 0.9).exp();
    assert!((lambda - oracle).abs() < 1e-15);
    assert!((lambda - 9.84e-3).abs() < 5e-6);
}

#[test]
fn cubic_obstacles_have_disk_masks() {
    let k = FractionalKernel::default();
    let grid = UniformGrid::unit_cube(2, 204).unwrap();
    let fam = build_obstacles(
        &cubic(0.25),
        &CompactSetSpec::ball(vec![0.0, 0.0], 1.0),
        0.125,
        &grid,
        &k,
        0.25,
    )
    .unwrap();
    assert_eq!(fam.len(), 25);
    // Lattice offsets with |k|·h ≤ λ, counted directly.
    let rr = fam.lambda_j / grid.h;
    let mut disk = 0;
    for a in -5i32..=5 {
        for b in -5i32..=5 {
            if ((a * a + b * b) as f64).sqrt() <= rr {
                disk += 1;
            }
        }
    }
    assert_eq!(disk, 13);
    let interior = fam.masks.iter().filter(|m| m.len() == disk).count();
    assert_eq!(interior, 9);
    let all: Vec<usize> = fam.masks.iter().flatten().copied().collect();
    let mut dedup = all.clone();
    dedup.sort_unstable();
    dedup.dedup();
    assert_eq!(all.len(), dedup.len());
}

#[test]
fn coarse_grid_trips_resolution_guard() {
    let k = FractionalKernel::default();
    let grid = UniformGrid::unit_cube(2, 100).unwrap();
    let err = build_obstacles(
        &cubic(0.25),
        &CompactSetSpec::ball(vec![0.0, 0.0], 1.0),
        0.125,
        &grid,
        &k,
        0.25,
    )
    .unwrap_err();
    match err {
        Error::UnderResolved(msg) => assert!(msg.contains("h ≤")),
        e => panic!("unexpected error {e}"),
    }
}

#[test]
fn radius_beyond_packing_is_rejected() {
    let grid = UniformGrid::unit_cube(2, 144).unwrap();
    let r = build_obstacles(
        &cubic(0.25),
        &CompactSetSpec::ball(vec![0.0, 0.0], 1.0),
        0.2,
        &grid,
        &light_kernel(),
        0.25,
    );
    assert!(matches!(r, Err(Error::InvalidParameter(_))));
}

#[test]
fn zero_forcing_gives_zero_minima() {
    let grid = UniformGrid::unit_cube(2, 144).unwrap();
    let k = light_kernel();
    let fam = build_obstacles(
        &cubic(0.25),
        &CompactSetSpec::ball(vec![0.0, 0.0], 1.0),
        0.125,
        &grid,
        &k,
        0.25,
    )
    .unwrap();
    let perf = PerforatedProblem {
        grid: grid.clone(),
        kernel: k.clone(),
        obstacles: Some(fam),
        forcing: vec![0.0; grid.len()],
        cg: Default::default(),
        spg: Default::default(),
    };
    let m = solve_perforated(&perf).unwrap();
    assert_eq!(m.value, 0.0);
    assert_eq!(m.field().max_abs(), 0.0);
    let mut hom = light_homogenized(32, 0.25, 10.0);
    hom.forcing = vec![0.0; hom.grid.len()];
    assert_eq!(solve_homogenized(&hom).unwrap().value, 0.0);
}

#[test]
fn optimality_identity_for_quadratic_minimum() {
    // At the minimizer of E + mass − ⟨f,u⟩ with quadratic E + mass, the
    // value equals half the forcing part.
    let m = solve_homogenized(&light_homogenized(48, 0.25, 10.0)).unwrap();
    assert!(m.value < 0.0);
    assert!((m.value - 0.5 * m.forcing).abs() <= 1e-7 * m.value.abs());
    assert!((m.energy + m.mass + 0.5 * m.forcing).abs() <= 1e-7 * m.value.abs());
}

#[test]
fn forcing_scale_grows_the_minimum() {
    let mut a = light_homogenized(32, 0.0, 0.0);
    let m1 = solve_homogenized(&a).unwrap().value;
    a.forcing.iter_mut().for_each(|f| *f *= 2.0);
    let m2 = solve_homogenized(&a).unwrap().value;
    assert!(m1 < 0.0);
    assert!((m2 - 4.0 * m1).abs() <= 1e-7 * m2.abs());
}

#[test]
fn obstacles_only_raise_the_minimum() {
    let grid = UniformGrid::unit_cube(2, 144).unwrap();
    let k = light_kernel();
    let f = ForcingSpec::default_bump(2).sample(&grid);
    let solve = |radius: Option<f64>| {
        let obstacles = radius.map(|t| {
            build_obstacles(
                &cubic(0.25),
                &CompactSetSpec::ball(vec![0.0, 0.0], t),
                0.125,
                &grid,
                &k,
                0.25,
            )
            .unwrap()
        });
        solve_perforated(&PerforatedProblem {
            grid: grid.clone(),
            kernel: k.clone(),
            obstacles,
            forcing: f.clone(),
            cg: Default::default(),
            spg: Default::default(),
        })
        .unwrap()
        .value
    };
    let free = solve(None);
    let small = solve(Some(1.0));
    let large = solve(Some(2.5));
    assert!(free < 0.0);
    assert!(free <= small && small <= large, "{free} {small} {large}");
}

#[test]
fn homogenized_without_mass_is_unperforated() {
    let hom = light_homogenized(40, 0.0, 123.0);
    let a = solve_homogenized(&hom).unwrap();
    let perf = PerforatedProblem {
        grid: hom.grid.clone(),
        kernel: hom.kernel.clone(),
        obstacles: None,
        forcing: hom.forcing.clone(),
        cg: hom.cg,
        spg: hom.spg,
    };
    let b = solve_perforated(&perf).unwrap();
    assert!((a.value - b.value).abs() <= 1e-12 * b.value.abs());
}

#[test]
fn general_p_solver_matches_quadratic_ordering() {
    let k = FractionalKernel::isotropic(2, 0.7, 1.5).unwrap();
    let grid = UniformGrid::unit_cube(2, 24).unwrap();
    let f = ForcingSpec::default_bump(2).sample(&grid);
    let mk = |theta: f64| HomogenizedProblem {
        grid: grid.clone(),
        kernel: k.clone(),
        theta,
        beta: beta_uniform(&grid, 1.0),
        cap_t: 20.0,
        forcing: f.clone(),
        cg: Default::default(),
        spg: Default::default(),
    };
    let m0 = solve_homogenized(&mk(0.0)).unwrap();
    let m1 = solve_homogenized(&mk(0.25)).unwrap();
    assert!(m0.value < 0.0);
    assert!(m0.value <= m1.value);
    assert!(m1.d_theta > 0.0);
}

#[test]
fn control_study_has_no_gap() {
    let cfg = StudyConfig {
        obstacles: false,
        ..light_study()
    };
    let st = gamma_study(&cfg, None).unwrap();
    assert_eq!(st.theta, 0.0);
    for r in &st.rows {
        assert_eq!(r.obstacles, 0);
        assert!((r.m_j - r.m_inf).abs() <= 1e-10 * r.m_inf.abs());
        assert!(r.gap <= 1e-10);
    }
    assert!(st.verdict.pass);
}

#[test]
fn study_writes_minima_and_record() {
    let dir = tempfile::tempdir().unwrap();
    let st = gamma_study(&light_study(), Some(dir.path())).unwrap();
    assert_eq!(st.rows.len(), 2);
    assert!(st.cap_t > 0.0 && st.cap_band >= 0.0);
    assert_eq!(st.theta, 0.25);
    let csv = std::fs::read_to_string(dir.path().join("minima.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("epsilon,h,m_j,gap,distance"));
    assert_eq!(lines.count(), 2);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("study.json")).unwrap())
            .unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);
    assert!(json["verdict"]["note"]
        .as_str()
        .unwrap()
        .contains("engineering"));
}

#[test]
fn failed_study_persists_partial_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = light_study();
    cfg.cg.max_iter = 2;
    let err = gamma_study(&cfg, Some(dir.path())).unwrap_err();
    assert!(err.is_numerical());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("study.json")).unwrap())
            .unwrap();
    assert!(json["error"].as_str().is_some());
}

#[test]
fn common_grid_resolves_every_scale() {
    let cfg = StudyConfig::cubic_default();
    let cells = cfg.cells();
    assert_eq!(cells % 24, 0);
    for &e in &cfg.epsilon_list {
        assert!(cfg.lambda(e) * cells as f64 >= 2.0);
    }
    assert!(cfg.lambda(0.125) * (cells - 24) as f64 * 1.0 < 2.0);
}

#[test]
fn halving_the_radius_convention_quarters_theta() {
    let base = light_study();
    let half = StudyConfig {
        r_convention: 0.25,
        capacity: CapacitySettings {
            value: Some(10.0),
            ..Default::default()
        },
        grid: GridPolicy {
            nodes_per_lambda: 2.0,
            refine: 1,
        },
        ..base.clone()
    };
    let full = StudyConfig {
        capacity: half.capacity.clone(),
        ..base
    };
    let a = gamma_study(&full, None).unwrap();
    let b = gamma_study(&half, None).unwrap();
    assert!((a.theta - 4.0 * b.theta).abs() < 1e-15);
    // Smaller obstacles leave more room: the perforated minima drop.
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        assert!(rb.m_j <= ra.m_j);
        assert!(rb.lambda < ra.lambda);
    }
}

#[test]
fn column_energies_sum_to_the_seminorm() {
    let grid = UniformGrid::unit_cube(2, 20).unwrap();
    let u = ScalarField::from_fn(grid.clone(), false, |x| {
        (7.0 * x[0]).sin() * x[1] * (1.0 - x[1])
    });
    for k in [
        light_kernel(),
        FractionalKernel::isotropic(2, 0.8, 1.5).unwrap(),
    ] {
        let col = column_energies(&u, &k).unwrap();
        let total: f64 = col.iter().sum();
        let e = gagliardo_energy(&u, &k, &PairRegion::full(grid.len())).unwrap();
        assert!((total - e).abs() <= 1e-10 * e, "{total} {e}");
        let a = grid.mask_where(|x| x[0] < 0.3);
        let part: f64 = a.indices().iter().map(|&i| col[i]).sum();
        let ea = gagliardo_energy(&u, &k, &PairRegion::new(NodeMask::full(grid.len()), a)).unwrap();
        assert!((part - ea).abs() <= 1e-10 * ea, "{part} {ea}");
    }
}

#[test]
fn slicing_single_shell_is_the_whole_union() {
    let grid = UniformGrid::unit_cube(2, 128).unwrap();
    let u = bump_field(&grid, 1.0);
    let rep = slicing_select(
        &u,
        &light_kernel(),
        &[[0.5, 0.5, 0.0]],
        0.4,
        2,
        1,
        ShellGeometry::Cubed,
    )
    .unwrap();
    assert_eq!(rep.h_selected, 1);
    assert_eq!(rep.shell_energies[0], rep.total);
    assert!(rep.holds);
}

#[test]
fn slicing_of_a_constant_is_zero() {
    let grid = UniformGrid::unit_cube(2, 64).unwrap();
    let k = light_kernel();
    let c = [[0.5, 0.5, 0.0]];
    let u = ScalarField::from_fn(grid.clone(), false, |_| 3.0);
    let rep = slicing_select(&u, &k, &c, 0.4, 2, 4, ShellGeometry::Geometric).unwrap();
    // The convolution form of the column energies cancels only to rounding.
    let reference = slicing_select(
        &bump_field(&grid, 3.0),
        &k,
        &c,
        0.4,
        2,
        4,
        ShellGeometry::Geometric,
    )
    .unwrap();
    assert!(rep
        .shell_energies
        .iter()
        .all(|&e| e <= 1e-10 * reference.total));
    assert!(rep.holds);
}

#[test]
fn slicing_rejects_unresolved_shells() {
    let grid = UniformGrid::unit_cube(2, 32).unwrap();
    let u = bump_field(&grid, 1.0);
    let r = slicing_select(
        &u,
        &light_kernel(),
        &[[0.5, 0.5, 0.0]],
        0.4,
        2,
        3,
        ShellGeometry::Cubed,
    );
    assert!(matches!(r, Err(Error::UnderResolved(_))));
}

#[test]
fn cubed_shells_nest_inside_geometric_radii() {
    assert_eq!(ShellGeometry::Cubed.radius(1.0, 2, 1), 0.125);
    assert_eq!(ShellGeometry::Geometric.radius(1.0, 2, 3), 0.125);
    assert_eq!(ShellGeometry::Cubed.radius(0.5, 3, 2), 0.5 / 729.0);
}

#[test]
fn joining_cutoff_profile() {
    let (rho, m) = (1.0, 2);
    assert_eq!(joining_cutoff(0.1, rho, m), 0.0);
    assert_eq!(joining_cutoff(0.3, rho, m), 1.0);
    assert_eq!(joining_cutoff(0.5, rho, m), 1.0);
    assert_eq!(joining_cutoff(1.0, rho, m), 0.0);
    assert!((joining_cutoff(0.75, rho, m) - 0.5).abs() < 1e-15);
    assert!((joining_cutoff(0.1875, rho, m) - 0.5).abs() < 1e-15);
}

#[test]
fn joining_matches_means_and_leaves_the_rest() {
    let grid = UniformGrid::unit_cube(2, 96).unwrap();
    let u = ScalarField::from_fn(grid.clone(), false, |x| (3.0 * x[0]).sin() + x[1] * x[1]);
    let k = light_kernel();
    let centers = [[0.3, 0.3, 0.0], [0.7, 0.6, 0.0]];
    let rho = 0.15;
    let z = annulus_means(&u, &centers, rho, 2).unwrap();
    let rep = apply_joining(&u, &k, &centers, rho, 2, &z).unwrap();
    assert!(rep.matches_on_inner && rep.unchanged_outside);
    assert!(rep.c_fit.is_finite() && rep.bound_shape > 0.0);
    assert!(rep.measured_error <= rep.bound_shape);
    // Pairs outside the annuli are untouched.
    let w = rep.w.unwrap();
    let mut off = NodeMask::full(grid.len());
    for c in &centers {
        for i in 0..grid.len() {
            let x = grid.coord(i);
            if ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt() < rho {
                off.set(i, false);
            }
        }
    }
    let e = PairRegion::new(off.clone(), off);
    assert_eq!(
        gagliardo_energy(&u, &k, &e).unwrap(),
        gagliardo_energy(&w, &k, &e).unwrap()
    );
}

#[test]
fn joining_is_exact_when_u_is_already_flat() {
    let grid = UniformGrid::unit_cube(2, 64).unwrap();
    let c = [0.5, 0.5, 0.0];
    let u = ScalarField::from_fn(grid.clone(), false, |x| {
        let d = ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt();
        if d < 0.3 {
            2.0
        } else {
            2.0 + (d - 0.3)
        }
    });
    let z = annulus_means(&u, &[c], 0.25, 2).unwrap();
    assert_eq!(z, vec![2.0]);
    let rep = apply_joining(&u, &light_kernel(), &[c], 0.25, 2, &z).unwrap();
    assert_eq!(rep.w.unwrap().values, u.values);
    assert_eq!(rep.measured_error, 0.0);
}

#[test]
fn recovery_of_zero_is_zero() {
    let k = FractionalKernel::default();
    let grid = UniformGrid::unit_cube(2, 204).unwrap();
    let ps = cubic(0.25);
    let fam = build_obstacles(
        &ps,
        &CompactSetSpec::ball(vec![0.0, 0.0], 1.0),
        0.125,
        &grid,
        &k,
        0.25,
    )
    .unwrap();
    let u = ScalarField::zeros(grid.clone(), false);
    let params = RecoveryParams {
        cap_t: 38.0,
        ..Default::default()
    };
    let rep = build_recovery(&u, &ps, &fam, &Domain::unit_cube(2), &k, &params).unwrap();
    assert_eq!(rep.f_j, 0.0);
    assert_eq!(rep.f_u, 0.0);
    assert_eq!(rep.sup_uj, 0.0);
    assert!(rep.feasible);
}

#[test]
fn recovery_is_feasible_and_bounded() {
    let k = FractionalKernel::default();
    let grid = UniformGrid::unit_cube(2, 204).unwrap();
    let ps = cubic(0.25);
    let fam = build_obstacles(
        &ps,
        &CompactSetSpec::ball(vec![0.0, 0.0], 1.0),
        0.125,
        &grid,
        &k,
        0.25,
    )
    .unwrap();
    let u = bump_field(&grid, 1.0);
    let params = RecoveryParams {
        cap_t: 38.0,
        ..Default::default()
    };
    let rep = build_recovery(&u, &ps, &fam, &Domain::unit_cube(2), &k, &params).unwrap();
    assert!(rep.feasible);
    assert!(rep.sup_uj <= rep.sup_u);
    assert_eq!(rep.interior + rep.boundary, fam.len());
    assert!(rep.interior > 0);
    assert!(rep.f_j > rep.energy_u);
    let uj = rep.u_j.unwrap();
    assert!(fam.masks.iter().flatten().all(|&i| uj.values[i] == 0.0));
}

#[test]
fn recovery_requires_zero_collar() {
    let k = FractionalKernel::default();
    let grid = UniformGrid::unit_cube(2, 204).unwrap();
    let ps = cubic(0.25);
    let fam = build_obstacles(
        &ps,
        &CompactSetSpec::ball(vec![0.0, 0.0], 1.0),
        0.125,
        &grid,
        &k,
        0.25,
    )
    .unwrap();
    let u = ScalarField::from_fn(grid.clone(), false, |_| 1.0);
    let r = build_recovery(
        &u,
        &ps,
        &fam,
        &Domain::unit_cube(2),
        &k,
        &RecoveryParams::default(),
    );
    assert!(matches!(r, Err(Error::InvalidParameter(_))));
}

#[test]
fn refining_the_grid_keeps_the_minimum() {
    let base = StudyConfig {
        epsilon_list: vec![0.25],
        capacity: CapacitySettings {
            value: Some(38.5),
            ..Default::default()
        },
        ..StudyConfig::cubic_default()
    };
    let fine = StudyConfig {
        grid: GridPolicy {
            refine: 2,
            ..Default::default()
        },
        ..base.clone()
    };
    let a = gamma_study(&base, None).unwrap().rows[0].m_j;
    let b = gamma_study(&fine, None).unwrap().rows[0].m_j;
    assert!((a - b).abs() <= 0.05 * b.abs(), "{a} {b}");
}

#[test]
fn estimated_theta_moves_the_limit_to_first_order() {
    let given = StudyConfig {
        capacity: CapacitySettings {
            value: Some(15.0),
            ..Default::default()
        },
        ..light_study()
    };
    let finest = *given.epsilon_list.last().unwrap();
    let domain = Domain::unit_cube(2);
    let data =
        estimate_limit_data(&cubic(finest), &domain, given.r_convention * finest, 0.25).unwrap();
    let estimated = StudyConfig {
        limit: LimitSource::Given {
            theta: data.theta_hat,
        },
        ..given.clone()
    };
    let a = gamma_study(&given, None).unwrap();
    let b = gamma_study(&estimated, None).unwrap();
    let dtheta = b.theta - a.theta;
    assert!(dtheta < 0.0);
    let predicted = dtheta * a.cases[0].homogenized.d_theta;
    let actual = b.rows[0].m_inf - a.rows[0].m_inf;
    // Concavity in θ puts the change below the tangent prediction.
    assert!(
        actual <= predicted + 1e-12 * a.rows[0].m_inf.abs(),
        "{actual} {predicted}"
    );
    assert!(
        (actual - predicted).abs() <= 0.25 * predicted.abs(),
        "{actual} {predicted}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn homogenized_minimum_grows_with_theta(t1 in 0.0f64..0.5, dt in 0.0f64..0.5) {
        let a = solve_homogenized(&light_homogenized(24, t1, 12.0)).unwrap().value;
        let b = solve_homogenized(&light_homogenized(24, t1 + dt, 12.0)).unwrap().value;
        prop_assert!(a <= b + 1e-12 * b.abs());
    }

    #[test]
    fn pigeonhole_shell_is_below_average(seed in any::<u64>(), n_shells in 1usize..5) {
        use rand::{Rng, SeedableRng};
        let grid = UniformGrid::unit_cube(2, 128).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..grid.len()).map(|_| rng.random::<f64>()).collect();
        let u = ScalarField::new(grid, vals, false).unwrap();
        let rep = slicing_select(&u, &light_kernel(), &[[0.5, 0.5, 0.0]], 0.45, 2, n_shells, ShellGeometry::Geometric)
            .unwrap();
        prop_assert!(rep.holds);
        let sel = rep.shell_energies[rep.h_selected - 1];
        prop_assert!(rep.shell_energies.iter().all(|&e| sel <= e));
        let sum: f64 = rep.shell_energies.iter().sum();
        prop_assert!((sum - rep.total).abs() <= 1e-12 * rep.total);
    }
}

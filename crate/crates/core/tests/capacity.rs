use approx::assert_relative_eq;
use fraclab::capacity::*;
use fraclab::energy::{ball_mask, FractionalKernel};
use fraclab::Error;
use proptest::prelude::*;

fn k() -> FractionalKernel {
    FractionalKernel::default()
}

fn ball(r: f64) -> CompactSetSpec {
    CompactSetSpec::ball(vec![0.0, 0.0], r)
}

fn cap(t: CompactSetSpec, r: f64, h: f64) -> f64 {
    solve_capacity(&CapacityProblem::new(t, r, k(), h))
        .unwrap()
        .value
}

#[test]
fn potential_obeys_its_constraints() {
    let p = CapacityProblem::new(ball(0.25), 1.0, k(), 1.0 / 16.0);
    let res = solve_capacity(&p).unwrap();
    let g = &res.potential.grid;
    let t = p.t.mask(g).unwrap();
    let support = ball_mask(g, &[0.0, 0.0], 1.0);
    for (i, &v) in res.potential.values.iter().enumerate() {
        if t.get(i) {
            assert_eq!(v, 1.0);
        } else if !support.get(i) {
            assert_eq!(v, 0.0);
        } else {
            assert!((-1e-8..=1.0 + 1e-8).contains(&v));
        }
    }
    assert_eq!(res.t_nodes, t.count());
}

#[test]
fn empty_set_has_no_capacity() {
    let res = solve_capacity(&CapacityProblem::new(
        CompactSetSpec::empty(vec![0.0, 0.0]),
        1.0,
        k(),
        0.125,
    ))
    .unwrap();
    assert_eq!(res.value, 0.0);
    assert!(res.potential.values.iter().all(|&v| v == 0.0));
}

#[test]
fn invalid_problems_are_rejected() {
    let outside = CapacityProblem::new(ball(2.0), 1.0, k(), 0.125);
    assert!(matches!(
        solve_capacity(&outside),
        Err(Error::InvalidParameter(_))
    ));
    let tiny = CapacityProblem::new(
        CompactSetSpec::ball(vec![0.03, 0.03], 0.01),
        1.0,
        k(),
        0.125,
    );
    assert!(matches!(
        solve_capacity(&tiny),
        Err(Error::UnderResolved(_))
    ));
    let window = CapacityProblem::new(ball(0.5), 1.0, k(), 0.125).with_energy_window(0.5);
    assert!(solve_capacity(&window).is_err());
}

#[test]
fn annulus_counts_less_energy() {
    let h = 1.0 / 16.0;
    let full = cap(ball(0.25), 1.0, h);
    let mut last = 0.0;
    for big_r in [1.0, 1.5, 2.0, 3.0] {
        let a = solve_capacity(
            &CapacityProblem::new(ball(0.25), 1.0, k(), h).with_energy_window(big_r),
        )
        .unwrap()
        .value;
        assert!(a >= last - 1e-9 * full);
        assert!(a <= full * (1.0 + 1e-9));
        last = a;
    }
}

#[test]
fn projected_gradient_agrees_with_cg() {
    let mut p = CapacityProblem::new(ball(0.25), 0.75, k(), 1.0 / 12.0);
    let cg = solve_capacity(&p).unwrap();
    p.solver = CapacitySolver::ProjectedGradient;
    let pg = solve_capacity(&p).unwrap();
    assert_relative_eq!(pg.value, cg.value, max_relative = 1e-4);
}

#[test]
fn ordering_of_nested_sets() {
    let rep = potential_ordering_check(
        &CompactSetSpec {
            shape: Shape::Box {
                half_widths: vec![0.2, 0.1],
            },
            center: vec![0.0, 0.0],
        },
        &ball(0.4),
        &CapacityProblem::new(ball(0.4), 1.0, k(), 1.0 / 16.0),
    )
    .unwrap();
    assert!(rep.holds, "{rep:?}");
    assert!(rep.value_t <= rep.value_f);
    let bad = potential_ordering_check(
        &ball(0.4),
        &ball(0.2),
        &CapacityProblem::new(ball(0.4), 1.0, k(), 1.0 / 16.0),
    );
    assert!(bad.is_err());
}

#[test]
fn two_balls_are_subadditive() {
    let h = 1.0 / 16.0;
    let pair = CompactSetSpec {
        shape: Shape::TwoBalls {
            radius: 0.2,
            separation: 0.8,
        },
        center: vec![0.0, 0.0],
    };
    let both = cap(pair, 1.5, h);
    let one = cap(ball(0.2), 1.5, h);
    assert!(both <= 2.0 * one);
    assert!(both >= one);
}

#[test]
fn table_spec_rejects_unknown_keys() {
    let text = r#"
t = { shape = "ball", radius = 1.0, center = [0.0, 0.0] }
r_list = [2.0, 4.0]
r_ratio = 2.0
kernel = { n = 2, s = 0.55, p = 2.0 }
h = 0.25
"#;
    let spec: TableSpec = toml::from_str(text).unwrap();
    assert_eq!(spec.ratio_sweep, vec![2.0, 4.0, 8.0]);
    assert!(toml::from_str::<TableSpec>(&format!("{text}extra = 1\n")).is_err());
}

#[test]
fn table_is_monotone_and_written() {
    let spec = TableSpec {
        t: ball(1.0),
        r_list: vec![2.0, 4.0, 8.0],
        r_ratio: 2.0,
        ratio_sweep: vec![2.0, 4.0],
        kernel: k(),
        h: 0.25,
        cg: Default::default(),
    };
    let table = capacity_limit_table(&spec).unwrap();
    assert!(table.holds());
    assert_eq!(table.rows.len(), 2 * 3 + 2);
    assert_eq!(table.cap_estimate, table.truncated().last().unwrap().value);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("capacity.csv");
    table.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1 + table.rows.len());
    assert!(text.starts_with("variant,r,R,value,residual,iterations\n"));

    let bad = TableSpec {
        r_list: vec![4.0, 2.0],
        ..spec
    };
    assert!(capacity_limit_table(&bad).is_err());
}

#[test]
fn exterior_defect_decays() {
    let p = CapacityProblem::new(ball(0.25), 0.5, k(), 1.0 / 16.0);
    let res = solve_capacity(&p).unwrap();
    let rep =
        locality_defect_decay_check(&res, &[0.0, 0.0], 0.5, &k(), &[0.5, 1.0, 2.0, 4.0]).unwrap();
    assert!(rep.decreasing, "{:?}", rep.defects);
    assert!(rep.defects[0] > 0.0);
    assert!(locality_defect_decay_check(&res, &[0.0, 0.0], 0.5, &k(), &[0.25]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// With the grid scaled along with the set, the discrete problem is the
    /// same one, so the capacity scales exactly like `t^{n−sp}`. The radii
    /// keep every node off the sphere boundaries.
    #[test]
    fn capacity_scales_with_the_set(t in 0.25f64..4.0) {
        let h = 1.0 / 8.0;
        let base = cap(ball(0.45), 0.97, h);
        let scaled = cap(ball(0.45 * t), 0.97 * t, h * t);
        prop_assert!((scaled - t.powf(0.9) * base).abs() <= 1e-6 * scaled);
    }

    #[test]
    fn capacity_is_monotone_in_the_set(a in 0.15f64..0.45, da in 0.0f64..0.3) {
        let h = 1.0 / 16.0;
        prop_assert!(cap(ball(a), 1.0, h) <= cap(ball(a + da), 1.0, h) * (1.0 + 1e-9));
    }

    #[test]
    fn capacity_decreases_with_the_support(r in 0.6f64..1.2, dr in 0.0f64..0.6) {
        let h = 1.0 / 16.0;
        prop_assert!(cap(ball(0.25), r + dr, h) <= cap(ball(0.25), r, h) * (1.0 + 1e-9));
    }

    #[test]
    fn capacity_is_translation_invariant(i in -4i32..4, j in -4i32..4) {
        let h = 1.0 / 16.0;
        let c = vec![i as f64 * h, j as f64 * h];
        let moved = cap(CompactSetSpec::ball(c, 0.3), 1.0, h);
        let base = cap(ball(0.3), 1.0, h);
        prop_assert!((moved - base).abs() <= 1e-8 * base);
    }
}

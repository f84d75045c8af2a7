use std::f64::consts::PI;

use approx::assert_relative_eq;
use fraclab::geometry::*;
use fraclab::Error;
use proptest::prelude::*;

fn unit() -> Domain {
    Domain::unit_cube(2)
}

fn cubic(eps: f64) -> PointSet {
    generate(&GeneratorKind::Cubic { epsilon: eps }, &unit(), 0).unwrap()
}

#[test]
fn cubic_radii_are_exact() {
    let eps = 0.1;
    let c = DeloneCertificate::compute(&cubic(eps), &unit(), Some(eps / 64.0)).unwrap();
    assert_relative_eq!(c.r_packing, 0.05, max_relative = 1e-12);
    let big = 2f64.sqrt() * eps / 2.0;
    assert!(c.r_covering <= big + 1e-12);
    assert!(big - c.r_covering <= c.probe_spacing * 2f64.sqrt() / 2.0 + 1e-12);
}

#[test]
fn three_point_packing_radius() {
    let ps = PointSet::new(2, vec![[0.0, 0.0, 0.0], [3.0, 4.0, 0.0], [0.0, 1.0, 0.0]]);
    let (d2, i, j) = closest_pair(&ps).unwrap();
    assert_eq!((d2, i, j), (1.0, 0, 2));
    assert_eq!(packing_radius(&ps).unwrap(), 0.5);
}

#[test]
fn degenerate_sets_are_rejected() {
    let twin = PointSet::new(2, vec![[0.2, 0.2, 0.0], [0.2, 0.2, 0.0]]);
    assert!(matches!(
        packing_radius(&twin),
        Err(Error::DegenerateSet(_))
    ));
    let single = PointSet::new(2, vec![[0.2, 0.2, 0.0]]);
    assert!(matches!(
        packing_radius(&single),
        Err(Error::DegenerateSet(_))
    ));
}

#[test]
fn voronoi_ties_go_to_the_smallest_label() {
    let ps = PointSet::new(2, vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 5.0, 0.0]]);
    assert_eq!(voronoi_index(&ps, &[0.0, 0.0]).unwrap(), 0);
    assert_eq!(voronoi_index(&ps, &[-0.1, 0.0]).unwrap(), 1);
    assert_eq!(voronoi_index(&ps, &[0.0, 4.0]).unwrap(), 2);
}

#[test]
fn shell_constant_in_the_plane() {
    // The maximum over m is attained at m = 1: 2²·3²/π.
    assert_relative_eq!(shell_constant(2), 36.0 / PI, max_relative = 1e-14);
}

#[test]
fn steiner_collar_of_the_unit_square() {
    let d = 0.1;
    let expected = 1.0 + 4.0 * d + PI * d * d - (1.0 - 2.0 * d).powi(2);
    assert_relative_eq!(
        unit().boundary_neighborhood_measure(d),
        expected,
        max_relative = 1e-14
    );
    assert_eq!(unit().boundary_neighborhood_measure(0.0), 0.0);
}

#[test]
fn rect_and_polygon_agree() {
    let r = Domain::rect(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
    let p = Domain::polygon(vec![[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]]).unwrap();
    assert_relative_eq!(r.measure(), 2.0);
    assert_relative_eq!(p.measure(), 2.0, max_relative = 1e-12);
    for x in [[0.5, 0.5], [1.9, 0.1], [2.5, 0.5], [-0.1, 0.9]] {
        assert_eq!(r.contains(&x), p.contains(&x));
        assert_relative_eq!(
            r.signed_distance(&x),
            p.signed_distance(&x),
            epsilon = 1e-12
        );
    }
    assert!(Domain::rect(vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
}

#[test]
fn cubic_index_sets_count_interior_cells() {
    let ps = cubic(0.125);
    let cert = DeloneCertificate::compute(&ps, &unit(), None).unwrap();
    let idx = index_sets(&ps, &unit(), &cert, cert.r_packing / 4.0).unwrap();
    // Cells of the 7×7 inner points are interior; the 32 on ∂U straddle it.
    assert_eq!(idx.interior.len(), 49);
    assert_eq!(idx.boundary.len(), 32);
    assert!((idx.uncovered_measure - (1.0 - 0.875 * 0.875)).abs() < 0.01);
    let rep = counting_check(&ps, &unit(), &idx, &cert, 4).unwrap();
    assert!(rep.holds(), "{:?}", rep.violations());
    // In the ℓ∞ shell (r, 2r] of a lattice point sit its 8 neighbours.
    assert_eq!(rep.shell_counts[0], 8);
}

#[test]
fn coarse_cell_sampling_is_rejected() {
    let ps = cubic(0.1);
    let cert = DeloneCertificate::compute(&ps, &unit(), None).unwrap();
    let r = index_sets(&ps, &unit(), &cert, cert.r_packing);
    assert!(matches!(r, Err(Error::UnderResolved(_))));
}

#[test]
fn limit_data_of_the_lattice() {
    let eps = 1.0 / 32.0;
    let d = estimate_limit_data(&cubic(eps), &unit(), eps / 2.0, 0.25).unwrap();
    assert!((d.theta_hat - 0.25).abs() <= 3.0 * eps);
    assert_relative_eq!(d.beta_integral(), 1.0, max_relative = 1e-12);
    assert!(d.l1_error(&unit(), |_| 1.0, 2) <= 3.0 * eps);
    let too_big = estimate_limit_data(&cubic(eps), &unit(), eps, 0.25);
    assert!(matches!(too_big, Err(Error::InvalidParameter(_))));
}

#[test]
fn point_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("points.csv");
    let ps = generate(
        &GeneratorKind::Rescaled {
            base: BaseSet::Jittered { amp: 0.4 },
            epsilon: 0.2,
        },
        &unit(),
        5,
    )
    .unwrap();
    ps.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("label,x,y\n"));
    let back = PointSet::read_csv(&path).unwrap();
    assert_eq!(back.points, ps.points);
    assert_eq!(back.labels, ps.labels);
}

#[test]
fn seeds_only_matter_for_random_bases() {
    let jitter = GeneratorKind::Rescaled {
        base: BaseSet::Jittered { amp: 0.5 },
        epsilon: 0.1,
    };
    let a = generate(&jitter, &unit(), 1).unwrap();
    assert_eq!(a.points, generate(&jitter, &unit(), 1).unwrap().points);
    assert_ne!(a.points, generate(&jitter, &unit(), 2).unwrap().points);
    let fib = GeneratorKind::Rescaled {
        base: BaseSet::Fibonacci,
        epsilon: 0.1,
    };
    assert_eq!(
        generate(&fib, &unit(), 1).unwrap().points,
        generate(&fib, &unit(), 2).unwrap().points
    );
}

#[test]
fn invalid_generators_are_rejected() {
    let bad = GeneratorKind::Rescaled {
        base: BaseSet::Jittered { amp: 1.0 },
        epsilon: 0.1,
    };
    assert!(generate(&bad, &unit(), 0).is_err());
    assert!(generate(&GeneratorKind::Cubic { epsilon: 0.0 }, &unit(), 0).is_err());
}

#[test]
fn outside_diffeo_density_integrates_to_one() {
    let kind = GeneratorKind::DiffeoOutside {
        phi: Diffeomorphism::default(),
        epsilon: 0.05,
    };
    // Φ − id is 2-periodic, so 1/det∇Φ(Φ⁻¹) has mean one over a period cell.
    let m = 200;
    let mut acc = 0.0;
    for i in 0..m {
        for j in 0..m {
            let x = [
                2.0 * (i as f64 + 0.5) / m as f64,
                2.0 * (j as f64 + 0.5) / m as f64,
            ];
            acc += kind.limit_density(&x);
        }
    }
    assert_relative_eq!(acc / (m * m) as f64, 1.0, max_relative = 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn cubic_packing_radius_is_half_epsilon(eps in 0.03f64..0.3) {
        let r = packing_radius(&cubic(eps)).unwrap();
        prop_assert!((r - eps / 2.0).abs() <= 1e-12 * eps);
    }

    #[test]
    fn packing_radius_is_translation_invariant(eps in 0.05f64..0.3, dx in -5.0f64..5.0, dy in -5.0f64..5.0) {
        let ps = generate(&GeneratorKind::Rescaled { base: BaseSet::Fibonacci, epsilon: eps }, &unit(), 0).unwrap();
        let moved = PointSet::new(2, ps.points.iter().map(|p| [p[0] + dx, p[1] + dy, 0.0]).collect());
        let (a, b) = (packing_radius(&ps).unwrap(), packing_radius(&moved).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn a_priori_radii_bracket_the_certificate(eps in 0.05f64..0.2, amp in 0.0f64..0.9, seed in any::<u64>()) {
        let kind = GeneratorKind::Rescaled { base: BaseSet::Jittered { amp }, epsilon: eps };
        let ps = generate(&kind, &unit(), seed).unwrap();
        let c = DeloneCertificate::compute(&ps, &unit(), None).unwrap();
        let (r, big_r) = kind.radii(2);
        prop_assert!(c.r_packing >= r * (1.0 - 1e-12));
        prop_assert!(c.r_covering <= big_r * (1.0 + 1e-12));
    }

    #[test]
    fn counting_holds_on_jittered_sets(eps in 0.05f64..0.15, amp in 0.0f64..0.8, seed in any::<u64>()) {
        let kind = GeneratorKind::Rescaled { base: BaseSet::Jittered { amp }, epsilon: eps };
        let ps = generate(&kind, &unit(), seed).unwrap();
        let cert = DeloneCertificate::compute(&ps, &unit(), None).unwrap();
        let a = Domain::rect(vec![0.1, 0.2], vec![0.8, 0.9]).unwrap();
        let idx = index_sets(&ps, &a, &cert, cert.r_packing / 4.0).unwrap();
        let rep = counting_check(&ps, &a, &idx, &cert, 3).unwrap();
        prop_assert!(rep.holds(), "{:?}", rep.violations());
    }

    #[test]
    fn diffeo_inverse_round_trips(x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let phi = Diffeomorphism::default();
        let back = phi.inverse(&phi.apply(&[x, y])[..2]);
        prop_assert!((back[0] - x).abs() < 1e-10 && (back[1] - y).abs() < 1e-10);
    }

    #[test]
    fn jacobian_matches_finite_differences(x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let phi = Diffeomorphism::default();
        let h = 1e-5;
        let d = |a: usize, b: usize| {
            let mut p = [x, y];
            let mut m = [x, y];
            p[b] += h;
            m[b] -= h;
            (phi.apply(&p)[a] - phi.apply(&m)[a]) / (2.0 * h)
        };
        let fd = d(0, 0) * d(1, 1) - d(0, 1) * d(1, 0);
        prop_assert!((phi.jacobian_det(&[x, y]) - fd).abs() < 1e-6);
    }
}

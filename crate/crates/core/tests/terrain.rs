use std::f64::consts::PI;

use approx::assert_relative_eq;
use densnav::basis::QuadratureGrid;
use densnav::geometry::{BoxDomain, Region};
use densnav::terrain::{indicator, trav_measure, Raster, TraversabilityMap};
use proptest::prelude::*;

fn plane() -> BoxDomain {
    BoxDomain::new(vec![-6.0, -6.0], vec![6.0, 6.0]).unwrap()
}

fn fine_grid() -> QuadratureGrid {
    QuadratureGrid::midpoint(&plane(), &[240, 240], None).unwrap()
}

#[test]
fn flat_map_is_its_offset() {
    let m = TraversabilityMap::analytic(0.2, vec![]).unwrap();
    for p in [[0.0, 0.0], [-6.0, 6.0], [3.3, -1.7]] {
        assert_eq!(m.eval(&p), 0.2);
    }
}

#[test]
fn raster_reproduces_its_nodes() {
    let values: Vec<f64> = (0..20).map(|i| (i * 7 % 11) as f64 * 0.1).collect();
    let r = Raster::new(-1.0, 2.0, 0.5, 0.25, 5, 4, values).unwrap();
    let m = TraversabilityMap::raster(r.clone(), 0.0).unwrap();
    for j in 0..4 {
        for i in 0..5 {
            let p = [-1.0 + 0.5 * i as f64, 2.0 + 0.25 * j as f64];
            assert_eq!(m.eval(&p), r.at(i, j));
        }
    }
}

#[test]
fn raster_text_round_trip() {
    let r = Raster::sample(0.0, 0.0, 0.1, 0.3, 7, 3, |x, y| (x * 3.0).sin().abs() + y / 7.0).unwrap();
    assert_eq!(Raster::parse(&r.to_text()).unwrap(), r);
    assert!(Raster::parse("garbage").is_err());
}

#[test]
fn negative_raster_is_rejected() {
    let r = Raster::new(0.0, 0.0, 1.0, 1.0, 2, 1, vec![0.5, -0.1]).unwrap();
    assert!(TraversabilityMap::raster(r, 0.0).is_err());
    assert!(TraversabilityMap::analytic(-0.1, vec![]).is_err());
}

#[test]
fn binary_obstacle_is_normalized() {
    let m = TraversabilityMap::binary_obstacle(Region::ball([0.0, 0.0], 1.0), &plane()).unwrap();
    assert_relative_eq!(m.eval(&[0.2, -0.3]), 1.0 / PI, epsilon = 1e-15);
    assert_eq!(m.eval(&[2.0, 0.0]), 0.0);
    let total = fine_grid().integrate(|x| m.eval(x));
    assert_relative_eq!(total, 1.0, max_relative = 0.02);
}

#[test]
fn indicator_boundary_belongs() {
    let ball = Region::ball([1.0, 1.0], 0.5);
    let f = indicator(&ball);
    assert_eq!(f(&[1.0, 1.0]), 1.0);
    assert_eq!(f(&[2.0, 2.0]), 0.0);
    assert_eq!(f(&[1.5, 1.0]), 1.0);
}

#[test]
fn uniform_trav_is_area() {
    let m = TraversabilityMap::analytic(1.0, vec![]).unwrap();
    let a = trav_measure(&m, &Region::rect([0.0, 0.0], [2.0, 1.0]), &fine_grid()).unwrap();
    assert_relative_eq!(a, 2.0, max_relative = 0.01);
}

#[test]
fn trav_of_a_nodeless_region_fails() {
    let m = TraversabilityMap::hills_a();
    let coarse = QuadratureGrid::midpoint(&plane(), &[2, 2], None).unwrap();
    assert!(trav_measure(&m, &Region::ball([0.1, 0.1], 0.05), &coarse).is_err());
}

#[test]
fn trav_is_additive_and_monotone() {
    let m = TraversabilityMap::hills_a();
    let g = fine_grid();
    let a = Region::rect([-4.0, -4.0], [0.0, 4.0]);
    let b = Region::rect([1.0, -4.0], [4.0, 4.0]);
    let ab = a.clone().union(b.clone());
    let (ta, tb, tab) = (
        trav_measure(&m, &a, &g).unwrap(),
        trav_measure(&m, &b, &g).unwrap(),
        trav_measure(&m, &ab, &g).unwrap(),
    );
    assert_relative_eq!(tab, ta + tb, max_relative = 1e-12);
    let inner = Region::rect([-3.0, -3.0], [-1.0, 3.0]);
    assert!(trav_measure(&m, &inner, &g).unwrap() <= ta);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn presets_are_nonnegative(x in -6.0f64..6.0, y in -6.0f64..6.0) {
        prop_assert!(TraversabilityMap::hills_a().eval(&[x, y, 0.0]) >= 0.0);
        prop_assert!(TraversabilityMap::hills_b().eval(&[x, y, 0.0]) >= 0.0);
    }

    #[test]
    fn trav_scales_linearly(c in 0.0f64..10.0, cx in -3.0f64..3.0, cy in -3.0f64..3.0) {
        let g = QuadratureGrid::midpoint(&plane(), &[60, 60], None).unwrap();
        let m = TraversabilityMap::hills_b();
        let region = Region::ball([cx, cy], 1.5);
        let t = trav_measure(&m, &region, &g).unwrap();
        let tc = trav_measure(&m.scaled(c), &region, &g).unwrap();
        prop_assert!((tc - c * t).abs() <= 1e-12 * (1.0 + c * t));
    }
}

use std::f64::consts::PI;

use approx::{assert_abs_diff_eq, assert_relative_eq};
use densnav::basis::{
    project_density, weighted_integral, BasisCoefficients, Dictionary, Field, InitialDensity, MonomialDictionary,
    QuadratureGrid, RbfDictionary,
};
use densnav::geometry::{BoxDomain, Region};
use proptest::prelude::*;

fn square(side: f64) -> BoxDomain {
    BoxDomain::new(vec![0.0, 0.0], vec![side, side]).unwrap()
}

fn small() -> RbfDictionary {
    RbfDictionary::grid(&square(4.0), &[5, 5], 1.2).unwrap()
}

#[test]
fn two_by_two_lattice() {
    let d = RbfDictionary::grid(&square(1.0), &[2, 2], 1.2).unwrap();
    assert_eq!(d.len(), 4);
    assert_relative_eq!(d.sigma, 0.4, epsilon = 1e-15);
    let corners: Vec<[f64; 2]> = (0..4).map(|k| d.center(k).unwrap()).map(|c| [c[0], c[1]]).collect();
    for c in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] {
        assert!(corners.contains(&c), "{corners:?}");
    }
}

#[test]
fn spacing_rule_is_enforced() {
    assert!(RbfDictionary::grid(&square(1.0), &[2, 2], 0.5).is_err());
    assert!(RbfDictionary::grid(&square(1.0), &[2, 2], 2.0).is_err());
    assert!(RbfDictionary::grid(&square(1.0), &[2, 3], 1.2).is_err());
}

#[test]
fn heading_lattice_needs_per_axis_widths() {
    let dom = BoxDomain::planar_with_heading((-6.0, 6.0), (-6.0, 6.0));
    assert!(RbfDictionary::grid(&dom, &[25, 25, 4], 1.2).is_err());
    let d = RbfDictionary::grid_anisotropic(&dom, &[25, 25, 4], 1.2).unwrap();
    assert_eq!(d.len(), 2500);
}

#[test]
fn member_profile() {
    let d = small();
    let k = 12;
    let c = d.center(k).unwrap();
    assert_eq!(d.eval(&c)[k], 1.0);
    let at_sigma = [c[0] + d.sigma, c[1]];
    assert_relative_eq!(d.eval(&at_sigma)[k], (-0.5f64).exp(), epsilon = 1e-14);
}

#[test]
fn gaussian_integral_in_one_dimension() {
    let domain = BoxDomain::new(vec![-5.0], vec![5.0]).unwrap();
    let d = RbfDictionary {
        domain: domain.clone(),
        counts: vec![1],
        sigma: 1.0,
        sigmas: vec![1.0],
        spacing: vec![10.0],
        centers: vec![0.0],
    };
    let grid = QuadratureGrid::midpoint(&domain, &[2000], None).unwrap();
    let i = weighted_integral(&d, &grid, |_| 1.0);
    assert_abs_diff_eq!(i[0], (2.0 * PI).sqrt(), epsilon = 1e-3);
}

#[test]
fn zero_weight_integrates_to_zero() {
    let d = small();
    let grid = QuadratureGrid::for_dictionary(&d, 3, None).unwrap();
    assert!(weighted_integral(&d, &grid, |_| 0.0).iter().all(|v| *v == 0.0));
}

#[test]
fn projecting_a_member_recovers_it() {
    let d = small();
    let grid = QuadratureGrid::for_dictionary(&d, 6, None).unwrap();
    let k = 3;
    let m = project_density(&d, &grid, |x| d.eval(x)[k]).unwrap();
    for (i, v) in m.values.iter().enumerate() {
        let e = if i == k { 1.0 } else { 0.0 };
        assert_abs_diff_eq!(*v, e, epsilon = 1e-3);
    }
    let zero = project_density(&d, &grid, |_| 0.0).unwrap();
    assert!(zero.values.iter().all(|v| *v == 0.0));
}

#[test]
fn smooth_bump_projects_accurately() {
    let d = RbfDictionary::grid(&square(4.0), &[9, 9], 1.5).unwrap();
    let grid = QuadratureGrid::for_dictionary(&d, 4, None).unwrap();
    let h = |x: &[f64]| (-((x[0] - 2.0).powi(2) + (x[1] - 1.8).powi(2)) / 0.8).exp();
    let m = project_density(&d, &grid, h).unwrap();
    let err = grid.integrate(|x| (m.evaluate(&d, x) - h(x)).powi(2)).sqrt();
    let norm = grid.integrate(|x| h(x).powi(2)).sqrt();
    assert!(err / norm < 0.05, "{}", err / norm);
}

#[test]
fn interior_partition_is_nearly_flat() {
    let dom = BoxDomain::planar_with_heading((-6.0, 6.0), (-6.0, 6.0));
    let d = RbfDictionary::grid_anisotropic(&dom, &[10, 10, 4], 1.5).unwrap();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..30 {
        for j in 0..30 {
            for t in 0..8 {
                let x = [-3.0 + 0.2 * i as f64, -3.0 + 0.2 * j as f64, -PI + t as f64 * PI / 4.0];
                let s: f64 = d.eval(&x).iter().sum();
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
    }
    assert!((hi - lo) / hi < 0.25, "{lo} .. {hi}");
}

#[test]
fn excluded_quadrature_weight() {
    let dom = square(10.0);
    let hole = Region::ball([5.0, 5.0], 1.0).inflate(0.1);
    let g = QuadratureGrid::midpoint(&dom, &[200, 200], Some(&hole)).unwrap();
    assert!((0..g.len()).all(|i| !hole.contains(g.node(i))));
    assert_relative_eq!(g.total_weight(), 100.0 - PI * 1.1 * 1.1, max_relative = 0.01);
}

#[test]
fn initial_density_has_unit_mass() {
    let dom = BoxDomain::planar_with_heading((-6.0, 6.0), (-6.0, 6.0));
    let h0 = InitialDensity::truncated_gaussian([1.0, -1.0], 1.0, &dom);
    let g = QuadratureGrid::midpoint(&dom, &[240, 240, 1], None).unwrap();
    assert_relative_eq!(g.integrate(|x| h0.density(x)), 1.0, max_relative = 5e-3);
    assert_eq!(h0.density(&[3.0, 0.0, 0.0]), 0.0);
}

#[test]
fn coefficients_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let c = BasisCoefficients::new(vec![0.1, -2.5e-17, 3.0], Field::RhoBar(1));
    let p = dir.path().join("c.csv");
    c.save_csv(&p).unwrap();
    assert_eq!(BasisCoefficients::load_csv(&p).unwrap(), c);
}

#[test]
fn monomials() {
    let d = MonomialDictionary::univariate(3);
    assert_eq!(d.eval(&[2.0]), vec![2.0, 4.0, 8.0]);
    assert!(!d.is_positive());
    assert!(small().is_positive());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn members_are_positive_and_bounded(x in 0.0f64..4.0, y in 0.0f64..4.0) {
        prop_assert!(small().eval(&[x, y]).iter().all(|v| *v > 0.0 && *v <= 1.0));
    }

    #[test]
    fn integral_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, cx in 0.0f64..4.0) {
        let d = small();
        let g = QuadratureGrid::for_dictionary(&d, 2, None).unwrap();
        let f = |x: &[f64]| (x[0] - cx).abs();
        let h = |x: &[f64]| x[1] * x[1];
        let lhs = weighted_integral(&d, &g, |x| a * f(x) + b * h(x));
        let (fi, hi) = (weighted_integral(&d, &g, f), weighted_integral(&d, &g, h));
        for k in 0..d.len() {
            let rhs = a * fi[k] + b * hi[k];
            prop_assert!((lhs[k] - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }
}

use holoweb::branches::temper_sequence;
use holoweb::export::Summary;
use holoweb::family::{presets, validate_family};
use holoweb::measures::{circle_w1, line_w1};
use holoweb::proj_geom::{distance, normalize};
use holoweb::{ChartAtlas, FamilySpec, PPoint};
use num_complex::Complex64;
use proptest::prelude::*;

fn complex() -> impl Strategy<Value = Complex64> {
    (-10.0..10.0f64, -10.0..10.0f64).prop_map(|(a, b)| Complex64::new(a, b))
}

fn point(k: usize) -> impl Strategy<Value = PPoint> {
    prop::collection::vec(complex(), k + 1).prop_filter_map("zero lift", |v| PPoint::new(v).ok())
}

fn scalar() -> impl Strategy<Value = Complex64> {
    (0.01..100.0f64, 0.0..std::f64::consts::TAU).prop_map(|(r, t)| Complex64::from_polar(r, t))
}

proptest! {
    #[test]
    fn normalization_is_canonical_and_idempotent(p in point(2)) {
        let n: f64 = p.coords().iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!((n - 1.0).abs() < 1e-14);
        let lead = p.coords().iter().find(|c| c.norm() > 1e-14).unwrap();
        prop_assert!(lead.im == 0.0 && lead.re > 0.0);
        prop_assert_eq!(normalize(&p), p.clone());
    }

    #[test]
    fn classes_ignore_scaling(v in prop::collection::vec(complex(), 3), s in scalar()) {
        prop_assume!(v.iter().any(|c| c.norm() > 1e-6));
        let p = PPoint::new(v.clone()).unwrap();
        let q = PPoint::new(v.iter().map(|c| c * s)).unwrap();
        prop_assert!(distance(&p, &q) < 1e-12);
    }

    #[test]
    fn chordal_distance_is_a_metric(p in point(1), q in point(1), r in point(1)) {
        let (pq, qp) = (distance(&p, &q), distance(&q, &p));
        prop_assert_eq!(pq, qp);
        prop_assert!((0.0..=1.0).contains(&pq));
        prop_assert!(distance(&p, &p) < 1e-7);
        prop_assert!(pq <= distance(&p, &r) + distance(&r, &q) + 1e-12);
    }

    #[test]
    fn charts_invert(p in point(2), off in prop::collection::vec(complex(), 2)) {
        let chart = ChartAtlas::standard(2).chart_at(&p).unwrap();
        prop_assert!(distance(&chart.from_chart(&[Complex64::new(0.0, 0.0); 2]), &p) < 1e-12);
        let z: Vec<Complex64> = off.iter().map(|c| c * 0.01).collect();
        let back = chart.to_chart(&chart.from_chart(&z)).unwrap();
        for (a, b) in back.iter().zip(&z) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn maps_are_well_defined_on_classes(z in complex(), s in scalar(), c in complex()) {
        let map = presets::quadratic().at(&[c * 0.1]).unwrap();
        let p = PPoint::affine1(z);
        let q = PPoint::new(p.coords().iter().map(|x| x * s)).unwrap();
        prop_assert!(distance(&map.eval(&p).unwrap(), &map.eval(&q).unwrap()) < 1e-12);
    }

    #[test]
    fn tempering_bounds_hold(
        logs in prop::collection::vec(-30.0..30.0f64, 1..300),
        eps in 1e-4..2.0f64,
    ) {
        let psi: Vec<f64> = logs.iter().map(|x| x.exp()).collect();
        let (a, b) = temper_sequence(&psi, eps).unwrap();
        prop_assert!(a <= 1.0 && b >= 1.0 && a > 0.0);
        for (i, &v) in psi.iter().enumerate() {
            let g = ((i + 1) as f64 * eps).exp();
            prop_assert!(a / g <= v && v <= b * g);
        }
    }

    #[test]
    fn transport_distances_are_symmetric(
        a in prop::collection::vec((0.0..1.0f64, 0.1..1.0f64), 1..40),
        b in prop::collection::vec((0.0..1.0f64, 0.1..1.0f64), 1..40),
    ) {
        prop_assert!((circle_w1(&a, &b) - circle_w1(&b, &a)).abs() < 1e-12);
        prop_assert!(circle_w1(&a, &a).abs() < 1e-12);
        prop_assert!(circle_w1(&a, &b) <= line_w1(a.clone(), b.clone()) + 1e-12);
    }

    #[test]
    fn summary_lines_round_trip(kv in prop::collection::vec(("[a-z_]{1,12}", "[ -~]{0,20}"), 0..10)) {
        let mut s = Summary::new();
        for (k, v) in &kv {
            s.put(k.clone(), v.trim());
        }
        prop_assert_eq!(Summary::parse(&s.render()).unwrap(), s);
    }
}

fn presets_all() -> Vec<FamilySpec> {
    vec![
        presets::power_map(3),
        presets::quadratic(),
        presets::chebyshev(),
        presets::product_map_p2(),
        presets::coupled_p2(Complex64::new(0.3, -0.1)),
    ]
}

#[test]
fn family_specs_round_trip_through_toml() {
    for spec in presets_all() {
        let text = spec.to_toml_string().unwrap();
        assert_eq!(FamilySpec::from_toml_str(&text).unwrap(), spec);
    }
}

#[test]
fn presets_are_endomorphisms() {
    for spec in presets_all() {
        assert!(validate_family(&spec).unwrap().is_valid(), "{:?}", spec.name);
    }
    let report = validate_family(&presets::degenerate_p1()).unwrap();
    assert!(!report.is_valid());
}

#[test]
fn chart_jacobian_matches_finite_differences() {
    let h = 1e-6;
    for spec in [presets::quadratic(), presets::coupled_p2(Complex64::new(0.3, -0.1))] {
        let lambda = vec![Complex64::new(-0.4, 0.3); spec.m];
        let map = spec.at(&lambda).unwrap();
        let k = spec.k;
        let p = PPoint::new((0..=k).map(|i| Complex64::new(0.3 + i as f64, 0.7 - 0.4 * i as f64))).unwrap();
        let sample = map.chart_jacobian(&p).unwrap();
        let src = map.atlas().chart_at(&p).unwrap();
        let dst = map.atlas().chart_at(&sample.image).unwrap();
        let g = |z: &[Complex64]| dst.to_chart(&map.eval(&src.from_chart(z)).unwrap()).unwrap();
        for j in 0..k {
            let mut e = vec![Complex64::new(0.0, 0.0); k];
            e[j] = Complex64::new(h, 0.0);
            let plus = g(&e);
            e[j] = Complex64::new(-h, 0.0);
            let minus = g(&e);
            for i in 0..k {
                let fd = (plus[i] - minus[i]) / (2.0 * h);
                assert!((fd - sample.matrix[(i, j)]).norm() < 1e-6, "{:?}: ({i},{j}) {fd} vs {}", spec.name, sample.matrix[(i, j)]);
            }
        }
        let iterate = map.chart_jacobian_iterate(&p, 1).unwrap();
        assert!((iterate.det - sample.det).norm() < 1e-10 * sample.det.norm().max(1.0));
    }
}

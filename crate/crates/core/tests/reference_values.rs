//! Engine outputs at fixed points against values frozen from independent
//! computations (exact algebra or 50-digit finite differences).

use finslerlab_core::connections::{
    barthel_curvature, berwald_coeffs, cartan_hcoeffs, concurrency_probe, connection_data, integrate_geodesic,
    nonlinear_connection, spray,
};
use finslerlab_core::matsumoto::{
    change_jets, change_scalars, concurrency_obstruction, predicted_spray, MatsumotoChange, Orientation,
};
use finslerlab_core::metric::{homogeneity_report, metric_data, Structure, TangentSample};
use finslerlab_core::models::{builtin, P0};
use finslerlab_core::{Error, ModelDef};

fn example() -> ModelDef {
    builtin("matsumoto_example").unwrap()
}

fn euclid() -> ModelDef {
    builtin("euclid_concurrent").unwrap()
}

fn p0(m: &ModelDef) -> TangentSample {
    m.sample(&P0.0, &P0.1)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn example_metric_and_cartan_at_p0() {
    let m = example();
    let md = metric_data(&m, &p0(&m)).unwrap();
    for (i, j, v) in [(0, 0, 7.0), (0, 1, -10.0), (1, 1, 22.0), (2, 2, 1.0), (0, 2, 0.0), (1, 2, 0.0)] {
        assert!(close(md.g.get(i, j), v, 1e-10), "g[{i}{j}] = {}", md.g.get(i, j));
    }
    assert!(close(md.cartan.get(0, 0, 0), -12.0, 1e-9));
    assert!(close(md.f, 10f64.sqrt(), 1e-12));
    let expected_ell = [-3.0, 12.0, 1.0].map(|v| v / 10f64.sqrt());
    for (a, b) in md.ell.iter().zip(expected_ell) {
        assert!(close(*a, b, 1e-10));
    }
}

#[test]
fn example_homogeneity_at_p0() {
    let m = example();
    assert!(homogeneity_report(&m, &p0(&m)).unwrap().max_residual() <= 1e-9);
}

#[test]
fn example_spray_family_at_p0() {
    let m = example();
    let s = p0(&m);
    let g = spray(&m, &s).unwrap();
    for (a, b) in g.iter().zip([0.0, 1.0, -4.5]) {
        assert!(close(*a, b, 1e-9), "{g:?}");
    }
    let nl = nonlinear_connection(&m, &s).unwrap();
    let ny = nl.apply(&s.y);
    for (a, b) in ny.iter().zip([0.0, 2.0, -9.0]) {
        assert!(close(*a, b, 1e-9), "{ny:?}");
    }
    assert!(nl.get(2, 2).abs() <= 1e-10);

    let scaled = m.sample(&s.x, &[2.0, 2.0, 2.0]);
    let g2 = spray(&m, &scaled).unwrap();
    for (a, b) in g2.iter().zip(&g) {
        assert!(close(*a, 4.0 * b, 1e-9));
    }

    let b = berwald_coeffs(&m, &s).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let by: f64 = (0..3).map(|k| b.get(i, j, k) * s.y[k]).sum();
            assert!(close(by, nl.get(i, j), 1e-9));
            for k in 0..3 {
                assert!((b.get(i, j, k) - b.get(i, k, j)).abs() <= 1e-10);
            }
        }
    }
    let r = barthel_curvature(&m, &s).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                assert!((r.get(i, j, k) + r.get(i, k, j)).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn example_cartan_connection_at_p0() {
    let m = example();
    let gamma = cartan_hcoeffs(&m, &p0(&m)).unwrap();
    assert!(close(gamma.get(0, 0, 2), 1.0, 1e-9));
    assert!(close(gamma.get(1, 1, 2), 1.0, 1e-9));
    assert!(gamma.get(2, 2, 2).abs() <= 1e-9);
}

#[test]
fn example_change_scalars_at_p0() {
    let m = example();
    let sc = change_scalars(&m, &m, &p0(&m), Orientation::Plus).unwrap();
    assert!(close(sc.phi_cap, 1.0, 1e-12));
    assert!(close(sc.p2, 1.0, 1e-12));
    assert!(close(sc.margin, 6.486832980505138, 1e-12));
    assert!(close(sc.f1, 0.4083827421848046, 1e-12));
    assert!(close(sc.f2, 9.749835303828429, 1e-12));
    assert!(close(sc.f_hat, 4.624752955742644, 1e-12));

    let minus = change_scalars(&m, &m, &p0(&m), Orientation::Minus).unwrap();
    assert!(close(minus.phi_cap, -1.0, 1e-12));
    assert!(close(minus.f_hat, 2.4025307335204215, 1e-12));
}

#[test]
fn hat_spray_at_p0_for_both_orientations() {
    let m = example();
    let s = p0(&m);
    // High-precision finite differences of F̂² through its own definition.
    let frozen = [
        (Orientation::Plus, [-0.204191371199, 0.795808628865, 0.170726280806]),
        (Orientation::Minus, [-0.906919739974, 0.0930802600223, -2.8744299843]),
    ];
    let base = spray(&m, &s).unwrap();
    for (o, expected) in frozen {
        let hat = MatsumotoChange::new(&m, &m, o);
        let hs = hat.sample(&s.x, &s.y);
        let direct = spray(&hat, &hs).unwrap();
        for (a, b) in direct.iter().zip(expected) {
            assert!(close(*a, b, 1e-9), "{o:?}: {direct:?}");
        }
        let sc = change_scalars(&m, &m, &s, o).unwrap();
        let predicted = predicted_spray(&sc, &base, &s.y);
        let gap = predicted.iter().zip(expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // The transformation law holds only for the field with σ = −1.
        match o {
            Orientation::Minus => assert!(gap <= 1e-9, "{predicted:?}"),
            Orientation::Plus => assert!(gap > 1e-1, "{predicted:?}"),
        }
    }
}

#[test]
fn change_outside_hat_domain_is_rejected() {
    let m = euclid();
    // F = 1 and Φ = 1 at x = (-1, 0), y = (1, 0) under the field -x.
    let s = m.sample(&[-1.0, 0.0], &[1.0, 0.0]);
    let err = change_scalars(&m, &m, &s, Orientation::Plus).unwrap_err();
    assert!(matches!(err, Error::OutsideHatDomain { .. }), "{err}");
}

#[test]
fn euclid_is_flat_and_field_vanishes_at_origin() {
    let m = euclid();
    let s = m.sample(&[0.3, -0.7], &[0.6, 0.8]);
    let md = metric_data(&m, &s).unwrap();
    assert!(md.g.data.iter().zip([1.0, 0.0, 0.0, 1.0]).all(|(a, b)| (a - b).abs() <= 1e-14));
    assert!(md.cartan.max_abs() <= 1e-14);
    let cd = connection_data(&m, &s, &md).unwrap();
    assert!(cd.spray.iter().all(|v| v.abs() <= 1e-14));
    assert!(cd.nonlinear.max_abs() <= 1e-14 && cd.cartan_gamma.max_abs() <= 1e-14);

    let origin = m.sample(&[0.0, 0.0], &[0.6, 0.8]);
    let sc = change_scalars(&m, &m, &origin, Orientation::Plus).unwrap();
    assert_eq!((sc.phi_cap, sc.p2), (0.0, 0.0));
    assert!(close(sc.margin, 1.0, 1e-15) && close(sc.f_hat, 1.0, 1e-15));
}

#[test]
fn concurrency_probe_signs() {
    let m = example();
    let batch: Vec<_> = [([1.0, 0.0, 1.0], [1.0, 1.0, 1.0]), ([1.5, 7.0, 0.8], [0.7, 1.3, -0.4])]
        .iter()
        .map(|(x, y)| m.sample(x, y))
        .collect();
    let r = concurrency_probe(&m, &m, &batch).unwrap();
    assert_eq!(r.sigma, 1.0);
    assert!(r.residual <= 1e-8 && r.vcov_max <= 1e-10, "{r:?}");

    let e = euclid();
    let r = concurrency_probe(&e, &e, &[e.sample(&[0.4, 1.1], &[1.0, -0.2])]).unwrap();
    assert_eq!(r.sigma, -1.0);
    assert!(r.residual <= 1e-12);

    let constant = ModelDef::parse("name = c\ndim = 2\nF = sqrt(y1^2 + y2^2)\nphi1 = 1\nphi2 = 0\n").unwrap();
    let r = concurrency_probe(&constant, &constant, &[constant.sample(&[0.4, 1.1], &[1.0, -0.2])]).unwrap();
    assert!((r.residual - 1.0).abs() <= 1e-12);
}

#[test]
fn obstruction_flags_the_example_but_not_a_vanishing_field() {
    let m = example();
    let cj = change_jets(&m, &m, &p0(&m), Orientation::Minus).unwrap();
    assert!(concurrency_obstruction(&cj).max_abs() > 1e-3);

    let zero = ModelDef::parse(
        "name = z\ndim = 3\nF = sqrt(x3^2 * ((x1^2 * y2^2 + 2 * y1 * y2) / y1)^2 + y3^2)\nphi1 = 0\nphi2 = 0\nphi3 = 0\n",
    )
    .unwrap();
    for o in Orientation::BOTH {
        let cj = change_jets(&zero, &zero, &zero.sample(&P0.0, &P0.1), o).unwrap();
        assert_eq!(concurrency_obstruction(&cj).max_abs(), 0.0);
    }
}

#[test]
fn geodesics_conserve_f() {
    let m = example();
    let tr = integrate_geodesic(&m, &p0(&m), 0.1, 1e-3).unwrap();
    assert!(tr.exit_time.is_none());
    assert!(tr.relative_drift() <= 1e-6, "{}", tr.relative_drift());
    assert!(close(tr.points[0].f, 10f64.sqrt(), 1e-12));

    let e = euclid();
    let tr = integrate_geodesic(&e, &e.sample(&[0.0, 0.0], &[1.0, 0.0]), 1.0, 1e-3).unwrap();
    let last = tr.points.last().unwrap();
    assert!((last.x[0] - 1.0).abs() <= 1e-12 && last.x[1].abs() <= 1e-12);
    assert!(tr.points.iter().all(|p| (p.f - 1.0).abs() <= 1e-12));

    let err = integrate_geodesic(&e, &e.sample(&[0.0, 0.0], &[1.0, 0.0]), 1.0, 0.0).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

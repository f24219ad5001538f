use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn linear_cases_have_zero_body_force() {
    for name in ["const-mu-rigid", "const-mu-shear"] {
        let case = build_case(name).unwrap();
        for y in [[0.1, 0.2, -0.3], [0.5, -0.1, 0.2]] {
            assert!(case.f.iter().all(|e| e.evaluate(y) == 0.0), "{name}");
            assert_eq!(case.g.evaluate(y), 0.0);
        }
    }
    let rigid = build_case("const-mu-rigid").unwrap();
    let gv = rigid.velocity_gradient([0.3, 0.1, 0.2]);
    for i in 0..3 {
        for j in 0..3 {
            assert!((gv[i][j] + gv[j][i]).abs() < 1e-15);
        }
    }
}

#[test]
fn poly1_data_matches_hand_values() {
    let case = build_case("poly1").unwrap();
    let y = [0.2, -0.1, 0.3];
    assert!((case.g.evaluate(y) - 2.0 * (0.2 - 0.1 + 0.3)).abs() < 1e-14);
    // f = ∂ᵢσⱼᵢ with μ = 2 + x1, vⱼ = xⱼ², p = x1.
    let mu = 2.0 + y[0];
    let div = 2.0 * (y[0] + y[1] + y[2]);
    let f1 = -1.0 + (4.0 * y[0] - 2.0 / 3.0 * div) + mu * (4.0 - 4.0 / 3.0);
    let f2 = mu * (4.0 - 4.0 / 3.0);
    assert!((case.f[0].evaluate(y) - f1).abs() < 1e-12);
    assert!((case.f[1].evaluate(y) - f2).abs() < 1e-12);
    assert!((case.f[2].evaluate(y) - f2).abs() < 1e-12);
}

#[test]
fn symbolic_operator_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pts: Vec<Vec3> = (0..50)
        .map(|_| loop {
            let p = [0, 1, 2].map(|_| rng.gen_range(-0.9..0.9));
            if geom::norm(p) < 0.9 {
                break p;
            }
        })
        .collect();
    for name in CASES {
        assert!(build_case(name).unwrap().fd_operator_error(&pts, 1e-4) < 1e-6, "{name}");
    }
    let case = build_case("poly1").unwrap();
    assert!(case.fd_operator_error(&[[0.0; 3]], 1e-4) < 1e-6);
}

#[test]
fn unknown_case_is_rejected() {
    assert!(matches!(build_case("nope"), Err(Error::UnknownCase(_))));
}

#[test]
fn first_green_identity_examples() {
    let d = Domain::ball(2, 2, 1.0).unwrap();
    let rigid = build_case("const-mu-rigid").unwrap();
    let u = rigid.v.clone();
    let r = first_green_identity_check(&rigid, &u, &d);
    assert!(r < 1e-10, "{r}");

    let pressure = ManufacturedCase::new("p1", Expression::constant(1.0), Expression::constant(1.0), [0, 1, 2].map(|_| Expression::constant(0.0)));
    let u = [Expression::var(1), expr::neg(Expression::var(0)), Expression::constant(0.0)];
    let r = first_green_identity_check(&pressure, &u, &d);
    assert!(r < 1e-10, "{r}");

    let poly = build_case("poly1").unwrap();
    let r = first_green_identity_check(&poly, &u, &Domain::ball(3, 2, 1.0).unwrap());
    assert!(r < 1e-2, "{r}");
}

#[test]
fn constant_viscosity_green_identity_has_no_remainder() {
    let d = Domain::ball(1, 2, 1.0).unwrap();
    let case = build_case("const-mu-shear").unwrap();
    assert!(case.mu.is_constant());
    let integ = default_integrator();
    let r = green_identity_residual(&case, &d, &integ);
    assert!(r.velocity.is_finite() && r.pressure.is_finite());
}

#[test]
fn slope_of_exact_power_law() {
    let h = [0.4, 0.2, 0.1];
    let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
    assert!((fit_slope(&h, &e) - 2.0).abs() < 1e-12);
}

use super::*;
use crate::integrate::{boundary_targets, point_targets};
use crate::kernels::pressure_kernel;
use std::f64::consts::PI;

fn ball() -> Domain {
    Domain::ball(1, 2, 1.0).unwrap()
}

fn linear_mu() -> ViscosityModel {
    ViscosityModel::parse("2 + x1", 0.5).unwrap()
}

fn probes(d: &Domain) -> Vec<Target> {
    point_targets(d, &[[0.1, 0.2, -0.15], [-0.3, 0.1, 0.25], [0.0, -0.4, 0.1], [0.45, 0.05, 0.3]])
}

fn repeat(c: Vec3, nodes: usize) -> Vec<f64> {
    (0..nodes).flat_map(|_| c).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn assembled_matrix_agrees_with_matrix_free_apply() {
    let d = ball();
    let mu = linear_mu();
    let integ = Integrator::default();
    let targets = probes(&d);
    let dens: Vec<f64> = (0..3 * d.surface.len()).map(|i| ((i * 7) % 11) as f64 / 11.0 - 0.4).collect();
    let m = single_layer(&d, &targets, &mu, &integ);
    assert_eq!((m.nrows(), m.ncols()), (12, 3 * d.surface.len()));
    let s = &d.surface;
    let free = apply(&targets, s.len(), 3, 3, &dens, |tg, t, buf| {
        let inv = -1.0 / mu.value(tg.y);
        blocks::single_layer(&integ, s, t, tg, buf).map(|v| v * inv)
    });
    assert!(max_diff(&m.apply(&dens).unwrap(), &free) < 1e-13);
    assert!(matches!(m.apply(&dens[1..]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn rigid_translation_reproduced_by_double_layer_and_remainder() {
    // v = c, p = 0 gives c + ℛc = -Wc inside and -½c - ℛc = 𝒲c on S.
    let d = ball();
    let integ = Integrator::default();
    let c = [0.3, -1.0, 0.7];
    for mu in [ViscosityModel::unit(), linear_mu()] {
        let targets = probes(&d);
        let w = double_layer(&d, &targets, &mu, &integ).apply(&repeat(c, d.surface.len())).unwrap();
        let r = remainder(&d, &targets, &mu, &integ).apply(&repeat(c, d.volume.len())).unwrap();
        for i in 0..targets.len() * 3 {
            let res = c[i % 3] + r[i] + w[i];
            assert!(res.abs() < 1e-4, "interior {i}: {res}");
        }
        let bt = boundary_targets(&d);
        let w = double_layer(&d, &bt, &mu, &integ).apply(&repeat(c, d.surface.len())).unwrap();
        let r = remainder(&d, &bt, &mu, &integ).apply(&repeat(c, d.volume.len())).unwrap();
        let worst = (0..bt.len() * 3).map(|i| (0.5 * c[i % 3] + r[i] + w[i]).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-3, "boundary {worst}");
    }
}

#[test]
fn normal_density_is_annihilated_by_single_layer_pair() {
    // (p, v, ψ) = (1, 0, -n) solves the homogeneous pressure and velocity rows.
    let d = ball();
    let mu = linear_mu();
    let integ = Integrator::default();
    let targets = probes(&d);
    let n: Vec<f64> = d.surface.normals.iter().flat_map(|n| *n).collect();
    let v = single_layer(&d, &targets, &mu, &integ).apply(&n).unwrap();
    assert!(v.iter().all(|x| x.abs() < 1e-6), "{v:?}");

    let (ps, _) = pressure_layers(&d, &targets, &mu, &integ).unwrap();
    for p in ps.apply(&n).unwrap() {
        assert!((p - 1.0).abs() < 1e-6, "{p}");
    }
    let bt = boundary_targets(&d);
    let vb = single_layer(&d, &bt, &mu, &integ).apply(&n).unwrap();
    assert!(vb.iter().all(|x| x.abs() < 1e-6), "{}", vb.iter().fold(0.0f64, |m, x| m.max(x.abs())));
}

#[test]
fn pressure_of_rigid_translation_vanishes() {
    // ℛ•c + Πᵈc = 0 at interior points.
    let d = ball();
    let integ = Integrator::default();
    let c = [1.0, 0.5, -0.25];
    for mu in [ViscosityModel::unit(), linear_mu()] {
        let targets = probes(&d);
        let (_, pd) = pressure_layers(&d, &targets, &mu, &integ).unwrap();
        let a = pd.apply(&repeat(c, d.surface.len())).unwrap();
        let b = pressure_remainder(&d, &targets, &mu, &integ).unwrap().apply(&repeat(c, d.volume.len())).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x + y).abs() < 1e-4, "{x} + {y}");
        }
    }
}

#[test]
fn pressure_remainder_matches_surface_oracle_for_linear_viscosity() {
    // With ∇μ = h constant the principal value is ∮ q̊ʲ nᵢ dS - δᵢⱼ/3, so
    // ℛ•c = 2 hᵢ cⱼ ∮ q̊ʲ nᵢ dS - 2 h·c.
    let d = ball();
    let mu = linear_mu();
    let integ = Integrator::default();
    let h = [1.0, 0.0, 0.0];
    let c = [0.2, -0.6, 0.9];
    let targets = probes(&d);
    let got = pressure_remainder(&d, &targets, &mu, &integ).unwrap().apply(&repeat(c, d.volume.len())).unwrap();
    let mut buf = Vec::new();
    for (tg, g) in targets.iter().zip(got) {
        let mut m = [[0.0; 3]; 3];
        for t in 0..d.surface.len() {
            let n = d.surface.normals[t];
            let v = integ.panel_integral(&d.surface, t, tg, &mut buf, |x| {
                let q = pressure_kernel(geom::sub(x, tg.y));
                flat9([0, 1, 2].map(|j| [0, 1, 2].map(|i| q[j] * n[i])))
            });
            for j in 0..3 {
                for i in 0..3 {
                    m[j][i] += v[3 * j + i];
                }
            }
        }
        let mut oracle = -2.0 * geom::dot(h, c);
        for i in 0..3 {
            for j in 0..3 {
                oracle += 2.0 * h[i] * c[j] * m[j][i];
            }
        }
        assert!((g - oracle).abs() < 1e-5, "{g} vs {oracle}");
    }
}

#[test]
fn vector_newton_potential_matches_gauss_oracle() {
    // -∫_Ω q̊ᵏ dx = -∮ E_Δ nₖ dS with E_Δ = -1/(4π|r|).
    let d = ball();
    let integ = Integrator::default();
    let mu = ViscosityModel::unit();
    let targets = probes(&d);
    let ops = newton(&d, &targets, &mu, &integ);
    let got = ops.qvec.apply(&vec![1.0; d.volume.len()]).unwrap();
    let mut buf = Vec::new();
    for (a, tg) in targets.iter().enumerate() {
        let mut oracle = [0.0; 3];
        for t in 0..d.surface.len() {
            let n = d.surface.normals[t];
            let v = integ.panel_integral(&d.surface, t, tg, &mut buf, |x| {
                geom::scale(n, 1.0 / (4.0 * PI * geom::dist(x, tg.y)))
            });
            oracle = geom::add(oracle, v);
        }
        for k in 0..3 {
            assert!((got[3 * a + k] - oracle[k]).abs() < 1e-5, "{} vs {}", got[3 * a + k], oracle[k]);
        }
        // Close to y/3 for the inscribed polyhedron.
        assert!(geom::dist(oracle, geom::scale(tg.y, 1.0 / 3.0)) < 0.05);
    }
}

#[test]
fn subtracted_gradients_match_finite_differences() {
    let d = ball();
    let mu = linear_mu();
    let integ = Integrator::default();
    // Differences of values from a much finer rule serve as the oracle.
    let fine = Integrator::new(crate::integrate::QuadSettings {
        near_angular: 24,
        near_radial: 24,
        cone_radial: 12,
        ..Default::default()
    });
    let w = |x: Vec3| mu.value(x);
    let y = [0.1, 0.2, -0.15];
    let step = 1e-4;
    let base = point_targets(&d, &[y])[0];
    let c = base.cell.unwrap();
    let at = |dy: Vec3| Target { y: geom::add(y, dy), ..base };
    let mut buf = Vec::new();
    for cell in [c, (c + 1) % d.volume.len(), (c + 37) % d.volume.len()] {
        let g = blocks::newton_vector_grad(&integ, &d.volume, cell, &base, &mut buf, &w);
        let rg = blocks::remainder_grad(&integ, &d.volume, cell, &base, &mut buf, &mu);
        let ng = blocks::newton_grad(&integ, &d.volume, cell, &base, &mut buf);
        for l in 0..3 {
            let mut e = [0.0; 3];
            e[l] = step;
            let plus = at(e);
            let minus = at(geom::scale(e, -1.0));
            let fd = |f: &dyn Fn(&Target, &mut Vec<QPoint>) -> Vec<f64>, buf: &mut Vec<QPoint>| {
                let (a, b) = (f(&plus, buf), f(&minus, buf));
                a.iter().zip(&b).map(|(a, b)| (a - b) / (2.0 * step)).collect::<Vec<_>>()
            };
            let q = fd(&|t, b| blocks::newton_vector(&fine, &d.volume, cell, t, b, &w).to_vec(), &mut buf);
            let r = fd(&|t, b| blocks::remainder(&fine, &d.volume, cell, t, b, &mu).to_vec(), &mut buf);
            let u = fd(&|t, b| blocks::newton(&fine, &d.volume, cell, t, b).to_vec(), &mut buf);
            let tol = |v: &[f64]| 3e-4 * v.iter().fold(1e-2f64, |m, x| m.max(x.abs()));
            for k in 0..3 {
                assert!((g[3 * k + l] - q[k]).abs() < tol(&q), "Q {cell} {k}{l}: {} vs {}", g[3 * k + l], q[k]);
                for j in 0..3 {
                    let idx = 9 * k + 3 * j + l;
                    assert!((rg[idx] - r[3 * k + j]).abs() < tol(&r), "R {cell}: {} vs {}", rg[idx], r[3 * k + j]);
                    assert!((ng[idx] - u[3 * k + j]).abs() < tol(&u), "U {cell}: {} vs {}", ng[idx], u[3 * k + j]);
                }
            }
        }
    }
}

#[test]
fn laplace_double_layer_of_unity() {
    let d = ball();
    let integ = Integrator::default();
    let one = vec![1.0; d.surface.len()];
    let inside = laplace_double_layer(&d, &probes(&d), &integ).apply(&one).unwrap();
    assert!(inside.iter().all(|v| (v - 1.0).abs() < 1e-6), "{inside:?}");
    let outside = laplace_double_layer(&d, &point_targets(&d, &[[0.0, 0.0, 1.5]]), &integ).apply(&one).unwrap();
    assert!(outside[0].abs() < 1e-6);
    let on = laplace_double_layer(&d, &boundary_targets(&d), &integ).apply(&one).unwrap();
    assert!(on.iter().all(|v| (v - 0.5).abs() < 1e-3), "{:?}", &on[..4]);
}

#[test]
fn adjoint_double_layer_converges_to_transpose_identity() {
    // ⟨𝒲′ψ, c⟩ = ⟨ψ, 𝒲c⟩ = -½⟨ψ, c⟩. Flat panels make 𝒲′ψ singular
    // near edges, so the collocated pairing only converges like h.
    let mu = ViscosityModel::unit();
    let integ = Integrator::default();
    let mut errs = Vec::new();
    for sub in [2, 3] {
        let d = Domain::ball(sub, 1, 1.0).unwrap();
        let bt = boundary_targets(&d);
        let v0 = single_layer(&d, &bt, &mu, &integ);
        let wp = adjoint_double_layer(&d, &mu, &v0, &integ);
        let s = &d.surface;
        let psi: Vec<f64> = s.centroids.iter().flat_map(|x| [x[1], x[0] * x[2], 1.0 + x[2]]).collect();
        let c = repeat([0.3, 0.5, -1.0], s.len());
        let inner = |a: &[f64], b: &[f64]| {
            (0..s.len()).map(|t| s.areas[t] * (0..3).map(|k| a[3 * t + k] * b[3 * t + k]).sum::<f64>()).sum::<f64>()
        };
        let exact = -0.5 * inner(&psi, &c);
        errs.push((inner(&wp.apply(&psi).unwrap(), &c) - exact).abs() / exact.abs());
    }
    assert!(errs[1] < 0.6 * errs[0] && errs[1] < 0.06, "{errs:?}");
}

#[test]
fn single_layer_is_continuous_across_the_boundary() {
    let d = ball();
    let mu = linear_mu();
    let integ = Integrator::default();
    let s = &d.surface;
    let psi: Vec<f64> = s.centroids.iter().flat_map(|x| [x[1] + 1.0, x[0], -x[2]]).collect();
    let bt = boundary_targets(&d);
    let on = single_layer(&d, &bt, &mu, &integ).apply(&psi).unwrap();
    for t in [0, 17, 55] {
        let y = geom::axpy(s.centroids[t], -1e-3 * s.diameters[t], s.normals[t]);
        let off = single_layer(&d, &point_targets(&d, &[y]), &mu, &integ).apply(&psi).unwrap();
        assert!(max_diff(&off, &on[3 * t..3 * t + 3]) < 2e-3, "{off:?} vs {:?}", &on[3 * t..3 * t + 3]);
    }
}

#[test]
fn interior_only_operators_reject_boundary_targets() {
    let d = ball();
    let mu = linear_mu();
    let integ = Integrator::default();
    let bt = boundary_targets(&d);
    assert!(matches!(pressure_layers(&d, &bt, &mu, &integ), Err(Error::UnsupportedTarget(_))));
    assert!(matches!(pressure_remainder(&d, &bt, &mu, &integ), Err(Error::UnsupportedTarget(_))));
}

#[test]
fn constant_viscosity_remainders_vanish() {
    let d = ball();
    let mu = ViscosityModel::constant(3.0);
    let integ = Integrator::default();
    let targets = probes(&d);
    assert_eq!(remainder(&d, &targets, &mu, &integ).max_abs(), 0.0);
    assert_eq!(pressure_remainder(&d, &targets, &mu, &integ).unwrap().max_abs(), 0.0);
    // Scaling: V with μ = 3 is V with μ = 1 divided by 3.
    let v3 = single_layer(&d, &targets, &mu, &integ);
    let v1 = single_layer(&d, &targets, &ViscosityModel::unit(), &integ);
    assert!(max_diff(&v3.data, &v1.data.iter().map(|x| x / 3.0).collect::<Vec<_>>()) < 1e-15);
}

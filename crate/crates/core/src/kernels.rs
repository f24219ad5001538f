//! Closed-form Stokes, parametrix, remainder and Laplace kernels.
//!
//! Index convention (see `docs/conventions.md`): `k` is the source/force
//! direction and `j` the field component, so `velocity[k][j]` is ůⱼᵏ,
//! `pressure[k]` is q̊ᵏ, `stress[k][i][j]` is σ̊ᵢⱼᵏ and `traction[k][i]` is
//! T̊ᵢᵏ = σ̊ᵢⱼᵏ nⱼ. All kernels are functions of r = x - y.
//!
//! q̊ᵏ is the pressure of the point force when read as a field of `y`; as a
//! field of `x` the pressure that goes with ůᵏ and σ̊ᵏ is -q̊ᵏ. The raw
//! helpers below are the building blocks for assembly and skip the
//! coincidence guard.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::expr::ViscosityModel;
use crate::geom::{self, Vec3};

pub const COINCIDENCE_GUARD: f64 = 1e-12;

pub type Mat3 = [[f64; 3]; 3];
pub type Tensor3 = [[[f64; 3]; 3]; 3];

const INV_4PI: f64 = 1.0 / (4.0 * PI);
const INV_8PI: f64 = 1.0 / (8.0 * PI);

#[inline]
fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

/// ůⱼᵏ(r) = -(1/8π)(δⱼₖ/|r| + rⱼ rₖ/|r|³), symmetric.
#[inline]
pub fn stokeslet(r: Vec3) -> Mat3 {
    let r2 = geom::dot(r, r);
    let ir = 1.0 / r2.sqrt();
    let ir3 = ir / r2;
    let mut u = [[0.0; 3]; 3];
    for k in 0..3 {
        for j in k..3 {
            let v = -INV_8PI * (delta(j, k) * ir + r[j] * r[k] * ir3);
            u[k][j] = v;
            u[j][k] = v;
        }
    }
    u
}

/// ∂ůⱼᵏ/∂xₗ, indexed `[k][j][l]`.
#[inline]
pub fn stokeslet_grad_x(r: Vec3) -> Tensor3 {
    let r2 = geom::dot(r, r);
    let ir = 1.0 / r2.sqrt();
    let ir3 = ir / r2;
    let ir5 = ir3 / r2;
    let mut g = [[[0.0; 3]; 3]; 3];
    for k in 0..3 {
        for j in 0..3 {
            for l in 0..3 {
                g[k][j][l] = -INV_8PI
                    * (-delta(j, k) * r[l] * ir3
                        + (delta(j, l) * r[k] + delta(k, l) * r[j]) * ir3
                        - 3.0 * r[j] * r[k] * r[l] * ir5);
            }
        }
    }
    g
}

/// q̊ᵏ(r) = rₖ / (4π|r|³).
#[inline]
pub fn pressure_kernel(r: Vec3) -> Vec3 {
    let r2 = geom::dot(r, r);
    let s = INV_4PI / (r2 * r2.sqrt());
    geom::scale(r, s)
}

/// ∂q̊ᵏ/∂xₗ = (δₖₗ|r|² - 3 rₖ rₗ) / (4π|r|⁵), indexed `[k][l]`, symmetric.
#[inline]
pub fn pressure_kernel_grad_x(r: Vec3) -> Mat3 {
    let r2 = geom::dot(r, r);
    let ir5 = INV_4PI / (r2 * r2 * r2.sqrt());
    let mut g = [[0.0; 3]; 3];
    for k in 0..3 {
        for l in k..3 {
            let v = (delta(k, l) * r2 - 3.0 * r[k] * r[l]) * ir5;
            g[k][l] = v;
            g[l][k] = v;
        }
    }
    g
}

/// σ̊ᵢⱼᵏ(r) = (3/4π) rᵢ rⱼ rₖ / |r|⁵; fully symmetric.
#[inline]
pub fn stresslet(r: Vec3) -> Tensor3 {
    let r2 = geom::dot(r, r);
    let s = 3.0 * INV_4PI / (r2 * r2 * r2.sqrt());
    let mut t = [[[0.0; 3]; 3]; 3];
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                t[k][i][j] = s * r[i] * r[j] * r[k];
            }
        }
    }
    t
}

/// σ̊ᵢⱼᵏ nⱼ, indexed `[k][i]`, symmetric in (k, i).
#[inline]
pub fn stresslet_traction(r: Vec3, n: Vec3) -> Mat3 {
    let r2 = geom::dot(r, r);
    let s = 3.0 * INV_4PI * geom::dot(r, n) / (r2 * r2 * r2.sqrt());
    let mut t = [[0.0; 3]; 3];
    for k in 0..3 {
        for i in 0..3 {
            t[k][i] = s * r[i] * r[k];
        }
    }
    t
}

/// ∂σ̊ᵢⱼᵏ/∂xₗ, indexed `[k][i][j][l]`.
#[inline]
pub fn stresslet_grad_x(r: Vec3) -> [Tensor3; 3] {
    let r2 = geom::dot(r, r);
    let ir5 = 1.0 / (r2 * r2 * r2.sqrt());
    let ir7 = ir5 / r2;
    let c = 3.0 * INV_4PI;
    let mut g = [[[[0.0; 3]; 3]; 3]; 3];
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                for l in 0..3 {
                    g[k][i][j][l] = c
                        * ((delta(i, l) * r[j] * r[k]
                            + delta(j, l) * r[i] * r[k]
                            + delta(k, l) * r[i] * r[j])
                            * ir5
                            - 5.0 * r[i] * r[j] * r[k] * r[l] * ir7);
                }
            }
        }
    }
    g
}

/// Evaluation pair with an optional normal at `x`.
#[derive(Clone, Copy, Debug)]
pub struct KernelPoint {
    pub x: Vec3,
    pub y: Vec3,
    pub n: Option<Vec3>,
}

impl KernelPoint {
    pub fn new(x: Vec3, y: Vec3) -> Self {
        Self { x, y, n: None }
    }

    pub fn with_normal(x: Vec3, y: Vec3, n: Vec3) -> Self {
        Self { x, y, n: Some(n) }
    }

    fn offset(&self) -> Result<Vec3> {
        let r = geom::sub(self.x, self.y);
        let distance = geom::norm(r);
        if distance < COINCIDENCE_GUARD {
            return Err(Error::CoincidentPoints { distance });
        }
        Ok(r)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StokesKernelValues {
    /// `[k]`: q̊ᵏ.
    pub pressure: Vec3,
    /// `[k][j]`: ůⱼᵏ.
    pub velocity: Mat3,
    /// `[k][i][j]`: σ̊ᵢⱼᵏ.
    pub stress: Tensor3,
    /// `[k][i]`: T̊ᵢᵏ, present when a normal was supplied.
    pub traction: Option<Mat3>,
}

pub fn fundamental_pair(kp: &KernelPoint) -> Result<StokesKernelValues> {
    let r = kp.offset()?;
    Ok(StokesKernelValues {
        pressure: pressure_kernel(r),
        velocity: stokeslet(r),
        stress: stresslet(r),
        traction: kp.n.map(|n| stresslet_traction(r, n)),
    })
}

/// qᵏ = (μ(x)/μ(y)) q̊ᵏ, uⱼᵏ = ůⱼᵏ/μ(y), σ and T scaled by μ(x)/μ(y).
pub fn parametrix_pair(kp: &KernelPoint, mu: &ViscosityModel) -> Result<StokesKernelValues> {
    let mut v = fundamental_pair(kp)?;
    let (mx, my) = (mu.value(kp.x), mu.value(kp.y));
    let ratio = mx / my;
    v.pressure = geom::scale(v.pressure, ratio);
    for row in v.velocity.iter_mut() {
        *row = geom::scale(*row, 1.0 / my);
    }
    for k in 0..3 {
        for i in 0..3 {
            v.stress[k][i] = geom::scale(v.stress[k][i], ratio);
        }
    }
    if let Some(t) = v.traction.as_mut() {
        for row in t.iter_mut() {
            *row = geom::scale(*row, ratio);
        }
    }
    Ok(v)
}

/// R_kj = (1/μ(y)) ∂ᵢμ(x) σ̊ᵢⱼᵏ(x - y), indexed `[k][j]`.
pub fn remainder_kernel(kp: &KernelPoint, mu: &ViscosityModel) -> Result<Mat3> {
    let r = kp.offset()?;
    Ok(remainder_raw(r, mu.gradient(kp.x), 1.0 / mu.value(kp.y)))
}

#[inline]
pub fn remainder_raw(r: Vec3, grad_mu_x: Vec3, inv_mu_y: f64) -> Mat3 {
    let r2 = geom::dot(r, r);
    let s = 3.0 * INV_4PI * geom::dot(grad_mu_x, r) * inv_mu_y / (r2 * r2 * r2.sqrt());
    let mut m = [[0.0; 3]; 3];
    for k in 0..3 {
        for j in 0..3 {
            m[k][j] = s * r[j] * r[k];
        }
    }
    m
}

/// E_Δ = -1/(4π|r|) and, with a normal, ∂E_Δ/∂n(x) = q̊ʲ nⱼ.
pub fn laplace_pair(kp: &KernelPoint) -> Result<(f64, Option<f64>)> {
    let r = kp.offset()?;
    let e = -INV_4PI / geom::norm(r);
    Ok((e, kp.n.map(|n| geom::dot(pressure_kernel(r), n))))
}

/// y-gradients of the fundamental and parametrix pairs.
#[derive(Clone, Debug)]
pub struct YDerivatives {
    /// `[k][l]`: ∂q̊ᵏ/∂yₗ.
    pub pressure: Mat3,
    /// `[k][j][l]`: ∂ůⱼᵏ/∂yₗ.
    pub velocity: Tensor3,
    /// `[k][l]`: ∂qᵏ/∂yₗ.
    pub parametrix_pressure: Mat3,
    /// `[k][j][l]`: ∂uⱼᵏ/∂yₗ.
    pub parametrix_velocity: Tensor3,
}

pub fn kernel_y_derivatives(kp: &KernelPoint, mu: &ViscosityModel) -> Result<YDerivatives> {
    let r = kp.offset()?;
    let mut dq = pressure_kernel_grad_x(r);
    let mut du = stokeslet_grad_x(r);
    for row in dq.iter_mut() {
        *row = geom::scale(*row, -1.0);
    }
    for k in 0..3 {
        for j in 0..3 {
            du[k][j] = geom::scale(du[k][j], -1.0);
        }
    }
    let q = pressure_kernel(r);
    let u = stokeslet(r);
    let (mx, my) = (mu.value(kp.x), mu.value(kp.y));
    let gy = mu.gradient(kp.y);
    let mut pq = [[0.0; 3]; 3];
    let mut pu = [[[0.0; 3]; 3]; 3];
    for k in 0..3 {
        for l in 0..3 {
            pq[k][l] = mx * (dq[k][l] / my - gy[l] / (my * my) * q[k]);
            for j in 0..3 {
                pu[k][j][l] = du[k][j][l] / my - gy[l] / (my * my) * u[k][j];
            }
        }
    }
    Ok(YDerivatives { pressure: dq, velocity: du, parametrix_pressure: pq, parametrix_velocity: pu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const X1: Vec3 = [1.0, 0.0, 0.0];
    const O: Vec3 = [0.0, 0.0, 0.0];

    #[test]
    fn closed_form_spot_values() {
        let v = fundamental_pair(&KernelPoint::new(X1, O)).unwrap();
        let q1 = 1.0 / (4.0 * PI);
        assert!((v.pressure[0] - 0.0795775).abs() < 1e-7);
        assert!((v.pressure[0] - q1).abs() <= 1e-12);
        assert!((v.velocity[0][0] + q1).abs() <= 1e-12);
        assert_eq!(v.velocity[0][1], 0.0);
        assert!((v.stress[0][0][0] - 3.0 / (4.0 * PI)).abs() <= 1e-12);
        assert!((v.stress[0][0][0] - 0.2387324).abs() < 1e-7);
        assert_eq!(v.stress[0][0][1], 0.0);
        assert!(v.traction.is_none());
    }

    #[test]
    fn coincident_points_are_rejected() {
        let kp = KernelPoint::new([0.1, 0.2, 0.3], [0.1, 0.2, 0.3 + 1e-13]);
        assert!(matches!(fundamental_pair(&kp), Err(Error::CoincidentPoints { .. })));
        assert!(laplace_pair(&kp).is_err());
        assert!(remainder_kernel(&kp, &ViscosityModel::unit()).is_err());
    }

    #[test]
    fn parametrix_scaling() {
        // μ = x1 + 2 gives μ(x) = 2 at x1 = 0 and μ(y) = 4 at y1 = 2.
        let mu = ViscosityModel::parse("x1 + 2", 0.1).unwrap();
        let kp = KernelPoint::with_normal([0.0, 0.3, -0.2], [2.0, 0.1, 0.4], [0.0, 0.6, 0.8]);
        let f = fundamental_pair(&kp).unwrap();
        let p = parametrix_pair(&kp, &mu).unwrap();
        for k in 0..3 {
            assert!((p.pressure[k] - 0.5 * f.pressure[k]).abs() <= 1e-14 * f.pressure[k].abs());
            for j in 0..3 {
                assert!((p.velocity[k][j] - 0.25 * f.velocity[k][j]).abs() <= 1e-14 * f.velocity[k][j].abs());
            }
        }
        let unit = parametrix_pair(&kp, &ViscosityModel::unit()).unwrap();
        assert_eq!(unit, f);
    }

    #[test]
    fn remainder_values() {
        let kp = KernelPoint::new(X1, O);
        let r = remainder_kernel(&kp, &ViscosityModel::constant(3.0)).unwrap();
        assert!(r.iter().flatten().all(|&v| v == 0.0));
        let mu = ViscosityModel::parse("2 + x1", 0.1).unwrap();
        let r = remainder_kernel(&kp, &mu).unwrap();
        assert!((r[0][0] - 3.0 / (8.0 * PI)).abs() <= 1e-15);
        // Homogeneity of degree -2 for constant ∇μ.
        let dir = geom::normalize([0.3, -0.4, 0.5]);
        let y = [0.1, 0.0, 0.0];
        let near = remainder_kernel(&KernelPoint::new(geom::axpy(y, 0.5, dir), y), &mu).unwrap();
        let far = remainder_kernel(&KernelPoint::new(geom::axpy(y, 1.0, dir), y), &mu).unwrap();
        for k in 0..3 {
            for j in 0..3 {
                assert!(far[k][j].abs() <= (0.25 + 1e-12) * near[k][j].abs());
            }
        }
    }

    #[test]
    fn laplace_values() {
        let (e, dn) = laplace_pair(&KernelPoint::with_normal(X1, O, X1)).unwrap();
        assert!((e + 1.0 / (4.0 * PI)).abs() <= 1e-15);
        assert!((dn.unwrap() - 1.0 / (4.0 * PI)).abs() <= 1e-15);
        let (_, dn) = laplace_pair(&KernelPoint::with_normal(X1, O, [0.0, 1.0, 0.0])).unwrap();
        assert_eq!(dn.unwrap(), 0.0);
    }

    /// Stress of (P, ůᵏ) at x with unit viscosity, using the analytic
    /// velocity gradient; `sign` selects the pressure ±q̊ᵏ.
    fn stress_field(x: Vec3, y: Vec3, k: usize, sign: f64) -> Mat3 {
        let r = geom::sub(x, y);
        let g = stokeslet_grad_x(r);
        let p = sign * pressure_kernel(r)[k];
        let mut s = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] = -p * delta(i, j) + g[k][j][i] + g[k][i][j];
            }
        }
        s
    }

    fn fd_divergence(f: impl Fn(Vec3) -> Mat3, x: Vec3, h: f64) -> Vec3 {
        let mut out = [0.0; 3];
        for i in 0..3 {
            let (mut a, mut b) = (x, x);
            a[i] += h;
            b[i] -= h;
            let (sa, sb) = (f(a), f(b));
            for j in 0..3 {
                out[j] += (sa[i][j] - sb[i][j]) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn fundamental_pair_solves_stokes_in_x_with_negated_pressure() {
        let y = [0.1, -0.2, 0.3];
        let x = [0.7, 0.4, -0.3];
        for k in 0..3 {
            let div = fd_divergence(|p| stress_field(p, y, k, -1.0), x, 1e-4);
            assert!(geom::norm(div) <= 1e-5, "k={k}: {div:?}");
            // The stress is exactly σ̊ᵏ.
            let s = stress_field(x, y, k, -1.0);
            let st = stresslet(geom::sub(x, y));
            for i in 0..3 {
                for j in 0..3 {
                    assert!((s[i][j] - st[k][i][j]).abs() <= 1e-12);
                }
            }
            // With the pressure sign as displayed the x-momentum residual is
            // not zero.
            let wrong = fd_divergence(|p| stress_field(p, y, k, 1.0), x, 1e-4);
            assert!(geom::norm(wrong) > 1e-2);
        }
    }

    #[test]
    fn pressure_kernel_is_the_y_pressure() {
        // As a field of y with the source at x, (q̊ᵏ, ůᵏ) satisfies the
        // constant-viscosity Stokes system.
        let x = [0.7, 0.4, -0.3];
        let y = [0.1, -0.2, 0.3];
        for k in 0..3 {
            let stress_y = |yy: Vec3| {
                let r = geom::sub(x, yy);
                let g = stokeslet_grad_x(r);
                let p = pressure_kernel(r)[k];
                let mut s = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        s[i][j] = -p * delta(i, j) - g[k][j][i] - g[k][i][j];
                    }
                }
                s
            };
            assert!(geom::norm(fd_divergence(stress_y, y, 1e-4)) <= 1e-5);
        }
    }

    #[test]
    fn stokeslet_is_divergence_free() {
        let y = [0.0, 0.0, 0.0];
        let x = [0.5, -0.6, 0.6];
        let h = 1e-5;
        for k in 0..3 {
            let mut div = 0.0;
            for j in 0..3 {
                let (mut a, mut b) = (x, x);
                a[j] += h;
                b[j] -= h;
                div += (stokeslet(geom::sub(a, y))[k][j] - stokeslet(geom::sub(b, y))[k][j]) / (2.0 * h);
            }
            assert!(div.abs() <= 1e-6);
        }
    }

    #[test]
    fn parametrix_residual_is_the_remainder() {
        // 𝒜ⱼ(x; -qᵏ, uᵏ) = R_kj, using the x-pressure sign.
        let mu = ViscosityModel::parse("2 + x1 + 0.5*x2*x3", 0.1).unwrap();
        let y = [0.1, -0.2, 0.3];
        let x = [0.6, 0.3, -0.2];
        let (my, h) = (mu.value(y), 1e-4);
        for k in 0..3 {
            let stress = |p: Vec3| {
                let s = stress_field(p, y, k, -1.0);
                let scale = mu.value(p) / my;
                s.map(|row| geom::scale(row, scale))
            };
            let div = fd_divergence(stress, x, h);
            let r = remainder_kernel(&KernelPoint::new(x, y), &mu).unwrap();
            for j in 0..3 {
                assert!((div[j] - r[k][j]).abs() <= 1e-5, "k={k} j={j}: {} vs {}", div[j], r[k][j]);
            }
        }
    }

    #[test]
    fn traction_symmetry() {
        let r = [0.3, -0.8, 0.5];
        let n = geom::normalize([1.0, 2.0, -0.5]);
        let t = stresslet_traction(r, n);
        for k in 0..3 {
            for i in 0..3 {
                assert!((t[k][i] - t[i][k]).abs() <= 1e-15);
            }
        }
    }

    fn fd_y<const N: usize>(f: impl Fn(Vec3) -> [f64; N], y: Vec3, h: f64) -> [[f64; 3]; N] {
        let mut out = [[0.0; 3]; N];
        for l in 0..3 {
            let (mut a, mut b) = (y, y);
            a[l] += h;
            b[l] -= h;
            let (fa, fb) = (f(a), f(b));
            for m in 0..N {
                out[m][l] = (fa[m] - fb[m]) / (2.0 * h);
            }
        }
        out
    }

    proptest! {
        #[test]
        fn y_derivatives_match_finite_differences(
            x in prop::array::uniform3(-1.0f64..1.0),
            y in prop::array::uniform3(-1.0f64..1.0),
        ) {
            prop_assume!(geom::dist(x, y) > 0.3);
            let mu = ViscosityModel::parse("2 + x1 + x2*x3", 0.1).unwrap();
            let d = kernel_y_derivatives(&KernelPoint::new(x, y), &mu).unwrap();
            let h = 1e-5;
            let q = fd_y(|yy| pressure_kernel(geom::sub(x, yy)), y, h);
            let pq = fd_y(|yy| parametrix_pair(&KernelPoint::new(x, yy), &mu).unwrap().pressure, y, h);
            for k in 0..3 {
                for l in 0..3 {
                    let tol = 1e-7 * (1.0 + d.pressure[k][l].abs());
                    prop_assert!((q[k][l] - d.pressure[k][l]).abs() <= tol);
                    let tol = 1e-7 * (1.0 + d.parametrix_pressure[k][l].abs());
                    prop_assert!((pq[k][l] - d.parametrix_pressure[k][l]).abs() <= tol);
                }
                let u = fd_y(|yy| stokeslet(geom::sub(x, yy))[k], y, h);
                let pu = fd_y(|yy| parametrix_pair(&KernelPoint::new(x, yy), &mu).unwrap().velocity[k], y, h);
                for j in 0..3 {
                    for l in 0..3 {
                        prop_assert!((u[j][l] - d.velocity[k][j][l]).abs() <= 1e-7 * (1.0 + d.velocity[k][j][l].abs()));
                        prop_assert!((pu[j][l] - d.parametrix_velocity[k][j][l]).abs() <= 1e-7 * (1.0 + d.parametrix_velocity[k][j][l].abs()));
                    }
                }
            }
        }

        #[test]
        fn swap_flips_y_derivative(
            x in prop::array::uniform3(-1.0f64..1.0),
            y in prop::array::uniform3(-1.0f64..1.0),
        ) {
            prop_assume!(geom::dist(x, y) > 1e-3);
            let mu = ViscosityModel::unit();
            let a = kernel_y_derivatives(&KernelPoint::new(x, y), &mu).unwrap();
            let b = kernel_y_derivatives(&KernelPoint::new(y, x), &mu).unwrap();
            for k in 0..3 {
                for j in 0..3 {
                    for l in 0..3 {
                        prop_assert_eq!(a.velocity[k][j][l], -b.velocity[k][j][l]);
                    }
                }
            }
        }

        #[test]
        fn homogeneity_of_derivatives(dir in prop::array::uniform3(-1.0f64..1.0), s in 0.2f64..3.0) {
            prop_assume!(geom::norm(dir) > 0.1);
            let r = geom::normalize(dir);
            let rs = geom::scale(r, s);
            let (g1, gs) = (pressure_kernel_grad_x(r), pressure_kernel_grad_x(rs));
            let (u1, us) = (stokeslet_grad_x(r), stokeslet_grad_x(rs));
            for k in 0..3 {
                for l in 0..3 {
                    prop_assert!((gs[k][l] * s.powi(3) - g1[k][l]).abs() <= 1e-12);
                    for j in 0..3 {
                        prop_assert!((us[k][j][l] * s * s - u1[k][j][l]).abs() <= 1e-12);
                    }
                }
            }
        }

        #[test]
        fn stress_derivative_matches_finite_differences(dir in prop::array::uniform3(-1.0f64..1.0)) {
            prop_assume!(geom::norm(dir) > 0.3);
            let g = stresslet_grad_x(dir);
            let h = 1e-6;
            for l in 0..3 {
                let (mut a, mut b) = (dir, dir);
                a[l] += h;
                b[l] -= h;
                let (sa, sb) = (stresslet(a), stresslet(b));
                for k in 0..3 {
                    for i in 0..3 {
                        for j in 0..3 {
                            let fd = (sa[k][i][j] - sb[k][i][j]) / (2.0 * h);
                            prop_assert!((fd - g[k][i][j][l]).abs() <= 1e-6 * (1.0 + fd.abs()));
                        }
                    }
                }
            }
        }
    }
}

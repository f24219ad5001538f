//! Interior limits at boundary nodes by evaluation at offset points
//! `y - δn` and Richardson extrapolation to `δ = 0`.
//!
//! Potentials are described by their local jet at a point: the pressure
//! `P`, the scaled velocity `S = μ v` and its gradient. With
//! `μ ∂ₗvₖ = ∂ₗSₖ - Sₖ ∂ₗμ/μ` the traction is
//! `Tₖ = -P nₖ + (μ∂ₗvₖ + μ∂ₖvₗ - (2/3) δₖₗ μ div v) nₗ`.

use rayon::prelude::*;

use super::{blocks, scatter_linear, NodeKind, OperatorMatrix, OperatorTag, Space};
use crate::stencil::GradientStencil;
use crate::error::{Error, Result};
use crate::expr::ViscosityModel;
use crate::geom::{self, Vec3};
use crate::integrate::{Integrator, QPoint, Target};
use crate::kernels::Mat3;
use crate::mesh::Domain;

/// Pressure, scaled velocity `μv` and `∂ₗ(μv)ₖ` stored `[k][l]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub p: f64,
    pub s: Vec3,
    pub ds: Mat3,
}

impl Jet {
    pub fn axpy(&mut self, a: f64, other: &Jet) {
        self.p += a * other.p;
        for k in 0..3 {
            self.s[k] += a * other.s[k];
            for l in 0..3 {
                self.ds[k][l] += a * other.ds[k][l];
            }
        }
    }

    /// Traction for the outward normal `n` at a point with viscosity `mu`
    /// and viscosity gradient `grad_mu`.
    pub fn traction(&self, mu: f64, grad_mu: Vec3, n: Vec3) -> Vec3 {
        let mut g = [[0.0; 3]; 3];
        for k in 0..3 {
            for l in 0..3 {
                g[k][l] = self.ds[k][l] - self.s[k] * grad_mu[l] / mu;
            }
        }
        let div = g[0][0] + g[1][1] + g[2][2];
        let mut t = [0.0; 3];
        for k in 0..3 {
            t[k] = -self.p * n[k] - (2.0 / 3.0) * div * n[k];
            for l in 0..3 {
                t[k] += (g[k][l] + g[l][k]) * n[l];
            }
        }
        t
    }
}

/// Interior offset points of every boundary node, two per node with
/// `δ₂ = δ₁ / 2`.
#[derive(Clone, Debug)]
pub struct Offsets {
    /// `[δ₁, δ₂]` targets per boundary node.
    pub targets: Vec<[Target; 2]>,
    pub normals: Vec<Vec3>,
}

impl Offsets {
    /// Offsets `factor·h` and `factor·h/2`, `h` the local panel diameter.
    pub fn new(domain: &Domain, factor: f64) -> Result<Self> {
        let s = &domain.surface;
        let mut targets = Vec::with_capacity(s.len());
        for t in 0..s.len() {
            let d = factor * s.diameters[t];
            let pair = [d, 0.5 * d].map(|d| {
                let y = geom::axpy(s.centroids[t], -d, s.normals[t]);
                domain.volume.locate(y).map(|c| Target::interior(y, Some(c)))
            });
            match pair {
                [Some(a), Some(b)] => targets.push([a, b]),
                _ => return Err(Error::Mesh(format!("offset point of boundary node {t} lies outside the domain"))),
            }
        }
        Ok(Self { targets, normals: s.normals.clone() })
    }

    /// Offsets used for the traction rows, `δ ∈ {0.25h, 0.125h}`.
    pub fn traction(domain: &Domain) -> Result<Self> {
        Self::new(domain, 0.25)
    }

    /// Offsets used for jump-relation checks, `δ ∈ {0.1h, 0.05h}`.
    pub fn jump(domain: &Domain) -> Result<Self> {
        Self::new(domain, 0.1)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[inline]
fn richardson(far: Vec3, near: Vec3) -> Vec3 {
    [0, 1, 2].map(|k| 2.0 * near[k] - far[k])
}

/// Dense T⁺ operator from per-(target, source) jets, one jet per density
/// component.
pub fn traction_matrix<const M: usize>(
    offsets: &Offsets,
    mu: &ViscosityModel,
    sources: usize,
    jets: impl Fn(&Target, usize, &mut Vec<QPoint>) -> [Jet; M] + Sync,
) -> Vec<f64> {
    let ncols = sources * M;
    let mut data = vec![0.0; offsets.len() * 3 * ncols];
    data.par_chunks_mut(3 * ncols).enumerate().for_each_init(Vec::new, |buf, (b, rows)| {
        let n = offsets.normals[b];
        let [far, near] = &offsets.targets[b];
        let (mf, gf) = (mu.value(far.y), mu.gradient(far.y));
        let (mn, gn) = (mu.value(near.y), mu.gradient(near.y));
        for s in 0..sources {
            let jf = jets(far, s, buf);
            let jn = jets(near, s, buf);
            for m in 0..M {
                let t = richardson(jf[m].traction(mf, gf, n), jn[m].traction(mn, gn, n));
                for k in 0..3 {
                    rows[k * ncols + s * M + m] = t[k];
                }
            }
        }
    });
    data
}

/// Jet of a potential at every offset point, contracted with a density.
pub fn jets_apply<const M: usize>(
    offsets: &Offsets,
    sources: usize,
    density: &[f64],
    jets: impl Fn(&Target, usize, &mut Vec<QPoint>) -> [Jet; M] + Sync,
) -> Vec<[Jet; 2]> {
    assert_eq!(density.len(), sources * M);
    offsets
        .targets
        .par_iter()
        .map_init(Vec::new, |buf, pair| {
            pair.map(|tg| {
                let mut acc = Jet::default();
                for s in 0..sources {
                    let d = &density[s * M..(s + 1) * M];
                    if d.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    let j = jets(&tg, s, buf);
                    for m in 0..M {
                        acc.axpy(d[m], &j[m]);
                    }
                }
                acc
            })
        })
        .collect()
}

/// Extrapolated tractions of summed jets, three values per boundary node.
pub fn traction_of_jets(offsets: &Offsets, mu: &ViscosityModel, jets: &[[Jet; 2]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(3 * jets.len());
    for (b, [jf, jn]) in jets.iter().enumerate() {
        let [far, near] = &offsets.targets[b];
        let n = offsets.normals[b];
        let tf = jf.traction(mu.value(far.y), mu.gradient(far.y), n);
        let tn = jn.traction(mu.value(near.y), mu.gradient(near.y), n);
        out.extend(richardson(tf, tn));
    }
    out
}

/// Richardson limit of plain values sampled at the offset points.
pub fn extrapolate(far: &[f64], near: &[f64]) -> Vec<f64> {
    far.iter().zip(near).map(|(f, n)| 2.0 * n - f).collect()
}

/// Jets of the single-layer pair `(-Πˢρ, Vρ)` for panel `t`.
pub fn single_layer_jets(integ: &Integrator, domain: &Domain, tg: &Target, t: usize, buf: &mut Vec<QPoint>) -> [Jet; 3] {
    let s = &domain.surface;
    let ps = blocks::pressure_single(integ, s, t, tg, buf);
    let sl = blocks::single_layer(integ, s, t, tg, buf);
    let g = blocks::single_layer_grad(integ, s, t, tg, buf);
    [0, 1, 2].map(|j| {
        let mut jet = Jet { p: -ps[j], ..Jet::default() };
        for k in 0..3 {
            jet.s[k] = -sl[3 * k + j];
            for l in 0..3 {
                jet.ds[k][l] = g[9 * k + 3 * j + l];
            }
        }
        jet
    })
}

/// Jets of the double-layer pair `(Πᵈτ, Wτ)` for panel `t`.
pub fn double_layer_jets(
    integ: &Integrator,
    domain: &Domain,
    mu: &ViscosityModel,
    tg: &Target,
    t: usize,
    buf: &mut Vec<QPoint>,
) -> [Jet; 3] {
    double_layer_jets_weighted(integ, domain, &|x| mu.value(x), tg, t, buf)
}

/// As [`double_layer_jets`] with `μ` in the integrand replaced by `w`.
pub fn double_layer_jets_weighted(
    integ: &Integrator,
    domain: &Domain,
    w: &(dyn Fn(Vec3) -> f64 + Sync),
    tg: &Target,
    t: usize,
    buf: &mut Vec<QPoint>,
) -> [Jet; 3] {
    let s = &domain.surface;
    let pd = blocks::pressure_double(integ, s, t, tg, buf, w);
    let dl = blocks::double_layer(integ, s, t, tg, buf, w);
    let g = blocks::double_layer_grad(integ, s, t, tg, buf, w);
    [0, 1, 2].map(|j| {
        let mut jet = Jet { p: -2.0 * pd[j], ..Jet::default() };
        for k in 0..3 {
            jet.s[k] = -dl[3 * k + j];
            for l in 0..3 {
                jet.ds[k][l] = g[9 * k + 3 * j + l];
            }
        }
        jet
    })
}

/// Jets of the remainder pair `(ℛ•ρ, ℛρ)` for cell `c` against the moment
/// weights `[1, x - x_c]`.
pub fn remainder_jets(
    integ: &Integrator,
    domain: &Domain,
    mu: &ViscosityModel,
    tg: &Target,
    c: usize,
    buf: &mut Vec<QPoint>,
) -> [[Jet; 3]; 4] {
    if mu.is_constant() {
        return [[Jet::default(); 3]; 4];
    }
    let v = &domain.volume;
    let pr = blocks::pressure_remainder_moments(integ, v, c, tg, buf, mu);
    let r = blocks::remainder_moments(integ, v, c, tg, buf, mu);
    let g = blocks::remainder_grad_moments(integ, v, c, tg, buf, mu);
    [0, 1, 2, 3].map(|m| {
        [0, 1, 2].map(|j| {
            let mut jet = Jet { p: pr[m][j], ..Jet::default() };
            for k in 0..3 {
                jet.s[k] = r[m][3 * k + j];
                for l in 0..3 {
                    jet.ds[k][l] = g[m][9 * k + 3 * j + l];
                }
            }
            jet
        })
    })
}

/// Jets of the Newton pair `(𝒬̊f, 𝒰f)` for cell `c`.
pub fn newton_jets(integ: &Integrator, domain: &Domain, tg: &Target, c: usize, buf: &mut Vec<QPoint>) -> [Jet; 3] {
    let v = &domain.volume;
    let q = blocks::newton_pressure(integ, v, c, tg, buf);
    let u = blocks::newton(integ, v, c, tg, buf);
    let g = blocks::newton_grad(integ, v, c, tg, buf);
    [0, 1, 2].map(|j| {
        let mut jet = Jet { p: q[j], ..Jet::default() };
        for k in 0..3 {
            jet.s[k] = u[3 * k + j];
            for l in 0..3 {
                jet.ds[k][l] = g[9 * k + 3 * j + l];
            }
        }
        jet
    })
}

/// Velocity jet of `𝑸g` for cell `c`; the pressure `(4/3)μg` is local and
/// added by the caller.
pub fn newton_vector_jet(
    integ: &Integrator,
    domain: &Domain,
    mu: &ViscosityModel,
    tg: &Target,
    c: usize,
    buf: &mut Vec<QPoint>,
) -> [Jet; 1] {
    newton_vector_jet_weighted(integ, domain, &|x| mu.value(x), tg, c, buf)
}

/// As [`newton_vector_jet`] with `μ` in the integrand replaced by `w`.
pub fn newton_vector_jet_weighted(
    integ: &Integrator,
    domain: &Domain,
    w: &(dyn Fn(Vec3) -> f64 + Sync),
    tg: &Target,
    c: usize,
    buf: &mut Vec<QPoint>,
) -> [Jet; 1] {
    let v = &domain.volume;
    let q = blocks::newton_vector(integ, v, c, tg, buf, w);
    let g = blocks::newton_vector_grad(integ, v, c, tg, buf, w);
    let mut jet = Jet { s: q, ..Jet::default() };
    for k in 0..3 {
        for l in 0..3 {
            jet.ds[k][l] = g[3 * k + l];
        }
    }
    [jet]
}

fn traction_operator(domain: &Domain, cols: Space, name: &'static str, data: Vec<f64>) -> OperatorMatrix {
    OperatorMatrix {
        tag: OperatorTag::Traction(name),
        rows: Space { kind: NodeKind::Boundary, nodes: domain.surface.len(), components: 3 },
        cols,
        data,
    }
}

/// T⁺(-Πˢρ, Vρ), which equals `ρ/2 + 𝒲′ρ`.
pub fn single_layer_traction(domain: &Domain, mu: &ViscosityModel, integ: &Integrator, offsets: &Offsets) -> OperatorMatrix {
    let data = traction_matrix(offsets, mu, domain.surface.len(), |tg, t, buf| {
        single_layer_jets(integ, domain, tg, t, buf)
    });
    let cols = Space { kind: NodeKind::Boundary, nodes: domain.surface.len(), components: 3 };
    traction_operator(domain, cols, "single layer", data)
}

/// T⁺(ℛ•, ℛ) on linearly reconstructed volume vector densities.
pub fn remainder_traction(domain: &Domain, mu: &ViscosityModel, integ: &Integrator, offsets: &Offsets) -> OperatorMatrix {
    let nv = domain.volume.len();
    let data = if mu.is_constant() {
        vec![0.0; offsets.len() * 9 * nv]
    } else {
        let stencil = GradientStencil::new(&domain.volume);
        let ncols = 3 * nv;
        let mut data = vec![0.0; offsets.len() * 3 * ncols];
        data.par_chunks_mut(3 * ncols).enumerate().for_each_init(Vec::new, |buf, (b, rows)| {
            let n = offsets.normals[b];
            let [far, near] = &offsets.targets[b];
            let (mf, gf) = (mu.value(far.y), mu.gradient(far.y));
            let (mn, gn) = (mu.value(near.y), mu.gradient(near.y));
            for c in 0..nv {
                let jf = remainder_jets(integ, domain, mu, far, c, buf);
                let jn = remainder_jets(integ, domain, mu, near, c, buf);
                let block = [0, 1, 2, 3].map(|m| {
                    let mut o = [0.0; 9];
                    for j in 0..3 {
                        let t = richardson(jf[m][j].traction(mf, gf, n), jn[m][j].traction(mn, gn, n));
                        for k in 0..3 {
                            o[3 * k + j] = t[k];
                        }
                    }
                    o
                });
                scatter_linear(rows, ncols, 3, 3, &stencil, c, &block);
            }
        });
        data
    };
    let cols = Space { kind: NodeKind::Volume, nodes: domain.volume.len(), components: 3 };
    traction_operator(domain, cols, "remainder", data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::boundary_targets;
    use crate::potentials::{adjoint_double_layer, double_layer, single_layer};

    fn l2(domain: &Domain, v: &[f64]) -> f64 {
        let s = &domain.surface;
        (0..s.len()).map(|t| s.areas[t] * (0..3).map(|k| v[3 * t + k].powi(2)).sum::<f64>()).sum::<f64>().sqrt()
    }

    #[test]
    fn constant_pressure_traction_is_minus_c_n() {
        let d = Domain::ball(1, 2, 1.0).unwrap();
        let mu = ViscosityModel::parse("2 + x1", 0.5).unwrap();
        let off = Offsets::traction(&d).unwrap();
        let jets: Vec<[Jet; 2]> = (0..off.len()).map(|_| [Jet { p: 2.5, ..Jet::default() }; 2]).collect();
        let t = traction_of_jets(&off, &mu, &jets);
        for (b, n) in off.normals.iter().enumerate() {
            for k in 0..3 {
                assert!((t[3 * b + k] + 2.5 * n[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn jet_traction_matches_symbolic_stress() {
        // v = (x2, x1 x3, 0), p = x3, μ = 2 + x1 at a point.
        let y = [0.2, -0.1, 0.4];
        let mu = ViscosityModel::parse("2 + x1", 0.5).unwrap();
        let m = mu.value(y);
        let v = [y[1], y[0] * y[2], 0.0];
        let grad = [[0.0, 1.0, 0.0], [y[2], 0.0, y[0]], [0.0; 3]];
        let mut jet = Jet { p: y[2], ..Jet::default() };
        let gm = mu.gradient(y);
        for k in 0..3 {
            jet.s[k] = m * v[k];
            for l in 0..3 {
                jet.ds[k][l] = gm[l] * v[k] + m * grad[k][l];
            }
        }
        let n = geom::normalize([1.0, 2.0, -0.5]);
        let t = jet.traction(m, gm, n);
        for k in 0..3 {
            let mut e = -y[2] * n[k];
            for l in 0..3 {
                e += m * (grad[k][l] + grad[l][k]) * n[l];
            }
            assert!((t[k] - e).abs() < 1e-13);
        }
    }

    #[test]
    fn single_layer_traction_jump() {
        // T⁺(-Πˢρ, Vρ) = ρ/2 + 𝒲′ρ for a smooth density.
        let mut errs = Vec::new();
        for sub in [1, 2] {
            let d = Domain::ball(sub, 1, 1.0).unwrap();
            let mu = ViscosityModel::parse("2 + x1", 0.5).unwrap();
            let integ = Integrator::default();
            let off = Offsets::jump(&d).unwrap();
            let rho: Vec<f64> = d.surface.centroids.iter().flat_map(|x| [x[1] + 0.5, x[0] * x[2], 1.0 - x[0]]).collect();
            let lhs = single_layer_traction(&d, &mu, &integ, &off).apply(&rho).unwrap();
            let v0 = single_layer(&d, &boundary_targets(&d), &ViscosityModel::unit(), &integ);
            let wp = adjoint_double_layer(&d, &mu, &v0, &integ).apply(&rho).unwrap();
            let rhs: Vec<f64> = wp.iter().zip(&rho).map(|(w, r)| w + 0.5 * r).collect();
            let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
            errs.push(l2(&d, &diff) / l2(&d, &rhs));
        }
        assert!(errs[1] < errs[0] && errs[1] < 0.1, "{errs:?}");
    }

    #[test]
    fn double_layer_interior_limit() {
        // γ⁺Wτ = -τ/2 + 𝒲τ.
        let d = Domain::ball(2, 1, 1.0).unwrap();
        let mu = ViscosityModel::parse("2 + x1", 0.5).unwrap();
        let integ = Integrator::default();
        let off = Offsets::jump(&d).unwrap();
        let tau: Vec<f64> = d.surface.centroids.iter().flat_map(|x| [x[2], 1.0 + x[0] * x[1], -x[1]]).collect();
        let far: Vec<Target> = off.targets.iter().map(|p| p[0]).collect();
        let near: Vec<Target> = off.targets.iter().map(|p| p[1]).collect();
        let wf = double_layer(&d, &far, &mu, &integ).apply(&tau).unwrap();
        let wn = double_layer(&d, &near, &mu, &integ).apply(&tau).unwrap();
        let lim = extrapolate(&wf, &wn);
        let direct = double_layer(&d, &boundary_targets(&d), &mu, &integ).apply(&tau).unwrap();
        let rhs: Vec<f64> = direct.iter().zip(&tau).map(|(w, t)| w - 0.5 * t).collect();
        let diff: Vec<f64> = lim.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        let err = l2(&d, &diff) / l2(&d, &rhs);
        assert!(err < 5e-2, "{err}");
    }
}

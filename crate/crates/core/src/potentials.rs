//! Surface and volume potential operators on piecewise-constant densities.
//!
//! Variable-viscosity operators are formed from the unit-viscosity ones
//! through the scaling relations, e.g. `V = V̊ / μ(y)`,
//! `W = W̊(μ ·) / μ(y)`, `Πᵈ = Π̊ᵈ(μ ·)`. Every operator is defined by a
//! block function giving the contribution of one source element to one
//! target; [`assemble`] stores those blocks in a dense matrix and [`apply`]
//! contracts them with a density without storing anything.
//!
//! Conventions fixed here (see `docs/conventions.md`):
//! * the vector Newton potential of a scalar density uses the x-pressure
//!   of the point force, `[𝑸̊ρ]ₖ(y) = -∫ q̊ᵏ(x - y) ρ(x) dx`, so that
//!   `div 𝑸̊ρ = ρ`;
//! * the pressure that accompanies the single layer `V̊ρ` is `-Πˢρ`.

use rayon::prelude::*;

pub mod traction;

use crate::error::{Error, Result};
use crate::expr::ViscosityModel;
use crate::geom::{self, Vec3};
use crate::integrate::{moment_weights, Integrator, QPoint, Target};
use crate::kernels::{
    pressure_kernel, pressure_kernel_grad_x, remainder_raw, stokeslet, stokeslet_grad_x, stresslet,
    stresslet_grad_x, stresslet_traction, Mat3,
};
use crate::mesh::{Domain, SurfaceMesh, VolumeMesh};
use crate::stencil::GradientStencil;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorTag {
    /// V, single layer at interior targets.
    SingleLayer,
    /// 𝒱, direct value of the single layer on S.
    SingleLayerDirect,
    /// W, double layer at interior targets.
    DoubleLayer,
    /// 𝒲, direct value of the double layer on S.
    DoubleLayerDirect,
    /// 𝒲′.
    AdjointDoubleLayer,
    /// Πˢ.
    PressureSingle,
    /// Πᵈ.
    PressureDouble,
    /// W_Δ, Laplace double layer.
    LaplaceDoubleLayer,
    /// 𝒰.
    Newton,
    /// 𝒬, vector density to scalar.
    NewtonPressure,
    /// 𝑸, scalar density to vector.
    NewtonVector,
    /// ℛ.
    Remainder,
    /// ℛ•.
    PressureRemainder,
    /// γ⁺ of a volume operator.
    Trace(&'static str),
    /// T⁺ of a potential pair.
    Traction(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Volume,
    Boundary,
    Points,
}

/// Row or column space: node kind, node count, components per node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Space {
    pub kind: NodeKind,
    pub nodes: usize,
    pub components: usize,
}

impl Space {
    pub fn dim(&self) -> usize {
        self.nodes * self.components
    }

    fn of_targets(targets: &[Target], components: usize) -> Self {
        let kind = match targets.first() {
            Some(t) if t.is_boundary() => NodeKind::Boundary,
            _ if targets.iter().all(|t| t.cell.is_some()) => NodeKind::Volume,
            _ => NodeKind::Points,
        };
        Self { kind, nodes: targets.len(), components }
    }
}

/// Dense operator block stored row-major.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub tag: OperatorTag,
    pub rows: Space,
    pub cols: Space,
    pub data: Vec<f64>,
}

impl OperatorMatrix {
    pub fn nrows(&self) -> usize {
        self.rows.dim()
    }

    pub fn ncols(&self) -> usize {
        self.cols.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.ncols();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols() {
            return Err(Error::DimensionMismatch { expected: self.ncols(), got: x.len() });
        }
        Ok((0..self.nrows())
            .into_par_iter()
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows()).map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn scale_rows(&mut self, f: impl Fn(usize) -> f64) {
        let n = self.ncols();
        let comps = self.rows.components;
        for (i, row) in self.data.chunks_mut(n).enumerate() {
            let s = f(i / comps);
            row.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Dense matrix from per-(target, source) blocks of `r × m` entries stored
/// row-major in `[f64; N]`, `N = r * m`.
pub fn assemble<const N: usize>(
    targets: &[Target],
    sources: usize,
    r: usize,
    m: usize,
    block: impl Fn(&Target, usize, &mut Vec<QPoint>) -> [f64; N] + Sync,
) -> Vec<f64> {
    assert_eq!(N, r * m);
    let ncols = sources * m;
    let mut data = vec![0.0; targets.len() * r * ncols];
    data.par_chunks_mut(r * ncols).zip(targets.par_iter()).for_each_init(Vec::new, |buf, (rows, t)| {
        for s in 0..sources {
            let b = block(t, s, buf);
            for a in 0..r {
                rows[a * ncols + s * m..a * ncols + (s + 1) * m].copy_from_slice(&b[a * m..(a + 1) * m]);
            }
        }
    });
    data
}

/// Contracts the blocks with a density of `m` components per source.
pub fn apply<const N: usize>(
    targets: &[Target],
    sources: usize,
    r: usize,
    m: usize,
    density: &[f64],
    block: impl Fn(&Target, usize, &mut Vec<QPoint>) -> [f64; N] + Sync,
) -> Vec<f64> {
    assert_eq!(N, r * m);
    assert_eq!(density.len(), sources * m);
    let mut out = vec![0.0; targets.len() * r];
    out.par_chunks_mut(r).zip(targets.par_iter()).for_each_init(Vec::new, |buf, (vals, t)| {
        for s in 0..sources {
            let d = &density[s * m..(s + 1) * m];
            if d.iter().all(|&v| v == 0.0) {
                continue;
            }
            let b = block(t, s, buf);
            for a in 0..r {
                vals[a] += (0..m).map(|j| b[a * m + j] * d[j]).sum::<f64>();
            }
        }
    });
    out
}

/// Adds the moment blocks of cell `c` to `rows` (`r` rows of `ncols`),
/// acting on the linear reconstruction `u_c + G_c·(x - x_c)` of a density
/// with `m` components.
pub fn scatter_linear<const N: usize>(
    rows: &mut [f64],
    ncols: usize,
    r: usize,
    m: usize,
    stencil: &GradientStencil,
    c: usize,
    b: &[[f64; N]; 4],
) {
    for a in 0..r {
        let row = &mut rows[a * ncols..(a + 1) * ncols];
        for j in 0..m {
            let e = a * m + j;
            row[c * m + j] += b[0][e];
            for &(n, g) in stencil.entries(c) {
                let coef = g[0] * b[1][e] + g[1] * b[2][e] + g[2] * b[3][e];
                row[n * m + j] += coef;
                row[c * m + j] -= coef;
            }
        }
    }
}

/// Dense matrix of a volume operator on reconstructed densities from
/// per-cell moment blocks.
pub fn assemble_linear<const N: usize>(
    targets: &[Target],
    stencil: &GradientStencil,
    sources: usize,
    r: usize,
    m: usize,
    block: impl Fn(&Target, usize, &mut Vec<QPoint>) -> [[f64; N]; 4] + Sync,
) -> Vec<f64> {
    assert_eq!(N, r * m);
    let ncols = sources * m;
    let mut data = vec![0.0; targets.len() * r * ncols];
    data.par_chunks_mut(r * ncols).zip(targets.par_iter()).for_each_init(Vec::new, |buf, (rows, t)| {
        for c in 0..sources {
            let b = block(t, c, buf);
            scatter_linear(rows, ncols, r, m, stencil, c, &b);
        }
    });
    data
}

/// Matrix-free counterpart of [`assemble_linear`].
pub fn apply_linear<const N: usize>(
    targets: &[Target],
    stencil: &GradientStencil,
    sources: usize,
    r: usize,
    m: usize,
    density: &[f64],
    block: impl Fn(&Target, usize, &mut Vec<QPoint>) -> [[f64; N]; 4] + Sync,
) -> Vec<f64> {
    assert_eq!(N, r * m);
    assert_eq!(density.len(), sources * m);
    let grads = stencil.gradients(density, m);
    let mut out = vec![0.0; targets.len() * r];
    out.par_chunks_mut(r).zip(targets.par_iter()).for_each_init(Vec::new, |buf, (vals, t)| {
        for c in 0..sources {
            let d = &density[c * m..(c + 1) * m];
            let g = &grads[c * m..(c + 1) * m];
            if d.iter().all(|&v| v == 0.0) && g.iter().all(|gj| *gj == [0.0; 3]) {
                continue;
            }
            let b = block(t, c, buf);
            for a in 0..r {
                vals[a] += (0..m)
                    .map(|j| {
                        let e = a * m + j;
                        b[0][e] * d[j] + b[1][e] * g[j][0] + b[2][e] * g[j][1] + b[3][e] * g[j][2]
                    })
                    .sum::<f64>();
            }
        }
    });
    out
}

#[inline]
fn flat9(m: Mat3) -> [f64; 9] {
    [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2]]
}

/// Kernel integrals over single panels and cells. Index layouts follow the
/// kernel module: `[k][j]` flattened row-major, gradients `[k][j][l]`.
pub mod blocks {
    use super::*;

    /// ∫ ůⱼᵏ dS, `[k][j]`.
    pub fn single_layer(integ: &Integrator, s: &SurfaceMesh, t: usize, tg: &Target, buf: &mut Vec<QPoint>) -> [f64; 9] {
        let y = tg.y;
        integ.panel_integral(s, t, tg, buf, |x| flat9(stokeslet(geom::sub(x, y))))
    }

    /// ∫ ∂ůⱼᵏ/∂xₗ dS, `[k][j][l]`.
    pub fn single_layer_grad(integ: &Integrator, s: &SurfaceMesh, t: usize, tg: &Target, buf: &mut Vec<QPoint>) -> [f64; 27] {
        let y = tg.y;
        integ.panel_integral(s, t, tg, buf, |x| {
            let g = stokeslet_grad_x(geom::sub(x, y));
            let mut o = [0.0; 27];
            for k in 0..3 {
                for j in 0..3 {
                    o[9 * k + 3 * j..9 * k + 3 * j + 3].copy_from_slice(&g[k][j]);
                }
            }
            o
        })
    }

    /// ∫ w(x) σ̊ᵢⱼᵏ nᵢ(x) dS, `[k][j]`.
    pub fn double_layer(
        integ: &Integrator,
        s: &SurfaceMesh,
        t: usize,
        tg: &Target,
        buf: &mut Vec<QPoint>,
        w: &(dyn Fn(Vec3) -> f64 + Sync),
    ) -> [f64; 9] {
        let (y, n) = (tg.y, s.normals[t]);
        if tg.panel == Some(t) {
            return [0.0; 9];
        }
        integ.panel_integral(s, t, tg, buf, |x| {
            let m = stresslet_traction(geom::sub(x, y), n);
            let wx = w(x);
            flat9(m).map(|v| v * wx)
        })
    }

    /// ∫ w(x) ∂σ̊ᵢⱼᵏ/∂xₗ nᵢ(x) dS, `[k][j][l]`.
    pub fn double_layer_grad(
        integ: &Integrator,
        s: &SurfaceMesh,
        t: usize,
        tg: &Target,
        buf: &mut Vec<QPoint>,
        w: &(dyn Fn(Vec3) -> f64 + Sync),
    ) -> [f64; 27] {
        let (y, n) = (tg.y, s.normals[t]);
        integ.panel_integral(s, t, tg, buf, |x| {
            let g = stresslet_grad_x(geom::sub(x, y));
            let wx = w(x);
            let mut o = [0.0; 27];
            for k in 0..3 {
                for j in 0..3 {
                    for l in 0..3 {
                        o[9 * k + 3 * j + l] = wx * (0..3).map(|i| g[k][i][j][l] * n[i]).sum::<f64>();
                    }
                }
            }
            o
        })
    }

    /// ∫ σ̊ₖₗʲ(x - y) nₗ(y) dS(x), `[k][j]`; zero on the target's own panel.
    pub fn adjoint_double_layer(integ: &Integrator, s: &SurfaceMesh, t: usize, tg: &Target, ny: Vec3, buf: &mut Vec<QPoint>) -> [f64; 9] {
        if tg.panel == Some(t) {
            return [0.0; 9];
        }
        let y = tg.y;
        integ.panel_integral(s, t, tg, buf, |x| flat9(stresslet_traction(geom::sub(x, y), ny)))
    }

    /// ∫ q̊ʲ dS, `[j]`.
    pub fn pressure_single(integ: &Integrator, s: &SurfaceMesh, t: usize, tg: &Target, buf: &mut Vec<QPoint>) -> [f64; 3] {
        let y = tg.y;
        integ.panel_integral(s, t, tg, buf, |x| pressure_kernel(geom::sub(x, y)))
    }

    /// ∫ w(x) ∂q̊ʲ/∂xᵢ nᵢ(x) dS, `[j]`.
    pub fn pressure_double(
        integ: &Integrator,
        s: &SurfaceMesh,
        t: usize,
        tg: &Target,
        buf: &mut Vec<QPoint>,
        w: &(dyn Fn(Vec3) -> f64 + Sync),
    ) -> [f64; 3] {
        let (y, n) = (tg.y, s.normals[t]);
        integ.panel_integral(s, t, tg, buf, |x| {
            let g = pressure_kernel_grad_x(geom::sub(x, y));
            let wx = w(x);
            [0, 1, 2].map(|j| wx * geom::dot(g[j], n))
        })
    }

    /// ∫ q̊ʲ nⱼ dS.
    pub fn laplace_double_layer(integ: &Integrator, s: &SurfaceMesh, t: usize, tg: &Target, buf: &mut Vec<QPoint>) -> [f64; 1] {
        if tg.panel == Some(t) {
            return [0.0];
        }
        let (y, n) = (tg.y, s.normals[t]);
        integ.panel_integral(s, t, tg, buf, |x| [geom::dot(pressure_kernel(geom::sub(x, y)), n)])
    }

    /// ∫_c ůⱼᵏ dx, `[k][j]`.
    pub fn newton(integ: &Integrator, v: &VolumeMesh, c: usize, tg: &Target, buf: &mut Vec<QPoint>) -> [f64; 9] {
        let y = tg.y;
        integ.cell_integral(v, c, tg, buf, |x| flat9(stokeslet(geom::sub(x, y))))
    }

    /// ∂/∂yₗ ∫_c ůⱼᵏ dx, `[k][j][l]`.
    pub fn newton_grad(integ: &Integrator, v: &VolumeMesh, c: usize, tg: &Target, buf: &mut Vec<QPoint>) -> [f64; 27] {
        let y = tg.y;
        integ.cell_integral(v, c, tg, buf, |x| {
            let g = stokeslet_grad_x(geom::sub(x, y));
            let mut o = [0.0; 27];
            for k in 0..3 {
                for j in 0..3 {
                    for l in 0..3 {
                        o[9 * k + 3 * j + l] = -g[k][j][l];
                    }
                }
            }
            o
        })
    }

    /// ∫_c q̊ʲ dx, `[j]`.
    pub fn newton_pressure(integ: &Integrator, v: &VolumeMesh, c: usize, tg: &Target, buf: &mut Vec<QPoint>) -> [f64; 3] {
        let y = tg.y;
        integ.cell_integral(v, c, tg, buf, |x| pressure_kernel(geom::sub(x, y)))
    }

    /// -∫_c q̊ᵏ w(x) dx, `[k]`.
    pub fn newton_vector(
        integ: &Integrator,
        v: &VolumeMesh,
        c: usize,
        tg: &Target,
        buf: &mut Vec<QPoint>,
        w: &(dyn Fn(Vec3) -> f64 + Sync),
    ) -> [f64; 3] {
        let y = tg.y;
        integ.cell_integral(v, c, tg, buf, |x| geom::scale(pressure_kernel(geom::sub(x, y)), -w(x)))
    }

    /// ∂/∂yₗ of [`newton_vector`], `[k][l]`, by subtraction of `w(y)` in
    /// near cells plus the Gauss term over the cell faces.
    pub fn newton_vector_grad(
        integ: &Integrator,
        v: &VolumeMesh,
        c: usize,
        tg: &Target,
        buf: &mut Vec<QPoint>,
        w: &(dyn Fn(Vec3) -> f64 + Sync),
    ) -> [f64; 9] {
        let y = tg.y;
        let near = integ.is_near_cell(v, c, tg);
        let wy = if near { w(y) } else { 0.0 };
        let mut o = integ.cell_integral(v, c, tg, buf, |x| {
            flat9(pressure_kernel_grad_x(geom::sub(x, y))).map(|g| g * (w(x) - wy))
        });
        if near {
            for face in &v.faces[c] {
                let n = face.normal;
                let f = integ.face_integral(face, y, buf, |x| {
                    let q = pressure_kernel(geom::sub(x, y));
                    let mut m = [0.0; 9];
                    for k in 0..3 {
                        for l in 0..3 {
                            m[3 * k + l] = q[k] * n[l];
                        }
                    }
                    m
                });
                for (a, b) in o.iter_mut().zip(f) {
                    *a += wy * b;
                }
            }
        }
        o
    }

    /// ∫_c ∂ᵢμ(x) σ̊ᵢⱼᵏ dx, `[k][j]`; the remainder is this divided by μ(y).
    pub fn remainder(integ: &Integrator, v: &VolumeMesh, c: usize, tg: &Target, buf: &mut Vec<QPoint>, mu: &ViscosityModel) -> [f64; 9] {
        remainder_moments(integ, v, c, tg, buf, mu)[0]
    }

    /// [`remainder`] against the moment weights `[1, x - x_c]`.
    pub fn remainder_moments(
        integ: &Integrator,
        v: &VolumeMesh,
        c: usize,
        tg: &Target,
        buf: &mut Vec<QPoint>,
        mu: &ViscosityModel,
    ) -> [[f64; 9]; 4] {
        let y = tg.y;
        integ.cell_moments(v, c, tg, buf, |x| (flat9(remainder_raw(geom::sub(x, y), mu.gradient(x), 1.0)), [0.0; 9]))
    }

    /// ∂/∂yₗ of [`remainder`], `[k][j][l]`.
    pub fn remainder_grad(integ: &Integrator, v: &VolumeMesh, c: usize, tg: &Target, buf: &mut Vec<QPoint>, mu: &ViscosityModel) -> [f64; 27] {
        remainder_grad_moments(integ, v, c, tg, buf, mu)[0]
    }

    /// [`remainder_grad`] against the moment weights. Near cells subtract
    /// the density at `y` and add back the Gauss term over the cell faces.
    pub fn remainder_grad_moments(
        integ: &Integrator,
        v: &VolumeMesh,
        c: usize,
        tg: &Target,
        buf: &mut Vec<QPoint>,
        mu: &ViscosityModel,
    ) -> [[f64; 27]; 4] {
        let y = tg.y;
        let near = integ.is_near_cell(v, c, tg);
        let hy = if near { mu.gradient(y) } else { [0.0; 3] };
        let contract = |h: Vec3, g: &[crate::kernels::Tensor3; 3]| {
            let mut o = [0.0; 27];
            for k in 0..3 {
                for j in 0..3 {
                    for l in 0..3 {
                        o[9 * k + 3 * j + l] = -(0..3).map(|i| h[i] * g[k][i][j][l]).sum::<f64>();
                    }
                }
            }
            o
        };
        let mut o = integ.cell_moments(v, c, tg, buf, |x| {
            let g = stresslet_grad_x(geom::sub(x, y));
            (contract(mu.gradient(x), &g), if near { contract(hy, &g) } else { [0.0; 27] })
        });
        if near && hy != [0.0; 3] {
            let wy = moment_weights(y, v.centroids[c]);
            for face in &v.faces[c] {
                let n = face.normal;
                let f = integ.face_integral(face, y, buf, |x| {
                    let s = stresslet(geom::sub(x, y));
                    let mut o = [0.0; 27];
                    for k in 0..3 {
                        for j in 0..3 {
                            let hs = (0..3).map(|i| hy[i] * s[k][i][j]).sum::<f64>();
                            for l in 0..3 {
                                o[9 * k + 3 * j + l] = -hs * n[l];
                            }
                        }
                    }
                    o
                });
                for (om, w) in o.iter_mut().zip(wy) {
                    for (a, b) in om.iter_mut().zip(f) {
                        *a += w * b;
                    }
                }
            }
        }
        o
    }

    /// Contribution of cell `c` to ℛ•, `[j]`, including the local term when
    /// `c` contains the target.
    pub fn pressure_remainder(integ: &Integrator, v: &VolumeMesh, c: usize, tg: &Target, buf: &mut Vec<QPoint>, mu: &ViscosityModel) -> [f64; 3] {
        pressure_remainder_moments(integ, v, c, tg, buf, mu)[0]
    }

    /// [`pressure_remainder`] against the moment weights.
    pub fn pressure_remainder_moments(
        integ: &Integrator,
        v: &VolumeMesh,
        c: usize,
        tg: &Target,
        buf: &mut Vec<QPoint>,
        mu: &ViscosityModel,
    ) -> [[f64; 3]; 4] {
        let y = tg.y;
        let near = integ.is_near_cell(v, c, tg);
        let hy = if near { mu.gradient(y) } else { [0.0; 3] };
        let mut o = integ.cell_moments(v, c, tg, buf, |x| {
            let g = pressure_kernel_grad_x(geom::sub(x, y));
            let (hx, gx) = (mu.gradient(x), [0, 1, 2].map(|j| 2.0 * geom::dot(g[j], hy)));
            ([0, 1, 2].map(|j| 2.0 * geom::dot(g[j], hx)), gx)
        });
        let wy = moment_weights(y, v.centroids[c]);
        if near && hy != [0.0; 3] {
            for face in &v.faces[c] {
                let hn = 2.0 * geom::dot(hy, face.normal);
                let f = integ.face_integral(face, y, buf, |x| pressure_kernel(geom::sub(x, y)));
                for (om, w) in o.iter_mut().zip(wy) {
                    for (a, b) in om.iter_mut().zip(f) {
                        *a += w * hn * b;
                    }
                }
            }
        }
        if tg.cell == Some(c) {
            let h = mu.gradient(y);
            for (om, w) in o.iter_mut().zip(wy) {
                for j in 0..3 {
                    om[j] -= 2.0 * w * h[j];
                }
            }
        }
        o
    }
}

fn check_interior(targets: &[Target], what: &str) -> Result<()> {
    if targets.iter().any(Target::is_boundary) {
        return Err(Error::UnsupportedTarget(format!("{what} is only defined at interior points")));
    }
    Ok(())
}

fn boundary_space(domain: &Domain, components: usize) -> Space {
    Space { kind: NodeKind::Boundary, nodes: domain.surface.len(), components }
}

fn volume_space(domain: &Domain, components: usize) -> Space {
    Space { kind: NodeKind::Volume, nodes: domain.volume.len(), components }
}

/// V (interior targets) or 𝒱 (boundary targets): `-(1/μ(y)) ∫ ůⱼᵏ ρⱼ dS`.
pub fn single_layer(domain: &Domain, targets: &[Target], mu: &ViscosityModel, integ: &Integrator) -> OperatorMatrix {
    let s = &domain.surface;
    let data = assemble(targets, s.len(), 3, 3, |tg, t, buf| {
        let inv = -1.0 / mu.value(tg.y);
        blocks::single_layer(integ, s, t, tg, buf).map(|v| v * inv)
    });
    let direct = targets.first().is_some_and(Target::is_boundary);
    OperatorMatrix {
        tag: if direct { OperatorTag::SingleLayerDirect } else { OperatorTag::SingleLayer },
        rows: Space::of_targets(targets, 3),
        cols: boundary_space(domain, 3),
        data,
    }
}

/// W (interior) or 𝒲 (boundary): `(1/μ(y)) W̊(μρ)` with
/// `[W̊ρ]ₖ = -∫ σ̊ᵢⱼᵏ nᵢ ρⱼ dS`.
pub fn double_layer(domain: &Domain, targets: &[Target], mu: &ViscosityModel, integ: &Integrator) -> OperatorMatrix {
    let s = &domain.surface;
    let w = |x: Vec3| mu.value(x);
    let data = assemble(targets, s.len(), 3, 3, |tg, t, buf| {
        let inv = -1.0 / mu.value(tg.y);
        blocks::double_layer(integ, s, t, tg, buf, &w).map(|v| v * inv)
    });
    let direct = targets.first().is_some_and(Target::is_boundary);
    OperatorMatrix {
        tag: if direct { OperatorTag::DoubleLayerDirect } else { OperatorTag::DoubleLayer },
        rows: Space::of_targets(targets, 3),
        cols: boundary_space(domain, 3),
        data,
    }
}

/// 𝒲′ at the boundary nodes. With `v0` the unit-viscosity direct single
/// layer 𝒱̊, the correction
/// `-(∂ᵢμ/μ 𝒱̊ₖ + ∂ₖμ/μ 𝒱̊ᵢ - (2/3) δᵢₖ ∂ⱼμ/μ 𝒱̊ⱼ) nᵢ` is applied row-wise.
pub fn adjoint_double_layer(domain: &Domain, mu: &ViscosityModel, v0: &OperatorMatrix, integ: &Integrator) -> OperatorMatrix {
    let s = &domain.surface;
    let targets = crate::integrate::boundary_targets(domain);
    let mut data = assemble(&targets, s.len(), 3, 3, |tg, t, buf| {
        let ny = s.normals[tg.panel.expect("boundary target")];
        blocks::adjoint_double_layer(integ, s, t, tg, ny, buf)
    });
    if !mu.is_constant() {
        let n = 3 * s.len();
        for (p, tg) in targets.iter().enumerate() {
            let ny = s.normals[p];
            let g = geom::scale(mu.gradient(tg.y), 1.0 / mu.value(tg.y));
            let gn = geom::dot(g, ny);
            for col in 0..n {
                let vk = [0, 1, 2].map(|k| v0.get(3 * p + k, col));
                let vn = geom::dot(vk, ny);
                let gv = geom::dot(g, vk);
                for k in 0..3 {
                    let corr = gn * vk[k] + g[k] * vn - (2.0 / 3.0) * ny[k] * gv;
                    data[(3 * p + k) * n + col] -= corr;
                }
            }
        }
    }
    OperatorMatrix {
        tag: OperatorTag::AdjointDoubleLayer,
        rows: boundary_space(domain, 3),
        cols: boundary_space(domain, 3),
        data,
    }
}

/// Πˢ = `∫ q̊ʲ ρⱼ dS` at interior targets.
pub fn pressure_single(domain: &Domain, targets: &[Target], integ: &Integrator) -> Result<OperatorMatrix> {
    check_interior(targets, "Πˢ")?;
    let s = &domain.surface;
    let data = assemble(targets, s.len(), 1, 3, |tg, t, buf| blocks::pressure_single(integ, s, t, tg, buf));
    Ok(OperatorMatrix { tag: OperatorTag::PressureSingle, rows: Space::of_targets(targets, 1), cols: boundary_space(domain, 3), data })
}

/// Πˢ = `∫ q̊ʲ ρⱼ dS` and Πᵈ = `-2 ∫ ∂q̊ʲ/∂n(x) μ(x) ρⱼ dS` at interior
/// targets.
pub fn pressure_layers(
    domain: &Domain,
    targets: &[Target],
    mu: &ViscosityModel,
    integ: &Integrator,
) -> Result<(OperatorMatrix, OperatorMatrix)> {
    let ps = pressure_single(domain, targets, integ)?;
    check_interior(targets, "Πᵈ")?;
    let s = &domain.surface;
    let w = |x: Vec3| mu.value(x);
    let pd = assemble(targets, s.len(), 1, 3, |tg, t, buf| {
        blocks::pressure_double(integ, s, t, tg, buf, &w).map(|v| -2.0 * v)
    });
    let rows = Space::of_targets(targets, 1);
    Ok((
        ps,
        OperatorMatrix { tag: OperatorTag::PressureDouble, rows, cols: boundary_space(domain, 3), data: pd },
    ))
}

/// Laplace double layer `W_Δρ = ∫ ∂E_Δ/∂n(x) ρ dS` on scalar densities.
pub fn laplace_double_layer(domain: &Domain, targets: &[Target], integ: &Integrator) -> OperatorMatrix {
    let s = &domain.surface;
    let data = assemble(targets, s.len(), 1, 1, |tg, t, buf| blocks::laplace_double_layer(integ, s, t, tg, buf));
    OperatorMatrix {
        tag: OperatorTag::LaplaceDoubleLayer,
        rows: Space::of_targets(targets, 1),
        cols: boundary_space(domain, 1),
        data,
    }
}

/// Newton-type operators at the given targets.
pub struct NewtonOperators {
    /// 𝒰 = 𝒰̊/μ(y).
    pub u: OperatorMatrix,
    /// 𝒬 = 𝒬̊(μ ·)/μ(y), vector density to scalar.
    pub q: OperatorMatrix,
    /// 𝒬̊, vector density to scalar.
    pub q0: OperatorMatrix,
    /// 𝑸 = 𝑸̊(μ ·)/μ(y), scalar density to vector.
    pub qvec: OperatorMatrix,
}

pub fn newton(domain: &Domain, targets: &[Target], mu: &ViscosityModel, integ: &Integrator) -> NewtonOperators {
    let v = &domain.volume;
    let nv = v.len();
    let w = |x: Vec3| mu.value(x);
    let u = assemble(targets, nv, 3, 3, |tg, c, buf| {
        let inv = 1.0 / mu.value(tg.y);
        blocks::newton(integ, v, c, tg, buf).map(|x| x * inv)
    });
    let q0 = assemble(targets, nv, 1, 3, |tg, c, buf| blocks::newton_pressure(integ, v, c, tg, buf));
    let q = assemble(targets, nv, 1, 3, |tg, c, buf| {
        let y = tg.y;
        let inv = 1.0 / mu.value(y);
        integ.cell_integral(v, c, tg, buf, |x| geom::scale(pressure_kernel(geom::sub(x, y)), mu.value(x) * inv))
    });
    let qvec = assemble(targets, nv, 3, 1, |tg, c, buf| {
        let inv = 1.0 / mu.value(tg.y);
        blocks::newton_vector(integ, v, c, tg, buf, &w).map(|x| x * inv)
    });
    let rows3 = Space::of_targets(targets, 3);
    let rows1 = Space::of_targets(targets, 1);
    NewtonOperators {
        u: OperatorMatrix { tag: OperatorTag::Newton, rows: rows3, cols: volume_space(domain, 3), data: u },
        q: OperatorMatrix { tag: OperatorTag::NewtonPressure, rows: rows1, cols: volume_space(domain, 3), data: q },
        q0: OperatorMatrix { tag: OperatorTag::NewtonPressure, rows: rows1, cols: volume_space(domain, 3), data: q0 },
        qvec: OperatorMatrix { tag: OperatorTag::NewtonVector, rows: rows3, cols: volume_space(domain, 1), data: qvec },
    }
}

/// ℛ at any targets: `(1/μ(y)) ∫ ∂ᵢμ(x) σ̊ᵢⱼᵏ ρⱼ dx`, with `ρ` linearly
/// reconstructed in every cell.
pub fn remainder(domain: &Domain, targets: &[Target], mu: &ViscosityModel, integ: &Integrator) -> OperatorMatrix {
    let v = &domain.volume;
    let constant = mu.is_constant();
    let data = if constant {
        vec![0.0; targets.len() * 9 * v.len()]
    } else {
        let stencil = GradientStencil::new(v);
        assemble_linear(targets, &stencil, v.len(), 3, 3, |tg, c, buf| {
            let inv = 1.0 / mu.value(tg.y);
            blocks::remainder_moments(integ, v, c, tg, buf, mu).map(|b| b.map(|x| x * inv))
        })
    };
    OperatorMatrix {
        tag: OperatorTag::Remainder,
        rows: Space::of_targets(targets, 3),
        cols: volume_space(domain, 3),
        data,
    }
}

/// ℛ• at interior targets, principal value by subtraction, on the linear
/// reconstruction of the density.
pub fn pressure_remainder(domain: &Domain, targets: &[Target], mu: &ViscosityModel, integ: &Integrator) -> Result<OperatorMatrix> {
    check_interior(targets, "ℛ•")?;
    let v = &domain.volume;
    let constant = mu.is_constant();
    let data = if constant {
        vec![0.0; targets.len() * 3 * v.len()]
    } else {
        let stencil = GradientStencil::new(v);
        assemble_linear(targets, &stencil, v.len(), 1, 3, |tg, c, buf| {
            blocks::pressure_remainder_moments(integ, v, c, tg, buf, mu)
        })
    };
    Ok(OperatorMatrix {
        tag: OperatorTag::PressureRemainder,
        rows: Space::of_targets(targets, 1),
        cols: volume_space(domain, 3),
        data,
    })
}

#[cfg(test)]
mod tests;

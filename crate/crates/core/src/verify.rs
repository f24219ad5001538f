//! Manufactured solutions, identity checks and convergence studies.

use serde::Serialize;

use crate::bdie::{self, ConstraintMode, ProblemData, SystemKind};
use crate::error::{Error, Result};
use crate::expr::{self, Expression, ViscosityModel};
use crate::fields::{self, BoundaryVectorDensity, ScalarField, VectorField};
use crate::geom::{self, Vec3};
use crate::integrate::{volume_targets, Integrator, QuadSettings, Target};
use crate::kernels::Mat3;
use crate::mesh::Domain;
use crate::potentials::{apply, apply_linear, blocks};
use crate::stencil::GradientStencil;

mod suite;

pub use suite::{
    convergence_study, fit_slope, first_green_checks, green_checks, jump_checks, kernel_checks, laplace_constant_checks,
    nullspace_checks, random_density, rank_checks, run_suite, solve_d1_checks, solve_d2_checks, solve_levels, refinement_ladder,
    unit_viscosity_checks, CheckRow, Convergence, ConvergenceStudy, Relation, SuiteReport, SUITES,
};

/// Names accepted by [`build_case`].
pub const CASES: [&str; 3] = ["const-mu-rigid", "const-mu-shear", "poly1"];

/// Closed-form solution `(p, v)` with viscosity `μ` and the derived data
/// `f = 𝒜(p, v)`, `g = div v`.
#[derive(Clone, Debug)]
pub struct ManufacturedCase {
    pub name: String,
    pub mu: ViscosityModel,
    pub p: Expression,
    pub v: [Expression; 3],
    pub grad_v: [[Expression; 3]; 3],
    pub g: Expression,
    pub f: [Expression; 3],
}

fn c(v: f64) -> Expression {
    Expression::constant(v)
}

fn x(i: usize) -> Expression {
    Expression::var(i)
}

/// Symbolic `𝒜(p, v)ⱼ = ∂ᵢσⱼᵢ` with
/// `σⱼᵢ = -pδⱼᵢ + μ(∂ᵢvⱼ + ∂ⱼvᵢ - (2/3)δⱼᵢ div v)`.
pub fn stokes_operator(mu: &Expression, p: &Expression, v: &[Expression; 3]) -> [Expression; 3] {
    let grad: [[Expression; 3]; 3] = [0, 1, 2].map(|j| v[j].gradient());
    let div = expr::add(expr::add(grad[0][0].clone(), grad[1][1].clone()), grad[2][2].clone());
    [0, 1, 2].map(|j| {
        let mut acc = c(0.0);
        for i in 0..3 {
            let mut s = expr::mul(mu.clone(), expr::add(grad[j][i].clone(), grad[i][j].clone()));
            if i == j {
                let iso = expr::add(p.clone(), expr::mul(c(2.0 / 3.0), expr::mul(mu.clone(), div.clone())));
                s = expr::sub(s, iso);
            }
            acc = expr::add(acc, s.differentiate(i));
        }
        acc
    })
}

/// Builds one of the named cases in [`CASES`].
pub fn build_case(name: &str) -> Result<ManufacturedCase> {
    let (mu, p, v) = match name {
        "const-mu-rigid" => {
            let (a, b) = ([1.0, -0.5, 0.25], [0.3, -0.2, 0.7]);
            // a + b × x
            let v = [0, 1, 2].map(|k| {
                let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                expr::add(c(a[k]), expr::sub(expr::mul(c(b[i]), x(j)), expr::mul(c(b[j]), x(i))))
            });
            (c(1.0), c(0.0), v)
        }
        "const-mu-shear" => (c(1.0), c(0.0), [x(1), c(0.0), c(0.0)]),
        "poly1" => (
            expr::add(c(2.0), x(0)),
            x(0),
            [0, 1, 2].map(|i| expr::pow(x(i), 2)),
        ),
        other => return Err(Error::UnknownCase(other.to_string())),
    };
    Ok(ManufacturedCase::new(name, mu, p, v))
}

impl ManufacturedCase {
    pub fn new(name: &str, mu: Expression, p: Expression, v: [Expression; 3]) -> Self {
        let grad_v = [0, 1, 2].map(|j| v[j].gradient());
        let g = expr::add(expr::add(grad_v[0][0].clone(), grad_v[1][1].clone()), grad_v[2][2].clone());
        let f = stokes_operator(&mu, &p, &v);
        let lower = 0.5 * mu.evaluate([0.0; 3]).abs().max(f64::MIN_POSITIVE);
        Self { name: name.to_string(), mu: ViscosityModel::new(mu, lower), p, v, grad_v, g, f }
    }

    pub fn velocity(&self, y: Vec3) -> Vec3 {
        self.v.each_ref().map(|e| e.evaluate(y))
    }

    /// `∂ₗvₖ` as `[k][l]`.
    pub fn velocity_gradient(&self, y: Vec3) -> Mat3 {
        self.grad_v.each_ref().map(|row| row.each_ref().map(|e| e.evaluate(y)))
    }

    /// Stress tensor `σ(p, v)`, symmetric.
    pub fn stress(&self, y: Vec3) -> Mat3 {
        let (p, mu, gv) = (self.p.evaluate(y), self.mu.value(y), self.velocity_gradient(y));
        let div = gv[0][0] + gv[1][1] + gv[2][2];
        let mut s = [[0.0; 3]; 3];
        for (j, row) in s.iter_mut().enumerate() {
            for (i, e) in row.iter_mut().enumerate() {
                *e = mu * (gv[j][i] + gv[i][j]);
                if i == j {
                    *e -= p + 2.0 / 3.0 * mu * div;
                }
            }
        }
        s
    }

    /// Traction `σ(p, v)n`.
    pub fn traction(&self, y: Vec3, n: Vec3) -> Vec3 {
        let s = self.stress(y);
        s.map(|row| geom::dot(row, n))
    }

    /// `f`, `g` and `φ₀ = γ⁺v` sampled on the mesh.
    pub fn data(&self, domain: &Domain) -> ProblemData {
        ProblemData {
            f: VectorField::from_expr(domain, self.f.clone()),
            g: ScalarField::from_expr(domain, self.g.clone()),
            phi0: BoundaryVectorDensity::from_expr(domain, &self.v),
        }
    }

    /// Exact `ψ = T⁺(p, v)` at panel centroids with the panel normals.
    pub fn psi(&self, domain: &Domain) -> BoundaryVectorDensity {
        let s = &domain.surface;
        BoundaryVectorDensity::from_fn(domain, |t, y| self.traction(y, s.normals[t]))
    }

    /// Exact `v` at the volume nodes.
    pub fn velocity_field(&self, domain: &Domain) -> Vec<f64> {
        domain.volume.centroids.iter().flat_map(|&y| self.velocity(y)).collect()
    }

    /// Exact `p` at the volume nodes.
    pub fn pressure_field(&self, domain: &Domain) -> Vec<f64> {
        domain.volume.centroids.iter().map(|&y| self.p.evaluate(y)).collect()
    }

    /// Largest relative deviation of the symbolic `f` from central
    /// differences of the evaluated stress, over the given points.
    pub fn fd_operator_error(&self, points: &[Vec3], step: f64) -> f64 {
        let mut worst = 0.0f64;
        for &y in points {
            let mut fd = [0.0; 3];
            for (i, _) in y.iter().enumerate() {
                let (mut yp, mut ym) = (y, y);
                yp[i] += step;
                ym[i] -= step;
                let (sp, sm) = (self.stress(yp), self.stress(ym));
                for (j, v) in fd.iter_mut().enumerate() {
                    *v += (sp[j][i] - sm[j][i]) / (2.0 * step);
                }
            }
            let sym = self.f.each_ref().map(|e| e.evaluate(y));
            let scale = geom::norm(sym).max(1.0);
            worst = worst.max(geom::norm(geom::sub(sym, fd)) / scale);
        }
        worst
    }
}

/// Relative L² residuals of the two third Green identities at the volume
/// nodes.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GreenResidual {
    pub pressure: f64,
    pub velocity: f64,
}

/// Residuals of `p + ℛ•v + Πˢψ + Πᵈγ⁺v = 𝒬̊f + (4/3)μg` and
/// `v + ℛv - Vψ + Wγ⁺v = 𝒰f + 𝑸g` with the exact fields of `case`,
/// relative to the largest of the field, operator and data norms of each
/// identity.
pub fn green_identity_residual(case: &ManufacturedCase, domain: &Domain, integ: &Integrator) -> GreenResidual {
    let targets = volume_targets(domain);
    let data = case.data(domain);
    let (f0, f) = bdie::volume_rhs(domain, &case.mu, &data, integ, &targets);
    let p = case.pressure_field(domain);
    let v = case.velocity_field(domain);
    let psi = case.psi(domain).values;
    let (lhs_p, lhs_v) = apply_rows_one_two(domain, &case.mu, integ, &targets, &v, &psi);
    let rp: Vec<f64> = (0..p.len()).map(|i| p[i] + lhs_p[i] - f0[i]).collect();
    let rv: Vec<f64> = (0..v.len()).map(|i| v[i] + lhs_v[i] - f[i]).collect();
    let l2 = |x: &[f64], c: usize| fields::volume_l2(domain, x, c);
    let scale_p = l2(&p, 1).max(l2(&f0, 1)).max(l2(&lhs_p, 1)).max(f64::MIN_POSITIVE);
    let scale_v = l2(&v, 3).max(l2(&f, 3)).max(l2(&lhs_v, 3)).max(f64::MIN_POSITIVE);
    GreenResidual {
        pressure: fields::volume_l2(domain, &rp, 1) / scale_p,
        velocity: fields::volume_l2(domain, &rv, 3) / scale_v,
    }
}

/// `(ℛ•v + Πˢψ, ℛv - Vψ)` at interior targets, matrix-free.
fn apply_rows_one_two(
    domain: &Domain,
    mu: &ViscosityModel,
    integ: &Integrator,
    targets: &[Target],
    v: &[f64],
    psi: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let (vol, s) = (&domain.volume, &domain.surface);
    let (mut row1, mut row2) = (vec![0.0; targets.len()], vec![0.0; 3 * targets.len()]);
    if !mu.is_constant() {
        let st = GradientStencil::new(vol);
        row1 = apply_linear(targets, &st, vol.len(), 1, 3, v, |tg, c, buf| {
            blocks::pressure_remainder_moments(integ, vol, c, tg, buf, mu)
        });
        row2 = apply_linear(targets, &st, vol.len(), 3, 3, v, |tg, c, buf| {
            let inv = 1.0 / mu.value(tg.y);
            blocks::remainder_moments(integ, vol, c, tg, buf, mu).map(|b| b.map(|x| x * inv))
        });
    }
    let ps = apply(targets, s.len(), 1, 3, psi, |tg, t, buf| blocks::pressure_single(integ, s, t, tg, buf));
    let vl = apply(targets, s.len(), 3, 3, psi, |tg, t, buf| {
        let inv = -1.0 / mu.value(tg.y);
        blocks::single_layer(integ, s, t, tg, buf).map(|x| x * inv)
    });
    row1.iter_mut().zip(&ps).for_each(|(a, b)| *a += b);
    row2.iter_mut().zip(&vl).for_each(|(a, b)| *a -= b);
    (row1, row2)
}

/// `|⟨T⁺(p, v), u⟩_S - ∫_Ω [𝒜(p, v)·u + E((p, v), u)] dx|` relative to
/// the integrals of the absolute integrands, for a test field `u`.
pub fn first_green_identity_check(case: &ManufacturedCase, u: &[Expression; 3], domain: &Domain) -> f64 {
    let grad_u: [[Expression; 3]; 3] = u.each_ref().map(Expression::gradient);
    let eval3 = |e: &[Expression; 3], y: Vec3| e.each_ref().map(|c| c.evaluate(y));
    let s = &domain.surface;
    let rule = crate::quadrature::triangle_rule(5);
    let (mut lhs, mut mag) = (0.0, 0.0);
    for t in 0..s.len() {
        let [a, b, cc] = s.corners(t);
        for (q, w) in rule.nodes.iter().zip(&rule.weights) {
            let y = [0, 1, 2].map(|k| a[k] + q[0] * (b[k] - a[k]) + q[1] * (cc[k] - a[k]));
            let term = 2.0 * w * s.areas[t] * geom::dot(case.traction(y, s.normals[t]), eval3(u, y));
            lhs += term;
            mag += term.abs();
        }
    }
    let (mut body, mut energy) = (0.0, 0.0);
    for cell in 0..domain.volume.len() {
        for (y, w) in domain.volume.cell_quadrature(cell, 6) {
            let gu = grad_u.each_ref().map(|row| row.each_ref().map(|e| e.evaluate(y)));
            let gv = case.velocity_gradient(y);
            let mu = case.mu.value(y);
            let (dv, du) = (gv[0][0] + gv[1][1] + gv[2][2], gu[0][0] + gu[1][1] + gu[2][2]);
            let mut e = -2.0 / 3.0 * mu * dv * du - case.p.evaluate(y) * du;
            for i in 0..3 {
                for j in 0..3 {
                    e += 0.5 * mu * (gu[j][i] + gu[i][j]) * (gv[j][i] + gv[i][j]);
                }
            }
            let b = w * geom::dot(eval3(&case.f, y), eval3(u, y));
            body += b;
            energy += w * e;
            mag += b.abs() + (w * e).abs();
        }
    }
    let scale = mag.max(f64::MIN_POSITIVE);
    (lhs - body - energy).abs() / scale
}

/// Mesh refinement level of the ball.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Level {
    pub subdiv: u32,
    pub layers: u32,
}

impl Level {
    pub fn new(subdiv: u32, layers: u32) -> Self {
        Self { subdiv, layers }
    }

    pub fn domain(&self) -> Result<Domain> {
        Domain::ball(self.subdiv, self.layers, 1.0)
    }
}

/// Relative errors of a discrete solution against a manufactured case.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SolutionErrors {
    pub h: f64,
    pub unknowns: usize,
    /// ‖v_h - v‖ / ‖v‖.
    pub v: f64,
    /// Mean-zero pressures.
    pub p: f64,
    /// ψ with span{n} projected out.
    pub psi: f64,
    pub seconds: f64,
}

/// Compares a discrete solution with the exact fields of `case`.
pub fn solution_errors(case: &ManufacturedCase, domain: &Domain, sol: &bdie::Solution) -> SolutionErrors {
    let rel = |num: f64, den: f64| num / den.max(f64::MIN_POSITIVE);
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    let v = case.velocity_field(domain);
    let p = fields::mean_zero(domain, &case.pressure_field(domain));
    let ph = fields::mean_zero(domain, &sol.p);
    let psi = fields::project_out_normal(domain, &case.psi(domain).values);
    let psih = fields::project_out_normal(domain, &sol.psi);
    SolutionErrors {
        h: domain.surface.h(),
        unknowns: sol.report.unknowns,
        v: rel(fields::volume_l2(domain, &diff(&sol.v, &v), 3), fields::volume_l2(domain, &v, 3)),
        p: rel(fields::volume_l2(domain, &diff(&ph, &p), 1), fields::volume_l2(domain, &p, 1)),
        psi: rel(fields::boundary_l2(domain, &diff(&psih, &psi)), fields::boundary_l2(domain, &psi)),
        seconds: sol.report.assembly_seconds + sol.report.solve_seconds,
    }
}

/// Assembles and solves D1 or D2 for a case on one level.
pub fn solve_case(
    case: &ManufacturedCase,
    domain: &Domain,
    kind: SystemKind,
    integ: &Integrator,
) -> Result<(bdie::Solution, SolutionErrors)> {
    let data = case.data(domain);
    let sys = match kind {
        SystemKind::D1 => bdie::assemble_d1(domain, &case.mu, &data, integ, ConstraintMode::Lagrange)?,
        SystemKind::D2 => bdie::assemble_d2(domain, &case.mu, &data, integ, ConstraintMode::Lagrange)?,
    };
    let sol = bdie::solve(domain, &sys)?;
    let err = solution_errors(case, domain, &sol);
    Ok((sol, err))
}

/// Default integrator used by the studies.
pub fn default_integrator() -> Integrator {
    Integrator::new(QuadSettings::default())
}

#[cfg(test)]
mod tests;

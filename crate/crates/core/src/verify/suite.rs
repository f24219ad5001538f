//! Named verification suites with tabular reports.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{build_case, default_integrator, first_green_identity_check, green_identity_residual, solution_errors, Level, ManufacturedCase};
use crate::bdie::{self, ConstraintMode, SystemKind};
use crate::error::{Error, Result};
use crate::expr::{self, Expression, ViscosityModel};
use crate::fields;
use crate::geom::{self, Vec3};
use crate::integrate::{boundary_targets, point_targets, Target};
use crate::kernels::{fundamental_pair, parametrix_pair, KernelPoint};
use crate::mesh::Domain;
use crate::potentials::traction::{extrapolate, single_layer_traction, Offsets};
use crate::potentials::{adjoint_double_layer, double_layer, laplace_double_layer, pressure_single, single_layer};

pub const SUITES: [&str; 8] = ["kernels", "quadrature", "jumps", "nullspace", "green", "solve-d1", "solve-d2", "convergence"];

/// Seed of the sample points and random densities.
const SEED: u64 = 20_240_531;
/// Quadrature floor. Identities that hold exactly on flat panels leave only
/// quadrature error, which refinement does not decrease.
const ROUNDOFF_FLOOR: f64 = 1e-6;

/// How a measured value is compared with its tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Relation {
    /// `value ≤ tolerance`.
    AtMost,
    /// `value < tolerance`.
    Below,
    /// `value > tolerance`.
    Above,
    /// `value ≥ tolerance`.
    AtLeast,
    /// Informational row.
    Report,
}

impl Relation {
    fn holds(self, value: f64, tolerance: f64) -> bool {
        match self {
            Relation::AtMost => value <= tolerance,
            Relation::Below => value < tolerance,
            Relation::Above => value > tolerance,
            Relation::AtLeast => value >= tolerance,
            Relation::Report => value.is_finite(),
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::Below => "<",
            Relation::Above => ">",
            Relation::AtLeast => ">=",
            Relation::Report => "",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckRow {
    pub suite: String,
    pub check: String,
    pub level: String,
    pub h: f64,
    pub value: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SuiteReport {
    pub rows: Vec<CheckRow>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn extend(&mut self, other: SuiteReport) {
        self.rows.extend(other.rows);
    }

    fn push(&mut self, suite: &str, check: impl Into<String>, level: &str, h: f64, value: f64, relation: Relation, tolerance: f64) {
        self.rows.push(CheckRow {
            suite: suite.into(),
            check: check.into(),
            level: level.into(),
            h,
            value,
            relation,
            tolerance,
            pass: relation.holds(value, tolerance),
        });
    }

    /// Row stating that `errors` decrease strictly level by level. Values
    /// that all sit below the roundoff floor count as converged.
    fn push_decreasing(&mut self, suite: &str, check: &str, h: &[f64], errors: &[f64]) {
        let worst = errors.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
        let pass = errors.len() >= 2 && errors.windows(2).all(|w| w[1] < w[0] || w[0].max(w[1]) <= ROUNDOFF_FLOOR);
        self.rows.push(CheckRow {
            suite: suite.into(),
            check: format!("{check} ratio"),
            level: "all".into(),
            h: h.last().copied().unwrap_or(f64::NAN),
            value: worst,
            relation: Relation::Below,
            tolerance: 1.0,
            pass,
        });
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:<28} {:<6} {:>9} {:>12} {:>2} {:>9}  result", "suite", "check", "level", "h", "value", "", "tol")?;
        for r in &self.rows {
            let tol = if r.relation == Relation::Report { "-".to_string() } else { format!("{:.2e}", r.tolerance) };
            writeln!(
                f,
                "{:<12} {:<28} {:<6} {:>9.3e} {:>12.4e} {:>2} {:>9}  {}",
                r.suite,
                r.check,
                r.level,
                r.h,
                r.value,
                r.relation.symbol(),
                tol,
                if r.pass { "pass" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Least-squares slope of `log e` against `log h`.
pub fn fit_slope(h: &[f64], e: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = h.iter().zip(e).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Runs a named suite. `subdiv` is the surface level at which the
/// thresholds apply; the solve suites use [`solve_levels`].
pub fn run_suite(name: &str, subdiv: u32) -> Result<SuiteReport> {
    match name {
        "kernels" => {
            let mut r = kernel_checks();
            r.extend(unit_viscosity_checks(subdiv.clamp(1, 2))?);
            Ok(r)
        }
        "quadrature" => {
            let mut r = laplace_constant_checks(subdiv)?;
            r.extend(first_green_checks(subdiv)?);
            Ok(r)
        }
        "jumps" => jump_checks(subdiv),
        "nullspace" => {
            let mut r = nullspace_checks(subdiv)?;
            r.extend(rank_checks(subdiv)?);
            Ok(r)
        }
        "green" => green_checks(subdiv),
        "solve-d1" => solve_d1_checks(subdiv),
        "solve-d2" => solve_d2_checks(subdiv),
        "convergence" => convergence_study("poly1", &solve_levels(subdiv), &[SystemKind::D1, SystemKind::D2]).map(|c| c.report),
        _ => Err(Error::UnknownSuite(name.to_string())),
    }
}

/// Refinement ladder `(1, 1), (1, 2), (2, 2), (2, 3), (3, 3), ...`,
/// alternating a layer and a surface refinement.
pub fn refinement_ladder(count: usize) -> Vec<Level> {
    (0..count as u32).map(|k| Level::new(1 + k / 2, 1 + (k + 1) / 2)).collect()
}

/// The three ladder levels ending at `(s, s)`, `s = max(subdiv, 2)`.
pub fn solve_levels(subdiv: u32) -> Vec<Level> {
    let end = 2 * subdiv.max(2) as usize - 1;
    refinement_ladder(end).split_off(end - 3)
}

fn label(level: Level) -> String {
    format!("s{}L{}", level.subdiv, level.layers)
}

/// Closed-form spot checks of the fundamental solution at offset
/// `(1, 0, 0)` and the parametrix scaling.
pub fn kernel_checks() -> SuiteReport {
    const S: &str = "kernels";
    let mut r = SuiteReport::default();
    let kp = KernelPoint::with_normal([1.0, 0.0, 0.0], [0.0; 3], [1.0, 0.0, 0.0]);
    let v = fundamental_pair(&kp).expect("distinct points");
    let c = 1.0 / (4.0 * PI);
    r.push(S, "q1 = 1/(4pi)", "-", 1.0, (v.pressure[0] - c).abs(), Relation::AtMost, 1e-12);
    r.push(S, "u11 = -1/(4pi)", "-", 1.0, (v.velocity[0][0] + c).abs(), Relation::AtMost, 1e-12);
    r.push(S, "sigma11^1 = 3/(4pi)", "-", 1.0, (v.stress[0][0][0] - 3.0 * c).abs(), Relation::AtMost, 1e-12);

    let mu = ViscosityModel::parse("2 + x1 + x2 * x3", 0.5).expect("valid viscosity");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let x = random_point(&mut rng, 0.9);
        let y = random_point(&mut rng, 0.9);
        let n = geom::normalize(random_point(&mut rng, 1.0));
        let kp = KernelPoint::with_normal(x, y, n);
        let (Ok(f), Ok(p)) = (fundamental_pair(&kp), parametrix_pair(&kp, &mu)) else { continue };
        let ratio = mu.value(x) / mu.value(y);
        for k in 0..3 {
            worst = worst.max(rel(p.pressure[k], ratio * f.pressure[k]));
            for j in 0..3 {
                worst = worst.max(rel(p.velocity[k][j], f.velocity[k][j] / mu.value(y)));
            }
        }
    }
    r.push(S, "parametrix scaling", "-", 0.0, worst, Relation::AtMost, 1e-14);
    r
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Assembled ℛ, ℛ• and T⁺(ℛ•, ℛ) at μ ≡ 1.
pub fn unit_viscosity_checks(subdiv: u32) -> Result<SuiteReport> {
    const S: &str = "kernels";
    let level = Level::new(subdiv, 2);
    let d = level.domain()?;
    let integ = default_integrator();
    let ops = bdie::assemble_operators(&d, &ViscosityModel::unit(), &integ, &[SystemKind::D1, SystemKind::D2])?;
    let mut r = SuiteReport::default();
    let h = d.surface.h();
    r.push(S, "mu=1: max|R|", &label(level), h, ops.rem.max_abs(), Relation::AtMost, 1e-14);
    r.push(S, "mu=1: max|R dot|", &label(level), h, ops.rdot.max_abs(), Relation::AtMost, 1e-14);
    if let Some((t, _)) = &ops.traction {
        r.push(S, "mu=1: max|T+(R dot, R)|", &label(level), h, t.max_abs(), Relation::AtMost, 1e-14);
    }
    Ok(r)
}

fn random_point(rng: &mut ChaCha8Rng, radius: f64) -> Vec3 {
    loop {
        let x = [0, 1, 2].map(|_| rng.gen_range(-radius..radius));
        if geom::norm(x) < radius {
            return x;
        }
    }
}

fn sample_points(count: usize, radius: f64) -> Vec<Vec3> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    (0..count).map(|_| random_point(&mut rng, radius)).collect()
}

/// `max |W_Δ(1) - 1|` at 20 seeded interior points on `subdiv - 1`,
/// `subdiv` and `subdiv + 1`.
pub fn laplace_constant_checks(subdiv: u32) -> Result<SuiteReport> {
    const S: &str = "quadrature";
    let mut r = SuiteReport::default();
    let integ = default_integrator();
    let points = sample_points(20, 0.9);
    let (mut hs, mut errs) = (Vec::new(), Vec::new());
    for s in subdiv.saturating_sub(1).max(1)..=subdiv + 1 {
        let level = Level::new(s, 1);
        let d = level.domain()?;
        let one = vec![1.0; d.surface.len()];
        let w = laplace_double_layer(&d, &point_targets(&d, &points), &integ).apply(&one)?;
        let e = w.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        let h = d.surface.h();
        let relation = if s == subdiv { Relation::AtMost } else { Relation::Report };
        r.push(S, "max|W_lap(1) - 1|", &label(level), h, e, relation, 1e-2);
        hs.push(h);
        errs.push(e);
    }
    r.push_decreasing(S, "W_lap(1)", &hs, &errs);
    Ok(r)
}

/// First Green identity for a rigid motion, a constant pressure against a
/// divergence-free field, and poly1 against a rotation.
pub fn first_green_checks(subdiv: u32) -> Result<SuiteReport> {
    const S: &str = "quadrature";
    let mut r = SuiteReport::default();
    let level = Level::new(subdiv, 2);
    let d = level.domain()?;
    let h = d.surface.h();
    let zero = || Expression::constant(0.0);
    let rotation = [Expression::var(1), expr::neg(Expression::var(0)), zero()];

    let rigid = build_case("const-mu-rigid")?;
    let e = first_green_identity_check(&rigid, &rigid.v, &d);
    r.push(S, "green1 rigid", &label(level), h, e, Relation::AtMost, 1e-10);

    let pressure = ManufacturedCase::new("unit-pressure", Expression::constant(1.0), Expression::constant(1.0), [zero(), zero(), zero()]);
    let e = first_green_identity_check(&pressure, &rotation, &d);
    r.push(S, "green1 p=1, div u=0", &label(level), h, e, Relation::AtMost, 1e-10);

    let poly = build_case("poly1")?;
    let e = first_green_identity_check(&poly, &rotation, &d);
    r.push(S, "green1 poly1", &label(level), h, e, Relation::AtMost, 1e-2);
    Ok(r)
}

/// Smooth seeded density: each component a sum of three sines.
pub fn random_density(domain: &Domain, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ seed);
    let modes: Vec<[(f64, Vec3, f64); 3]> = (0..3)
        .map(|_| {
            [0, 1, 2].map(|_| {
                let amp = rng.gen_range(-1.0..1.0);
                let k = [0, 1, 2].map(|_| rng.gen_range(-2.0..2.0));
                (amp, k, rng.gen_range(0.0..2.0 * PI))
            })
        })
        .collect();
    domain
        .surface
        .centroids
        .iter()
        .flat_map(|&x| {
            [0, 1, 2].map(|c| modes[c].iter().map(|(a, k, ph)| a * (geom::dot(*k, x) + ph).sin()).sum::<f64>())
        })
        .collect()
}

/// Interior limits of the double layer and of the single-layer traction
/// against `-ρ/2 + 𝒲ρ` and `ρ/2 + 𝒲′ρ` for three random densities.
pub fn jump_checks(subdiv: u32) -> Result<SuiteReport> {
    const S: &str = "jumps";
    let mut r = SuiteReport::default();
    let integ = default_integrator();
    let mu = ViscosityModel::parse("2 + x1", 0.5)?;
    let (mut hs, mut dl, mut sl) = (Vec::new(), Vec::new(), Vec::new());
    for s in 1..=subdiv {
        let level = Level::new(s, 1);
        let d = level.domain()?;
        let h = d.surface.h();
        let off = Offsets::jump(&d)?;
        let bt = boundary_targets(&d);
        let (far, near): (Vec<Target>, Vec<Target>) = off.targets.iter().map(|p| (p[0], p[1])).unzip();
        let w_far = double_layer(&d, &far, &mu, &integ);
        let w_near = double_layer(&d, &near, &mu, &integ);
        let w_on = double_layer(&d, &bt, &mu, &integ);
        let v0 = single_layer(&d, &bt, &ViscosityModel::unit(), &integ);
        let wp = adjoint_double_layer(&d, &mu, &v0, &integ);
        let tsl = single_layer_traction(&d, &mu, &integ, &off);
        let (mut e_dl, mut e_sl) = (0.0f64, 0.0f64);
        for seed in 1..=3 {
            let rho = random_density(&d, seed);
            let limit = extrapolate(&w_far.apply(&rho)?, &w_near.apply(&rho)?);
            let formula: Vec<f64> = w_on.apply(&rho)?.iter().zip(&rho).map(|(w, p)| w - 0.5 * p).collect();
            e_dl = e_dl.max(rel_l2(&d, &limit, &formula));
            let limit = tsl.apply(&rho)?;
            let formula: Vec<f64> = wp.apply(&rho)?.iter().zip(&rho).map(|(w, p)| w + 0.5 * p).collect();
            e_sl = e_sl.max(rel_l2(&d, &limit, &formula));
        }
        let relation = if s == subdiv { Relation::AtMost } else { Relation::Report };
        r.push(S, "double layer trace", &label(level), h, e_dl, relation, 5e-2);
        r.push(S, "single layer traction", &label(level), h, e_sl, relation, 5e-2);
        hs.push(h);
        dl.push(e_dl);
        sl.push(e_sl);
    }
    let last = hs.last().copied().unwrap_or(f64::NAN);
    r.push(S, "double layer slope", "all", last, fit_slope(&hs, &dl), Relation::Above, 0.5);
    r.push(S, "single layer slope", "all", last, fit_slope(&hs, &sl), Relation::Above, 0.5);
    Ok(r)
}

fn rel_l2(d: &Domain, a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    fields::boundary_l2(d, &diff) / fields::boundary_l2(d, b).max(f64::MIN_POSITIVE)
}

/// `‖𝒱̊n‖∞`, `‖(½ - 𝒲̊′)n‖∞` on S and `max|Πˢn - 1|` at 20 seeded
/// interior points, on levels `1..=subdiv`.
pub fn nullspace_checks(subdiv: u32) -> Result<SuiteReport> {
    const S: &str = "nullspace";
    let mut r = SuiteReport::default();
    let integ = default_integrator();
    let unit = ViscosityModel::unit();
    let points = sample_points(20, 0.9);
    let mut hs = Vec::new();
    let mut errs: [Vec<f64>; 3] = Default::default();
    for s in 1..=subdiv {
        let level = Level::new(s, 1);
        let d = level.domain()?;
        let h = d.surface.h();
        let n: Vec<f64> = d.surface.normals.iter().flatten().copied().collect();
        let bt = boundary_targets(&d);
        let v0 = single_layer(&d, &bt, &unit, &integ);
        let wp = adjoint_double_layer(&d, &unit, &v0, &integ);
        let vn = v0.apply(&n)?;
        let wn = wp.apply(&n)?;
        let pn = pressure_single(&d, &point_targets(&d, &points), &integ)?.apply(&n)?;
        let vals = [
            vn.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            wn.iter().zip(&n).fold(0.0f64, |m, (w, n)| m.max((0.5 * n - w).abs())),
            pn.iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs())),
        ];
        let relation = if s == subdiv { Relation::AtMost } else { Relation::Report };
        for (i, name) in ["|V0 n|inf", "|(1/2 - W0') n|inf", "max|Pi_s n - 1|"].iter().enumerate() {
            r.push(S, *name, &label(level), h, vals[i], relation, 5e-2);
            errs[i].push(vals[i]);
        }
        hs.push(h);
    }
    for (i, name) in ["V0 n", "(1/2 - W0') n", "Pi_s n - 1"].iter().enumerate() {
        r.push_decreasing(S, name, &hs, &errs[i]);
    }
    Ok(r)
}

/// Smallest two singular values of the unconstrained D1 matrix for poly1
/// at `(subdiv, 1)` and the alignment of the first singular vector with
/// the normalized `(1, 0, -n)`.
pub fn rank_checks(subdiv: u32) -> Result<SuiteReport> {
    const S: &str = "nullspace";
    let mut r = SuiteReport::default();
    let level = Level::new(subdiv, 1);
    let d = level.domain()?;
    let case = build_case("poly1")?;
    let sys = bdie::assemble_d1(&d, &case.mu, &case.data(&d), &default_integrator(), ConstraintMode::None)?;
    let (values, vectors) = bdie::smallest_singular_values(&sys.matrix, 2)?;
    let z = bdie::kernel_direction(&d);
    let cos: f64 = vectors[0].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>().abs();
    let h = d.surface.h();
    r.push(S, "sigma1 / sigma2", &label(level), h, values[0] / values[1], Relation::AtMost, 0.1);
    r.push(S, "|cos(z1, (1,0,-n))|", &label(level), h, cos, Relation::AtLeast, 0.99);
    Ok(r)
}

/// Third Green identities for poly1 on the solve levels.
pub fn green_checks(subdiv: u32) -> Result<SuiteReport> {
    const S: &str = "green";
    let mut r = SuiteReport::default();
    let integ = default_integrator();
    let case = build_case("poly1")?;
    let levels = solve_levels(subdiv);
    let (mut hs, mut ep, mut ev) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &level) in levels.iter().enumerate() {
        let d = level.domain()?;
        let g = green_identity_residual(&case, &d, &integ);
        let h = d.surface.h();
        let relation = if i + 1 == levels.len() { Relation::AtMost } else { Relation::Report };
        r.push(S, "pressure identity", &label(level), h, g.pressure, relation, 0.1);
        r.push(S, "velocity identity", &label(level), h, g.velocity, relation, 0.1);
        hs.push(h);
        ep.push(g.pressure);
        ev.push(g.velocity);
    }
    r.push_decreasing(S, "pressure identity", &hs, &ep);
    r.push_decreasing(S, "velocity identity", &hs, &ev);
    Ok(r)
}

/// Errors of one system over the solve levels.
pub struct ConvergenceStudy {
    pub kind: SystemKind,
    pub levels: Vec<Level>,
    pub errors: Vec<super::SolutionErrors>,
    pub report: SuiteReport,
}

fn study(case: &ManufacturedCase, kind: SystemKind, levels: &[Level], suite: &str) -> Result<ConvergenceStudy> {
    let integ = default_integrator();
    let mut r = SuiteReport::default();
    let mut errors = Vec::new();
    let tag = match kind {
        SystemKind::D1 => "D1",
        SystemKind::D2 => "D2",
    };
    for &level in levels {
        let d = level.domain()?;
        let (_, e) = super::solve_case(case, &d, kind, &integ)?;
        for (name, v) in [("v", e.v), ("p", e.p), ("psi", e.psi)] {
            r.push(suite, format!("{tag} err {name}"), &label(level), e.h, v, Relation::Report, f64::NAN);
        }
        errors.push(e);
    }
    let h: Vec<f64> = errors.iter().map(|e| e.h).collect();
    let last = h.last().copied().unwrap_or(f64::NAN);
    for (name, pick) in [("v", 0), ("p", 1), ("psi", 2)] {
        let es: Vec<f64> = errors.iter().map(|e| [e.v, e.p, e.psi][pick]).collect();
        r.push(suite, format!("{tag} slope {name}"), "all", last, fit_slope(&h, &es), Relation::Report, f64::NAN);
    }
    Ok(ConvergenceStudy { kind, levels: levels.to_vec(), errors, report: r })
}

/// D1 on poly1: monotone velocity and pressure errors, final ψ error.
pub fn solve_d1_checks(subdiv: u32) -> Result<SuiteReport> {
    const S: &str = "solve-d1";
    let case = build_case("poly1")?;
    let st = study(&case, SystemKind::D1, &solve_levels(subdiv), S)?;
    let mut r = st.report;
    let h: Vec<f64> = st.errors.iter().map(|e| e.h).collect();
    let last = st.errors.last().expect("three levels");
    r.push_decreasing(S, "D1 err v", &h, &st.errors.iter().map(|e| e.v).collect::<Vec<_>>());
    r.push_decreasing(S, "D1 err p", &h, &st.errors.iter().map(|e| e.p).collect::<Vec<_>>());
    r.push(S, "D1 final err psi", &label(*st.levels.last().expect("levels")), last.h, last.psi, Relation::AtMost, 0.1);
    Ok(r)
}

/// D1 against D2 on poly1 at `(s, s)`, `s = max(subdiv, 2)`, with shared
/// operators, and the
/// residual drift of both unconstrained systems under `x + (1, 0, -n)`.
pub fn solve_d2_checks(subdiv: u32) -> Result<SuiteReport> {
    const S: &str = "solve-d2";
    let mut r = SuiteReport::default();
    let level = *solve_levels(subdiv).last().expect("three levels");
    let d = level.domain()?;
    let lab = label(level);
    let h = d.surface.h();
    let case = build_case("poly1")?;
    let integ = default_integrator();
    let data = case.data(&d);
    let kinds = [SystemKind::D1, SystemKind::D2];
    let ops = bdie::assemble_operators(&d, &case.mu, &integ, &kinds)?;
    let mut velocities = Vec::new();
    for kind in kinds {
        let rhs = bdie::assemble_rhs(&d, &case.mu, &data, kind, &integ)?;
        let sys = bdie::build_system(&d, &ops, &rhs, kind, ConstraintMode::Lagrange)?;
        let sol = bdie::solve(&d, &sys)?;
        let e = solution_errors(&case, &d, &sol);
        let tag = if kind == SystemKind::D1 { "D1" } else { "D2" };
        r.push(S, format!("{tag} err v"), &lab, h, e.v, Relation::Report, f64::NAN);
        velocities.push(sol.v);

        let free = bdie::build_system(&d, &ops, &rhs, kind, ConstraintMode::None)?;
        let sol = bdie::solve(&d, &free)?;
        let z = bdie::kernel_direction(&d);
        // C = 1 on the unnormalized triple.
        let c = ((d.volume.len() + d.surface.len()) as f64).sqrt();
        let shifted: Vec<f64> = sol.x.iter().zip(&z).map(|(a, b)| a + c * b).collect();
        let (r0, r1) = (bdie::residual(&free, &sol.x)?, bdie::residual(&free, &shifted)?);
        let drift = [r1.pressure - r0.pressure, r1.velocity - r0.velocity, r1.boundary - r0.boundary]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        r.push(S, format!("{tag} kernel shift drift"), &lab, h, drift, Relation::AtMost, 1e-8);
    }
    let v = case.velocity_field(&d);
    let diff: Vec<f64> = velocities[0].iter().zip(&velocities[1]).map(|(a, b)| a - b).collect();
    let agree = fields::volume_l2(&d, &diff, 3) / fields::volume_l2(&d, &v, 3);
    r.push(S, "|v_D1 - v_D2| / |v|", &lab, h, agree, Relation::AtMost, 5e-2);
    Ok(r)
}

/// Errors of a case for each system over the given levels.
pub struct Convergence {
    pub studies: Vec<ConvergenceStudy>,
    pub report: SuiteReport,
}

pub fn convergence_study(case: &str, levels: &[Level], kinds: &[SystemKind]) -> Result<Convergence> {
    let case = build_case(case)?;
    let mut report = SuiteReport::default();
    let mut studies = Vec::new();
    for &kind in kinds {
        let st = study(&case, kind, levels, "convergence")?;
        report.extend(st.report.clone());
        studies.push(st);
    }
    Ok(Convergence { studies, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ladder_alternates_layers_and_subdivisions() {
        let pairs: Vec<(u32, u32)> = refinement_ladder(5).iter().map(|l| (l.subdiv, l.layers)).collect();
        assert_eq!(pairs, [(1, 1), (1, 2), (2, 2), (2, 3), (3, 3)]);
        assert_eq!(solve_levels(2), refinement_ladder(3));
        assert_eq!(solve_levels(1), refinement_ladder(3));
        assert_eq!(solve_levels(3), refinement_ladder(5)[2..].to_vec());
    }

    #[test]
    fn kernel_suite_passes() {
        let r = kernel_checks();
        assert!(r.passed(), "{r}");
        assert_eq!(r.rows.len(), 4);
    }

    #[test]
    fn decreasing_rows_respect_the_floor() {
        let mut r = SuiteReport::default();
        r.push_decreasing("t", "strict", &[1.0, 0.5, 0.25], &[1e-2, 5e-3, 1e-3]);
        r.push_decreasing("t", "stall", &[1.0, 0.5, 0.25], &[1e-2, 5e-3, 5e-3]);
        r.push_decreasing("t", "floor", &[1.0, 0.5, 0.25], &[1e-9, 3e-8, 2e-7]);
        r.push_decreasing("t", "single", &[1.0], &[1e-2]);
        assert_eq!(r.rows.iter().map(|x| x.pass).collect::<Vec<_>>(), [true, false, true, false]);
        assert!((r.rows[1].value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn relations_compare_as_named() {
        assert!(Relation::AtMost.holds(1.0, 1.0) && !Relation::Below.holds(1.0, 1.0));
        assert!(Relation::AtLeast.holds(0.99, 0.99) && !Relation::Above.holds(0.5, 0.5));
        assert!(Relation::Report.holds(3.0, f64::NAN) && !Relation::Report.holds(f64::NAN, 0.0));
    }

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(matches!(run_suite("bogus", 1), Err(Error::UnknownSuite(_))));
    }

    #[test]
    fn random_densities_are_seeded() {
        let d = Domain::ball(1, 1, 1.0).unwrap();
        assert_eq!(random_density(&d, 2), random_density(&d, 2));
        assert_ne!(random_density(&d, 1), random_density(&d, 2));
        assert_eq!(random_density(&d, 1).len(), 3 * d.surface.len());
    }

    #[test]
    fn table_marks_failures() {
        let mut r = SuiteReport::default();
        r.push("s", "ok", "-", 1.0, 0.1, Relation::AtMost, 0.2);
        r.push("s", "bad", "-", 1.0, 0.3, Relation::AtMost, 0.2);
        let text = r.to_string();
        assert!(!r.passed());
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().ends_with("FAIL"));
    }

    proptest! {
        #[test]
        fn slope_recovers_power_laws(c in 0.01..100.0f64, k in -1.0..4.0f64, h0 in 0.05..1.0f64) {
            let h = [h0, h0 / 2.0, h0 / 4.0];
            let e: Vec<f64> = h.iter().map(|x| c * x.powf(k)).collect();
            prop_assert!((fit_slope(&h, &e) - k).abs() < 1e-9);
        }
    }
}

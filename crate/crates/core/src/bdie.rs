//! Assembly and dense solution of the BDIE systems (D1) and (D2).
//!
//! Unknowns are ordered `(p, v, ψ)` with `p` one value per volume cell,
//! `v` three values per cell and `ψ` three values per boundary panel.
//! With the pressure sign of the single layer fixed in `potentials`,
//! the block rows read
//!
//! ```text
//! D1:  p + ℛ•v + Πˢψ = F₀,   v + ℛv - Vψ = F,   γ⁺ℛv - 𝒱ψ = γ⁺F - φ₀
//! D2:  rows 1, 2 as D1,      T⁺(ℛ•, ℛ)v + (½I - 𝒲′)ψ = T⁺(F₀, F)
//! ```
//!
//! and the homogeneous systems are solved by `(1, 0, -n)`. The bordered
//! form carries two extra unknowns: a constant pressure shift `λₚ`, so
//! that the stored `p` has zero mean, and a multiplier `λ_ψ` for the
//! constraint `⟨ψ, n⟩ = 0`.

use std::ops::Range;
use std::time::Instant;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::ViscosityModel;
use crate::fields::{BoundaryVectorDensity, ScalarField, VectorField};
use crate::geom::Vec3;
use crate::integrate::{boundary_targets, volume_targets, Integrator, QPoint, Target};
use crate::mesh::Domain;
use crate::potentials::traction::{self, Jet, Offsets};
use crate::potentials::{self, apply, blocks, OperatorMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    D1,
    D2,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintMode {
    #[default]
    Lagrange,
    None,
}

/// Data of the Dirichlet problem: `𝒜(p, v) = f`, `div v = g`, `γ⁺v = φ₀`.
#[derive(Clone, Debug)]
pub struct ProblemData {
    pub f: VectorField,
    pub g: ScalarField,
    pub phi0: BoundaryVectorDensity,
}

impl ProblemData {
    pub fn zeros(domain: &Domain) -> Self {
        Self { f: VectorField::zeros(domain), g: ScalarField::zeros(domain), phi0: BoundaryVectorDensity::zeros(domain) }
    }
}

/// Right-hand side blocks: `F₀` and `F` at volume nodes and the third row
/// (`γ⁺F - φ₀` for D1, `T⁺(F₀, F)` for D2) at boundary nodes.
#[derive(Clone, Debug)]
pub struct Rhs {
    pub f0: Vec<f64>,
    pub f: Vec<f64>,
    pub boundary: Vec<f64>,
}

impl Rhs {
    pub fn is_zero(&self, tol: f64) -> bool {
        self.f0.iter().chain(&self.f).chain(&self.boundary).all(|v| v.abs() <= tol)
    }
}

/// Sizes and offsets of the unknown vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Layout {
    pub volume_nodes: usize,
    pub boundary_nodes: usize,
    pub constraints: usize,
}

impl Layout {
    pub fn new(domain: &Domain, mode: ConstraintMode) -> Self {
        Self {
            volume_nodes: domain.volume.len(),
            boundary_nodes: domain.surface.len(),
            constraints: if mode == ConstraintMode::Lagrange { 2 } else { 0 },
        }
    }

    pub fn p(&self) -> Range<usize> {
        0..self.volume_nodes
    }

    pub fn v(&self) -> Range<usize> {
        self.volume_nodes..4 * self.volume_nodes
    }

    pub fn psi(&self) -> Range<usize> {
        let s = 4 * self.volume_nodes;
        s..s + 3 * self.boundary_nodes
    }

    pub fn extra(&self) -> Range<usize> {
        let s = self.psi().end;
        s..s + self.constraints
    }

    /// Unknowns without the bordering.
    pub fn core_dim(&self) -> usize {
        self.psi().end
    }

    pub fn dim(&self) -> usize {
        self.core_dim() + self.constraints
    }

    /// Row ranges of the block equations, in order.
    pub fn row_blocks(&self) -> [(&'static str, Range<usize>); 4] {
        [("pressure", self.p()), ("velocity", self.v()), ("boundary", self.psi()), ("constraints", self.extra())]
    }
}

/// Label of one stored operator block inside the global matrix.
#[derive(Clone, Debug, Serialize)]
pub struct BlockLabel {
    pub name: String,
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

/// Assembled system with labeled blocks.
#[derive(Clone, Debug)]
pub struct DenseBlockSystem {
    pub kind: SystemKind,
    pub mode: ConstraintMode,
    pub layout: Layout,
    pub matrix: Mat<f64>,
    pub rhs: Vec<f64>,
    pub blocks: Vec<BlockLabel>,
    pub assembly_seconds: f64,
}

/// Operator blocks shared by D1 and D2.
pub struct Operators {
    /// ℛ• at volume nodes.
    pub rdot: OperatorMatrix,
    /// ℛ at volume nodes.
    pub rem: OperatorMatrix,
    /// Πˢ at volume nodes.
    pub ps: OperatorMatrix,
    /// V at volume nodes.
    pub vl: OperatorMatrix,
    /// γ⁺ℛ and 𝒱 (D1).
    pub trace: Option<(OperatorMatrix, OperatorMatrix)>,
    /// T⁺(ℛ•, ℛ) and 𝒲′ (D2).
    pub traction: Option<(OperatorMatrix, OperatorMatrix)>,
}

/// Assembles every operator needed by the requested systems.
pub fn assemble_operators(
    domain: &Domain,
    mu: &ViscosityModel,
    integ: &Integrator,
    kinds: &[SystemKind],
) -> Result<Operators> {
    let vt = volume_targets(domain);
    let bt = boundary_targets(domain);
    let rdot = potentials::pressure_remainder(domain, &vt, mu, integ)?;
    let rem = potentials::remainder(domain, &vt, mu, integ);
    let ps = potentials::pressure_single(domain, &vt, integ)?;
    let vl = potentials::single_layer(domain, &vt, mu, integ);
    let need_d2 = kinds.contains(&SystemKind::D2);
    let vcal = if kinds.contains(&SystemKind::D1) || (need_d2 && !mu.is_constant()) {
        Some(potentials::single_layer(domain, &bt, mu, integ))
    } else {
        None
    };
    let traction = if need_d2 {
        let offsets = Offsets::traction(domain)?;
        let trem = traction::remainder_traction(domain, mu, integ, &offsets);
        // The 𝒱̊ correction enters only for variable viscosity.
        let mut v0 = vcal.clone().unwrap_or_else(|| potentials::single_layer(domain, &[], mu, integ));
        v0.scale_rows(|t| mu.value(bt[t].y));
        let wadj = potentials::adjoint_double_layer(domain, mu, &v0, integ);
        Some((trem, wadj))
    } else {
        None
    };
    let trace = if kinds.contains(&SystemKind::D1) {
        let remb = potentials::remainder(domain, &bt, mu, integ);
        Some((remb, vcal.expect("assembled for D1")))
    } else {
        None
    };
    Ok(Operators { rdot, rem, ps, vl, trace, traction })
}

/// Right-hand side of D1 or D2 by matrix-free application of the Newton
/// and layer potentials.
pub fn assemble_rhs(
    domain: &Domain,
    mu: &ViscosityModel,
    data: &ProblemData,
    kind: SystemKind,
    integ: &Integrator,
) -> Result<Rhs> {
    let vt = volume_targets(domain);
    let (f0, f) = volume_rhs(domain, mu, data, integ, &vt);
    let boundary = match kind {
        SystemKind::D1 => trace_rhs(domain, mu, data, integ),
        SystemKind::D2 => traction_rhs(domain, mu, data, integ)?,
    };
    Ok(Rhs { f0, f, boundary })
}

/// `F₀ = 𝒬̊f + (4/3)μg - Πᵈφ₀` and `F = 𝒰f + 𝑸g - Wφ₀` at the targets.
/// Closed forms attached to `g` and `φ₀` are integrated directly; the
/// strongly singular kernels of 𝑸 and Πᵈ would otherwise see the jumps of
/// the piecewise-constant samples.
pub fn volume_rhs(
    domain: &Domain,
    mu: &ViscosityModel,
    data: &ProblemData,
    integ: &Integrator,
    targets: &[Target],
) -> (Vec<f64>, Vec<f64>) {
    let v = &domain.volume;
    let q0f = apply(targets, v.len(), 1, 3, &data.f.values, |tg, c, buf| blocks::newton_pressure(integ, v, c, tg, buf));
    let pdphi = boundary_data_apply(domain, mu, &data.phi0, targets, 1, |tg, t, buf, w| {
        blocks::pressure_double(integ, &domain.surface, t, tg, buf, w).map(|x| -2.0 * x)
    });
    let f0 = (0..targets.len())
        .map(|i| {
            let tg = &targets[i];
            let local = tg.cell.map_or(0.0, |c| data.g.at(tg.y, c));
            q0f[i] + 4.0 / 3.0 * mu.value(tg.y) * local - pdphi[i]
        })
        .collect();
    let f = newton_layer_sum(domain, mu, data, integ, targets);
    (f0, f)
}

/// Applies a panel block with weight `w` to boundary data, `r` rows per
/// target. Without a closed form the block is weighted by `μ` and
/// contracted with the panel values; with one, component `j` uses the
/// weight `μφⱼ`.
fn boundary_data_apply<const N: usize>(
    domain: &Domain,
    mu: &ViscosityModel,
    phi: &BoundaryVectorDensity,
    targets: &[Target],
    r: usize,
    block: impl Fn(&Target, usize, &mut Vec<QPoint>, &(dyn Fn(Vec3) -> f64 + Sync)) -> [f64; N] + Sync,
) -> Vec<f64> {
    let s = &domain.surface;
    let Some(e) = &phi.expr else {
        let w = |x: Vec3| mu.value(x);
        return apply(targets, s.len(), r, 3, &phi.values, |tg, t, buf| block(tg, t, buf, &w));
    };
    let weights: [Box<dyn Fn(Vec3) -> f64 + Sync>; 3] =
        [0, 1, 2].map(|j| Box::new(move |x: Vec3| mu.value(x) * e[j].evaluate(x)) as Box<dyn Fn(Vec3) -> f64 + Sync>);
    let mut out = vec![0.0; targets.len() * r];
    out.par_chunks_mut(r).zip(targets.par_iter()).for_each_init(Vec::new, |buf, (vals, tg)| {
        for t in 0..s.len() {
            for (j, w) in weights.iter().enumerate() {
                let b = block(tg, t, buf, w.as_ref());
                for (a, v) in vals.iter_mut().enumerate() {
                    *v += b[a * 3 + j];
                }
            }
        }
    });
    out
}

/// `∑_c 𝑸̊(μg)` restricted to cells, with the closed form of `g` inside the
/// integrand when one is attached.
fn newton_vector_data(
    domain: &Domain,
    mu: &ViscosityModel,
    g: &ScalarField,
    integ: &Integrator,
    targets: &[Target],
) -> Vec<f64> {
    let v = &domain.volume;
    match &g.expr {
        None => {
            let w = |x: Vec3| mu.value(x);
            apply(targets, v.len(), 3, 1, &g.values, |tg, c, buf| blocks::newton_vector(integ, v, c, tg, buf, &w))
        }
        Some(e) => {
            let w = |x: Vec3| mu.value(x) * e.evaluate(x);
            let ones = vec![1.0; v.len()];
            apply(targets, v.len(), 3, 1, &ones, |tg, c, buf| blocks::newton_vector(integ, v, c, tg, buf, &w))
        }
    }
}

/// `𝒰f + 𝑸g - Wφ₀` at the targets; on boundary targets the double layer
/// takes its direct value 𝒲.
fn newton_layer_sum(
    domain: &Domain,
    mu: &ViscosityModel,
    data: &ProblemData,
    integ: &Integrator,
    targets: &[Target],
) -> Vec<f64> {
    let v = &domain.volume;
    let uf = apply(targets, v.len(), 3, 3, &data.f.values, |tg, c, buf| blocks::newton(integ, v, c, tg, buf));
    let qg = newton_vector_data(domain, mu, &data.g, integ, targets);
    let wphi = boundary_data_apply(domain, mu, &data.phi0, targets, 3, |tg, t, buf, w| {
        blocks::double_layer(integ, &domain.surface, t, tg, buf, w).map(|x| -x)
    });
    (0..uf.len())
        .map(|i| {
            let inv = 1.0 / mu.value(targets[i / 3].y);
            inv * (uf[i] + qg[i] - wphi[i])
        })
        .collect()
}

/// `γ⁺F - φ₀ = γ⁺𝒰f + γ⁺𝑸g - 𝒲φ₀ - φ₀/2`.
fn trace_rhs(domain: &Domain, mu: &ViscosityModel, data: &ProblemData, integ: &Integrator) -> Vec<f64> {
    let bt = boundary_targets(domain);
    let sum = newton_layer_sum(domain, mu, data, integ, &bt);
    sum.iter().zip(&data.phi0.values).map(|(a, p)| a - 0.5 * p).collect()
}

/// `T⁺(F₀, F)` by offset evaluation and extrapolation.
fn traction_rhs(domain: &Domain, mu: &ViscosityModel, data: &ProblemData, integ: &Integrator) -> Result<Vec<f64>> {
    let offsets = Offsets::traction(domain)?;
    let (nv, nb) = (domain.volume.len(), domain.surface.len());
    let jf = traction::jets_apply(&offsets, nv, &data.f.values, |tg, c, buf| traction::newton_jets(integ, domain, tg, c, buf));
    let jg = match &data.g.expr {
        None => traction::jets_apply(&offsets, nv, &data.g.values, |tg, c, buf| {
            traction::newton_vector_jet(integ, domain, mu, tg, c, buf)
        }),
        Some(e) => {
            let w = |x: Vec3| mu.value(x) * e.evaluate(x);
            traction::jets_apply(&offsets, nv, &vec![1.0; nv], |tg, c, buf| {
                traction::newton_vector_jet_weighted(integ, domain, &w, tg, c, buf)
            })
        }
    };
    let jp = match &data.phi0.expr {
        None => traction::jets_apply(&offsets, nb, &data.phi0.values, |tg, t, buf| {
            traction::double_layer_jets(integ, domain, mu, tg, t, buf)
        }),
        Some(e) => {
            let weights = [0, 1, 2].map(|j| move |x: Vec3| mu.value(x) * e[j].evaluate(x));
            traction::jets_apply(&offsets, nb, &vec![1.0; nb], |tg, t, buf| {
                let mut acc = Jet::default();
                for (j, w) in weights.iter().enumerate() {
                    acc.axpy(1.0, &traction::double_layer_jets_weighted(integ, domain, w, tg, t, buf)[j]);
                }
                [acc]
            })
        }
    };
    let jets: Vec<[Jet; 2]> = (0..nb)
        .map(|b| {
            [0, 1].map(|i| {
                let tg = &offsets.targets[b][i];
                let mut j = jf[b][i];
                j.axpy(1.0, &jg[b][i]);
                j.axpy(-1.0, &jp[b][i]);
                j.p += 4.0 / 3.0 * mu.value(tg.y) * data.g.at(tg.y, tg.cell.expect("located"));
                j
            })
        })
        .collect();
    Ok(traction::traction_of_jets(&offsets, mu, &jets))
}

fn put(m: &mut Mat<f64>, r0: usize, c0: usize, op: &OperatorMatrix, scale: f64) {
    let nc = op.ncols();
    for i in 0..op.nrows() {
        let row = &op.data[i * nc..(i + 1) * nc];
        for (j, &a) in row.iter().enumerate() {
            m[(r0 + i, c0 + j)] += scale * a;
        }
    }
}

fn add_identity(m: &mut Mat<f64>, range: Range<usize>, scale: f64) {
    for i in range {
        m[(i, i)] += scale;
    }
}

/// Builds the global matrix of D1 or D2 from assembled operators.
pub fn build_system(
    domain: &Domain,
    ops: &Operators,
    rhs: &Rhs,
    kind: SystemKind,
    mode: ConstraintMode,
) -> Result<DenseBlockSystem> {
    let start = Instant::now();
    let layout = Layout::new(domain, mode);
    let n = layout.dim();
    let mut m = Mat::<f64>::zeros(n, n);
    let (p, v, psi) = (layout.p(), layout.v(), layout.psi());
    let mut labels = Vec::new();
    let mut label = |name: &str, rows: &Range<usize>, cols: &Range<usize>| {
        labels.push(BlockLabel { name: name.into(), rows: rows.clone(), cols: cols.clone() });
    };

    add_identity(&mut m, p.clone(), 1.0);
    label("I", &p, &p);
    put(&mut m, p.start, v.start, &ops.rdot, 1.0);
    label("ℛ•", &p, &v);
    put(&mut m, p.start, psi.start, &ops.ps, 1.0);
    label("Πˢ", &p, &psi);

    add_identity(&mut m, v.clone(), 1.0);
    put(&mut m, v.start, v.start, &ops.rem, 1.0);
    label("I + ℛ", &v, &v);
    put(&mut m, v.start, psi.start, &ops.vl, -1.0);
    label("-V", &v, &psi);

    match kind {
        SystemKind::D1 => {
            let (remb, vcal) = ops.trace.as_ref().ok_or_else(|| Error::InvalidInput("D1 operators not assembled".into()))?;
            put(&mut m, psi.start, v.start, remb, 1.0);
            label("γ⁺ℛ", &psi, &v);
            put(&mut m, psi.start, psi.start, vcal, -1.0);
            label("-𝒱", &psi, &psi);
        }
        SystemKind::D2 => {
            let (trem, wadj) =
                ops.traction.as_ref().ok_or_else(|| Error::InvalidInput("D2 operators not assembled".into()))?;
            put(&mut m, psi.start, v.start, trem, 1.0);
            label("T⁺(ℛ•, ℛ)", &psi, &v);
            add_identity(&mut m, psi.clone(), 0.5);
            put(&mut m, psi.start, psi.start, wadj, -1.0);
            label("½I - 𝒲′", &psi, &psi);
        }
    }

    let mut b = Vec::with_capacity(n);
    b.extend_from_slice(&rhs.f0);
    b.extend_from_slice(&rhs.f);
    b.extend_from_slice(&rhs.boundary);
    if mode == ConstraintMode::Lagrange {
        let e = layout.extra();
        let (lp, lpsi) = (e.start, e.start + 1);
        let (vol, s) = (&domain.volume, &domain.surface);
        let mean_area = s.total_area() / s.len() as f64;
        for (c, i) in p.clone().enumerate() {
            m[(i, lp)] = 1.0;
            m[(lp, i)] = vol.volumes[c] / vol.total_volume;
        }
        for t in 0..s.len() {
            for k in 0..3 {
                let a = s.areas[t] / mean_area * s.normals[t][k];
                m[(psi.start + 3 * t + k, lpsi)] = a;
                m[(lpsi, psi.start + 3 * t + k)] = a / s.len() as f64;
            }
        }
        label("pressure shift", &p, &(lp..lp + 1));
        label("⟨ψ, n⟩ multiplier", &psi, &(lpsi..lpsi + 1));
        label("∫p = 0", &(lp..lp + 1), &p);
        label("⟨ψ, n⟩ = 0", &(lpsi..lpsi + 1), &psi);
        b.extend([0.0, 0.0]);
    }
    Ok(DenseBlockSystem {
        kind,
        mode,
        layout,
        matrix: m,
        rhs: b,
        blocks: labels,
        assembly_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Assembles D1 for the given data.
pub fn assemble_d1(
    domain: &Domain,
    mu: &ViscosityModel,
    data: &ProblemData,
    integ: &Integrator,
    mode: ConstraintMode,
) -> Result<DenseBlockSystem> {
    assemble(domain, mu, data, integ, SystemKind::D1, mode)
}

/// Assembles D2 for the given data.
pub fn assemble_d2(
    domain: &Domain,
    mu: &ViscosityModel,
    data: &ProblemData,
    integ: &Integrator,
    mode: ConstraintMode,
) -> Result<DenseBlockSystem> {
    assemble(domain, mu, data, integ, SystemKind::D2, mode)
}

fn assemble(
    domain: &Domain,
    mu: &ViscosityModel,
    data: &ProblemData,
    integ: &Integrator,
    kind: SystemKind,
    mode: ConstraintMode,
) -> Result<DenseBlockSystem> {
    let start = Instant::now();
    let ops = assemble_operators(domain, mu, integ, &[kind])?;
    let rhs = assemble_rhs(domain, mu, data, kind, integ)?;
    let mut sys = build_system(domain, &ops, &rhs, kind, mode)?;
    sys.assembly_seconds = start.elapsed().as_secs_f64();
    Ok(sys)
}

/// Norms of the block residuals `A𝒳 - ℱ`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct BlockResiduals {
    pub pressure: f64,
    pub velocity: f64,
    pub boundary: f64,
    pub constraints: f64,
    /// ‖A𝒳 - ℱ‖ / max(‖ℱ‖, ‖A‖‖𝒳‖).
    pub relative: f64,
}

/// Re-applies the stored matrix to a candidate solution.
pub fn residual(system: &DenseBlockSystem, x: &[f64]) -> Result<BlockResiduals> {
    let n = system.layout.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let xm = Mat::<f64>::from_fn(n, 1, |i, _| x[i]);
    let ax = &system.matrix * &xm;
    let r: Vec<f64> = (0..n).map(|i| ax[(i, 0)] - system.rhs[i]).collect();
    let norm = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = BlockResiduals::default();
    for (name, range) in system.layout.row_blocks() {
        let v = norm(&r[range]);
        match name {
            "pressure" => out.pressure = v,
            "velocity" => out.velocity = v,
            "boundary" => out.boundary = v,
            _ => out.constraints = v,
        }
    }
    let scale = norm(&system.rhs).max(system.matrix.norm_max() * norm(x)).max(f64::MIN_POSITIVE);
    out.relative = norm(&r) / scale;
    Ok(out)
}

/// Solution of a block system.
#[derive(Clone, Debug)]
pub struct Solution {
    pub p: Vec<f64>,
    pub v: Vec<f64>,
    pub psi: Vec<f64>,
    /// `[λₚ, λ_ψ]` in bordered mode; `λₚ` is the mean pressure.
    pub multipliers: Vec<f64>,
    pub x: Vec<f64>,
    pub report: SolveReport,
}

impl Solution {
    /// Pressure including the constant shift.
    pub fn full_pressure(&self) -> Vec<f64> {
        let shift = self.multipliers.first().copied().unwrap_or(0.0);
        self.p.iter().map(|p| p + shift).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub system: SystemKind,
    pub constraint_mode: ConstraintMode,
    pub unknowns: usize,
    pub residuals: BlockResiduals,
    /// ⟨ψ, n⟩_S.
    pub psi_normal_moment: f64,
    /// ∫_Ω p dx of the stored pressure.
    pub pressure_integral: f64,
    pub smallest_singular_values: Option<Vec<f64>>,
    pub rank_deficient: bool,
    pub assembly_seconds: f64,
    pub solve_seconds: f64,
    pub warnings: Vec<String>,
}

/// Ratio of the smallest to the largest pivot of `U`.
fn pivot_ratio(lu: &PartialPivLu<f64>) -> f64 {
    let u = lu.U();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..u.nrows() {
        let d = u[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

/// Factorizes and solves the system with partial pivoting.
pub fn solve(domain: &Domain, system: &DenseBlockSystem) -> Result<Solution> {
    let start = Instant::now();
    let layout = system.layout;
    let n = layout.dim();
    let lu = PartialPivLu::new(system.matrix.as_ref());
    let ratio = pivot_ratio(&lu);
    let mut warnings = Vec::new();
    let rank_deficient = system.mode == ConstraintMode::None;
    if !rank_deficient && (!ratio.is_finite() || ratio < 1e-15) {
        let sv = smallest_singular_values(&system.matrix, 2).map(|(s, _)| s).unwrap_or_default();
        return Err(Error::Factorization(format!("pivot ratio {ratio:e}; smallest singular values {sv:?}")));
    }
    let b = Mat::<f64>::from_fn(n, 1, |i, _| system.rhs[i]);
    let xm = lu.solve(&b);
    let mut x: Vec<f64> = (0..n).map(|i| xm[(i, 0)]).collect();
    drop(lu);
    let mut singular = None;
    if rank_deficient {
        // The factorization leaves an arbitrary, possibly huge, multiple of
        // the null vector in the solution; the representative returned has
        // none.
        let (values, vectors) = smallest_singular_values(&system.matrix, 2)?;
        let z = &vectors[0];
        let c: f64 = x.iter().zip(z).map(|(a, b)| a * b).sum();
        x.iter_mut().zip(z).for_each(|(a, b)| *a -= c * b);
        singular = Some(values);
        warnings.push("unconstrained system is rank deficient; the solution is fixed only up to (1, 0, -n)".into());
    }
    let residuals = residual(system, &x)?;
    let p = x[layout.p()].to_vec();
    let v = x[layout.v()].to_vec();
    let psi = x[layout.psi()].to_vec();
    let multipliers = x[layout.extra()].to_vec();
    let psi_density = BoundaryVectorDensity { values: psi.clone(), expr: None };
    let pressure_integral = p.iter().zip(&domain.volume.volumes).map(|(a, w)| a * w).sum();
    let report = SolveReport {
        system: system.kind,
        constraint_mode: system.mode,
        unknowns: n,
        residuals,
        psi_normal_moment: psi_density.normal_moment(domain),
        pressure_integral,
        smallest_singular_values: singular,
        rank_deficient,
        assembly_seconds: system.assembly_seconds,
        solve_seconds: start.elapsed().as_secs_f64(),
        warnings,
    };
    Ok(Solution { p, v, psi, multipliers, x, report })
}

/// Solves rows 2 and 3 for `(v, ψ)` with `⟨ψ, n⟩ = 0`, then recovers the
/// pressure from row 1.
pub fn solve_split(domain: &Domain, ops: &Operators, rhs: &Rhs, kind: SystemKind) -> Result<Solution> {
    let start = Instant::now();
    let full = Layout::new(domain, ConstraintMode::Lagrange);
    let (nv3, nb3) = (3 * full.volume_nodes, 3 * full.boundary_nodes);
    let n = nv3 + nb3 + 1;
    let mut m = Mat::<f64>::zeros(n, n);
    add_identity(&mut m, 0..nv3, 1.0);
    put(&mut m, 0, 0, &ops.rem, 1.0);
    put(&mut m, 0, nv3, &ops.vl, -1.0);
    match kind {
        SystemKind::D1 => {
            let (remb, vcal) = ops.trace.as_ref().ok_or_else(|| Error::InvalidInput("D1 operators not assembled".into()))?;
            put(&mut m, nv3, 0, remb, 1.0);
            put(&mut m, nv3, nv3, vcal, -1.0);
        }
        SystemKind::D2 => {
            let (trem, wadj) =
                ops.traction.as_ref().ok_or_else(|| Error::InvalidInput("D2 operators not assembled".into()))?;
            put(&mut m, nv3, 0, trem, 1.0);
            add_identity(&mut m, nv3..nv3 + nb3, 0.5);
            put(&mut m, nv3, nv3, wadj, -1.0);
        }
    }
    let s = &domain.surface;
    let mean_area = s.total_area() / s.len() as f64;
    for t in 0..s.len() {
        for k in 0..3 {
            let a = s.areas[t] / mean_area * s.normals[t][k];
            m[(nv3 + 3 * t + k, n - 1)] = a;
            m[(n - 1, nv3 + 3 * t + k)] = a / s.len() as f64;
        }
    }
    let b = Mat::<f64>::from_fn(n, 1, |i, _| {
        if i < nv3 {
            rhs.f[i]
        } else if i < nv3 + nb3 {
            rhs.boundary[i - nv3]
        } else {
            0.0
        }
    });
    let lu = PartialPivLu::new(m.as_ref());
    let xm = lu.solve(&b);
    drop(lu);
    let v: Vec<f64> = (0..nv3).map(|i| xm[(i, 0)]).collect();
    let psi: Vec<f64> = (nv3..nv3 + nb3).map(|i| xm[(i, 0)]).collect();
    let lpsi = xm[(n - 1, 0)];
    let rdv = ops.rdot.apply(&v)?;
    let psv = ops.ps.apply(&psi)?;
    let p_full: Vec<f64> = (0..full.volume_nodes).map(|i| rhs.f0[i] - rdv[i] - psv[i]).collect();
    let vol = &domain.volume;
    let mean = p_full.iter().zip(&vol.volumes).map(|(a, w)| a * w).sum::<f64>() / vol.total_volume;
    let p: Vec<f64> = p_full.iter().map(|a| a - mean).collect();
    let mut x = p.clone();
    x.extend_from_slice(&v);
    x.extend_from_slice(&psi);
    x.extend([mean, lpsi]);
    let psi_density = BoundaryVectorDensity { values: psi.clone(), expr: None };
    let report = SolveReport {
        system: kind,
        constraint_mode: ConstraintMode::Lagrange,
        unknowns: n,
        residuals: BlockResiduals::default(),
        psi_normal_moment: psi_density.normal_moment(domain),
        pressure_integral: p.iter().zip(&vol.volumes).map(|(a, w)| a * w).sum(),
        smallest_singular_values: None,
        rank_deficient: false,
        assembly_seconds: 0.0,
        solve_seconds: start.elapsed().as_secs_f64(),
        warnings: Vec::new(),
    };
    Ok(Solution { p, v, psi, multipliers: vec![mean, lpsi], x, report })
}

/// The `k` smallest singular values of a square matrix and their right
/// singular vectors, by block inverse iteration on `AᵀA` followed by a
/// Rayleigh-Ritz step.
pub fn smallest_singular_values(a: &Mat<f64>, k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    let block = (k + 2).min(n);
    let lu = PartialPivLu::new(a.as_ref());
    let mut x = Mat::<f64>::from_fn(n, block, |i, j| {
        // Deterministic start vectors.
        let h = (i as u64).wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407 * (j as u64 + 1));
        ((h >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    });
    orthonormalize(&mut x);
    for _ in 0..12 {
        let y = lu.solve_transpose(&x);
        x = lu.solve(&y);
        if x.norm_max().is_nan() {
            return Err(Error::Factorization("inverse iteration diverged".into()));
        }
        orthonormalize(&mut x);
    }
    let ax = a * &x;
    let svd = ax.thin_svd().map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let s = svd.S().column_vector();
    let vk = svd.V();
    let mut values = Vec::new();
    let mut vectors = Vec::new();
    for idx in (0..block).rev().take(k) {
        values.push(s[idx]);
        let mut vec = vec![0.0; n];
        for (c, vcol) in (0..block).map(|c| (c, vk[(c, idx)])) {
            for (i, out) in vec.iter_mut().enumerate() {
                *out += x[(i, c)] * vcol;
            }
        }
        vectors.push(vec);
    }
    Ok((values, vectors))
}

fn orthonormalize(x: &mut Mat<f64>) {
    let (n, k) = (x.nrows(), x.ncols());
    for j in 0..k {
        for _ in 0..2 {
            for i in 0..j {
                let d: f64 = (0..n).map(|r| x[(r, i)] * x[(r, j)]).sum();
                for r in 0..n {
                    let v = x[(r, i)];
                    x[(r, j)] -= d * v;
                }
            }
        }
        let nrm = (0..n).map(|r| x[(r, j)].powi(2)).sum::<f64>().sqrt();
        for r in 0..n {
            x[(r, j)] /= nrm;
        }
    }
}

/// Normalized kernel direction `(1, 0, -n)` in the core unknowns.
pub fn kernel_direction(domain: &Domain) -> Vec<f64> {
    let layout = Layout::new(domain, ConstraintMode::None);
    let mut z = vec![0.0; layout.core_dim()];
    z[layout.p()].iter_mut().for_each(|v| *v = 1.0);
    for (t, n) in domain.surface.normals.iter().enumerate() {
        for k in 0..3 {
            z[layout.psi().start + 3 * t + k] = -n[k];
        }
    }
    let nrm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    z.iter_mut().for_each(|v| *v /= nrm);
    z
}

//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use stokes_bdie::bdie::{self, ConstraintMode, Solution, SolveReport, SystemKind};
use stokes_bdie::expr::ViscosityModel;
use stokes_bdie::kernels::{fundamental_pair, parametrix_pair, remainder_kernel, KernelPoint, StokesKernelValues};
use stokes_bdie::mesh::Domain;
use stokes_bdie::verify::{self, default_integrator, refinement_ladder, solution_errors, SolutionErrors};

use crate::config::{DomainSpec, RunConfig, SystemChoice};
use crate::error::{CliError, Result};
use crate::io::{self, CellFields, ConvRow};

/// Flags that override scalar config fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub system: Option<SystemChoice>,
    pub constraint: Option<ConstraintMode>,
    pub subdiv: Option<u32>,
    pub layers: Option<u32>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        if let Some(s) = self.system {
            cfg.system = s;
        }
        if let Some(c) = self.constraint {
            cfg.constraint = c;
        }
        match &mut cfg.domain {
            DomainSpec::Ball { subdiv, layers, .. } => {
                if let Some(s) = self.subdiv {
                    *subdiv = s;
                }
                if let Some(l) = self.layers {
                    *layers = l;
                }
            }
            DomainSpec::File(_) if self.subdiv.is_some() || self.layers.is_some() => {
                return Err(CliError::Config("--subdiv and --layers only apply to a ball domain".into()));
            }
            DomainSpec::File(_) => {}
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct MeshSummary {
    tetrahedra: usize,
    triangles: usize,
    h: f64,
}

#[derive(Serialize)]
struct SolveArtifact<'a> {
    config: &'a RunConfig,
    mesh: MeshSummary,
    report: &'a SolveReport,
    /// `[λₚ, λ_ψ]` when the constraints are imposed.
    multipliers: &'a [f64],
    errors: Option<SolutionErrors>,
}

/// Solves the configured problem and writes `p_v.csv`, `psi.csv`,
/// `solution.vtk` and `report.json` into the output directory.
pub fn solve(config: &Path, overrides: &Overrides) -> Result<SolveReport> {
    let mut cfg = RunConfig::read(config)?;
    overrides.apply(&mut cfg)?;
    if cfg.system == SystemChoice::D2Split && cfg.rank_deficient() {
        return Err(CliError::Config("d2-split always imposes the constraints; use constraint lagrange".into()));
    }
    let problem = cfg.problem()?;
    if cfg.rank_deficient() {
        eprintln!("warning: constraint mode none leaves the system rank deficient");
    }
    let (d, mu, data) = (&problem.domain, &problem.mu, &problem.data);
    let integ = default_integrator();
    let sol = match cfg.system {
        SystemChoice::D1 => bdie::solve(d, &bdie::assemble_d1(d, mu, data, &integ, cfg.constraint)?)?,
        SystemChoice::D2 => bdie::solve(d, &bdie::assemble_d2(d, mu, data, &integ, cfg.constraint)?)?,
        SystemChoice::D2Split => {
            let ops = bdie::assemble_operators(d, mu, &integ, &[SystemKind::D2])?;
            let rhs = bdie::assemble_rhs(d, mu, data, SystemKind::D2, &integ)?;
            bdie::solve_split(d, &ops, &rhs, SystemKind::D2)?
        }
    };
    let errors = problem.case.as_ref().map(|c| solution_errors(c, d, &sol));
    write_solution(&cfg, d, &sol, errors)?;
    for w in &sol.report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{:?} {:?}: {} unknowns, relative residual {:.3e}, assembly {:.1}s, solve {:.1}s",
        sol.report.system,
        sol.report.constraint_mode,
        sol.report.unknowns,
        sol.report.residuals.relative,
        sol.report.assembly_seconds,
        sol.report.solve_seconds
    );
    if let Some(e) = errors {
        println!("relative errors: v {:.4e}, p {:.4e}, psi {:.4e}", e.v, e.p, e.psi);
    }
    println!("wrote {}", cfg.output.display());
    Ok(sol.report)
}

fn write_solution(cfg: &RunConfig, d: &Domain, sol: &Solution, errors: Option<SolutionErrors>) -> Result<()> {
    let out = &cfg.output;
    fs::create_dir_all(out)?;
    let p = sol.full_pressure();
    io::write_volume_csv(&out.join("p_v.csv"), d, &p, &sol.v)?;
    io::write_boundary_csv(&out.join("psi.csv"), d, &sol.psi)?;
    io::write_vtk(&out.join("solution.vtk"), d, Some(&CellFields { p: &p, v: &sol.v, psi: &sol.psi }))?;
    let artifact = SolveArtifact {
        config: cfg,
        mesh: MeshSummary { tetrahedra: d.volume.len(), triangles: d.surface.len(), h: d.surface.h() },
        report: &sol.report,
        multipliers: &sol.multipliers,
        errors,
    };
    io::write_json(&out.join("report.json"), &artifact)
}

/// Surface level used when `--subdiv` is not given.
pub fn default_subdiv(suite: &str) -> u32 {
    match suite {
        "kernels" | "green" | "solve-d1" | "solve-d2" | "convergence" => 2,
        _ => 3,
    }
}

/// Runs a suite, prints its table and optionally writes it as CSV. Fails
/// when any row fails.
pub fn verify(suite: &str, subdiv: Option<u32>, csv: Option<&Path>) -> Result<()> {
    let report = verify::run_suite(suite, subdiv.unwrap_or_else(|| default_subdiv(suite)))?;
    print!("{report}");
    if let Some(path) = csv {
        io::write_suite_csv(path, &report)?;
    }
    let failed = report.rows.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed { failed, total: report.rows.len() });
    }
    Ok(())
}

/// Errors of one system over the first `levels` ladder levels, written to
/// `conv.csv`.
pub fn convergence(case: &str, levels: usize, kind: SystemKind, output: &Path) -> Result<Vec<ConvRow>> {
    if levels == 0 {
        return Err(CliError::Config("--levels must be at least 1".into()));
    }
    let ladder = refinement_ladder(levels);
    let conv = verify::convergence_study(case, &ladder, &[kind])?;
    let study = &conv.studies[0];
    let rows: Vec<ConvRow> = study
        .errors
        .iter()
        .enumerate()
        .map(|(i, e)| ConvRow {
            level: format!("s{}L{}", ladder[i].subdiv, ladder[i].layers),
            h: e.h,
            err_v: e.v,
            err_p: e.p,
            err_psi: e.psi,
            slope: (i > 0).then(|| {
                let prev = &study.errors[i - 1];
                verify::fit_slope(&[prev.h, e.h], &[prev.v, e.v])
            }),
        })
        .collect();
    fs::create_dir_all(output)?;
    io::write_rows(&output.join("conv.csv"), &rows)?;
    print!("{}", conv.report);
    Ok(rows)
}

/// Every kernel tensor at a point pair, as printed text.
pub fn kernel(x: [f64; 3], y: [f64; 3], n: Option<[f64; 3]>, mu: Option<&str>) -> Result<String> {
    let kp = match n {
        Some(n) => KernelPoint::with_normal(x, y, n),
        None => KernelPoint::new(x, y),
    };
    let mut out = String::from("fundamental solution (unit viscosity)\n");
    format_kernels(&mut out, "̊", &fundamental_pair(&kp)?);
    if let Some(src) = mu {
        let mu = ViscosityModel::parse(src, f64::MIN_POSITIVE).map_err(|e| CliError::from(e).context("--mu"))?;
        out.push_str(&format!("parametrix, mu(x) = {}, mu(y) = {}\n", mu.value(x), mu.value(y)));
        format_kernels(&mut out, "", &parametrix_pair(&kp, &mu)?);
        let r = remainder_kernel(&kp, &mu)?;
        out.push_str("R[k][j]\n");
        for row in r {
            out.push_str(&format!("  {:>12.7} {:>12.7} {:>12.7}\n", row[0], row[1], row[2]));
        }
    }
    Ok(out)
}

fn format_kernels(out: &mut String, ring: &str, v: &StokesKernelValues) {
    const SUP: [&str; 3] = ["¹", "²", "³"];
    for k in 0..3 {
        out.push_str(&format!("q{ring}{} = {:.7}\n", SUP[k], v.pressure[k]));
    }
    out.push_str(&format!("u{ring}[k][j]\n"));
    for row in v.velocity {
        out.push_str(&format!("  {:>12.7} {:>12.7} {:>12.7}\n", row[0], row[1], row[2]));
    }
    for k in 0..3 {
        out.push_str(&format!("σ{ring}{}[i][j]\n", SUP[k]));
        for row in v.stress[k] {
            out.push_str(&format!("  {:>12.7} {:>12.7} {:>12.7}\n", row[0], row[1], row[2]));
        }
    }
    if let Some(t) = v.traction {
        out.push_str(&format!("T{ring}[k][i]\n"));
        for row in t {
            out.push_str(&format!("  {:>12.7} {:>12.7} {:>12.7}\n", row[0], row[1], row[2]));
        }
    }
}

/// Writes a ball mesh, as VTK when the extension is `.vtk` and in the
/// ASCII mesh format otherwise.
pub fn mesh_export(subdiv: u32, layers: u32, radius: f64, output: &Path) -> Result<()> {
    let d = Domain::ball(subdiv, layers, radius)?;
    if output.extension().is_some_and(|e| e == "vtk") {
        io::write_vtk(output, &d, None)?;
    } else {
        d.write(output)?;
    }
    println!("{} tetrahedra, {} triangles -> {}", d.volume.len(), d.surface.len(), output.display());
    Ok(())
}

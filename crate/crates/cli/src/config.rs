//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use stokes_bdie::bdie::{ConstraintMode, ProblemData};
use stokes_bdie::expr::{self, Expression, ViscosityModel};
use stokes_bdie::fields::{BoundaryVectorDensity, ScalarField, VectorField};
use stokes_bdie::mesh::Domain;
use stokes_bdie::verify::{build_case, ManufacturedCase};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSpec {
    Ball {
        subdiv: u32,
        layers: u32,
        #[serde(default = "unit_radius")]
        radius: f64,
    },
    /// ASCII mesh with VERTICES, TRIANGLES and TETRAHEDRA sections.
    File(PathBuf),
}

fn unit_radius() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Name of a manufactured case.
    Case(String),
    Expressions { f: [String; 3], g: String, phi0: [String; 3] },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum SystemChoice {
    #[default]
    #[serde(rename = "d1")]
    #[value(name = "d1")]
    D1,
    #[serde(rename = "d2")]
    #[value(name = "d2")]
    D2,
    /// D2 solved for `(v, ψ)` first, pressure recovered afterwards.
    #[serde(rename = "d2-split")]
    #[value(name = "d2-split")]
    D2Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSpec,
    /// Viscosity expression; fixed by the case when `data` names one.
    #[serde(default)]
    pub viscosity: Option<String>,
    #[serde(default = "default_lower_bound")]
    pub viscosity_lower_bound: f64,
    pub data: DataSource,
    #[serde(default)]
    pub system: SystemChoice,
    #[serde(default)]
    pub constraint: ConstraintMode,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_lower_bound() -> f64 {
    1e-6
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Everything a solve needs, built from a validated config.
pub struct Problem {
    pub domain: Domain,
    pub mu: ViscosityModel,
    pub data: ProblemData,
    pub case: Option<ManufacturedCase>,
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks everything that does not need the mesh.
    pub fn validate(&self) -> Result<()> {
        if !(self.viscosity_lower_bound > 0.0) {
            return Err(CliError::Config("viscosity_lower_bound must be positive".into()));
        }
        match &self.data {
            DataSource::Case(name) => {
                build_case(name)?;
                if self.viscosity.is_some() {
                    return Err(CliError::Config("viscosity is fixed by the manufactured case; remove it".into()));
                }
            }
            DataSource::Expressions { f, g, phi0 } => {
                parse_all(f, "data.expressions.f")?;
                parse_one(g, "data.expressions.g")?;
                parse_all(phi0, "data.expressions.phi0")?;
                let Some(mu) = &self.viscosity else {
                    return Err(CliError::Config("viscosity is required with expression data".into()));
                };
                parse_one(mu, "viscosity")?;
            }
        }
        if let DomainSpec::Ball { layers, radius, .. } = self.domain {
            if layers == 0 || !(radius > 0.0) {
                return Err(CliError::Config("ball needs layers >= 1 and a positive radius".into()));
            }
        }
        Ok(())
    }

    /// True when the system is solved without the normalization constraints.
    pub fn rank_deficient(&self) -> bool {
        self.constraint == ConstraintMode::None
    }

    pub fn domain(&self) -> Result<Domain> {
        Ok(match &self.domain {
            DomainSpec::Ball { subdiv, layers, radius } => Domain::ball(*subdiv, *layers, *radius)?,
            DomainSpec::File(path) => Domain::read(path).map_err(|e| match e {
                stokes_bdie::Error::Io(io) => CliError::Mesh(format!("{}: {io}", path.display())),
                other => other.into(),
            })?,
        })
    }

    pub fn problem(&self) -> Result<Problem> {
        self.validate()?;
        let domain = self.domain()?;
        let (mu, data, case) = match &self.data {
            DataSource::Case(name) => {
                let case = build_case(name)?;
                let data = case.data(&domain);
                (case.mu.clone(), data, Some(case))
            }
            DataSource::Expressions { f, g, phi0 } => {
                let mu_src = self.viscosity.as_deref().unwrap_or_default();
                let mu = ViscosityModel::new(parse_one(mu_src, "viscosity")?, self.viscosity_lower_bound);
                let data = ProblemData {
                    f: VectorField::from_expr(&domain, parse_all(f, "data.expressions.f")?),
                    g: ScalarField::from_expr(&domain, parse_one(g, "data.expressions.g")?),
                    phi0: BoundaryVectorDensity::from_expr(&domain, &parse_all(phi0, "data.expressions.phi0")?),
                };
                (mu, data, None)
            }
        };
        mu.check_positive(domain.volume.vertices.iter())?;
        Ok(Problem { domain, mu, data, case })
    }
}

fn parse_one(src: &str, field: &str) -> Result<Expression> {
    expr::parse(src).map_err(|e| CliError::from(e).context(field))
}

fn parse_all(src: &[String; 3], field: &str) -> Result<[Expression; 3]> {
    let [a, b, c] = [0, 1, 2].map(|i| parse_one(&src[i], &format!("{field}[{i}]")));
    Ok([a?, b?, c?])
}

#[cfg(test)]
mod tests {
    use super::*;

    const POLY1: &str = r#"{"domain": {"ball": {"subdiv": 1, "layers": 1}}, "data": {"case": "poly1"}}"#;

    #[test]
    fn defaults_fill_optional_fields() {
        let c = RunConfig::parse(POLY1).unwrap();
        assert_eq!(c.system, SystemChoice::D1);
        assert_eq!(c.constraint, ConstraintMode::Lagrange);
        assert_eq!(c.output, PathBuf::from("out"));
        assert_eq!(c.domain, DomainSpec::Ball { subdiv: 1, layers: 1, radius: 1.0 });
        c.validate().unwrap();
    }

    #[test]
    fn two_data_sources_are_rejected() {
        let text = r#"{"domain": {"ball": {"subdiv": 1, "layers": 1}},
            "data": {"case": "poly1", "expressions": {"f": ["0","0","0"], "g": "0", "phi0": ["0","0","0"]}}}"#;
        assert!(matches!(RunConfig::parse(text), Err(CliError::Config(_))));
    }

    #[test]
    fn bad_expression_reports_field_and_offset() {
        let text = r#"{"domain": {"ball": {"subdiv": 1, "layers": 1}}, "viscosity": "1",
            "data": {"expressions": {"f": ["0","x1 +* 2","0"], "g": "0", "phi0": ["0","0","0"]}}}"#;
        let err = RunConfig::parse(text).unwrap().validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let msg = err.to_string();
        assert!(msg.contains("data.expressions.f[1]") && msg.contains("byte"), "{msg}");
    }

    #[test]
    fn case_viscosity_cannot_be_overridden() {
        let text = r#"{"domain": {"ball": {"subdiv": 1, "layers": 1}}, "viscosity": "3", "data": {"case": "poly1"}}"#;
        assert!(RunConfig::parse(text).unwrap().validate().is_err());
    }

    #[test]
    fn expression_data_builds_a_problem() {
        let text = r#"{"domain": {"ball": {"subdiv": 1, "layers": 1}}, "viscosity": "2 + x1",
            "data": {"expressions": {"f": ["0","0","0"], "g": "0", "phi0": ["1","0","0"]}}, "system": "d2-split"}"#;
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.system, SystemChoice::D2Split);
        let p = c.problem().unwrap();
        assert!(p.case.is_none());
        assert_eq!(p.data.phi0.values.len(), 3 * p.domain.surface.len());
    }

    #[test]
    fn nonpositive_viscosity_is_a_config_error() {
        let text = r#"{"domain": {"ball": {"subdiv": 1, "layers": 1}}, "viscosity": "x1",
            "data": {"expressions": {"f": ["0","0","0"], "g": "0", "phi0": ["0","0","0"]}}}"#;
        let err = RunConfig::parse(text).unwrap().problem().err().unwrap();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_mesh_file_is_a_mesh_error() {
        let text = r#"{"domain": {"file": "/nonexistent/mesh.txt"}, "data": {"case": "poly1"}}"#;
        let err = RunConfig::parse(text).unwrap().problem().err().unwrap();
        assert_eq!(err.exit_code(), 3);
    }
}

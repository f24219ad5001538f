//! Piecewise-constant fields on volume cells and boundary panels.

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::geom::{self, Vec3};
use crate::mesh::Domain;

/// One value per volume cell, optionally backed by a closed form.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub values: Vec<f64>,
    pub expr: Option<Expression>,
}

impl ScalarField {
    pub fn zeros(domain: &Domain) -> Self {
        Self { values: vec![0.0; domain.volume.len()], expr: None }
    }

    pub fn from_values(domain: &Domain, values: Vec<f64>) -> Result<Self> {
        check_len(domain.volume.len(), values.len())?;
        Ok(Self { values, expr: None })
    }

    /// Samples `e` at the cell centroids.
    pub fn from_expr(domain: &Domain, e: Expression) -> Self {
        let values = domain.volume.centroids.iter().map(|&x| e.evaluate(x)).collect();
        Self { values, expr: Some(e) }
    }

    /// Value at a point of cell `cell`, exact when a closed form exists.
    pub fn at(&self, y: Vec3, cell: usize) -> f64 {
        match &self.expr {
            Some(e) => e.evaluate(y),
            None => self.values[cell],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Three values per volume cell, interleaved.
#[derive(Clone, Debug)]
pub struct VectorField {
    pub values: Vec<f64>,
    pub expr: Option<[Expression; 3]>,
}

impl VectorField {
    pub fn zeros(domain: &Domain) -> Self {
        Self { values: vec![0.0; 3 * domain.volume.len()], expr: None }
    }

    pub fn from_values(domain: &Domain, values: Vec<f64>) -> Result<Self> {
        check_len(3 * domain.volume.len(), values.len())?;
        Ok(Self { values, expr: None })
    }

    pub fn from_expr(domain: &Domain, e: [Expression; 3]) -> Self {
        let values = domain.volume.centroids.iter().flat_map(|&x| e.each_ref().map(|c| c.evaluate(x))).collect();
        Self { values, expr: Some(e) }
    }

    pub fn node(&self, c: usize) -> Vec3 {
        [self.values[3 * c], self.values[3 * c + 1], self.values[3 * c + 2]]
    }
}

/// One 3-vector per boundary panel, optionally backed by a closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryVectorDensity {
    pub values: Vec<f64>,
    pub expr: Option<[Expression; 3]>,
}

impl BoundaryVectorDensity {
    pub fn zeros(domain: &Domain) -> Self {
        Self { values: vec![0.0; 3 * domain.surface.len()], expr: None }
    }

    pub fn from_values(domain: &Domain, values: Vec<f64>) -> Result<Self> {
        check_len(3 * domain.surface.len(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite boundary density".into()));
        }
        Ok(Self { values, expr: None })
    }

    /// Samples `f` at the panel centroids.
    pub fn from_fn(domain: &Domain, f: impl Fn(usize, Vec3) -> Vec3) -> Self {
        let s = &domain.surface;
        Self { values: (0..s.len()).flat_map(|t| f(t, s.centroids[t])).collect(), expr: None }
    }

    pub fn from_expr(domain: &Domain, e: &[Expression; 3]) -> Self {
        let values = Self::from_fn(domain, |_, x| e.each_ref().map(|c| c.evaluate(x))).values;
        Self { values, expr: Some(e.clone()) }
    }

    pub fn normals(domain: &Domain) -> Self {
        Self::from_fn(domain, |t, _| domain.surface.normals[t])
    }

    pub fn node(&self, t: usize) -> Vec3 {
        [self.values[3 * t], self.values[3 * t + 1], self.values[3 * t + 2]]
    }

    /// ⟨ρ, n⟩ over the boundary.
    pub fn normal_moment(&self, domain: &Domain) -> f64 {
        let s = &domain.surface;
        (0..s.len()).map(|t| s.areas[t] * geom::dot(self.node(t), s.normals[t])).sum()
    }

    /// Area-weighted L² norm.
    pub fn norm(&self, domain: &Domain) -> f64 {
        boundary_l2(domain, &self.values)
    }

    /// True when ⟨ρ, n⟩ vanishes relative to the norm.
    pub fn in_hn(&self, domain: &Domain) -> bool {
        self.normal_moment(domain).abs() <= 1e-8 * self.norm(domain).max(f64::MIN_POSITIVE)
    }

    /// Removes the component along span{n}.
    pub fn project_out_normal(&self, domain: &Domain) -> Self {
        Self { values: project_out_normal(domain, &self.values), expr: None }
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Area-weighted L² norm of a boundary vector density.
pub fn boundary_l2(domain: &Domain, v: &[f64]) -> f64 {
    let s = &domain.surface;
    (0..s.len()).map(|t| s.areas[t] * (0..3).map(|k| v[3 * t + k].powi(2)).sum::<f64>()).sum::<f64>().sqrt()
}

/// Volume-weighted L² norm of a cell field with `comps` components.
pub fn volume_l2(domain: &Domain, v: &[f64], comps: usize) -> f64 {
    let vol = &domain.volume;
    (0..vol.len())
        .map(|c| vol.volumes[c] * (0..comps).map(|k| v[comps * c + k].powi(2)).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Subtracts the volume-weighted mean of a scalar cell field.
pub fn mean_zero(domain: &Domain, p: &[f64]) -> Vec<f64> {
    let vol = &domain.volume;
    let mean = p.iter().zip(&vol.volumes).map(|(a, w)| a * w).sum::<f64>() / vol.total_volume;
    p.iter().map(|a| a - mean).collect()
}

/// Removes the L²(S) projection onto span{n}.
pub fn project_out_normal(domain: &Domain, v: &[f64]) -> Vec<f64> {
    let s = &domain.surface;
    let dot: f64 = (0..s.len()).map(|t| s.areas[t] * (0..3).map(|k| v[3 * t + k] * s.normals[t][k]).sum::<f64>()).sum();
    let c = dot / s.total_area();
    (0..s.len()).flat_map(|t| (0..3).map(move |k| v[3 * t + k] - c * s.normals[t][k])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_projection_lands_in_hn() {
        let d = Domain::ball(1, 1, 1.0).unwrap();
        let rho = BoundaryVectorDensity::from_fn(&d, |_, x| [1.0 + x[0], x[1] * x[2], 2.0 * x[2]]);
        assert!(!rho.in_hn(&d));
        let p = rho.project_out_normal(&d);
        assert!(p.in_hn(&d));
        assert!(BoundaryVectorDensity::normals(&d).project_out_normal(&d).norm(&d) < 1e-12);
    }

    #[test]
    fn mean_zero_projection() {
        let d = Domain::ball(1, 2, 1.0).unwrap();
        let p = ScalarField::from_expr(&d, crate::expr::parse("1 + x1 * x2").unwrap());
        let q = mean_zero(&d, &p.values);
        let m: f64 = q.iter().zip(&d.volume.volumes).map(|(a, w)| a * w).sum();
        assert!(m.abs() < 1e-14);
    }

    #[test]
    fn lengths_are_checked() {
        let d = Domain::ball(1, 1, 1.0).unwrap();
        assert!(matches!(ScalarField::from_values(&d, vec![0.0; 3]), Err(Error::DimensionMismatch { .. })));
        assert!(BoundaryVectorDensity::from_values(&d, vec![f64::NAN; 3 * d.surface.len()]).is_err());
    }
}

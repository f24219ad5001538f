//! Least-squares cell gradients from neighbouring centroids.
//!
//! The gradient of a cell field at cell `c` is `Σₙ aₙ (uₙ - u_c)` over the
//! face neighbours of `c`, extended by their neighbours when the face ring
//! does not resolve all three directions. Directions that stay unresolved
//! get a zero derivative.

use std::collections::HashMap;

use faer::Mat;

use crate::geom::{self, Vec3};
use crate::mesh::VolumeMesh;

/// Singular values below this fraction of the largest are dropped.
const RANK_TOL: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct GradientStencil {
    entries: Vec<Vec<(usize, Vec3)>>,
}

impl GradientStencil {
    pub fn new(volume: &VolumeMesh) -> Self {
        let rings = face_neighbours(volume);
        let entries = (0..volume.len())
            .map(|c| {
                let (coeffs, rank) = least_squares(volume, c, &rings[c]);
                if rank == 3 {
                    return coeffs;
                }
                let mut wide: Vec<usize> = rings[c].clone();
                for &n in &rings[c] {
                    wide.extend(rings[n].iter().copied().filter(|&m| m != c));
                }
                wide.sort_unstable();
                wide.dedup();
                least_squares(volume, c, &wide).0
            })
            .collect();
        Self { entries }
    }

    /// `(n, aₙ)` pairs of cell `c`.
    pub fn entries(&self, c: usize) -> &[(usize, Vec3)] {
        &self.entries[c]
    }

    /// Gradients of every component of an interleaved cell field, indexed
    /// `c * comps + j`.
    pub fn gradients(&self, values: &[f64], comps: usize) -> Vec<Vec3> {
        let mut out = vec![[0.0; 3]; values.len()];
        for (c, entries) in self.entries.iter().enumerate() {
            for j in 0..comps {
                let uc = values[c * comps + j];
                let g = &mut out[c * comps + j];
                for &(n, a) in entries {
                    *g = geom::axpy(*g, values[n * comps + j] - uc, a);
                }
            }
        }
        out
    }
}

fn face_neighbours(volume: &VolumeMesh) -> Vec<Vec<usize>> {
    let mut owners: HashMap<[usize; 3], Vec<usize>> = HashMap::new();
    for (c, tet) in volume.tets.iter().enumerate() {
        for skip in 0..4 {
            let mut key = [0; 3];
            let mut i = 0;
            for (k, &v) in tet.iter().enumerate() {
                if k != skip {
                    key[i] = v;
                    i += 1;
                }
            }
            key.sort_unstable();
            owners.entry(key).or_default().push(c);
        }
    }
    let mut rings = vec![Vec::new(); volume.len()];
    for cells in owners.values() {
        if let [a, b] = cells[..] {
            rings[a].push(b);
            rings[b].push(a);
        }
    }
    for r in &mut rings {
        r.sort_unstable();
    }
    rings
}

/// Inverse-distance weighted least-squares coefficients and the number of
/// resolved directions.
fn least_squares(volume: &VolumeMesh, c: usize, cells: &[usize]) -> (Vec<(usize, Vec3)>, usize) {
    if cells.is_empty() {
        return (Vec::new(), 0);
    }
    let xc = volume.centroids[c];
    let rows: Vec<(Vec3, f64)> = cells
        .iter()
        .map(|&n| {
            let d = geom::sub(volume.centroids[n], xc);
            (d, 1.0 / geom::norm(d))
        })
        .collect();
    let k = rows.len();
    let a = Mat::<f64>::from_fn(k.max(3), 3, |i, j| if i < k { rows[i].1 * rows[i].0[j] } else { 0.0 });
    let Ok(svd) = a.thin_svd() else {
        return (Vec::new(), 0);
    };
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let smax = (0..3).map(|i| s[i]).fold(0.0, f64::max);
    let kept: Vec<usize> = (0..3).filter(|&i| s[i] > RANK_TOL * smax && s[i] > 0.0).collect();
    let coeffs = cells
        .iter()
        .enumerate()
        .map(|(row, &n)| {
            let mut g = [0.0; 3];
            for &i in &kept {
                let f = u[(row, i)] / s[i] * rows[row].1;
                for (l, gl) in g.iter_mut().enumerate() {
                    *gl += v[(l, i)] * f;
                }
            }
            (n, g)
        })
        .collect();
    (coeffs, kept.len())
}

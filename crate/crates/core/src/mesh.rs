//! Triangulated boundary and tetrahedral volume meshes.
//!
//! Collocation nodes are triangle and tetrahedron centroids. The ball
//! generator and the importer both place surface vertices in the same index
//! space as the volume vertices, so boundary triangles can be matched to the
//! tetrahedron they bound.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::quadrature::{tet_rule, triangle_rule};

#[derive(Clone, Debug)]
pub struct SurfaceMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    pub normals: Vec<Vec3>,
    pub areas: Vec<f64>,
    pub centroids: Vec<Vec3>,
    /// Longest edge of each triangle.
    pub diameters: Vec<f64>,
}

impl SurfaceMesh {
    /// Builds geometry from counter-clockwise (outward) triangles and checks
    /// that the surface is closed.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = triangles.len();
        let mut normals = Vec::with_capacity(n);
        let mut areas = Vec::with_capacity(n);
        let mut centroids = Vec::with_capacity(n);
        let mut diameters = Vec::with_capacity(n);
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::Mesh(format!("triangle {t} references a missing vertex")));
            }
            let [a, b, c] = tri.map(|i| vertices[i]);
            let cr = geom::cross(geom::sub(b, a), geom::sub(c, a));
            let twice_area = geom::norm(cr);
            if twice_area <= 0.0 {
                return Err(Error::Mesh(format!("triangle {t} is degenerate")));
            }
            normals.push(geom::scale(cr, 1.0 / twice_area));
            areas.push(0.5 * twice_area);
            centroids.push(geom::scale(geom::add(geom::add(a, b), c), 1.0 / 3.0));
            diameters.push(geom::dist(a, b).max(geom::dist(b, c)).max(geom::dist(c, a)));
        }
        let mesh = Self { vertices, triangles, normals, areas, centroids, diameters };
        mesh.check_closed()?;
        Ok(mesh)
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Largest triangle diameter.
    pub fn h(&self) -> f64 {
        self.diameters.iter().cloned().fold(0.0, f64::max)
    }

    /// Every edge must be shared by exactly two triangles with opposite
    /// orientation.
    fn check_closed(&self) -> Result<()> {
        let mut edges: HashMap<(usize, usize), i32> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry((a, b)).or_default() += 1;
            }
        }
        for (&(a, b), &count) in &edges {
            if count != 1 || edges.get(&(b, a)) != Some(&1) {
                return Err(Error::Mesh(format!(
                    "edge ({a}, {b}) is not shared by exactly two consistently oriented triangles"
                )));
            }
        }
        Ok(())
    }

    /// Points and weights of the degree-5 rule on every triangle.
    pub fn quadrature_points(&self) -> Vec<(Vec3, f64, usize)> {
        let rule = triangle_rule(5);
        let mut out = Vec::with_capacity(self.len() * rule.len());
        for t in 0..self.len() {
            let [a, b, c] = self.corners(t);
            let (e1, e2) = (geom::sub(b, a), geom::sub(c, a));
            for (p, w) in rule.nodes.iter().zip(&rule.weights) {
                let x = geom::axpy(geom::axpy(a, p[0], e1), p[1], e2);
                out.push((x, 2.0 * self.areas[t] * w, t));
            }
        }
        out
    }
}

/// Icosahedron refined `subdiv` times with vertices pushed to the sphere.
pub fn make_icosphere(subdiv: u32, radius: f64) -> SurfaceMesh {
    assert!(subdiv <= 6, "subdiv above 6 is beyond desk scale");
    assert!(radius > 0.0, "radius must be positive");
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .into_iter()
    .map(geom::normalize)
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdiv {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                verts.push(geom::normalize(geom::add(verts[a], verts[b])));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for &[a, b, c] in &triangles {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    let vertices = vertices.into_iter().map(|v| geom::scale(v, radius)).collect();
    SurfaceMesh::new(vertices, triangles).expect("icosphere is a closed surface")
}

#[derive(Clone, Debug)]
pub struct VolumeMesh {
    pub vertices: Vec<Vec3>,
    pub tets: Vec<[usize; 4]>,
    pub volumes: Vec<f64>,
    pub centroids: Vec<Vec3>,
    /// Longest edge of each tetrahedron.
    pub diameters: Vec<f64>,
    /// Outward faces of each tetrahedron: corner points, unit normal, area.
    pub faces: Vec<[Face; 4]>,
    pub total_volume: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct Face {
    pub corners: [Vec3; 3],
    pub normal: Vec3,
    pub area: f64,
}

impl Face {
    fn new(a: Vec3, b: Vec3, c: Vec3) -> Self {
        let cr = geom::cross(geom::sub(b, a), geom::sub(c, a));
        let twice = geom::norm(cr);
        Self { corners: [a, b, c], normal: geom::scale(cr, 1.0 / twice), area: 0.5 * twice }
    }

    pub fn diameter(&self) -> f64 {
        let [a, b, c] = self.corners;
        geom::dist(a, b).max(geom::dist(b, c)).max(geom::dist(c, a))
    }
}

/// Face `k` of a tetrahedron is the one opposite vertex `k`, ordered so that
/// its normal points outward for a positively oriented tetrahedron.
const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

impl VolumeMesh {
    /// Builds geometry; tetrahedra with non-positive signed volume are
    /// rejected.
    pub fn new(vertices: Vec<Vec3>, tets: Vec<[usize; 4]>) -> Result<Self> {
        let n = tets.len();
        let mut volumes = Vec::with_capacity(n);
        let mut centroids = Vec::with_capacity(n);
        let mut diameters = Vec::with_capacity(n);
        let mut faces = Vec::with_capacity(n);
        for (t, tet) in tets.iter().enumerate() {
            if tet.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::Mesh(format!("tetrahedron {t} references a missing vertex")));
            }
            let p = tet.map(|i| vertices[i]);
            let vol = signed_volume(p);
            if !(vol > 0.0) {
                return Err(Error::Mesh(format!(
                    "degenerate tetrahedron {t}: vertices {tet:?}, signed volume {vol:e}"
                )));
            }
            volumes.push(vol);
            centroids.push(geom::scale(geom::add(geom::add(p[0], p[1]), geom::add(p[2], p[3])), 0.25));
            let mut d: f64 = 0.0;
            for i in 0..4 {
                for j in i + 1..4 {
                    d = d.max(geom::dist(p[i], p[j]));
                }
            }
            diameters.push(d);
            faces.push(TET_FACES.map(|[a, b, c]| Face::new(p[a], p[b], p[c])));
        }
        let total_volume = volumes.iter().sum();
        Ok(Self { vertices, tets, volumes, centroids, diameters, faces, total_volume })
    }

    pub fn len(&self) -> usize {
        self.tets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tets.is_empty()
    }

    pub fn corners(&self, c: usize) -> [Vec3; 4] {
        self.tets[c].map(|i| self.vertices[i])
    }

    pub fn h(&self) -> f64 {
        self.diameters.iter().cloned().fold(0.0, f64::max)
    }

    /// Barycentric coordinates of `x` in cell `c`.
    pub fn barycentric(&self, c: usize, x: Vec3) -> [f64; 4] {
        let p = self.corners(c);
        let vol = self.volumes[c];
        let mut lam = [0.0; 4];
        for (k, face) in TET_FACES.iter().enumerate() {
            let q = face.map(|i| p[i]);
            lam[k] = signed_volume([x, q[0], q[1], q[2]]) / vol;
        }
        lam
    }

    /// Cell containing `x`, if any; ties go to the lowest index.
    pub fn locate(&self, x: Vec3) -> Option<usize> {
        let tol = 1e-12;
        let mut best: Option<(usize, f64)> = None;
        for c in 0..self.len() {
            if geom::dist(x, self.centroids[c]) > self.diameters[c] {
                continue;
            }
            let lam = self.barycentric(c, x);
            let m = lam.iter().cloned().fold(f64::INFINITY, f64::min);
            if m >= -tol && best.map_or(true, |(_, bm)| m > bm) {
                best = Some((c, m));
            }
        }
        best.map(|(c, _)| c)
    }

    /// Points and weights of the degree-2 rule on every cell.
    pub fn cell_quadrature(&self, c: usize, degree: usize) -> Vec<(Vec3, f64)> {
        let rule = tet_rule(degree);
        let p = self.corners(c);
        let (e1, e2, e3) = (geom::sub(p[1], p[0]), geom::sub(p[2], p[0]), geom::sub(p[3], p[0]));
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(r, &w)| {
                let x = geom::axpy(geom::axpy(geom::axpy(p[0], r[0], e1), r[1], e2), r[2], e3);
                (x, 6.0 * self.volumes[c] * w)
            })
            .collect()
    }
}

pub fn signed_volume(p: [Vec3; 4]) -> f64 {
    geom::det3(geom::sub(p[1], p[0]), geom::sub(p[2], p[0]), geom::sub(p[3], p[0])) / 6.0
}

/// Layered tetrahedralisation of the ball bounded by a sphere-like surface
/// centred at the origin.
///
/// Layer `l` is the surface scaled by `l / layers`. Each prism between two
/// layers is split into three tetrahedra whose quadrilateral diagonals always
/// run from the lower-index inner vertex to the higher-index outer vertex,
/// which makes neighbouring prisms conforming. The innermost layer is coned
/// to the centre. Surface vertices keep their indices.
pub fn make_ball_volume(surface: &SurfaceMesh, layers: u32) -> Result<VolumeMesh> {
    if layers == 0 {
        return Err(Error::Mesh("layers must be positive".into()));
    }
    let ns = surface.vertices.len();
    let layers = layers as usize;
    // Copy l (0 = outermost) sits at radius fraction (layers - l) / layers.
    let idx = |copy: usize, v: usize| copy * ns + v;
    let mut vertices = Vec::with_capacity(layers * ns + 1);
    for copy in 0..layers {
        let s = (layers - copy) as f64 / layers as f64;
        vertices.extend(surface.vertices.iter().map(|&v| geom::scale(v, s)));
    }
    let center = vertices.len();
    vertices.push([0.0; 3]);

    let mut tets = Vec::with_capacity(surface.len() * (3 * (layers - 1) + 1));
    let push = |tets: &mut Vec<[usize; 4]>, mut t: [usize; 4], verts: &[Vec3]| {
        if signed_volume(t.map(|i| verts[i])) < 0.0 {
            t.swap(2, 3);
        }
        tets.push(t);
    };
    for tri in &surface.triangles {
        let mut s = *tri;
        s.sort_unstable();
        for copy in 0..layers - 1 {
            let [a, b, c] = s.map(|v| idx(copy + 1, v));
            let [a2, b2, c2] = s.map(|v| idx(copy, v));
            push(&mut tets, [a, b, c, c2], &vertices);
            push(&mut tets, [a, b, b2, c2], &vertices);
            push(&mut tets, [a, a2, b2, c2], &vertices);
        }
        let [a, b, c] = s.map(|v| idx(layers - 1, v));
        push(&mut tets, [center, a, b, c], &vertices);
    }
    VolumeMesh::new(vertices, tets)
}

/// Surface and volume meshes sharing one vertex numbering, with the map
/// from boundary triangle to the tetrahedron it bounds.
#[derive(Clone, Debug)]
pub struct Domain {
    pub surface: SurfaceMesh,
    pub volume: VolumeMesh,
    pub boundary_cell: Vec<usize>,
}

impl Domain {
    pub fn new(surface: SurfaceMesh, volume: VolumeMesh) -> Result<Self> {
        let mut faces: HashMap<[usize; 3], usize> = HashMap::new();
        for (c, tet) in volume.tets.iter().enumerate() {
            for f in TET_FACES {
                let mut key = f.map(|k| tet[k]);
                key.sort_unstable();
                faces.insert(key, c);
            }
        }
        let mut boundary_cell = Vec::with_capacity(surface.len());
        for (t, tri) in surface.triangles.iter().enumerate() {
            let mut key = *tri;
            key.sort_unstable();
            let c = *faces.get(&key).ok_or_else(|| {
                Error::Mesh(format!("boundary triangle {t} is not a face of any tetrahedron"))
            })?;
            let inner = volume.centroids[c];
            if geom::dot(surface.normals[t], geom::sub(surface.centroids[t], inner)) <= 0.0 {
                return Err(Error::Mesh(format!("boundary triangle {t} is not oriented outward")));
            }
            boundary_cell.push(c);
        }
        Ok(Self { surface, volume, boundary_cell })
    }

    /// Icosphere of the given refinement with a layered volume.
    pub fn ball(subdiv: u32, layers: u32, radius: f64) -> Result<Self> {
        let surface = make_icosphere(subdiv, radius);
        let volume = make_ball_volume(&surface, layers)?;
        Self::new(surface, volume)
    }

    /// Reads the ASCII format with VERTICES, TRIANGLES and TETRAHEDRA
    /// sections. Triangles are re-oriented outward if needed.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .peekable();
        let mut vertices: Vec<Vec3> = Vec::new();
        let mut triangles: Vec<[usize; 3]> = Vec::new();
        let mut tets: Vec<[usize; 4]> = Vec::new();
        fn numbers<T: std::str::FromStr>(line: &str, n: usize, what: &str) -> Result<Vec<T>> {
            let v: Vec<T> = line
                .split_whitespace()
                .map(|s| s.parse::<T>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Mesh(format!("malformed {what} line `{line}`")))?;
            if v.len() != n {
                return Err(Error::Mesh(format!("expected {n} values in {what} line `{line}`")));
            }
            Ok(v)
        }
        while let Some(header) = lines.next() {
            let count: usize = lines
                .next()
                .and_then(|l| l.parse().ok())
                .ok_or_else(|| Error::Mesh(format!("missing count after {header}")))?;
            for _ in 0..count {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::Mesh(format!("{header} section is truncated")))?;
                match header {
                    "VERTICES" => {
                        let v = numbers::<f64>(line, 3, "vertex")?;
                        vertices.push([v[0], v[1], v[2]]);
                    }
                    "TRIANGLES" => {
                        let v = numbers::<usize>(line, 3, "triangle")?;
                        triangles.push([v[0], v[1], v[2]]);
                    }
                    "TETRAHEDRA" => {
                        let v = numbers::<usize>(line, 4, "tetrahedron")?;
                        let mut t = [v[0], v[1], v[2], v[3]];
                        if t.iter().all(|&i| i < vertices.len())
                            && signed_volume(t.map(|i| vertices[i])) < 0.0
                        {
                            t.swap(2, 3);
                        }
                        tets.push(t);
                    }
                    other => return Err(Error::Mesh(format!("unknown section `{other}`"))),
                }
            }
        }
        let volume = VolumeMesh::new(vertices.clone(), tets)?;
        let mut faces: HashMap<[usize; 3], usize> = HashMap::new();
        for (c, tet) in volume.tets.iter().enumerate() {
            for f in TET_FACES {
                let mut key = f.map(|k| tet[k]);
                key.sort_unstable();
                faces.insert(key, c);
            }
        }
        for tri in triangles.iter_mut() {
            let mut key = *tri;
            key.sort_unstable();
            if let Some(&c) = faces.get(&key) {
                let [a, b, d] = tri.map(|i| vertices[i]);
                let n = geom::cross(geom::sub(b, a), geom::sub(d, a));
                if geom::dot(n, geom::sub(a, volume.centroids[c])) < 0.0 {
                    tri.swap(1, 2);
                }
            }
        }
        let surface = SurfaceMesh::new(vertices, triangles)?;
        Self::new(surface, volume)
    }

    pub fn to_ascii(&self) -> String {
        let mut s = String::new();
        let v = &self.volume.vertices;
        let _ = writeln!(s, "VERTICES\n{}", v.len());
        for p in v {
            let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", p[0], p[1], p[2]);
        }
        let _ = writeln!(s, "TRIANGLES\n{}", self.surface.len());
        for t in &self.surface.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "TETRAHEDRA\n{}", self.volume.len());
        for t in &self.volume.tets {
            let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], t[3]);
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ascii())?;
        Ok(())
    }
}

//! Singular, near-singular and regular integration over panels and cells.
//!
//! Every routine hands quadrature points `(x, w)` to a closure returning a
//! fixed-size array, so one pass over the points can feed several kernels.
//!
//! * Panel containing the target: split at the target into three triangles,
//!   each integrated with the vertex-singular Duffy rule.
//! * Panel near the target: the plane is split at the foot of the target
//!   into three signed triangles, one per edge. Each is integrated in polar
//!   coordinates around the foot. The angle is measured from the
//!   perpendicular to the edge through `tan(theta) = sinh(v)` and the radius
//!   is mapped by `rho = d sinh(s)`, with `d` the distance of the target
//!   from the plane. Both maps remove the complex singularities nearest the
//!   real axis, so Gauss-Legendre converges geometrically.
//! * Cell near or containing the target: signed cones from the target over
//!   the four faces. The base of each cone is integrated with the panel
//!   scheme, so near faces are resolved.

use crate::geom::{self, Vec3};
use crate::mesh::{Domain, Face, SurfaceMesh, VolumeMesh};
use crate::quadrature::{duffy_rule, gauss_legendre, tet_rule, triangle_rule, QuadratureRule, TetRule};

/// Evaluation point for potentials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    pub y: Vec3,
    /// Cell containing `y`, or the cell bounded by `panel` for boundary nodes.
    pub cell: Option<usize>,
    /// Boundary panel whose collocation node is `y`.
    pub panel: Option<usize>,
}

impl Target {
    pub fn interior(y: Vec3, cell: Option<usize>) -> Self {
        Self { y, cell, panel: None }
    }

    pub fn is_boundary(&self) -> bool {
        self.panel.is_some()
    }
}

/// Volume collocation nodes.
pub fn volume_targets(domain: &Domain) -> Vec<Target> {
    (0..domain.volume.len())
        .map(|c| Target::interior(domain.volume.centroids[c], Some(c)))
        .collect()
}

/// Boundary collocation nodes.
pub fn boundary_targets(domain: &Domain) -> Vec<Target> {
    (0..domain.surface.len())
        .map(|t| Target {
            y: domain.surface.centroids[t],
            cell: Some(domain.boundary_cell[t]),
            panel: Some(t),
        })
        .collect()
}

/// Arbitrary interior points; the containing cell is looked up.
pub fn point_targets(domain: &Domain, points: &[Vec3]) -> Vec<Target> {
    points.iter().map(|&y| Target::interior(y, domain.volume.locate(y))).collect()
}

#[derive(Clone, Debug)]
pub struct QuadSettings {
    /// Panels closer than this many diameters use the near-singular rule.
    pub surface_near: f64,
    pub duffy_order: usize,
    pub near_angular: usize,
    pub near_radial: usize,
    /// Points per direction of the near rule used for cell-face integrals
    /// of the subtraction terms and for the cone bases of the cell that
    /// contains the target.
    pub face_order: usize,
    /// Panels closer than this many diameters use the mid-range rule.
    pub surface_mid: f64,
    pub surface_mid_degree: usize,
    /// Degree of the regular panel rule.
    pub surface_far_degree: usize,
    /// Cells (or sub-cells) closer than this many diameters are bisected
    /// along their longest edge.
    pub volume_near: f64,
    /// Sub-cells closer than this many diameters use the mid-range rule.
    pub volume_mid: f64,
    pub volume_mid_degree: usize,
    pub volume_far_degree: usize,
    /// Bisection depth after which a sub-cell is integrated by cones.
    pub volume_max_depth: usize,
    pub cone_radial: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            surface_near: 2.0,
            duffy_order: 12,
            near_angular: 14,
            near_radial: 20,
            face_order: 16,
            surface_mid: 10.0,
            surface_mid_degree: 10,
            surface_far_degree: 5,
            volume_near: 1.5,
            volume_mid: 3.0,
            volume_mid_degree: 5,
            volume_far_degree: 2,
            volume_max_depth: 15,
            cone_radial: 5,
        }
    }
}

/// Precomputed rules shared read-only across assembly threads.
#[derive(Clone, Debug)]
pub struct Integrator {
    pub settings: QuadSettings,
    duffy: QuadratureRule,
    surface_mid: QuadratureRule,
    surface_far: QuadratureRule,
    tet_mid: TetRule,
    tet_far: TetRule,
    gl_angular: (Vec<f64>, Vec<f64>),
    gl_radial: (Vec<f64>, Vec<f64>),
    gl_face: (Vec<f64>, Vec<f64>),
    gl_cone: (Vec<f64>, Vec<f64>),
}

impl Default for Integrator {
    fn default() -> Self {
        Self::new(QuadSettings::default())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QPoint {
    pub x: Vec3,
    pub w: f64,
}

impl Integrator {
    pub fn new(settings: QuadSettings) -> Self {
        Self {
            duffy: duffy_rule(settings.duffy_order),
            surface_mid: triangle_rule(settings.surface_mid_degree),
            surface_far: triangle_rule(settings.surface_far_degree),
            tet_mid: tet_rule(settings.volume_mid_degree),
            tet_far: tet_rule(settings.volume_far_degree),
            gl_angular: gauss_legendre(settings.near_angular),
            gl_radial: gauss_legendre(settings.near_radial),
            gl_face: gauss_legendre(settings.face_order),
            gl_cone: gauss_legendre(settings.cone_radial),
            settings,
        }
    }

    /// Quadrature points for a flat triangle seen from `y`. `on_panel`
    /// marks `y` as a point of the triangle (its collocation node); the
    /// polar near rule then integrates weakly singular kernels exactly in
    /// the radial direction.
    pub fn triangle_points(
        &self,
        corners: [Vec3; 3],
        normal: Vec3,
        area: f64,
        diameter: f64,
        y: Vec3,
        on_panel: bool,
        out: &mut Vec<QPoint>,
    ) {
        out.clear();
        let centroid = geom::scale(geom::add(geom::add(corners[0], corners[1]), corners[2]), 1.0 / 3.0);
        let dist = geom::dist(y, centroid);
        if on_panel || dist < self.settings.surface_near * diameter {
            self.near_points(corners, normal, diameter, y, (&self.gl_angular, &self.gl_radial), out);
        } else {
            let rule = if dist < self.settings.surface_mid * diameter { &self.surface_mid } else { &self.surface_far };
            let [a, b, c] = corners;
            let (e1, e2) = (geom::sub(b, a), geom::sub(c, a));
            for (p, w) in rule.nodes.iter().zip(&rule.weights) {
                out.push(QPoint { x: geom::axpy(geom::axpy(a, p[0], e1), p[1], e2), w: 2.0 * area * w });
            }
        }
    }

    /// Duffy rule on the three sub-triangles formed with `y`.
    pub fn singular_points(&self, corners: [Vec3; 3], y: Vec3, out: &mut Vec<QPoint>) {
        for k in 0..3 {
            let (a, b) = (corners[k], corners[(k + 1) % 3]);
            let (e1, e2) = (geom::sub(a, y), geom::sub(b, y));
            let jac = geom::norm(geom::cross(e1, e2));
            for (p, w) in self.duffy.nodes.iter().zip(&self.duffy.weights) {
                out.push(QPoint { x: geom::axpy(geom::axpy(y, p[0], e1), p[1], e2), w: jac * w });
            }
        }
    }

    fn near_points(
        &self,
        corners: [Vec3; 3],
        normal: Vec3,
        diameter: f64,
        y: Vec3,
        rules: (&(Vec<f64>, Vec<f64>), &(Vec<f64>, Vec<f64>)),
        out: &mut Vec<QPoint>,
    ) {
        let d = geom::dot(geom::sub(y, corners[0]), normal);
        let foot = geom::axpy(y, -d, normal);
        let ad = d.abs();
        let flat = ad < 1e-14 * diameter;
        let ((ta, wa), (tr, wr)) = rules;
        for k in 0..3 {
            let (a, b) = (corners[k], corners[(k + 1) % 3]);
            let e = geom::sub(b, a);
            let t = geom::scale(e, 1.0 / geom::norm(e));
            let f = geom::axpy(a, geom::dot(geom::sub(foot, a), t), t);
            let hvec = geom::sub(f, foot);
            let he = geom::norm(hvec);
            if he < 1e-13 * diameter {
                continue;
            }
            let orient = geom::dot(geom::cross(geom::sub(a, foot), geom::sub(b, foot)), normal);
            let sign = if orient >= 0.0 { 1.0 } else { -1.0 };
            let u = geom::scale(hvec, 1.0 / he);
            // Angle from the perpendicular, tan(theta) = sinh(v).
            let va = (geom::dot(geom::sub(a, f), t) / he).asinh();
            let vb = (geom::dot(geom::sub(b, f), t) / he).asinh();
            let span = vb - va;
            for (&sa, &wsa) in ta.iter().zip(wa) {
                let v = va + span * sa;
                let ch = v.cosh();
                let reach = he * ch;
                let dir = geom::scale(geom::axpy(u, v.sinh(), t), 1.0 / ch);
                let wth = sign * span * wsa / ch;
                if flat {
                    for (&sr, &wsr) in tr.iter().zip(wr) {
                        let rho = reach * sr;
                        out.push(QPoint { x: geom::axpy(foot, rho, dir), w: wth * rho * reach * wsr });
                    }
                } else {
                    let smax = (reach / ad).asinh();
                    for (&sr, &wsr) in tr.iter().zip(wr) {
                        let sv = smax * sr;
                        let rho = ad * sv.sinh();
                        let drho = ad * sv.cosh() * smax * wsr;
                        out.push(QPoint { x: geom::axpy(foot, rho, dir), w: wth * rho * drho });
                    }
                }
            }
        }
    }

    /// ∫ over boundary panel `t` of `f(x, w_normal)` seen from `target`.
    pub fn panel_integral<const N: usize>(
        &self,
        surface: &SurfaceMesh,
        t: usize,
        target: &Target,
        buf: &mut Vec<QPoint>,
        mut f: impl FnMut(Vec3) -> [f64; N],
    ) -> [f64; N] {
        self.triangle_points(
            surface.corners(t),
            surface.normals[t],
            surface.areas[t],
            surface.diameters[t],
            target.y,
            target.panel == Some(t),
            buf,
        );
        accumulate(buf, &mut f)
    }

    /// ∫ over a cell face seen from `y` (which must not lie on the face),
    /// always with the near rule of order `face_order`.
    pub fn face_integral<const N: usize>(
        &self,
        face: &Face,
        y: Vec3,
        buf: &mut Vec<QPoint>,
        mut f: impl FnMut(Vec3) -> [f64; N],
    ) -> [f64; N] {
        buf.clear();
        self.near_points(face.corners, face.normal, face.diameter(), y, (&self.gl_face, &self.gl_face), buf);
        accumulate(buf, &mut f)
    }

    /// Quadrature points for cell `c` seen from `y`. The containing cell is
    /// integrated by cones from `y`; other cells are split recursively
    /// until every piece is well separated from `y`.
    pub fn cell_points(&self, volume: &VolumeMesh, c: usize, y: Vec3, inside: bool, out: &mut Vec<QPoint>) {
        out.clear();
        let corners = volume.corners(c);
        if inside {
            self.cone_points(corners, y, true, out);
        } else {
            self.tet_points(corners, y, 0, out);
        }
    }

    fn tet_points(&self, p: [Vec3; 4], y: Vec3, depth: usize, out: &mut Vec<QPoint>) {
        let centroid = geom::scale(geom::add(geom::add(p[0], p[1]), geom::add(p[2], p[3])), 0.25);
        let mut diam = 0.0f64;
        for i in 0..4 {
            for j in i + 1..4 {
                diam = diam.max(geom::dist(p[i], p[j]));
            }
        }
        let dist = geom::dist(y, centroid);
        if dist < self.settings.volume_near * diam {
            if depth >= self.settings.volume_max_depth {
                self.cone_points(p, y, false, out);
                return;
            }
            for child in bisect(p) {
                self.tet_points(child, y, depth + 1, out);
            }
            return;
        }
        let rule = if dist < self.settings.volume_mid * diam { &self.tet_mid } else { &self.tet_far };
        let (e1, e2, e3) = (geom::sub(p[1], p[0]), geom::sub(p[2], p[0]), geom::sub(p[3], p[0]));
        let jac = geom::det3(e1, e2, e3).abs();
        for (r, &w) in rule.nodes.iter().zip(&rule.weights) {
            let x = geom::axpy(geom::axpy(geom::axpy(p[0], r[0], e1), r[1], e2), r[2], e3);
            out.push(QPoint { x, w: jac * w });
        }
    }

    /// Signed cones from `y` over the faces of a tetrahedron.
    fn cone_points(&self, p: [Vec3; 4], y: Vec3, inside: bool, out: &mut Vec<QPoint>) {
        let mut diam = 0.0f64;
        for i in 0..4 {
            for j in i + 1..4 {
                diam = diam.max(geom::dist(p[i], p[j]));
            }
        }
        let centroid = geom::scale(geom::add(geom::add(p[0], p[1]), geom::add(p[2], p[3])), 0.25);
        let mut face_pts = Vec::new();
        let (tc, wc) = &self.gl_cone;
        for k in 0..4 {
            let mut corners = [p[(k + 1) % 4], p[(k + 2) % 4], p[(k + 3) % 4]];
            let e = geom::cross(geom::sub(corners[1], corners[0]), geom::sub(corners[2], corners[0]));
            let mut normal = geom::normalize(e);
            if geom::dot(normal, geom::sub(corners[0], centroid)) < 0.0 {
                normal = geom::scale(normal, -1.0);
                corners.swap(1, 2);
            }
            let area = 0.5 * geom::norm(e);
            let fdiam = geom::dist(corners[0], corners[1]).max(geom::dist(corners[1], corners[2])).max(geom::dist(corners[2], corners[0]));
            let hf = geom::dot(geom::sub(corners[0], y), normal);
            if hf.abs() < 1e-12 * diam {
                continue;
            }
            face_pts.clear();
            if inside {
                let rules = (&self.gl_face, &self.gl_face);
                self.near_points(corners, normal, fdiam, y, rules, &mut face_pts);
            } else {
                self.triangle_points(corners, normal, area, fdiam, y, false, &mut face_pts);
            }
            for q in &face_pts {
                let ray = geom::sub(q.x, y);
                for (&s, &ws) in tc.iter().zip(wc) {
                    out.push(QPoint { x: geom::axpy(y, s, ray), w: q.w * hf * s * s * ws });
                }
            }
        }
    }

    /// ∫ over cell `c` of `f(x)` seen from `target`.
    pub fn cell_integral<const N: usize>(
        &self,
        volume: &VolumeMesh,
        c: usize,
        target: &Target,
        buf: &mut Vec<QPoint>,
        mut f: impl FnMut(Vec3) -> [f64; N],
    ) -> [f64; N] {
        self.cell_points(volume, c, target.y, target.cell == Some(c), buf);
        accumulate(buf, &mut f)
    }

    /// True when `cell_points` would use cones for this pair.
    /// `∫_c (A(x) wₘ(x) - B(x) wₘ(y)) dx` for the weights `w₀ = 1` and
    /// `wₘ = (x - x_c)ₘ`, `x_c` the centroid; `f` returns `(A, B)`.
    pub fn cell_moments<const N: usize>(
        &self,
        volume: &VolumeMesh,
        c: usize,
        target: &Target,
        buf: &mut Vec<QPoint>,
        mut f: impl FnMut(Vec3) -> ([f64; N], [f64; N]),
    ) -> [[f64; N]; 4] {
        let xc = volume.centroids[c];
        let wy = moment_weights(target.y, xc);
        self.cell_points(volume, c, target.y, target.cell == Some(c), buf);
        let mut acc = [[0.0; N]; 4];
        for p in buf.iter() {
            let (a, b) = f(p.x);
            let wx = moment_weights(p.x, xc);
            for m in 0..4 {
                let (sx, sy) = (p.w * wx[m], p.w * wy[m]);
                for ((o, a), b) in acc[m].iter_mut().zip(&a).zip(&b) {
                    *o += sx * a - sy * b;
                }
            }
        }
        acc
    }

    pub fn is_near_cell(&self, volume: &VolumeMesh, c: usize, target: &Target) -> bool {
        target.cell == Some(c)
            || geom::dist(target.y, volume.centroids[c]) < self.settings.volume_near * volume.diameters[c]
    }
}

/// `[1, x - x_c]`.
#[inline]
pub fn moment_weights(x: Vec3, xc: Vec3) -> [f64; 4] {
    [1.0, x[0] - xc[0], x[1] - xc[1], x[2] - xc[2]]
}

fn accumulate<const N: usize>(pts: &[QPoint], f: &mut impl FnMut(Vec3) -> [f64; N]) -> [f64; N] {
    let mut acc = [0.0; N];
    for p in pts {
        let v = f(p.x);
        for (a, v) in acc.iter_mut().zip(v) {
            *a += p.w * v;
        }
    }
    acc
}


/// Splits a tetrahedron at the midpoint of its longest edge.
fn bisect(p: [Vec3; 4]) -> [[Vec3; 4]; 2] {
    let mut best = (0, 1, 0.0);
    for i in 0..4 {
        for j in i + 1..4 {
            let d = geom::dist(p[i], p[j]);
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let (i, j, _) = best;
    let m = geom::scale(geom::add(p[i], p[j]), 0.5);
    let (mut a, mut b) = (p, p);
    a[j] = m;
    b[i] = m;
    [a, b]
}

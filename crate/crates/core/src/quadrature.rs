//! Reference-element quadrature rules.
//!
//! The reference triangle is (0,0), (1,0), (0,1) with area 1/2; the reference
//! tetrahedron is the unit corner simplex with volume 1/6.

use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleKind {
    Regular,
    /// Integrates `f / |x - v0|` times smooth factors, singular at vertex 0.
    DuffyVertexSingular,
}

/// Rule on the reference triangle.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    /// Polynomial degree integrated exactly (regular rules) or the number of
    /// Gauss points per direction (Duffy rules).
    pub order: usize,
    pub kind: RuleKind,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Rule on the reference tetrahedron.
#[derive(Clone, Debug)]
pub struct TetRule {
    pub nodes: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl TetRule {
    pub fn integrate(&self, f: impl Fn([f64; 3]) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one Gauss point");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let wt = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wt;
        w[n - 1 - i] = 0.5 * wt;
    }
    (x, w)
}

/// Symmetric regular triangle rule of the given degree (1, 2 or 5).
pub fn triangle_rule(degree: usize) -> QuadratureRule {
    let (nodes, weights, order) = match degree {
        0 | 1 => (vec![[1.0 / 3.0, 1.0 / 3.0]], vec![0.5], 1),
        2 => {
            let (a, b) = (1.0 / 6.0, 2.0 / 3.0);
            (vec![[a, a], [b, a], [a, b]], vec![1.0 / 6.0; 3], 2)
        }
        3..=5 => {
            let s = 15f64.sqrt();
            let a = (6.0 - s) / 21.0;
            let b = (6.0 + s) / 21.0;
            let wa = (155.0 - s) / 2400.0;
            let wb = (155.0 + s) / 2400.0;
            (
                vec![
                    [1.0 / 3.0, 1.0 / 3.0],
                    [a, a],
                    [1.0 - 2.0 * a, a],
                    [a, 1.0 - 2.0 * a],
                    [b, b],
                    [1.0 - 2.0 * b, b],
                    [b, 1.0 - 2.0 * b],
                ],
                vec![9.0 / 80.0, wa, wa, wa, wb, wb, wb],
                5,
            )
        }
        _ => return collapsed_triangle_rule(degree.div_ceil(2) + 1),
    };
    QuadratureRule { nodes, weights, order, kind: RuleKind::Regular }
}

/// Conical product rule with `n` Gauss points per direction; exact to degree
/// `2n - 2` on the triangle.
pub fn collapsed_triangle_rule(n: usize) -> QuadratureRule {
    let (x, w) = gauss_legendre(n);
    let mut nodes = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (&u, &wu) in x.iter().zip(&w) {
        for (&v, &wv) in x.iter().zip(&w) {
            nodes.push([u * (1.0 - v), u * v]);
            weights.push(u * wu * wv);
        }
    }
    QuadratureRule { nodes, weights, order: 2 * n - 2, kind: RuleKind::Regular }
}

/// Vertex-singular rule on the reference triangle, singular at vertex 0.
///
/// Constants are integrated to about 1e-9 at order 8 and 3e-13 at order 12;
/// `1/|x|` to 2e-9 at order 8.
///
/// The unit square (u, t) is collapsed onto the triangle through polar
/// coordinates around vertex 0: the angle runs linearly in `t` over the
/// right angle and the radius is `u` times the distance to the opposite
/// edge. The Jacobian carries a factor of the radius, which cancels a
/// `1/|x|` singularity and leaves an analytic integrand in both variables.
pub fn duffy_rule(order: usize) -> QuadratureRule {
    assert!((2..=12).contains(&order), "duffy order must be in [2, 12]");
    let (x, w) = gauss_legendre(order);
    let mut nodes = Vec::with_capacity(order * order);
    let mut weights = Vec::with_capacity(order * order);
    for (&t, &wt) in x.iter().zip(&w) {
        let theta = FRAC_PI_2 * t;
        let (s, c) = theta.sin_cos();
        let edge = 1.0 / (c + s);
        for (&u, &wu) in x.iter().zip(&w) {
            let r = edge * u;
            nodes.push([r * c, r * s]);
            weights.push(FRAC_PI_2 * wt * wu * edge * r);
        }
    }
    QuadratureRule { nodes, weights, order, kind: RuleKind::DuffyVertexSingular }
}

/// Tetrahedron rule of degree 1, 2, 5 or higher (collapsed product).
pub fn tet_rule(degree: usize) -> TetRule {
    match degree {
        0 | 1 => TetRule { nodes: vec![[0.25; 3]], weights: vec![1.0 / 6.0], order: 1 },
        2 => {
            let a = (5.0 - 5f64.sqrt()) / 20.0;
            let b = (5.0 + 3.0 * 5f64.sqrt()) / 20.0;
            TetRule {
                nodes: vec![[a, a, a], [b, a, a], [a, b, a], [a, a, b]],
                weights: vec![1.0 / 24.0; 4],
                order: 2,
            }
        }
        3..=5 => tet_rule_14(),
        _ => collapsed_tet_rule((degree + 4) / 2),
    }
}

/// Symmetric 14-point rule of degree 5 with positive weights.
fn tet_rule_14() -> TetRule {
    let mut nodes = Vec::with_capacity(14);
    let mut weights = Vec::with_capacity(14);
    let a = 0.045_503_704_125_649_65;
    let b = 0.5 - a;
    for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
        let mut bary = [a; 4];
        bary[i] = b;
        bary[j] = b;
        nodes.push([bary[1], bary[2], bary[3]]);
        weights.push(0.007_091_003_462_846_927);
    }
    for (c, w) in [(0.092_735_250_310_891_23, 0.012_248_840_519_393_65), (0.310_885_919_263_300_6, 0.018_781_320_953_002_62)] {
        for k in 0..4 {
            let mut bary = [c; 4];
            bary[k] = 1.0 - 3.0 * c;
            nodes.push([bary[1], bary[2], bary[3]]);
            weights.push(w);
        }
    }
    TetRule { nodes, weights, order: 5 }
}

/// Conical product rule with `n` Gauss points per direction; exact to degree
/// `2n - 3`.
pub fn collapsed_tet_rule(n: usize) -> TetRule {
    let (x, w) = gauss_legendre(n);
    let mut nodes = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for (&a, &wa) in x.iter().zip(&w) {
        for (&b, &wb) in x.iter().zip(&w) {
            for (&c, &wc) in x.iter().zip(&w) {
                // p = a (1 - b, b (1 - c), b c), Jacobian a^2 b.
                let p0 = a * (1.0 - b);
                let p1 = a * b * (1.0 - c);
                let p2 = a * b * c;
                nodes.push([p0, p1, p2]);
                weights.push(wa * wb * wc * a * a * b);
            }
        }
    }
    TetRule { nodes, weights, order: 2 * n - 3 }
}

//! Element bases and quadrature on triangles.
//!
//! The broken Raviart-Thomas basis uses outward edge-normal fluxes as
//! degrees of freedom: `w_{K,e}(x) = (x - a_e) / (2|K|)` where `a_e` is the
//! vertex opposite edge `e`. Scalar bases are the Crouzeix-Raviart functions
//! `1 - 2 lambda_opp(e)` and the cubic bubble `lambda_1 lambda_2 lambda_3`.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

/// Symmetric rule on a triangle, barycentric nodes, weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

/// Default rule for the nonlinear form: 7-point, exact to degree 5.
pub const DEFAULT_DEGREE: usize = 5;

impl QuadratureRule {
    pub fn new(degree: usize) -> Result<Self> {
        let third = 1.0 / 3.0;
        let (points, weights) = match degree {
            1 => (vec![[third; 3]], vec![1.0]),
            2 => (
                vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
                vec![third; 3],
            ),
            3 => (
                vec![
                    [third; 3],
                    [0.6, 0.2, 0.2],
                    [0.2, 0.6, 0.2],
                    [0.2, 0.2, 0.6],
                ],
                vec![-27.0 / 48.0, 25.0 / 48.0, 25.0 / 48.0, 25.0 / 48.0],
            ),
            5 => {
                let s15 = 15f64.sqrt();
                let a = (6.0 - s15) / 21.0;
                let b = (6.0 + s15) / 21.0;
                let wa = (155.0 - s15) / 1200.0;
                let wb = (155.0 + s15) / 1200.0;
                (
                    vec![
                        [third; 3],
                        [a, a, 1.0 - 2.0 * a],
                        [a, 1.0 - 2.0 * a, a],
                        [1.0 - 2.0 * a, a, a],
                        [b, b, 1.0 - 2.0 * b],
                        [b, 1.0 - 2.0 * b, b],
                        [1.0 - 2.0 * b, b, b],
                    ],
                    vec![9.0 / 40.0, wa, wa, wa, wb, wb, wb],
                )
            }
            d => return Err(Error::UnsupportedDegree(d)),
        };
        Ok(QuadratureRule {
            points,
            weights,
            degree,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `int_K f dx` for a triangle with vertices `tri`.
    pub fn integrate(&self, tri: &[Point; 3], mut f: impl FnMut(Point) -> f64) -> f64 {
        let area = crate::mesh::signed_area(&tri[0], &tri[1], &tri[2]).abs();
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(b, w)| w * f(from_barycentric(tri, b)))
            .sum::<f64>()
            * area
    }
}

/// 3-point Gauss-Legendre rule on the unit interval, exact to degree 5.
pub fn edge_gauss3() -> ([f64; 3], [f64; 3]) {
    let r = (0.6f64).sqrt() / 2.0;
    ([0.5 - r, 0.5, 0.5 + r], [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])
}

/// Mean of `f` over the segment `[a, b]` by 3-point Gauss.
pub fn edge_mean(a: Point, b: Point, mut f: impl FnMut(Point) -> f64) -> f64 {
    let (s, w) = edge_gauss3();
    (0..3)
        .map(|i| {
            let x = [a[0] + s[i] * (b[0] - a[0]), a[1] + s[i] * (b[1] - a[1])];
            w[i] * f(x)
        })
        .sum()
}

pub fn from_barycentric(tri: &[Point; 3], b: &[f64; 3]) -> Point {
    [
        b[0] * tri[0][0] + b[1] * tri[1][0] + b[2] * tri[2][0],
        b[0] * tri[0][1] + b[1] * tri[1][1] + b[2] * tri[2][1],
    ]
}

/// Geometry of one (counterclockwise) triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub vertices: [Point; 3],
    pub area: f64,
}

impl Triangle {
    pub fn new(vertices: [Point; 3]) -> Self {
        let area = crate::mesh::signed_area(&vertices[0], &vertices[1], &vertices[2]);
        Triangle { vertices, area }
    }

    pub fn of(mesh: &Mesh, k: usize) -> Self {
        Triangle::new(mesh.triangle_coords(k))
    }

    pub fn barycentric(&self, x: Point) -> [f64; 3] {
        let [a, b, c] = self.vertices;
        let l0 = crate::mesh::signed_area(&x, &b, &c) / self.area;
        let l1 = crate::mesh::signed_area(&a, &x, &c) / self.area;
        [l0, l1, 1.0 - l0 - l1]
    }

    /// Constant gradients of the barycentric coordinates.
    pub fn barycentric_gradients(&self) -> [[f64; 2]; 3] {
        let v = self.vertices;
        let mut g = [[0.0; 2]; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            g[i] = [
                (v[j][1] - v[k][1]) / (2.0 * self.area),
                (v[k][0] - v[j][0]) / (2.0 * self.area),
            ];
        }
        g
    }

    /// Endpoints of local edge `i` (opposite vertex `i`), counterclockwise.
    pub fn edge(&self, i: usize) -> [Point; 2] {
        [self.vertices[(i + 1) % 3], self.vertices[(i + 2) % 3]]
    }

    pub fn edge_length(&self, i: usize) -> f64 {
        let [a, b] = self.edge(i);
        (b[0] - a[0]).hypot(b[1] - a[1])
    }

    /// Outward unit normal on local edge `i`.
    pub fn outward_normal(&self, i: usize) -> [f64; 2] {
        let [a, b] = self.edge(i);
        let l = self.edge_length(i);
        [(b[1] - a[1]) / l, -(b[0] - a[0]) / l]
    }

    pub fn centroid(&self) -> Point {
        from_barycentric(&self.vertices, &[1.0 / 3.0; 3])
    }

    /// Broken RT0 basis function for local edge `i` at `x`.
    pub fn rt0(&self, i: usize, x: Point) -> [f64; 2] {
        let a = self.vertices[i];
        let s = 0.5 / self.area;
        [s * (x[0] - a[0]), s * (x[1] - a[1])]
    }

    /// Constant divergence shared by the three RT0 basis functions.
    pub fn rt0_div(&self) -> f64 {
        1.0 / self.area
    }

    /// `sum_e u_e w_{K,e}(x)`.
    pub fn rt0_field(&self, u: &[f64; 3], x: Point) -> [f64; 2] {
        let mut v = [0.0; 2];
        for (i, ui) in u.iter().enumerate() {
            let w = self.rt0(i, x);
            v[0] += ui * w[0];
            v[1] += ui * w[1];
        }
        v
    }

    pub fn scalar(&self, which: ScalarBasis, x: Point) -> f64 {
        let l = self.barycentric(x);
        match which {
            ScalarBasis::CrouzeixRaviart(i) => 1.0 - 2.0 * l[i],
            ScalarBasis::Bubble => l[0] * l[1] * l[2],
        }
    }

    pub fn scalar_gradient(&self, which: ScalarBasis, x: Point) -> [f64; 2] {
        let g = self.barycentric_gradients();
        match which {
            ScalarBasis::CrouzeixRaviart(i) => [-2.0 * g[i][0], -2.0 * g[i][1]],
            ScalarBasis::Bubble => {
                let l = self.barycentric(x);
                let c = [l[1] * l[2], l[0] * l[2], l[0] * l[1]];
                [
                    c[0] * g[0][0] + c[1] * g[1][0] + c[2] * g[2][0],
                    c[0] * g[0][1] + c[1] * g[1][1] + c[2] * g[2][1],
                ]
            }
        }
    }
}

/// Scalar basis functions of the nonconforming space on one element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarBasis {
    /// Crouzeix-Raviart function of local edge `i`.
    CrouzeixRaviart(usize),
    Bubble,
}

/// Element mean of `lambda_1 lambda_2 lambda_3`.
pub const BUBBLE_MEAN: f64 = 1.0 / 60.0;
/// Element mean of every Crouzeix-Raviart function.
pub const CR_MEAN: f64 = 1.0 / 3.0;

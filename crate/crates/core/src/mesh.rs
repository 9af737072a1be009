//! Conforming triangulations with globally indexed, oriented edges.
//!
//! Local edge `i` of a triangle is the edge opposite its local vertex `i`.
//! Every edge carries a fixed unit normal `n_e` (lower to higher vertex index,
//! rotated by -90 degrees) and every triangle stores, per local edge, the sign
//! `sigma` with `sigma * n_e` equal to the triangle's outward normal.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Relative signed-area threshold below which a triangle counts as degenerate.
const ZERO_AREA_RTOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Vertex indices, sorted ascending.
    pub vertices: [usize; 2],
    pub normal: [f64; 2],
    pub length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    tri_edges: Vec<[usize; 3]>,
    tri_signs: Vec<[f64; 3]>,
    edge_tris: Vec<(usize, Option<usize>)>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    areas: Vec<f64>,
}

impl Mesh {
    /// Uniform `n x n` grid of rectangles over `extent`, each cut along its
    /// positive-slope diagonal.
    pub fn structured(n: usize, extent: Rect) -> Result<Mesh> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "structured mesh needs n >= 1".into(),
            ));
        }
        let hx = (extent.x1 - extent.x0) / n as f64;
        let hy = (extent.y1 - extent.y0) / n as f64;
        if !(hx > 0.0 && hy > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "degenerate extent {extent:?}"
            )));
        }
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([extent.x0 + i as f64 * hx, extent.y0 + j as f64 * hy]);
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            }
        }
        Mesh::from_parts(vertices, triangles)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Mesh> {
        let text = std::fs::read_to_string(path)?;
        Mesh::parse(&text)
    }

    /// Parse the `vertices N` / `triangles M` text format.
    pub fn parse(text: &str) -> Result<Mesh> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let count = |lines: &mut dyn Iterator<Item = (usize, &str)>, key: &str| -> Result<usize> {
            let (ln, line) = lines.next().ok_or(Error::MeshParse {
                line: 0,
                msg: format!("missing '{key}' header"),
            })?;
            let mut it = line.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(k), Some(v), None) if k == key => v.parse().map_err(|_| Error::MeshParse {
                    line: ln,
                    msg: format!("bad count '{v}'"),
                }),
                _ => Err(Error::MeshParse {
                    line: ln,
                    msg: format!("expected '{key} <count>'"),
                }),
            }
        };

        let nv = count(&mut lines, "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, line) = lines.next().ok_or(Error::MeshParse {
                line: 0,
                msg: "unexpected end of file in vertex block".into(),
            })?;
            let vals = parse_fields::<f64>(ln, line, 2)?;
            vertices.push([vals[0], vals[1]]);
        }
        let nt = count(&mut lines, "triangles")?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, line) = lines.next().ok_or(Error::MeshParse {
                line: 0,
                msg: "unexpected end of file in triangle block".into(),
            })?;
            let t = parse_fields::<usize>(ln, line, 3)?;
            if let Some(&bad) = t.iter().find(|&&v| v >= nv) {
                return Err(Error::MeshParse {
                    line: ln,
                    msg: format!("vertex index {bad} out of range"),
                });
            }
            triangles.push([t[0], t[1], t[2]]);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::MeshParse {
                line: ln,
                msg: "trailing content after triangle block".into(),
            });
        }
        Mesh::from_parts(vertices, triangles)
    }

    /// Serialize into the text format read by [`Mesh::parse`].
    pub fn to_text(&self) -> String {
        let mut s = format!("vertices {}\n", self.vertices.len());
        for v in &self.vertices {
            s.push_str(&format!("{:.17e} {:.17e}\n", v[0], v[1]));
        }
        s.push_str(&format!("triangles {}\n", self.triangles.len()));
        for t in &self.triangles {
            s.push_str(&format!("{} {} {}\n", t[0], t[1], t[2]));
        }
        s
    }

    /// Build edges, orientation signs and adjacency from raw triangles.
    /// Clockwise triangles are flipped; degenerate, duplicated or
    /// non-conforming input is rejected.
    pub fn from_parts(vertices: Vec<Point>, mut triangles: Vec<[usize; 3]>) -> Result<Mesh> {
        if triangles.is_empty() {
            return Err(Error::Topology("mesh has no triangles".into()));
        }
        let bbox_area = {
            let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for v in &vertices {
                for d in 0..2 {
                    lo[d] = lo[d].min(v[d]);
                    hi[d] = hi[d].max(v[d]);
                }
            }
            (hi[0] - lo[0]) * (hi[1] - lo[1])
        };

        let mut areas = Vec::with_capacity(triangles.len());
        let mut seen = HashMap::new();
        for (k, t) in triangles.iter_mut().enumerate() {
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::Topology(format!("triangle {k} repeats a vertex")));
            }
            let mut key = *t;
            key.sort_unstable();
            if let Some(prev) = seen.insert(key, k) {
                return Err(Error::Topology(format!(
                    "triangle {k} duplicates triangle {prev}"
                )));
            }
            let a = signed_area(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]);
            if a.abs() < ZERO_AREA_RTOL * bbox_area || !a.is_finite() {
                return Err(Error::Topology(format!("triangle {k} has zero area")));
            }
            if a < 0.0 {
                t.swap(1, 2);
            }
            areas.push(a.abs());
        }

        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_tris: Vec<(usize, Option<usize>)> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        let mut tri_signs = Vec::with_capacity(triangles.len());
        for (k, t) in triangles.iter().enumerate() {
            let mut te = [0; 3];
            let mut ts = [0.0; 3];
            for i in 0..3 {
                let (a, b) = (t[(i + 1) % 3], t[(i + 2) % 3]);
                let key = if a < b { [a, b] } else { [b, a] };
                let e = match edge_index.get(&key) {
                    Some(&e) => {
                        match &mut edge_tris[e] {
                            (_, second @ None) => *second = Some(k),
                            _ => {
                                return Err(Error::Topology(format!(
                                    "edge {key:?} is shared by more than two triangles"
                                )))
                            }
                        }
                        e
                    }
                    None => {
                        let e = edges.len();
                        edge_index.insert(key, e);
                        edges.push(make_edge(&vertices, key));
                        edge_tris.push((k, None));
                        e
                    }
                };
                te[i] = e;
                // counterclockwise traversal a -> b has outward normal rot(-90)(b - a)
                ts[i] = if a < b { 1.0 } else { -1.0 };
            }
            tri_edges.push(te);
            tri_signs.push(ts);
        }

        let (mut interior, mut boundary) = (Vec::new(), Vec::new());
        for (e, (_, second)) in edge_tris.iter().enumerate() {
            if second.is_some() {
                interior.push(e);
            } else {
                boundary.push(e);
            }
        }

        for &e in &interior {
            let (k0, k1) = (edge_tris[e].0, edge_tris[e].1.unwrap());
            let s0 = sign_of(&tri_edges[k0], &tri_signs[k0], e);
            let s1 = sign_of(&tri_edges[k1], &tri_signs[k1], e);
            if s0 != -s1 {
                return Err(Error::Topology(format!(
                    "triangles {k0} and {k1} induce the same orientation on edge {e} (overlap)"
                )));
            }
        }

        // Hanging nodes and holes show up as boundary vertices with a
        // boundary degree other than 2, or as an Euler characteristic != 1.
        let mut bdeg = vec![0usize; vertices.len()];
        let mut used = vec![false; vertices.len()];
        for &e in &boundary {
            for &v in &edges[e].vertices {
                bdeg[v] += 1;
            }
        }
        for t in &triangles {
            for &v in t {
                used[v] = true;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::Topology(format!(
                "vertex {v} is not referenced by any triangle"
            )));
        }
        if let Some(v) = bdeg.iter().position(|&d| d != 0 && d != 2) {
            return Err(Error::Topology(format!(
                "vertex {v} touches {} boundary edges (non-conforming mesh)",
                bdeg[v]
            )));
        }
        let euler = vertices.len() as i64 - edges.len() as i64 + triangles.len() as i64;
        if euler != 1 {
            return Err(Error::Topology(format!(
                "V - E + F = {euler}; only simply connected domains are supported"
            )));
        }

        Ok(Mesh {
            vertices,
            triangles,
            edges,
            tri_edges,
            tri_signs,
            edge_tris,
            interior,
            boundary,
            areas,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn interior_edges(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary_edges(&self) -> &[usize] {
        &self.boundary
    }

    pub fn is_boundary(&self, e: usize) -> bool {
        self.edge_tris[e].1.is_none()
    }

    /// Global edge ids of triangle `k`, local edge `i` opposite local vertex `i`.
    pub fn triangle_edges(&self, k: usize) -> [usize; 3] {
        self.tri_edges[k]
    }

    /// Orientation signs `sigma_{K,e}` for the local edges of triangle `k`.
    pub fn triangle_signs(&self, k: usize) -> [f64; 3] {
        self.tri_signs[k]
    }

    /// The one or two triangles adjacent to edge `e`.
    pub fn edge_triangles(&self, e: usize) -> (usize, Option<usize>) {
        self.edge_tris[e]
    }

    /// Position of global edge `e` among the local edges of triangle `k`.
    pub fn local_index(&self, k: usize, e: usize) -> Option<usize> {
        self.tri_edges[k].iter().position(|&x| x == e)
    }

    pub fn area(&self, k: usize) -> f64 {
        self.areas[k]
    }

    pub fn triangle_coords(&self, k: usize) -> [Point; 3] {
        let t = self.triangles[k];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn centroid(&self, k: usize) -> Point {
        let c = self.triangle_coords(k);
        [
            (c[0][0] + c[1][0] + c[2][0]) / 3.0,
            (c[0][1] + c[1][1] + c[2][1]) / 3.0,
        ]
    }

    pub fn edge_endpoints(&self, e: usize) -> [Point; 2] {
        let [a, b] = self.edges[e].vertices;
        [self.vertices[a], self.vertices[b]]
    }

    pub fn edge_midpoint(&self, e: usize) -> Point {
        let [a, b] = self.edge_endpoints(e);
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    /// Largest edge length.
    pub fn mesh_size(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(0.0, f64::max)
    }
}

fn sign_of(te: &[usize; 3], ts: &[f64; 3], e: usize) -> f64 {
    te.iter()
        .position(|&x| x == e)
        .map(|i| ts[i])
        .unwrap_or(0.0)
}

fn make_edge(vertices: &[Point], key: [usize; 2]) -> Edge {
    let (a, b) = (vertices[key[0]], vertices[key[1]]);
    let d = [b[0] - a[0], b[1] - a[1]];
    let length = d[0].hypot(d[1]);
    Edge {
        vertices: key,
        normal: [d[1] / length, -d[0] / length],
        length,
    }
}

pub fn signed_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn parse_fields<T: std::str::FromStr>(line_no: usize, line: &str, n: usize) -> Result<Vec<T>> {
    let vals: Vec<&str> = line.split_whitespace().collect();
    if vals.len() != n {
        return Err(Error::MeshParse {
            line: line_no,
            msg: format!("expected {n} fields, found {}", vals.len()),
        });
    }
    vals.iter()
        .map(|v| {
            v.parse::<T>().map_err(|_| Error::MeshParse {
                line: line_no,
                msg: format!("cannot parse '{v}'"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
        a[0] * b[0] + a[1] * b[1]
    }

    #[test]
    fn structured_counts() {
        let m = Mesh::structured(1, Rect::UNIT).unwrap();
        assert_eq!((m.num_triangles(), m.num_edges()), (2, 5));
        assert_eq!(m.interior_edges().len(), 1);

        let m = Mesh::structured(2, Rect::UNIT).unwrap();
        assert_eq!((m.num_triangles(), m.num_edges()), (8, 16));
        assert_eq!(m.interior_edges().len(), 8);

        for n in 1..7 {
            let m = Mesh::structured(n, Rect::UNIT).unwrap();
            assert_eq!(m.num_triangles(), 2 * n * n);
            assert_eq!(m.num_vertices(), (n + 1) * (n + 1));
            let euler = m.num_vertices() as i64 - m.num_edges() as i64 + m.num_triangles() as i64;
            assert_eq!(euler, 1);
        }
    }

    #[test]
    fn zero_n_rejected() {
        assert!(Mesh::structured(0, Rect::UNIT).is_err());
    }

    #[test]
    fn orientation_invariants() {
        let m = Mesh::structured(3, Rect { x0: -1.0, y0: 0.0, x1: 2.0, y1: 0.5 }).unwrap();
        for e in 0..m.num_edges() {
            let n = m.edges()[e].normal;
            assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-15);
        }
        for k in 0..m.num_triangles() {
            assert!(m.area(k) > 0.0);
        }
        for &e in m.interior_edges() {
            let (k0, k1) = m.edge_triangles(e);
            let k1 = k1.unwrap();
            let s0 = m.triangle_signs(k0)[m.local_index(k0, e).unwrap()];
            let s1 = m.triangle_signs(k1)[m.local_index(k1, e).unwrap()];
            assert_eq!(s0 + s1, 0.0);
        }
        for &e in m.boundary_edges() {
            let (k, _) = m.edge_triangles(e);
            let s = m.triangle_signs(k)[m.local_index(k, e).unwrap()];
            let n = m.edges()[e].normal;
            let c = m.centroid(k);
            let mid = m.edge_midpoint(e);
            assert!(dot([s * n[0], s * n[1]], [mid[0] - c[0], mid[1] - c[1]]) > 0.0);
        }
        let all: usize = m.interior_edges().len() + m.boundary_edges().len();
        assert_eq!(all, m.num_edges());
    }

    #[test]
    fn outward_normal_sign_on_every_local_edge() {
        let m = Mesh::structured(2, Rect::UNIT).unwrap();
        for k in 0..m.num_triangles() {
            let c = m.centroid(k);
            for (i, &e) in m.triangle_edges(k).iter().enumerate() {
                let s = m.triangle_signs(k)[i];
                let n = m.edges()[e].normal;
                let mid = m.edge_midpoint(e);
                assert!(dot([s * n[0], s * n[1]], [mid[0] - c[0], mid[1] - c[1]]) > 0.0);
            }
        }
    }

    #[test]
    fn text_round_trip() {
        let m = Mesh::structured(1, Rect::UNIT).unwrap();
        let m2 = Mesh::parse(&m.to_text()).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn comments_and_whitespace() {
        let text = "# unit square\nvertices 4\n0 0\n1 0 # right\n1 1\n0 1\n\ntriangles 2\n0 1 2\n0 2 3\n";
        let m = Mesh::parse(text).unwrap();
        assert_eq!(m.num_edges(), 5);
    }

    #[test]
    fn clockwise_triangle_is_flipped() {
        let text = "vertices 4\n0 0\n1 0\n1 1\n0 1\ntriangles 2\n0 2 1\n0 2 3\n";
        let m = Mesh::parse(text).unwrap();
        for k in 0..2 {
            let [a, b, c] = m.triangle_coords(k);
            assert!(signed_area(&a, &b, &c) > 0.0);
        }
    }

    #[test]
    fn repeated_triangle_rejected() {
        let text = "vertices 4\n0 0\n1 0\n1 1\n0 1\ntriangles 3\n0 1 2\n0 2 3\n2 0 1\n";
        assert!(matches!(Mesh::parse(text), Err(Error::Topology(_))));
    }

    #[test]
    fn zero_area_rejected() {
        let text = "vertices 4\n0 0\n1 0\n2 0\n0 1\ntriangles 2\n0 1 2\n0 1 3\n";
        assert!(matches!(Mesh::parse(text), Err(Error::Topology(_))));
    }

    #[test]
    fn three_triangles_on_one_edge_rejected() {
        let text = "vertices 5\n0 0\n1 0\n0 1\n0 -1\n1 1\ntriangles 3\n0 1 2\n0 3 1\n0 1 4\n";
        assert!(Mesh::parse(text).is_err());
    }

    #[test]
    fn hanging_node_rejected() {
        // big triangle on the left, two small ones sharing its right edge midpoint
        let text = "vertices 5\n0 0\n1 0\n1 1\n1 0.5\n2 0.5\ntriangles 3\n0 1 2\n1 4 3\n3 4 2\n";
        assert!(matches!(Mesh::parse(text), Err(Error::Topology(_))));
    }

    #[test]
    fn hole_rejected() {
        // ring of 8 triangles around the unit cell of a 3x3 grid
        let mut verts = Vec::new();
        for j in 0..4 {
            for i in 0..4 {
                verts.push([i as f64, j as f64]);
            }
        }
        let id = |i: usize, j: usize| j * 4 + i;
        let mut tris = Vec::new();
        for j in 0..3 {
            for i in 0..3 {
                if (i, j) == (1, 1) {
                    continue;
                }
                tris.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                tris.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        assert!(matches!(Mesh::from_parts(verts, tris), Err(Error::Topology(_))));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(Mesh::parse("vertices x\n"), Err(Error::MeshParse { .. })));
        assert!(matches!(
            Mesh::parse("vertices 1\n0 0\ntriangles 1\n0 1 2\n"),
            Err(Error::MeshParse { .. })
        ));
        assert!(matches!(Mesh::parse("vertices 1\n0\n"), Err(Error::MeshParse { .. })));
    }

    #[test]
    fn deterministic_indexing() {
        let text = Mesh::structured(3, Rect::UNIT).unwrap().to_text();
        assert_eq!(Mesh::parse(&text).unwrap(), Mesh::parse(&text).unwrap());
    }
}

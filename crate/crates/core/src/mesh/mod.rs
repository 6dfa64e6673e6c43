//! Triangulations of the reference domain, crack insertion by node duplication,
//! and the time-dependent constrained function space built on top of them.

mod crack;
mod io;
mod space;

use std::collections::HashMap;

pub use crack::{insert_crack, CrackPath, DuplicatePair, FrontSchedule};
pub use space::{active_space, DofKind, DofSpace};

use crate::error::{bail, Result};

/// Boundary condition carried by a boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Dirichlet => "dirichlet",
            BoundaryTag::Neumann => "neumann",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dirichlet" | "D" => Some(BoundaryTag::Dirichlet),
            "neumann" | "N" => Some(BoundaryTag::Neumann),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
    /// Unit outward normal.
    pub normal: [f64; 2],
}

impl BoundaryEdge {
    pub fn length(&self, mesh: &Mesh2D) -> f64 {
        let [a, b] = self.nodes.map(|i| mesh.nodes[i]);
        (b[0] - a[0]).hypot(b[1] - a[1])
    }

    pub fn midpoint(&self, mesh: &Mesh2D) -> [f64; 2] {
        let [a, b] = self.nodes.map(|i| mesh.nodes[i]);
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }
}

/// A conforming triangulation with tagged boundary edges.
///
/// Triangles are stored counter-clockwise. Crack faces created by
/// [`insert_crack`] are not boundary edges: only the outer boundary of the
/// domain is listed in `boundary`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
}

pub(crate) fn signed_area(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh2D {
    /// Validates and builds a mesh. `boundary` must list every edge owned by
    /// exactly one triangle, once, and those edges must close into loops.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<([usize; 2], BoundaryTag)>,
    ) -> Result<Self> {
        let n = nodes.len();
        for (e, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                bail!(Geometry, "triangle {e} references a node out of range");
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                bail!(Geometry, "triangle {e} repeats a node");
            }
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if !(area > 0.0) {
                bail!(
                    Geometry,
                    "triangle {e} has nonpositive signed area {area:e}"
                );
            }
        }

        let owners = edge_owners(&triangles);
        if let Some((k, _)) = owners.iter().find(|(_, t)| t.len() > 2) {
            bail!(Geometry, "edge {k:?} is shared by more than two triangles");
        }
        let mut listed: HashMap<(usize, usize), usize> = HashMap::new();
        for (i, (edge, _)) in boundary.iter().enumerate() {
            if edge.iter().any(|&v| v >= n) || edge[0] == edge[1] {
                bail!(Geometry, "boundary edge {i} is malformed");
            }
            if listed.insert(edge_key(edge[0], edge[1]), i).is_some() {
                bail!(Geometry, "boundary edge {edge:?} is listed twice");
            }
        }
        for (key, tris) in &owners {
            let on_boundary = tris.len() == 1;
            if on_boundary != listed.contains_key(key) {
                bail!(
                    Geometry,
                    "edge {key:?} is {} the boundary but {} listed as a boundary edge",
                    if on_boundary { "on" } else { "not on" },
                    if on_boundary { "is not" } else { "is" }
                );
            }
        }

        let mut degree = vec![0usize; n];
        for (edge, _) in &boundary {
            degree[edge[0]] += 1;
            degree[edge[1]] += 1;
        }
        if let Some(v) = degree.iter().position(|&d| d != 0 && d != 2) {
            bail!(Geometry, "boundary does not form closed loops at node {v}");
        }

        let mut edges = Vec::with_capacity(boundary.len());
        for (nodes_ab, tag) in boundary {
            let tri = owners[&edge_key(nodes_ab[0], nodes_ab[1])][0];
            let third = triangles[tri]
                .iter()
                .copied()
                .find(|v| !nodes_ab.contains(v))
                .expect("triangle has a third vertex");
            let normal = outward_normal(nodes[nodes_ab[0]], nodes[nodes_ab[1]], nodes[third]);
            edges.push(BoundaryEdge {
                nodes: nodes_ab,
                tag,
                normal,
            });
        }

        Ok(Mesh2D {
            nodes,
            triangles,
            boundary: edges,
        })
    }

    pub(crate) fn from_parts_unchecked(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
    ) -> Self {
        Mesh2D {
            nodes,
            triangles,
            boundary,
        }
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, e: usize) -> f64 {
        let [a, b, c] = self.triangles[e].map(|i| self.nodes[i]);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|e| self.triangle_area(e))
            .sum()
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[e].map(|i| self.nodes[i]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Reassigns boundary tags from the edge midpoint and outward normal.
    pub fn retag_boundary(
        mut self,
        mut tag: impl FnMut([f64; 2], [f64; 2]) -> BoundaryTag,
    ) -> Self {
        for i in 0..self.boundary.len() {
            let mid = self.boundary[i].midpoint(&self);
            let normal = self.boundary[i].normal;
            self.boundary[i].tag = tag(mid, normal);
        }
        self
    }

    /// Nodes lying on at least one boundary edge with the given tag, sorted.
    pub fn tagged_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut on = vec![false; self.nodes.len()];
        for edge in self.boundary.iter().filter(|e| e.tag == tag) {
            on[edge.nodes[0]] = true;
            on[edge.nodes[1]] = true;
        }
        on.iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }

    pub(crate) fn boundary_node_mask(&self) -> Vec<bool> {
        let mut on = vec![false; self.nodes.len()];
        for edge in &self.boundary {
            on[edge.nodes[0]] = true;
            on[edge.nodes[1]] = true;
        }
        on
    }

    /// Nearest node to a point; used to translate coordinates into node indices.
    pub fn nearest_node(&self, p: [f64; 2]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, q) in self.nodes.iter().enumerate() {
            let d = (q[0] - p[0]).hypot(q[1] - p[1]);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

pub(crate) fn edge_owners(triangles: &[[usize; 3]]) -> HashMap<(usize, usize), Vec<usize>> {
    let mut owners: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for j in 0..3 {
            owners
                .entry(edge_key(tri[j], tri[(j + 1) % 3]))
                .or_default()
                .push(t);
        }
    }
    owners
}

fn outward_normal(a: [f64; 2], b: [f64; 2], interior: [f64; 2]) -> [f64; 2] {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = dx.hypot(dy);
    let mut n = [dy / len, -dx / len];
    let to_interior = [interior[0] - a[0], interior[1] - a[1]];
    if n[0] * to_interior[0] + n[1] * to_interior[1] > 0.0 {
        n = [-n[0], -n[1]];
    }
    n
}

/// Structured triangulation of `[0, width] x [0, height]`.
///
/// Cells are split along alternating diagonals (checkerboard), so interior
/// nodes see either 4 or 8 triangles. Node `(i, j)` has index `j * (nx + 1) + i`.
/// Every boundary edge starts out tagged Dirichlet.
pub fn build_rect_mesh(width: f64, height: f64, nx: usize, ny: usize) -> Result<Mesh2D> {
    if !(width > 0.0 && height > 0.0) {
        bail!(
            Config,
            "rectangle dimensions must be positive, got {width} x {height}"
        );
    }
    if nx == 0 || ny == 0 {
        bail!(
            Config,
            "rectangle needs at least one subdivision per direction"
        );
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([width * i as f64 / nx as f64, height * j as f64 / ny as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    let mut boundary = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary.push(([idx(i, 0), idx(i + 1, 0)], BoundaryTag::Dirichlet));
    }
    for j in 0..ny {
        boundary.push(([idx(nx, j), idx(nx, j + 1)], BoundaryTag::Dirichlet));
    }
    for i in (0..nx).rev() {
        boundary.push(([idx(i + 1, ny), idx(i, ny)], BoundaryTag::Dirichlet));
    }
    for j in (0..ny).rev() {
        boundary.push(([idx(0, j + 1), idx(0, j)], BoundaryTag::Dirichlet));
    }
    Mesh2D::new(nodes, triangles, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_counts() {
        let m = build_rect_mesh(1.0, 1.0, 1, 1).unwrap();
        assert_eq!((m.n_nodes(), m.n_triangles()), (4, 2));
        assert_eq!(m.total_area(), 1.0);

        let m = build_rect_mesh(1.0, 1.0, 2, 2).unwrap();
        assert_eq!((m.n_nodes(), m.n_triangles()), (9, 8));

        let m = build_rect_mesh(2.0, 1.0, 10, 5).unwrap();
        assert!((m.total_area() - 2.0).abs() < 1e-12);
        assert_eq!(m.boundary_edges().len(), 30);
    }

    #[test]
    fn rect_rejects_bad_input() {
        assert!(build_rect_mesh(0.0, 1.0, 1, 1).is_err());
        assert!(build_rect_mesh(1.0, -1.0, 1, 1).is_err());
        assert!(build_rect_mesh(1.0, 1.0, 0, 3).is_err());
    }

    #[test]
    fn normals_point_outward() {
        let m = build_rect_mesh(1.0, 1.0, 3, 3).unwrap();
        for e in m.boundary_edges() {
            let mid = e.midpoint(&m);
            let probe = [mid[0] + 1e-3 * e.normal[0], mid[1] + 1e-3 * e.normal[1]];
            let outside = probe[0] < 0.0 || probe[0] > 1.0 || probe[1] < 0.0 || probe[1] > 1.0;
            assert!(outside, "normal {:?} at {mid:?}", e.normal);
        }
    }

    #[test]
    fn rejects_clockwise_triangle() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let err = Mesh2D::new(
            nodes,
            vec![[0, 2, 1]],
            vec![
                ([0, 1], BoundaryTag::Neumann),
                ([1, 2], BoundaryTag::Neumann),
                ([2, 0], BoundaryTag::Neumann),
            ],
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_incomplete_boundary() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let err = Mesh2D::new(
            nodes,
            vec![[0, 1, 2]],
            vec![
                ([0, 1], BoundaryTag::Neumann),
                ([1, 2], BoundaryTag::Neumann),
            ],
        );
        assert!(err.is_err());
    }

    #[test]
    fn retag_by_side() {
        let m = build_rect_mesh(1.0, 1.0, 4, 4)
            .unwrap()
            .retag_boundary(|_, n| {
                if n[1].abs() > 0.5 {
                    BoundaryTag::Dirichlet
                } else {
                    BoundaryTag::Neumann
                }
            });
        let d = m.tagged_nodes(BoundaryTag::Dirichlet);
        assert_eq!(d.len(), 10);
        assert!(d.iter().all(|&i| {
            let y = m.nodes()[i][1];
            y == 0.0 || y == 1.0
        }));
    }
}

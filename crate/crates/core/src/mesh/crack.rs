use std::collections::{HashMap, HashSet};

use super::{edge_key, edge_owners, Mesh2D};
use crate::error::{bail, Result};

/// A crack-face node pair: `minus` is the duplicate of `plus` created for the
/// triangles lying to the right of the directed polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuplicatePair {
    pub plus: usize,
    pub minus: usize,
    /// Arclength of the vertex measured from the first polyline vertex.
    pub arclength: f64,
}

/// Piecewise-linear, nondecreasing crack-front position `t -> s(t)`.
///
/// A single knot means the front is frozen at that length for all `t >= t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontSchedule {
    knots: Vec<(f64, f64)>,
}

impl FrontSchedule {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            bail!(Config, "front schedule needs at least one knot");
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                bail!(Config, "front schedule times must be strictly increasing");
            }
            if w[1].1 < w[0].1 {
                bail!(Config, "front schedule must be nondecreasing");
            }
        }
        if knots
            .iter()
            .any(|&(t, s)| !t.is_finite() || !s.is_finite() || s < 0.0)
        {
            bail!(Config, "front schedule knots must be finite with s >= 0");
        }
        Ok(FrontSchedule { knots })
    }

    /// Front frozen at `s` from `t = 0` on.
    pub fn frozen(s: f64) -> Self {
        FrontSchedule {
            knots: vec![(0.0, s)],
        }
    }

    /// Front moving at constant speed from `s0` at `t0` to `s1` at `t1`.
    pub fn linear(t0: f64, t1: f64, s0: f64, s1: f64) -> Result<Self> {
        Self::new(vec![(t0, s0), (t1, s1)])
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let eps = 1e-12 * t.abs().max(1.0);
        let (t0, s0) = self.knots[0];
        if t < t0 - eps {
            bail!(Domain, "time {t} precedes the front schedule start {t0}");
        }
        if self.knots.len() == 1 {
            return Ok(s0);
        }
        let (tn, sn) = *self.knots.last().unwrap();
        if t > tn + eps {
            bail!(Domain, "time {t} is past the front schedule end {tn}");
        }
        if t >= tn {
            return Ok(sn);
        }
        if t <= t0 {
            return Ok(s0);
        }
        let i = self.knots.partition_point(|&(tk, _)| tk <= t) - 1;
        let (ta, sa) = self.knots[i];
        let (tb, sb) = self.knots[i + 1];
        Ok(sa + (sb - sa) * (t - ta) / (tb - ta))
    }
}

/// A crack polyline embedded in a mesh by node duplication.
#[derive(Debug, Clone, PartialEq)]
pub struct CrackPath {
    polyline: Vec<usize>,
    pairs: Vec<DuplicatePair>,
    length: f64,
    schedule: FrontSchedule,
}

impl CrackPath {
    pub fn polyline(&self) -> &[usize] {
        &self.polyline
    }

    /// Duplicate pairs in arclength order.
    pub fn pairs(&self) -> &[DuplicatePair] {
        &self.pairs
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn schedule(&self) -> &FrontSchedule {
        &self.schedule
    }

    pub fn with_schedule(mut self, schedule: FrontSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    /// Number of leading pairs released at time `t`: every pair whose
    /// arclength is within the front position.
    pub fn released_at(&self, t: f64) -> Result<usize> {
        let s = self.schedule.eval(t)?;
        let slack = 1e-12 * self.length.max(1.0);
        Ok(self.pairs.partition_point(|p| p.arclength <= s + slack))
    }
}

/// Cuts the mesh along a polyline of node indices.
///
/// Each interior polyline vertex gets a duplicate node, and the triangles on
/// the right of the directed polyline are re-indexed to it. End vertices are
/// crack tips and stay shared. The returned crack starts with a front frozen
/// at zero length (all pairs tied).
pub fn insert_crack(mesh: &Mesh2D, polyline: &[usize]) -> Result<(Mesh2D, CrackPath)> {
    if polyline.is_empty() {
        return Ok((
            mesh.clone(),
            CrackPath {
                polyline: Vec::new(),
                pairs: Vec::new(),
                length: 0.0,
                schedule: FrontSchedule::frozen(0.0),
            },
        ));
    }
    if polyline.len() == 1 {
        bail!(Geometry, "a crack polyline needs at least two vertices");
    }
    let n = mesh.n_nodes();
    if let Some(&v) = polyline.iter().find(|&&v| v >= n) {
        bail!(Geometry, "crack vertex {v} is not a mesh node");
    }
    let mut seen = HashSet::new();
    for &v in polyline {
        if !seen.insert(v) {
            bail!(Geometry, "crack polyline self-intersects at node {v}");
        }
    }

    let owners = edge_owners(mesh.triangles());
    for w in polyline.windows(2) {
        match owners.get(&edge_key(w[0], w[1])).map(Vec::len) {
            None => bail!(
                Geometry,
                "crack segment {}-{} is not a mesh edge",
                w[0],
                w[1]
            ),
            Some(1) => bail!(
                Geometry,
                "crack segment {}-{} lies on the boundary",
                w[0],
                w[1]
            ),
            Some(_) => {}
        }
    }
    let on_boundary = mesh.boundary_node_mask();
    for &v in &polyline[1..polyline.len() - 1] {
        if on_boundary[v] {
            bail!(Geometry, "interior crack vertex {v} touches the boundary");
        }
    }

    let nodes = mesh.nodes();
    let tris = mesh.triangles();
    let mut incident: HashMap<usize, Vec<usize>> = HashMap::new();
    for (t, tri) in tris.iter().enumerate() {
        for &v in tri {
            incident.entry(v).or_default().push(t);
        }
    }

    let mut new_nodes = nodes.to_vec();
    let mut new_tris = tris.to_vec();
    let mut pairs = Vec::with_capacity(polyline.len() - 2);
    let mut arclength = 0.0;
    for i in 1..polyline.len() {
        let (a, b) = (nodes[polyline[i - 1]], nodes[polyline[i]]);
        arclength += (b[0] - a[0]).hypot(b[1] - a[1]);
        if i == polyline.len() - 1 {
            break;
        }
        let (prev, v, next) = (polyline[i - 1], polyline[i], polyline[i + 1]);
        let minus_fan = right_fan(mesh, &owners, &incident[&v], prev, v, next)?;
        let dup = new_nodes.len();
        new_nodes.push(nodes[v]);
        for t in minus_fan {
            for slot in new_tris[t].iter_mut() {
                if *slot == v {
                    *slot = dup;
                }
            }
        }
        pairs.push(DuplicatePair {
            plus: v,
            minus: dup,
            arclength,
        });
    }

    let cracked = Mesh2D::from_parts_unchecked(new_nodes, new_tris, mesh.boundary_edges().to_vec());
    let crack = CrackPath {
        polyline: polyline.to_vec(),
        pairs,
        length: arclength,
        schedule: FrontSchedule::frozen(0.0),
    };
    Ok((cracked, crack))
}

/// Triangles around `v` on the right of the directed path `prev -> v -> next`.
fn right_fan(
    mesh: &Mesh2D,
    owners: &HashMap<(usize, usize), Vec<usize>>,
    star: &[usize],
    prev: usize,
    v: usize,
    next: usize,
) -> Result<Vec<usize>> {
    let tris = mesh.triangles();
    let nodes = mesh.nodes();
    let right_of = |a: usize, b: usize| -> Option<usize> {
        owners[&edge_key(a, b)].iter().copied().find(|&t| {
            let c = tris[t].iter().copied().find(|&x| x != a && x != b).unwrap();
            super::signed_area(nodes[a], nodes[b], nodes[c]) < 0.0
        })
    };
    let start = right_of(prev, v);
    let check = right_of(v, next);
    let (Some(start), Some(check)) = (start, check) else {
        bail!(
            Geometry,
            "cannot find the right-hand triangle at crack vertex {v}"
        );
    };

    // Flood-fill the star of v across edges (v, x) that are not crack edges.
    let in_star: HashSet<usize> = star.iter().copied().collect();
    let mut fan = vec![start];
    let mut visited: HashSet<usize> = [start].into();
    let mut k = 0;
    while k < fan.len() {
        let t = fan[k];
        k += 1;
        for &x in &tris[t] {
            if x == v || x == prev || x == next {
                continue;
            }
            for &u in &owners[&edge_key(v, x)] {
                if u != t && in_star.contains(&u) && visited.insert(u) {
                    fan.push(u);
                }
            }
        }
    }
    if !visited.contains(&check) || fan.len() == star.len() {
        bail!(
            Geometry,
            "crack polyline does not split the star of vertex {v} in two"
        );
    }
    fan.sort_unstable();
    Ok(fan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;

    fn grid_index(nx: usize, i: usize, j: usize) -> usize {
        j * (nx + 1) + i
    }

    #[test]
    fn empty_polyline_is_identity() {
        let m = build_rect_mesh(1.0, 1.0, 4, 4).unwrap();
        let (c, crack) = insert_crack(&m, &[]).unwrap();
        assert_eq!(c, m);
        assert!(crack.pairs().is_empty());
    }

    #[test]
    fn midline_crack_duplicates_interior_vertices_only() {
        let m = build_rect_mesh(1.0, 1.0, 8, 8).unwrap();
        let line: Vec<usize> = (2..=6).map(|i| grid_index(8, i, 4)).collect();
        let (c, crack) = insert_crack(&m, &line).unwrap();
        assert_eq!(crack.pairs().len(), 3);
        assert_eq!(c.n_nodes(), m.n_nodes() + 3);
        assert!((crack.length() - 0.5).abs() < 1e-15);
        let arcs: Vec<f64> = crack.pairs().iter().map(|p| p.arclength).collect();
        assert!(arcs.windows(2).all(|w| w[0] < w[1]));
        for p in crack.pairs() {
            assert_eq!(c.nodes()[p.plus], c.nodes()[p.minus]);
        }
        assert!((c.total_area() - 1.0).abs() < 1e-12);
        // triangles below the rightward crack reference the duplicates
        for (t, tri) in c.triangles().iter().enumerate() {
            let below = c.centroid(t)[1] < 0.5;
            for p in crack.pairs() {
                if tri.contains(&p.minus) {
                    assert!(below);
                }
                if tri.contains(&p.plus) {
                    assert!(!below);
                }
            }
        }
    }

    #[test]
    fn rejects_non_edge_segment() {
        let m = build_rect_mesh(1.0, 1.0, 4, 4).unwrap();
        let err = insert_crack(&m, &[grid_index(4, 1, 2), grid_index(4, 3, 2)]).unwrap_err();
        assert!(err.to_string().contains("not a mesh edge"));
    }

    #[test]
    fn rejects_self_intersection() {
        let m = build_rect_mesh(1.0, 1.0, 4, 4).unwrap();
        let g = |i, j| grid_index(4, i, j);
        let line = [g(1, 1), g(2, 1), g(2, 2), g(1, 2), g(1, 1)];
        assert!(insert_crack(&m, &line).is_err());
    }

    #[test]
    fn rejects_boundary_segment() {
        let m = build_rect_mesh(1.0, 1.0, 4, 4).unwrap();
        assert!(insert_crack(&m, &[0, 1, 2]).is_err());
    }

    #[test]
    fn schedule_eval_and_domain() {
        let s = FrontSchedule::linear(0.0, 2.0, 0.0, 1.0).unwrap();
        assert_eq!(s.eval(1.0).unwrap(), 0.5);
        assert_eq!(s.eval(2.0).unwrap(), 1.0);
        assert!(s.eval(2.5).is_err());
        assert!(s.eval(-0.1).is_err());
        assert!(FrontSchedule::new(vec![(0.0, 1.0), (1.0, 0.5)]).is_err());
        assert_eq!(FrontSchedule::frozen(0.3).eval(100.0).unwrap(), 0.3);
    }
}

//! Plain-text mesh format.
//!
//! ```text
//! # comments and blank lines are ignored
//! <n_nodes> <n_triangles> <n_boundary_edges>
//! x y                  (n_nodes lines)
//! i j k                (n_triangles lines, zero-based, counter-clockwise)
//! i j tag              (n_boundary_edges lines, tag = dirichlet | neumann)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{BoundaryTag, Mesh2D};
use crate::error::{bail, Error, Result};

impl Mesh2D {
    pub fn read_text(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (line_no, header) = lines
            .next()
            .ok_or_else(|| Error::Config("mesh file is empty".into()))?;
        let counts: Vec<usize> = parse_fields(header, line_no)?;
        let [n_nodes, n_tris, n_edges] = counts[..] else {
            bail!(Config, "line {line_no}: header must hold three counts");
        };

        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let (no, l) = next_line(&mut lines, "node")?;
            let v: Vec<f64> = parse_fields(l, no)?;
            let [x, y] = v[..] else {
                bail!(Config, "line {no}: node line needs `x y`");
            };
            nodes.push([x, y]);
        }
        let mut tris = Vec::with_capacity(n_tris);
        for _ in 0..n_tris {
            let (no, l) = next_line(&mut lines, "triangle")?;
            let v: Vec<usize> = parse_fields(l, no)?;
            let [a, b, c] = v[..] else {
                bail!(Config, "line {no}: triangle line needs `i j k`");
            };
            tris.push([a, b, c]);
        }
        let mut edges = Vec::with_capacity(n_edges);
        for _ in 0..n_edges {
            let (no, l) = next_line(&mut lines, "boundary edge")?;
            let parts: Vec<&str> = l.split_whitespace().collect();
            let [i, j, tag] = parts[..] else {
                bail!(Config, "line {no}: boundary line needs `i j tag`");
            };
            let tag = BoundaryTag::parse(tag)
                .ok_or_else(|| Error::Config(format!("line {no}: unknown tag `{tag}`")))?;
            let i = i
                .parse()
                .map_err(|_| Error::Config(format!("line {no}: bad node index")))?;
            let j = j
                .parse()
                .map_err(|_| Error::Config(format!("line {no}: bad node index")))?;
            edges.push(([i, j], tag));
        }
        if let Some((no, _)) = lines.next() {
            bail!(
                Config,
                "line {no}: trailing content after the declared counts"
            );
        }
        Mesh2D::new(nodes, tris, edges)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {}",
            self.n_nodes(),
            self.n_triangles(),
            self.boundary_edges().len()
        );
        for p in self.nodes() {
            let _ = writeln!(out, "{:?} {:?}", p[0], p[1]);
        }
        for t in self.triangles() {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        for e in self.boundary_edges() {
            let _ = writeln!(out, "{} {} {}", e.nodes[0], e.nodes[1], e.tag.as_str());
        }
        out
    }
}

fn next_line<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    what: &str,
) -> Result<(usize, &'a str)> {
    lines
        .next()
        .ok_or_else(|| Error::Config(format!("mesh file ended early while reading a {what} line")))
}

fn parse_fields<T: std::str::FromStr>(line: &str, no: usize) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("line {no}: cannot parse `{s}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use crate::mesh::build_rect_mesh;

    use super::*;

    #[test]
    fn text_roundtrip() {
        let m = build_rect_mesh(2.0, 1.0, 3, 2)
            .unwrap()
            .retag_boundary(|mid, _| {
                if mid[0] == 0.0 {
                    BoundaryTag::Dirichlet
                } else {
                    BoundaryTag::Neumann
                }
            });
        let back = Mesh2D::parse_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn reports_short_file() {
        let err = Mesh2D::parse_text("3 1 3\n0 0\n1 0\n").unwrap_err();
        assert!(err.to_string().contains("ended early"));
    }
}

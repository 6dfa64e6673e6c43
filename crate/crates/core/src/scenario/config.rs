//! Scenario files: TOML with a fixed, versioned schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::assembly::{DataSpec, FieldExpr, InitialStrain};
use crate::error::{bail, Error, Result};
use crate::expr::{Expr, Table, Tables};
use crate::fe::{FeSpace, Kinematics};
use crate::linalg::SolverKind;
use crate::materials::{ElasticTensor, MaterialField};
use crate::memory::{past_history_to_w0, w0_from_displacement, PastHistory};
use crate::mesh::{build_rect_mesh, insert_crack, BoundaryTag, FrontSchedule, Mesh2D};
use crate::problem::Problem;

/// Schema version understood by this build.
pub const FORMAT_VERSION: u32 = 1;

/// Past-history window in units of `beta` when none is given.
pub const DEFAULT_WINDOW_BETAS: f64 = 20.0;

/// Default constant `C` of the continuous-inequality tolerance `C tau`.
pub const DEFAULT_SLACK_PER_TAU: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub format_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_mode")]
    pub mode: String,
    pub beta: f64,
    pub horizon: f64,
    pub steps: usize,
    #[serde(default = "default_solver")]
    pub solver: String,
    #[serde(default = "default_true")]
    pub checks: bool,
    #[serde(default = "default_slack")]
    pub slack_per_tau: f64,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub crack: Option<CrackConfig>,
    pub materials: MaterialsConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub tables: BTreeMap<String, TableConfig>,
    #[serde(default)]
    pub past_history: Option<PastHistoryConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_mode() -> String {
    "antiplane".into()
}

fn default_solver() -> String {
    "direct".into()
}

fn default_true() -> bool {
    true
}

fn default_slack() -> f64 {
    DEFAULT_SLACK_PER_TAU
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(default)]
    pub rect: Option<RectConfig>,
    #[serde(default)]
    pub mesh: Option<PathBuf>,
    /// Rectangle sides carrying a traction condition; the rest are Dirichlet.
    #[serde(default)]
    pub neumann_sides: Vec<Side>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectConfig {
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrackConfig {
    /// Node indices of the polyline.
    #[serde(default)]
    pub polyline: Option<Vec<usize>>,
    /// Corner points; every mesh node on the segments becomes a vertex.
    #[serde(default)]
    pub path: Option<Vec<[f64; 2]>>,
    /// Knots `[t, s]` of the front position; `[[0, 0]]` when absent.
    #[serde(default)]
    pub schedule: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Isotropic {
    #[serde(default)]
    pub lambda: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsConfig {
    #[serde(default)]
    pub elastic: Option<Isotropic>,
    #[serde(default)]
    pub viscous: Option<Isotropic>,
    /// Boxes overriding the base tensors for elements whose centroid lies inside.
    #[serde(default)]
    pub regions: Vec<RegionConfig>,
    /// Per-element tensor table file.
    #[serde(default)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    #[serde(default)]
    pub elastic: Option<Isotropic>,
    #[serde(default)]
    pub viscous: Option<Isotropic>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub f: Vec<String>,
    #[serde(default, rename = "F")]
    pub big_f: Vec<String>,
    #[serde(default)]
    pub z: Vec<String>,
    #[serde(default, rename = "N")]
    pub neumann: Option<Vec<String>>,
    #[serde(default)]
    pub u0: Vec<String>,
    #[serde(default)]
    pub u1: Vec<String>,
    #[serde(default)]
    pub w0: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub file: PathBuf,
    /// 1-based column after the time column.
    #[serde(default = "first_column")]
    pub column: usize,
}

fn first_column() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PastHistoryConfig {
    /// Displacement history expressions in `(t, x, y)`, `t <= 0`.
    #[serde(default)]
    pub u: Option<Vec<String>>,
    /// Spatially uniform strain history, rows `t, components...`.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// Length of the window `[-window, 0]`; `20 beta` when absent.
    #[serde(default)]
    pub window: Option<f64>,
    /// Add the fading load generated by the history to `F`.
    #[serde(default = "default_true")]
    pub forcing: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Snapshot times; the final time is always written.
    #[serde(default)]
    pub snapshots: Vec<f64>,
}

/// Parses and checks the schema; file references are resolved later.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig =
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
    if cfg.format_version != FORMAT_VERSION {
        bail!(
            Config,
            "format_version {} is not supported (expected {FORMAT_VERSION})",
            cfg.format_version
        );
    }
    if !(cfg.beta > 0.0) || !cfg.beta.is_finite() {
        bail!(Config, "`beta` must be positive, got {}", cfg.beta);
    }
    if !(cfg.horizon > 0.0) || !cfg.horizon.is_finite() {
        bail!(Config, "`horizon` must be positive, got {}", cfg.horizon);
    }
    if cfg.steps < 2 {
        bail!(Config, "`steps` must be at least 2, got {}", cfg.steps);
    }
    if !(cfg.slack_per_tau >= 0.0) {
        bail!(Config, "`slack_per_tau` must be nonnegative");
    }
    kinematics(&cfg)?;
    solver(&cfg)?;
    match (&cfg.geometry.rect, &cfg.geometry.mesh) {
        (Some(_), None) => {}
        (None, Some(_)) => {
            if !cfg.geometry.neumann_sides.is_empty() {
                bail!(
                    Config,
                    "`geometry.neumann_sides` applies to rectangles only"
                );
            }
        }
        _ => bail!(Config, "`geometry` needs exactly one of `rect` or `mesh`"),
    }
    if let Some(c) = &cfg.crack {
        if c.polyline.is_some() == c.path.is_some() {
            bail!(Config, "`crack` needs exactly one of `polyline` or `path`");
        }
    }
    let m = &cfg.materials;
    if m.table.is_some() {
        if m.elastic.is_some() || m.viscous.is_some() || !m.regions.is_empty() {
            bail!(
                Config,
                "`materials.table` excludes `elastic`, `viscous` and `regions`"
            );
        }
    } else {
        if m.elastic.is_none() {
            bail!(Config, "missing `materials.elastic`");
        }
        if m.viscous.is_none() {
            bail!(Config, "missing `materials.viscous`");
        }
    }
    if let Some(p) = &cfg.past_history {
        if p.u.is_some() == p.csv.is_some() {
            bail!(Config, "`past_history` needs exactly one of `u` or `csv`");
        }
        if !cfg.data.w0.is_empty() {
            bail!(
                Config,
                "`data.w0` and `past_history` are mutually exclusive"
            );
        }
        if let Some(w) = p.window {
            if !(w > 0.0) {
                bail!(Config, "`past_history.window` must be positive");
            }
        }
    }
    Ok(cfg)
}

fn kinematics(cfg: &ScenarioConfig) -> Result<Kinematics> {
    Kinematics::parse(&cfg.mode).ok_or_else(|| {
        Error::Config(format!(
            "`mode` must be antiplane or planar, got `{}`",
            cfg.mode
        ))
    })
}

fn solver(cfg: &ScenarioConfig) -> Result<SolverKind> {
    SolverKind::parse(&cfg.solver).ok_or_else(|| {
        Error::Config(format!(
            "`solver` must be direct or cg, got `{}`",
            cfg.solver
        ))
    })
}

impl ScenarioConfig {
    pub fn kinematics(&self) -> Kinematics {
        kinematics(self).expect("checked at parse time")
    }

    pub fn solver_kind(&self) -> SolverKind {
        solver(self).expect("checked at parse time")
    }

    /// Builds the problem; relative file names are taken from `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Problem> {
        let kin = self.kinematics();
        let mesh = self.build_mesh(base_dir)?;
        let (mesh, crack) = match &self.crack {
            None => (mesh, None),
            Some(c) => {
                let polyline = match (&c.polyline, &c.path) {
                    (Some(p), _) => p.clone(),
                    (None, Some(path)) => polyline_from_path(&mesh, path)?,
                    (None, None) => unreachable!("checked at parse time"),
                };
                let (mesh, crack) = insert_crack(&mesh, &polyline)?;
                let schedule = match &c.schedule {
                    None => FrontSchedule::frozen(0.0),
                    Some(k) => FrontSchedule::new(k.iter().map(|&[t, s]| (t, s)).collect())?,
                };
                (mesh, Some(crack.with_schedule(schedule)))
            }
        };
        let materials = self.build_materials(&mesh, kin, base_dir)?;
        let tables = self.build_tables(base_dir)?;
        let mut data = self.build_data(kin, &tables)?;
        if let Some(p) = &self.past_history {
            let fe = FeSpace::new(&mesh, kin)?;
            let window = p.window.unwrap_or(DEFAULT_WINDOW_BETAS * self.beta);
            let w0 = match (&p.u, &p.csv) {
                (Some(u), _) => {
                    let u_p = field(u, "past_history.u", kin.ncomp(), &tables)?;
                    w0_from_displacement(&mesh, &fe, &u_p, self.beta, window)?
                }
                (None, Some(path)) => {
                    let hist =
                        PastHistory::read_csv(&base_dir.join(path), kin, mesh.n_triangles())?;
                    let mut m = materials.clone();
                    m.validate()?;
                    past_history_to_w0(&hist.truncated(window)?, &fe, &m).0
                }
                (None, None) => unreachable!("checked at parse time"),
            };
            data.w0 = InitialStrain::Field(w0);
            data.history_forcing = p.forcing;
        }
        Ok(Problem::new(mesh, crack, materials, data, self.horizon)?
            .with_solver(self.solver_kind()))
    }

    fn build_mesh(&self, base_dir: &Path) -> Result<Mesh2D> {
        if let Some(path) = &self.geometry.mesh {
            return Mesh2D::read_text(&base_dir.join(path));
        }
        let r = self.geometry.rect.expect("checked at parse time");
        let mesh = build_rect_mesh(r.width, r.height, r.nx, r.ny)?;
        let sides = self.geometry.neumann_sides.clone();
        let tol = 1e-9 * r.width.max(r.height);
        Ok(mesh.retag_boundary(|a, b| {
            let on = |s: Side| match s {
                Side::Left => a[0].abs() < tol && b[0].abs() < tol,
                Side::Right => (a[0] - r.width).abs() < tol && (b[0] - r.width).abs() < tol,
                Side::Bottom => a[1].abs() < tol && b[1].abs() < tol,
                Side::Top => (a[1] - r.height).abs() < tol && (b[1] - r.height).abs() < tol,
            };
            if sides.iter().any(|&s| on(s)) {
                BoundaryTag::Neumann
            } else {
                BoundaryTag::Dirichlet
            }
        }))
    }

    fn build_materials(
        &self,
        mesh: &Mesh2D,
        kin: Kinematics,
        base_dir: &Path,
    ) -> Result<MaterialField> {
        let m = &self.materials;
        if let Some(path) = &m.table {
            let (a, b) = read_tensor_table(&base_dir.join(path), kin, mesh.n_triangles())?;
            return MaterialField::new(kin, a, b, self.beta);
        }
        let iso = |i: &Isotropic| ElasticTensor::isotropic(kin, i.lambda, i.mu);
        let base_a = iso(&m.elastic.expect("checked at parse time"))?;
        let base_b = iso(&m.viscous.expect("checked at parse time"))?;
        let mut a = vec![base_a; mesh.n_triangles()];
        let mut b = vec![base_b; mesh.n_triangles()];
        for r in &m.regions {
            let (ra, rb) = (
                r.elastic.as_ref().map(iso).transpose()?,
                r.viscous.as_ref().map(iso).transpose()?,
            );
            for e in 0..mesh.n_triangles() {
                let c = mesh.centroid(e);
                if c[0] >= r.xmin && c[0] <= r.xmax && c[1] >= r.ymin && c[1] <= r.ymax {
                    if let Some(t) = &ra {
                        a[e] = *t;
                    }
                    if let Some(t) = &rb {
                        b[e] = *t;
                    }
                }
            }
        }
        MaterialField::new(kin, a, b, self.beta)
    }

    fn build_tables(&self, base_dir: &Path) -> Result<Tables> {
        let mut out = Tables::new();
        for (name, t) in &self.tables {
            let table = Table::read_csv(name, &base_dir.join(&t.file), t.column)?;
            out.insert(name.clone(), Arc::new(table));
        }
        Ok(out)
    }

    fn build_data(&self, kin: Kinematics, tables: &Tables) -> Result<DataSpec> {
        let nc = kin.ncomp();
        let sd = kin.strain_dim();
        let d = &self.data;
        Ok(DataSpec {
            f: field(&d.f, "data.f", nc, tables)?,
            big_f: field(&d.big_f, "data.F", sd, tables)?,
            z: field(&d.z, "data.z", nc, tables)?,
            neumann: d
                .neumann
                .as_ref()
                .map(|n| field(n, "data.N", nc, tables))
                .transpose()?,
            u0: field(&d.u0, "data.u0", nc, tables)?,
            u1: field(&d.u1, "data.u1", nc, tables)?,
            w0: InitialStrain::Expr(field(&d.w0, "data.w0", sd, tables)?),
            history_forcing: false,
        })
    }
}

/// Empty lists stand for zero.
fn field(src: &[String], key: &str, n: usize, tables: &Tables) -> Result<FieldExpr> {
    if src.is_empty() {
        return Ok(FieldExpr::zero(n));
    }
    if src.len() != n {
        bail!(Config, "`{key}` needs {n} component(s), got {}", src.len());
    }
    let comps = src
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Expr::parse(s, tables).map_err(|e| Error::Config(format!("`{key}[{i}]`: {e}")))
        })
        .collect::<Result<_>>()?;
    Ok(FieldExpr::new(comps))
}

/// Walks the segments between consecutive points and collects the mesh nodes
/// lying on them, in order.
pub fn polyline_from_path(mesh: &Mesh2D, points: &[[f64; 2]]) -> Result<Vec<usize>> {
    if points.len() < 2 {
        bail!(Config, "crack path needs at least two points");
    }
    let scale = mesh
        .nodes()
        .iter()
        .fold(0.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()))
        .max(1.0);
    let tol = 1e-9 * scale;
    for p in points {
        let q = mesh.nodes()[mesh.nearest_node(*p)];
        if (q[0] - p[0]).hypot(q[1] - p[1]) >= tol {
            bail!(
                Geometry,
                "crack path point ({}, {}) is not a mesh node",
                p[0],
                p[1]
            );
        }
    }
    let mut out: Vec<usize> = Vec::new();
    for seg in points.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let d = [b[0] - a[0], b[1] - a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        if len2 == 0.0 {
            bail!(Config, "crack path has a repeated point");
        }
        let mut on: Vec<(f64, usize)> = mesh
            .nodes()
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let s = ((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2;
                let q = [a[0] + s * d[0] - p[0], a[1] + s * d[1] - p[1]];
                let dist = q[0].hypot(q[1]);
                (dist < tol && s > -tol && s < 1.0 + tol).then_some((s, i))
            })
            .collect();
        on.sort_by(|x, y| x.0.total_cmp(&y.0));
        for (_, i) in on {
            if out.last() != Some(&i) {
                out.push(i);
            }
        }
    }
    if out.len() < 2 {
        bail!(Geometry, "crack path does not pass through mesh nodes");
    }
    Ok(out)
}

/// Reads a per-element tensor table:
///
/// ```text
/// # element  A (dim x dim, row-major)  B (dim x dim, row-major)
/// 0  1 0  0 1   0.5 0  0 0.5
/// ```
///
/// Entries are in Mandel coordinates; `dim` is 2 in antiplane and 3 in planar
/// mode. Every element appears exactly once.
pub fn read_tensor_table(
    path: &Path,
    kin: Kinematics,
    n_elements: usize,
) -> Result<(Vec<ElasticTensor>, Vec<ElasticTensor>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dim = kin.strain_dim();
    let mut a: Vec<Option<ElasticTensor>> = vec![None; n_elements];
    let mut b: Vec<Option<ElasticTensor>> = vec![None; n_elements];
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |m: &str| Error::Config(format!("{}: line {}: {m}", path.display(), no + 1));
        if fields.len() != 1 + 2 * dim * dim {
            return Err(err(&format!(
                "expected an element index and {} entries",
                2 * dim * dim
            )));
        }
        let e: usize = fields[0].parse().map_err(|_| err("bad element index"))?;
        if e >= n_elements {
            return Err(err(&format!("element {e} out of range")));
        }
        if a[e].is_some() {
            return Err(err(&format!("element {e} listed twice")));
        }
        let vals: Vec<f64> = fields[1..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err("not a number"))?;
        a[e] = Some(ElasticTensor::from_mandel(kin, &vals[..dim * dim])?);
        b[e] = Some(ElasticTensor::from_mandel(kin, &vals[dim * dim..])?);
    }
    let collect = |v: Vec<Option<ElasticTensor>>| -> Result<Vec<ElasticTensor>> {
        v.into_iter()
            .enumerate()
            .map(|(e, t)| {
                t.ok_or_else(|| Error::Config(format!("{}: element {e} missing", path.display())))
            })
            .collect()
    };
    Ok((collect(a)?, collect(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
format_version = 1
beta = 1.0
horizon = 1.0
steps = 8

[geometry]
rect = { width = 1.0, height = 1.0, nx = 2, ny = 2 }

[materials]
elastic = { mu = 1.0 }
viscous = { mu = 0.5 }
"#;

    #[test]
    fn minimal_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.kinematics(), Kinematics::Antiplane);
        assert_eq!(cfg.solver_kind(), SolverKind::Direct);
        assert!(cfg.checks);
        assert_eq!(cfg.slack_per_tau, DEFAULT_SLACK_PER_TAU);
        assert!(cfg.crack.is_none());
        let p = cfg.build(Path::new(".")).unwrap();
        assert_eq!(p.mesh().n_nodes(), 9);
    }

    #[test]
    fn missing_beta_is_named() {
        let text = MINIMAL.replace("beta = 1.0\n", "");
        let msg = parse_config(&text).unwrap_err().to_string();
        assert!(msg.contains("beta"), "{msg}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINIMAL.replace("steps = 8", "steps = 8\nstep = 3");
        assert!(matches!(parse_config(&text), Err(Error::Config(_))));
    }

    #[test]
    fn wrong_version_rejected() {
        let text = MINIMAL.replace("format_version = 1", "format_version = 2");
        assert!(parse_config(&text)
            .unwrap_err()
            .to_string()
            .contains("format_version"));
    }

    #[test]
    fn bad_expression_names_key() {
        let text = format!("{MINIMAL}\n[data]\nf = [\"sin(\"]\n");
        let cfg = parse_config(&text).unwrap();
        let msg = cfg.build(Path::new(".")).unwrap_err().to_string();
        assert!(msg.contains("data.f[0]"), "{msg}");
    }

    #[test]
    fn path_walks_grid_nodes() {
        let mesh = build_rect_mesh(1.0, 1.0, 4, 4).unwrap();
        let p = polyline_from_path(&mesh, &[[0.25, 0.5], [0.75, 0.5], [0.75, 0.75]]).unwrap();
        let idx = |i: usize, j: usize| j * 5 + i;
        assert_eq!(p, vec![idx(1, 2), idx(2, 2), idx(3, 2), idx(3, 3)]);
    }

    #[test]
    fn tensor_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        std::fs::write(&path, "# e A B\n1 2 0 0 2 1 0 0 1\n0 1 0 0 1 3 0 0 3\n").unwrap();
        let (a, b) = read_tensor_table(&path, Kinematics::Antiplane, 2).unwrap();
        assert_eq!(a[1].entry(0, 0), 2.0);
        assert_eq!(b[0].entry(1, 1), 3.0);
        std::fs::write(&path, "0 1 0 0 1 3 0 0 3\n").unwrap();
        assert!(read_tensor_table(&path, Kinematics::Antiplane, 2).is_err());
    }
}

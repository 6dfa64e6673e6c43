use std::sync::Arc;

use super::{boundary_load, EdgeLoad};
use crate::error::{bail, Error, Result};
use crate::expr::{Expr, Table};
use crate::fe::{FeSpace, Kinematics, StrainField};
use crate::materials::{MaterialField, Modulus, StrainTensor};
use crate::mesh::{BoundaryTag, Mesh2D};

/// Abscissae and weights of the 4-point Gauss-Legendre rule on `[0, 1]`.
pub(crate) const GAUSS4: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_93),
    (0.330_009_478_207_571_9, 0.326_072_577_431_273_07),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_07),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_93),
];

/// Panels of the composite Gauss rule per time step.
const GAUSS_PANELS: usize = 4;

/// A vector- or tensor-valued function of `(t, x, y)`, one expression per
/// component. Strain-like fields list ordinary tensor components:
/// `(x, y)` in antiplane mode and `(xx, yy, xy)` in planar mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldExpr {
    comps: Vec<Expr>,
}

impl FieldExpr {
    pub fn new(comps: Vec<Expr>) -> Self {
        FieldExpr { comps }
    }

    pub fn zero(n: usize) -> Self {
        FieldExpr {
            comps: vec![Expr::constant(0.0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.comps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comps.is_empty()
    }

    pub fn components(&self) -> &[Expr] {
        &self.comps
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(Expr::is_zero)
    }

    pub fn depends_on_t(&self) -> bool {
        self.comps.iter().any(Expr::depends_on_t)
    }

    pub fn diff_t(&self) -> Self {
        FieldExpr {
            comps: self.comps.iter().map(Expr::diff_t).collect(),
        }
    }

    pub fn eval(&self, t: f64, p: [f64; 2]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (o, e) in out.iter_mut().zip(&self.comps) {
            *o = e.eval(t, p[0], p[1]);
        }
        out
    }

    fn tables(&self) -> Vec<Arc<Table>> {
        self.comps.iter().flat_map(Expr::tables).collect()
    }
}

/// Initial internal variable.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialStrain {
    /// Given by expressions evaluated at element centroids at `t = 0`.
    Expr(FieldExpr),
    /// Given elementwise, e.g. reduced from a past history.
    Field(StrainField),
}

/// Problem data as functions of time and space.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    /// Body force, displacement components.
    pub f: FieldExpr,
    /// Tensor load acting on the strain.
    pub big_f: FieldExpr,
    /// Dirichlet datum, extended to the whole domain.
    pub z: FieldExpr,
    /// Optional traction on Neumann edges.
    pub neumann: Option<FieldExpr>,
    pub u0: FieldExpr,
    pub u1: FieldExpr,
    pub w0: InitialStrain,
    /// Add the fading load `e^{-t/beta} B w0` to the tensor load, as produced
    /// by reducing a past history to `w0`.
    pub history_forcing: bool,
}

impl DataSpec {
    /// All data identically zero.
    pub fn zero(kinematics: Kinematics) -> Self {
        let nc = kinematics.ncomp();
        let sd = kinematics.strain_dim();
        DataSpec {
            f: FieldExpr::zero(nc),
            big_f: FieldExpr::zero(sd),
            z: FieldExpr::zero(nc),
            neumann: None,
            u0: FieldExpr::zero(nc),
            u1: FieldExpr::zero(nc),
            w0: InitialStrain::Expr(FieldExpr::zero(sd)),
            history_forcing: false,
        }
    }

    pub fn check_shapes(&self, kinematics: Kinematics) -> Result<()> {
        let nc = kinematics.ncomp();
        let sd = kinematics.strain_dim();
        let mut checks = vec![
            ("f", self.f.len(), nc),
            ("F", self.big_f.len(), sd),
            ("z", self.z.len(), nc),
            ("u0", self.u0.len(), nc),
            ("u1", self.u1.len(), nc),
        ];
        if let Some(n) = &self.neumann {
            checks.push(("N", n.len(), nc));
        }
        if let InitialStrain::Expr(w) = &self.w0 {
            checks.push(("w0", w.len(), sd));
        }
        for (name, got, want) in checks {
            if got != want {
                bail!(
                    Config,
                    "`{name}` needs {want} component(s) in {} mode, got {got}",
                    kinematics.as_str()
                );
            }
        }
        Ok(())
    }

    fn tables(&self) -> Vec<Arc<Table>> {
        let mut out = Vec::new();
        for e in [&self.f, &self.big_f, &self.z, &self.u0, &self.u1]
            .into_iter()
            .chain(self.neumann.as_ref())
        {
            out.extend(e.tables());
        }
        if let InitialStrain::Expr(w) = &self.w0 {
            out.extend(w.tables());
        }
        out
    }
}

fn to_mandel(kin: Kinematics, v: [f64; 3]) -> [f64; 3] {
    let s = match kin {
        Kinematics::Antiplane => StrainTensor::Antiplane([v[0], v[1]]),
        Kinematics::Planar => StrainTensor::Planar {
            xx: v[0],
            yy: v[1],
            xy: v[2],
        },
    };
    s.to_mandel()
}

/// Data sampled on the uniform grid `t_k = k tau`, `k = 0..=n`.
///
/// Body forces are interval averages of the nodal interpolant, tensor loads
/// and Dirichlet data are point samples, and `h_k = e^{-t_k/beta} B w0`.
/// Values are produced on demand from the expressions.
#[derive(Debug, Clone)]
pub struct DataSamples {
    kinematics: Kinematics,
    tau: f64,
    n: usize,
    beta: f64,
    spec: DataSpec,
    big_f_dot: FieldExpr,
    z_dot: FieldExpr,
    z_ddot: FieldExpr,
    nodes: Vec<[f64; 2]>,
    centroids: Vec<[f64; 2]>,
    neumann_edges: Vec<(usize, [f64; 2], [f64; 2])>,
    mesh: Arc<Mesh2D>,
    w0: StrainField,
    bw0: StrainField,
}

impl DataSamples {
    pub fn new(
        spec: &DataSpec,
        mesh: Arc<Mesh2D>,
        fe: &FeSpace,
        materials: &MaterialField,
        horizon: f64,
        n: usize,
    ) -> Result<Self> {
        if n == 0 {
            bail!(Config, "number of steps must be at least 1");
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            bail!(Config, "time horizon must be positive, got {horizon}");
        }
        let kin = fe.kinematics();
        spec.check_shapes(kin)?;
        let tau = horizon / n as f64;
        for tab in spec.tables() {
            let (lo, hi) = tab.range();
            let slack = 1e-9 * horizon;
            if lo > slack || hi < horizon - slack {
                return Err(Error::Sampling(format!(
                    "table `{}` covers [{lo}, {hi}] but data are needed on [0, {horizon}]",
                    tab.name()
                )));
            }
            if tab.max_spacing() > tau * (1.0 + 1e-9) {
                return Err(Error::Sampling(format!(
                    "table `{}` has sample spacing {} coarser than the time step {tau}",
                    tab.name(),
                    tab.max_spacing()
                )));
            }
        }
        let centroids: Vec<[f64; 2]> = (0..mesh.n_triangles()).map(|e| mesh.centroid(e)).collect();
        let w0 = match &spec.w0 {
            InitialStrain::Expr(w) => {
                StrainField::from_fn(centroids.len(), kin.strain_dim(), |e| {
                    to_mandel(kin, w.eval(0.0, centroids[e]))
                })
            }
            InitialStrain::Field(f) => {
                if f.n_elements() != centroids.len() || f.dim() != kin.strain_dim() {
                    bail!(
                        Contract,
                        "initial internal variable does not match the mesh"
                    );
                }
                f.clone()
            }
        };
        let bw0 = fe.tensor_apply(materials.tensors(Modulus::Viscous), &w0);
        let neumann_edges = if spec.neumann.is_some() {
            mesh.boundary_edges()
                .iter()
                .enumerate()
                .filter(|(_, e)| e.tag == BoundaryTag::Neumann)
                .map(|(i, e)| (i, mesh.nodes()[e.nodes[0]], mesh.nodes()[e.nodes[1]]))
                .collect()
        } else {
            Vec::new()
        };
        Ok(DataSamples {
            kinematics: kin,
            tau,
            n,
            beta: materials.beta(),
            big_f_dot: spec.big_f.diff_t(),
            z_dot: spec.z.diff_t(),
            z_ddot: spec.z.diff_t().diff_t(),
            spec: spec.clone(),
            nodes: mesh.nodes().to_vec(),
            centroids,
            neumann_edges,
            mesh,
            w0,
            bw0,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.tau * self.n as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n {
            self.horizon()
        } else {
            k as f64 * self.tau
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn spec(&self) -> &DataSpec {
        &self.spec
    }

    pub fn w0(&self) -> &StrainField {
        &self.w0
    }

    /// `B w0`.
    pub fn bw0(&self) -> &StrainField {
        &self.bw0
    }

    fn nodal(&self, e: &FieldExpr, t: f64) -> Vec<f64> {
        let nc = self.kinematics.ncomp();
        if e.is_zero() {
            return vec![0.0; self.nodes.len() * nc];
        }
        let mut out = Vec::with_capacity(self.nodes.len() * nc);
        for &p in &self.nodes {
            out.extend_from_slice(&e.eval(t, p)[..nc]);
        }
        out
    }

    fn elementwise(&self, e: &FieldExpr, t: f64) -> StrainField {
        let sd = self.kinematics.strain_dim();
        if e.is_zero() {
            return StrainField::zeros(self.centroids.len(), sd);
        }
        StrainField::from_fn(self.centroids.len(), sd, |el| {
            to_mandel(self.kinematics, e.eval(t, self.centroids[el]))
        })
    }

    /// Nodal values of the body force at time `t`.
    pub fn f_at(&self, t: f64) -> Vec<f64> {
        self.nodal(&self.spec.f, t)
    }

    /// Average of the body force over `((k-1) tau, k tau)`, `k >= 1`, by a
    /// composite 4-point Gauss rule.
    pub fn f_avg(&self, k: usize) -> Vec<f64> {
        assert!(
            k >= 1 && k <= self.n,
            "body-force average needs 1 <= k <= n"
        );
        if !self.spec.f.depends_on_t() {
            return self.f_at(self.time(k));
        }
        let a = self.time(k - 1);
        let h = (self.time(k) - a) / GAUSS_PANELS as f64;
        let mut acc = vec![0.0; self.nodes.len() * self.kinematics.ncomp()];
        for panel in 0..GAUSS_PANELS {
            for (x, w) in GAUSS4 {
                let t = a + (panel as f64 + x) * h;
                for (s, v) in acc.iter_mut().zip(self.f_at(t)) {
                    *s += w * v / GAUSS_PANELS as f64;
                }
            }
        }
        acc
    }

    /// `h(t) = e^{-t/beta} B w0`.
    pub fn h_at(&self, t: f64) -> StrainField {
        self.bw0.scaled((-t / self.beta).exp())
    }

    pub fn h(&self, k: usize) -> StrainField {
        self.h_at(self.time(k))
    }

    /// Tensor load at time `t`, including the fading history load if enabled.
    pub fn big_f_at(&self, t: f64) -> StrainField {
        let mut out = self.elementwise(&self.spec.big_f, t);
        if self.spec.history_forcing {
            out.axpy(1.0, &self.h_at(t));
        }
        out
    }

    pub fn big_f(&self, k: usize) -> StrainField {
        self.big_f_at(self.time(k))
    }

    /// `F - h` at step `k`: the user tensor load alone when the history load
    /// is enabled, computed without cancellation.
    pub fn net_strain_load(&self, k: usize) -> StrainField {
        let t = self.time(k);
        let user = self.elementwise(&self.spec.big_f, t);
        if self.spec.history_forcing {
            user
        } else {
            StrainField::lin_comb(1.0, &user, -1.0, &self.h_at(t))
        }
    }

    pub fn big_f_dot_at(&self, t: f64) -> StrainField {
        let mut out = self.elementwise(&self.big_f_dot, t);
        if self.spec.history_forcing {
            out.axpy(-1.0 / self.beta, &self.h_at(t));
        }
        out
    }

    pub fn z_at(&self, t: f64) -> Vec<f64> {
        self.nodal(&self.spec.z, t)
    }

    pub fn z_dot_at(&self, t: f64) -> Vec<f64> {
        self.nodal(&self.z_dot, t)
    }

    pub fn z_ddot_at(&self, t: f64) -> Vec<f64> {
        self.nodal(&self.z_ddot, t)
    }

    pub fn z(&self, k: usize) -> Vec<f64> {
        self.z_at(self.time(k))
    }

    /// `dz_k = (z_k - z_{k-1}) / tau` for `k >= 1` and `dz_0 = z'(0)`.
    pub fn dz(&self, k: usize) -> Vec<f64> {
        if k == 0 {
            return self.z_dot_at(0.0);
        }
        let (a, b) = (self.z(k - 1), self.z(k));
        b.iter().zip(&a).map(|(p, q)| (p - q) / self.tau).collect()
    }

    /// `(dz_k - dz_{k-1}) / tau`, `k >= 1`.
    pub fn ddz(&self, k: usize) -> Vec<f64> {
        let (a, b) = (self.dz(k - 1), self.dz(k));
        b.iter().zip(&a).map(|(p, q)| (p - q) / self.tau).collect()
    }

    /// Boundary load vector of the traction at time `t`, if any.
    pub fn neumann_at(&self, t: f64) -> Result<Option<Vec<f64>>> {
        let Some(nexpr) = &self.spec.neumann else {
            return Ok(None);
        };
        let loads: Vec<EdgeLoad> = self
            .neumann_edges
            .iter()
            .map(|&(edge, a, b)| {
                let va = nexpr.eval(t, a);
                let vb = nexpr.eval(t, b);
                EdgeLoad {
                    edge,
                    at_start: [va[0], va[1]],
                    at_end: [vb[0], vb[1]],
                }
            })
            .collect();
        boundary_load(&self.mesh, self.kinematics, &loads).map(Some)
    }

    pub fn neumann(&self, k: usize) -> Result<Option<Vec<f64>>> {
        self.neumann_at(self.time(k))
    }

    pub fn u0(&self) -> Vec<f64> {
        self.nodal(&self.spec.u0, 0.0)
    }

    pub fn u1(&self) -> Vec<f64> {
        self.nodal(&self.spec.u1, 0.0)
    }
}

//! Piecewise-linear finite elements on a triangulation.
//!
//! Strains are constant per triangle and stored in Mandel coordinates (see
//! [`crate::materials`]); all integrals use the exact one-point rule for
//! elementwise constants and the consistent P1 mass matrix.

use rayon::prelude::*;

use crate::error::{bail, Result};
use crate::materials::ElasticTensor;
use crate::mesh::Mesh2D;

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Displacement model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kinematics {
    /// Scalar out-of-plane displacement; the strain is its gradient.
    Antiplane,
    /// In-plane vector displacement; the strain is the symmetric gradient.
    Planar,
}

impl Kinematics {
    /// Displacement components per node.
    pub fn ncomp(self) -> usize {
        match self {
            Kinematics::Antiplane => 1,
            Kinematics::Planar => 2,
        }
    }

    /// Length of a strain vector in Mandel coordinates.
    pub fn strain_dim(self) -> usize {
        match self {
            Kinematics::Antiplane => 2,
            Kinematics::Planar => 3,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "antiplane" => Some(Kinematics::Antiplane),
            "planar" => Some(Kinematics::Planar),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Kinematics::Antiplane => "antiplane",
            Kinematics::Planar => "planar",
        }
    }
}

/// One Mandel strain vector per element.
#[derive(Debug, Clone, PartialEq)]
pub struct StrainField {
    dim: usize,
    data: Vec<f64>,
}

impl StrainField {
    pub fn zeros(n_elements: usize, dim: usize) -> Self {
        StrainField {
            dim,
            data: vec![0.0; n_elements * dim],
        }
    }

    pub fn from_fn(n_elements: usize, dim: usize, mut f: impl FnMut(usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(n_elements * dim);
        for e in 0..n_elements {
            data.extend_from_slice(&f(e)[..dim]);
        }
        StrainField { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn get(&self, e: usize) -> &[f64] {
        &self.data[e * self.dim..(e + 1) * self.dim]
    }

    pub fn get_mut(&mut self, e: usize) -> &mut [f64] {
        &mut self.data[e * self.dim..(e + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &StrainField) {
        debug_assert_eq!(self.data.len(), x.data.len());
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
    }

    /// `a * x + b * y`.
    pub fn lin_comb(a: f64, x: &StrainField, b: f64, y: &StrainField) -> StrainField {
        debug_assert_eq!(x.data.len(), y.data.len());
        StrainField {
            dim: x.dim,
            data: x
                .data
                .iter()
                .zip(&y.data)
                .map(|(p, q)| a * p + b * q)
                .collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> StrainField {
        StrainField {
            dim: self.dim,
            data: self.data.iter().map(|v| a * v).collect(),
        }
    }

    /// Largest entry in absolute value.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Element geometry of a P1 space on a fixed mesh.
#[derive(Debug, Clone)]
pub struct FeSpace {
    kinematics: Kinematics,
    n_nodes: usize,
    triangles: Vec<[usize; 3]>,
    areas: Vec<f64>,
    grads: Vec<[[f64; 2]; 3]>,
}

impl FeSpace {
    pub fn new(mesh: &Mesh2D, kinematics: Kinematics) -> Result<Self> {
        let mut areas = Vec::with_capacity(mesh.n_triangles());
        let mut grads = Vec::with_capacity(mesh.n_triangles());
        for (e, tri) in mesh.triangles().iter().enumerate() {
            let [p0, p1, p2] = tri.map(|i| mesh.nodes()[i]);
            let area = mesh.triangle_area(e);
            if !(area > 0.0) {
                bail!(Geometry, "triangle {e} is degenerate");
            }
            let inv = 1.0 / (2.0 * area);
            grads.push([
                [(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv],
                [(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv],
                [(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv],
            ]);
            areas.push(area);
        }
        Ok(FeSpace {
            kinematics,
            n_nodes: mesh.n_nodes(),
            triangles: mesh.triangles().to_vec(),
            areas,
            grads,
        })
    }

    pub fn kinematics(&self) -> Kinematics {
        self.kinematics
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_dofs(&self) -> usize {
        self.n_nodes * self.kinematics.ncomp()
    }

    pub fn n_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn strain_dim(&self) -> usize {
        self.kinematics.strain_dim()
    }

    pub fn area(&self, e: usize) -> f64 {
        self.areas[e]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    /// Gradients of the three barycentric hat functions on element `e`.
    pub fn grads(&self, e: usize) -> &[[f64; 2]; 3] {
        &self.grads[e]
    }

    /// Local DOFs of element `e`, node-major; only the first `3 * ncomp` are used.
    pub fn element_dofs(&self, e: usize) -> ([usize; 6], usize) {
        let nc = self.kinematics.ncomp();
        let mut out = [0; 6];
        for (a, &node) in self.triangles[e].iter().enumerate() {
            for c in 0..nc {
                out[a * nc + c] = node * nc + c;
            }
        }
        (out, 3 * nc)
    }

    /// Strain-displacement matrix of element `e`, `strain_dim x 3 ncomp`.
    pub fn bmat(&self, e: usize) -> [[f64; 6]; 3] {
        let g = &self.grads[e];
        let mut b = [[0.0; 6]; 3];
        match self.kinematics {
            Kinematics::Antiplane => {
                for a in 0..3 {
                    b[0][a] = g[a][0];
                    b[1][a] = g[a][1];
                }
            }
            Kinematics::Planar => {
                for a in 0..3 {
                    let (gx, gy) = (g[a][0], g[a][1]);
                    b[0][2 * a] = gx;
                    b[1][2 * a + 1] = gy;
                    b[2][2 * a] = gy * SQRT_HALF;
                    b[2][2 * a + 1] = gx * SQRT_HALF;
                }
            }
        }
        b
    }

    #[inline]
    pub fn element_strain(&self, e: usize, u: &[f64]) -> [f64; 3] {
        let b = self.bmat(e);
        let (dofs, n) = self.element_dofs(e);
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate().take(self.strain_dim()) {
            *o = (0..n).map(|j| b[i][j] * u[dofs[j]]).sum();
        }
        out
    }

    /// Elementwise strain of a nodal field.
    pub fn strain(&self, u: &[f64]) -> StrainField {
        debug_assert_eq!(u.len(), self.n_dofs());
        let dim = self.strain_dim();
        let data: Vec<f64> = (0..self.n_elements())
            .into_par_iter()
            .flat_map_iter(|e| {
                let s = self.element_strain(e, u);
                s.into_iter().take(dim)
            })
            .collect();
        StrainField { dim, data }
    }

    /// Nodal load `v -> (g, e(v))` as a full vector.
    pub fn strain_load(&self, g: &StrainField) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dofs()];
        let dim = self.strain_dim();
        for e in 0..self.n_elements() {
            let b = self.bmat(e);
            let (dofs, n) = self.element_dofs(e);
            let ge = g.get(e);
            let area = self.areas[e];
            for j in 0..n {
                let s: f64 = (0..dim).map(|i| b[i][j] * ge[i]).sum();
                out[dofs[j]] += area * s;
            }
        }
        out
    }

    /// Elementwise `C_e g_e`.
    pub fn tensor_apply(&self, tensors: &[ElasticTensor], g: &StrainField) -> StrainField {
        StrainField::from_fn(self.n_elements(), g.dim(), |e| tensors[e].apply(g.get(e)))
    }

    /// `sum_e |T_e| (C_e a_e) . b_e`; with `tensors = None` the plain L2 pairing.
    pub fn strain_inner(
        &self,
        tensors: Option<&[ElasticTensor]>,
        a: &StrainField,
        b: &StrainField,
    ) -> f64 {
        (0..self.n_elements())
            .map(|e| {
                let (ae, be) = (a.get(e), b.get(e));
                let p = match tensors {
                    Some(t) => t[e].pair(ae, be),
                    None => ae.iter().zip(be).map(|(x, y)| x * y).sum(),
                };
                self.areas[e] * p
            })
            .sum()
    }

    /// Stiffness action `v -> (C e(u), e(v))` as a full vector.
    pub fn stiffness_apply(&self, tensors: &[ElasticTensor], u: &[f64]) -> Vec<f64> {
        self.strain_load(&self.tensor_apply(tensors, &self.strain(u)))
    }

    /// Element mass matrix, `3 ncomp x 3 ncomp`.
    pub fn element_mass(&self, e: usize) -> [[f64; 6]; 6] {
        let nc = self.kinematics.ncomp();
        let area = self.areas[e];
        let mut m = [[0.0; 6]; 6];
        for a in 0..3 {
            for b in 0..3 {
                let v = area / 12.0 * if a == b { 2.0 } else { 1.0 };
                for c in 0..nc {
                    m[a * nc + c][b * nc + c] = v;
                }
            }
        }
        m
    }

    /// Element stiffness `|T| B^T C B`.
    pub fn element_stiffness(&self, e: usize, c: &ElasticTensor) -> [[f64; 6]; 6] {
        let b = self.bmat(e);
        let dim = self.strain_dim();
        let n = 3 * self.kinematics.ncomp();
        let area = self.areas[e];
        let mut cb = [[0.0; 6]; 3];
        for i in 0..dim {
            for j in 0..n {
                cb[i][j] = (0..dim).map(|k| c.entry(i, k) * b[k][j]).sum();
            }
        }
        let mut k = [[0.0; 6]; 6];
        for p in 0..n {
            for q in p..n {
                let v = area * (0..dim).map(|i| b[i][p] * cb[i][q]).sum::<f64>();
                k[p][q] = v;
                k[q][p] = v;
            }
        }
        k
    }

    /// Mass action `M u`.
    pub fn mass_apply(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.n_dofs());
        let nc = self.kinematics.ncomp();
        let mut out = vec![0.0; u.len()];
        for (e, tri) in self.triangles.iter().enumerate() {
            let w = self.areas[e] / 12.0;
            for c in 0..nc {
                let vals = tri.map(|i| u[i * nc + c]);
                let sum = vals[0] + vals[1] + vals[2];
                for (a, &node) in tri.iter().enumerate() {
                    out[node * nc + c] += w * (sum + vals[a]);
                }
            }
        }
        out
    }

    /// `(u, v)` in L2.
    pub fn mass_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass_apply(u).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Norm `sqrt(||u||^2 + ||e(u)||^2)`.
    pub fn v_norm(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.n_dofs() {
            bail!(
                Contract,
                "field has {} entries, space has {} DOFs",
                u.len(),
                self.n_dofs()
            );
        }
        let eu = self.strain(u);
        Ok((self.mass_inner(u, u) + self.strain_inner(None, &eu, &eu)).sqrt())
    }

    /// Nodal interpolant; `f` returns the components at a point.
    pub fn interpolate(
        mesh: &Mesh2D,
        kinematics: Kinematics,
        mut f: impl FnMut([f64; 2]) -> [f64; 2],
    ) -> Vec<f64> {
        let nc = kinematics.ncomp();
        let mut out = Vec::with_capacity(mesh.n_nodes() * nc);
        for &p in mesh.nodes() {
            out.extend_from_slice(&f(p)[..nc]);
        }
        out
    }
}

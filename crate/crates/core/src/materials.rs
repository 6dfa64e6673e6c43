//! Elasticity and viscosity tensors.
//!
//! Tensors act on strains stored in Mandel coordinates: `(e_x, e_y)` for
//! antiplane gradients and `(e_xx, e_yy, sqrt(2) e_xy)` for planar symmetric
//! strains. In these coordinates the Frobenius pairing of symmetric matrices is
//! the Euclidean dot product, so a tensor is self-adjoint iff its matrix is
//! symmetric and its coercivity constant is the smallest matrix eigenvalue.

use nalgebra::DMatrix;

use crate::error::{bail, Error, Result};
use crate::fe::Kinematics;

const SYMMETRY_TOL: f64 = 1e-12;

/// A strain or stress at one point, in ordinary tensor components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrainTensor {
    /// Gradient of the out-of-plane displacement.
    Antiplane([f64; 2]),
    /// Symmetric 2x2 tensor.
    Planar { xx: f64, yy: f64, xy: f64 },
}

impl StrainTensor {
    pub fn to_mandel(self) -> [f64; 3] {
        match self {
            StrainTensor::Antiplane([x, y]) => [x, y, 0.0],
            StrainTensor::Planar { xx, yy, xy } => [xx, yy, std::f64::consts::SQRT_2 * xy],
        }
    }

    pub fn from_mandel(kin: Kinematics, v: &[f64]) -> Self {
        match kin {
            Kinematics::Antiplane => StrainTensor::Antiplane([v[0], v[1]]),
            Kinematics::Planar => StrainTensor::Planar {
                xx: v[0],
                yy: v[1],
                xy: v[2] / std::f64::consts::SQRT_2,
            },
        }
    }

    pub fn kinematics(&self) -> Kinematics {
        match self {
            StrainTensor::Antiplane(_) => Kinematics::Antiplane,
            StrainTensor::Planar { .. } => Kinematics::Planar,
        }
    }
}

/// Fourth-order tensor (planar) or 2x2 matrix (antiplane) in Mandel form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticTensor {
    dim: usize,
    m: [[f64; 3]; 3],
}

impl ElasticTensor {
    /// From a row-major Mandel matrix of size `strain_dim x strain_dim`.
    pub fn from_mandel(kin: Kinematics, rows: &[f64]) -> Result<Self> {
        let dim = kin.strain_dim();
        if rows.len() != dim * dim {
            bail!(
                Material,
                "expected {} tensor entries for {kin:?} mode, got {}",
                dim * dim,
                rows.len()
            );
        }
        let mut m = [[0.0; 3]; 3];
        for i in 0..dim {
            for j in 0..dim {
                m[i][j] = rows[i * dim + j];
            }
        }
        Ok(ElasticTensor { dim, m })
    }

    pub fn identity(kin: Kinematics) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate().take(kin.strain_dim()) {
            row[i] = 1.0;
        }
        ElasticTensor {
            dim: kin.strain_dim(),
            m,
        }
    }

    /// Isotropic law `eta -> 2 mu eta + lambda tr(eta) I` (planar) or `mu I`
    /// (antiplane).
    pub fn isotropic(kin: Kinematics, lambda: f64, mu: f64) -> Result<Self> {
        if !(mu > 0.0) {
            bail!(Config, "isotropic tensor needs mu > 0, got {mu}");
        }
        if !(lambda >= 0.0) {
            bail!(Config, "isotropic tensor needs lambda >= 0, got {lambda}");
        }
        let m = match kin {
            Kinematics::Antiplane => [[mu, 0.0, 0.0], [0.0, mu, 0.0], [0.0; 3]],
            Kinematics::Planar => [
                [2.0 * mu + lambda, lambda, 0.0],
                [lambda, 2.0 * mu + lambda, 0.0],
                [0.0, 0.0, 2.0 * mu],
            ],
        };
        Ok(ElasticTensor {
            dim: kin.strain_dim(),
            m,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    /// Mandel matrix-vector product.
    #[inline]
    pub fn apply(&self, v: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let mut s = 0.0;
            for (j, vj) in v.iter().enumerate().take(self.dim) {
                s += self.m[i][j] * vj;
            }
            *o = s;
        }
        out
    }

    /// `(C a) . b`.
    #[inline]
    pub fn pair(&self, a: &[f64], b: &[f64]) -> f64 {
        let ca = self.apply(a);
        (0..self.dim).map(|i| ca[i] * b[i]).sum()
    }

    /// Largest entrywise asymmetry `|m_ij - m_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..i {
                worst = worst.max((self.m[i][j] - self.m[j][i]).abs());
            }
        }
        worst
    }

    fn scale(&self) -> f64 {
        self.m
            .iter()
            .flatten()
            .fold(0.0f64, |a, &b| a.max(b.abs()))
            .max(1.0)
    }

    /// Eigenvalues of the symmetrised Mandel matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let d = self.dim;
        let mat = DMatrix::from_fn(d, d, |i, j| 0.5 * (self.m[i][j] + self.m[j][i]));
        let mut ev: Vec<f64> = mat.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Which of the two material tensors to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modulus {
    /// The elasticity tensor.
    Elastic,
    /// The viscosity tensor of the Maxwell branch.
    Viscous,
}

/// Elementwise-constant elasticity/viscosity tensors and the relaxation time.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    kinematics: Kinematics,
    elastic: Vec<ElasticTensor>,
    viscous: Vec<ElasticTensor>,
    beta: f64,
    bounds: Option<(f64, f64)>,
}

impl MaterialField {
    pub fn new(
        kinematics: Kinematics,
        elastic: Vec<ElasticTensor>,
        viscous: Vec<ElasticTensor>,
        beta: f64,
    ) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            bail!(Config, "relaxation time beta must be positive, got {beta}");
        }
        if elastic.len() != viscous.len() {
            bail!(
                Contract,
                "elastic and viscous tables have different lengths"
            );
        }
        let dim = kinematics.strain_dim();
        if elastic.iter().chain(&viscous).any(|t| t.dim != dim) {
            bail!(
                Material,
                "tensor dimension does not match {kinematics:?} mode"
            );
        }
        Ok(MaterialField {
            kinematics,
            elastic,
            viscous,
            beta,
            bounds: None,
        })
    }

    pub fn uniform(
        kinematics: Kinematics,
        n_elements: usize,
        elastic: ElasticTensor,
        viscous: ElasticTensor,
        beta: f64,
    ) -> Result<Self> {
        Self::new(
            kinematics,
            vec![elastic; n_elements],
            vec![viscous; n_elements],
            beta,
        )
    }

    pub fn kinematics(&self) -> Kinematics {
        self.kinematics
    }

    pub fn n_elements(&self) -> usize {
        self.elastic.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn tensors(&self, which: Modulus) -> &[ElasticTensor] {
        match which {
            Modulus::Elastic => &self.elastic,
            Modulus::Viscous => &self.viscous,
        }
    }

    pub fn tensor(&self, which: Modulus, e: usize) -> &ElasticTensor {
        &self.tensors(which)[e]
    }

    /// Certified coercivity constants `(C_A, C_B)`, once validated.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.bounds
    }

    pub fn is_validated(&self) -> bool {
        self.bounds.is_some()
    }

    /// Checks symmetry and coercivity of every element tensor and returns the
    /// smallest eigenvalues over all elements for both tensors.
    pub fn validate(&mut self) -> Result<(f64, f64)> {
        if self.elastic.is_empty() {
            bail!(Material, "material field has no elements");
        }
        let mut mins = [f64::INFINITY; 2];
        for (k, (name, table)) in [("elasticity", &self.elastic), ("viscosity", &self.viscous)]
            .into_iter()
            .enumerate()
        {
            for (e, t) in table.iter().enumerate() {
                let defect = t.symmetry_defect();
                if defect > SYMMETRY_TOL * t.scale() {
                    bail!(
                        Material,
                        "{name} tensor of element {e} is not symmetric (defect {defect:e})"
                    );
                }
                let lo = t.eigenvalues()[0];
                if !(lo > 0.0) {
                    bail!(
                        Material,
                        "{name} tensor of element {e} is not coercive (min eigenvalue {lo:e})"
                    );
                }
                mins[k] = mins[k].min(lo);
            }
        }
        self.bounds = Some((mins[0], mins[1]));
        Ok((mins[0], mins[1]))
    }

    /// Linear action of one element tensor on a strain.
    pub fn apply(
        &self,
        which: Modulus,
        element: usize,
        strain: StrainTensor,
    ) -> Result<StrainTensor> {
        if element >= self.n_elements() {
            return Err(Error::Contract(format!(
                "element {element} out of range ({} elements)",
                self.n_elements()
            )));
        }
        if strain.kinematics() != self.kinematics {
            bail!(Contract, "strain kind does not match the material mode");
        }
        let out = self.tensor(which, element).apply(&strain.to_mandel());
        Ok(StrainTensor::from_mandel(self.kinematics, &out))
    }
}

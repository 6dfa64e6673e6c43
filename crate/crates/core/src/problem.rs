//! A fully specified initial-boundary value problem.

use std::sync::Arc;

use crate::assembly::{DataSamples, DataSpec};
use crate::error::{bail, Result};
use crate::fe::{FeSpace, Kinematics};
use crate::linalg::SolverKind;
use crate::materials::MaterialField;
use crate::mesh::{active_space, BoundaryTag, CrackPath, DofSpace, Mesh2D};

/// Mesh, crack, materials, data and horizon; everything a solver needs
/// except the number of time steps.
#[derive(Debug, Clone)]
pub struct Problem {
    mesh: Arc<Mesh2D>,
    crack: Option<CrackPath>,
    fe: FeSpace,
    materials: MaterialField,
    data: DataSpec,
    horizon: f64,
    solver: SolverKind,
}

impl Problem {
    /// Validates the material field if needed and checks that all pieces fit.
    pub fn new(
        mesh: impl Into<Arc<Mesh2D>>,
        crack: Option<CrackPath>,
        mut materials: MaterialField,
        data: DataSpec,
        horizon: f64,
    ) -> Result<Self> {
        let mesh = mesh.into();
        let kinematics = materials.kinematics();
        if !(horizon > 0.0) || !horizon.is_finite() {
            bail!(Config, "time horizon T must be positive, got {horizon}");
        }
        if materials.n_elements() != mesh.n_triangles() {
            bail!(
                Config,
                "material field has {} elements, mesh has {}",
                materials.n_elements(),
                mesh.n_triangles()
            );
        }
        if !materials.is_validated() {
            materials.validate()?;
        }
        data.check_shapes(kinematics)?;
        if let Some(c) = &crack {
            c.schedule().eval(0.0)?;
            c.schedule().eval(horizon)?;
            if c.pairs().iter().any(|p| p.minus >= mesh.n_nodes()) {
                bail!(Contract, "crack does not belong to this mesh");
            }
        }
        let fe = FeSpace::new(&mesh, kinematics)?;
        Ok(Problem {
            mesh,
            crack,
            fe,
            materials,
            data,
            horizon,
            solver: SolverKind::default(),
        })
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_data(mut self, data: DataSpec) -> Result<Self> {
        data.check_shapes(self.kinematics())?;
        self.data = data;
        Ok(self)
    }

    pub fn mesh(&self) -> &Mesh2D {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> Arc<Mesh2D> {
        self.mesh.clone()
    }

    pub fn crack(&self) -> Option<&CrackPath> {
        self.crack.as_ref()
    }

    pub fn fe(&self) -> &FeSpace {
        &self.fe
    }

    pub fn materials(&self) -> &MaterialField {
        &self.materials
    }

    pub fn data(&self) -> &DataSpec {
        &self.data
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn solver(&self) -> SolverKind {
        self.solver
    }

    pub fn kinematics(&self) -> Kinematics {
        self.materials.kinematics()
    }

    pub fn beta(&self) -> f64 {
        self.materials.beta()
    }

    /// Admissible space at time `t`.
    pub fn space_at(&self, t: f64) -> Result<DofSpace> {
        active_space(
            &self.mesh,
            self.crack.as_ref(),
            t,
            BoundaryTag::Dirichlet,
            self.kinematics(),
        )
    }

    /// Data sampled for `n` uniform steps on `[0, T]`.
    pub fn samples(&self, n: usize) -> Result<DataSamples> {
        DataSamples::new(
            &self.data,
            self.mesh.clone(),
            &self.fe,
            &self.materials,
            self.horizon,
            n,
        )
    }
}

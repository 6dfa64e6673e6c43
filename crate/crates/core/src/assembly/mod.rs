//! Global operators, load vectors and time-sampled problem data.

mod samples;

use rayon::prelude::*;

pub(crate) use samples::GAUSS4;
pub use samples::{DataSamples, DataSpec, FieldExpr, InitialStrain};

use crate::error::{bail, Result};
use crate::fe::{FeSpace, Kinematics, StrainField};
use crate::linalg::SparseSym;
use crate::materials::{MaterialField, Modulus};
use crate::mesh::{BoundaryTag, DofSpace, Mesh2D};

/// A symmetric operator assembled on the free DOFs of a [`DofSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymOperator {
    matrix: SparseSym,
    reduced: bool,
}

impl SparseSymOperator {
    pub fn matrix(&self) -> &SparseSym {
        &self.matrix
    }

    pub fn into_matrix(self) -> SparseSym {
        self.matrix
    }

    /// Whether Dirichlet DOFs were eliminated or ties folded.
    pub fn is_reduced(&self) -> bool {
        self.reduced
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }
}

/// Coefficients of `c_m M + c_a K_A + c_b K_B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorWeights {
    pub mass: f64,
    pub elastic: f64,
    pub viscous: f64,
}

impl OperatorWeights {
    pub const MASS: Self = OperatorWeights {
        mass: 1.0,
        elastic: 0.0,
        viscous: 0.0,
    };
}

/// Assembles `c_m M + c_a K_A + c_b K_B` directly into the reduced numbering
/// of `space`. Element blocks are computed in parallel but summed in element
/// order, so the result does not depend on the thread count.
pub fn assemble(
    fe: &FeSpace,
    space: &DofSpace,
    materials: Option<&MaterialField>,
    w: OperatorWeights,
) -> Result<SparseSymOperator> {
    if space.n_dofs() != fe.n_dofs() || space.kinematics() != fe.kinematics() {
        bail!(
            Contract,
            "DOF space does not match the finite-element space"
        );
    }
    let uses_tensors = w.elastic != 0.0 || w.viscous != 0.0;
    if uses_tensors {
        match materials {
            None => bail!(Contract, "stiffness requested without a material field"),
            Some(m) if !m.is_validated() => {
                bail!(Contract, "material field must be validated before assembly")
            }
            Some(m) if m.n_elements() != fe.n_elements() => {
                bail!(
                    Contract,
                    "material field and mesh have different element counts"
                )
            }
            _ => {}
        }
    }
    let blocks: Vec<[[f64; 6]; 6]> = (0..fe.n_elements())
        .into_par_iter()
        .map(|e| {
            let mut k = [[0.0; 6]; 6];
            if w.mass != 0.0 {
                add_block(&mut k, w.mass, &fe.element_mass(e));
            }
            if let Some(m) = materials.filter(|_| uses_tensors) {
                if w.elastic != 0.0 {
                    add_block(
                        &mut k,
                        w.elastic,
                        &fe.element_stiffness(e, m.tensor(Modulus::Elastic, e)),
                    );
                }
                if w.viscous != 0.0 {
                    add_block(
                        &mut k,
                        w.viscous,
                        &fe.element_stiffness(e, m.tensor(Modulus::Viscous, e)),
                    );
                }
            }
            k
        })
        .collect();

    let mut trips = Vec::with_capacity(fe.n_elements() * 36);
    for (e, k) in blocks.iter().enumerate() {
        let (dofs, n) = fe.element_dofs(e);
        let red: Vec<Option<usize>> = dofs[..n].iter().map(|&d| space.reduced_index(d)).collect();
        for p in 0..n {
            let Some(i) = red[p] else { continue };
            for q in 0..n {
                if let Some(j) = red[q] {
                    trips.push((i, j, k[p][q]));
                }
            }
        }
    }
    let reduced = space.n_free() != space.n_dofs();
    Ok(SparseSymOperator {
        matrix: SparseSym::from_triplets(space.n_free(), trips),
        reduced,
    })
}

fn add_block(into: &mut [[f64; 6]; 6], s: f64, b: &[[f64; 6]; 6]) {
    for (r, br) in into.iter_mut().zip(b) {
        for (x, y) in r.iter_mut().zip(br) {
            *x += s * y;
        }
    }
}

pub fn assemble_mass(fe: &FeSpace, space: &DofSpace) -> Result<SparseSymOperator> {
    assemble(fe, space, None, OperatorWeights::MASS)
}

pub fn assemble_stiffness(
    fe: &FeSpace,
    space: &DofSpace,
    materials: &MaterialField,
    which: Modulus,
) -> Result<SparseSymOperator> {
    let w = match which {
        Modulus::Elastic => OperatorWeights {
            mass: 0.0,
            elastic: 1.0,
            viscous: 0.0,
        },
        Modulus::Viscous => OperatorWeights {
            mass: 0.0,
            elastic: 0.0,
            viscous: 1.0,
        },
    };
    assemble(fe, space, Some(materials), w)
}

/// Load `v -> (x, v) + (g, e(v))` on the free DOFs of `space`, where `x` is a
/// nodal field and `g` a strain field. Contributions are accumulated element by
/// element into the reduced numbering, so spaces that differ only by tied
/// duplicate nodes give bit-identical vectors.
pub fn reduced_load(
    fe: &FeSpace,
    space: &DofSpace,
    nodal: Option<&[f64]>,
    strain: Option<&StrainField>,
) -> Vec<f64> {
    let mut out = vec![0.0; space.n_free()];
    let dim = fe.strain_dim();
    let local: Vec<[f64; 6]> = (0..fe.n_elements())
        .into_par_iter()
        .map(|e| {
            let (dofs, n) = fe.element_dofs(e);
            let mut r = [0.0; 6];
            if let Some(x) = nodal {
                let m = fe.element_mass(e);
                for p in 0..n {
                    r[p] = (0..n).map(|q| m[p][q] * x[dofs[q]]).sum();
                }
            }
            if let Some(g) = strain {
                let b = fe.bmat(e);
                let ge = g.get(e);
                let area = fe.area(e);
                for p in 0..n {
                    r[p] += area * (0..dim).map(|i| b[i][p] * ge[i]).sum::<f64>();
                }
            }
            r
        })
        .collect();
    for (e, r) in local.iter().enumerate() {
        let (dofs, n) = fe.element_dofs(e);
        for p in 0..n {
            if let Some(i) = space.reduced_index(dofs[p]) {
                out[i] += r[p];
            }
        }
    }
    out
}

/// Traction on one boundary edge, given at its two end nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeLoad {
    pub edge: usize,
    pub at_start: [f64; 2],
    pub at_end: [f64; 2],
}

/// Surface load `v -> (N, v)` on the boundary by the edge trapezoid rule.
pub fn boundary_load(
    mesh: &Mesh2D,
    kinematics: Kinematics,
    loads: &[EdgeLoad],
) -> Result<Vec<f64>> {
    let nc = kinematics.ncomp();
    let mut out = vec![0.0; mesh.n_nodes() * nc];
    for l in loads {
        let Some(edge) = mesh.boundary_edges().get(l.edge) else {
            bail!(Contract, "boundary edge {} out of range", l.edge);
        };
        if edge.tag == BoundaryTag::Dirichlet {
            bail!(
                Config,
                "traction prescribed on Dirichlet edge {:?}",
                edge.nodes
            );
        }
        let half = 0.5 * edge.length(mesh);
        for (node, val) in edge.nodes.iter().zip([l.at_start, l.at_end]) {
            for c in 0..nc {
                out[node * nc + c] += half * val[c];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::ElasticTensor;
    use crate::mesh::{active_space, build_rect_mesh, insert_crack, FrontSchedule};

    fn field(kin: Kinematics, n_el: usize, lambda: f64, mu: f64) -> MaterialField {
        let t = ElasticTensor::isotropic(kin, lambda, mu).unwrap();
        let mut f = MaterialField::uniform(kin, n_el, t, t, 1.0).unwrap();
        f.validate().unwrap();
        f
    }

    /// Degree-5 Gauss rule on the reference triangle (7 points).
    fn triangle_rule() -> Vec<([f64; 3], f64)> {
        let a1 = 0.059_715_871_789_769_82;
        let b1 = 0.470_142_064_105_115_1;
        let a2 = 0.797_426_985_353_087_3;
        let b2 = 0.101_286_507_323_456_3;
        let w1 = 0.132_394_152_788_506_2;
        let w2 = 0.125_939_180_544_827_1;
        vec![
            ([1.0 / 3.0; 3], 0.225),
            ([a1, b1, b1], w1),
            ([b1, a1, b1], w1),
            ([b1, b1, a1], w1),
            ([a2, b2, b2], w2),
            ([b2, a2, b2], w2),
            ([b2, b2, a2], w2),
        ]
    }

    #[test]
    fn unit_triangle_mass_matches_quadrature() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let mesh = Mesh2D::new(
            nodes,
            vec![[0, 1, 2]],
            vec![
                ([0, 1], BoundaryTag::Neumann),
                ([1, 2], BoundaryTag::Neumann),
                ([2, 0], BoundaryTag::Neumann),
            ],
        )
        .unwrap();
        let fe = FeSpace::new(&mesh, Kinematics::Antiplane).unwrap();
        let space = DofSpace::unconstrained(&mesh, Kinematics::Antiplane);
        let m = assemble_mass(&fe, &space).unwrap();
        assert!(!m.is_reduced());
        for i in 0..3 {
            for j in 0..3 {
                let q: f64 = triangle_rule()
                    .iter()
                    .map(|(l, w)| w * 0.5 * l[i] * l[j])
                    .sum();
                assert!((m.matrix().get(i, j) - q).abs() < 1e-15);
            }
        }
        assert_eq!(m.matrix().symmetry_defect(), 0.0);
    }

    #[test]
    fn mass_integrates_one() {
        let mesh = build_rect_mesh(1.0, 1.0, 6, 6).unwrap();
        let fe = FeSpace::new(&mesh, Kinematics::Antiplane).unwrap();
        let space = DofSpace::unconstrained(&mesh, Kinematics::Antiplane);
        let m = assemble_mass(&fe, &space).unwrap();
        let one = vec![1.0; m.n()];
        assert!((m.matrix().bilinear(&one, &one) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stiffness_kernels() {
        let mesh = build_rect_mesh(1.0, 1.0, 5, 5).unwrap();
        let kin = Kinematics::Antiplane;
        let fe = FeSpace::new(&mesh, kin).unwrap();
        let space = DofSpace::unconstrained(&mesh, kin);
        let k = assemble_stiffness(
            &fe,
            &space,
            &field(kin, fe.n_elements(), 0.0, 1.0),
            Modulus::Elastic,
        )
        .unwrap();
        assert!(k
            .matrix()
            .matvec(&vec![1.0; k.n()])
            .iter()
            .all(|v| v.abs() < 1e-12));
        let x = FeSpace::interpolate(&mesh, kin, |p| [p[0], 0.0]);
        assert!((k.matrix().bilinear(&x, &x) - 1.0).abs() < 1e-12);

        let kin = Kinematics::Planar;
        let fe = FeSpace::new(&mesh, kin).unwrap();
        let space = DofSpace::unconstrained(&mesh, kin);
        let k = assemble_stiffness(
            &fe,
            &space,
            &field(kin, fe.n_elements(), 1.3, 0.4),
            Modulus::Viscous,
        )
        .unwrap();
        for mode in [
            FeSpace::interpolate(&mesh, kin, |_| [1.0, 0.0]),
            FeSpace::interpolate(&mesh, kin, |_| [0.0, 1.0]),
            FeSpace::interpolate(&mesh, kin, |p| [-p[1], p[0]]),
        ] {
            assert!(k.matrix().matvec(&mode).iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn unvalidated_materials_are_rejected() {
        let mesh = build_rect_mesh(1.0, 1.0, 2, 2).unwrap();
        let kin = Kinematics::Antiplane;
        let fe = FeSpace::new(&mesh, kin).unwrap();
        let space = DofSpace::unconstrained(&mesh, kin);
        let t = ElasticTensor::identity(kin);
        let raw = MaterialField::uniform(kin, fe.n_elements(), t, t, 1.0).unwrap();
        assert!(assemble_stiffness(&fe, &space, &raw, Modulus::Elastic).is_err());
    }

    #[test]
    fn reduction_is_a_congruence() {
        let mesh = build_rect_mesh(1.0, 1.0, 6, 6).unwrap();
        let line: Vec<usize> = (1..=5).map(|i| 3 * 7 + i).collect();
        let (mesh, crack) = insert_crack(&mesh, &line).unwrap();
        let len = crack.length();
        let crack = crack.with_schedule(FrontSchedule::linear(0.0, 1.0, 0.0, len).unwrap());
        let kin = Kinematics::Planar;
        let fe = FeSpace::new(&mesh, kin).unwrap();
        let mats = field(kin, fe.n_elements(), 0.5, 1.0);
        let w = OperatorWeights {
            mass: 3.0,
            elastic: 1.0,
            viscous: 0.5,
        };
        let full_space = DofSpace::unconstrained(&mesh, kin);
        let full = assemble(&fe, &full_space, Some(&mats), w).unwrap();
        let space = active_space(&mesh, Some(&crack), 0.5, BoundaryTag::Dirichlet, kin).unwrap();
        let red = assemble(&fe, &space, Some(&mats), w).unwrap();
        assert!(red.is_reduced());
        let y: Vec<f64> = (0..space.n_free())
            .map(|i| (i as f64 * 1.3).sin())
            .collect();
        let v = space.expand(&y, &vec![0.0; space.n_dofs()]);
        let a = full.matrix().bilinear(&v, &v);
        let b = red.matrix().bilinear(&y, &y);
        assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn boundary_load_examples() {
        let mesh = build_rect_mesh(1.0, 1.0, 4, 4)
            .unwrap()
            .retag_boundary(|mid, _| {
                if mid[0] == 1.0 {
                    BoundaryTag::Neumann
                } else {
                    BoundaryTag::Dirichlet
                }
            });
        let right: Vec<usize> = (0..mesh.boundary_edges().len())
            .filter(|&i| mesh.boundary_edges()[i].tag == BoundaryTag::Neumann)
            .collect();
        let zero: Vec<EdgeLoad> = right
            .iter()
            .map(|&e| EdgeLoad {
                edge: e,
                at_start: [0.0; 2],
                at_end: [0.0; 2],
            })
            .collect();
        let kin = Kinematics::Planar;
        assert!(boundary_load(&mesh, kin, &zero)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));

        let push: Vec<EdgeLoad> = right
            .iter()
            .map(|&e| EdgeLoad {
                edge: e,
                at_start: [2.0, 0.0],
                at_end: [2.0, 0.0],
            })
            .collect();
        let l = boundary_load(&mesh, kin, &push).unwrap();
        let ones = FeSpace::interpolate(&mesh, kin, |_| [1.0, 0.0]);
        let work: f64 = l.iter().zip(&ones).map(|(a, b)| a * b).sum();
        assert!((work - 2.0).abs() < 1e-12);

        // linear profile N = y against test field v = y, integral of y^2 on [0, 1]
        let lin: Vec<EdgeLoad> = right
            .iter()
            .map(|&e| {
                let [a, b] = mesh.boundary_edges()[e].nodes;
                let ya = mesh.nodes()[a][1];
                let yb = mesh.nodes()[b][1];
                EdgeLoad {
                    edge: e,
                    at_start: [ya, 0.0],
                    at_end: [yb, 0.0],
                }
            })
            .collect();
        let l = boundary_load(&mesh, kin, &lin).unwrap();
        let v = FeSpace::interpolate(&mesh, kin, |p| [p[1], 0.0]);
        let got: f64 = l.iter().zip(&v).map(|(a, b)| a * b).sum();
        // trapezoid on 4 panels: sum over panels of h/2 (y_a^2 + y_b^2)
        let h = 0.25f64;
        let oracle: f64 = (0..4)
            .map(|i| {
                let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
                0.5 * h * (a * a + b * b)
            })
            .sum();
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 1.0 / 3.0).abs() < h * h);

        let left = (0..mesh.boundary_edges().len())
            .find(|&i| mesh.boundary_edges()[i].tag == BoundaryTag::Dirichlet)
            .unwrap();
        let bad = [EdgeLoad {
            edge: left,
            at_start: [1.0, 0.0],
            at_end: [1.0, 0.0],
        }];
        assert!(boundary_load(&mesh, kin, &bad).is_err());
    }
}

use super::{BoundaryTag, CrackPath, Mesh2D};
use crate::error::{bail, Result};
use crate::fe::Kinematics;

/// Role of one nodal degree of freedom in a constrained space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    /// Unknown with the given reduced index.
    Free(usize),
    /// Prescribed by the Dirichlet datum.
    Dirichlet,
    /// Slave of a tie, equal to the master DOF.
    Tied { master: usize },
}

/// Discrete space of admissible displacements at one time: free DOFs,
/// Dirichlet DOFs and the crack ties still in force.
///
/// Full DOF `d` of node `i` and component `c` is `i * ncomp + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct DofSpace {
    kinematics: Kinematics,
    n_nodes: usize,
    kinds: Vec<DofKind>,
    free: Vec<usize>,
    dirichlet: Vec<usize>,
    ties: Vec<(usize, usize)>,
    released: usize,
    time: f64,
}

impl DofSpace {
    fn build(
        kinematics: Kinematics,
        n_nodes: usize,
        dirichlet_nodes: &[usize],
        ties: Vec<(usize, usize)>,
        released: usize,
        time: f64,
    ) -> Self {
        let nc = kinematics.ncomp();
        let mut kinds = vec![DofKind::Free(0); n_nodes * nc];
        for &i in dirichlet_nodes {
            for c in 0..nc {
                kinds[i * nc + c] = DofKind::Dirichlet;
            }
        }
        for &(plus, minus) in &ties {
            for c in 0..nc {
                kinds[minus * nc + c] = DofKind::Tied {
                    master: plus * nc + c,
                };
            }
        }
        let mut free = Vec::new();
        let mut dirichlet = Vec::new();
        for (d, kind) in kinds.iter_mut().enumerate() {
            match kind {
                DofKind::Free(idx) => {
                    *idx = free.len();
                    free.push(d);
                }
                DofKind::Dirichlet => dirichlet.push(d),
                DofKind::Tied { .. } => {}
            }
        }
        DofSpace {
            kinematics,
            n_nodes,
            kinds,
            free,
            dirichlet,
            ties,
            released,
            time,
        }
    }

    /// Every DOF free: the unreduced space on the (possibly cracked) mesh.
    pub fn unconstrained(mesh: &Mesh2D, kinematics: Kinematics) -> Self {
        Self::build(kinematics, mesh.n_nodes(), &[], Vec::new(), 0, 0.0)
    }

    pub fn kinematics(&self) -> Kinematics {
        self.kinematics
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_dofs(&self) -> usize {
        self.kinds.len()
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn kind(&self, dof: usize) -> DofKind {
        self.kinds[dof]
    }

    pub fn kinds(&self) -> &[DofKind] {
        &self.kinds
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn dirichlet_dofs(&self) -> &[usize] {
        &self.dirichlet
    }

    /// Node pairs `(plus, minus)` still tied together.
    pub fn active_ties(&self) -> &[(usize, usize)] {
        &self.ties
    }

    /// Number of crack pairs released so far.
    pub fn released(&self) -> usize {
        self.released
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Reduced index of a full DOF, following ties; `None` for Dirichlet DOFs.
    pub fn reduced_index(&self, dof: usize) -> Option<usize> {
        match self.kinds[dof] {
            DofKind::Free(i) => Some(i),
            DofKind::Dirichlet => None,
            DofKind::Tied { master } => self.reduced_index(master),
        }
    }

    /// Full field from reduced values; Dirichlet DOFs are copied from `lift`.
    pub fn expand(&self, reduced: &[f64], lift: &[f64]) -> Vec<f64> {
        debug_assert_eq!(reduced.len(), self.n_free());
        (0..self.n_dofs())
            .map(|d| match self.reduced_index(d) {
                Some(i) => reduced[i],
                None => lift[d],
            })
            .collect()
    }

    /// Transpose of [`expand`](Self::expand) on the free part: sums slave
    /// entries into their masters and drops Dirichlet entries.
    pub fn restrict_sum(&self, full: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free()];
        for (d, &v) in full.iter().enumerate() {
            if let Some(i) = self.reduced_index(d) {
                out[i] += v;
            }
        }
        out
    }

    /// Values at free DOFs.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }

    /// True when `u` honours every active tie exactly.
    pub fn respects_ties(&self, u: &[f64]) -> bool {
        self.kinds.iter().enumerate().all(|(d, k)| match *k {
            DofKind::Tied { master } => u[d] == u[master],
            _ => true,
        })
    }

    /// Whether `u` is a test function: zero on Dirichlet DOFs and tie-respecting.
    pub fn is_test_function(&self, u: &[f64]) -> bool {
        self.dirichlet.iter().all(|&d| u[d] == 0.0) && self.respects_ties(u)
    }

    /// `self` is a subspace of `later` when the later space only released ties.
    pub fn nested_in(&self, later: &DofSpace) -> bool {
        self.dirichlet == later.dirichlet && later.ties.iter().all(|t| self.ties.contains(t))
    }
}

/// Space at time `t`: crack pairs within the front are released, the rest
/// stay tied, and nodes on edges tagged `dirichlet_tag` are prescribed.
pub fn active_space(
    mesh: &Mesh2D,
    crack: Option<&CrackPath>,
    t: f64,
    dirichlet_tag: BoundaryTag,
    kinematics: Kinematics,
) -> Result<DofSpace> {
    let (released, ties) = match crack {
        Some(c) => {
            let released = c.released_at(t)?;
            let ties = c.pairs()[released..]
                .iter()
                .map(|p| (p.plus, p.minus))
                .collect();
            (released, ties)
        }
        None => (0, Vec::new()),
    };
    if let Some(c) = crack {
        if c.pairs().iter().any(|p| p.minus >= mesh.n_nodes()) {
            bail!(Contract, "crack does not belong to this mesh");
        }
    }
    let dirichlet = mesh.tagged_nodes(dirichlet_tag);
    Ok(DofSpace::build(
        kinematics,
        mesh.n_nodes(),
        &dirichlet,
        ties,
        released,
        t,
    ))
}

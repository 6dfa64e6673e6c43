//! Implicit incremental time stepping of the coupled displacement /
//! internal-variable system.
//!
//! Each step minimizes a convex quadratic functional whose Euler equation is
//!
//! ```text
//! (d2u, phi) + (A eu, ephi) + (B(eu - w), ephi - psi) + beta (B dw, psi)
//!     = (f_k, phi) + (F_k - h_k, ephi)
//! ```
//!
//! The internal variable is eliminated pointwise, leaving the SPD system
//! `(M / tau^2 + K_A + beta/(beta + tau) K_B) u_k = rhs` on the free DOFs.

use log::{debug, info};

use crate::assembly::{assemble, reduced_load, DataSamples, OperatorWeights};
use crate::error::{bail, Error, Result};
use crate::fe::StrainField;
use crate::linalg::Factorization;
use crate::materials::Modulus;
use crate::mesh::DofSpace;
use crate::problem::Problem;

/// Tolerance for the Dirichlet trace of the initial displacement.
pub const DIRICHLET_TOL: f64 = 1e-10;

/// Discrete state after step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub k: usize,
    pub t: f64,
    /// `u_{k-1}`; for `k = 0` this is `u0 - tau u1`.
    pub u_prev: Vec<f64>,
    pub u: Vec<f64>,
    /// `(u_k - u_{k-1}) / tau`, stored as computed.
    pub du: Vec<f64>,
    pub w: StrainField,
}

/// Initial state: `u_0 = u0`, `u_{-1} = u0 - tau u1`, `du_0 = u1`, `w_0 = w0`.
pub fn init_state(
    space: &DofSpace,
    u0: &[f64],
    u1: &[f64],
    w0: &StrainField,
    z0: &[f64],
    tau: f64,
) -> Result<StepState> {
    let n = space.n_dofs();
    if u0.len() != n || u1.len() != n || z0.len() != n {
        bail!(
            Contract,
            "initial fields are not sized to the space ({n} DOFs)"
        );
    }
    if !(tau > 0.0) {
        bail!(Contract, "time step must be positive");
    }
    for &d in space.dirichlet_dofs() {
        let gap = (u0[d] - z0[d]).abs();
        if gap > DIRICHLET_TOL {
            bail!(
                Data,
                "initial displacement differs from the Dirichlet datum by {gap:e} at DOF {d}"
            );
        }
    }
    Ok(StepState {
        k: 0,
        t: 0.0,
        u_prev: u0.iter().zip(u1).map(|(a, b)| a - tau * b).collect(),
        u: u0.to_vec(),
        du: u1.to_vec(),
        w: w0.clone(),
    })
}

/// Implicit update of `beta dw + w = eu`:
/// `w = w_prev + tau / (beta + tau) (eu - w_prev)`.
pub fn w_update(
    w_prev: &StrainField,
    eu: &StrainField,
    beta: f64,
    tau: f64,
) -> Result<StrainField> {
    if w_prev.as_slice().len() != eu.as_slice().len() || w_prev.dim() != eu.dim() {
        bail!(
            Contract,
            "internal variable and strain have different sizes"
        );
    }
    if !(beta > 0.0 && tau > 0.0) {
        bail!(Contract, "beta and tau must be positive");
    }
    let r = tau / (beta + tau);
    let mut out = w_prev.clone();
    out.axpy(r, &StrainField::lin_comb(1.0, eu, -1.0, w_prev));
    Ok(out)
}

/// One refactorization event.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveInfo {
    /// First step solved with this operator.
    pub k: usize,
    /// Crack pairs released in the space of this operator.
    pub released: usize,
    pub n_free: usize,
    /// Largest `|S_ij - S_ji|` of the assembled system operator.
    pub symmetry_defect: f64,
    /// Pivot ratio of the factorization; `NaN` for the iterative solver.
    pub pivot_ratio: f64,
}

/// All states `k = 0..=n` of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    tau: f64,
    n: usize,
    states: Vec<StepState>,
    released: Vec<usize>,
    solves: Vec<SolveInfo>,
}

/// Time interpolants of the discrete sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interp {
    /// Piecewise-linear: `u_k + (t - k tau) du_k` on `[(k-1) tau, k tau]`.
    PwLinear,
    /// Piecewise-constant, right value `u_k` on `((k-1) tau, k tau]`.
    RightConst,
    /// Piecewise-constant, left value `u_{k-1}` on `[(k-1) tau, k tau)`.
    LeftConst,
}

const KNOT_TOL: f64 = 1e-9;

impl Trajectory {
    pub fn new(
        tau: f64,
        states: Vec<StepState>,
        released: Vec<usize>,
        solves: Vec<SolveInfo>,
    ) -> Self {
        let n = states.len().saturating_sub(1);
        Trajectory {
            tau,
            n,
            states,
            released,
            solves,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.states.last().map_or(0.0, |s| s.t)
    }

    pub fn states(&self) -> &[StepState] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &StepState {
        &self.states[k]
    }

    pub fn u(&self, k: usize) -> &[f64] {
        &self.states[k].u
    }

    pub fn du(&self, k: usize) -> &[f64] {
        &self.states[k].du
    }

    pub fn w(&self, k: usize) -> &StrainField {
        &self.states[k].w
    }

    /// Crack pairs released at each knot.
    pub fn released(&self) -> &[usize] {
        &self.released
    }

    pub fn solves(&self) -> &[SolveInfo] {
        &self.solves
    }

    /// `(j, s)` with `t = (j - 1 + s) tau`, `j >= 1`, `s in [0, 1]`.
    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let horizon = self.horizon();
        if self.n == 0 || t < -KNOT_TOL * self.tau || t > horizon + KNOT_TOL * self.tau {
            bail!(Domain, "time {t} outside [0, {horizon}]");
        }
        let x = (t / self.tau).clamp(0.0, self.n as f64);
        let j = (x.ceil() as usize).clamp(1, self.n);
        Ok((j, (x - (j - 1) as f64).clamp(0.0, 1.0)))
    }

    /// Knot index if `t` is a grid time.
    pub fn knot_index(&self, t: f64) -> Option<usize> {
        let x = t / self.tau;
        let k = x.round();
        ((x - k).abs() <= KNOT_TOL && k >= 0.0 && k as usize <= self.n).then_some(k as usize)
    }

    pub fn interpolate(&self, t: f64, kind: Interp) -> Result<Vec<f64>> {
        if let Some(k) = self.knot_index(t) {
            return Ok(self.u(k).to_vec());
        }
        let (j, s) = self.locate(t)?;
        Ok(match kind {
            Interp::RightConst => self.u(j).to_vec(),
            Interp::LeftConst => self.u(j - 1).to_vec(),
            Interp::PwLinear => {
                let dt = (s - 1.0) * self.tau;
                self.u(j)
                    .iter()
                    .zip(self.du(j))
                    .map(|(u, v)| u + dt * v)
                    .collect()
            }
        })
    }

    pub fn interpolate_w(&self, t: f64, kind: Interp) -> Result<StrainField> {
        if let Some(k) = self.knot_index(t) {
            return Ok(self.w(k).clone());
        }
        let (j, s) = self.locate(t)?;
        Ok(match kind {
            Interp::RightConst => self.w(j).clone(),
            Interp::LeftConst => self.w(j - 1).clone(),
            Interp::PwLinear => StrainField::lin_comb(s, self.w(j), 1.0 - s, self.w(j - 1)),
        })
    }
}

struct Cached {
    released: usize,
    space: DofSpace,
    factor: Factorization,
}

/// Drives the scheme for one problem and one step count.
pub struct Stepper<'p> {
    problem: &'p Problem,
    samples: DataSamples,
    cached: Option<Cached>,
    solves: Vec<SolveInfo>,
    last_space: Option<DofSpace>,
}

impl<'p> Stepper<'p> {
    pub fn new(problem: &'p Problem, n: usize) -> Result<Self> {
        Ok(Stepper {
            problem,
            samples: problem.samples(n)?,
            cached: None,
            solves: Vec::new(),
            last_space: None,
        })
    }

    pub fn samples(&self) -> &DataSamples {
        &self.samples
    }

    pub fn initial_state(&mut self) -> Result<StepState> {
        let space = self.problem.space_at(0.0)?;
        let st = init_state(
            &space,
            &self.samples.u0(),
            &self.samples.u1(),
            self.samples.w0(),
            &self.samples.z(0),
            self.samples.tau(),
        )?;
        self.last_space = Some(space);
        Ok(st)
    }

    /// Space at step `k`, checked to contain the previous one.
    fn space(&mut self, k: usize) -> Result<DofSpace> {
        let space = self.problem.space_at(self.samples.time(k))?;
        if let Some(prev) = &self.last_space {
            if !prev.nested_in(&space) {
                bail!(
                    Domain,
                    "crack ties at step {k} are not a subset of those at step {}",
                    k - 1
                );
            }
        }
        Ok(space)
    }

    fn factor(&mut self, k: usize, space: &DofSpace) -> Result<()> {
        if self
            .cached
            .as_ref()
            .is_some_and(|c| c.released == space.released())
        {
            return Ok(());
        }
        let tau = self.samples.tau();
        let beta = self.samples.beta();
        let op = assemble(
            self.problem.fe(),
            space,
            Some(self.problem.materials()),
            OperatorWeights {
                mass: 1.0 / (tau * tau),
                elastic: 1.0,
                viscous: beta / (beta + tau),
            },
        )?;
        let symmetry_defect = op.matrix().symmetry_defect();
        let factor =
            Factorization::new(op.into_matrix(), self.problem.solver()).map_err(|e| match e {
                Error::Numerical { message, condition } => Error::Numerical {
                    message: format!("step {k}: {message}"),
                    condition,
                },
                other => other,
            })?;
        let pivot_ratio = match &factor {
            Factorization::Direct(f) => f.pivot_ratio(),
            Factorization::Cg { .. } => f64::NAN,
        };
        debug!(
            "step {k}: factored {} free DOFs, {} pairs released, pivot ratio {pivot_ratio:.3e}",
            space.n_free(),
            space.released()
        );
        self.solves.push(SolveInfo {
            k,
            released: space.released(),
            n_free: space.n_free(),
            symmetry_defect,
            pivot_ratio,
        });
        self.cached = Some(Cached {
            released: space.released(),
            space: space.clone(),
            factor,
        });
        Ok(())
    }

    /// Advances `state` (at step `k - 1`) by one step.
    pub fn step(&mut self, state: &StepState) -> Result<StepState> {
        let k = state.k + 1;
        if k > self.samples.n() {
            bail!(
                Contract,
                "step {k} exceeds the {} planned steps",
                self.samples.n()
            );
        }
        let space = self.space(k)?;
        self.factor(k, &space)?;
        let cached = self.cached.as_ref().expect("factored above");
        debug_assert_eq!(cached.space.free_dofs(), space.free_dofs());

        let fe = self.problem.fe();
        let mats = self.problem.materials();
        let tau = self.samples.tau();
        let beta = self.samples.beta();
        let c = beta / (beta + tau);

        // Dirichlet lift: z_k on Dirichlet DOFs, zero elsewhere.
        let zk = self.samples.z(k);
        let mut lift = vec![0.0; fe.n_dofs()];
        for &d in space.dirichlet_dofs() {
            lift[d] = zk[d];
        }
        let f_avg = self.samples.f_avg(k);
        let nodal: Vec<f64> = (0..fe.n_dofs())
            .map(|d| (state.u[d] + tau * state.du[d] - lift[d]) / (tau * tau) + f_avg[d])
            .collect();
        let e_lift = fe.strain(&lift);
        let mut g = self.samples.net_strain_load(k);
        g.axpy(
            c,
            &fe.tensor_apply(mats.tensors(Modulus::Viscous), &state.w),
        );
        g.axpy(
            -1.0,
            &fe.tensor_apply(mats.tensors(Modulus::Elastic), &e_lift),
        );
        g.axpy(
            -c,
            &fe.tensor_apply(mats.tensors(Modulus::Viscous), &e_lift),
        );
        let mut rhs = reduced_load(fe, &space, Some(&nodal), Some(&g));
        if let Some(nk) = self.samples.neumann(k)? {
            for (r, v) in rhs.iter_mut().zip(space.restrict_sum(&nk)) {
                *r += v;
            }
        }

        let y = cached.factor.solve(&rhs)?;
        let u = space.expand(&y, &lift);
        let eu = fe.strain(&u);
        let w = w_update(&state.w, &eu, beta, tau)?;
        let du = u.iter().zip(&state.u).map(|(a, b)| (a - b) / tau).collect();
        self.last_space = Some(space);
        Ok(StepState {
            k,
            t: self.samples.time(k),
            u_prev: state.u.clone(),
            u,
            du,
            w,
        })
    }

    /// Runs all steps from the initial state.
    pub fn run(mut self) -> Result<(Trajectory, DataSamples)> {
        let mut state = self.initial_state()?;
        let mut released = vec![self.last_space.as_ref().map_or(0, DofSpace::released)];
        let mut states = Vec::with_capacity(self.samples.n() + 1);
        let n = self.samples.n();
        for k in 1..=n {
            let next = self.step(&state)?;
            released.push(self.last_space.as_ref().map_or(0, DofSpace::released));
            states.push(std::mem::replace(&mut state, next));
            if k % (n / 10).max(1) == 0 {
                info!("step {k}/{n}, t = {:.4}", state.t);
            }
        }
        states.push(state);
        let traj = Trajectory::new(self.samples.tau(), states, released, self.solves);
        Ok((traj, self.samples))
    }
}

/// Runs the scheme with `n` steps.
pub fn run(problem: &Problem, n: usize) -> Result<Trajectory> {
    if n < 2 {
        bail!(Config, "at least 2 time steps are required, got {n}");
    }
    Stepper::new(problem, n)?.run().map(|(t, _)| t)
}

/// Runs the scheme and also returns the sampled data.
pub fn run_with_samples(problem: &Problem, n: usize) -> Result<(Trajectory, DataSamples)> {
    if n < 2 {
        bail!(Config, "at least 2 time steps are required, got {n}");
    }
    Stepper::new(problem, n)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn w_update_examples() {
        let w = StrainField::from_fn(3, 2, |e| [e as f64, 1.0 - e as f64, 0.0]);
        assert_eq!(w_update(&w, &w, 0.7, 0.1).unwrap(), w);
        let zero = StrainField::zeros(3, 2);
        assert_eq!(w_update(&zero, &w, 0.3, 0.3).unwrap(), w.scaled(0.5));
        assert!(w_update(&zero, &StrainField::zeros(2, 2), 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn w_update_solves_the_implicit_relation(
            beta in 0.01..10.0f64, tau in 1e-4..1.0f64,
            prev in prop::collection::vec(-1.0..1.0f64, 12),
            eu in prop::collection::vec(-1.0..1.0f64, 12),
        ) {
            let wp = StrainField::from_fn(4, 3, |e| [prev[3 * e], prev[3 * e + 1], prev[3 * e + 2]]);
            let ef = StrainField::from_fn(4, 3, |e| [eu[3 * e], eu[3 * e + 1], eu[3 * e + 2]]);
            let w = w_update(&wp, &ef, beta, tau).unwrap();
            for i in 0..12 {
                let r = beta * (w.as_slice()[i] - wp.as_slice()[i]) / tau + w.as_slice()[i] - ef.as_slice()[i];
                prop_assert!(r.abs() <= 1e-14 * (1.0 + beta / tau));
            }
        }
    }

    #[test]
    fn init_state_examples() {
        let mesh = crate::mesh::build_rect_mesh(1.0, 1.0, 2, 2).unwrap();
        let space = crate::mesh::active_space(
            &mesh,
            None,
            0.0,
            crate::mesh::BoundaryTag::Dirichlet,
            crate::fe::Kinematics::Antiplane,
        )
        .unwrap();
        let n = space.n_dofs();
        let w0 = StrainField::zeros(8, 2);
        let zero = vec![0.0; n];
        let s = init_state(&space, &zero, &zero, &w0, &zero, 0.1).unwrap();
        assert!(s.u.iter().chain(&s.u_prev).chain(&s.du).all(|&v| v == 0.0));

        let mut u0 = zero.clone();
        u0[4] = 1.0;
        let s = init_state(&space, &u0, &zero, &w0, &zero, 0.1).unwrap();
        assert_eq!(s.u_prev, s.u);

        let u1: Vec<f64> = (0..n).map(|i| i as f64 * 0.3).collect();
        let s = init_state(&space, &u0, &u1, &w0, &zero, 0.1).unwrap();
        assert_eq!(s.du, u1);

        let mut bad = zero.clone();
        bad[0] = 1e-9;
        assert!(matches!(
            init_state(&space, &bad, &zero, &w0, &zero, 0.1),
            Err(Error::Data(_))
        ));
    }
}

//! The convolution (memory-kernel) form of the model: an independent time
//! stepper, closed-form reconstruction of the internal variable, the
//! equivalence check against the coupled scheme, and reduction of a past
//! history to an initial internal variable.
//!
//! The kernel is `k(s) = e^{-s/beta} / beta`. Inputs are treated as
//! piecewise linear in time and integrated against the kernel exactly.

use std::path::Path;

use log::debug;

use crate::assembly::{assemble, reduced_load, FieldExpr, OperatorWeights, GAUSS4};
use crate::error::{bail, Error, Result};
use crate::fe::{FeSpace, Kinematics, StrainField};
use crate::linalg::Factorization;
use crate::materials::{Modulus, StrainTensor};
use crate::mesh::Mesh2D;
use crate::problem::Problem;
use crate::stepper::{init_state, StepState, Trajectory};

/// Weights `(E, a0, a1)` of the exact kernel integral over one interval of
/// length `dt` for a linear input going from `g0` to `g1`:
/// `int_0^dt k(dt - s) g(s) ds = a0 g0 + a1 g1`, and `E = e^{-dt/beta}`.
pub fn exp_weights(dt: f64, beta: f64) -> (f64, f64, f64) {
    let r = dt / beta;
    let e = (-r).exp();
    let one_minus_e = -(-r).exp_m1();
    let a0 = if r < 1e-2 {
        // sum over m >= 2 of (-1)^m (m - 1) r^(m-1) / m!
        let mut sum = 0.0;
        let mut pow_over_fact = r / 2.0;
        for m in 2..=9 {
            if m > 2 {
                pow_over_fact *= -r / m as f64;
            }
            sum += (m - 1) as f64 * pow_over_fact;
        }
        sum
    } else {
        (one_minus_e - r * e) / r
    };
    (e, a0, one_minus_e - a0)
}

/// Running value of `int_0^t k(t - s) g(s) ds` for a piecewise-linear input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvAccumulator {
    value: StrainField,
    last_input: StrainField,
    time: f64,
    beta: f64,
}

impl ConvAccumulator {
    /// Starts at time zero with input value `g0` and zero integral.
    pub fn new(g0: StrainField, beta: f64) -> Self {
        ConvAccumulator {
            value: StrainField::zeros(g0.n_elements(), g0.dim()),
            last_input: g0,
            time: 0.0,
            beta,
        }
    }

    pub fn value(&self) -> &StrainField {
        &self.value
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Advances by `dt` with the input moving linearly to `g`.
    pub fn update(&mut self, dt: f64, g: StrainField) {
        let (e, a0, a1) = exp_weights(dt, self.beta);
        let mut next = self.value.scaled(e);
        next.axpy(a0, &self.last_input);
        next.axpy(a1, &g);
        self.value = next;
        self.last_input = g;
        self.time += dt;
    }

    /// Value after advancing by `dt` toward `g`, without committing.
    pub fn peek(&self, dt: f64, g: &StrainField) -> StrainField {
        let mut c = self.clone();
        c.update(dt, g.clone());
        c.value
    }
}

/// `w(t) = w0 e^{-t/beta} + int_0^t k(t - s) eu(s) ds` with `eu` the strain of
/// the piecewise-linear interpolant of the trajectory.
pub fn w_closed_form(
    fe: &FeSpace,
    traj: &Trajectory,
    w0: &StrainField,
    beta: f64,
    t: f64,
) -> Result<StrainField> {
    let horizon = traj.horizon();
    if t < -1e-12 || t > horizon * (1.0 + 1e-12) + 1e-12 {
        bail!(Domain, "time {t} outside [0, {horizon}]");
    }
    let tau = traj.tau();
    let mut acc = ConvAccumulator::new(fe.strain(traj.u(0)), beta);
    let mut k = 0;
    while k < traj.n() && (k + 1) as f64 * tau <= t * (1.0 + 1e-12) {
        k += 1;
        acc.update(tau, fe.strain(traj.u(k)));
    }
    let theta = t - k as f64 * tau;
    let value = if theta > 1e-12 * tau && k < traj.n() {
        let s = theta / tau;
        let g = StrainField::lin_comb(1.0 - s, &fe.strain(traj.u(k)), s, &fe.strain(traj.u(k + 1)));
        acc.peek(theta, &g)
    } else {
        acc.value().clone()
    };
    let mut out = w0.scaled((-t / beta).exp());
    out.axpy(1.0, &value);
    Ok(out)
}

/// Closed-form `w` at every knot, in one pass.
pub fn w_closed_form_knots(
    fe: &FeSpace,
    traj: &Trajectory,
    w0: &StrainField,
    beta: f64,
) -> Vec<StrainField> {
    let tau = traj.tau();
    let mut acc = ConvAccumulator::new(fe.strain(traj.u(0)), beta);
    let mut out = vec![w0.clone()];
    for k in 1..=traj.n() {
        acc.update(tau, fe.strain(traj.u(k)));
        let mut w = w0.scaled((-(k as f64) * tau / beta).exp());
        w.axpy(1.0, acc.value());
        out.push(w);
    }
    out
}

/// Time stepping of the convolution form
/// `(d2u, phi) + ((A + B) eu, ephi) - (B C_k, ephi) = (f_k, phi) + (F_k, ephi)`
/// where `C_k` is the exact kernel integral of the piecewise-linear strain
/// history. No internal variable is carried; the returned trajectory holds the
/// reconstructed `w_k = w0 e^{-t_k/beta} + C_k`.
pub fn conv_solve(problem: &Problem, n: usize) -> Result<Trajectory> {
    if n < 2 {
        bail!(Config, "at least 2 time steps are required, got {n}");
    }
    let samples = problem.samples(n)?;
    let fe = problem.fe();
    let mats = problem.materials();
    let tau = samples.tau();
    let beta = samples.beta();
    let (e, a0, a1) = exp_weights(tau, beta);

    let space0 = problem.space_at(0.0)?;
    let mut state = init_state(
        &space0,
        &samples.u0(),
        &samples.u1(),
        samples.w0(),
        &samples.z(0),
        tau,
    )?;
    let mut acc = ConvAccumulator::new(fe.strain(&state.u), beta);
    let mut states = Vec::with_capacity(n + 1);
    let mut released = vec![space0.released()];
    let mut last_space = space0;
    let mut cached: Option<(usize, Factorization)> = None;
    let b = mats.tensors(Modulus::Viscous);
    let a = mats.tensors(Modulus::Elastic);

    for k in 1..=n {
        let space = problem.space_at(samples.time(k))?;
        if !last_space.nested_in(&space) {
            bail!(
                Domain,
                "crack ties at step {k} are not a subset of those at step {}",
                k - 1
            );
        }
        if cached.as_ref().is_none_or(|(r, _)| *r != space.released()) {
            let op = assemble(
                fe,
                &space,
                Some(mats),
                OperatorWeights {
                    mass: 1.0 / (tau * tau),
                    elastic: 1.0,
                    viscous: 1.0 - a1,
                },
            )?;
            debug!("memory solver: factoring at step {k}");
            cached = Some((
                space.released(),
                Factorization::new(op.into_matrix(), problem.solver())?,
            ));
        }
        let factor = &cached.as_ref().expect("factored").1;

        let zk = samples.z(k);
        let mut lift = vec![0.0; fe.n_dofs()];
        for &d in space.dirichlet_dofs() {
            lift[d] = zk[d];
        }
        let f_avg = samples.f_avg(k);
        let nodal: Vec<f64> = (0..fe.n_dofs())
            .map(|d| (state.u[d] + tau * state.du[d] - lift[d]) / (tau * tau) + f_avg[d])
            .collect();
        let e_lift = fe.strain(&lift);
        let eu_prev = fe.strain(&state.u);
        let mut hist = acc.value().scaled(e);
        hist.axpy(a0, &eu_prev);
        let mut g = samples.big_f(k);
        g.axpy(1.0, &fe.tensor_apply(b, &hist));
        g.axpy(-1.0, &fe.tensor_apply(a, &e_lift));
        g.axpy(-(1.0 - a1), &fe.tensor_apply(b, &e_lift));
        let mut rhs = reduced_load(fe, &space, Some(&nodal), Some(&g));
        if let Some(nk) = samples.neumann(k)? {
            for (r, v) in rhs.iter_mut().zip(space.restrict_sum(&nk)) {
                *r += v;
            }
        }
        let y = factor.solve(&rhs)?;
        let u = space.expand(&y, &lift);
        let eu = fe.strain(&u);
        acc.update(tau, eu);
        let mut w = samples.w0().scaled((-samples.time(k) / beta).exp());
        w.axpy(1.0, acc.value());
        let du = u.iter().zip(&state.u).map(|(p, q)| (p - q) / tau).collect();
        let next = StepState {
            k,
            t: samples.time(k),
            u_prev: state.u.clone(),
            u,
            du,
            w,
        };
        states.push(std::mem::replace(&mut state, next));
        released.push(space.released());
        last_space = space;
    }
    states.push(state);
    Ok(Trajectory::new(tau, states, released, Vec::new()))
}

/// L2 norm of a strain field.
pub fn strain_norm(fe: &FeSpace, g: &StrainField) -> f64 {
    fe.strain_inner(None, g, g).sqrt()
}

/// Outcome of [`equivalence_check`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EquivalenceReport {
    /// `max_k ||w_k - w_closed(t_k)||`.
    pub w_error: f64,
    /// `max_k ||w_k||`, for relative statements.
    pub w_scale: f64,
    /// Largest Euclidean norm over knots of the memory-form residual vector
    /// on the free DOFs, with the convolution rebuilt from the trajectory.
    pub weak_residual: f64,
    /// Largest norm of the corresponding right-hand side, for scale.
    pub residual_scale: f64,
}

/// Compares the coupled scheme's internal variable with the closed-form
/// convolution of its own strain history, and evaluates the residual of the
/// memory form for the coupled displacements.
pub fn equivalence_check(problem: &Problem, traj: &Trajectory) -> Result<EquivalenceReport> {
    let samples = problem.samples(traj.n())?;
    let fe = problem.fe();
    let mats = problem.materials();
    let beta = problem.beta();
    let tau = traj.tau();
    let closed = w_closed_form_knots(fe, traj, samples.w0(), beta);
    let mut w_error: f64 = 0.0;
    let mut w_scale: f64 = 0.0;
    for (k, wc) in closed.iter().enumerate() {
        let diff = StrainField::lin_comb(1.0, traj.w(k), -1.0, wc);
        w_error = w_error.max(strain_norm(fe, &diff));
        w_scale = w_scale.max(strain_norm(fe, traj.w(k)));
    }

    let mut weak_residual: f64 = 0.0;
    let mut residual_scale: f64 = 0.0;
    let a = mats.tensors(Modulus::Elastic);
    let b = mats.tensors(Modulus::Viscous);
    for k in 1..=traj.n() {
        let space = problem.space_at(samples.time(k))?;
        let u = traj.u(k);
        let d2u: Vec<f64> = traj
            .du(k)
            .iter()
            .zip(traj.du(k - 1))
            .map(|(p, q)| (p - q) / tau)
            .collect();
        let eu = fe.strain(u);
        // memory term B (w - w0 e^{-t/beta}) = B C_k
        let mut conv = closed[k].clone();
        conv.axpy(-(-samples.time(k) / beta).exp(), samples.w0());
        let mut stress = fe.tensor_apply(a, &eu);
        stress.axpy(1.0, &fe.tensor_apply(b, &eu));
        stress.axpy(-1.0, &fe.tensor_apply(b, &conv));
        stress.axpy(-1.0, &samples.big_f(k));
        let f_avg = samples.f_avg(k);
        let nodal: Vec<f64> = d2u.iter().zip(&f_avg).map(|(p, q)| p - q).collect();
        let mut r = reduced_load(fe, &space, Some(&nodal), Some(&stress));
        let mut load = reduced_load(fe, &space, Some(&f_avg), Some(&samples.big_f(k)));
        if let Some(nk) = samples.neumann(k)? {
            for ((ri, li), v) in r
                .iter_mut()
                .zip(load.iter_mut())
                .zip(space.restrict_sum(&nk))
            {
                *ri -= v;
                *li += v;
            }
        }
        let inertia = reduced_load(fe, &space, Some(&d2u), None);
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        weak_residual = weak_residual.max(norm(&r));
        residual_scale = residual_scale.max(norm(&load)).max(norm(&inertia));
    }
    Ok(EquivalenceReport {
        w_error,
        w_scale,
        weak_residual,
        residual_scale,
    })
}

/// A prescribed strain history on a finite window `[-T_p, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PastHistory {
    times: Vec<f64>,
    strains: Vec<StrainField>,
}

impl PastHistory {
    pub fn new(times: Vec<f64>, strains: Vec<StrainField>) -> Result<Self> {
        if times.len() != strains.len() || times.len() < 2 {
            bail!(
                Data,
                "past history needs at least two samples with one strain field each"
            );
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            bail!(
                Data,
                "past-history sample times must be strictly increasing"
            );
        }
        let last = *times.last().expect("two samples");
        if last.abs() > 1e-12 {
            bail!(Data, "past history must end at t = 0, ends at {last}");
        }
        let shape = (strains[0].n_elements(), strains[0].dim());
        if strains.iter().any(|s| (s.n_elements(), s.dim()) != shape) {
            bail!(Data, "past-history strain fields differ in size");
        }
        Ok(PastHistory { times, strains })
    }

    /// Spatially uniform strain history from a CSV file with rows
    /// `t, components...` (tensor components as in the scenario data).
    pub fn read_csv(path: &Path, kinematics: Kinematics, n_elements: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let sd = kinematics.strain_dim();
        let mut times = Vec::new();
        let mut strains = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| {
                    Error::Data(format!("{}: row {}: not a number", path.display(), i + 2))
                })?;
            if vals.len() != sd + 1 {
                bail!(
                    Data,
                    "{}: row {}: expected time and {sd} strain components",
                    path.display(),
                    i + 2
                );
            }
            if vals[0] > 1e-12 {
                bail!(Data, "{}: past-history times must be <= 0", path.display());
            }
            times.push(vals[0]);
            let mut c = [0.0; 3];
            c[..sd].copy_from_slice(&vals[1..]);
            let m = to_mandel(kinematics, c);
            strains.push(StrainField::from_fn(n_elements, sd, |_| m));
        }
        PastHistory::new(times, strains)
    }

    /// Restriction to `[-window, 0]`, interpolating at the cut.
    pub fn truncated(&self, window: f64) -> Result<Self> {
        if !(window > 0.0) {
            bail!(Config, "past-history window must be positive");
        }
        let cut = -window;
        if self.times[0] >= cut {
            return Ok(self.clone());
        }
        let i = self.times.partition_point(|&t| t <= cut);
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let s = (cut - t0) / (t1 - t0);
        let mut times = vec![cut];
        let mut strains = vec![StrainField::lin_comb(
            1.0 - s,
            &self.strains[i - 1],
            s,
            &self.strains[i],
        )];
        if t1 - cut <= 1e-12 * window {
            times.clear();
            strains.clear();
        }
        times.extend_from_slice(&self.times[i..]);
        strains.extend_from_slice(&self.strains[i..]);
        PastHistory::new(times, strains)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn strains(&self) -> &[StrainField] {
        &self.strains
    }

    /// `int e^{t/beta} ||eu_p(t)|| dt` over the window, by the trapezoid rule.
    pub fn weight(&self, fe: &FeSpace, beta: f64) -> f64 {
        let vals: Vec<f64> = self
            .times
            .iter()
            .zip(&self.strains)
            .map(|(t, s)| (t / beta).exp() * strain_norm(fe, s))
            .collect();
        self.times
            .windows(2)
            .zip(vals.windows(2))
            .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
            .sum()
    }
}

fn to_mandel(kin: Kinematics, c: [f64; 3]) -> [f64; 3] {
    match kin {
        Kinematics::Antiplane => StrainTensor::Antiplane([c[0], c[1]]).to_mandel(),
        Kinematics::Planar => StrainTensor::Planar {
            xx: c[0],
            yy: c[1],
            xy: c[2],
        }
        .to_mandel(),
    }
}

/// Panels per unit `beta` of the composite Gauss rule for displacement
/// histories.
const PANELS_PER_BETA: f64 = 4.0;

/// Reduces a displacement history `u_p(t, x, y)`, `t` in `[-window, 0]`, to
/// `w0 = (1/beta) int e^{s/beta} eu_p(s) ds` by a composite 4-point Gauss rule
/// in time; the strain at each time is that of the nodal interpolant.
pub fn w0_from_displacement(
    mesh: &Mesh2D,
    fe: &FeSpace,
    u_p: &FieldExpr,
    beta: f64,
    window: f64,
) -> Result<StrainField> {
    if !(window > 0.0) || !window.is_finite() {
        bail!(Config, "past-history window must be positive, got {window}");
    }
    if !(beta > 0.0) {
        bail!(Config, "beta must be positive");
    }
    let nc = fe.kinematics().ncomp();
    if u_p.len() != nc {
        bail!(
            Config,
            "past history needs {nc} displacement component(s), got {}",
            u_p.len()
        );
    }
    let panels = (window / beta * PANELS_PER_BETA).ceil().max(1.0) as usize;
    let h = window / panels as f64;
    let mut w0 = StrainField::zeros(fe.n_elements(), fe.strain_dim());
    for p in 0..panels {
        for (x, wq) in GAUSS4 {
            let s = -window + (p as f64 + x) * h;
            let u: Vec<f64> = mesh
                .nodes()
                .iter()
                .flat_map(|&q| u_p.eval(s, q).into_iter().take(nc))
                .collect();
            w0.axpy(wq * h * (s / beta).exp() / beta, &fe.strain(&u));
        }
    }
    Ok(w0)
}

/// Reduces a past history to `w0 = (1/beta) int_{-T_p}^0 e^{s/beta} eu_p(s) ds`
/// (piecewise-linear history, integrated exactly) and returns it with the
/// fading load `F0(t) = e^{-t/beta} B w0` it generates.
pub fn past_history_to_w0(
    hist: &PastHistory,
    fe: &FeSpace,
    materials: &crate::materials::MaterialField,
) -> (StrainField, impl Fn(f64) -> StrainField) {
    let beta = materials.beta();
    let t0 = hist.times[0];
    let mut acc = ConvAccumulator::new(hist.strains[0].clone(), beta);
    for i in 1..hist.times.len() {
        acc.update(hist.times[i] - hist.times[i - 1], hist.strains[i].clone());
    }
    debug!("past history reduced over window [{t0}, 0]");
    let w0 = acc.value().clone();
    let bw0 = fe.tensor_apply(materials.tensors(Modulus::Viscous), &w0);
    (w0, move |t: f64| bw0.scaled((-t / beta).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(v: f64) -> StrainField {
        StrainField::from_fn(1, 2, |_| [v, 2.0 * v, 0.0])
    }

    /// Composite Simpson rule, an independent quadrature oracle.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
        let h = (b - a) / (2 * m) as f64;
        let mut s = f(a) + f(b);
        for i in 1..2 * m {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn weights_match_quadrature() {
        for (dt, beta) in [(0.1, 1.0), (1e-4, 0.5), (3.0, 0.2), (0.009, 1.0)] {
            let (e, a0, a1) = exp_weights(dt, beta);
            assert!((e - (-dt / beta).exp()).abs() < 1e-15);
            let k = |s: f64| (-(dt - s) / beta).exp() / beta;
            let q0 = simpson(|s| k(s) * (1.0 - s / dt), 0.0, dt, 2000);
            let q1 = simpson(|s| k(s) * s / dt, 0.0, dt, 2000);
            assert!(
                (a0 - q0).abs() < 1e-12 * (1.0 + q0),
                "{dt} {beta}: {a0} vs {q0}"
            );
            assert!((a1 - q1).abs() < 1e-12 * (1.0 + q1));
        }
    }

    #[test]
    fn series_branch_is_continuous() {
        let below = exp_weights(0.999_999e-2, 1.0).1;
        let above = exp_weights(1.000_001e-2, 1.0).1;
        assert!((below - above).abs() < 1e-8);
    }

    #[test]
    fn constant_input_reaches_steady_state() {
        let beta = 0.7;
        let mut acc = ConvAccumulator::new(field(3.0), beta);
        for _ in 0..50 {
            acc.update(0.1, field(3.0));
        }
        let want = 3.0 * (1.0 - (-5.0f64 / beta).exp());
        assert!((acc.value().get(0)[0] - want).abs() < 1e-12);
    }

    #[test]
    fn linear_input_closed_form() {
        // int_0^t k(t - s) s ds = t - beta + beta e^{-t/beta}
        let beta = 0.4;
        let mut acc = ConvAccumulator::new(field(0.0), beta);
        let dt = 0.05;
        for i in 1..=40 {
            acc.update(dt, field(i as f64 * dt));
            let t = i as f64 * dt;
            let want = t - beta + beta * (-t / beta).exp();
            assert!((acc.value().get(0)[0] - want).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn semigroup(t1 in 0.01..1.0f64, t2 in 0.0..1.0f64, g0 in -1.0..1.0f64, g2 in -1.0..1.0f64, beta in 0.1..2.0f64) {
            let t2 = t1 + t2;
            let g1 = g0 + (g2 - g0) * t1 / t2;
            let mut split = ConvAccumulator::new(field(g0), beta);
            split.update(t1, field(g1));
            split.update(t2 - t1, field(g2));
            let mut direct = ConvAccumulator::new(field(g0), beta);
            direct.update(t2, field(g2));
            prop_assert!((split.value().get(0)[0] - direct.value().get(0)[0]).abs() < 1e-12);
        }
    }
}

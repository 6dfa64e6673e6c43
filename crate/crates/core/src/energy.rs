//! Energy bookkeeping for computed trajectories.
//!
//! The mechanical energy is
//! `E = 1/2 ||u'||^2 + 1/2 (A eu, eu) + 1/2 (B(eu - w), eu - w)` and the
//! dissipation `D = beta int (B w', w')`. On a discrete trajectory `u'` is the
//! backward difference `du_k`, and `w` is piecewise linear in time, so the
//! dissipation is the exact sum `sum tau beta (B dw_k, dw_k)`.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{bail, Error, Result};
use crate::fe::{FeSpace, StrainField};
use crate::materials::{MaterialField, Modulus};
use crate::problem::Problem;
use crate::stepper::{StepState, Trajectory};

/// Relative tolerance of the per-step balance identity.
pub const BALANCE_TOL: f64 = 1e-9;

/// Floor added to the discrete inequality check, relative to the energies.
pub const ROUNDING_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Energies {
    pub kinetic: f64,
    pub elastic: f64,
    pub coupling: f64,
}

impl Energies {
    pub fn total(&self) -> f64 {
        self.kinetic + self.elastic + self.coupling
    }
}

/// Energy of a state with velocity `v`, strain `eu` and internal variable `w`.
pub fn mech_energy(
    fe: &FeSpace,
    mats: &MaterialField,
    v: &[f64],
    eu: &StrainField,
    w: &StrainField,
) -> Energies {
    let d = StrainField::lin_comb(1.0, eu, -1.0, w);
    Energies {
        kinetic: 0.5 * fe.mass_inner(v, v),
        elastic: 0.5 * fe.strain_inner(Some(mats.tensors(Modulus::Elastic)), eu, eu),
        coupling: 0.5 * fe.strain_inner(Some(mats.tensors(Modulus::Viscous)), &d, &d),
    }
}

/// `beta tau (B dw, dw)` for one step from `w_prev` to `w`.
pub fn step_dissipation(
    fe: &FeSpace,
    mats: &MaterialField,
    w_prev: &StrainField,
    w: &StrainField,
    tau: f64,
) -> f64 {
    let dw = StrainField::lin_comb(1.0 / tau, w, -1.0 / tau, w_prev);
    mats.beta() * tau * fe.strain_inner(Some(mats.tensors(Modulus::Viscous)), &dw, &dw)
}

/// Terms of the balance identity of step `k`, all multiplied by `tau`:
/// `(d2u, du) + a(om, dom) + beta (B dw, dw) = W_k` with
/// `W_k = (f, du - dz) + (F - h, e(du - dz)) + (d2u, dz) + a(om, (dz, 0))`
/// (plus the traction on `du - dz`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepBalance {
    pub k: usize,
    pub inertia: f64,
    pub potential: f64,
    pub dissipation: f64,
    pub work: f64,
    pub residual: f64,
    /// Largest magnitude among the terms.
    pub scale: f64,
}

impl StepBalance {
    pub fn relative_residual(&self) -> f64 {
        self.residual.abs() / (1.0 + self.scale)
    }
}

/// One row of the ledger, at knot `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerRow {
    pub k: usize,
    pub t: f64,
    pub kinetic: f64,
    pub elastic: f64,
    pub coupling: f64,
    /// Cumulative dissipation up to `t`.
    pub dissipation: f64,
    /// Work of the data up to `t`, by the trapezoid rule on the knots.
    pub total_work: f64,
    /// Balance residual of step `k` (zero at `k = 0`).
    pub balance_residual: f64,
    /// `E(0) + W(t) - E(t) - D(t)`.
    pub inequality_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ledger {
    pub rows: Vec<LedgerRow>,
    pub steps: Vec<StepBalance>,
    /// `sum_{j <= k} tau W_j`, with a leading zero.
    pub discrete_work: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

impl Ledger {
    /// Builds the ledger of a trajectory computed for `problem`.
    pub fn build(problem: &Problem, traj: &Trajectory) -> Result<Self> {
        let n = traj.n();
        let samples = problem.samples(n)?;
        let fe = problem.fe();
        let mats = problem.materials();
        let a = mats.tensors(Modulus::Elastic);
        let b = mats.tensors(Modulus::Viscous);
        let beta = mats.beta();
        let tau = traj.tau();
        let w0 = samples.w0();
        let bw0 = samples.bw0();

        let strains: Vec<StrainField> = (0..=n)
            .into_par_iter()
            .map(|k| fe.strain(traj.u(k)))
            .collect();

        let steps: Vec<StepBalance> = (1..=n)
            .into_par_iter()
            .map(|k| -> Result<StepBalance> {
                let eu = &strains[k];
                let w = traj.w(k);
                let d2u: Vec<f64> = sub(traj.du(k), traj.du(k - 1))
                    .iter()
                    .map(|x| x / tau)
                    .collect();
                let dz = samples.dz(k);
                let du = traj.du(k);
                let test = sub(du, &dz);
                let e_test = fe.strain(&test);
                let e_dz = fe.strain(&dz);
                let e_du = StrainField::lin_comb(1.0 / tau, eu, -1.0 / tau, &strains[k - 1]);
                let dw = StrainField::lin_comb(1.0 / tau, w, -1.0 / tau, traj.w(k - 1));
                let slip = StrainField::lin_comb(1.0, eu, -1.0, w);
                let dslip = StrainField::lin_comb(1.0, &e_du, -1.0, &dw);

                let inertia = tau * fe.mass_inner(&d2u, du);
                let potential = tau
                    * (fe.strain_inner(Some(a), eu, &e_du)
                        + fe.strain_inner(Some(b), &slip, &dslip));
                let dissipation = tau * beta * fe.strain_inner(Some(b), &dw, &dw);
                let mut parts = vec![
                    fe.mass_inner(&samples.f_avg(k), &test),
                    fe.strain_inner(None, &samples.net_strain_load(k), &e_test),
                    fe.mass_inner(&d2u, &dz),
                    fe.strain_inner(Some(a), eu, &e_dz) + fe.strain_inner(Some(b), &slip, &e_dz),
                ];
                if let Some(nk) = samples.neumann(k)? {
                    parts.push(dot(&nk, &test));
                }
                let work = tau * parts.iter().sum::<f64>();
                let scale = parts
                    .iter()
                    .map(|p| (tau * p).abs())
                    .chain([inertia.abs(), potential.abs(), dissipation.abs()])
                    .fold(0.0, f64::max);
                Ok(StepBalance {
                    k,
                    inertia,
                    potential,
                    dissipation,
                    work,
                    residual: inertia + potential + dissipation - work,
                    scale,
                })
            })
            .collect::<Result<_>>()?;

        // Integrand of the work at each knot, and its point terms.
        let vel = |k: usize| -> Vec<f64> {
            if k == 0 {
                samples.u1()
            } else {
                traj.du(k).to_vec()
            }
        };
        let knot_terms: Vec<(f64, f64)> = (0..=n)
            .into_par_iter()
            .map(|k| -> Result<(f64, f64)> {
                let t = samples.time(k);
                let v = vel(k);
                let eu = &strains[k];
                let z = samples.z_at(t);
                let zd = samples.z_dot_at(t);
                let zdd = samples.z_ddot_at(t);
                let ez = fe.strain(&z);
                let ezd = fe.strain(&zd);
                let decay = (-t / beta).exp();
                let eu_ez = StrainField::lin_comb(1.0, eu, -1.0, &ez);
                let v_zd = sub(&v, &zd);
                let mut stress = fe.tensor_apply(a, eu);
                stress.axpy(1.0, &fe.tensor_apply(b, eu));
                stress.axpy(-1.0, &fe.tensor_apply(b, traj.w(k)));
                let mut integrand = fe.mass_inner(&samples.f_at(t), &v_zd)
                    - fe.strain_inner(None, &samples.big_f_dot_at(t), &eu_ez)
                    + fe.strain_inner(None, &stress, &ezd)
                    - fe.mass_inner(&v, &zdd)
                    + decay * fe.strain_inner(None, bw0, &ezd)
                    - decay / beta * fe.strain_inner(None, bw0, eu);
                if let Some(nt) = samples.neumann_at(t)? {
                    integrand += dot(&nt, &v_zd);
                }
                let point = fe.mass_inner(&v, &zd)
                    + fe.strain_inner(None, &samples.big_f_at(t), &eu_ez)
                    - decay * fe.strain_inner(None, bw0, eu);
                Ok((integrand, point))
            })
            .collect::<Result<_>>()?;

        let e0 = mech_energy(fe, mats, &vel(0), &strains[0], w0);
        let mut rows = Vec::with_capacity(n + 1);
        let mut discrete_work = vec![0.0];
        let mut dissipation = 0.0;
        let mut quad = 0.0;
        for k in 0..=n {
            if k > 0 {
                let s = &steps[k - 1];
                dissipation += s.dissipation;
                discrete_work.push(discrete_work[k - 1] + s.work);
                quad += 0.5 * tau * (knot_terms[k - 1].0 + knot_terms[k].0);
            }
            let en = if k == 0 {
                e0
            } else {
                mech_energy(fe, mats, traj.du(k), &strains[k], traj.w(k))
            };
            let total_work = quad + knot_terms[k].1 - knot_terms[0].1;
            rows.push(LedgerRow {
                k,
                t: samples.time(k),
                kinetic: en.kinetic,
                elastic: en.elastic,
                coupling: en.coupling,
                dissipation,
                total_work,
                balance_residual: if k == 0 { 0.0 } else { steps[k - 1].residual },
                inequality_slack: e0.total() + total_work - en.total() - dissipation,
            });
        }
        Ok(Ledger {
            rows,
            steps,
            discrete_work,
        })
    }

    pub fn max_relative_residual(&self) -> f64 {
        self.steps
            .iter()
            .map(StepBalance::relative_residual)
            .fold(0.0, f64::max)
    }

    pub fn balance_holds(&self) -> bool {
        self.max_relative_residual() <= BALANCE_TOL
    }

    /// Per knot, `E_k + D_k - E_0 - sum tau W_j - sum |res_j|`; the discrete
    /// energy inequality holds when every entry is at most the rounding floor.
    pub fn inequality_excess(&self) -> Vec<f64> {
        let e0 = self.rows[0].kinetic + self.rows[0].elastic + self.rows[0].coupling;
        let mut res_sum = 0.0;
        self.rows
            .iter()
            .map(|r| {
                if r.k > 0 {
                    res_sum += self.steps[r.k - 1].residual.abs();
                }
                let lhs = r.kinetic + r.elastic + r.coupling + r.dissipation;
                let rhs = e0 + self.discrete_work[r.k];
                let floor = ROUNDING_FLOOR * (1.0 + lhs.abs().max(rhs.abs()));
                lhs - rhs - res_sum - floor
            })
            .collect()
    }

    pub fn inequality_holds(&self) -> bool {
        self.inequality_excess().iter().all(|&x| x <= 0.0)
    }

    pub fn min_slack(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.inequality_slack)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut wtr = csv::Writer::from_writer(file);
        for row in &self.rows {
            wtr.serialize(row).map_err(|e| csv_error(path, e))?;
        }
        wtr.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

/// Energy and dissipation written in terms of the displacement history alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UOnlyEnergies {
    pub energy: Vec<f64>,
    pub dissipation: Vec<f64>,
}

/// Evaluates the displacement-only forms of `E(t_k)` and `D(t_k)` by the
/// tensorized trapezoid rule on the knots. Needs `w0 = 0`.
pub fn u_only_energies(problem: &Problem, traj: &Trajectory) -> Result<UOnlyEnergies> {
    let samples = problem.samples(traj.n())?;
    if samples.w0().max_abs() != 0.0 {
        bail!(
            Precondition,
            "displacement-only energies need a zero initial internal variable"
        );
    }
    let fe = problem.fe();
    let mats = problem.materials();
    let a = mats.tensors(Modulus::Elastic);
    let b = mats.tensors(Modulus::Viscous);
    let beta = mats.beta();
    let tau = traj.tau();
    let n = traj.n();
    let strains: Vec<StrainField> = (0..=n)
        .into_par_iter()
        .map(|k| fe.strain(traj.u(k)))
        .collect();
    let bstrains: Vec<StrainField> = strains.par_iter().map(|s| fe.tensor_apply(b, s)).collect();
    let gram: Vec<Vec<f64>> = (0..=n)
        .into_par_iter()
        .map(|i| {
            (0..=n)
                .map(|j| fe.strain_inner(None, &bstrains[i], &strains[j]))
                .collect()
        })
        .collect();
    let t = |k: usize| k as f64 * tau;
    let weight = |i: usize, k: usize| {
        if k == 0 {
            0.0
        } else if i == 0 || i == k {
            0.5 * tau
        } else {
            tau
        }
    };

    // inner[j] = int_0^{t_j} e^{-(t_j - r)/beta} G(r, t_j) dr
    let inner: Vec<f64> = (0..=n)
        .map(|j| {
            (0..=j)
                .map(|i| weight(i, j) * (-(t(j) - t(i)) / beta).exp() * gram[i][j])
                .sum()
        })
        .collect();

    // With q = e^{-tau/beta}, a_i = tau q^{k-i}, the trapezoid weights are
    // a minus half a weight at i = 0 and i = k.
    // lin[m] = sum_{i<=k} a_i G_im, full = sum_{i,j<=k} a_i a_j G_ij.
    let q = (-tau / beta).exp();
    let mut lin = vec![0.0; n + 1];
    let mut full = 0.0;
    let mut diag = 0.0;
    let mut nested = 0.0;
    let mut energy = Vec::with_capacity(n + 1);
    let mut dissipation = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let cross: f64 = (0..k)
            .map(|i| tau * q.powi((k - i) as i32) * gram[i][k])
            .sum();
        full = q * q * full + 2.0 * tau * cross + tau * tau * gram[k][k];
        for (m, l) in lin.iter_mut().enumerate() {
            *l = q * *l + tau * gram[k][m];
        }
        let (double, single) = if k == 0 {
            (0.0, 0.0)
        } else {
            let qk = q.powi(k as i32);
            let c_lin = 0.5 * tau * (qk * lin[0] + lin[k]);
            let c_c =
                0.25 * tau * tau * (qk * qk * gram[0][0] + 2.0 * qk * gram[0][k] + gram[k][k]);
            (
                full - 2.0 * c_lin + c_c,
                lin[k] - 0.5 * tau * (qk * gram[0][k] + gram[k][k]),
            )
        };
        let vel = if k == 0 {
            samples.u1()
        } else {
            traj.du(k).to_vec()
        };
        let eu = &strains[k];
        let e = 0.5 * fe.mass_inner(&vel, &vel)
            + 0.5 * (fe.strain_inner(Some(a), eu, eu) + gram[k][k])
            - single / beta
            + double / (2.0 * beta * beta);
        if k > 0 {
            diag += 0.5 * tau * (gram[k - 1][k - 1] + gram[k][k]);
            nested += 0.5 * tau * (inner[k - 1] + inner[k]);
        }
        let d = diag / beta - nested / (beta * beta) - double / (2.0 * beta * beta);
        energy.push(e);
        dissipation.push(d);
    }
    Ok(UOnlyEnergies {
        energy,
        dissipation,
    })
}

/// How the first step approaches the initial data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialAttainment {
    /// `||u_1 - u0||_V`.
    pub displacement: f64,
    /// `||du_1 - u1||_H`.
    pub velocity: f64,
    /// `||w_1 - w0||`.
    pub internal: f64,
    /// `tau / (beta + tau) ||eu_1 - w0||`, equal to `internal` for the
    /// implicit update.
    pub internal_predicted: f64,
}

impl InitialAttainment {
    pub fn identity_defect(&self) -> f64 {
        (self.internal - self.internal_predicted).abs() / self.internal.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn initial_attainment(problem: &Problem, traj: &Trajectory) -> Result<InitialAttainment> {
    if traj.n() < 1 {
        bail!(Contract, "trajectory has no steps");
    }
    let samples = problem.samples(traj.n())?;
    let fe = problem.fe();
    let tau = traj.tau();
    let beta = problem.beta();
    let w0 = samples.w0();
    let eu1 = fe.strain(traj.u(1));
    let dw = StrainField::lin_comb(1.0, traj.w(1), -1.0, w0);
    let gap = StrainField::lin_comb(1.0, &eu1, -1.0, w0);
    let dv = sub(traj.du(1), &samples.u1());
    Ok(InitialAttainment {
        displacement: fe.v_norm(&sub(traj.u(1), traj.u(0)))?,
        velocity: fe.mass_inner(&dv, &dv).sqrt(),
        internal: fe.strain_inner(None, &dw, &dw).sqrt(),
        internal_predicted: tau / (beta + tau) * fe.strain_inner(None, &gap, &gap).sqrt(),
    })
}

/// The convex functional minimized by step `k` from `prev` (the state at
/// `k - 1`), evaluated at a displacement `v` and internal variable `psi`.
pub fn step_functional(
    problem: &Problem,
    traj: &Trajectory,
    prev: &StepState,
    v: &[f64],
    psi: &StrainField,
) -> Result<f64> {
    let k = prev.k + 1;
    let samples = problem.samples(traj.n())?;
    let fe = problem.fe();
    let mats = problem.materials();
    let tau = samples.tau();
    let beta = samples.beta();
    let a = mats.tensors(Modulus::Elastic);
    let b = mats.tensors(Modulus::Viscous);
    let pred: Vec<f64> = v
        .iter()
        .zip(prev.u.iter().zip(&prev.du))
        .map(|(x, (u, du))| x - u - tau * du)
        .collect();
    let ev = fe.strain(v);
    let slip = StrainField::lin_comb(1.0, &ev, -1.0, psi);
    let dpsi = StrainField::lin_comb(1.0, psi, -1.0, &prev.w);
    let mut j = fe.mass_inner(&pred, &pred) / (2.0 * tau * tau)
        + 0.5 * fe.strain_inner(Some(a), &ev, &ev)
        + 0.5 * fe.strain_inner(Some(b), &slip, &slip)
        + beta / (2.0 * tau) * fe.strain_inner(Some(b), &dpsi, &dpsi)
        - fe.mass_inner(&samples.f_avg(k), v)
        - fe.strain_inner(None, &samples.net_strain_load(k), &ev);
    if let Some(nk) = samples.neumann(k)? {
        j -= dot(&nk, v);
    }
    Ok(j)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energies_sum() {
        let e = Energies {
            kinetic: 1.0,
            elastic: 2.0,
            coupling: 0.5,
        };
        assert_eq!(e.total(), 3.5);
    }

    #[test]
    fn relative_residual_uses_scale() {
        let s = StepBalance {
            k: 1,
            inertia: 0.0,
            potential: 0.0,
            dissipation: 0.0,
            work: 0.0,
            residual: 2.0,
            scale: 3.0,
        };
        assert_eq!(s.relative_residual(), 0.5);
    }

    /// Direct double sums with the trapezoid weights, cubic in `n`.
    fn u_only_direct(problem: &Problem, traj: &Trajectory) -> (Vec<f64>, Vec<f64>) {
        let fe = problem.fe();
        let b = problem.materials().tensors(Modulus::Viscous);
        let a = problem.materials().tensors(Modulus::Elastic);
        let beta = problem.beta();
        let (tau, n) = (traj.tau(), traj.n());
        let eu: Vec<StrainField> = (0..=n).map(|k| fe.strain(traj.u(k))).collect();
        let g = |i: usize, j: usize| fe.strain_inner(Some(b), &eu[i], &eu[j]);
        let wt = |i: usize, k: usize| {
            if k == 0 {
                0.0
            } else if i == 0 || i == k {
                0.5 * tau
            } else {
                tau
            }
        };
        let kern = |i: usize, k: usize| wt(i, k) * (-((k - i) as f64) * tau / beta).exp();
        let u1 = problem.samples(n).unwrap().u1();
        let (mut es, mut ds) = (vec![], vec![]);
        for k in 0..=n {
            let double: f64 = (0..=k)
                .flat_map(|i| (0..=k).map(move |j| (i, j)))
                .map(|(i, j)| kern(i, k) * kern(j, k) * g(i, j))
                .sum();
            let single: f64 = (0..=k).map(|i| kern(i, k) * g(i, k)).sum();
            let v = if k == 0 {
                u1.clone()
            } else {
                traj.du(k).to_vec()
            };
            es.push(
                0.5 * fe.mass_inner(&v, &v)
                    + 0.5 * (fe.strain_inner(Some(a), &eu[k], &eu[k]) + g(k, k))
                    - single / beta
                    + double / (2.0 * beta * beta),
            );
            let diag: f64 = (0..=k).map(|i| wt(i, k) * g(i, i)).sum();
            let nested: f64 = (0..=k)
                .map(|j| wt(j, k) * (0..=j).map(|i| kern(i, j) * g(i, j)).sum::<f64>())
                .sum();
            ds.push(diag / beta - nested / (beta * beta) - double / (2.0 * beta * beta));
        }
        (es, ds)
    }

    #[test]
    fn u_only_recurrence_matches_direct_sums() {
        let s = crate::scenario::Scenario::builtin("smooth_uncracked").unwrap();
        let traj = crate::stepper::run(&s.problem, 12).unwrap();
        let fast = u_only_energies(&s.problem, &traj).unwrap();
        let (es, ds) = u_only_direct(&s.problem, &traj);
        for k in 0..=12 {
            assert!(
                (fast.energy[k] - es[k]).abs() <= 1e-12 * (1.0 + es[k].abs()),
                "k={k}"
            );
            assert!(
                (fast.dissipation[k] - ds[k]).abs() <= 1e-12 * (1.0 + ds[k].abs()),
                "k={k}"
            );
        }
    }
}

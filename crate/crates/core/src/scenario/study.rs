//! Time-step refinement studies on a fixed mesh.

use rayon::prelude::*;
use serde::Serialize;

use crate::energy::Ledger;
use crate::error::{bail, Result};
use crate::fe::StrainField;
use crate::memory::{equivalence_check, strain_norm};
use crate::problem::Problem;
use crate::stepper::{run, Trajectory};

/// Per-run quantities: the a priori bounded maxima, energy checks, and the
/// internal-variable equivalence error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberMetrics {
    pub n: usize,
    pub tau: f64,
    /// `max_k ||du_k||`.
    pub max_velocity: f64,
    /// `max_k ||eu_k||`.
    pub max_strain: f64,
    /// `max_k ||w_k||`.
    pub max_internal: f64,
    /// `sum_k tau ||dw_k||^2`.
    pub internal_rate: f64,
    pub max_balance_residual: f64,
    pub inequality_holds: bool,
    pub min_slack: f64,
    pub w_equivalence_error: f64,
}

/// Differences between two runs at the coarse knots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDiff {
    pub n_coarse: usize,
    pub n_fine: usize,
    /// `max_k ||u_coarse - u_fine||_V`.
    pub v_diff: f64,
    /// `max_k ||u_coarse - u_fine||_H`.
    pub h_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub n_list: Vec<usize>,
    pub members: Vec<MemberMetrics>,
    pub diffs: Vec<PairDiff>,
    /// Orders from consecutive differences; `None` where undefined.
    pub orders_v: Vec<Option<f64>>,
    pub orders_h: Vec<Option<f64>>,
}

impl ConvergenceReport {
    /// Largest over smallest of each monitored maximum across the runs.
    pub fn bound_spreads(&self) -> [f64; 4] {
        let spread = |f: &dyn Fn(&MemberMetrics) -> f64| {
            let (lo, hi) = self
                .members
                .iter()
                .map(f)
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), x| {
                    (lo.min(x), hi.max(x))
                });
            if hi == 0.0 {
                1.0
            } else {
                hi / lo
            }
        };
        [
            spread(&|m| m.max_velocity),
            spread(&|m| m.max_strain),
            spread(&|m| m.max_internal),
            spread(&|m| m.internal_rate),
        ]
    }
}

fn order(d0: f64, d1: f64, ratio: f64) -> Option<f64> {
    let p = (d0 / d1).ln() / ratio.ln();
    (d0 > 0.0 && d1 > 0.0 && p.is_finite()).then_some(p)
}

fn metrics(problem: &Problem, traj: &Trajectory) -> Result<MemberMetrics> {
    let fe = problem.fe();
    let n = traj.n();
    let tau = traj.tau();
    let mut m = MemberMetrics {
        n,
        tau,
        max_velocity: 0.0,
        max_strain: 0.0,
        max_internal: 0.0,
        internal_rate: 0.0,
        max_balance_residual: 0.0,
        inequality_holds: true,
        min_slack: 0.0,
        w_equivalence_error: 0.0,
    };
    for k in 0..=n {
        m.max_velocity = m
            .max_velocity
            .max(fe.mass_inner(traj.du(k), traj.du(k)).sqrt());
        m.max_strain = m.max_strain.max(strain_norm(fe, &fe.strain(traj.u(k))));
        m.max_internal = m.max_internal.max(strain_norm(fe, traj.w(k)));
        if k > 0 {
            let dw = StrainField::lin_comb(1.0 / tau, traj.w(k), -1.0 / tau, traj.w(k - 1));
            m.internal_rate += tau * fe.strain_inner(None, &dw, &dw);
        }
    }
    let ledger = Ledger::build(problem, traj)?;
    m.max_balance_residual = ledger.max_relative_residual();
    m.inequality_holds = ledger.inequality_holds();
    m.min_slack = ledger.min_slack();
    m.w_equivalence_error = equivalence_check(problem, traj)?.w_error;
    Ok(m)
}

/// Runs the problem for every `n` (in parallel, each run independent) and
/// compares consecutive runs at the coarse knots. Each `n` must divide the next.
pub fn convergence_study(problem: &Problem, n_list: &[usize]) -> Result<ConvergenceReport> {
    if n_list.len() < 2 {
        bail!(Config, "a convergence study needs at least two step counts");
    }
    if n_list[0] < 2 {
        bail!(Config, "step counts must be at least 2");
    }
    for w in n_list.windows(2) {
        if !(w[1] > w[0]) || w[1] % w[0] != 0 {
            bail!(
                Config,
                "step counts must increase and each must divide the next, got {} then {}",
                w[0],
                w[1]
            );
        }
    }
    let runs: Vec<(Trajectory, MemberMetrics)> = n_list
        .par_iter()
        .map(|&n| {
            let traj = run(problem, n)?;
            let m = metrics(problem, &traj)?;
            Ok((traj, m))
        })
        .collect::<Result<_>>()?;

    let fe = problem.fe();
    let diffs: Vec<PairDiff> = runs
        .windows(2)
        .map(|pair| {
            let (c, f) = (&pair[0].0, &pair[1].0);
            let r = f.n() / c.n();
            let mut d = PairDiff {
                n_coarse: c.n(),
                n_fine: f.n(),
                v_diff: 0.0,
                h_diff: 0.0,
            };
            for k in 0..=c.n() {
                let e: Vec<f64> = c.u(k).iter().zip(f.u(r * k)).map(|(a, b)| a - b).collect();
                d.v_diff = d.v_diff.max(fe.v_norm(&e)?);
                d.h_diff = d.h_diff.max(fe.mass_inner(&e, &e).sqrt());
            }
            Ok(d)
        })
        .collect::<Result<_>>()?;
    let orders = |get: fn(&PairDiff) -> f64| -> Vec<Option<f64>> {
        diffs
            .windows(2)
            .map(|w| {
                order(
                    get(&w[0]),
                    get(&w[1]),
                    w[1].n_coarse as f64 / w[0].n_coarse as f64,
                )
            })
            .collect()
    };
    Ok(ConvergenceReport {
        n_list: n_list.to_vec(),
        orders_v: orders(|d| d.v_diff),
        orders_h: orders(|d| d.h_diff),
        members: runs.into_iter().map(|(_, m)| m).collect(),
        diffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_of_halving_differences() {
        assert!((order(0.4, 0.2, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(order(0.0, 0.0, 2.0), None);
        assert_eq!(order(1.0, 0.0, 2.0), None);
    }
}

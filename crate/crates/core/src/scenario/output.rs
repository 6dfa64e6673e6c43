//! Running a scenario and writing its artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::Serialize;

use super::Scenario;
use crate::energy::{Ledger, BALANCE_TOL};
use crate::error::{Error, Result};
use crate::memory::{equivalence_check, EquivalenceReport};
use crate::mesh::Mesh2D;
use crate::stepper::{run, Interp, Trajectory};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub steps: Option<usize>,
    pub no_checks: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub mode: String,
    pub steps: usize,
    pub tau: f64,
    pub horizon: f64,
    pub n_elements: usize,
    pub n_dofs: usize,
    pub released_final: usize,
    pub refactorizations: usize,
    pub runtime_seconds: f64,
    pub out_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<CheckOutcome>>,
    pub all_passed: bool,
}

fn check(name: &str, passed: bool, value: f64, tolerance: f64) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        passed,
        value,
        tolerance,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

/// Writes the displacement at time `t` as one `x y u...` row per node.
pub fn write_snapshot(
    path: &Path,
    mesh: &Mesh2D,
    traj: &Trajectory,
    t: f64,
    mode: &str,
) -> Result<()> {
    let u = traj.interpolate(t, Interp::PwLinear)?;
    let nc = u.len() / mesh.n_nodes();
    let mut out = String::new();
    let cols = if nc == 1 { "x y u" } else { "x y ux uy" };
    writeln!(out, "# t = {t:.17e}").unwrap();
    writeln!(out, "# mode = {mode}").unwrap();
    writeln!(out, "# columns: {cols}").unwrap();
    for (i, p) in mesh.nodes().iter().enumerate() {
        write!(out, "{:.17e} {:.17e}", p[0], p[1]).unwrap();
        for c in 0..nc {
            write!(out, " {:.17e}", u[i * nc + c]).unwrap();
        }
        out.push('\n');
    }
    write(path, &out)
}

/// Runs the scenario and writes `ledger.csv`, `equivalence.json`, the
/// snapshots and `summary.json` to the output directory.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<RunSummary> {
    let cfg = &scenario.config;
    let problem = &scenario.problem;
    let steps = opts.steps.unwrap_or(cfg.steps);
    let out_dir = match (&opts.out_dir, &cfg.output.dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => scenario.base_dir.join(d),
        (None, None) => PathBuf::from(format!("{}-out", scenario.name)),
    };
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let start = Instant::now();
    let traj = run(problem, steps)?;
    let ledger = Ledger::build(problem, &traj)?;
    let runtime_seconds = start.elapsed().as_secs_f64();
    info!("{}: {steps} steps in {runtime_seconds:.2} s", scenario.name);

    ledger.write_csv(&out_dir.join("ledger.csv"))?;
    let equivalence: EquivalenceReport = equivalence_check(problem, &traj)?;
    write(&out_dir.join("equivalence.json"), &to_json(&equivalence))?;

    let mut times = cfg.output.snapshots.clone();
    times.push(problem.horizon());
    times.sort_by(f64::total_cmp);
    times.dedup();
    for (i, &t) in times.iter().enumerate() {
        let path = out_dir.join(format!("snapshot_{i:03}.txt"));
        write_snapshot(&path, problem.mesh(), &traj, t, &cfg.mode)?;
    }

    let checks = if opts.no_checks || !cfg.checks {
        None
    } else {
        let tau = traj.tau();
        let symmetry = traj
            .solves()
            .iter()
            .map(|s| s.symmetry_defect)
            .fold(0.0, f64::max);
        let pivot = traj
            .solves()
            .iter()
            .map(|s| s.pivot_ratio)
            .fold(f64::INFINITY, f64::min);
        let monotone = traj.released().windows(2).all(|w| w[1] >= w[0]);
        let excess = ledger
            .inequality_excess()
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let slack_tol = cfg.slack_per_tau * tau;
        Some(vec![
            check(
                "balance",
                ledger.balance_holds(),
                ledger.max_relative_residual(),
                BALANCE_TOL,
            ),
            check("discrete_inequality", excess <= 0.0, excess, 0.0),
            check(
                "continuous_inequality",
                ledger.min_slack() >= -slack_tol,
                ledger.min_slack(),
                slack_tol,
            ),
            check("operator_symmetry", symmetry == 0.0, symmetry, 0.0),
            check("factorization", pivot.is_nan() || pivot > 0.0, pivot, 0.0),
            check(
                "tie_release_monotone",
                monotone,
                *traj.released().last().unwrap_or(&0) as f64,
                0.0,
            ),
        ])
    };
    let all_passed = checks.as_ref().is_none_or(|c| c.iter().all(|c| c.passed));
    let summary = RunSummary {
        scenario: scenario.name.clone(),
        mode: cfg.mode.clone(),
        steps,
        tau: traj.tau(),
        horizon: problem.horizon(),
        n_elements: problem.mesh().n_triangles(),
        n_dofs: problem.fe().n_dofs(),
        released_final: *traj.released().last().unwrap_or(&0),
        refactorizations: traj.solves().len(),
        runtime_seconds,
        out_dir: out_dir.clone(),
        checks,
        all_passed,
    };
    write(&out_dir.join("summary.json"), &to_json(&summary))?;
    Ok(summary)
}

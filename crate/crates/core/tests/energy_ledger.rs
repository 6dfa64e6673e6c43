mod common;

use common::{scenario, square};
use viscrack::energy::{initial_attainment, mech_energy, u_only_energies, Ledger};
use viscrack::fe::StrainField;
use viscrack::materials::Modulus;
use viscrack::memory::w_closed_form_knots;
use viscrack::problem::Problem;
use viscrack::scenario::{run_scenario, RunOptions, Scenario};
use viscrack::stepper::{run, StepState, Trajectory};
use viscrack::Error;

/// A trajectory given by `u(t_k)`, with `w` supplied per knot.
fn fabricate(
    problem: &Problem,
    n: usize,
    u: impl Fn(f64) -> Vec<f64>,
    w: impl Fn(usize) -> StrainField,
) -> Trajectory {
    let tau = problem.horizon() / n as f64;
    let states = (0..=n)
        .map(|k| {
            let t = k as f64 * tau;
            let (uk, up) = (u(t), u(t - tau));
            let du = uk.iter().zip(&up).map(|(a, b)| (a - b) / tau).collect();
            StepState {
                k,
                t,
                u_prev: up,
                u: uk,
                du,
                w: w(k),
            }
        })
        .collect();
    Trajectory::new(tau, states, vec![0; n + 1], Vec::new())
}

#[test]
fn rigid_transport_does_no_work() {
    let s = scenario(&square(4, "[data]\nz = [\"0.3 * t\"]\nu1 = [\"0.3\"]\n"));
    let traj = run(&s.problem, 16).unwrap();
    for k in 0..=16 {
        let t = k as f64 / 16.0;
        assert!(traj.u(k).iter().all(|x| (x - 0.3 * t).abs() < 1e-12));
    }
    let ledger = Ledger::build(&s.problem, &traj).unwrap();
    for r in &ledger.rows {
        assert!(r.total_work.abs() < 1e-12, "W = {}", r.total_work);
        assert!((r.kinetic - 0.045).abs() < 1e-12);
        assert!(r.dissipation.abs() < 1e-12 && r.inequality_slack.abs() < 1e-12);
    }
    assert!(ledger.balance_holds() && ledger.inequality_holds());
}

#[test]
fn constant_force_on_uniform_motion() {
    let text = square(3, "[data]\nf = [\"2.5\"]\nu1 = [\"0.4\"]\n").replace(
        "ny = 3 }",
        "ny = 3 }\nneumann_sides = [\"left\", \"right\", \"bottom\", \"top\"]",
    );
    let s = scenario(&text);
    let n = 10;
    let zero = StrainField::zeros(s.problem.fe().n_elements(), s.problem.fe().strain_dim());
    let nd = s.problem.fe().n_dofs();
    let traj = fabricate(&s.problem, n, |t| vec![0.4 * t; nd], |_| zero.clone());
    let ledger = Ledger::build(&s.problem, &traj).unwrap();
    for (k, r) in ledger.rows.iter().enumerate() {
        let t = k as f64 / n as f64;
        assert!((r.total_work - t * 2.5 * 0.4).abs() < 1e-12, "k = {k}");
    }
}

fn loaded() -> Scenario {
    scenario(&square(
        8,
        r#"[crack]
path = [[0.25, 0.5], [0.75, 0.5]]
schedule = [[0.0, 0.0], [1.0, 0.5]]
[data]
f = ["sin(pi * x) * cos(2 * pi * y) * (1 + t)"]
F = ["0.3 * t", "0.2 * x * y"]
z = ["0.05 * t * t * x"]
w0 = ["0.1 * y", "-0.2 * x"]
u0 = ["x * (1 - x) * y * (1 - y)"]
"#,
    ))
}

#[test]
fn ledger_balances_with_every_load() {
    let s = loaded();
    let traj = run(&s.problem, 32).unwrap();
    let ledger = Ledger::build(&s.problem, &traj).unwrap();
    assert!(
        ledger.balance_holds(),
        "residual {}",
        ledger.max_relative_residual()
    );
    assert!(ledger.inequality_holds());

    // dissipation is the running sum of tau beta (B dw, dw)
    let fe = s.problem.fe();
    let b = s.problem.materials().tensors(Modulus::Viscous);
    let (tau, beta) = (traj.tau(), s.problem.beta());
    let mut d = 0.0;
    for k in 1..=32 {
        let dw = StrainField::lin_comb(1.0 / tau, traj.w(k), -1.0 / tau, traj.w(k - 1));
        d += tau * beta * fe.strain_inner(Some(b), &dw, &dw);
        let row = &ledger.rows[k];
        assert!((row.dissipation - d).abs() <= 1e-13 * (1.0 + d));
        assert!(row.dissipation >= ledger.rows[k - 1].dissipation);
    }

    // mechanical energy from the parts
    let mats = s.problem.materials();
    let e = mech_energy(fe, mats, traj.du(5), &fe.strain(traj.u(5)), traj.w(5));
    let row = &ledger.rows[5];
    assert_eq!(
        (e.kinetic, e.elastic, e.coupling),
        (row.kinetic, row.elastic, row.coupling)
    );
}

#[test]
fn boundary_driven_crack_slack_is_order_tau() {
    let text = viscrack::scenario::builtin_source("cracked_plate")
        .unwrap()
        .replace(
            "f = [\"5 * sin(pi * x) * sin(2 * pi * y) * sin(pi * t)\"]",
            "",
        )
        .replace(
            "z = [\"0\"]",
            "z = [\"0.2 * sin(pi * t) * x\"]\nu1 = [\"0.2 * pi * x\"]",
        );
    let s = scenario(&text);
    assert!(s.problem.data().neumann.is_none());
    for n in [32, 64] {
        let traj = run(&s.problem, n).unwrap();
        let ledger = Ledger::build(&s.problem, &traj).unwrap();
        assert!(ledger.balance_holds() && ledger.inequality_holds());
        let min = ledger.min_slack();
        assert!(min >= -traj.tau(), "n = {n}: min slack {min:e}");
    }
}

#[test]
fn zero_scenario_ledger_and_attainment_vanish() {
    let s = Scenario::builtin("zero").unwrap();
    let traj = run(&s.problem, 8).unwrap();
    let ledger = Ledger::build(&s.problem, &traj).unwrap();
    assert!(ledger.steps.iter().all(|b| b.residual == 0.0));
    assert!(ledger
        .rows
        .iter()
        .all(|r| r.inequality_slack == 0.0 && r.total_work == 0.0));
    let att = initial_attainment(&s.problem, &traj).unwrap();
    assert_eq!(
        (att.displacement, att.velocity, att.internal),
        (0.0, 0.0, 0.0)
    );
    let uo = u_only_energies(&s.problem, &traj).unwrap();
    assert!(uo.energy.iter().chain(&uo.dissipation).all(|&x| x == 0.0));
}

#[test]
fn u_only_needs_zero_initial_internal_variable() {
    let s = loaded();
    let traj = run(&s.problem, 4).unwrap();
    assert!(matches!(
        u_only_energies(&s.problem, &traj),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn u_only_constant_strain_closed_forms() {
    let text = square(
        2,
        "[data]\nu0 = [\"0.3 * x - 0.1 * y\"]\nz = [\"0.3 * x - 0.1 * y\"]\n",
    )
    .replace("beta = 0.5", "beta = 2.0");
    let s = scenario(&text);
    let fe = s.problem.fe();
    let n = 2000;
    let u0 = s.problem.samples(n).unwrap().u0();
    let zero = StrainField::zeros(fe.n_elements(), fe.strain_dim());
    let traj = fabricate(&s.problem, n, |_| u0.clone(), |_| zero.clone());
    let uo = u_only_energies(&s.problem, &traj).unwrap();
    let eu = fe.strain(&u0);
    let a = fe.strain_inner(
        Some(s.problem.materials().tensors(Modulus::Elastic)),
        &eu,
        &eu,
    );
    let b = fe.strain_inner(
        Some(s.problem.materials().tensors(Modulus::Viscous)),
        &eu,
        &eu,
    );
    let beta = 2.0;
    for k in (0..=n).step_by(100) {
        let decay = (-2.0 * k as f64 / n as f64 / beta).exp();
        let e = 0.5 * a + 0.5 * b * decay;
        let d = 0.5 * b * (1.0 - decay);
        assert!((uo.energy[k] - e).abs() < 1e-8 * e, "k = {k}");
        assert!((uo.dissipation[k] - d).abs() < 1e-8 * (0.5 * b), "k = {k}");
    }
}

#[test]
fn u_only_matches_closed_form_internal_variable() {
    let s = Scenario::builtin("smooth_uncracked").unwrap();
    let traj = run(&s.problem, 64).unwrap();
    let uo = u_only_energies(&s.problem, &traj).unwrap();
    let fe = s.problem.fe();
    let zero = StrainField::zeros(fe.n_elements(), fe.strain_dim());
    let closed = w_closed_form_knots(fe, &traj, &zero, s.problem.beta());
    let u1 = s.problem.samples(64).unwrap().u1();
    for (k, wk) in closed.iter().enumerate() {
        let v = if k == 0 {
            u1.clone()
        } else {
            traj.du(k).to_vec()
        };
        let e = mech_energy(fe, s.problem.materials(), &v, &fe.strain(traj.u(k)), wk).total();
        assert!((uo.energy[k] - e).abs() < 1e-4 * e, "k = {k}");
    }
}

#[test]
fn run_scenario_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let s = Scenario::builtin("planar_elastic_crack").unwrap();
    let summary = run_scenario(
        &s,
        &RunOptions {
            out_dir: Some(dir.path().to_path_buf()),
            steps: Some(16),
            no_checks: false,
        },
    )
    .unwrap();
    assert!(summary.all_passed);
    assert_eq!(summary.steps, 16);
    for f in [
        "ledger.csv",
        "equivalence.json",
        "summary.json",
        "snapshot_000.txt",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let ledger = std::fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
    assert_eq!(ledger.lines().count(), 18);
    let snap = std::fs::read_to_string(dir.path().join("snapshot_000.txt")).unwrap();
    assert!(snap.starts_with("# t = "));
    assert_eq!(
        snap.lines().filter(|l| !l.starts_with('#')).count(),
        s.problem.mesh().n_nodes()
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(json["all_passed"], true);
}

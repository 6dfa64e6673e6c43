mod common;

use common::scenario;
use proptest::prelude::*;
use viscrack::energy::Ledger;
use viscrack::stepper::run;

fn random_text(beta: f64, mu_a: f64, mu_b: f64, amp: f64, crack_end: f64, planar: bool) -> String {
    let (mode, f, u1) = if planar {
        (
            "planar",
            format!("[\"{amp} * sin(pi * x) * t\", \"{amp} * cos(pi * y)\"]"),
            "[\"x * (1 - x) * y * (1 - y)\", \"0\"]",
        )
    } else {
        (
            "antiplane",
            format!("[\"{amp} * sin(pi * x) * cos(3 * t)\"]"),
            "[\"x * (1 - x) * y * (1 - y)\"]",
        )
    };
    format!(
        r#"format_version = 1
mode = "{mode}"
beta = {beta}
horizon = 1.0
steps = 8
[geometry]
rect = {{ width = 1.0, height = 1.0, nx = 4, ny = 4 }}
[crack]
path = [[0.25, 0.5], [1.0, 0.5]]
schedule = [[0.0, 0.0], [1.0, {crack_end}]]
[materials]
elastic = {{ lambda = 0.5, mu = {mu_a} }}
viscous = {{ mu = {mu_b} }}
[data]
f = {f}
u1 = {u1}
"#
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn balance_inequality_and_release_hold(
        beta in 0.05..5.0f64,
        mu_a in 0.1..4.0f64,
        mu_b in 0.1..4.0f64,
        amp in -3.0..3.0f64,
        crack_end in 0.0..0.75f64,
        planar in any::<bool>(),
        n in 2usize..12,
    ) {
        let s = scenario(&random_text(beta, mu_a, mu_b, amp, crack_end, planar));
        let traj = run(&s.problem, n).unwrap();
        let ledger = Ledger::build(&s.problem, &traj).unwrap();
        prop_assert!(ledger.balance_holds(), "residual {}", ledger.max_relative_residual());
        prop_assert!(ledger.inequality_holds());
        prop_assert!(traj.released().windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(traj.solves().iter().all(|i| i.symmetry_defect == 0.0));
        for r in ledger.rows.windows(2) {
            prop_assert!(r[1].dissipation >= r[0].dissipation);
        }
    }
}

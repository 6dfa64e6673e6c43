//! `viscrack` command-line driver.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use serde::Serialize;

use viscrack::expr::Expr;
use viscrack::scenario::{
    convergence_study, run_scenario, zero_dim_oracle_steps, OdeParams, RunOptions, Scenario,
    BUILTIN_NAMES,
};

/// Thread count for the parallel loops; results do not depend on it.
const THREADS_ENV: &str = "VISCRACK_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "viscrack",
    version,
    about = "Dynamic Maxwell viscoelasticity with a growing crack"
)]
struct Cli {
    /// Debug logging (RUST_LOG overrides).
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file or built-in name and write its outputs.
    Run {
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `steps` in the scenario.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        no_checks: bool,
    },
    /// Time-step refinement study.
    Converge {
        config: String,
        /// Step counts, each dividing the next.
        #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
        n_list: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// RK4 reference for u'' + a u + b (u - w) = f(t), beta w' = u - w.
    Oracle0d {
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Load as an expression in `t`.
        #[arg(long, default_value = "0")]
        f: String,
        #[arg(long, default_value_t = 1.0)]
        u0: f64,
        #[arg(long, default_value_t = 0.0)]
        u1: f64,
        #[arg(long, default_value_t = 0.0)]
        w0: f64,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        /// Write every k-th row.
        #[arg(long, default_value_t = 100)]
        every: usize,
        /// CSV file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    List,
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn cmd_run(
    config: &str,
    out: Option<PathBuf>,
    steps: Option<usize>,
    no_checks: bool,
) -> Result<bool> {
    let scenario = Scenario::resolve(config)?;
    if steps == Some(0) {
        bail!("--steps must be positive");
    }
    let summary = run_scenario(
        &scenario,
        &RunOptions {
            out_dir: out,
            steps,
            no_checks,
        },
    )?;
    println!(
        "{}: {} steps, tau {:.6e}, {} elements, {} DOFs, {} pairs released, {:.2} s",
        summary.scenario,
        summary.steps,
        summary.tau,
        summary.n_elements,
        summary.n_dofs,
        summary.released_final,
        summary.runtime_seconds
    );
    for c in summary.checks.iter().flatten() {
        println!(
            "  {} {}: {:.3e} (tolerance {:.3e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    println!("outputs in {}", summary.out_dir.display());
    Ok(summary.all_passed)
}

#[derive(Serialize)]
struct PairRow {
    n_coarse: usize,
    n_fine: usize,
    v_diff: f64,
    h_diff: f64,
    order_v: Option<f64>,
    order_h: Option<f64>,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| path.display().to_string())?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_converge(config: &str, n_list: &[usize], out: Option<PathBuf>) -> Result<bool> {
    let scenario = Scenario::resolve(config)?;
    let report = convergence_study(&scenario.problem, n_list)?;
    let dir = out.unwrap_or_else(|| PathBuf::from(format!("{}-converge", scenario.name)));
    std::fs::create_dir_all(&dir).with_context(|| dir.display().to_string())?;
    write_csv(&dir.join("members.csv"), &report.members)?;
    // the order of pair i compares it with pair i - 1
    let pairs: Vec<PairRow> = report
        .diffs
        .iter()
        .enumerate()
        .map(|(i, d)| PairRow {
            n_coarse: d.n_coarse,
            n_fine: d.n_fine,
            v_diff: d.v_diff,
            h_diff: d.h_diff,
            order_v: i.checked_sub(1).and_then(|j| report.orders_v[j]),
            order_h: i.checked_sub(1).and_then(|j| report.orders_h[j]),
        })
        .collect();
    write_csv(&dir.join("pairs.csv"), &pairs)?;
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;

    println!("{}: n = {:?}", scenario.name, report.n_list);
    for p in &pairs {
        let fmt = |o: Option<f64>| o.map_or("-".to_string(), |o| format!("{o:.3}"));
        println!(
            "  {:>5} -> {:<5} V {:.3e}  H {:.3e}  order V {}  H {}",
            p.n_coarse,
            p.n_fine,
            p.v_diff,
            p.h_diff,
            fmt(p.order_v),
            fmt(p.order_h)
        );
    }
    let s = report.bound_spreads();
    println!(
        "  bound spreads: velocity {:.3}, strain {:.3}, internal {:.3}, rate {:.3}",
        s[0], s[1], s[2], s[3]
    );
    println!("outputs in {}", dir.display());
    Ok(report.members.iter().all(|m| m.inequality_holds))
}

#[allow(clippy::too_many_arguments)]
fn cmd_oracle(
    a: f64,
    b: f64,
    beta: f64,
    f: &str,
    (u0, u1, w0): (f64, f64, f64),
    horizon: f64,
    steps: usize,
    every: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let expr = Expr::parse(f, &BTreeMap::new()).context("--f")?;
    let load = |t: f64| expr.eval(t, 0.0, 0.0);
    let traj = zero_dim_oracle_steps(
        &OdeParams {
            a,
            b,
            beta,
            f: &load,
            u0,
            u1,
            w0,
            horizon,
        },
        steps,
    )?;
    let sink: Box<dyn Write> = match &out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| p.display().to_string())?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["t", "u", "v", "w"])?;
    let every = every.max(1);
    let last = traj.t.len() - 1;
    for i in (0..=last).filter(|i| i % every == 0 || *i == last) {
        w.write_record([traj.t[i], traj.u[i], traj.v[i], traj.w[i]].map(|x| format!("{x:.17e}")))?;
    }
    w.flush()?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<bool> {
    init_threads()?;
    match cli.command {
        Command::Run {
            config,
            out,
            steps,
            no_checks,
        } => cmd_run(&config, out, steps, no_checks),
        Command::Converge {
            config,
            n_list,
            out,
        } => cmd_converge(&config, &n_list, out),
        Command::Oracle0d {
            a,
            b,
            beta,
            f,
            u0,
            u1,
            w0,
            horizon,
            steps,
            every,
            out,
        } => {
            cmd_oracle(a, b, beta, &f, (u0, u1, w0), horizon, steps, every, out)?;
            Ok(true)
        }
        Command::List => {
            for name in BUILTIN_NAMES {
                println!("{name}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    info!("viscrack {}", env!("CARGO_PKG_VERSION"));
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("viscrack: checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("viscrack: {e:#}");
            ExitCode::from(2)
        }
    }
}

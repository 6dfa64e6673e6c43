//! Reference solution of the scalar model
//! `u' = v, v' = f - a u - b (u - w), beta w' = u - w` by classical RK4.

use serde::Serialize;

use crate::error::{bail, Result};

/// RK4 step as a fraction of the horizon.
pub const ORACLE_STEP_FRACTION: f64 = 1e-4;

pub struct OdeParams<'a> {
    pub a: f64,
    pub b: f64,
    pub beta: f64,
    pub f: &'a dyn Fn(f64) -> f64,
    pub u0: f64,
    pub u1: f64,
    pub w0: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleTrajectory {
    pub h: f64,
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl OracleTrajectory {
    /// `u(t)` by cubic Hermite interpolation of `(u, v)`.
    pub fn u_at(&self, t: f64) -> f64 {
        let n = self.t.len() - 1;
        let i = ((t / self.h).floor() as usize).min(n - 1);
        let s = ((t - self.t[i]) / self.h).clamp(0.0, 1.0);
        let (h00, h10) = (
            2.0 * s.powi(3) - 3.0 * s * s + 1.0,
            s.powi(3) - 2.0 * s * s + s,
        );
        let (h01, h11) = (-2.0 * s.powi(3) + 3.0 * s * s, s.powi(3) - s * s);
        h00 * self.u[i]
            + h10 * self.h * self.v[i]
            + h01 * self.u[i + 1]
            + h11 * self.h * self.v[i + 1]
    }
}

/// Integrates with step `ORACLE_STEP_FRACTION * horizon`.
pub fn zero_dim_oracle(p: &OdeParams) -> Result<OracleTrajectory> {
    zero_dim_oracle_steps(p, (1.0 / ORACLE_STEP_FRACTION).round() as usize)
}

/// Integrates with `steps` uniform RK4 steps.
pub fn zero_dim_oracle_steps(p: &OdeParams, steps: usize) -> Result<OracleTrajectory> {
    if !(p.horizon > 0.0) {
        bail!(Config, "oracle horizon must be positive");
    }
    if !(p.beta > 0.0) {
        bail!(Config, "oracle beta must be positive");
    }
    if steps == 0 {
        bail!(Config, "oracle needs at least one step");
    }
    let h = p.horizon / steps as f64;
    let rhs = |t: f64, y: [f64; 3]| -> [f64; 3] {
        let [u, v, w] = y;
        [v, (p.f)(t) - p.a * u - p.b * (u - w), (u - w) / p.beta]
    };
    let mut out = OracleTrajectory {
        h,
        t: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        v: Vec::with_capacity(steps + 1),
        w: Vec::with_capacity(steps + 1),
    };
    let mut y = [p.u0, p.u1, p.w0];
    let push = |out: &mut OracleTrajectory, t: f64, y: [f64; 3]| {
        out.t.push(t);
        out.u.push(y[0]);
        out.v.push(y[1]);
        out.w.push(y[2]);
    };
    push(&mut out, 0.0, y);
    for i in 0..steps {
        let t = i as f64 * h;
        let add =
            |y: [f64; 3], k: [f64; 3], c: f64| [y[0] + c * k[0], y[1] + c * k[1], y[2] + c * k[2]];
        let k1 = rhs(t, y);
        let k2 = rhs(t + h / 2.0, add(y, k1, h / 2.0));
        let k3 = rhs(t + h / 2.0, add(y, k2, h / 2.0));
        let k4 = rhs(t + h, add(y, k3, h));
        for c in 0..3 {
            y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        push(&mut out, (i + 1) as f64 * h, y);
    }
    Ok(out)
}

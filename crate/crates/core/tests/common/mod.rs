#![allow(dead_code)]

use std::path::Path;

use viscrack::scenario::{parse_config, Scenario};

/// Unit square, antiplane, moduli 1 and 1/2, `beta = 0.5`, `T = 1`; extra
/// TOML is appended.
pub fn square(nx: usize, extra: &str) -> String {
    format!(
        r#"format_version = 1
beta = 0.5
horizon = 1.0
steps = 16
[geometry]
rect = {{ width = 1.0, height = 1.0, nx = {nx}, ny = {nx} }}
[materials]
elastic = {{ mu = 1.0 }}
viscous = {{ mu = 0.5 }}
{extra}"#
    )
}

pub fn scenario(text: &str) -> Scenario {
    try_scenario(text).unwrap_or_else(|e| panic!("{e}"))
}

pub fn try_scenario(text: &str) -> viscrack::Result<Scenario> {
    Scenario::from_config(parse_config(text)?, Path::new("."), "test")
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

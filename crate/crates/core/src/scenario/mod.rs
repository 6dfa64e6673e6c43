//! Scenario files, the built-in scenario library, the scalar ODE reference,
//! refinement studies and on-disk output.

mod config;
mod oracle;
mod output;
mod study;

use std::path::{Path, PathBuf};

pub use config::{
    parse_config, polyline_from_path, read_tensor_table, CrackConfig, DataConfig, GeometryConfig,
    Isotropic, MaterialsConfig, OutputConfig, PastHistoryConfig, RectConfig, RegionConfig,
    ScenarioConfig, Side, TableConfig, DEFAULT_SLACK_PER_TAU, DEFAULT_WINDOW_BETAS, FORMAT_VERSION,
};
pub use oracle::{
    zero_dim_oracle, zero_dim_oracle_steps, OdeParams, OracleTrajectory, ORACLE_STEP_FRACTION,
};
pub use output::{run_scenario, write_snapshot, CheckOutcome, RunOptions, RunSummary};
pub use study::{convergence_study, ConvergenceReport, MemberMetrics, PairDiff};

use crate::error::{Error, Result};
use crate::problem::Problem;

/// Names of the built-in scenarios.
pub const BUILTIN_NAMES: [&str; 7] = [
    "zero",
    "static",
    "single_dof",
    "smooth_uncracked",
    "cracked_plate",
    "planar_elastic_crack",
    "past_history_demo",
];

/// Source text of a built-in scenario.
pub fn builtin_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "zero" => include_str!("../../scenarios/zero.toml"),
        "static" => include_str!("../../scenarios/static.toml"),
        "single_dof" => include_str!("../../scenarios/single_dof.toml"),
        "smooth_uncracked" => include_str!("../../scenarios/smooth_uncracked.toml"),
        "cracked_plate" => include_str!("../../scenarios/cracked_plate.toml"),
        "planar_elastic_crack" => include_str!("../../scenarios/planar_elastic_crack.toml"),
        "past_history_demo" => include_str!("../../scenarios/past_history_demo.toml"),
        _ => return None,
    })
}

/// A parsed scenario with its problem built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub config: ScenarioConfig,
    pub problem: Problem,
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn from_config(
        config: ScenarioConfig,
        base_dir: &Path,
        fallback_name: &str,
    ) -> Result<Self> {
        let problem = config.build(base_dir)?;
        Ok(Scenario {
            name: config
                .name
                .clone()
                .unwrap_or_else(|| fallback_name.to_string()),
            config,
            problem,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config = parse_config(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("scenario");
        Self::from_config(config, base, stem)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let src = builtin_source(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown built-in scenario `{name}` (known: {})",
                BUILTIN_NAMES.join(", ")
            ))
        })?;
        Self::from_config(parse_config(src)?, Path::new("."), name)
    }

    /// A file path if one exists, otherwise a built-in name.
    pub fn resolve(arg: &str) -> Result<Self> {
        let path = Path::new(arg);
        if path.exists() || builtin_source(arg).is_none() {
            Self::load(path)
        } else {
            Self::builtin(arg)
        }
    }

    pub fn steps(&self) -> usize {
        self.config.steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_build() {
        for name in BUILTIN_NAMES {
            let s = Scenario::builtin(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
        }
    }

    #[test]
    fn unknown_builtin() {
        assert!(matches!(Scenario::builtin("nope"), Err(Error::Config(_))));
    }
}

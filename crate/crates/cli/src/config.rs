use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use endosaa::instance_gen::GenConfig;

/// Environment variable naming the solver backend; overrides `solver.backend`.
pub const SOLVER_ENV: &str = "ENDOSAA_SOLVER";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub solver: SolverSection,
    pub saa: SaaSection,
    pub generate: GenerateSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub backend: Option<String>,
    pub time_limit: Option<f64>,
    pub mip_gap: Option<f64>,
    pub threads: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaaSection {
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub n_prime: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub epsilon: Option<f64>,
    pub exact_eval: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct GenerateSection {
    pub dataset: Option<PathBuf>,
    #[serde(flatten)]
    pub params: GenConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Backend name: environment, then config file, then the default.
    pub fn backend(&self) -> String {
        std::env::var(SOLVER_ENV).ok().filter(|s| !s.is_empty()).or_else(|| self.solver.backend.clone()).unwrap_or_else(|| "highs".into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn readme_example_parses() {
        let text = r#"
[solver]
backend = "highs"
time_limit = 600.0
mip_gap = 1e-6
threads = 1

[saa]
m = 10
n = 100
n_prime = 1000
seed = 1
exact_eval = true

[generate]
dataset = "data/se_cities.csv"
levels = 2
protections = 4
penalty_multiplier = 10.0
"#;
        let cfg: FileConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.saa.m, Some(10));
        assert_eq!(cfg.generate.params.levels, 2);
        assert_eq!(cfg.generate.params.facility_count, GenConfig::default().facility_count);
        assert!(toml::from_str::<FileConfig>("[saa]\nmm = 3\n").is_err());
    }
}

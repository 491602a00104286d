//! JSON run configurations and command-line overrides.

use std::path::{Path, PathBuf};

use coreg_core::cfa::LoadingKind;
use coreg_core::coexnet::{check_lambda, DEFAULT_ACCEPTANCE_THRESHOLD};
use coreg_core::sim::TimingAxis;
use coreg_core::{default_lambda_grid, Method, ScenarioSpec, DEFAULT_ALPHA};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const PRESET_PAPER_TABLE1: &str = include_str!("../presets/paper_table1.json");
pub const PRESET_TINY: &str = include_str!("../presets/tiny.json");
pub const PRESET_REPLICABILITY_1: &str = include_str!("../presets/replicability_scenario1.json");
pub const PRESET_REPLICABILITY_2: &str = include_str!("../presets/replicability_scenario2.json");

pub const SIMULATE_PRESETS: [(&str, &str); 2] = [("paper_table1", PRESET_PAPER_TABLE1), ("tiny", PRESET_TINY)];
pub const REPLICABILITY_PRESETS: [(&str, &str); 2] = [
    ("replicability_scenario1", PRESET_REPLICABILITY_1),
    ("replicability_scenario2", PRESET_REPLICABILITY_2),
];

/// Values given on the command line; each replaces the config's field.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub lambda_grid: Option<Vec<f64>>,
    pub methods: Option<Vec<Method>>,
}

pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| CliError::input(origin, format!("invalid configuration: {e}")))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e.to_string()))?;
    parse_json(&text, &path.display().to_string())
}

pub fn check_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::usage(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

pub fn check_grid(grid: &[f64]) -> CliResult<()> {
    if grid.is_empty() {
        return Err(CliError::usage("lambda grid is empty"));
    }
    for &l in grid {
        check_lambda(l).map_err(|e| CliError::usage(e.to_string()))?;
    }
    Ok(())
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_true() -> bool {
    true
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_tau() -> f64 {
    DEFAULT_ACCEPTANCE_THRESHOLD
}

/// `fit` / `network`: analysis of a samples×columns CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Relative paths are resolved against the config file's directory.
    pub input: PathBuf,
    pub predictors: Vec<String>,
    /// Defaults to every column that is neither a predictor nor the id column.
    #[serde(default)]
    pub outcomes: Option<Vec<String>>,
    #[serde(default)]
    pub id_column: Option<String>,
    #[serde(default = "default_true")]
    pub intercept: bool,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// SvdFactor factor count; defaults to CoReg's selected K.
    #[serde(default)]
    pub svd_factors: Option<usize>,
    #[serde(default = "default_tau")]
    pub acceptance_threshold: f64,
    #[serde(default)]
    pub loadings: Option<LoadingKind>,
}

impl FitConfig {
    pub fn load(path: &Path, ov: &Overrides) -> CliResult<Self> {
        let mut c: FitConfig = read_json(path)?;
        if c.input.is_relative() {
            if let Some(dir) = path.parent() {
                c.input = dir.join(&c.input);
            }
        }
        c.apply(ov);
        c.validate()?;
        Ok(c)
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(a) = ov.alpha {
            self.alpha = a;
        }
        if let Some(g) = &ov.lambda_grid {
            self.lambda_grid = g.clone();
        }
        if let Some(m) = &ov.methods {
            self.methods = m.clone();
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        check_alpha(self.alpha)?;
        check_grid(&self.lambda_grid)?;
        if self.predictors.is_empty() {
            return Err(CliError::usage("at least one predictor column is required"));
        }
        if self.methods.is_empty() {
            return Err(CliError::usage("no methods requested"));
        }
        if !(0.0..=1.0).contains(&self.acceptance_threshold) {
            return Err(CliError::usage(format!(
                "acceptance_threshold must lie in [0, 1], got {}",
                self.acceptance_threshold
            )));
        }
        Ok(())
    }
}

/// One scenario or a list of them.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SimulateFile {
    Many { scenarios: Vec<ScenarioSpec> },
    One(Box<ScenarioSpec>),
}

pub fn parse_scenarios(text: &str, origin: &str) -> CliResult<Vec<ScenarioSpec>> {
    // Untagged enums swallow field-level messages; retry each shape for a
    // useful diagnostic.
    match serde_json::from_str::<SimulateFile>(text) {
        Ok(SimulateFile::Many { scenarios }) => Ok(scenarios),
        Ok(SimulateFile::One(s)) => Ok(vec![*s]),
        Err(_) => {
            let v: serde_json::Value = parse_json(text, origin)?;
            if v.get("scenarios").is_some() {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct Many {
                    #[allow(dead_code)]
                    scenarios: Vec<ScenarioSpec>,
                }
                parse_json::<Many>(text, origin).map(|m| m.scenarios)
            } else {
                parse_json::<ScenarioSpec>(text, origin).map(|s| vec![s])
            }
        }
    }
}

pub fn apply_to_scenario(s: &mut ScenarioSpec, ov: &Overrides) {
    if let Some(seed) = ov.seed {
        s.master_seed = seed;
    }
    if let Some(a) = ov.alpha {
        s.alpha = a;
    }
    if let Some(g) = &ov.lambda_grid {
        s.lambda_grid = g.clone();
    }
    if let Some(m) = &ov.methods {
        s.methods = m.clone();
    }
}

pub fn load_scenarios(config: Option<&Path>, preset: Option<&str>, ov: &Overrides) -> CliResult<Vec<ScenarioSpec>> {
    let mut specs = match (config, preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e.to_string()))?;
            parse_scenarios(&text, &path.display().to_string())?
        }
        (None, Some(name)) => {
            let (_, text) = SIMULATE_PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
                let names: Vec<&str> = SIMULATE_PRESETS.iter().map(|p| p.0).collect();
                CliError::usage(format!("unknown preset '{name}'; available: {}", names.join(", ")))
            })?;
            parse_scenarios(text, name)?
        }
        (Some(_), Some(_)) => return Err(CliError::usage("give either --config or --preset, not both")),
        (None, None) => return Err(CliError::usage("simulate needs --config or --preset")),
    };
    if specs.is_empty() {
        return Err(CliError::usage("no scenarios given"));
    }
    for s in &mut specs {
        apply_to_scenario(s, ov);
        check_alpha(s.alpha)?;
        check_grid(&s.lambda_grid)?;
        s.validate()
            .map_err(|e| CliError::usage(format!("scenario '{}': {e}", s.name)))?;
    }
    for (i, s) in specs.iter().enumerate() {
        if specs[..i].iter().any(|t| t.name == s.name) {
            return Err(CliError::usage(format!("duplicate scenario name '{}'", s.name)));
        }
        if s.name.is_empty() || s.name.contains(['/', '\\']) || s.name.starts_with('.') {
            return Err(CliError::usage(format!(
                "scenario name '{}' cannot be used as a file name",
                s.name
            )));
        }
    }
    Ok(specs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicabilityConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub arm1: ScenarioSpec,
    pub arm2: ScenarioSpec,
    pub shared_truth_seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
}

impl ReplicabilityConfig {
    /// `--seed S` sets the shared structure seed to `S` and the arm master
    /// seeds to `S` and `S + 1`.
    pub fn apply(&mut self, ov: &Overrides) {
        let seed = ov.seed;
        let no_seed = Overrides {
            seed: None,
            ..ov.clone()
        };
        apply_to_scenario(&mut self.arm1, &no_seed);
        apply_to_scenario(&mut self.arm2, &no_seed);
        if let Some(s) = seed {
            self.shared_truth_seed = s;
            self.arm1.master_seed = s;
            self.arm2.master_seed = s.wrapping_add(1);
        }
        if let Some(m) = &ov.methods {
            self.methods = m.clone();
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        for s in [&self.arm1, &self.arm2] {
            check_alpha(s.alpha)?;
            check_grid(&s.lambda_grid)?;
            s.validate()
                .map_err(|e| CliError::usage(format!("arm '{}': {e}", s.name)))?;
        }
        if self.methods.is_empty() {
            return Err(CliError::usage("no methods requested"));
        }
        Ok(())
    }
}

pub fn load_replicability(
    config: Option<&Path>,
    preset: Option<&str>,
    ov: &Overrides,
) -> CliResult<ReplicabilityConfig> {
    let mut c: ReplicabilityConfig = match (config, preset) {
        (Some(path), None) => read_json(path)?,
        (None, Some(name)) => {
            let (_, text) = REPLICABILITY_PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
                let names: Vec<&str> = REPLICABILITY_PRESETS.iter().map(|p| p.0).collect();
                CliError::usage(format!("unknown preset '{name}'; available: {}", names.join(", ")))
            })?;
            parse_json(text, name)?
        }
        (Some(_), Some(_)) => return Err(CliError::usage("give either --config or --preset, not both")),
        (None, None) => return Err(CliError::usage("replicability needs --config or --preset")),
    };
    c.apply(ov);
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingGridConfig {
    pub axis: TimingAxis,
    pub values: Vec<usize>,
    /// n when varying p, p when varying n.
    pub fixed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub grids: Vec<TimingGridConfig>,
    #[serde(default = "default_bench_reps")]
    pub replications: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
}

fn default_bench_reps() -> usize {
    2
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            grids: vec![
                TimingGridConfig {
                    axis: TimingAxis::Variables,
                    values: vec![100, 200, 400, 800],
                    fixed: 200,
                },
                TimingGridConfig {
                    axis: TimingAxis::Samples,
                    values: vec![100, 200, 400, 800],
                    fixed: 200,
                },
            ],
            replications: default_bench_reps(),
            methods: default_methods(),
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn load(path: Option<&Path>, ov: &Overrides) -> CliResult<Self> {
        let mut c = match path {
            Some(p) => read_json(p)?,
            None => BenchConfig::default(),
        };
        if let Some(s) = ov.seed {
            c.seed = s;
        }
        if let Some(m) = &ov.methods {
            c.methods = m.clone();
        }
        if c.replications == 0 || c.methods.is_empty() || c.grids.is_empty() {
            return Err(CliError::usage("bench needs at least one grid, method and replication"));
        }
        for g in &c.grids {
            if g.values.is_empty() || g.values.iter().chain([&g.fixed]).any(|&v| v < 5) {
                return Err(CliError::usage("timing grid values and fixed size must be at least 5"));
            }
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        let ov = Overrides::default();
        assert_eq!(load_scenarios(None, Some("paper_table1"), &ov).unwrap().len(), 4);
        assert_eq!(load_scenarios(None, Some("tiny"), &ov).unwrap()[0].p(), 30);
        for (name, _) in REPLICABILITY_PRESETS {
            load_replicability(None, Some(name), &ov).unwrap();
        }
    }

    #[test]
    fn overrides_apply() {
        let ov = Overrides {
            seed: Some(9),
            alpha: Some(0.1),
            lambda_grid: Some(vec![1.5]),
            methods: Some(vec![Method::Ols]),
        };
        let s = &load_scenarios(None, Some("tiny"), &ov).unwrap()[0];
        assert_eq!((s.master_seed, s.alpha), (9, 0.1));
        assert_eq!(s.lambda_grid, [1.5]);
        assert_eq!(s.methods, [Method::Ols]);
        let r = load_replicability(None, Some("replicability_scenario1"), &ov).unwrap();
        assert_eq!(
            (r.shared_truth_seed, r.arm1.master_seed, r.arm2.master_seed),
            (9, 9, 10)
        );
    }

    #[test]
    fn out_of_range_grid_is_usage_error() {
        let ov = Overrides {
            lambda_grid: Some(vec![1.2, 2.5]),
            ..Overrides::default()
        };
        let e = load_scenarios(None, Some("tiny"), &ov).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("2.5"));
    }

    #[test]
    fn unknown_field_reported() {
        let e = parse_scenarios(r#"{"scenarios": [{"bogus": 1}]}"#, "x")
            .unwrap_err()
            .to_string();
        assert!(e.contains("bogus"), "{e}");
    }
}

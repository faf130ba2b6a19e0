//! Experiment configuration: a single JSON document.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::GameGenConfig;
use crate::shuffling::ScheduleKind;

pub const DEFAULT_GAMMA_GRID: [f64; 7] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Gda,
    Ppm,
    Agda,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gda => "GDA",
            Method::Ppm => "PPM",
            Method::Agda => "AGDA",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GDA" => Ok(Method::Gda),
            "PPM" => Ok(Method::Ppm),
            "AGDA" => Ok(Method::Agda),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

/// Which problem to solve. Externally tagged in JSON, e.g.
/// `{"quadratic": {...}}`, `{"bilinear": {"mu": 1, "ell": 2}}`,
/// `"unbounded_2pl"` or `{"game_file": "game.json"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemSpec {
    /// Generated game; its `seed` is the master seed for instance seeds.
    Quadratic(GameGenConfig),
    Bilinear {
        mu: f64,
        ell: f64,
    },
    #[serde(rename = "unbounded_2pl")]
    Unbounded2pl,
    /// A game previously saved with `QuadraticGame::to_json`.
    GameFile(PathBuf),
}

impl ProblemSpec {
    pub fn is_generated(&self) -> bool {
        matches!(self, ProblemSpec::Quadratic(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { start: u64, count: usize },
}

impl SeedSpec {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { start, count } => (0..*count as u64).map(|i| start + i).collect(),
        }
    }
}

fn default_grid() -> Vec<f64> {
    DEFAULT_GAMMA_GRID.to_vec()
}
fn default_one() -> usize {
    1
}
fn default_pilot() -> usize {
    5
}
fn default_eta() -> f64 {
    1.0
}
fn default_scale() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub methods: Vec<Method>,
    pub schedules: Vec<ScheduleKind>,
    /// Step sizes are `α = γ/n`.
    #[serde(default = "default_grid")]
    pub gamma_grid: Vec<f64>,
    pub epochs: usize,
    pub seeds: SeedSpec,
    #[serde(default = "default_one")]
    pub instance_count: usize,
    /// Runs per instance in multi-instance mode; `None` uses every seed.
    #[serde(default)]
    pub seeds_per_instance: Option<usize>,
    /// Leading seeds used to score each γ when the grid has several entries.
    #[serde(default = "default_pilot")]
    pub pilot_seeds: usize,
    /// AGDA timescale ratio, `β = η α`.
    #[serde(default = "default_eta")]
    pub agda_eta: f64,
    /// `z₀ = z* + init_scale · N(0, I)`, drawn once per instance.
    #[serde(default = "default_scale")]
    pub init_scale: f64,
    /// λ of the Lyapunov function reported in `v_lambda`.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_one")]
    pub record_every: usize,
    pub output: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("invalid experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.methods.is_empty() {
            return fail("at least one method is required".into());
        }
        if self.schedules.is_empty() {
            return fail("at least one schedule is required".into());
        }
        if self.gamma_grid.is_empty() {
            return fail("gamma_grid must not be empty".into());
        }
        if let Some(g) = self
            .gamma_grid
            .iter()
            .find(|g| !(**g > 0.0 && g.is_finite()))
        {
            return fail(format!("gamma values must be positive, got {g}"));
        }
        if self.epochs == 0 {
            return fail("epochs must be positive".into());
        }
        if self.record_every == 0 {
            return fail("record_every must be positive".into());
        }
        let seeds = self.seeds.expand();
        if seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return fail("seeds must be distinct".into());
        }
        if self.instance_count == 0 {
            return fail("instance_count must be at least 1".into());
        }
        if self.instance_count > 1 && !self.problem.is_generated() {
            return fail("several instances need a generated (quadratic) problem".into());
        }
        if let Some(s) = self.seeds_per_instance {
            if s == 0 || s > seeds.len() {
                return fail(format!(
                    "seeds_per_instance must lie in 1..={}",
                    seeds.len()
                ));
            }
        }
        if self.pilot_seeds == 0 {
            return fail("pilot_seeds must be positive".into());
        }
        if !(self.agda_eta > 0.0 && self.agda_eta.is_finite()) {
            return fail("agda_eta must be positive".into());
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return fail("init_scale must be positive".into());
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return fail("lambda must be positive".into());
        }
        match &self.problem {
            ProblemSpec::Quadratic(g) => g.validate().map_err(|e| Error::Config(e.to_string()))?,
            ProblemSpec::Bilinear { mu, ell } => {
                if !(*mu > 0.0 && ell > mu) {
                    return fail(format!(
                        "bilinear instance needs ell > mu > 0 (mu={mu}, ell={ell})"
                    ));
                }
            }
            ProblemSpec::Unbounded2pl | ProblemSpec::GameFile(_) => {}
        }
        Ok(())
    }
}

/// Command-line overrides for individual keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub epochs: Option<usize>,
    /// Replaces the seed list with this single seed.
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub methods: Option<Vec<Method>>,
    pub schedules: Option<Vec<ScheduleKind>>,
    /// Replaces the grid with this single value.
    pub gamma: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(k) = self.epochs {
            cfg.epochs = k;
        }
        if let Some(s) = self.seed {
            cfg.seeds = SeedSpec::List(vec![s]);
            cfg.seeds_per_instance = None;
        }
        if let Some(o) = &self.output {
            cfg.output = o.clone();
        }
        if let Some(m) = &self.methods {
            cfg.methods = m.clone();
        }
        if let Some(s) = &self.schedules {
            cfg.schedules = s.clone();
        }
        if let Some(g) = self.gamma {
            cfg.gamma_grid = vec![g];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {"bilinear": {"mu": 1.0, "ell": 2.0}},
        "methods": ["GDA", "ppm"],
        "schedules": ["RR", "AS:GREEDY_MAX_DIST"],
        "epochs": 3,
        "seeds": {"start": 10, "count": 3},
        "output": "out"
    }"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.methods, vec![Method::Gda, Method::Ppm]);
        assert_eq!(cfg.gamma_grid, DEFAULT_GAMMA_GRID.to_vec());
        assert_eq!(cfg.seeds.expand(), vec![10, 11, 12]);
        assert_eq!(cfg.pilot_seeds, 5);
        assert_eq!(cfg.instance_count, 1);
        cfg.validate().unwrap();
    }

    #[test]
    fn problem_tags() {
        let p: ProblemSpec = serde_json::from_str(r#""unbounded_2pl""#).unwrap();
        assert_eq!(p, ProblemSpec::Unbounded2pl);
        let p: ProblemSpec = serde_json::from_str(r#"{"game_file": "g.json"}"#).unwrap();
        assert_eq!(p, ProblemSpec::GameFile("g.json".into()));
        let s =
            serde_json::to_string(&ProblemSpec::Quadratic(GameGenConfig::benchmark(4))).unwrap();
        assert!(s.starts_with(r#"{"quadratic":"#));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        cfg.methods.clear();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        cfg.gamma_grid = vec![0.1, -1.0];
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        cfg.instance_count = 3;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        cfg.seeds = SeedSpec::List(vec![1, 1]);
        assert!(cfg.validate().is_err());

        assert!(ExperimentConfig::from_json(r#"{"problem": "unbounded_2pl"}"#).is_err());
        let extra = MINIMAL.replace("\"epochs\": 3", "\"epochs\": 3, \"bogus\": 1");
        assert!(ExperimentConfig::from_json(&extra).is_err());
    }

    #[test]
    fn overrides_replace_keys() {
        let mut cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        Overrides {
            epochs: Some(9),
            seed: Some(42),
            gamma: Some(0.3),
            methods: Some(vec![Method::Agda]),
            ..Default::default()
        }
        .apply(&mut cfg);
        assert_eq!(cfg.epochs, 9);
        assert_eq!(cfg.seeds.expand(), vec![42]);
        assert_eq!(cfg.gamma_grid, vec![0.3]);
        assert_eq!(cfg.methods, vec![Method::Agda]);
    }
}

//! Experiment configuration as a single JSON document.
//!
//! ```json
//! {
//!   "population": { "synthetic": { "low": 0.2, "high": 1.0, "questions": 25 } },
//!   "grid": { "alpha": [0.2], "beta": [0, "1/3"], "budget": ["12k"] },
//!   "trials": 5000,
//!   "seed": 1,
//!   "output_dir": "out",
//!   "analyses": ["loss", "sweep"]
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::AggregationRule;
use crate::domain::{AnswerDomain, DistanceMetric};
use crate::error::{Error, Result};
use crate::evaluation::DEFAULT_TRIALS;
use crate::fraction::Fraction;
use crate::policy::Budget;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PopulationSpec {
    /// Binary workers with competence drawn from `U[low, high]`.
    Synthetic { low: f64, high: f64, questions: usize },
    /// A dataset file; relative paths resolve against the config file.
    Dataset { path: PathBuf, domain: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Loss,
    Sweep,
    WeightByRank,
    Histogram,
    BoundCheck,
    WeightedVsUnweighted,
    AllFollowers,
}

impl Analysis {
    pub fn table_name(self) -> &'static str {
        match self {
            Analysis::Loss => "loss",
            Analysis::Sweep => "sweep",
            Analysis::WeightByRank => "weight_by_rank",
            Analysis::Histogram => "histogram",
            Analysis::BoundCheck => "bound_check",
            Analysis::WeightedVsUnweighted => "weighted_vs_unweighted",
            Analysis::AllFollowers => "all_followers",
        }
    }

    pub fn needs_grid(self) -> bool {
        !matches!(self, Analysis::Histogram | Analysis::BoundCheck)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyGrid {
    pub alpha: Vec<Fraction>,
    pub beta: Vec<Fraction>,
    pub budget: Vec<Budget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Workers drawn from a synthetic population before binning.
    #[serde(default = "default_histogram_workers")]
    pub workers: usize,
}

fn default_bins() -> usize {
    10
}

fn default_histogram_workers() -> usize {
    1000
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            bins: default_bins(),
            workers: default_histogram_workers(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundGrid {
    pub p_high: Vec<f64>,
    pub p_low: Vec<f64>,
    pub p_follower: Vec<f64>,
    pub follower_questions: Vec<u32>,
    #[serde(default)]
    pub mc_samples: usize,
}

impl Default for BoundGrid {
    fn default() -> Self {
        Self {
            p_high: vec![0.6, 0.7, 0.8, 0.9],
            p_low: vec![0.55, 0.6, 0.7],
            p_follower: vec![0.55, 0.7, 0.9],
            follower_questions: vec![1, 2, 5, 10, 20],
            mc_samples: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub population: PopulationSpec,
    /// Defaults to the domain's natural metric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<DistanceMetric>,
    /// Defaults to plurality on categorical domains and the mean otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<AggregationRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<PolicyGrid>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Drop infeasible grid points instead of rejecting the config.
    #[serde(default)]
    pub skip_infeasible: bool,
    pub analyses: Vec<Analysis>,
    #[serde(default)]
    pub histogram: HistogramConfig,
    #[serde(default)]
    pub bound_check: BoundGrid,
    /// Adds wall-clock time to the manifest, which makes it differ between
    /// runs.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    /// Reads a config file, resolving a relative dataset path against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        if let PopulationSpec::Dataset { path: data, .. } = &mut config.population {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(config)
    }

    pub fn domain(&self) -> Result<AnswerDomain> {
        match &self.population {
            PopulationSpec::Synthetic { .. } => Ok(AnswerDomain::binary()),
            PopulationSpec::Dataset { domain, .. } => AnswerDomain::from_descriptor(domain),
        }
    }

    pub fn metric(&self) -> Result<DistanceMetric> {
        Ok(self.metric.unwrap_or(self.domain()?.natural_metric()))
    }

    pub fn rule(&self) -> Result<AggregationRule> {
        match self.rule {
            Some(rule) => Ok(rule),
            None => Ok(AggregationRule::natural_for(&self.domain()?)),
        }
    }

    /// The config with run-location fields removed; this is what gets
    /// hashed and echoed into the manifest.
    pub fn canonical(&self) -> Self {
        let mut c = self.clone();
        c.output_dir = None;
        c
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&self.canonical()).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("proxycrowd-out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "population": {"synthetic": {"low": 0.2, "high": 1.0, "questions": 25}},
        "grid": {"alpha": [0.2], "beta": [0, "1/3", 0.375], "budget": ["12k", 300]},
        "seed": 7,
        "analyses": ["loss"]
    }"#;

    #[test]
    fn parses_fractions_exactly() {
        let c = ExperimentConfig::from_json(BASE).unwrap();
        let g = c.grid.unwrap();
        assert_eq!(g.beta[1], Fraction::new(1, 3).unwrap());
        assert_eq!(g.beta[2], Fraction::new(3, 8).unwrap());
        assert_eq!(g.budget, vec![Budget::CompleteVectors(12), Budget::Answers(300)]);
        assert_eq!(c.trials, DEFAULT_TRIALS);
    }

    #[test]
    fn seed_is_mandatory() {
        let text = BASE.replace("\"seed\": 7,", "");
        assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = BASE.replace("\"seed\": 7,", "\"seed\": 7, \"sead\": 1,");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::from_json(BASE).unwrap();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 8;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn defaults_follow_domain() {
        let c = ExperimentConfig::from_json(BASE).unwrap();
        assert_eq!(c.metric().unwrap(), DistanceMetric::Hamming);
        assert_eq!(c.rule().unwrap(), AggregationRule::WeightedPlurality);
        let text = BASE.replace(
            r#"{"synthetic": {"low": 0.2, "high": 1.0, "questions": 25}}"#,
            r#"{"dataset": {"path": "x.csv", "domain": "continuous:1000"}}"#,
        );
        let c = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(c.metric().unwrap(), DistanceMetric::L1);
        assert_eq!(c.rule().unwrap(), AggregationRule::WeightedMean);
    }
}

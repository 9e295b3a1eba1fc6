use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{self, Attribute, Catalog, ItemId};
use crate::error::{Error, Result};
use crate::metrics::Cutoffs;
use crate::pooling::SampleSpec;
use crate::ranker::{RankerSpec, DEFAULT_DEPTH};
use crate::simulator::SyntheticAlternatives;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimulatorMode {
    Base,
    Meta,
}

impl std::str::FromStr for SimulatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(SimulatorMode::Base),
            "meta" => Ok(SimulatorMode::Meta),
            other => Err(Error::config(format!("unknown simulator mode `{other}` (expected base or meta)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticCatalog {
    pub seed: u64,
    pub n_items: usize,
    pub dimension: usize,
    /// Explicit schema; when empty, `domain_sizes` generates one.
    pub attributes: Vec<Attribute>,
    pub domain_sizes: Vec<usize>,
    pub noise: f64,
}

impl Default for SyntheticCatalog {
    fn default() -> Self {
        SyntheticCatalog {
            seed: 0,
            n_items: 1000,
            dimension: 32,
            attributes: Vec::new(),
            domain_sizes: vec![6, 6, 6],
            noise: catalog::DEFAULT_NOISE,
        }
    }
}

impl SyntheticCatalog {
    pub fn schema(&self) -> Vec<Attribute> {
        if self.attributes.is_empty() {
            catalog::uniform_schema(&self.domain_sizes)
        } else {
            self.attributes.clone()
        }
    }

    pub fn generate(&self) -> Result<Catalog> {
        catalog::generate_synthetic_with_noise(self.seed, self.n_items, self.dimension, self.schema(), self.noise)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalogSource {
    File(PathBuf),
    Synthetic(SyntheticCatalog),
}

impl CatalogSource {
    pub fn load(&self) -> Result<Catalog> {
        match self {
            CatalogSource::File(path) => Catalog::load(path),
            CatalogSource::Synthetic(spec) => spec.generate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlternativesSource {
    File(PathBuf),
    /// Generated for the chosen targets from the catalog itself.
    Synthetic(SyntheticAlternatives),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSource {
    /// One item id per line; blank lines and `#` comments are skipped.
    File(PathBuf),
    List(Vec<ItemId>),
    Sample(SampleSpec),
}

pub fn load_target_list(path: &Path) -> Result<Vec<ItemId>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(ItemId::from)
        .collect())
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub catalog: CatalogSource,
    pub ranker: RankerSpec,
    pub simulator: SimulatorMode,
    /// Meta mode only: alternatives are considered after this turn.
    pub tolerance: u32,
    pub alternatives: Option<AlternativesSource>,
    pub targets: TargetSource,
    pub max_turns: u32,
    pub cutoffs: Cutoffs,
    pub report_turns: Vec<u32>,
    /// Ranking depth kept per turn; raised to the largest metric cutoff if lower.
    pub depth: usize,
    /// Additional rankers compared by `sweep`; the main `ranker` is used when empty.
    pub sweep_rankers: Vec<RankerSpec>,
    pub sweep_tolerances: Vec<u32>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            catalog: CatalogSource::Synthetic(SyntheticCatalog::default()),
            ranker: RankerSpec::from_name("oracle_embedding").expect("builtin ranker"),
            simulator: SimulatorMode::Base,
            tolerance: 2,
            alternatives: None,
            targets: TargetSource::Sample(SampleSpec::default()),
            max_turns: 10,
            cutoffs: Cutoffs::default(),
            report_turns: vec![3, 5, 10],
            depth: DEFAULT_DEPTH,
            sweep_rankers: Vec::new(),
            sweep_tolerances: vec![1, 2, 3, 4],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(e.to_string().replace('\n', " ")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn effective_depth(&self) -> usize {
        self.depth.max(self.cutoffs.ndcg).max(self.cutoffs.mrr)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_turns == 0 {
            return Err(Error::config("max_turns must be positive"));
        }
        if self.cutoffs.ndcg == 0 || self.cutoffs.mrr == 0 {
            return Err(Error::config("metric cutoffs must be positive"));
        }
        if let Some(t) = self.report_turns.iter().find(|t| **t == 0 || **t > self.max_turns) {
            return Err(Error::config(format!(
                "report turn {t} is outside 1..={}",
                self.max_turns
            )));
        }
        if self.simulator == SimulatorMode::Meta && self.alternatives.is_none() {
            return Err(Error::config("meta simulator mode requires an alternatives source"));
        }
        if let TargetSource::List(list) = &self.targets {
            if list.is_empty() {
                return Err(Error::config("target list is empty"));
            }
        }
        if let TargetSource::Sample(spec) = &self.targets {
            if spec.n == 0 {
                return Err(Error::config("target sample size must be positive"));
            }
        }
        Ok(())
    }

    pub fn load_catalog(&self) -> Result<Arc<Catalog>> {
        self.catalog.load().map(Arc::new)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = ExperimentConfig::default();
        let text = config.to_toml();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), config);
    }

    #[test]
    fn nested_sections_parse() {
        let text = r#"
            seed = 4
            simulator = "meta"
            tolerance = 3
            report_turns = [2, 4]

            [catalog.synthetic]
            n_items = 50
            dimension = 8
            domain_sizes = [2, 3]

            [ranker]
            name = "attribute_drift"
            similarity_weight = 0.05

            [alternatives.synthetic]
            seed = 1

            [targets.sample]
            n = 12
            predictor = "max_score"
        "#;
        let config = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(config.tolerance, 3);
        assert_eq!(config.simulator, SimulatorMode::Meta);
        assert!(matches!(config.ranker, RankerSpec::AttributeDrift { similarity_weight, .. } if similarity_weight == 0.05));
        assert!(matches!(config.targets, TargetSource::Sample(SampleSpec { n: 12, .. })));
        assert_eq!(config.load_catalog().unwrap().len(), 50);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml("simulator = \"meta\""),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::from_toml("[ranker]\nname = \"gru_rl\"").is_err());
        assert!(ExperimentConfig::from_toml("max_turns = 5\nreport_turns = [3, 6]").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("[targets]\nlist = []").is_err());
    }
}

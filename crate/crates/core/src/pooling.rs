//! Judging pools of candidate alternatives, and difficulty-stratified target
//! sampling driven by score-based query performance predictors.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ItemId};
use crate::error::{Error, Result};
use crate::mix_seed;
use crate::ranker::RankedList;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolSpec {
    pub nn_per_model: usize,
    pub retrieved_per_model: usize,
    /// Turn whose rankings supply the retrieved candidates.
    pub final_turn: u32,
    pub models: Vec<String>,
}

impl Default for PoolSpec {
    fn default() -> Self {
        PoolSpec {
            nn_per_model: 4,
            retrieved_per_model: 3,
            final_turn: 10,
            models: vec!["model-a".to_owned(), "model-b".to_owned()],
        }
    }
}

impl PoolSpec {
    pub fn target_size(&self) -> usize {
        self.models.len() * (self.nn_per_model + self.retrieved_per_model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Nn,
    Retrieved,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Nn => "nn",
            Provenance::Retrieved => "retrieved",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub id: ItemId,
    pub provenance: Provenance,
    pub model: String,
    /// 1-based rank in the source list the id was drawn from.
    pub source_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pool {
    pub target: ItemId,
    pub candidates: Vec<PoolEntry>,
    pub warnings: Vec<String>,
}

impl Pool {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.candidates.iter().filter(|c| c.provenance == provenance).count()
    }

    /// `target<TAB>candidate<TAB>provenance<TAB>model<TAB>source_rank` lines.
    pub fn write_tsv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        for c in &self.candidates {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                self.target, c.id, c.provenance, c.model, c.source_rank
            )?;
        }
        Ok(())
    }
}

/// Ranked sources contributed by one model for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSources {
    pub model: String,
    /// Nearest neighbours of the target in the model's embedding space.
    pub neighbors: Vec<ItemId>,
    /// The model's ranking at the final turn.
    pub final_ranking: Vec<ItemId>,
}

impl ModelSources {
    pub fn new(model: impl Into<String>, neighbors: Vec<ItemId>, final_ranking: &RankedList) -> Self {
        ModelSources {
            model: model.into(),
            neighbors,
            final_ranking: final_ranking.ids().cloned().collect(),
        }
    }
}

/// Fills the neighbour quota of every model (in `spec.models` order), then
/// the retrieved quota of every model. An id that is already pooled, or is
/// the target, is skipped in favour of the next one down the same source.
pub fn build_pool(target: &ItemId, sources: &[ModelSources], spec: &PoolSpec) -> Result<Pool> {
    let ordered: Vec<&ModelSources> = spec
        .models
        .iter()
        .map(|m| {
            sources
                .iter()
                .find(|s| &s.model == m)
                .ok_or_else(|| Error::param(format!("no sources for model `{m}`")))
        })
        .collect::<Result<_>>()?;

    let mut pooled: HashSet<&ItemId> = HashSet::from([target]);
    let mut candidates = Vec::with_capacity(spec.target_size());
    let mut warnings = Vec::new();
    let passes = [
        (Provenance::Nn, spec.nn_per_model),
        (Provenance::Retrieved, spec.retrieved_per_model),
    ];
    for (provenance, quota) in passes {
        for src in &ordered {
            let list = match provenance {
                Provenance::Nn => &src.neighbors,
                Provenance::Retrieved => &src.final_ranking,
            };
            let mut taken = 0;
            for (rank, id) in list.iter().enumerate() {
                if taken == quota {
                    break;
                }
                if pooled.insert(id) {
                    candidates.push(PoolEntry {
                        id: id.clone(),
                        provenance,
                        model: src.model.clone(),
                        source_rank: rank + 1,
                    });
                    taken += 1;
                }
            }
            if taken < quota {
                warnings.push(format!(
                    "{} source of `{}` exhausted after {taken} of {quota} candidates",
                    provenance, src.model
                ));
            }
        }
    }
    Ok(Pool {
        target: target.clone(),
        candidates,
        warnings,
    })
}

/// Score-based query performance predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    MaxScore,
    ScoreStdTopK,
    ScoreGap,
}

impl FromStr for Predictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max_score" => Ok(Predictor::MaxScore),
            "score_std_top_k" => Ok(Predictor::ScoreStdTopK),
            "score_gap" => Ok(Predictor::ScoreGap),
            other => Err(Error::config(format!(
                "unknown predictor `{other}` (expected max_score, score_std_top_k or score_gap)"
            ))),
        }
    }
}

pub const DEFAULT_QPP_DEPTH: usize = 10;

/// Predicted effectiveness of `ranking` from its raw scores, looking at the
/// top `k` entries. The standard deviation is the population one.
pub fn qpp_score(ranking: &RankedList, predictor: Predictor, k: usize) -> Result<f64> {
    let scores: Vec<f64> = ranking.scores().collect();
    if predictor != Predictor::MaxScore && k < 2 {
        return Err(Error::param(format!("{predictor:?} needs k >= 2, got {k}")));
    }
    let need = match predictor {
        Predictor::MaxScore => 1,
        Predictor::ScoreStdTopK | Predictor::ScoreGap => k.max(2),
    };
    if scores.len() < need {
        return Err(Error::param(format!(
            "{predictor:?} needs at least {need} scored entries, ranking has {}",
            scores.len()
        )));
    }
    Ok(match predictor {
        Predictor::MaxScore => scores[0],
        Predictor::ScoreStdTopK => {
            // shifted by the first score so constant lists give exactly 0
            let shifted: Vec<f64> = scores[..k].iter().map(|s| s - scores[0]).collect();
            let mean = shifted.iter().sum::<f64>() / k as f64;
            (shifted.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / k as f64).sqrt()
        }
        Predictor::ScoreGap => {
            let rest = &scores[1..k];
            scores[0] - rest.iter().sum::<f64>() / rest.len() as f64
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleSpec {
    pub n: usize,
    pub predictor: Predictor,
    pub k: usize,
    pub strata: usize,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec {
            n: 200,
            predictor: Predictor::ScoreGap,
            k: DEFAULT_QPP_DEPTH,
            strata: 3,
            seed: 0,
        }
    }
}

/// Sizes of `parts` nearly equal chunks of `n`; the first chunks take the
/// remainder.
fn split_evenly(n: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| n / parts + usize::from(i < n % parts)).collect()
}

/// Orders targets from easiest (highest predicted performance) to hardest,
/// cuts them into `spec.strata` equal strata and draws a seeded,
/// near-equal share of `spec.n` from each. The result lists the picks
/// stratum by stratum, each in difficulty order.
pub fn sample_targets(
    catalog: &Catalog,
    rankings: &[(ItemId, RankedList)],
    spec: &SampleSpec,
) -> Result<Vec<ItemId>> {
    if spec.n == 0 {
        return Err(Error::param("sample size must be positive"));
    }
    if spec.strata == 0 {
        return Err(Error::param("need at least one stratum"));
    }
    if spec.n > rankings.len() {
        return Err(Error::param(format!(
            "cannot sample {} targets from {}",
            spec.n,
            rankings.len()
        )));
    }
    let mut scored = Vec::with_capacity(rankings.len());
    let mut seen = HashSet::new();
    for (id, ranking) in rankings {
        catalog.position(id.as_str())?;
        if !seen.insert(id) {
            return Err(Error::param(format!("target `{id}` listed twice")));
        }
        scored.push((qpp_score(ranking, spec.predictor, spec.k)?, id));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));

    let strata = if spec.n < spec.strata { 1 } else { spec.strata };
    let sizes = split_evenly(scored.len(), strata);
    let quotas = split_evenly(spec.n, strata);
    let mut out = Vec::with_capacity(spec.n);
    let mut start = 0;
    for (s, (&size, &quota)) in sizes.iter().zip(&quotas).enumerate() {
        let stratum = &scored[start..start + size];
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, s as u64));
        let mut picks = index::sample(&mut rng, size, quota).into_vec();
        picks.sort_unstable();
        out.extend(picks.into_iter().map(|i| stratum[i].1.clone()));
        start += size;
    }
    Ok(out)
}

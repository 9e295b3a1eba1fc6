//! Simulated users: a relative-critique base simulator and the
//! alternatives-aware meta simulator that wraps it.
//!
//! The meta simulator behaves exactly like the base simulator until the
//! turn number exceeds its tolerance. From then on, at every call, it
//! retargets the critique at whichever member of `alternatives[target] ∪
//! {target}` is most similar to the item currently shown.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{self, Catalog, ItemId};
use crate::error::{Error, Result};
use crate::{mix_seed, stable_hash};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    MoreLike,
    LessLike,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::MoreLike => "more like",
            Direction::LessLike => "less like",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Clause {
    pub attribute: String,
    pub direction: Direction,
    pub value: String,
}

/// Structured relative feedback with a deterministic text rendering.
///
/// A critique with no clauses means the shown item already matches the
/// target on every attribute; it renders as `"same"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "CritiqueRepr", into = "CritiqueRepr")]
pub struct Critique {
    clauses: Vec<Clause>,
    rendered_text: String,
}

#[derive(Serialize, Deserialize)]
struct CritiqueRepr {
    clauses: Vec<Clause>,
    #[serde(default)]
    rendered_text: String,
}

impl From<CritiqueRepr> for Critique {
    fn from(r: CritiqueRepr) -> Self {
        Critique::new(r.clauses)
    }
}

impl From<Critique> for CritiqueRepr {
    fn from(c: Critique) -> Self {
        CritiqueRepr {
            clauses: c.clauses,
            rendered_text: c.rendered_text,
        }
    }
}

impl Critique {
    pub fn new(clauses: Vec<Clause>) -> Self {
        let rendered_text = render(&clauses);
        Critique {
            clauses,
            rendered_text,
        }
    }

    pub fn same() -> Self {
        Critique::new(Vec::new())
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn is_same(&self) -> bool {
        self.clauses.is_empty()
    }

    pub fn text(&self) -> &str {
        &self.rendered_text
    }
}

fn render(clauses: &[Clause]) -> String {
    if clauses.is_empty() {
        return "same".to_owned();
    }
    clauses
        .iter()
        .map(|c| format!("{}: {} {}", c.attribute, c.direction, c.value))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Judged alternatives per target, in the spirit of qrels.
///
/// A target may map to an empty set; a target that is absent from the map is
/// a configuration error when the meta simulator is asked about it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlternativesMap {
    entries: BTreeMap<ItemId, BTreeSet<ItemId>>,
    provenance: String,
}

impl AlternativesMap {
    pub fn new(provenance: impl Into<String>) -> Self {
        AlternativesMap {
            entries: BTreeMap::new(),
            provenance: provenance.into(),
        }
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn declare(&mut self, target: ItemId) {
        self.entries.entry(target).or_default();
    }

    pub fn insert(&mut self, target: ItemId, alternative: ItemId) {
        self.entries.entry(target).or_default().insert(alternative);
    }

    pub fn get(&self, target: &str) -> Option<&BTreeSet<ItemId>> {
        self.entries.get(target)
    }

    pub fn targets(&self) -> impl Iterator<Item = &ItemId> + '_ {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ItemId, &BTreeSet<ItemId>)> + '_ {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Mean number of alternatives per declared target.
    pub fn mean_alternatives(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        let total: usize = self.entries.values().map(BTreeSet::len).sum();
        total as f64 / self.entries.len() as f64
    }

    pub fn validate(&self, catalog: &Catalog) -> Result<()> {
        for (target, alts) in &self.entries {
            catalog.position(target.as_str())?;
            for alt in alts {
                catalog.position(alt.as_str())?;
            }
        }
        Ok(())
    }

    /// Reads `target<TAB>alternative` lines. `#` starts a comment line,
    /// duplicates are ignored, and a line holding only a target id declares
    /// that target with no alternatives.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut map = AlternativesMap::new(path.display().to_string());
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                [target] if !target.is_empty() => map.declare(ItemId::from(*target)),
                [target, alt] if !target.is_empty() && !alt.is_empty() => {
                    map.insert(ItemId::from(*target), ItemId::from(*alt))
                }
                _ => {
                    return Err(Error::parse(
                        path,
                        i + 1,
                        "expected `target_id<TAB>alternative_id`",
                    ))
                }
            }
        }
        Ok(map)
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "# alternatives: {}", self.provenance)?;
        for (target, alts) in &self.entries {
            if alts.is_empty() {
                writeln!(out, "{target}")?;
            }
            for alt in alts {
                writeln!(out, "{target}\t{alt}")?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Seeded stand-in for crowd-judged alternatives: each target receives a
    /// uniformly drawn count in `min_count..=max_count` of its nearest
    /// neighbors that share at least `min_shared` attribute values with it.
    pub fn synthesize(
        catalog: &Catalog,
        targets: &[ItemId],
        spec: &SyntheticAlternatives,
    ) -> Result<Self> {
        if spec.min_count > spec.max_count {
            return Err(Error::param("min_count must not exceed max_count"));
        }
        let n_attrs = catalog.schema().len();
        let min_shared = spec.min_shared.unwrap_or(n_attrs.saturating_sub(1));
        let mut map = AlternativesMap::new(format!(
            "synthetic(seed={}, count={}..={}, min_shared={min_shared})",
            spec.seed, spec.min_count, spec.max_count
        ));
        for target in targets {
            let pos = catalog.position(target.as_str())?;
            let mut rng =
                ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, stable_hash(target.as_str())));
            let count = rng.random_range(spec.min_count..=spec.max_count);
            map.declare(target.clone());
            if count == 0 || catalog.len() < 2 {
                continue;
            }
            let codes = catalog.codes_at(pos);
            let neighbors = catalog::nearest_neighbors(catalog, target.as_str(), catalog.len() - 1, true)?;
            let picked = neighbors
                .into_iter()
                .filter(|(id, _)| {
                    let other = catalog.codes_at(catalog.position(id.as_str()).expect("neighbor in catalog"));
                    codes.iter().zip(other).filter(|(a, b)| a == b).count() >= min_shared
                })
                .take(count);
            for (id, _) in picked {
                map.insert(target.clone(), id);
            }
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticAlternatives {
    pub seed: u64,
    pub min_count: usize,
    pub max_count: usize,
    /// Defaults to one fewer than the number of schema attributes.
    pub min_shared: Option<usize>,
}

impl Default for SyntheticAlternatives {
    fn default() -> Self {
        SyntheticAlternatives {
            seed: 0,
            min_count: 2,
            max_count: 5,
            min_shared: None,
        }
    }
}

/// Records that the meta simulator critiqued toward something other than
/// the original target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub target: ItemId,
    pub turn: u32,
    pub chosen: ItemId,
    pub top_ranked: ItemId,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub critique: Critique,
    pub effective_target: ItemId,
    pub switch_event: Option<SwitchEvent>,
}

/// A user simulator answers each turn with a critique of the shown item.
pub trait Simulator: Send + Sync {
    fn respond(&self, turn: u32, top_ranked: &ItemId, target: &ItemId) -> Result<Response>;
}

/// Critiques every attribute on which the shown item differs from the
/// target, in schema order, phrased toward the target's value.
#[derive(Debug, Clone)]
pub struct BaseSimulator {
    catalog: Arc<Catalog>,
}

impl BaseSimulator {
    pub fn new(catalog: Arc<Catalog>) -> Self {
        BaseSimulator { catalog }
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn critique(&self, turn: u32, top_ranked: &str, target: &str) -> Result<Critique> {
        if turn == 0 {
            return Err(Error::param("turns are numbered from 1"));
        }
        let shown = self.catalog.get(top_ranked)?;
        let wanted = self.catalog.get(target)?;
        let clauses = self
            .catalog
            .schema()
            .iter()
            .zip(shown.attributes.iter().zip(&wanted.attributes))
            .filter(|(_, (have, want))| have != want)
            .map(|(attr, (_, want))| Clause {
                attribute: attr.name.clone(),
                direction: Direction::MoreLike,
                value: want.clone(),
            })
            .collect();
        Ok(Critique::new(clauses))
    }
}

impl Simulator for BaseSimulator {
    fn respond(&self, turn: u32, top_ranked: &ItemId, target: &ItemId) -> Result<Response> {
        Ok(Response {
            critique: self.critique(turn, top_ranked.as_str(), target.as_str())?,
            effective_target: target.clone(),
            switch_event: None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MetaSimConfig {
    /// Alternatives are considered only at turns strictly greater than this.
    pub tolerance: u32,
    /// Embedding space used to pick the alternative closest to the shown item.
    pub similarity_space: Arc<Catalog>,
}

#[derive(Debug, Clone)]
pub struct MetaSimulator {
    base: BaseSimulator,
    config: MetaSimConfig,
    alternatives: Arc<AlternativesMap>,
}

impl MetaSimulator {
    pub fn new(base: BaseSimulator, config: MetaSimConfig, alternatives: Arc<AlternativesMap>) -> Self {
        MetaSimulator {
            base,
            config,
            alternatives,
        }
    }

    pub fn tolerance(&self) -> u32 {
        self.config.tolerance
    }

    pub fn alternatives(&self) -> &AlternativesMap {
        &self.alternatives
    }

    /// The member of `alternatives[target] ∪ {target}` most similar to
    /// `top_ranked`, ties resolved toward the smaller id.
    pub fn select_target(&self, top_ranked: &str, target: &ItemId) -> Result<(ItemId, f64)> {
        let alts = self.alternatives.get(target.as_str()).ok_or_else(|| {
            Error::config(format!("target `{target}` has no entry in the alternatives map"))
        })?;
        let space = &self.config.similarity_space;
        let shown = &space.get(top_ranked)?.embedding;
        let mut candidates: BTreeSet<&ItemId> = alts.iter().collect();
        candidates.insert(target);
        let mut best: Option<(&ItemId, f64)> = None;
        // ascending id order plus strict comparison keeps the smallest id on ties
        for cand in candidates {
            let s = catalog::similarity(&space.get(cand.as_str())?.embedding, shown)?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((cand, s));
            }
        }
        let (id, s) = best.expect("candidate set contains the target");
        Ok((id.clone(), s))
    }

    pub fn critique(&self, turn: u32, top_ranked: &ItemId, target: &ItemId) -> Result<Response> {
        if self.alternatives.get(target.as_str()).is_none() {
            return Err(Error::config(format!(
                "target `{target}` has no entry in the alternatives map"
            )));
        }
        if turn <= self.config.tolerance {
            return self.base.respond(turn, top_ranked, target);
        }
        let (effective, similarity) = self.select_target(top_ranked.as_str(), target)?;
        let critique = self.base.critique(turn, top_ranked.as_str(), effective.as_str())?;
        let switch_event = (effective != *target).then(|| SwitchEvent {
            target: target.clone(),
            turn,
            chosen: effective.clone(),
            top_ranked: top_ranked.clone(),
            similarity,
        });
        Ok(Response {
            critique,
            effective_target: effective,
            switch_event,
        })
    }
}

impl Simulator for MetaSimulator {
    fn respond(&self, turn: u32, top_ranked: &ItemId, target: &ItemId) -> Result<Response> {
        self.critique(turn, top_ranked, target)
    }
}

//! Per-turn ranking contract standing in for trained conversational
//! recommenders, plus three seeded baselines of increasing strength.
//!
//! Implementations are pure: `rank` takes the previous state by reference
//! and returns a fresh one, so replaying a transcript reproduces the same
//! rankings.

use std::any::Any;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::catalog::{self, Catalog, ItemId};
use crate::error::{Error, Result};
use crate::mix_seed;
use crate::simulator::{Critique, Direction};

/// Number of items a ranker emits per turn unless configured otherwise.
pub const DEFAULT_DEPTH: usize = 100;

/// Ordered `(id, score)` entries: scores non-increasing, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    entries: Vec<(ItemId, f64)>,
    produced_at_turn: u32,
}

impl RankedList {
    /// Validates uniqueness and the `(-score, id)` order.
    pub fn new(entries: Vec<(ItemId, f64)>, produced_at_turn: u32) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for (id, score) in &entries {
            if score.is_nan() {
                return Err(Error::param(format!("score for `{id}` is NaN")));
            }
            if !seen.insert(id) {
                return Err(Error::param(format!("duplicate id `{id}` in ranking")));
            }
        }
        for pair in entries.windows(2) {
            let ((a, sa), (b, sb)) = (&pair[0], &pair[1]);
            if sa < sb || (sa == sb && a >= b) {
                return Err(Error::param(format!(
                    "ranking out of order at `{a}` ({sa}) / `{b}` ({sb})"
                )));
            }
        }
        Ok(RankedList {
            entries,
            produced_at_turn,
        })
    }

    /// Sorts catalog positions by `(-score, id)` and keeps the first `depth`.
    /// `scores` is indexed by catalog position.
    pub fn from_scores(catalog: &Catalog, scores: &[f64], depth: usize, produced_at_turn: u32) -> Self {
        debug_assert_eq!(scores.len(), catalog.len());
        let mut order: Vec<usize> = (0..scores.len()).collect();
        let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
        let depth = depth.min(order.len());
        if depth > 0 && depth < order.len() {
            order.select_nth_unstable_by(depth - 1, cmp);
            order.truncate(depth);
        }
        order.sort_unstable_by(cmp);
        RankedList {
            entries: order
                .into_iter()
                .map(|p| (catalog.item_at(p).id.clone(), scores[p]))
                .collect(),
            produced_at_turn,
        }
    }

    pub fn entries(&self) -> &[(ItemId, f64)] {
        &self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = &ItemId> + '_ {
        self.entries.iter().map(|(id, _)| id)
    }

    pub fn scores(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|(_, s)| *s)
    }

    /// The item shown to the user.
    pub fn top(&self) -> Option<&ItemId> {
        self.entries.first().map(|(id, _)| id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn produced_at_turn(&self) -> u32 {
        self.produced_at_turn
    }

    pub fn truncated(&self, depth: usize) -> RankedList {
        RankedList {
            entries: self.entries.iter().take(depth).cloned().collect(),
            produced_at_turn: self.produced_at_turn,
        }
    }

    fn at_turn(&self, turn: u32) -> RankedList {
        RankedList {
            entries: self.entries.clone(),
            produced_at_turn: turn,
        }
    }
}

/// A conversational ranker with an explicit per-conversation state.
pub trait Ranker: Send + Sync {
    type State: Send + Sync + 'static;

    fn name(&self) -> &str;

    /// Starting state and the empty-history ranking (turn 0) whose top item
    /// is the first one shown to the user.
    fn start(&self, conversation_seed: u64) -> (RankedList, Self::State);

    fn rank(&self, state: &Self::State, critique: &Critique, turn: u32) -> (RankedList, Self::State);
}

/// Type-erased ranker state, owned by a single conversation.
pub struct RankerState(Box<dyn Any + Send + Sync>);

impl fmt::Debug for RankerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("RankerState(..)")
    }
}

/// Object-safe view of [`Ranker`], so rankers can be chosen by name at run time.
pub trait DynRanker: Send + Sync {
    fn name(&self) -> &str;
    fn start(&self, conversation_seed: u64) -> (RankedList, RankerState);
    fn rank(&self, state: &RankerState, critique: &Critique, turn: u32) -> (RankedList, RankerState);
}

impl<R: Ranker> DynRanker for R {
    fn name(&self) -> &str {
        Ranker::name(self)
    }

    fn start(&self, conversation_seed: u64) -> (RankedList, RankerState) {
        let (list, state) = Ranker::start(self, conversation_seed);
        (list, RankerState(Box::new(state)))
    }

    fn rank(&self, state: &RankerState, critique: &Critique, turn: u32) -> (RankedList, RankerState) {
        let state = state
            .0
            .downcast_ref::<R::State>()
            .expect("ranker state belongs to a different ranker");
        let (list, next) = Ranker::rank(self, state, critique, turn);
        (list, RankerState(Box::new(next)))
    }
}

/// Seeded shuffle at every turn; ignores feedback entirely.
#[derive(Debug, Clone)]
pub struct RandomRanker {
    catalog: Arc<Catalog>,
    seed: u64,
    depth: usize,
}

impl RandomRanker {
    pub fn new(catalog: Arc<Catalog>, seed: u64, depth: usize) -> Self {
        RandomRanker { catalog, seed, depth }
    }

    fn shuffled(&self, conversation_seed: u64, turn: u32) -> RankedList {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
            mix_seed(self.seed, conversation_seed),
            u64::from(turn),
        ));
        let n = self.catalog.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut scores = vec![0.0; n];
        for (rank, &pos) in order.iter().enumerate() {
            scores[pos] = (n - rank) as f64 / n as f64;
        }
        RankedList::from_scores(&self.catalog, &scores, self.depth, turn)
    }
}

impl Ranker for RandomRanker {
    type State = u64;

    fn name(&self) -> &str {
        "random"
    }

    fn start(&self, conversation_seed: u64) -> (RankedList, u64) {
        (self.shuffled(conversation_seed, 0), conversation_seed)
    }

    fn rank(&self, state: &u64, _critique: &Critique, turn: u32) -> (RankedList, u64) {
        (self.shuffled(*state, turn), *state)
    }
}

/// Keeps an integer-valued preference count per attribute value, bumped by
/// every clause. Items score by their summed preference, plus a small
/// similarity bonus toward the shown item that best fits the preferences.
///
/// The bonus is bounded by `similarity_weight < 1`, so one extra matching
/// clause always outweighs it.
#[derive(Debug, Clone)]
pub struct AttributeDriftRanker {
    catalog: Arc<Catalog>,
    seed: u64,
    similarity_weight: f64,
    depth: usize,
}

#[derive(Debug, Clone)]
pub struct DriftState {
    profile: Vec<Vec<f64>>,
    /// Catalog positions of items shown so far.
    seen: Vec<usize>,
    anchor: usize,
}

impl AttributeDriftRanker {
    pub const DEFAULT_SIMILARITY_WEIGHT: f64 = 0.01;

    pub fn new(catalog: Arc<Catalog>, seed: u64, similarity_weight: f64, depth: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&similarity_weight) {
            return Err(Error::config(format!(
                "attribute_drift similarity_weight must be in [0, 1), got {similarity_weight}"
            )));
        }
        Ok(AttributeDriftRanker {
            catalog,
            seed,
            similarity_weight,
            depth,
        })
    }

    fn preference(&self, profile: &[Vec<f64>], pos: usize) -> f64 {
        self.catalog
            .codes_at(pos)
            .iter()
            .zip(profile)
            .map(|(&code, weights)| weights[code])
            .sum()
    }

    fn reference(&self, state: &DriftState) -> usize {
        state
            .seen
            .iter()
            .copied()
            .max_by(|&a, &b| {
                self.preference(&state.profile, a)
                    .total_cmp(&self.preference(&state.profile, b))
                    .then(b.cmp(&a))
            })
            .unwrap_or(state.anchor)
    }

    fn scores(&self, state: &DriftState) -> Vec<f64> {
        let reference = &self.catalog.item_at(self.reference(state)).embedding;
        (0..self.catalog.len())
            .map(|pos| {
                let sim = catalog::cosine(&self.catalog.item_at(pos).embedding, reference);
                self.preference(&state.profile, pos) + self.similarity_weight * (sim + 1.0) / 2.0
            })
            .collect()
    }

    fn emit(&self, mut state: DriftState, turn: u32) -> (RankedList, DriftState) {
        let list = RankedList::from_scores(&self.catalog, &self.scores(&state), self.depth, turn);
        if let Some(top) = list.top() {
            let pos = self.catalog.position(top.as_str()).expect("ranked id in catalog");
            if !state.seen.contains(&pos) {
                state.seen.push(pos);
            }
        }
        (list, state)
    }
}

impl Ranker for AttributeDriftRanker {
    type State = DriftState;

    fn name(&self) -> &str {
        "attribute_drift"
    }

    fn start(&self, conversation_seed: u64) -> (RankedList, DriftState) {
        let anchor = (mix_seed(self.seed, conversation_seed) % self.catalog.len() as u64) as usize;
        let profile = self
            .catalog
            .schema()
            .iter()
            .map(|a| vec![0.0; a.values.len()])
            .collect();
        self.emit(
            DriftState {
                profile,
                seen: Vec::new(),
                anchor,
            },
            0,
        )
    }

    fn rank(&self, state: &DriftState, critique: &Critique, turn: u32) -> (RankedList, DriftState) {
        let mut next = state.clone();
        let schema = self.catalog.schema();
        for clause in critique.clauses() {
            let Some(a) = schema.iter().position(|attr| attr.name == clause.attribute) else {
                continue;
            };
            let Some(v) = schema[a].values.iter().position(|v| *v == clause.value) else {
                continue;
            };
            next.profile[a][v] += match clause.direction {
                Direction::MoreLike => 1.0,
                Direction::LessLike => -1.0,
            };
        }
        self.emit(next, turn)
    }
}

/// Cosine ranking against a query vector that is blended toward the
/// attribute one-hot direction implied by each critique. Attributes the
/// critique leaves unmentioned are taken to match the shown item.
#[derive(Debug, Clone)]
pub struct OracleEmbeddingRanker {
    catalog: Arc<Catalog>,
    seed: u64,
    step: f64,
    depth: usize,
    offsets: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct OracleState {
    query: Vec<f64>,
    last: RankedList,
}

impl OracleEmbeddingRanker {
    pub const DEFAULT_STEP: f64 = 0.5;

    pub fn new(catalog: Arc<Catalog>, seed: u64, step: f64, depth: usize) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::config(format!(
                "oracle_embedding step must be in (0, 1], got {step}"
            )));
        }
        let block_len: usize = catalog.schema().iter().map(|a| a.values.len()).sum();
        if block_len > catalog.dimension() {
            return Err(Error::config(format!(
                "oracle_embedding needs one-hot attribute blocks ({block_len} coordinates) \
                 inside the {}-dimensional embedding",
                catalog.dimension()
            )));
        }
        let offsets = catalog.block_offsets();
        Ok(OracleEmbeddingRanker {
            catalog,
            seed,
            step,
            depth,
            offsets,
        })
    }

    fn ranking(&self, query: &[f64], turn: u32) -> RankedList {
        let scores: Vec<f64> = self
            .catalog
            .items()
            .iter()
            .map(|item| catalog::cosine(query, &item.embedding))
            .collect();
        RankedList::from_scores(&self.catalog, &scores, self.depth, turn)
    }

    fn implied_direction(&self, critique: &Critique, shown: Option<usize>) -> Vec<f64> {
        let schema = self.catalog.schema();
        let mut direction = vec![0.0; self.catalog.dimension()];
        let mut mentioned = vec![false; schema.len()];
        for clause in critique.clauses() {
            let Some(a) = schema.iter().position(|attr| attr.name == clause.attribute) else {
                continue;
            };
            let Some(v) = schema[a].values.iter().position(|v| *v == clause.value) else {
                continue;
            };
            mentioned[a] = true;
            direction[self.offsets[a] + v] += match clause.direction {
                Direction::MoreLike => 1.0,
                Direction::LessLike => -1.0,
            };
        }
        if let Some(shown) = shown {
            let codes = self.catalog.codes_at(shown);
            for (a, _) in mentioned.iter().enumerate().filter(|(_, m)| !**m) {
                direction[self.offsets[a] + codes[a]] += 1.0;
            }
        }
        catalog::normalize(&mut direction);
        direction
    }
}

impl Ranker for OracleEmbeddingRanker {
    type State = OracleState;

    fn name(&self) -> &str {
        "oracle_embedding"
    }

    fn start(&self, conversation_seed: u64) -> (RankedList, OracleState) {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, conversation_seed));
        let mut query: Vec<f64> = (0..self.catalog.dimension())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        catalog::normalize(&mut query);
        let last = self.ranking(&query, 0);
        (last.clone(), OracleState { query, last })
    }

    fn rank(&self, state: &OracleState, critique: &Critique, turn: u32) -> (RankedList, OracleState) {
        if critique.is_same() {
            let last = state.last.at_turn(turn);
            return (
                last.clone(),
                OracleState {
                    query: state.query.clone(),
                    last,
                },
            );
        }
        let shown = state
            .last
            .top()
            .and_then(|id| self.catalog.position(id.as_str()).ok());
        let direction = self.implied_direction(critique, shown);
        let mut query: Vec<f64> = state
            .query
            .iter()
            .zip(&direction)
            .map(|(q, d)| (1.0 - self.step) * q + self.step * d)
            .collect();
        catalog::normalize(&mut query);
        let last = self.ranking(&query, turn);
        (last.clone(), OracleState { query, last })
    }
}

/// Ranker selection by name plus parameters, as written in experiment
/// configuration files. Unknown names fail to deserialize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum RankerSpec {
    Random {
        #[serde(default)]
        seed: u64,
    },
    AttributeDrift {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_similarity_weight")]
        similarity_weight: f64,
    },
    OracleEmbedding {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_step")]
        step: f64,
    },
}

fn default_similarity_weight() -> f64 {
    AttributeDriftRanker::DEFAULT_SIMILARITY_WEIGHT
}

fn default_step() -> f64 {
    OracleEmbeddingRanker::DEFAULT_STEP
}

impl RankerSpec {
    pub const NAMES: [&'static str; 3] = ["random", "attribute_drift", "oracle_embedding"];

    /// Default parameters for a ranker name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "random" => Ok(RankerSpec::Random { seed: 0 }),
            "attribute_drift" => Ok(RankerSpec::AttributeDrift {
                seed: 0,
                similarity_weight: default_similarity_weight(),
            }),
            "oracle_embedding" => Ok(RankerSpec::OracleEmbedding {
                seed: 0,
                step: default_step(),
            }),
            other => Err(Error::config(format!(
                "unknown ranker `{other}` (expected one of {})",
                Self::NAMES.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RankerSpec::Random { .. } => "random",
            RankerSpec::AttributeDrift { .. } => "attribute_drift",
            RankerSpec::OracleEmbedding { .. } => "oracle_embedding",
        }
    }

    pub fn build(&self, catalog: Arc<Catalog>, depth: usize) -> Result<Arc<dyn DynRanker>> {
        Ok(match *self {
            RankerSpec::Random { seed } => Arc::new(RandomRanker::new(catalog, seed, depth)),
            RankerSpec::AttributeDrift {
                seed,
                similarity_weight,
            } => Arc::new(AttributeDriftRanker::new(catalog, seed, similarity_weight, depth)?),
            RankerSpec::OracleEmbedding { seed, step } => {
                Arc::new(OracleEmbeddingRanker::new(catalog, seed, step, depth)?)
            }
        })
    }
}

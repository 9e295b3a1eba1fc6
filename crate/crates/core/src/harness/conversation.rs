use serde::{Deserialize, Serialize};

use crate::catalog::ItemId;
use crate::error::{Error, Result};
use crate::metrics::{saturate, Cutoffs, RelevanceSet, TurnMetrics};
use crate::ranker::{DynRanker, RankedList};
use crate::simulator::{Critique, Simulator, SwitchEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: u32,
    /// The item the critique was about (top-1 of the previous ranking).
    pub shown: ItemId,
    pub critique: Critique,
    pub effective_target: ItemId,
    /// Top-1 of the ranking produced this turn.
    pub top: ItemId,
    pub ranking: RankedList,
    pub switch_event: Option<SwitchEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationTrace {
    pub target: ItemId,
    /// Top-1 of the empty-history ranking, critiqued at turn 1.
    pub initial_top: ItemId,
    pub records: Vec<TurnRecord>,
    pub termination_turn: u32,
    pub success: bool,
    pub success_turn: Option<u32>,
}

impl ConversationTrace {
    pub fn switch_events(&self) -> impl Iterator<Item = &SwitchEvent> + '_ {
        self.records.iter().filter_map(|r| r.switch_event.as_ref())
    }
}

/// Drives one conversation per call. Turn `t` critiques the item shown by
/// the ranking of turn `t - 1`; the loop stops as soon as a ranking's top-1
/// is relevant, or after `max_turns`.
pub struct ConversationRunner<'a> {
    pub ranker: &'a dyn DynRanker,
    pub simulator: &'a dyn Simulator,
    pub max_turns: u32,
    pub ranking_depth: usize,
}

impl ConversationRunner<'_> {
    pub fn run(&self, target: &ItemId, relevant: &RelevanceSet, seed: u64) -> Result<ConversationTrace> {
        let (mut ranking, mut state) = self.ranker.start(seed);
        let initial_top = top_of(&ranking)?;
        let mut records = Vec::with_capacity(self.max_turns as usize);
        let mut success_turn = None;
        for turn in 1..=self.max_turns {
            let shown = top_of(&ranking)?;
            let response = self.simulator.respond(turn, &shown, target)?;
            let (next, next_state) = self.ranker.rank(&state, &response.critique, turn);
            let top = top_of(&next)?;
            let hit = relevant.contains(&top);
            records.push(TurnRecord {
                turn,
                shown,
                critique: response.critique,
                effective_target: response.effective_target,
                top,
                ranking: next.truncated(self.ranking_depth),
                switch_event: response.switch_event,
            });
            ranking = next;
            state = next_state;
            if hit {
                success_turn = Some(turn);
                break;
            }
        }
        Ok(ConversationTrace {
            target: target.clone(),
            initial_top,
            termination_turn: records.last().map_or(0, |r| r.turn),
            success: success_turn.is_some(),
            success_turn,
            records,
        })
    }
}

fn top_of(ranking: &RankedList) -> Result<ItemId> {
    ranking
        .top()
        .cloned()
        .ok_or_else(|| Error::config("ranker produced an empty ranking"))
}

/// Per-turn metrics of `trace` over turns `1..=max_turns` under `relevant`,
/// saturated from the first turn whose top-1 is relevant.
///
/// `relevant` may differ from the set the conversation was run with, which
/// re-judges a finished run. A trace that stopped early must still have a
/// relevant final top-1 under `relevant`.
pub fn evaluate_trace(
    trace: &ConversationTrace,
    relevant: &RelevanceSet,
    cutoffs: Cutoffs,
    max_turns: u32,
) -> Result<Vec<TurnMetrics>> {
    let mut series: Vec<TurnMetrics> = trace
        .records
        .iter()
        .map(|r| TurnMetrics::compute(r.turn, &r.ranking, relevant, cutoffs))
        .collect();
    let success = trace
        .records
        .iter()
        .find(|r| relevant.contains(&r.top))
        .map(|r| r.turn);
    let last = trace.termination_turn;
    if last < max_turns {
        if success.is_none() {
            return Err(Error::param(format!(
                "trace for `{}` stopped at turn {last} without a relevant top-1 under this relevance set",
                trace.target
            )));
        }
        series.extend((last + 1..=max_turns).map(TurnMetrics::saturated));
    }
    saturate(&series, success)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::catalog::{generate_synthetic, uniform_schema};
    use crate::ranker::{OracleEmbeddingRanker, RandomRanker};
    use crate::simulator::BaseSimulator;

    #[test]
    fn random_ranker_runs_full_length() {
        let cat = Arc::new(generate_synthetic(2, 10_000, 8, uniform_schema(&[2, 2])).unwrap());
        let ranker = RandomRanker::new(cat.clone(), 0, 100);
        let sim = BaseSimulator::new(cat.clone());
        let runner = ConversationRunner {
            ranker: &ranker,
            simulator: &sim,
            max_turns: 10,
            ranking_depth: 100,
        };
        let target = cat.item_at(1234).id.clone();
        let trace = runner.run(&target, &RelevanceSet::single(target.clone()), 5).unwrap();
        assert!(!trace.success);
        assert_eq!(trace.records.len(), 10);
        assert_eq!(trace.termination_turn, 10);
        let series = evaluate_trace(&trace, &RelevanceSet::single(target), Cutoffs::default(), 10).unwrap();
        assert_eq!(series.len(), 10);
    }

    #[test]
    fn early_success_saturates_remaining_turns() {
        let cat = Arc::new(generate_synthetic(3, 60, 16, uniform_schema(&[3, 3, 3])).unwrap());
        let ranker = OracleEmbeddingRanker::new(cat.clone(), 0, 0.5, 100).unwrap();
        let sim = BaseSimulator::new(cat.clone());
        let runner = ConversationRunner {
            ranker: &ranker,
            simulator: &sim,
            max_turns: 10,
            ranking_depth: 100,
        };
        let mut successes = 0;
        for pos in 0..cat.len() {
            let target = cat.item_at(pos).id.clone();
            let rel = RelevanceSet::single(target.clone());
            let trace = runner.run(&target, &rel, pos as u64).unwrap();
            if let Some(turn) = trace.success_turn {
                successes += 1;
                assert_eq!(trace.termination_turn, turn);
                assert_eq!(trace.records.last().unwrap().top, target);
                let series = evaluate_trace(&trace, &rel, Cutoffs::default(), 10).unwrap();
                assert!(series[turn as usize - 1..].iter().all(|m| m.saturated && m.sr_at_1 == 1.0));
                assert!(series[..turn as usize - 1].iter().all(|m| m.sr_at_1 == 0.0));
            }
        }
        assert!(successes > 0);
    }
}

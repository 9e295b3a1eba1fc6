use std::collections::HashSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{load_target_list, AlternativesSource, ExperimentConfig, SimulatorMode, TargetSource};
use super::conversation::{evaluate_trace, ConversationRunner, ConversationTrace};
use crate::catalog::{Catalog, ItemId};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, improvement, AggregateTable, Cutoffs, Metric, RelevanceSet, TurnMetrics};
use crate::pooling::{sample_targets, SampleSpec};
use crate::ranker::{DynRanker, RankedList, RankerSpec};
use crate::simulator::{AlternativesMap, BaseSimulator, MetaSimConfig, MetaSimulator, Simulator};
use crate::{mix_seed, stable_hash};

/// A resolved experiment: catalog loaded, targets chosen, alternatives
/// available. Several runs (base, meta, other rankers or tolerances) can
/// share one setup so they evaluate the same targets.
#[derive(Debug, Clone)]
pub struct Setup {
    pub config: ExperimentConfig,
    pub catalog: Arc<Catalog>,
    pub alternatives: Option<Arc<AlternativesMap>>,
    /// Ascending id order.
    pub targets: Vec<ItemId>,
}

impl Setup {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let catalog = config.load_catalog()?;
        let mut targets = match &config.targets {
            TargetSource::File(path) => load_target_list(path)?,
            TargetSource::List(list) => list.clone(),
            TargetSource::Sample(spec) => sample_for(config, &catalog, spec)?,
        };
        if targets.is_empty() {
            return Err(Error::config("no targets to evaluate"));
        }
        let mut seen = HashSet::new();
        for t in &targets {
            if !catalog.contains(t.as_str()) {
                return Err(Error::config(format!("target `{t}` is not in the catalog")));
            }
            if !seen.insert(t) {
                return Err(Error::config(format!("target `{t}` is listed twice")));
            }
        }
        targets.sort();

        let alternatives = match &config.alternatives {
            None => None,
            Some(AlternativesSource::File(path)) => Some(AlternativesMap::load(path)?),
            Some(AlternativesSource::Synthetic(spec)) => Some(AlternativesMap::synthesize(&catalog, &targets, spec)?),
        };
        if let Some(map) = &alternatives {
            map.validate(&catalog)
                .map_err(|e| Error::config(format!("alternatives do not match the catalog: {e}")))?;
            if let Some(t) = targets.iter().find(|t| map.get(t.as_str()).is_none()) {
                return Err(Error::config(format!("target `{t}` has no entry in the alternatives map")));
            }
        }
        Ok(Setup {
            config: config.clone(),
            catalog,
            alternatives: alternatives.map(Arc::new),
            targets,
        })
    }

    fn alternatives_or_err(&self) -> Result<&Arc<AlternativesMap>> {
        self.alternatives
            .as_ref()
            .ok_or_else(|| Error::config("meta simulator mode requires an alternatives source"))
    }

    pub fn conversation_seed(&self, target: &ItemId) -> u64 {
        mix_seed(self.config.seed, stable_hash(target.as_str()))
    }

    fn relevance(&self, target: &ItemId, with_alternatives: bool) -> RelevanceSet {
        match (&self.alternatives, with_alternatives) {
            (Some(map), true) => {
                RelevanceSet::with_alternatives(target, map.get(target.as_str()).into_iter().flatten())
            }
            _ => RelevanceSet::single(target.clone()),
        }
    }

    pub fn build_ranker(&self, spec: &RankerSpec) -> Result<Arc<dyn DynRanker>> {
        spec.build(self.catalog.clone(), self.config.effective_depth())
    }

    /// Runs every target with a fresh ranker state and evaluates the traces.
    pub fn run(&self, ranker: &RankerSpec, mode: SimulatorMode, tolerance: u32) -> Result<RunReport> {
        let ranker_impl = self.build_ranker(ranker)?;
        let base = BaseSimulator::new(self.catalog.clone());
        let simulator: Box<dyn Simulator> = match mode {
            SimulatorMode::Base => Box::new(base),
            SimulatorMode::Meta => Box::new(MetaSimulator::new(
                base,
                MetaSimConfig {
                    tolerance,
                    similarity_space: self.catalog.clone(),
                },
                self.alternatives_or_err()?.clone(),
            )),
        };
        let cfg = &self.config;
        let runner = ConversationRunner {
            ranker: ranker_impl.as_ref(),
            simulator: simulator.as_ref(),
            max_turns: cfg.max_turns,
            ranking_depth: cfg.effective_depth(),
        };
        let meta = mode == SimulatorMode::Meta;
        let mut traces: Vec<ConversationTrace> = self
            .targets
            .par_iter()
            .map(|t| runner.run(t, &self.relevance(t, meta), self.conversation_seed(t)))
            .collect::<Result<_>>()?;
        traces.sort_by(|a, b| a.target.cmp(&b.target));

        let series = self.evaluate(&traces, meta)?;
        let rejudged = match (&self.alternatives, mode) {
            (Some(_), SimulatorMode::Base) => Some(self.summarize(&self.evaluate(&traces, true)?)?),
            _ => None,
        };
        let (per_turn, report) = self.summarize(&series)?;
        Ok(RunReport {
            label: run_label(ranker.name(), mode, tolerance),
            ranker: ranker.name().to_owned(),
            mode,
            tolerance: meta.then_some(tolerance),
            seed: cfg.seed,
            max_turns: cfg.max_turns,
            cutoffs: cfg.cutoffs,
            report_turns: cfg.report_turns.clone(),
            targets: self.targets.clone(),
            per_turn,
            report,
            rejudged: rejudged.map(|(per_turn, report)| Rejudged { per_turn, report }),
            switch_counts: switch_frequency_report(&traces, cfg.max_turns),
            series: traces
                .iter()
                .zip(series)
                .map(|(t, metrics)| TargetSeries {
                    target: t.target.clone(),
                    metrics,
                })
                .collect(),
            traces,
            notices: Vec::new(),
        })
    }

    fn evaluate(&self, traces: &[ConversationTrace], with_alternatives: bool) -> Result<Vec<Vec<TurnMetrics>>> {
        traces
            .iter()
            .map(|t| {
                evaluate_trace(
                    t,
                    &self.relevance(&t.target, with_alternatives),
                    self.config.cutoffs,
                    self.config.max_turns,
                )
            })
            .collect()
    }

    fn summarize(&self, series: &[Vec<TurnMetrics>]) -> Result<(AggregateTable, AggregateTable)> {
        let all: Vec<u32> = (1..=self.config.max_turns).collect();
        Ok((aggregate(series, &all)?, aggregate(series, &self.config.report_turns)?))
    }
}

fn run_label(ranker: &str, mode: SimulatorMode, tolerance: u32) -> String {
    match mode {
        SimulatorMode::Base => format!("{ranker}/base"),
        SimulatorMode::Meta => format!("{ranker}/meta-tol{tolerance}"),
    }
}

/// QPP-stratified sample over every catalog item, scored on the ranking the
/// configured ranker produces after one base-simulator critique.
fn sample_for(config: &ExperimentConfig, catalog: &Arc<Catalog>, spec: &SampleSpec) -> Result<Vec<ItemId>> {
    let ranker = config.ranker.build(catalog.clone(), config.effective_depth().max(spec.k))?;
    let sim = BaseSimulator::new(catalog.clone());
    let rankings: Vec<(ItemId, RankedList)> = catalog
        .items()
        .par_iter()
        .map(|item| {
            let seed = mix_seed(config.seed, stable_hash(item.id.as_str()));
            let (first, state) = ranker.start(seed);
            let shown = first.top().expect("non-empty catalog").clone();
            let critique = sim.critique(1, shown.as_str(), item.id.as_str())?;
            let (ranking, _) = ranker.rank(&state, &critique, 1);
            Ok((item.id.clone(), ranking))
        })
        .collect::<Result<_>>()?;
    sample_targets(catalog, &rankings, spec).map_err(|e| Error::config(format!("target sampling: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSeries {
    pub target: ItemId,
    pub metrics: Vec<TurnMetrics>,
}

/// Base-mode traces evaluated with alternatives counted as relevant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejudged {
    pub per_turn: AggregateTable,
    pub report: AggregateTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchCount {
    pub turn: u32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: String,
    pub ranker: String,
    pub mode: SimulatorMode,
    pub tolerance: Option<u32>,
    pub seed: u64,
    pub max_turns: u32,
    pub cutoffs: Cutoffs,
    pub report_turns: Vec<u32>,
    pub targets: Vec<ItemId>,
    /// Means at every turn `1..=max_turns`.
    pub per_turn: AggregateTable,
    /// Means at the report turns.
    pub report: AggregateTable,
    pub rejudged: Option<Rejudged>,
    pub switch_counts: Vec<SwitchCount>,
    pub series: Vec<TargetSeries>,
    pub traces: Vec<ConversationTrace>,
    pub notices: Vec<String>,
}

/// Runs the configured mode. Paired improvement tables come from
/// [`compare`]; a single run carries a notice instead.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    let setup = Setup::prepare(config)?;
    let mut report = setup.run(&config.ranker, config.simulator, config.tolerance)?;
    report
        .notices
        .push("no paired baseline run: improvement table omitted".to_owned());
    Ok(report)
}

/// Number of targets whose simulator picked something other than the
/// original target, per turn `1..=max_turns`.
pub fn switch_frequency_report(traces: &[ConversationTrace], max_turns: u32) -> Vec<SwitchCount> {
    let mut counts = vec![0usize; max_turns as usize];
    for trace in traces {
        let turns: HashSet<u32> = trace
            .switch_events()
            .filter(|e| e.chosen != trace.target)
            .map(|e| e.turn)
            .collect();
        for turn in turns {
            if (1..=max_turns).contains(&turn) {
                counts[turn as usize - 1] += 1;
            }
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| SwitchCount {
            turn: i as u32 + 1,
            count,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    /// One cell per `(metric, turn)` in [`ComparisonTable::columns`] order.
    pub cells: Vec<Option<f64>>,
}

/// The w/o vs w/ layout: three metric blocks, each spanning the report turns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub system: String,
    pub cutoffs: Cutoffs,
    pub columns: Vec<(Metric, u32)>,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn from_runs(without: &RunReport, with: &RunReport) -> Result<Self> {
        if without.targets != with.targets {
            return Err(Error::param("paired runs evaluated different targets"));
        }
        if without.report_turns != with.report_turns {
            return Err(Error::param("paired runs report different turns"));
        }
        let columns: Vec<(Metric, u32)> = Metric::ALL
            .iter()
            .flat_map(|&m| without.report_turns.iter().map(move |&t| (m, t)))
            .collect();
        let cells = |table: &AggregateTable| -> Vec<Option<f64>> {
            columns.iter().map(|&(m, t)| table.value(t, m)).collect()
        };
        let wo = cells(&without.report);
        let w = cells(&with.report);
        let improv = wo
            .iter()
            .zip(&w)
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => improvement(*b, *a),
                _ => None,
            })
            .collect();
        let mut rows = vec![
            ComparisonRow {
                label: "w/o".to_owned(),
                cells: wo,
            },
            ComparisonRow {
                label: "w/".to_owned(),
                cells: w,
            },
            ComparisonRow {
                label: "% improv.".to_owned(),
                cells: improv,
            },
        ];
        if let Some(rj) = &without.rejudged {
            rows.push(ComparisonRow {
                label: "w/o re-judged".to_owned(),
                cells: cells(&rj.report),
            });
        }
        Ok(ComparisonTable {
            system: without.ranker.clone(),
            cutoffs: without.cutoffs,
            columns,
            rows,
        })
    }

    pub fn row(&self, label: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn cell(&self, label: &str, metric: Metric, turn: u32) -> Option<f64> {
        let col = self.columns.iter().position(|&c| c == (metric, turn))?;
        self.row(label)?.cells[col]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub without: RunReport,
    pub with: RunReport,
    pub table: ComparisonTable,
}

/// Base and meta runs of the configured ranker over identical targets.
pub fn compare(config: &ExperimentConfig) -> Result<Comparison> {
    let setup = Setup::prepare(config)?;
    setup.alternatives_or_err()?;
    let without = setup.run(&config.ranker, SimulatorMode::Base, config.tolerance)?;
    let with = setup.run(&config.ranker, SimulatorMode::Meta, config.tolerance)?;
    let table = ComparisonTable::from_runs(&without, &with)?;
    Ok(Comparison { without, with, table })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSeries {
    pub system: String,
    /// `None` for the no-alternatives baseline.
    pub tolerance: Option<u32>,
    /// Mean nDCG at turns `1..=max_turns`.
    pub ndcg: Vec<f64>,
    /// Baseline only: the same traces with alternatives counted as relevant.
    pub rejudged_ndcg: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub condition: String,
    pub tolerance: Option<u32>,
    /// Systems by descending final-turn nDCG, ties by ascending name.
    pub systems: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchSeries {
    pub system: String,
    pub tolerance: u32,
    pub counts: Vec<SwitchCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub systems: Vec<String>,
    pub tolerances: Vec<u32>,
    pub max_turns: u32,
    pub cutoffs: Cutoffs,
    pub targets: usize,
    pub base_runs: usize,
    pub meta_runs: usize,
    pub series: Vec<SweepSeries>,
    pub ranking: Vec<RankingRow>,
    pub switch_counts: Vec<SwitchSeries>,
}

impl SweepReport {
    pub fn series_for(&self, system: &str, tolerance: Option<u32>) -> Option<&SweepSeries> {
        self.series
            .iter()
            .find(|s| s.system == system && s.tolerance == tolerance)
    }
}

/// Orders `(system, value)` pairs by descending value, ties by name.
pub fn rank_systems(mut systems: Vec<(String, f64)>) -> Vec<(String, f64)> {
    systems.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    systems
}

fn system_names(specs: &[RankerSpec]) -> Vec<String> {
    let mut names = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let base = spec.name().to_owned();
        if specs[..i].iter().any(|s| s.name() == base) || specs[i + 1..].iter().any(|s| s.name() == base) {
            names.push(format!("{base}-{}", i + 1));
        } else {
            names.push(base);
        }
    }
    names
}

/// One base run plus one meta run per tolerance, for every ranker in
/// `config.sweep_rankers` (or the main ranker when that list is empty).
pub fn tolerance_sweep(config: &ExperimentConfig, tolerances: &[u32]) -> Result<SweepReport> {
    if tolerances.is_empty() {
        return Err(Error::param("tolerance list is empty"));
    }
    if config.simulator != SimulatorMode::Meta {
        return Err(Error::config("tolerance sweep requires meta simulator mode"));
    }
    let setup = Setup::prepare(config)?;
    let rankers = if config.sweep_rankers.is_empty() {
        vec![config.ranker.clone()]
    } else {
        config.sweep_rankers.clone()
    };
    let names = system_names(&rankers);
    let final_turn = config.max_turns;

    let mut series = Vec::new();
    let mut switch_counts = Vec::new();
    let mut base_runs = 0;
    let mut meta_runs = 0;
    for (spec, name) in rankers.iter().zip(&names) {
        let base = setup.run(spec, SimulatorMode::Base, 0)?;
        base_runs += 1;
        series.push(SweepSeries {
            system: name.clone(),
            tolerance: None,
            ndcg: base.per_turn.rows.iter().map(|r| r.ndcg_at_10).collect(),
            rejudged_ndcg: base
                .rejudged
                .as_ref()
                .map(|rj| rj.per_turn.rows.iter().map(|r| r.ndcg_at_10).collect()),
        });
        for &tol in tolerances {
            let run = setup.run(spec, SimulatorMode::Meta, tol)?;
            meta_runs += 1;
            series.push(SweepSeries {
                system: name.clone(),
                tolerance: Some(tol),
                ndcg: run.per_turn.rows.iter().map(|r| r.ndcg_at_10).collect(),
                rejudged_ndcg: None,
            });
            switch_counts.push(SwitchSeries {
                system: name.clone(),
                tolerance: tol,
                counts: run.switch_counts,
            });
        }
    }

    let conditions = std::iter::once(None).chain(tolerances.iter().copied().map(Some));
    let ranking = conditions
        .map(|tol| RankingRow {
            condition: tol.map_or_else(|| "no alternatives".to_owned(), |t| format!("tolerance {t}")),
            tolerance: tol,
            systems: rank_systems(
                series
                    .iter()
                    .filter(|s| s.tolerance == tol)
                    .map(|s| (s.system.clone(), s.ndcg[final_turn as usize - 1]))
                    .collect(),
            ),
        })
        .collect();

    Ok(SweepReport {
        systems: names,
        tolerances: tolerances.to_vec(),
        max_turns: config.max_turns,
        cutoffs: config.cutoffs,
        targets: setup.targets.len(),
        base_runs,
        meta_runs,
        series,
        ranking,
        switch_counts,
    })
}

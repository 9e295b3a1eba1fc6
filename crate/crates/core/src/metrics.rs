//! Ranking metrics at a cutoff, post-success saturation, aggregation across
//! targets and inter-assessor agreement.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::ItemId;
use crate::error::{Error, Result};
use crate::ranker::RankedList;

/// Items that count as a hit: the target alone, or the target together with
/// its judged alternatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceSet(BTreeSet<ItemId>);

impl RelevanceSet {
    pub fn new(ids: impl IntoIterator<Item = ItemId>) -> Result<Self> {
        let set: BTreeSet<ItemId> = ids.into_iter().collect();
        if set.is_empty() {
            return Err(Error::param("relevance set must not be empty"));
        }
        Ok(RelevanceSet(set))
    }

    pub fn single(target: ItemId) -> Self {
        RelevanceSet(BTreeSet::from([target]))
    }

    pub fn with_alternatives<'a>(target: &ItemId, alternatives: impl IntoIterator<Item = &'a ItemId>) -> Self {
        let mut set: BTreeSet<ItemId> = alternatives.into_iter().cloned().collect();
        set.insert(target.clone());
        RelevanceSet(set)
    }

    pub fn contains(&self, id: &ItemId) -> bool {
        self.0.contains(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ItemId> + '_ {
        self.0.iter()
    }

    pub fn is_subset(&self, other: &RelevanceSet) -> bool {
        self.0.is_subset(&other.0)
    }
}

/// 1 when the rank-1 item is relevant, else 0.
pub fn success_at_1(ranking: &RankedList, rel: &RelevanceSet) -> f64 {
    match ranking.top() {
        Some(id) if rel.contains(id) => 1.0,
        _ => 0.0,
    }
}

/// Binary-gain nDCG. The ideal DCG places `min(k, |rel|)` relevant items at
/// the top.
pub fn ndcg_at_k(ranking: &RankedList, rel: &RelevanceSet, k: usize) -> f64 {
    let dcg: f64 = ranking
        .ids()
        .take(k)
        .enumerate()
        .filter(|(_, id)| rel.contains(id))
        .map(|(i, _)| discount(i + 1))
        .sum();
    let idcg: f64 = (1..=k.min(rel.len())).map(discount).sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Reciprocal rank of the first relevant item within the top `k`, else 0.
pub fn mrr_at_k(ranking: &RankedList, rel: &RelevanceSet, k: usize) -> f64 {
    ranking
        .ids()
        .take(k)
        .position(|id| rel.contains(id))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Cutoffs at which per-turn metrics are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cutoffs {
    pub ndcg: usize,
    pub mrr: usize,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Cutoffs { ndcg: 10, mrr: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnMetrics {
    pub turn: u32,
    pub sr_at_1: f64,
    pub ndcg_at_10: f64,
    pub mrr_at_10: f64,
    pub saturated: bool,
}

impl TurnMetrics {
    pub fn compute(turn: u32, ranking: &RankedList, rel: &RelevanceSet, cutoffs: Cutoffs) -> Self {
        TurnMetrics {
            turn,
            sr_at_1: success_at_1(ranking, rel),
            ndcg_at_10: ndcg_at_k(ranking, rel, cutoffs.ndcg),
            mrr_at_10: mrr_at_k(ranking, rel, cutoffs.mrr),
            saturated: false,
        }
    }

    pub fn saturated(turn: u32) -> Self {
        TurnMetrics {
            turn,
            sr_at_1: 1.0,
            ndcg_at_10: 1.0,
            mrr_at_10: 1.0,
            saturated: true,
        }
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Ndcg => self.ndcg_at_10,
            Metric::Mrr => self.mrr_at_10,
            Metric::Sr => self.sr_at_1,
        }
    }
}

/// Once the conversation succeeds at `success_turn`, every later turn
/// reports 1 on every metric.
pub fn saturate(series: &[TurnMetrics], success_turn: Option<u32>) -> Result<Vec<TurnMetrics>> {
    let Some(success) = success_turn else {
        return Ok(series.to_vec());
    };
    let in_range = match (series.first(), series.last()) {
        (Some(first), Some(last)) => (first.turn..=last.turn).contains(&success),
        _ => false,
    };
    if !in_range {
        return Err(Error::param(format!(
            "success turn {success} is outside the series"
        )));
    }
    Ok(series
        .iter()
        .map(|m| if m.turn >= success { TurnMetrics::saturated(m.turn) } else { *m })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ndcg,
    Mrr,
    Sr,
}

impl Metric {
    /// Column order of the w/o vs w/ tables.
    pub const ALL: [Metric; 3] = [Metric::Ndcg, Metric::Mrr, Metric::Sr];

    pub fn label(self, cutoffs: Cutoffs) -> String {
        match self {
            Metric::Ndcg => format!("nDCG@{}", cutoffs.ndcg),
            Metric::Mrr => format!("MRR@{}", cutoffs.mrr),
            Metric::Sr => "SR@1".to_owned(),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Ndcg => "ndcg",
            Metric::Mrr => "mrr",
            Metric::Sr => "sr",
        })
    }
}

/// Mean metric values per turn across targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub turns: Vec<u32>,
    pub rows: Vec<TurnMean>,
    pub targets: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnMean {
    pub turn: u32,
    pub sr_at_1: f64,
    pub ndcg_at_10: f64,
    pub mrr_at_10: f64,
}

impl TurnMean {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Ndcg => self.ndcg_at_10,
            Metric::Mrr => self.mrr_at_10,
            Metric::Sr => self.sr_at_1,
        }
    }
}

impl AggregateTable {
    pub fn row(&self, turn: u32) -> Option<&TurnMean> {
        self.rows.iter().find(|r| r.turn == turn)
    }

    pub fn value(&self, turn: u32, metric: Metric) -> Option<f64> {
        self.row(turn).map(|r| r.get(metric))
    }
}

/// Arithmetic mean of each metric at each requested turn.
pub fn aggregate(per_target_series: &[Vec<TurnMetrics>], turns_of_interest: &[u32]) -> Result<AggregateTable> {
    if per_target_series.is_empty() {
        return Err(Error::param("nothing to aggregate"));
    }
    let n = per_target_series.len() as f64;
    let mut rows = Vec::with_capacity(turns_of_interest.len());
    for &turn in turns_of_interest {
        let (mut sr, mut ndcg, mut mrr) = (0.0, 0.0, 0.0);
        for (i, series) in per_target_series.iter().enumerate() {
            let m = series.iter().find(|m| m.turn == turn).ok_or_else(|| {
                Error::param(format!("series {i} does not cover turn {turn}"))
            })?;
            sr += m.sr_at_1;
            ndcg += m.ndcg_at_10;
            mrr += m.mrr_at_10;
        }
        rows.push(TurnMean {
            turn,
            sr_at_1: sr / n,
            ndcg_at_10: ndcg / n,
            mrr_at_10: mrr / n,
        });
    }
    Ok(AggregateTable {
        turns: turns_of_interest.to_vec(),
        rows,
        targets: per_target_series.len(),
    })
}

/// `100 × (with − without) / without`; `None` when the baseline is 0.
pub fn improvement(with: f64, without: f64) -> Option<f64> {
    (without != 0.0).then(|| 100.0 * (with - without) / without)
}

/// Marker written for an improvement cell with a zero baseline.
pub const UNDEFINED_MARKER: &str = "—";

pub fn format_improvement(value: Option<f64>) -> String {
    value.map_or_else(|| UNDEFINED_MARKER.to_owned(), |v| format!("{v:.2}"))
}

/// Binary relevance labels keyed by `(target, candidate)`.
pub type Judgments = BTreeMap<(ItemId, ItemId), bool>;

/// Cohen's kappa between two assessors who labelled the same pairs.
pub fn cohens_kappa(a: &Judgments, b: &Judgments) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::param("judgment sets are empty"));
    }
    if a.len() != b.len() || a.keys().ne(b.keys()) {
        return Err(Error::param("judgment sets cover different (target, candidate) pairs"));
    }
    let n = a.len() as f64;
    let agree = a.values().zip(b.values()).filter(|(x, y)| x == y).count() as f64;
    let pos_a = a.values().filter(|v| **v).count() as f64 / n;
    let pos_b = b.values().filter(|v| **v).count() as f64 / n;
    let p_o = agree / n;
    let p_e = pos_a * pos_b + (1.0 - pos_a) * (1.0 - pos_b);
    if p_e == 1.0 {
        // both assessors used a single label; agreement is total iff p_o is 1
        return Ok(if p_o == 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Reads `target<TAB>candidate<TAB>label` lines, label being `0` or `1`.
pub fn load_judgments(path: impl AsRef<Path>) -> Result<Judgments> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Judgments::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        let [target, candidate, label] = fields.as_slice() else {
            return Err(Error::parse(path, i + 1, "expected `target<TAB>candidate<TAB>label`"));
        };
        let label = match *label {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::parse(path, i + 1, format!("label must be 0 or 1, got `{other}`")))
            }
        };
        if out
            .insert((ItemId::from(*target), ItemId::from(*candidate)), label)
            .is_some()
        {
            return Err(Error::parse(
                path,
                i + 1,
                format!("duplicate judgment for ({target}, {candidate})"),
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranking(ids: &[&str]) -> RankedList {
        let n = ids.len() as f64;
        RankedList::new(
            ids.iter()
                .enumerate()
                .map(|(i, id)| (ItemId::from(*id), n - i as f64))
                .collect(),
            1,
        )
        .unwrap()
    }

    fn rel(ids: &[&str]) -> RelevanceSet {
        RelevanceSet::new(ids.iter().map(|s| ItemId::from(*s))).unwrap()
    }

    const TEN: [&str; 10] = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];

    #[test]
    fn success_values() {
        let r = ranking(&TEN);
        assert_eq!(success_at_1(&r, &rel(&["a"])), 1.0);
        assert_eq!(success_at_1(&r, &rel(&["b"])), 0.0);
        assert_eq!(success_at_1(&r, &rel(&["b", "a"])), 1.0);
    }

    #[test]
    fn ndcg_values() {
        let r = ranking(&TEN);
        assert_eq!(ndcg_at_k(&r, &rel(&["a"]), 10), 1.0);
        assert!((ndcg_at_k(&r, &rel(&["c"]), 10) - 0.5).abs() < 1e-9);
        assert_eq!(ndcg_at_k(&r, &rel(&["a", "b"]), 10), 1.0);
        assert_eq!(ndcg_at_k(&r, &rel(&["z"]), 10), 0.0);
        assert_eq!(ndcg_at_k(&r, &rel(&["c"]), 2), 0.0);
    }

    #[test]
    fn mrr_values() {
        let r = ranking(&TEN);
        assert_eq!(mrr_at_k(&r, &rel(&["a"]), 10), 1.0);
        assert_eq!(mrr_at_k(&r, &rel(&["d", "h"]), 10), 0.25);
        assert_eq!(mrr_at_k(&r, &rel(&["z"]), 10), 0.0);
        assert_eq!(mrr_at_k(&r, &rel(&["d"]), 3), 0.0);
    }

    fn series(values: &[f64]) -> Vec<TurnMetrics> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| TurnMetrics {
                turn: i as u32 + 1,
                sr_at_1: v,
                ndcg_at_10: v / 2.0,
                mrr_at_10: v / 3.0,
                saturated: false,
            })
            .collect()
    }

    #[test]
    fn saturation() {
        let s = series(&[0.0; 10]);
        let sat = saturate(&s, Some(3)).unwrap();
        assert_eq!(&sat[..2], &s[..2]);
        for m in &sat[2..] {
            assert!(m.saturated);
            assert_eq!((m.sr_at_1, m.ndcg_at_10, m.mrr_at_10), (1.0, 1.0, 1.0));
        }
        assert_eq!(saturate(&s, None).unwrap(), s);
        assert!(saturate(&s, Some(1)).unwrap().iter().all(|m| m.saturated));
        assert!(saturate(&s, Some(11)).is_err());
        assert!(saturate(&s, Some(0)).is_err());
        assert_eq!(saturate(&sat, Some(3)).unwrap(), sat);
    }

    #[test]
    fn aggregate_means() {
        let table = aggregate(&[series(&[1.0, 1.0, 1.0]), series(&[0.0, 0.0, 1.0])], &[1, 2, 3]).unwrap();
        let sr: Vec<f64> = table.rows.iter().map(|r| r.sr_at_1).collect();
        assert_eq!(sr, [0.5, 0.5, 1.0]);
        assert!(aggregate(&[series(&[1.0])], &[2]).is_err());
    }

    #[test]
    fn improvement_cells() {
        let v = improvement(0.346, 0.161).unwrap();
        assert!((v - 114.906_832).abs() < 1e-3, "{v}");
        assert_eq!(improvement(0.3, 0.3), Some(0.0));
        assert_eq!(improvement(0.3, 0.0), None);
        assert_eq!(format_improvement(None), "—");
        assert_eq!(format_improvement(Some(12.345)), "12.35");
    }

    fn judgments(labels: &[bool]) -> Judgments {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| ((ItemId::from("t"), ItemId::new(format!("c{i}"))), l))
            .collect()
    }

    #[test]
    fn kappa_values() {
        let a = judgments(&[true, true, false, false]);
        let b = judgments(&[true, false, true, false]);
        assert!(cohens_kappa(&a, &b).unwrap().abs() < 1e-9);
        assert_eq!(cohens_kappa(&a, &a).unwrap(), 1.0);
        let all = judgments(&[true; 4]);
        assert_eq!(cohens_kappa(&all, &all).unwrap(), 1.0);
        assert!(cohens_kappa(&a, &judgments(&[true; 3])).is_err());
        assert!(cohens_kappa(&Judgments::new(), &Judgments::new()).is_err());
        // 8 pairs, p_o = 6/8, both assessors 50% positive: kappa = (0.75-0.5)/0.5
        let a = judgments(&[true, true, true, true, false, false, false, false]);
        let b = judgments(&[true, true, true, false, true, false, false, false]);
        assert!((cohens_kappa(&a, &b).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn judgment_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.tsv");
        std::fs::write(&p, "t1\tc1\t1\nt1\tc2\t0\n").unwrap();
        assert_eq!(load_judgments(&p).unwrap().len(), 2);
        std::fs::write(&p, "t1\tc1\tyes\n").unwrap();
        assert!(matches!(load_judgments(&p), Err(Error::Parse { line: 1, .. })));
    }
}

//! Deviation analyses against the consensus: prefix-overlap curves,
//! per-keyword relative scores and the keywords where each engine agrees
//! most and least with the consensus.

use std::collections::HashSet;

use serde::Serialize;

use crate::model::{Corpus, EngineId, Keyword, PageId};
use crate::scoring::ScoreTable;

/// For each prefix length x in `1..=a`, mean over keywords of the percentage
/// of an engine's top-x that is also in the consensus top-x.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapCurve {
    pub engine: String,
    pub points: Vec<f64>,
}

/// Percentage of `list[..x]` found in `consensus[..x]`. The denominator is x,
/// capped at the consensus length so that a short consensus still matches
/// itself fully. `None` when the consensus is empty.
pub fn prefix_overlap(list: &[PageId], consensus: &[PageId], x: usize) -> Option<f64> {
    let denom = x.min(consensus.len());
    if denom == 0 {
        return None;
    }
    let top: HashSet<&PageId> = consensus.iter().take(x).collect();
    let common = list.iter().take(x).filter(|p| top.contains(p)).count();
    Some(100.0 * common as f64 / denom as f64)
}

fn curve<'a>(
    label: String,
    pairs: impl Iterator<Item = (&'a [PageId], &'a [PageId])> + Clone,
    display_len: usize,
) -> OverlapCurve {
    let points = (1..=display_len)
        .map(|x| {
            let values: Vec<f64> = pairs
                .clone()
                .filter_map(|(list, consensus)| prefix_overlap(list, consensus, x))
                .collect();
            if values.is_empty() {
                0.0
            } else {
                values.iter().sum::<f64>() / values.len() as f64
            }
        })
        .collect();
    OverlapCurve { engine: label, points }
}

/// Overlap curve of `engine` against the consensus in `table`. Keywords with
/// an empty consensus are skipped.
pub fn overlap_curve(corpus: &Corpus, table: &ScoreTable, engine: &EngineId) -> OverlapCurve {
    let empty: &[PageId] = &[];
    let pairs = table.keywords.iter().map(move |ks| {
        let list = corpus
            .snapshot(engine, &ks.keyword)
            .map(|s| s.results.as_slice())
            .unwrap_or(empty);
        (list, ks.consensus.as_slice())
    });
    curve(engine.to_string(), pairs, corpus.ctr().len())
}

/// The consensus compared with itself: 100 at every defined point.
pub fn consensus_overlap_curve(table: &ScoreTable, display_len: usize) -> OverlapCurve {
    let pairs = table
        .keywords
        .iter()
        .map(|ks| (ks.consensus.as_slice(), ks.consensus.as_slice()));
    curve(CONSENSUS_LABEL.to_string(), pairs, display_len)
}

/// Name of the consensus pseudo-engine in reports.
pub const CONSENSUS_LABEL: &str = "consensus";

/// `S(j,k) / C(k)` for one engine, keyword-labelled.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeScoreDistribution {
    pub engine: String,
    /// In corpus keyword order.
    pub by_keyword: Vec<(Keyword, f64)>,
}

impl RelativeScoreDistribution {
    /// Values sorted from largest to smallest; ties keep keyword order.
    pub fn sorted_desc(&self) -> Vec<(Keyword, f64)> {
        let mut out = self.by_keyword.clone();
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeScores {
    pub distributions: Vec<RelativeScoreDistribution>,
    /// Keywords left out because their consensus score is zero.
    pub zero_consensus: Vec<Keyword>,
}

/// Relative scores for every engine of `table`.
pub fn relative_scores(table: &ScoreTable) -> RelativeScores {
    let zero_consensus: Vec<Keyword> = table
        .keywords
        .iter()
        .filter(|ks| ks.consensus_score <= 0.0)
        .map(|ks| ks.keyword.clone())
        .collect();
    for k in &zero_consensus {
        log::warn!("keyword {k:?} has zero consensus score, excluded from relative scores");
    }
    let distributions = table
        .engines
        .iter()
        .enumerate()
        .map(|(j, engine)| RelativeScoreDistribution {
            engine: engine.to_string(),
            by_keyword: table
                .keywords
                .iter()
                .filter(|ks| ks.consensus_score > 0.0)
                .map(|ks| (ks.keyword.clone(), ks.engines[j] / ks.consensus_score))
                .collect(),
        })
        .collect();
    RelativeScores {
        distributions,
        zero_consensus,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Highest,
    Lowest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeQueryReport {
    pub engine: String,
    pub direction: Direction,
    pub entries: Vec<(Keyword, f64)>,
}

/// The `n` keywords with the highest (descending) or lowest (ascending)
/// relative score. Returns every keyword when `n` exceeds their count.
pub fn extreme_queries(dist: &RelativeScoreDistribution, n: usize, direction: Direction) -> ExtremeQueryReport {
    let mut entries = dist.by_keyword.clone();
    match direction {
        Direction::Highest => entries.sort_by(|a, b| b.1.total_cmp(&a.1)),
        Direction::Lowest => entries.sort_by(|a, b| a.1.total_cmp(&b.1)),
    }
    entries.truncate(n);
    ExtremeQueryReport {
        engine: dist.engine.clone(),
        direction,
        entries,
    }
}

//! Visibility-based scores.
//!
//! For keyword `k`, the score of page `i` is the CTR weight it receives on each
//! engine, averaged over all `n` engines in the corpus:
//!
//! ```text
//! R(i,k) = (1/n) * Σ_j q[pos_j(i,k)]        (q = 0 when not displayed)
//! ```
//!
//! An engine's score for `k` is the CTR-weighted sum of the page scores it
//! displays, `S(j,k) = Σ_p q[p] * R(page_j(p), k)`, and its overall score is the
//! mean over keywords. The consensus ranking orders pages by descending `R`,
//! which maximizes that sum for non-increasing weights.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{Corpus, CtrProfile, EngineId, Keyword, PageId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoringError {
    #[error("unknown engine {0}")]
    UnknownEngine(EngineId),
    #[error("unknown keyword {0:?}")]
    UnknownKeyword(Keyword),
    #[error("cannot average over an empty keyword set")]
    EmptyKeywordSet,
}

/// Page scores for one keyword, ordered by canonical URL.
pub type PageScores = BTreeMap<PageId, f64>;

/// Page scores `R(i,k)` for every page displayed (or listed) by at least one
/// engine for `keyword`. `n` is the corpus-wide engine count.
pub fn page_scores(corpus: &Corpus, keyword: &Keyword) -> Result<PageScores, ScoringError> {
    if !corpus.has_keyword(keyword) {
        return Err(ScoringError::UnknownKeyword(keyword.clone()));
    }
    let ctr = corpus.ctr();
    // Count placements per position first so the float sum does not depend
    // on engine order.
    let mut counts: BTreeMap<PageId, Vec<u32>> = BTreeMap::new();
    for engine in corpus.engines() {
        let Some(snap) = corpus.snapshot(engine, keyword) else {
            continue;
        };
        for (idx, page) in snap.results.iter().enumerate() {
            let slots = counts.entry(page.clone()).or_default();
            if slots.len() <= idx {
                slots.resize(idx + 1, 0);
            }
            slots[idx] += 1;
        }
    }
    let n = corpus.engines().len() as f64;
    Ok(counts
        .into_iter()
        .map(|(page, slots)| {
            let total: f64 = slots
                .iter()
                .enumerate()
                .map(|(idx, &c)| f64::from(c) * ctr.weight(idx + 1))
                .sum();
            (page, total / n)
        })
        .collect())
}

fn checked_results<'a>(
    corpus: &'a Corpus,
    engine: &EngineId,
    keyword: &Keyword,
) -> Result<&'a [PageId], ScoringError> {
    if !corpus.has_engine(engine) {
        return Err(ScoringError::UnknownEngine(engine.clone()));
    }
    if !corpus.has_keyword(keyword) {
        return Err(ScoringError::UnknownKeyword(keyword.clone()));
    }
    Ok(corpus
        .snapshot(engine, keyword)
        .map(|s| s.results.as_slice())
        .unwrap_or(&[]))
}

/// `Σ_p q[p] * R(page at p)` over a ranked list.
pub fn list_score(list: &[PageId], scores: &PageScores, ctr: &CtrProfile) -> f64 {
    list.iter()
        .enumerate()
        .map(|(idx, page)| ctr.weight(idx + 1) * scores.get(page).copied().unwrap_or(0.0))
        .sum()
}

/// Engine score `S(j,k)`, summed over the engine's displayed positions.
pub fn engine_score(
    corpus: &Corpus,
    engine: &EngineId,
    keyword: &Keyword,
    scores: &PageScores,
) -> Result<f64, ScoringError> {
    let results = checked_results(corpus, engine, keyword)?;
    Ok(list_score(results, scores, corpus.ctr()))
}

/// Engine score `S(j,k)` summed over every scored page, each weighted by the
/// CTR of the position this engine gives it (zero when not shown). Equal to
/// [`engine_score`]; kept as an independent route for cross-checking.
pub fn engine_score_all_pages(
    corpus: &Corpus,
    engine: &EngineId,
    keyword: &Keyword,
    scores: &PageScores,
) -> Result<f64, ScoringError> {
    let results = checked_results(corpus, engine, keyword)?;
    let position: HashMap<&PageId, usize> =
        results.iter().enumerate().map(|(i, p)| (p, i + 1)).collect();
    let ctr = corpus.ctr();
    Ok(scores
        .iter()
        .map(|(page, r)| {
            let q = position.get(page).map_or(0.0, |&p| ctr.weight(p));
            q * r
        })
        .sum())
}

/// Arithmetic mean of per-keyword scores.
pub fn engine_mean_score(per_keyword: &[f64]) -> Result<f64, ScoringError> {
    if per_keyword.is_empty() {
        return Err(ScoringError::EmptyKeywordSet);
    }
    // Running mean: exact for constant series.
    let mut mean = 0.0;
    for (i, x) in per_keyword.iter().enumerate() {
        mean += (x - mean) / (i + 1) as f64;
    }
    Ok(mean)
}

/// Ties broken by ascending canonical URL.
pub fn lexicographic_tie_break(a: &PageId, b: &PageId) -> Ordering {
    a.cmp(b)
}

/// Consensus ranking with the default (lexicographic) tie-break.
pub fn consensus_ranking(scores: &PageScores, ctr: &CtrProfile) -> Vec<PageId> {
    consensus_ranking_by(scores, ctr, lexicographic_tie_break)
}

/// Pages sorted by descending score, truncated to the display length. Pages
/// with zero score are left out.
pub fn consensus_ranking_by<F>(scores: &PageScores, ctr: &CtrProfile, tie_break: F) -> Vec<PageId>
where
    F: Fn(&PageId, &PageId) -> Ordering,
{
    let mut ranked: Vec<(&PageId, f64)> = scores
        .iter()
        .filter(|(_, &r)| r > 0.0)
        .map(|(p, &r)| (p, r))
        .collect();
    ranked.sort_by(|(pa, ra), (pb, rb)| rb.total_cmp(ra).then_with(|| tie_break(pa, pb)));
    ranked.truncate(ctr.len());
    ranked.into_iter().map(|(p, _)| p.clone()).collect()
}

/// Consensus score `C(k)`.
pub fn consensus_score(consensus: &[PageId], scores: &PageScores, ctr: &CtrProfile) -> f64 {
    list_score(consensus, scores, ctr)
}

/// Scores of one keyword: page scores, per-engine scores (corpus engine
/// order) and the consensus.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordScores {
    pub keyword: Keyword,
    pub pages: PageScores,
    pub engines: Vec<f64>,
    pub consensus: Vec<PageId>,
    pub consensus_score: f64,
}

/// Every score for a corpus, keywords in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub engines: Vec<EngineId>,
    pub keywords: Vec<KeywordScores>,
}

impl ScoreTable {
    /// Scores every keyword. Keywords are processed in parallel; the result
    /// is identical to sequential evaluation.
    pub fn compute(corpus: &Corpus) -> Result<Self, ScoringError> {
        let keywords = corpus
            .keywords()
            .par_iter()
            .map(|k| score_keyword(corpus, k))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            engines: corpus.engines().to_vec(),
            keywords,
        })
    }

    /// `S(j,k)` over keywords for the engine at `engine_idx`.
    pub fn engine_series(&self, engine_idx: usize) -> Vec<f64> {
        self.keywords.iter().map(|k| k.engines[engine_idx]).collect()
    }

    pub fn consensus_series(&self) -> Vec<f64> {
        self.keywords.iter().map(|k| k.consensus_score).collect()
    }

    pub fn engine_mean(&self, engine_idx: usize) -> Result<f64, ScoringError> {
        engine_mean_score(&self.engine_series(engine_idx))
    }

    pub fn consensus_mean(&self) -> Result<f64, ScoringError> {
        engine_mean_score(&self.consensus_series())
    }

    pub fn engine_index(&self, engine: &EngineId) -> Option<usize> {
        self.engines.iter().position(|e| e == engine)
    }
}

fn score_keyword(corpus: &Corpus, keyword: &Keyword) -> Result<KeywordScores, ScoringError> {
    let pages = page_scores(corpus, keyword)?;
    let engines = corpus
        .engines()
        .iter()
        .map(|e| engine_score(corpus, e, keyword, &pages))
        .collect::<Result<Vec<_>, _>>()?;
    let consensus = consensus_ranking(&pages, corpus.ctr());
    let consensus_score = consensus_score(&consensus, &pages, corpus.ctr());
    Ok(KeywordScores {
        keyword: keyword.clone(),
        pages,
        engines,
        consensus,
        consensus_score,
    })
}

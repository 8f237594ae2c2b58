//! Domain types shared by every stage: engines, keywords, pages, CTR weights,
//! ranking snapshots and the corpus that ties them together.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Click-through rates by position from the reference measurement, q_1..q_10.
pub const DEFAULT_CTR_WEIGHTS: [f64; 10] = [
    0.364, 0.125, 0.095, 0.079, 0.061, 0.041, 0.038, 0.035, 0.03, 0.022,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("engine identifier must not be empty")]
    EmptyEngine,
    #[error("keyword must not be empty")]
    EmptyKeyword,
    #[error("CTR profile must have at least one position")]
    EmptyCtrProfile,
    #[error("CTR weight at position {position} is {weight}, expected a finite non-negative value")]
    InvalidCtrWeight { position: usize, weight: f64 },
}

/// A search engine, identified by its lower-cased name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EngineId(String);

impl EngineId {
    pub fn new(name: &str) -> Result<Self, ModelError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(ModelError::EmptyEngine);
        }
        Ok(Self(name.to_lowercase()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for EngineId {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(&value)
    }
}

impl From<EngineId> for String {
    fn from(value: EngineId) -> Self {
        value.0
    }
}

impl fmt::Display for EngineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A search query.
///
/// The original (trimmed) spelling is kept for display; identity, hashing and
/// ordering use the lower-cased form, so `"Weather"` and `" weather "` are the
/// same keyword.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Keyword {
    text: String,
    folded: String,
}

impl Keyword {
    pub fn new(text: &str) -> Result<Self, ModelError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(ModelError::EmptyKeyword);
        }
        Ok(Self {
            text: text.to_string(),
            folded: text.to_lowercase(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// Lower-cased form used for identity.
    pub fn folded(&self) -> &str {
        &self.folded
    }
}

impl PartialEq for Keyword {
    fn eq(&self, other: &Self) -> bool {
        self.folded == other.folded
    }
}

impl Eq for Keyword {}

impl Hash for Keyword {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.folded.hash(state);
    }
}

impl PartialOrd for Keyword {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Keyword {
    fn cmp(&self, other: &Self) -> Ordering {
        self.folded.cmp(&other.folded)
    }
}

impl TryFrom<String> for Keyword {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(&value)
    }
}

impl From<Keyword> for String {
    fn from(value: Keyword) -> Self {
        value.text
    }
}

impl fmt::Display for Keyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Identity of a web page: its canonical URL. Two pages are the same page iff
/// their canonical strings are equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PageId(String);

impl PageId {
    /// Wraps a string that is already in canonical form. Use
    /// [`crate::canonicalize::canonical_url`] for raw URLs.
    pub fn from_canonical(canonical_url: impl Into<String>) -> Self {
        Self(canonical_url.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Position-dependent click-through rates q_1..q_a. Any position beyond `a`
/// has weight exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CtrProfile {
    weights: Vec<f64>,
}

impl CtrProfile {
    pub fn new(weights: Vec<f64>) -> Result<Self, ModelError> {
        if weights.is_empty() {
            return Err(ModelError::EmptyCtrProfile);
        }
        if let Some((idx, &w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(ModelError::InvalidCtrWeight {
                position: idx + 1,
                weight: w,
            });
        }
        Ok(Self { weights })
    }

    /// Display-list length `a`.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight of the 1-based `position`; zero outside `1..=a`.
    pub fn weight(&self, position: usize) -> f64 {
        if position == 0 {
            return 0.0;
        }
        self.weights.get(position - 1).copied().unwrap_or(0.0)
    }

    /// Same profile with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, ModelError> {
        Self::new(self.weights.iter().map(|w| w * factor).collect())
    }

    /// Positions `p` where q_p < q_{p+1}. The model expects weights to be
    /// non-increasing but does not require it.
    pub fn monotonicity_warnings(&self) -> Vec<String> {
        self.weights
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[1] > w[0])
            .map(|(i, w)| {
                format!(
                    "CTR weight increases from position {} ({}) to {} ({})",
                    i + 1,
                    w[0],
                    i + 2,
                    w[1]
                )
            })
            .collect()
    }
}

impl Default for CtrProfile {
    fn default() -> Self {
        Self {
            weights: DEFAULT_CTR_WEIGHTS.to_vec(),
        }
    }
}

impl TryFrom<Vec<f64>> for CtrProfile {
    type Error = ModelError;

    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<CtrProfile> for Vec<f64> {
    fn from(value: CtrProfile) -> Self {
        value.weights
    }
}

/// One engine's ordered result list for one keyword.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingSnapshot {
    pub engine: EngineId,
    pub keyword: Keyword,
    pub results: Vec<PageId>,
    pub captured_at: Option<String>,
}

impl RankingSnapshot {
    pub fn new(engine: EngineId, keyword: Keyword, results: Vec<PageId>) -> Self {
        Self {
            engine,
            keyword,
            results,
            captured_at: None,
        }
    }

    /// 1-based position of `page`, if displayed.
    pub fn position_of(&self, page: &PageId) -> Option<usize> {
        self.results.iter().position(|p| p == page).map(|i| i + 1)
    }
}

/// The full dataset: engines × keywords → snapshots, plus the CTR profile.
///
/// A `Corpus` can be assembled from arbitrary parts so that malformed data can
/// be inspected with [`validate_corpus`]; everything produced by the ingest
/// module is valid.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    engines: Vec<EngineId>,
    keywords: Vec<Keyword>,
    snapshots: HashMap<(EngineId, Keyword), RankingSnapshot>,
    ctr: CtrProfile,
}

impl Corpus {
    pub fn from_parts(
        engines: Vec<EngineId>,
        keywords: Vec<Keyword>,
        snapshots: impl IntoIterator<Item = RankingSnapshot>,
        ctr: CtrProfile,
    ) -> Self {
        let snapshots = snapshots
            .into_iter()
            .map(|s| ((s.engine.clone(), s.keyword.clone()), s))
            .collect();
        Self {
            engines,
            keywords,
            snapshots,
            ctr,
        }
    }

    pub fn engines(&self) -> &[EngineId] {
        &self.engines
    }

    pub fn keywords(&self) -> &[Keyword] {
        &self.keywords
    }

    pub fn ctr(&self) -> &CtrProfile {
        &self.ctr
    }

    pub fn snapshot(&self, engine: &EngineId, keyword: &Keyword) -> Option<&RankingSnapshot> {
        self.snapshots.get(&(engine.clone(), keyword.clone()))
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &RankingSnapshot> {
        self.snapshots.values()
    }

    pub fn has_engine(&self, engine: &EngineId) -> bool {
        self.engines.contains(engine)
    }

    pub fn has_keyword(&self, keyword: &Keyword) -> bool {
        self.keywords.contains(keyword)
    }

    /// Same corpus scored under a different CTR profile.
    pub fn with_ctr(&self, ctr: CtrProfile) -> Self {
        Self {
            ctr,
            ..self.clone()
        }
    }
}

/// A broken corpus invariant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    NoEngines,
    NoKeywords,
    DuplicateEngine(EngineId),
    DuplicateKeyword(Keyword),
    MissingSnapshot {
        engine: EngineId,
        keyword: Keyword,
    },
    /// Snapshot keyed by an engine or keyword the corpus does not list.
    StraySnapshot {
        engine: EngineId,
        keyword: Keyword,
    },
    DuplicatePage {
        engine: EngineId,
        keyword: Keyword,
        page: PageId,
        positions: Vec<usize>,
    },
    TooManyResults {
        engine: EngineId,
        keyword: Keyword,
        len: usize,
        display_len: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoEngines => write!(f, "corpus has no engines"),
            Violation::NoKeywords => write!(f, "corpus has no keywords"),
            Violation::DuplicateEngine(e) => write!(f, "engine {e} listed more than once"),
            Violation::DuplicateKeyword(k) => write!(f, "keyword {k:?} listed more than once"),
            Violation::MissingSnapshot { engine, keyword } => {
                write!(f, "missing snapshot ({engine}, {keyword:?})")
            }
            Violation::StraySnapshot { engine, keyword } => {
                write!(f, "snapshot ({engine}, {keyword:?}) is outside the corpus")
            }
            Violation::DuplicatePage {
                engine,
                keyword,
                page,
                positions,
            } => write!(
                f,
                "({engine}, {keyword:?}) lists {page} at positions {positions:?}"
            ),
            Violation::TooManyResults {
                engine,
                keyword,
                len,
                display_len,
            } => write!(
                f,
                "({engine}, {keyword:?}) has {len} results, display length is {display_len}"
            ),
        }
    }
}

/// Checks every corpus invariant. Returns an empty list iff the corpus is
/// well formed; the list is sorted so equal corpora give equal output.
pub fn validate_corpus(corpus: &Corpus) -> Vec<Violation> {
    let mut out = Vec::new();
    if corpus.engines.is_empty() {
        out.push(Violation::NoEngines);
    }
    if corpus.keywords.is_empty() {
        out.push(Violation::NoKeywords);
    }

    let mut seen = HashSet::new();
    for e in &corpus.engines {
        if !seen.insert(e) {
            out.push(Violation::DuplicateEngine(e.clone()));
        }
    }
    let mut seen = HashSet::new();
    for k in &corpus.keywords {
        if !seen.insert(k) {
            out.push(Violation::DuplicateKeyword(k.clone()));
        }
    }

    for e in &corpus.engines {
        for k in &corpus.keywords {
            if corpus.snapshot(e, k).is_none() {
                out.push(Violation::MissingSnapshot {
                    engine: e.clone(),
                    keyword: k.clone(),
                });
            }
        }
    }

    let display_len = corpus.ctr.len();
    for ((engine, keyword), snap) in &corpus.snapshots {
        if !corpus.has_engine(engine) || !corpus.has_keyword(keyword) {
            out.push(Violation::StraySnapshot {
                engine: engine.clone(),
                keyword: keyword.clone(),
            });
        }
        if snap.results.len() > display_len {
            out.push(Violation::TooManyResults {
                engine: engine.clone(),
                keyword: keyword.clone(),
                len: snap.results.len(),
                display_len,
            });
        }
        let mut positions: BTreeMap<&PageId, Vec<usize>> = BTreeMap::new();
        for (i, page) in snap.results.iter().enumerate() {
            positions.entry(page).or_default().push(i + 1);
        }
        for (page, positions) in positions {
            if positions.len() > 1 {
                out.push(Violation::DuplicatePage {
                    engine: engine.clone(),
                    keyword: keyword.clone(),
                    page: page.clone(),
                    positions,
                });
            }
        }
    }

    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(s: &str) -> EngineId {
        EngineId::new(s).unwrap()
    }

    fn k(s: &str) -> Keyword {
        Keyword::new(s).unwrap()
    }

    fn p(s: &str) -> PageId {
        PageId::from_canonical(s)
    }

    #[test]
    fn minimal_corpus_is_valid() {
        let snap = RankingSnapshot::new(
            e("google"),
            k("weather"),
            vec![p("https://a.com/"), p("https://b.com/"), p("https://c.com/")],
        );
        let corpus = Corpus::from_parts(
            vec![e("google")],
            vec![k("weather")],
            [snap],
            CtrProfile::default(),
        );
        assert!(validate_corpus(&corpus).is_empty());
    }

    #[test]
    fn missing_snapshot_is_reported() {
        let snap = RankingSnapshot::new(e("google"), k("weather"), vec![p("https://a.com/")]);
        let corpus = Corpus::from_parts(
            vec![e("google"), e("bing")],
            vec![k("weather")],
            [snap],
            CtrProfile::default(),
        );
        assert_eq!(
            validate_corpus(&corpus),
            vec![Violation::MissingSnapshot {
                engine: e("bing"),
                keyword: k("weather")
            }]
        );
    }

    #[test]
    fn duplicate_page_is_reported_with_positions() {
        let results = vec![
            p("https://a.com/"),
            p("https://b.com/"),
            p("https://c.com/"),
            p("https://a.com/"),
        ];
        let snap = RankingSnapshot::new(e("google"), k("weather"), results);
        let corpus = Corpus::from_parts(
            vec![e("google")],
            vec![k("weather")],
            [snap],
            CtrProfile::default(),
        );
        assert_eq!(
            validate_corpus(&corpus),
            vec![Violation::DuplicatePage {
                engine: e("google"),
                keyword: k("weather"),
                page: p("https://a.com/"),
                positions: vec![1, 4],
            }]
        );
    }

    #[test]
    fn empty_and_overlong_corpora() {
        let corpus = Corpus::from_parts(vec![], vec![], [], CtrProfile::default());
        assert_eq!(
            validate_corpus(&corpus),
            vec![Violation::NoEngines, Violation::NoKeywords]
        );

        let ctr = CtrProfile::new(vec![0.5, 0.3]).unwrap();
        let snap = RankingSnapshot::new(
            e("g"),
            k("q"),
            vec![p("https://a.com/"), p("https://b.com/"), p("https://c.com/")],
        );
        let corpus = Corpus::from_parts(vec![e("g")], vec![k("q")], [snap], ctr);
        assert!(matches!(
            validate_corpus(&corpus).as_slice(),
            [Violation::TooManyResults { len: 3, display_len: 2, .. }]
        ));
    }

    #[test]
    fn keyword_identity_is_case_insensitive_and_trimmed() {
        assert_eq!(k("  Weather "), k("weather"));
        assert_eq!(k("  Weather ").as_str(), "Weather");
        assert_eq!(e("Google").as_str(), "google");
        assert!(Keyword::new("   ").is_err());
        assert!(EngineId::new("").is_err());
    }

    #[test]
    fn ctr_profile_rules() {
        let ctr = CtrProfile::default();
        assert_eq!(ctr.len(), 10);
        assert_eq!(ctr.weight(1), 0.364);
        assert_eq!(ctr.weight(10), 0.022);
        assert_eq!(ctr.weight(11), 0.0);
        assert_eq!(ctr.weight(0), 0.0);
        assert!(ctr.monotonicity_warnings().is_empty());

        assert!(CtrProfile::new(vec![]).is_err());
        assert!(CtrProfile::new(vec![0.1, -0.2]).is_err());
        assert!(CtrProfile::new(vec![0.1, f64::NAN]).is_err());

        let odd = CtrProfile::new(vec![0.1, 0.3]).unwrap();
        assert_eq!(odd.monotonicity_warnings().len(), 1);
    }

    #[test]
    fn validation_is_idempotent() {
        let snap = RankingSnapshot::new(
            e("g"),
            k("q"),
            vec![p("https://a.com/"), p("https://a.com/")],
        );
        let corpus = Corpus::from_parts(
            vec![e("g"), e("b"), e("g")],
            vec![k("q")],
            [snap],
            CtrProfile::default(),
        );
        let first = validate_corpus(&corpus);
        assert_eq!(first, validate_corpus(&corpus));
        assert_eq!(first.len(), 3);
    }
}

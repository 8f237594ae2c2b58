//! Snapshot ingestion: the JSONL corpus format, canonicalization and
//! deduplication of result lists, and the fetch-adapter interface used to
//! collect snapshots.
//!
//! A corpus file holds one JSON object per line:
//!
//! ```text
//! {"engine":"google","keyword":"weather","captured_at":null,"results":["https://..."]}
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonicalize::{canonical_url, group_subpages, CanonicalizationPolicy, GroupingMode};
use crate::model::{validate_corpus, Corpus, CtrProfile, EngineId, Keyword, PageId, RankingSnapshot};

/// Upper bound on raw result-list length.
pub const MAX_RAW_RESULTS: usize = 100;

/// One line of a corpus file, as captured.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSnapshotRecord {
    pub engine: String,
    pub keyword: String,
    #[serde(default)]
    pub captured_at: Option<String>,
    pub results: Vec<String>,
}

impl RawSnapshotRecord {
    /// Serialized form: a single JSON line without the trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// What to do with a keyword that some engine has no snapshot for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MissingPolicy {
    #[default]
    Fail,
    DropKeyword,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadOptions {
    pub policy: CanonicalizationPolicy,
    pub grouping: GroupingMode,
    pub missing: MissingPolicy,
    pub ctr: CtrProfile,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("missing snapshot for engine {engine} and keyword {keyword:?}")]
    MissingSnapshot { engine: EngineId, keyword: Keyword },
    #[error("corpus is empty")]
    EmptyCorpus,
}

/// Non-fatal events recorded while loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IngestWarning {
    MalformedUrl { line: usize, url: String },
    DuplicateRecord { line: usize, engine: EngineId, keyword: Keyword },
    Truncated { line: usize, engine: EngineId, keyword: Keyword, dropped: usize },
    DroppedKeyword { keyword: Keyword, missing: Vec<EngineId> },
}

impl fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestWarning::MalformedUrl { line, url } => {
                write!(f, "line {line}: skipped malformed URL {url:?}")
            }
            IngestWarning::DuplicateRecord { line, engine, keyword } => write!(
                f,
                "line {line}: record for ({engine}, {keyword:?}) replaces an earlier one"
            ),
            IngestWarning::Truncated { line, engine, keyword, dropped } => write!(
                f,
                "line {line}: ({engine}, {keyword:?}) truncated to the display length, {dropped} results dropped"
            ),
            IngestWarning::DroppedKeyword { keyword, missing } => {
                let names: Vec<&str> = missing.iter().map(|e| e.as_str()).collect();
                write!(f, "dropped keyword {keyword:?}: no snapshot from {}", names.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub records: usize,
    pub warnings: Vec<IngestWarning>,
}

/// Parses JSONL records, skipping blank lines. Line numbers are 1-based.
pub fn parse_records(reader: impl BufRead) -> Result<Vec<(usize, RawSnapshotRecord)>, IngestError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IngestError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RawSnapshotRecord =
            serde_json::from_str(&line).map_err(|e| IngestError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
        out.push((line_no, record));
    }
    Ok(out)
}

fn check_timestamp(ts: &str) -> bool {
    use chrono::{DateTime, NaiveDate, NaiveDateTime};
    DateTime::parse_from_rfc3339(ts).is_ok()
        || NaiveDateTime::parse_from_str(ts, "%Y-%m-%dT%H:%M:%S%.f").is_ok()
        || NaiveDate::parse_from_str(ts, "%Y-%m-%d").is_ok()
}

/// Canonicalizes, deduplicates (earliest position wins), groups and truncates
/// one raw result list.
pub fn clean_results(
    raw: &[String],
    options: &LoadOptions,
    mut on_malformed: impl FnMut(&str),
) -> Vec<PageId> {
    let mut seen = HashSet::new();
    let mut pages = Vec::with_capacity(raw.len());
    for url in raw {
        match canonical_url(url, &options.policy) {
            Ok(page) => {
                if seen.insert(page.clone()) {
                    pages.push(page);
                }
            }
            Err(_) => on_malformed(url),
        }
    }
    group_subpages(&pages, options.grouping)
}

/// Builds a validated corpus from parsed records.
pub fn build_corpus(
    records: Vec<(usize, RawSnapshotRecord)>,
    options: &LoadOptions,
) -> Result<(Corpus, IngestReport), IngestError> {
    let mut report = IngestReport {
        records: records.len(),
        warnings: Vec::new(),
    };
    let mut engines: Vec<EngineId> = Vec::new();
    let mut keywords: Vec<Keyword> = Vec::new();
    let mut snapshots: HashMap<(EngineId, Keyword), RankingSnapshot> = HashMap::new();
    let display_len = options.ctr.len();

    for (line, record) in records {
        let malformed = |reason: String| IngestError::MalformedRecord { line, reason };
        let engine = EngineId::new(&record.engine).map_err(|e| malformed(e.to_string()))?;
        let keyword = Keyword::new(&record.keyword).map_err(|e| malformed(e.to_string()))?;
        if record.results.len() > MAX_RAW_RESULTS {
            return Err(malformed(format!(
                "{} results exceed the limit of {MAX_RAW_RESULTS}",
                record.results.len()
            )));
        }
        if let Some(ts) = &record.captured_at {
            if !check_timestamp(ts) {
                return Err(malformed(format!("captured_at {ts:?} is not an ISO-8601 timestamp")));
            }
        }

        if !engines.contains(&engine) {
            engines.push(engine.clone());
        }
        // First spelling of a keyword is the one kept for display.
        let keyword = match keywords.iter().find(|k| **k == keyword) {
            Some(k) => k.clone(),
            None => {
                keywords.push(keyword.clone());
                keyword
            }
        };

        let mut results = clean_results(&record.results, options, |url| {
            report.warnings.push(IngestWarning::MalformedUrl {
                line,
                url: url.to_string(),
            })
        });
        if results.len() > display_len {
            report.warnings.push(IngestWarning::Truncated {
                line,
                engine: engine.clone(),
                keyword: keyword.clone(),
                dropped: results.len() - display_len,
            });
            results.truncate(display_len);
        }

        let snapshot = RankingSnapshot {
            engine: engine.clone(),
            keyword: keyword.clone(),
            results,
            captured_at: record.captured_at,
        };
        if snapshots.insert((engine.clone(), keyword.clone()), snapshot).is_some() {
            report
                .warnings
                .push(IngestWarning::DuplicateRecord { line, engine, keyword });
        }
    }

    let mut kept = Vec::with_capacity(keywords.len());
    for keyword in keywords {
        let missing: Vec<EngineId> = engines
            .iter()
            .filter(|e| !snapshots.contains_key(&((*e).clone(), keyword.clone())))
            .cloned()
            .collect();
        if missing.is_empty() {
            kept.push(keyword);
            continue;
        }
        match options.missing {
            MissingPolicy::Fail => {
                return Err(IngestError::MissingSnapshot {
                    engine: missing[0].clone(),
                    keyword,
                })
            }
            MissingPolicy::DropKeyword => {
                snapshots.retain(|(_, k), _| *k != keyword);
                report
                    .warnings
                    .push(IngestWarning::DroppedKeyword { keyword, missing });
            }
        }
    }

    if engines.is_empty() || kept.is_empty() {
        return Err(IngestError::EmptyCorpus);
    }
    for warning in &report.warnings {
        log::warn!("{warning}");
    }

    let corpus = Corpus::from_parts(engines, kept, snapshots.into_values(), options.ctr.clone());
    debug_assert!(validate_corpus(&corpus).is_empty());
    Ok((corpus, report))
}

/// Loads a JSONL corpus file.
pub fn load_corpus(path: &Path, options: &LoadOptions) -> Result<(Corpus, IngestReport), IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    build_corpus(parse_records(BufReader::new(file))?, options)
}

/// Records of a corpus in canonical form, keyword-major in corpus order.
pub fn corpus_records(corpus: &Corpus) -> Vec<RawSnapshotRecord> {
    let mut out = Vec::new();
    for keyword in corpus.keywords() {
        for engine in corpus.engines() {
            if let Some(snap) = corpus.snapshot(engine, keyword) {
                out.push(RawSnapshotRecord {
                    engine: engine.to_string(),
                    keyword: keyword.to_string(),
                    captured_at: snap.captured_at.clone(),
                    results: snap.results.iter().map(|p| p.to_string()).collect(),
                });
            }
        }
    }
    out
}

/// Writes a corpus as JSONL. Reloading the output with the same options
/// yields an identical corpus.
pub fn write_corpus(corpus: &Corpus, mut writer: impl Write) -> io::Result<()> {
    for record in corpus_records(corpus) {
        writeln!(writer, "{}", record.to_json_line())?;
    }
    writer.flush()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FetchError {
    #[error("unknown engine {0}")]
    UnknownEngine(EngineId),
    #[error("no snapshot available")]
    NotFound,
    #[error("{0}")]
    Io(String),
    #[error("malformed snapshot: {0}")]
    Malformed(String),
}

/// A source of ranking snapshots.
pub trait FetchAdapter: Send + Sync {
    fn fetch(&self, engine: &EngineId, keyword: &Keyword) -> Result<RawSnapshotRecord, FetchError>;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("fetching ({engine}, {keyword:?}) failed: {source}")]
pub struct SnapshotError {
    pub engine: EngineId,
    pub keyword: Keyword,
    #[source]
    pub source: FetchError,
}

/// Asks `adapter` for one snapshot and returns the record unchanged.
pub fn snapshot_via_adapter(
    adapter: &dyn FetchAdapter,
    engine: &EngineId,
    keyword: &Keyword,
) -> Result<RawSnapshotRecord, SnapshotError> {
    adapter.fetch(engine, keyword).map_err(|source| SnapshotError {
        engine: engine.clone(),
        keyword: keyword.clone(),
        source,
    })
}

/// Replays stored snapshots from `<root>/<engine>/<url-encoded keyword>.json`.
#[derive(Debug, Clone)]
pub struct ReplayAdapter {
    root: PathBuf,
}

impl ReplayAdapter {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn fixture_path(&self, engine: &EngineId, keyword: &Keyword) -> PathBuf {
        let encoded: String = url::form_urlencoded::byte_serialize(keyword.as_str().as_bytes()).collect();
        self.root.join(engine.as_str()).join(format!("{encoded}.json"))
    }

    /// Stores `record` where [`FetchAdapter::fetch`] will find it.
    pub fn store(&self, record: &RawSnapshotRecord) -> Result<PathBuf, FetchError> {
        let engine = EngineId::new(&record.engine).map_err(|e| FetchError::Malformed(e.to_string()))?;
        let keyword = Keyword::new(&record.keyword).map_err(|e| FetchError::Malformed(e.to_string()))?;
        let path = self.fixture_path(&engine, &keyword);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| FetchError::Io(e.to_string()))?;
        }
        let body = serde_json::to_string_pretty(record).expect("record serializes");
        fs::write(&path, body + "\n").map_err(|e| FetchError::Io(e.to_string()))?;
        Ok(path)
    }
}

impl FetchAdapter for ReplayAdapter {
    fn fetch(&self, engine: &EngineId, keyword: &Keyword) -> Result<RawSnapshotRecord, FetchError> {
        if !self.root.join(engine.as_str()).is_dir() {
            return Err(FetchError::UnknownEngine(engine.clone()));
        }
        let path = self.fixture_path(engine, keyword);
        let body = match fs::read_to_string(&path) {
            Ok(body) => body,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(FetchError::NotFound),
            Err(e) => return Err(FetchError::Io(format!("{}: {e}", path.display()))),
        };
        serde_json::from_str(&body).map_err(|e| FetchError::Malformed(format!("{}: {e}", path.display())))
    }
}

/// Rewrites result URLs through a recorded redirect map (`from` → `to`,
/// followed transitively) before handing records on.
#[derive(Debug, Clone)]
pub struct RedirectMapAdapter<A> {
    inner: A,
    redirects: HashMap<String, String>,
}

impl<A: FetchAdapter> RedirectMapAdapter<A> {
    pub fn new(inner: A, redirects: HashMap<String, String>) -> Self {
        Self { inner, redirects }
    }

    /// Reads a JSON object of string → string.
    pub fn from_file(inner: A, path: &Path) -> Result<Self, FetchError> {
        let body = fs::read_to_string(path).map_err(|e| FetchError::Io(format!("{}: {e}", path.display())))?;
        let redirects: HashMap<String, String> =
            serde_json::from_str(&body).map_err(|e| FetchError::Malformed(format!("{}: {e}", path.display())))?;
        Ok(Self::new(inner, redirects))
    }

    /// Final target of `url`. Cycles stop at the first repeated URL.
    pub fn resolve(&self, url: &str) -> String {
        let mut current = url;
        let mut visited = HashSet::new();
        while let Some(next) = self.redirects.get(current) {
            if !visited.insert(current) {
                break;
            }
            current = next;
        }
        current.to_string()
    }
}

impl<A: FetchAdapter> FetchAdapter for RedirectMapAdapter<A> {
    fn fetch(&self, engine: &EngineId, keyword: &Keyword) -> Result<RawSnapshotRecord, FetchError> {
        let mut record = self.inner.fetch(engine, keyword)?;
        record.results = record.results.iter().map(|u| self.resolve(u)).collect();
        Ok(record)
    }
}

/// Appends records to a JSONL file. Appends from concurrent callers are
/// serialized.
pub struct JsonlSink {
    writer: Mutex<BufWriter<File>>,
}

impl JsonlSink {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn append(&self, record: &RawSnapshotRecord) -> io::Result<()> {
        let mut writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(writer, "{}", record.to_json_line())?;
        writer.flush()
    }
}

//! The end-to-end report pipeline: ingest a corpus, score it, run the
//! statistics and deviation analyses, and write a deterministic bundle of
//! CSV/JSON files.

use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{
    consensus_overlap_curve, extreme_queries, overlap_curve, relative_scores, Direction, OverlapCurve,
    RelativeScores, CONSENSUS_LABEL,
};
use crate::canonicalize::{CanonicalizationPolicy, GroupingMode};
use crate::ingest::{build_corpus, parse_records, IngestError, IngestReport, LoadOptions, MissingPolicy};
use crate::model::{Corpus, CtrProfile, ModelError};
use crate::scoring::{engine_mean_score, ScoreTable, ScoringError};
use crate::stats::{
    confidence_interval, format_p_value, ConfidenceInterval, PairwiseTestMatrix, ScoreSample, StatsError,
};

pub const DEFAULT_TOP_N: usize = 10;
pub const CI_LEVEL: f64 = 0.95;

/// Files written by [`run_pipeline`], in write order.
pub const BUNDLE_FILES: [&str; 9] = [
    "scores.csv",
    "pvalues.csv",
    "overlap.csv",
    "relative.csv",
    "extremes_high.csv",
    "extremes_low.csv",
    "consensus.jsonl",
    "keyword_scores.csv",
    "run_manifest.json",
];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("invalid CTR profile: {0}")]
    Ctr(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> PipelineError {
    let context = context.into();
    move |source| PipelineError::Io { context, source }
}

/// CTR weights given inline or as a path to a `position,weight` CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CtrSource {
    Weights(Vec<f64>),
    Path(PathBuf),
}

/// Run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ctr_profile: Option<CtrSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonicalization: Option<CanonicalizationPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grouping: Option<GroupingMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub missing_policy: Option<MissingPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_n: Option<usize>,
}

impl RunConfig {
    pub fn new(corpus: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            corpus: corpus.into(),
            out_dir: out_dir.into(),
            ctr_profile: None,
            canonicalization: None,
            grouping: None,
            missing_policy: None,
            top_n: None,
        }
    }

    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let body = fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
        let mut config: RunConfig =
            serde_json::from_str(&body).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        config.corpus = resolve(&config.corpus);
        config.out_dir = resolve(&config.out_dir);
        if let Some(CtrSource::Path(p)) = &config.ctr_profile {
            config.ctr_profile = Some(CtrSource::Path(resolve(p)));
        }
        Ok(config)
    }

    pub fn top_n(&self) -> usize {
        self.top_n.unwrap_or(DEFAULT_TOP_N)
    }

    pub fn ctr(&self) -> Result<CtrProfile, PipelineError> {
        match &self.ctr_profile {
            None => Ok(CtrProfile::default()),
            Some(CtrSource::Weights(w)) => CtrProfile::new(w.clone()).map_err(|e| PipelineError::Ctr(e.to_string())),
            Some(CtrSource::Path(p)) => load_ctr_csv(p),
        }
    }

    pub fn load_options(&self) -> Result<LoadOptions, PipelineError> {
        Ok(LoadOptions {
            policy: self.canonicalization.clone().unwrap_or_default(),
            grouping: self.grouping.unwrap_or_default(),
            missing: self.missing_policy.unwrap_or_default(),
            ctr: self.ctr()?,
        })
    }
}

#[derive(Debug, Deserialize)]
struct CtrRow {
    position: usize,
    weight: f64,
}

/// Reads a `position,weight` CSV (with header). Positions must cover `1..=a`.
pub fn load_ctr_csv(path: &Path) -> Result<CtrProfile, PipelineError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| PipelineError::Ctr(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<CtrRow> = reader
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::Ctr(format!("{}: {e}", path.display())))?;
    rows.sort_by_key(|r| r.position);
    for (idx, row) in rows.iter().enumerate() {
        if row.position != idx + 1 {
            return Err(PipelineError::Ctr(format!(
                "{}: positions must be 1..={} without gaps or repeats",
                path.display(),
                rows.len()
            )));
        }
    }
    CtrProfile::new(rows.into_iter().map(|r| r.weight).collect())
        .map_err(|e: ModelError| PipelineError::Ctr(e.to_string()))
}

/// Formats `x` with `digits` significant digits, switching to scientific
/// notation for very small or large magnitudes.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if exp < -5 || exp >= digits as i32 {
        format!("{:.*e}", digits - 1, x)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    }
}

fn score_fmt(x: f64) -> String {
    format_sig(x, 6)
}

/// Everything the report files are rendered from.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub corpus: Corpus,
    pub ingest: IngestReport,
    pub table: ScoreTable,
    /// Engines in corpus order, then the consensus.
    pub samples: Vec<ScoreSample>,
    /// `None` when fewer than two keywords are available.
    pub intervals: Option<Vec<ConfidenceInterval>>,
    pub tests: Option<PairwiseTestMatrix>,
    pub overlap: Vec<OverlapCurve>,
    pub relative: RelativeScores,
    pub top_n: usize,
}

impl Analysis {
    pub fn run(corpus: Corpus, ingest: IngestReport, top_n: usize) -> Result<Self, PipelineError> {
        let table = ScoreTable::compute(&corpus)?;
        let mut samples: Vec<ScoreSample> = table
            .engines
            .iter()
            .enumerate()
            .map(|(j, e)| ScoreSample::new(e.to_string(), table.engine_series(j)))
            .collect();
        samples.push(ScoreSample::new(CONSENSUS_LABEL, table.consensus_series()));

        let (intervals, tests) = if table.keywords.len() >= 2 {
            let intervals = samples
                .iter()
                .map(|s| confidence_interval(s, CI_LEVEL))
                .collect::<Result<Vec<_>, _>>()?;
            (Some(intervals), Some(PairwiseTestMatrix::compute(&samples)?))
        } else {
            log::warn!("a single keyword cannot support intervals or t-tests");
            (None, None)
        };

        let mut overlap: Vec<OverlapCurve> = corpus
            .engines()
            .iter()
            .map(|e| overlap_curve(&corpus, &table, e))
            .collect();
        overlap.push(consensus_overlap_curve(&table, corpus.ctr().len()));
        let relative = relative_scores(&table);

        Ok(Self {
            corpus,
            ingest,
            table,
            samples,
            intervals,
            tests,
            overlap,
            relative,
            top_n,
        })
    }

    pub fn means(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| engine_mean_score(&s.values).unwrap_or(0.0))
            .collect()
    }

    pub fn scores_csv(&self) -> String {
        let mut w = csv_writer();
        w.write_record(["engine", "mean", "ci_half_width"]).unwrap();
        for (i, (sample, mean)) in self.samples.iter().zip(self.means()).enumerate() {
            let half = self
                .intervals
                .as_ref()
                .map(|ci| score_fmt(ci[i].half_width))
                .unwrap_or_default();
            w.write_record([sample.label.clone(), score_fmt(mean), half]).unwrap();
        }
        finish(w)
    }

    /// Upper-triangular p-value matrix: rows are every participant but the
    /// last, columns every participant but the first.
    pub fn pvalues_csv(&self) -> String {
        let labels: Vec<&str> = self.samples.iter().map(|s| s.label.as_str()).collect();
        let n = labels.len();
        let mut w = csv_writer();
        let mut header = vec!["engine"];
        header.extend(&labels[1..]);
        w.write_record(&header).unwrap();
        for (i, label) in labels.iter().enumerate().take(n.saturating_sub(1)) {
            let mut row = vec![label.to_string()];
            for j in 1..n {
                let cell = match &self.tests {
                    Some(tests) if j > i => tests.get(i, j).map(|t| format_p_value(t.p)).unwrap_or_default(),
                    _ => String::new(),
                };
                row.push(cell);
            }
            w.write_record(&row).unwrap();
        }
        finish(w)
    }

    pub fn overlap_csv(&self) -> String {
        let mut w = csv_writer();
        let mut header = vec!["x".to_string()];
        header.extend(self.overlap.iter().map(|c| c.engine.clone()));
        w.write_record(&header).unwrap();
        for x in 0..self.corpus.ctr().len() {
            let mut row = vec![(x + 1).to_string()];
            row.extend(self.overlap.iter().map(|c| score_fmt(c.points[x])));
            w.write_record(&row).unwrap();
        }
        finish(w)
    }

    pub fn relative_csv(&self) -> String {
        let sorted: Vec<Vec<f64>> = self
            .relative
            .distributions
            .iter()
            .map(|d| d.sorted_desc().into_iter().map(|(_, v)| v).collect())
            .collect();
        let rows = sorted.first().map_or(0, Vec::len);
        let mut w = csv_writer();
        let mut header = vec!["rank".to_string()];
        header.extend(self.relative.distributions.iter().map(|d| d.engine.clone()));
        w.write_record(&header).unwrap();
        for r in 0..rows {
            let mut row = vec![(r + 1).to_string()];
            row.extend(sorted.iter().map(|s| score_fmt(s[r])));
            w.write_record(&row).unwrap();
        }
        finish(w)
    }

    pub fn extremes_csv(&self, direction: Direction) -> String {
        let mut w = csv_writer();
        w.write_record(["engine", "rank", "keyword", "relative_score"]).unwrap();
        for dist in &self.relative.distributions {
            let report = extreme_queries(dist, self.top_n, direction);
            for (rank, (keyword, value)) in report.entries.iter().enumerate() {
                w.write_record([
                    report.engine.clone(),
                    (rank + 1).to_string(),
                    keyword.to_string(),
                    format!("{value:.4}"),
                ])
                .unwrap();
            }
        }
        finish(w)
    }

    pub fn consensus_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            keyword: &'a str,
            score: f64,
            results: Vec<&'a str>,
        }
        let mut out = String::new();
        for ks in &self.table.keywords {
            let line = Line {
                keyword: ks.keyword.as_str(),
                score: ks.consensus_score,
                results: ks.consensus.iter().map(|p| p.as_str()).collect(),
            };
            out.push_str(&serde_json::to_string(&line).expect("serializable"));
            out.push('\n');
        }
        out
    }

    /// Per-keyword engine and consensus scores.
    pub fn keyword_scores_csv(&self) -> String {
        let mut w = csv_writer();
        let mut header = vec!["keyword".to_string()];
        header.extend(self.table.engines.iter().map(|e| e.to_string()));
        header.push(CONSENSUS_LABEL.to_string());
        w.write_record(&header).unwrap();
        for ks in &self.table.keywords {
            let mut row = vec![ks.keyword.to_string()];
            row.extend(ks.engines.iter().map(|&s| score_fmt(s)));
            row.push(score_fmt(ks.consensus_score));
            w.write_record(&row).unwrap();
        }
        finish(w)
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv")
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    corpus_sha256: String,
    ctr_weights: &'a [f64],
    engines: Vec<&'a str>,
    keywords: usize,
    records: usize,
    warnings: Vec<String>,
    files: Vec<&'static str>,
}

/// Summary returned by [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub analysis: Analysis,
}

/// Loads, scores and analyses the configured corpus without writing.
pub fn analyze(config: &RunConfig) -> Result<(Analysis, Vec<u8>), PipelineError> {
    let bytes = fs::read(&config.corpus).map_err(|source| IngestError::Io {
        path: config.corpus.clone(),
        source,
    })?;
    let options = config.load_options()?;
    for w in options.ctr.monotonicity_warnings() {
        log::warn!("{w}");
    }
    let records = parse_records(BufReader::new(bytes.as_slice()))?;
    let (corpus, ingest) = build_corpus(records, &options)?;
    Ok((Analysis::run(corpus, ingest, config.top_n())?, bytes))
}

/// Runs the whole pipeline and writes the report bundle into
/// `config.out_dir`. Nothing is written unless every stage succeeds; if a
/// write fails, files already written by this run are removed.
pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary, PipelineError> {
    let (analysis, corpus_bytes) = analyze(config)?;

    let mut warnings: Vec<String> = analysis.ingest.warnings.iter().map(|w| w.to_string()).collect();
    warnings.extend(analysis.corpus.ctr().monotonicity_warnings());
    warnings.extend(
        analysis
            .relative
            .zero_consensus
            .iter()
            .map(|k| format!("keyword {k:?} has zero consensus score, excluded from relative scores")),
    );
    if analysis.tests.is_none() {
        warnings.push("fewer than two keywords: intervals and t-tests omitted".to_string());
    }

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config,
        corpus_sha256: hex::encode(Sha256::digest(&corpus_bytes)),
        ctr_weights: analysis.corpus.ctr().weights(),
        engines: analysis.corpus.engines().iter().map(|e| e.as_str()).collect(),
        keywords: analysis.corpus.keywords().len(),
        records: analysis.ingest.records,
        warnings,
        files: BUNDLE_FILES.to_vec(),
    };
    let mut manifest_json = serde_json::to_string_pretty(&manifest).expect("serializable");
    manifest_json.push('\n');

    let contents = [
        analysis.scores_csv(),
        analysis.pvalues_csv(),
        analysis.overlap_csv(),
        analysis.relative_csv(),
        analysis.extremes_csv(Direction::Highest),
        analysis.extremes_csv(Direction::Lowest),
        analysis.consensus_jsonl(),
        analysis.keyword_scores_csv(),
        manifest_json,
    ];

    fs::create_dir_all(&config.out_dir).map_err(io_err(format!("creating {}", config.out_dir.display())))?;
    let mut written = Vec::new();
    for (name, body) in BUNDLE_FILES.iter().zip(contents) {
        let path = config.out_dir.join(name);
        if let Err(e) = fs::write(&path, body) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(io_err(format!("writing {}", path.display()))(e));
        }
        written.push(path);
    }

    Ok(RunSummary {
        out_dir: config.out_dir.clone(),
        files: written,
        analysis,
    })
}

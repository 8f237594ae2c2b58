use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use serp_consensus::canonicalize::GroupingMode;
use serp_consensus::ingest::{
    snapshot_via_adapter, write_corpus, FetchAdapter, JsonlSink, MissingPolicy, RedirectMapAdapter, ReplayAdapter,
};
use serp_consensus::report::{analyze, format_sig, run_pipeline, CtrSource, RunConfig};
use serp_consensus::synth::{generate_records, bundled_keywords, SynthConfig};
use serp_consensus::{EngineId, Keyword};

#[derive(Parser)]
#[command(name = "serp-consensus", version, about = "Consensus scoring of search-engine result snapshots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Canonicalize and validate a corpus, writing it back in canonical form.
    Ingest(PipelineArgs),
    /// Print engine mean scores with 95% confidence half-widths.
    Score(PipelineArgs),
    /// Run the full pipeline and write the report bundle.
    Report(PipelineArgs),
    /// Generate a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Collect snapshots through the fixture-replay adapter.
    Fetch(FetchArgs),
}

#[derive(Args)]
struct PipelineArgs {
    /// Run-config JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus JSONL file (overrides the config).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Output directory (for `ingest`, the output corpus file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of `position,weight` replacing the default CTR profile.
    #[arg(long)]
    ctr: Option<PathBuf>,
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long, value_enum)]
    grouping: Option<GroupingMode>,
    #[arg(long, value_enum)]
    missing: Option<MissingPolicy>,
}

impl PipelineArgs {
    fn run_config(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let corpus = self.corpus.clone().context("either --config or --corpus is required")?;
                RunConfig::new(corpus, "report")
            }
        };
        if let Some(c) = &self.corpus {
            config.corpus = c.clone();
        }
        if let Some(o) = &self.out {
            config.out_dir = o.clone();
        }
        if let Some(c) = &self.ctr {
            config.ctr_profile = Some(CtrSource::Path(c.clone()));
        }
        if self.top_n.is_some() {
            config.top_n = self.top_n;
        }
        if self.grouping.is_some() {
            config.grouping = self.grouping;
        }
        if self.missing.is_some() {
            config.missing_policy = self.missing;
        }
        if config.top_n == Some(0) {
            bail!("--top-n must be at least 1");
        }
        Ok(config)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Nine engines in a few agreeing families plus one outlier.
    NineEngine,
    /// Random engine parameters.
    Random,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output corpus file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "nine-engine")]
    preset: Preset,
    /// Keyword list, one per line (nine-engine preset; defaults to the bundled list).
    #[arg(long)]
    keywords: Option<PathBuf>,
    /// Engine count (random preset).
    #[arg(long, default_value_t = 5)]
    engines: usize,
    /// Keyword count (random preset).
    #[arg(long, default_value_t = 20)]
    keyword_count: usize,
}

#[derive(Args)]
struct FetchArgs {
    /// Fixture directory laid out as <engine>/<url-encoded keyword>.json.
    #[arg(long)]
    fixtures: PathBuf,
    #[arg(long = "engine", required = true)]
    engines: Vec<String>,
    #[arg(long = "keyword")]
    keywords: Vec<String>,
    /// File with one keyword per line, added to --keyword.
    #[arg(long)]
    keyword_file: Option<PathBuf>,
    /// JSON object of from → to URLs applied to every fetched record.
    #[arg(long)]
    redirects: Option<PathBuf>,
    /// Corpus file the records are appended to.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(args) => ingest(args),
        Command::Score(args) => score(args),
        Command::Report(args) => report(args),
        Command::Synth(args) => synth(args),
        Command::Fetch(args) => fetch(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn ingest(args: PipelineArgs) -> Result<()> {
    let out = args.out.clone().context("--out <corpus file> is required")?;
    let config = args.run_config()?;
    let (analysis, _) = analyze(&config)?;
    let file = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    write_corpus(&analysis.corpus, BufWriter::new(file))?;
    eprintln!(
        "{} records -> {} engines x {} keywords, {} warnings",
        analysis.ingest.records,
        analysis.corpus.engines().len(),
        analysis.corpus.keywords().len(),
        analysis.ingest.warnings.len()
    );
    Ok(())
}

fn score(args: PipelineArgs) -> Result<()> {
    let config = args.run_config()?;
    let (analysis, _) = analyze(&config)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "engine,mean,ci_half_width")?;
    for (i, (sample, mean)) in analysis.samples.iter().zip(analysis.means()).enumerate() {
        let half = analysis
            .intervals
            .as_ref()
            .map(|ci| format_sig(ci[i].half_width, 6))
            .unwrap_or_default();
        writeln!(out, "{},{},{}", sample.label, format_sig(mean, 6), half)?;
    }
    Ok(())
}

fn report(args: PipelineArgs) -> Result<()> {
    let config = args.run_config()?;
    let summary = run_pipeline(&config)?;
    eprintln!("wrote {} files to {}", summary.files.len(), summary.out_dir.display());
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let config = match args.preset {
        Preset::NineEngine => {
            let keywords = match &args.keywords {
                Some(path) => fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect(),
                None => bundled_keywords(),
            };
            SynthConfig::nine_engine(args.seed, keywords)
        }
        Preset::Random => SynthConfig::random(args.seed, args.engines, args.keyword_count),
    };
    let file = fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = BufWriter::new(file);
    for record in generate_records(&config) {
        writeln!(w, "{}", record.to_json_line())?;
    }
    w.flush()?;
    Ok(())
}

fn fetch(args: FetchArgs) -> Result<()> {
    let mut keywords = args.keywords.clone();
    if let Some(path) = &args.keyword_file {
        let body = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        keywords.extend(body.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from));
    }
    if keywords.is_empty() {
        bail!("no keywords given");
    }
    let replay = ReplayAdapter::new(&args.fixtures);
    let adapter: Box<dyn FetchAdapter> = match &args.redirects {
        Some(path) => Box::new(RedirectMapAdapter::from_file(replay, path)?),
        None => Box::new(replay),
    };
    let sink = JsonlSink::open(&args.out).with_context(|| format!("opening {}", args.out.display()))?;

    let mut failures = 0;
    for engine in &args.engines {
        let engine = EngineId::new(engine)?;
        for keyword in &keywords {
            let keyword = Keyword::new(keyword)?;
            match snapshot_via_adapter(adapter.as_ref(), &engine, &keyword) {
                Ok(record) => sink.append(&record)?,
                Err(e) => {
                    eprintln!("{e}");
                    failures += 1;
                }
            }
        }
    }
    if failures > 0 {
        bail!("{failures} snapshots could not be fetched");
    }
    Ok(())
}

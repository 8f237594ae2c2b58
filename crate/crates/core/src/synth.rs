//! Seeded synthetic corpora.
//!
//! Every keyword gets a pool of candidate pages with a hidden relevance. Each
//! engine ranks the pool by relevance plus noise: a component shared with the
//! other engines of its family (engines built on the same index) and an
//! engine-specific one. Engines can also boost pages from domains they own.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::RawSnapshotRecord;
use crate::model::{Corpus, CtrProfile, EngineId, Keyword, PageId, RankingSnapshot};

/// A bundled list of 99 everyday search queries.
pub const BUNDLED_KEYWORDS: &str = include_str!("../fixtures/keywords.txt");

pub fn bundled_keywords() -> Vec<String> {
    BUNDLED_KEYWORDS
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

const OWNED_DOMAINS: [&str; 5] = [
    "google.example",
    "microsoft.example",
    "yahoo.example",
    "aol.example",
    "qwant.example",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEngine {
    pub name: String,
    /// Std-dev of the engine-specific ranking noise.
    pub noise: f64,
    /// Engines sharing a family share one noise draw per page.
    pub family: Option<String>,
    /// Result-list length before any shortening.
    pub results: usize,
    /// Probability that a list is cut short.
    pub short_list_prob: f64,
    /// Domains whose pages get `bias_boost` added to their perceived score.
    pub own_domains: Vec<String>,
    pub bias_boost: f64,
}

impl SynthEngine {
    pub fn new(name: &str, noise: f64) -> Self {
        Self {
            name: name.to_string(),
            noise,
            family: None,
            results: 10,
            short_list_prob: 0.0,
            own_domains: Vec::new(),
            bias_boost: 0.0,
        }
    }

    fn family(mut self, family: &str) -> Self {
        self.family = Some(family.to_string());
        self
    }

    fn owns(mut self, domain: &str, boost: f64) -> Self {
        self.own_domains.push(domain.to_string());
        self.bias_boost = boost;
        self
    }

    fn short_lists(mut self, prob: f64) -> Self {
        self.short_list_prob = prob;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub engines: Vec<SynthEngine>,
    pub keywords: Vec<String>,
    /// Candidate pages per keyword.
    pub pool_size: usize,
    /// Std-dev of the per-family noise.
    pub family_noise: f64,
    /// Write some URLs in non-canonical spellings (http, www, tracking
    /// parameters, case, trailing slash).
    pub raw_variants: bool,
}

impl SynthConfig {
    /// Nine engines: a large family of closely agreeing engines, a second
    /// family of two, one independent engine with its own index and one
    /// engine that is far from everyone.
    pub fn nine_engine(seed: u64, keywords: Vec<String>) -> Self {
        let engines = vec![
            SynthEngine::new("google", 0.35)
                .family("g")
                .owns("google.example", 1.5),
            SynthEngine::new("yahoo", 0.15).family("b"),
            SynthEngine::new("bing", 0.45)
                .family("b")
                .owns("microsoft.example", 1.5),
            SynthEngine::new("aol", 0.2).family("b").owns("aol.example", 0.8),
            SynthEngine::new("ask", 2.5).family("ask").short_lists(0.15),
            SynthEngine::new("duckduckgo", 0.15).family("b"),
            SynthEngine::new("ecosia", 0.2).family("b"),
            SynthEngine::new("startpage", 0.4).family("g"),
            SynthEngine::new("qwant", 0.6).family("q").owns("qwant.example", 1.0),
        ];
        Self {
            seed,
            engines,
            keywords,
            pool_size: 40,
            family_noise: 0.6,
            raw_variants: true,
        }
    }

    /// `n` engines with random noise levels and families over `m` keywords.
    pub fn random(seed: u64, n: usize, m: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe);
        let engines = (0..n)
            .map(|j| {
                let mut e = SynthEngine::new(&format!("engine{j}"), rng.random_range(0.0..2.0))
                    .family(&format!("f{}", rng.random_range(0..3)))
                    .short_lists(rng.random_range(0.0..0.3));
                if rng.random_bool(0.3) {
                    e = e.owns(OWNED_DOMAINS[j % OWNED_DOMAINS.len()], rng.random_range(0.0..2.0));
                }
                e
            })
            .collect();
        Self {
            seed,
            engines,
            keywords: (0..m).map(|k| format!("keyword {k}")).collect(),
            pool_size: rng.random_range(10..40),
            family_noise: rng.random_range(0.0..1.0),
            raw_variants: false,
        }
    }
}

fn domain_pool() -> Vec<String> {
    let mut domains: Vec<String> = (0..35).map(|i| format!("site{i:02}.example")).collect();
    domains.extend(OWNED_DOMAINS.iter().map(|d| d.to_string()));
    domains
}

fn slug(keyword: &str) -> String {
    let mut out = String::new();
    for c in keyword.to_lowercase().chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

struct Candidate {
    domain: String,
    path: String,
    relevance: f64,
}

impl Candidate {
    fn canonical(&self) -> String {
        format!("https://{}{}", self.domain, self.path)
    }

    fn raw(&self, rng: &mut impl Rng) -> String {
        let scheme = if rng.random_bool(0.5) { "http" } else { "https" };
        let www = if rng.random_bool(0.5) { "www." } else { "" };
        let path = if rng.random_bool(0.3) {
            self.path.to_uppercase()
        } else {
            self.path.clone()
        };
        let slash = if rng.random_bool(0.3) { "/" } else { "" };
        let query = if rng.random_bool(0.2) { "?utm_source=serp" } else { "" };
        format!("{scheme}://{www}{}{path}{slash}{query}", self.domain)
    }
}

/// One engine's list as `(canonical, raw)` URL pairs.
type SynthList = Vec<(String, String)>;

/// Ranked lists per keyword, one list per engine in configuration order.
fn generate(config: &SynthConfig) -> Vec<(String, Vec<SynthList>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let domains = domain_pool();
    let family_noise = Normal::new(0.0, config.family_noise.max(0.0)).expect("valid std-dev");
    let mut families: Vec<&str> = config
        .engines
        .iter()
        .filter_map(|e| e.family.as_deref())
        .collect();
    families.sort_unstable();
    families.dedup();

    let mut out = Vec::with_capacity(config.keywords.len());
    for keyword in &config.keywords {
        let slug = slug(keyword);
        let pool: Vec<Candidate> = (0..config.pool_size)
            .map(|i| {
                let domain = domains.choose(&mut rng).expect("non-empty").clone();
                let relevance: f64 = Exp1.sample(&mut rng);
                Candidate {
                    domain,
                    path: format!("/{slug}/page-{i}"),
                    relevance,
                }
            })
            .collect();
        let family_offsets: Vec<Vec<f64>> = families
            .iter()
            .map(|_| pool.iter().map(|_| family_noise.sample(&mut rng)).collect())
            .collect();

        let mut lists = Vec::with_capacity(config.engines.len());
        for engine in &config.engines {
            let noise = Normal::new(0.0, engine.noise.max(0.0)).expect("valid std-dev");
            let family_idx = engine
                .family
                .as_deref()
                .and_then(|f| families.iter().position(|g| *g == f));
            let mut perceived: Vec<(usize, f64)> = pool
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let mut score = c.relevance + noise.sample(&mut rng);
                    if let Some(f) = family_idx {
                        score += family_offsets[f][i];
                    }
                    if engine.own_domains.contains(&c.domain) {
                        score += engine.bias_boost;
                    }
                    (i, score)
                })
                .collect();
            perceived.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

            let mut len = engine.results.min(pool.len());
            if len > 1 && rng.random_bool(engine.short_list_prob.clamp(0.0, 1.0)) {
                len = rng.random_range(1..len);
            }
            let list = perceived[..len]
                .iter()
                .map(|&(i, _)| {
                    let canonical = pool[i].canonical();
                    let raw = if config.raw_variants && rng.random_bool(0.25) {
                        pool[i].raw(&mut rng)
                    } else {
                        canonical.clone()
                    };
                    (canonical, raw)
                })
                .collect();
            lists.push(list);
        }
        out.push((keyword.clone(), lists));
    }
    out
}

/// Raw records, keyword-major, engines in configuration order.
pub fn generate_records(config: &SynthConfig) -> Vec<RawSnapshotRecord> {
    generate(config)
        .into_iter()
        .flat_map(|(keyword, lists)| {
            config.engines.iter().zip(lists).map(move |(engine, list)| RawSnapshotRecord {
                engine: engine.name.clone(),
                keyword: keyword.clone(),
                captured_at: None,
                results: list.into_iter().map(|(_, raw)| raw).collect(),
            })
        })
        .collect()
}

/// Builds the corpus directly from canonical URLs, skipping canonicalization.
/// Lists longer than the CTR profile are truncated.
pub fn generate_corpus(config: &SynthConfig, ctr: &CtrProfile) -> Corpus {
    let engines: Vec<EngineId> = config
        .engines
        .iter()
        .map(|e| EngineId::new(&e.name).expect("engine name"))
        .collect();
    let mut keywords = Vec::new();
    let mut snapshots = Vec::new();
    for (keyword, lists) in generate(config) {
        let keyword = Keyword::new(&keyword).expect("keyword");
        for (engine, list) in engines.iter().zip(lists) {
            let results = list
                .into_iter()
                .take(ctr.len())
                .map(|(canonical, _)| PageId::from_canonical(canonical))
                .collect();
            snapshots.push(RankingSnapshot::new(engine.clone(), keyword.clone(), results));
        }
        keywords.push(keyword);
    }
    Corpus::from_parts(engines, keywords, snapshots, ctr.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonicalize::{canonical_url, CanonicalizationPolicy};
    use crate::model::validate_corpus;

    #[test]
    fn bundled_keyword_list() {
        let kws = bundled_keywords();
        assert_eq!(kws.len(), 99);
        assert!(kws.contains(&"how to cook quinoa".to_string()));
    }

    #[test]
    fn generation_is_deterministic() {
        let config = SynthConfig::nine_engine(42, bundled_keywords());
        assert_eq!(generate_records(&config), generate_records(&config));
        let other = SynthConfig::nine_engine(43, bundled_keywords());
        assert_ne!(generate_records(&config), generate_records(&other));
    }

    #[test]
    fn raw_variants_canonicalize_to_the_direct_corpus() {
        let config = SynthConfig::nine_engine(7, bundled_keywords()[..10].to_vec());
        let policy = CanonicalizationPolicy::default();
        for ((keyword, lists), records) in generate(&config)
            .into_iter()
            .zip(generate_records(&config).chunks(config.engines.len()))
        {
            for (list, record) in lists.iter().zip(records) {
                assert_eq!(record.keyword, keyword);
                for ((canonical, _), raw) in list.iter().zip(&record.results) {
                    assert_eq!(canonical_url(raw, &policy).unwrap().as_str(), canonical);
                }
            }
        }
    }

    #[test]
    fn random_corpora_are_valid() {
        for seed in 0..20 {
            let config = SynthConfig::random(seed, 1 + (seed as usize % 9), 1 + (seed as usize % 7));
            let corpus = generate_corpus(&config, &CtrProfile::default());
            assert!(validate_corpus(&corpus).is_empty(), "seed {seed}");
        }
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("How to cook  quinoa?"), "how-to-cook-quinoa");
        assert_eq!(slug("home-depot"), "home-depot");
    }
}

//! Consensus ranking and scoring of search engines from result-page
//! snapshots.
//!
//! Pages are scored by the click-through-rate-weighted visibility they get
//! across all engines; engines are scored by how much of that visibility
//! their own result lists capture; the consensus ranking orders pages by
//! score and upper-bounds every engine.
//!
//! ```
//! use serp_consensus::model::{Corpus, CtrProfile, EngineId, Keyword, PageId, RankingSnapshot};
//! use serp_consensus::scoring::ScoreTable;
//!
//! let kw = Keyword::new("weather").unwrap();
//! let page = |s: &str| PageId::from_canonical(s);
//! let engines = vec![EngineId::new("a").unwrap(), EngineId::new("b").unwrap()];
//! let snaps = vec![
//!     RankingSnapshot::new(engines[0].clone(), kw.clone(), vec![page("https://x.com/"), page("https://y.com/")]),
//!     RankingSnapshot::new(engines[1].clone(), kw.clone(), vec![page("https://y.com/"), page("https://z.com/")]),
//! ];
//! let corpus = Corpus::from_parts(engines, vec![kw], snaps, CtrProfile::default());
//! let table = ScoreTable::compute(&corpus).unwrap();
//! let ks = &table.keywords[0];
//! assert_eq!(ks.consensus[0], page("https://y.com/"));
//! assert!(ks.engines.iter().all(|&s| s <= ks.consensus_score));
//! ```

pub mod analysis;
pub mod canonicalize;
pub mod ingest;
pub mod model;
pub mod report;
pub mod scoring;
pub mod stats;
pub mod synth;

pub use model::{validate_corpus, Corpus, CtrProfile, EngineId, Keyword, PageId, RankingSnapshot, Violation};
pub use scoring::ScoreTable;

//! URL canonicalization: maps raw result URLs to stable [`PageId`]s so that
//! syntactically different links to the same page are counted once.
//!
//! Canonicalization is purely syntactic. Redirect-based identity is handled by
//! rewriting URLs from a recorded redirect map before they reach this module
//! (see [`crate::ingest::RedirectMapAdapter`]).

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::model::PageId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CanonicalizeError {
    #[error("malformed URL: {0:?}")]
    MalformedUrl(String),
}

/// Rules applied by [`canonical_url`]. Every rule can be switched off.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CanonicalizationPolicy {
    pub lowercase_host: bool,
    pub lowercase_path: bool,
    pub strip_fragment: bool,
    pub strip_tracking_params: bool,
    /// Query keys removed when `strip_tracking_params` is set. `*` matches any
    /// run of characters, so `utm_*` removes every UTM parameter.
    pub tracking_params: Vec<String>,
    /// Removes trailing slashes, except for the root path `/`.
    pub strip_trailing_slash: bool,
    /// `http` and `https` are written as `https`.
    pub collapse_scheme: bool,
    pub strip_default_port: bool,
    pub sort_query_params: bool,
    /// Removes any number of leading `www.` labels.
    pub strip_www: bool,
    /// Drops a server-side page extension (`.aspx`, `.php`, ...) from the last
    /// path segment, so `/FunFacts.aspx` and `/FunFacts` coincide.
    pub strip_page_extensions: bool,
    pub page_extensions: Vec<String>,
}

impl Default for CanonicalizationPolicy {
    fn default() -> Self {
        Self {
            lowercase_host: true,
            lowercase_path: true,
            strip_fragment: true,
            strip_tracking_params: true,
            tracking_params: ["utm_*", "gclid", "fbclid", "ref", "nav"]
                .map(String::from)
                .to_vec(),
            strip_trailing_slash: true,
            collapse_scheme: true,
            strip_default_port: true,
            sort_query_params: true,
            strip_www: true,
            strip_page_extensions: true,
            page_extensions: ["aspx", "asp", "php", "html", "htm", "jsp", "jspx", "shtml", "cfm"]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl CanonicalizationPolicy {
    /// No rewriting beyond what the URL parser itself normalizes.
    pub fn strict() -> Self {
        Self {
            lowercase_host: false,
            lowercase_path: false,
            strip_fragment: false,
            strip_tracking_params: false,
            tracking_params: Vec::new(),
            strip_trailing_slash: false,
            collapse_scheme: false,
            strip_default_port: false,
            sort_query_params: false,
            strip_www: false,
            strip_page_extensions: false,
            page_extensions: Vec::new(),
        }
    }

    fn is_tracking_param(&self, key: &str) -> bool {
        let key = key.to_ascii_lowercase();
        self.tracking_params
            .iter()
            .any(|pattern| glob_match(&pattern.to_ascii_lowercase(), &key))
    }
}

/// Glob match supporting `*` (any run) and `?` (any single char).
fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}

/// Canonical form of `raw` under `policy`.
///
/// Deterministic and idempotent: canonicalizing the output again returns it
/// unchanged.
pub fn canonical_url(raw: &str, policy: &CanonicalizationPolicy) -> Result<PageId, CanonicalizeError> {
    let mut current = single_pass(raw, policy)?;
    // Rewrites such as stripping `www.` can expose a host the parser
    // normalizes differently, so iterate to a fixed point.
    for _ in 0..4 {
        let next = single_pass(&current, policy)?;
        if next == current {
            break;
        }
        current = next;
    }
    Ok(PageId::from_canonical(current))
}

fn single_pass(raw: &str, policy: &CanonicalizationPolicy) -> Result<String, CanonicalizeError> {
    let malformed = || CanonicalizeError::MalformedUrl(raw.to_string());
    let url = Url::parse(raw.trim()).map_err(|_| malformed())?;
    if url.cannot_be_a_base() {
        return Err(malformed());
    }
    let host = url.host_str().filter(|h| !h.is_empty()).ok_or_else(malformed)?;

    let original_scheme = url.scheme().to_string();
    let is_web = original_scheme == "http" || original_scheme == "https";
    let scheme = if policy.collapse_scheme && is_web {
        "https"
    } else {
        original_scheme.as_str()
    };

    let mut host = if policy.lowercase_host {
        host.to_lowercase()
    } else {
        host.to_string()
    };
    if policy.strip_www {
        while host.len() > 4 && host[..4].eq_ignore_ascii_case("www.") {
            host.drain(..4);
        }
    }

    // The parser already drops the scheme's own default port.
    let port = match url.port() {
        Some(p) if policy.strip_default_port && policy.collapse_scheme && is_web && (p == 80 || p == 443) => None,
        other => other,
    };

    let mut path = url.path().to_string();
    if policy.lowercase_path {
        path = path.to_lowercase();
    }
    if policy.strip_trailing_slash {
        let trimmed = path.trim_end_matches('/');
        path = if trimmed.is_empty() {
            "/".to_string()
        } else {
            trimmed.to_string()
        };
    }
    if policy.strip_page_extensions {
        path = strip_extension(&path, &policy.page_extensions);
    }

    let query = url.query().map(|q| canonical_query(q, policy)).unwrap_or_default();

    let mut out = String::with_capacity(raw.len());
    out.push_str(scheme);
    out.push_str("://");
    if !url.username().is_empty() {
        out.push_str(url.username());
        if let Some(pw) = url.password() {
            out.push(':');
            out.push_str(pw);
        }
        out.push('@');
    }
    out.push_str(&host);
    if let Some(port) = port {
        out.push(':');
        out.push_str(&port.to_string());
    }
    out.push_str(&path);
    if !query.is_empty() {
        out.push('?');
        out.push_str(&query);
    }
    if !policy.strip_fragment {
        if let Some(frag) = url.fragment() {
            out.push('#');
            out.push_str(frag);
        }
    }
    Ok(out)
}

fn strip_extension(path: &str, extensions: &[String]) -> String {
    let (dir, last) = match path.rfind('/') {
        Some(i) => path.split_at(i + 1),
        None => ("", path),
    };
    let mut stem = last;
    // `page.php.html` loses both extensions.
    while let Some(dot) = stem.rfind('.') {
        let ext = &stem[dot + 1..];
        if dot == 0 || !extensions.iter().any(|e| e.eq_ignore_ascii_case(ext)) {
            break;
        }
        stem = &stem[..dot];
    }
    format!("{dir}{stem}")
}

/// Query string with tracking parameters removed and pairs optionally sorted
/// by key. Segments are kept in their encoded form.
fn canonical_query(query: &str, policy: &CanonicalizationPolicy) -> String {
    let mut segments: Vec<(&str, &str)> = query
        .split('&')
        .filter(|s| !s.is_empty())
        .map(|s| (s.split_once('=').map_or(s, |(k, _)| k), s))
        .filter(|(key, _)| {
            if !policy.strip_tracking_params {
                return true;
            }
            let decoded: String = url::form_urlencoded::parse(key.as_bytes())
                .next()
                .map(|(k, _)| k.into_owned())
                .unwrap_or_default();
            !policy.is_tracking_param(&decoded)
        })
        .collect();
    if policy.sort_query_params {
        segments.sort();
    }
    segments
        .iter()
        .map(|(_, segment)| *segment)
        .collect::<Vec<_>>()
        .join("&")
}

/// How result lists treat several pages from the same site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GroupingMode {
    #[default]
    KeepAll,
    /// Keep only the best-ranked page per scheme+host.
    #[serde(alias = "collapse-to-host-prefix")]
    #[value(alias = "collapse-to-host-prefix")]
    Collapse,
}

/// `scheme://host[:port]` prefix of a canonical URL.
pub fn host_prefix(page: &PageId) -> &str {
    let s = page.as_str();
    let start = s.find("://").map(|i| i + 3).unwrap_or(0);
    let end = s[start..]
        .find(['/', '?', '#'])
        .map(|i| start + i)
        .unwrap_or(s.len());
    &s[..end]
}

/// Applies subpage grouping to one ordered, deduplicated result list.
/// Survivors keep their relative order.
pub fn group_subpages(results: &[PageId], mode: GroupingMode) -> Vec<PageId> {
    match mode {
        GroupingMode::KeepAll => results.to_vec(),
        GroupingMode::Collapse => {
            let mut seen = HashSet::new();
            results
                .iter()
                .filter(|p| seen.insert(host_prefix(p)))
                .cloned()
                .collect()
        }
    }
}

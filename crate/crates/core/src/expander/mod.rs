//! Contextual query expansion.
//!
//! Noun and adjective query tokens are masked one at a time; a
//! [`MaskFillProvider`] proposes replacements for the mask. Predictions under
//! `k_thresh` are dropped, the rest are cleaned (punctuation, stopwords,
//! duplicates, terms already in the query) and appended to the query.

mod cooccurrence;
mod remote;

pub use cooccurrence::CooccurrenceProvider;
pub use remote::{FillMaskRequest, FillMaskResponse, RemoteMaskFill, WirePrediction};

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{is_expansion_candidate, tokenize, Analyzer, Token};
use crate::index::QueryTerms;

/// Literal mask marker used in masked query text.
pub const MASK_TOKEN: &str = "[MASK]";

/// A query with exactly one token replaced by [`MASK_TOKEN`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskedQuery {
    /// Original query text with the masked token's span replaced.
    pub text: String,
    /// Normalized token texts, [`MASK_TOKEN`] at `mask_position`.
    pub tokens: Vec<String>,
    pub mask_position: usize,
}

impl MaskedQuery {
    pub fn new(query: &str, tokens: &[Token], position: usize) -> Self {
        let t = &tokens[position];
        let text = format!("{}{MASK_TOKEN}{}", &query[..t.char_start], &query[t.char_end..]);
        MaskedQuery {
            text,
            tokens: tokens
                .iter()
                .enumerate()
                .map(|(i, t)| if i == position { MASK_TOKEN.to_string() } else { t.text.clone() })
                .collect(),
            mask_position: position,
        }
    }

    /// Unmasked tokens.
    pub fn context(&self) -> impl Iterator<Item = &str> {
        self.tokens
            .iter()
            .enumerate()
            .filter(move |&(i, _)| i != self.mask_position)
            .map(|(_, t)| t.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub token: String,
    pub confidence: f64,
}

/// Provider output: predictions sorted by confidence descending, at most
/// `top_n` of them, confidences in `[0, 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fill {
    pub predictions: Vec<Prediction>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("expansion provider unavailable: {0}")]
    Unavailable(String),
    #[error("expansion provider has not been trained")]
    Untrained,
}

/// Something that can fill a single `[MASK]` in a query.
pub trait MaskFillProvider: Send + Sync {
    fn fill(&self, query: &MaskedQuery, top_n: usize) -> Result<Fill, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpanderParams {
    pub enabled: bool,
    pub k_thresh: f64,
    pub top_n: usize,
    /// Query-side BM25 weight of expansion terms.
    pub term_weight: f64,
}

impl Default for ExpanderParams {
    fn default() -> Self {
        ExpanderParams {
            enabled: false,
            k_thresh: 0.5,
            top_n: 5,
            term_weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTerm {
    pub token: String,
    pub source_token: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedQuery {
    pub original_tokens: Vec<Token>,
    pub candidates: Vec<Token>,
    pub terms: Vec<ExpansionTerm>,
    /// Set when the provider failed and expansion was skipped.
    pub degraded: bool,
    pub warnings: Vec<String>,
}

impl ExpandedQuery {
    /// The query without expansion.
    pub fn unexpanded(query: &str, analyzer: &Analyzer) -> Self {
        ExpandedQuery {
            original_tokens: analyzer.analyze(query),
            candidates: Vec::new(),
            terms: Vec::new(),
            degraded: false,
            warnings: Vec::new(),
        }
    }

    /// Original word tokens followed by the expansion tokens.
    pub fn effective_terms(&self) -> Vec<String> {
        self.original_tokens
            .iter()
            .filter(|t| !t.is_punct())
            .map(|t| t.text.clone())
            .chain(self.terms.iter().map(|t| t.token.clone()))
            .collect()
    }

    /// BM25 query: original non-stopword terms at weight 1 plus expansion
    /// terms at `term_weight`.
    pub fn query_terms(&self, analyzer: &Analyzer, term_weight: f64) -> QueryTerms {
        let mut q = QueryTerms::new();
        for t in &self.original_tokens {
            if !t.is_punct() && !analyzer.is_stopword(&t.text) {
                q.add(&t.text, 1.0);
            }
        }
        for t in &self.terms {
            q.add(&t.token, term_weight);
        }
        q
    }
}

/// Tokens whose tag passes the noun/adjective gate, in query order.
pub fn select_candidates(tokens: &[Token]) -> Vec<Token> {
    tokens.iter().filter(|t| is_expansion_candidate(t)).cloned().collect()
}

/// Reduces a raw prediction to a single normalized index term, or `None` if
/// it is punctuation, a subword continuation (`##…`), several words, or a
/// stopword.
fn clean_prediction(raw: &str, analyzer: &Analyzer) -> Option<String> {
    let raw = raw.trim();
    if raw.starts_with("##") {
        return None;
    }
    let mut words = tokenize(raw).into_iter().filter(|t| !t.is_punct());
    let word = words.next()?;
    if words.next().is_some() || analyzer.is_stopword(&word.text) {
        return None;
    }
    Some(word.text)
}

pub fn expand_query(
    query: &str,
    analyzer: &Analyzer,
    provider: &dyn MaskFillProvider,
    params: &ExpanderParams,
) -> ExpandedQuery {
    let mut out = ExpandedQuery::unexpanded(query, analyzer);
    if !params.enabled {
        return out;
    }
    let positions: Vec<usize> = out
        .original_tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| is_expansion_candidate(t))
        .map(|(i, _)| i)
        .collect();
    out.candidates = positions.iter().map(|&i| out.original_tokens[i].clone()).collect();

    // one masked variant per candidate, always built from the original query
    let fills: Vec<Result<Fill, ProviderError>> = positions
        .par_iter()
        .map(|&i| provider.fill(&MaskedQuery::new(query, &out.original_tokens, i), params.top_n))
        .collect();

    let mut per_candidate = Vec::with_capacity(fills.len());
    for fill in fills {
        match fill {
            Ok(f) => {
                out.warnings.extend(f.warnings);
                per_candidate.push(f.predictions);
            }
            Err(e) => {
                tracing::warn!("query expansion skipped: {e}");
                out.warnings.push(format!("query expansion skipped: {e}"));
                out.degraded = true;
                return out;
            }
        }
    }

    let original: HashSet<&str> = out.original_tokens.iter().map(|t| t.text.as_str()).collect();
    let mut accepted: HashSet<String> = HashSet::new();
    let mut terms = Vec::new();
    for (cand, preds) in out.candidates.iter().zip(per_candidate) {
        for p in preds {
            if !(p.confidence >= params.k_thresh) {
                continue;
            }
            let Some(token) = clean_prediction(&p.token, analyzer) else {
                continue;
            };
            if original.contains(token.as_str()) || !accepted.insert(token.clone()) {
                continue;
            }
            terms.push(ExpansionTerm {
                token,
                source_token: cand.text.clone(),
                confidence: p.confidence.min(1.0),
            });
        }
    }
    out.terms = terms;
    out
}

//! Randomized mask-fill providers and the expansion invariants checked
//! against them.

use std::collections::HashSet;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Mutex;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use relqa_core::analysis::{is_expansion_candidate, tokenize, Analyzer, PosTag};
use relqa_core::expander::{
    expand_query, ExpanderParams, Fill, MaskFillProvider, MaskedQuery, Prediction, ProviderError, MASK_TOKEN,
};

pub const QUERY_WORDS: [&str; 24] = [
    "what", "products", "were", "created", "at", "apple", "?", "steve", "jobs", "fruit", "orchard", "red", "big",
    "computer", "the", "quickly", ",", "banana", "mac", "happiness", "famous", "engine", "car", "of",
];

/// Raw tokens a provider may return: ordinary words, stopwords, punctuation,
/// subword pieces, phrases, case variants and original-query words.
pub const PREDICTION_POOL: [&str; 26] = [
    "mac", "macintosh", "personal", "laptop", "ipod", "iphone", "Mac", "MACINTOSH", "the", "and", "of", "!", "...",
    "##ing", "##s", "new york", "apple", "products", "computer", "fruit", " tablet ", "café", "", "pear", "desk",
    "it's",
];

pub fn random_query(rng: &mut StdRng) -> String {
    let n = rng.random_range(1..=8);
    (0..n)
        .map(|_| QUERY_WORDS[rng.random_range(0..QUERY_WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Deterministic in (seed, masked text): repeated fills of the same masked
/// query return the same list, so runs at different thresholds see
/// identical predictions.
pub struct RandomProvider {
    pub seed: u64,
    pub calls: Mutex<Vec<String>>,
}

impl RandomProvider {
    pub fn new(seed: u64) -> Self {
        RandomProvider {
            seed,
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn predictions(&self, masked_text: &str, top_n: usize) -> Vec<Prediction> {
        let mut h = DefaultHasher::new();
        (self.seed, masked_text).hash(&mut h);
        let mut rng = StdRng::seed_from_u64(h.finish());
        let count = rng.random_range(0..=top_n + 3);
        let mut preds: Vec<Prediction> = (0..count)
            .map(|_| {
                let token = PREDICTION_POOL[rng.random_range(0..PREDICTION_POOL.len())].to_string();
                // exact grid values exercise the >= boundary
                let confidence = if rng.random_bool(0.3) {
                    f64::from(rng.random_range(0..=10u8)) / 10.0
                } else {
                    rng.random::<f64>()
                };
                Prediction { token, confidence }
            })
            .collect();
        preds.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        preds.truncate(top_n);
        preds
    }

    pub fn take_calls(&self) -> Vec<String> {
        std::mem::take(&mut *self.calls.lock().unwrap())
    }
}

impl MaskFillProvider for RandomProvider {
    fn fill(&self, query: &MaskedQuery, top_n: usize) -> Result<Fill, ProviderError> {
        self.calls.lock().unwrap().push(query.text.clone());
        Ok(Fill {
            predictions: self.predictions(&query.text, top_n),
            warnings: Vec::new(),
        })
    }
}

/// Independent statement of which predictions survive: confidence at least
/// `k_thresh`; after trimming, not a `##` piece; exactly one word token and
/// no more; not a stopword; not an original query word; first occurrence.
fn expected_terms(query: &str, analyzer: &Analyzer, provider: &RandomProvider, params: &ExpanderParams) -> Vec<(String, String)> {
    let tokens = analyzer.analyze(query);
    let original: HashSet<String> = tokens.iter().map(|t| t.text.clone()).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        if !matches!(t.pos, PosTag::Noun | PosTag::Adjective) {
            continue;
        }
        let masked = MaskedQuery::new(query, &tokens, i);
        for p in provider.predictions(&masked.text, params.top_n) {
            if p.confidence < params.k_thresh {
                continue;
            }
            let raw = p.token.trim();
            if raw.starts_with("##") {
                continue;
            }
            let words: Vec<String> = tokenize(raw)
                .into_iter()
                .filter(|w| w.text.chars().any(char::is_alphanumeric))
                .map(|w| w.text)
                .collect();
            if words.len() != 1 {
                continue;
            }
            let w = words[0].clone();
            if analyzer.is_stopword(&w) || original.contains(&w) || !seen.insert(w.clone()) {
                continue;
            }
            out.push((w, t.text.clone()));
        }
    }
    out
}

/// Runs expansion at `k_lo` and `k_hi` (k_lo ≤ k_hi) and checks threshold
/// monotonicity, gate soundness, cleanup completeness and query
/// preservation. Returns a description of the first violation.
pub fn check_expansion_invariants(
    query: &str,
    analyzer: &Analyzer,
    provider: &RandomProvider,
    k_lo: f64,
    k_hi: f64,
    top_n: usize,
) -> Result<(), String> {
    let run = |k: f64| {
        let params = ExpanderParams {
            enabled: true,
            k_thresh: k,
            top_n,
            term_weight: 1.0,
        };
        provider.take_calls();
        let e = expand_query(query, analyzer, provider, &params);
        (e, provider.take_calls(), params)
    };
    let (lo, lo_calls, lo_params) = run(k_lo);
    let (hi, _, hi_params) = run(k_hi);

    // threshold monotonicity
    let lo_set: HashSet<&str> = lo.terms.iter().map(|t| t.token.as_str()).collect();
    if let Some(t) = hi.terms.iter().find(|t| !lo_set.contains(t.token.as_str())) {
        return Err(format!("{query:?}: {:?} accepted at {k_hi} but not at {k_lo}", t.token));
    }

    for (e, calls, params) in [(&lo, Some(&lo_calls), &lo_params), (&hi, None, &hi_params)] {
        // query preservation
        if e.original_tokens != analyzer.analyze(query) {
            return Err(format!("{query:?}: original tokens altered"));
        }
        let originals: Vec<String> = e.original_tokens.iter().filter(|t| !t.is_punct()).map(|t| t.text.clone()).collect();
        let effective = e.effective_terms();
        if effective[..originals.len()] != originals[..] {
            return Err(format!("{query:?}: effective terms do not start with the original terms"));
        }

        // gate soundness
        let gated: Vec<_> = e.original_tokens.iter().filter(|t| is_expansion_candidate(t)).cloned().collect();
        if e.candidates != gated || e.candidates.iter().any(|c| !matches!(c.pos, PosTag::Noun | PosTag::Adjective)) {
            return Err(format!("{query:?}: candidates are not exactly the noun/adjective tokens"));
        }
        let sources: HashSet<&str> = e.candidates.iter().map(|c| c.text.as_str()).collect();
        if let Some(t) = e.terms.iter().find(|t| !sources.contains(t.source_token.as_str())) {
            return Err(format!("{query:?}: term {:?} sourced from non-candidate {:?}", t.token, t.source_token));
        }
        if let Some(calls) = calls {
            if calls.len() != e.candidates.len() || calls.iter().any(|c| c.matches(MASK_TOKEN).count() != 1) {
                return Err(format!("{query:?}: expected one single-mask fill per candidate, got {calls:?}"));
            }
        }

        // cleanup completeness, both directions
        let original: HashSet<&str> = e.original_tokens.iter().map(|t| t.text.as_str()).collect();
        let mut seen = HashSet::new();
        for t in &e.terms {
            let toks = tokenize(&t.token);
            let bad = t.confidence < params.k_thresh
                || analyzer.is_stopword(&t.token)
                || !t.token.chars().any(char::is_alphanumeric)
                || t.token.starts_with("##")
                || toks.len() != 1
                || toks[0].text != t.token
                || original.contains(t.token.as_str())
                || !seen.insert(t.token.as_str());
            if bad {
                return Err(format!("{query:?}: term {:?} violates cleanup", t.token));
            }
        }
        let got: Vec<(String, String)> = e.terms.iter().map(|t| (t.token.clone(), t.source_token.clone())).collect();
        let want = expected_terms(query, analyzer, provider, params);
        if got != want {
            return Err(format!("{query:?} at {}: terms {got:?}, expected {want:?}", params.k_thresh));
        }
        if e.degraded {
            return Err(format!("{query:?}: degraded without provider error"));
        }
    }
    Ok(())
}

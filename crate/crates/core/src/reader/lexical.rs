//! Model-free reader baseline.
//!
//! Candidate spans start at a token matching a question content term and
//! extend up to [`SPAN_WINDOW`] tokens (trailing punctuation trimmed). A
//! span's score is the idf mass of the distinct question terms it contains
//! divided by the idf mass of all question terms, so a span holding every
//! question term scores 1.0. Overlapping candidates are resolved greedily by
//! score; spans under [`SCORE_FLOOR`] are dropped. Attributions are the idf
//! of each matched token, max-normalized.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::{normalize_attributions, ReaderBackend, ReaderError, SpanPrediction, TokenAttribution};
use crate::analysis::{tokenize, Analyzer, Token};
use crate::index::Index;

pub const SPAN_WINDOW: usize = 15;
pub const SCORE_FLOOR: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct LexicalReader {
    analyzer: Analyzer,
    index: Option<Arc<Index>>,
}

impl LexicalReader {
    /// Uniform term weights.
    pub fn new(analyzer: Analyzer) -> Self {
        LexicalReader { analyzer, index: None }
    }

    /// Term weights from the index's BM25 idf.
    pub fn with_index(analyzer: Analyzer, index: Arc<Index>) -> Self {
        LexicalReader {
            analyzer,
            index: Some(index),
        }
    }

    pub fn term_idf(&self, term: &str) -> f64 {
        self.index.as_ref().map_or(1.0, |ix| ix.idf(term))
    }

    fn question_terms(&self, question: &str) -> BTreeSet<String> {
        self.analyzer.content_terms(question).into_iter().collect()
    }

    fn attributions(&self, tokens: &[Token], terms: &BTreeSet<String>) -> Vec<TokenAttribution> {
        let mut attrs: Vec<TokenAttribution> = tokens
            .iter()
            .map(|t| TokenAttribution {
                token: t.raw.clone(),
                weight: if terms.contains(&t.text) { self.term_idf(&t.text) } else { 0.0 },
            })
            .collect();
        normalize_attributions(&mut attrs);
        attrs
    }

    /// Every candidate span with its score, before overlap resolution and
    /// the score floor, in start order.
    pub fn candidates(&self, question: &str, context: &str) -> Vec<SpanPrediction> {
        let terms = self.question_terms(question);
        let mass: f64 = terms.iter().map(|t| self.term_idf(t)).sum();
        if terms.is_empty() || mass <= 0.0 {
            return Vec::new();
        }
        let tokens = tokenize(context);
        let mut out = Vec::new();
        for (i, tok) in tokens.iter().enumerate() {
            if !terms.contains(&tok.text) {
                continue;
            }
            let mut end = (i + SPAN_WINDOW).min(tokens.len());
            while end > i + 1 && tokens[end - 1].is_punct() {
                end -= 1;
            }
            let window = &tokens[i..end];
            let found: BTreeSet<&str> = window
                .iter()
                .filter(|t| terms.contains(&t.text))
                .map(|t| t.text.as_str())
                .collect();
            let overlap: f64 = terms
                .iter()
                .filter(|t| found.contains(t.as_str()))
                .map(|t| self.term_idf(t))
                .sum();
            let (start, stop) = (window[0].char_start, window[window.len() - 1].char_end);
            out.push(SpanPrediction {
                text: context[start..stop].to_string(),
                start,
                end: stop,
                score: overlap / mass,
                attributions: self.attributions(window, &terms),
            });
        }
        out
    }
}

impl ReaderBackend for LexicalReader {
    fn name(&self) -> &str {
        "lexical"
    }

    fn read(&self, question: &str, context: &str, top_k: usize) -> Result<Vec<SpanPrediction>, ReaderError> {
        let mut cands: Vec<SpanPrediction> = self
            .candidates(question, context)
            .into_iter()
            .filter(|s| s.score >= SCORE_FLOOR)
            .collect();
        cands.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.start.cmp(&b.start)));
        let mut chosen: Vec<SpanPrediction> = Vec::new();
        for c in cands {
            if chosen.len() >= top_k {
                break;
            }
            if chosen.iter().all(|s| c.end <= s.start || c.start >= s.end) {
                chosen.push(c);
            }
        }
        Ok(chosen)
    }

    fn explain(
        &self,
        question: &str,
        context: &str,
        start: usize,
        end: usize,
    ) -> Result<Vec<TokenAttribution>, ReaderError> {
        let terms = self.question_terms(question);
        let tokens: Vec<Token> = tokenize(context)
            .into_iter()
            .filter(|t| t.char_start >= start && t.char_end <= end)
            .collect();
        Ok(self.attributions(&tokens, &terms))
    }
}

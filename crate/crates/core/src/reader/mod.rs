//! Span extraction over passages of arbitrary length.
//!
//! A passage longer than the backend's window is cut into overlapping chunks
//! (`max_tokens` wide, `stride` apart). Each chunk goes to a
//! [`ReaderBackend`]; chunk-local spans are mapped back to passage offsets,
//! de-duplicated across overlapping chunks (highest score wins) and sorted.

mod lexical;
mod remote;

pub use lexical::{LexicalReader, SCORE_FLOOR, SPAN_WINDOW};
pub use remote::{RemoteReader, WireAnswer, WireAttribution, WireReadRequest, WireReadResponse};

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::tokenize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReaderError {
    #[error("invalid stride {stride} for max_tokens {max_tokens}: need 1 <= stride <= max_tokens")]
    InvalidStride { stride: usize, max_tokens: usize },
    #[error("reader backend unavailable: {0}")]
    BackendUnavailable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReaderParams {
    pub max_tokens: usize,
    pub stride: usize,
    pub top_k: usize,
}

impl Default for ReaderParams {
    fn default() -> Self {
        ReaderParams {
            max_tokens: 512,
            stride: 384,
            top_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_index: usize,
    pub token_start: usize,
    pub token_end: usize,
    /// Byte range of the chunk in the passage.
    pub char_start: usize,
    pub char_end: usize,
    pub text: String,
}

/// Token windows `[start, end)` at offsets `0, stride, 2·stride, …`, stopping
/// at the first window that reaches the end of the passage.
pub fn chunk_windows(
    n_tokens: usize,
    max_tokens: usize,
    stride: usize,
) -> Result<Vec<(usize, usize)>, ReaderError> {
    if stride == 0 || stride > max_tokens {
        return Err(ReaderError::InvalidStride { stride, max_tokens });
    }
    let mut windows = Vec::new();
    let mut start = 0;
    while start < n_tokens {
        let end = (start + max_tokens).min(n_tokens);
        windows.push((start, end));
        if end == n_tokens {
            break;
        }
        start += stride;
    }
    Ok(windows)
}

pub fn chunk(
    doc_id: &str,
    passage: &str,
    max_tokens: usize,
    stride: usize,
) -> Result<Vec<Chunk>, ReaderError> {
    let tokens = tokenize(passage);
    Ok(chunk_windows(tokens.len(), max_tokens, stride)?
        .into_iter()
        .enumerate()
        .map(|(i, (s, e))| {
            let (cs, ce) = (tokens[s].char_start, tokens[e - 1].char_end);
            Chunk {
                doc_id: doc_id.to_string(),
                chunk_index: i,
                token_start: s,
                token_end: e,
                char_start: cs,
                char_end: ce,
                text: passage[cs..ce].to_string(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAttribution {
    pub token: String,
    pub weight: f64,
}

/// Clamps negatives to zero and rescales so the largest weight is 1.0.
pub fn normalize_attributions(attrs: &mut [TokenAttribution]) {
    for a in attrs.iter_mut() {
        if !a.weight.is_finite() || a.weight < 0.0 {
            a.weight = 0.0;
        }
    }
    let max = attrs.iter().map(|a| a.weight).fold(0.0, f64::max);
    if max > 0.0 {
        for a in attrs.iter_mut() {
            a.weight /= max;
        }
    }
}

/// Reference combination of start/end token probabilities into a span score.
pub fn combine_start_end(start_prob: f64, end_prob: f64) -> f64 {
    (start_prob * end_prob).clamp(0.0, 1.0)
}

/// A span reported by a backend; `start..end` is a byte range into the
/// context it was given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanPrediction {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub score: f64,
    pub attributions: Vec<TokenAttribution>,
}

pub trait ReaderBackend: Send + Sync {
    fn name(&self) -> &str;

    fn read(&self, question: &str, context: &str, top_k: usize) -> Result<Vec<SpanPrediction>, ReaderError>;

    /// Attributions for the span `start..end` of `context`. The default reads
    /// the context and returns the attributions of the span with those exact
    /// offsets, if the backend produces it.
    fn explain(
        &self,
        question: &str,
        context: &str,
        start: usize,
        end: usize,
    ) -> Result<Vec<TokenAttribution>, ReaderError> {
        let spans = self.read(question, context, usize::MAX)?;
        Ok(spans
            .into_iter()
            .find(|s| s.start == start && s.end == end)
            .map(|s| s.attributions)
            .unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub text: String,
    pub score: f64,
    /// Source document tag.
    pub doc_id: String,
    pub chunk_index: usize,
    /// Byte range in the passage handed to the reader.
    pub passage_char_start: usize,
    pub passage_char_end: usize,
    /// Byte range in the original document body, when known.
    pub doc_char_start: Option<usize>,
    pub doc_char_end: Option<usize>,
    pub retrieval_rank: Option<usize>,
    pub attributions: Vec<TokenAttribution>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReadOutcome {
    pub answers: Vec<AnswerSpan>,
    pub backend_calls: usize,
    pub degraded: bool,
    pub warnings: Vec<String>,
}

/// Sort order for answers: score descending, then earlier passage offset,
/// then lower chunk index.
pub fn answer_order(a: &AnswerSpan, b: &AnswerSpan) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.passage_char_start.cmp(&b.passage_char_start))
        .then(a.chunk_index.cmp(&b.chunk_index))
}

pub fn read_passage(
    question: &str,
    doc_id: &str,
    passage: &str,
    backend: &dyn ReaderBackend,
    params: &ReaderParams,
) -> Result<ReadOutcome, ReaderError> {
    let chunks = chunk(doc_id, passage, params.max_tokens, params.stride)?;
    let results: Vec<Result<Vec<SpanPrediction>, ReaderError>> = chunks
        .par_iter()
        .map(|c| backend.read(question, &c.text, params.top_k))
        .collect();

    let mut outcome = ReadOutcome {
        backend_calls: chunks.len(),
        ..Default::default()
    };
    let mut best: HashMap<(usize, usize), AnswerSpan> = HashMap::new();
    for (c, res) in chunks.iter().zip(results) {
        let spans = match res {
            Ok(s) => s,
            Err(e) => {
                tracing::warn!("reader failed on {doc_id}: {e}");
                outcome.warnings.push(format!("reader failed on {doc_id}: {e}"));
                outcome.degraded = true;
                outcome.answers.clear();
                return Ok(outcome);
            }
        };
        for s in spans {
            let valid = s.start < s.end
                && s.end <= c.text.len()
                && c.text.is_char_boundary(s.start)
                && c.text.is_char_boundary(s.end)
                && s.score.is_finite();
            if !valid {
                outcome
                    .warnings
                    .push(format!("dropped out-of-range span {}..{} from {}", s.start, s.end, backend.name()));
                continue;
            }
            let (ps, pe) = (c.char_start + s.start, c.char_start + s.end);
            let mut attributions = s.attributions;
            normalize_attributions(&mut attributions);
            let answer = AnswerSpan {
                text: passage[ps..pe].to_string(),
                score: s.score.clamp(0.0, 1.0),
                doc_id: doc_id.to_string(),
                chunk_index: c.chunk_index,
                passage_char_start: ps,
                passage_char_end: pe,
                doc_char_start: None,
                doc_char_end: None,
                retrieval_rank: None,
                attributions,
            };
            match best.get(&(ps, pe)) {
                Some(prev) if prev.score >= answer.score => {}
                _ => {
                    best.insert((ps, pe), answer);
                }
            }
        }
    }
    let mut answers: Vec<AnswerSpan> = best.into_values().collect();
    answers.sort_by(answer_order);
    answers.truncate(params.top_k);
    outcome.answers = answers;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_with_overlap() {
        assert_eq!(
            chunk_windows(1200, 512, 384).unwrap(),
            vec![(0, 512), (384, 896), (768, 1200)]
        );
    }

    #[test]
    fn short_passage_single_chunk() {
        assert_eq!(chunk_windows(100, 512, 384).unwrap(), vec![(0, 100)]);
        assert!(chunk_windows(0, 512, 384).unwrap().is_empty());
    }

    #[test]
    fn stride_equal_to_window_tiles() {
        assert_eq!(chunk_windows(10, 4, 4).unwrap(), vec![(0, 4), (4, 8), (8, 10)]);
    }

    #[test]
    fn invalid_stride() {
        assert!(matches!(chunk_windows(10, 4, 5), Err(ReaderError::InvalidStride { .. })));
        assert!(matches!(chunk_windows(10, 4, 0), Err(ReaderError::InvalidStride { .. })));
    }

    #[test]
    fn chunk_text_matches_offsets() {
        let passage = "one two, three four five six.";
        let chunks = chunk("d", passage, 4, 2).unwrap();
        for c in &chunks {
            assert_eq!(&passage[c.char_start..c.char_end], c.text);
        }
        assert_eq!(chunks[0].text, "one two, three");
    }

    #[test]
    fn attribution_normalization() {
        let mut a = vec![
            TokenAttribution { token: "a".into(), weight: 0.5 },
            TokenAttribution { token: "b".into(), weight: -2.0 },
            TokenAttribution { token: "c".into(), weight: 0.25 },
        ];
        normalize_attributions(&mut a);
        let w: Vec<f64> = a.iter().map(|x| x.weight).collect();
        assert_eq!(w, vec![1.0, 0.0, 0.5]);
        let mut zeros = vec![TokenAttribution { token: "a".into(), weight: 0.0 }];
        normalize_attributions(&mut zeros);
        assert_eq!(zeros[0].weight, 0.0);
    }

    #[test]
    fn start_end_combiner() {
        assert_eq!(combine_start_end(0.5, 0.4), 0.2);
    }

    /// Reports a fixed span wherever a marker word occurs, with a score taken
    /// from the chunk's first token.
    struct Marker;
    impl ReaderBackend for Marker {
        fn name(&self) -> &str {
            "marker"
        }
        fn read(&self, _: &str, ctx: &str, _: usize) -> Result<Vec<SpanPrediction>, ReaderError> {
            let score = if ctx.starts_with('a') { 0.7 } else { 0.9 };
            Ok(ctx
                .match_indices("target")
                .map(|(i, m)| SpanPrediction {
                    text: m.into(),
                    start: i,
                    end: i + m.len(),
                    score,
                    attributions: vec![],
                })
                .collect())
        }
    }

    #[test]
    fn overlapping_chunks_keep_max_score() {
        // chunks: [a b target c] and [target c d e]
        let passage = "a b target c d e";
        let out = read_passage("q", "doc", passage, &Marker, &ReaderParams { max_tokens: 4, stride: 2, top_k: 5 }).unwrap();
        assert_eq!(out.backend_calls, 2);
        assert_eq!(out.answers.len(), 1);
        assert_eq!(out.answers[0].score, 0.9);
        assert_eq!(out.answers[0].text, "target");
        assert_eq!(out.answers[0].passage_char_start, 4);
    }

    struct Two;
    impl ReaderBackend for Two {
        fn name(&self) -> &str {
            "two"
        }
        fn read(&self, _: &str, ctx: &str, _: usize) -> Result<Vec<SpanPrediction>, ReaderError> {
            let score = if ctx.contains("low") { 0.5 } else { 0.8 };
            Ok(vec![SpanPrediction { text: String::new(), start: 0, end: 3, score, attributions: vec![] }])
        }
    }

    #[test]
    fn answers_sorted_by_score() {
        let passage = "low x y z high p q r";
        let out = read_passage("q", "d", passage, &Two, &ReaderParams { max_tokens: 4, stride: 4, top_k: 5 }).unwrap();
        let got: Vec<_> = out.answers.iter().map(|a| (a.text.as_str(), a.score)).collect();
        assert_eq!(got, vec![("hig", 0.8), ("low", 0.5)]);
    }

    struct Failing;
    impl ReaderBackend for Failing {
        fn name(&self) -> &str {
            "failing"
        }
        fn read(&self, _: &str, _: &str, _: usize) -> Result<Vec<SpanPrediction>, ReaderError> {
            Err(ReaderError::BackendUnavailable("down".into()))
        }
    }

    #[test]
    fn backend_failure_is_answerless_with_warning() {
        let out = read_passage("q", "d", "some text", &Failing, &ReaderParams::default()).unwrap();
        assert!(out.answers.is_empty());
        assert!(out.degraded);
        assert_eq!(out.warnings.len(), 1);
    }
}

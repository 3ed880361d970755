//! End-to-end question answering: expand → retrieve → condense → read.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::Analyzer;
use crate::config::{BackendKind, PipelineConfig, ProviderKind};
use crate::expander::{
    expand_query, CooccurrenceProvider, ExpandedQuery, ExpanderParams, MaskFillProvider, RemoteMaskFill,
};
use crate::index::{Bm25Params, Index, IndexError, QueryTerms, RetrievedHit};
use crate::reader::{
    read_passage, AnswerSpan, LexicalReader, ReaderBackend, ReaderError, ReaderParams, RemoteReader,
    TokenAttribution,
};
use crate::relsnip::{condense_with, highlight, CondensedPassage, Highlight, RelSnipParams};

/// Document tag given to answers read from a caller-supplied passage.
pub const CONTEXT_DOC_ID: &str = "context";

/// The knobs a single query runs with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub max_documents: usize,
    pub bm25: Bm25Params,
    pub relsnip: RelSnipParams,
    pub expander: ExpanderParams,
    pub reader: ReaderParams,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineConfig::default().settings()
    }
}

fn bad(field: &str, reason: impl Into<String>) -> Result<(), (String, String)> {
    Err((field.to_string(), reason.into()))
}

impl PipelineSettings {
    /// Checks every bound; on failure returns `(field, reason)`.
    pub fn validate(&self) -> Result<(), (String, String)> {
        if self.max_documents == 0 {
            return bad("max_documents", "must be >= 1");
        }
        if !(self.bm25.k1.is_finite() && self.bm25.k1 >= 0.0) {
            return bad("k1", "must be a finite number >= 0");
        }
        if !(0.0..=1.0).contains(&self.bm25.b) {
            return bad("b", format!("must lie in [0, 1], got {}", self.bm25.b));
        }
        if self.relsnip.k_frag == 0 {
            return bad("relsnip.k_frag", "must be >= 1");
        }
        if self.relsnip.n == 0 {
            return bad("relsnip.n", "must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.expander.k_thresh) {
            return bad(
                "expander.k_thresh",
                format!("must lie in [0, 1], got {}", self.expander.k_thresh),
            );
        }
        if self.expander.top_n == 0 {
            return bad("expander.top_n", "must be >= 1");
        }
        if !(self.expander.term_weight.is_finite() && self.expander.term_weight >= 0.0) {
            return bad("expander.term_weight", "must be a finite number >= 0");
        }
        if self.reader.max_tokens == 0 {
            return bad("reader.max_tokens", "must be >= 1");
        }
        if self.reader.stride == 0 || self.reader.stride > self.reader.max_tokens {
            return bad(
                "reader.stride",
                format!("must lie in [1, max_tokens={}], got {}", self.reader.max_tokens, self.reader.stride),
            );
        }
        if self.reader.top_k == 0 {
            return bad("reader.top_k", "must be >= 1");
        }
        Ok(())
    }

    /// A copy with `overrides` applied and re-validated.
    pub fn with_overrides(&self, overrides: &Overrides) -> Result<PipelineSettings, PipelineError> {
        let mut s = *self;
        if let Some(v) = overrides.max_documents {
            s.max_documents = v;
        }
        let r = &overrides.relsnip;
        s.relsnip.enabled = r.enabled.unwrap_or(s.relsnip.enabled);
        s.relsnip.k_frag = r.k_frag.unwrap_or(s.relsnip.k_frag);
        s.relsnip.n = r.n.unwrap_or(s.relsnip.n);
        let e = &overrides.expansion;
        s.expander.enabled = e.enabled.unwrap_or(s.expander.enabled);
        s.expander.k_thresh = e.k_thresh.unwrap_or(s.expander.k_thresh);
        s.expander.top_n = e.top_n.unwrap_or(s.expander.top_n);
        let rd = &overrides.reader;
        s.reader.max_tokens = rd.max_tokens.unwrap_or(s.reader.max_tokens);
        s.reader.stride = rd.stride.unwrap_or(s.reader.stride);
        s.reader.top_k = rd.top_k.unwrap_or(s.reader.top_k);
        s.validate()
            .map_err(|(field, reason)| PipelineError::InvalidOverride { field, reason })?;
        Ok(s)
    }
}

/// Per-request parameter overrides. Absent fields keep the configured value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Overrides {
    pub max_documents: Option<usize>,
    pub relsnip: RelSnipOverrides,
    pub expansion: ExpansionOverrides,
    pub reader: ReaderOverrides,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelSnipOverrides {
    pub enabled: Option<bool>,
    pub k_frag: Option<usize>,
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpansionOverrides {
    pub enabled: Option<bool>,
    pub k_thresh: Option<f64>,
    pub top_n: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReaderOverrides {
    pub max_tokens: Option<usize>,
    pub stride: Option<usize>,
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid override {field}: {reason}")]
    InvalidOverride { field: String, reason: String },
    /// Nothing to read: no context given and retrieval produced no document.
    #[error("no documents to read: {}", .warnings.join("; "))]
    NothingToRead { warnings: Vec<String> },
    #[error(transparent)]
    Reader(#[from] ReaderError),
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Wall-clock milliseconds per stage. Stages run one after another inside
/// `total_ms`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub expand_ms: f64,
    pub retrieve_ms: f64,
    pub condense_ms: f64,
    pub read_ms: f64,
    pub total_ms: f64,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// A retrieved document as shown to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentResult {
    pub doc_id: String,
    pub title: String,
    pub bm25_score: f64,
    pub rank: usize,
    pub token_count: usize,
    /// Tokens in the passage handed to the reader.
    pub passage_token_count: usize,
    pub condensed: bool,
    pub highlights: Vec<Highlight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub question: String,
    #[serde(default)]
    pub context: Option<String>,
    #[serde(default)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub answers: Vec<AnswerSpan>,
    pub documents: Vec<DocumentResult>,
    pub expansion: ExpandedQuery,
    pub timings: Timings,
    /// Reader backend calls made (one per chunk).
    pub reader_calls: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentsResponse {
    pub documents: Vec<DocumentResult>,
    pub expansion: ExpandedQuery,
    pub timings: Timings,
    pub warnings: Vec<String>,
}

/// Result of [`Pipeline::run`]: the response plus the retrieval ranking to
/// the requested depth.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub response: QueryResponse,
    pub ranking: Vec<RetrievedHit>,
}

/// Shared, immutable pipeline. Cloning is cheap.
#[derive(Clone)]
pub struct Pipeline {
    analyzer: Analyzer,
    index: Option<Arc<Index>>,
    expander: Arc<dyn MaskFillProvider>,
    reader: Arc<dyn ReaderBackend>,
    settings: PipelineSettings,
    warnings: Vec<String>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("documents", &self.index.as_ref().map_or(0, |ix| ix.len()))
            .field("reader", &self.reader.name())
            .field("settings", &self.settings)
            .finish()
    }
}

fn push_unique(into: &mut Vec<String>, items: impl IntoIterator<Item = String>) {
    for w in items {
        if !into.contains(&w) {
            into.push(w);
        }
    }
}

impl Pipeline {
    pub fn new(
        analyzer: Analyzer,
        index: Option<Arc<Index>>,
        expander: Arc<dyn MaskFillProvider>,
        reader: Arc<dyn ReaderBackend>,
        settings: PipelineSettings,
    ) -> Self {
        let index = index.map(|ix| {
            if ix.stats().params() == settings.bm25 {
                ix
            } else {
                Arc::new((*ix).clone().with_params(settings.bm25))
            }
        });
        Pipeline {
            analyzer,
            index,
            expander,
            reader,
            settings,
            warnings: Vec::new(),
        }
    }

    /// Builds providers and backends named by `config`. A missing index file
    /// leaves the pipeline in closed-domain mode with a warning; remote
    /// endpoints that fail their liveness probe are kept (requests degrade)
    /// and reported as warnings.
    pub fn from_config(config: &PipelineConfig, analyzer: Analyzer) -> Result<Pipeline, BuildError> {
        let mut warnings = Vec::new();
        let path = &config.retriever.index_path;
        let index = if path.exists() {
            Some(Arc::new(Index::load(path)?))
        } else {
            warnings.push(format!(
                "index {} not found; only requests with a context can be answered",
                path.display()
            ));
            None
        };

        let p = &config.expander.provider;
        let expander: Arc<dyn MaskFillProvider> = match p.kind {
            ProviderKind::Native => Arc::new(match &index {
                Some(ix) => CooccurrenceProvider::train_on_index(ix, &analyzer),
                None => CooccurrenceProvider::untrained(),
            }),
            ProviderKind::Remote => {
                let endpoint = p.endpoint.clone().unwrap_or_default();
                let remote = RemoteMaskFill::new(endpoint, Duration::from_millis(p.timeout_ms), p.max_in_flight);
                if !remote.probe() {
                    warnings.push(format!("expander endpoint {} is not reachable", remote.endpoint()));
                }
                Arc::new(remote)
            }
        };

        let b = &config.reader.backend;
        let reader: Arc<dyn ReaderBackend> = match b.kind {
            BackendKind::Lexical => Arc::new(match &index {
                Some(ix) => LexicalReader::with_index(analyzer.clone(), ix.clone()),
                None => LexicalReader::new(analyzer.clone()),
            }),
            BackendKind::Remote => {
                let endpoint = b.endpoint.clone().unwrap_or_default();
                let remote = RemoteReader::new(endpoint, Duration::from_millis(b.timeout_ms), b.max_in_flight);
                if !remote.probe() {
                    warnings.push(format!("reader endpoint {} is not reachable", remote.endpoint()));
                }
                Arc::new(remote)
            }
        };

        for w in &warnings {
            tracing::warn!("{w}");
        }
        let mut pipeline = Pipeline::new(analyzer, index, expander, reader, config.settings());
        pipeline.warnings = warnings;
        Ok(pipeline)
    }

    pub fn with_expander(mut self, expander: Arc<dyn MaskFillProvider>) -> Self {
        self.expander = expander;
        self
    }

    pub fn with_reader(mut self, reader: Arc<dyn ReaderBackend>) -> Self {
        self.reader = reader;
        self
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn index(&self) -> Option<&Arc<Index>> {
        self.index.as_ref()
    }

    pub fn reader(&self) -> &dyn ReaderBackend {
        self.reader.as_ref()
    }

    pub fn settings(&self) -> &PipelineSettings {
        &self.settings
    }

    /// Problems found while building (missing index, unreachable endpoints).
    pub fn startup_warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn expand(&self, question: &str, settings: &PipelineSettings) -> ExpandedQuery {
        expand_query(question, &self.analyzer, self.expander.as_ref(), &settings.expander)
    }

    fn document_result(&self, hit: &RetrievedHit, passage: &CondensedPassage, query: &QueryTerms, s: &PipelineSettings) -> DocumentResult {
        let ix = self.index.as_deref();
        let doc = ix.and_then(|ix| ix.document_by_id(&hit.doc_id)).expect("hit from index");
        DocumentResult {
            doc_id: hit.doc_id.clone(),
            title: doc.title.clone(),
            bm25_score: hit.bm25_score,
            rank: hit.rank,
            token_count: doc.token_count,
            passage_token_count: passage.token_count,
            condensed: passage.condensed,
            highlights: highlight(doc, query, &s.relsnip, ix, s.bm25),
        }
    }

    fn condense_hits(&self, hits: &[RetrievedHit], query: &QueryTerms, s: &PipelineSettings) -> Vec<CondensedPassage> {
        let ix = self.index.as_deref().expect("hits imply an index");
        hits.par_iter()
            .map(|h| {
                let doc = ix.document_by_id(&h.doc_id).expect("hit from index");
                condense_with(doc, query, &s.relsnip, Some(ix), s.bm25)
            })
            .collect()
    }

    /// Expansion, retrieval and highlighting without reading.
    pub fn documents(&self, question: &str, overrides: &Overrides) -> Result<DocumentsResponse, PipelineError> {
        let s = self.settings.with_overrides(overrides)?;
        let t0 = Instant::now();
        let expansion = self.expand(question, &s);
        let expand_ms = ms(t0.elapsed());
        let mut warnings = expansion.warnings.clone();

        let t1 = Instant::now();
        let query = expansion.query_terms(&self.analyzer, s.expander.term_weight);
        let hits = match &self.index {
            Some(ix) => ix.search(&query, s.max_documents),
            None => {
                warnings.push("no index loaded".to_string());
                Vec::new()
            }
        };
        let documents = hits
            .iter()
            .map(|h| {
                let doc = self.index.as_ref().and_then(|ix| ix.document_by_id(&h.doc_id)).expect("hit from index");
                let passage = CondensedPassage::identity(doc, &[]);
                self.document_result(h, &passage, &query, &s)
            })
            .collect();
        let retrieve_ms = ms(t1.elapsed());
        Ok(DocumentsResponse {
            documents,
            expansion,
            timings: Timings {
                expand_ms,
                retrieve_ms,
                condense_ms: 0.0,
                read_ms: 0.0,
                total_ms: ms(t0.elapsed()),
            },
            warnings,
        })
    }

    pub fn answer(&self, request: &QueryRequest) -> Result<QueryResponse, PipelineError> {
        let s = self.settings.with_overrides(&request.overrides)?;
        self.run(&request.question, request.context.as_deref(), &s, 0)
            .map(|o| o.response)
    }

    /// The full pipeline under explicit settings. `ranking_depth` asks for
    /// the retrieval ranking to at least that many documents (the reader
    /// still sees only `max_documents`). With a `context`, expansion and
    /// retrieval are skipped and the context is read whole.
    pub fn run(
        &self,
        question: &str,
        context: Option<&str>,
        s: &PipelineSettings,
        ranking_depth: usize,
    ) -> Result<RunOutput, PipelineError> {
        let t0 = Instant::now();
        let mut timings = Timings::default();
        let mut warnings = Vec::new();

        let (expansion, ranking, passages, documents) = match context {
            Some(ctx) => {
                let expansion = ExpandedQuery::unexpanded(question, &self.analyzer);
                let passage = (CONTEXT_DOC_ID.to_string(), ctx.to_string(), None, None);
                (expansion, Vec::new(), vec![passage], Vec::new())
            }
            None => {
                let te = Instant::now();
                let expansion = self.expand(question, s);
                timings.expand_ms = ms(te.elapsed());
                push_unique(&mut warnings, expansion.warnings.iter().cloned());

                let Some(ix) = self.index.as_deref() else {
                    push_unique(&mut warnings, ["no index loaded and no context given".to_string()]);
                    return Err(PipelineError::NothingToRead { warnings });
                };
                let tr = Instant::now();
                let query = expansion.query_terms(&self.analyzer, s.expander.term_weight);
                let ranking = ix.search(&query, s.max_documents.max(ranking_depth));
                timings.retrieve_ms = ms(tr.elapsed());
                let hits = &ranking[..ranking.len().min(s.max_documents)];
                if hits.is_empty() {
                    push_unique(&mut warnings, ["retrieval returned no documents".to_string()]);
                    return Err(PipelineError::NothingToRead { warnings });
                }

                let tc = Instant::now();
                let condensed = self.condense_hits(hits, &query, s);
                timings.condense_ms = ms(tc.elapsed());

                let documents: Vec<DocumentResult> = hits
                    .iter()
                    .zip(&condensed)
                    .map(|(h, p)| self.document_result(h, p, &query, s))
                    .collect();
                let passages = hits
                    .iter()
                    .zip(condensed)
                    .map(|(h, p)| (h.doc_id.clone(), p.text.clone(), Some(h.rank), Some(p)))
                    .collect();
                (expansion, ranking, passages, documents)
            }
        };

        let tr = Instant::now();
        let outcomes: Vec<_> = passages
            .par_iter()
            .map(|(doc_id, text, _, _)| read_passage(question, doc_id, text, self.reader.as_ref(), &s.reader))
            .collect();
        let mut answers = Vec::new();
        let mut reader_calls = 0;
        for ((_, _, rank, passage), outcome) in passages.iter().zip(outcomes) {
            let outcome = outcome?;
            reader_calls += outcome.backend_calls;
            push_unique(&mut warnings, outcome.warnings);
            for mut a in outcome.answers {
                a.retrieval_rank = *rank;
                match passage {
                    Some(p) => {
                        a.doc_char_start = p.to_document_offset(a.passage_char_start);
                        a.doc_char_end = p.to_document_offset(a.passage_char_end);
                    }
                    None => {
                        a.doc_char_start = Some(a.passage_char_start);
                        a.doc_char_end = Some(a.passage_char_end);
                    }
                }
                answers.push(a);
            }
        }
        answers.sort_by(|a: &AnswerSpan, b: &AnswerSpan| {
            b.score
                .total_cmp(&a.score)
                .then(a.retrieval_rank.cmp(&b.retrieval_rank))
                .then(a.passage_char_start.cmp(&b.passage_char_start))
                .then(a.chunk_index.cmp(&b.chunk_index))
        });
        answers.truncate(s.reader.top_k);
        timings.read_ms = ms(tr.elapsed());
        timings.total_ms = ms(t0.elapsed());

        Ok(RunOutput {
            response: QueryResponse {
                answers,
                documents,
                expansion,
                timings,
                reader_calls,
                warnings,
            },
            ranking,
        })
    }

    /// Attributions for `passage[start..end]` from the configured backend.
    pub fn explain(
        &self,
        question: &str,
        passage: &str,
        start: usize,
        end: usize,
    ) -> Result<Vec<TokenAttribution>, ReaderError> {
        let mut attrs = self.reader.explain(question, passage, start, end)?;
        crate::reader::normalize_attributions(&mut attrs);
        Ok(attrs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::Document;

    fn pipeline(docs: Vec<Document>) -> Pipeline {
        let analyzer = Analyzer::english();
        let ix = Arc::new(Index::ingest(docs).unwrap());
        Pipeline::new(
            analyzer.clone(),
            Some(ix.clone()),
            Arc::new(CooccurrenceProvider::train_on_index(&ix, &analyzer)),
            Arc::new(LexicalReader::with_index(analyzer, ix)),
            PipelineSettings::default(),
        )
    }

    fn fixture() -> Pipeline {
        pipeline(vec![
            Document::new("d1", "", "Apple makes the Mac computer."),
            Document::new("d2", "", "Bananas grow in tropical climates."),
            Document::new("d3", "", "An apple orchard grows apple trees."),
        ])
    }

    #[test]
    fn closed_domain_skips_retrieval() {
        let p = fixture();
        let out = p
            .answer(&QueryRequest {
                question: "who invented the telephone".into(),
                context: Some("Bell invented the telephone.".into()),
                overrides: Overrides::default(),
            })
            .unwrap();
        assert!(out.documents.is_empty());
        assert_eq!(out.answers[0].doc_id, CONTEXT_DOC_ID);
        assert_eq!(out.answers[0].text, "invented the telephone");
        assert_eq!(out.timings.retrieve_ms, 0.0);
    }

    #[test]
    fn open_domain_tags_answers() {
        let p = fixture();
        let out = p
            .answer(&QueryRequest {
                question: "which company makes the mac".into(),
                context: None,
                overrides: Overrides::default(),
            })
            .unwrap();
        assert_eq!(out.documents[0].doc_id, "d1");
        assert_eq!(out.answers[0].doc_id, "d1");
        assert_eq!(out.answers[0].retrieval_rank, Some(0));
        let doc = &p.index().unwrap().document_by_id("d1").unwrap().body;
        let a = &out.answers[0];
        assert_eq!(&doc[a.doc_char_start.unwrap()..a.doc_char_end.unwrap()], a.text);
    }

    #[test]
    fn empty_retrieval_is_nothing_to_read() {
        let p = fixture();
        let err = p
            .answer(&QueryRequest {
                question: "quantum chromodynamics".into(),
                context: None,
                overrides: Overrides::default(),
            })
            .unwrap_err();
        assert!(matches!(err, PipelineError::NothingToRead { .. }));
    }

    #[test]
    fn overrides_are_validated_and_scoped() {
        let p = fixture();
        let mut o = Overrides::default();
        o.reader.stride = Some(10_000);
        let err = p.settings().with_overrides(&o).unwrap_err();
        assert!(matches!(err, PipelineError::InvalidOverride { ref field, .. } if field == "reader.stride"));
        o.reader.stride = Some(8);
        o.reader.max_tokens = Some(16);
        let s = p.settings().with_overrides(&o).unwrap();
        assert_eq!(s.reader.max_tokens, 16);
        assert_eq!(p.settings().reader.max_tokens, 512);
    }

    #[test]
    fn stage_timings_nest() {
        let p = fixture();
        let out = p.run("apple", None, p.settings(), 10).unwrap().response;
        let t = out.timings;
        assert!(t.expand_ms + t.retrieve_ms + t.condense_ms + t.read_ms <= t.total_ms);
    }

    #[test]
    fn ranking_depth_exceeds_documents() {
        let p = fixture();
        let mut s = *p.settings();
        s.max_documents = 1;
        let out = p.run("apple grows", None, &s, 10).unwrap();
        assert_eq!(out.response.documents.len(), 1);
        let ids: Vec<_> = out.ranking.iter().map(|h| h.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["d3", "d1"]);
    }
}

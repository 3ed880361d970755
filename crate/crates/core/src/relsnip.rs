//! Relevant-snippet condensation.
//!
//! A long document is cut into fragments of `k_frag` tokens, each fragment is
//! BM25-scored as if the fragments were a small corpus of their own, and the
//! `n` best fragments are concatenated (in document order) into a short
//! passage for the reader. The index is never touched.

use serde::{Deserialize, Serialize};

use crate::analysis::{tokenize, Token};
use crate::index::{idf, tf_norm, Bm25Params, Document, Index, QueryTerms};

/// Separator placed between kept fragments.
pub const FRAGMENT_SEPARATOR: &str = "\n";

/// Where fragment df/avg_len/N come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FragmentStatistics {
    /// The fragment set of the document being condensed.
    #[default]
    Local,
    /// The global index statistics.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelSnipParams {
    pub enabled: bool,
    pub k_frag: usize,
    pub n: usize,
    pub statistics: FragmentStatistics,
}

impl Default for RelSnipParams {
    fn default() -> Self {
        RelSnipParams {
            enabled: true,
            k_frag: 100,
            n: 4,
            statistics: FragmentStatistics::Local,
        }
    }
}

impl RelSnipParams {
    /// Upper bound on the condensed passage length in tokens.
    pub fn max_tokens(&self) -> usize {
        self.k_frag * self.n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub doc_id: String,
    pub frag_index: usize,
    pub text: String,
    pub token_start: usize,
    pub token_end: usize,
    /// Byte range of the fragment in the document body.
    pub char_start: usize,
    pub char_end: usize,
    pub score: f64,
}

impl Fragment {
    pub fn token_len(&self) -> usize {
        self.token_end - self.token_start
    }
}

/// A fragment kept in a condensed passage, with offsets into both the
/// original body and the condensed text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsedFragment {
    pub frag_index: usize,
    pub token_start: usize,
    pub token_end: usize,
    pub doc_char_start: usize,
    pub doc_char_end: usize,
    pub passage_char_start: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedPassage {
    pub doc_id: String,
    pub text: String,
    pub fragments_used: Vec<UsedFragment>,
    pub token_count: usize,
    pub original_token_count: usize,
    /// False when the passage is the unmodified body.
    pub condensed: bool,
}

impl CondensedPassage {
    /// The whole body as a passage.
    pub fn identity(doc: &Document, fragments: &[Fragment]) -> Self {
        CondensedPassage {
            doc_id: doc.doc_id.clone(),
            text: doc.body.clone(),
            fragments_used: fragments
                .iter()
                .map(|f| UsedFragment {
                    frag_index: f.frag_index,
                    token_start: f.token_start,
                    token_end: f.token_end,
                    doc_char_start: f.char_start,
                    doc_char_end: f.char_end,
                    passage_char_start: f.char_start,
                    score: f.score,
                })
                .collect(),
            token_count: doc.token_count,
            original_token_count: doc.token_count,
            condensed: false,
        }
    }

    /// Maps a byte offset in the passage text back to the document body.
    pub fn to_document_offset(&self, passage_offset: usize) -> Option<usize> {
        if !self.condensed {
            return Some(passage_offset);
        }
        self.fragments_used.iter().find_map(|f| {
            let len = f.doc_char_end - f.doc_char_start;
            (passage_offset >= f.passage_char_start && passage_offset <= f.passage_char_start + len)
                .then(|| f.doc_char_start + (passage_offset - f.passage_char_start))
        })
    }
}

fn fragments_from_tokens(doc: &Document, tokens: &[Token], k_frag: usize) -> Vec<Fragment> {
    let k_frag = k_frag.max(1);
    tokens
        .chunks(k_frag)
        .enumerate()
        .map(|(i, chunk)| {
            let (start, end) = (chunk[0].char_start, chunk[chunk.len() - 1].char_end);
            Fragment {
                doc_id: doc.doc_id.clone(),
                frag_index: i,
                text: doc.body[start..end].to_string(),
                token_start: i * k_frag,
                token_end: i * k_frag + chunk.len(),
                char_start: start,
                char_end: end,
                score: 0.0,
            }
        })
        .collect()
}

/// Splits the body into consecutive fragments of `k_frag` tokens (the last
/// one may be shorter).
pub fn fragment(doc: &Document, k_frag: usize) -> Vec<Fragment> {
    fragments_from_tokens(doc, &tokenize(&doc.body), k_frag)
}

/// Statistics source for [`score_fragments_with`].
#[derive(Debug, Clone, Copy)]
pub enum StatsSource<'a> {
    Local,
    Global(&'a Index),
}

/// Scores fragments with BM25 over the fragment set (local statistics).
pub fn score_fragments(query: &QueryTerms, fragments: &[Fragment]) -> Vec<Fragment> {
    score_fragments_with(query, fragments, StatsSource::Local, Bm25Params::default())
}

pub fn score_fragments_with(
    query: &QueryTerms,
    fragments: &[Fragment],
    stats: StatsSource<'_>,
    params: Bm25Params,
) -> Vec<Fragment> {
    // per-fragment term frequencies over the query vocabulary
    let tfs: Vec<Vec<u32>> = fragments
        .iter()
        .map(|f| {
            let toks = tokenize(&f.text);
            query
                .iter()
                .map(|(term, _)| toks.iter().filter(|t| t.text == term).count() as u32)
                .collect()
        })
        .collect();

    let (doc_count, avg_len) = match stats {
        StatsSource::Local => {
            let total: usize = fragments.iter().map(Fragment::token_len).sum();
            (fragments.len(), total as f64 / fragments.len().max(1) as f64)
        }
        StatsSource::Global(index) => (index.stats().doc_count, index.stats().avg_doc_len),
    };
    let idfs: Vec<f64> = query
        .iter()
        .enumerate()
        .map(|(qi, (term, _))| match stats {
            StatsSource::Local => idf(doc_count, tfs.iter().filter(|tf| tf[qi] > 0).count()),
            StatsSource::Global(index) => index.idf(term),
        })
        .collect();

    fragments
        .iter()
        .zip(&tfs)
        .map(|(f, tf)| {
            let score = query
                .iter()
                .enumerate()
                .filter(|&(qi, _)| tf[qi] > 0)
                .map(|(qi, (_, w))| w * idfs[qi] * tf_norm(tf[qi], f.token_len() as u32, avg_len, params))
                .sum();
            Fragment { score, ..f.clone() }
        })
        .collect()
}

/// Indices of the `n` best fragments (score descending, earlier first on
/// ties), returned in document order.
pub fn select_top(fragments: &[Fragment], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fragments.len()).collect();
    order.sort_by(|&a, &b| fragments[b].score.total_cmp(&fragments[a].score).then(a.cmp(&b)));
    order.truncate(n);
    order.sort_unstable();
    order
}

pub fn condense(doc: &Document, query: &QueryTerms, params: &RelSnipParams) -> CondensedPassage {
    condense_with(doc, query, params, None, Bm25Params::default())
}

/// Condenses `doc`. Global statistics are used only when requested in
/// `params` and an index is supplied.
pub fn condense_with(
    doc: &Document,
    query: &QueryTerms,
    params: &RelSnipParams,
    index: Option<&Index>,
    bm25: Bm25Params,
) -> CondensedPassage {
    let tokens = tokenize(&doc.body);
    let fragments = fragments_from_tokens(doc, &tokens, params.k_frag);
    if !params.enabled || fragments.len() <= params.n {
        return CondensedPassage::identity(doc, &fragments);
    }
    let stats = match (params.statistics, index) {
        (FragmentStatistics::Global, Some(ix)) => StatsSource::Global(ix),
        _ => StatsSource::Local,
    };
    let scored = score_fragments_with(query, &fragments, stats, bm25);
    let keep = select_top(&scored, params.n);

    let mut text = String::new();
    let mut used = Vec::with_capacity(keep.len());
    for (i, &fi) in keep.iter().enumerate() {
        if i > 0 {
            text.push_str(FRAGMENT_SEPARATOR);
        }
        let f = &scored[fi];
        used.push(UsedFragment {
            frag_index: f.frag_index,
            token_start: f.token_start,
            token_end: f.token_end,
            doc_char_start: f.char_start,
            doc_char_end: f.char_end,
            passage_char_start: text.len(),
            score: f.score,
        });
        text.push_str(&f.text);
    }
    CondensedPassage {
        doc_id: doc.doc_id.clone(),
        token_count: used.iter().map(|u| u.token_end - u.token_start).sum(),
        original_token_count: tokens.len(),
        text,
        fragments_used: used,
        condensed: true,
    }
}

/// A scored fragment of a retrieved document together with the byte ranges
/// (in the document body) of query-term matches inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Highlight {
    pub frag_index: usize,
    pub char_start: usize,
    pub char_end: usize,
    pub score: f64,
    pub text: String,
    pub matches: Vec<[usize; 2]>,
}

/// The top `params.n` matching fragments of `doc`, in document order.
pub fn highlight(
    doc: &Document,
    query: &QueryTerms,
    params: &RelSnipParams,
    index: Option<&Index>,
    bm25: Bm25Params,
) -> Vec<Highlight> {
    let tokens = tokenize(&doc.body);
    let fragments = fragments_from_tokens(doc, &tokens, params.k_frag);
    let stats = match (params.statistics, index) {
        (FragmentStatistics::Global, Some(ix)) => StatsSource::Global(ix),
        _ => StatsSource::Local,
    };
    let scored = score_fragments_with(query, &fragments, stats, bm25);
    select_top(&scored, params.n)
        .into_iter()
        .map(|i| &scored[i])
        .filter(|f| f.score > 0.0)
        .map(|f| Highlight {
            frag_index: f.frag_index,
            char_start: f.char_start,
            char_end: f.char_end,
            score: f.score,
            text: f.text.clone(),
            matches: tokens[f.token_start..f.token_end]
                .iter()
                .filter(|t| query.contains(&t.text))
                .map(|t| [t.char_start, t.char_end])
                .collect(),
        })
        .collect()
}

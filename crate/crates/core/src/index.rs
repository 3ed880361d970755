//! In-memory inverted index with BM25 ranking.
//!
//! Title and body are indexed into one field (title tokens first). Scoring
//! uses the Lucene-style BM25 variant:
//!
//! ```text
//! idf(t)   = ln(1 + (N - df + 0.5) / (df + 0.5))
//! score    = Σ_t w(t) · idf(t) · tf·(k1 + 1) / (tf + k1·(1 - b + b·len/avg_len))
//! ```
//!
//! where the sum runs over *unique* query terms and `w(t)` is the query-side
//! term weight (1.0 unless expansion terms are down-weighted).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::analysis::{normalize, tokenize};

const MAGIC: &[u8; 4] = b"RQIX";
const END_MAGIC: &[u8; 4] = b"XIQR";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("duplicate document id {0:?}")]
    DuplicateDocId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus line {line}: {reason}")]
    BadCorpusLine { line: usize, reason: String },
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("index format mismatch: expected version {expected}, found {found}")]
    FormatVersionMismatch { expected: String, found: String },
    #[error("corrupt index: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`
pub fn idf(doc_count: usize, df: usize) -> f64 {
    let (n, df) = (doc_count as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// The saturated, length-normalized term frequency component.
pub fn tf_norm(tf: u32, len: u32, avg_len: f64, params: Bm25Params) -> f64 {
    let tf = tf as f64;
    let len_ratio = if avg_len > 0.0 { len as f64 / avg_len } else { 1.0 };
    tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * len_ratio))
}

/// A weighted set of normalized query terms. Adding a term twice keeps the
/// larger weight; scoring visits terms in lexicographic order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryTerms {
    terms: BTreeMap<String, f64>,
}

impl QueryTerms {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, term: &str, weight: f64) {
        let term = normalize(term);
        if term.is_empty() {
            return;
        }
        let w = self.terms.entry(term).or_insert(weight);
        if weight > *w {
            *w = weight;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.terms.iter().map(|(t, &w)| (t.as_str(), w))
    }

    pub fn contains(&self, term: &str) -> bool {
        self.terms.contains_key(term)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

impl<S: AsRef<str>> FromIterator<S> for QueryTerms {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut q = QueryTerms::new();
        for t in iter {
            q.add(t.as_ref(), 1.0);
        }
        q
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub body: String,
    /// Number of [`tokenize`] tokens in `body`.
    pub token_count: usize,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, title: impl Into<String>, body: impl Into<String>) -> Self {
        let body = body.into();
        Document {
            doc_id: doc_id.into(),
            title: title.into(),
            token_count: tokenize(&body).len(),
            body,
        }
    }
}

/// One line of the JSON-lines corpus format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: String,
}

pub fn read_corpus_jsonl(path: &Path) -> Result<Vec<Document>, IndexError> {
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| IndexError::BadCorpusLine {
            line: n + 1,
            reason: e.to_string(),
        })?;
        docs.push(Document::new(rec.id, rec.title, rec.body));
    }
    Ok(docs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostingList {
    pub term: String,
    /// `(doc_ordinal, term_frequency)`, sorted by ordinal.
    pub postings: Vec<(u32, u32)>,
}

impl PostingList {
    pub fn doc_frequency(&self) -> usize {
        self.postings.len()
    }

    pub fn tf(&self, ordinal: u32) -> u32 {
        self.postings
            .binary_search_by_key(&ordinal, |&(o, _)| o)
            .map_or(0, |i| self.postings[i].1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub doc_count: usize,
    pub avg_doc_len: f64,
    pub k1: f64,
    pub b: f64,
}

impl IndexStats {
    pub fn params(&self) -> Bm25Params {
        Bm25Params { k1: self.k1, b: self.b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedHit {
    pub doc_id: String,
    pub bm25_score: f64,
    pub rank: usize,
}

/// Immutable BM25 index. Build with [`Index::ingest`] or [`Index::load`].
#[derive(Debug, Clone)]
pub struct Index {
    docs: Vec<Document>,
    field_lens: Vec<u32>,
    postings: BTreeMap<String, PostingList>,
    by_id: HashMap<String, u32>,
    stats: IndexStats,
}

fn field_tokens(doc: &Document) -> impl Iterator<Item = crate::analysis::Token> {
    tokenize(&doc.title).into_iter().chain(tokenize(&doc.body))
}

impl Index {
    pub fn ingest(docs: impl IntoIterator<Item = Document>) -> Result<Index, IndexError> {
        Self::ingest_with(docs, Bm25Params::default())
    }

    pub fn ingest_with(
        docs: impl IntoIterator<Item = Document>,
        params: Bm25Params,
    ) -> Result<Index, IndexError> {
        let mut out_docs = Vec::new();
        let mut field_lens = Vec::new();
        let mut by_id = HashMap::new();
        let mut postings: BTreeMap<String, PostingList> = BTreeMap::new();

        for doc in docs {
            let ordinal = out_docs.len() as u32;
            if by_id.insert(doc.doc_id.clone(), ordinal).is_some() {
                return Err(IndexError::DuplicateDocId(doc.doc_id));
            }
            let mut len = 0u32;
            let mut tfs: BTreeMap<String, u32> = BTreeMap::new();
            for tok in field_tokens(&doc) {
                len += 1;
                if !tok.is_punct() {
                    *tfs.entry(tok.text).or_default() += 1;
                }
            }
            for (term, tf) in tfs {
                postings
                    .entry(term.clone())
                    .or_insert_with(|| PostingList {
                        term,
                        postings: Vec::new(),
                    })
                    .postings
                    .push((ordinal, tf));
            }
            field_lens.push(len);
            out_docs.push(doc);
        }
        if out_docs.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let stats = compute_stats(&field_lens, params);
        Ok(Index {
            docs: out_docs,
            field_lens,
            postings,
            by_id,
            stats,
        })
    }

    /// Returns a copy of this index scoring with different BM25 parameters.
    pub fn with_params(mut self, params: Bm25Params) -> Index {
        self.stats.k1 = params.k1;
        self.stats.b = params.b;
        self
    }

    pub fn stats(&self) -> &IndexStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn document(&self, ordinal: u32) -> Option<&Document> {
        self.docs.get(ordinal as usize)
    }

    pub fn document_by_id(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&o| &self.docs[o as usize])
    }

    pub fn ordinal(&self, doc_id: &str) -> Option<u32> {
        self.by_id.get(doc_id).copied()
    }

    /// Length of the indexed field (title + body tokens) of a document.
    pub fn field_len(&self, ordinal: u32) -> u32 {
        self.field_lens[ordinal as usize]
    }

    pub fn posting_list(&self, term: &str) -> Option<&PostingList> {
        self.postings.get(term)
    }

    pub fn doc_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, PostingList::doc_frequency)
    }

    /// BM25 idf of a term; terms absent from the index get the `df = 0` value.
    pub fn idf(&self, term: &str) -> f64 {
        idf(self.stats.doc_count, self.doc_frequency(term))
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn bm25_score(&self, query: &QueryTerms, ordinal: u32) -> f64 {
        let params = self.stats.params();
        let len = self.field_lens[ordinal as usize];
        query
            .iter()
            .filter_map(|(term, w)| {
                let pl = self.postings.get(term)?;
                let tf = pl.tf(ordinal);
                (tf > 0).then(|| {
                    w * idf(self.stats.doc_count, pl.doc_frequency())
                        * tf_norm(tf, len, self.stats.avg_doc_len, params)
                })
            })
            .sum()
    }

    /// Top `k` documents containing at least one query term, by score
    /// descending then doc id ascending.
    pub fn search(&self, query: &QueryTerms, k: usize) -> Vec<RetrievedHit> {
        let params = self.stats.params();
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for (term, w) in query.iter() {
            let Some(pl) = self.postings.get(term) else {
                continue;
            };
            let term_idf = idf(self.stats.doc_count, pl.doc_frequency());
            for &(ord, tf) in &pl.postings {
                let s = w * term_idf * tf_norm(tf, self.field_lens[ord as usize], self.stats.avg_doc_len, params);
                *scores.entry(ord).or_insert(0.0) += s;
            }
        }
        let mut ranked: Vec<(u32, f64)> = scores.into_iter().collect();
        ranked.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.docs[a.0 as usize].doc_id.cmp(&self.docs[b.0 as usize].doc_id))
        });
        ranked
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(rank, (ord, score))| RetrievedHit {
                doc_id: self.docs[ord as usize].doc_id.clone(),
                bm25_score: score,
                rank,
            })
            .collect()
    }

    /// Writes the single-file binary format (layout in `docs/index-format.md`).
    pub fn persist(&self, path: &Path) -> Result<(), IndexError> {
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            w.write_all(MAGIC)?;
            w.write_u8(FORMAT_VERSION)?;
            w.write_f64::<LittleEndian>(self.stats.k1)?;
            w.write_f64::<LittleEndian>(self.stats.b)?;
            w.write_u32::<LittleEndian>(self.docs.len() as u32)?;
            for (doc, &len) in self.docs.iter().zip(&self.field_lens) {
                write_str(&mut w, &doc.doc_id)?;
                write_str(&mut w, &doc.title)?;
                write_str(&mut w, &doc.body)?;
                w.write_u32::<LittleEndian>(doc.token_count as u32)?;
                w.write_u32::<LittleEndian>(len)?;
            }
            w.write_u32::<LittleEndian>(self.postings.len() as u32)?;
            for pl in self.postings.values() {
                write_str(&mut w, &pl.term)?;
                w.write_u32::<LittleEndian>(pl.postings.len() as u32)?;
                for &(ord, tf) in &pl.postings {
                    w.write_u32::<LittleEndian>(ord)?;
                    w.write_u32::<LittleEndian>(tf)?;
                }
            }
            w.write_all(END_MAGIC)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Index, IndexError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(IndexError::FormatVersionMismatch {
                expected: format!("{} v{FORMAT_VERSION}", String::from_utf8_lossy(MAGIC)),
                found: format!("magic {magic:02x?}"),
            });
        }
        let version = r.read_u8()?;
        if version != FORMAT_VERSION {
            return Err(IndexError::FormatVersionMismatch {
                expected: FORMAT_VERSION.to_string(),
                found: version.to_string(),
            });
        }
        let params = Bm25Params {
            k1: r.read_f64::<LittleEndian>()?,
            b: r.read_f64::<LittleEndian>()?,
        };
        let doc_count = r.read_u32::<LittleEndian>()? as usize;
        let mut docs = Vec::with_capacity(doc_count.min(1 << 20));
        let mut field_lens = Vec::with_capacity(doc_count.min(1 << 20));
        let mut by_id = HashMap::new();
        for ord in 0..doc_count {
            let doc_id = read_str(&mut r)?;
            let title = read_str(&mut r)?;
            let body = read_str(&mut r)?;
            let token_count = r.read_u32::<LittleEndian>()? as usize;
            field_lens.push(r.read_u32::<LittleEndian>()?);
            if by_id.insert(doc_id.clone(), ord as u32).is_some() {
                return Err(IndexError::Corrupt(format!("duplicate doc id {doc_id:?}")));
            }
            docs.push(Document {
                doc_id,
                title,
                body,
                token_count,
            });
        }
        let term_count = r.read_u32::<LittleEndian>()? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..term_count {
            let term = read_str(&mut r)?;
            let n = r.read_u32::<LittleEndian>()? as usize;
            if n == 0 {
                return Err(IndexError::Corrupt(format!("empty posting list for {term:?}")));
            }
            let mut list = Vec::with_capacity(n.min(doc_count));
            for _ in 0..n {
                let ord = r.read_u32::<LittleEndian>()?;
                let tf = r.read_u32::<LittleEndian>()?;
                if ord as usize >= doc_count || tf == 0 {
                    return Err(IndexError::Corrupt(format!("bad posting ({ord}, {tf}) for {term:?}")));
                }
                if list.last().is_some_and(|&(prev, _)| prev >= ord) {
                    return Err(IndexError::Corrupt(format!("unsorted postings for {term:?}")));
                }
                list.push((ord, tf));
            }
            postings.insert(term.clone(), PostingList { term, postings: list });
        }
        r.read_exact(&mut magic)?;
        if &magic != END_MAGIC {
            return Err(IndexError::Corrupt("missing end marker".into()));
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(IndexError::Corrupt("trailing bytes after end marker".into()));
        }
        if docs.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        let stats = compute_stats(&field_lens, params);
        Ok(Index {
            docs,
            field_lens,
            postings,
            by_id,
            stats,
        })
    }

    /// Distinct non-punctuation terms of a document, for tests and tooling.
    pub fn document_terms(&self, ordinal: u32) -> HashSet<String> {
        field_tokens(&self.docs[ordinal as usize])
            .filter(|t| !t.is_punct())
            .map(|t| t.text)
            .collect()
    }
}

fn compute_stats(field_lens: &[u32], params: Bm25Params) -> IndexStats {
    let total: u64 = field_lens.iter().map(|&l| l as u64).sum();
    IndexStats {
        doc_count: field_lens.len(),
        avg_doc_len: total as f64 / field_lens.len().max(1) as f64,
        k1: params.k1,
        b: params.b,
    }
}

fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str(r: &mut impl Read) -> Result<String, IndexError> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into());
    }
    String::from_utf8(buf).map_err(|e| IndexError::Corrupt(e.to_string()))
}

//! Brute-force reference implementations for property tests.
//!
//! Corpora generated here consist of lowercase ASCII words separated by
//! single spaces, so `split_whitespace` yields exactly the tokens the
//! library's tokenizer produces.

#![allow(dead_code)]

pub mod cqe;
pub mod reading;

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::Rng;

pub const VOCAB: [&str; 30] = [
    "apple", "mac", "fruit", "orchard", "banana", "computer", "engine", "car", "river", "stone", "lamp", "glass",
    "pillow", "cloud", "tiger", "maple", "ocean", "piano", "violin", "garden", "pepper", "silver", "rocket", "planet",
    "forest", "candle", "marble", "pencil", "tunnel", "wagon",
];

pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

/// ln(1 + (N − df + 0.5)/(df + 0.5)), written out independently.
pub fn oracle_idf(n: f64, df: f64) -> f64 {
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// BM25 of every document for the distinct terms of `query`, summing terms
/// in sorted order.
pub fn bm25_all(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avg = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let terms: BTreeSet<&String> = query.iter().collect();
    docs.iter()
        .map(|d| {
            let mut score = 0.0;
            for t in &terms {
                let tf = d.iter().filter(|w| w == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|x| x.contains(t)).count() as f64;
                let len = d.len() as f64;
                score += oracle_idf(n, df) * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * len / avg));
            }
            score
        })
        .collect()
}

/// Documents containing at least one query term, by score descending then
/// id ascending, first `k`.
pub fn brute_search(
    ids: &[String],
    docs: &[Vec<String>],
    query: &[String],
    k: usize,
    k1: f64,
    b: f64,
) -> Vec<(String, f64)> {
    let scores = bm25_all(docs, query, k1, b);
    let mut hits: Vec<(String, f64)> = ids
        .iter()
        .zip(docs)
        .zip(scores)
        .filter(|((_, d), _)| query.iter().any(|t| d.contains(t)))
        .map(|((id, _), s)| (id.clone(), s))
        .collect();
    hits.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    hits.truncate(k);
    hits
}

pub fn random_words(rng: &mut StdRng, vocab: &[&str], len: usize) -> Vec<String> {
    (0..len).map(|_| vocab[rng.random_range(0..vocab.len())].to_string()).collect()
}

/// Up to `max_docs` documents (ids `doc0`, `doc1`, …) of 0–`max_len` words
/// from the first `vocab_size` vocabulary words.
pub fn random_corpus(rng: &mut StdRng, max_docs: usize, vocab_size: usize, max_len: usize) -> Vec<(String, Vec<String>)> {
    let n = rng.random_range(1..=max_docs);
    let vocab = &VOCAB[..vocab_size];
    (0..n)
        .map(|i| {
            let len = rng.random_range(0..=max_len);
            (format!("doc{i}"), random_words(rng, vocab, len))
        })
        .collect()
}

pub fn random_query(rng: &mut StdRng, vocab_size: usize) -> Vec<String> {
    let len = rng.random_range(1..=4);
    random_words(rng, &VOCAB[..vocab_size], len)
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Fragment indices kept by exhaustive search: the `n`-subset of maximal
/// total BM25 score (fragments scored as their own corpus), ties resolved
/// toward the lexicographically smallest index set.
pub fn brute_kept_fragments(tokens: &[String], k_frag: usize, n: usize, query: &[String]) -> Vec<usize> {
    let frags: Vec<Vec<String>> = tokens.chunks(k_frag).map(<[String]>::to_vec).collect();
    if frags.len() <= n {
        return (0..frags.len()).collect();
    }
    let scores = bm25_all(&frags, query, 1.2, 0.75);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in combinations(frags.len(), n) {
        let total: f64 = subset.iter().map(|&i| scores[i]).sum();
        match &best {
            Some((s, _)) if total <= *s + 1e-9 => {}
            _ => best = Some((total, subset)),
        }
    }
    best.unwrap().1
}

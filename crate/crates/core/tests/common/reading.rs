//! Chunking and read-passage invariants.

use relqa_core::analysis::tokenize;
use relqa_core::reader::{chunk, chunk_windows, read_passage, LexicalReader, ReaderBackend, ReaderParams, SPAN_WINDOW};

/// Windows start at multiples of `stride`, are at most `max_tokens` wide,
/// overlap by `max_tokens - stride`, stop at the first window reaching the
/// end, and cover every token.
pub fn check_chunk_windows(len: usize, max_tokens: usize, stride: usize) -> Result<(), String> {
    let w = chunk_windows(len, max_tokens, stride).map_err(|e| e.to_string())?;
    let ctx = format!("len={len} max={max_tokens} stride={stride}");
    if len == 0 {
        return if w.is_empty() { Ok(()) } else { Err(format!("{ctx}: chunks for empty passage")) };
    }
    let mut covered = vec![false; len];
    for (i, &(s, e)) in w.iter().enumerate() {
        if s != i * stride {
            return Err(format!("{ctx}: chunk {i} starts at {s}"));
        }
        if e <= s || e - s > max_tokens || e > len {
            return Err(format!("{ctx}: chunk {i} is {s}..{e}"));
        }
        if i + 1 < w.len() {
            if e != s + max_tokens {
                return Err(format!("{ctx}: non-final chunk {i} is short"));
            }
            let overlap = e.saturating_sub(w[i + 1].0);
            if overlap != max_tokens - stride {
                return Err(format!("{ctx}: overlap {overlap} after chunk {i}"));
            }
        } else if e != len {
            return Err(format!("{ctx}: last chunk ends at {e}"));
        }
        covered[s..e].iter_mut().for_each(|c| *c = true);
    }
    if w[..w.len() - 1].iter().any(|&(_, e)| e >= len) {
        return Err(format!("{ctx}: chunking continued past the end"));
    }
    match covered.iter().position(|c| !c) {
        Some(t) => Err(format!("{ctx}: token {t} uncovered")),
        None => Ok(()),
    }
}

/// Reads `passage` with the lexical backend and checks offset correctness,
/// ordering, dedup, attribution normalization and global-max preservation.
pub fn check_read_passage(
    reader: &LexicalReader,
    question: &str,
    passage: &str,
    params: &ReaderParams,
) -> Result<(), String> {
    let out = read_passage(question, "p", passage, reader, params).map_err(|e| e.to_string())?;
    let ctx = format!("{question:?} max={} stride={}", params.max_tokens, params.stride);
    let chunks = chunk("p", passage, params.max_tokens, params.stride).map_err(|e| e.to_string())?;
    if out.backend_calls != chunks.len() {
        return Err(format!("{ctx}: {} calls for {} chunks", out.backend_calls, chunks.len()));
    }
    if out.answers.len() > params.top_k {
        return Err(format!("{ctx}: more than top_k answers"));
    }
    for a in &out.answers {
        if passage.get(a.passage_char_start..a.passage_char_end) != Some(a.text.as_str()) {
            return Err(format!("{ctx}: answer {:?} not at {}..{}", a.text, a.passage_char_start, a.passage_char_end));
        }
        let c = &chunks[a.chunk_index];
        if a.passage_char_start < c.char_start || a.passage_char_end > c.char_end {
            return Err(format!("{ctx}: answer outside its chunk"));
        }
        if !(0.0..=1.0).contains(&a.score) {
            return Err(format!("{ctx}: score {}", a.score));
        }
        let max = a.attributions.iter().map(|t| t.weight).fold(0.0, f64::max);
        if !a.attributions.is_empty() && max > 0.0 && max != 1.0 {
            return Err(format!("{ctx}: attribution max {max}"));
        }
    }
    for w in out.answers.windows(2) {
        let ordered = w[0].score > w[1].score
            || (w[0].score == w[1].score
                && (w[0].passage_char_start, w[0].chunk_index) <= (w[1].passage_char_start, w[1].chunk_index));
        if !ordered {
            return Err(format!("{ctx}: answers out of order"));
        }
        if (w[0].passage_char_start, w[0].passage_char_end) == (w[1].passage_char_start, w[1].passage_char_end) {
            return Err(format!("{ctx}: duplicate span"));
        }
    }

    // global max over every chunk-level span
    let mut chunk_max: Option<f64> = None;
    for c in &chunks {
        for s in reader.read(question, &c.text, params.top_k).map_err(|e| e.to_string())? {
            chunk_max = Some(chunk_max.map_or(s.score, |m: f64| m.max(s.score)));
        }
    }
    let top = out.answers.first().map(|a| a.score);
    if top != chunk_max {
        return Err(format!("{ctx}: top {top:?} vs chunk max {chunk_max:?}"));
    }

    // with enough overlap every candidate window sits wholly inside a chunk,
    // so chunking loses nothing against reading the passage in one piece
    if params.max_tokens - params.stride >= SPAN_WINDOW {
        let whole = reader
            .candidates(question, passage)
            .into_iter()
            .map(|s| s.score)
            .filter(|&s| s >= relqa_core::reader::SCORE_FLOOR)
            .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.max(s))));
        if top != whole {
            return Err(format!("{ctx}: top {top:?} vs unchunked max {whole:?}"));
        }
    }
    if tokenize(passage).is_empty() && !out.answers.is_empty() {
        return Err(format!("{ctx}: answers from an empty passage"));
    }
    Ok(())
}

//! Retrieval and answer-quality evaluation over a labeled dataset.
//!
//! Every configuration runs the full pipeline on every example. Reported per
//! configuration: recall@{1,5,10} of the gold document, exact match and
//! token F1 of the top answer, per-stage latency mean/median, and the total
//! number of reader backend calls. Report columns are listed in
//! [`REPORT_COLUMNS`].

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::expander::{CooccurrenceProvider, MaskFillProvider, RemoteMaskFill};
use crate::pipeline::{Pipeline, PipelineError, PipelineSettings, Timings};

pub mod suites;

/// Ranking depth needed for recall@10.
pub const RECALL_DEPTH: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalExample {
    pub question: String,
    #[serde(rename = "answer")]
    pub gold_answer: String,
    #[serde(rename = "doc_id")]
    pub gold_doc_id: String,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid dataset: {0}")]
    DatasetInvalid(String),
    #[error("i/o failure on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a JSON-lines dataset of `{"question", "answer", "doc_id"}`.
pub fn read_dataset(path: &Path) -> Result<Vec<EvalExample>, EvalError> {
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: EvalExample = serde_json::from_str(&line)
            .map_err(|e| EvalError::DatasetInvalid(format!("line {}: {e}", n + 1)))?;
        if ex.question.trim().is_empty() || ex.gold_doc_id.is_empty() {
            return Err(EvalError::DatasetInvalid(format!(
                "line {}: question and doc_id must be nonempty",
                n + 1
            )));
        }
        out.push(ex);
    }
    if out.is_empty() {
        return Err(EvalError::DatasetInvalid("dataset has no examples".into()));
    }
    Ok(out)
}

/// Lowercase, punctuation removed, articles removed, whitespace collapsed.
pub fn normalize_answer(s: &str) -> String {
    let lowered: String = s
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    lowered
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(prediction: &str, gold: &str) -> f64 {
    f64::from(u8::from(normalize_answer(prediction) == normalize_answer(gold)))
}

/// Token-overlap F1 between normalized answers.
pub fn f1_score(prediction: &str, gold: &str) -> f64 {
    let p = normalize_answer(prediction);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return f64::from(u8::from(pt == gt));
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pt.len() as f64;
    let recall = common as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// How queries are expanded under a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExpansionStrategy {
    Off,
    /// Co-occurrence fill-mask provider trained on the indexed corpus.
    NativeCqe,
    RemoteCqe { endpoint: String, timeout_ms: u64 },
    /// Static word-embedding neighbours. Not shipped.
    Word2Vec,
    /// Relevance-model feedback. Not shipped.
    Rm3,
}

impl ExpansionStrategy {
    pub fn label(&self) -> &'static str {
        match self {
            ExpansionStrategy::Off => "bm25",
            ExpansionStrategy::NativeCqe => "cqe-native",
            ExpansionStrategy::RemoteCqe { .. } => "cqe-remote",
            ExpansionStrategy::Word2Vec => "word2vec",
            ExpansionStrategy::Rm3 => "rm3",
        }
    }

    pub fn shipped(&self) -> bool {
        !matches!(self, ExpansionStrategy::Word2Vec | ExpansionStrategy::Rm3)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalConfiguration {
    pub expansion: ExpansionStrategy,
    pub relsnip: bool,
}

impl EvalConfiguration {
    pub fn label(&self) -> String {
        format!(
            "{}+relsnip-{}",
            self.expansion.label(),
            if self.relsnip { "on" } else { "off" }
        )
    }
}

/// {off, native CQE, remote CQE if an endpoint is given} × {RelSnip off, on}.
pub fn standard_configurations(remote: Option<(&str, u64)>) -> Vec<EvalConfiguration> {
    let mut strategies = vec![ExpansionStrategy::Off, ExpansionStrategy::NativeCqe];
    if let Some((endpoint, timeout_ms)) = remote {
        strategies.push(ExpansionStrategy::RemoteCqe {
            endpoint: endpoint.to_string(),
            timeout_ms,
        });
    }
    strategies
        .into_iter()
        .flat_map(|expansion| {
            [false, true].map(|relsnip| EvalConfiguration {
                expansion: expansion.clone(),
                relsnip,
            })
        })
        .collect()
}

/// One configuration's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub config_label: String,
    pub examples: usize,
    pub recall_at_1: f64,
    pub recall_at_5: f64,
    pub recall_at_10: f64,
    pub answer_em: f64,
    pub answer_f1: f64,
    pub mean_expand_ms: f64,
    pub median_expand_ms: f64,
    pub mean_retrieve_ms: f64,
    pub median_retrieve_ms: f64,
    pub mean_condense_ms: f64,
    pub median_condense_ms: f64,
    pub mean_read_ms: f64,
    pub median_read_ms: f64,
    pub mean_total_ms: f64,
    pub median_total_ms: f64,
    pub reader_chunks_total: usize,
}

pub const REPORT_COLUMNS: [&str; 18] = [
    "config_label",
    "examples",
    "recall_at_1",
    "recall_at_5",
    "recall_at_10",
    "answer_em",
    "answer_f1",
    "mean_expand_ms",
    "median_expand_ms",
    "mean_retrieve_ms",
    "median_retrieve_ms",
    "mean_condense_ms",
    "median_condense_ms",
    "mean_read_ms",
    "median_read_ms",
    "mean_total_ms",
    "median_total_ms",
    "reader_chunks_total",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Gold document ids absent from the index; their examples were skipped.
    pub missing_gold_docs: Vec<String>,
    pub skipped_examples: usize,
    /// Labels of requested strategies that are not shipped.
    pub not_shipped: Vec<String>,
}

/// Outcome of one example under one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleResult {
    /// 0-based rank of the gold document, if retrieved within the depth.
    pub gold_rank: Option<usize>,
    pub em: f64,
    pub f1: f64,
    /// `None` when nothing could be read.
    pub timings: Option<Timings>,
    pub reader_calls: usize,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn aggregate(label: String, results: &[ExampleResult]) -> EvalRow {
    let n = results.len().max(1) as f64;
    let recall = |k: usize| results.iter().filter(|r| r.gold_rank.is_some_and(|g| g < k)).count() as f64 / n;
    let timings: Vec<Timings> = results.iter().filter_map(|r| r.timings).collect();
    let stage = |f: fn(&Timings) -> f64| {
        let xs: Vec<f64> = timings.iter().map(f).collect();
        (mean(&xs), median(&xs))
    };
    let (mean_expand_ms, median_expand_ms) = stage(|t| t.expand_ms);
    let (mean_retrieve_ms, median_retrieve_ms) = stage(|t| t.retrieve_ms);
    let (mean_condense_ms, median_condense_ms) = stage(|t| t.condense_ms);
    let (mean_read_ms, median_read_ms) = stage(|t| t.read_ms);
    let (mean_total_ms, median_total_ms) = stage(|t| t.total_ms);
    let row = EvalRow {
        config_label: label,
        examples: results.len(),
        recall_at_1: recall(1),
        recall_at_5: recall(5),
        recall_at_10: recall(10),
        answer_em: results.iter().map(|r| r.em).sum::<f64>() / n,
        answer_f1: results.iter().map(|r| r.f1).sum::<f64>() / n,
        mean_expand_ms,
        median_expand_ms,
        mean_retrieve_ms,
        median_retrieve_ms,
        mean_condense_ms,
        median_condense_ms,
        mean_read_ms,
        median_read_ms,
        mean_total_ms,
        median_total_ms,
        reader_chunks_total: results.iter().map(|r| r.reader_calls).sum(),
    };
    assert!(row.recall_at_1 <= row.recall_at_5 && row.recall_at_5 <= row.recall_at_10);
    row
}

fn evaluate_example(
    pipeline: &Pipeline,
    settings: &PipelineSettings,
    ex: &EvalExample,
) -> Result<ExampleResult, EvalError> {
    match pipeline.run(&ex.question, None, settings, RECALL_DEPTH) {
        Ok(out) => {
            let top = out.response.answers.first().map_or("", |a| a.text.as_str());
            Ok(ExampleResult {
                gold_rank: out
                    .ranking
                    .iter()
                    .take(RECALL_DEPTH)
                    .position(|h| h.doc_id == ex.gold_doc_id),
                em: exact_match(top, &ex.gold_answer),
                f1: f1_score(top, &ex.gold_answer),
                timings: Some(out.response.timings),
                reader_calls: out.response.reader_calls,
            })
        }
        Err(PipelineError::NothingToRead { .. }) => Ok(ExampleResult {
            gold_rank: None,
            em: exact_match("", &ex.gold_answer),
            f1: f1_score("", &ex.gold_answer),
            timings: None,
            reader_calls: 0,
        }),
        Err(e) => Err(e.into()),
    }
}

/// Runs every shipped configuration over `dataset`. Examples whose gold
/// document is not indexed are skipped and listed.
pub fn run_eval(
    pipeline: &Pipeline,
    dataset: &[EvalExample],
    configurations: &[EvalConfiguration],
) -> Result<EvalReport, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::DatasetInvalid("dataset has no examples".into()));
    }
    let index = pipeline
        .index()
        .ok_or_else(|| EvalError::DatasetInvalid("no index loaded".into()))?;

    let mut report = EvalReport::default();
    let mut usable = Vec::new();
    for ex in dataset {
        if index.document_by_id(&ex.gold_doc_id).is_some() {
            usable.push(ex);
        } else {
            report.skipped_examples += 1;
            if !report.missing_gold_docs.contains(&ex.gold_doc_id) {
                tracing::warn!("gold document {} not in index; example skipped", ex.gold_doc_id);
                report.missing_gold_docs.push(ex.gold_doc_id.clone());
            }
        }
    }

    let native: Arc<dyn MaskFillProvider> =
        Arc::new(CooccurrenceProvider::train_on_index(index, pipeline.analyzer()));
    for config in configurations {
        if !config.expansion.shipped() {
            let label = config.expansion.label().to_string();
            if !report.not_shipped.contains(&label) {
                report.not_shipped.push(label);
            }
            continue;
        }
        let mut settings = *pipeline.settings();
        settings.relsnip.enabled = config.relsnip;
        settings.expander.enabled = config.expansion != ExpansionStrategy::Off;
        let p = match &config.expansion {
            ExpansionStrategy::RemoteCqe { endpoint, timeout_ms } => pipeline.clone().with_expander(Arc::new(
                RemoteMaskFill::new(endpoint.clone(), Duration::from_millis(*timeout_ms), 8),
            )),
            _ => pipeline.clone().with_expander(native.clone()),
        };
        let results: Vec<ExampleResult> = usable
            .par_iter()
            .map(|ex| evaluate_example(&p, &settings, ex))
            .collect::<Result<_, _>>()?;
        report.rows.push(aggregate(config.label(), &results));
    }
    Ok(report)
}

fn fmt_row(r: &EvalRow) -> Vec<String> {
    vec![
        r.config_label.clone(),
        r.examples.to_string(),
        format!("{:.4}", r.recall_at_1),
        format!("{:.4}", r.recall_at_5),
        format!("{:.4}", r.recall_at_10),
        format!("{:.4}", r.answer_em),
        format!("{:.4}", r.answer_f1),
        format!("{:.3}", r.mean_expand_ms),
        format!("{:.3}", r.median_expand_ms),
        format!("{:.3}", r.mean_retrieve_ms),
        format!("{:.3}", r.median_retrieve_ms),
        format!("{:.3}", r.mean_condense_ms),
        format!("{:.3}", r.median_condense_ms),
        format!("{:.3}", r.mean_read_ms),
        format!("{:.3}", r.median_read_ms),
        format!("{:.3}", r.mean_total_ms),
        format!("{:.3}", r.median_total_ms),
        r.reader_chunks_total.to_string(),
    ]
}

/// CSV with a header row of [`REPORT_COLUMNS`], one row per configuration.
pub fn write_csv<W: Write>(report: &EvalReport, out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for r in &report.rows {
        w.write_record(fmt_row(r))?;
    }
    w.flush().map_err(|source| EvalError::Io {
        path: "<csv>".into(),
        source,
    })?;
    Ok(())
}

/// Fixed-width table of the headline columns.
pub fn render_table(report: &EvalReport) -> String {
    let header = ["configuration", "R@1", "R@5", "R@10", "EM", "F1", "total ms", "chunks"];
    let rows: Vec<[String; 8]> = report
        .rows
        .iter()
        .map(|r| {
            [
                r.config_label.clone(),
                format!("{:.3}", r.recall_at_1),
                format!("{:.3}", r.recall_at_5),
                format!("{:.3}", r.recall_at_10),
                format!("{:.3}", r.answer_em),
                format!("{:.3}", r.answer_f1),
                format!("{:.2}", r.mean_total_ms),
                r.reader_chunks_total.to_string(),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = line(&header.map(String::from));
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in &rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    if report.skipped_examples > 0 {
        out.push_str(&format!(
            "skipped {} example(s); gold documents not indexed: {}\n",
            report.skipped_examples,
            report.missing_gold_docs.join(", ")
        ));
    }
    for label in &report.not_shipped {
        out.push_str(&format!("{label}: not shipped\n"));
    }
    out
}

/// Writes the CSV to `path` and the table next to it with a `.txt`
/// extension. Returns the table path.
pub fn emit_report(report: &EvalReport, path: &Path) -> Result<PathBuf, EvalError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_csv(report, file)?;
    let table_path = path.with_extension("txt");
    std::fs::write(&table_path, render_table(report)).map_err(io_err(&table_path))?;
    Ok(table_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize_answer("The  Mac, Computer!"), "mac computer");
        assert_eq!(exact_match("the Apple", "apple."), 1.0);
    }

    #[test]
    fn f1_values() {
        assert_eq!(f1_score("apple mac", "apple mac"), 1.0);
        assert_eq!(f1_score("banana", "apple"), 0.0);
        // 1 common of 2 predicted and 1 gold
        assert!((f1_score("apple pie", "apple") - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(f1_score("", ""), 1.0);
        assert_eq!(f1_score("the", "apple"), 0.0);
    }

    #[test]
    fn configuration_grid() {
        let labels: Vec<String> = standard_configurations(None).iter().map(|c| c.label()).collect();
        assert_eq!(
            labels,
            ["bm25+relsnip-off", "bm25+relsnip-on", "cqe-native+relsnip-off", "cqe-native+relsnip-on"]
        );
        assert_eq!(standard_configurations(Some(("http://x", 10))).len(), 6);
    }

    #[test]
    fn empty_report_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&EvalReport::default(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", REPORT_COLUMNS.join(",")));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[]), 0.0);
    }
}

//! Corpus co-occurrence mask filler.
//!
//! Stands in for a masked language model fine-tuned on the corpus: a
//! candidate term `w` is scored against the unmasked context terms `c` by
//!
//! ```text
//! score(w) = Σ_c  cooc(w, c) / sqrt(freq(w) · freq(c))
//! ```
//!
//! where `cooc` counts the times `w` and `c` appear within ±5 content tokens
//! of each other (stopwords and punctuation removed before windowing).
//! Confidences are min-max normalized over the returned list; a list whose
//! scores are all equal (including a single prediction) gets confidence 1.0.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::{Fill, MaskFillProvider, MaskedQuery, Prediction, ProviderError};
use crate::analysis::{tokenize, Analyzer};
use crate::index::Index;

pub const DEFAULT_WINDOW: usize = 5;

#[derive(Debug, Clone, Default)]
struct Model {
    freq: HashMap<String, u64>,
    // sorted inner maps keep accumulation order deterministic
    cooc: HashMap<String, BTreeMap<String, u64>>,
    stopwords: HashSet<String>,
}

#[derive(Debug, Clone, Default)]
pub struct CooccurrenceProvider {
    model: Option<Model>,
    window: usize,
}

impl CooccurrenceProvider {
    /// A provider that answers every fill with [`ProviderError::Untrained`].
    pub fn untrained() -> Self {
        CooccurrenceProvider {
            model: None,
            window: DEFAULT_WINDOW,
        }
    }

    pub fn train<'a>(texts: impl IntoIterator<Item = &'a str>, analyzer: &Analyzer) -> Self {
        Self::train_with_window(texts, analyzer, DEFAULT_WINDOW)
    }

    pub fn train_with_window<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        analyzer: &Analyzer,
        window: usize,
    ) -> Self {
        let mut model = Model {
            stopwords: analyzer.stopwords().clone(),
            ..Default::default()
        };
        for text in texts {
            let terms: Vec<String> = tokenize(text)
                .into_iter()
                .filter(|t| !t.is_punct() && !analyzer.is_stopword(&t.text))
                .map(|t| t.text)
                .collect();
            for (i, w) in terms.iter().enumerate() {
                *model.freq.entry(w.clone()).or_default() += 1;
                for c in terms.iter().skip(i + 1).take(window) {
                    if c == w {
                        continue;
                    }
                    *model.cooc.entry(w.clone()).or_default().entry(c.clone()).or_default() += 1;
                    *model.cooc.entry(c.clone()).or_default().entry(w.clone()).or_default() += 1;
                }
            }
        }
        CooccurrenceProvider {
            model: Some(model),
            window,
        }
    }

    /// Trains on the titles and bodies of every indexed document.
    pub fn train_on_index(index: &Index, analyzer: &Analyzer) -> Self {
        let texts: Vec<String> = index
            .documents()
            .iter()
            .map(|d| format!("{}\n{}", d.title, d.body))
            .collect();
        Self::train(texts.iter().map(String::as_str), analyzer)
    }

    pub fn is_trained(&self) -> bool {
        self.model.is_some()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Raw association scores for every candidate, best first.
    pub fn scores(&self, context: &[&str]) -> Result<Vec<(String, f64)>, ProviderError> {
        let model = self.model.as_ref().ok_or(ProviderError::Untrained)?;
        let mut ctx: Vec<&str> = Vec::new();
        for c in context {
            if model.freq.contains_key(*c) && !model.stopwords.contains(*c) && !ctx.contains(c) {
                ctx.push(c);
            }
        }
        let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
        for c in &ctx {
            let fc = model.freq[*c] as f64;
            let Some(row) = model.cooc.get(*c) else {
                continue;
            };
            for (w, &n) in row {
                if ctx.contains(&w.as_str()) {
                    continue;
                }
                let fw = model.freq[w] as f64;
                *scores.entry(w.as_str()).or_insert(0.0) += n as f64 / (fw * fc).sqrt();
            }
        }
        let mut ranked: Vec<(String, f64)> = scores.into_iter().map(|(w, s)| (w.to_string(), s)).collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(ranked)
    }
}

impl MaskFillProvider for CooccurrenceProvider {
    fn fill(&self, query: &MaskedQuery, top_n: usize) -> Result<Fill, ProviderError> {
        let context: Vec<&str> = query.context().collect();
        let mut ranked = self.scores(&context)?;
        ranked.truncate(top_n);
        let (lo, hi) = ranked
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, s)| (lo.min(*s), hi.max(*s)));
        let predictions = ranked
            .into_iter()
            .map(|(token, s)| Prediction {
                token,
                confidence: if hi > lo { (s - lo) / (hi - lo) } else { 1.0 },
            })
            .collect();
        Ok(Fill {
            predictions,
            warnings: Vec::new(),
        })
    }
}

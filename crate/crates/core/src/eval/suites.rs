//! Constructed evaluation suites.
//!
//! [`mismatch_suite`] builds a corpus where some gold documents name their
//! subject only by a synonym of the query word. Each topic has three short
//! "bridge" documents pairing the query's context word with the synonym, so a
//! co-occurrence provider trained on the corpus proposes the synonym when the
//! query word is masked. Without expansion those gold documents share no term
//! with the query and cannot be retrieved.
//!
//! [`long_document_suite`] pads documents to a fixed token count with one
//! answer-bearing sentence inside, for measuring reader calls with and
//! without condensation.

use crate::index::Document;

use super::EvalExample;

/// (query word, synonym used by the gold document, context word, answer).
const TOPICS: [(&str, &str, &str, &str); 10] = [
    ("car", "automobile", "engine", "karl benz"),
    ("doctor", "physician", "hospital", "saint elsewhere"),
    ("lawyer", "attorney", "court", "atticus finch"),
    ("film", "movie", "director", "the lumiere brothers"),
    ("kid", "child", "school", "room nine"),
    ("shop", "store", "customer", "main street"),
    ("boat", "vessel", "harbor", "pier four"),
    ("sofa", "couch", "cushion", "blue velvet"),
    ("chef", "cook", "kitchen", "copper pans"),
    ("pilot", "aviator", "airport", "runway two"),
];

/// Topics whose gold document uses the synonym only.
const MISMATCH_TOPICS: usize = 6;

const BRIDGES_PER_TOPIC: usize = 3;

#[derive(Debug, Clone)]
pub struct Suite {
    pub documents: Vec<Document>,
    pub examples: Vec<EvalExample>,
    /// Per example: true when the gold document can only be reached through
    /// expansion.
    pub requires_synonym: Vec<bool>,
}

pub fn mismatch_suite() -> Suite {
    let mut documents = Vec::new();
    let mut examples = Vec::new();
    let mut requires_synonym = Vec::new();
    for (i, &(word, synonym, context, answer)) in TOPICS.iter().enumerate() {
        let mismatch = i < MISMATCH_TOPICS;
        for b in 0..BRIDGES_PER_TOPIC {
            documents.push(Document::new(
                format!("t{i}-bridge{b}"),
                "",
                format!("The {context} of the {synonym}."),
            ));
        }
        let gold_id = format!("t{i}-gold");
        let body = if mismatch {
            format!("This {synonym} is remembered for {answer}.")
        } else {
            format!("This {word} by the {context} is remembered for {answer}.")
        };
        documents.push(Document::new(gold_id.clone(), "", body));
        examples.push(EvalExample {
            question: format!("What about the {word} at the {context}?"),
            gold_answer: answer.to_string(),
            gold_doc_id: gold_id,
        });
        requires_synonym.push(mismatch);
    }
    Suite {
        documents,
        examples,
        requires_synonym,
    }
}

const PADDING: [&str; 24] = [
    "river", "stone", "meadow", "lantern", "harvest", "window", "valley", "thread", "copper", "signal",
    "garden", "ladder", "winter", "basket", "mirror", "candle", "forest", "bridge", "pebble", "cloud",
    "island", "feather", "rope", "orchard",
];

/// `docs` documents of exactly `tokens` tokens each. Document `d` holds the
/// sentence "keeper {d} guarded vault{d}" a third of the way in; the
/// question asks which keeper guarded it.
pub fn long_document_suite(docs: usize, tokens: usize) -> Suite {
    assert!(tokens >= 4, "documents need room for the answer sentence");
    let mut documents = Vec::new();
    let mut examples = Vec::new();
    for d in 0..docs {
        let fact = [format!("keeper{d}"), "guarded".to_string(), format!("vault{d}")];
        let at = tokens / 3;
        let mut words: Vec<String> = Vec::with_capacity(tokens);
        for t in 0..tokens - fact.len() {
            if t == at {
                words.extend(fact.iter().cloned());
            }
            words.push(PADDING[(t * 7 + d) % PADDING.len()].to_string());
        }
        if words.len() < tokens {
            words.extend(fact.iter().cloned());
        }
        documents.push(Document::new(format!("long{d}"), "", words.join(" ")));
        examples.push(EvalExample {
            question: format!("who guarded vault{d}"),
            gold_answer: format!("keeper{d}"),
            gold_doc_id: format!("long{d}"),
        });
    }
    Suite {
        requires_synonym: vec![false; examples.len()],
        documents,
        examples,
    }
}

//! Tokenization, normalization, stopwords and a small rule-based part-of-speech
//! tagger.
//!
//! Every other stage (index, fragmenting, reader chunks, expansion) counts in
//! the tokens produced by [`tokenize`], so offsets and token counts agree
//! across the whole pipeline.
//!
//! Segmentation rules, applied left to right:
//!
//! * whitespace separates tokens and is never part of one;
//! * a maximal run of alphanumeric characters is a word token;
//! * an apostrophe (`'` or `’`) directly followed by a letter starts a clitic
//!   word token that runs to the end of the following alphanumeric run
//!   (`Apple's` → `apple`, `'s`);
//! * any other maximal run of non-space, non-alphanumeric characters is a
//!   single punctuation token.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");
const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosTag {
    Noun,
    Adjective,
    Verb,
    Stopword,
    Number,
    Punct,
    Other,
}

impl PosTag {
    /// Parses a lexicon tag. Accepts full names, short forms and the common
    /// Penn-style prefixes (`NN*`, `JJ*`, `VB*`).
    pub fn parse(tag: &str) -> Option<PosTag> {
        let t = tag.trim().to_ascii_uppercase();
        let tag = match t.as_str() {
            "NOUN" | "N" | "PROPN" => PosTag::Noun,
            "ADJ" | "ADJECTIVE" | "A" => PosTag::Adjective,
            "VERB" | "V" | "AUX" => PosTag::Verb,
            "STOPWORD" | "STOP" => PosTag::Stopword,
            "NUM" | "NUMBER" | "CD" => PosTag::Number,
            "PUNCT" | "PUNCTUATION" => PosTag::Punct,
            "OTHER" | "X" => PosTag::Other,
            _ if t.starts_with("NN") => PosTag::Noun,
            _ if t.starts_with("JJ") => PosTag::Adjective,
            _ if t.starts_with("VB") => PosTag::Verb,
            _ => return None,
        };
        Some(tag)
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PosTag::Noun => "NOUN",
            PosTag::Adjective => "ADJ",
            PosTag::Verb => "VERB",
            PosTag::Stopword => "STOPWORD",
            PosTag::Number => "NUM",
            PosTag::Punct => "PUNCT",
            PosTag::Other => "OTHER",
        };
        f.write_str(s)
    }
}

/// A token of the source text. `char_start..char_end` is a byte range into
/// the source string and `raw` is exactly that slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub raw: String,
    pub char_start: usize,
    pub char_end: usize,
    pub pos: PosTag,
}

impl Token {
    pub fn is_punct(&self) -> bool {
        self.pos == PosTag::Punct
    }

    pub fn len_bytes(&self) -> usize {
        self.char_end - self.char_start
    }
}

/// Lowercase followed by Unicode NFC.
pub fn normalize(s: &str) -> String {
    s.to_lowercase().nfc().collect()
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Splits `text` into word and punctuation tokens. Word tokens are tagged
/// [`PosTag::Other`] until an [`Analyzer`] tags them; punctuation tokens are
/// tagged [`PosTag::Punct`].
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);
    let clitic_start = |i: usize| {
        is_apostrophe(chars[i].1) && chars.get(i + 1).is_some_and(|&(_, c)| c.is_alphabetic())
    };

    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let pos = if c.is_alphanumeric() || clitic_start(i) {
            i += 1;
            while i < chars.len() && chars[i].1.is_alphanumeric() {
                i += 1;
            }
            PosTag::Other
        } else {
            i += 1;
            while i < chars.len() {
                let c = chars[i].1;
                if c.is_whitespace() || c.is_alphanumeric() || clitic_start(i) {
                    break;
                }
                i += 1;
            }
            PosTag::Punct
        };
        let (b0, b1) = (byte_at(start), byte_at(i));
        let raw = &text[b0..b1];
        tokens.push(Token {
            text: normalize(raw),
            raw: raw.to_string(),
            char_start: b0,
            char_end: b1,
            pos,
        });
    }
    tokens
}

/// Pluggable part-of-speech tagging.
pub trait PosTagger: Send + Sync {
    fn tag(&self, token: &Token) -> PosTag;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixRule {
    pub suffix: String,
    pub tag: PosTag,
    /// Characters that must remain before the suffix for the rule to fire.
    pub min_stem: usize,
}

impl SuffixRule {
    fn new(suffix: &str, tag: PosTag, min_stem: usize) -> Self {
        SuffixRule {
            suffix: suffix.to_string(),
            tag,
            min_stem,
        }
    }

    pub fn matches(&self, word: &str) -> bool {
        word.strip_suffix(self.suffix.as_str())
            .is_some_and(|stem| stem.chars().count() >= self.min_stem)
    }
}

fn default_suffix_rules() -> Vec<SuffixRule> {
    use PosTag::*;
    [
        ("ness", Noun, 3),
        ("ment", Noun, 3),
        ("tion", Noun, 2),
        ("sion", Noun, 2),
        ("ity", Noun, 3),
        ("ism", Noun, 3),
        ("ist", Noun, 3),
        ("ship", Noun, 3),
        ("hood", Noun, 3),
        ("ance", Noun, 3),
        ("ence", Noun, 3),
        ("ous", Adjective, 3),
        ("ful", Adjective, 3),
        ("less", Adjective, 3),
        ("able", Adjective, 3),
        ("ible", Adjective, 3),
        ("ive", Adjective, 3),
        ("ical", Adjective, 3),
        ("ish", Adjective, 3),
        ("ize", Verb, 3),
        ("ise", Verb, 4),
        ("ify", Verb, 3),
        ("ing", Verb, 4),
        ("ed", Verb, 4),
    ]
    .into_iter()
    .map(|(s, t, m)| SuffixRule::new(s, t, m))
    .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("lexicon line {line}: {reason}")]
    BadLexicon { line: usize, reason: String },
}

/// Stopword filter plus lexicon/suffix tagger. Immutable once built.
///
/// Tagging order: punctuation, lexicon (with a plural fallback onto noun
/// entries), first matching suffix rule, stopword set, numeric, otherwise
/// [`PosTag::Other`].
#[derive(Clone)]
pub struct Analyzer {
    stopwords: HashSet<String>,
    lexicon: HashMap<String, PosTag>,
    suffix_rules: Vec<SuffixRule>,
    tagger: Option<Arc<dyn PosTagger>>,
}

impl fmt::Debug for Analyzer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Analyzer")
            .field("stopwords", &self.stopwords.len())
            .field("lexicon", &self.lexicon.len())
            .field("suffix_rules", &self.suffix_rules.len())
            .field("custom_tagger", &self.tagger.is_some())
            .finish()
    }
}

impl Default for Analyzer {
    fn default() -> Self {
        Analyzer::english()
    }
}

fn parse_stopwords(src: &str) -> HashSet<String> {
    src.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(normalize)
        .collect()
}

fn parse_lexicon(src: &str) -> Result<HashMap<String, PosTag>, AnalysisError> {
    let mut lexicon = HashMap::new();
    for (n, line) in src.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (word, tag) = line.split_once('\t').ok_or_else(|| AnalysisError::BadLexicon {
            line: n + 1,
            reason: "expected word<TAB>TAG".into(),
        })?;
        let tag = PosTag::parse(tag).ok_or_else(|| AnalysisError::BadLexicon {
            line: n + 1,
            reason: format!("unknown tag {tag:?}"),
        })?;
        lexicon.insert(normalize(word.trim()), tag);
    }
    Ok(lexicon)
}

fn read(path: &Path) -> Result<String, AnalysisError> {
    std::fs::read_to_string(path).map_err(|source| AnalysisError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl Analyzer {
    /// The embedded English stopword list and lexicon.
    pub fn english() -> Self {
        Analyzer {
            stopwords: parse_stopwords(DEFAULT_STOPWORDS),
            lexicon: parse_lexicon(DEFAULT_LEXICON).expect("embedded lexicon is well formed"),
            suffix_rules: default_suffix_rules(),
            tagger: None,
        }
    }

    /// Loads the stopword list and/or lexicon from plain-text files, falling
    /// back to the embedded defaults for whichever is `None`.
    pub fn from_files(
        stopwords: Option<&Path>,
        lexicon: Option<&Path>,
    ) -> Result<Self, AnalysisError> {
        let mut analyzer = Analyzer::english();
        if let Some(p) = stopwords {
            analyzer.stopwords = parse_stopwords(&read(p)?);
        }
        if let Some(p) = lexicon {
            analyzer.lexicon = parse_lexicon(&read(p)?)?;
        }
        Ok(analyzer)
    }

    pub fn new(
        stopwords: impl IntoIterator<Item = String>,
        lexicon: impl IntoIterator<Item = (String, PosTag)>,
        suffix_rules: Vec<SuffixRule>,
    ) -> Self {
        Analyzer {
            stopwords: stopwords.into_iter().map(|s| normalize(&s)).collect(),
            lexicon: lexicon.into_iter().map(|(w, t)| (normalize(&w), t)).collect(),
            suffix_rules,
            tagger: None,
        }
    }

    /// Replaces the built-in tagger. The stopword set is still used for
    /// filtering.
    pub fn with_tagger(mut self, tagger: Arc<dyn PosTagger>) -> Self {
        self.tagger = Some(tagger);
        self
    }

    pub fn stopwords(&self) -> &HashSet<String> {
        &self.stopwords
    }

    pub fn suffix_rules(&self) -> &[SuffixRule] {
        &self.suffix_rules
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(word) || self.stopwords.contains(&normalize(word))
    }

    fn lexicon_lookup(&self, word: &str) -> Option<PosTag> {
        if let Some(&tag) = self.lexicon.get(word) {
            return Some(tag);
        }
        // plural fallback, noun entries only
        let stems = [
            word.strip_suffix("ies").map(|s| format!("{s}y")),
            word.strip_suffix("es").map(str::to_string),
            word.strip_suffix('s').map(str::to_string),
        ];
        stems
            .into_iter()
            .flatten()
            .filter(|s| !s.is_empty())
            .find(|s| self.lexicon.get(s.as_str()) == Some(&PosTag::Noun))
            .map(|_| PosTag::Noun)
    }

    /// Tags a single token with the built-in rules (or the custom tagger).
    pub fn pos_tag(&self, token: &Token) -> PosTag {
        if let Some(tagger) = &self.tagger {
            return tagger.tag(token);
        }
        self.rule_tag(token)
    }

    fn rule_tag(&self, token: &Token) -> PosTag {
        if !token.text.chars().any(char::is_alphanumeric) {
            return PosTag::Punct;
        }
        let word = token.text.as_str();
        if let Some(tag) = self.lexicon_lookup(word) {
            return tag;
        }
        if let Some(rule) = self.suffix_rules.iter().find(|r| r.matches(word)) {
            return rule.tag;
        }
        if self.stopwords.contains(word) {
            return PosTag::Stopword;
        }
        if word.chars().all(char::is_numeric) {
            return PosTag::Number;
        }
        PosTag::Other
    }

    /// Tokenizes and tags.
    pub fn analyze(&self, text: &str) -> Vec<Token> {
        let mut tokens = tokenize(text);
        for t in &mut tokens {
            t.pos = self.pos_tag(t);
        }
        tokens
    }

    /// Normalized word tokens of `text` that are neither punctuation nor
    /// stopwords, in order (duplicates kept).
    pub fn content_terms(&self, text: &str) -> Vec<String> {
        tokenize(text)
            .into_iter()
            .filter(|t| !t.is_punct() && !self.is_stopword(&t.text))
            .map(|t| t.text)
            .collect()
    }
}

impl PosTagger for Analyzer {
    fn tag(&self, token: &Token) -> PosTag {
        self.pos_tag(token)
    }
}

/// The expansion candidate gate: nouns and adjectives only.
pub fn is_expansion_candidate(token: &Token) -> bool {
    matches!(token.pos, PosTag::Noun | PosTag::Adjective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spans(tokens: &[Token]) -> Vec<(&str, usize, usize)> {
        tokens
            .iter()
            .map(|t| (t.text.as_str(), t.char_start, t.char_end))
            .collect()
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \n\t").is_empty());
    }

    #[test]
    fn clitic_and_trailing_punct() {
        let toks = tokenize("Apple's Mac.");
        assert_eq!(
            spans(&toks),
            vec![("apple", 0, 5), ("'s", 5, 7), ("mac", 8, 11), (".", 11, 12)]
        );
        assert_eq!(toks[3].pos, PosTag::Punct);
        assert_eq!(toks[0].raw, "Apple");
    }

    #[test]
    fn question_from_figure() {
        let toks = tokenize("steve jobs created what products at apple?");
        let words = toks.iter().filter(|t| !t.is_punct()).count();
        let puncts = toks.iter().filter(|t| t.is_punct()).count();
        assert_eq!((words, puncts), (7, 1));
    }

    #[test]
    fn punctuation_runs_are_single_tokens() {
        let toks = tokenize("wait...what?! 'quoted'");
        let texts: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, vec!["wait", "...", "what", "?!", "'quoted", "'"]);
    }

    #[test]
    fn tagging_order() {
        let a = Analyzer::english();
        let tag = |s: &str| a.pos_tag(&tokenize(s)[0]);
        assert_eq!(tag("the"), PosTag::Stopword);
        assert_eq!(tag("products"), PosTag::Noun);
        assert_eq!(tag("快"), PosTag::Other);
        assert_eq!(tag("1984"), PosTag::Number);
        assert_eq!(tag("?"), PosTag::Punct);
        assert_eq!(tag("happiness"), PosTag::Noun);
        assert_eq!(tag("dangerous"), PosTag::Adjective);
        assert_eq!(tag("computers"), PosTag::Noun);
        assert_eq!(tag("during"), PosTag::Stopword);
    }

    #[test]
    fn default_suffix_rules_never_shadow_stopwords() {
        let a = Analyzer::english();
        for w in a.stopwords() {
            assert!(
                !a.suffix_rules().iter().any(|r| r.matches(w)),
                "suffix rule captures stopword {w:?}"
            );
        }
    }

    #[test]
    fn candidate_gate() {
        let mk = |pos| Token {
            text: "x".into(),
            raw: "x".into(),
            char_start: 0,
            char_end: 1,
            pos,
        };
        assert!(is_expansion_candidate(&mk(PosTag::Noun)));
        assert!(is_expansion_candidate(&mk(PosTag::Adjective)));
        assert!(!is_expansion_candidate(&mk(PosTag::Verb)));
        assert!(!is_expansion_candidate(&mk(PosTag::Stopword)));
        assert!(!is_expansion_candidate(&mk(PosTag::Punct)));
    }

    #[test]
    fn custom_tagger_is_used() {
        struct AllNouns;
        impl PosTagger for AllNouns {
            fn tag(&self, _: &Token) -> PosTag {
                PosTag::Noun
            }
        }
        let a = Analyzer::english().with_tagger(Arc::new(AllNouns));
        assert!(a.analyze("the of and").iter().all(|t| t.pos == PosTag::Noun));
        assert!(a.is_stopword("the"));
    }

    #[test]
    fn files_override_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let stop = dir.path().join("stop.txt");
        let lex = dir.path().join("lex.tsv");
        std::fs::write(&stop, "foo\nBar\n").unwrap();
        std::fs::write(&lex, "zebra\tNN\nquick\tJJ\n").unwrap();
        let a = Analyzer::from_files(Some(&stop), Some(&lex)).unwrap();
        assert!(a.is_stopword("bar"));
        assert!(!a.is_stopword("the"));
        let toks = a.analyze("zebra quick");
        assert_eq!(toks[0].pos, PosTag::Noun);
        assert_eq!(toks[1].pos, PosTag::Adjective);

        std::fs::write(&lex, "no tab here\n").unwrap();
        assert!(matches!(
            Analyzer::from_files(None, Some(&lex)),
            Err(AnalysisError::BadLexicon { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn offsets_index_back_into_source(text in "[a-zA-Z0-9 .,'’!?\\-éÉ快\n]{0,60}") {
            let toks = tokenize(&text);
            let mut prev_end = 0;
            for t in &toks {
                prop_assert!(t.char_start < t.char_end);
                prop_assert_eq!(&text[t.char_start..t.char_end], t.raw.as_str());
                prop_assert!(!t.text.is_empty());
                prop_assert!(text[prev_end..t.char_start].chars().all(char::is_whitespace));
                prev_end = t.char_end;
            }
            prop_assert!(text[prev_end..].chars().all(char::is_whitespace));
        }

        #[test]
        fn normalization_is_idempotent(text in "[a-zA-Z0-9 .,'!?éÉ快]{0,60}") {
            let a: Vec<String> = tokenize(&text).into_iter().map(|t| t.text).collect();
            let b: Vec<String> = tokenize(&text.to_lowercase()).into_iter().map(|t| t.text).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn analyze_tags_every_token(text in "[a-z ,.?]{0,40}") {
            let a = Analyzer::english();
            for t in a.analyze(&text) {
                prop_assert_eq!(t.pos == PosTag::Punct, t.is_punct());
                if is_expansion_candidate(&t) {
                    prop_assert!(matches!(t.pos, PosTag::Noun | PosTag::Adjective));
                }
            }
        }
    }
}

//! Text cleaning, tokenization, stop-word removal, suffix-stripping
//! stemming, and the trainable token-embedding table.

mod porter;

pub use porter::{porter_pass, stem};

use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use crate::linalg::Mat;
use crate::rng::DetRng;

/// Reserved out-of-vocabulary row in every embedding table.
pub const UNK_INDEX: usize = 0;
pub const UNK_TOKEN: &str = "<UNK>";

/// Default text-embedding width.
pub const DEFAULT_D_TEXT: usize = 64;

/// Tokens with character spans into the original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    /// Half-open char-index spans, non-overlapping and ordered.
    pub spans: Vec<(usize, usize)>,
}

/// Remove `<...>` markup, decode the five XML-predefined entity references,
/// and replace control characters with spaces. Total function.
pub fn strip_markup(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '<' {
            // Skip a balanced tag if one exists; otherwise keep the literal '<'.
            if let Some(close) = chars[i + 1..].iter().position(|&x| x == '>') {
                i += close + 2;
                continue;
            }
        }
        if c == '&' {
            let rest: String = chars[i..chars.len().min(i + 6)].iter().collect();
            let entity = [
                ("&amp;", '&'),
                ("&lt;", '<'),
                ("&gt;", '>'),
                ("&quot;", '"'),
                ("&apos;", '\''),
            ]
            .iter()
            .find(|(name, _)| rest.starts_with(name));
            if let Some((name, decoded)) = entity {
                out.push(*decoded);
                i += name.chars().count();
                continue;
            }
        }
        if c.is_control() {
            out.push(' ');
        } else {
            out.push(c);
        }
        i += 1;
    }
    out
}

/// Lowercase tokenization: alphanumeric runs, with apostrophes kept inside
/// tokens ("don't" stays one token). Spans index chars of the input.
pub fn tokenize(text: &str) -> TokenSequence {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i;
        while end < chars.len() {
            let c = chars[end];
            if c.is_alphanumeric() {
                end += 1;
            } else if c == '\'' && end + 1 < chars.len() && chars[end + 1].is_alphanumeric() {
                // apostrophe inside a token
                end += 1;
            } else {
                break;
            }
        }
        let token: String = chars[start..end]
            .iter()
            .flat_map(|c| c.to_lowercase())
            .collect();
        tokens.push(token);
        spans.push((start, end));
        i = end;
    }
    TokenSequence { tokens, spans }
}

/// Filter out stop-list tokens, preserving order of the survivors.
pub fn remove_stopwords(tokens: &[String], stoplist: &HashSet<String>) -> Vec<String> {
    tokens
        .iter()
        .filter(|t| !stoplist.contains(t.as_str()))
        .cloned()
        .collect()
}

const STOPWORDS_FILE: &str = include_str!("../../data/stopwords.txt");

/// Parse a stop-word list: one token per line, `#` comments allowed.
pub fn parse_stoplist(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect()
}

/// The bundled ~130-word English function-word list.
pub fn default_stopwords() -> &'static HashSet<String> {
    static LIST: OnceLock<HashSet<String>> = OnceLock::new();
    LIST.get_or_init(|| parse_stoplist(STOPWORDS_FILE))
}

/// Full preprocessing pipeline: strip markup, tokenize, drop stop words,
/// stem. This is what fills `InteractionRecord.tokens`.
pub fn preprocess(text: &str, stoplist: &HashSet<String>) -> Vec<String> {
    let cleaned = strip_markup(text);
    let seq = tokenize(&cleaned);
    remove_stopwords(&seq.tokens, stoplist)
        .iter()
        .map(|t| stem(t))
        .collect()
}

/// Trainable token-embedding table: the desk-scale stand-in for a
/// pretrained encoder. Row 0 is always `<UNK>`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    /// token -> row index; `<UNK>` is implicit at row 0.
    pub vocab: BTreeMap<String, usize>,
    /// |V| x d_text, uniform-initialized in [-0.05, 0.05].
    pub vectors: Mat,
}

impl EmbeddingTable {
    /// Build the vocabulary from training-split tokens only. Tokens seen
    /// fewer than `min_freq` times map to `<UNK>`; indices are assigned in
    /// lexicographic order for determinism.
    pub fn build<'a, I>(tokens: I, dim: usize, min_freq: usize, rng: &mut DetRng) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for t in tokens {
            *freq.entry(t).or_insert(0) += 1;
        }
        let mut vocab = BTreeMap::new();
        let mut next = 1; // 0 reserved for <UNK>
        for (token, count) in freq {
            if count >= min_freq {
                vocab.insert(token.to_string(), next);
                next += 1;
            }
        }
        let vectors = Mat::uniform(next, dim, -0.05, 0.05, rng);
        EmbeddingTable { vocab, vectors }
    }

    pub fn vocab_size(&self) -> usize {
        self.vectors.rows
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.vocab.get(token).copied().unwrap_or(UNK_INDEX)
    }

    /// Map tokens to row indices (OOV -> 0).
    pub fn indices(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_of(t)).collect()
    }

    /// Fraction of tokens that fall outside the vocabulary.
    pub fn oov_rate(&self, tokens: &[String]) -> f64 {
        if tokens.is_empty() {
            return 0.0;
        }
        let oov = tokens
            .iter()
            .filter(|t| !self.vocab.contains_key(t.as_str()))
            .count();
        oov as f64 / tokens.len() as f64
    }
}

/// Look up embedding rows for a token sequence. Output shape is always
/// (len(tokens), d_text); unknown tokens read row 0.
pub fn embed(tokens: &[String], table: &EmbeddingTable) -> Vec<Vec<f64>> {
    tokens
        .iter()
        .map(|t| table.vectors.row(table.index_of(t)).to_vec())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_removes_tags() {
        assert_eq!(strip_markup("I <b>hate</b> loops"), "I hate loops");
    }

    #[test]
    fn strip_empty() {
        assert_eq!(strip_markup(""), "");
    }

    #[test]
    fn strip_decodes_entities() {
        assert_eq!(strip_markup("a &amp; b"), "a & b");
        assert_eq!(strip_markup("&lt;x&gt; &quot;q&quot; &apos;a&apos;"), "<x> \"q\" 'a'");
    }

    #[test]
    fn strip_replaces_control_chars() {
        assert_eq!(strip_markup("a\tb\nc"), "a b c");
    }

    #[test]
    fn strip_keeps_unbalanced_angle() {
        assert_eq!(strip_markup("3 < 5"), "3 < 5");
    }

    #[test]
    fn tokenize_basic() {
        let seq = tokenize("While-loops confuse me!");
        assert_eq!(seq.tokens, vec!["while", "loops", "confuse", "me"]);
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").tokens.is_empty());
    }

    #[test]
    fn tokenize_apostrophes() {
        let seq = tokenize("don't stop");
        assert_eq!(seq.tokens, vec!["don't", "stop"]);
        // leading/trailing apostrophes are separators
        assert_eq!(tokenize("'quoted'").tokens, vec!["quoted"]);
    }

    #[test]
    fn tokenize_spans_ordered_disjoint() {
        let seq = tokenize("one two  three");
        for w in seq.spans.windows(2) {
            assert!(w[0].1 <= w[1].0);
        }
        assert_eq!(seq.spans[0], (0, 3));
    }

    #[test]
    fn stopwords_filtering() {
        let stop = default_stopwords();
        let toks: Vec<String> = ["i", "hate", "the", "loops"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(remove_stopwords(&toks, stop), vec!["hate", "loops"]);
    }

    #[test]
    fn stopwords_all_removed() {
        let stop = default_stopwords();
        let toks: Vec<String> = ["the", "a", "of"].iter().map(|s| s.to_string()).collect();
        assert!(remove_stopwords(&toks, stop).is_empty());
    }

    #[test]
    fn empty_stoplist_is_identity() {
        let toks: Vec<String> = ["the", "loops"].iter().map(|s| s.to_string()).collect();
        assert_eq!(remove_stopwords(&toks, &HashSet::new()), toks);
    }

    #[test]
    fn stoplist_parses_comments() {
        let list = parse_stoplist("# comment\nthe\n\na\n");
        assert_eq!(list.len(), 2);
        assert!(list.contains("the") && list.contains("a"));
    }

    #[test]
    fn embedding_unk_and_shape() {
        let mut rng = DetRng::new(0);
        let corpus = ["loop", "loop", "loops", "loops", "rare"];
        let table = EmbeddingTable::build(corpus.iter().copied(), 8, 2, &mut rng);
        // "rare" seen once -> not in vocab
        assert_eq!(table.index_of("rare"), UNK_INDEX);
        assert_eq!(table.index_of("zzyzx"), UNK_INDEX);
        assert!(table.index_of("loop") > 0);

        let toks: Vec<String> = ["zzyzx", "loop", "loop"].iter().map(|s| s.to_string()).collect();
        let rows = embed(&toks, &table);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].len(), 8);
        assert_eq!(rows[0], table.vectors.row(0).to_vec());
        assert_eq!(rows[1], rows[2]);

        assert!(embed(&[], &table).is_empty());
    }

    #[test]
    fn embedding_init_range() {
        let mut rng = DetRng::new(1);
        let table = EmbeddingTable::build(["a", "a", "b", "b"].iter().copied(), 16, 2, &mut rng);
        for &v in &table.vectors.data {
            assert!((-0.05..=0.05).contains(&v));
        }
    }

    #[test]
    fn oov_rate_reported() {
        let mut rng = DetRng::new(2);
        let table = EmbeddingTable::build(["x", "x"].iter().copied(), 4, 2, &mut rng);
        let toks: Vec<String> = ["x", "y"].iter().map(|s| s.to_string()).collect();
        assert!((table.oov_rate(&toks) - 0.5).abs() < 1e-12);
        assert_eq!(table.oov_rate(&[]), 0.0);
    }

    #[test]
    fn pipeline_deterministic_and_stem_idempotent() {
        let stop = default_stopwords();
        let a = preprocess("I was <i>looping</i> over the arrays!", stop);
        let b = preprocess("I was <i>looping</i> over the arrays!", stop);
        assert_eq!(a, b);
        assert_eq!(a, vec!["loop", "arrai"]); // arrays -> array -> step 1c y->i
        for t in &a {
            assert_eq!(&stem(t), t);
        }
    }
}

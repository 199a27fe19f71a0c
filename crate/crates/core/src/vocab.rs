//! Closed vocabulary, text normalization and the number/date recognizer.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::symbol::{ColSet, Symbol, SymbolKind};
use crate::value::{month_number, normalize_date, parse_number, Value};

/// A word of the input with its character range `[start, end)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Word {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Language-specific tokenization and lemmatization.
pub trait Normalizer: Send + Sync {
    /// Split text into words with strictly increasing character offsets.
    fn tokenize(&self, text: &str) -> Vec<Word>;
    /// Map a word to its lemma. Must be idempotent.
    fn lemmatize(&self, word: &str) -> String;
    fn language(&self) -> &str;
}

/// English tokenizer plus a rule-based suffix stripper applied until
/// nothing changes.
#[derive(Clone, Copy, Debug, Default)]
pub struct English;

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?x)
            \d{4}-\d{1,2}-\d{1,2}
            | \d{4}/\d{1,2}/\d{1,2}
            | \d{1,2}/\d{1,2}/\d{4}
            | \d{4}-\d{1,2}
            | -?\d{1,3}(?:,\d{3})+(?:\.\d+)?
            | -?\d+(?:\.\d+)?
            | [\p{L}\p{N}_]+(?:[&'][\p{L}\p{N}]+)*",
        )
        .unwrap()
    })
}

fn is_vowel(c: u8) -> bool {
    matches!(c, b'a' | b'e' | b'i' | b'o' | b'u')
}

fn strip_once(w: &str) -> Option<String> {
    let n = w.len();
    if n <= 3 || !w.is_ascii() || !w.bytes().all(|b| b.is_ascii_lowercase()) {
        return None;
    }
    let stem_ok = |s: &str| s.len() >= 3 && s.bytes().any(is_vowel);
    let undouble = |s: &str| -> String {
        let b = s.as_bytes();
        let k = b.len();
        if k >= 4 && b[k - 1] == b[k - 2] && !is_vowel(b[k - 1]) && !matches!(b[k - 1], b'l' | b's' | b'z') {
            s[..k - 1].to_string()
        } else {
            s.to_string()
        }
    };
    if let Some(s) = w.strip_suffix("ies") {
        if s.len() >= 2 {
            return Some(format!("{s}y"));
        }
    }
    for suf in ["sses", "shes", "ches", "xes", "zes"] {
        if w.ends_with(suf) {
            return Some(w[..n - 2].to_string());
        }
    }
    if w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is") {
        return Some(w[..n - 1].to_string());
    }
    if let Some(s) = w.strip_suffix("ied") {
        if s.len() >= 2 {
            return Some(format!("{s}y"));
        }
    }
    for suf in ["ing", "est", "ed", "er"] {
        if let Some(s) = w.strip_suffix(suf) {
            if stem_ok(s) {
                return Some(undouble(s));
            }
        }
    }
    None
}

impl Normalizer for English {
    fn tokenize(&self, text: &str) -> Vec<Word> {
        // byte offset -> char offset
        let mut char_at = Vec::with_capacity(text.len() + 1);
        let mut ci = 0;
        for (bi, _) in text.char_indices() {
            while char_at.len() <= bi {
                char_at.push(ci);
            }
            ci += 1;
        }
        while char_at.len() <= text.len() {
            char_at.push(ci);
        }
        token_regex()
            .find_iter(text)
            .map(|m| Word {
                text: m.as_str().to_string(),
                start: char_at[m.start()],
                end: char_at[m.end()],
            })
            .collect()
    }

    fn lemmatize(&self, word: &str) -> String {
        let mut w = word.to_lowercase();
        if let Some(s) = w.strip_suffix("'s") {
            w = s.to_string();
        }
        while let Some(next) = strip_once(&w) {
            w = next;
        }
        w
    }

    fn language(&self) -> &str {
        "en"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WordGroup {
    Stopping,
    Aggregation,
    Operation,
    Comparison,
}

impl WordGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            WordGroup::Stopping => "stopping",
            WordGroup::Aggregation => "aggregation",
            WordGroup::Operation => "operation",
            WordGroup::Comparison => "comparison",
        }
    }

    fn parse(s: &str) -> Option<WordGroup> {
        [WordGroup::Stopping, WordGroup::Aggregation, WordGroup::Operation, WordGroup::Comparison]
            .into_iter()
            .find(|g| g.as_str() == s)
    }
}

impl fmt::Display for WordGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The closed set of common words; everything else becomes `UNK`.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    language: String,
    words: BTreeMap<String, WordGroup>,
}

const ENGLISH_VOCAB: &str = include_str!("../data/english.vocab");

impl Vocabulary {
    /// Parse the `#group`-sectioned file format. Entries are lemmatized with
    /// the given normalizer; a lemma listed under two groups is an error.
    pub fn parse(text: &str, normalizer: &dyn Normalizer) -> Result<Vocabulary> {
        let mut words = BTreeMap::new();
        let mut group = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('#') {
                group = Some(WordGroup::parse(name.trim()).ok_or_else(|| {
                    Error::Vocabulary(format!("line {}: unknown group `{name}`", lineno + 1))
                })?);
                continue;
            }
            let g = group.ok_or_else(|| {
                Error::Vocabulary(format!("line {}: entry before any group header", lineno + 1))
            })?;
            let lemma = normalizer.lemmatize(line);
            match words.insert(lemma.clone(), g) {
                Some(prev) if prev != g => {
                    return Err(Error::Vocabulary(format!(
                        "line {}: `{lemma}` is in both {prev} and {g}",
                        lineno + 1
                    )))
                }
                _ => {}
            }
        }
        Ok(Vocabulary { language: normalizer.language().to_string(), words })
    }

    pub fn english() -> Vocabulary {
        Vocabulary::parse(ENGLISH_VOCAB, &English).expect("shipped vocabulary is well formed")
    }

    pub fn load(path: &std::path::Path, normalizer: &dyn Normalizer) -> Result<Vocabulary> {
        Vocabulary::parse(&std::fs::read_to_string(path)?, normalizer)
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, lemma: &str) -> bool {
        self.words.contains_key(lemma)
    }

    pub fn group(&self, lemma: &str) -> Option<WordGroup> {
        self.words.get(lemma).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, WordGroup)> {
        self.words.iter().map(|(w, g)| (w.as_str(), *g))
    }
}

/// Common-word token for a normalized word, if it is in the vocabulary.
pub fn lookup_common(word: &str, vocab: &Vocabulary, normalizer: &dyn Normalizer) -> Option<String> {
    let lemma = normalizer.lemmatize(word);
    vocab.contains(&lemma).then_some(lemma)
}

/// A recognized literal: character range and an `N` or `D` symbol with an
/// empty column set.
#[derive(Clone, Debug, PartialEq)]
pub struct Literal {
    pub start: usize,
    pub end: usize,
    pub symbol: Symbol,
}

fn is_year(n: f64) -> bool {
    n.fract() == 0.0 && (1900.0..=2100.0).contains(&n)
}

/// Recognize numbers and dates. Within each kind the spans are disjoint;
/// four-digit years are reported both as `N` and as `D`. Recognized date
/// patterns: `YYYY`, `YYYY-MM`, `YYYY-MM-DD`, `YYYY/MM/DD`, `DD/MM/YYYY`,
/// `Month DD, YYYY` and `Month YYYY`.
pub fn recognize_literals(question: &str, normalizer: &dyn Normalizer) -> Vec<Literal> {
    let words = normalizer.tokenize(question);
    let mut dates: Vec<Literal> = Vec::new();
    let mut numbers: Vec<Literal> = Vec::new();
    let date = |start, end, iso: String| Literal {
        start,
        end,
        symbol: Symbol::literal(SymbolKind::D, Value::Date(iso), ColSet::new()),
    };
    let mut covered = vec![false; words.len()];
    let mut i = 0;
    while i < words.len() {
        if let Some(m) = month_number(&words[i].text) {
            let num = |k: usize| words.get(k).and_then(|w| {
                w.text.chars().all(|c| c.is_ascii_digit()).then(|| w.text.parse::<u32>().ok()).flatten()
            });
            if let (Some(d), Some(y)) = (num(i + 1), num(i + 2)) {
                if (1..=31).contains(&d) && (1000..=9999).contains(&y) {
                    if let Some(iso) = normalize_date(&format!("{y:04}-{m:02}-{d:02}")) {
                        dates.push(date(words[i].start, words[i + 2].end, iso));
                        covered[i..=i + 2].iter_mut().for_each(|c| *c = true);
                        i += 3;
                        continue;
                    }
                }
            }
            if let Some(y) = num(i + 1) {
                if (1000..=9999).contains(&y) {
                    dates.push(date(words[i].start, words[i + 1].end, format!("{y:04}-{m:02}")));
                    covered[i..=i + 1].iter_mut().for_each(|c| *c = true);
                    i += 2;
                    continue;
                }
            }
        }
        i += 1;
    }
    for (k, w) in words.iter().enumerate() {
        if covered[k] || !w.text.starts_with(|c: char| c.is_ascii_digit() || c == '-') {
            continue;
        }
        if w.text.contains(['/']) || w.text.matches('-').count() > usize::from(w.text.starts_with('-')) {
            if let Some(iso) = normalize_date(&w.text) {
                dates.push(date(w.start, w.end, iso));
            }
            continue;
        }
        if let Some(n) = parse_number(&w.text) {
            numbers.push(Literal {
                start: w.start,
                end: w.end,
                symbol: Symbol::literal(SymbolKind::N, Value::Num(n), ColSet::new()),
            });
            if is_year(n) && w.text.len() == 4 {
                dates.push(date(w.start, w.end, format!("{n:.0}")));
            }
        }
    }
    let mut all = numbers;
    all.extend(dates);
    all.sort_by(|a, b| {
        (a.start, a.end, a.symbol.kind).cmp(&(b.start, b.end, b.symbol.kind))
    });
    all
}

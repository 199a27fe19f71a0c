//! Linking question n-grams to table metadata and enumerating abstracted
//! utterances.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::symbol::{ColSet, Symbol, SymbolKind};
use crate::table::Table;
use crate::token::{AbstractedUtterance, Token, TokenKind};
use crate::value::{ColumnType, Value};
use crate::vocab::{lookup_common, recognize_literals, Normalizer, Vocabulary, Word};

pub const MAX_NGRAM: usize = 5;
pub const EDIT_THRESHOLD: f64 = 0.8;
pub const SYNONYM_SCORE: f64 = 0.9;
pub const MAX_UTTERANCES: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MatchKind {
    Exact,
    EditDistance(f64),
    Synonym,
    Literal,
}

impl MatchKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MatchKind::Exact => "exact",
            MatchKind::EditDistance(_) => "edit-distance",
            MatchKind::Synonym => "synonym",
            MatchKind::Literal => "literal",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    /// Character range in the question.
    pub start: usize,
    pub end: usize,
    /// Word range `[first, last)` in the tokenized question.
    pub words: (usize, usize),
    pub symbol: Symbol,
    pub kind: MatchKind,
    pub score: f64,
}

impl Annotation {
    fn overlaps(&self, other: &Annotation) -> bool {
        self.words.0 < other.words.1 && other.words.0 < self.words.1
    }
}

/// `1 - levenshtein(a, b) / max(|a|, |b|)` over characters.
pub fn edit_score(a: &str, b: &str) -> f64 {
    let la = a.chars().count();
    let lb = b.chars().count();
    let m = la.max(lb);
    if m == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / m as f64
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Target {
    Table,
    Column(usize),
    /// Index into `TableIndex::values`.
    Value(usize),
}

#[derive(Clone, Debug)]
struct Item {
    target: Target,
    /// Lemmatized words joined by a space.
    norm: String,
    /// Lowercased words joined by a space, used for edit distance.
    lower: String,
    numeric: bool,
}

/// A distinct cell text and the columns holding it.
#[derive(Clone, Debug)]
pub struct ValueEntry {
    pub text: String,
    pub cols: BTreeMap<usize, Value>,
    pub count: usize,
}

/// Per-table lookup structures, built once.
#[derive(Clone, Debug)]
pub struct TableIndex {
    pub table: Table,
    items: Vec<Item>,
    by_norm: HashMap<String, Vec<usize>>,
    pub values: Vec<ValueEntry>,
    num_ranges: Vec<Option<(f64, f64)>>,
    date_ranges: Vec<Option<(String, String)>>,
}

fn normalize_words(words: &[Word], normalizer: &dyn Normalizer) -> (String, String) {
    let norm: Vec<String> = words.iter().map(|w| normalizer.lemmatize(&w.text)).collect();
    let lower: Vec<String> = words.iter().map(|w| w.text.to_lowercase()).collect();
    (norm.join(" "), lower.join(" "))
}

impl TableIndex {
    pub fn new(table: Table, normalizer: &dyn Normalizer) -> TableIndex {
        let mut items = Vec::new();
        let mut push = |target: Target, text: &str| {
            let words = normalizer.tokenize(text);
            if words.is_empty() || words.len() > MAX_NGRAM {
                return;
            }
            let (norm, lower) = normalize_words(&words, normalizer);
            let numeric = words.iter().all(|w| w.text.starts_with(|c: char| c.is_ascii_digit()));
            items.push(Item { target, norm, lower, numeric });
        };
        push(Target::Table, &table.name);
        for (i, c) in table.columns.iter().enumerate() {
            push(Target::Column(i), &c.name);
        }
        let mut value_ids: BTreeMap<String, usize> = BTreeMap::new();
        let mut values: Vec<ValueEntry> = Vec::new();
        for row in &table.rows {
            for (c, v) in row.iter().enumerate() {
                if v.is_null() {
                    continue;
                }
                let text = v.display_text();
                let key = crate::value::fold_text(&text);
                let id = *value_ids.entry(key).or_insert_with(|| {
                    values.push(ValueEntry { text: text.clone(), cols: BTreeMap::new(), count: 0 });
                    values.len() - 1
                });
                values[id].cols.entry(c).or_insert_with(|| v.clone());
                values[id].count += 1;
            }
        }
        for (id, v) in values.iter().enumerate() {
            push(Target::Value(id), &v.text);
        }
        let mut by_norm: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, it) in items.iter().enumerate() {
            by_norm.entry(it.norm.clone()).or_default().push(i);
        }
        let mut num_ranges = vec![None; table.columns.len()];
        let mut date_ranges = vec![None; table.columns.len()];
        for row in &table.rows {
            for (c, v) in row.iter().enumerate() {
                match v {
                    Value::Num(n) => {
                        let r: &mut Option<(f64, f64)> = &mut num_ranges[c];
                        *r = Some(r.map_or((*n, *n), |(lo, hi)| (lo.min(*n), hi.max(*n))));
                    }
                    Value::Date(d) => {
                        let r: &mut Option<(String, String)> = &mut date_ranges[c];
                        *r = Some(match r.take() {
                            None => (d.clone(), d.clone()),
                            Some((lo, hi)) => (lo.min(d.clone()), hi.max(d.clone())),
                        });
                    }
                    _ => {}
                }
            }
        }
        TableIndex { table, items, by_norm, values, num_ranges, date_ranges }
    }

    fn symbol_for(&self, target: &Target) -> Symbol {
        match target {
            Target::Table => Symbol::table(&self.table),
            Target::Column(c) => Symbol::column(&self.table, *c),
            Target::Value(id) => {
                let entry = &self.values[*id];
                let (_, v) = entry.cols.iter().next().expect("value has a column");
                Symbol::literal(SymbolKind::V, v.clone(), entry.cols.keys().copied().collect())
            }
        }
    }

    fn resolve_reference(&self, reference: &str, normalizer: &dyn Normalizer) -> Option<Target> {
        let (prefix, rest) = match reference.split_once(':') {
            Some((p, r)) if ["table", "column", "value"].contains(&p.trim()) => (Some(p.trim()), r),
            _ => (None, reference),
        };
        let (norm, _) = normalize_words(&normalizer.tokenize(rest), normalizer);
        let candidates = self.by_norm.get(&norm)?;
        let wanted = |t: &Target| match prefix {
            None => true,
            Some("table") => matches!(t, Target::Table),
            Some("column") => matches!(t, Target::Column(_)),
            _ => matches!(t, Target::Value(_)),
        };
        candidates
            .iter()
            .map(|&i| self.items[i].target.clone())
            .filter(wanted)
            .min()
    }

    /// Columns of the given type whose values contain `v` or whose range does.
    fn bind_literal(&self, v: &Value) -> ColSet {
        let mut cols = ColSet::new();
        for (c, col) in self.table.columns.iter().enumerate() {
            match (v, col.ty) {
                (Value::Num(n), ColumnType::Num) => {
                    if let Some((lo, hi)) = self.num_ranges[c] {
                        if lo <= *n && *n <= hi {
                            cols.insert(c);
                        }
                    }
                }
                (Value::Date(d), ColumnType::Date) => {
                    if let Some((lo, hi)) = &self.date_ranges[c] {
                        let within = lo.as_str() <= d.as_str() && d.as_str() <= hi.as_str();
                        if within || lo.starts_with(d.as_str()) || hi.starts_with(d.as_str()) {
                            cols.insert(c);
                        }
                    }
                }
                _ => {}
            }
        }
        cols
    }

    /// Prefix completions: columns first, then values by frequency, then
    /// common words.
    pub fn suggest(&self, prefix: &str, vocab: &Vocabulary, limit: usize) -> Vec<Suggestion> {
        let p = prefix.trim().to_lowercase();
        if p.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::new();
        for c in &self.table.columns {
            if c.name.to_lowercase().starts_with(&p) {
                out.push(Suggestion { text: c.name.to_lowercase(), kind: "column", count: 0 });
            }
        }
        let mut vals: Vec<&ValueEntry> = self
            .values
            .iter()
            .filter(|v| v.text.to_lowercase().starts_with(&p))
            .collect();
        vals.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.text.cmp(&b.text)));
        out.extend(vals.into_iter().map(|v| Suggestion {
            text: v.text.clone(),
            kind: "value",
            count: v.count,
        }));
        out.extend(
            vocab
                .iter()
                .filter(|(w, _)| w.starts_with(&p))
                .map(|(w, _)| Suggestion { text: w.to_string(), kind: "word", count: 0 }),
        );
        let mut seen = BTreeSet::new();
        out.retain(|s| seen.insert(s.text.to_lowercase()));
        out.truncate(limit);
        out
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Suggestion {
    pub text: String,
    pub kind: &'static str,
    pub count: usize,
}

/// User-supplied synonyms: normalized phrase to metadata references.
#[derive(Clone, Debug, Default)]
pub struct SynonymDict {
    entries: BTreeMap<String, Vec<String>>,
}

impl SynonymDict {
    /// Lines of `phrase<TAB>reference`; a reference is a table name, column
    /// name or cell value, optionally prefixed by `table:`, `column:` or
    /// `value:`. Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str, normalizer: &dyn Normalizer) -> Result<SynonymDict> {
        let mut d = SynonymDict::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (phrase, reference) = line
                .split_once('\t')
                .ok_or_else(|| Error::Vocabulary(format!("synonym line {} has no tab", i + 1)))?;
            d.insert(phrase, reference.trim(), normalizer);
        }
        Ok(d)
    }

    pub fn load(path: &std::path::Path, normalizer: &dyn Normalizer) -> Result<SynonymDict> {
        SynonymDict::parse(&std::fs::read_to_string(path)?, normalizer)
    }

    pub fn insert(&mut self, phrase: &str, reference: &str, normalizer: &dyn Normalizer) {
        let (norm, _) = normalize_words(&normalizer.tokenize(phrase), normalizer);
        if !norm.is_empty() {
            self.entries.entry(norm).or_default().push(reference.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Result of tokenizing and annotating a question.
#[derive(Clone, Debug)]
pub struct Annotated {
    pub words: Vec<Word>,
    pub annotations: Vec<Annotation>,
}

/// Link n-grams (1 to 5 words) to the table name, column names and cell
/// values: exact match on lemmas first, then the best edit-distance match
/// above the threshold, then synonyms. Numbers and dates are added with
/// their column sets bound by value or range.
pub fn annotate(
    question: &str,
    index: &TableIndex,
    normalizer: &dyn Normalizer,
    syn: &SynonymDict,
) -> Annotated {
    let words = normalizer.tokenize(question);
    let lemmas: Vec<String> = words.iter().map(|w| normalizer.lemmatize(&w.text)).collect();
    let lowers: Vec<String> = words.iter().map(|w| w.text.to_lowercase()).collect();
    let mut ngrams: Vec<(usize, usize, String, String)> = Vec::new();
    for i in 0..words.len() {
        for n in 1..=MAX_NGRAM.min(words.len() - i) {
            ngrams.push((i, i + n, lemmas[i..i + n].join(" "), lowers[i..i + n].join(" ")));
        }
    }
    let mut anns: Vec<Annotation> = Vec::new();
    let mut add = |i: usize, j: usize, symbol: Symbol, kind: MatchKind, score: f64| {
        anns.push(Annotation {
            start: words[i].start,
            end: words[j - 1].end,
            words: (i, j),
            symbol,
            kind,
            score,
        });
    };

    let mut exact_hit = vec![false; index.items.len()];
    for (i, j, norm, _) in &ngrams {
        if let Some(ids) = index.by_norm.get(norm) {
            for &id in ids {
                exact_hit[id] = true;
                add(*i, *j, index.symbol_for(&index.items[id].target), MatchKind::Exact, 1.0);
            }
        }
    }
    let mut fuzzy_hit = vec![false; index.items.len()];
    for (id, item) in index.items.iter().enumerate() {
        if exact_hit[id] || item.numeric {
            continue;
        }
        let len = item.lower.chars().count();
        let mut best = EDIT_THRESHOLD;
        let mut best_grams = Vec::new();
        for (k, (_, _, _, lower)) in ngrams.iter().enumerate() {
            let l = lower.chars().count();
            if (l.abs_diff(len) as f64) > (1.0 - EDIT_THRESHOLD) * l.max(len) as f64 {
                continue;
            }
            if lower.starts_with(|c: char| c.is_ascii_digit()) {
                continue;
            }
            let s = edit_score(lower, &item.lower);
            if s > best + 1e-12 {
                best = s;
                best_grams = vec![k];
            } else if s > EDIT_THRESHOLD && (s - best).abs() <= 1e-12 {
                best_grams.push(k);
            }
        }
        for k in best_grams {
            let (i, j, _, _) = &ngrams[k];
            fuzzy_hit[id] = true;
            add(*i, *j, index.symbol_for(&item.target), MatchKind::EditDistance(best), best);
        }
    }
    for (phrase, refs) in &syn.entries {
        for reference in refs {
            let Some(target) = index.resolve_reference(reference, normalizer) else {
                continue;
            };
            let matched = index
                .items
                .iter()
                .enumerate()
                .any(|(id, it)| it.target == target && (exact_hit[id] || fuzzy_hit[id]));
            if matched {
                continue;
            }
            for (i, j, norm, _) in &ngrams {
                if norm == phrase {
                    add(*i, *j, index.symbol_for(&target), MatchKind::Synonym, SYNONYM_SCORE);
                }
            }
        }
    }

    for lit in recognize_literals(question, normalizer) {
        let Some(i) = words.iter().position(|w| w.start == lit.start) else { continue };
        let Some(j) = words.iter().position(|w| w.end == lit.end) else { continue };
        let mut symbol = lit.symbol;
        symbol.cols = index.bind_literal(symbol.value.as_ref().expect("literal value"));
        add(i, j + 1, symbol, MatchKind::Literal, 1.0);
    }

    anns.sort_by(|a, b| {
        (a.words, a.symbol.signature()).cmp(&(b.words, b.symbol.signature()))
    });
    anns.dedup_by(|a, b| a.words == b.words && a.symbol == b.symbol);
    Annotated { words, annotations: anns }
}

/// Enumerate maximal conflict-free annotation subsets (indices sorted),
/// stopping after `budget` complete subsets.
pub fn maximal_subsets(anns: &[Annotation], budget: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut chosen = Vec::new();
    fn rec(
        anns: &[Annotation],
        k: usize,
        chosen: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
        budget: usize,
    ) {
        if out.len() >= budget {
            return;
        }
        if k == anns.len() {
            let maximal = (0..anns.len()).all(|x| {
                chosen.contains(&x) || chosen.iter().any(|&c| anns[c].overlaps(&anns[x]))
            });
            if maximal {
                out.push(chosen.clone());
            }
            return;
        }
        let free = chosen.iter().all(|&c| !anns[c].overlaps(&anns[k]));
        if free {
            chosen.push(k);
            rec(anns, k + 1, chosen, out, budget);
            chosen.pop();
            // Excluding a free annotation is only useful if a later one
            // overlapping it can still be chosen.
            if !(k + 1..anns.len()).any(|x| anns[x].overlaps(&anns[k])) {
                return;
            }
        }
        rec(anns, k + 1, chosen, out, budget);
    }
    rec(anns, 0, &mut chosen, &mut out, budget);
    out
}

/// An abstracted utterance with its ranking data.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub utterance: AbstractedUtterance,
    pub annotations: Vec<Annotation>,
    pub score: f64,
}

/// Build the abstracted utterances for every maximal conflict-free subset,
/// deduplicate, rank by total annotation score then fewer `UNK`s, and keep
/// the first [`MAX_UTTERANCES`].
pub fn permute(
    annotated: &Annotated,
    vocab: &Vocabulary,
    normalizer: &dyn Normalizer,
) -> Vec<Candidate> {
    let words = &annotated.words;
    let anns = &annotated.annotations;
    let common: Vec<Option<String>> =
        words.iter().map(|w| lookup_common(&w.text, vocab, normalizer)).collect();
    let mut cands: Vec<(Candidate, Vec<String>)> = Vec::new();
    for subset in maximal_subsets(anns, 4096) {
        let mut start_at: BTreeMap<usize, usize> = BTreeMap::new();
        for &a in &subset {
            start_at.insert(anns[a].words.0, a);
        }
        let mut tokens = Vec::new();
        let mut i = 0;
        while i < words.len() {
            if let Some(&a) = start_at.get(&i) {
                let ann = &anns[a];
                tokens.push(Token {
                    kind: TokenKind::Symbol(ann.symbol.clone()),
                    source: (ann.start, ann.end),
                });
                i = ann.words.1;
                continue;
            }
            let kind = match &common[i] {
                Some(l) => TokenKind::Common(l.clone()),
                None => TokenKind::Unknown,
            };
            tokens.push(Token { kind, source: (words[i].start, words[i].end) });
            i += 1;
        }
        let score: f64 = subset.iter().map(|&a| anns[a].score).sum();
        let utterance = AbstractedUtterance::new(tokens);
        let key: Vec<String> = utterance
            .tokens
            .iter()
            .map(|t| match &t.kind {
                TokenKind::Symbol(s) => format!("{}@{}", s.signature(), t.source.0),
                _ => t.key(),
            })
            .collect();
        let annotations = subset.iter().map(|&a| anns[a].clone()).collect();
        cands.push((Candidate { utterance, annotations, score }, key));
    }
    if cands.is_empty() {
        // No annotation at all: one utterance of common words and UNK.
        let tokens = words
            .iter()
            .zip(&common)
            .map(|(w, c)| Token {
                kind: c.clone().map_or(TokenKind::Unknown, TokenKind::Common),
                source: (w.start, w.end),
            })
            .collect();
        cands.push((
            Candidate { utterance: AbstractedUtterance::new(tokens), annotations: Vec::new(), score: 0.0 },
            Vec::new(),
        ));
    }
    cands.sort_by(|(a, ka), (b, kb)| {
        b.score
            .total_cmp(&a.score)
            .then(a.utterance.unknown_count().cmp(&b.utterance.unknown_count()))
            .then_with(|| ka.cmp(kb))
    });
    cands.dedup_by(|a, b| a.1 == b.1);
    cands.truncate(MAX_UTTERANCES);
    cands.into_iter().map(|(c, _)| c).collect()
}

/// Annotate and permute in one call.
pub fn abstract_question(
    question: &str,
    index: &TableIndex,
    vocab: &Vocabulary,
    normalizer: &dyn Normalizer,
    syn: &SynonymDict,
) -> Vec<Candidate> {
    let annotated = annotate(question, index, normalizer, syn);
    permute(&annotated, vocab, normalizer)
}

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Word → synset ids, plus a small suffix-stripping lemmatizer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynonymLexicon {
    synsets: HashMap<String, Vec<String>>,
}

impl SynonymLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tab-separated `word<TAB>synset1,synset2,...`, one word per line.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = SynonymLexicon::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (word, ids) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(i + 1, "expected `word<TAB>synsets`"))?;
            let ids: Vec<&str> = ids
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect();
            if word.trim().is_empty() || ids.is_empty() {
                return Err(Error::parse(i + 1, "empty word or synset list"));
            }
            lex.insert(word, ids);
        }
        Ok(lex)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read lexicon {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn insert<'a>(&mut self, word: &str, ids: impl IntoIterator<Item = &'a str>) {
        let entry = self.synsets.entry(normalize_phrase(word)).or_default();
        for id in ids {
            if !entry.iter().any(|e| e == id) {
                entry.push(id.to_string());
            }
        }
    }

    pub fn len(&self) -> usize {
        self.synsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    /// Synsets of a phrase, looked up as written and then by its lemma.
    pub fn synsets(&self, phrase: &str) -> Vec<&str> {
        let surface = normalize_phrase(phrase);
        let lemma = lemmatize_phrase(&surface);
        let mut out: Vec<&str> = Vec::new();
        for key in [&surface, &lemma] {
            if let Some(ids) = self.synsets.get(key.as_str()) {
                for id in ids {
                    if !out.contains(&id.as_str()) {
                        out.push(id);
                    }
                }
            }
        }
        out
    }

    /// Two phrases match when their lemmas are equal or they share a synset.
    pub fn phrases_match(&self, a: &str, b: &str) -> bool {
        let (la, lb) = (lemmatize_phrase(a), lemmatize_phrase(b));
        if la == lb {
            return true;
        }
        let sa = self.synsets(a);
        if sa.is_empty() {
            return false;
        }
        self.synsets(b).iter().any(|id| sa.contains(id))
    }
}

/// Lowercases and collapses whitespace.
pub fn normalize_phrase(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalizes and lemmatizes the head (last) word of a phrase.
pub fn lemmatize_phrase(phrase: &str) -> String {
    let norm = normalize_phrase(phrase);
    match norm.rsplit_once(' ') {
        Some((rest, last)) => format!("{rest} {}", lemmatize_word(last)),
        None => lemmatize_word(&norm),
    }
}

/// Suffix rules: plural -s/-es/-ies, -ing and -ed with consonant
/// undoubling. Words of three letters or fewer are left alone.
pub fn lemmatize_word(word: &str) -> String {
    let w = word.to_lowercase();
    if w.chars().count() <= 3 || !w.is_ascii() {
        return w;
    }
    if let Some(stem) = w.strip_suffix("ies") {
        if stem.len() >= 2 {
            return format!("{stem}y");
        }
    }
    for suffix in ["sses", "xes", "ches", "shes", "zes"] {
        if w.ends_with(suffix) {
            return w[..w.len() - 2].to_string();
        }
    }
    if let Some(stem) = w.strip_suffix("ing") {
        if stem.len() >= 3 && has_vowel(stem) {
            return undouble(stem);
        }
    }
    if let Some(stem) = w.strip_suffix("ed") {
        if stem.len() >= 3 && has_vowel(stem) {
            return undouble(stem);
        }
    }
    if w.ends_with('s') && !w.ends_with("ss") && !w.ends_with("us") && !w.ends_with("is") {
        return w[..w.len() - 1].to_string();
    }
    w
}

fn has_vowel(s: &str) -> bool {
    s.chars().any(|c| "aeiouy".contains(c))
}

fn undouble(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 2 && b[n - 1] == b[n - 2] && !b"aeiouylsz".contains(&b[n - 1]) {
        stem[..n - 1].to_string()
    } else {
        stem.to_string()
    }
}

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gateway::{Gateway, UnitEmbedding};

/// An ordered tag or attribute list with one text embedding per entry.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    entries: Vec<String>,
    embeddings: Vec<UnitEmbedding>,
}

impl Vocabulary {
    pub fn from_parts(entries: Vec<String>, embeddings: Vec<UnitEmbedding>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("vocabulary is empty"));
        }
        if entries.len() != embeddings.len() {
            return Err(Error::invalid(format!(
                "vocabulary has {} entries but {} embeddings",
                entries.len(),
                embeddings.len()
            )));
        }
        check_unique(&entries)?;
        let dim = embeddings[0].dim();
        if embeddings.iter().any(|e| e.dim() != dim) {
            return Err(Error::invalid(
                "vocabulary embeddings have mixed dimensions",
            ));
        }
        Ok(Vocabulary {
            entries,
            embeddings,
        })
    }

    /// Embeds `entries` with the gateway's text encoder.
    pub async fn embed(entries: Vec<String>, gateway: &Gateway) -> Result<Self> {
        check_unique(&entries)?;
        let embeddings = gateway.embed_texts(&entries).await?;
        Self::from_parts(entries, embeddings)
    }

    /// Loads a vocabulary file, reusing `cache` when it holds embeddings for
    /// exactly these entries at the gateway's dimension, and rewriting it
    /// otherwise.
    pub async fn load(path: &Path, gateway: &Gateway, cache: Option<&Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read vocabulary {}: {e}", path.display()))
        })?;
        let entries = parse_entries(&text)?;
        if let Some(cache) = cache {
            if let Ok(cached) = std::fs::read_to_string(cache) {
                if let Ok(vocab) = Self::read_cache(&cached) {
                    if vocab.entries == entries && vocab.dim() == gateway.dim() {
                        return Ok(vocab);
                    }
                }
            }
        }
        let vocab = Self::embed(entries, gateway).await?;
        if let Some(cache) = cache {
            std::fs::write(cache, vocab.write_cache())?;
        }
        Ok(vocab)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn embeddings(&self) -> &[UnitEmbedding] {
        &self.embeddings
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].dim()
    }

    pub fn entry(&self, i: usize) -> &str {
        &self.entries[i]
    }

    /// Similarity of `query` against every entry, in vocabulary order.
    pub fn scores(&self, query: &UnitEmbedding) -> Result<Vec<f64>> {
        if query.dim() != self.dim() {
            return Err(Error::invalid(format!(
                "embedding dimension {} does not match vocabulary dimension {}",
                query.dim(),
                self.dim()
            )));
        }
        Ok(self.embeddings.iter().map(|e| query.dot(e)).collect())
    }

    /// Cache format: a `dim<TAB>d` header, then `entry<TAB>v1 v2 ...` lines.
    pub fn write_cache(&self) -> String {
        let mut out = format!("dim\t{}\n", self.dim());
        for (entry, emb) in self.entries.iter().zip(&self.embeddings) {
            out.push_str(entry);
            out.push('\t');
            for (i, v) in emb.values().iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn read_cache(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let dim = match lines.next() {
            Some((_, header)) => header
                .strip_prefix("dim\t")
                .and_then(|d| d.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::parse(1, "expected `dim<TAB><n>` header"))?,
            None => return Err(Error::parse(1, "empty embedding cache")),
        };
        let mut entries = Vec::new();
        let mut embeddings = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (entry, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(i + 1, "expected `entry<TAB>vector`"))?;
            let values: Vec<f32> = values
                .split(' ')
                .map(|v| v.parse::<f32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(i + 1, e.to_string()))?;
            if values.len() != dim {
                return Err(Error::parse(
                    i + 1,
                    format!("vector has {} values, header says {dim}", values.len()),
                ));
            }
            entries.push(entry.to_string());
            embeddings.push(
                UnitEmbedding::normalize(&values)
                    .map_err(|e| Error::parse(i + 1, e.to_string()))?,
            );
        }
        Self::from_parts(entries, embeddings)
    }
}

/// One entry per line; `#` starts a comment line; blank lines are skipped.
pub fn parse_entries(text: &str) -> Result<Vec<String>> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen.insert(line.to_lowercase()) {
            return Err(Error::parse(
                i + 1,
                format!("duplicate vocabulary entry `{line}`"),
            ));
        }
        entries.push(line.to_string());
    }
    if entries.is_empty() {
        return Err(Error::invalid("vocabulary file has no entries"));
    }
    Ok(entries)
}

fn check_unique(entries: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for e in entries {
        if !seen.insert(e.to_lowercase()) {
            return Err(Error::invalid(format!("duplicate vocabulary entry `{e}`")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_with_comments() {
        let text = "# tags\ndog\n\n  brown dog  \n# end\n";
        assert_eq!(parse_entries(text).unwrap(), vec!["dog", "brown dog"]);
    }

    #[test]
    fn case_folded_duplicates_are_rejected() {
        let err = parse_entries("Dog\ncat\ndog\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    #[tokio::test]
    async fn cache_round_trips() {
        let gw = Gateway::mock(7);
        let vocab = Vocabulary::embed(vec!["dog".into(), "red car".into()], &gw)
            .await
            .unwrap();
        let back = Vocabulary::read_cache(&vocab.write_cache()).unwrap();
        assert_eq!(back.entries(), vocab.entries());
        assert_eq!(back.embeddings(), vocab.embeddings());
    }

    #[tokio::test]
    async fn load_writes_and_reuses_cache() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tags.txt");
        let cache = dir.path().join("tags.cache");
        std::fs::write(&path, "dog\ncat\n").unwrap();
        let gw = Gateway::mock(7);
        let first = Vocabulary::load(&path, &gw, Some(&cache)).await.unwrap();
        assert!(cache.exists());
        let second = Vocabulary::load(&path, &gw, Some(&cache)).await.unwrap();
        assert_eq!(first.embeddings(), second.embeddings());
    }

    #[test]
    fn malformed_cache_reports_line() {
        let err = Vocabulary::read_cache("dim\t2\ndog\t1 2 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}

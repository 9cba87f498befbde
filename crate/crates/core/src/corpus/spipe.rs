//! Corpus-level scene-graph scoring.
//!
//! Candidates come either from a directory (`<id>.json` graphs or
//! `<id>.conllu` parses of the generated text) or from a JSONL file whose
//! lines are `{"id": ..., "graph": {...}}` or `{"id": ..., "conllu": "..."}`.
//! References are `<id>.json` graphs in a directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Averaging;
use crate::error::{Error, Result};
use crate::sgraph::{
    graph_from_dependencies, parse_conllu, spipe, tuples, SceneGraph, SpipeScore, SynonymLexicon,
};

/// Graph for a whole text: the union of its sentence graphs.
pub fn graph_from_conllu(text: &str) -> Result<SceneGraph> {
    let mut merged = SceneGraph::default();
    for tree in parse_conllu(text)? {
        let g = graph_from_dependencies(&tree);
        for o in g.objects {
            if !merged.objects.contains(&o) {
                merged.objects.push(o);
            }
        }
        for a in g.attributes {
            if !merged.attributes.contains(&a) {
                merged.attributes.push(a);
            }
        }
        for r in g.relations {
            if !merged.relations.contains(&r) {
                merged.relations.push(r);
            }
        }
    }
    Ok(merged.normalized())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateLine {
    id: String,
    #[serde(default)]
    graph: Option<SceneGraph>,
    #[serde(default)]
    conllu: Option<String>,
}

fn load_graph_file(path: &Path) -> Result<SceneGraph> {
    let text = std::fs::read_to_string(path)?;
    let ctx = |e: Error| Error::invalid(format!("{}: {e}", path.display()));
    match path.extension().and_then(|e| e.to_str()) {
        Some("conllu") => graph_from_conllu(&text).map_err(ctx),
        _ => SceneGraph::from_json(&text).map_err(ctx),
    }
}

fn load_dir(dir: &Path, allow_conllu: bool) -> Result<BTreeMap<String, SceneGraph>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str());
        let wanted = ext == Some("json") || (allow_conllu && ext == Some("conllu"));
        if !path.is_file() || !wanted {
            continue;
        }
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if out.contains_key(&id) {
            return Err(Error::invalid(format!("two candidate files for `{id}`")));
        }
        out.insert(id, load_graph_file(&path)?);
    }
    Ok(out)
}

pub fn load_candidates(path: &Path) -> Result<BTreeMap<String, SceneGraph>> {
    if path.is_dir() {
        return load_dir(path, true);
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read candidates {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c: CandidateLine =
            serde_json::from_str(line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        let graph = match (c.graph, c.conllu) {
            (Some(g), None) => g.normalized(),
            (None, Some(parse)) => graph_from_conllu(&parse)?,
            _ => {
                return Err(Error::parse(
                    i + 1,
                    "expected exactly one of `graph` or `conllu`",
                ))
            }
        };
        if out.insert(c.id.clone(), graph).is_some() {
            return Err(Error::parse(i + 1, format!("duplicate id `{}`", c.id)));
        }
    }
    Ok(out)
}

pub fn load_references(dir: &Path) -> Result<BTreeMap<String, SceneGraph>> {
    if !dir.is_dir() {
        return Err(Error::Config(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    load_dir(dir, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub id: String,
    #[serde(flatten)]
    pub score: SpipeScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpipeReport {
    pub items: Vec<ItemScore>,
    pub averaging: Averaging,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scores aligned candidate and reference sets. Ids present on only one
/// side abort the run and are listed in the error.
pub fn score_corpus(
    candidates: &BTreeMap<String, SceneGraph>,
    references: &BTreeMap<String, SceneGraph>,
    lexicon: &SynonymLexicon,
    averaging: Averaging,
) -> Result<SpipeReport> {
    let no_ref: Vec<&str> = candidates
        .keys()
        .filter(|k| !references.contains_key(*k))
        .map(String::as_str)
        .collect();
    let no_cand: Vec<&str> = references
        .keys()
        .filter(|k| !candidates.contains_key(*k))
        .map(String::as_str)
        .collect();
    if !no_ref.is_empty() || !no_cand.is_empty() {
        let mut msg = String::from("candidate and reference ids differ");
        if !no_cand.is_empty() {
            let _ = write!(msg, "; missing candidates: {}", no_cand.join(", "));
        }
        if !no_ref.is_empty() {
            let _ = write!(msg, "; missing references: {}", no_ref.join(", "));
        }
        return Err(Error::invalid(msg));
    }
    if candidates.is_empty() {
        return Err(Error::invalid("no items to score"));
    }
    let items: Vec<ItemScore> = candidates
        .iter()
        .map(|(id, c)| ItemScore {
            id: id.clone(),
            score: spipe(c, &references[id], lexicon),
        })
        .collect();
    let (precision, recall, f1) = match averaging {
        Averaging::Macro => {
            let n = items.len() as f64;
            let mean =
                |f: fn(&SpipeScore) -> f64| items.iter().map(|i| f(&i.score)).sum::<f64>() / n;
            (mean(|s| s.precision), mean(|s| s.recall), mean(|s| s.f1))
        }
        Averaging::Micro => {
            let matched = items.iter().map(|i| i.score.matched).sum();
            let cand = candidates.values().map(|g| tuples(g).len()).sum();
            let refs = references.values().map(|g| tuples(g).len()).sum();
            let s = SpipeScore::from_counts(matched, cand, refs);
            (s.precision, s.recall, s.f1)
        }
    };
    Ok(SpipeReport {
        items,
        averaging,
        precision,
        recall,
        f1,
    })
}

fn pct(x: f64) -> String {
    format!("{:.1}", x * 100.0)
}

impl SpipeReport {
    /// Plain-text table in percent with one decimal.
    pub fn to_table(&self) -> String {
        let width = self
            .items
            .iter()
            .map(|i| i.id.len())
            .chain([4])
            .max()
            .unwrap_or(4);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>7}  {:>9}  {:>6}",
            "item", "F-score", "Precision", "Recall"
        );
        for i in &self.items {
            let _ = writeln!(
                out,
                "{:<width$}  {:>7}  {:>9}  {:>6}",
                i.id,
                pct(i.score.f1),
                pct(i.score.precision),
                pct(i.score.recall)
            );
        }
        let label = match self.averaging {
            Averaging::Macro => "mean",
            Averaging::Micro => "pooled",
        };
        let _ = writeln!(
            out,
            "{:<width$}  {:>7}  {:>9}  {:>6}",
            label,
            pct(self.f1),
            pct(self.precision),
            pct(self.recall)
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(objects: &[&str], attrs: &[(&str, &str)]) -> SceneGraph {
        SceneGraph {
            objects: objects.iter().map(|s| s.to_string()).collect(),
            attributes: attrs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            ..SceneGraph::default()
        }
    }

    fn corpus(items: &[(&str, SceneGraph)]) -> BTreeMap<String, SceneGraph> {
        items
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn identical_corpus_scores_one_hundred() {
        let c = corpus(&[
            ("a", g(&["dog"], &[("dog", "brown")])),
            ("b", g(&["sky"], &[])),
        ]);
        let r = score_corpus(&c, &c, &SynonymLexicon::new(), Averaging::Macro).unwrap();
        assert_eq!(r.f1, 1.0);
        let table = r.to_table();
        assert!(table
            .lines()
            .next()
            .unwrap()
            .contains("F-score  Precision  Recall"));
        assert!(table.lines().last().unwrap().contains("100.0"));
    }

    #[test]
    fn macro_and_micro_differ() {
        let cand = corpus(&[
            ("a", g(&["dog"], &[])),
            ("b", g(&["cat", "tree", "sky"], &[])),
        ]);
        let refs = corpus(&[("a", g(&["dog"], &[])), ("b", g(&["car"], &[]))]);
        let lex = SynonymLexicon::new();
        let m = score_corpus(&cand, &refs, &lex, Averaging::Macro).unwrap();
        assert_eq!(m.precision, 0.5);
        let p = score_corpus(&cand, &refs, &lex, Averaging::Micro).unwrap();
        assert_eq!(p.precision, 0.25);
        assert_eq!(p.recall, 0.5);
    }

    #[test]
    fn id_mismatch_lists_missing() {
        let cand = corpus(&[("a", g(&["dog"], &[]))]);
        let refs = corpus(&[("b", g(&["dog"], &[]))]);
        let msg = score_corpus(&cand, &refs, &SynonymLexicon::new(), Averaging::Macro)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("missing candidates: b"));
        assert!(msg.contains("missing references: a"));
    }

    #[test]
    fn jsonl_candidates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(
            &path,
            "{\"id\": \"x\", \"graph\": {\"objects\": [\"Dog\"]}}\n{\"id\": \"y\", \"conllu\": \"1\\tdog\\tdog\\tNOUN\\t_\\t_\\t0\\troot\\t_\\t_\\n\"}\n",
        )
        .unwrap();
        let c = load_candidates(&path).unwrap();
        assert_eq!(c["x"].objects, vec!["dog"]);
        assert_eq!(c["y"].objects, vec!["dog"]);
        std::fs::write(&path, "{\"id\": \"x\"}\n").unwrap();
        assert!(load_candidates(&path).is_err());
    }
}

//! Scene graphs and the synonym-matched tuple F-score between them.
//!
//! A graph is flattened into a set of semantic tuples: objects,
//! (object, attribute) pairs and (object, relation, subject) triples. Two
//! tuples match when they have the same arity and every component matches
//! by lemma or shared synset. The score is computed from a maximum
//! one-to-one matching between candidate and reference tuples, which makes
//! it independent of tuple order.

mod baseline;
mod conllu;
mod lexicon;
mod rules;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use baseline::{baseline_regions, naive_baseline_graph, BaselineRegion};
pub use conllu::{parse_conllu, DependencyTree, Token};
pub use lexicon::{lemmatize_phrase, lemmatize_word, normalize_phrase, SynonymLexicon};
pub use rules::graph_from_dependencies;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub objects: Vec<String>,
    #[serde(default)]
    pub attributes: Vec<(String, String)>,
    #[serde(default)]
    pub relations: Vec<(String, String, String)>,
    /// Token indices behind each object, parallel to `objects`, when the
    /// graph was extracted from a parse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Vec<Vec<usize>>>,
}

impl SceneGraph {
    /// Lowercases and collapses whitespace everywhere, and adds any
    /// attribute or relation endpoint missing from `objects`.
    pub fn normalized(&self) -> SceneGraph {
        let mut g = SceneGraph {
            objects: self.objects.iter().map(|o| normalize_phrase(o)).collect(),
            attributes: self
                .attributes
                .iter()
                .map(|(o, a)| (normalize_phrase(o), normalize_phrase(a)))
                .collect(),
            relations: self
                .relations
                .iter()
                .map(|(o, r, s)| {
                    (
                        normalize_phrase(o),
                        normalize_phrase(r),
                        normalize_phrase(s),
                    )
                })
                .collect(),
            provenance: None,
        };
        let mut endpoints: Vec<String> = g.attributes.iter().map(|(o, _)| o.clone()).collect();
        for (o, _, s) in &g.relations {
            endpoints.push(o.clone());
            endpoints.push(s.clone());
        }
        for e in endpoints {
            if !g.objects.contains(&e) {
                g.objects.push(e);
            }
        }
        g
    }

    pub fn validate(&self) -> Result<()> {
        let missing = self
            .attributes
            .iter()
            .map(|(o, _)| o)
            .chain(self.relations.iter().flat_map(|(o, _, s)| [o, s]))
            .find(|e| !self.objects.contains(e));
        if let Some(e) = missing {
            return Err(Error::invalid(format!(
                "`{e}` is used but not listed as an object"
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<SceneGraph> {
        let g: SceneGraph = serde_json::from_str(text)?;
        Ok(g.normalized())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SemanticTuple {
    Object(String),
    Attribute(String, String),
    Relation(String, String, String),
}

impl SemanticTuple {
    pub fn components(&self) -> Vec<&str> {
        match self {
            SemanticTuple::Object(o) => vec![o],
            SemanticTuple::Attribute(o, a) => vec![o, a],
            SemanticTuple::Relation(o, r, s) => vec![o, r, s],
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            SemanticTuple::Object(_) => 1,
            SemanticTuple::Attribute(..) => 2,
            SemanticTuple::Relation(..) => 3,
        }
    }
}

/// Flattens a graph into its normalized, deduplicated tuple set. Empty
/// components are dropped.
pub fn tuples(graph: &SceneGraph) -> BTreeSet<SemanticTuple> {
    let mut out = BTreeSet::new();
    for o in &graph.objects {
        let o = normalize_phrase(o);
        if !o.is_empty() {
            out.insert(SemanticTuple::Object(o));
        }
    }
    for (o, a) in &graph.attributes {
        let (o, a) = (normalize_phrase(o), normalize_phrase(a));
        if !o.is_empty() && !a.is_empty() {
            out.insert(SemanticTuple::Attribute(o, a));
        }
    }
    for (o, r, s) in &graph.relations {
        let (o, r, s) = (
            normalize_phrase(o),
            normalize_phrase(r),
            normalize_phrase(s),
        );
        if !o.is_empty() && !r.is_empty() && !s.is_empty() {
            out.insert(SemanticTuple::Relation(o, r, s));
        }
    }
    out
}

pub fn synonym_match(a: &SemanticTuple, b: &SemanticTuple, lexicon: &SynonymLexicon) -> bool {
    a.arity() == b.arity()
        && a.components()
            .iter()
            .zip(b.components())
            .all(|(x, y)| lexicon.phrases_match(x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpipeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub candidate_total: usize,
    pub reference_total: usize,
}

impl SpipeScore {
    pub fn from_counts(matched: usize, candidate_total: usize, reference_total: usize) -> Self {
        if candidate_total == 0 && reference_total == 0 {
            return SpipeScore {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
                matched: 0,
                candidate_total,
                reference_total,
            };
        }
        let ratio = |n: usize| {
            if n == 0 {
                0.0
            } else {
                matched as f64 / n as f64
            }
        };
        let (p, r) = (ratio(candidate_total), ratio(reference_total));
        let f1 = if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        };
        SpipeScore {
            precision: p,
            recall: r,
            f1,
            matched,
            candidate_total,
            reference_total,
        }
    }
}

/// Size of a maximum matching in the bipartite graph given by `adj`
/// (left vertex → right vertices), by augmenting paths.
pub fn max_bipartite_matching(adj: &[Vec<usize>], right_count: usize) -> usize {
    fn augment(
        u: usize,
        adj: &[Vec<usize>],
        visited: &mut [bool],
        match_right: &mut [Option<usize>],
    ) -> bool {
        for &v in &adj[u] {
            if visited[v] {
                continue;
            }
            visited[v] = true;
            let free = match match_right[v] {
                None => true,
                Some(w) => augment(w, adj, visited, match_right),
            };
            if free {
                match_right[v] = Some(u);
                return true;
            }
        }
        false
    }

    let mut match_right = vec![None; right_count];
    let mut size = 0;
    for u in 0..adj.len() {
        let mut visited = vec![false; right_count];
        if augment(u, adj, &mut visited, &mut match_right) {
            size += 1;
        }
    }
    size
}

/// Score between two tuple sets.
pub fn spipe_tuples(
    candidate: &BTreeSet<SemanticTuple>,
    reference: &BTreeSet<SemanticTuple>,
    lexicon: &SynonymLexicon,
) -> SpipeScore {
    let refs: Vec<&SemanticTuple> = reference.iter().collect();
    let adj: Vec<Vec<usize>> = candidate
        .iter()
        .map(|c| {
            refs.iter()
                .enumerate()
                .filter(|(_, r)| synonym_match(c, r, lexicon))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let matched = max_bipartite_matching(&adj, refs.len());
    SpipeScore::from_counts(matched, candidate.len(), reference.len())
}

pub fn spipe(
    candidate: &SceneGraph,
    reference: &SceneGraph,
    lexicon: &SynonymLexicon,
) -> SpipeScore {
    spipe_tuples(&tuples(candidate), &tuples(reference), lexicon)
}

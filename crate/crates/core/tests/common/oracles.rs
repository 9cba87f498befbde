//! Brute-force reference implementations and random instance generators
//! shared by the property tests and the acceptance suite.
//!
//! Boxes use integer coordinates so IoU comparisons can be done exactly in
//! integer arithmetic, independently of the float code under test.

#![allow(dead_code)]

use std::collections::BTreeSet;

use best_core::gateway::BoundingBox;
use best_core::sgraph::{synonym_match, SceneGraph, SemanticTuple, SynonymLexicon};
use rand::Rng;

/// Position of every index when sorted by descending score, ties by index,
/// computed by counting rather than sorting.
pub fn ranks(scores: &[f64]) -> Vec<usize> {
    (0..scores.len())
        .map(|i| {
            (0..scores.len())
                .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                .count()
        })
        .collect()
}

fn by_rank(indices: Vec<usize>, ranks: &[usize]) -> Vec<usize> {
    let mut slots = vec![None; ranks.len()];
    for i in indices {
        slots[ranks[i]] = Some(i);
    }
    slots.into_iter().flatten().collect()
}

/// `iou(a, b) > num/den` in exact integer arithmetic.
pub fn iou_exceeds(a: &BoundingBox, b: &BoundingBox, num: i64, den: i64) -> bool {
    let c = |v: f64| v as i64;
    let w = (c(a.x_max).min(c(b.x_max)) - c(a.x_min).max(c(b.x_min))).max(0);
    let h = (c(a.y_max).min(c(b.y_max)) - c(a.y_min).max(c(b.y_min))).max(0);
    let inter = w * h;
    let area = |x: &BoundingBox| (c(x.x_max) - c(x.x_min)) * (c(x.y_max) - c(x.y_min));
    let union = area(a) + area(b) - inter;
    union > 0 && den * inter > num * union
}

/// Box `i` survives when no surviving box of better rank overlaps it by
/// more than `num/den`; the first `keep` survivors by rank are returned.
pub fn nms_oracle(boxes: &[BoundingBox], num: i64, den: i64, keep: usize) -> Vec<BoundingBox> {
    let scores: Vec<f64> = boxes.iter().map(|b| b.score).collect();
    let rank = ranks(&scores);
    let order = by_rank((0..boxes.len()).collect(), &rank);
    let mut survives = vec![false; boxes.len()];
    for (pos, &i) in order.iter().enumerate() {
        survives[i] = order[..pos]
            .iter()
            .all(|&j| !survives[j] || !iou_exceeds(&boxes[j], &boxes[i], num, den));
    }
    order
        .into_iter()
        .filter(|&i| survives[i])
        .take(keep)
        .map(|i| boxes[i])
        .collect()
}

pub fn top_m_oracle(scores: &[f64], m: usize) -> Vec<usize> {
    let rank = ranks(scores);
    by_rank((0..scores.len()).filter(|&i| rank[i] < m).collect(), &rank)
}

pub fn argmax_oracle(scores: &[f64]) -> Option<usize> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().position(|&s| s == max)
}

pub fn above_oracle(scores: &[f64], threshold: f64) -> Vec<usize> {
    let rank = ranks(scores);
    by_rank(
        (0..scores.len())
            .filter(|&i| scores[i] > threshold)
            .collect(),
        &rank,
    )
}

pub fn rows_oracle(rows: &[Vec<f64>], beta: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let mut hit = false;
        for &s in row {
            hit |= s > beta;
        }
        if hit {
            out.push(i);
        }
    }
    out
}

/// Largest matching by trying every assignment of left vertices to unused
/// right vertices (or to nothing).
pub fn brute_matching(adj: &[Vec<bool>], right: usize) -> usize {
    fn go(i: usize, adj: &[Vec<bool>], used: &mut Vec<bool>) -> usize {
        if i == adj.len() {
            return 0;
        }
        let mut best = go(i + 1, adj, used);
        for j in 0..used.len() {
            if adj[i][j] && !used[j] {
                used[j] = true;
                best = best.max(1 + go(i + 1, adj, used));
                used[j] = false;
            }
        }
        best
    }
    go(0, adj, &mut vec![false; right])
}

pub fn brute_spipe_matched(
    cand: &BTreeSet<SemanticTuple>,
    reference: &BTreeSet<SemanticTuple>,
    lex: &SynonymLexicon,
) -> usize {
    let refs: Vec<&SemanticTuple> = reference.iter().collect();
    let adj: Vec<Vec<bool>> = cand
        .iter()
        .map(|c| refs.iter().map(|r| synonym_match(c, r, lex)).collect())
        .collect();
    brute_matching(&adj, refs.len())
}

pub fn random_box<R: Rng>(rng: &mut R, w: i64, h: i64) -> BoundingBox {
    let x0 = rng.random_range(0..w - 1);
    let y0 = rng.random_range(0..h - 1);
    let x1 = rng.random_range(x0 + 1..=w);
    let y1 = rng.random_range(y0 + 1..=h);
    // coarse scores so that ties happen
    let score = f64::from(rng.random_range(0..20u32)) / 20.0;
    BoundingBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64, score)
}

/// Scores on a coarse grid in [-1, 1] so that ties and threshold hits occur.
pub fn random_scores<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| f64::from(rng.random_range(-20..=20i32)) / 20.0)
        .collect()
}

pub const OBJECTS: &[&str] = &["dog", "dogs", "couch", "sofa", "man", "men", "tree", "cup"];
pub const ATTRS: &[&str] = &["brown", "red", "sitting", "old"];
pub const RELS: &[&str] = &["on", "near", "in front of"];

/// Lexicon over the generator vocabulary with couch/sofa as synonyms.
pub fn test_lexicon() -> SynonymLexicon {
    SynonymLexicon::parse("couch\tn04256520\nsofa\tn04256520\nman\tn10287213\nguy\tn10287213\n")
        .expect("fixture lexicon parses")
}

/// A graph with at most `max_tuples` tuples drawn from a small vocabulary
/// with inflected forms and synonyms.
pub fn random_graph<R: Rng>(rng: &mut R, max_tuples: usize) -> SceneGraph {
    let mut g = SceneGraph::default();
    let pick = |rng: &mut R, v: &[&str]| v[rng.random_range(0..v.len())].to_string();
    let target = rng.random_range(0..=max_tuples);
    let mut guard = 0;
    while best_core::sgraph::tuples(&g).len() < target && guard < 50 {
        guard += 1;
        let mut next = g.clone();
        match rng.random_range(0..3) {
            0 => next.objects.push(pick(rng, OBJECTS)),
            1 => next.attributes.push((pick(rng, OBJECTS), pick(rng, ATTRS))),
            _ => next
                .relations
                .push((pick(rng, OBJECTS), pick(rng, RELS), pick(rng, OBJECTS))),
        }
        if best_core::sgraph::tuples(&next).len() <= target {
            g = next;
        }
    }
    g
}

mod common;

use common::oracles::*;

use best_core::clues::{
    above_threshold, argmax, assign_attribute, nms, region_tags, rows_above, select_regions,
    select_top_tags, top_m, Vocabulary,
};
use best_core::gateway::{BoundingBox, UnitEmbedding};
use best_core::judge::{best_index, keep_sentences};
use best_core::sgraph::{
    graph_from_dependencies, max_bipartite_matching, parse_conllu, spipe, spipe_tuples, tuples,
    SceneGraph, SynonymLexicon,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scores_strategy(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-20i32..=20).prop_map(|k| f64::from(k) / 20.0), 0..max)
}

fn boxes_strategy() -> impl Strategy<Value = Vec<BoundingBox>> {
    prop::collection::vec((0i64..40, 0i64..40, 1i64..30, 1i64..30, 0u32..10), 0..30).prop_map(
        |raw| {
            raw.into_iter()
                .map(|(x, y, w, h, s)| {
                    BoundingBox::new(
                        x as f64,
                        y as f64,
                        (x + w) as f64,
                        (y + h) as f64,
                        f64::from(s) / 10.0,
                    )
                })
                .collect()
        },
    )
}

fn graph_strategy() -> impl Strategy<Value = SceneGraph> {
    any::<u64>().prop_map(|seed| random_graph(&mut ChaCha8Rng::seed_from_u64(seed), 6))
}

/// Embeddings with components in {-1, 0, 1} so that exact score ties occur.
fn coarse_embedding(rng: &mut ChaCha8Rng, dim: usize) -> UnitEmbedding {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1..=1) as f32).collect();
        if let Ok(e) = UnitEmbedding::normalize(&v) {
            return e;
        }
    }
}

fn coarse_vocab(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vocabulary {
    let entries = (0..n).map(|i| format!("tag{i}")).collect();
    let embs = (0..n).map(|_| coarse_embedding(rng, dim)).collect();
    Vocabulary::from_parts(entries, embs).unwrap()
}

proptest! {
    #[test]
    fn nms_matches_oracle(boxes in boxes_strategy(), keep in 1usize..20) {
        prop_assert_eq!(nms(&boxes, 0.5, keep), nms_oracle(&boxes, 1, 2, keep));
        prop_assert_eq!(nms(&boxes, 0.3, keep), nms_oracle(&boxes, 3, 10, keep));
    }

    #[test]
    fn kept_boxes_overlap_at_most_threshold(boxes in boxes_strategy()) {
        let kept = nms(&boxes, 0.5, 100);
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(a.iou(b) <= 0.5);
            }
        }
    }

    #[test]
    fn score_selection_matches_oracles(scores in scores_strategy(40), m in 0usize..10, t in -20i32..=20) {
        let t = f64::from(t) / 20.0;
        prop_assert_eq!(top_m(&scores, m), top_m_oracle(&scores, m));
        prop_assert_eq!(argmax(&scores), argmax_oracle(&scores));
        prop_assert_eq!(above_threshold(&scores, t), above_oracle(&scores, t));
    }

    #[test]
    fn row_membership_matches_oracle(rows in prop::collection::vec(scores_strategy(8), 0..12), beta in -20i32..=20) {
        let beta = f64::from(beta) / 20.0;
        prop_assert_eq!(rows_above(&rows, beta), rows_oracle(&rows, beta));
    }

    #[test]
    fn argmax_survives_power_of_two_rescaling(scores in scores_strategy(30), k in -10i32..=10) {
        prop_assume!(!scores.is_empty());
        let c = 2f64.powi(k);
        let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
        prop_assert_eq!(best_index(&scores).unwrap(), best_index(&scaled).unwrap());
    }

    #[test]
    fn sentence_filter_is_monotone_and_never_empty(
        sims in scores_strategy(12),
        g1 in -20i32..=20,
        g2 in -20i32..=20,
    ) {
        let (lo, hi) = (f64::from(g1.min(g2)) / 20.0, f64::from(g1.max(g2)) / 20.0);
        let loose = keep_sentences(&sims, lo);
        let strict = keep_sentences(&sims, hi);
        prop_assert!(strict.iter().all(|i| loose.contains(i)));
        prop_assert_eq!(strict.is_empty(), sims.is_empty());
        prop_assert_eq!(loose.is_empty(), sims.is_empty());
    }

    #[test]
    fn spipe_identity(g in graph_strategy()) {
        let s = spipe(&g, &g, &test_lexicon());
        prop_assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn spipe_symmetry(c in graph_strategy(), r in graph_strategy()) {
        let lex = test_lexicon();
        let forward = spipe(&c, &r, &lex);
        let backward = spipe(&r, &c, &lex);
        prop_assert_eq!(forward.precision, backward.recall);
        prop_assert_eq!(forward.recall, backward.precision);
        prop_assert_eq!(forward.f1, backward.f1);
    }

    #[test]
    fn spipe_matches_brute_force(c in graph_strategy(), r in graph_strategy()) {
        let lex = test_lexicon();
        let (ct, rt) = (tuples(&c), tuples(&r));
        prop_assert_eq!(spipe_tuples(&ct, &rt, &lex).matched, brute_spipe_matched(&ct, &rt, &lex));
    }

    #[test]
    fn duplicate_tuples_do_not_change_the_score(c in graph_strategy(), r in graph_strategy()) {
        let lex = test_lexicon();
        let mut doubled = c.clone();
        doubled.objects.extend(c.objects.iter().map(|o| o.to_uppercase()));
        doubled.attributes.extend(c.attributes.iter().cloned());
        doubled.relations.extend(c.relations.iter().cloned());
        prop_assert_eq!(spipe(&doubled, &r, &lex), spipe(&c, &r, &lex));
    }

    #[test]
    fn adding_a_reference_tuple_never_lowers_matches(c in graph_strategy(), r in graph_strategy(), extra in 0usize..OBJECTS.len()) {
        let lex = SynonymLexicon::new();
        let mut bigger = r.clone();
        bigger.objects.push(OBJECTS[extra].to_string());
        prop_assert!(spipe(&c, &bigger, &lex).matched >= spipe(&c, &r, &lex).matched);
    }

    #[test]
    fn matching_agrees_with_brute_force(
        adj in prop::collection::vec(prop::collection::vec(any::<bool>(), 6), 0..7)
    ) {
        let lists: Vec<Vec<usize>> = adj
            .iter()
            .map(|row| (0..6).filter(|&j| row[j]).collect())
            .collect();
        prop_assert_eq!(max_bipartite_matching(&lists, 6), brute_matching(&adj, 6));
    }

    /// Any structurally valid parse yields a graph whose tuples reference
    /// only listed objects.
    #[test]
    fn rules_are_total(heads in prop::collection::vec(0usize..6, 1..6), rels in prop::collection::vec(0usize..10, 6), tags in prop::collection::vec(0usize..5, 6)) {
        const DEPRELS: &[&str] = &["nsubj", "obj", "amod", "obl", "case", "cop", "det", "acl", "conj", "nmod"];
        const UPOS: &[&str] = &["NOUN", "VERB", "ADJ", "ADP", "AUX"];
        let n = heads.len();
        let mut text = String::new();
        for (i, &h) in heads.iter().enumerate() {
            // a head of 0 or pointing at itself becomes root
            let head = if h > n || h == i + 1 { 0 } else { h };
            let rel = if head == 0 { "root" } else { DEPRELS[rels[i]] };
            text.push_str(&format!("{}\tw{i}\tw{i}\t{}\t_\t_\t{head}\t{rel}\t_\t_\n", i + 1, UPOS[tags[i]]));
        }
        if let Ok(trees) = parse_conllu(&text) {
            for tree in &trees {
                let g = graph_from_dependencies(tree);
                prop_assert!(g.validate().is_ok());
            }
        }
    }
}

#[test]
fn embedding_level_selection_matches_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let dim = rng.random_range(2..5);
        let n = rng.random_range(1..12);
        let vocab = coarse_vocab(&mut rng, n, dim);
        let query = coarse_embedding(&mut rng, dim);
        let scores = vocab.scores(&query).unwrap();
        let m = rng.random_range(1..8);
        let beta = f64::from(rng.random_range(-4..=4)) / 5.0;

        let tags = select_top_tags(&query, &vocab, m).unwrap();
        let want: Vec<&str> = top_m_oracle(&scores, m)
            .into_iter()
            .map(|i| vocab.entry(i))
            .collect();
        assert_eq!(
            tags.iter().map(|t| t.tag.as_str()).collect::<Vec<_>>(),
            want
        );

        let attr = assign_attribute(&query, &vocab).unwrap();
        assert_eq!(attr.tag, vocab.entry(argmax_oracle(&scores).unwrap()));

        let filtered = region_tags(&query, &vocab, beta).unwrap();
        let want: Vec<&str> = above_oracle(&scores, beta)
            .into_iter()
            .map(|i| vocab.entry(i))
            .collect();
        assert_eq!(
            filtered.iter().map(|t| t.tag.as_str()).collect::<Vec<_>>(),
            want
        );

        let regions: Vec<UnitEmbedding> = (0..rng.random_range(0..6))
            .map(|_| coarse_embedding(&mut rng, dim))
            .collect();
        let rows: Vec<Vec<f64>> = regions.iter().map(|r| vocab.scores(r).unwrap()).collect();
        assert_eq!(
            select_regions(&regions, &vocab, beta).unwrap(),
            rows_oracle(&rows, beta)
        );
    }
}

#[test]
fn scores_are_plain_dot_products() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vocab = coarse_vocab(&mut rng, 20, 4);
    let query = coarse_embedding(&mut rng, 4);
    for (e, s) in vocab.embeddings().iter().zip(vocab.scores(&query).unwrap()) {
        let dot: f64 = e
            .values()
            .iter()
            .zip(query.values())
            .map(|(a, b)| f64::from(*a) * f64::from(*b))
            .sum();
        assert!((dot - s).abs() < 1e-6, "{dot} vs {s}");
    }
}

#[test]
fn empty_graph_conventions() {
    let lex = SynonymLexicon::new();
    let empty = SceneGraph::default();
    let mut one = SceneGraph::default();
    one.objects.push("dog".into());
    let s = spipe(&empty, &empty, &lex);
    assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    let s = spipe(&one, &empty, &lex);
    assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    let s = spipe(&empty, &one, &lex);
    assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
}

//! Box filtering and similarity-based selection. All ties resolve to the
//! lowest input index.

use std::cmp::Ordering;

use super::{ScoredTag, Vocabulary};
use crate::error::{Error, Result};
use crate::gateway::{BoundingBox, UnitEmbedding};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_NMS_KEEP: usize = 100;
pub const DEFAULT_MIN_AREA_FRACTION: f64 = 1.0 / 400.0;
pub const DEFAULT_TOP_TAGS: usize = 5;
pub const DEFAULT_BETA: f64 = 0.2;

/// Descending order in which `-0.0` and `0.0` tie.
fn descending(a: f64, b: f64) -> Ordering {
    (b + 0.0).total_cmp(&(a + 0.0))
}

/// Greedy non-maximum suppression by descending score. A box is suppressed
/// when its IoU with an already kept box exceeds `iou_threshold`, so kept
/// boxes overlap pairwise by at most the threshold. At most `keep` boxes
/// survive.
pub fn nms(boxes: &[BoundingBox], iou_threshold: f64, keep: usize) -> Vec<BoundingBox> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| descending(boxes[a].score, boxes[b].score));
    let mut kept: Vec<BoundingBox> = Vec::new();
    for i in order {
        if kept.len() >= keep {
            break;
        }
        let candidate = boxes[i];
        if kept.iter().all(|k| k.iou(&candidate) <= iou_threshold) {
            kept.push(candidate);
        }
    }
    kept
}

/// Drops boxes whose area is below `min_area_fraction` of the image area.
pub fn prune_small(
    boxes: &[BoundingBox],
    image_width: u32,
    image_height: u32,
    min_area_fraction: f64,
) -> Vec<BoundingBox> {
    let image_area = f64::from(image_width) * f64::from(image_height);
    boxes
        .iter()
        .filter(|b| b.area() / image_area >= min_area_fraction)
        .copied()
        .collect()
}

/// Indices of the `m` highest scores, in descending score order.
pub fn top_m(scores: &[f64], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| descending(scores[a], scores[b]));
    order.truncate(m);
    order
}

/// Index of the highest score, lowest index on ties.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some(b) if scores[b] >= s => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Indices with score strictly above `threshold`, in descending score order.
pub fn above_threshold(scores: &[f64], threshold: f64) -> Vec<usize> {
    let mut hits: Vec<usize> = (0..scores.len())
        .filter(|&i| scores[i] > threshold)
        .collect();
    hits.sort_by(|&a, &b| descending(scores[a], scores[b]));
    hits
}

/// Rows (regions) where at least one column (tag) scores strictly above
/// `beta`. Row order is preserved.
pub fn rows_above(score_rows: &[Vec<f64>], beta: f64) -> Vec<usize> {
    score_rows
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().any(|&s| s > beta))
        .map(|(i, _)| i)
        .collect()
}

fn check_m(m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::invalid("tag count M must be at least 1"));
    }
    Ok(())
}

/// The `m` best-matching tags for an image embedding.
pub fn select_top_tags(
    image_emb: &UnitEmbedding,
    vocab: &Vocabulary,
    m: usize,
) -> Result<Vec<ScoredTag>> {
    check_m(m)?;
    let scores = vocab.scores(image_emb)?;
    Ok(top_m(&scores, m)
        .into_iter()
        .map(|i| ScoredTag::new(vocab.entry(i), scores[i]))
        .collect())
}

/// Indices of regions aligned with at least one tag.
pub fn select_regions(
    region_embs: &[UnitEmbedding],
    vocab: &Vocabulary,
    beta: f64,
) -> Result<Vec<usize>> {
    let rows = region_embs
        .iter()
        .map(|e| vocab.scores(e))
        .collect::<Result<Vec<_>>>()?;
    Ok(rows_above(&rows, beta))
}

pub fn assign_attribute(region_emb: &UnitEmbedding, attrs: &Vocabulary) -> Result<ScoredTag> {
    let scores = attrs.scores(region_emb)?;
    let i = argmax(&scores).ok_or_else(|| Error::invalid("attribute vocabulary is empty"))?;
    Ok(ScoredTag::new(attrs.entry(i), scores[i]))
}

pub fn region_tags(
    region_emb: &UnitEmbedding,
    vocab: &Vocabulary,
    beta: f64,
) -> Result<Vec<ScoredTag>> {
    let scores = vocab.scores(region_emb)?;
    Ok(above_threshold(&scores, beta)
        .into_iter()
        .map(|i| ScoredTag::new(vocab.entry(i), scores[i]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64, s: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1, s)
    }

    #[test]
    fn nms_single_box() {
        let one = [b(0.0, 0.0, 5.0, 5.0, 0.3)];
        assert_eq!(nms(&one, 0.5, 100), one.to_vec());
        assert!(nms(&[], 0.5, 100).is_empty());
    }

    #[test]
    fn nms_identical_boxes_keep_higher_score() {
        let boxes = [b(0.0, 0.0, 10.0, 10.0, 0.8), b(0.0, 0.0, 10.0, 10.0, 0.9)];
        let kept = nms(&boxes, 0.5, 100);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 0.9);
    }

    #[test]
    fn nms_respects_keep_limit() {
        let boxes: Vec<_> = (0..10)
            .map(|i| {
                b(
                    i as f64 * 20.0,
                    0.0,
                    i as f64 * 20.0 + 10.0,
                    10.0,
                    1.0 - i as f64 * 0.05,
                )
            })
            .collect();
        let kept = nms(&boxes, 0.5, 3);
        assert_eq!(kept, boxes[..3].to_vec());
    }

    #[test]
    fn prune_small_defaults() {
        assert_eq!(DEFAULT_MIN_AREA_FRACTION, 1.0 / 400.0);
        let boxes = [
            b(0.0, 0.0, 1000.0, 1000.0, 0.5),
            b(10.0, 10.0, 11.0, 11.0, 0.9),
        ];
        let kept = prune_small(&boxes, 1000, 1000, DEFAULT_MIN_AREA_FRACTION);
        assert_eq!(kept, vec![boxes[0]]);
        // exactly at the fraction is kept
        let edge = [b(0.0, 0.0, 50.0, 50.0, 0.5)];
        assert_eq!(prune_small(&edge, 1000, 1000, 1.0 / 400.0).len(), 1);
    }

    #[test]
    fn top_m_orders_and_truncates() {
        assert_eq!(top_m(&[0.9, 0.5, 0.7], 2), vec![0, 2]);
        assert_eq!(top_m(&[0.9, 0.5, 0.7], 10), vec![0, 2, 1]);
        assert_eq!(top_m(&[0.5, 0.5, 0.5], 2), vec![0, 1]);
        assert_eq!(DEFAULT_TOP_TAGS, 5);
    }

    #[test]
    fn strict_threshold_excludes_equality() {
        assert_eq!(DEFAULT_BETA, 0.2);
        let rows = vec![vec![0.1, 0.2], vec![0.2000001, 0.0]];
        assert_eq!(rows_above(&rows, 0.2), vec![1]);
        assert!(above_threshold(&[0.2, 0.1], 0.2).is_empty());
        assert_eq!(above_threshold(&[0.2, 0.1], -1.0), vec![0, 1]);
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        assert_eq!(argmax(&[0.3, 0.3]), Some(0));
        assert_eq!(argmax(&[0.1, 0.4, 0.4]), Some(1));
        assert_eq!(argmax(&[]), None);
        assert_eq!(argmax(&[-0.5]), Some(0));
    }
}

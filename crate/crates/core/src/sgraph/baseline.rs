//! Region-based scene graph built directly from embeddings, without a
//! language model.

use crate::clues::{
    argmax, nms, prune_small, Vocabulary, DEFAULT_IOU_THRESHOLD, DEFAULT_MIN_AREA_FRACTION,
    DEFAULT_NMS_KEEP,
};
use crate::error::{Error, Result};
use crate::gateway::{BoundingBox, Gateway, ImageInput, UnitEmbedding};

use super::SceneGraph;

#[derive(Debug, Clone)]
pub struct BaselineRegion {
    pub embedding: UnitEmbedding,
    pub bbox: BoundingBox,
}

/// Detected, suppressed and pruned regions of `image` with their
/// embeddings, using the default selection parameters.
pub async fn baseline_regions(
    gateway: &Gateway,
    image: &ImageInput,
) -> Result<Vec<BaselineRegion>> {
    let boxes = gateway.detect(image).await?;
    let boxes = nms(&boxes, DEFAULT_IOU_THRESHOLD, DEFAULT_NMS_KEEP);
    let boxes = prune_small(
        &boxes,
        image.width(),
        image.height(),
        DEFAULT_MIN_AREA_FRACTION,
    );
    let embeddings = gateway.embed_regions(image, &boxes).await?;
    Ok(embeddings
        .into_iter()
        .zip(boxes)
        .map(|(embedding, bbox)| BaselineRegion { embedding, bbox })
        .collect())
}

fn best_entry(vocab: &Vocabulary, emb: &UnitEmbedding) -> Result<String> {
    let scores = vocab.scores(emb)?;
    let i = argmax(&scores).ok_or_else(|| Error::invalid("vocabulary is empty"))?;
    Ok(vocab.entry(i).to_string())
}

/// One object and one attribute per region, then one relation per
/// unordered region pair. The relation is the best match for the union box
/// of the pair, and its direction is whichever phrasing embeds closer to
/// that box; ties keep the lower-indexed region as subject.
///
/// Object names are not deduplicated, so `n` regions always give `n`
/// attributes and `n(n-1)/2` relations.
pub async fn naive_baseline_graph(
    gateway: &Gateway,
    image: &ImageInput,
    regions: &[BaselineRegion],
    objects: &Vocabulary,
    attributes: &Vocabulary,
    relations: &Vocabulary,
) -> Result<SceneGraph> {
    if regions.is_empty() {
        return Err(Error::invalid("the baseline needs at least one region"));
    }
    let mut graph = SceneGraph::default();
    for r in regions {
        let object = best_entry(objects, &r.embedding)?;
        let attribute = best_entry(attributes, &r.embedding)?;
        graph.attributes.push((object.clone(), attribute));
        graph.objects.push(object);
    }
    for i in 0..regions.len() {
        for j in i + 1..regions.len() {
            let union = regions[i].bbox.union_box(&regions[j].bbox);
            let union_emb = gateway.embed_image(image, Some(&union)).await?;
            let rel = best_entry(relations, &union_emb)?;
            let (oi, oj) = (&graph.objects[i], &graph.objects[j]);
            let phrasings = [format!("{oi} {rel} {oj}"), format!("{oj} {rel} {oi}")];
            let embs = gateway.embed_texts(&phrasings).await?;
            let forward = embs[0].similarity(&union_emb)?;
            let backward = embs[1].similarity(&union_emb)?;
            let triple = if backward > forward {
                (oj.clone(), rel, oi.clone())
            } else {
                (oi.clone(), rel, oj.clone())
            };
            graph.relations.push(triple);
        }
    }
    Ok(graph)
}

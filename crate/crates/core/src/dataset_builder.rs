//! Builds the visual-context relatedness dataset from a corpus of captioned
//! images with detected objects.
//!
//! Per image: [`filter_detections`] drops unconfident detections and keeps the
//! top-k per classifier, [`dedup_contexts`] collapses near-synonymous labels,
//! and every human caption is paired with the resulting context text, scored by
//! cosine similarity and labelled once per threshold.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Detection, EmbeddingTable, ImageRecord, RelatednessRecord};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scorer::{cosine, join_labels, ContextJoin};
use crate::textnorm::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuilderConfig {
    pub confidence_threshold: f64,
    pub top_k_contexts: usize,
    pub dedup_threshold: f64,
    pub label_thresholds: Vec<f64>,
    pub context_join: ContextJoin,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        BuilderConfig {
            confidence_threshold: 0.2,
            top_k_contexts: 3,
            dedup_threshold: 0.9,
            label_thresholds: vec![0.2, 0.3, 0.4],
            context_join: ContextJoin::Concatenated,
        }
    }
}

impl BuilderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::invalid(format!(
                "confidence threshold {} not in [0, 1]",
                self.confidence_threshold
            )));
        }
        if self.top_k_contexts == 0 {
            return Err(Error::invalid("top_k_contexts must be at least 1"));
        }
        if !(self.dedup_threshold > 0.0 && self.dedup_threshold <= 1.0) {
            return Err(Error::invalid(format!(
                "dedup threshold {} not in (0, 1]",
                self.dedup_threshold
            )));
        }
        if let Some(t) = self
            .label_thresholds
            .iter()
            .find(|t| !(0.0..=1.0).contains(*t))
        {
            return Err(Error::invalid(format!("label threshold {t} not in [0, 1]")));
        }
        Ok(())
    }

    /// Label thresholds ascending with duplicates removed.
    pub fn sorted_thresholds(&self) -> Vec<f64> {
        let mut t = self.label_thresholds.clone();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

fn by_confidence(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.label.cmp(&b.label))
        .then_with(|| a.source.cmp(&b.source))
}

/// Keeps detections with confidence >= the threshold, at most `top_k` per
/// classifier, ordered by confidence descending then label ascending.
pub fn filter_detections(detections: &[Detection], cfg: &BuilderConfig) -> Vec<Detection> {
    let mut kept: Vec<Detection> = detections
        .iter()
        .filter(|d| d.confidence >= cfg.confidence_threshold)
        .cloned()
        .collect();
    kept.sort_by(by_confidence);
    let mut per_source: HashMap<_, usize> = HashMap::new();
    kept.retain(|d| {
        let n = per_source.entry(d.source.clone()).or_insert(0);
        *n += 1;
        *n <= cfg.top_k_contexts
    });
    kept
}

/// Greedy removal of duplicate labels in confidence order. A detection goes if
/// its label string equals a kept one, or if its label embedding has cosine
/// >= `dedup_threshold` with a kept label's embedding.
pub fn dedup_contexts<T: Scalar>(
    detections: &[Detection],
    emb: &EmbeddingTable<T>,
    cfg: &BuilderConfig,
) -> Result<Vec<Detection>> {
    let mut ordered: Vec<&Detection> = detections.iter().collect();
    ordered.sort_by(|a, b| by_confidence(a, b));
    let th = T::of(cfg.dedup_threshold);
    let mut kept: Vec<(&Detection, &[T])> = Vec::new();
    for d in ordered {
        let label = d.label.trim();
        if kept.iter().any(|(k, _)| k.label.trim() == label) {
            continue;
        }
        let v = emb.require(label)?;
        let mut dup = false;
        for (_, kv) in &kept {
            if cosine(v, kv)? >= th {
                dup = true;
                break;
            }
        }
        if !dup {
            kept.push((d, v));
        }
    }
    Ok(kept.into_iter().map(|(d, _)| d.clone()).collect())
}

/// Cosine between the embeddings stored under the two exact texts.
pub fn relatedness_score<T: Scalar>(
    context_text: &str,
    caption: &str,
    emb: &EmbeddingTable<T>,
) -> Result<f64> {
    let c = cosine(emb.require(context_text)?, emb.require(caption)?)?;
    Ok(c.as_f64().clamp(-1.0, 1.0))
}

/// 1 iff `score >= th`.
pub fn assign_label(score: f64, th: f64) -> u8 {
    u8::from(score >= th)
}

/// Context texts an image contributes, after filtering and dedup.
fn context_texts(retained: &[Detection], join: ContextJoin) -> Vec<String> {
    match join {
        ContextJoin::Concatenated => vec![join_labels(retained)],
        ContextJoin::PerObject => retained.iter().map(|d| d.label.trim().to_string()).collect(),
    }
}

/// Retained detections for one image: filter then dedup.
pub fn retained_contexts<T: Scalar>(
    image: &ImageRecord,
    emb: &EmbeddingTable<T>,
    cfg: &BuilderConfig,
) -> Result<Vec<Detection>> {
    let filtered = filter_detections(&image.detections, cfg);
    dedup_contexts(&filtered, emb, cfg)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildOutput {
    pub records: Vec<RelatednessRecord>,
    /// Images with no detection left after filtering.
    pub skipped: Vec<String>,
}

impl BuildOutput {
    /// Record count and positive count per threshold, ascending.
    pub fn counts_per_threshold(&self) -> Vec<(f64, usize, usize)> {
        let mut out: Vec<(f64, usize, usize)> = Vec::new();
        for r in &self.records {
            match out.iter_mut().find(|(t, _, _)| *t == r.threshold) {
                Some(e) => {
                    e.1 += 1;
                    e.2 += usize::from(r.label);
                }
                None => out.push((r.threshold, 1, usize::from(r.label))),
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }
}

/// One record per (caption, context text, threshold), in corpus order, then
/// caption order, then context order, then ascending threshold. Images are
/// processed in parallel on the current rayon pool; output order does not
/// depend on the pool size.
pub fn build_relatedness_dataset<T: Scalar>(
    corpus: &[ImageRecord],
    emb: &EmbeddingTable<T>,
    cfg: &BuilderConfig,
) -> Result<BuildOutput> {
    cfg.validate()?;
    let thresholds = cfg.sorted_thresholds();
    let per_image: Vec<Result<Option<Vec<RelatednessRecord>>>> = corpus
        .par_iter()
        .map(|image| {
            let retained = retained_contexts(image, emb, cfg)?;
            if retained.is_empty() {
                return Ok(None);
            }
            let contexts = context_texts(&retained, cfg.context_join);
            let mut recs = Vec::new();
            for caption in &image.human_captions {
                for ctx in &contexts {
                    let cos = relatedness_score(ctx, caption, emb)?;
                    for &th in &thresholds {
                        recs.push(RelatednessRecord {
                            caption: caption.clone(),
                            context: ctx.clone(),
                            cosine: cos,
                            label: assign_label(cos, th),
                            threshold: th,
                        });
                    }
                }
            }
            Ok(Some(recs))
        })
        .collect();

    let mut out = BuildOutput::default();
    for (image, res) in corpus.iter().zip(per_image) {
        match res? {
            Some(recs) => out.records.extend(recs),
            None => out.skipped.push(image.image_id.clone()),
        }
    }
    Ok(out)
}

/// Caption/context pairs where a retained label literally occurs in the
/// caption as a contiguous token run. Only the overlapping labels are kept in
/// the context field; the label is 1, the threshold 0 and the cosine 1.
pub fn build_overlap_dataset(
    corpus: &[ImageRecord],
    cfg: &BuilderConfig,
) -> Result<Vec<RelatednessRecord>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for image in corpus {
        let mut labels: Vec<String> = Vec::new();
        for d in filter_detections(&image.detections, cfg) {
            let l = d.label.trim().to_string();
            if !labels.contains(&l) {
                labels.push(l);
            }
        }
        let label_tokens: Vec<_> = labels.iter().map(|l| tokenize(l)).collect();
        for caption in &image.human_captions {
            let cap = tokenize(caption);
            let hits: Vec<&str> = labels
                .iter()
                .zip(&label_tokens)
                .filter(|(_, toks)| cap.contains_run(toks))
                .map(|(l, _)| l.as_str())
                .collect();
            if !hits.is_empty() {
                out.push(RelatednessRecord {
                    caption: caption.clone(),
                    context: hits.join(" "),
                    cosine: 1.0,
                    label: 1,
                    threshold: 0.0,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCount {
    pub label: String,
    pub count: usize,
}

/// Frequency of context tokens over records (each token counted once per
/// record), most frequent first, ties alphabetical.
pub fn context_frequency<'a>(
    records: impl IntoIterator<Item = &'a RelatednessRecord>,
) -> Vec<LabelCount> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for r in records {
        let distinct: BTreeSet<&str> = r.context.split_whitespace().collect();
        for t in distinct {
            *counts.entry(t.to_string()).or_insert(0) += 1;
        }
    }
    let mut out: Vec<LabelCount> = counts
        .into_iter()
        .map(|(label, count)| LabelCount { label, count })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.label.cmp(&b.label)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;
    use crate::toy_embedder::embed_text;

    fn det(l: &str, c: f64) -> Detection {
        Detection::new(l, c, Source::Resnet152)
    }

    fn toy_table(keys: &[&str]) -> EmbeddingTable<f64> {
        let mut t = EmbeddingTable::new(32).unwrap();
        for k in keys {
            t.insert(*k, &embed_text::<f64>(k, 32, 42).unwrap()).unwrap();
        }
        t
    }

    #[test]
    fn confidence_boundary() {
        let cfg = BuilderConfig::default();
        assert!(filter_detections(&[det("dog", 0.15)], &cfg).is_empty());
        assert_eq!(filter_detections(&[det("dog", 0.2)], &cfg).len(), 1);
    }

    #[test]
    fn top_k_per_source() {
        let cfg = BuilderConfig::default();
        let dets = vec![
            det("a", 0.3),
            det("b", 0.9),
            det("c", 0.5),
            det("d", 0.7),
            det("e", 0.4),
            Detection::new("f", 0.35, Source::Clip),
        ];
        let kept = filter_detections(&dets, &cfg);
        let labels: Vec<_> = kept.iter().map(|d| d.label.as_str()).collect();
        assert_eq!(labels, ["b", "d", "c", "f"]);
    }

    #[test]
    fn equal_confidence_sorted_by_label() {
        let cfg = BuilderConfig::default();
        let kept = filter_detections(&[det("zebra", 0.5), det("apple", 0.5)], &cfg);
        assert_eq!(kept[0].label, "apple");
    }

    #[test]
    fn dedup_examples() {
        let cfg = BuilderConfig::default();
        let t = toy_table(&["dog", "cat"]);
        let out = dedup_contexts(&[det("dog", 0.9), det("dog", 0.8)], &t, &cfg).unwrap();
        assert_eq!(out, vec![det("dog", 0.9)]);

        let c = cosine(t.get("dog").unwrap(), t.get("cat").unwrap()).unwrap();
        assert!(c < 0.9, "toy cosine(dog, cat) = {c}");
        let out = dedup_contexts(&[det("dog", 0.9), det("cat", 0.8)], &t, &cfg).unwrap();
        assert_eq!(out.len(), 2);

        let out = dedup_contexts(&[det("cat", 0.4)], &t, &cfg).unwrap();
        assert_eq!(out, vec![det("cat", 0.4)]);
    }

    #[test]
    fn dedup_collapses_near_synonyms() {
        let mut t = EmbeddingTable::<f64>::new(2).unwrap();
        t.insert("sofa", &[1.0, 0.0]).unwrap();
        t.insert("couch", &[0.99, 0.1]).unwrap();
        let cfg = BuilderConfig::default();
        let out = dedup_contexts(&[det("couch", 0.5), det("sofa", 0.8)], &t, &cfg).unwrap();
        assert_eq!(out, vec![det("sofa", 0.8)]);
        assert!(dedup_contexts(&[det("horse", 0.5)], &t, &cfg).is_err());
    }

    #[test]
    fn relatedness_score_examples() {
        let mut t = EmbeddingTable::<f64>::new(2).unwrap();
        t.insert("x", &[1.0, 0.0]).unwrap();
        t.insert("y", &[0.0, 3.0]).unwrap();
        assert!((relatedness_score("x", "x", &t).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(relatedness_score("x", "y", &t).unwrap(), 0.0);
        assert!(relatedness_score("x", "z", &t).is_err());
    }

    #[test]
    fn label_rule() {
        assert_eq!(assign_label(0.35, 0.3), 1);
        assert_eq!(assign_label(0.35, 0.4), 0);
        assert_eq!(assign_label(0.3, 0.3), 1);
    }

    #[test]
    fn cardinality_and_skips() {
        let corpus = vec![
            ImageRecord {
                image_id: "a".into(),
                human_captions: vec!["a dog in a park".into()],
                detections: vec![det("dog", 0.8)],
            },
            ImageRecord {
                image_id: "b".into(),
                human_captions: vec!["a cat".into()],
                detections: vec![det("cat", 0.1)],
            },
        ];
        let t = toy_table(&["dog", "a dog in a park", "cat", "a cat"]);
        let out = build_relatedness_dataset(&corpus, &t, &BuilderConfig::default()).unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.skipped, vec!["b".to_string()]);
        let ths: Vec<f64> = out.records.iter().map(|r| r.threshold).collect();
        assert_eq!(ths, [0.2, 0.3, 0.4]);
        for r in &out.records {
            assert_eq!(r.label, assign_label(r.cosine, r.threshold));
        }
    }

    #[test]
    fn overlap_rule() {
        let cfg = BuilderConfig::default();
        let image = |caption: &str, labels: &[&str]| ImageRecord {
            image_id: "x".into(),
            human_captions: vec![caption.into()],
            detections: labels.iter().map(|l| det(l, 0.9)).collect(),
        };
        let out = build_overlap_dataset(
            &[image(
                "a woman under and umbrella standing in water on a flooded field with tents in the background.",
                &["umbrella", "cowboy hat", "flute"],
            )],
            &cfg,
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].context, "umbrella");
        assert_eq!((out[0].label, out[0].threshold), (1, 0.0));

        let none = build_overlap_dataset(&[image("a plate of potato salad", &["mashed potato"])], &cfg);
        assert!(none.unwrap().is_empty());
        let none = build_overlap_dataset(&[image("a category of things", &["cat"])], &cfg);
        assert!(none.unwrap().is_empty());
    }

    #[test]
    fn frequency_examples() {
        let rec = |c: &str| RelatednessRecord {
            caption: "x".into(),
            context: c.into(),
            cosine: 0.5,
            label: 1,
            threshold: 0.2,
        };
        let recs = [rec("dog"), rec("cat"), rec("dog"), rec("dog")];
        assert_eq!(
            context_frequency(&recs),
            vec![
                LabelCount { label: "dog".into(), count: 3 },
                LabelCount { label: "cat".into(), count: 1 }
            ]
        );
        assert!(context_frequency(&[]).is_empty());
        let tie = [rec("b"), rec("a")];
        assert_eq!(context_frequency(&tie)[0].label, "a");
    }

    #[test]
    fn config_validation() {
        let mut cfg = BuilderConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.top_k_contexts = 0;
        assert!(cfg.validate().is_err());
        let cfg = BuilderConfig {
            label_thresholds: vec![1.5],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = BuilderConfig {
            dedup_threshold: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}

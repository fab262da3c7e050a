//! Re-ordering of beam-search candidates by visual relatedness alone.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::corpus::{CandidateCaption, CandidateSet, Detection, EmbeddingTable};
use crate::error::{Error, Result};
use crate::relatedness_model::{forward, CnnParams, SequenceInput};
use crate::scalar::Scalar;
use crate::scorer::{context_similarity, join_labels, simprob, ContextJoin, RelatednessScore, ScoreMode};
use crate::textnorm::{Gender, GenderLexicon};

/// Anything that maps (caption, visual contexts) to a relatedness score.
pub trait CaptionScorer<T: Scalar>: Sync {
    fn score(&self, caption: &str, contexts: &[Detection]) -> Result<RelatednessScore<T>>;
}

impl<T: Scalar, F> CaptionScorer<T> for F
where
    F: Fn(&str, &[Detection]) -> Result<RelatednessScore<T>> + Sync,
{
    fn score(&self, caption: &str, contexts: &[Detection]) -> Result<RelatednessScore<T>> {
        self(caption, contexts)
    }
}

/// Cosine similarity clamped into [0, 1].
pub struct CosineScorer<'a, T> {
    pub emb: &'a EmbeddingTable<T>,
    pub join: ContextJoin,
}

impl<T: Scalar> CaptionScorer<T> for CosineScorer<'_, T> {
    fn score(&self, caption: &str, contexts: &[Detection]) -> Result<RelatednessScore<T>> {
        let s = context_similarity(caption, contexts, self.emb, self.join)?;
        RelatednessScore::new(s.max(T::zero()).min(T::one()), ScoreMode::CosineClamped)
    }
}

/// Similarity raised to the mean classifier confidence of the contexts.
pub struct SimProbScorer<'a, T> {
    pub emb: &'a EmbeddingTable<T>,
    pub join: ContextJoin,
}

impl<T: Scalar> CaptionScorer<T> for SimProbScorer<'_, T> {
    fn score(&self, caption: &str, contexts: &[Detection]) -> Result<RelatednessScore<T>> {
        let s = context_similarity(caption, contexts, self.emb, self.join)?;
        let conf: Vec<T> = contexts.iter().map(|d| T::of(d.confidence)).collect();
        RelatednessScore::new(simprob(s, &conf)?, ScoreMode::Simprob)
    }
}

/// Probability from a trained convolutional relatedness head; token vectors
/// are looked up in `emb`.
pub struct CnnScorer<'a, T> {
    pub params: &'a CnnParams<T>,
    pub emb: &'a EmbeddingTable<T>,
}

impl<T: Scalar> CaptionScorer<T> for CnnScorer<'_, T> {
    fn score(&self, caption: &str, contexts: &[Detection]) -> Result<RelatednessScore<T>> {
        let x = SequenceInput::from_texts(&join_labels(contexts), caption, self.emb)?;
        RelatednessScore::new(forward(self.params, &x)?.probability, ScoreMode::CnnModel)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranked<T> {
    pub candidate: CandidateCaption,
    pub score: RelatednessScore<T>,
}

/// Score descending, then baseline score descending, then original rank ascending.
pub fn rank_order<T: Scalar>(a: &Ranked<T>, b: &Ranked<T>) -> Ordering {
    let (sa, sb) = (a.score.value(), b.score.value());
    sb.partial_cmp(&sa)
        .unwrap_or(Ordering::Equal)
        .then_with(|| b.candidate.baseline_score.total_cmp(&a.candidate.baseline_score))
        .then_with(|| a.candidate.original_rank.cmp(&b.candidate.original_rank))
}

/// Scores every candidate against `contexts` and sorts by [`rank_order`].
///
/// With a lexicon, scoring sees gender-neutralized copies of both the caption
/// and the context labels while the returned candidates keep their text.
pub fn rerank<T: Scalar, S: CaptionScorer<T> + ?Sized>(
    set: &CandidateSet,
    contexts: &[Detection],
    scorer: &S,
    neutralize: Option<&GenderLexicon>,
) -> Result<Vec<Ranked<T>>> {
    if set.candidates.is_empty() {
        return Err(Error::invalid(format!("candidate set {:?} is empty", set.image_id)));
    }
    let neutral_ctx: Vec<Detection>;
    let ctx: &[Detection] = match neutralize {
        Some(lex) => {
            neutral_ctx = contexts
                .iter()
                .map(|d| Detection {
                    label: neutralize_gender(&d.label, lex),
                    ..d.clone()
                })
                .collect();
            &neutral_ctx
        }
        None => contexts,
    };
    let mut ranked: Vec<Ranked<T>> = set
        .candidates
        .par_iter()
        .map(|c| {
            let text = match neutralize {
                Some(lex) => neutralize_gender(&c.text, lex),
                None => c.text.clone(),
            };
            scorer
                .score(&text, ctx)
                .map(|score| Ranked {
                    candidate: c.clone(),
                    score,
                })
                .map_err(|e| Error::Scoring {
                    rank: c.original_rank,
                    text: c.text.clone(),
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    ranked.sort_by(rank_order);
    Ok(ranked)
}

pub fn select_best<T: Scalar, S: CaptionScorer<T> + ?Sized>(
    set: &CandidateSet,
    contexts: &[Detection],
    scorer: &S,
) -> Result<CandidateCaption> {
    let mut ranked = rerank(set, contexts, scorer, None)?;
    Ok(ranked.swap_remove(0).candidate)
}

/// Replaces man/woman terms with "person" (singular) or "people" (plural).
/// Surrounding punctuation and every other word are left alone; whitespace is
/// collapsed to single spaces.
pub fn neutralize_gender(text: &str, lexicon: &GenderLexicon) -> String {
    text.split_whitespace()
        .map(|chunk| {
            let start = chunk.find(char::is_alphanumeric);
            let end = chunk.rfind(char::is_alphanumeric);
            let (Some(s), Some(e)) = (start, end) else {
                return chunk.to_string();
            };
            let e = e + chunk[e..].chars().next().map_or(1, char::len_utf8);
            let core = &chunk[s..e];
            let lower = core.to_lowercase();
            match lexicon.classify(&lower) {
                Some(Gender::Man | Gender::Woman) => {
                    let mut repl = if lexicon.is_plural(&lower) { "people" } else { "person" }.to_string();
                    if core.chars().next().is_some_and(char::is_uppercase) {
                        repl[..1].make_ascii_uppercase();
                    }
                    format!("{}{}{}", &chunk[..s], repl, &chunk[e..])
                }
                _ => chunk.to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;
    use crate::textnorm::default_gender_lexicon;

    fn fixed(scores: Vec<f64>) -> impl Fn(&str, &[Detection]) -> Result<RelatednessScore<f64>> + Sync {
        move |caption: &str, _: &[Detection]| {
            let i: usize = caption.trim_start_matches("c").parse().unwrap();
            RelatednessScore::new(scores[i], ScoreMode::CosineClamped)
        }
    }

    fn set(n: usize) -> CandidateSet {
        CandidateSet::from_ranked("img", (0..n).map(|i| (format!("c{i}"), -(i as f64))).collect())
    }

    #[test]
    fn equal_scores_keep_baseline_order() {
        let out = rerank(&set(5), &[], &fixed(vec![0.5; 5]), None).unwrap();
        let ranks: Vec<_> = out.iter().map(|r| r.candidate.original_rank).collect();
        assert_eq!(ranks, [0, 1, 2, 3, 4]);
        assert_eq!(select_best(&set(5), &[], &fixed(vec![0.5; 5])).unwrap().original_rank, 0);
    }

    #[test]
    fn higher_score_first() {
        let out = rerank(&set(2), &[], &fixed(vec![0.1, 0.9]), None).unwrap();
        assert_eq!(out[0].candidate.text, "c1");
        assert_eq!(out[0].score.value(), 0.9);
    }

    #[test]
    fn single_candidate() {
        assert_eq!(select_best(&set(1), &[], &fixed(vec![0.2])).unwrap().text, "c0");
    }

    #[test]
    fn empty_set_rejected() {
        let empty = CandidateSet {
            image_id: "x".into(),
            candidates: vec![],
        };
        assert!(rerank(&empty, &[], &fixed(vec![]), None).is_err());
    }

    #[test]
    fn scoring_failure_names_candidate() {
        let failing = |caption: &str, _: &[Detection]| -> Result<RelatednessScore<f64>> {
            if caption == "c2" {
                Err(Error::MissingEmbedding(caption.into()))
            } else {
                RelatednessScore::new(0.5, ScoreMode::Simprob)
            }
        };
        match rerank(&set(4), &[], &failing, None) {
            Err(Error::Scoring { rank, text, .. }) => assert_eq!((rank, text.as_str()), (2, "c2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn neutralize_examples() {
        let lex = default_gender_lexicon();
        assert_eq!(
            neutralize_gender("a man on a skateboard in a park", &lex),
            "a person on a skateboard in a park"
        );
        assert_eq!(
            neutralize_gender("two women holding umbrellas", &lex),
            "two people holding umbrellas"
        );
        assert_eq!(neutralize_gender("a person reading", &lex), "a person reading");
        assert_eq!(
            neutralize_gender("A Woman  with a girl.", &lex),
            "A Person with a person."
        );
    }

    #[test]
    fn neutralized_scoring_returns_original_text() {
        let lex = default_gender_lexicon();
        let seen = std::sync::Mutex::new(Vec::new());
        let spy = |caption: &str, ctx: &[Detection]| -> Result<RelatednessScore<f64>> {
            seen.lock().unwrap().push((caption.to_string(), ctx[0].label.clone()));
            RelatednessScore::new(0.5, ScoreMode::Simprob)
        };
        let s = CandidateSet::from_ranked("i", vec![("a man riding a wave".into(), 0.0)]);
        let ctx = [Detection::new("woman", 0.9, Source::Clip)];
        let out = rerank(&s, &ctx, &spy, Some(&lex)).unwrap();
        assert_eq!(out[0].candidate.text, "a man riding a wave");
        assert_eq!(
            seen.lock().unwrap()[0],
            ("a person riding a wave".to_string(), "person".to_string())
        );
    }
}

use std::collections::HashMap;
use std::path::PathBuf;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vcrank::corpus::{load_candidates, load_corpus};
use vcrank::dataset_builder::{retained_contexts, BuilderConfig};
use vcrank::reranker::{neutralize_gender, rerank, select_best, CosineScorer};
use vcrank::scorer::{cosine, join_labels, simprob, ContextJoin, RelatednessScore, ScoreMode};
use vcrank::textnorm::{default_gender_lexicon, ngrams};
use vcrank::toy_embedder::embed_text;
use vcrank::{tokenize, CandidateCaption, CandidateSet, Detection, Embeddings, Result};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

type Lookup = HashMap<String, f64>;

fn by_table(scores: &Lookup) -> impl Fn(&str, &[Detection]) -> Result<RelatednessScore<f64>> + Sync + '_ {
    move |text: &str, _: &[Detection]| RelatednessScore::new(scores[text], ScoreMode::CosineClamped)
}

/// Random set with deliberately coarse scores and baselines so ties happen.
fn random_set(rng: &mut ChaCha8Rng) -> (CandidateSet, Lookup) {
    let n = rng.gen_range(1..=12);
    let mut scores = Lookup::new();
    let candidates = (0..n)
        .map(|i| {
            let text = format!("caption {i}");
            scores.insert(text.clone(), f64::from(rng.gen_range(0..4u8)) / 4.0);
            CandidateCaption {
                text,
                baseline_score: -f64::from(rng.gen_range(0..3u8)),
                original_rank: i,
            }
        })
        .collect();
    (
        CandidateSet {
            image_id: "img".into(),
            candidates,
        },
        scores,
    )
}

#[test]
fn rerank_invariants_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..1000 {
        let (set, scores) = random_set(&mut rng);
        let scorer = by_table(&scores);
        let out = rerank(&set, &[], &scorer, None).unwrap();

        let mut ranks: Vec<usize> = out.iter().map(|r| r.candidate.original_rank).collect();
        ranks.sort_unstable();
        assert_eq!(ranks, (0..set.candidates.len()).collect::<Vec<_>>());

        for w in out.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let key = |r: &vcrank::reranker::Ranked<f64>| {
                (-r.score.value(), -r.candidate.baseline_score, r.candidate.original_rank as f64)
            };
            assert!(key(a) < key(b), "order is not strict: {:?} then {:?}", key(a), key(b));
        }

        let mut shuffled = set.clone();
        shuffled.candidates.shuffle(&mut rng);
        let again = rerank(&shuffled, &[], &scorer, None).unwrap();
        assert_eq!(again, out);

        let lucky = rng.gen_range(0..set.candidates.len());
        let mut boosted = scores.clone();
        boosted.insert(set.candidates[lucky].text.clone(), 1.0);
        for (k, v) in boosted.iter_mut() {
            if *k != set.candidates[lucky].text {
                *v = v.min(0.75);
            }
        }
        let top = rerank(&set, &[], &by_table(&boosted), None).unwrap();
        assert_eq!(top[0].candidate.original_rank, lucky);
    }
}

#[test]
fn equal_scores_keep_baseline_order() {
    let set = CandidateSet::from_ranked(
        "x",
        vec![("first".into(), -1.0), ("second".into(), -2.0), ("third".into(), -3.0)],
    );
    let flat = |_: &str, _: &[Detection]| RelatednessScore::new(0.5, ScoreMode::Simprob);
    let out = rerank(&set, &[], &flat, None).unwrap();
    let texts: Vec<&str> = out.iter().map(|r| r.candidate.text.as_str()).collect();
    assert_eq!(texts, ["first", "second", "third"]);
    assert_eq!(select_best(&set, &[], &flat).unwrap().text, "first");
}

struct Fixture {
    emb: Embeddings,
    sets: Vec<CandidateSet>,
    contexts: HashMap<String, Vec<Detection>>,
}

fn toy_fixture() -> Fixture {
    let corpus = load_corpus(fixture("corpus4.jsonl")).unwrap();
    let sets = load_candidates(fixture("candidates4.jsonl")).unwrap();
    let mut emb = Embeddings::new(64).unwrap();
    let add = |emb: &mut Embeddings, t: &str| {
        if !emb.contains(t) {
            emb.insert(t, &embed_text::<f64>(t, 64, 42).unwrap()).unwrap();
        }
    };
    for img in &corpus {
        img.detections.iter().for_each(|d| add(&mut emb, &d.label));
    }
    for s in &sets {
        s.candidates.iter().for_each(|c| add(&mut emb, &c.text));
    }
    let cfg = BuilderConfig::default();
    let mut contexts = HashMap::new();
    for img in &corpus {
        let kept = retained_contexts(img, &emb, &cfg).unwrap();
        add(&mut emb, &join_labels(&kept));
        contexts.insert(img.image_id.clone(), kept);
    }
    Fixture { emb, sets, contexts }
}

#[test]
fn nine_candidates_match_sort_oracle() {
    let fx = toy_fixture();
    let scorer = CosineScorer {
        emb: &fx.emb,
        join: ContextJoin::Concatenated,
    };
    for set in &fx.sets {
        assert_eq!(set.candidates.len(), 9);
        let ctx = &fx.contexts[&set.image_id];
        let query: Vec<f64> = embed_text(&join_labels(ctx), 64, 42).unwrap();
        let mut triples: Vec<(f64, f64, usize)> = set
            .candidates
            .iter()
            .map(|c| {
                let v: Vec<f64> = embed_text(&c.text, 64, 42).unwrap();
                let s = cosine(&query, &v).unwrap().clamp(0.0, 1.0);
                (s, c.baseline_score, c.original_rank)
            })
            .collect();
        triples.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(b.1.total_cmp(&a.1))
                .then(a.2.cmp(&b.2))
        });
        let got: Vec<usize> = rerank(set, ctx, &scorer, None)
            .unwrap()
            .iter()
            .map(|r| r.candidate.original_rank)
            .collect();
        let want: Vec<usize> = triples.iter().map(|t| t.2).collect();
        assert_eq!(got, want, "image {}", set.image_id);
    }
}

#[test]
fn best_zebra_caption_mentions_zebra() {
    let fx = toy_fixture();
    let set = fx.sets.iter().find(|s| s.image_id == "zebra").unwrap();
    let ctx = &fx.contexts["zebra"];
    assert_eq!(join_labels(ctx), "zebra");
    let scorer = CosineScorer {
        emb: &fx.emb,
        join: ContextJoin::Concatenated,
    };
    let best = select_best(set, ctx, &scorer).unwrap();
    let zebra: Vec<f64> = embed_text("zebra", 64, 42).unwrap();
    let argmax = set
        .candidates
        .iter()
        .max_by(|a, b| {
            let sa = cosine(&zebra, &embed_text::<f64>(&a.text, 64, 42).unwrap()).unwrap();
            let sb = cosine(&zebra, &embed_text::<f64>(&b.text, 64, 42).unwrap()).unwrap();
            sa.total_cmp(&sb)
        })
        .unwrap();
    assert_eq!(best.text, argmax.text);
    assert!(tokenize(&best.text).iter().any(|t| t == "zebra"));
}

#[test]
fn neutralized_scoring_returns_original_text() {
    let set = CandidateSet::from_ranked("x", vec![("A man on a skateboard.".into(), -1.0)]);
    let seen = std::sync::Mutex::new(Vec::new());
    let spy = |text: &str, ctx: &[Detection]| {
        seen.lock().unwrap().push((text.to_string(), ctx[0].label.clone()));
        RelatednessScore::new(0.3, ScoreMode::Simprob)
    };
    let ctx = [Detection::new("woman", 0.9, vcrank::Source::Clip)];
    let out = rerank(&set, &ctx, &spy, Some(&default_gender_lexicon())).unwrap();
    assert_eq!(out[0].candidate.text, "A man on a skateboard.");
    assert_eq!(
        seen.into_inner().unwrap(),
        [("A person on a skateboard.".to_string(), "person".to_string())]
    );
}

#[test]
fn per_object_similarity_is_best_pair() {
    let fx = toy_fixture();
    let ctx = &fx.contexts["food"];
    assert_eq!(ctx.len(), 4);
    let caption = "a lunch box with broccoli and potato";
    let c: Vec<f64> = embed_text(caption, 64, 42).unwrap();
    let best = ctx
        .iter()
        .map(|d| cosine(&embed_text::<f64>(&d.label, 64, 42).unwrap(), &c).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let got = vcrank::scorer::context_similarity(caption, ctx, &fx.emb, ContextJoin::PerObject).unwrap();
    assert!((got - best).abs() < 1e-12);
}

proptest! {
    #[test]
    fn tokenize_is_idempotent(s in "\\PC{0,60}") {
        let once = tokenize(&s);
        prop_assert_eq!(tokenize(&once.join()), once);
    }

    #[test]
    fn ngram_count_formula(words in prop::collection::vec("[a-c]{1,2}", 0..15), n in 1usize..6) {
        let seq = tokenize(&words.join(" "));
        prop_assert_eq!(ngrams(&seq, n).unwrap().total(), (seq.len() + 1).saturating_sub(n));
    }

    #[test]
    fn neutralize_is_idempotent(words in prop::collection::vec(
        prop::sample::select(vec!["a", "man", "Women", "boys,", "girl.", "person", "dog", "  ", "Lady's"]), 0..10)
    ) {
        let lex = default_gender_lexicon();
        let once = neutralize_gender(&words.join(" "), &lex);
        prop_assert_eq!(neutralize_gender(&once, &lex), once);
    }

    #[test]
    fn simprob_monotone(a in -1.0f64..=1.0, b in -1.0f64..=1.0, confs in prop::collection::vec(0.0f64..=1.0, 1..4)) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(simprob(lo, &confs).unwrap() <= simprob(hi, &confs).unwrap());
        let ones = vec![1.0; confs.len()];
        prop_assert_eq!(simprob(a, &ones).unwrap(), a.clamp(1e-6, 1.0));
    }

    #[test]
    fn simprob_shrinks_with_confidence(s in 1e-6f64..0.999, p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(simprob(s, &[hi]).unwrap() <= simprob(s, &[lo]).unwrap());
    }

    #[test]
    fn cosine_symmetric_and_bounded(
        u in prop::collection::vec(-10.0f64..10.0, 8),
        v in prop::collection::vec(-10.0f64..10.0, 8),
    ) {
        prop_assume!(u.iter().any(|x| *x != 0.0) && v.iter().any(|x| *x != 0.0));
        let a = cosine(&u, &v).unwrap();
        prop_assert_eq!(a, cosine(&v, &u).unwrap());
        prop_assert!(a.abs() <= 1.0 + 1e-9);
    }
}

#[test]
fn simprob_examples() {
    assert_eq!(simprob(0.8, &[1.0]).unwrap(), 0.8);
    assert_eq!(simprob(1.0, &[0.3, 0.7]).unwrap(), 1.0);
    assert!((simprob(0.8f64, &[0.5]).unwrap() - 0.894_427_190_999_916).abs() < 1e-9);
}

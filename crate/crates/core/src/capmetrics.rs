//! Caption quality and diversity metrics at desk scale.
//!
//! All functions take tokens produced by [`crate::textnorm::tokenize`].

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scorer::cosine;
use crate::textnorm::{ngrams, TokenSeq};

pub const ROUGE_BETA: f64 = 1.2;
pub const CIDER_SIGMA: f64 = 6.0;
pub const CIDER_MAX_N: usize = 4;

fn nonempty(seq: &[String], what: &str) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::invalid(format!("{what} is empty")));
    }
    Ok(())
}

/// Sentence BLEU with clipped n-gram precision, uniform weights and the
/// closest-reference brevity penalty. No smoothing: any zero precision gives
/// 0. Orders longer than the candidate contribute no n-grams and are left out
/// of the geometric mean, so `bleu(x, [x], 4) == 1` for every nonempty `x`.
pub fn bleu(candidate: &[String], references: &[TokenSeq], max_n: usize) -> Result<f64> {
    nonempty(candidate, "candidate")?;
    if references.is_empty() || references.iter().any(|r| r.is_empty()) {
        return Err(Error::invalid("bleu needs nonempty references"));
    }
    if !(1..=4).contains(&max_n) {
        return Err(Error::invalid(format!("bleu order {max_n} not in 1..=4")));
    }
    let mut log_sum = 0.0;
    let mut orders = 0usize;
    for n in 1..=max_n.min(candidate.len()) {
        let cand = ngrams(candidate, n)?;
        let ref_grams: Vec<_> = references
            .iter()
            .map(|r| ngrams(r, n))
            .collect::<Result<_>>()?;
        let clipped: usize = cand
            .iter()
            .map(|(g, c)| c.min(ref_grams.iter().map(|r| r.count(g)).max().unwrap_or(0)))
            .sum();
        if clipped == 0 {
            return Ok(0.0);
        }
        log_sum += (clipped as f64 / cand.total() as f64).ln();
        orders += 1;
    }
    let c = candidate.len();
    let r = references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("references nonempty");
    let bp = if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    Ok(bp * (log_sum / orders as f64).exp())
}

/// BLEU-4 of a candidate against all human references of its image. Lower
/// means the caption copies the references less.
pub fn mbleu(candidate: &[String], human_references: &[TokenSeq]) -> Result<f64> {
    bleu(candidate, human_references, 4)
}

/// Mean [`mbleu`] over `(candidate, references)` pairs.
pub fn corpus_mbleu(items: &[(TokenSeq, Vec<TokenSeq>)]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::invalid("no captions"));
    }
    let mut sum = 0.0;
    for (c, refs) in items {
        sum += mbleu(c, refs)?;
    }
    Ok(sum / items.len() as f64)
}

/// Unique unigrams over caption length.
pub fn div1(caption: &[String]) -> Result<f64> {
    nonempty(caption, "caption")?;
    Ok(ngrams(caption, 1)?.unique() as f64 / caption.len() as f64)
}

/// Unique bigrams over caption length (word count, not bigram count).
pub fn div2(caption: &[String]) -> Result<f64> {
    nonempty(caption, "caption")?;
    Ok(ngrams(caption, 2)?.unique() as f64 / caption.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diversity {
    pub mean_uniq_per_caption: f64,
    pub vocab_size: usize,
    pub mean_div1: f64,
    pub mean_div2: f64,
}

pub fn corpus_diversity(captions: &[TokenSeq]) -> Result<Diversity> {
    if captions.is_empty() {
        return Err(Error::invalid("no captions"));
    }
    let mut vocab: HashSet<&str> = HashSet::new();
    let (mut uniq, mut d1, mut d2) = (0.0, 0.0, 0.0);
    for c in captions {
        let u: HashSet<&str> = c.iter().map(String::as_str).collect();
        uniq += u.len() as f64;
        vocab.extend(u);
        d1 += div1(c)?;
        d2 += div2(c)?;
    }
    let n = captions.len() as f64;
    Ok(Diversity {
        mean_uniq_per_caption: uniq / n,
        vocab_size: vocab.len(),
        mean_div1: d1 / n,
        mean_div2: d2 / n,
    })
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure `(1 + b^2) P R / (R + b^2 P)` with `b = 1.2`, best over references.
pub fn rouge_l(candidate: &[String], references: &[TokenSeq]) -> Result<f64> {
    nonempty(candidate, "candidate")?;
    if references.is_empty() {
        return Err(Error::invalid("rouge-l needs references"));
    }
    let b2 = ROUGE_BETA * ROUGE_BETA;
    let mut best = 0.0f64;
    for r in references {
        nonempty(r, "reference")?;
        let l = lcs_len(candidate, r) as f64;
        if l == 0.0 {
            continue;
        }
        let p = l / candidate.len() as f64;
        let rec = l / r.len() as f64;
        best = best.max((1.0 + b2) * p * rec / (rec + b2 * p));
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiderItem {
    pub candidate: TokenSeq,
    pub references: Vec<TokenSeq>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiderScores {
    pub per_candidate: Vec<f64>,
    pub mean: f64,
}

type GramCounts<'a> = Vec<BTreeMap<&'a [String], usize>>;

fn gram_counts(seq: &[String]) -> GramCounts<'_> {
    (1..=CIDER_MAX_N)
        .map(|n| {
            ngrams(seq, n)
                .expect("n >= 1")
                .iter()
                .collect::<BTreeMap<_, _>>()
        })
        .collect()
}

struct TfIdf<'a> {
    vecs: Vec<BTreeMap<&'a [String], f64>>,
    norms: Vec<f64>,
    len: f64,
}

fn tfidf<'a>(counts: &GramCounts<'a>, df: &HashMap<&[String], usize>, log_n: f64, len: usize) -> TfIdf<'a> {
    let mut vecs = Vec::with_capacity(CIDER_MAX_N);
    let mut norms = Vec::with_capacity(CIDER_MAX_N);
    for order in counts {
        let v: BTreeMap<&[String], f64> = order
            .iter()
            .map(|(g, &c)| {
                let d = df.get(g).copied().unwrap_or(0).max(1) as f64;
                (*g, c as f64 * (log_n - d.ln()))
            })
            .collect();
        norms.push(v.values().map(|x| x * x).sum::<f64>().sqrt());
        vecs.push(v);
    }
    TfIdf {
        vecs,
        norms,
        len: len as f64,
    }
}

fn cider_sim(h: &TfIdf<'_>, r: &TfIdf<'_>) -> f64 {
    let delta = h.len - r.len;
    let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut total = 0.0;
    for n in 0..CIDER_MAX_N {
        let mut val: f64 = h.vecs[n]
            .iter()
            .map(|(g, &hv)| {
                let rv = r.vecs[n].get(g).copied().unwrap_or(0.0);
                hv.min(rv) * rv
            })
            .sum();
        if h.norms[n] != 0.0 && r.norms[n] != 0.0 {
            val /= h.norms[n] * r.norms[n];
        }
        total += val * penalty;
    }
    total / CIDER_MAX_N as f64
}

/// CIDEr-D: tf-idf weighted n-gram cosine (n = 1..4) with clipping and a
/// Gaussian length penalty, averaged over references and scaled by 10.
/// Document frequencies come from the references of the supplied items.
pub fn cider_d(items: &[CiderItem]) -> Result<CiderScores> {
    if items.len() < 2 {
        return Err(Error::invalid(format!(
            "cider-d needs at least 2 images for document frequencies, got {}",
            items.len()
        )));
    }
    for it in items {
        nonempty(&it.candidate, "candidate")?;
        if it.references.is_empty() || it.references.iter().any(|r| r.is_empty()) {
            return Err(Error::invalid("every image needs nonempty references"));
        }
    }
    let ref_counts: Vec<Vec<GramCounts<'_>>> = items
        .iter()
        .map(|it| it.references.iter().map(|r| gram_counts(r)).collect())
        .collect();
    let mut df: HashMap<&[String], usize> = HashMap::new();
    for refs in &ref_counts {
        let grams: HashSet<&[String]> = refs
            .iter()
            .flat_map(|r| r.iter().flat_map(|m| m.keys().copied()))
            .collect();
        for g in grams {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    let log_n = (items.len() as f64).ln();
    let per_candidate: Vec<f64> = items
        .iter()
        .zip(&ref_counts)
        .map(|(it, refs)| {
            let h = tfidf(&gram_counts(&it.candidate), &df, log_n, it.candidate.len());
            let sum: f64 = refs
                .iter()
                .zip(&it.references)
                .map(|(rc, r)| cider_sim(&h, &tfidf(rc, &df, log_n, r.len())))
                .sum();
            sum / refs.len() as f64 * 10.0
        })
        .collect();
    let mean = per_candidate.iter().sum::<f64>() / per_candidate.len() as f64;
    Ok(CiderScores {
        per_candidate,
        mean,
    })
}

/// Mean cosine between a caption embedding and its reference embeddings.
pub fn avg_ref_similarity<T: Scalar>(candidate: &[T], refs: &[Vec<T>]) -> Result<T> {
    if refs.is_empty() {
        return Err(Error::invalid("no reference embeddings"));
    }
    let mut sum = T::zero();
    for r in refs {
        sum = sum + cosine(candidate, r)?;
    }
    Ok(sum / T::of(refs.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textnorm::tokenize;

    fn t(s: &str) -> TokenSeq {
        tokenize(s)
    }

    #[test]
    fn bleu_identity() {
        for n in 1..=4 {
            let x = t("a man riding a wave on a surfboard");
            assert_eq!(bleu(&x, &[x.clone()], n).unwrap(), 1.0);
        }
        let short = t("dog");
        assert_eq!(bleu(&short, &[short.clone()], 4).unwrap(), 1.0);
    }

    #[test]
    fn bleu_hand_computed_brevity() {
        let b = bleu(&t("the cat"), &[t("the cat on the mat")], 2).unwrap();
        assert!((b - (-1.5f64).exp()).abs() < 1e-12);
        assert!((b - 0.2231).abs() < 1e-4);
    }

    #[test]
    fn bleu_clipping_and_zero() {
        // p1 = 2/7 (two "the" clipped to ref count 2)
        let b = bleu(
            &t("the the the the the the the"),
            &[t("the cat is on the mat"), t("there is a cat on the mat")],
            1,
        )
        .unwrap();
        assert!((b - 2.0 / 7.0).abs() < 1e-12);
        assert_eq!(bleu(&t("zebra"), &[t("a cat")], 1).unwrap(), 0.0);
        assert_eq!(bleu(&t("a cat sat"), &[t("a dog ran")], 2).unwrap(), 0.0);
        assert!(bleu(&TokenSeq::default(), &[t("a")], 1).is_err());
        assert!(bleu(&t("a"), &[], 1).is_err());
        assert!(bleu(&t("a"), &[t("a")], 5).is_err());
    }

    #[test]
    fn bleu_closest_ref_tie_prefers_shorter() {
        // c = 3, refs of length 2 and 4 are equally close; r = 2 -> no penalty
        let b = bleu(&t("a b c"), &[t("a b"), t("a b c d")], 1).unwrap();
        assert_eq!(b, 1.0);
    }

    #[test]
    fn mbleu_bounds() {
        let refs = vec![t("a man on a horse"), t("a person riding a brown horse")];
        assert_eq!(mbleu(&t("a man on a horse"), &refs).unwrap(), 1.0);
        assert_eq!(mbleu(&t("zebras grazing"), &refs).unwrap(), 0.0);
    }

    #[test]
    fn div_examples() {
        let c = t("a man and a man");
        assert_eq!(div1(&c).unwrap(), 0.6);
        assert_eq!(div2(&c).unwrap(), 0.6);
        assert_eq!(div1(&t("one two three four")).unwrap(), 1.0);
        assert!(div1(&TokenSeq::default()).is_err());
        assert!(div2(&TokenSeq::default()).is_err());
    }

    #[test]
    fn corpus_diversity_examples() {
        let d = corpus_diversity(&[t("a cat")]).unwrap();
        assert_eq!((d.mean_uniq_per_caption, d.vocab_size), (2.0, 2));
        let d = corpus_diversity(&[t("a cat"), t("a dog")]).unwrap();
        assert_eq!((d.mean_uniq_per_caption, d.vocab_size), (2.0, 3));
        assert!(corpus_diversity(&[]).is_err());
    }

    #[test]
    fn rouge_examples() {
        let x = t("a b c d");
        assert_eq!(rouge_l(&x, &[x.clone()]).unwrap(), 1.0);
        assert_eq!(rouge_l(&x, &[t("e f")]).unwrap(), 0.0);
        let (p, r, b2) = (0.75, 1.0, 1.44);
        let expected = (1.0 + b2) * p * r / (r + b2 * p);
        assert!((rouge_l(&x, &[t("a c d")]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.879_807_692_307_692_3).abs() < 1e-12);
        // best reference wins
        assert_eq!(rouge_l(&x, &[t("e f"), x.clone()]).unwrap(), 1.0);
    }

    #[test]
    fn cider_disjoint_is_zero_and_small_corpus_rejected() {
        let items = vec![
            CiderItem {
                candidate: t("purple elephants dancing"),
                references: vec![t("a dog runs in the park")],
            },
            CiderItem {
                candidate: t("a cat on a mat"),
                references: vec![t("a cat sleeping on a mat")],
            },
        ];
        let s = cider_d(&items).unwrap();
        assert_eq!(s.per_candidate[0], 0.0);
        assert!(s.per_candidate[1] > 0.0);
        assert!(cider_d(&items[..1]).is_err());
    }

    #[test]
    fn avg_ref_similarity_examples() {
        let c = vec![1.0, 0.0];
        assert_eq!(avg_ref_similarity(&c, &[c.clone(), c.clone()]).unwrap(), 1.0);
        assert_eq!(avg_ref_similarity(&c, &[vec![0.0, 2.0]]).unwrap(), 0.0);
        let refs = vec![vec![1.0, 1.0], vec![0.0, 1.0], vec![3.0, 4.0]];
        let expected = (std::f64::consts::FRAC_1_SQRT_2 + 0.0 + 0.6) / 3.0;
        assert!((avg_ref_similarity(&c, &refs).unwrap() - expected).abs() < 1e-12);
        assert!(avg_ref_similarity(&c, &[vec![1.0]]).is_err());
        assert!(avg_ref_similarity::<f64>(&c, &[]).is_err());
    }
}

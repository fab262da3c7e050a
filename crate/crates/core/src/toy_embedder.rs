//! Deterministic, model-free embeddings for tests and plumbing.
//!
//! A token's vector is derived as follows:
//!
//! 1. `h = FNV-1a-64(token as UTF-8)`
//! 2. `state = splitmix64(h ^ splitmix64(seed))`
//! 3. for component `i`, draw two uniforms `u1, u2` in (0, 1) from
//!    `splitmix64(state + (2i + 1) * 0x9E3779B97F4A7C15)` and
//!    `splitmix64(state + (2i + 2) * 0x9E3779B97F4A7C15)` (top 53 bits),
//!    then take the Box-Muller normal `sqrt(-2 ln u1) cos(2 pi u2)`.
//! 4. L2-normalize.
//!
//! Gaussian components make the direction uniform on the sphere, so two
//! unrelated tokens have cosine concentrated around 0 with spread
//! `~1/sqrt(dim)`. Text vectors are the normalized mean of token vectors.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::textnorm::tokenize;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform in the open interval (0, 1).
fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

fn raw_token_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let state = splitmix64(fnv1a64(token.as_bytes()) ^ splitmix64(seed));
    (0..dim as u64)
        .map(|i| {
            let u1 = unit_open(splitmix64(state.wrapping_add((2 * i + 1).wrapping_mul(GOLDEN))));
            let u2 = unit_open(splitmix64(state.wrapping_add((2 * i + 2).wrapping_mul(GOLDEN))));
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect()
}

fn unit_f64(v: Vec<f64>) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector(None));
    }
    Ok(v.into_iter().map(|x| x / n).collect())
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::invalid(format!("toy embedding dim must be >= 2, got {dim}")));
    }
    Ok(())
}

pub fn embed_token<T: Scalar>(token: &str, dim: usize, seed: u64) -> Result<Vec<T>> {
    check_dim(dim)?;
    let v = unit_f64(raw_token_vector(token, dim, seed))?;
    Ok(v.into_iter().map(T::of).collect())
}

/// Normalized bag-of-words mean of the token vectors of `text`.
pub fn embed_text<T: Scalar>(text: &str, dim: usize, seed: u64) -> Result<Vec<T>> {
    check_dim(dim)?;
    let toks = tokenize(text);
    if toks.is_empty() {
        return Err(Error::invalid(format!("no tokens in {text:?}")));
    }
    let mut acc = vec![0.0f64; dim];
    for t in toks.iter() {
        let v = unit_f64(raw_token_vector(t, dim, seed))?;
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = toks.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(unit_f64(acc)?.into_iter().map(T::of).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn token_determinism_and_norm() {
        let a: Vec<f64> = embed_token("dog", 8, 42).unwrap();
        let b: Vec<f64> = embed_token("dog", 8, 42).unwrap();
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert!((cos(&a, &b) - 1.0).abs() < 1e-12);
        assert!((cos(&a, &a).sqrt() - 1.0).abs() < 1e-9);
        let other: Vec<f64> = embed_token("dog", 8, 43).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn random_pairs_concentrate_near_zero() {
        let dog: Vec<f64> = embed_token("dog", 64, 42).unwrap();
        let cat: Vec<f64> = embed_token("cat", 64, 42).unwrap();
        let c = cos(&dog, &cat);
        assert!(c.abs() < 0.4, "dog/cat cosine {c}");

        let mut mags: Vec<f64> = (0..1000)
            .map(|i| {
                let a: Vec<f64> = embed_token(&format!("tok{i}a"), 64, 42).unwrap();
                let b: Vec<f64> = embed_token(&format!("tok{i}b"), 64, 42).unwrap();
                cos(&a, &b).abs()
            })
            .collect();
        mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = mags.iter().sum::<f64>() / mags.len() as f64;
        // E|cos| = sqrt(2 / (pi * 64)) ~= 0.0997 for uniform directions
        assert!((mean - 0.0997).abs() < 0.015, "mean |cos| {mean}");
        assert!(mags[989] < 0.4, "99th percentile {}", mags[989]);
    }

    #[test]
    fn text_is_bag_of_words_mean() {
        let tok: Vec<f64> = embed_token("dog", 16, 7).unwrap();
        let one: Vec<f64> = embed_text("dog", 16, 7).unwrap();
        let two: Vec<f64> = embed_text("dog dog", 16, 7).unwrap();
        for ((a, b), c) in tok.iter().zip(&one).zip(&two) {
            assert!((a - b).abs() < 1e-12 && (b - c).abs() < 1e-12);
        }
        let ab: Vec<f64> = embed_text("red dog", 16, 7).unwrap();
        let ba: Vec<f64> = embed_text("dog red", 16, 7).unwrap();
        assert_eq!(ab, ba);
        assert!(embed_text::<f64>("", 16, 7).is_err());
        assert!(embed_text::<f64>("...", 16, 7).is_err());
    }

    #[test]
    fn small_dim_rejected() {
        assert!(embed_token::<f64>("dog", 1, 0).is_err());
        assert!(embed_text::<f64>("dog", 0, 0).is_err());
    }

    #[test]
    fn f32_output_is_unit() {
        let v: Vec<f32> = embed_text("a man on a skateboard", 32, 1).unwrap();
        let n: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
    }
}

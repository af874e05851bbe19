//! Naive quadratic attention oracle and the padded-masked baseline.
//!
//! Both materialize the full score matrix row by row; they are the ground
//! truth the tiled ragged kernel is checked against. All reductions run in
//! ascending index order so results are deterministic.

use crate::error::{Error, Result};
use crate::ragged::KeepMask;

/// Validity mask over a padded `[B, S]` batch: `true` marks a real token,
/// `false` a padding position. Every image needs at least one valid token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    valid: Vec<bool>,
    batch: usize,
    seq_len: usize,
}

impl AttentionMask {
    pub fn new(valid: Vec<bool>, batch: usize, seq_len: usize) -> Result<Self> {
        if valid.len() != batch * seq_len {
            return Err(Error::ShapeMismatch(format!(
                "mask length {} != batch {batch} * seq_len {seq_len}",
                valid.len()
            )));
        }
        for i in 0..batch {
            if !valid[i * seq_len..(i + 1) * seq_len].iter().any(|&b| b) {
                return Err(Error::InvalidMask(format!("image {i} has no valid token")));
            }
        }
        Ok(Self {
            valid,
            batch,
            seq_len,
        })
    }

    pub fn all_true(batch: usize, seq_len: usize) -> Self {
        Self {
            valid: vec![true; batch * seq_len],
            batch,
            seq_len,
        }
    }

    #[inline]
    pub fn valid(&self, image: usize, position: usize) -> bool {
        self.valid[image * self.seq_len + position]
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }
}

impl From<&KeepMask> for AttentionMask {
    fn from(mask: &KeepMask) -> Self {
        // KeepMask guarantees the CLS survives, so every image stays valid.
        Self {
            valid: mask.as_slice().to_vec(),
            batch: mask.batch_size(),
            seq_len: mask.seq_len(),
        }
    }
}

/// Scores masked positions are replaced with before softmax. Most negative
/// finite value rather than -inf, so degenerate rows renormalize instead of
/// producing NaN from (-inf) - (-inf).
pub const MASKED_SCORE: f32 = f32::MIN;

/// Full-softmax attention over one sequence: `softmax(q k^T / sqrt(d)) v`.
///
/// `q`, `k`, `v` are row-major `[n, d]`. Each softmax row is normalized to
/// sum to 1 before the value product.
pub fn naive_attention(q: &[f32], k: &[f32], v: &[f32], n: usize, d: usize) -> Result<Vec<f32>> {
    if n == 0 {
        return Err(Error::EmptyInput("attention over zero tokens".into()));
    }
    for (name, t) in [("q", q), ("k", k), ("v", v)] {
        if t.len() != n * d {
            return Err(Error::ShapeMismatch(format!(
                "{name} length {} != n {n} * d {d}",
                t.len()
            )));
        }
        if t.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "{name} contains a non-finite entry"
            )));
        }
    }
    let scale = 1.0 / (d as f32).sqrt();
    let mut out = vec![0.0f32; n * d];
    let mut scores = vec![0.0f32; n];
    let mut weights = vec![0.0f32; n];
    for i in 0..n {
        let qi = &q[i * d..(i + 1) * d];
        let mut row_max = f32::NEG_INFINITY;
        for j in 0..n {
            let s = dot(qi, &k[j * d..(j + 1) * d]) * scale;
            scores[j] = s;
            row_max = row_max.max(s);
        }
        let mut denom = 0.0f32;
        for j in 0..n {
            let w = (scores[j] - row_max).exp();
            weights[j] = w;
            denom += w;
        }
        let out_row = &mut out[i * d..(i + 1) * d];
        for j in 0..n {
            let p = weights[j] / denom;
            axpy(p, &v[j * d..(j + 1) * d], out_row);
        }
    }
    Ok(out)
}

/// Masked attention over a padded `[B, S, H, d]` batch.
///
/// Scores to invalid key positions are replaced with [`MASKED_SCORE`] before
/// softmax; output rows at invalid query positions are exact zero. Valid
/// rows equal [`naive_attention`] over that image's gathered valid tokens.
///
/// The full fixed-shape computation runs regardless of the mask: every
/// score is computed then masked, every query row is processed and invalid
/// rows discarded. That is the padded-execution cost model this baseline
/// exists to measure, so its workload must not shrink with pruning.
#[allow(clippy::too_many_arguments)]
pub fn padded_masked_attention(
    q: &[f32],
    k: &[f32],
    v: &[f32],
    batch: usize,
    seq_len: usize,
    heads: usize,
    head_dim: usize,
    mask: &AttentionMask,
) -> Result<Vec<f32>> {
    let expected = batch * seq_len * heads * head_dim;
    for (name, t) in [("q", q), ("k", k), ("v", v)] {
        if t.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{name} length {} != B*S*H*d = {expected}",
                t.len()
            )));
        }
    }
    if mask.batch_size() != batch || mask.seq_len() != seq_len {
        return Err(Error::ShapeMismatch(format!(
            "mask [{}, {}] does not match batch [{batch}, {seq_len}]",
            mask.batch_size(),
            mask.seq_len()
        )));
    }

    let d = head_dim;
    let scale = 1.0 / (d as f32).sqrt();
    let idx = |b: usize, s: usize, h: usize| ((b * seq_len + s) * heads + h) * d;

    let mut out = vec![0.0f32; expected];
    let mut scores = vec![0.0f32; seq_len];
    let mut weights = vec![0.0f32; seq_len];
    let mut row = vec![0.0f32; d];
    for b in 0..batch {
        for h in 0..heads {
            for s in 0..seq_len {
                let qi = &q[idx(b, s, h)..idx(b, s, h) + d];
                let mut row_max = f32::NEG_INFINITY;
                for j in 0..seq_len {
                    let sc = dot(qi, &k[idx(b, j, h)..idx(b, j, h) + d]) * scale;
                    let sc = if mask.valid(b, j) { sc } else { MASKED_SCORE };
                    scores[j] = sc;
                    row_max = row_max.max(sc);
                }
                let mut denom = 0.0f32;
                for j in 0..seq_len {
                    let w = (scores[j] - row_max).exp();
                    weights[j] = w;
                    denom += w;
                }
                row.fill(0.0);
                for j in 0..seq_len {
                    let p = weights[j] / denom;
                    axpy(p, &v[idx(b, j, h)..idx(b, j, h) + d], &mut row);
                }
                if mask.valid(b, s) {
                    out[idx(b, s, h)..idx(b, s, h) + d].copy_from_slice(&row);
                }
            }
        }
    }
    Ok(out)
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// `out += alpha * x`, in ascending index order.
#[inline]
pub(crate) fn axpy(alpha: f32, x: &[f32], out: &mut [f32]) {
    debug_assert_eq!(x.len(), out.len());
    for i in 0..x.len() {
        out[i] += alpha * x[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
        (0..n).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect()
    }

    /// Independent second implementation: log-sum-exp softmax in f64,
    /// column-at-a-time value product. Checks the oracle itself.
    fn lse_attention(q: &[f32], k: &[f32], v: &[f32], n: usize, d: usize) -> Vec<f32> {
        let scale = 1.0 / (d as f64).sqrt();
        let mut out = vec![0.0f32; n * d];
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| {
                    (0..d)
                        .map(|c| q[i * d + c] as f64 * k[j * d + c] as f64)
                        .sum::<f64>()
                        * scale
                })
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
            for c in 0..d {
                let mut acc = 0.0f64;
                for j in 0..n {
                    acc += (scores[j] - lse).exp() * v[j * d + c] as f64;
                }
                out[i * d + c] = acc as f32;
            }
        }
        out
    }

    #[test]
    fn single_token_returns_value_row() {
        let out = naive_attention(&[0.3, -0.7], &[5.0, 2.0], &[3.0, -1.0], 1, 2).unwrap();
        assert_eq!(out, vec![3.0, -1.0]);
    }

    #[test]
    fn identical_keys_give_column_mean_of_values() {
        let n = 4;
        let d = 3;
        let q: Vec<f32> = (0..n * d).map(|x| x as f32 * 0.1).collect();
        let k: Vec<f32> = [0.5, -0.2, 0.9].repeat(n);
        let v: Vec<f32> = (0..n * d).map(|x| (x as f32).sin()).collect();
        let out = naive_attention(&q, &k, &v, n, d).unwrap();
        for i in 0..n {
            for c in 0..d {
                let mean: f32 = (0..n).map(|j| v[j * d + c]).sum::<f32>() / n as f32;
                assert!((out[i * d + c] - mean).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn matches_independent_lse_implementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (n, d) = (7, 4);
        let q = random_vec(&mut rng, n * d);
        let k = random_vec(&mut rng, n * d);
        let v = random_vec(&mut rng, n * d);
        let ours = naive_attention(&q, &k, &v, n, d).unwrap();
        let theirs = lse_attention(&q, &k, &v, n, d);
        let max_diff = ours
            .iter()
            .zip(&theirs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_diff <= 1e-6, "max diff {max_diff}");
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        // With all-ones values the output row equals the softmax row sum.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, d) = (9, 5);
        let q = random_vec(&mut rng, n * d);
        let k = random_vec(&mut rng, n * d);
        let v = vec![1.0f32; n * d];
        let out = naive_attention(&q, &k, &v, n, d).unwrap();
        for x in out {
            assert!((x - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_tokens_rejected() {
        assert!(naive_attention(&[], &[], &[], 0, 4).is_err());
    }

    #[test]
    fn all_true_mask_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (s, d) = (6, 4);
        let q = random_vec(&mut rng, s * d);
        let k = random_vec(&mut rng, s * d);
        let v = random_vec(&mut rng, s * d);
        let mask = AttentionMask::all_true(1, s);
        let padded = padded_masked_attention(&q, &k, &v, 1, s, 1, d, &mask).unwrap();
        let naive = naive_attention(&q, &k, &v, s, d).unwrap();
        for (a, b) in padded.iter().zip(&naive) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn masked_rows_match_gathered_sequence_and_invalid_rows_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (s, d) = (4, 3);
        let q = random_vec(&mut rng, s * d);
        let k = random_vec(&mut rng, s * d);
        let v = random_vec(&mut rng, s * d);
        let mask = AttentionMask::new(vec![true, false, true, false], 1, s).unwrap();
        let padded = padded_masked_attention(&q, &k, &v, 1, s, 1, d, &mask).unwrap();

        let gather = |t: &[f32]| {
            let mut g = Vec::new();
            g.extend_from_slice(&t[0..d]);
            g.extend_from_slice(&t[2 * d..3 * d]);
            g
        };
        let naive = naive_attention(&gather(&q), &gather(&k), &gather(&v), 2, d).unwrap();
        for c in 0..d {
            assert!((padded[c] - naive[c]).abs() < 1e-6);
            assert!((padded[2 * d + c] - naive[d + c]).abs() < 1e-6);
            assert_eq!(padded[d + c], 0.0);
            assert_eq!(padded[3 * d + c], 0.0);
        }
    }

    #[test]
    fn images_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (b, s, h, d) = (2, 5, 2, 4);
        let len = b * s * h * d;
        let q = random_vec(&mut rng, len);
        let k = random_vec(&mut rng, len);
        let v = random_vec(&mut rng, len);
        let mask = AttentionMask::new(
            vec![
                true, true, false, true, false, // image 0
                true, false, true, true, true, // image 1
            ],
            b,
            s,
        )
        .unwrap();
        let base = padded_masked_attention(&q, &k, &v, b, s, h, d, &mask).unwrap();

        // Perturb image 1's tokens only.
        let half = s * h * d;
        let mut q2 = q.clone();
        for x in &mut q2[half..] {
            *x += 0.5;
        }
        let perturbed = padded_masked_attention(&q2, &k, &v, b, s, h, d, &mask).unwrap();
        assert_eq!(&base[..half], &perturbed[..half], "image 0 changed");
    }

    #[test]
    fn all_invalid_image_rejected() {
        assert!(AttentionMask::new(vec![true, false, false], 3, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        /// Permuting a sequence's tokens permutes the output rows identically.
        #[test]
        fn permutation_equivariance(seed in 0u64..1000, n in 2usize..10) {
            let d = 4;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random_vec(&mut rng, n * d);
            let k = random_vec(&mut rng, n * d);
            let v = random_vec(&mut rng, n * d);
            let base = naive_attention(&q, &k, &v, n, d).unwrap();

            let perm: Vec<usize> = (0..n).rev().collect();
            let apply = |t: &[f32]| -> Vec<f32> {
                perm.iter().flat_map(|&j| t[j * d..(j + 1) * d].to_vec()).collect()
            };
            let permuted = naive_attention(&apply(&q), &apply(&k), &apply(&v), n, d).unwrap();
            for (i, &j) in perm.iter().enumerate() {
                for c in 0..d {
                    let diff = (permuted[i * d + c] - base[j * d + c]).abs();
                    prop_assert!(diff <= 1e-6);
                }
            }
        }

        /// padded_masked_attention equals naive_attention over the gathered
        /// valid tokens, for random masks.
        #[test]
        fn padded_equals_gathered_naive(seed in 0u64..10000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (b, s, h, d) = (2usize, 6usize, 2usize, 4usize);
            let len = b * s * h * d;
            let q = random_vec(&mut rng, len);
            let k = random_vec(&mut rng, len);
            let v = random_vec(&mut rng, len);
            let mut valid = vec![false; b * s];
            for img in 0..b {
                for pos in 0..s {
                    valid[img * s + pos] = rng.random::<f64>() < 0.6;
                }
                // ensure at least one valid token
                valid[img * s] = true;
            }
            let mask = AttentionMask::new(valid.clone(), b, s).unwrap();
            let padded = padded_masked_attention(&q, &k, &v, b, s, h, d, &mask).unwrap();

            for img in 0..b {
                let kept: Vec<usize> = (0..s).filter(|&p| valid[img * s + p]).collect();
                for head in 0..h {
                    let gather = |t: &[f32]| -> Vec<f32> {
                        kept.iter()
                            .flat_map(|&p| {
                                let base = ((img * s + p) * h + head) * d;
                                t[base..base + d].to_vec()
                            })
                            .collect()
                    };
                    let naive =
                        naive_attention(&gather(&q), &gather(&k), &gather(&v), kept.len(), d)
                            .unwrap();
                    for (r, &p) in kept.iter().enumerate() {
                        let base = ((img * s + p) * h + head) * d;
                        for c in 0..d {
                            let diff = (padded[base + c] - naive[r * d + c]).abs();
                            prop_assert!(diff <= 1e-6, "img {img} head {head} pos {p}");
                        }
                    }
                }
            }
        }
    }
}

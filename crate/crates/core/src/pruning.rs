//! Keep-mask generators.
//!
//! `threshold_l2` / `topk_l2` rank non-CLS tokens by feature norm and keep a
//! ratio-derived count per image (quantile thresholding, which is what gives
//! the uniform per-image token counts the padded/ragged sweeps assume);
//! `random` draws a synthetic subset of the same size, standing in for the
//! workload shapes of learned pruning methods. The CLS token is exempted by
//! a +inf sentinel score rather than special cases downstream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ragged::KeepMask;
use crate::tensor::DenseBatch;

/// Mask-generation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMethod {
    /// Per-image quantile threshold on l2 scores (realized as top-k).
    ThresholdL2,
    /// Per-image top-k by l2 score; same selection as `threshold_l2`.
    TopkL2,
    /// Uniformly random non-CLS subset of the ratio-derived size.
    Random,
}

impl PruneMethod {
    pub fn name(&self) -> &'static str {
        match self {
            PruneMethod::ThresholdL2 => "threshold_l2",
            PruneMethod::TopkL2 => "topk_l2",
            PruneMethod::Random => "random",
        }
    }

    pub fn all() -> &'static [PruneMethod] {
        &[
            PruneMethod::ThresholdL2,
            PruneMethod::TopkL2,
            PruneMethod::Random,
        ]
    }
}

/// Pruning request: method, target drop fraction of non-CLS tokens, and the
/// seed for the random method. `jitter` (random method only) perturbs each
/// image's ratio uniformly in `ratio ± jitter`, producing the heterogeneous
/// per-image lengths learned pruning methods exhibit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneSpec {
    pub method: PruneMethod,
    pub ratio: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jitter: f64,
}

impl PruneSpec {
    pub fn new(method: PruneMethod, ratio: f64) -> Self {
        Self {
            method,
            ratio,
            seed: 0,
            jitter: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.ratio) {
            return Err(Error::InvalidConfig(format!(
                "prune ratio {} outside [0, 1)",
                self.ratio
            )));
        }
        if self.jitter < 0.0 || !self.jitter.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "jitter {} must be finite and >= 0",
                self.jitter
            )));
        }
        Ok(())
    }
}

/// Tokens kept per image at a drop ratio: `1 + ceil((1 - ratio) * (S - 1))`
/// (CLS plus the surviving non-CLS count; ceiling keeps at least one
/// non-CLS token for every ratio < 1 when S > 1).
pub fn kept_count(seq_len: usize, ratio: f64) -> usize {
    if seq_len <= 1 {
        return seq_len;
    }
    let non_cls = ((1.0 - ratio) * (seq_len - 1) as f64).ceil() as usize;
    1 + non_cls.min(seq_len - 1)
}

/// Per-token Euclidean feature norms, `[B, S]`, with the CLS position set
/// to +inf so it always ranks first.
pub fn l2_scores(features: &DenseBatch) -> Vec<f32> {
    let (b, s) = (features.batch, features.seq_len);
    let mut scores = vec![0.0f32; b * s];
    for i in 0..b {
        for p in 0..s {
            scores[i * s + p] = if p == 0 {
                f32::INFINITY
            } else {
                features.row(i, p).iter().map(|x| x * x).sum::<f32>().sqrt()
            };
        }
    }
    scores
}

/// Keep the top `kept_count(S, ratio)` tokens per image by score,
/// descending, ties broken by lower position. The CLS sentinel guarantees
/// position 0 survives.
pub fn topk_ratio_mask(
    scores: &[f32],
    batch: usize,
    seq_len: usize,
    ratio: f64,
) -> Result<KeepMask> {
    if scores.len() != batch * seq_len {
        return Err(Error::ShapeMismatch(format!(
            "scores length {} != batch {batch} * seq_len {seq_len}",
            scores.len()
        )));
    }
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidConfig(format!(
            "ratio {ratio} outside [0, 1)"
        )));
    }
    let k = kept_count(seq_len, ratio);
    let mut mask = vec![false; batch * seq_len];
    let mut order: Vec<usize> = Vec::with_capacity(seq_len);
    for i in 0..batch {
        let row = &scores[i * seq_len..(i + 1) * seq_len];
        order.clear();
        order.extend(0..seq_len);
        order.sort_by(|&a, &b| {
            row[b]
                .partial_cmp(&row[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        for &p in order.iter().take(k) {
            mask[i * seq_len + p] = true;
        }
    }
    KeepMask::new(mask, batch, seq_len)
}

/// Uniformly random keep mask of the same per-image size top-k would keep,
/// deterministic for a given seed.
pub fn random_mask(batch: usize, seq_len: usize, ratio: f64, seed: u64) -> Result<KeepMask> {
    random_mask_jittered(batch, seq_len, ratio, 0.0, seed)
}

/// Random mask whose per-image ratio is drawn uniformly from
/// `ratio ± jitter` (clamped to [0, 1)), giving heterogeneous lengths.
pub fn random_mask_jittered(
    batch: usize,
    seq_len: usize,
    ratio: f64,
    jitter: f64,
    seed: u64,
) -> Result<KeepMask> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidConfig(format!(
            "ratio {ratio} outside [0, 1)"
        )));
    }
    if seq_len == 0 {
        return Err(Error::InvalidMask("seq_len must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; batch * seq_len];
    for i in 0..batch {
        let r = if jitter > 0.0 {
            (ratio + (rng.random::<f64>() * 2.0 - 1.0) * jitter).clamp(0.0, 1.0 - 1e-9)
        } else {
            ratio
        };
        let keep_non_cls = kept_count(seq_len, r) - 1;
        mask[i * seq_len] = true;
        let chosen = rand::seq::index::sample(&mut rng, seq_len - 1, keep_non_cls);
        for p in chosen.iter() {
            mask[i * seq_len + 1 + p] = true;
        }
    }
    KeepMask::new(mask, batch, seq_len)
}

/// Build the keep mask a spec requests from the features entering the prune
/// point.
pub fn generate_mask(spec: &PruneSpec, features: &DenseBatch) -> Result<KeepMask> {
    spec.validate()?;
    match spec.method {
        PruneMethod::ThresholdL2 | PruneMethod::TopkL2 => {
            let scores = l2_scores(features);
            topk_ratio_mask(&scores, features.batch, features.seq_len, spec.ratio)
        }
        PruneMethod::Random => random_mask_jittered(
            features.batch,
            features.seq_len,
            spec.ratio,
            spec.jitter,
            spec.seed,
        ),
    }
}

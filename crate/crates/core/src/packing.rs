//! Gather/scatter between padded dense batches and the ragged layout.
//!
//! Packing is split into two phases mirroring the device pipeline: plan
//! construction (per-image cumulative sums over the keep mask, yielding
//! `cu_seqlens` and per-token source indices) and the vectorized row copy.
//! The plan is an explicit object because it is built once at the prune
//! point and reused by every later layer.

use crate::error::{Error, Result};
use crate::ragged::{validate_cu_seqlens, KeepMask, RaggedBatch};
use crate::tensor::DenseBatch;

/// Reusable gather plan: offsets plus each packed row's flat
/// `image * seq_len + position` source index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackPlan {
    pub cu_seqlens: Vec<usize>,
    pub src_indices: Vec<usize>,
    pub total_kept: usize,
    /// Mask shape the plan was derived from.
    pub batch: usize,
    pub seq_len: usize,
}

/// Build the gather plan for a keep mask. Kept tokens retain their original
/// relative order, so packed row `cu_seqlens[i]` is always image `i`'s CLS.
pub fn compute_pack_plan(mask: &KeepMask) -> Result<PackPlan> {
    let (batch, seq_len) = (mask.batch_size(), mask.seq_len());
    let mut cu_seqlens = Vec::with_capacity(batch + 1);
    let mut src_indices = Vec::new();
    cu_seqlens.push(0);
    for i in 0..batch {
        let row = mask.image(i);
        let before = src_indices.len();
        for (pos, &keep) in row.iter().enumerate() {
            if keep {
                src_indices.push(i * seq_len + pos);
            }
        }
        if src_indices.len() == before {
            return Err(Error::InvalidMask(format!("image {i} keeps no tokens")));
        }
        cu_seqlens.push(src_indices.len());
    }
    let total_kept = src_indices.len();
    Ok(PackPlan {
        cu_seqlens,
        src_indices,
        total_kept,
        batch,
        seq_len,
    })
}

/// Gather surviving rows of `dense` into a packed ragged batch.
pub fn pack(dense: &DenseBatch, plan: &PackPlan) -> Result<RaggedBatch> {
    if dense.batch != plan.batch || dense.seq_len != plan.seq_len {
        return Err(Error::ShapeMismatch(format!(
            "plan built for [{}, {}] but batch is [{}, {}]",
            plan.batch, plan.seq_len, dense.batch, dense.seq_len
        )));
    }
    let d = dense.dim;
    let mut packed = vec![0.0f32; plan.total_kept * d];
    for (r, &src) in plan.src_indices.iter().enumerate() {
        packed[r * d..(r + 1) * d].copy_from_slice(dense.flat_row(src));
    }
    RaggedBatch::new(packed, d, plan.cu_seqlens.clone())
}

/// Scatter a packed batch back to `[batch, seq_len, dim]`: kept positions
/// are restored exactly, dropped positions are set to `fill`.
pub fn unpack(
    ragged: &RaggedBatch,
    plan: &PackPlan,
    batch: usize,
    seq_len: usize,
    fill: f32,
) -> Result<DenseBatch> {
    if batch != plan.batch || seq_len != plan.seq_len {
        return Err(Error::ShapeMismatch(format!(
            "plan built for [{}, {}] but unpack target is [{batch}, {seq_len}]",
            plan.batch, plan.seq_len
        )));
    }
    if ragged.total_tokens() != plan.total_kept {
        return Err(Error::ShapeMismatch(format!(
            "ragged batch holds {} tokens but plan kept {}",
            ragged.total_tokens(),
            plan.total_kept
        )));
    }
    let d = ragged.dim();
    let mut out = DenseBatch {
        data: vec![fill; batch * seq_len * d],
        batch,
        seq_len,
        dim: d,
    };
    for (r, &dst) in plan.src_indices.iter().enumerate() {
        out.data[dst * d..(dst + 1) * d].copy_from_slice(ragged.row(r));
    }
    Ok(out)
}

impl PackPlan {
    /// Offsets sanity check; every plan built by [`compute_pack_plan`]
    /// satisfies this by construction.
    pub fn validate(&self) -> Result<()> {
        validate_cu_seqlens(&self.cu_seqlens, self.total_kept)?;
        if self.src_indices.len() != self.total_kept {
            return Err(Error::ShapeMismatch(
                "src_indices length != total_kept".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask_from_bits(bits: &[&[bool]]) -> KeepMask {
        let seq_len = bits[0].len();
        let flat: Vec<bool> = bits.iter().flat_map(|r| r.to_vec()).collect();
        KeepMask::new(flat, bits.len(), seq_len).unwrap()
    }

    fn random_mask(batch: usize, seq_len: usize, keep_prob: f64, seed: u64) -> KeepMask {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bits = vec![false; batch * seq_len];
        for i in 0..batch {
            bits[i * seq_len] = true; // CLS
            for p in 1..seq_len {
                bits[i * seq_len + p] = rng.random::<f64>() < keep_prob;
            }
        }
        KeepMask::new(bits, batch, seq_len).unwrap()
    }

    #[test]
    fn hand_counted_plan() {
        let mask = mask_from_bits(&[&[true, false, true], &[true, true, true]]);
        let plan = compute_pack_plan(&mask).unwrap();
        assert_eq!(plan.cu_seqlens, vec![0, 2, 5]);
        assert_eq!(plan.src_indices, vec![0, 2, 3, 4, 5]);
        assert_eq!(plan.total_kept, 5);
    }

    #[test]
    fn all_true_mask_is_identity_packing() {
        let mask = KeepMask::all_true(4, 197);
        let plan = compute_pack_plan(&mask).unwrap();
        assert_eq!(plan.cu_seqlens, vec![0, 197, 394, 591, 788]);
        assert_eq!(plan.src_indices, (0..788).collect::<Vec<_>>());
    }

    #[test]
    fn plan_lengths_equal_popcounts() {
        let mask = random_mask(8, 33, 0.4, 11);
        let plan = compute_pack_plan(&mask).unwrap();
        for i in 0..8 {
            let popcount = mask.kept_count(i);
            assert_eq!(plan.cu_seqlens[i + 1] - plan.cu_seqlens[i], popcount);
        }
        plan.validate().unwrap();
    }

    #[test]
    fn pack_matches_scalar_gather() {
        let mask = random_mask(3, 9, 0.5, 4);
        let plan = compute_pack_plan(&mask).unwrap();
        let dense = DenseBatch::random(3, 9, 5, 99);
        let ragged = pack(&dense, &plan).unwrap();
        let mut r = 0;
        for i in 0..3 {
            for p in 0..9 {
                if mask.kept(i, p) {
                    assert_eq!(ragged.row(r), dense.row(i, p), "image {i} pos {p}");
                    r += 1;
                }
            }
        }
        assert_eq!(r, ragged.total_tokens());
    }

    #[test]
    fn minimal_mask_packs_cls_rows() {
        let bits: Vec<bool> = (0..3 * 4).map(|x| x % 4 == 0).collect();
        let mask = KeepMask::new(bits, 3, 4).unwrap();
        let plan = compute_pack_plan(&mask).unwrap();
        let dense = DenseBatch::random(3, 4, 2, 1);
        let ragged = pack(&dense, &plan).unwrap();
        assert_eq!(ragged.total_tokens(), 3);
        for i in 0..3 {
            assert_eq!(ragged.row(i), dense.row(i, 0));
        }
    }

    #[test]
    fn round_trip_restores_kept_and_fills_dropped() {
        let mask = random_mask(4, 12, 0.6, 8);
        let plan = compute_pack_plan(&mask).unwrap();
        let dense = DenseBatch::random(4, 12, 3, 17);
        let ragged = pack(&dense, &plan).unwrap();
        let back = unpack(&ragged, &plan, 4, 12, 0.0).unwrap();
        for i in 0..4 {
            for p in 0..12 {
                if mask.kept(i, p) {
                    assert_eq!(back.row(i, p), dense.row(i, p)); // bit-exact
                } else {
                    assert!(back.row(i, p).iter().all(|&x| x == 0.0));
                }
            }
        }
    }

    #[test]
    fn all_true_round_trip_is_identity() {
        let mask = KeepMask::all_true(2, 7);
        let plan = compute_pack_plan(&mask).unwrap();
        let dense = DenseBatch::random(2, 7, 4, 3);
        let ragged = pack(&dense, &plan).unwrap();
        assert_eq!(ragged.packed(), &dense.data[..]);
        let back = unpack(&ragged, &plan, 2, 7, -1.0).unwrap();
        assert_eq!(back.data, dense.data);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mask = KeepMask::all_true(2, 4);
        let plan = compute_pack_plan(&mask).unwrap();
        let wrong = DenseBatch::random(2, 5, 3, 0);
        assert!(pack(&wrong, &plan).is_err());

        let dense = DenseBatch::random(2, 4, 3, 0);
        let ragged = pack(&dense, &plan).unwrap();
        assert!(unpack(&ragged, &plan, 2, 5, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(60))]

        /// Round trip over random masks and fills; order preservation.
        #[test]
        fn round_trip_and_order(seed in 0u64..100_000, fill in -2.0f32..2.0) {
            let mask = random_mask(3, 10, 0.5, seed);
            let plan = compute_pack_plan(&mask).unwrap();
            plan.validate().unwrap();
            // Order preservation: src indices strictly increase per image.
            for i in 0..3 {
                let seg = &plan.src_indices[plan.cu_seqlens[i]..plan.cu_seqlens[i + 1]];
                prop_assert!(seg.windows(2).all(|w| w[0] < w[1]));
                // CLS first.
                prop_assert_eq!(seg[0], i * 10);
            }
            let dense = DenseBatch::random(3, 10, 4, seed.wrapping_add(1));
            let ragged = pack(&dense, &plan).unwrap();
            let back = unpack(&ragged, &plan, 3, 10, fill).unwrap();
            for i in 0..3 {
                for p in 0..10 {
                    if mask.kept(i, p) {
                        prop_assert_eq!(back.row(i, p), dense.row(i, p));
                    } else {
                        prop_assert!(back.row(i, p).iter().all(|&x| x == fill));
                    }
                }
            }
        }
    }
}

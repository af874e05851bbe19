//! Ragged batch containers and `cu_seqlens` validation.
//!
//! A ragged batch stores variable-length sequences contiguously without
//! padding: image `i`'s tokens occupy rows `[cu_seqlens[i], cu_seqlens[i+1])`
//! of the packed buffer.

use std::ops::Range;

use crate::error::{Error, Result};

/// Check the offset-vector invariants: `cu[0] = 0`, non-decreasing,
/// `cu[last] = t_total`. Reports the first violated condition and its index.
pub fn validate_cu_seqlens(cu: &[usize], t_total: usize) -> Result<()> {
    if cu.is_empty() {
        return Err(Error::InvalidCuSeqlens("offset vector is empty".into()));
    }
    if cu[0] != 0 {
        return Err(Error::InvalidCuSeqlens(format!(
            "cu[0] = {} (must be 0)",
            cu[0]
        )));
    }
    for i in 1..cu.len() {
        if cu[i] < cu[i - 1] {
            return Err(Error::InvalidCuSeqlens(format!(
                "non-monotone at index {i}: cu[{}] = {} > cu[{i}] = {}",
                i - 1,
                cu[i - 1],
                cu[i]
            )));
        }
    }
    let last = *cu.last().unwrap();
    if last != t_total {
        return Err(Error::InvalidCuSeqlens(format!(
            "cu[last] = {last} != total token count {t_total}"
        )));
    }
    Ok(())
}

/// Packed token matrix `[T_total, D]` plus its `cu_seqlens` offsets.
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RaggedBatch {
    packed: Vec<f32>,
    dim: usize,
    cu_seqlens: Vec<usize>,
}

impl RaggedBatch {
    pub fn new(packed: Vec<f32>, dim: usize, cu_seqlens: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ShapeMismatch("dim must be positive".into()));
        }
        if !packed.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch(format!(
                "packed length {} not divisible by dim {dim}",
                packed.len()
            )));
        }
        validate_cu_seqlens(&cu_seqlens, packed.len() / dim)?;
        Ok(Self {
            packed,
            dim,
            cu_seqlens,
        })
    }

    /// Row-major `[T_total, D]` storage.
    pub fn packed(&self) -> &[f32] {
        &self.packed
    }

    /// Feature width D.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Offsets of length B+1; image `i` owns rows `[cu[i], cu[i+1])`.
    pub fn cu_seqlens(&self) -> &[usize] {
        &self.cu_seqlens
    }

    pub fn batch_size(&self) -> usize {
        self.cu_seqlens.len() - 1
    }

    pub fn total_tokens(&self) -> usize {
        *self.cu_seqlens.last().unwrap()
    }

    /// Packed-row range held by image `i`.
    pub fn rows_of(&self, image: usize) -> Range<usize> {
        self.cu_seqlens[image]..self.cu_seqlens[image + 1]
    }

    pub fn seq_len(&self, image: usize) -> usize {
        self.cu_seqlens[image + 1] - self.cu_seqlens[image]
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.packed[r * self.dim..(r + 1) * self.dim]
    }
}

/// Packed query/key/value tensors of shape `[T, H, d]` (token-major) sharing
/// one `cu_seqlens` vector.
///
/// Immutable after construction; [`RaggedQkv::new`] validates shapes, the
/// offset vector, and finiteness once so the kernel never rescans inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RaggedQkv {
    q: Vec<f32>,
    k: Vec<f32>,
    v: Vec<f32>,
    heads: usize,
    head_dim: usize,
    cu_seqlens: Vec<usize>,
}

impl RaggedQkv {
    pub fn new(
        q: Vec<f32>,
        k: Vec<f32>,
        v: Vec<f32>,
        heads: usize,
        head_dim: usize,
        cu_seqlens: Vec<usize>,
    ) -> Result<Self> {
        for (name, t) in [("q", &q), ("k", &k), ("v", &v)] {
            if t.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "{name} contains a non-finite entry"
                )));
            }
        }
        Self::new_unchecked(q, k, v, heads, head_dim, cu_seqlens)
    }

    /// Shape/offset validation without the finiteness scan, for internal
    /// callers whose inputs are finite by construction.
    pub(crate) fn new_unchecked(
        q: Vec<f32>,
        k: Vec<f32>,
        v: Vec<f32>,
        heads: usize,
        head_dim: usize,
        cu_seqlens: Vec<usize>,
    ) -> Result<Self> {
        if heads == 0 || head_dim == 0 {
            return Err(Error::ShapeMismatch(
                "heads and head_dim must be positive".into(),
            ));
        }
        if q.len() != k.len() || q.len() != v.len() {
            return Err(Error::ShapeMismatch(format!(
                "q/k/v lengths differ: {} / {} / {}",
                q.len(),
                k.len(),
                v.len()
            )));
        }
        let row = heads * head_dim;
        if !q.len().is_multiple_of(row) {
            return Err(Error::ShapeMismatch(format!(
                "storage length {} not divisible by heads*head_dim = {row}",
                q.len()
            )));
        }
        validate_cu_seqlens(&cu_seqlens, q.len() / row)?;
        Ok(Self {
            q,
            k,
            v,
            heads,
            head_dim,
            cu_seqlens,
        })
    }

    pub fn q(&self) -> &[f32] {
        &self.q
    }

    pub fn k(&self) -> &[f32] {
        &self.k
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn cu_seqlens(&self) -> &[usize] {
        &self.cu_seqlens
    }

    pub fn batch_size(&self) -> usize {
        self.cu_seqlens.len() - 1
    }

    pub fn total_tokens(&self) -> usize {
        *self.cu_seqlens.last().unwrap()
    }

    pub fn seq_len(&self, image: usize) -> usize {
        self.cu_seqlens[image + 1] - self.cu_seqlens[image]
    }

    /// Flat offset of element `(token, head, 0)`.
    #[inline]
    pub fn base(&self, token: usize, head: usize) -> usize {
        (token * self.heads + head) * self.head_dim
    }
}

/// Per-(image, position) boolean survival mask. Position 0 (CLS) always
/// survives, so every image keeps at least one token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeepMask {
    mask: Vec<bool>,
    batch: usize,
    seq_len: usize,
}

impl KeepMask {
    pub fn new(mask: Vec<bool>, batch: usize, seq_len: usize) -> Result<Self> {
        if mask.len() != batch * seq_len {
            return Err(Error::ShapeMismatch(format!(
                "mask length {} != batch {batch} * seq_len {seq_len}",
                mask.len()
            )));
        }
        if seq_len == 0 {
            return Err(Error::InvalidMask("seq_len must be >= 1".into()));
        }
        for i in 0..batch {
            if !mask[i * seq_len] {
                return Err(Error::InvalidMask(format!(
                    "image {i} drops its CLS token (position 0 must survive)"
                )));
            }
        }
        Ok(Self {
            mask,
            batch,
            seq_len,
        })
    }

    /// All-true mask (no pruning).
    pub fn all_true(batch: usize, seq_len: usize) -> Self {
        Self {
            mask: vec![true; batch * seq_len],
            batch,
            seq_len,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    #[inline]
    pub fn kept(&self, image: usize, position: usize) -> bool {
        self.mask[image * self.seq_len + position]
    }

    pub fn image(&self, image: usize) -> &[bool] {
        &self.mask[image * self.seq_len..(image + 1) * self.seq_len]
    }

    pub fn kept_count(&self, image: usize) -> usize {
        self.image(image).iter().filter(|&&b| b).count()
    }

    pub fn total_kept(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.mask
    }
}

//! Model shape configuration and kernel tile sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transformer shape: layer count, head layout, sequence length, and the
/// 1-based index of the first layer that runs on the pruned token set.
///
/// `prune_layer = depth + 1` means the model never prunes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of transformer blocks.
    pub depth: usize,
    /// Attention heads per block.
    pub heads: usize,
    /// Per-head feature width.
    pub head_dim: usize,
    /// Token embedding width; must equal `heads * head_dim`.
    pub embed_dim: usize,
    /// MLP hidden width (4 * embed_dim in every preset).
    pub mlp_hidden: usize,
    /// Tokens per image including the CLS token at position 0.
    pub seq_len: usize,
    /// 1-based index of the first pruned layer, in `1..=depth+1`.
    pub prune_layer: usize,
    /// Classifier output width.
    pub num_classes: usize,
}

impl ModelConfig {
    /// Look up a named preset.
    ///
    /// `deit_tiny` / `deit_small` / `deit_base` are the DeiT scales (depth 12,
    /// S=197, head_dim 64, pruning from layer 5); `desk` is a small fixture
    /// shape for host-side testing and benchmarking.
    pub fn preset(name: &str) -> Result<Self> {
        let cfg = match name {
            "desk" => Self {
                depth: 6,
                heads: 4,
                head_dim: 16,
                embed_dim: 64,
                mlp_hidden: 256,
                seq_len: 33,
                prune_layer: 3,
                num_classes: 10,
            },
            "deit_tiny" => Self::deit(3, 192),
            "deit_small" => Self::deit(6, 384),
            "deit_base" => Self::deit(12, 768),
            other => return Err(Error::UnknownPreset(other.to_string())),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn deit(heads: usize, embed_dim: usize) -> Self {
        Self {
            depth: 12,
            heads,
            head_dim: 64,
            embed_dim,
            mlp_hidden: 4 * embed_dim,
            seq_len: 197,
            prune_layer: 5,
            num_classes: 1000,
        }
    }

    /// All preset names accepted by [`ModelConfig::preset`].
    pub fn preset_names() -> &'static [&'static str] {
        &["desk", "deit_tiny", "deit_small", "deit_base"]
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim != self.heads * self.head_dim {
            return Err(Error::InvalidConfig(format!(
                "embed_dim {} != heads {} * head_dim {}",
                self.embed_dim, self.heads, self.head_dim
            )));
        }
        if self.depth == 0 || self.heads == 0 || self.head_dim == 0 {
            return Err(Error::InvalidConfig(
                "depth, heads and head_dim must be positive".into(),
            ));
        }
        if self.seq_len == 0 {
            return Err(Error::InvalidConfig(
                "seq_len must be >= 1 (position 0 is the CLS token)".into(),
            ));
        }
        if self.prune_layer == 0 || self.prune_layer > self.depth + 1 {
            return Err(Error::InvalidConfig(format!(
                "prune_layer {} outside 1..={}",
                self.prune_layer,
                self.depth + 1
            )));
        }
        if self.mlp_hidden == 0 || self.num_classes == 0 {
            return Err(Error::InvalidConfig(
                "mlp_hidden and num_classes must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Tile sizes for the ragged attention kernel's two-level loop.
///
/// `block_m` is the query-tile row count, `block_n` the key-tile row count,
/// and `block_d` the feature tile. Feature tiling is unimplemented: the
/// kernel requires `block_d == head_dim` (the canonical setting).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileConfig {
    pub block_m: usize,
    pub block_n: usize,
    pub block_d: usize,
}

impl TileConfig {
    pub fn new(block_m: usize, block_n: usize, block_d: usize) -> Self {
        Self {
            block_m,
            block_n,
            block_d,
        }
    }

    /// Square query/key tiles with `block_d` fixed to the given head width.
    pub fn square(block: usize, head_dim: usize) -> Self {
        Self::new(block, block, head_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_m == 0 || self.block_n == 0 || self.block_d == 0 {
            return Err(Error::InvalidConfig("tile sizes must be positive".into()));
        }
        Ok(())
    }
}

impl Default for TileConfig {
    /// The canonical 64/64/64 tiling.
    fn default() -> Self {
        Self::new(64, 64, 64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deit_base_preset_matches_published_shape() {
        let c = ModelConfig::preset("deit_base").unwrap();
        assert_eq!(c.depth, 12);
        assert_eq!(c.heads, 12);
        assert_eq!(c.head_dim, 64);
        assert_eq!(c.embed_dim, 768);
        assert_eq!(c.seq_len, 197);
        assert_eq!(c.prune_layer, 5);
    }

    #[test]
    fn deit_tiny_preset_width() {
        let c = ModelConfig::preset("deit_tiny").unwrap();
        assert_eq!(c.embed_dim, 192);
        assert_eq!(c.heads, 3);
    }

    #[test]
    fn desk_preset_shape() {
        let c = ModelConfig::preset("desk").unwrap();
        assert_eq!(
            (
                c.depth,
                c.heads,
                c.head_dim,
                c.embed_dim,
                c.seq_len,
                c.prune_layer
            ),
            (6, 4, 16, 64, 33, 3)
        );
    }

    #[test]
    fn every_preset_satisfies_invariants() {
        for name in ModelConfig::preset_names() {
            let c = ModelConfig::preset(name).unwrap();
            assert_eq!(c.embed_dim, c.heads * c.head_dim, "preset {name}");
            c.validate().unwrap();
        }
    }

    #[test]
    fn unknown_preset_rejected() {
        assert!(matches!(
            ModelConfig::preset("deit_xxl"),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn zero_tile_rejected() {
        assert!(TileConfig::new(0, 8, 8).validate().is_err());
        assert!(TileConfig::new(8, 8, 8).validate().is_ok());
    }
}

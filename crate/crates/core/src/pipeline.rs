//! Miniature pre-norm ViT forward pass in two interchangeable backends.
//!
//! Both backends share the dense pre-prune phase bit-for-bit: blocks
//! `1..prune_layer-1` run standard attention over every token, the keep mask
//! is computed from the features entering `prune_layer`, and then
//! - the padded backend keeps the `[B, S, D]` layout, masks attention, and
//!   re-zeroes dropped rows after every residual add;
//! - the ragged backend packs surviving rows once and runs attention, norms
//!   and MLP on the flat `[T, D]` buffer, reading each image's CLS from row
//!   `cu_seqlens[i]`.
//!
//! Blocks are pre-norm (norm -> attention -> residual; norm -> MLP ->
//! residual) with tanh-approximation GELU and LayerNorm eps 1e-6. Inputs are
//! pre-embedded token tensors; patch embedding is out of scope.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{ragged_attention_forward_opts, KernelOptions};
use crate::config::{ModelConfig, TileConfig};
use crate::error::{Error, Result};
use crate::packing::{compute_pack_plan, pack};
use crate::pruning::{generate_mask, PruneSpec};
use crate::ragged::KeepMask;
use crate::reference::{padded_masked_attention, AttentionMask};
use crate::tensor::{normal_f32, read_container, write_container, DenseBatch};

const LAYER_NORM_EPS: f32 = 1e-6;
/// Weight init scale for all projection matrices.
const INIT_STD: f32 = 0.02;

/// Per-block parameters. Matrices are row-major with the input dimension
/// outermost, e.g. `qkv_w[i * 3D + j]` maps input feature `i` to output `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub ln1_scale: Vec<f32>,
    pub ln1_shift: Vec<f32>,
    pub qkv_w: Vec<f32>,
    pub qkv_b: Vec<f32>,
    pub proj_w: Vec<f32>,
    pub proj_b: Vec<f32>,
    pub ln2_scale: Vec<f32>,
    pub ln2_shift: Vec<f32>,
    pub mlp_in_w: Vec<f32>,
    pub mlp_in_b: Vec<f32>,
    pub mlp_out_w: Vec<f32>,
    pub mlp_out_b: Vec<f32>,
}

/// Full model parameters: `depth` blocks, the final norm, and the classifier
/// head.
#[derive(Debug, Clone, PartialEq)]
pub struct ViTWeights {
    pub blocks: Vec<BlockWeights>,
    pub final_norm_scale: Vec<f32>,
    pub final_norm_shift: Vec<f32>,
    pub head_w: Vec<f32>,
    pub head_b: Vec<f32>,
}

impl ViTWeights {
    /// Shape-check against a model config.
    pub fn matches(&self, config: &ModelConfig) -> Result<()> {
        let (d, m, c) = (config.embed_dim, config.mlp_hidden, config.num_classes);
        if self.blocks.len() != config.depth {
            return Err(Error::ShapeMismatch(format!(
                "{} blocks != depth {}",
                self.blocks.len(),
                config.depth
            )));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            let shapes = [
                (b.ln1_scale.len(), d),
                (b.ln1_shift.len(), d),
                (b.qkv_w.len(), d * 3 * d),
                (b.qkv_b.len(), 3 * d),
                (b.proj_w.len(), d * d),
                (b.proj_b.len(), d),
                (b.ln2_scale.len(), d),
                (b.ln2_shift.len(), d),
                (b.mlp_in_w.len(), d * m),
                (b.mlp_in_b.len(), m),
                (b.mlp_out_w.len(), m * d),
                (b.mlp_out_b.len(), d),
            ];
            if let Some((got, want)) = shapes.iter().find(|(got, want)| got != want) {
                return Err(Error::ShapeMismatch(format!(
                    "block {i}: tensor length {got} != {want}"
                )));
            }
        }
        if self.final_norm_scale.len() != d
            || self.final_norm_shift.len() != d
            || self.head_w.len() != d * c
            || self.head_b.len() != c
        {
            return Err(Error::ShapeMismatch("final norm or head shape".into()));
        }
        Ok(())
    }

    /// Serialize into the RGC1 container: one file, all tensors concatenated
    /// behind a JSON manifest of names/shapes/offsets.
    pub fn save<W: Write>(&self, w: &mut W, config: &ModelConfig) -> Result<()> {
        self.matches(config)?;
        let (d, m, c) = (config.embed_dim, config.mlp_hidden, config.num_classes);
        let mut entries: Vec<(String, Vec<usize>, &[f32])> = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let pre = format!("block{i}");
            entries.push((format!("{pre}.ln1_scale"), vec![d], &b.ln1_scale));
            entries.push((format!("{pre}.ln1_shift"), vec![d], &b.ln1_shift));
            entries.push((format!("{pre}.qkv_w"), vec![d, 3 * d], &b.qkv_w));
            entries.push((format!("{pre}.qkv_b"), vec![3 * d], &b.qkv_b));
            entries.push((format!("{pre}.proj_w"), vec![d, d], &b.proj_w));
            entries.push((format!("{pre}.proj_b"), vec![d], &b.proj_b));
            entries.push((format!("{pre}.ln2_scale"), vec![d], &b.ln2_scale));
            entries.push((format!("{pre}.ln2_shift"), vec![d], &b.ln2_shift));
            entries.push((format!("{pre}.mlp_in_w"), vec![d, m], &b.mlp_in_w));
            entries.push((format!("{pre}.mlp_in_b"), vec![m], &b.mlp_in_b));
            entries.push((format!("{pre}.mlp_out_w"), vec![m, d], &b.mlp_out_w));
            entries.push((format!("{pre}.mlp_out_b"), vec![d], &b.mlp_out_b));
        }
        entries.push(("final_norm_scale".into(), vec![d], &self.final_norm_scale));
        entries.push(("final_norm_shift".into(), vec![d], &self.final_norm_shift));
        entries.push(("head_w".into(), vec![d, c], &self.head_w));
        entries.push(("head_b".into(), vec![c], &self.head_b));
        let refs: Vec<(&str, &[usize], &[f32])> = entries
            .iter()
            .map(|(n, s, t)| (n.as_str(), s.as_slice(), *t))
            .collect();
        write_container(w, &refs)
    }

    pub fn load<R: Read>(r: &mut R, config: &ModelConfig) -> Result<Self> {
        let tensors = read_container(r)?;
        let find = |name: &str| -> Result<Vec<f32>> {
            tensors
                .iter()
                .find(|(n, _, _)| n == name)
                .map(|(_, _, t)| t.clone())
                .ok_or_else(|| Error::Malformed(format!("container missing tensor `{name}`")))
        };
        let mut blocks = Vec::with_capacity(config.depth);
        for i in 0..config.depth {
            let pre = format!("block{i}");
            blocks.push(BlockWeights {
                ln1_scale: find(&format!("{pre}.ln1_scale"))?,
                ln1_shift: find(&format!("{pre}.ln1_shift"))?,
                qkv_w: find(&format!("{pre}.qkv_w"))?,
                qkv_b: find(&format!("{pre}.qkv_b"))?,
                proj_w: find(&format!("{pre}.proj_w"))?,
                proj_b: find(&format!("{pre}.proj_b"))?,
                ln2_scale: find(&format!("{pre}.ln2_scale"))?,
                ln2_shift: find(&format!("{pre}.ln2_shift"))?,
                mlp_in_w: find(&format!("{pre}.mlp_in_w"))?,
                mlp_in_b: find(&format!("{pre}.mlp_in_b"))?,
                mlp_out_w: find(&format!("{pre}.mlp_out_w"))?,
                mlp_out_b: find(&format!("{pre}.mlp_out_b"))?,
            });
        }
        let weights = Self {
            blocks,
            final_norm_scale: find("final_norm_scale")?,
            final_norm_shift: find("final_norm_shift")?,
            head_w: find("head_w")?,
            head_b: find("head_b")?,
        };
        weights.matches(config)?;
        Ok(weights)
    }

    pub fn save_file<P: AsRef<Path>>(&self, path: P, config: &ModelConfig) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save(&mut f, config)
    }

    pub fn load_file<P: AsRef<Path>>(path: P, config: &ModelConfig) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::load(&mut f, config)
    }
}

/// Deterministic random initialization: normal(0, 0.02) matrices, zero
/// biases and norm shifts, unit norm scales. Only matrix entries consume
/// the RNG stream, drawn in block order (qkv, proj, mlp_in, mlp_out) and
/// finally the head.
pub fn init_weights(config: &ModelConfig, seed: u64) -> Result<ViTWeights> {
    config.validate()?;
    let (d, m, c) = (config.embed_dim, config.mlp_hidden, config.num_classes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrix =
        |len: usize| -> Vec<f32> { (0..len).map(|_| normal_f32(&mut rng) * INIT_STD).collect() };
    let mut blocks = Vec::with_capacity(config.depth);
    for _ in 0..config.depth {
        blocks.push(BlockWeights {
            ln1_scale: vec![1.0; d],
            ln1_shift: vec![0.0; d],
            qkv_w: matrix(d * 3 * d),
            qkv_b: vec![0.0; 3 * d],
            proj_w: matrix(d * d),
            proj_b: vec![0.0; d],
            ln2_scale: vec![1.0; d],
            ln2_shift: vec![0.0; d],
            mlp_in_w: matrix(d * m),
            mlp_in_b: vec![0.0; m],
            mlp_out_w: matrix(m * d),
            mlp_out_b: vec![0.0; d],
        });
    }
    Ok(ViTWeights {
        blocks,
        final_norm_scale: vec![1.0; d],
        final_norm_shift: vec![0.0; d],
        head_w: matrix(d * c),
        head_b: vec![0.0; c],
    })
}

/// Execution knobs for the ragged backend.
#[derive(Debug, Clone, Copy)]
pub struct PipelineOptions {
    /// Query/key tile sizes; `block_d` must equal the model's head_dim.
    pub tiles: TileConfig,
    /// Worker threads for the attention program grid.
    pub workers: usize,
    #[doc(hidden)]
    pub skip_final_div: bool,
}

impl PipelineOptions {
    pub fn for_config(config: &ModelConfig) -> Self {
        Self {
            tiles: TileConfig::square(64, config.head_dim),
            workers: 1,
            skip_final_div: false,
        }
    }
}

/// Forward-pass result: `[B, num_classes]` logits plus the keep mask the
/// prune decision produced.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub logits: Vec<f32>,
    pub mask: KeepMask,
}

impl PipelineOutput {
    /// Per-image argmax over the logit rows.
    pub fn predictions(&self, num_classes: usize) -> Vec<usize> {
        self.logits
            .chunks_exact(num_classes)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap()
            })
            .collect()
    }
}

/// Padded-masked backend: the whole batch stays `[B, S, D]`; post-prune
/// blocks mask attention and re-zero dropped rows after every residual add.
pub fn forward_padded(
    config: &ModelConfig,
    weights: &ViTWeights,
    input: &DenseBatch,
    spec: &PruneSpec,
) -> Result<PipelineOutput> {
    let (mut x, mask) = run_shared_prefix(config, weights, input, spec)?;
    let b = input.batch;
    let s = config.seq_len;
    if config.prune_layer <= config.depth {
        let attn_mask = AttentionMask::from(&mask);
        for block in &weights.blocks[config.prune_layer - 1..] {
            apply_block_padded(&mut x, block, config, b, s, &attn_mask, Some(&mask))?;
        }
    }
    let d = config.embed_dim;
    let cls_rows: Vec<&[f32]> = (0..b).map(|i| &x[i * s * d..i * s * d + d]).collect();
    let logits = classify(&cls_rows, weights, config);
    Ok(PipelineOutput { logits, mask })
}

/// Pack-attend-unpack backend: post-prune blocks run on the packed `[T, D]`
/// buffer via the ragged kernel; CLS logits are read straight from packed
/// rows `cu_seqlens[i]` (no scatter back).
pub fn forward_ragged(
    config: &ModelConfig,
    weights: &ViTWeights,
    input: &DenseBatch,
    spec: &PruneSpec,
) -> Result<PipelineOutput> {
    forward_ragged_opts(
        config,
        weights,
        input,
        spec,
        &PipelineOptions::for_config(config),
    )
}

pub fn forward_ragged_opts(
    config: &ModelConfig,
    weights: &ViTWeights,
    input: &DenseBatch,
    spec: &PruneSpec,
    opts: &PipelineOptions,
) -> Result<PipelineOutput> {
    let (x, mask) = run_shared_prefix(config, weights, input, spec)?;
    let b = input.batch;
    let s = config.seq_len;
    let d = config.embed_dim;

    if config.prune_layer > config.depth {
        // Never prunes; identical to the padded path's dense run.
        let cls_rows: Vec<&[f32]> = (0..b).map(|i| &x[i * s * d..i * s * d + d]).collect();
        let logits = classify(&cls_rows, weights, config);
        return Ok(PipelineOutput { logits, mask });
    }

    let plan = compute_pack_plan(&mask)?;
    let dense = DenseBatch {
        data: x,
        batch: b,
        seq_len: s,
        dim: d,
    };
    let ragged = pack(&dense, &plan)?;
    let cu = ragged.cu_seqlens().to_vec();
    let mut px = ragged.packed().to_vec();
    let tokens = plan.total_kept;
    for block in &weights.blocks[config.prune_layer - 1..] {
        apply_block_ragged(&mut px, tokens, block, config, &cu, opts)?;
    }
    let cls_rows: Vec<&[f32]> = (0..b).map(|i| &px[cu[i] * d..cu[i] * d + d]).collect();
    let logits = classify(&cls_rows, weights, config);
    Ok(PipelineOutput { logits, mask })
}

/// Dense pre-prune blocks plus the prune decision, shared verbatim by both
/// backends so their divergence is confined to the post-prune phase.
fn run_shared_prefix(
    config: &ModelConfig,
    weights: &ViTWeights,
    input: &DenseBatch,
    spec: &PruneSpec,
) -> Result<(Vec<f32>, KeepMask)> {
    config.validate()?;
    weights.matches(config)?;
    spec.validate()?;
    if input.seq_len != config.seq_len || input.dim != config.embed_dim {
        return Err(Error::ShapeMismatch(format!(
            "input [{}, {}, {}] does not match config [S={}, D={}]",
            input.batch, input.seq_len, input.dim, config.seq_len, config.embed_dim
        )));
    }
    if input.batch == 0 {
        return Err(Error::EmptyInput("batch size 0".into()));
    }
    let b = input.batch;
    let s = config.seq_len;
    let mut x = input.data.clone();
    let all_true = AttentionMask::all_true(b, s);
    let pre_blocks = (config.prune_layer - 1).min(config.depth);
    for block in &weights.blocks[..pre_blocks] {
        apply_block_padded(&mut x, block, config, b, s, &all_true, None)?;
    }
    let mask = if config.prune_layer <= config.depth {
        let features = DenseBatch {
            data: x.clone(),
            batch: b,
            seq_len: s,
            dim: config.embed_dim,
        };
        generate_mask(spec, &features)?
    } else {
        KeepMask::all_true(b, s)
    };
    Ok((x, mask))
}

/// One pre-norm block over the padded layout.
fn apply_block_padded(
    x: &mut [f32],
    block: &BlockWeights,
    config: &ModelConfig,
    batch: usize,
    seq_len: usize,
    attn_mask: &AttentionMask,
    zero_mask: Option<&KeepMask>,
) -> Result<()> {
    let rows = batch * seq_len;
    let d = config.embed_dim;

    let h1 = layer_norm_rows(x, rows, d, &block.ln1_scale, &block.ln1_shift);
    let qkv = linear_rows(&h1, rows, d, 3 * d, &block.qkv_w, &block.qkv_b);
    let (q, k, v) = split_qkv(&qkv, rows, d);
    let attn = padded_masked_attention(
        &q,
        &k,
        &v,
        batch,
        seq_len,
        config.heads,
        config.head_dim,
        attn_mask,
    )?;
    let proj = linear_rows(&attn, rows, d, d, &block.proj_w, &block.proj_b);
    add_in_place(x, &proj);
    if let Some(mask) = zero_mask {
        zero_dropped_rows(x, mask, d);
    }

    let h2 = layer_norm_rows(x, rows, d, &block.ln2_scale, &block.ln2_shift);
    let mut mid = linear_rows(
        &h2,
        rows,
        d,
        config.mlp_hidden,
        &block.mlp_in_w,
        &block.mlp_in_b,
    );
    gelu_in_place(&mut mid);
    let out = linear_rows(
        &mid,
        rows,
        config.mlp_hidden,
        d,
        &block.mlp_out_w,
        &block.mlp_out_b,
    );
    add_in_place(x, &out);
    if let Some(mask) = zero_mask {
        zero_dropped_rows(x, mask, d);
    }
    Ok(())
}

/// One pre-norm block over the packed layout. Row-wise ops are the same
/// routines the padded path uses; only attention differs.
fn apply_block_ragged(
    x: &mut [f32],
    tokens: usize,
    block: &BlockWeights,
    config: &ModelConfig,
    cu_seqlens: &[usize],
    opts: &PipelineOptions,
) -> Result<()> {
    let d = config.embed_dim;

    let h1 = layer_norm_rows(x, tokens, d, &block.ln1_scale, &block.ln1_shift);
    let qkv = linear_rows(&h1, tokens, d, 3 * d, &block.qkv_w, &block.qkv_b);
    let (q, k, v) = split_qkv(&qkv, tokens, d);
    // [T, D] with head-major features is exactly the [T, H, d] kernel layout.
    let ragged = crate::ragged::RaggedQkv::new_unchecked(
        q,
        k,
        v,
        config.heads,
        config.head_dim,
        cu_seqlens.to_vec(),
    )?;
    let kernel_opts = KernelOptions {
        workers: opts.workers,
        skip_final_div: opts.skip_final_div,
    };
    let (attn, _) = ragged_attention_forward_opts(&ragged, &opts.tiles, &kernel_opts)?;
    let proj = linear_rows(&attn, tokens, d, d, &block.proj_w, &block.proj_b);
    add_in_place(x, &proj);

    let h2 = layer_norm_rows(x, tokens, d, &block.ln2_scale, &block.ln2_shift);
    let mut mid = linear_rows(
        &h2,
        tokens,
        d,
        config.mlp_hidden,
        &block.mlp_in_w,
        &block.mlp_in_b,
    );
    gelu_in_place(&mut mid);
    let out = linear_rows(
        &mid,
        tokens,
        config.mlp_hidden,
        d,
        &block.mlp_out_w,
        &block.mlp_out_b,
    );
    add_in_place(x, &out);
    Ok(())
}

fn classify(cls_rows: &[&[f32]], weights: &ViTWeights, config: &ModelConfig) -> Vec<f32> {
    let d = config.embed_dim;
    let c = config.num_classes;
    let mut logits = vec![0.0f32; cls_rows.len() * c];
    let mut normed = vec![0.0f32; d];
    for (i, row) in cls_rows.iter().enumerate() {
        layer_norm_row(
            row,
            &weights.final_norm_scale,
            &weights.final_norm_shift,
            &mut normed,
        );
        let out = &mut logits[i * c..(i + 1) * c];
        out.copy_from_slice(&weights.head_b);
        for (j, &xj) in normed.iter().enumerate() {
            crate::reference::axpy(xj, &weights.head_w[j * c..(j + 1) * c], out);
        }
    }
    logits
}

/// `y = x W + b` over row-major `x [rows, din]`, `w [din, dout]`. The inner
/// loop walks contiguous weight rows (ikj order), ascending, every row at
/// full cost regardless of content — zero rows of a padded batch pay the
/// same as real ones.
pub(crate) fn linear_rows(
    x: &[f32],
    rows: usize,
    din: usize,
    dout: usize,
    w: &[f32],
    b: &[f32],
) -> Vec<f32> {
    debug_assert_eq!(x.len(), rows * din);
    debug_assert_eq!(w.len(), din * dout);
    debug_assert_eq!(b.len(), dout);
    let mut y = vec![0.0f32; rows * dout];
    for r in 0..rows {
        let x_row = &x[r * din..(r + 1) * din];
        let y_row = &mut y[r * dout..(r + 1) * dout];
        y_row.copy_from_slice(b);
        for (i, &xi) in x_row.iter().enumerate() {
            crate::reference::axpy(xi, &w[i * dout..(i + 1) * dout], y_row);
        }
    }
    y
}

pub(crate) fn layer_norm_rows(
    x: &[f32],
    rows: usize,
    dim: usize,
    scale: &[f32],
    shift: &[f32],
) -> Vec<f32> {
    let mut y = vec![0.0f32; rows * dim];
    for r in 0..rows {
        layer_norm_row(
            &x[r * dim..(r + 1) * dim],
            scale,
            shift,
            &mut y[r * dim..(r + 1) * dim],
        );
    }
    y
}

fn layer_norm_row(x: &[f32], scale: &[f32], shift: &[f32], out: &mut [f32]) {
    let dim = x.len();
    let mean = x.iter().sum::<f32>() / dim as f32;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / dim as f32;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    for i in 0..dim {
        out[i] = (x[i] - mean) * inv * scale[i] + shift[i];
    }
}

/// tanh-approximation GELU.
pub(crate) fn gelu_in_place(x: &mut [f32]) {
    const SQRT_2_OVER_PI: f32 = 0.797_884_6;
    for v in x.iter_mut() {
        let t = (SQRT_2_OVER_PI * (*v + 0.044_715 * *v * *v * *v)).tanh();
        *v = 0.5 * *v * (1.0 + t);
    }
}

fn split_qkv(qkv: &[f32], rows: usize, d: usize) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let mut q = vec![0.0f32; rows * d];
    let mut k = vec![0.0f32; rows * d];
    let mut v = vec![0.0f32; rows * d];
    for r in 0..rows {
        let src = &qkv[r * 3 * d..(r + 1) * 3 * d];
        q[r * d..(r + 1) * d].copy_from_slice(&src[..d]);
        k[r * d..(r + 1) * d].copy_from_slice(&src[d..2 * d]);
        v[r * d..(r + 1) * d].copy_from_slice(&src[2 * d..]);
    }
    (q, k, v)
}

fn add_in_place(x: &mut [f32], y: &[f32]) {
    debug_assert_eq!(x.len(), y.len());
    for (a, b) in x.iter_mut().zip(y) {
        *a += b;
    }
}

fn zero_dropped_rows(x: &mut [f32], mask: &KeepMask, dim: usize) {
    let s = mask.seq_len();
    for i in 0..mask.batch_size() {
        for p in 0..s {
            if !mask.kept(i, p) {
                x[(i * s + p) * dim..(i * s + p + 1) * dim].fill(0.0);
            }
        }
    }
}

/// Multiply-accumulate counts for one forward pass, split by component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlopCounts {
    /// Score and value matmuls: `2 n^2 D` per layer per image.
    pub attn_matmul: u64,
    /// QKV and output projections: `4 n D^2` per layer per image.
    pub projections: u64,
    /// Both MLP matmuls: `2 n D mlp_hidden` per layer per image.
    pub mlp: u64,
}

impl FlopCounts {
    pub fn total(&self) -> u64 {
        self.attn_matmul + self.projections + self.mlp
    }
}

/// Per-image MAC counts split at the prune point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlopBreakdown {
    pub pre: FlopCounts,
    pub post: FlopCounts,
}

impl FlopBreakdown {
    pub fn total(&self) -> u64 {
        self.pre.total() + self.post.total()
    }
}

/// Count per-image multiply-accumulates: layers before `prune_layer` run at
/// `tokens_per_image` tokens, layers from it on at `pruned_tokens`.
pub fn count_flops(
    config: &ModelConfig,
    tokens_per_image: usize,
    pruned_tokens: usize,
    prune_layer: usize,
) -> FlopBreakdown {
    let d = config.embed_dim as u64;
    let m = config.mlp_hidden as u64;
    let per_layer = |n: u64| FlopCounts {
        attn_matmul: 2 * n * n * d,
        projections: 4 * n * d * d,
        mlp: 2 * n * d * m,
    };
    let scale = |c: FlopCounts, layers: u64| FlopCounts {
        attn_matmul: c.attn_matmul * layers,
        projections: c.projections * layers,
        mlp: c.mlp * layers,
    };
    let pre_layers = (prune_layer.min(config.depth + 1) - 1) as u64;
    let post_layers = config.depth as u64 - pre_layers;
    FlopBreakdown {
        pre: scale(per_layer(tokens_per_image as u64), pre_layers),
        post: scale(per_layer(pruned_tokens as u64), post_layers),
    }
}

/// Per-layer cost coefficients derived from the model shape: the linear
/// term covers projections plus MLP per token, the quadratic term the
/// QK^T and PV matmuls per token pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub linear_coeff: f64,
    pub quad_coeff: f64,
}

impl CostModel {
    pub fn from_config(config: &ModelConfig) -> Self {
        let d = config.embed_dim as f64;
        let m = config.mlp_hidden as f64;
        Self {
            linear_coeff: 4.0 * d * d + 2.0 * d * m,
            quad_coeff: 2.0 * d,
        }
    }
}

/// Model-level speedup bound: full-length cost over pruned cost, with
/// per-layer cost `linear_coeff * n + quad_coeff * n^2`, pre-prune layers at
/// `n = S` and post-prune layers at `n = kept_count(S, ratio)`.
pub fn theoretical_speedup(config: &ModelConfig, ratio: f64, cost: &CostModel) -> Result<f64> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::InvalidConfig(format!(
            "ratio {ratio} outside [0, 1)"
        )));
    }
    let per_layer = |n: f64| cost.linear_coeff * n + cost.quad_coeff * n * n;
    let s = config.seq_len as f64;
    let k = crate::pruning::kept_count(config.seq_len, ratio) as f64;
    let pre_layers = (config.prune_layer.min(config.depth + 1) - 1) as f64;
    let post_layers = config.depth as f64 - pre_layers;
    let full = (config.depth as f64) * per_layer(s);
    let pruned = pre_layers * per_layer(s) + post_layers * per_layer(k);
    Ok(full / pruned)
}

//! `gen-fixtures`: write binary tensor fixtures for cross-implementation
//! testing: a ragged attention case with its oracle output, and a pipeline
//! case with weights, input, mask and reference logits.

use std::path::PathBuf;

use serde::Serialize;

use raggedvit::pipeline::{forward_padded, init_weights};
use raggedvit::pruning::kept_count;
use raggedvit::ragged::RaggedQkv;
use raggedvit::reference::naive_attention;
use raggedvit::tensor::{write_rgi1_file, write_rgt1_file, DenseBatch};
use raggedvit::Result;

use crate::run_config::{resolve, resolve_prune, CommonArgs};

#[derive(clap::Args, Debug)]
pub struct FixturesArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "fixtures")]
    pub out: PathBuf,
    /// Prune ratio for the generated cases
    #[arg(long, default_value_t = 0.5)]
    pub ratio: f64,
    /// Batch size for the generated cases
    #[arg(long = "bs", default_value_t = 3)]
    pub batch: usize,
}

#[derive(Serialize)]
struct FixtureManifest {
    model: raggedvit::ModelConfig,
    prune: raggedvit::pruning::PruneSpec,
    seed: u64,
    kernel_lengths: Vec<usize>,
    files: Vec<&'static str>,
    tensor_format: &'static str,
}

pub fn run(args: &FixturesArgs) -> Result<i32> {
    let resolved = resolve(&args.common)?;
    let model = resolved.model;
    let mut spec = resolve_prune(&resolved, Some(args.ratio));
    spec.seed = resolved.seed;
    std::fs::create_dir_all(&args.out)?;

    // Ragged attention case: heterogeneous lengths around the pruned size.
    let k = kept_count(model.seq_len, args.ratio);
    let lengths: Vec<usize> = (0..args.batch)
        .map(|i| (k + i).min(model.seq_len).max(1))
        .collect();
    let mut cu = vec![0usize];
    for &n in &lengths {
        cu.push(cu.last().unwrap() + n);
    }
    let total = *cu.last().unwrap();
    let (heads, d) = (model.heads, model.head_dim);
    let len = total * heads * d;
    let gen =
        |offset: u64| DenseBatch::random(total, heads, d, resolved.seed.wrapping_add(offset)).data;
    let (q, kk, v) = (gen(1), gen(2), gen(3));
    debug_assert_eq!(q.len(), len);
    let qkv = RaggedQkv::new(q, kk, v, heads, d, cu.clone())?;

    // Oracle output per (image, head), assembled in the packed layout.
    let mut expected = vec![0.0f32; len];
    for image in 0..qkv.batch_size() {
        let start = qkv.cu_seqlens()[image];
        let n = qkv.seq_len(image);
        for head in 0..heads {
            let gather = |t: &[f32]| -> Vec<f32> {
                (0..n)
                    .flat_map(|r| {
                        let b = qkv.base(start + r, head);
                        t[b..b + d].to_vec()
                    })
                    .collect()
            };
            let out = naive_attention(&gather(qkv.q()), &gather(qkv.k()), &gather(qkv.v()), n, d)?;
            for r in 0..n {
                let b = qkv.base(start + r, head);
                expected[b..b + d].copy_from_slice(&out[r * d..(r + 1) * d]);
            }
        }
    }

    let dims = [total, heads, d];
    write_rgt1_file(args.out.join("q.rgt1"), &dims, qkv.q())?;
    write_rgt1_file(args.out.join("k.rgt1"), &dims, qkv.k())?;
    write_rgt1_file(args.out.join("v.rgt1"), &dims, qkv.v())?;
    write_rgt1_file(args.out.join("attn_expected.rgt1"), &dims, &expected)?;
    let cu_i64: Vec<i64> = cu.iter().map(|&x| x as i64).collect();
    write_rgi1_file(args.out.join("cu_seqlens.rgi1"), &cu_i64)?;

    // Pipeline case: weights container, input, mask, reference logits.
    let weights = init_weights(&model, resolved.seed)?;
    weights.save_file(args.out.join("weights.rgc1"), &model)?;
    let input = DenseBatch::random(args.batch, model.seq_len, model.embed_dim, resolved.seed);
    write_rgt1_file(
        args.out.join("input.rgt1"),
        &[args.batch, model.seq_len, model.embed_dim],
        &input.data,
    )?;
    let out = forward_padded(&model, &weights, &input, &spec)?;
    write_rgt1_file(
        args.out.join("logits_expected.rgt1"),
        &[args.batch, model.num_classes],
        &out.logits,
    )?;
    let mask_i64: Vec<i64> = out.mask.as_slice().iter().map(|&b| b as i64).collect();
    write_rgi1_file(args.out.join("mask.rgi1"), &mask_i64)?;

    let manifest = FixtureManifest {
        model,
        prune: spec,
        seed: resolved.seed,
        kernel_lengths: lengths,
        files: vec![
            "q.rgt1",
            "k.rgt1",
            "v.rgt1",
            "cu_seqlens.rgi1",
            "attn_expected.rgt1",
            "weights.rgc1",
            "input.rgt1",
            "mask.rgi1",
            "logits_expected.rgt1",
        ],
        tensor_format: "RGT1: magic, u32 rank, rank x u64 dims, little-endian f32 payload, \
                        row-major; RGI1: same header, i64 payload; RGC1: JSON manifest + \
                        concatenated f32 tensors",
    };
    std::fs::write(
        args.out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    for f in &manifest.files {
        println!("wrote {}", args.out.join(f).display());
    }
    println!("wrote {}", args.out.join("manifest.json").display());
    Ok(0)
}

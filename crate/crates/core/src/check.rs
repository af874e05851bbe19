//! Equivalence suites: the randomized kernel-vs-oracle check and the
//! padded-vs-ragged backend check whose report mirrors the published
//! per-method table (max |delta|, mean |delta|, prediction match).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{ragged_attention_forward_opts, KernelOptions};
use crate::config::{ModelConfig, TileConfig};
use crate::error::Result;
use crate::pipeline::{forward_padded, forward_ragged_opts, init_weights, PipelineOptions};
use crate::pruning::{PruneMethod, PruneSpec};
use crate::ragged::RaggedQkv;
use crate::reference::naive_attention;
use crate::tensor::DenseBatch;

/// Parameters of the randomized oracle-equivalence suite.
#[derive(Debug, Clone)]
pub struct OracleCheckConfig {
    pub cases: usize,
    pub max_batch: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub head_counts: Vec<usize>,
    pub head_dims: Vec<usize>,
    pub tile_sizes: Vec<usize>,
    pub seed: u64,
    pub tolerance: f32,
}

impl Default for OracleCheckConfig {
    fn default() -> Self {
        Self {
            cases: 200,
            max_batch: 8,
            min_len: 1,
            max_len: 64,
            head_counts: vec![1, 4],
            head_dims: vec![8, 16, 64],
            tile_sizes: vec![8, 16, 32, 64],
            seed: 0,
            tolerance: 1e-5,
        }
    }
}

/// One failing case, for diagnostics.
#[derive(Debug, Clone)]
pub struct OracleFailure {
    pub case: usize,
    pub lengths: Vec<usize>,
    pub heads: usize,
    pub head_dim: usize,
    pub tile: usize,
    pub max_diff: f32,
}

#[derive(Debug, Clone, Default)]
pub struct OracleCheckResult {
    pub cases_run: usize,
    pub max_abs_diff: f32,
    pub failures: Vec<OracleFailure>,
}

impl OracleCheckResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Run randomized heterogeneous-length batches through the ragged kernel
/// and compare every (image, head) output against the quadratic oracle.
pub fn run_oracle_equivalence(cfg: &OracleCheckConfig) -> Result<OracleCheckResult> {
    run_oracle_equivalence_opts(cfg, &KernelOptions::default())
}

/// Variant with kernel options exposed, used for fault injection.
pub fn run_oracle_equivalence_opts(
    cfg: &OracleCheckConfig,
    kernel_opts: &KernelOptions,
) -> Result<OracleCheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut result = OracleCheckResult::default();
    for case in 0..cfg.cases {
        let batch = rng.random_range(1..=cfg.max_batch);
        let lengths: Vec<usize> = (0..batch)
            .map(|_| rng.random_range(cfg.min_len..=cfg.max_len))
            .collect();
        let heads = cfg.head_counts[rng.random_range(0..cfg.head_counts.len())];
        let head_dim = cfg.head_dims[rng.random_range(0..cfg.head_dims.len())];
        let tile = cfg.tile_sizes[rng.random_range(0..cfg.tile_sizes.len())];

        let mut cu = vec![0usize];
        for &n in &lengths {
            cu.push(cu.last().unwrap() + n);
        }
        let total = *cu.last().unwrap();
        let len = total * heads * head_dim;
        let mut gen =
            |n: usize| -> Vec<f32> { (0..n).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect() };
        let q = gen(len);
        let k = gen(len);
        let v = gen(len);
        let qkv = RaggedQkv::new_unchecked(q, k, v, heads, head_dim, cu)?;
        let tiles = TileConfig::square(tile, head_dim);
        let (out, _) = ragged_attention_forward_opts(&qkv, &tiles, kernel_opts)?;

        let mut case_max = 0.0f32;
        for image in 0..qkv.batch_size() {
            let start = qkv.cu_seqlens()[image];
            let n = qkv.seq_len(image);
            for head in 0..heads {
                let gather = |t: &[f32]| -> Vec<f32> {
                    (0..n)
                        .flat_map(|r| {
                            let b = qkv.base(start + r, head);
                            t[b..b + head_dim].to_vec()
                        })
                        .collect()
                };
                let expect = naive_attention(
                    &gather(qkv.q()),
                    &gather(qkv.k()),
                    &gather(qkv.v()),
                    n,
                    head_dim,
                )?;
                for r in 0..n {
                    let b = qkv.base(start + r, head);
                    for c in 0..head_dim {
                        case_max = case_max.max((out[b + c] - expect[r * head_dim + c]).abs());
                    }
                }
            }
        }
        result.max_abs_diff = result.max_abs_diff.max(case_max);
        if case_max > cfg.tolerance || !case_max.is_finite() {
            result.failures.push(OracleFailure {
                case,
                lengths,
                heads,
                head_dim,
                tile,
                max_diff: case_max,
            });
        }
        result.cases_run += 1;
    }
    Ok(result)
}

/// Parameters of the padded-vs-ragged backend suite.
#[derive(Debug, Clone)]
pub struct BackendCheckConfig {
    pub model: ModelConfig,
    pub batch: usize,
    pub seeds: Vec<u64>,
    pub ratios: Vec<f64>,
    pub methods: Vec<PruneMethod>,
    pub tolerance: f32,
}

impl BackendCheckConfig {
    /// The desk-scale default: 20 seeds x ratios {0.25, 0.5, 0.8}.
    pub fn desk_default() -> Result<Self> {
        Ok(Self {
            model: ModelConfig::preset("desk")?,
            batch: 4,
            seeds: (0..20).collect(),
            ratios: vec![0.25, 0.5, 0.8],
            methods: PruneMethod::all().to_vec(),
            tolerance: 1e-4,
        })
    }
}

/// Per-method equivalence row: the published table's format.
#[derive(Debug, Clone)]
pub struct MethodEquivalence {
    pub method: PruneMethod,
    pub max_abs_diff: f32,
    pub mean_abs_diff: f64,
    pub images: usize,
    pub preds_matched: usize,
    /// A (seed, ratio) cell that violated the tolerance or changed a
    /// prediction, if any.
    pub first_violation: Option<(u64, f64)>,
}

impl MethodEquivalence {
    pub fn preds_match_pct(&self) -> f64 {
        100.0 * self.preds_matched as f64 / self.images as f64
    }

    pub fn passed(&self, tolerance: f32) -> bool {
        self.max_abs_diff <= tolerance && self.preds_matched == self.images
    }
}

/// Run both backends over every (method, seed, ratio) cell and aggregate
/// per-method logit differences and prediction agreement. Keep masks must
/// agree exactly; a mismatch is reported as a violation.
pub fn run_backend_equivalence(
    cfg: &BackendCheckConfig,
    pipe_opts: &PipelineOptions,
) -> Result<Vec<MethodEquivalence>> {
    let mut rows = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let mut row = MethodEquivalence {
            method,
            max_abs_diff: 0.0,
            mean_abs_diff: 0.0,
            images: 0,
            preds_matched: 0,
            first_violation: None,
        };
        let mut abs_sum = 0.0f64;
        let mut abs_count = 0usize;
        for &seed in &cfg.seeds {
            let weights = init_weights(&cfg.model, seed)?;
            let input = DenseBatch::random(
                cfg.batch,
                cfg.model.seq_len,
                cfg.model.embed_dim,
                seed.wrapping_add(0x5eed),
            );
            for &ratio in &cfg.ratios {
                let spec = PruneSpec {
                    method,
                    ratio,
                    seed,
                    jitter: 0.0,
                };
                let padded = forward_padded(&cfg.model, &weights, &input, &spec)?;
                let ragged = forward_ragged_opts(&cfg.model, &weights, &input, &spec, pipe_opts)?;
                let masks_match = padded.mask == ragged.mask;
                let mut cell_max = 0.0f32;
                for (a, b) in padded.logits.iter().zip(&ragged.logits) {
                    let d = (a - b).abs();
                    cell_max = cell_max.max(d);
                    abs_sum += d as f64;
                    abs_count += 1;
                }
                let p_pred = padded.predictions(cfg.model.num_classes);
                let r_pred = ragged.predictions(cfg.model.num_classes);
                let matched = p_pred.iter().zip(&r_pred).filter(|(a, b)| a == b).count();
                row.images += cfg.batch;
                row.preds_matched += matched;
                row.max_abs_diff = row.max_abs_diff.max(cell_max);
                let violated = cell_max > cfg.tolerance
                    || matched != cfg.batch
                    || !masks_match
                    || !cell_max.is_finite();
                if violated && row.first_violation.is_none() {
                    row.first_violation = Some((seed, ratio));
                }
            }
        }
        row.mean_abs_diff = abs_sum / abs_count.max(1) as f64;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_suite_passes_small() {
        let cfg = OracleCheckConfig {
            cases: 20,
            max_len: 24,
            head_dims: vec![8, 16],
            ..Default::default()
        };
        let result = run_oracle_equivalence(&cfg).unwrap();
        assert!(result.passed(), "failures: {:?}", result.failures);
        assert_eq!(result.cases_run, 20);
        assert!(result.max_abs_diff <= cfg.tolerance);
    }

    #[test]
    fn oracle_suite_catches_fault_injection() {
        let cfg = OracleCheckConfig {
            cases: 5,
            min_len: 2,
            max_len: 16,
            head_dims: vec![8],
            ..Default::default()
        };
        let opts = KernelOptions {
            skip_final_div: true,
            ..Default::default()
        };
        let result = run_oracle_equivalence_opts(&cfg, &opts).unwrap();
        assert!(!result.passed(), "fault injection went undetected");
    }

    #[test]
    fn backend_suite_passes_small() {
        let mut cfg = BackendCheckConfig::desk_default().unwrap();
        cfg.seeds = vec![0, 1];
        cfg.ratios = vec![0.5];
        let opts = PipelineOptions::for_config(&cfg.model);
        let rows = run_backend_equivalence(&cfg, &opts).unwrap();
        assert_eq!(rows.len(), 3);
        for row in rows {
            assert!(row.passed(cfg.tolerance), "{:?}", row);
            assert_eq!(row.preds_match_pct(), 100.0);
        }
    }

    #[test]
    fn backend_suite_catches_fault_injection() {
        let mut cfg = BackendCheckConfig::desk_default().unwrap();
        cfg.seeds = vec![0];
        cfg.ratios = vec![0.5];
        cfg.methods = vec![PruneMethod::ThresholdL2];
        let mut opts = PipelineOptions::for_config(&cfg.model);
        opts.skip_final_div = true;
        let rows = run_backend_equivalence(&cfg, &opts).unwrap();
        assert!(!rows[0].passed(cfg.tolerance));
    }
}

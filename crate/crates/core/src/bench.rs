//! Measurement harness: the warmup/timed-iteration protocol, sweep grids
//! over (batch size, prune ratio, backend, workers), and the dispatch-floor
//! overhead decomposition.
//!
//! Timing uses a monotonic clock around each call with per-iteration deltas,
//! so p50 and stddev are meaningful; any worker fan-out completes inside the
//! timed region. Input generation and pack-plan construction stay outside
//! the timed region unless `include_pack` moves the packing in. Cells are
//! re-measured in randomized order across repetitions, pooling samples, to
//! decorrelate drift.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{expected_tile_pairs, ragged_attention_forward_opts, KernelOptions};
use crate::config::{ModelConfig, TileConfig};
use crate::error::{Error, Result};
use crate::packing::{compute_pack_plan, pack, PackPlan};
use crate::pipeline::{
    forward_padded, forward_ragged_opts, init_weights, PipelineOptions, ViTWeights,
};
use crate::pruning::{
    kept_count, l2_scores, random_mask_jittered, topk_ratio_mask, PruneMethod, PruneSpec,
};
use crate::ragged::{KeepMask, RaggedQkv};
use crate::reference::{naive_attention, padded_masked_attention, AttentionMask};
use crate::tensor::DenseBatch;

/// Attention execution strategy being measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Ragged,
    PaddedMasked,
    Naive,
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Ragged => "ragged",
            Backend::PaddedMasked => "padded_masked",
            Backend::Naive => "naive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ragged" => Ok(Backend::Ragged),
            "padded_masked" | "padded" => Ok(Backend::PaddedMasked),
            "naive" => Ok(Backend::Naive),
            other => Err(Error::InvalidConfig(format!("unknown backend `{other}`"))),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Timing protocol: untimed warmup calls, then timed iterations, optionally
/// repeated in shuffled cell order with pooled samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingParams {
    pub warmup: usize,
    pub iters: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
}

fn default_reps() -> usize {
    1
}

impl Default for TimingParams {
    /// 10 warmup and 500 timed iterations.
    fn default() -> Self {
        Self {
            warmup: 10,
            iters: 500,
            reps: 1,
        }
    }
}

/// Latency statistics over per-iteration deltas, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub min_ms: f64,
    pub stddev_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        assert!(!samples.is_empty());
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p50 = if sorted.len() % 2 == 1 {
            sorted[sorted.len() / 2]
        } else {
            0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
        };
        Self {
            mean_ms: mean,
            p50_ms: p50,
            min_ms: sorted[0],
            stddev_ms: var.sqrt(),
        }
    }
}

/// Run `op` `warmup` times untimed, then `iters` times with a monotonic
/// high-resolution clock around each call. The op must force any deferred
/// work to completion before returning; worker joins happen inside it.
pub fn time_op<F>(mut op: F, warmup: usize, iters: usize) -> Result<LatencyStats>
where
    F: FnMut() -> Result<()>,
{
    let samples = collect_samples(&mut op, warmup, iters)?;
    Ok(LatencyStats::from_samples(&samples))
}

fn collect_samples<F>(op: &mut F, warmup: usize, iters: usize) -> Result<Vec<f64>>
where
    F: FnMut() -> Result<()>,
{
    if iters == 0 {
        return Err(Error::InvalidConfig("timed iterations must be >= 1".into()));
    }
    for _ in 0..warmup {
        op()?;
    }
    let mut samples = Vec::with_capacity(iters);
    for _ in 0..iters {
        let t0 = Instant::now();
        op()?;
        samples.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    Ok(samples)
}

/// One benchmark measurement. `tile_m`/`tile_n`, the iteration counts,
/// `worker_count` and `pack_ms` are record metadata not carried by the CSV
/// schema; `op_counter` is the backend's work unit (ragged: kernel tile
/// pairs; padded: masked score entries `B*H*S^2` per pass; naive: gathered
/// score entries `sum_i H*n_i^2`).
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRecord {
    pub backend: Backend,
    pub batch_size: usize,
    pub prune_ratio: f64,
    pub tokens_per_image: usize,
    pub total_tokens: usize,
    pub warmup_iters: usize,
    pub timed_iters: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub min_ms: f64,
    pub stddev_ms: f64,
    pub worker_count: usize,
    pub tile_m: usize,
    pub tile_n: usize,
    pub op_counter: u64,
    pub images_per_s: Option<f64>,
    pub overhead_pct: Option<f64>,
    pub include_pack: bool,
    /// Plan construction + packing cost, measured separately for ragged
    /// kernel cells (the host analog of the pack phase's device cost).
    pub pack_ms: Option<f64>,
}

/// Sweep dimensions. Worker counts apply to the ragged backend only; other
/// backends run single-threaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub batch_sizes: Vec<usize>,
    pub ratios: Vec<f64>,
    pub backends: Vec<Backend>,
    #[serde(default = "default_workers")]
    pub workers: Vec<usize>,
}

fn default_workers() -> Vec<usize> {
    vec![1]
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.batch_sizes.is_empty() || self.ratios.is_empty() || self.backends.is_empty() {
            return Err(Error::EmptyInput(
                "sweep grid has an empty dimension".into(),
            ));
        }
        if self.batch_sizes.contains(&0) {
            return Err(Error::InvalidConfig("batch size 0 in grid".into()));
        }
        if self.ratios.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::InvalidConfig("ratio outside [0, 1) in grid".into()));
        }
        if self.workers.is_empty() || self.workers.contains(&0) {
            return Err(Error::InvalidConfig("worker counts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Harness knobs shared by both sweep kinds.
#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub timing: TimingParams,
    pub seed: u64,
    /// Move pack-plan construction and the token copy inside the timed
    /// region (kernel sweeps; pipeline forwards inherently pack inside).
    pub include_pack: bool,
    /// Cells whose input/output footprint exceeds this are recorded as
    /// skipped rather than run.
    pub mem_limit_bytes: u64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            timing: TimingParams::default(),
            seed: 0,
            include_pack: false,
            mem_limit_bytes: 1 << 30,
        }
    }
}

/// A grid cell that was not measured, and why.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedCell {
    pub backend: Backend,
    pub batch_size: usize,
    pub prune_ratio: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub records: Vec<TimingRecord>,
    pub skipped: Vec<SkippedCell>,
}

fn cell_seed(seed: u64, batch_size: usize, ratio: f64) -> u64 {
    seed ^ (batch_size as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ratio.to_bits().rotate_left(17)
}

struct KernelCellInputs {
    q: DenseBatch,
    k: DenseBatch,
    v: DenseBatch,
    mask: KeepMask,
    plan: PackPlan,
    ragged: RaggedQkv,
}

fn build_kernel_inputs(
    config: &ModelConfig,
    batch: usize,
    ratio: f64,
    seed: u64,
) -> Result<KernelCellInputs> {
    let s = config.seq_len;
    let d_model = config.embed_dim;
    let features = DenseBatch::random(batch, s, d_model, seed);
    let mask = topk_ratio_mask(&l2_scores(&features), batch, s, ratio)?;
    let plan = compute_pack_plan(&mask)?;
    let q = DenseBatch::random(batch, s, d_model, seed.wrapping_add(1));
    let k = DenseBatch::random(batch, s, d_model, seed.wrapping_add(2));
    let v = DenseBatch::random(batch, s, d_model, seed.wrapping_add(3));
    let ragged = RaggedQkv::new_unchecked(
        pack(&q, &plan)?.packed().to_vec(),
        pack(&k, &plan)?.packed().to_vec(),
        pack(&v, &plan)?.packed().to_vec(),
        config.heads,
        config.head_dim,
        plan.cu_seqlens.clone(),
    )?;
    Ok(KernelCellInputs {
        q,
        k,
        v,
        mask,
        plan,
        ragged,
    })
}

/// Isolated attention-kernel sweep: one record per (batch size, ratio,
/// backend[, workers]) cell, identical random inputs per cell across
/// backends. `tiles.block_d` is forced to the model head width.
pub fn sweep_kernel(
    grid: &SweepGrid,
    config: &ModelConfig,
    tiles: &TileConfig,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    grid.validate()?;
    config.validate()?;
    let tiles = TileConfig::new(tiles.block_m, tiles.block_n, config.head_dim);
    tiles.validate()?;

    struct Cell {
        backend: Backend,
        batch: usize,
        ratio: f64,
        workers: usize,
    }
    let mut cells = Vec::new();
    for &batch in &grid.batch_sizes {
        for &ratio in &grid.ratios {
            for &backend in &grid.backends {
                let workers: &[usize] = if backend == Backend::Ragged {
                    &grid.workers
                } else {
                    &[1]
                };
                for &w in workers {
                    cells.push(Cell {
                        backend,
                        batch,
                        ratio,
                        workers: w,
                    });
                }
            }
        }
    }

    let s = config.seq_len;
    let d_model = config.embed_dim;
    let mut result = SweepResult::default();
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); cells.len()];
    let mut live: Vec<bool> = Vec::with_capacity(cells.len());

    for cell in &cells {
        // Rough footprint: padded q/k/v plus output, plus the packed copies.
        let bytes = 4u64
            * (4 * (cell.batch * s * d_model) as u64
                + 4 * (kept_count(s, cell.ratio) * cell.batch * d_model) as u64);
        if bytes > opts.mem_limit_bytes {
            result.skipped.push(SkippedCell {
                backend: cell.backend,
                batch_size: cell.batch,
                prune_ratio: cell.ratio,
                reason: format!("estimated {bytes} bytes exceeds memory limit"),
            });
            live.push(false);
        } else {
            live.push(true);
        }
    }

    let mut order: Vec<usize> = (0..cells.len()).collect();
    for rep in 0..opts.timing.reps.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(rep as u64));
        order.shuffle(&mut rng);
        for &ci in &order {
            if !live[ci] {
                continue;
            }
            let cell = &cells[ci];
            let seed = cell_seed(opts.seed, cell.batch, cell.ratio);
            let inputs = build_kernel_inputs(config, cell.batch, cell.ratio, seed)?;
            let new_samples = match cell.backend {
                Backend::Ragged => {
                    let kernel_opts = KernelOptions {
                        workers: cell.workers,
                        ..Default::default()
                    };
                    if opts.include_pack {
                        let mut op = || -> Result<()> {
                            let plan = compute_pack_plan(&inputs.mask)?;
                            let rq = RaggedQkv::new_unchecked(
                                pack(&inputs.q, &plan)?.packed().to_vec(),
                                pack(&inputs.k, &plan)?.packed().to_vec(),
                                pack(&inputs.v, &plan)?.packed().to_vec(),
                                config.heads,
                                config.head_dim,
                                plan.cu_seqlens.clone(),
                            )?;
                            let out = ragged_attention_forward_opts(&rq, &tiles, &kernel_opts)?;
                            std::hint::black_box(&out);
                            Ok(())
                        };
                        collect_samples(&mut op, opts.timing.warmup, opts.timing.iters)?
                    } else {
                        let mut op = || -> Result<()> {
                            let out = ragged_attention_forward_opts(
                                &inputs.ragged,
                                &tiles,
                                &kernel_opts,
                            )?;
                            std::hint::black_box(&out);
                            Ok(())
                        };
                        collect_samples(&mut op, opts.timing.warmup, opts.timing.iters)?
                    }
                }
                Backend::PaddedMasked => {
                    let attn_mask = AttentionMask::from(&inputs.mask);
                    let mut op = || -> Result<()> {
                        let out = padded_masked_attention(
                            &inputs.q.data,
                            &inputs.k.data,
                            &inputs.v.data,
                            cell.batch,
                            s,
                            config.heads,
                            config.head_dim,
                            &attn_mask,
                        )?;
                        std::hint::black_box(&out);
                        Ok(())
                    };
                    collect_samples(&mut op, opts.timing.warmup, opts.timing.iters)?
                }
                Backend::Naive => {
                    let rq = &inputs.ragged;
                    let mut op = || -> Result<()> {
                        let (heads, d) = (rq.heads(), rq.head_dim());
                        for image in 0..rq.batch_size() {
                            let start = rq.cu_seqlens()[image];
                            let n = rq.seq_len(image);
                            if n == 0 {
                                continue;
                            }
                            for head in 0..heads {
                                let gather = |t: &[f32]| -> Vec<f32> {
                                    (0..n)
                                        .flat_map(|r| {
                                            let b = rq.base(start + r, head);
                                            t[b..b + d].to_vec()
                                        })
                                        .collect()
                                };
                                let out = naive_attention(
                                    &gather(rq.q()),
                                    &gather(rq.k()),
                                    &gather(rq.v()),
                                    n,
                                    d,
                                )?;
                                std::hint::black_box(&out);
                            }
                        }
                        Ok(())
                    };
                    collect_samples(&mut op, opts.timing.warmup, opts.timing.iters)?
                }
            };
            samples[ci].extend(new_samples);
        }
    }

    for (ci, cell) in cells.iter().enumerate() {
        if !live[ci] {
            continue;
        }
        let seed = cell_seed(opts.seed, cell.batch, cell.ratio);
        let inputs = build_kernel_inputs(config, cell.batch, cell.ratio, seed)?;
        let total_tokens = inputs.plan.total_kept;
        let op_counter = match cell.backend {
            Backend::Ragged => expected_tile_pairs(&inputs.plan.cu_seqlens, config.heads, &tiles),
            Backend::PaddedMasked => (cell.batch * config.heads * s * s) as u64,
            Backend::Naive => inputs
                .plan
                .cu_seqlens
                .windows(2)
                .map(|w| (config.heads * (w[1] - w[0]) * (w[1] - w[0])) as u64)
                .sum(),
        };
        let pack_ms = if cell.backend == Backend::Ragged {
            let mut op = || -> Result<()> {
                let plan = compute_pack_plan(&inputs.mask)?;
                let a = pack(&inputs.q, &plan)?;
                let b = pack(&inputs.k, &plan)?;
                let c = pack(&inputs.v, &plan)?;
                std::hint::black_box((&a, &b, &c));
                Ok(())
            };
            Some(time_op(&mut op, opts.timing.warmup, opts.timing.iters)?.mean_ms)
        } else {
            None
        };
        let stats = LatencyStats::from_samples(&samples[ci]);
        result.records.push(TimingRecord {
            backend: cell.backend,
            batch_size: cell.batch,
            prune_ratio: cell.ratio,
            tokens_per_image: kept_count(s, cell.ratio),
            total_tokens,
            warmup_iters: opts.timing.warmup,
            timed_iters: samples[ci].len(),
            mean_ms: stats.mean_ms,
            p50_ms: stats.p50_ms,
            min_ms: stats.min_ms,
            stddev_ms: stats.stddev_ms,
            worker_count: cell.workers,
            tile_m: tiles.block_m,
            tile_n: tiles.block_n,
            op_counter,
            images_per_s: None,
            overhead_pct: None,
            include_pack: opts.include_pack,
            pack_ms,
        });
    }
    Ok(result)
}

/// End-to-end pipeline sweep timing `forward_padded` / `forward_ragged` per
/// cell; records carry images/s. The naive backend is kernel-only and is
/// recorded as skipped here.
pub fn sweep_pipeline(
    grid: &SweepGrid,
    config: &ModelConfig,
    spec: &PruneSpec,
    tiles: &TileConfig,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    grid.validate()?;
    config.validate()?;
    let tiles = TileConfig::new(tiles.block_m, tiles.block_n, config.head_dim);
    tiles.validate()?;
    let weights: ViTWeights = init_weights(config, opts.seed)?;

    struct Cell {
        backend: Backend,
        batch: usize,
        ratio: f64,
        workers: usize,
    }
    let mut cells = Vec::new();
    let mut result = SweepResult::default();
    for &batch in &grid.batch_sizes {
        for &ratio in &grid.ratios {
            for &backend in &grid.backends {
                if backend == Backend::Naive {
                    result.skipped.push(SkippedCell {
                        backend,
                        batch_size: batch,
                        prune_ratio: ratio,
                        reason: "naive backend is kernel-only".into(),
                    });
                    continue;
                }
                let workers: &[usize] = if backend == Backend::Ragged {
                    &grid.workers
                } else {
                    &[1]
                };
                for &w in workers {
                    cells.push(Cell {
                        backend,
                        batch,
                        ratio,
                        workers: w,
                    });
                }
            }
        }
    }

    let s = config.seq_len;
    let d_model = config.embed_dim;
    let mut samples: Vec<Vec<f64>> = vec![Vec::new(); cells.len()];
    let mut live: Vec<bool> = Vec::with_capacity(cells.len());
    for cell in &cells {
        let bytes = 4u64 * 8 * (cell.batch * s * d_model.max(config.mlp_hidden)) as u64;
        if bytes > opts.mem_limit_bytes {
            result.skipped.push(SkippedCell {
                backend: cell.backend,
                batch_size: cell.batch,
                prune_ratio: cell.ratio,
                reason: format!("estimated {bytes} bytes exceeds memory limit"),
            });
            live.push(false);
        } else {
            live.push(true);
        }
    }

    let mut order: Vec<usize> = (0..cells.len()).collect();
    for rep in 0..opts.timing.reps.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(rep as u64));
        order.shuffle(&mut rng);
        for &ci in &order {
            if !live[ci] {
                continue;
            }
            let cell = &cells[ci];
            let seed = cell_seed(opts.seed, cell.batch, cell.ratio);
            let input = DenseBatch::random(cell.batch, s, d_model, seed);
            let cell_spec = PruneSpec {
                ratio: cell.ratio,
                ..*spec
            };
            let pipe_opts = PipelineOptions {
                tiles,
                workers: cell.workers,
                skip_final_div: false,
            };
            let mut op = || -> Result<()> {
                let out = match cell.backend {
                    Backend::PaddedMasked => forward_padded(config, &weights, &input, &cell_spec)?,
                    Backend::Ragged => {
                        forward_ragged_opts(config, &weights, &input, &cell_spec, &pipe_opts)?
                    }
                    Backend::Naive => unreachable!("filtered above"),
                };
                std::hint::black_box(&out);
                Ok(())
            };
            let new = collect_samples(&mut op, opts.timing.warmup, opts.timing.iters)?;
            samples[ci].extend(new);
        }
    }

    for (ci, cell) in cells.iter().enumerate() {
        if !live[ci] {
            continue;
        }
        // The mask is backend-independent: uniform kept counts for the l2
        // methods, reproducible draws for the random method.
        let (tokens_per_image, total_tokens, cu) = match spec.method {
            PruneMethod::Random => {
                let mask = random_mask_jittered(cell.batch, s, cell.ratio, spec.jitter, spec.seed)?;
                let plan = compute_pack_plan(&mask)?;
                let total = plan.total_kept;
                (total / cell.batch, total, plan.cu_seqlens)
            }
            _ => {
                let k = kept_count(s, cell.ratio);
                let cu: Vec<usize> = (0..=cell.batch).map(|i| i * k).collect();
                (k, k * cell.batch, cu)
            }
        };
        let post_layers = (config.depth + 1 - config.prune_layer.min(config.depth + 1)) as u64;
        let op_counter = match cell.backend {
            Backend::Ragged => post_layers * expected_tile_pairs(&cu, config.heads, &tiles),
            Backend::PaddedMasked => {
                config.depth as u64 * (cell.batch * config.heads * s * s) as u64
            }
            Backend::Naive => 0,
        };
        let stats = LatencyStats::from_samples(&samples[ci]);
        result.records.push(TimingRecord {
            backend: cell.backend,
            batch_size: cell.batch,
            prune_ratio: cell.ratio,
            tokens_per_image,
            total_tokens,
            warmup_iters: opts.timing.warmup,
            timed_iters: samples[ci].len(),
            mean_ms: stats.mean_ms,
            p50_ms: stats.p50_ms,
            min_ms: stats.min_ms,
            stddev_ms: stats.stddev_ms,
            worker_count: cell.workers,
            tile_m: tiles.block_m,
            tile_n: tiles.block_n,
            op_counter,
            images_per_s: Some(cell.batch as f64 / (stats.mean_ms / 1e3)),
            overhead_pct: None,
            include_pack: true, // the forward pass packs internally
            pack_ms: None,
        });
    }
    Ok(result)
}

/// How the per-backend dispatch floor is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorMode {
    /// Minimum observed mean latency across all of a backend's records.
    Min,
    /// Least-squares intercept of `mean_ms = floor + slope * op_counter`,
    /// falling back to the minimum when the fit is degenerate.
    Regress,
}

/// Overhead decomposition: per-backend floor plus per-record overhead share.
#[derive(Debug, Clone, PartialEq)]
pub struct OverheadReport {
    pub mode: FloorMode,
    pub floors: Vec<(Backend, f64)>,
    pub rows: Vec<OverheadRow>,
}

/// One record's share of fixed overhead: `floor / mean`, capped at 100%.
#[derive(Debug, Clone, PartialEq)]
pub struct OverheadRow {
    pub backend: Backend,
    pub batch_size: usize,
    pub prune_ratio: f64,
    pub mean_ms: f64,
    pub overhead_pct: f64,
}

impl OverheadReport {
    pub fn floor_of(&self, backend: Backend) -> Option<f64> {
        self.floors
            .iter()
            .find(|(b, _)| *b == backend)
            .map(|(_, f)| *f)
    }

    /// Plain-text decomposition table, percentages rounded to whole percent.
    pub fn format_table(&self) -> String {
        let mut out = String::new();
        out.push_str("backend        floor_ms\n");
        for (b, f) in &self.floors {
            out.push_str(&format!("{:<14} {f:.4}\n", b.name()));
        }
        out.push_str("\nbackend        bs    ratio   total_ms   overhead\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<14} {:<5} {:<7} {:<10.4} {:.0}%\n",
                r.backend.name(),
                r.batch_size,
                r.prune_ratio,
                r.mean_ms,
                r.overhead_pct
            ));
        }
        out
    }
}

/// Decompose each record's latency into its backend's floor (minimum
/// observed mean across all configs) plus residual compute.
pub fn decompose_overhead(records: &[TimingRecord]) -> Result<OverheadReport> {
    decompose_overhead_with(records, FloorMode::Min)
}

pub fn decompose_overhead_with(
    records: &[TimingRecord],
    mode: FloorMode,
) -> Result<OverheadReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records to decompose".into()));
    }
    if let Some(r) = records
        .iter()
        .find(|r| r.mean_ms <= 0.0 || r.mean_ms.is_nan())
    {
        return Err(Error::InvalidConfig(format!(
            "record ({}, bs={}, ratio={}) has non-positive mean_ms {}",
            r.backend, r.batch_size, r.prune_ratio, r.mean_ms
        )));
    }
    let mut floors: Vec<(Backend, f64)> = Vec::new();
    for backend in [Backend::Ragged, Backend::PaddedMasked, Backend::Naive] {
        let group: Vec<&TimingRecord> = records.iter().filter(|r| r.backend == backend).collect();
        if group.is_empty() {
            continue;
        }
        let min_mean = group
            .iter()
            .map(|r| r.mean_ms)
            .fold(f64::INFINITY, f64::min);
        let floor = match mode {
            FloorMode::Min => min_mean,
            FloorMode::Regress => {
                let n = group.len() as f64;
                let mean_x = group.iter().map(|r| r.op_counter as f64).sum::<f64>() / n;
                let mean_y = group.iter().map(|r| r.mean_ms).sum::<f64>() / n;
                let sxx: f64 = group
                    .iter()
                    .map(|r| (r.op_counter as f64 - mean_x).powi(2))
                    .sum();
                let sxy: f64 = group
                    .iter()
                    .map(|r| (r.op_counter as f64 - mean_x) * (r.mean_ms - mean_y))
                    .sum();
                if sxx == 0.0 {
                    min_mean
                } else {
                    let intercept = mean_y - (sxy / sxx) * mean_x;
                    if intercept.is_finite() && intercept > 0.0 && intercept <= min_mean {
                        intercept
                    } else {
                        min_mean
                    }
                }
            }
        };
        floors.push((backend, floor));
    }
    let rows = records
        .iter()
        .map(|r| {
            let floor = floors
                .iter()
                .find(|(b, _)| *b == r.backend)
                .map(|(_, f)| *f)
                .unwrap();
            OverheadRow {
                backend: r.backend,
                batch_size: r.batch_size,
                prune_ratio: r.prune_ratio,
                mean_ms: r.mean_ms,
                overhead_pct: (floor / r.mean_ms * 100.0).min(100.0),
            }
        })
        .collect();
    Ok(OverheadReport { mode, floors, rows })
}

/// Minimal record for externally supplied latencies (e.g. transcribed
/// published tables): backend plus one mean latency, everything else
/// defaulted.
pub fn record_from_latency(
    backend: Backend,
    batch_size: usize,
    prune_ratio: f64,
    mean_ms: f64,
) -> TimingRecord {
    TimingRecord {
        backend,
        batch_size,
        prune_ratio,
        tokens_per_image: 0,
        total_tokens: 0,
        warmup_iters: 0,
        timed_iters: 1,
        mean_ms,
        p50_ms: mean_ms,
        min_ms: mean_ms,
        stddev_ms: 0.0,
        worker_count: 1,
        tile_m: 0,
        tile_n: 0,
        op_counter: 0,
        images_per_s: None,
        overhead_pct: None,
        include_pack: false,
        pack_ms: None,
    }
}

//! Tiled, bidirectional, online-softmax attention over a packed ragged batch.
//!
//! One logical program handles one (image, head) pair and runs a two-level
//! tile loop: for each query tile it streams key/value tiles, maintaining a
//! running row max `m`, denominator `l`, and rescaled accumulator `o`, then
//! stores `o / l`. Tiles are fixed `block_m x block_n`: out-of-range loads
//! are zero-filled, key columns past the sequence end are masked to -inf
//! before the row max, and query rows past the end are computed but never
//! stored. Reductions run in ascending index order, so the kernel is
//! deterministic run-to-run regardless of scheduling.
//!
//! Programs write disjoint output row ranges and may execute in any order or
//! in parallel; [`KernelOptions::workers`] fans images out across a scoped
//! thread pool with results identical to the serial schedule.

use crate::config::TileConfig;
use crate::error::{Error, Result};
use crate::ragged::RaggedQkv;
use crate::reference::{axpy, dot};

/// Identifies one logical program in the B x H grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProgramId {
    pub pid: usize,
}

impl ProgramId {
    pub fn new(pid: usize) -> Self {
        Self { pid }
    }

    /// Head index: `pid mod H`.
    pub fn head(&self, heads: usize) -> usize {
        self.pid % heads
    }

    /// Image index: `floor(pid / H)`.
    pub fn image(&self, heads: usize) -> usize {
        self.pid / heads
    }
}

/// Instrumentation counters. `tile_pairs` counts score-tile multiply
///-accumulate operations (one per (query tile, key tile) pair);
/// `score_macs` counts the scalar multiply-adds those tiles perform,
/// `block_m * block_n * head_dim` each. Not to be read inside timed regions.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpCounter {
    pub tile_pairs: u64,
    pub score_macs: u64,
}

impl OpCounter {
    fn merge(&mut self, other: OpCounter) {
        self.tile_pairs += other.tile_pairs;
        self.score_macs += other.score_macs;
    }
}

/// Expected tile-pair count for a given batch: `sum_i H * ceil(n_i/B_M) * ceil(n_i/B_N)`.
pub fn expected_tile_pairs(cu_seqlens: &[usize], heads: usize, tiles: &TileConfig) -> u64 {
    let mut total = 0u64;
    for w in cu_seqlens.windows(2) {
        let n = w[1] - w[0];
        total += (heads * n.div_ceil(tiles.block_m) * n.div_ceil(tiles.block_n)) as u64;
    }
    total
}

/// Execution options for the forward pass.
#[derive(Debug, Clone, Copy)]
pub struct KernelOptions {
    /// Worker threads to fan programs across; 0 and 1 both mean serial.
    pub workers: usize,
    /// Test hook: skip the final `o / l` division, deliberately corrupting
    /// the output. Used by fault-injection checks only.
    #[doc(hidden)]
    pub skip_final_div: bool,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            skip_final_div: false,
        }
    }
}

/// Running online-softmax state for one query tile: per-row max, per-row
/// denominator, and the rescaled `rows x dim` output accumulator.
#[derive(Debug, Clone)]
pub struct OnlineSoftmaxState {
    row_max: Vec<f32>,
    denom: Vec<f32>,
    acc: Vec<f32>,
    rows: usize,
    dim: usize,
}

impl OnlineSoftmaxState {
    /// Initial state: `m = -inf, l = 0, o = 0`.
    pub fn new(rows: usize, dim: usize) -> Self {
        Self {
            row_max: vec![f32::NEG_INFINITY; rows],
            denom: vec![0.0; rows],
            acc: vec![0.0; rows * dim],
            rows,
            dim,
        }
    }

    pub fn reset(&mut self) {
        self.row_max.fill(f32::NEG_INFINITY);
        self.denom.fill(0.0);
        self.acc.fill(0.0);
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row_max(&self) -> &[f32] {
        &self.row_max
    }

    pub fn denom(&self) -> &[f32] {
        &self.denom
    }

    pub fn acc(&self) -> &[f32] {
        &self.acc
    }

    /// Fold one `rows x cols` score tile and its `cols x dim` value tile in:
    /// `m' = max(m, rowmax(S))`, `alpha = e^(m - m')`, `P = e^(S - m')`,
    /// `o = alpha * o + P v`, `l = alpha * l + rowsum(P)`, `m = m'`.
    ///
    /// Score entries of -inf contribute weight 0; a row whose every score so
    /// far is -inf keeps `l = 0` and `m = -inf` without producing NaN.
    pub fn update(&mut self, scores: &[f32], cols: usize, v_tile: &[f32]) {
        assert_eq!(scores.len(), self.rows * cols, "score tile shape");
        assert_eq!(v_tile.len(), cols * self.dim, "value tile shape");
        for r in 0..self.rows {
            let score_row = &scores[r * cols..(r + 1) * cols];
            let mut new_max = self.row_max[r];
            for &s in score_row {
                new_max = new_max.max(s);
            }
            let alpha = if new_max == f32::NEG_INFINITY {
                1.0 // nothing seen yet; keeps l and o at zero
            } else {
                (self.row_max[r] - new_max).exp()
            };
            let acc_row = &mut self.acc[r * self.dim..(r + 1) * self.dim];
            if alpha != 1.0 {
                for a in acc_row.iter_mut() {
                    *a *= alpha;
                }
            }
            let mut row_sum = 0.0f32;
            for (c, &s) in score_row.iter().enumerate() {
                let p = if s == f32::NEG_INFINITY {
                    0.0
                } else {
                    (s - new_max).exp()
                };
                if p != 0.0 {
                    row_sum += p;
                    axpy(p, &v_tile[c * self.dim..(c + 1) * self.dim], acc_row);
                }
            }
            self.denom[r] = alpha * self.denom[r] + row_sum;
            self.row_max[r] = new_max;
        }
    }

    /// `o / l` per row. Rows that never saw a valid key (l = 0) are the
    /// caller's responsibility; the kernel never stores them.
    pub fn finalize(&self) -> Vec<f32> {
        let mut out = self.acc.clone();
        for r in 0..self.rows {
            let inv = 1.0 / self.denom[r];
            for x in &mut out[r * self.dim..(r + 1) * self.dim] {
                *x *= inv;
            }
        }
        out
    }
}

/// Reusable per-worker tile buffers.
struct Scratch {
    q_tile: Vec<f32>,
    k_tile: Vec<f32>,
    v_tile: Vec<f32>,
    scores: Vec<f32>,
    state: OnlineSoftmaxState,
}

impl Scratch {
    fn new(tiles: &TileConfig, head_dim: usize) -> Self {
        Self {
            q_tile: vec![0.0; tiles.block_m * head_dim],
            k_tile: vec![0.0; tiles.block_n * head_dim],
            v_tile: vec![0.0; tiles.block_n * head_dim],
            scores: vec![0.0; tiles.block_m * tiles.block_n],
            state: OnlineSoftmaxState::new(tiles.block_m, head_dim),
        }
    }
}

fn validate_kernel_inputs(qkv: &RaggedQkv, tiles: &TileConfig) -> Result<()> {
    tiles.validate()?;
    if tiles.block_d != qkv.head_dim() {
        return Err(Error::InvalidConfig(format!(
            "block_d {} != head_dim {} (feature tiling unimplemented)",
            tiles.block_d,
            qkv.head_dim()
        )));
    }
    Ok(())
}

/// Run the whole B x H program grid serially, returning the packed
/// `[T, H, d]` output and the work counter.
pub fn ragged_attention_forward(
    qkv: &RaggedQkv,
    tiles: &TileConfig,
) -> Result<(Vec<f32>, OpCounter)> {
    ragged_attention_forward_opts(qkv, tiles, &KernelOptions::default())
}

/// Forward pass with explicit worker count and test hooks.
///
/// Images are dealt round-robin to `workers` scoped threads; each program
/// writes a disjoint output range, so any schedule produces bit-identical
/// results.
pub fn ragged_attention_forward_opts(
    qkv: &RaggedQkv,
    tiles: &TileConfig,
    opts: &KernelOptions,
) -> Result<(Vec<f32>, OpCounter)> {
    validate_kernel_inputs(qkv, tiles)?;
    let heads = qkv.heads();
    let head_dim = qkv.head_dim();
    let batch = qkv.batch_size();
    let row_width = heads * head_dim;
    let mut out = vec![0.0f32; qkv.total_tokens() * row_width];
    let workers = opts.workers.max(1).min(batch.max(1));

    let mut counter = OpCounter::default();
    if workers <= 1 {
        let mut scratch = Scratch::new(tiles, head_dim);
        for image in 0..batch {
            let base = qkv.cu_seqlens()[image];
            let chunk = &mut out[base * row_width..qkv.cu_seqlens()[image + 1] * row_width];
            for head in 0..heads {
                run_program(
                    qkv,
                    tiles,
                    image,
                    head,
                    chunk,
                    base,
                    opts,
                    &mut scratch,
                    &mut counter,
                );
            }
        }
        return Ok((out, counter));
    }

    // Per-image output chunks are disjoint, so hand each worker an owned set
    // of (image, chunk) pairs and join their counters.
    let mut buckets: Vec<Vec<(usize, &mut [f32])>> = (0..workers).map(|_| Vec::new()).collect();
    let mut rest: &mut [f32] = &mut out;
    for image in 0..batch {
        let len = qkv.seq_len(image) * row_width;
        let (chunk, tail) = rest.split_at_mut(len);
        buckets[image % workers].push((image, chunk));
        rest = tail;
    }
    let partials = std::thread::scope(|scope| {
        let handles: Vec<_> = buckets
            .into_iter()
            .map(|bucket| {
                scope.spawn(move || {
                    let mut local = OpCounter::default();
                    let mut scratch = Scratch::new(tiles, head_dim);
                    for (image, chunk) in bucket {
                        let base = qkv.cu_seqlens()[image];
                        for head in 0..heads {
                            run_program(
                                qkv,
                                tiles,
                                image,
                                head,
                                chunk,
                                base,
                                opts,
                                &mut scratch,
                                &mut local,
                            );
                        }
                    }
                    local
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap())
            .collect::<Vec<_>>()
    });
    for p in partials {
        counter.merge(p);
    }
    Ok((out, counter))
}

/// Run one program: compute rows `[cu[i], cu[i+1])` of head `h` into `out`,
/// which must be the full `[T, H, d]` output buffer. Returns the program's
/// work counter. An empty image writes nothing.
pub fn attention_program(
    pid: ProgramId,
    qkv: &RaggedQkv,
    tiles: &TileConfig,
    out: &mut [f32],
) -> Result<OpCounter> {
    validate_kernel_inputs(qkv, tiles)?;
    let heads = qkv.heads();
    if pid.pid >= qkv.batch_size() * heads {
        return Err(Error::ShapeMismatch(format!(
            "program id {} outside grid of {} programs",
            pid.pid,
            qkv.batch_size() * heads
        )));
    }
    let expected = qkv.total_tokens() * heads * qkv.head_dim();
    if out.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "output length {} != T*H*d = {expected}",
            out.len()
        )));
    }
    let mut counter = OpCounter::default();
    let mut scratch = Scratch::new(tiles, qkv.head_dim());
    run_program(
        qkv,
        tiles,
        pid.image(heads),
        pid.head(heads),
        out,
        0,
        &KernelOptions::default(),
        &mut scratch,
        &mut counter,
    );
    Ok(counter)
}

/// The two-level tile loop for one (image, head) pair. `chunk` holds output
/// rows starting at packed row `chunk_base`.
#[allow(clippy::too_many_arguments)]
fn run_program(
    qkv: &RaggedQkv,
    tiles: &TileConfig,
    image: usize,
    head: usize,
    chunk: &mut [f32],
    chunk_base: usize,
    opts: &KernelOptions,
    scratch: &mut Scratch,
    counter: &mut OpCounter,
) {
    let start = qkv.cu_seqlens()[image];
    let n = qkv.seq_len(image);
    if n == 0 {
        return;
    }
    let (bm, bn) = (tiles.block_m, tiles.block_n);
    let d = qkv.head_dim();
    let heads = qkv.heads();
    let scale = 1.0 / (d as f32).sqrt();

    let mut m0 = 0;
    while m0 < n {
        let q_valid = bm.min(n - m0);
        load_tile(
            qkv.q(),
            qkv,
            start + m0,
            q_valid,
            bm,
            head,
            &mut scratch.q_tile,
        );
        scratch.state.reset();

        let mut j0 = 0;
        while j0 < n {
            let k_valid = bn.min(n - j0);
            load_tile(
                qkv.k(),
                qkv,
                start + j0,
                k_valid,
                bn,
                head,
                &mut scratch.k_tile,
            );
            load_tile(
                qkv.v(),
                qkv,
                start + j0,
                k_valid,
                bn,
                head,
                &mut scratch.v_tile,
            );

            for r in 0..bm {
                let q_row = &scratch.q_tile[r * d..(r + 1) * d];
                let score_row = &mut scratch.scores[r * bn..(r + 1) * bn];
                for (c, s) in score_row.iter_mut().enumerate() {
                    *s = if c < k_valid {
                        dot(q_row, &scratch.k_tile[c * d..(c + 1) * d]) * scale
                    } else {
                        f32::NEG_INFINITY
                    };
                }
            }
            counter.tile_pairs += 1;
            counter.score_macs += (bm * bn * d) as u64;

            scratch.state.update(&scratch.scores, bn, &scratch.v_tile);
            j0 += bn;
        }

        // Store only the real query rows; tail rows of the tile are dropped.
        for r in 0..q_valid {
            let token = start + m0 + r;
            let dst = ((token - chunk_base) * heads + head) * d;
            let acc_row = &scratch.state.acc[r * d..(r + 1) * d];
            let out_row = &mut chunk[dst..dst + d];
            if opts.skip_final_div {
                out_row.copy_from_slice(acc_row);
            } else {
                let inv = 1.0 / scratch.state.denom[r];
                for (o, &a) in out_row.iter_mut().zip(acc_row) {
                    *o = a * inv;
                }
            }
        }
        m0 += bm;
    }
}

/// Copy `valid` token rows of one head into a `capacity x d` tile buffer,
/// zero-filling rows past the end (the host analog of a masked load).
#[inline]
fn load_tile(
    src: &[f32],
    qkv: &RaggedQkv,
    first_token: usize,
    valid: usize,
    capacity: usize,
    head: usize,
    tile: &mut [f32],
) {
    let d = qkv.head_dim();
    for r in 0..valid {
        let base = qkv.base(first_token + r, head);
        tile[r * d..(r + 1) * d].copy_from_slice(&src[base..base + d]);
    }
    if valid < capacity {
        tile[valid * d..capacity * d].fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::naive_attention;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_qkv(lengths: &[usize], heads: usize, d: usize, seed: u64) -> RaggedQkv {
        let mut cu = vec![0usize];
        for &n in lengths {
            cu.push(cu.last().unwrap() + n);
        }
        let total = *cu.last().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = |len: usize| -> Vec<f32> {
            (0..len).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect()
        };
        let q = gen(total * heads * d);
        let k = gen(total * heads * d);
        let v = gen(total * heads * d);
        RaggedQkv::new(q, k, v, heads, d, cu).unwrap()
    }

    /// Per-(image, head) comparison against the quadratic oracle.
    fn max_diff_vs_oracle(qkv: &RaggedQkv, out: &[f32]) -> f32 {
        let (heads, d) = (qkv.heads(), qkv.head_dim());
        let mut max_diff = 0.0f32;
        for image in 0..qkv.batch_size() {
            let start = qkv.cu_seqlens()[image];
            let n = qkv.seq_len(image);
            if n == 0 {
                continue;
            }
            for head in 0..heads {
                let gather = |t: &[f32]| -> Vec<f32> {
                    (0..n)
                        .flat_map(|r| {
                            let b = qkv.base(start + r, head);
                            t[b..b + d].to_vec()
                        })
                        .collect()
                };
                let expect =
                    naive_attention(&gather(qkv.q()), &gather(qkv.k()), &gather(qkv.v()), n, d)
                        .unwrap();
                for r in 0..n {
                    let b = qkv.base(start + r, head);
                    for c in 0..d {
                        max_diff = max_diff.max((out[b + c] - expect[r * d + c]).abs());
                    }
                }
            }
        }
        max_diff
    }

    #[test]
    fn program_id_derivation() {
        let pid = ProgramId::new(7);
        assert_eq!(pid.head(4), 3);
        assert_eq!(pid.image(4), 1);
    }

    #[test]
    fn single_token_returns_value_row() {
        let qkv = RaggedQkv::new(
            vec![0.4, -0.2],
            vec![1.0, 1.0],
            vec![3.0, -1.0],
            1,
            2,
            vec![0, 1],
        )
        .unwrap();
        let tiles = TileConfig::square(64, 2);
        let (out, counter) = ragged_attention_forward(&qkv, &tiles).unwrap();
        assert_eq!(out, vec![3.0, -1.0]);
        assert_eq!(counter.tile_pairs, 1);
    }

    #[test]
    fn heterogeneous_batch_matches_oracle() {
        let qkv = random_qkv(&[5, 1, 9], 2, 16, 7);
        let tiles = TileConfig::square(4, 16);
        let (out, _) = ragged_attention_forward(&qkv, &tiles).unwrap();
        let diff = max_diff_vs_oracle(&qkv, &out);
        assert!(diff <= 1e-5, "max diff {diff}");
    }

    #[test]
    fn pruned_deit_base_shape_matches_oracle() {
        // Two images of 39 tokens, H=12, d=64: the 80%-pruned DeiT-B workload.
        let qkv = random_qkv(&[39, 39], 12, 64, 21);
        let tiles = TileConfig::default();
        let (out, counter) = ragged_attention_forward(&qkv, &tiles).unwrap();
        let diff = max_diff_vs_oracle(&qkv, &out);
        assert!(diff <= 1e-5, "max diff {diff}");
        // 39 tokens fit in a single 64x64 tile pair per program.
        assert_eq!(counter.tile_pairs, 2 * 12);
    }

    #[test]
    fn empty_batch_is_valid() {
        let qkv = RaggedQkv::new(vec![], vec![], vec![], 2, 4, vec![0]).unwrap();
        let (out, counter) = ragged_attention_forward(&qkv, &TileConfig::square(8, 4)).unwrap();
        assert!(out.is_empty());
        assert_eq!(counter.tile_pairs, 0);
    }

    #[test]
    fn empty_image_writes_nothing() {
        let qkv = random_qkv(&[3, 0, 2], 2, 8, 9);
        let tiles = TileConfig::square(8, 8);
        let (out, _) = ragged_attention_forward(&qkv, &tiles).unwrap();
        assert_eq!(out.len(), 5 * 2 * 8);
        let diff = max_diff_vs_oracle(&qkv, &out);
        assert!(diff <= 1e-5);
    }

    #[test]
    fn single_tile_equals_unfused_softmax() {
        let qkv = random_qkv(&[5], 1, 8, 3);
        let tiles = TileConfig::square(64, 8);
        let (out, counter) = ragged_attention_forward(&qkv, &tiles).unwrap();
        assert_eq!(counter.tile_pairs, 1);
        let diff = max_diff_vs_oracle(&qkv, &out);
        assert!(
            diff <= 1e-6,
            "single tile should be near-exact, diff {diff}"
        );
    }

    #[test]
    fn multi_tile_matches_single_tile_run() {
        let qkv = random_qkv(&[100], 1, 8, 13);
        let small = TileConfig::square(32, 8);
        let big = TileConfig::square(128, 8);
        let (out_small, c_small) = ragged_attention_forward(&qkv, &small).unwrap();
        let (out_big, c_big) = ragged_attention_forward(&qkv, &big).unwrap();
        assert_eq!(c_small.tile_pairs, 16); // ceil(100/32)^2
        assert_eq!(c_big.tile_pairs, 1);
        let diff = out_small
            .iter()
            .zip(&out_big)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(diff <= 1e-5, "tile-size mismatch {diff}");
    }

    #[test]
    fn tile_size_invariance() {
        let qkv = random_qkv(&[17, 33, 5], 2, 16, 5);
        let reference = ragged_attention_forward(&qkv, &TileConfig::square(8, 16))
            .unwrap()
            .0;
        for block in [16, 32, 64] {
            let out = ragged_attention_forward(&qkv, &TileConfig::square(block, 16))
                .unwrap()
                .0;
            let diff = out
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max);
            assert!(diff <= 1e-5, "block {block}: diff {diff}");
        }
    }

    #[test]
    fn rectangular_tiles_match_oracle() {
        let qkv = random_qkv(&[23, 41], 3, 8, 17);
        let tiles = TileConfig::new(8, 32, 8);
        let (out, counter) = ragged_attention_forward(&qkv, &tiles).unwrap();
        assert!(max_diff_vs_oracle(&qkv, &out) <= 1e-5);
        assert_eq!(
            counter.tile_pairs,
            expected_tile_pairs(qkv.cu_seqlens(), 3, &tiles)
        );
    }

    #[test]
    fn cross_image_isolation_is_bit_exact() {
        let a = random_qkv(&[6, 7, 8], 2, 8, 31);
        let tiles = TileConfig::square(4, 8);
        let (base, _) = ragged_attention_forward(&a, &tiles).unwrap();

        // Rebuild with image 1's tokens perturbed.
        let row = 2 * 8;
        let range = a.cu_seqlens()[1] * row..a.cu_seqlens()[2] * row;
        let mut q2 = a.q().to_vec();
        for x in &mut q2[range.clone()] {
            *x += 1.0;
        }
        let b = RaggedQkv::new(
            q2,
            a.k().to_vec(),
            a.v().to_vec(),
            2,
            8,
            a.cu_seqlens().to_vec(),
        )
        .unwrap();
        let (perturbed, _) = ragged_attention_forward(&b, &tiles).unwrap();
        assert_eq!(&base[..range.start], &perturbed[..range.start]);
        assert_eq!(&base[range.end..], &perturbed[range.end..]);
        assert_ne!(&base[range.clone()], &perturbed[range]);
    }

    #[test]
    fn length_ladder_matches_oracle() {
        let lengths: Vec<usize> = (1..=16).collect();
        let qkv = random_qkv(&lengths, 2, 8, 2);
        let tiles = TileConfig::square(8, 8);
        let (out, counter) = ragged_attention_forward(&qkv, &tiles).unwrap();
        assert!(max_diff_vs_oracle(&qkv, &out) <= 1e-5);
        assert_eq!(
            counter.tile_pairs,
            expected_tile_pairs(qkv.cu_seqlens(), 2, &tiles)
        );
    }

    #[test]
    fn worker_fanout_is_bit_identical_to_serial() {
        let qkv = random_qkv(&[9, 3, 25, 1, 14], 3, 16, 23);
        let tiles = TileConfig::square(8, 16);
        let (serial, c1) = ragged_attention_forward(&qkv, &tiles).unwrap();
        for workers in [2, 4, 8] {
            let opts = KernelOptions {
                workers,
                ..Default::default()
            };
            let (parallel, cw) = ragged_attention_forward_opts(&qkv, &tiles, &opts).unwrap();
            assert_eq!(serial, parallel, "workers={workers}");
            assert_eq!(c1, cw);
        }
    }

    #[test]
    fn attention_program_writes_only_its_rows() {
        let qkv = random_qkv(&[4, 6], 2, 8, 41);
        let tiles = TileConfig::square(8, 8);
        let mut out = vec![0.0f32; qkv.total_tokens() * 2 * 8];
        // Program for image 1, head 0 has pid = 1*H + 0 = 2.
        attention_program(ProgramId::new(2), &qkv, &tiles, &mut out).unwrap();
        let row = 2 * 8;
        // Image 0 rows untouched.
        assert!(out[..4 * row].iter().all(|&x| x == 0.0));
        // Head 1 of image 1 untouched.
        for t in 4..10 {
            assert!(out[t * row + 8..t * row + 16].iter().all(|&x| x == 0.0));
        }
        // Head 0 of image 1 populated.
        assert!(out[4 * row..4 * row + 8].iter().any(|&x| x != 0.0));
    }

    #[test]
    fn program_id_out_of_range_rejected() {
        let qkv = random_qkv(&[2], 2, 4, 1);
        let tiles = TileConfig::square(4, 4);
        let mut out = vec![0.0f32; qkv.total_tokens() * 2 * 4];
        assert!(attention_program(ProgramId::new(2), &qkv, &tiles, &mut out).is_err());
    }

    #[test]
    fn block_d_must_equal_head_dim() {
        let qkv = random_qkv(&[4], 1, 16, 1);
        let tiles = TileConfig::new(8, 8, 8);
        assert!(matches!(
            ragged_attention_forward(&qkv, &tiles),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn skip_final_div_corrupts_output() {
        let qkv = random_qkv(&[6], 1, 8, 2);
        let tiles = TileConfig::square(8, 8);
        let (good, _) = ragged_attention_forward(&qkv, &tiles).unwrap();
        let opts = KernelOptions {
            skip_final_div: true,
            ..Default::default()
        };
        let (bad, _) = ragged_attention_forward_opts(&qkv, &tiles, &opts).unwrap();
        assert_ne!(good, bad);
    }

    #[test]
    fn update_single_tile_then_finalize_is_exact_softmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (rows, cols, d) = (3, 5, 4);
        let scores: Vec<f32> = (0..rows * cols)
            .map(|_| rng.random::<f32>() * 4.0 - 2.0)
            .collect();
        let v: Vec<f32> = (0..cols * d)
            .map(|_| rng.random::<f32>() * 2.0 - 1.0)
            .collect();

        let mut state = OnlineSoftmaxState::new(rows, d);
        state.update(&scores, cols, &v);
        let got = state.finalize();

        for r in 0..rows {
            let row = &scores[r * cols..(r + 1) * cols];
            let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let weights: Vec<f32> = row.iter().map(|s| (s - m).exp()).collect();
            let z: f32 = weights.iter().sum();
            for c in 0..d {
                let want: f32 = (0..cols).map(|j| weights[j] / z * v[j * d + c]).sum();
                assert!((got[r * d + c] - want).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn split_tiles_match_concatenated_tile() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (rows, cols, d) = (2, 8, 3);
        let scores: Vec<f32> = (0..rows * cols)
            .map(|_| rng.random::<f32>() * 6.0 - 3.0)
            .collect();
        let v: Vec<f32> = (0..cols * d)
            .map(|_| rng.random::<f32>() * 2.0 - 1.0)
            .collect();

        let mut whole = OnlineSoftmaxState::new(rows, d);
        whole.update(&scores, cols, &v);

        let mut split = OnlineSoftmaxState::new(rows, d);
        let half = cols / 2;
        let first: Vec<f32> = (0..rows)
            .flat_map(|r| scores[r * cols..r * cols + half].to_vec())
            .collect();
        let second: Vec<f32> = (0..rows)
            .flat_map(|r| scores[r * cols + half..(r + 1) * cols].to_vec())
            .collect();
        split.update(&first, half, &v[..half * d]);
        split.update(&second, cols - half, &v[half * d..]);

        let a = whole.finalize();
        let b = split.finalize();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn identical_scores_give_uniform_weights() {
        let (rows, cols, d) = (2, 6, 2);
        let scores = vec![1.25f32; rows * cols];
        let v = vec![0.5f32; cols * d];
        let mut state = OnlineSoftmaxState::new(rows, d);
        state.update(&scores, cols, &v);
        for r in 0..rows {
            assert_eq!(state.denom()[r], cols as f32); // e^0 per entry
            assert!(state.row_max()[r].is_finite());
            assert!(state.denom()[r] > 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        /// Randomized oracle equivalence across shapes and tile sizes.
        #[test]
        fn oracle_equivalence(
            seed in 0u64..10_000,
            heads in prop::sample::select(vec![1usize, 4]),
            d in prop::sample::select(vec![8usize, 16]),
            block in prop::sample::select(vec![8usize, 16, 32, 64]),
            lengths in prop::collection::vec(1usize..48, 1..5),
        ) {
            let qkv = random_qkv(&lengths, heads, d, seed);
            let tiles = TileConfig::square(block, d);
            let (out, counter) = ragged_attention_forward(&qkv, &tiles).unwrap();
            let diff = max_diff_vs_oracle(&qkv, &out);
            prop_assert!(diff <= 1e-5, "diff {diff}");
            prop_assert_eq!(counter.tile_pairs, expected_tile_pairs(qkv.cu_seqlens(), heads, &tiles));
        }
    }
}

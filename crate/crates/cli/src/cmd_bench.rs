//! `bench`: kernel and pipeline latency sweeps, artifact emission, and the
//! printed summary table.

use std::path::{Path, PathBuf};

use raggedvit::bench::{
    decompose_overhead_with, sweep_kernel, sweep_pipeline, SweepOptions, SweepResult,
};
use raggedvit::report::{emit_csv, emit_svg};
use raggedvit::{Error, Result};

use crate::run_config::{
    parse_floor, resolve, resolve_grid, resolve_prune, resolve_timing, CommonArgs,
};

#[derive(clap::Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated batch sizes
    #[arg(long = "bs", value_delimiter = ',', value_name = "N,N,...")]
    pub bs: Option<Vec<usize>>,
    /// Comma-separated prune ratios in [0, 1)
    #[arg(long, value_delimiter = ',', value_name = "R,R,...")]
    pub ratio: Option<Vec<f64>>,
    /// Comma-separated backends: ragged, padded_masked, naive
    #[arg(long, value_delimiter = ',', value_name = "B,B,...")]
    pub backend: Option<Vec<String>>,
    /// Untimed warmup iterations per cell
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Timed iterations per cell
    #[arg(long)]
    pub iters: Option<usize>,
    /// Sweep repetitions (cells shuffled per repetition, samples pooled)
    #[arg(long)]
    pub reps: Option<usize>,
    /// Output directory for artifacts
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Artifact formats, comma-separated: csv, svg
    #[arg(long, value_delimiter = ',', value_name = "FMT,...")]
    pub format: Option<Vec<String>>,
    /// Time pack-plan construction and packing inside kernel cells
    #[arg(long = "include-pack")]
    pub include_pack: bool,
    /// Floor estimation for the summary decomposition: min or regress
    #[arg(long, value_parser = ["min", "regress"])]
    pub floor: Option<String>,
    /// What to sweep: kernel, pipeline, or both
    #[arg(long, value_parser = ["kernel", "pipeline", "both"])]
    pub kind: Option<String>,
}

pub fn run(args: &BenchArgs) -> Result<i32> {
    let resolved = resolve(&args.common)?;
    let grid = resolve_grid(&resolved, &args.bs, &args.ratio, &args.backend)?;
    let timing = resolve_timing(&resolved, args.warmup, args.iters, args.reps);
    let include_pack = args.include_pack || resolved.config.include_pack.unwrap_or(false);
    let floor = parse_floor(args.floor.as_deref().or(resolved.config.floor.as_deref()))?;
    let kind = args
        .kind
        .clone()
        .or(resolved.config.bench_kind.clone())
        .unwrap_or_else(|| "kernel".to_string());
    let out_dir = args
        .out
        .clone()
        .or(resolved.config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let formats = args
        .format
        .clone()
        .or(resolved.config.formats.clone())
        .unwrap_or_else(|| vec!["csv".to_string()]);
    for f in &formats {
        if f != "csv" && f != "svg" {
            return Err(Error::InvalidConfig(format!("unknown format `{f}`")));
        }
    }
    let opts = SweepOptions {
        timing,
        seed: resolved.seed,
        include_pack,
        mem_limit_bytes: 1 << 30,
    };

    std::fs::create_dir_all(&out_dir)?;
    let mut exit = 0;
    if kind == "kernel" || kind == "both" {
        println!(
            "kernel sweep: model D={} H={} S={} tiles {}x{}, warmup {} iters {} reps {}",
            resolved.model.embed_dim,
            resolved.model.heads,
            resolved.model.seq_len,
            resolved.tiles.block_m,
            resolved.tiles.block_n,
            timing.warmup,
            timing.iters,
            timing.reps
        );
        let result = sweep_kernel(&grid, &resolved.model, &resolved.tiles, &opts)?;
        exit = exit.max(finish("kernel", &result, floor, &out_dir, &formats)?);
    }
    if kind == "pipeline" || kind == "both" {
        let spec = resolve_prune(&resolved, None);
        println!(
            "pipeline sweep: method {}, depth {}, prune layer {}",
            spec.method.name(),
            resolved.model.depth,
            resolved.model.prune_layer
        );
        let result = sweep_pipeline(&grid, &resolved.model, &spec, &resolved.tiles, &opts)?;
        exit = exit.max(finish("pipeline", &result, floor, &out_dir, &formats)?);
    }
    Ok(exit)
}

fn finish(
    label: &str,
    result: &SweepResult,
    floor: raggedvit::bench::FloorMode,
    out_dir: &Path,
    formats: &[String],
) -> Result<i32> {
    for s in &result.skipped {
        eprintln!(
            "warning: skipped {} bs={} ratio={}: {}",
            s.backend, s.batch_size, s.prune_ratio, s.reason
        );
    }
    if result.records.is_empty() {
        eprintln!("warning: {label} sweep produced no records");
        return Ok(0);
    }
    let report = decompose_overhead_with(&result.records, floor)?;

    println!(
        "\n{:<14} {:>4} {:>6} {:>8} {:>9} {:>8} {:>10} {:>10} {:>10} {:>11} {:>12} {:>9}",
        "backend",
        "bs",
        "ratio",
        "tok/img",
        "tokens",
        "workers",
        "mean_ms",
        "p50_ms",
        "min_ms",
        "img/s",
        "op_counter",
        "pack_ms"
    );
    for r in &result.records {
        println!(
            "{:<14} {:>4} {:>6} {:>8} {:>9} {:>8} {:>10.4} {:>10.4} {:>10.4} {:>11} {:>12} {:>9}",
            r.backend.name(),
            r.batch_size,
            r.prune_ratio,
            r.tokens_per_image,
            r.total_tokens,
            r.worker_count,
            r.mean_ms,
            r.p50_ms,
            r.min_ms,
            r.images_per_s
                .map(|x| format!("{x:.1}"))
                .unwrap_or_default(),
            r.op_counter,
            r.pack_ms.map(|x| format!("{x:.4}")).unwrap_or_default(),
        );
    }
    println!();
    println!("{}", report.format_table());

    for f in formats {
        let path = out_dir.join(format!("{label}.{f}"));
        let bytes = match f.as_str() {
            "csv" => emit_csv(&result.records, Some(&report)).into_bytes(),
            "svg" => emit_svg(&result.records)?.into_bytes(),
            _ => unreachable!("validated above"),
        };
        std::fs::write(&path, bytes)?;
        println!("wrote {}", path.display());
    }
    Ok(0)
}

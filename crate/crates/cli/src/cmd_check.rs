//! `check`: run the oracle- and backend-equivalence suites and print the
//! per-method table (max |delta|, mean |delta|, prediction match rate).

use raggedvit::attention::KernelOptions;
use raggedvit::check::{
    run_backend_equivalence, run_oracle_equivalence_opts, BackendCheckConfig, OracleCheckConfig,
};
use raggedvit::pipeline::PipelineOptions;
use raggedvit::Result;

use crate::run_config::{resolve, CommonArgs};

#[derive(clap::Args, Debug)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Prune ratios for the backend-equivalence suite
    #[arg(long, value_delimiter = ',', value_name = "R,R,...")]
    pub ratio: Option<Vec<f64>>,
    /// Randomized oracle-equivalence case count
    #[arg(long, default_value_t = 200)]
    pub cases: usize,
    /// Number of seeds for the backend-equivalence suite
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    /// Batch size for the backend-equivalence suite
    #[arg(long = "bs", default_value_t = 4)]
    pub batch: usize,
    /// Corrupt the kernel (skip the final normalization) to verify the
    /// checks catch it
    #[arg(long = "fault-inject", hide = true)]
    pub fault_inject: bool,
}

pub fn run(args: &CheckArgs) -> Result<i32> {
    let resolved = resolve(&args.common)?;
    let kernel_opts = KernelOptions {
        workers: resolved.workers,
        skip_final_div: args.fault_inject,
    };

    let oracle_cfg = OracleCheckConfig {
        cases: args.cases,
        seed: resolved.seed,
        ..Default::default()
    };
    let oracle = run_oracle_equivalence_opts(&oracle_cfg, &kernel_opts)?;
    let oracle_pass = oracle.passed();
    println!(
        "oracle equivalence: {} cases, max |delta| = {:.3e} (tol {:.0e}) -> {}",
        oracle.cases_run,
        oracle.max_abs_diff,
        oracle_cfg.tolerance,
        if oracle_pass { "PASS" } else { "FAIL" }
    );
    for f in oracle.failures.iter().take(5) {
        println!(
            "  violation: case {} lengths {:?} H={} d={} tile={} max |delta| = {:.3e}",
            f.case, f.lengths, f.heads, f.head_dim, f.tile, f.max_diff
        );
    }

    let mut backend_cfg = BackendCheckConfig::desk_default()?;
    backend_cfg.model = resolved.model;
    backend_cfg.batch = args.batch;
    backend_cfg.seeds = (0..args.seeds)
        .map(|s| s.wrapping_add(resolved.seed))
        .collect();
    if let Some(ratios) = &args.ratio {
        backend_cfg.ratios = ratios.clone();
    }
    let pipe_opts = PipelineOptions {
        tiles: resolved.tiles,
        workers: resolved.workers,
        skip_final_div: args.fault_inject,
    };
    let rows = run_backend_equivalence(&backend_cfg, &pipe_opts)?;

    println!(
        "\nbackend equivalence: {} seeds x ratios {:?}, batch {}, tol {:.0e}",
        backend_cfg.seeds.len(),
        backend_cfg.ratios,
        backend_cfg.batch,
        backend_cfg.tolerance
    );
    println!(
        "{:<14} {:>12} {:>12} {:>16}",
        "method", "Max |d|", "Mean |d|", "Preds Match"
    );
    let mut backend_pass = true;
    for row in &rows {
        println!(
            "{:<14} {:>12.3e} {:>12.3e} {:>10.1}% ({}/{})",
            row.method.name(),
            row.max_abs_diff,
            row.mean_abs_diff,
            row.preds_match_pct(),
            row.preds_matched,
            row.images
        );
        if !row.passed(backend_cfg.tolerance) {
            backend_pass = false;
            if let Some((seed, ratio)) = row.first_violation {
                println!(
                    "  violation: method {} seed {seed} ratio {ratio} (model {:?})",
                    row.method.name(),
                    backend_cfg.model
                );
            }
        }
    }

    Ok(if oracle_pass && backend_pass { 0 } else { 1 })
}

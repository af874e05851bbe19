//! JSON run configuration and its resolution against command-line flags.
//! Flags take precedence over config values, which take precedence over
//! built-in defaults. Unknown JSON keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use raggedvit::bench::{Backend, FloorMode, SweepGrid, TimingParams};
use raggedvit::config::{ModelConfig, TileConfig};
use raggedvit::pruning::{PruneMethod, PruneSpec};
use raggedvit::{Error, Result};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Model preset name; mutually exclusive with `model`.
    pub preset: Option<String>,
    /// Inline model shape.
    pub model: Option<ModelConfig>,
    pub prune: Option<PruneSpec>,
    pub tiles: Option<TilesSpec>,
    pub grid: Option<GridSpec>,
    pub timing: Option<TimingParams>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub formats: Option<Vec<String>>,
    pub include_pack: Option<bool>,
    /// "min" or "regress".
    pub floor: Option<String>,
    /// "kernel", "pipeline", or "both".
    pub bench_kind: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TilesSpec {
    pub block_m: Option<usize>,
    pub block_n: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub batch_sizes: Option<Vec<usize>>,
    pub ratios: Option<Vec<f64>>,
    pub backends: Option<Vec<String>>,
    pub workers: Option<Vec<usize>>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        if cfg.preset.is_some() && cfg.model.is_some() {
            return Err(Error::InvalidConfig(
                "config sets both `preset` and `model`".into(),
            ));
        }
        Ok(cfg)
    }
}

/// Flags shared by every subcommand.
#[derive(clap::Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// JSON run-config file; explicit flags take precedence over it
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Model preset: desk, deit_tiny, deit_small, deit_base
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
    /// Base RNG seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Query-tile rows B_M
    #[arg(long = "tile-m", value_name = "ROWS")]
    pub tile_m: Option<usize>,
    /// Key-tile rows B_N
    #[arg(long = "tile-n", value_name = "ROWS")]
    pub tile_n: Option<usize>,
    /// Ragged kernel worker threads
    #[arg(long, env = "RAGGED_ATTN_WORKERS", value_name = "N")]
    pub workers: Option<usize>,
}

/// Everything a command needs after merging flags, config file, and
/// defaults.
pub struct Resolved {
    pub config: RunConfig,
    pub model: ModelConfig,
    pub tiles: TileConfig,
    pub seed: u64,
    pub workers: usize,
}

pub fn resolve(common: &CommonArgs) -> Result<Resolved> {
    let config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let model = if let Some(name) = common.preset.as_deref().or(config.preset.as_deref()) {
        ModelConfig::preset(name)?
    } else if let Some(m) = &config.model {
        m.validate()?;
        *m
    } else {
        ModelConfig::preset("desk")?
    };
    let tiles_cfg = config.tiles.clone().unwrap_or_default();
    let tiles = TileConfig::new(
        common.tile_m.or(tiles_cfg.block_m).unwrap_or(64),
        common.tile_n.or(tiles_cfg.block_n).unwrap_or(64),
        model.head_dim,
    );
    tiles.validate()?;
    let seed = common.seed.or(config.seed).unwrap_or(0);
    let workers = common.workers.or(config.workers).unwrap_or(1).max(1);
    Ok(Resolved {
        config,
        model,
        tiles,
        seed,
        workers,
    })
}

pub fn parse_backends(names: &[String]) -> Result<Vec<Backend>> {
    names.iter().map(|s| Backend::parse(s)).collect()
}

pub fn resolve_grid(
    resolved: &Resolved,
    bs: &Option<Vec<usize>>,
    ratio: &Option<Vec<f64>>,
    backend: &Option<Vec<String>>,
) -> Result<SweepGrid> {
    let grid_cfg = resolved.config.grid.clone().unwrap_or_default();
    let batch_sizes = bs
        .clone()
        .or(grid_cfg.batch_sizes)
        .unwrap_or_else(|| vec![4, 16, 32, 64]);
    let ratios = ratio
        .clone()
        .or(grid_cfg.ratios)
        .unwrap_or_else(|| vec![0.0, 0.5, 0.8]);
    let backends = match backend.clone().or(grid_cfg.backends) {
        Some(names) => parse_backends(&names)?,
        None => vec![Backend::Ragged, Backend::PaddedMasked],
    };
    let workers = grid_cfg.workers.unwrap_or_else(|| vec![resolved.workers]);
    let grid = SweepGrid {
        batch_sizes,
        ratios,
        backends,
        workers,
    };
    grid.validate()?;
    Ok(grid)
}

pub fn resolve_timing(
    resolved: &Resolved,
    warmup: Option<usize>,
    iters: Option<usize>,
    reps: Option<usize>,
) -> TimingParams {
    let base = resolved.config.timing.unwrap_or_default();
    TimingParams {
        warmup: warmup.unwrap_or(base.warmup),
        iters: iters.unwrap_or(base.iters),
        reps: reps.unwrap_or(base.reps),
    }
}

pub fn resolve_prune(resolved: &Resolved, ratio: Option<f64>) -> PruneSpec {
    let mut spec = resolved
        .config
        .prune
        .unwrap_or_else(|| PruneSpec::new(PruneMethod::ThresholdL2, 0.5));
    if let Some(r) = ratio {
        spec.ratio = r;
    }
    spec
}

pub fn parse_floor(name: Option<&str>) -> Result<FloorMode> {
    match name {
        None | Some("min") => Ok(FloorMode::Min),
        Some("regress") => Ok(FloorMode::Regress),
        Some(other) => Err(Error::InvalidConfig(format!(
            "unknown floor mode `{other}` (expected min or regress)"
        ))),
    }
}

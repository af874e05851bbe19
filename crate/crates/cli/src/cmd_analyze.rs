//! `analyze`: overhead decomposition of a results CSV, either our bench
//! schema or an externally transcribed latency table.

use std::path::PathBuf;

use raggedvit::bench::decompose_overhead_with;
use raggedvit::report::{parse_csv, parse_latency_csv};
use raggedvit::{Error, Result};

use crate::run_config::parse_floor;

#[derive(clap::Args, Debug)]
pub struct AnalyzeArgs {
    /// Results CSV in the bench schema
    #[arg(value_name = "RECORDS_CSV", required_unless_present = "paper_data")]
    pub records: Option<PathBuf>,
    /// Externally measured latencies (minimal schema: backend, mean_ms,
    /// optionally batch_size / prune_ratio / op_counter)
    #[arg(long = "paper-data", value_name = "CSV")]
    pub paper_data: Option<PathBuf>,
    /// Floor estimation: min or regress
    #[arg(long, value_parser = ["min", "regress"])]
    pub floor: Option<String>,
}

pub fn run(args: &AnalyzeArgs) -> Result<i32> {
    let floor = parse_floor(args.floor.as_deref())?;
    let records = match (&args.records, &args.paper_data) {
        (_, Some(path)) => {
            let text = std::fs::read_to_string(path)?;
            parse_latency_csv(&text)?
        }
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)?;
            parse_csv(&text)?
        }
        (None, None) => {
            return Err(Error::InvalidConfig(
                "pass a records CSV or --paper-data".into(),
            ))
        }
    };
    let report = decompose_overhead_with(&records, floor)?;
    println!("{}", report.format_table());
    Ok(0)
}

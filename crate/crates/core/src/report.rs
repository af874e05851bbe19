//! Report emission and parsing: the bench CSV schema, a header-driven
//! reader for externally transcribed latency tables, and a self-contained
//! SVG chart of latency vs batch size.
//!
//! CSV schema (column order is part of the contract; `include_pack` is a
//! trailing flag column):
//! `backend,batch_size,prune_ratio,tokens_per_image,total_tokens,mean_ms,
//! p50_ms,min_ms,stddev_ms,images_per_s,op_counter,overhead_pct,include_pack`
//!
//! Empty optional fields serialize as empty cells, never "NaN". Floats are
//! written with Rust's shortest round-trip formatting, so parsing an emitted
//! file reproduces every numeric field exactly.

use crate::bench::{Backend, OverheadReport, TimingRecord};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "backend,batch_size,prune_ratio,tokens_per_image,total_tokens,\
mean_ms,p50_ms,min_ms,stddev_ms,images_per_s,op_counter,overhead_pct,include_pack";

/// Output format for [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Svg,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(Error::InvalidConfig(format!("unknown format `{other}`"))),
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Svg => "svg",
        }
    }
}

/// Render records (plus optional overhead percentages) as file bytes.
pub fn emit_report(
    records: &[TimingRecord],
    report: Option<&OverheadReport>,
    format: ReportFormat,
) -> Result<Vec<u8>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records to emit".into()));
    }
    match format {
        ReportFormat::Csv => Ok(emit_csv(records, report).into_bytes()),
        ReportFormat::Svg => Ok(emit_svg(records)?.into_bytes()),
    }
}

fn opt_cell(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{v}"),
        None => String::new(),
    }
}

/// Emit the bench CSV. When an overhead report is supplied, each record's
/// overhead percentage is looked up by (backend, batch_size, ratio, mean).
pub fn emit_csv(records: &[TimingRecord], report: Option<&OverheadReport>) -> String {
    let mut out = String::with_capacity(128 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let overhead = r.overhead_pct.or_else(|| {
            report.and_then(|rep| {
                rep.rows
                    .iter()
                    .find(|row| {
                        row.backend == r.backend
                            && row.batch_size == r.batch_size
                            && row.prune_ratio == r.prune_ratio
                            && row.mean_ms == r.mean_ms
                    })
                    .map(|row| row.overhead_pct)
            })
        });
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.backend.name(),
            r.batch_size,
            r.prune_ratio,
            r.tokens_per_image,
            r.total_tokens,
            r.mean_ms,
            r.p50_ms,
            r.min_ms,
            r.stddev_ms,
            opt_cell(r.images_per_s),
            r.op_counter,
            opt_cell(overhead),
            r.include_pack,
        ));
    }
    out
}

struct FieldCursor<'a> {
    line: usize,
    fields: Vec<&'a str>,
}

impl<'a> FieldCursor<'a> {
    fn get(&self, column: usize, name: &str) -> Result<&'a str> {
        self.fields.get(column).copied().ok_or(Error::CsvParse {
            line: self.line,
            column: column + 1,
            message: format!("missing field `{name}`"),
        })
    }

    fn parse<T: std::str::FromStr>(&self, column: usize, name: &str) -> Result<T> {
        let raw = self.get(column, name)?;
        raw.trim().parse().map_err(|_| Error::CsvParse {
            line: self.line,
            column: column + 1,
            message: format!("cannot parse `{raw}` as {name}"),
        })
    }

    fn parse_opt(&self, column: usize, name: &str) -> Result<Option<f64>> {
        let raw = self.get(column, name)?.trim();
        if raw.is_empty() {
            return Ok(None);
        }
        raw.parse().map(Some).map_err(|_| Error::CsvParse {
            line: self.line,
            column: column + 1,
            message: format!("cannot parse `{raw}` as {name}"),
        })
    }
}

/// Parse a CSV in the exact bench schema back into records. Fields outside
/// the schema (warmup/timed iteration counts, worker count, tile sizes,
/// pack_ms) come back defaulted.
pub fn parse_csv(text: &str) -> Result<Vec<TimingRecord>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::CsvParse {
        line: 1,
        column: 1,
        message: "empty file".into(),
    })?;
    if header.trim() != CSV_HEADER {
        return Err(Error::CsvParse {
            line: 1,
            column: 1,
            message: format!(
                "header does not match bench schema (got `{}`)",
                header.trim()
            ),
        });
    }
    let mut records = Vec::new();
    for (idx, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        let line = idx + 1;
        let cursor = FieldCursor {
            line,
            fields: raw.split(',').collect(),
        };
        if cursor.fields.len() != 13 {
            return Err(Error::CsvParse {
                line,
                column: cursor.fields.len(),
                message: format!("expected 13 fields, found {}", cursor.fields.len()),
            });
        }
        let backend =
            Backend::parse(cursor.get(0, "backend")?.trim()).map_err(|e| Error::CsvParse {
                line,
                column: 1,
                message: e.to_string(),
            })?;
        records.push(TimingRecord {
            backend,
            batch_size: cursor.parse(1, "batch_size")?,
            prune_ratio: cursor.parse(2, "prune_ratio")?,
            tokens_per_image: cursor.parse(3, "tokens_per_image")?,
            total_tokens: cursor.parse(4, "total_tokens")?,
            warmup_iters: 0,
            timed_iters: 1,
            mean_ms: cursor.parse(5, "mean_ms")?,
            p50_ms: cursor.parse(6, "p50_ms")?,
            min_ms: cursor.parse(7, "min_ms")?,
            stddev_ms: cursor.parse(8, "stddev_ms")?,
            worker_count: 1,
            tile_m: 0,
            tile_n: 0,
            op_counter: cursor.parse(10, "op_counter")?,
            images_per_s: cursor.parse_opt(9, "images_per_s")?,
            overhead_pct: cursor.parse_opt(11, "overhead_pct")?,
            include_pack: cursor.parse(12, "include_pack")?,
            pack_ms: None,
        });
    }
    Ok(records)
}

/// Header-driven reader for externally measured latencies (e.g. transcribed
/// published tables). Requires `backend` and `mean_ms` columns; picks up
/// `batch_size`, `prune_ratio` and `op_counter` when present.
pub fn parse_latency_csv(text: &str) -> Result<Vec<TimingRecord>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::CsvParse {
        line: 1,
        column: 1,
        message: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(|c| c.trim()).collect();
    let find = |name: &str| cols.iter().position(|c| *c == name);
    let backend_col = find("backend").ok_or(Error::CsvParse {
        line: 1,
        column: 1,
        message: "missing `backend` column".into(),
    })?;
    let mean_col = find("mean_ms").ok_or(Error::CsvParse {
        line: 1,
        column: 1,
        message: "missing `mean_ms` column".into(),
    })?;
    let bs_col = find("batch_size");
    let ratio_col = find("prune_ratio");
    let ops_col = find("op_counter");

    let mut records = Vec::new();
    for (idx, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        let line = idx + 1;
        let cursor = FieldCursor {
            line,
            fields: raw.split(',').collect(),
        };
        let backend = Backend::parse(cursor.get(backend_col, "backend")?.trim()).map_err(|e| {
            Error::CsvParse {
                line,
                column: backend_col + 1,
                message: e.to_string(),
            }
        })?;
        let mean_ms: f64 = cursor.parse(mean_col, "mean_ms")?;
        let mut rec = crate::bench::record_from_latency(
            backend,
            match bs_col {
                Some(c) => cursor.parse(c, "batch_size")?,
                None => 0,
            },
            match ratio_col {
                Some(c) => cursor.parse(c, "prune_ratio")?,
                None => 0.0,
            },
            mean_ms,
        );
        if let Some(c) = ops_col {
            rec.op_counter = cursor.parse(c, "op_counter")?;
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(Error::EmptyInput("latency CSV holds no data rows".into()));
    }
    Ok(records)
}

const SVG_WIDTH: f64 = 860.0;
const SVG_HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 240.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Latency vs batch size, one line series per (backend, ratio) group.
/// Self-contained: inline attributes only, no external assets.
pub fn emit_svg(records: &[TimingRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no records to plot".into()));
    }
    let mut groups: Vec<((Backend, u64), Vec<&TimingRecord>)> = Vec::new();
    for r in records {
        let key = (r.backend, r.prune_ratio.to_bits());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    for (_, series) in &mut groups {
        series.sort_by_key(|r| r.batch_size);
    }

    let x_max = records.iter().map(|r| r.batch_size).max().unwrap() as f64;
    let x_min = records.iter().map(|r| r.batch_size).min().unwrap() as f64;
    let y_max = records.iter().map(|r| r.mean_ms).fold(0.0f64, f64::max) * 1.05;
    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |bs: f64| {
        if x_max > x_min {
            MARGIN_LEFT + (bs - x_min) / (x_max - x_min) * plot_w
        } else {
            MARGIN_LEFT + plot_w / 2.0
        }
    };
    let y_of = |ms: f64| {
        if y_max > 0.0 {
            MARGIN_TOP + plot_h - ms / y_max * plot_h
        } else {
            MARGIN_TOP + plot_h
        }
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" \
         viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"22\" font-family=\"sans-serif\" font-size=\"16\">\
         Attention latency vs batch size</text>\n",
        MARGIN_LEFT
    ));

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_LEFT,
        MARGIN_TOP + plot_h,
        MARGIN_LEFT + plot_w,
        MARGIN_TOP + plot_h
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        MARGIN_LEFT,
        MARGIN_TOP,
        MARGIN_LEFT,
        MARGIN_TOP + plot_h
    ));

    // Y ticks.
    for i in 0..=5 {
        let ms = y_max * i as f64 / 5.0;
        let y = y_of(ms);
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#cccccc\"/>\n",
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{ms:.3}</text>\n",
            MARGIN_LEFT - 6.0,
            y + 4.0
        ));
    }
    // X ticks at each distinct batch size.
    let mut xticks: Vec<usize> = records.iter().map(|r| r.batch_size).collect();
    xticks.sort_unstable();
    xticks.dedup();
    for bs in xticks {
        let x = x_of(bs as f64);
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{bs}</text>\n",
            MARGIN_TOP + plot_h + 18.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\">batch size</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        SVG_HEIGHT - 18.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
         transform=\"rotate(-90 18 {})\">latency (ms)</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    ));

    // Series.
    for (gi, ((backend, ratio_bits), series)) in groups.iter().enumerate() {
        let color = PALETTE[gi % PALETTE.len()];
        let ratio = f64::from_bits(*ratio_bits);
        let points: Vec<String> = series
            .iter()
            .map(|r| format!("{:.2},{:.2}", x_of(r.batch_size as f64), y_of(r.mean_ms)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        for r in series {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                x_of(r.batch_size as f64),
                y_of(r.mean_ms)
            ));
        }
        // Legend entry.
        let ly = MARGIN_TOP + 16.0 * gi as f64;
        let lx = MARGIN_LEFT + plot_w + 20.0;
        svg.push_str(&format!(
            "<rect x=\"{lx}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n",
            ly - 9.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{ly}\" font-family=\"sans-serif\" font-size=\"11\">\
             {} ratio={ratio}</text>\n",
            lx + 14.0,
            backend.name()
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::record_from_latency;

    fn sample_records() -> Vec<TimingRecord> {
        let mut a = record_from_latency(Backend::Ragged, 4, 0.5, 0.123456789);
        a.tokens_per_image = 17;
        a.total_tokens = 68;
        a.op_counter = 144;
        a.images_per_s = Some(32412.7);
        let mut b = record_from_latency(Backend::PaddedMasked, 16, 0.0, 1.75);
        b.stddev_ms = 0.025;
        vec![a, b]
    }

    #[test]
    fn header_appears_exactly_once() {
        let csv = emit_csv(&sample_records(), None);
        assert_eq!(csv.matches("backend,").count(), 1);
        assert!(csv.starts_with(CSV_HEADER));
    }

    #[test]
    fn empty_optionals_are_empty_cells() {
        let csv = emit_csv(&sample_records(), None);
        let second = csv.lines().nth(2).unwrap();
        // padded record has no images_per_s and no overhead_pct
        assert!(!second.contains("NaN"));
        let fields: Vec<&str> = second.split(',').collect();
        assert_eq!(fields[9], "");
        assert_eq!(fields[11], "");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let records = sample_records();
        let csv = emit_csv(&records, None);
        let back = parse_csv(&csv).unwrap();
        assert_eq!(back.len(), records.len());
        for (orig, parsed) in records.iter().zip(&back) {
            assert_eq!(orig.backend, parsed.backend);
            assert_eq!(orig.batch_size, parsed.batch_size);
            assert_eq!(orig.prune_ratio, parsed.prune_ratio);
            assert_eq!(orig.tokens_per_image, parsed.tokens_per_image);
            assert_eq!(orig.total_tokens, parsed.total_tokens);
            assert_eq!(orig.mean_ms, parsed.mean_ms);
            assert_eq!(orig.p50_ms, parsed.p50_ms);
            assert_eq!(orig.min_ms, parsed.min_ms);
            assert_eq!(orig.stddev_ms, parsed.stddev_ms);
            assert_eq!(orig.images_per_s, parsed.images_per_s);
            assert_eq!(orig.op_counter, parsed.op_counter);
            assert_eq!(orig.include_pack, parsed.include_pack);
        }
    }

    #[test]
    fn malformed_field_reports_line_and_column() {
        let mut csv = emit_csv(&sample_records(), None);
        csv = csv.replace("1.75", "not_a_number");
        let err = parse_csv(&csv).unwrap_err();
        match err {
            Error::CsvParse { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, 6);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(parse_csv("a,b,c\n1,2,3\n").is_err());
    }

    #[test]
    fn latency_csv_minimal_and_extended() {
        let minimal = "backend,mean_ms\nragged,0.105\nragged,0.041\n";
        let recs = parse_latency_csv(minimal).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].mean_ms, 0.105);

        let extended = "backend,batch_size,prune_ratio,mean_ms\npadded_masked,32,0.5,3.346\n";
        let recs = parse_latency_csv(extended).unwrap();
        assert_eq!(recs[0].batch_size, 32);
        assert_eq!(recs[0].prune_ratio, 0.5);

        assert!(parse_latency_csv("foo,bar\n1,2\n").is_err());
    }

    #[test]
    fn svg_is_self_contained_and_has_series() {
        let svg = emit_svg(&sample_records()).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2); // one per (backend, ratio)
        assert!(!svg.contains("http://") || svg.contains("xmlns"));
        assert!(!svg.contains("@import"));
        assert!(!svg.contains("<script"));
    }

    #[test]
    fn svg_rejects_empty() {
        assert!(emit_svg(&[]).is_err());
    }
}

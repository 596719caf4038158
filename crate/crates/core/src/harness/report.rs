use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{HarnessError, PredictorSummary, RowFiltering, SweepSpec};
use crate::detection::SerReport;

pub const TOOL_NAME: &str = "vlcsim";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Column order of the CSV output.
pub const CSV_COLUMNS: [&str; 13] = [
    "axis_name",
    "axis_value",
    "filtering",
    "order_M",
    "n_frames",
    "n_errors",
    "ser",
    "ser_ci_low",
    "ser_ci_high",
    "prediction_gain_db",
    "predictor_order",
    "residual_variance",
    "seed",
];

/// One (axis value, repetition, filtering) result. Optional fields are empty
/// when the point failed or the quantity does not apply to the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub axis_name: String,
    pub axis_value: f64,
    pub filtering: RowFiltering,
    #[serde(rename = "order_M")]
    pub order_m: usize,
    pub n_frames: usize,
    pub n_errors: Option<u64>,
    pub ser: Option<f64>,
    pub ser_ci_low: Option<f64>,
    pub ser_ci_high: Option<f64>,
    pub prediction_gain_db: Option<f64>,
    pub predictor_order: Option<usize>,
    pub residual_variance: Option<f64>,
    pub seed: u64,
    pub repetition: usize,
    pub realization_digest: Option<String>,
    pub predictor: Option<PredictorSummary>,
    pub warning: Option<String>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool: String,
    pub tool_version: String,
    /// SHA-256 of the JSON-serialized sweep list.
    pub config_hash: String,
    /// Base seed of the first sweep.
    pub seed: u64,
    pub sweeps: Vec<SweepSpec>,
}

impl ReportMetadata {
    pub fn for_sweeps(sweeps: &[SweepSpec]) -> Self {
        Self {
            tool: TOOL_NAME.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            config_hash: config_hash(sweeps),
            seed: sweeps.first().map_or(0, |s| s.base.seed.seed),
            sweeps: sweeps.to_vec(),
        }
    }
}

pub fn config_hash(sweeps: &[SweepSpec]) -> String {
    let bytes = serde_json::to_vec(sweeps).expect("sweep specs serialize");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<ResultRow>,
}

impl ExperimentReport {
    pub fn empty() -> Self {
        Self {
            metadata: ReportMetadata::for_sweeps(&[]),
            rows: Vec::new(),
        }
    }

    fn matching<'a>(
        &'a self,
        axis_name: &'a str,
        axis_value: f64,
        filtering: RowFiltering,
    ) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows.iter().filter(move |r| {
            r.axis_name == axis_name && r.axis_value == axis_value && r.filtering == filtering
        })
    }

    /// Median SER over the repetitions of one point; failed rows are skipped.
    pub fn median_ser(
        &self,
        axis_name: &str,
        axis_value: f64,
        filtering: RowFiltering,
    ) -> Option<f64> {
        let mut v: Vec<f64> = self
            .matching(axis_name, axis_value, filtering)
            .filter_map(|r| r.ser)
            .collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        Some(if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        })
    }

    /// Errors and frames summed over the repetitions of one point.
    pub fn pooled_ser(
        &self,
        axis_name: &str,
        axis_value: f64,
        filtering: RowFiltering,
    ) -> Option<SerReport> {
        let (errors, frames) = self
            .matching(axis_name, axis_value, filtering)
            .filter_map(|r| r.n_errors.map(|e| (e, r.n_frames as u64)))
            .fold((0, 0), |(e, n), (de, dn)| (e + de, n + dn));
        SerReport::from_counts(errors, frames).ok()
    }

    pub fn all_failed(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.failure.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(HarnessError::Config(format!(
                "format must be csv or json, got {s:?}"
            ))),
        }
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Header line plus one line per row. `f64` values use Rust's shortest
/// round-trip formatting.
pub fn emit_csv(report: &ExperimentReport) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in &report.rows {
        let fields = [
            csv_field(&r.axis_name),
            r.axis_value.to_string(),
            r.filtering.to_string(),
            r.order_m.to_string(),
            r.n_frames.to_string(),
            opt(&r.n_errors),
            opt(&r.ser),
            opt(&r.ser_ci_low),
            opt(&r.ser_ci_high),
            opt(&r.prediction_gain_db),
            opt(&r.predictor_order),
            opt(&r.residual_variance),
            r.seed.to_string(),
        ];
        let _ = writeln!(out, "{}", fields.join(","));
    }
    out
}

pub fn emit_json(report: &ExperimentReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn emit_report(report: &ExperimentReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Csv => emit_csv(report).into_bytes(),
        ReportFormat::Json => emit_json(report).into_bytes(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(ser: Option<f64>) -> ResultRow {
        ResultRow {
            axis_name: "channel_gain".into(),
            axis_value: 0.25,
            filtering: RowFiltering::On,
            order_m: 4,
            n_frames: 1000,
            n_errors: ser.map(|s| (s * 1000.0).round() as u64),
            ser,
            ser_ci_low: ser,
            ser_ci_high: ser,
            prediction_gain_db: Some(12.5),
            predictor_order: Some(8),
            residual_variance: Some(0.1),
            seed: u64::MAX,
            repetition: 0,
            realization_digest: None,
            predictor: None,
            warning: None,
            failure: None,
        }
    }

    #[test]
    fn empty_report_is_header_only() {
        let csv = emit_csv(&ExperimentReport::empty());
        assert_eq!(csv, format!("{}\n", CSV_COLUMNS.join(",")));
    }

    #[test]
    fn one_row_two_lines() {
        let mut rep = ExperimentReport::empty();
        rep.rows.push(row(Some(0.004)));
        let csv = emit_csv(&rep);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[1],
            "channel_gain,0.25,on,4,1000,4,0.004,0.004,0.004,12.5,8,0.1,18446744073709551615"
        );
    }

    #[test]
    fn failed_row_leaves_blanks() {
        let mut r = row(None);
        r.prediction_gain_db = None;
        r.predictor_order = None;
        r.residual_variance = None;
        r.failure = Some("boom".into());
        let rep = ExperimentReport {
            rows: vec![r],
            ..ExperimentReport::empty()
        };
        assert!(
            emit_csv(&rep).ends_with("channel_gain,0.25,on,4,1000,,,,,,,,18446744073709551615\n")
        );
        assert!(rep.all_failed());
    }

    #[test]
    fn labels_with_commas_are_quoted() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("x[y=1]"), "x[y=1]");
    }

    #[test]
    fn median_and_pool() {
        let mut rep = ExperimentReport::empty();
        for s in [0.003, 0.001, 0.002] {
            rep.rows.push(row(Some(s)));
        }
        assert_eq!(
            rep.median_ser("channel_gain", 0.25, RowFiltering::On),
            Some(0.002)
        );
        let pooled = rep
            .pooled_ser("channel_gain", 0.25, RowFiltering::On)
            .unwrap();
        assert_eq!((pooled.n_errors, pooled.n_symbols), (6, 3000));
        assert_eq!(
            rep.median_ser("channel_gain", 0.25, RowFiltering::Off),
            None
        );
    }

    proptest! {
        #[test]
        fn json_round_trip(
            ser in 0.0f64..=1.0,
            gain in -50.0f64..50.0,
            var in 0.0f64..1e12,
            value in 0.0f64..1e6,
            seed: u64,
        ) {
            let mut r = row(Some(ser));
            r.prediction_gain_db = Some(gain);
            r.residual_variance = Some(var);
            r.axis_value = value;
            r.seed = seed;
            let rep = ExperimentReport { rows: vec![r], ..ExperimentReport::empty() };
            let back: ExperimentReport = serde_json::from_str(&emit_json(&rep)).unwrap();
            prop_assert_eq!(back, rep);
        }

        #[test]
        fn csv_floats_round_trip(v in prop::num::f64::NORMAL) {
            let mut r = row(Some(0.5));
            r.residual_variance = Some(v);
            let rep = ExperimentReport { rows: vec![r], ..ExperimentReport::empty() };
            let csv = emit_csv(&rep);
            let field = csv.lines().nth(1).unwrap().split(',').nth(11).unwrap();
            prop_assert_eq!(field.parse::<f64>().unwrap(), v);
        }
    }
}

//! Comparing estimated flow-length distributions against ground truth.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binning::{bin_sums, ccdf_values, check_boundaries};
use crate::error::{Error, Result};
use crate::flowtable::FlowTableConfig;
use crate::inversion::{InversionResult, PooledEstimate};
use crate::sampling::SamplerConfig;

const CSV_HEADER: [&str; 6] = [
    "bin_lo",
    "bin_hi",
    "truth",
    "sampled",
    "inverted_raw",
    "inverted_clamped",
];

/// One log bin `[bin_lo, bin_hi)`; every column is a bin mass fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub bin_lo: u64,
    pub bin_hi: u64,
    pub truth: f64,
    pub sampled: Option<f64>,
    pub inverted_raw: Option<f64>,
    pub inverted_clamped: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub sampler: Option<SamplerConfig>,
    pub flow_table: Option<FlowTableConfig>,
    pub packets_sampled: Option<u64>,
    pub flows_formed: Option<u64>,
    pub mean_flow_length: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub total_variation: f64,
    pub ccdf_max_gap: f64,
    pub rows: Vec<BinRow>,
    pub metadata: ReportMetadata,
}

/// What `invert` writes and `compare` reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub method: String,
    #[serde(flatten)]
    pub result: InversionResult,
    pub mean_bytes: Option<f64>,
    pub flows_used: u64,
    pub packets_sampled: u64,
    pub observed: Vec<f64>,
    pub pooled: PooledEstimate,
    pub sampler: Option<SamplerConfig>,
}

fn clamp_normalize(values: &[f64], what: &str) -> Result<Vec<f64>> {
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidDistribution(format!(
            "{what} has no positive mass"
        )));
    }
    Ok(values.iter().map(|v| v.max(0.0) / total).collect())
}

/// Half the L1 distance between two vectors of equal length.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let tv: f64 = 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    tv.min(1.0)
}

/// Max gap between the two CCDFs over lengths `1..=max(support)`.
pub fn ccdf_max_gap(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len().max(b.len());
    let mut ca = ccdf_values(&clamp_normalize(a, "truth")?);
    let mut cb = ccdf_values(&clamp_normalize(b, "estimate")?);
    ca.resize(n, 0.0);
    cb.resize(n, 0.0);
    Ok(ca
        .iter()
        .zip(&cb)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Compares two per-length mass (or count) vectors, index 0 = length 1,
/// over the log bins `boundaries`. Negative estimate mass is clamped per bin.
pub fn compare(truth: &[f64], estimate: &[f64], boundaries: &[u64]) -> Result<ComparisonReport> {
    check_boundaries(boundaries)?;
    let truth_bins = clamp_normalize(&bin_sums(truth, boundaries)?, "truth")?;
    let raw_bins = bin_sums(estimate, boundaries)?;
    let est_bins = clamp_normalize(&raw_bins, "estimate")?;
    let raw_total: f64 = raw_bins.iter().sum();
    let rows = boundaries
        .windows(2)
        .enumerate()
        .map(|(k, w)| BinRow {
            bin_lo: w[0],
            bin_hi: w[1],
            truth: truth_bins[k],
            sampled: None,
            inverted_raw: (raw_total > 0.0).then(|| raw_bins[k] / raw_total),
            inverted_clamped: est_bins[k],
        })
        .collect();
    Ok(ComparisonReport {
        total_variation: total_variation(&truth_bins, &est_bins),
        ccdf_max_gap: ccdf_max_gap(truth, estimate)?,
        rows,
        metadata: ReportMetadata::default(),
    })
}

impl ComparisonReport {
    pub fn boundaries(&self) -> Vec<u64> {
        let mut b: Vec<u64> = self.rows.iter().map(|r| r.bin_lo).collect();
        b.extend(self.rows.last().map(|r| r.bin_hi));
        b
    }

    /// Fills the `sampled` column from per-length observed masses.
    pub fn with_sampled(mut self, observed: &[f64]) -> Result<Self> {
        let boundaries = self.boundaries();
        let bins = clamp_normalize(&bin_sums(observed, &boundaries)?, "sampled")?;
        for (row, v) in self.rows.iter_mut().zip(bins) {
            row.sampled = Some(v);
        }
        Ok(self)
    }

    pub fn with_metadata(mut self, metadata: ReportMetadata) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.bin_lo.to_string(),
                r.bin_hi.to_string(),
                r.truth.to_string(),
                opt(r.sampled),
                opt(r.inverted_raw),
                r.inverted_clamped.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<report csv>", e))?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    total_variation: f64,
    ccdf_max_gap: f64,
    metadata: ReportMetadata,
}

/// `report.csv` -> `report.meta.json`.
pub fn metadata_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Writes the per-bin CSV to `path` and the summary metrics plus metadata
/// to [`metadata_path`]. Output bytes depend only on the report.
pub fn emit_plot_data(report: &ComparisonReport, path: &Path) -> Result<Vec<PathBuf>> {
    let meta_path = metadata_path(path);

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut csv_out = BufWriter::new(file);
    report
        .write_csv(&mut csv_out)
        .map_err(|e| with_path(e, path))?;
    csv_out.flush().map_err(|e| Error::io(path, e))?;

    let sidecar = Sidecar {
        total_variation: report.total_variation,
        ccdf_max_gap: report.ccdf_max_gap,
        metadata: report.metadata.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&sidecar)?;
    json.push(b'\n');
    std::fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;
    Ok(vec![path.to_path_buf(), meta_path])
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

fn parse_field<T: std::str::FromStr>(field: &str, line: usize, name: &str) -> Result<T> {
    field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {name} value {field:?}"),
    })
}

/// Reads back what [`emit_plot_data`] wrote.
pub fn read_plot_data(path: &Path) -> Result<ComparisonReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    if reader.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", CSV_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, got {}", CSV_HEADER.len(), rec.len()),
            });
        }
        let optional = |idx: usize, name: &str| -> Result<Option<f64>> {
            match &rec[idx] {
                "" => Ok(None),
                s => parse_field(s, line, name).map(Some),
            }
        };
        rows.push(BinRow {
            bin_lo: parse_field(&rec[0], line, "bin_lo")?,
            bin_hi: parse_field(&rec[1], line, "bin_hi")?,
            truth: parse_field(&rec[2], line, "truth")?,
            sampled: optional(3, "sampled")?,
            inverted_raw: optional(4, "inverted_raw")?,
            inverted_clamped: parse_field(&rec[5], line, "inverted_clamped")?,
        });
    }
    let meta_path = metadata_path(path);
    let text = std::fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let sidecar: Sidecar = serde_json::from_slice(&text)?;
    Ok(ComparisonReport {
        total_variation: sidecar.total_variation,
        ccdf_max_gap: sidecar.ccdf_max_gap,
        rows,
        metadata: sidecar.metadata,
    })
}

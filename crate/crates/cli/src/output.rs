//! Metric CSV, accuracy chart and run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pepi_core::metrics::{MetricRow, MetricsLog};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const CSV_HEADER: [&str; 7] = ["method", "slot", "round", "epoch", "client", "metric", "value"];

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Write { path: path.to_path_buf(), source: std::io::Error::other(e) }
}

/// CSV text of `log`, rows sorted by (method, slot, round, epoch, client, metric).
pub fn metrics_csv(log: &MetricsLog) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| csv_err(Path::new("<memory>"), e);
    w.write_record(CSV_HEADER).map_err(to_err)?;
    for row in log.sorted() {
        let (round, epoch, value) = (row.round.to_string(), row.epoch.to_string(), format!("{:.6}", row.value));
        w.write_record([&row.method, &row.slot, &round, &epoch, &row.client, &row.metric, &value])
            .map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Write { path: PathBuf::from("<memory>"), source: e.into_error() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_metrics_csv(log: &MetricsLog, path: &Path) -> Result<()> {
    std::fs::write(path, metrics_csv(log)?).map_err(write_err(path))
}

/// One parsed CSV row; `value` keeps the six-decimal rounding of the file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRow {
    pub method: String,
    pub slot: String,
    pub round: u32,
    pub epoch: u32,
    pub client: String,
    pub metric: String,
    pub value: f64,
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| CliError::Config(format!("metrics csv: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != CSV_HEADER {
        return Err(CliError::Config(format!("metrics csv: unexpected header {header:?}")));
    }
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(|e| CliError::Config(format!("metrics csv: {e}")))
}

/// Mean accuracy over clients per `(method, round)`.
pub fn accuracy_curves(log: &MetricsLog) -> BTreeMap<String, Vec<(u32, f64)>> {
    let mut acc: BTreeMap<(String, u32), (f64, usize)> = BTreeMap::new();
    for row in log.filter(|r| r.metric == "accuracy") {
        let e = acc.entry((row.method.clone(), row.round + 1)).or_default();
        e.0 += row.value;
        e.1 += 1;
    }
    let mut curves: BTreeMap<String, Vec<(u32, f64)>> = BTreeMap::new();
    for ((method, round), (sum, n)) in acc {
        curves.entry(method).or_default().push((round, sum / n as f64));
    }
    curves
}

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// Line chart of client-mean test accuracy against federation round.
pub fn accuracy_svg(log: &MetricsLog) -> String {
    let curves = accuracy_curves(log);
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let max_round = curves.values().flatten().map(|p| p.0).max().unwrap_or(1).max(1) as f64;
    let x = |r: u32| pad + (w - 2.0 * pad) * r as f64 / max_round;
    let y = |a: f64| h - pad - (h - 2.0 * pad) * a.clamp(0.0, 1.0);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{pad} {pad} V{b} H{r}" fill="none" stroke="black"/>"#,
        b = h - pad,
        r = w - pad
    );
    for tick in 0..=5 {
        let a = tick as f64 / 5.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{a:.1}</text>"#, pad - 6.0, y(a) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">round</text>"#, w / 2.0, h - 12.0);
    let _ = writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">accuracy</text>"#, h / 2.0, h / 2.0);
    for (i, (method, points)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = points.iter().map(|&(r, a)| format!("{:.1},{:.1}", x(r), y(a))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        let ly = pad + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{method}</text>"#, w - pad - 80.0);
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_accuracy_svg(log: &MetricsLog, path: &Path) -> Result<()> {
    std::fs::write(path, accuracy_svg(log)).map_err(write_err(path))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: String,
    pub trainable_params: usize,
    pub wall_seconds: f64,
    pub final_mean_accuracy: Option<f64>,
}

/// Everything needed to reproduce a run's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_path: String,
    pub config_sha256: String,
    pub preset: String,
    pub seed: u64,
    pub clients: usize,
    pub epochs: u32,
    pub methods: Vec<MethodRun>,
    pub files: Vec<String>,
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, text + "\n").map_err(write_err(path))
}

/// Final-round test accuracy of every client in the last slot, averaged.
pub fn final_mean_accuracy(rows: &[MetricRow]) -> Option<f64> {
    let last_slot = rows.iter().map(|r| r.slot_index).max()?;
    let last_round = rows.iter().filter(|r| r.slot_index == last_slot).map(|r| r.round).max()?;
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.slot_index == last_slot && r.round == last_round && r.metric == "accuracy")
        .map(|r| r.value)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RunReport;
use crate::error::{Error, Result};

/// One run in the CSV results ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub config_hash: String,
    pub mode: String,
    pub backbone: String,
    pub kpi: String,
    pub alpha_pct: f64,
    pub pretext: String,
    pub split: String,
    pub seed: u64,
    pub mse_pct: f64,
    pub gain: Option<f64>,
    pub wallclock_s: f64,
    pub peak_mem_bytes: usize,
}

impl From<&RunReport> for LedgerRow {
    fn from(r: &RunReport) -> Self {
        let c = &r.config;
        Self {
            config_hash: r.config_hash.clone(),
            mode: r.mode.as_str().into(),
            backbone: c.backbone.kind.as_str().into(),
            kpi: c.kpi.as_str().into(),
            alpha_pct: c.alpha_pct,
            pretext: c.pretext.as_str().into(),
            split: c.split.as_str().into(),
            seed: c.seed,
            mse_pct: r.mse(),
            gain: r.gain,
            wallclock_s: r.wallclock_s,
            peak_mem_bytes: r.peak_mem_bytes,
        }
    }
}

/// Appends one row, writing the header when the file is new or empty.
pub fn append_ledger(path: &Path, report: &RunReport) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    w.serialize(LedgerRow::from(report))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Validation(format!("cannot read ledger {}: {e}", path.display())),
        _ => Error::from(e),
    })?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Runs of one configuration summarized over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub config_hash: String,
    pub mode: String,
    pub backbone: String,
    pub kpi: String,
    pub alpha_pct: f64,
    pub pretext: String,
    pub split: String,
    pub n_runs: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub gain_mean: Option<f64>,
    pub gain_std: Option<f64>,
}

impl SummaryRow {
    pub fn mse_text(&self) -> String {
        format_mean_std(self.mse_mean, self.mse_std)
    }

    pub fn gain_text(&self) -> String {
        match (self.gain_mean, self.gain_std) {
            (Some(m), Some(s)) => format!("{m:+.1} ± {s:.1}%"),
            _ => "-".into(),
        }
    }
}

/// `"x.x ± y.y%"`.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.1} ± {std:.1}%")
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups rows by configuration hash (seed excluded) in first-seen order.
/// Standard deviations are sample deviations over seeds.
pub fn aggregate(rows: &[LedgerRow]) -> Vec<SummaryRow> {
    let mut order = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&LedgerRow>> = BTreeMap::new();
    for r in rows {
        let g = groups.entry(&r.config_hash).or_default();
        if g.is_empty() {
            order.push(r.config_hash.as_str());
        }
        g.push(r);
    }
    order
        .into_iter()
        .map(|h| {
            let g = &groups[h];
            let first = g[0];
            let (mse_mean, mse_std) = mean_std(&g.iter().map(|r| r.mse_pct).collect::<Vec<_>>());
            let gains: Vec<f64> = g.iter().filter_map(|r| r.gain).collect();
            let (gain_mean, gain_std) = if gains.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&gains);
                (Some(m), Some(s))
            };
            SummaryRow {
                config_hash: h.to_string(),
                mode: first.mode.clone(),
                backbone: first.backbone.clone(),
                kpi: first.kpi.clone(),
                alpha_pct: first.alpha_pct,
                pretext: first.pretext.clone(),
                split: first.split.clone(),
                n_runs: g.len(),
                mse_mean,
                mse_std,
                gain_mean,
                gain_std,
            }
        })
        .collect()
}

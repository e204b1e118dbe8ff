//! JSON Lines metrics stream and the per-series CSV plot data derived from it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Held-out accuracies attached to the last step of an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalBlock {
    pub clean: f64,
    pub pgd: f64,
    pub cw: Option<f64>,
}

/// One training step. Auxiliary fields are `null` whenever the auxiliary branch did not
/// run (warm-up, α = 0, or no auxiliary data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss_primary: f64,
    pub loss_aux_high: Option<f64>,
    pub loss_aux_low: Option<f64>,
    pub ratio: Option<f64>,
    pub lr: f64,
    pub eval: Option<EvalBlock>,
}

impl MetricsRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let finite = |name: &str, v: Option<f64>| match v {
            Some(x) if !x.is_finite() => Err(format!("{name} is not finite")),
            _ => Ok(()),
        };
        finite("loss_primary", Some(self.loss_primary))?;
        finite("loss_aux_high", self.loss_aux_high)?;
        finite("loss_aux_low", self.loss_aux_low)?;
        if let Some(r) = self.ratio {
            if !(0.0..=1.0).contains(&r) {
                return Err(format!("ratio {r} outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn to_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Appends records to a JSONL file, flushing after each one.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
            path,
        })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        let line = record.to_line()?;
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_metrics(path: impl AsRef<Path>, records: &[MetricsRecord]) -> Result<()> {
    let mut w = MetricsWriter::create(path)?;
    records.iter().try_for_each(|r| w.write(r))
}

/// Parses a JSONL stream; blank lines are skipped, anything else must be a valid record.
pub fn parse_metrics(reader: impl BufRead) -> Result<Vec<MetricsRecord>> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line.map_err(|e| Error::MalformedRecord {
            line: line_no,
            detail: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MetricsRecord =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: line_no,
                detail: e.to_string(),
            })?;
        rec.validate().map_err(|detail| Error::MalformedRecord {
            line: line_no,
            detail,
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(BufReader::new(file))
}

/// Series written by [`emit_plots`], one CSV file each.
pub const PLOT_SERIES: [&str; 5] = [
    "ratio",
    "loss_primary",
    "loss_aux_high",
    "loss_aux_low",
    "lr",
];

fn series_value(r: &MetricsRecord, name: &str) -> Option<f64> {
    match name {
        "ratio" => r.ratio,
        "loss_primary" => Some(r.loss_primary),
        "loss_aux_high" => r.loss_aux_high,
        "loss_aux_low" => r.loss_aux_low,
        "lr" => Some(r.lr),
        _ => None,
    }
}

/// Writes `<series>.csv` with header `step,value` and one row per record. Steps where the
/// series is undefined get an empty value cell.
pub fn emit_plots(metrics: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let records = read_metrics(metrics)?;
    write_plot_csvs(&records, out_dir)
}

pub fn write_plot_csvs(
    records: &[MetricsRecord],
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for name in PLOT_SERIES {
        let path = dir.join(format!("{name}.csv"));
        let mut text = String::from("step,value\n");
        for r in records {
            match series_value(r, name) {
                Some(v) => text.push_str(&format!("{},{v}\n", r.step)),
                None => text.push_str(&format!("{},\n", r.step)),
            }
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Reads a series CSV back as `(step, value)` pairs.
pub fn read_plot_csv(path: impl AsRef<Path>) -> Result<Vec<(usize, Option<f64>)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("step,value") {
        return Err(Error::MalformedRecord {
            line: 1,
            detail: "expected header step,value".into(),
        });
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let bad = |d: String| Error::MalformedRecord {
                line: k + 2,
                detail: d,
            };
            let (s, v) = line
                .split_once(',')
                .ok_or_else(|| bad("missing comma".into()))?;
            let step = s.parse().map_err(|e| bad(format!("step: {e}")))?;
            let value = if v.is_empty() {
                None
            } else {
                Some(v.parse().map_err(|e| bad(format!("value: {e}")))?)
            };
            Ok((step, value))
        })
        .collect()
}

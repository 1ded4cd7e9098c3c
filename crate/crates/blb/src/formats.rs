//! Versioned tab-separated output files and the JSON run manifest.
//!
//! Every table starts with `# blb-<kind> v<version>`, followed by `# key value`
//! metadata lines, a column header and data rows. Numbers are written with the
//! shortest representation that parses back to the same `f64`, so parsing a
//! file and writing it again reproduces it byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use blb_core::{mean_width, QualitySummary, SummaryKind};

use crate::error::{Error, Result};
use crate::procedures::{Trajectory, TrajectoryStep, WorkUnit};
use crate::simbench::{CellReport, ExperimentReport};

pub const FORMAT_VERSION: u32 = 1;

fn malformed(what: &'static str, message: impl Into<String>) -> Error {
    Error::Format {
        what,
        message: message.into(),
    }
}

/// The untyped layout shared by all tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(kind: &str, columns: &[&str]) -> Self {
        Self {
            kind: kind.to_string(),
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| malformed("table", format!("missing metadata {key:?}")))
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# blb-{} v{FORMAT_VERSION}", self.kind).unwrap();
        for (k, v) in &self.meta {
            writeln!(out, "# {k} {v}").unwrap();
        }
        writeln!(out, "{}", self.columns.join("\t")).unwrap();
        for row in &self.rows {
            writeln!(out, "{}", row.join("\t")).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let first = lines
            .next()
            .ok_or_else(|| malformed("table", "empty file"))?;
        let rest = first
            .strip_prefix("# blb-")
            .ok_or_else(|| malformed("table", "missing version header"))?;
        let (kind, version) = rest
            .rsplit_once(" v")
            .ok_or_else(|| malformed("table", "missing version"))?;
        if version != FORMAT_VERSION.to_string() {
            return Err(malformed("table", format!("unsupported version {version}")));
        }
        let mut table = Table::new(kind, &[]);
        let mut header_seen = false;
        for line in lines {
            if !header_seen {
                if let Some(meta) = line.strip_prefix("# ") {
                    let (k, v) = meta.split_once(' ').unwrap_or((meta, ""));
                    table.meta.push((k.to_string(), v.to_string()));
                    continue;
                }
                table.columns = line.split('\t').map(str::to_string).collect();
                header_seen = true;
                continue;
            }
            let row: Vec<String> = line.split('\t').map(str::to_string).collect();
            if row.len() != table.columns.len() {
                return Err(malformed(
                    "table",
                    format!(
                        "row has {} fields, header has {}",
                        row.len(),
                        table.columns.len()
                    ),
                ));
            }
            table.rows.push(row);
        }
        if !header_seen {
            return Err(malformed("table", "missing column header"));
        }
        if !text.ends_with('\n') {
            return Err(malformed("table", "missing final newline"));
        }
        Ok(table)
    }

    fn expect(&self, kind: &str, columns: &[&str]) -> Result<()> {
        if self.kind != kind {
            return Err(malformed(
                "table",
                format!("expected blb-{kind}, found blb-{}", self.kind),
            ));
        }
        if !columns.is_empty() && self.columns != columns {
            return Err(malformed(
                "table",
                format!("unexpected columns {:?}", self.columns),
            ));
        }
        Ok(())
    }
}

fn num(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| malformed("table", format!("not a number: {s:?}")))
}

fn count(s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| malformed("table", format!("not a count: {s:?}")))
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s == "NA" {
        Ok(None)
    } else {
        num(s).map(Some)
    }
}

/// Mean interval width, or mean standard error.
pub fn summary_mean(summary: &QualitySummary) -> f64 {
    match summary.kind() {
        SummaryKind::IntervalSet => mean_width(summary).unwrap(),
        SummaryKind::ScalarPerDim => {
            let v = summary.values().unwrap();
            v.iter().sum::<f64>() / v.len() as f64
        }
    }
}

/// Final summary of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryFile {
    pub manifest: String,
    pub method: String,
    pub summary: QualitySummary,
}

impl SummaryFile {
    pub fn to_table(&self) -> Table {
        let mut t = match self.summary.kind() {
            SummaryKind::IntervalSet => Table::new("summary", &["dim", "lower", "upper", "width"]),
            SummaryKind::ScalarPerDim => Table::new("summary", &["dim", "stderr"]),
        };
        t.push_meta("manifest", &self.manifest);
        t.push_meta("method", &self.method);
        match self.summary.kind() {
            SummaryKind::IntervalSet => {
                t.push_meta("metric", "ci");
                t.push_meta("coverage", self.summary.coverage().unwrap());
                t.push_meta("mean_width", summary_mean(&self.summary));
                let (lo, hi) = (self.summary.lower().unwrap(), self.summary.upper().unwrap());
                for (i, (l, u)) in lo.iter().zip(hi).enumerate() {
                    t.rows.push(vec![
                        i.to_string(),
                        l.to_string(),
                        u.to_string(),
                        (u - l).to_string(),
                    ]);
                }
            }
            SummaryKind::ScalarPerDim => {
                t.push_meta("metric", "stderr");
                t.push_meta("mean_stderr", summary_mean(&self.summary));
                for (i, v) in self.summary.values().unwrap().iter().enumerate() {
                    t.rows.push(vec![i.to_string(), v.to_string()]);
                }
            }
        }
        t
    }

    pub fn from_table(t: &Table) -> Result<Self> {
        t.expect("summary", &[])?;
        let summary = match t.require("metric")? {
            "ci" => {
                t.expect("summary", &["dim", "lower", "upper", "width"])?;
                let coverage = num(t.require("coverage")?)?;
                let lower = t.rows.iter().map(|r| num(&r[1])).collect::<Result<_>>()?;
                let upper = t.rows.iter().map(|r| num(&r[2])).collect::<Result<_>>()?;
                QualitySummary::intervals(lower, upper, coverage)?
            }
            "stderr" => {
                t.expect("summary", &["dim", "stderr"])?;
                QualitySummary::scalars(t.rows.iter().map(|r| num(&r[1])).collect::<Result<_>>()?)?
            }
            other => return Err(malformed("summary", format!("unknown metric {other:?}"))),
        };
        let file = Self {
            manifest: t.require("manifest")?.to_string(),
            method: t.require("method")?.to_string(),
            summary,
        };
        if file.to_table() != *t {
            return Err(malformed(
                "summary",
                "derived columns disagree with the bounds",
            ));
        }
        Ok(file)
    }
}

fn unit_text(unit: &WorkUnit) -> String {
    match unit {
        WorkUnit::Subsample(j) => format!("subsample:{j}"),
        WorkUnit::Resample(k) => format!("resample:{k}"),
        WorkUnit::SubsampleResample {
            subsample,
            resample,
        } => format!("subsample:{subsample}:{resample}"),
    }
}

fn parse_unit(s: &str) -> Result<WorkUnit> {
    let parts: Vec<&str> = s.split(':').collect();
    Ok(match parts.as_slice() {
        ["subsample", j] => WorkUnit::Subsample(count(j)?),
        ["resample", k] => WorkUnit::Resample(count(k)?),
        ["subsample", j, k] => WorkUnit::SubsampleResample {
            subsample: count(j)?,
            resample: count(k)?,
        },
        _ => return Err(malformed("trajectory", format!("bad unit {s:?}"))),
    })
}

/// Partial outputs of a run, one row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub manifest: String,
    pub method: String,
    pub trajectory: Trajectory,
}

impl TrajectoryFile {
    pub fn to_table(&self) -> Result<Table> {
        let first = self
            .trajectory
            .steps()
            .first()
            .ok_or_else(|| malformed("trajectory", "no steps"))?;
        let d = first.summary.dim();
        let kind = first.summary.kind();
        let mut columns: Vec<String> = ["step", "unit", "elapsed_seconds", "mean"]
            .map(String::from)
            .to_vec();
        match kind {
            SummaryKind::IntervalSet => {
                columns.extend((0..d).map(|i| format!("lower_{i}")));
                columns.extend((0..d).map(|i| format!("upper_{i}")));
            }
            SummaryKind::ScalarPerDim => columns.extend((0..d).map(|i| format!("stderr_{i}"))),
        }
        let mut t = Table::new("trajectory", &[]);
        t.columns = columns;
        t.push_meta("manifest", &self.manifest);
        t.push_meta("method", &self.method);
        match kind {
            SummaryKind::IntervalSet => {
                t.push_meta("metric", "ci");
                t.push_meta("coverage", first.summary.coverage().unwrap());
            }
            SummaryKind::ScalarPerDim => t.push_meta("metric", "stderr"),
        }
        t.push_meta("dim", d);
        for (i, step) in self.trajectory.steps().iter().enumerate() {
            let mut row = vec![
                i.to_string(),
                unit_text(&step.unit),
                step.elapsed_seconds.to_string(),
                summary_mean(&step.summary).to_string(),
            ];
            row.extend(step.summary.flatten().iter().map(f64::to_string));
            t.rows.push(row);
        }
        Ok(t)
    }

    pub fn from_table(t: &Table) -> Result<Self> {
        t.expect("trajectory", &[])?;
        let d = count(t.require("dim")?)?;
        let metric = t.require("metric")?;
        let mut trajectory = Trajectory::new();
        for row in &t.rows {
            let values: Vec<f64> = row[4..].iter().map(|s| num(s)).collect::<Result<_>>()?;
            let summary = match metric {
                "ci" => {
                    if values.len() != 2 * d {
                        return Err(malformed("trajectory", "row width does not match dim"));
                    }
                    QualitySummary::intervals(
                        values[..d].to_vec(),
                        values[d..].to_vec(),
                        num(t.require("coverage")?)?,
                    )?
                }
                "stderr" => QualitySummary::scalars(values)?,
                other => return Err(malformed("trajectory", format!("unknown metric {other:?}"))),
            };
            trajectory.push(TrajectoryStep {
                elapsed_seconds: num(&row[2])?,
                summary,
                unit: parse_unit(&row[1])?,
            })?;
        }
        let file = Self {
            manifest: t.require("manifest")?.to_string(),
            method: t.require("method")?.to_string(),
            trajectory,
        };
        if file.to_table()? != *t {
            return Err(malformed(
                "trajectory",
                "derived columns disagree with the bounds",
            ));
        }
        Ok(file)
    }
}

const EXPERIMENT_COLUMNS: [&str; 6] = [
    "label",
    "method",
    "step",
    "elapsed_seconds",
    "relative_error",
    "realizations",
];
const FINAL_COLUMNS: [&str; 9] = [
    "label",
    "method",
    "realizations",
    "final_error_mean",
    "final_error_se",
    "mean_total_seconds",
    "mean_resamples",
    "failures",
    "final_errors",
];

/// Averaged error-versus-time trajectories, one row per (cell, step).
pub fn experiment_trajectories_table(report: &ExperimentReport, manifest: &str) -> Table {
    let mut t = Table::new("experiment-trajectories", &EXPERIMENT_COLUMNS);
    t.push_meta("manifest", manifest);
    t.push_meta("n", report.n);
    t.push_meta("realizations", report.realizations);
    for cell in &report.cells {
        for (i, step) in cell.trajectory.iter().enumerate() {
            t.rows.push(vec![
                cell.label.clone(),
                cell.method.name().to_string(),
                i.to_string(),
                step.elapsed_seconds.to_string(),
                step.relative_error.to_string(),
                step.realizations.to_string(),
            ]);
        }
    }
    t
}

/// One row per cell with its final relative error.
pub fn experiment_finals_table(report: &ExperimentReport, manifest: &str) -> Table {
    let mut t = Table::new("experiment-final", &FINAL_COLUMNS);
    t.push_meta("manifest", manifest);
    t.push_meta("n", report.n);
    t.push_meta("realizations", report.realizations);
    for cell in &report.cells {
        t.rows.push(final_row(cell));
    }
    t
}

fn final_row(cell: &CellReport) -> Vec<String> {
    let errors = if cell.final_errors.is_empty() {
        "NA".to_string()
    } else {
        cell.final_errors
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",")
    };
    vec![
        cell.label.clone(),
        cell.method.name().to_string(),
        cell.final_errors.len().to_string(),
        opt_num(cell.final_error_mean),
        opt_num(cell.final_error_se),
        opt_num(cell.mean_total_seconds),
        opt_num(cell.mean_resamples),
        cell.failures.len().to_string(),
        errors,
    ]
}

/// A row of the `(r, s)` grid table.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub r: usize,
    pub s: usize,
    pub relative_error: Option<f64>,
    pub relative_error_se: Option<f64>,
}

pub fn grid_table(cells: &[GridCell], manifest: &str, n: usize) -> Table {
    let mut t = Table::new("grid", &["r", "s", "relative_error", "relative_error_se"]);
    t.push_meta("manifest", manifest);
    t.push_meta("n", n);
    for c in cells {
        t.rows.push(vec![
            c.r.to_string(),
            c.s.to_string(),
            opt_num(c.relative_error),
            opt_num(c.relative_error_se),
        ]);
    }
    t
}

pub fn parse_grid(t: &Table) -> Result<Vec<GridCell>> {
    t.expect("grid", &["r", "s", "relative_error", "relative_error_se"])?;
    t.rows
        .iter()
        .map(|r| {
            Ok(GridCell {
                r: count(&r[0])?,
                s: count(&r[1])?,
                relative_error: parse_opt(&r[2])?,
                relative_error_se: parse_opt(&r[3])?,
            })
        })
        .collect()
}

/// Cached ground truth, keyed by the digest of everything it depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthFile {
    pub key: String,
    pub description: String,
    pub num_realizations: usize,
    pub n: usize,
    pub summary: QualitySummary,
}

impl TruthFile {
    pub fn to_table(&self) -> Table {
        let inner = SummaryFile {
            manifest: String::new(),
            method: String::new(),
            summary: self.summary.clone(),
        }
        .to_table();
        let mut t = Table::new("truth", &[]);
        t.columns = inner.columns;
        t.rows = inner.rows;
        t.push_meta("key", &self.key);
        t.push_meta("description", &self.description);
        t.push_meta("n", self.n);
        t.push_meta("realizations", self.num_realizations);
        t.meta.extend(
            inner
                .meta
                .into_iter()
                .filter(|(k, _)| k != "manifest" && k != "method"),
        );
        t
    }

    pub fn from_table(t: &Table) -> Result<Self> {
        t.expect("truth", &[])?;
        let mut inner = t.clone();
        inner.kind = "summary".into();
        inner.meta = vec![
            ("manifest".into(), String::new()),
            ("method".into(), String::new()),
        ];
        inner.meta.extend(t.meta.iter().skip(4).cloned());
        let summary = SummaryFile::from_table(&inner)?.summary;
        let file = Self {
            key: t.require("key")?.to_string(),
            description: t.require("description")?.to_string(),
            n: count(t.require("n")?)?,
            num_realizations: count(t.require("realizations")?)?,
            summary,
        };
        if file.to_table() != *t {
            return Err(malformed("truth", "layout not canonical"));
        }
        Ok(file)
    }
}

/// Hex SHA-256 of `bytes`.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(digest(&bytes))
}

/// Everything needed to reproduce a run. `arguments` is the full command line
/// with every default written out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub configuration: serde_json::Value,
    pub seed: u64,
    pub toolkit_version: String,
    pub input_digest: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<String>,
}

pub fn unix_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Table::parse(&text)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| malformed("json", e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| malformed("json", e.to_string()))
}

//! Metrics CSV: '#'-prefixed header with everything needed to relaunch the
//! run, one column-header row, then one record per (epoch, split).
//!
//! Trajectory-determined columns are byte-reproducible across reruns of
//! the same config; the two timing columns measure the machine and are
//! excluded from reproducibility comparisons (see [`comparable_body`]).

use std::fmt::Write as _;
use std::path::Path;

use super::ExpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Diverged { epoch: usize },
}

/// One row of experiment telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub run_id: String,
    pub seed: u64,
    pub epoch: usize,
    pub split: &'static str,
    pub loss: f64,
    /// Percent.
    pub accuracy: f64,
    /// Mean |pairwise cosine| per tracked layer; empty cells on train rows.
    pub r_means: Vec<Option<f64>>,
    pub dead_params: Option<usize>,
    /// Train-portion wall time for the epoch, seconds.
    pub wall_s: Option<f64>,
    /// Cumulative decomposition time since run start, seconds.
    pub svd_cum_s: Option<f64>,
}

/// In-memory form of one run's metrics file.
#[derive(Debug, Clone)]
pub struct MetricsFile {
    pub header: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub status: RunStatus,
}

pub fn column_names(tracked_layers: usize) -> Vec<String> {
    let mut cols = vec![
        "run_id".to_string(),
        "seed".to_string(),
        "epoch".to_string(),
        "split".to_string(),
        "loss".to_string(),
        "accuracy".to_string(),
    ];
    for i in 1..=tracked_layers {
        cols.push(format!("r_mean_l{i}"));
    }
    cols.push("dead_params".to_string());
    cols.push("wall_s".to_string());
    cols.push("svd_cum_s".to_string());
    cols
}

fn fmt_opt_f64(v: Option<f64>, precision: usize) -> String {
    v.map(|x| format!("{x:.precision$}")).unwrap_or_default()
}

pub fn render(
    header: &[(String, String)],
    tracked_layers: usize,
    records: &[MetricsRecord],
    status: RunStatus,
) -> String {
    let mut out = String::new();
    out.push_str("# orthograd-metrics v1\n");
    for (k, v) in header {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out.push_str(&column_names(tracked_layers).join(","));
    out.push('\n');
    for r in records {
        debug_assert_eq!(r.r_means.len(), tracked_layers);
        let mut cells: Vec<String> = vec![
            r.run_id.clone(),
            r.seed.to_string(),
            r.epoch.to_string(),
            r.split.to_string(),
            format!("{:.6}", r.loss),
            format!("{:.4}", r.accuracy),
        ];
        for rm in &r.r_means {
            cells.push(fmt_opt_f64(*rm, 6));
        }
        cells.push(r.dead_params.map(|d| d.to_string()).unwrap_or_default());
        cells.push(fmt_opt_f64(r.wall_s, 3));
        cells.push(fmt_opt_f64(r.svd_cum_s, 3));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    match status {
        RunStatus::Completed => out.push_str("# status: completed\n"),
        RunStatus::Diverged { epoch } => {
            let _ = writeln!(out, "# status: diverged epoch={epoch}");
        }
    }
    out
}

pub fn parse(text: &str) -> Result<MetricsFile, ExpError> {
    let mut header = Vec::new();
    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    let mut status = RunStatus::Completed;
    for line in text.lines() {
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some((k, v)) = comment.split_once(':') {
                let key = k.trim().to_string();
                let value = v.trim().to_string();
                if key == "status" {
                    if let Some(rest) = value.strip_prefix("diverged epoch=") {
                        let epoch = rest
                            .trim()
                            .parse()
                            .map_err(|_| ExpError::Parse(format!("bad status line '{line}'")))?;
                        status = RunStatus::Diverged { epoch };
                    }
                } else {
                    header.push((key, value));
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<String> = line.split(',').map(|s| s.to_string()).collect();
        match &columns {
            None => columns = Some(cells),
            Some(cols) => {
                if cells.len() != cols.len() {
                    return Err(ExpError::Parse(format!(
                        "row has {} cells, header has {}",
                        cells.len(),
                        cols.len()
                    )));
                }
                rows.push(cells);
            }
        }
    }
    let columns = columns.ok_or_else(|| ExpError::Parse("no column header row".into()))?;
    Ok(MetricsFile {
        header,
        columns,
        rows,
        status,
    })
}

pub fn read(path: &Path) -> Result<MetricsFile, ExpError> {
    parse(&std::fs::read_to_string(path)?)
}

impl MetricsFile {
    pub fn parse_str(text: &str) -> Result<MetricsFile, ExpError> {
        parse(text)
    }

    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Rows of one split with epoch and the named numeric column.
    pub fn split_series(&self, split: &str, column: &str) -> Vec<(usize, f64)> {
        let (Some(epoch_i), Some(split_i), Some(col_i)) = (
            self.column("epoch"),
            self.column("split"),
            self.column(column),
        ) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter(|r| r[split_i] == split)
            .filter_map(|r| {
                let epoch = r[epoch_i].parse().ok()?;
                let v = r[col_i].parse().ok()?;
                Some((epoch, v))
            })
            .collect()
    }
}

/// The reproducibility-comparable body: comment lines stripped, timing
/// columns removed, everything else byte-for-byte.
pub fn comparable_body(text: &str) -> Result<String, ExpError> {
    let timing = ["wall_s", "svd_cum_s"];
    let mut keep: Option<Vec<usize>> = None;
    let mut out = String::new();
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        match &keep {
            None => {
                let idx: Vec<usize> = cells
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| !timing.contains(c))
                    .map(|(i, _)| i)
                    .collect();
                out.push_str(
                    &idx.iter()
                        .map(|&i| cells[i])
                        .collect::<Vec<_>>()
                        .join(","),
                );
                out.push('\n');
                keep = Some(idx);
            }
            Some(idx) => {
                if cells.len() <= *idx.last().unwrap_or(&0) {
                    return Err(ExpError::Parse("short row in metrics body".into()));
                }
                out.push_str(
                    &idx.iter()
                        .map(|&i| cells[i])
                        .collect::<Vec<_>>()
                        .join(","),
                );
                out.push('\n');
            }
        }
    }
    Ok(out)
}

//! Fold a directory of per-run metrics files into a comparison table:
//! one row per configuration, mean ± standard error over completed seeds,
//! diverged runs counted separately.

use std::collections::BTreeMap;
use std::path::Path;

use super::metrics::{self, MetricsFile, RunStatus};
use super::runner::mean_stderr;
use super::{ExpError, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub config_label: String,
    pub runs: usize,
    pub diverged: usize,
    pub mean_loss: Option<f64>,
    pub stderr_loss: Option<f64>,
    pub mean_acc: Option<f64>,
    pub stderr_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("configuration        runs  diverged  test loss           test acc (%)\n");
        for r in &self.rows {
            let fmt = |m: Option<f64>, s: Option<f64>, digits: usize| match (m, s) {
                (Some(m), Some(s)) => format!("{m:.digits$} ± {s:.digits$}"),
                (Some(m), None) => format!("{m:.digits$} ±"),
                _ => "—".to_string(),
            };
            out.push_str(&format!(
                "{:<20} {:>4}  {:>8}  {:<19} {}\n",
                r.config_label,
                r.runs,
                r.diverged,
                fmt(r.mean_loss, r.stderr_loss, 4),
                fmt(r.mean_acc, r.stderr_acc, 2),
            ));
        }
        out
    }
}

struct ParsedRun {
    config: RunConfig,
    file: MetricsFile,
}

/// Summarise all `*.csv` run files in a directory.
pub fn summarise(dir: &Path) -> Result<Summary, ExpError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(ExpError::Config(format!(
            "no metrics files in {}",
            dir.display()
        )));
    }

    let mut parsed = Vec::new();
    for path in &paths {
        let file = metrics::read(path)?;
        let config_json = file
            .header_value("config")
            .ok_or_else(|| ExpError::Parse(format!("{}: missing config header", path.display())))?;
        let config = RunConfig::from_json(config_json)?;
        parsed.push(ParsedRun { config, file });
    }

    // Runs in one directory must share the protocol; only the optimiser,
    // transform and hyper-parameters may differ between rows.
    let reference = &parsed[0].config;
    for run in &parsed[1..] {
        let c = &run.config;
        if c.model != reference.model
            || c.dataset != reference.dataset
            || c.batch_size != reference.batch_size
            || c.epochs != reference.epochs
            || c.precision != reference.precision
        {
            return Err(ExpError::Config(
                "mixed experiment protocols in one directory (model/dataset/batch/epochs/precision differ)"
                    .into(),
            ));
        }
    }

    // Group by the full config with per-run fields (seeds, output dir)
    // normalised away; the label alone could collide across hyper sets.
    let mut groups: BTreeMap<String, Vec<&ParsedRun>> = BTreeMap::new();
    for run in &parsed {
        let mut key_config = run.config.clone();
        key_config.seeds = Vec::new();
        key_config.out_dir = std::path::PathBuf::new();
        let key = format!("{}|{}", run.config.config_label(), key_config.canonical_json());
        groups.entry(key).or_default().push(run);
    }

    let mut rows = Vec::new();
    let mut seen_labels: BTreeMap<String, usize> = BTreeMap::new();
    for (_key, runs) in groups {
        let base_label = runs[0].config.config_label();
        let n = seen_labels.entry(base_label.clone()).or_insert(0);
        *n += 1;
        let label = if *n == 1 {
            base_label
        } else {
            format!("{base_label}#{n}")
        };
        let mut losses = Vec::new();
        let mut accs = Vec::new();
        let mut diverged = 0usize;
        for run in &runs {
            match run.file.status {
                RunStatus::Diverged { .. } => diverged += 1,
                RunStatus::Completed => {
                    let loss_series = run.file.split_series("val", "loss");
                    let acc_series = run.file.split_series("val", "accuracy");
                    if let (Some((_, loss)), Some((_, acc))) =
                        (loss_series.last(), acc_series.last())
                    {
                        losses.push(*loss);
                        accs.push(*acc);
                    }
                }
            }
        }
        let (mean_loss, stderr_loss) = mean_stderr(&losses);
        let (mean_acc, stderr_acc) = mean_stderr(&accs);
        rows.push(SummaryRow {
            config_label: label,
            runs: runs.len(),
            diverged,
            mean_loss,
            stderr_loss,
            mean_acc,
            stderr_acc,
        });
    }
    Ok(Summary { rows })
}

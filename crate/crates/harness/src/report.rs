//! Baseline-vs-guided summaries of a `train` output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gae_core::metrics::mean;
use gae_core::train::Phase;

use crate::error::{HarnessError, Result};
use crate::run::{write_file, MetricsFile, Mode, METRICS_FILE};

pub const CLASS_TABLE: &str = "report_classes.csv";
pub const SUMMARY_TABLE: &str = "report_summary.csv";
pub const GAE_TABLE: &str = "report_gae.csv";
pub const TEXT_REPORT: &str = "report.txt";

/// Seed-averaged comparison. Baseline or guided figures are `None` when no
/// run of that mode exists.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub baseline_seeds: Vec<u64>,
    pub guided_seeds: Vec<u64>,
    pub num_classes: usize,
    pub head_classes: Vec<usize>,
    pub tail_classes: Vec<usize>,
    pub baseline: Option<Summary>,
    pub guided: Option<Summary>,
    /// `(epoch, mean GAE count)` over guided epochs.
    pub gae_series: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub per_class: Vec<f64>,
    pub accuracy: f64,
    pub head_recall: Option<f64>,
    pub tail_recall: Option<f64>,
}

impl Summary {
    fn from_runs(runs: &[MetricsFile]) -> Option<Self> {
        let first = runs.first()?;
        let c = first.final_eval.per_class_accuracy.len();
        let avg = |f: &dyn Fn(&MetricsFile) -> f64| mean(runs.iter().map(f)).unwrap_or(f64::NAN);
        let per_class: Vec<f64> = (0..c)
            .map(|i| avg(&|m| m.final_eval.per_class_accuracy[i]))
            .collect();
        let class_mean = |classes: &[usize]| mean(classes.iter().map(|&i| per_class[i]));
        Some(Self {
            accuracy: avg(&|m| m.final_eval.accuracy),
            head_recall: class_mean(&first.head_classes),
            tail_recall: class_mean(&first.tail_classes),
            per_class,
        })
    }
}

fn seed_dirs(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| HarnessError::io(dir, e))?;
        let name = entry.file_name();
        let Some(seed) = name
            .to_str()
            .and_then(|n| n.strip_prefix("seed-"))
            .and_then(|s| s.parse::<u64>().ok())
        else {
            continue;
        };
        if entry.path().is_dir() {
            out.push((seed, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

/// Read every `seed-*/{baseline,guided}/metrics.json` under `dir`.
pub fn collect_runs(dir: &Path) -> Result<(Vec<MetricsFile>, Vec<MetricsFile>)> {
    if !dir.is_dir() {
        return Err(HarnessError::MissingPath {
            field: "run directory".into(),
            path: dir.to_path_buf(),
        });
    }
    let (mut baseline, mut guided) = (Vec::new(), Vec::new());
    for (_, seed_dir) in seed_dirs(dir)? {
        for (mode, into) in [(Mode::Baseline, &mut baseline), (Mode::Guided, &mut guided)] {
            let path = seed_dir.join(mode.dir_name()).join(METRICS_FILE);
            if path.is_file() {
                into.push(MetricsFile::read(&path)?);
            }
        }
    }
    if baseline.is_empty() && guided.is_empty() {
        return Err(HarnessError::NoRuns {
            dir: dir.to_path_buf(),
        });
    }
    Ok((baseline, guided))
}

pub fn build_report(baseline: &[MetricsFile], guided: &[MetricsFile]) -> Result<Report> {
    let Some(first) = baseline.first().or(guided.first()) else {
        return Err(HarnessError::Config("no runs to report on".into()));
    };
    let num_classes = first.final_eval.per_class_accuracy.len();
    if let Some(m) = baseline
        .iter()
        .chain(guided)
        .find(|m| m.final_eval.per_class_accuracy.len() != num_classes)
    {
        return Err(HarnessError::Config(format!(
            "seed {} ({:?}) has {} classes, expected {num_classes}",
            m.seed,
            m.mode,
            m.final_eval.per_class_accuracy.len()
        )));
    }
    let gae_series = match guided.first() {
        None => Vec::new(),
        Some(g) => {
            let epochs: Vec<usize> = g
                .epochs
                .iter()
                .filter(|e| e.phase == Phase::Guided)
                .map(|e| e.epoch)
                .collect();
            let series: Vec<Vec<usize>> = guided.iter().map(MetricsFile::gae_series).collect();
            let len = series.iter().map(Vec::len).min().unwrap_or(0);
            (0..len)
                .map(|i| (epochs[i], mean(series.iter().map(|s| s[i] as f64)).unwrap_or(0.0)))
                .collect()
        }
    };
    Ok(Report {
        baseline_seeds: baseline.iter().map(|m| m.seed).collect(),
        guided_seeds: guided.iter().map(|m| m.seed).collect(),
        num_classes,
        head_classes: first.head_classes.clone(),
        tail_classes: first.tail_classes.clone(),
        baseline: Summary::from_runs(baseline),
        guided: Summary::from_runs(guided),
        gae_series,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn delta(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(b? - a?)
}

impl Report {
    pub fn is_comparison(&self) -> bool {
        self.baseline.is_some() && self.guided.is_some()
    }

    fn class_value(s: &Option<Summary>, class: usize) -> Option<f64> {
        s.as_ref().map(|s| s.per_class[class])
    }

    /// `(name, baseline, guided)` rows for the overall figures.
    fn summary_rows(&self) -> [(&'static str, Option<f64>, Option<f64>); 3] {
        let b = self.baseline.as_ref();
        let g = self.guided.as_ref();
        [
            ("accuracy", b.map(|s| s.accuracy), g.map(|s| s.accuracy)),
            ("head_recall", b.and_then(|s| s.head_recall), g.and_then(|s| s.head_recall)),
            ("tail_recall", b.and_then(|s| s.tail_recall), g.and_then(|s| s.tail_recall)),
        ]
    }

    pub fn class_csv(&self) -> String {
        let mut out = String::from("class,baseline,guided,delta\n");
        for c in 0..self.num_classes {
            let (b, g) = (Self::class_value(&self.baseline, c), Self::class_value(&self.guided, c));
            let _ = writeln!(out, "{c},{},{},{}", cell(b), cell(g), cell(delta(b, g)));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("metric,baseline,guided,delta\n");
        for (name, b, g) in self.summary_rows() {
            let _ = writeln!(out, "{name},{},{},{}", cell(b), cell(g), cell(delta(b, g)));
        }
        out
    }

    pub fn gae_csv(&self) -> String {
        let mut out = String::from("epoch,gae_count\n");
        for (epoch, count) in &self.gae_series {
            let _ = writeln!(out, "{epoch},{count}");
        }
        out
    }

    pub fn notice(&self) -> Option<&'static str> {
        match (&self.baseline, &self.guided) {
            (None, _) => Some("no baseline runs found; comparison columns are blank"),
            (_, None) => Some("no guided runs found; comparison columns and GAE series are blank"),
            _ => None,
        }
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        let seeds = |s: &[u64]| {
            s.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")
        };
        let _ = writeln!(out, "baseline seeds: [{}]", seeds(&self.baseline_seeds));
        let _ = writeln!(out, "guided seeds:   [{}]", seeds(&self.guided_seeds));
        let _ = writeln!(out, "head classes: {:?}", self.head_classes);
        let _ = writeln!(out, "tail classes: {:?}", self.tail_classes);
        if let Some(n) = self.notice() {
            let _ = writeln!(out, "note: {n}");
        }
        let pct = |v: Option<f64>| v.map(|v| format!("{:.2}", 100.0 * v)).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "\nper-class accuracy (%)");
        let _ = writeln!(out, "{:>6} {:>9} {:>9} {:>9}", "class", "baseline", "guided", "delta");
        for c in 0..self.num_classes {
            let (b, g) = (Self::class_value(&self.baseline, c), Self::class_value(&self.guided, c));
            let _ = writeln!(out, "{c:>6} {:>9} {:>9} {:>9}", pct(b), pct(g), pct(delta(b, g)));
        }
        let _ = writeln!(out);
        for (name, b, g) in self.summary_rows() {
            let _ = writeln!(out, "{name:>12} {:>9} {:>9} {:>9}", pct(b), pct(g), pct(delta(b, g)));
        }
        if !self.gae_series.is_empty() {
            let _ = writeln!(out, "\nGAE count per guided epoch (seed mean)");
            for (epoch, count) in &self.gae_series {
                let _ = writeln!(out, "{epoch:>6} {count:>10.1}");
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        write_file(&dir.join(CLASS_TABLE), self.class_csv().as_bytes())?;
        write_file(&dir.join(SUMMARY_TABLE), self.summary_csv().as_bytes())?;
        write_file(&dir.join(GAE_TABLE), self.gae_csv().as_bytes())?;
        write_file(&dir.join(TEXT_REPORT), self.text().as_bytes())
    }
}

/// Summarise `run_dir`, writing the tables to `out` (default: `run_dir`).
pub fn cmd_report(run_dir: &Path, out: Option<&Path>) -> Result<Report> {
    let (baseline, guided) = collect_runs(run_dir)?;
    let report = build_report(&baseline, &guided)?;
    report.write(out.unwrap_or(run_dir))?;
    Ok(report)
}

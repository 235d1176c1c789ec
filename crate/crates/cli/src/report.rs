//! Collects run directories into an aligned results table and log-log plot data.

use std::fs;
use std::path::{Path, PathBuf};

use stablesgd::Error;

use crate::run::{parse_seeds_csv, MeanStd, ResultRow};

/// A line of the rendered table.
#[derive(Debug, Clone, PartialEq)]
pub enum ReportLine {
    Complete { run: String, row: ResultRow },
    Incomplete { run: String, row: Option<ResultRow>, reason: String },
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub lines: Vec<ReportLine>,
    /// Rate tables found: (run, experiment kind, variable, points).
    pub rate_tables: Vec<(String, String, String, Vec<(f64, f64)>)>,
    pub plots: Vec<PathBuf>,
}

impl Report {
    pub fn is_empty(&self) -> bool {
        self.lines.is_empty() && self.rate_tables.is_empty()
    }

    pub fn render(&self) -> String {
        const HEAD: [&str; 7] = [
            "run",
            "alpha",
            "Train Acc.",
            "Test Acc.",
            "Pruning Ratio",
            "Train Acc. a.p.",
            "Test Acc. a.p.",
        ];
        let acc = |m: MeanStd| format!("{:.4} ± {:.4}", m.mean, m.std);
        let pct = |m: MeanStd| format!("{:.2} ± {:.2}", m.mean, m.std);
        let mut rows: Vec<Vec<String>> = vec![HEAD.iter().map(|s| s.to_string()).collect()];
        for line in &self.lines {
            let (run, row, marker) = match line {
                ReportLine::Complete { run, row } => (run, Some(row), None),
                ReportLine::Incomplete { run, row, reason } => (run, row.as_ref(), Some(reason)),
            };
            let mut cells = vec![run.clone()];
            match row {
                Some(r) if r.completed > 0 => cells.extend([
                    r.label.clone(),
                    acc(r.train_acc),
                    acc(r.test_acc),
                    pct(r.pruning_ratio),
                    acc(r.train_acc_ap),
                    acc(r.test_acc_ap),
                ]),
                Some(r) => cells.extend([r.label.clone(), "-".into(), "-".into(), "-".into(), "-".into(), "-".into()]),
                None => cells.extend(std::iter::repeat_n("-".to_string(), 6)),
            }
            if let Some(reason) = marker {
                cells.push(format!("[incomplete: {reason}]"));
            }
            rows.push(cells);
        }
        let mut widths = vec![0usize; HEAD.len()];
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        for (i, r) in rows.iter().enumerate() {
            let cells: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(j, c)| match widths.get(j) {
                    Some(&w) => format!("{c:<w$}", w = w),
                    None => c.clone(),
                })
                .collect();
            out.push_str(cells.join(" | ").trim_end());
            out.push('\n');
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
                out.push_str(&rule.join("-+-"));
                out.push('\n');
            }
        }
        for (run, kind, var, points) in &self.rate_tables {
            out.push_str(&format!("\n{run} ({kind}): {} points over {var}\n", points.len()));
        }
        out
    }
}

fn run_dirs(root: &Path) -> Vec<PathBuf> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join("manifest.txt").is_file() || dir.join("results.csv").is_file() {
            found.push(dir.clone());
        }
        if let Ok(entries) = fs::read_dir(&dir) {
            let mut subs: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n != "checkpoints"))
                .collect();
            subs.sort();
            stack.extend(subs.into_iter().rev());
        }
    }
    found
}

fn read_rate_table(path: &Path) -> Option<(String, Vec<(f64, f64)>)> {
    let text = fs::read_to_string(path).ok()?;
    let mut lines = text.lines();
    let header = lines.next()?;
    let var = header.split(',').next()?.to_string();
    if !header.ends_with(",iqr,slope") {
        return None;
    }
    let points = lines
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| {
            let mut f = l.split(',');
            Some((f.next()?.parse().ok()?, f.next()?.parse().ok()?))
        })
        .collect::<Option<Vec<_>>>()?;
    Some((var, points))
}

/// Scans `root` and its subdirectories for run outputs.
pub fn collect(root: &Path) -> Report {
    let mut report = Report::default();
    for dir in run_dirs(root) {
        let run = dir
            .strip_prefix(root)
            .ok()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(&dir)
            .display()
            .to_string();
        let mut tables = 0;
        let mut kinds: Vec<PathBuf> = fs::read_dir(&dir)
            .map(|e| e.filter_map(|e| e.ok().map(|e| e.path())).collect())
            .unwrap_or_default();
        kinds.sort();
        for path in kinds {
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            if path.extension().is_some_and(|e| e == "csv") && !["results", "seeds", "metrics"].contains(&stem) {
                if let Some((var, points)) = read_rate_table(&path) {
                    report.rate_tables.push((run.clone(), stem.to_string(), var, points));
                    tables += 1;
                }
            }
        }
        let results = fs::read_to_string(dir.join("results.csv")).ok();
        match results.as_deref().and_then(|t| t.lines().nth(1)).map(ResultRow::from_csv_line) {
            Some(Some(row)) => {
                let seeds = fs::read_to_string(dir.join("seeds.csv")).ok().and_then(|t| parse_seeds_csv(&t));
                let failed = seeds.as_ref().map_or(0, |s| s.iter().filter(|r| r.metrics.is_err()).count());
                if row.is_complete() {
                    report.lines.push(ReportLine::Complete { run, row });
                } else {
                    let reason = format!("{}/{} seeds completed, {failed} failed", row.completed, row.repeats);
                    report.lines.push(ReportLine::Incomplete { run, row: Some(row), reason });
                }
            }
            Some(None) => report.lines.push(ReportLine::Incomplete {
                run,
                row: None,
                reason: "unreadable results.csv".into(),
            }),
            None if tables == 0 => report.lines.push(ReportLine::Incomplete {
                run,
                row: None,
                reason: "no results".into(),
            }),
            None => {}
        }
    }
    report
}

/// Writes `plot-error-vs-n.tsv` and `plot-error-vs-eta.tsv` (series, ln x, ln y).
pub fn write_plots(root: &Path, report: &mut Report) -> stablesgd::Result<()> {
    for (var, file) in [("n", "plot-error-vs-n.tsv"), ("eta", "plot-error-vs-eta.tsv")] {
        let mut text = format!("series\tln_{var}\tln_value\n");
        let mut any = false;
        for (run, kind, v, points) in &report.rate_tables {
            if v != var {
                continue;
            }
            for &(x, y) in points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0) {
                text.push_str(&format!("{run}/{kind}\t{}\t{}\n", x.ln(), y.ln()));
                any = true;
            }
        }
        if any {
            let path = root.join(file);
            fs::write(&path, text).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            report.plots.push(path);
        }
    }
    Ok(())
}

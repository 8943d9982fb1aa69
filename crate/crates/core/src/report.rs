//! Tab-separated and plain-text suite reports.

use std::fmt::Write as _;
use std::path::Path;

use crate::catalog::VariableId;
use crate::error::{Error, Result};
use crate::runner::{AblationReport, SuiteReport};
use crate::stats::StatTestResult;

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"))
}

fn inputs_label(inputs: &[VariableId]) -> String {
    inputs
        .iter()
        .map(|v| v.code())
        .collect::<Vec<_>>()
        .join(",")
}

pub const SUITE_TSV_HEADER: &str =
    "id\tinputs\tk\taccuracy\tkappa\theld_out_accuracy\tsimilarity\tn_train\tn_validation\tn_test";

/// One row per experiment, ordered by id.
pub fn suite_tsv(report: &SuiteReport) -> String {
    let mut rows: Vec<_> = report.rows.iter().collect();
    rows.sort_by_key(|r| r.id);
    let mut out = String::from(SUITE_TSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{:.4}\t{}\t{:.4}\t{}\t{}\t{}\t{}",
            r.id,
            inputs_label(&r.inputs),
            r.inputs.len(),
            r.accuracy,
            opt(r.kappa),
            r.held_out_accuracy,
            opt(r.similarity),
            r.samples.train,
            r.samples.validation,
            r.samples.test
        )
        .unwrap();
    }
    out
}

fn test_line(t: &StatTestResult) -> String {
    format!(
        "statistic {:.4}, p = {:.4}{}",
        t.statistic,
        t.p_value,
        if t.exact { " (exact)" } else { "" }
    )
}

/// Human-readable table with one column per variable, followed by the group
/// statistics.
pub fn suite_summary(report: &SuiteReport) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{} suite (c_t = {}, seed = {})",
        report.target.suite_name(),
        report.c_t,
        report.seed
    )
    .unwrap();
    write!(out, "{:>4}", "#").unwrap();
    for v in VariableId::ALL {
        write!(out, " {:>4}", v.code()).unwrap();
    }
    writeln!(out, " {:>9} {:>7}", "accuracy", "kappa").unwrap();
    let mut rows: Vec<_> = report.rows.iter().collect();
    rows.sort_by_key(|r| r.id);
    for r in rows {
        write!(out, "{:>4}", r.id).unwrap();
        for v in VariableId::ALL {
            write!(out, " {:>4}", if r.inputs.contains(&v) { "x" } else { "" }).unwrap();
        }
        writeln!(
            out,
            " {:>9.3} {:>7}",
            r.accuracy,
            r.kappa.map_or("NA".into(), |k| format!("{k:.3}"))
        )
        .unwrap();
    }
    for f in &report.failures {
        writeln!(
            out,
            "#{} ({}) failed [{}]: {}",
            f.id,
            inputs_label(&f.inputs),
            f.category,
            f.message
        )
        .unwrap();
    }
    let s = &report.stats;
    if let Some(kw) = &s.kruskal_wallis {
        writeln!(out, "Kruskal-Wallis across k-VAR groups: {}", test_line(kw)).unwrap();
    }
    for p in &s.pairwise {
        writeln!(
            out,
            "Mann-Whitney U {}-VAR vs {}-VAR (Bonferroni): {}",
            p.group_a,
            p.group_b,
            test_line(&p.test)
        )
        .unwrap();
    }
    for g in &s.regressions {
        let name = if g.group == 0 {
            "all".to_string()
        } else {
            format!("{}-VAR", g.group)
        };
        writeln!(
            out,
            "accuracy ~ distance ({name}): slope {:.4}, intercept {:.4}, p = {:.4}, n = {}",
            g.fit.slope, g.fit.intercept, g.fit.p_value, g.fit.n
        )
        .unwrap();
    }
    out
}

pub fn ablation_tsv(report: &AblationReport) -> String {
    let mut out = String::from("experiment\tknockout\ttraining_years\twindows_per_cell\taccuracy\tkappa\theld_out_accuracy\n");
    for r in &report.rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.4}\t{}\t{:.4}",
            r.name,
            r.knockout.label(),
            r.training_years,
            r.windows_per_cell,
            r.accuracy,
            opt(r.kappa),
            r.held_out_accuracy
        )
        .unwrap();
    }
    out
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `report.tsv`, `summary.txt` and `report.json` into `dir`.
pub fn write_suite_report(report: &SuiteReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("report.tsv"), &suite_tsv(report))?;
    write_file(&dir.join("summary.txt"), &suite_summary(report))?;
    save_suite_json(report, dir.join("report.json"))
}

pub fn save_suite_json(report: &SuiteReport, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    write_file(path.as_ref(), &text)
}

pub fn load_suite_json(path: impl AsRef<Path>) -> Result<SuiteReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

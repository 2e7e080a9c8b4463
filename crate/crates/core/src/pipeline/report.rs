use super::{io_err, ComparisonReport, PipelineError};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Table,
    Csv,
    Structured,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "structured" | "json" => Ok(ReportFormat::Structured),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

/// Aligned comparison table, one row per variant.
pub fn format_table(report: &ComparisonReport) -> String {
    let header = ["variant", "total payment ($)", "curtailment (MW)", "uplift ($)", "day-ahead objective ($)"];
    let rows: Vec<[String; 5]> = report
        .outcomes
        .iter()
        .map(|o| {
            [
                o.variant.label().to_string(),
                format!("{:.2}", o.totals.total_payment),
                format!("{:.2}", o.totals.total_curtailment),
                format!("{:.2}", o.uplift_total),
                format!("{:.2}", o.dam_objective),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for r in &rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = width[i]) } else { format!("{c:>w$}", w = width[i]) })
            .collect();
        out.push_str(&parts.join("  "));
        out.push('\n');
    };
    line(header.to_vec(), &mut out);
    let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
    line(rule.iter().map(String::as_str).collect(), &mut out);
    for r in &rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, PipelineError> {
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn csv_file(path: PathBuf, header: &[String], rows: Vec<Vec<String>>) -> Result<PathBuf, PipelineError> {
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e.into()))?;
    w.write_record(header).map_err(|e| io_err(&path, e.into()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io_err(&path, e.into()))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(path)
}

/// Writes the report in `format` under `dir` and returns the files written.
pub fn emit_report(report: &ComparisonReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    match format {
        ReportFormat::Table => Ok(vec![write(dir.join("comparison.txt"), &format_table(report))?]),
        ReportFormat::Structured => {
            let text = serde_json::to_string_pretty(report).expect("serializable report");
            Ok(vec![write(dir.join("report.json"), &text)?])
        }
        ReportFormat::Csv => {
            let mut files = Vec::new();
            let labels: Vec<String> = report.outcomes.iter().map(|o| o.variant.label().to_string()).collect();

            let mut header = vec!["variant".to_string(), "total_payment".into(), "total_curtailment".into()];
            header.extend(["da_payment".to_string(), "rt_payment".into(), "uplift".into(), "frp_cost".into()]);
            header.extend(["residual".to_string(), "dam_objective".into()]);
            let rows = report
                .outcomes
                .iter()
                .map(|o| {
                    vec![
                        o.variant.label().to_string(),
                        format!("{:.6}", o.totals.total_payment),
                        format!("{:.6}", o.totals.total_curtailment),
                        format!("{:.6}", o.da_payment_total),
                        format!("{:.6}", o.rt_payment_total),
                        format!("{:.6}", o.uplift_total),
                        format!("{:.6}", o.frp_cost_total),
                        format!("{:.6}", o.residual_total),
                        format!("{:.6}", o.dam_objective),
                    ]
                })
                .collect();
            files.push(csv_file(dir.join("payments.csv"), &header, rows)?);

            let steps = report.outcomes.iter().map(|o| o.average_lmp.len()).max().unwrap_or(0);
            let mut header = vec!["subperiod".to_string()];
            header.extend(labels.iter().cloned());
            let rows = (0..steps)
                .map(|k| {
                    let mut r = vec![(k + 1).to_string()];
                    r.extend(report.outcomes.iter().map(|o| format!("{:.6}", o.average_lmp.get(k).copied().unwrap_or(f64::NAN))));
                    r
                })
                .collect();
            files.push(csv_file(dir.join("average_lmp.csv"), &header, rows)?);

            let header: Vec<String> = ["variant", "dg", "hour", "committed"].map(String::from).to_vec();
            let mut rows = Vec::new();
            for o in &report.outcomes {
                for (g, row) in o.commitment.iter().enumerate() {
                    for (h, &on) in row.iter().enumerate() {
                        rows.push(vec![
                            o.variant.label().to_string(),
                            report.dg_ids[g].clone(),
                            (h + 1).to_string(),
                            u8::from(on).to_string(),
                        ]);
                    }
                }
            }
            files.push(csv_file(dir.join("commitment.csv"), &header, rows)?);

            let header: Vec<String> = ["variant", "hour", "rho_up", "rho_down", "source"].map(String::from).to_vec();
            let mut rows = Vec::new();
            for o in &report.outcomes {
                for h in 0..o.requirements.hours() {
                    rows.push(vec![
                        o.variant.label().to_string(),
                        (h + 1).to_string(),
                        format!("{:.6}", o.requirements.rho_up[h]),
                        format!("{:.6}", o.requirements.rho_down[h]),
                        serde_json::to_value(o.requirements.source).expect("enum").as_str().unwrap_or("").to_string(),
                    ]);
                }
            }
            files.push(csv_file(dir.join("requirements.csv"), &header, rows)?);

            if !report.sweep.is_empty() {
                let header: Vec<String> = vec!["scenarios".into(), "proposed_total_payment".into()];
                let rows = report.sweep.iter().map(|(r, p)| vec![r.to_string(), format!("{p:.6}")]).collect();
                files.push(csv_file(dir.join("sweep.csv"), &header, rows)?);
            }
            Ok(files)
        }
    }
}

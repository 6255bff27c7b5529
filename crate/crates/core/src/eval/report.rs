use std::fmt::Write as _;
use std::path::Path;

use super::{summarize, ExperimentError, GroupAxis, ResultRecord};

const ROW_AXES: [GroupAxis; 4] = [GroupAxis::Pretext, GroupAxis::Source, GroupAxis::Fraction, GroupAxis::Shots];

/// Markdown summary: a pivot of mean ± std (n) with one column per target, then a flat table.
pub fn render_summary(records: &[ResultRecord]) -> String {
    let mut out = String::from("# Results\n\n");
    if records.is_empty() {
        out.push_str("No results yet.\n");
        return out;
    }
    let groups = summarize(records, &GroupAxis::CELL).expect("records are non-empty");
    let mut targets: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for g in &groups {
        let target = &g.key[2];
        if !targets.contains(target) {
            targets.push(target.clone());
        }
        let row = vec![g.key[0].clone(), g.key[1].clone(), g.key[3].clone(), g.key[4].clone()];
        if !rows.contains(&row) {
            rows.push(row);
        }
    }
    let _ = writeln!(out, "| pretext | source | fraction | shots | {} |", targets.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(ROW_AXES.len() + targets.len()));
    for row in &rows {
        let mut line = format!("| {} |", row.join(" | "));
        for t in &targets {
            let cell = groups.iter().find(|g| {
                g.key[0] == row[0] && g.key[1] == row[1] && &g.key[2] == t && g.key[3] == row[2] && g.key[4] == row[3]
            });
            match cell {
                Some(g) => {
                    let _ = write!(line, " {:.4} ± {:.4} ({}) |", g.mean, g.std, g.n);
                }
                None => line.push_str(" - |"),
            }
        }
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("\n## Groups\n\n| pretext | source | target | fraction | shots | mean | std | n | single seed |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for g in &groups {
        let _ = writeln!(
            out,
            "| {} | {:.4} | {:.4} | {} | {} |",
            g.key.join(" | "),
            g.mean,
            g.std,
            g.n,
            if g.single_seed { "yes" } else { "no" }
        );
    }
    out
}

pub fn write_summary(records: &[ResultRecord], path: &Path) -> Result<(), ExperimentError> {
    std::fs::write(path, render_summary(records)).map_err(|e| ExperimentError::io(path, e))
}

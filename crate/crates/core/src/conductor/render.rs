use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::faults::IssueKind;
use crate::stats::matrix::{Cell, DetectionMatrix};
use crate::stats::{ChangeClass, RciwStat};

/// Column order of detection tables: microbenchmarks, then endpoints.
pub const TABLE_TARGETS: [&str; 11] = ["M1", "M2", "M3", "M4", "M5", "M6", "M7", "E1", "E2", "E3", "E4"];

const ABSENT: &str = "-";

/// Whether `target` traverses the code path of `issue`.
pub fn is_capable(target: &str, issue: IssueKind) -> bool {
    use IssueKind::*;
    match target {
        "M1" | "M2" => matches!(issue, BasicAuth | RequestId),
        "M3" | "E2" => issue == RequestId,
        "M4" | "M5" | "M6" | "M7" | "E3" | "E4" => matches!(issue, CleanPath | RequestId),
        "E1" => matches!(issue, BasicAuth | RequestId),
        _ => false,
    }
}

pub fn symbol(class: ChangeClass) -> &'static str {
    match class {
        ChangeClass::NoChange => ".",
        ChangeClass::SmallRegression => "r",
        ChangeClass::RelevantRegression => "R",
        ChangeClass::SmallImprovement => "i",
        ChangeClass::RelevantImprovement => "I",
    }
}

fn cell_symbol(cell: Cell) -> &'static str {
    match cell {
        Cell::Classified(c) => symbol(c),
        Cell::Absent => ABSENT,
    }
}

/// Text table of one issue: severities as rows, M1..M7 then E1..E4 as
/// columns (only those present), capable targets starred.
pub fn render_detection_table(matrix: &DetectionMatrix, issue: IssueKind) -> String {
    let present = matrix.targets(issue);
    let micro: Vec<&str> = TABLE_TARGETS[..7].iter().copied().filter(|t| present.contains(*t)).collect();
    let app: Vec<&str> = TABLE_TARGETS[7..].iter().copied().filter(|t| present.contains(*t)).collect();

    let header = |t: &str| if is_capable(t, issue) { format!("{t}*") } else { t.to_string() };
    let width = 4;
    let mut out = String::new();
    let _ = writeln!(out, "Issue: {issue}");
    let mut line = format!("{:>8} ", "severity");
    let groups: Vec<&Vec<&str>> = [&micro, &app].into_iter().filter(|g| !g.is_empty()).collect();
    for (i, g) in groups.iter().enumerate() {
        if i > 0 {
            line.push_str(" |");
        }
        for t in g.iter() {
            let _ = write!(line, " {:>width$}", header(t));
        }
    }
    out.push_str(line.trim_end());
    out.push('\n');

    for s in matrix.severities(issue) {
        let mut line = format!("{s:>8} ");
        for (i, g) in groups.iter().enumerate() {
            if i > 0 {
                line.push_str(" |");
            }
            for t in g.iter() {
                let _ = write!(line, " {:>width$}", cell_symbol(matrix.get(issue, s, t)));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }

    out.push_str("Legend:\n");
    for c in ChangeClass::ALL {
        let _ = writeln!(out, "  {}  {}", symbol(c), c.description());
    }
    let _ = writeln!(out, "Targets marked * can detect this issue; {ABSENT} marks a missing result.");
    out
}

/// Distribution of RCIW values per target, for boxplots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RciwSummary {
    pub target: String,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn summarize_rciw<'a>(stats: impl IntoIterator<Item = &'a RciwStat>) -> Vec<RciwSummary> {
    let mut by_target: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in stats {
        by_target.entry(s.target.clone()).or_default().push(s.rciw);
    }
    by_target
        .into_iter()
        .map(|(target, mut xs)| {
            xs.sort_by(f64::total_cmp);
            let q = |p| crate::stats::quantile_sorted(&xs, p);
            RciwSummary {
                count: xs.len(),
                min: xs[0],
                q1: q(0.25),
                median: q(0.5),
                q3: q(0.75),
                max: xs[xs.len() - 1],
                target,
            }
        })
        .collect()
}

pub fn render_rciw_summary(rows: &[RciwSummary]) -> String {
    let mut out = format!("{:<26} {:>5} {:>9} {:>9} {:>9} {:>9} {:>9}\n", "target", "n", "min", "q1", "median", "q3", "max");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<26} {:>5} {:>8.2}% {:>8.2}% {:>8.2}% {:>8.2}% {:>8.2}%",
            r.target,
            r.count,
            r.min * 100.0,
            r.q1 * 100.0,
            r.median * 100.0,
            r.q3 * 100.0,
            r.max * 100.0
        );
    }
    out
}

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{ChangeClass, ChangeReport, StatsError};
use crate::faults::IssueKind;

/// State of one (issue, severity, target) cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "state", content = "class")]
pub enum Cell {
    /// No usable result (experiment failed or target not measured).
    Absent,
    Classified(ChangeClass),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub issue: IssueKind,
    pub severity: u32,
    pub target: String,
}

/// Classification per (issue, severity, target).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<MatrixEntry>", from = "Vec<MatrixEntry>")]
pub struct DetectionMatrix {
    cells: BTreeMap<CellKey, Cell>,
}

/// Flat serialized form of one matrix cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixEntry {
    #[serde(flatten)]
    pub key: CellKey,
    pub cell: Cell,
}

impl From<DetectionMatrix> for Vec<MatrixEntry> {
    fn from(m: DetectionMatrix) -> Self {
        m.cells.into_iter().map(|(key, cell)| MatrixEntry { key, cell }).collect()
    }
}

impl From<Vec<MatrixEntry>> for DetectionMatrix {
    fn from(entries: Vec<MatrixEntry>) -> Self {
        Self { cells: entries.into_iter().map(|e| (e.key, e.cell)).collect() }
    }
}

impl DetectionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&mut self, key: CellKey, cell: Cell) -> Result<(), StatsError> {
        if self.cells.contains_key(&key) {
            return Err(StatsError::DuplicateCell(format!("{}@{}:{}", key.issue, key.severity, key.target)));
        }
        self.cells.insert(key, cell);
        Ok(())
    }

    pub fn insert_report(&mut self, issue: IssueKind, severity: u32, report: &ChangeReport) -> Result<(), StatsError> {
        self.insert(
            CellKey { issue, severity, target: report.target.clone() },
            Cell::Classified(report.class),
        )
    }

    pub fn mark_absent(&mut self, issue: IssueKind, severity: u32, target: &str) -> Result<(), StatsError> {
        self.insert(CellKey { issue, severity, target: target.to_string() }, Cell::Absent)
    }

    /// Missing cells read as [`Cell::Absent`].
    pub fn get(&self, issue: IssueKind, severity: u32, target: &str) -> Cell {
        self.cells
            .get(&CellKey { issue, severity, target: target.to_string() })
            .copied()
            .unwrap_or(Cell::Absent)
    }

    pub fn class(&self, issue: IssueKind, severity: u32, target: &str) -> Option<ChangeClass> {
        match self.get(issue, severity, target) {
            Cell::Classified(c) => Some(c),
            Cell::Absent => None,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn issues(&self) -> BTreeSet<IssueKind> {
        self.cells.keys().map(|k| k.issue).collect()
    }

    pub fn severities(&self, issue: IssueKind) -> BTreeSet<u32> {
        self.cells.keys().filter(|k| k.issue == issue).map(|k| k.severity).collect()
    }

    pub fn targets(&self, issue: IssueKind) -> BTreeSet<String> {
        self.cells.keys().filter(|k| k.issue == issue).map(|k| k.target.clone()).collect()
    }

    pub fn cells(&self) -> impl Iterator<Item = (&CellKey, &Cell)> {
        self.cells.iter()
    }

    /// Merges `other` into `self`, rejecting overlapping cells.
    pub fn merge(&mut self, other: DetectionMatrix) -> Result<(), StatsError> {
        for (k, c) in other.cells {
            self.insert(k, c)?;
        }
        Ok(())
    }

    /// Lowest severity at which any of `targets` is classified as `class`.
    pub fn first_severity(&self, issue: IssueKind, targets: &[&str], class: ChangeClass) -> Option<u32> {
        self.severities(issue)
            .into_iter()
            .find(|&s| targets.iter().any(|t| self.class(issue, s, t) == Some(class)))
    }
}

pub fn build_detection_matrix<'a>(
    reports: impl IntoIterator<Item = (IssueKind, u32, &'a ChangeReport)>,
) -> Result<DetectionMatrix, StatsError> {
    let mut m = DetectionMatrix::new();
    for (issue, severity, report) in reports {
        m.insert_report(issue, severity, report)?;
    }
    Ok(m)
}

//! Assembling objective tables from runs and merging them for profiles.

use std::collections::BTreeMap;

use autows::eval::{ObjectiveKind, ObjectiveTable};

use crate::error::{Error, Result};
use crate::run::RunReport;

/// Objective of a report, or `None` for an incompatible or unscored run.
pub fn objective(report: &RunReport, kind: ObjectiveKind) -> Option<f64> {
    if !report.is_ok() {
        return None;
    }
    let v = match kind {
        ObjectiveKind::ClassificationError => report.accuracy_covered?,
        ObjectiveKind::OneMinusCoverage => report.coverage?,
    };
    Some((1.0 - v).max(0.0))
}

/// One row per method, one column per dataset. Methods and datasets keep
/// first-seen order; pairs without a report are n/a.
pub fn table_from_reports(reports: &[RunReport], kind: ObjectiveKind) -> Result<ObjectiveTable> {
    let mut methods: Vec<String> = Vec::new();
    let mut problems: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(usize, usize), Option<f64>> = BTreeMap::new();
    for r in reports {
        let m = position_or_push(&mut methods, r.method.id());
        let p = position_or_push(&mut problems, &r.dataset);
        if cells.insert((m, p), objective(r, kind)).is_some() {
            return Err(Error::Config(format!("two reports for {} on {}", r.method, r.dataset)));
        }
    }
    let values = fill(&methods, &problems, &cells);
    Ok(ObjectiveTable::new(methods, problems, values, kind)?)
}

/// Union of several tables of the same objective. A (method, problem) cell
/// given twice must agree.
pub fn merge_tables(tables: &[ObjectiveTable]) -> Result<ObjectiveTable> {
    let first = tables.first().ok_or_else(|| Error::Config("no tables to merge".into()))?;
    let kind = first.objective_kind;
    let mut methods: Vec<String> = Vec::new();
    let mut problems: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(usize, usize), Option<f64>> = BTreeMap::new();
    for t in tables {
        if t.objective_kind != kind {
            return Err(Error::Config("tables measure different objectives".into()));
        }
        for (mi, m) in t.methods.iter().enumerate() {
            let m_at = position_or_push(&mut methods, m);
            for (pi, p) in t.problems.iter().enumerate() {
                let p_at = position_or_push(&mut problems, p);
                let v = t.values[mi][pi];
                match cells.insert((m_at, p_at), v) {
                    Some(old) if old != v => {
                        return Err(Error::Config(format!("conflicting values for {m} on {p}")));
                    }
                    _ => {}
                }
            }
        }
    }
    let values = fill(&methods, &problems, &cells);
    Ok(ObjectiveTable::new(methods, problems, values, kind)?)
}

fn position_or_push(names: &mut Vec<String>, name: &str) -> usize {
    names.iter().position(|n| n == name).unwrap_or_else(|| {
        names.push(name.to_string());
        names.len() - 1
    })
}

fn fill(methods: &[String], problems: &[String], cells: &BTreeMap<(usize, usize), Option<f64>>) -> Vec<Vec<Option<f64>>> {
    (0..methods.len())
        .map(|m| (0..problems.len()).map(|p| cells.get(&(m, p)).copied().flatten()).collect())
        .collect()
}

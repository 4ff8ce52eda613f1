//! Performance profiles over method x problem objective tables.
//!
//! For every problem the best applicable method defines the reference
//! objective; each method's ratio to it is compared against a grid of
//! factors `tau`. `rho(tau)` is the fraction of problems whose ratio is at
//! most `tau`, over *all* problems, so inapplicable cells lower the curve.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor on the best objective when forming ratios.
pub const RATIO_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    ClassificationError,
    OneMinusCoverage,
}

/// Objective per (method, problem); `None` marks an inapplicable cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTable {
    pub methods: Vec<String>,
    pub problems: Vec<String>,
    /// `values[method][problem]`.
    pub values: Vec<Vec<Option<f64>>>,
    pub objective_kind: ObjectiveKind,
}

impl ObjectiveTable {
    pub fn new(
        methods: Vec<String>,
        problems: Vec<String>,
        values: Vec<Vec<Option<f64>>>,
        objective_kind: ObjectiveKind,
    ) -> Result<Self> {
        if values.len() != methods.len() || values.iter().any(|r| r.len() != problems.len()) {
            return Err(Error::ShapeMismatch(format!(
                "objective table must be {}x{}",
                methods.len(),
                problems.len()
            )));
        }
        if values.iter().flatten().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("objectives must be finite and non-negative".into()));
        }
        Ok(Self {
            methods,
            problems,
            values,
            objective_kind,
        })
    }

    pub fn get(&self, method: usize, problem: usize) -> Option<f64> {
        self.values[method][problem]
    }

    /// `method,<problem>...` header, one row per method, `n/a` for
    /// inapplicable cells. The first header cell carries the objective kind.
    pub fn to_csv(&self) -> String {
        let kind = match self.objective_kind {
            ObjectiveKind::ClassificationError => "classification_error",
            ObjectiveKind::OneMinusCoverage => "one_minus_coverage",
        };
        let mut s = format!("method[{kind}]");
        for p in &self.problems {
            let _ = write!(s, ",{p}");
        }
        s.push('\n');
        for (m, row) in self.methods.iter().zip(&self.values) {
            s.push_str(m);
            for v in row {
                match v {
                    Some(v) => {
                        let _ = write!(s, ",{v:?}");
                    }
                    None => s.push_str(",n/a"),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse {
            path: "<objective table>".into(),
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad(1, "empty table"))?;
        let mut cells = header.split(',');
        let first = cells.next().unwrap_or_default();
        let objective_kind = match first {
            "method[classification_error]" | "method" => ObjectiveKind::ClassificationError,
            "method[one_minus_coverage]" => ObjectiveKind::OneMinusCoverage,
            _ => return Err(bad(1, "header must start with `method`")),
        };
        let problems: Vec<String> = cells.map(str::to_string).collect();
        let mut methods = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut cells = line.split(',');
            methods.push(cells.next().unwrap_or_default().to_string());
            let row = cells
                .map(|c| match c.trim() {
                    "n/a" => Ok(None),
                    v => v.parse::<f64>().map(Some).map_err(|_| bad(i + 2, "bad objective")),
                })
                .collect::<Result<Vec<_>>>()?;
            values.push(row);
        }
        Self::new(methods, problems, values, objective_kind)
    }
}

/// `rho` against an increasing `tau` grid, plus the value at `tau = inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub method: String,
    pub taus: Vec<f64>,
    pub rho: Vec<f64>,
    /// Fraction of problems with any finite ratio, i.e. where the method
    /// is applicable.
    pub rho_at_infinity: f64,
}

/// 100 log-spaced factors in `[1, 32]`.
pub fn default_tau_grid() -> Vec<f64> {
    let n = 100;
    (0..n)
        .map(|i| {
            if i == n - 1 {
                32.0
            } else {
                (32f64.ln() * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Ratio of each cell to its problem's best applicable objective.
/// Inapplicable cells map to `+inf`.
pub fn ratio_matrix(table: &ObjectiveTable) -> Result<Vec<Vec<f64>>> {
    let (ns, np) = (table.methods.len(), table.problems.len());
    let mut out = vec![vec![f64::INFINITY; np]; ns];
    for p in 0..np {
        let best = (0..ns)
            .filter_map(|s| table.get(s, p))
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
            .ok_or_else(|| Error::NoApplicableMethod(table.problems[p].clone()))?;
        for s in 0..ns {
            if let Some(v) = table.get(s, p) {
                out[s][p] = if v == best { 1.0 } else { v / best.max(RATIO_EPS) };
            }
        }
    }
    Ok(out)
}

pub fn performance_profile(table: &ObjectiveTable, taus: &[f64]) -> Result<Vec<ProfileCurve>> {
    if taus.windows(2).any(|w| w[1] <= w[0]) || taus.iter().any(|&t| t < 1.0) {
        return Err(Error::InvalidArgument("tau grid must be increasing and >= 1".into()));
    }
    let ratios = ratio_matrix(table)?;
    let np = table.problems.len() as f64;
    Ok(table
        .methods
        .iter()
        .zip(&ratios)
        .map(|(m, r)| {
            let frac = |pred: &dyn Fn(f64) -> bool| r.iter().filter(|&&x| pred(x)).count() as f64 / np;
            ProfileCurve {
                method: m.clone(),
                taus: taus.to_vec(),
                rho: taus.iter().map(|&t| frac(&|x| x <= t)).collect(),
                rho_at_infinity: frac(&|x| x.is_finite()),
            }
        })
        .collect())
}

/// `method,tau,rho` rows; the sentinel point is written with `tau = inf`.
pub fn curves_to_csv(curves: &[ProfileCurve]) -> String {
    let mut s = String::from("method,tau,rho\n");
    for c in curves {
        for (t, r) in c.taus.iter().zip(&c.rho) {
            let _ = writeln!(s, "{},{t:?},{r:?}", c.method);
        }
        let _ = writeln!(s, "{},inf,{:?}", c.method, c.rho_at_infinity);
    }
    s
}

#[derive(Serialize)]
struct PlotSeries<'a> {
    method: &'a str,
    points: Vec<(f64, f64)>,
    rho_at_infinity: f64,
}

/// Plot data: one series of `(tau, rho)` pairs per method.
pub fn curves_to_plot_json(curves: &[ProfileCurve]) -> Result<String> {
    let series: Vec<PlotSeries<'_>> = curves
        .iter()
        .map(|c| PlotSeries {
            method: &c.method,
            points: c.taus.iter().copied().zip(c.rho.iter().copied()).collect(),
            rho_at_infinity: c.rho_at_infinity,
        })
        .collect();
    Ok(serde_json::to_string_pretty(&series)?)
}

pub fn write_curves(dir: &Path, stem: &str, curves: &[ProfileCurve]) -> Result<()> {
    let csv = dir.join(format!("{stem}.csv"));
    fs::write(&csv, curves_to_csv(curves)).map_err(|e| Error::io(&csv, e))?;
    let json = dir.join(format!("{stem}.json"));
    fs::write(&json, curves_to_plot_json(curves)? + "\n").map_err(|e| Error::io(&json, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(values: Vec<Vec<Option<f64>>>) -> ObjectiveTable {
        let ns = values.len();
        let np = values[0].len();
        ObjectiveTable::new(
            (0..ns).map(|i| format!("m{i}")).collect(),
            (0..np).map(|i| format!("p{i}")).collect(),
            values,
            ObjectiveKind::ClassificationError,
        )
        .unwrap()
    }

    #[test]
    fn single_method_is_always_best() {
        let t = table(vec![vec![Some(0.3), Some(0.0)]]);
        let c = performance_profile(&t, &[1.0, 2.0]).unwrap();
        assert_eq!(c[0].rho, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_best_uses_epsilon_floor() {
        let t = table(vec![vec![Some(0.0)], vec![Some(0.5)]]);
        let r = ratio_matrix(&t).unwrap();
        assert_eq!(r[0][0], 1.0);
        assert!((r[1][0] - 0.5 / RATIO_EPS).abs() < 1e-3);
        let c = performance_profile(&t, &default_tau_grid()).unwrap();
        assert_eq!(*c[1].rho.last().unwrap(), 0.0);
        assert_eq!(c[1].rho_at_infinity, 1.0);
    }

    #[test]
    fn inapplicable_cells_depress_rho() {
        let t = table(vec![vec![Some(0.1), None], vec![Some(0.2), Some(0.3)]]);
        let c = performance_profile(&t, &[1.0, 4.0]).unwrap();
        assert_eq!(c[0].rho, vec![0.5, 0.5]);
        assert_eq!(c[0].rho_at_infinity, 0.5);
        assert_eq!(c[1].rho, vec![0.5, 1.0]);
    }

    #[test]
    fn problem_without_methods_is_an_error() {
        let t = table(vec![vec![None], vec![None]]);
        assert!(matches!(ratio_matrix(&t), Err(Error::NoApplicableMethod(_))));
    }

    #[test]
    fn tau_grid_shape() {
        let g = default_tau_grid();
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[99], 32.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn csv_round_trip() {
        let t = table(vec![vec![Some(0.25), None], vec![Some(0.5), Some(0.125)]]);
        assert_eq!(ObjectiveTable::from_csv(&t.to_csv()).unwrap(), t);
    }
}

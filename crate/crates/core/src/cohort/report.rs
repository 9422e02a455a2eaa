use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CohortError;
use crate::morphometry::FEATURE_NAMES;
use crate::stats::{AssociationReport, AssociationResult, RegressionResult, TestKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(format!("unknown format {s:?} (expected csv or json)")),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

/// Four-decimal rendering used by every CSV report; NaN becomes an empty cell.
pub fn fmt4(v: f64) -> String {
    if v.is_nan() {
        return String::new();
    }
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_full(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CohortError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CohortError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CohortError::io(path, e))
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CohortError> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, CohortError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner()
        .map_err(|e| CohortError::Validation(e.to_string()))
}

fn feature_rank(name: &str) -> usize {
    FEATURE_NAMES
        .iter()
        .position(|f| *f == name)
        .unwrap_or(FEATURE_NAMES.len())
}

/// Sorts by feature (table order) then variable name.
pub fn canonical_order(results: &mut [AssociationResult]) {
    results.sort_by(|a, b| {
        (feature_rank(&a.phenotype), &a.phenotype, &a.variable).cmp(&(
            feature_rank(&b.phenotype),
            &b.phenotype,
            &b.variable,
        ))
    });
}

pub const ASSOCIATION_COLUMNS: [&str; 11] = [
    "phenotype",
    "variable",
    "test",
    "groups",
    "group_sizes",
    "n_missing",
    "statistic",
    "p (D)",
    "p (eps2)",
    "stars",
    "flags",
];

fn association_csv(results: &[AssociationResult]) -> Result<Vec<u8>, CohortError> {
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            // table cells read "p (effect)"
            let cell = format!("{} ({})", fmt4(r.p_value), fmt4(r.effect_size));
            let (pd, pe) = match r.test {
                TestKind::Ks => (cell, String::new()),
                TestKind::Kw => (String::new(), cell),
                TestKind::None => (String::new(), String::new()),
            };
            let flags: Vec<String> = r
                .flags
                .iter()
                .map(|f| serde_json::to_value(f).unwrap().as_str().unwrap().to_string())
                .collect();
            vec![
                r.phenotype.clone(),
                r.variable.clone(),
                r.test.as_str().to_string(),
                r.groups.join(";"),
                r.group_sizes
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(";"),
                r.n_missing.to_string(),
                fmt4(r.statistic),
                pd,
                pe,
                r.stars.to_string(),
                flags.join(";"),
            ]
        })
        .collect();
    let header: Vec<String> = ASSOCIATION_COLUMNS.iter().map(|s| s.to_string()).collect();
    csv_bytes(&header, &rows)
}

/// Writes association results in canonical order. CSV rounds to four
/// decimals; JSON keeps full precision and includes the exclusion report.
pub fn write_association_report(
    report: &AssociationReport,
    format: ReportFormat,
    path: &Path,
) -> Result<(), CohortError> {
    if report.results.is_empty() {
        return Err(CohortError::EmptyResults);
    }
    let mut sorted = report.clone();
    canonical_order(&mut sorted.results);
    let bytes = match format {
        ReportFormat::Csv => association_csv(&sorted.results)?,
        ReportFormat::Json => to_json_bytes(&sorted)?,
    };
    write_bytes(path, &bytes)
}

/// Column layout `phenotype, R2, coef (<term>), p (<term>), ..., n, converged`.
fn regression_csv(rows: &[(String, RegressionResult)]) -> Result<Vec<u8>, CohortError> {
    let mut terms: Vec<String> = Vec::new();
    for (_, r) in rows {
        for t in &r.terms {
            if !terms.contains(&t.name) {
                terms.push(t.name.clone());
            }
        }
    }
    let mut header = vec!["phenotype".to_string(), "R2".to_string()];
    for t in &terms {
        header.push(format!("coef ({t})"));
        header.push(format!("p ({t})"));
    }
    header.push("n".into());
    header.push("converged".into());
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(label, r)| {
            let mut row = vec![label.clone(), r.r_squared.map(fmt4).unwrap_or_default()];
            for name in &terms {
                match r.term(name) {
                    Some(t) => {
                        row.push(fmt4(t.coef));
                        row.push(fmt4(t.p_value));
                    }
                    None => {
                        row.push(String::new());
                        row.push(String::new());
                    }
                }
            }
            row.push(r.n.to_string());
            row.push(r.converged.to_string());
            row
        })
        .collect();
    csv_bytes(&header, &body)
}

/// Writes one regression per row, labelled by the phenotype that entered the model.
pub fn write_regression_report(
    rows: &[(String, RegressionResult)],
    format: ReportFormat,
    path: &Path,
) -> Result<(), CohortError> {
    if rows.is_empty() {
        return Err(CohortError::EmptyResults);
    }
    let mut sorted = rows.to_vec();
    sorted.sort_by(|a, b| (feature_rank(&a.0), &a.0).cmp(&(feature_rank(&b.0), &b.0)));
    let bytes = match format {
        ReportFormat::Csv => regression_csv(&sorted)?,
        ReportFormat::Json => {
            let entries: Vec<_> = sorted
                .iter()
                .map(|(p, r)| serde_json::json!({ "phenotype": p, "result": r }))
                .collect();
            to_json_bytes(&entries)?
        }
    };
    write_bytes(path, &bytes)
}

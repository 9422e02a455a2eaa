use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::{csv_bytes, fmt_full, write_bytes};
use super::CohortError;
use crate::morphometry::{CaseFeatureVector, MorphometryRecord, ShapeParams, FEATURE_NAMES};

/// Length unit of morphometry outputs; recorded as `# unit=...` on line one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Px,
    Um,
}

impl Unit {
    /// Pixels when no physical resolution was supplied.
    pub fn for_resolution(resolution: Option<f64>) -> Self {
        match resolution {
            Some(_) => Unit::Um,
            None => Unit::Px,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Px => "px",
            Unit::Um => "um",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "px" => Some(Unit::Px),
            "um" => Some(Unit::Um),
            _ => None,
        }
    }
}

pub const GLOMERULUS_COLUMNS: [&str; 16] = [
    "case_id",
    "glomerulus_id",
    "status",
    "AreaBow",
    "PerimBow",
    "MajorBow",
    "MinorBow",
    "CirBow",
    "EccBow",
    "AreaTuft",
    "PerimTuft",
    "MajorTuft",
    "MinorTuft",
    "CirTuft",
    "EccTuft",
    "Ratio",
];

fn shape_cells(s: Option<&ShapeParams>) -> Vec<String> {
    match s {
        Some(s) => [s.area, s.perimeter, s.major, s.minor, s.circularity, s.eccentricity]
            .iter()
            .map(|&v| fmt_full(v))
            .collect(),
        None => vec![String::new(); 6],
    }
}

fn with_unit(unit: Unit, mut body: Vec<u8>) -> Vec<u8> {
    let mut out = format!("# unit={}\n", unit.as_str()).into_bytes();
    out.append(&mut body);
    out
}

/// One row per glomerulus with raw parameters and intermediates (a, b, P).
pub fn write_glomerulus_table(
    path: &Path,
    cases: &[(String, Vec<MorphometryRecord>)],
    unit: Unit,
) -> Result<(), CohortError> {
    let rows: Vec<Vec<String>> = cases
        .iter()
        .flat_map(|(case, recs)| {
            recs.iter().map(move |r| {
                let mut row = vec![case.clone(), r.glomerulus_id.clone(), r.status().to_string()];
                row.extend(shape_cells(r.bow.as_ref()));
                row.extend(shape_cells(r.tuft.as_ref()));
                row.push(r.ratio().map(fmt_full).unwrap_or_default());
                row
            })
        })
        .collect();
    if rows.is_empty() {
        return Err(CohortError::EmptyResults);
    }
    let header: Vec<String> = GLOMERULUS_COLUMNS.iter().map(|s| s.to_string()).collect();
    write_bytes(path, &with_unit(unit, csv_bytes(&header, &rows)?))
}

/// One row per case: `case_id, n_glomeruli` and the 14 features at full precision.
pub fn write_case_features(
    path: &Path,
    cases: &[CaseFeatureVector],
    unit: Unit,
) -> Result<(), CohortError> {
    if cases.is_empty() {
        return Err(CohortError::EmptyResults);
    }
    let mut header = vec!["case_id".to_string(), "n_glomeruli".to_string()];
    header.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    let rows: Vec<Vec<String>> = cases
        .iter()
        .map(|c| {
            let mut row = vec![c.case_id.clone(), c.n_glomeruli.to_string()];
            row.extend(c.values.iter().map(|&v| fmt_full(v)));
            row
        })
        .collect();
    write_bytes(path, &with_unit(unit, csv_bytes(&header, &rows)?))
}

/// Reads a case-feature table; rows are returned sorted by case id.
pub fn read_case_features(path: &Path) -> Result<(Vec<CaseFeatureVector>, Unit), CohortError> {
    let text = std::fs::read_to_string(path).map_err(|e| CohortError::io(path, e))?;
    parse_case_features(&text)
}

pub fn parse_case_features(text: &str) -> Result<(Vec<CaseFeatureVector>, Unit), CohortError> {
    let (unit, body) = match text.strip_prefix("# unit=") {
        Some(rest) => {
            let (u, body) = rest.split_once('\n').unwrap_or((rest, ""));
            let unit = Unit::parse(u.trim())
                .ok_or_else(|| CohortError::Validation(format!("unknown unit {:?}", u.trim())))?;
            (unit, body)
        }
        None => (Unit::Px, text),
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CohortError::MissingHeader(name.to_string()))
    };
    let id_col = col("case_id")?;
    let n_col = headers.iter().position(|h| h == "n_glomeruli");
    let feat_cols: Vec<usize> = FEATURE_NAMES.iter().map(|f| col(f)).collect::<Result<_, _>>()?;

    let mut cases = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let mut values = [0.0; 14];
        for (k, &c) in feat_cols.iter().enumerate() {
            let cell = row.get(c).unwrap_or("");
            values[k] = match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    return Err(CohortError::UnparsableNumeric {
                        row: line,
                        column: FEATURE_NAMES[k].to_string(),
                        value: cell.to_string(),
                    })
                }
            };
        }
        let n_glomeruli = match n_col {
            Some(c) => row.get(c).unwrap_or("").parse().map_err(|_| {
                CohortError::UnparsableNumeric {
                    row: line,
                    column: "n_glomeruli".into(),
                    value: row.get(c).unwrap_or("").to_string(),
                }
            })?,
            None => 1,
        };
        cases.push(CaseFeatureVector {
            case_id: row.get(id_col).unwrap_or("").to_string(),
            values,
            n_glomeruli,
        });
    }
    cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    if let Some(w) = cases.windows(2).find(|w| w[0].case_id == w[1].case_id) {
        return Err(CohortError::DuplicateId(w[0].case_id.clone()));
    }
    Ok((cases, unit))
}

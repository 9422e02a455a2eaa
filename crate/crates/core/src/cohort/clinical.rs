use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CohortError;

/// How a clinical variable maps raw values to groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Categorical,
    Thresholded,
}

/// Group that receives a value lying exactly on a threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Half-open `[low, high)` bins: the threshold starts the upper group.
    #[default]
    Upper,
    /// `(low, high]` bins: the threshold closes the lower group (e.g. `≤43`).
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    /// Group labels, ascending for thresholded variables.
    pub groups: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub boundary: Boundary,
    /// Alternative spellings mapped onto group labels.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aliases: BTreeMap<String, String>,
}

impl VariableSpec {
    fn validate(&self) -> Result<(), CohortError> {
        let bad = |msg: String| Err(CohortError::InvalidSpec(format!("{}: {msg}", self.name)));
        if self.groups.len() < 2 {
            return bad("needs at least two groups".into());
        }
        let unique: BTreeSet<_> = self.groups.iter().collect();
        if unique.len() != self.groups.len() {
            return bad("duplicate group labels".into());
        }
        match self.kind {
            VariableKind::Thresholded => {
                if self.thresholds.len() + 1 != self.groups.len() {
                    return bad(format!(
                        "{} thresholds for {} groups",
                        self.thresholds.len(),
                        self.groups.len()
                    ));
                }
                if self.thresholds.windows(2).any(|w| !(w[0] < w[1]))
                    || self.thresholds.iter().any(|t| !t.is_finite())
                {
                    return bad("thresholds must be finite and strictly increasing".into());
                }
            }
            VariableKind::Categorical => {
                if !self.thresholds.is_empty() {
                    return bad("categorical variables take no thresholds".into());
                }
            }
        }
        if let Some((a, g)) = self.aliases.iter().find(|(_, g)| !self.groups.contains(g)) {
            return bad(format!("alias {a:?} points at unknown group {g:?}"));
        }
        Ok(())
    }

    fn match_label(&self, raw: &str) -> Option<&str> {
        let raw = raw.trim();
        if let Some(g) = self.groups.iter().find(|g| g.as_str() == raw) {
            return Some(g);
        }
        if let Some(g) = self.aliases.get(raw) {
            return Some(g);
        }
        let lower = raw.to_lowercase();
        self.groups
            .iter()
            .find(|g| g.to_lowercase() == lower)
            .map(String::as_str)
            .or_else(|| {
                self.aliases
                    .iter()
                    .find(|(a, _)| a.to_lowercase() == lower)
                    .map(|(_, g)| g.as_str())
            })
    }

    fn bin_numeric(&self, v: f64) -> &str {
        let idx = match self.boundary {
            Boundary::Upper => self.thresholds.iter().filter(|&&t| v >= t).count(),
            Boundary::Lower => self.thresholds.iter().filter(|&&t| v > t).count(),
        };
        &self.groups[idx]
    }
}

/// Grouping rules for every clinical variable of a cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    #[serde(default)]
    pub name: String,
    pub variables: Vec<VariableSpec>,
}

impl BinningSpec {
    pub fn from_json(text: &str) -> Result<Self, CohortError> {
        let spec: BinningSpec =
            serde_json::from_str(text).map_err(|e| CohortError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, CohortError> {
        let text = std::fs::read_to_string(path).map_err(|e| CohortError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Variable groupings of the XJ-Light cohort tables.
    pub fn xj_light() -> Self {
        Self::from_json(include_str!("../../data/xj_light.json")).expect("bundled spec is valid")
    }

    /// Variable groupings of the KPMP cohort tables.
    pub fn kpmp() -> Self {
        Self::from_json(include_str!("../../data/kpmp.json")).expect("bundled spec is valid")
    }

    /// Looks up a bundled spec by name (`xj-light` or `kpmp`).
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "xj-light" | "xj_light" => Some(Self::xj_light()),
            "kpmp" => Some(Self::kpmp()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        let mut names = BTreeSet::new();
        for v in &self.variables {
            if !names.insert(v.name.as_str()) {
                return Err(CohortError::InvalidSpec(format!(
                    "variable {} declared twice",
                    v.name
                )));
            }
            v.validate()?;
        }
        Ok(())
    }

    pub fn variable(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClinicalValue {
    Numeric(f64),
    Categorical(String),
    Missing,
}

impl ClinicalValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, ClinicalValue::Missing)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ClinicalValue::Numeric(v) => Some(*v),
            ClinicalValue::Categorical(s) => s.trim().parse().ok(),
            ClinicalValue::Missing => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalRecord {
    pub case_id: String,
    pub values: BTreeMap<String, ClinicalValue>,
}

impl ClinicalRecord {
    pub fn get(&self, variable: &str) -> &ClinicalValue {
        self.values.get(variable).unwrap_or(&ClinicalValue::Missing)
    }
}

/// Assigns a value to its group label; `Ok(None)` for missing values.
///
/// Thresholded variables also accept a value that already spells one of
/// their group labels.
pub fn bin_variable(
    value: &ClinicalValue,
    variable: &str,
    spec: &BinningSpec,
) -> Result<Option<String>, CohortError> {
    let var = spec
        .variable(variable)
        .ok_or_else(|| CohortError::UnknownVariable(variable.to_string()))?;
    let out_of_domain = |raw: String| CohortError::OutOfDomain {
        variable: variable.to_string(),
        value: raw,
    };
    match (var.kind, value) {
        (_, ClinicalValue::Missing) => Ok(None),
        (VariableKind::Thresholded, ClinicalValue::Numeric(v)) => {
            Ok(Some(var.bin_numeric(*v).to_string()))
        }
        (VariableKind::Thresholded, ClinicalValue::Categorical(s)) => {
            if let Some(g) = var.match_label(s) {
                return Ok(Some(g.to_string()));
            }
            match s.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(var.bin_numeric(v).to_string())),
                _ => Err(out_of_domain(s.clone())),
            }
        }
        (VariableKind::Categorical, ClinicalValue::Categorical(s)) => var
            .match_label(s)
            .map(|g| Some(g.to_string()))
            .ok_or_else(|| out_of_domain(s.clone())),
        (VariableKind::Categorical, ClinicalValue::Numeric(v)) => var
            .match_label(&format_number(*v))
            .map(|g| Some(g.to_string()))
            .ok_or_else(|| out_of_domain(v.to_string())),
    }
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        v.to_string()
    }
}

/// Records plus the non-fatal findings of [`load_clinical`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalTable {
    pub records: Vec<ClinicalRecord>,
    /// Columns absent from the binning spec; kept as raw values.
    pub unknown_columns: Vec<String>,
}

/// Reads a clinical CSV with a `case_id` column.
///
/// Cells of thresholded variables must be numeric (or spell a group label);
/// empty cells and `NA` become missing. Records come back sorted by case id.
pub fn load_clinical(path: &Path, spec: &BinningSpec) -> Result<ClinicalTable, CohortError> {
    let file = std::fs::File::open(path).map_err(|e| CohortError::io(path, e))?;
    read_clinical(file, spec)
}

pub fn read_clinical<R: std::io::Read>(
    reader: R,
    spec: &BinningSpec,
) -> Result<ClinicalTable, CohortError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = headers
        .iter()
        .position(|h| h == "case_id")
        .ok_or_else(|| CohortError::MissingHeader("case_id".into()))?;
    let unknown_columns: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, h)| i != id_col && spec.variable(h).is_none())
        .map(|(_, h)| h.to_string())
        .collect();

    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (row_idx, row) in rdr.records().enumerate() {
        let row = row?;
        let line = row_idx + 2;
        let case_id = row.get(id_col).unwrap_or("").to_string();
        if case_id.is_empty() {
            return Err(CohortError::Validation(format!("row {line}: empty case_id")));
        }
        if !seen.insert(case_id.clone()) {
            return Err(CohortError::DuplicateId(case_id));
        }
        let mut values = BTreeMap::new();
        for (i, h) in headers.iter().enumerate() {
            if i == id_col {
                continue;
            }
            let cell = row.get(i).unwrap_or("");
            let value = if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                ClinicalValue::Missing
            } else {
                match spec.variable(h).map(|v| v.kind) {
                    Some(VariableKind::Thresholded) => match cell.parse::<f64>() {
                        Ok(v) if v.is_finite() => ClinicalValue::Numeric(v),
                        _ if spec.variable(h).and_then(|v| v.match_label(cell)).is_some() => {
                            ClinicalValue::Categorical(cell.to_string())
                        }
                        _ => {
                            return Err(CohortError::UnparsableNumeric {
                                row: line,
                                column: h.to_string(),
                                value: cell.to_string(),
                            })
                        }
                    },
                    Some(VariableKind::Categorical) => ClinicalValue::Categorical(cell.to_string()),
                    None => match cell.parse::<f64>() {
                        Ok(v) if v.is_finite() => ClinicalValue::Numeric(v),
                        _ => ClinicalValue::Categorical(cell.to_string()),
                    },
                }
            };
            values.insert(h.to_string(), value);
        }
        records.push(ClinicalRecord { case_id, values });
    }
    records.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Ok(ClinicalTable {
        records,
        unknown_columns,
    })
}

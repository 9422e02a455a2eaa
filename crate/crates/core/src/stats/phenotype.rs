use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{logistic_regression_mv, ols_regression, Design, LogisticOptions, RegressionResult};
use crate::cohort::{bin_variable, BinningSpec, ClinicalRecord, CohortError, VariableKind};
use crate::morphometry::{CaseFeatureVector, FEATURE_NAMES};

/// A cohort regression plus the cases it could not use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRegression {
    pub result: RegressionResult,
    /// Joined cases dropped for a missing outcome or covariate value.
    pub n_missing: usize,
    /// Case ids present in only one of the two inputs.
    pub unmatched: Vec<String>,
}

enum Column {
    Feature(usize),
    Numeric(String),
    Levels(String, Vec<String>),
}

fn resolve(name: &str, spec: &BinningSpec) -> Result<Column, CohortError> {
    if let Some(i) = FEATURE_NAMES.iter().position(|f| *f == name) {
        return Ok(Column::Feature(i));
    }
    let var = spec
        .variable(name)
        .ok_or_else(|| CohortError::UnknownVariable(name.to_string()))?;
    Ok(match var.kind {
        VariableKind::Thresholded => Column::Numeric(var.name.clone()),
        VariableKind::Categorical => Column::Levels(var.name.clone(), var.groups.clone()),
    })
}

enum Cell {
    Value(f64),
    Level(String),
}

fn cell(
    col: &Column,
    f: &CaseFeatureVector,
    c: &ClinicalRecord,
    spec: &BinningSpec,
) -> Result<Option<Cell>, CohortError> {
    Ok(match col {
        Column::Feature(i) => Some(Cell::Value(f.values[*i])),
        Column::Numeric(name) => {
            let v = c.get(name);
            if v.is_missing() {
                None
            } else {
                let x = v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
                    CohortError::Validation(format!(
                        "case {}: {name} needs a numeric value for regression",
                        c.case_id
                    ))
                })?;
                Some(Cell::Value(x))
            }
        }
        Column::Levels(name, _) => bin_variable(c.get(name), name, spec)?.map(Cell::Level),
    })
}

/// Regresses one outcome on a list of covariates over the joined cohort.
///
/// Names resolve to a case-level feature or a clinical variable of `spec`.
/// A feature outcome gives a linear model; a two-group clinical outcome a
/// logistic model for membership of the second group. Feature and
/// thresholded covariates enter as raw values. Categorical covariates are
/// coded against their first observed group: a single indicator named after
/// the variable when two groups are observed, otherwise one
/// `variable[group]` indicator per further group. Cases missing any of the
/// involved values are dropped.
pub fn regress_cohort(
    features: &[CaseFeatureVector],
    clinical: &[ClinicalRecord],
    spec: &BinningSpec,
    outcome: &str,
    covariates: &[&str],
) -> Result<CohortRegression, CohortError> {
    if covariates.is_empty() {
        return Err(CohortError::Validation("at least one covariate is required".into()));
    }
    let mut seen = BTreeSet::new();
    for name in std::iter::once(&outcome).chain(covariates) {
        if !seen.insert(*name) {
            return Err(CohortError::Validation(format!("{name} is listed twice")));
        }
    }
    let feat: BTreeMap<&str, &CaseFeatureVector> =
        features.iter().map(|f| (f.case_id.as_str(), f)).collect();
    let clin: BTreeMap<&str, &ClinicalRecord> =
        clinical.iter().map(|c| (c.case_id.as_str(), c)).collect();
    for (n, len, ids) in [
        (feat.len(), features.len(), features.iter().map(|f| &f.case_id).collect::<Vec<_>>()),
        (clin.len(), clinical.len(), clinical.iter().map(|c| &c.case_id).collect()),
    ] {
        if n != len {
            let mut s = BTreeSet::new();
            let dup = ids.into_iter().find(|id| !s.insert(*id)).unwrap();
            return Err(CohortError::DuplicateId(dup.clone()));
        }
    }
    let unmatched: Vec<String> = feat
        .keys()
        .filter(|id| !clin.contains_key(*id))
        .chain(clin.keys().filter(|id| !feat.contains_key(*id)))
        .map(|s| s.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let out_col = resolve(outcome, spec)?;
    let logistic_groups = match &out_col {
        Column::Feature(_) => None,
        Column::Levels(_, groups) if groups.len() == 2 => Some(groups.clone()),
        _ => {
            return Err(CohortError::Validation(format!(
                "outcome {outcome} must be a feature or a two-group clinical variable"
            )))
        }
    };
    let cov_cols: Vec<Column> = covariates
        .iter()
        .map(|c| resolve(c, spec))
        .collect::<Result<_, _>>()?;

    let mut y = Vec::new();
    let mut rows: Vec<Vec<Cell>> = Vec::new();
    let mut n_missing = 0;
    for (id, f) in &feat {
        let Some(c) = clin.get(id) else { continue };
        let Some(yc) = cell(&out_col, f, c, spec)? else {
            n_missing += 1;
            continue;
        };
        let mut row = Vec::with_capacity(cov_cols.len());
        for col in &cov_cols {
            match cell(col, f, c, spec)? {
                Some(v) => row.push(v),
                None => break,
            }
        }
        if row.len() < cov_cols.len() {
            n_missing += 1;
            continue;
        }
        y.push(match (yc, &logistic_groups) {
            (Cell::Value(v), _) => v,
            (Cell::Level(l), Some(g)) => (l == g[1]) as u8 as f64,
            (Cell::Level(_), None) => unreachable!("categorical outcome has two groups"),
        });
        rows.push(row);
    }

    let n = rows.len();
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for (j, col) in cov_cols.iter().enumerate() {
        match col {
            Column::Feature(_) | Column::Numeric(_) => {
                let v = rows
                    .iter()
                    .map(|r| match &r[j] {
                        Cell::Value(v) => *v,
                        Cell::Level(_) => unreachable!(),
                    })
                    .collect();
                columns.push((covariates[j].to_string(), v));
            }
            Column::Levels(name, groups) => {
                let level = |r: &Vec<Cell>| match &r[j] {
                    Cell::Level(l) => l.clone(),
                    Cell::Value(_) => unreachable!(),
                };
                let present: Vec<&String> = groups
                    .iter()
                    .filter(|g| rows.iter().any(|r| &level(r) == *g))
                    .collect();
                if present.len() < 2 {
                    return Err(CohortError::Validation(format!(
                        "covariate {name} takes a single value over the used cases"
                    )));
                }
                for g in &present[1..] {
                    let term = if present.len() == 2 {
                        name.clone()
                    } else {
                        format!("{name}[{g}]")
                    };
                    columns.push((term, rows.iter().map(|r| (&level(r) == *g) as u8 as f64).collect()));
                }
            }
        }
    }
    let design = Design::with_intercept(&columns, n)?;
    let result = match logistic_groups {
        None => ols_regression(outcome, &design, &y)?,
        Some(_) => logistic_regression_mv(outcome, &design, &y, LogisticOptions::default())?,
    };
    Ok(CohortRegression {
        result,
        n_missing,
        unmatched,
    })
}

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    dunn_posthoc, kruskal_wallis, ks_two_sample, shapiro_wilk, significance_stars, DunnResult,
    Stars,
};
use crate::cohort::{bin_variable, BinningSpec, ClinicalRecord, CohortError};
use crate::morphometry::{CaseFeatureVector, FEATURE_NAMES};

/// Groups with fewer cases than this are flagged.
pub const MIN_GROUP_SIZE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "KS")]
    Ks,
    #[serde(rename = "KW")]
    Kw,
    /// Fewer than two populated groups; no test was run.
    #[serde(rename = "none")]
    None,
}

impl TestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::Ks => "KS",
            TestKind::Kw => "KW",
            TestKind::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationFlag {
    GroupTooSmall,
    Untestable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationResult {
    pub phenotype: String,
    pub variable: String,
    pub test: TestKind,
    /// `D` for KS, `H` for KW; NaN (JSON `null`) when untestable.
    #[serde(with = "crate::nan_as_null")]
    pub statistic: f64,
    #[serde(with = "crate::nan_as_null")]
    pub p_value: f64,
    /// `D` for KS, epsilon-squared for KW.
    #[serde(with = "crate::nan_as_null")]
    pub effect_size: f64,
    pub stars: Stars,
    pub groups: Vec<String>,
    pub group_sizes: Vec<usize>,
    /// Joined cases dropped because the clinical value is missing.
    pub n_missing: usize,
    /// Shapiro–Wilk p-value of the pooled feature values (advisory).
    pub normality_p: Option<f64>,
    /// Dunn comparisons when three or more groups were tested.
    pub posthoc: Option<DunnResult>,
    pub flags: Vec<AssociationFlag>,
}

/// Case ids that could not be joined between features and clinical records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusions {
    pub features_only: Vec<String>,
    pub clinical_only: Vec<String>,
    pub used: usize,
    /// Distinct case ids across both inputs; `used + excluded == total`.
    pub total: usize,
}

impl Exclusions {
    pub fn excluded(&self) -> usize {
        self.features_only.len() + self.clinical_only.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationReport {
    pub results: Vec<AssociationResult>,
    pub exclusions: Exclusions,
}

/// Tests every case-level feature against each clinical variable.
///
/// Cases are joined on case id; cases with a missing value for a variable
/// are dropped for that variable only. Two populated groups use the KS test,
/// three or more Kruskal–Wallis. Results come in feature order, then in the
/// order of `variables`.
pub fn associate(
    features: &[CaseFeatureVector],
    clinical: &[ClinicalRecord],
    spec: &BinningSpec,
    variables: &[&str],
) -> Result<AssociationReport, CohortError> {
    let feat_ids: BTreeMap<&str, &CaseFeatureVector> =
        features.iter().map(|f| (f.case_id.as_str(), f)).collect();
    if feat_ids.len() != features.len() {
        let mut seen = BTreeSet::new();
        let dup = features.iter().find(|f| !seen.insert(&f.case_id)).unwrap();
        return Err(CohortError::DuplicateId(dup.case_id.clone()));
    }
    let clin_ids: BTreeMap<&str, &ClinicalRecord> =
        clinical.iter().map(|c| (c.case_id.as_str(), c)).collect();
    if clin_ids.len() != clinical.len() {
        let mut seen = BTreeSet::new();
        let dup = clinical.iter().find(|c| !seen.insert(&c.case_id)).unwrap();
        return Err(CohortError::DuplicateId(dup.case_id.clone()));
    }

    let exclusions = Exclusions {
        features_only: feat_ids
            .keys()
            .filter(|id| !clin_ids.contains_key(*id))
            .map(|s| s.to_string())
            .collect(),
        clinical_only: clin_ids
            .keys()
            .filter(|id| !feat_ids.contains_key(*id))
            .map(|s| s.to_string())
            .collect(),
        used: feat_ids.keys().filter(|id| clin_ids.contains_key(*id)).count(),
        total: feat_ids.keys().chain(clin_ids.keys()).collect::<BTreeSet<_>>().len(),
    };
    let joined: Vec<(&CaseFeatureVector, &ClinicalRecord)> = feat_ids
        .iter()
        .filter_map(|(id, f)| clin_ids.get(id).map(|c| (*f, *c)))
        .collect();

    let mut per_variable = Vec::with_capacity(variables.len());
    for &variable in variables {
        let var = spec
            .variable(variable)
            .ok_or_else(|| CohortError::UnknownVariable(variable.to_string()))?;
        // group index per joined case, None when missing
        let mut assignment = Vec::with_capacity(joined.len());
        for (_, rec) in &joined {
            let label = bin_variable(rec.get(variable), variable, spec)?;
            assignment.push(label.map(|l| var.groups.iter().position(|g| *g == l).unwrap()));
        }
        per_variable.push((variable, var, assignment));
    }

    let mut results = Vec::with_capacity(FEATURE_NAMES.len() * variables.len());
    for (fi, &feature) in FEATURE_NAMES.iter().enumerate() {
        for (variable, var, assignment) in &per_variable {
            let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); var.groups.len()];
            let mut n_missing = 0;
            for ((f, _), a) in joined.iter().zip(assignment) {
                match a {
                    Some(g) => buckets[*g].push(f.values[fi]),
                    None => n_missing += 1,
                }
            }
            let (groups, samples): (Vec<String>, Vec<Vec<f64>>) = var
                .groups
                .iter()
                .cloned()
                .zip(buckets)
                .filter(|(_, b)| !b.is_empty())
                .unzip();
            results.push(test_groups(feature, variable, groups, samples, n_missing));
        }
    }
    Ok(AssociationReport {
        results,
        exclusions,
    })
}

fn test_groups(
    feature: &str,
    variable: &str,
    groups: Vec<String>,
    samples: Vec<Vec<f64>>,
    n_missing: usize,
) -> AssociationResult {
    let group_sizes: Vec<usize> = samples.iter().map(Vec::len).collect();
    let mut flags = Vec::new();
    if group_sizes.iter().any(|&n| n < MIN_GROUP_SIZE) {
        flags.push(AssociationFlag::GroupTooSmall);
    }
    let pooled: Vec<f64> = samples.iter().flatten().copied().collect();
    let normality_p = shapiro_wilk(&pooled).ok().map(|r| r.p_value);
    let refs: Vec<&[f64]> = samples.iter().map(Vec::as_slice).collect();

    let outcome = match refs.len() {
        0 | 1 => None,
        2 => ks_two_sample(refs[0], refs[1])
            .ok()
            .map(|r| (TestKind::Ks, r.d, r.p_value, r.d, None)),
        _ => kruskal_wallis(&refs).ok().map(|r| {
            let posthoc = dunn_posthoc(&refs).ok();
            (TestKind::Kw, r.h, r.p_value, r.epsilon_squared, posthoc)
        }),
    };
    let (test, statistic, p_value, effect_size, posthoc) = match outcome {
        Some(o) => o,
        None => {
            flags.push(AssociationFlag::Untestable);
            (TestKind::None, f64::NAN, f64::NAN, f64::NAN, None)
        }
    };
    AssociationResult {
        phenotype: feature.to_string(),
        variable: variable.to_string(),
        test,
        statistic,
        p_value,
        effect_size,
        stars: if p_value.is_nan() {
            super::Stars::Ns
        } else {
            significance_stars(p_value)
        },
        groups,
        group_sizes,
        n_missing,
        normality_p,
        posthoc,
        flags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::ClinicalValue;

    fn case(id: &str, v: f64) -> CaseFeatureVector {
        CaseFeatureVector {
            case_id: id.into(),
            values: [v; 14],
            n_glomeruli: 1,
        }
    }

    fn record(id: &str, var: &str, v: ClinicalValue) -> ClinicalRecord {
        ClinicalRecord {
            case_id: id.into(),
            values: [(var.to_string(), v)].into_iter().collect(),
        }
    }

    #[test]
    fn two_groups_give_fourteen_ks_results() {
        let spec = BinningSpec::xj_light();
        let feats: Vec<_> = (0..8).map(|i| case(&format!("c{i}"), i as f64)).collect();
        let clin: Vec<_> = (0..8)
            .map(|i| {
                let g = if i < 4 { "M" } else { "F" };
                record(&format!("c{i}"), "Gender", ClinicalValue::Categorical(g.into()))
            })
            .collect();
        let rep = associate(&feats, &clin, &spec, &["Gender"]).unwrap();
        assert_eq!(rep.results.len(), 14);
        for r in &rep.results {
            assert_eq!(r.test, TestKind::Ks);
            assert_eq!(r.statistic, 1.0);
            assert_eq!(r.effect_size, r.statistic);
            assert_eq!(r.group_sizes, vec![4, 4]);
            assert!(r.flags.is_empty());
        }
        assert_eq!(rep.results[0].phenotype, "AreaBow_mean");
    }

    #[test]
    fn three_groups_use_kruskal_and_flag_small_groups() {
        let spec = BinningSpec::xj_light();
        let labels = ["IgAN", "IgAN", "IgAN", "LN", "LN", "LN", "MN", "MN"];
        let feats: Vec<_> = (0..8).map(|i| case(&format!("c{i}"), i as f64)).collect();
        let clin: Vec<_> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| record(&format!("c{i}"), "Disease", ClinicalValue::Categorical(l.to_string())))
            .collect();
        let rep = associate(&feats, &clin, &spec, &["Disease"]).unwrap();
        let r = &rep.results[0];
        assert_eq!(r.test, TestKind::Kw);
        assert_eq!(r.groups, vec!["IgAN", "LN", "MN"]);
        assert_eq!(r.flags, vec![AssociationFlag::GroupTooSmall]);
        assert!(r.posthoc.is_some());
        assert!((0.0..=1.0).contains(&r.effect_size));
    }

    #[test]
    fn missing_values_and_exclusions() {
        let spec = BinningSpec::xj_light();
        let feats: Vec<_> = (0..6).map(|i| case(&format!("c{i}"), i as f64)).collect();
        let mut clin: Vec<_> = (1..6)
            .map(|i| record(&format!("c{i}"), "Age", ClinicalValue::Numeric(30.0 + 5.0 * i as f64)))
            .collect();
        clin[0] = record("c1", "Age", ClinicalValue::Missing);
        clin.push(record("c9", "Age", ClinicalValue::Numeric(50.0)));
        let rep = associate(&feats, &clin, &spec, &["Age"]).unwrap();
        assert_eq!(rep.exclusions.features_only, vec!["c0"]);
        assert_eq!(rep.exclusions.clinical_only, vec!["c9"]);
        assert_eq!(rep.exclusions.used + rep.exclusions.excluded(), rep.exclusions.total);
        assert_eq!(rep.results[0].n_missing, 1);
        assert_eq!(rep.results[0].group_sizes.iter().sum::<usize>(), 4);
    }

    #[test]
    fn single_group_is_untestable() {
        let spec = BinningSpec::xj_light();
        let feats: Vec<_> = (0..4).map(|i| case(&format!("c{i}"), i as f64)).collect();
        let clin: Vec<_> = (0..4)
            .map(|i| record(&format!("c{i}"), "Gender", ClinicalValue::Categorical("Male".into())))
            .collect();
        let rep = associate(&feats, &clin, &spec, &["Gender"]).unwrap();
        assert_eq!(rep.results[0].test, TestKind::None);
        assert!(rep.results[0].flags.contains(&AssociationFlag::Untestable));
        assert!(rep.results[0].p_value.is_nan());
    }
}

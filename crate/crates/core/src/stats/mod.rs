//! Non-parametric tests, normality screening, regression and the
//! case-level association engine.

mod association;
mod attention;
mod ks;
mod normality;
mod phenotype;
mod rank;
mod regression;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use association::{
    associate, AssociationFlag, AssociationReport, AssociationResult, Exclusions, TestKind,
};
pub use attention::{
    attention_alignment, attention_alignment_pixels, attention_alignment_pooled, AttentionAlignment, AttentionMap, BoxRegion,
};
pub use ks::{kolmogorov_sf, ks_one_sample, ks_statistic, ks_two_sample, KsResult};
pub use normality::{shapiro_wilk, ShapiroResult};
pub use phenotype::{regress_cohort, CohortRegression};
pub use rank::{dunn_posthoc, kruskal_wallis, midranks, DunnResult, KruskalResult};
pub use regression::{
    fit_logistic, logistic_regression_mv, ols_regression, Design, LogisticFit, LogisticOptions,
    Model, RegressionResult, Term,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample contains NaN or infinite values")]
    NonFinite,
    #[error("sample of size {n} is too small (need at least {min})")]
    SampleTooSmall { n: usize, min: usize },
    #[error("sample of size {n} is too large (at most {max})")]
    SampleTooLarge { n: usize, max: usize },
    #[error("all values in the sample are equal")]
    ConstantSample,
    #[error("{got} groups given, at least {min} required")]
    TooFewGroups { got: usize, min: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{n} observations cannot identify {p} parameters")]
    NotEnoughObservations { n: usize, p: usize },
    #[error("design matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("outcome must be coded 0/1")]
    NonBinaryOutcome,
    #[error("outcome contains a single class")]
    SingleClass,
    #[error("{0} region has no pixels")]
    EmptyRegion(&'static str),
    #[error("box {index} lies outside the {width}x{height} grid")]
    BoxOutOfBounds {
        index: usize,
        width: usize,
        height: usize,
    },
}

pub(crate) fn check_finite(x: &[f64]) -> Result<(), StatsError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite)
    }
}

/// Observations of one group together with its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub label: String,
    pub values: Vec<f64>,
}

impl Sample {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self, StatsError> {
        if values.is_empty() {
            return Err(StatsError::EmptySample);
        }
        check_finite(&values)?;
        Ok(Self {
            label: label.into(),
            values,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stars {
    #[serde(rename = "ns")]
    Ns,
    #[serde(rename = "*")]
    One,
    #[serde(rename = "**")]
    Two,
    #[serde(rename = "***")]
    Three,
}

impl Stars {
    pub fn as_str(self) -> &'static str {
        match self {
            Stars::Ns => "ns",
            Stars::One => "*",
            Stars::Two => "**",
            Stars::Three => "***",
        }
    }
}

impl fmt::Display for Stars {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Significance level with exclusive thresholds 0.001 / 0.01 / 0.05.
pub fn significance_stars(p: f64) -> Stars {
    if p < 0.001 {
        Stars::Three
    } else if p < 0.01 {
        Stars::Two
    } else if p < 0.05 {
        Stars::One
    } else {
        Stars::Ns
    }
}

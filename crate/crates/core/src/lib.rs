//! Glomerular pathomics toolkit.
//!
//! - [`morphometry`]: per-glomerulus shape parameters from label masks and
//!   case-level aggregation.
//! - [`stats`]: KS, Kruskal–Wallis, Dunn, Shapiro–Wilk, OLS and logistic
//!   regression, the feature/clinical association engine and attention
//!   alignment.
//! - [`metrics`]: F1, ROC-AUC, PR-AUC and IoU.
//! - [`fewshot`]: k-shot protocol over frozen embeddings.
//! - [`distill`]: multi-crop self-distillation simulator.
//! - [`cohort`]: file formats and joins.

pub mod cohort;
pub mod distill;
pub mod fewshot;
pub mod metrics;
pub mod morphometry;
pub mod stats;

/// Serializes NaN as JSON `null` and reads `null` back as NaN.
pub(crate) mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

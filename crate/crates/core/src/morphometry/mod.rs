//! Per-glomerulus morphometry and case-level aggregation.
//!
//! A glomerulus is a labeled raster (background, Bowman's capsule, tuft).
//! For each structure the largest 8-connected component is taken, interior
//! holes are filled, and area, perimeter, moment-ellipse axes, circularity
//! `4*pi*S/P^2` and eccentricity `sqrt(1 - b^2/a^2)` are computed. Cases are
//! summarized by the mean and median of the seven glomerular parameters.

mod contour;
mod mask;
mod shape;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contour::{trace_contour, Polygon};
pub use mask::{extract_component, EntityMask, PixelComponent, Structure, BACKGROUND, BOW, TUFT};
pub use shape::{shape_params, ShapeParams, DEGENERATE_ECC, PERIMETER_ISOTROPY};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MorphError {
    #[error("mask is {width}x{height} but carries {len} labels")]
    DimensionMismatch {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("invalid label {value} at ({x}, {y}); expected 0, 1 or 2")]
    InvalidLabel { value: u8, x: usize, y: usize },
    #[error("resolution must be finite and positive, got {0}")]
    InvalidResolution(f64),
    #[error("no pixels carry label {0}")]
    NoPixelsForLabel(u8),
    #[error("case has no usable glomeruli")]
    EmptyCase,
}

/// The seven glomerular-level parameters, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Parameter {
    AreaBow,
    AreaTuft,
    Ratio,
    CirBow,
    CirTuft,
    EccBow,
    EccTuft,
}

impl Parameter {
    pub const ALL: [Parameter; 7] = [
        Parameter::AreaBow,
        Parameter::AreaTuft,
        Parameter::Ratio,
        Parameter::CirBow,
        Parameter::CirTuft,
        Parameter::EccBow,
        Parameter::EccTuft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Parameter::AreaBow => "AreaBow",
            Parameter::AreaTuft => "AreaTuft",
            Parameter::Ratio => "Ratio",
            Parameter::CirBow => "CirBow",
            Parameter::CirTuft => "CirTuft",
            Parameter::EccBow => "EccBow",
            Parameter::EccTuft => "EccTuft",
        }
    }
}

/// Names of the 14 case-level features, `<Parameter>_mean` then `<Parameter>_med`.
pub const FEATURE_NAMES: [&str; 14] = [
    "AreaBow_mean",
    "AreaBow_med",
    "AreaTuft_mean",
    "AreaTuft_med",
    "Ratio_mean",
    "Ratio_med",
    "CirBow_mean",
    "CirBow_med",
    "CirTuft_mean",
    "CirTuft_med",
    "EccBow_mean",
    "EccBow_med",
    "EccTuft_mean",
    "EccTuft_med",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphometryRecord {
    pub glomerulus_id: String,
    /// `None` when the mask has no capsule pixels.
    pub bow: Option<ShapeParams>,
    /// `None` when the mask has no tuft pixels.
    pub tuft: Option<ShapeParams>,
}

impl MorphometryRecord {
    /// Tuft-to-capsule area ratio; `None` if either structure is missing.
    pub fn ratio(&self) -> Option<f64> {
        Some(self.tuft?.area / self.bow?.area)
    }

    /// Both structures present and neither degenerate.
    pub fn is_usable(&self) -> bool {
        matches!((self.bow, self.tuft), (Some(b), Some(t)) if !b.degenerate && !t.degenerate)
    }

    pub fn parameter(&self, p: Parameter) -> Option<f64> {
        let (bow, tuft) = (self.bow.as_ref(), self.tuft.as_ref());
        match p {
            Parameter::AreaBow => bow.map(|s| s.area),
            Parameter::AreaTuft => tuft.map(|s| s.area),
            Parameter::Ratio => self.ratio(),
            Parameter::CirBow => bow.map(|s| s.circularity),
            Parameter::CirTuft => tuft.map(|s| s.circularity),
            Parameter::EccBow => bow.map(|s| s.eccentricity),
            Parameter::EccTuft => tuft.map(|s| s.eccentricity),
        }
    }

    pub fn status(&self) -> &'static str {
        match (self.bow, self.tuft) {
            (None, None) => "missing_bow_tuft",
            (None, _) => "missing_bow",
            (_, None) => "missing_tuft",
            (Some(b), Some(t)) if b.degenerate || t.degenerate => "degenerate",
            _ => "ok",
        }
    }
}

/// Morphometry of one glomerulus. A structure without pixels is recorded as
/// missing rather than failing the whole record.
pub fn glomerulus_morphometry(id: impl Into<String>, mask: &EntityMask) -> MorphometryRecord {
    let measure = |s: Structure| {
        extract_component(mask, s.label())
            .ok()
            .map(|c| shape_params(&c, mask.resolution()))
    };
    MorphometryRecord {
        glomerulus_id: id.into(),
        bow: measure(Structure::Bow),
        tuft: measure(Structure::Tuft),
    }
}

/// Runs [`glomerulus_morphometry`] over many masks in parallel; output order
/// matches input order.
pub fn morphometry_batch(masks: &[(String, EntityMask)]) -> Vec<MorphometryRecord> {
    masks
        .par_iter()
        .map(|(id, m)| glomerulus_morphometry(id.clone(), m))
        .collect()
}

/// Case-level mean/median summary of the usable glomeruli.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFeatureVector {
    pub case_id: String,
    /// Values in [`FEATURE_NAMES`] order.
    pub values: [f64; 14],
    pub n_glomeruli: usize,
}

impl CaseFeatureVector {
    pub fn get(&self, feature: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|&f| f == feature)
            .map(|i| self.values[i])
    }

    pub fn mean(&self, p: Parameter) -> f64 {
        self.values[2 * p as usize]
    }

    pub fn median(&self, p: Parameter) -> f64 {
        self.values[2 * p as usize + 1]
    }
}

/// Aggregates usable records (both structures present, neither degenerate).
///
/// Records are reduced in glomerulus-id order so the result does not depend
/// on input order.
pub fn aggregate_case(
    case_id: impl Into<String>,
    records: &[MorphometryRecord],
) -> Result<CaseFeatureVector, MorphError> {
    let mut usable: Vec<&MorphometryRecord> = records.iter().filter(|r| r.is_usable()).collect();
    if usable.is_empty() {
        return Err(MorphError::EmptyCase);
    }
    usable.sort_by(|a, b| a.glomerulus_id.cmp(&b.glomerulus_id));
    let mut values = [0.0; 14];
    for p in Parameter::ALL {
        let column: Vec<f64> = usable
            .iter()
            .map(|r| r.parameter(p).expect("usable records carry every parameter"))
            .collect();
        values[2 * p as usize] = mean(&column);
        values[2 * p as usize + 1] = median(&column);
    }
    Ok(CaseFeatureVector {
        case_id: case_id.into(),
        values,
        n_glomeruli: usable.len(),
    })
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Median; the midpoint of the two central order statistics for even counts.
pub(crate) fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

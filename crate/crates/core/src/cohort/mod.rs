//! Cohort ingestion and persistence: mask directories, clinical tables with
//! binning specs, embedding matrices, feature tables and report writers.

mod clinical;
mod embeddings;
mod features;
mod masks;
mod report;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::morphometry::MorphError;
use crate::stats::StatsError;

pub use clinical::{
    bin_variable, load_clinical, read_clinical, BinningSpec, Boundary, ClinicalRecord,
    ClinicalTable, ClinicalValue, VariableKind, VariableSpec,
};
pub use embeddings::{
    read_embeddings, read_embeddings_csv, read_embeddings_raw, sidecar_path, write_embeddings_csv,
    write_embeddings_raw, EmbeddingSidecar,
};
pub use features::{
    parse_case_features, read_case_features, write_case_features, write_glomerulus_table, Unit,
    GLOMERULUS_COLUMNS,
};
pub use masks::{encode_pgm, load_mask_cohort, parse_pgm, read_mask, write_pgm, MaskCohort};
pub use report::{
    canonical_order, fmt4, fmt_full, to_json_bytes, write_association_report, write_bytes,
    write_regression_report, ReportFormat, ASSOCIATION_COLUMNS,
};
pub use report::csv_bytes;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid binning spec: {0}")]
    InvalidSpec(String),
    #[error("variable {0:?} is not declared in the binning spec")]
    UnknownVariable(String),
    #[error("value {value:?} is not a known group of {variable}")]
    OutOfDomain { variable: String, value: String },
    #[error("missing required column {0:?}")]
    MissingHeader(String),
    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    UnparsableNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("{path}: {reason}")]
    MalformedFile { path: PathBuf, reason: String },
    #[error("no valid masks found")]
    EmptyCohort,
    #[error("nothing to write: results are empty")]
    EmptyResults,
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Morph(#[from] MorphError),
}

impl CohortError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CohortError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 for I/O failures, 1 for validation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CohortError::Io { .. } => 2,
            CohortError::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => 2,
            CohortError::Json(e) if e.is_io() => 2,
            _ => 1,
        }
    }
}

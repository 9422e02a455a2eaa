use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::report::{csv_bytes, fmt_full, write_bytes};
use super::CohortError;
use crate::fewshot::EmbeddingDataset;

/// Companion of a raw little-endian `f32` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSidecar {
    pub n: usize,
    pub d: usize,
    pub ids: Vec<String>,
    pub labels: Vec<serde_json::Value>,
}

fn label_text(v: &serde_json::Value) -> Result<String, CohortError> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Number(n) => Ok(n.to_string()),
        serde_json::Value::Bool(b) => Ok((*b as u8).to_string()),
        other => Err(CohortError::Validation(format!("unsupported label {other}"))),
    }
}

fn dataset(ids: Vec<String>, labels: Vec<String>, m: Array2<f64>) -> Result<EmbeddingDataset, CohortError> {
    EmbeddingDataset::new(ids, labels, m).map_err(|e| CohortError::Validation(e.to_string()))
}

/// Reads `id,label,f0,...,f{d-1}`.
pub fn read_embeddings_csv(path: &Path) -> Result<EmbeddingDataset, CohortError> {
    let file = std::fs::File::open(path).map_err(|e| CohortError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("id") {
        return Err(CohortError::MissingHeader("id".into()));
    }
    if headers.get(1) != Some("label") {
        return Err(CohortError::MissingHeader("label".into()));
    }
    let d = headers.len() - 2;
    for (j, h) in headers.iter().skip(2).enumerate() {
        if h != format!("f{j}") {
            return Err(CohortError::Validation(format!(
                "column {} is {h:?}, expected \"f{j}\"",
                j + 3
            )));
        }
    }
    if d == 0 {
        return Err(CohortError::MissingHeader("f0".into()));
    }
    let (mut ids, mut labels, mut flat) = (Vec::new(), Vec::new(), Vec::new());
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        ids.push(row[0].to_string());
        labels.push(row[1].to_string());
        for j in 0..d {
            let cell = &row[j + 2];
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => flat.push(v),
                _ => {
                    return Err(CohortError::UnparsableNumeric {
                        row: i + 2,
                        column: format!("f{j}"),
                        value: cell.to_string(),
                    })
                }
            }
        }
    }
    let n = ids.len();
    let m = Array2::from_shape_vec((n, d), flat).expect("row lengths checked by csv");
    dataset(ids, labels, m)
}

/// Sidecar location for a raw matrix: same path with a `.json` extension.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

/// Reads a raw `n x d` row-major little-endian `f32` matrix plus its sidecar.
pub fn read_embeddings_raw(path: &Path) -> Result<EmbeddingDataset, CohortError> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| CohortError::io(&side, e))?;
    let meta: EmbeddingSidecar = serde_json::from_str(&text)?;
    if meta.ids.len() != meta.n || meta.labels.len() != meta.n {
        return Err(CohortError::Validation(format!(
            "sidecar declares n={} but lists {} ids and {} labels",
            meta.n,
            meta.ids.len(),
            meta.labels.len()
        )));
    }
    let bytes = std::fs::read(path).map_err(|e| CohortError::io(path, e))?;
    if bytes.len() != meta.n * meta.d * 4 {
        return Err(CohortError::MalformedFile {
            path: path.to_path_buf(),
            reason: format!(
                "{} bytes, expected n*d*4 = {}",
                bytes.len(),
                meta.n * meta.d * 4
            ),
        });
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let labels = meta.labels.iter().map(label_text).collect::<Result<_, _>>()?;
    let m = Array2::from_shape_vec((meta.n, meta.d), flat).unwrap();
    dataset(meta.ids, labels, m)
}

/// Dispatches on extension: `.csv` or a raw matrix with a JSON sidecar.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingDataset, CohortError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => read_embeddings_csv(path),
        _ => read_embeddings_raw(path),
    }
}

pub fn write_embeddings_csv(path: &Path, data: &EmbeddingDataset) -> Result<(), CohortError> {
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..data.d()).map(|j| format!("f{j}")));
    let rows: Vec<Vec<String>> = (0..data.n())
        .map(|i| {
            let mut row = vec![
                data.ids()[i].clone(),
                data.classes()[data.labels()[i]].clone(),
            ];
            row.extend(data.vectors().row(i).iter().map(|&v| fmt_full(v)));
            row
        })
        .collect();
    write_bytes(path, &csv_bytes(&header, &rows)?)
}

pub fn write_embeddings_raw(path: &Path, data: &EmbeddingDataset) -> Result<(), CohortError> {
    let bytes: Vec<u8> = data
        .vectors()
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    write_bytes(path, &bytes)?;
    let meta = EmbeddingSidecar {
        n: data.n(),
        d: data.d(),
        ids: data.ids().to_vec(),
        labels: data
            .labels()
            .iter()
            .map(|&l| serde_json::Value::String(data.classes()[l].clone()))
            .collect(),
    };
    write_bytes(&sidecar_path(path), &super::report::to_json_bytes(&meta)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fewshot::gaussian_blobs;

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = gaussian_blobs(5, 3, 4.0, 1);
        let path = dir.path().join("e.csv");
        write_embeddings_csv(&path, &data).unwrap();
        assert_eq!(read_embeddings(&path).unwrap(), data);
    }

    #[test]
    fn raw_round_trip_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let data = gaussian_blobs(4, 2, 4.0, 2);
        let path = dir.path().join("e.bin");
        write_embeddings_raw(&path, &data).unwrap();
        let back = read_embeddings(&path).unwrap();
        assert_eq!(back.ids(), data.ids());
        assert_eq!(back.labels(), data.labels());
        for (a, b) in back.vectors().iter().zip(data.vectors()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn raw_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.bin");
        std::fs::write(&path, [0u8; 10]).unwrap();
        std::fs::write(
            sidecar_path(&path),
            r#"{"n":1,"d":2,"ids":["a"],"labels":[1]}"#,
        )
        .unwrap();
        assert!(matches!(read_embeddings(&path), Err(CohortError::MalformedFile { .. })));
    }
}

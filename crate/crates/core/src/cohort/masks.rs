use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::CohortError;
use crate::morphometry::EntityMask;

/// Masks grouped by case, both levels sorted by id.
#[derive(Debug, Clone, Default)]
pub struct MaskCohort {
    pub cases: BTreeMap<String, Vec<(String, EntityMask)>>,
    /// Files that could not be used, with the reason.
    pub rejected: Vec<(PathBuf, String)>,
}

impl MaskCohort {
    pub fn n_masks(&self) -> usize {
        self.cases.values().map(Vec::len).sum()
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> CohortError {
    CohortError::MalformedFile {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Parses a binary PGM (`P5`) with 8-bit samples.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), String> {
    let mut pos = 0;
    let mut token = || -> Result<String, String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err("not a binary PGM (expected P5)".into());
    }
    let mut num = |what: &str| -> Result<usize, String> {
        token()?.parse().map_err(|_| format!("bad {what} in header"))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if width == 0 || height == 0 {
        return Err("zero-sized image".into());
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("maxval {maxval} is not an 8-bit PGM"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let need = width * height;
    if bytes.len() < pos + need {
        return Err(format!(
            "raster has {} bytes, expected {need}",
            bytes.len().saturating_sub(pos)
        ));
    }
    Ok((width, height, bytes[pos..pos + need].to_vec()))
}

pub fn encode_pgm(width: usize, height: usize, labels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(labels);
    out
}

/// Reads one `.pgm` or `.png` label mask.
pub fn read_mask(path: &Path, resolution: f64) -> Result<EntityMask, CohortError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let bytes = std::fs::read(path).map_err(|e| CohortError::io(path, e))?;
    let (w, h, labels) = match ext.as_deref() {
        Some("pgm") => parse_pgm(&bytes).map_err(|r| malformed(path, r))?,
        Some("png") => {
            let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
                .map_err(|e| malformed(path, e.to_string()))?;
            match img {
                image::DynamicImage::ImageLuma8(g) => {
                    (g.width() as usize, g.height() as usize, g.into_raw())
                }
                other => {
                    return Err(malformed(
                        path,
                        format!("expected 8-bit grayscale PNG, found {:?}", other.color()),
                    ))
                }
            }
        }
        _ => return Err(malformed(path, "unsupported extension")),
    };
    EntityMask::with_resolution(w, h, labels, resolution).map_err(|e| malformed(path, e.to_string()))
}

pub fn write_pgm(path: &Path, mask: &EntityMask) -> Result<(), CohortError> {
    let mut f = std::fs::File::create(path).map_err(|e| CohortError::io(path, e))?;
    f.write_all(&encode_pgm(mask.width(), mask.height(), mask.labels()))
        .map_err(|e| CohortError::io(path, e))
}

fn is_mask_file(p: &Path) -> bool {
    p.is_file()
        && matches!(
            p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
            Some("pgm" | "png")
        )
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, CohortError> {
    let mut entries = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| CohortError::io(dir, e))? {
        let path = e.map_err(|e| CohortError::io(dir, e))?.path();
        let hidden = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'));
        if !hidden {
            entries.push(path);
        }
    }
    entries.sort();
    Ok(entries)
}

/// Loads `<root>/<case-id>/<glomerulus-id>.<pgm|png>`.
///
/// Unreadable or invalid files are collected in [`MaskCohort::rejected`] and
/// loading continues; two files with the same stem in one case are an error.
pub fn load_mask_cohort(root: &Path, resolution: f64) -> Result<MaskCohort, CohortError> {
    if !root.is_dir() {
        return Err(CohortError::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    let mut jobs = Vec::new();
    let mut rejected = Vec::new();
    for case_dir in sorted_entries(root)? {
        if !case_dir.is_dir() {
            if is_mask_file(&case_dir) {
                rejected.push((case_dir, "mask outside a case directory".to_string()));
            }
            continue;
        }
        let case_id = case_dir.file_name().unwrap().to_string_lossy().into_owned();
        for file in sorted_entries(&case_dir)? {
            if is_mask_file(&file) {
                let stem = file.file_stem().unwrap().to_string_lossy().into_owned();
                jobs.push((case_id.clone(), stem, file));
            }
        }
    }

    let loaded: Vec<_> = jobs
        .into_par_iter()
        .map(|(case, stem, path)| {
            let mask = read_mask(&path, resolution);
            (case, stem, path, mask)
        })
        .collect();

    let mut cases: BTreeMap<String, Vec<(String, EntityMask)>> = BTreeMap::new();
    for (case, stem, path, mask) in loaded {
        match mask {
            Ok(m) => {
                let list = cases.entry(case.clone()).or_default();
                if list.iter().any(|(id, _)| *id == stem) {
                    return Err(CohortError::DuplicateId(format!("{case}/{stem}")));
                }
                list.push((stem, m));
            }
            Err(CohortError::MalformedFile { reason, .. }) => rejected.push((path, reason)),
            Err(e) => rejected.push((path, e.to_string())),
        }
    }
    for list in cases.values_mut() {
        list.sort_by(|a, b| a.0.cmp(&b.0));
    }
    if cases.is_empty() {
        return Err(CohortError::EmptyCohort);
    }
    Ok(MaskCohort { cases, rejected })
}

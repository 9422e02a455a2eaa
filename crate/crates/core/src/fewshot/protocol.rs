use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_predict, sample_k_shot, Classifier, EmbeddingDataset, FewShotError};
use crate::metrics::roc_auc;

pub const DEFAULT_KS: [usize; 5] = [1, 5, 10, 25, 100];

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one protocol run: SplitMix64 folded over
/// `(master, classifier, k, repeat)`.
pub fn cell_seed(master: u64, classifier: Classifier, k: usize, repeat: usize) -> u64 {
    [classifier.id(), k as u64, repeat as u64]
        .into_iter()
        .fold(splitmix64(master), |h, v| splitmix64(h ^ v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub classifier: Classifier,
    pub k: usize,
    pub seeds: Vec<u64>,
    /// One ROC-AUC per repeat (one-vs-rest macro average for more than two classes).
    pub aucs: Vec<f64>,
    #[serde(with = "crate::nan_as_null")]
    pub mean: f64,
    /// Sample standard deviation over repeats.
    #[serde(with = "crate::nan_as_null")]
    pub std: f64,
    /// Set when any repeat failed; `mean` and `std` are then NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTable {
    pub master_seed: u64,
    pub repeats: usize,
    pub ks: Vec<usize>,
    pub classifiers: Vec<Classifier>,
    /// Classifier-major, then ascending k.
    pub cells: Vec<CellResult>,
}

impl ProtocolTable {
    pub fn cell(&self, classifier: Classifier, k: usize) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.classifier == classifier && c.k == k)
    }
}

fn one_run(
    data: &EmbeddingDataset,
    classifier: Classifier,
    k: usize,
    seed: u64,
) -> Result<f64, FewShotError> {
    let split = sample_k_shot(data, k, seed)?;
    let train_x = data.rows(&split.train);
    let test_x = data.rows(&split.test);
    let model_seed = super::splitmix64(seed);
    let n_classes = data.classes().len();
    let positives: Vec<usize> = if n_classes == 2 {
        vec![1]
    } else {
        (0..n_classes).collect()
    };
    let mut total = 0.0;
    for &c in &positives {
        let train_y: Vec<bool> = split.train.iter().map(|&i| data.labels()[i] == c).collect();
        let test_y: Vec<bool> = split.test.iter().map(|&i| data.labels()[i] == c).collect();
        let scores = fit_predict(classifier, train_x.view(), &train_y, test_x.view(), model_seed)?;
        total += roc_auc(&scores, &test_y)
            .map_err(|e| FewShotError::InvalidDataset(e.to_string()))?;
    }
    Ok(total / positives.len() as f64)
}

/// Runs every `(classifier, k)` cell `repeats` times on fresh k-shot splits.
///
/// Runs execute in parallel; each owns its seed, and results are merged in
/// cell order, so the table is identical for any thread count.
pub fn run_protocol(
    data: &EmbeddingDataset,
    classifiers: &[Classifier],
    ks: &[usize],
    repeats: usize,
    master_seed: u64,
) -> ProtocolTable {
    let jobs: Vec<(Classifier, usize, usize)> = classifiers
        .iter()
        .flat_map(|&c| ks.iter().flat_map(move |&k| (0..repeats).map(move |r| (c, k, r))))
        .collect();
    let outcomes: Vec<(u64, Result<f64, FewShotError>)> = jobs
        .par_iter()
        .map(|&(c, k, r)| {
            let seed = cell_seed(master_seed, c, k, r);
            (seed, one_run(data, c, k, seed))
        })
        .collect();

    let mut cells = Vec::with_capacity(classifiers.len() * ks.len());
    for (chunk, job) in outcomes.chunks(repeats.max(1)).zip(jobs.chunks(repeats.max(1))) {
        let (classifier, k, _) = job[0];
        let seeds = chunk.iter().map(|(s, _)| *s).collect();
        let error = chunk
            .iter()
            .find_map(|(_, r)| r.as_ref().err())
            .map(|e| e.to_string());
        let aucs: Vec<f64> = chunk.iter().filter_map(|(_, r)| r.as_ref().ok().copied()).collect();
        let (mean, std) = if error.is_some() || aucs.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let n = aucs.len() as f64;
            let mean = aucs.iter().sum::<f64>() / n;
            let std = if aucs.len() > 1 {
                (aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            (mean, std)
        };
        cells.push(CellResult {
            classifier,
            k,
            seeds,
            aucs,
            mean,
            std,
            error,
        });
    }
    ProtocolTable {
        master_seed,
        repeats,
        ks: ks.to_vec(),
        classifiers: classifiers.to_vec(),
        cells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_across_cells() {
        let a = cell_seed(1, Classifier::Lr, 5, 0);
        assert_ne!(a, cell_seed(1, Classifier::Lr, 5, 1));
        assert_ne!(a, cell_seed(1, Classifier::Ptl, 5, 0));
        assert_ne!(a, cell_seed(1, Classifier::Lr, 10, 0));
        assert_ne!(a, cell_seed(2, Classifier::Lr, 5, 0));
        assert_eq!(a, cell_seed(1, Classifier::Lr, 5, 0));
    }

    #[test]
    fn failed_cells_are_marked() {
        let data = super::super::gaussian_blobs(6, 3, 4.0, 0);
        let t = run_protocol(&data, &[Classifier::Ptl], &[1, 10], 2, 0);
        assert_eq!(t.cells.len(), 2);
        assert!(t.cells[0].error.is_none());
        assert!(t.cells[1].error.is_some());
        assert!(t.cells[1].mean.is_nan());
    }
}

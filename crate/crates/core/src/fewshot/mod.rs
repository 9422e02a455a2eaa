//! Few-shot evaluation on frozen embeddings: k-shot sampling, four
//! classifier families and the repeated-split protocol.

mod forest;
mod mlp;
mod protocol;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{fit_logistic, LogisticOptions};

pub use forest::{DecisionTree, RandomForest, N_TREES};
pub use mlp::{Mlp, MlpGradient, MlpOptions};
pub use protocol::{cell_seed, run_protocol, splitmix64, CellResult, ProtocolTable, DEFAULT_KS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FewShotError {
    #[error("class {class:?} has {have} members, needs more than {k} for {k}-shot sampling")]
    InsufficientClassMembers { class: String, have: usize, k: usize },
    #[error("dataset is inconsistent: {0}")]
    InvalidDataset(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("training data needs both classes")]
    SingleClass,
}

/// Frozen embedding vectors with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    ids: Vec<String>,
    labels: Vec<usize>,
    classes: Vec<String>,
    vectors: Array2<f64>,
}

impl EmbeddingDataset {
    /// Class names are ordered numerically when every label is an integer,
    /// otherwise lexicographically; the second class is the positive one in
    /// two-class data.
    pub fn new(
        ids: Vec<String>,
        labels: Vec<String>,
        vectors: Array2<f64>,
    ) -> Result<Self, FewShotError> {
        let (n, d) = vectors.dim();
        if ids.len() != n || labels.len() != n {
            return Err(FewShotError::InvalidDataset(format!(
                "{n} vectors, {} ids, {} labels",
                ids.len(),
                labels.len()
            )));
        }
        if d == 0 || n == 0 {
            return Err(FewShotError::InvalidDataset("empty matrix".into()));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(FewShotError::InvalidDataset("non-finite embedding value".into()));
        }
        let mut classes: Vec<String> = labels.clone();
        classes.sort();
        classes.dedup();
        if classes.iter().all(|c| c.parse::<i64>().is_ok()) {
            classes.sort_by_key(|c| c.parse::<i64>().unwrap());
        }
        let labels = labels
            .iter()
            .map(|l| classes.iter().position(|c| c == l).unwrap())
            .collect();
        Ok(Self {
            ids,
            labels,
            classes,
            vectors,
        })
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn d(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn class_members(&self, class: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == class).collect()
    }

    /// Rows `idx` of the embedding matrix.
    pub fn rows(&self, idx: &[usize]) -> Array2<f64> {
        self.vectors.select(Axis(0), idx)
    }
}

/// Training and test row indices, both ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Draws exactly `k` members of every class without replacement; all other
/// rows form the test set.
pub fn sample_k_shot(data: &EmbeddingDataset, k: usize, seed: u64) -> Result<Split, FewShotError> {
    if k == 0 {
        return Err(FewShotError::InvalidK);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; data.n()];
    for c in 0..data.classes.len() {
        let members = data.class_members(c);
        if members.len() <= k {
            return Err(FewShotError::InsufficientClassMembers {
                class: data.classes[c].clone(),
                have: members.len(),
                k,
            });
        }
        for j in sample(&mut rng, members.len(), k) {
            in_train[members[j]] = true;
        }
    }
    let (train, test): (Vec<usize>, Vec<usize>) = (0..data.n()).partition(|&i| in_train[i]);
    Ok(Split { train, test })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Classifier {
    #[serde(rename = "PTL")]
    Ptl,
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "MLP")]
    Mlp,
    #[serde(rename = "RF")]
    Rf,
}

impl Classifier {
    pub const ALL: [Classifier; 4] = [Classifier::Ptl, Classifier::Lr, Classifier::Mlp, Classifier::Rf];

    pub fn name(self) -> &'static str {
        match self {
            Classifier::Ptl => "PTL",
            Classifier::Lr => "LR",
            Classifier::Mlp => "MLP",
            Classifier::Rf => "RF",
        }
    }

    pub fn id(self) -> u64 {
        self as u64
    }
}

impl std::str::FromStr for Classifier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "PTL" => Ok(Classifier::Ptl),
            "LR" => Ok(Classifier::Lr),
            "MLP" => Ok(Classifier::Mlp),
            "RF" => Ok(Classifier::Rf),
            _ => Err(format!("unknown classifier {s:?} (expected PTL, LR, MLP or RF)")),
        }
    }
}

fn check_binary(y: &[bool]) -> Result<(), FewShotError> {
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        Err(FewShotError::SingleClass)
    } else {
        Ok(())
    }
}

fn centroid(x: ArrayView2<f64>, y: &[bool], positive: bool) -> Array1<f64> {
    let idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == positive).collect();
    x.select(Axis(0), &idx).mean_axis(Axis(0)).unwrap()
}

/// Nearest-centroid scores: distance to the negative centroid minus distance
/// to the positive centroid, so positive scores predict the positive class.
pub fn ptl_fit_predict(
    train_x: ArrayView2<f64>,
    train_y: &[bool],
    test_x: ArrayView2<f64>,
) -> Result<Vec<f64>, FewShotError> {
    check_binary(train_y)?;
    let pos = centroid(train_x, train_y, true);
    let neg = centroid(train_x, train_y, false);
    Ok(test_x
        .rows()
        .into_iter()
        .map(|r| {
            let dn = (&r - &neg).mapv(|v| v * v).sum().sqrt();
            let dp = (&r - &pos).mapv(|v| v * v).sum().sqrt();
            dn - dp
        })
        .collect())
}

/// Outcome of the penalized logistic fit used by [`lr_fit_predict`].
#[derive(Debug, Clone, PartialEq)]
pub struct LrScores {
    /// Predicted log-odds of the positive class.
    pub scores: Vec<f64>,
    pub converged: bool,
}

fn with_intercept(x: ArrayView2<f64>) -> DMatrix<f64> {
    let (n, d) = x.dim();
    DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { x[[i, j - 1]] })
}

/// L2-penalized (strength 1, intercept free) logistic regression fit by
/// Newton's method; scores are log-odds.
pub fn lr_fit_predict(
    train_x: ArrayView2<f64>,
    train_y: &[bool],
    test_x: ArrayView2<f64>,
) -> Result<LrScores, FewShotError> {
    check_binary(train_y)?;
    let y: Vec<f64> = train_y.iter().map(|&v| v as u8 as f64).collect();
    let fit = fit_logistic(&with_intercept(train_x), &y, Some(0), LogisticOptions::default());
    let scores = (with_intercept(test_x) * &fit.coef).iter().copied().collect();
    Ok(LrScores {
        scores,
        converged: fit.converged,
    })
}

/// Two-layer ReLU network trained with Adam; scores are output logits.
pub fn mlp_fit_predict(
    train_x: ArrayView2<f64>,
    train_y: &[bool],
    test_x: ArrayView2<f64>,
    seed: u64,
) -> Result<Vec<f64>, FewShotError> {
    check_binary(train_y)?;
    let y: Vec<f64> = train_y.iter().map(|&v| v as u8 as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = MlpOptions::default();
    let mut net = Mlp::new(train_x.ncols(), &opts, &mut rng);
    net.train(train_x, &y, &opts);
    Ok(net.logits(test_x).to_vec())
}

/// Random forest of CART trees; scores are the fraction of trees voting positive.
pub fn rf_fit_predict(
    train_x: ArrayView2<f64>,
    train_y: &[bool],
    test_x: ArrayView2<f64>,
    seed: u64,
) -> Result<Vec<f64>, FewShotError> {
    check_binary(train_y)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let forest = RandomForest::fit(train_x, train_y, N_TREES, &mut rng);
    Ok(test_x.rows().into_iter().map(|r| forest.vote(r)).collect())
}

/// Scores of `classifier` for the positive class on `test_x`.
pub fn fit_predict(
    classifier: Classifier,
    train_x: ArrayView2<f64>,
    train_y: &[bool],
    test_x: ArrayView2<f64>,
    seed: u64,
) -> Result<Vec<f64>, FewShotError> {
    match classifier {
        Classifier::Ptl => ptl_fit_predict(train_x, train_y, test_x),
        Classifier::Lr => lr_fit_predict(train_x, train_y, test_x).map(|r| r.scores),
        Classifier::Mlp => mlp_fit_predict(train_x, train_y, test_x, seed),
        Classifier::Rf => rf_fit_predict(train_x, train_y, test_x, seed),
    }
}

/// Two isotropic unit-variance Gaussian classes in `d` dimensions whose
/// means lie `separation` standard deviations apart along a random unit
/// direction. Labels are `"0"` and `"1"`.
pub fn gaussian_blobs(
    n_per_class: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> EmbeddingDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v /= norm);
    let n = 2 * n_per_class;
    let mut vectors = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let offset = if class == 1 { separation / 2.0 } else { -separation / 2.0 };
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            vectors[[i, j]] = z + offset * dir[j];
        }
        labels.push(class.to_string());
    }
    let ids = (0..n).map(|i| format!("e{i:05}")).collect();
    EmbeddingDataset::new(ids, labels, vectors).expect("generated dataset is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> EmbeddingDataset {
        let n = 20;
        let vectors = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let labels = (0..n).map(|i| if i < 10 { "a" } else { "b" }.to_string()).collect();
        let ids = (0..n).map(|i| i.to_string()).collect();
        EmbeddingDataset::new(ids, labels, vectors).unwrap()
    }

    #[test]
    fn one_shot_split_sizes() {
        let s = sample_k_shot(&toy(), 1, 7).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (2, 18));
        assert_eq!(s, sample_k_shot(&toy(), 1, 7).unwrap());
    }

    #[test]
    fn insufficient_members() {
        assert!(matches!(
            sample_k_shot(&toy(), 10, 0),
            Err(FewShotError::InsufficientClassMembers { have: 10, k: 10, .. })
        ));
        assert_eq!(sample_k_shot(&toy(), 0, 0), Err(FewShotError::InvalidK));
    }

    #[test]
    fn class_order_is_numeric_when_possible() {
        let v = Array2::zeros((3, 1));
        let d = EmbeddingDataset::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["10".into(), "2".into(), "10".into()],
            v,
        )
        .unwrap();
        assert_eq!(d.classes(), &["2".to_string(), "10".to_string()]);
        assert_eq!(d.labels(), &[1, 0, 1]);
    }

    #[test]
    fn ptl_midpoint_and_centroid() {
        let x = array![[0.0, 0.0], [2.0, 4.0]];
        let y = [false, true];
        let t = array![[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]];
        let s = ptl_fit_predict(x.view(), &y, t.view()).unwrap();
        assert_eq!(s[0], 0.0);
        assert!(s[1] > 0.0 && s[2] < 0.0);
    }

    #[test]
    fn lr_antipodal_shots_have_zero_intercept() {
        let x = array![[1.0, 2.0], [-1.0, -2.0], [2.0, 0.5], [-2.0, -0.5]];
        let y = [true, false, true, false];
        let r = lr_fit_predict(x.view(), &y, array![[0.0, 0.0]].view()).unwrap();
        assert!(r.converged);
        assert!(r.scores[0].abs() < 1e-6);
        let train = lr_fit_predict(x.view(), &y, x.view()).unwrap();
        for (s, &l) in train.scores.iter().zip(&y) {
            assert_eq!(*s > 0.0, l);
        }
    }

    #[test]
    fn single_class_training_is_rejected() {
        let x = array![[0.0], [1.0]];
        assert_eq!(
            ptl_fit_predict(x.view(), &[true, true], x.view()),
            Err(FewShotError::SingleClass)
        );
    }
}

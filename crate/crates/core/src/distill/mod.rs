//! Desk-scale multi-crop self-distillation: view sampling, a tiny
//! tanh encoder trained as student against an EMA teacher, temperature
//! sharpening and optional centering, and collapse diagnostics.

mod encoder;
mod views;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use encoder::{
    forward, log_softmax, loss_gradient, multicrop_loss, softmax, student_loss, EncoderShape,
    EntityBatch, Layers, LossBatch,
};
pub use views::{make_views, synthetic_entities, Augmentations, EntitySet, Image, ViewConfig, Views};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistillError {
    #[error("entity is {width}x{height}, views need at least {min}x{min}")]
    EntityTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid loss batch: {0}")]
    InvalidBatch(String),
    #[error("non-finite loss {loss} at step {step}; {dump}")]
    NonFiniteLoss { step: usize, loss: f64, dump: String },
    #[error("dataset has no entities")]
    EmptyDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub encoder: EncoderShape,
    pub views: ViewConfig,
    pub tau_student: f64,
    pub tau_teacher: f64,
    /// EMA momentum of the teacher parameters.
    pub momentum: f64,
    /// Momentum of the teacher-logit center.
    pub center_momentum: f64,
    pub centering: bool,
    pub learning_rate: f64,
    /// Rescales the student gradient to at most this Euclidean norm.
    pub grad_clip: Option<f64>,
    /// Entities drawn (with replacement) per step.
    pub batch_size: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderShape::default(),
            views: ViewConfig::default(),
            tau_student: 0.1,
            tau_teacher: 0.04,
            momentum: 0.996,
            center_momentum: 0.9,
            centering: true,
            learning_rate: 0.5,
            grad_clip: Some(5.0),
            batch_size: 8,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<(), DistillError> {
        self.views.validate()?;
        let bad = |m: String| Err(DistillError::InvalidConfig(m));
        for size in [self.views.global_size, self.views.local_size] {
            if size * size != self.encoder.input {
                return bad(format!(
                    "{size}x{size} views do not match encoder input {}",
                    self.encoder.input
                ));
            }
        }
        if self.encoder.hidden == 0 || self.encoder.output < 2 {
            return bad("encoder needs a hidden layer and at least 2 outputs".into());
        }
        if !(self.tau_student > 0.0 && self.tau_teacher > 0.0) {
            return bad("temperatures must be positive".into());
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return bad("EMA momentum must lie in (0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.center_momentum) {
            return bad("center momentum must lie in [0, 1)".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive".into());
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return bad("gradient clip must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillState {
    pub student: Vec<f64>,
    pub teacher: Vec<f64>,
    pub center: Vec<f64>,
    pub tau_student: f64,
    pub tau_teacher: f64,
    pub momentum: f64,
    pub step: usize,
}

impl DistillState {
    /// Random student, teacher copied from it, zero center.
    pub fn init<R: Rng>(cfg: &DistillConfig, rng: &mut R) -> Self {
        let student = cfg.encoder.init(rng);
        Self {
            teacher: student.clone(),
            student,
            center: vec![0.0; cfg.encoder.output],
            tau_student: cfg.tau_student,
            tau_teacher: cfg.tau_teacher,
            momentum: cfg.momentum,
            step: 0,
        }
    }

    /// [`DistillState::init`] driven by a ChaCha8 stream seeded with `seed`.
    pub fn from_seed(cfg: &DistillConfig, seed: u64) -> Self {
        Self::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn dump(&self) -> String {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        format!(
            "step={} |student|={:.6e} |teacher|={:.6e} center={:?}",
            self.step,
            norm(&self.student),
            norm(&self.teacher),
            self.center
        )
    }
}

/// `teacher <- m * teacher + (1 - m) * student`, elementwise.
pub fn ema_update(state: &mut DistillState) {
    let m = state.momentum;
    for (t, s) in state.teacher.iter_mut().zip(&state.student) {
        *t = m * *t + (1.0 - m) * s;
    }
}

/// `c <- rho * c + (1 - rho) * mean of the teacher logit rows`.
pub fn center_update(center: &[f64], teacher_logits: ArrayView2<f64>, rho: f64) -> Vec<f64> {
    let mean = teacher_logits
        .mean_axis(Axis(0))
        .expect("at least one teacher row");
    center
        .iter()
        .zip(mean.iter())
        .map(|(c, m)| rho * c + (1.0 - rho) * m)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseMetric {
    /// Sample standard deviation of each output dimension over rows.
    pub per_dim_std: Vec<f64>,
    /// Mean of `per_dim_std`.
    pub mean_std: f64,
    /// Mean Shannon entropy (nats) of the rows.
    pub entropy: f64,
}

/// Spread and sharpness of a set of output distributions (one per row).
pub fn collapse_metric(rows: ArrayView2<f64>) -> CollapseMetric {
    let n = rows.nrows();
    assert!(n >= 2, "collapse metric needs at least two rows");
    let per_dim_std: Vec<f64> = rows.std_axis(Axis(0), 1.0).to_vec();
    let mean_std = per_dim_std.iter().sum::<f64>() / per_dim_std.len() as f64;
    let entropy = rows
        .rows()
        .into_iter()
        .map(|r| -r.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    CollapseMetric {
        per_dim_std,
        mean_std,
        entropy,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub loss: f64,
    pub embedding_std: f64,
    pub teacher_entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub state: DistillState,
    pub log: Vec<LogRecord>,
}

fn flatten(images: &[Image]) -> Array2<f64> {
    let p = images[0].pixels.len();
    let flat: Vec<f64> = images.iter().flat_map(|i| i.pixels.iter().copied()).collect();
    Array2::from_shape_vec((images.len(), p), flat).unwrap()
}

/// Teacher output distributions of every entity's unaugmented whole view.
pub fn teacher_embeddings(
    state: &DistillState,
    data: &EntitySet,
    cfg: &DistillConfig,
) -> Array2<f64> {
    let size = cfg.views.global_size;
    let views: Vec<Image> = data
        .images
        .iter()
        .map(|e| e.crop_resize(0.0, 0.0, e.width as f64, e.height as f64, size))
        .collect();
    let z = cfg.encoder.logits(&state.teacher, flatten(&views).view());
    let center = cfg.centering.then_some(state.center.as_slice());
    softmax(z.view(), state.tau_teacher, center)
}

/// Runs `steps` updates. Each step samples `batch_size` entities, builds
/// their views, takes one gradient-descent step on the student against the
/// teacher's global-view targets, then updates the teacher by EMA and the
/// center (when enabled). The log is evaluated after every step on
/// [`teacher_embeddings`] of the whole dataset.
pub fn train(
    mut state: DistillState,
    data: &EntitySet,
    cfg: &DistillConfig,
    steps: usize,
    seed: u64,
) -> Result<TrainOutcome, DistillError> {
    cfg.validate()?;
    if data.images.is_empty() {
        return Err(DistillError::EmptyDataset);
    }
    if data.images.len() < 2 && steps > 0 {
        return Err(DistillError::InvalidConfig(
            "collapse diagnostics need at least two entities".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        let mut teacher_logits = Vec::new();
        for _ in 0..cfg.batch_size {
            let entity = &data.images[rng.gen_range(0..data.images.len())];
            let views = make_views(entity, &cfg.views, &mut rng)?;
            let zt = cfg.encoder.logits(&state.teacher, flatten(&views.globals).view());
            let center = cfg.centering.then_some(state.center.as_slice());
            let targets = softmax(zt.view(), state.tau_teacher, center);
            teacher_logits.push(zt);
            batch.push(EntityBatch {
                locals: flatten(&views.locals),
                targets,
            });
        }
        let (loss, grad) = loss_gradient(&cfg.encoder, &state.student, &batch, state.tau_student)?;
        if !loss.is_finite() {
            return Err(DistillError::NonFiniteLoss {
                step: state.step,
                loss,
                dump: state.dump(),
            });
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let step = match cfg.grad_clip {
            Some(c) if norm > c => cfg.learning_rate * c / norm,
            _ => cfg.learning_rate,
        };
        for (p, g) in state.student.iter_mut().zip(&grad) {
            *p -= step * g;
        }
        ema_update(&mut state);
        if cfg.centering {
            let views: Vec<ArrayView2<f64>> = teacher_logits.iter().map(|z| z.view()).collect();
            let all = ndarray::concatenate(Axis(0), &views).unwrap();
            state.center = center_update(&state.center, all.view(), cfg.center_momentum);
        }
        state.step += 1;
        let metric = collapse_metric(teacher_embeddings(&state, data, cfg).view());
        log.push(LogRecord {
            step: state.step,
            loss,
            embedding_std: metric.mean_std,
            teacher_entropy: metric.entropy,
        });
    }
    Ok(TrainOutcome { state, log })
}

/// Final-state summary written next to the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config: DistillConfig,
    pub seed: u64,
    pub steps: usize,
    pub final_loss: Option<f64>,
    pub embedding_std: f64,
    pub per_dim_std: Vec<f64>,
    pub teacher_entropy: f64,
    pub center: Vec<f64>,
    pub student_norm: f64,
    pub teacher_norm: f64,
}

pub fn summarize(
    outcome: &TrainOutcome,
    data: &EntitySet,
    cfg: &DistillConfig,
    seed: u64,
) -> TrainSummary {
    let metric = collapse_metric(teacher_embeddings(&outcome.state, data, cfg).view());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    TrainSummary {
        config: *cfg,
        seed,
        steps: outcome.state.step,
        final_loss: outcome.log.last().map(|r| r.loss),
        embedding_std: metric.mean_std,
        per_dim_std: metric.per_dim_std,
        teacher_entropy: metric.entropy,
        center: outcome.state.center.clone(),
        student_norm: norm(&outcome.state.student),
        teacher_norm: norm(&outcome.state.teacher),
    }
}

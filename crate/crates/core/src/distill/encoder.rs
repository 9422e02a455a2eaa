use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::DistillError;

/// `input -> hidden (tanh) -> output` layer sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderShape {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Default for EncoderShape {
    fn default() -> Self {
        Self {
            input: 16 * 16,
            hidden: 32,
            output: 8,
        }
    }
}

/// Views into a flat parameter vector laid out as `[W1 | b1 | W2 | b2]`,
/// with `W1: hidden x input` and `W2: output x hidden`, both row-major.
pub struct Layers<'a> {
    pub w1: ArrayView2<'a, f64>,
    pub b1: ArrayView1<'a, f64>,
    pub w2: ArrayView2<'a, f64>,
    pub b2: ArrayView1<'a, f64>,
}

impl EncoderShape {
    pub fn n_params(&self) -> usize {
        self.hidden * self.input + self.hidden + self.output * self.hidden + self.output
    }

    pub fn layers<'a>(&self, theta: &'a [f64]) -> Layers<'a> {
        assert_eq!(theta.len(), self.n_params(), "parameter count mismatch");
        let (p, h, d) = (self.input, self.hidden, self.output);
        let (w1, rest) = theta.split_at(h * p);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(d * h);
        Layers {
            w1: ArrayView2::from_shape((h, p), w1).unwrap(),
            b1: ArrayView1::from(b1),
            w2: ArrayView2::from_shape((d, h), w2).unwrap(),
            b2: ArrayView1::from(b2),
        }
    }

    /// Weights drawn from `N(0, 1/fan_in)`, zero biases.
    pub fn init<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = vec![0.0; self.n_params()];
        let (p, h, d) = (self.input, self.hidden, self.output);
        let n1 = Normal::new(0.0, (1.0 / p as f64).sqrt()).unwrap();
        let n2 = Normal::new(0.0, (1.0 / h as f64).sqrt()).unwrap();
        for w in &mut theta[..h * p] {
            *w = n1.sample(rng);
        }
        let off = h * p + h;
        for w in &mut theta[off..off + d * h] {
            *w = n2.sample(rng);
        }
        theta
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), DistillError> {
        if x.ncols() != self.input {
            return Err(DistillError::InvalidConfig(format!(
                "view has {} pixels, encoder expects {}",
                x.ncols(),
                self.input
            )));
        }
        Ok(())
    }

    /// Hidden activations and logits for a batch of flattened images (rows).
    pub fn forward(&self, theta: &[f64], x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let l = self.layers(theta);
        let hidden = (x.dot(&l.w1.t()) + &l.b1).mapv(f64::tanh);
        let logits = hidden.dot(&l.w2.t()) + &l.b2;
        (hidden, logits)
    }

    pub fn logits(&self, theta: &[f64], x: ArrayView2<f64>) -> Array2<f64> {
        self.forward(theta, x).1
    }
}

/// Row-wise `log softmax(z / temp)`.
pub fn log_softmax(z: ArrayView2<f64>, temp: f64) -> Array2<f64> {
    let mut out = z.mapv(|v| v / temp);
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Row-wise `softmax((z - center) / temp)`; no centering when `center` is `None`.
pub fn softmax(z: ArrayView2<f64>, temp: f64, center: Option<&[f64]>) -> Array2<f64> {
    let shifted = match center {
        Some(c) => &z - &ArrayView1::from(c),
        None => z.to_owned(),
    };
    log_softmax(shifted.view(), temp).mapv(f64::exp)
}

/// Teacher or student output distribution of one flattened image.
pub fn forward(
    shape: &EncoderShape,
    theta: &[f64],
    image: &[f64],
    temp: f64,
    center: Option<&[f64]>,
) -> Array1<f64> {
    let x = ArrayView2::from_shape((1, image.len()), image).expect("single row");
    let z = shape.logits(theta, x);
    softmax(z.view(), temp, center).row(0).to_owned()
}

/// Teacher distributions `g` (`m x d`) against student distributions `l`
/// (`n x d`). Rows are probability vectors; student rows must be strictly
/// positive so their logarithm is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    g: Array2<f64>,
    l: Array2<f64>,
}

impl LossBatch {
    pub fn new(g: Array2<f64>, l: Array2<f64>) -> Result<Self, DistillError> {
        if g.ncols() != l.ncols() || g.nrows() == 0 || l.nrows() == 0 {
            return Err(DistillError::InvalidBatch(format!(
                "teacher {:?} and student {:?} shapes are incompatible",
                g.dim(),
                l.dim()
            )));
        }
        for (name, m, floor_ok) in [("teacher", &g, true), ("student", &l, false)] {
            for (i, row) in m.rows().into_iter().enumerate() {
                let bad = |v: f64| if floor_ok { !(v >= 0.0) } else { !(v > 0.0) };
                if row.iter().any(|&v| bad(v)) || (row.sum() - 1.0).abs() > 1e-9 {
                    return Err(DistillError::InvalidBatch(format!(
                        "{name} row {i} is not a valid probability vector"
                    )));
                }
            }
        }
        Ok(Self { g, l })
    }

    pub fn teacher(&self) -> ArrayView2<'_, f64> {
        self.g.view()
    }

    pub fn student(&self) -> ArrayView2<'_, f64> {
        self.l.view()
    }
}

/// `1/(2n) * sum_i sum_j sum_k -g[j,k] ln l[i,k]`.
pub fn multicrop_loss(batch: &LossBatch) -> f64 {
    let log_l = batch.l.mapv(f64::ln);
    cross_term(batch.g.view(), log_l.view())
}

fn cross_term(g: ArrayView2<f64>, log_l: ArrayView2<f64>) -> f64 {
    let n = log_l.nrows() as f64;
    let g_sum = g.sum_axis(Axis(0));
    -log_l.dot(&g_sum).sum() / (2.0 * n)
}

/// Views of one entity prepared for a student update: flattened local views
/// (`n x input`) and the fixed teacher targets (`m x d`).
#[derive(Debug, Clone, PartialEq)]
pub struct EntityBatch {
    pub locals: Array2<f64>,
    pub targets: Array2<f64>,
}

/// Mean multi-crop loss over entities, student path at temperature `tau_s`.
pub fn student_loss(
    shape: &EncoderShape,
    theta: &[f64],
    batch: &[EntityBatch],
    tau_s: f64,
) -> Result<f64, DistillError> {
    let mut total = 0.0;
    for e in batch {
        shape.check_input(&e.locals.view())?;
        let z = shape.logits(theta, e.locals.view());
        total += cross_term(e.targets.view(), log_softmax(z.view(), tau_s).view());
    }
    Ok(total / batch.len() as f64)
}

/// Loss and its exact gradient with respect to the student parameters.
/// Targets are constants, so nothing flows to the teacher.
pub fn loss_gradient(
    shape: &EncoderShape,
    theta: &[f64],
    batch: &[EntityBatch],
    tau_s: f64,
) -> Result<(f64, Vec<f64>), DistillError> {
    let (p, h, d) = (shape.input, shape.hidden, shape.output);
    let layers = shape.layers(theta);
    let mut grad = vec![0.0; shape.n_params()];
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for e in batch {
        shape.check_input(&e.locals.view())?;
        let x = e.locals.view();
        let (hidden, z) = shape.forward(theta, x);
        let log_l = log_softmax(z.view(), tau_s);
        loss += scale * cross_term(e.targets.view(), log_l.view());

        let n = x.nrows() as f64;
        let m = e.targets.nrows() as f64;
        let g_sum = e.targets.sum_axis(Axis(0));
        // dL/dz_i = (m l_i - sum_j g_j) / (2 n tau_s)
        let dz = (log_l.mapv(f64::exp) * m - &g_sum) * (scale / (2.0 * n * tau_s));
        let dw2 = dz.t().dot(&hidden);
        let db2 = dz.sum_axis(Axis(0));
        let da = dz.dot(&layers.w2) * hidden.mapv(|t| 1.0 - t * t);
        let dw1 = da.t().dot(&x);
        let db1 = da.sum_axis(Axis(0));

        let mut gv = ndarray::ArrayViewMut1::from(grad.as_mut_slice());
        gv.slice_mut(s![..h * p])
            .iter_mut()
            .zip(dw1.iter())
            .for_each(|(g, v)| *g += v);
        gv.slice_mut(s![h * p..h * p + h]).scaled_add(1.0, &db1);
        gv.slice_mut(s![h * p + h..h * p + h + d * h])
            .iter_mut()
            .zip(dw2.iter())
            .for_each(|(g, v)| *g += v);
        gv.slice_mut(s![h * p + h + d * h..]).scaled_add(1.0, &db2);
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entropy(p: ArrayView1<f64>) -> f64 {
        -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
    }

    #[test]
    fn hand_value() {
        let b = LossBatch::new(array![[1.0, 0.0]], array![[0.5, 0.5]]).unwrap();
        let v = multicrop_loss(&b);
        assert!((v - 0.346574).abs() < 1e-6, "{v}");
        assert!((v - 0.5 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn loss_at_matching_rows_is_half_entropy() {
        let g = array![[0.2, 0.5, 0.3]];
        let b = LossBatch::new(g.clone(), g.clone()).unwrap();
        assert!((multicrop_loss(&b) - entropy(g.row(0)) / 2.0).abs() < 1e-15);
        let other = LossBatch::new(g.clone(), array![[0.3, 0.4, 0.3]]).unwrap();
        assert!(multicrop_loss(&other) > multicrop_loss(&b));
    }

    #[test]
    fn invalid_rows_rejected() {
        assert!(LossBatch::new(array![[0.5, 0.6]], array![[0.5, 0.5]]).is_err());
        assert!(LossBatch::new(array![[0.5, 0.5]], array![[1.0, 0.0]]).is_err());
        assert!(LossBatch::new(array![[-0.1, 1.1]], array![[0.5, 0.5]]).is_err());
        assert!(LossBatch::new(array![[0.5, 0.5]], array![[0.2, 0.3, 0.5]]).is_err());
    }

    #[test]
    fn zero_weights_give_uniform_output() {
        let shape = EncoderShape::default();
        let theta = vec![0.0; shape.n_params()];
        let img = vec![0.3; shape.input];
        let p = forward(&shape, &theta, &img, 0.1, None);
        assert!(p.iter().all(|&v| (v - 1.0 / 8.0).abs() < 1e-15));
    }

    #[test]
    fn entropy_falls_as_temperature_halves() {
        let z = array![[0.3, -1.2, 0.9, 0.1]];
        let e: Vec<f64> = [1.0, 0.5, 0.25]
            .iter()
            .map(|&t| entropy(softmax(z.view(), t, None).row(0)))
            .collect();
        assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
        let p = softmax(z.view(), 0.25, None);
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let shape = EncoderShape {
            input: 9,
            hidden: 5,
            output: 4,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut theta = shape.init(&mut rng);
        for v in &mut theta {
            *v += rng.gen_range(-0.1..0.1);
        }
        let teacher = shape.init(&mut rng);
        let batch: Vec<EntityBatch> = (0..2)
            .map(|_| {
                let locals = Array2::from_shape_simple_fn((3, 9), || rng.gen_range(-1.0..1.0));
                let globals = Array2::from_shape_simple_fn((2, 9), || rng.gen_range(-1.0..1.0));
                let targets = softmax(shape.logits(&teacher, globals.view()).view(), 0.04, None);
                EntityBatch { locals, targets }
            })
            .collect();
        let (loss, grad) = loss_gradient(&shape, &theta, &batch, 0.1).unwrap();
        assert!((loss - student_loss(&shape, &theta, &batch, 0.1).unwrap()).abs() < 1e-12);
        let h = 1e-5;
        let mut t = theta.clone();
        let num: Vec<f64> = (0..theta.len())
            .map(|i| {
                t[i] = theta[i] + h;
                let up = student_loss(&shape, &t, &batch, 0.1).unwrap();
                t[i] = theta[i] - h;
                let down = student_loss(&shape, &t, &batch, 0.1).unwrap();
                t[i] = theta[i];
                (up - down) / (2.0 * h)
            })
            .collect();
        let diff: f64 = grad.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = num.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-6, "{}", diff / norm);
    }
}

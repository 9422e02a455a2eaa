use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpOptions {
    pub hidden: (usize, usize),
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Full-batch epochs, one Adam step each.
    pub epochs: usize,
}

impl Default for MlpOptions {
    fn default() -> Self {
        Self {
            hidden: (256, 128),
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 200,
        }
    }
}

/// `d -> h1 -> h2 -> 1` network with ReLU hidden layers and a logit output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array1<f64>,
    pub b3: Array1<f64>,
}

/// Gradient of the mean logistic loss, shaped like the network.
pub type MlpGradient = Mlp;

struct Activations {
    a1: Array2<f64>,
    h1: Array2<f64>,
    a2: Array2<f64>,
    h2: Array2<f64>,
    z: Array1<f64>,
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl Mlp {
    /// He-scaled normal weights (`sd = sqrt(2 / fan_in)`) and zero biases.
    pub fn new<R: Rng>(d: usize, opts: &MlpOptions, rng: &mut R) -> Self {
        let (h1, h2) = opts.hidden;
        let mut init = |rows: usize, cols: usize| {
            let dist = Normal::new(0.0, (2.0 / rows as f64).sqrt()).unwrap();
            Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
        };
        let w1 = init(d, h1);
        let w2 = init(h1, h2);
        let w3 = init(h2, 1).into_shape_with_order(h2).unwrap();
        Self {
            w1,
            b1: Array1::zeros(h1),
            w2,
            b2: Array1::zeros(h2),
            w3,
            b3: Array1::zeros(1),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.len()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.len()),
            w3: Array1::zeros(self.w3.len()),
            b3: Array1::zeros(1),
        }
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
            self.w3.as_slice_mut().unwrap(),
            self.b3.as_slice_mut().unwrap(),
        ]
    }

    fn slices(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
            self.w3.as_slice().unwrap(),
            self.b3.as_slice().unwrap(),
        ]
    }

    /// All parameters in a fixed order (w1, b1, w2, b2, w3, b3).
    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        }
        assert_eq!(offset, flat.len(), "parameter count mismatch");
    }

    fn forward(&self, x: ArrayView2<f64>) -> Activations {
        let a1 = x.dot(&self.w1) + &self.b1;
        let h1 = relu(&a1);
        let a2 = h1.dot(&self.w2) + &self.b2;
        let h2 = relu(&a2);
        let z = h2.dot(&self.w3) + self.b3[0];
        Activations { a1, h1, a2, h2, z }
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.forward(x).z
    }

    /// Mean logistic loss over the batch.
    pub fn loss(&self, x: ArrayView2<f64>, y: &[f64]) -> f64 {
        let z = self.logits(x);
        z.iter().zip(y).map(|(&z, &y)| softplus(z) - y * z).sum::<f64>() / y.len() as f64
    }

    /// Loss and its exact gradient by backpropagation.
    pub fn loss_and_gradient(&self, x: ArrayView2<f64>, y: &[f64]) -> (f64, MlpGradient) {
        let n = y.len() as f64;
        let act = self.forward(x);
        let loss = act.z.iter().zip(y).map(|(&z, &y)| softplus(z) - y * z).sum::<f64>() / n;
        let dz: Array1<f64> = act
            .z
            .iter()
            .zip(y)
            .map(|(&z, &y)| (sigmoid(z) - y) / n)
            .collect();

        let w3 = act.h2.t().dot(&dz);
        let b3 = Array1::from_elem(1, dz.sum());
        let dh2 = dz
            .view()
            .insert_axis(Axis(1))
            .dot(&self.w3.view().insert_axis(Axis(0)));
        let mut da2 = dh2;
        da2.zip_mut_with(&act.a2, |g, &a| {
            if a <= 0.0 {
                *g = 0.0
            }
        });
        let w2 = act.h1.t().dot(&da2).as_standard_layout().into_owned();
        let b2 = da2.sum_axis(Axis(0));
        let mut da1 = da2.dot(&self.w2.t());
        da1.zip_mut_with(&act.a1, |g, &a| {
            if a <= 0.0 {
                *g = 0.0
            }
        });
        let w1 = x.t().dot(&da1).as_standard_layout().into_owned();
        let b1 = da1.sum_axis(Axis(0));
        (
            loss,
            Mlp {
                w1,
                b1,
                w2,
                b2,
                w3,
                b3,
            },
        )
    }

    /// Full-batch Adam for `opts.epochs` steps.
    pub fn train(&mut self, x: ArrayView2<f64>, y: &[f64], opts: &MlpOptions) {
        let mut m = self.zeros_like();
        let mut v = self.zeros_like();
        for t in 1..=opts.epochs {
            let (_, g) = self.loss_and_gradient(x, y);
            let c1 = 1.0 - opts.beta1.powi(t as i32);
            let c2 = 1.0 - opts.beta2.powi(t as i32);
            let step = opts.learning_rate;
            for (((p, g), m), v) in self
                .slices_mut()
                .into_iter()
                .zip(g.slices())
                .zip(m.slices_mut())
                .zip(v.slices_mut())
            {
                for i in 0..p.len() {
                    m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g[i];
                    v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g[i] * g[i];
                    let mhat = m[i] / c1;
                    let vhat = v[i] / c2;
                    p[i] -= step * mhat / (vhat.sqrt() + opts.eps);
                }
            }
        }
    }
}

//! Multivariate linear and L2-penalized logistic regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::StatsError;

/// Column-named design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    names: Vec<String>,
    matrix: DMatrix<f64>,
}

impl Design {
    pub fn new(names: Vec<String>, matrix: DMatrix<f64>) -> Result<Self, StatsError> {
        if names.len() != matrix.ncols() {
            return Err(StatsError::DimensionMismatch {
                expected: matrix.ncols(),
                got: names.len(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        Ok(Self { names, matrix })
    }

    /// Builds a design with a leading `intercept` column from named predictor columns.
    pub fn with_intercept(columns: &[(String, Vec<f64>)], n: usize) -> Result<Self, StatsError> {
        let mut names = vec!["intercept".to_string()];
        let mut m = DMatrix::from_element(n, columns.len() + 1, 1.0);
        for (j, (name, col)) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(StatsError::DimensionMismatch {
                    expected: n,
                    got: col.len(),
                });
            }
            names.push(name.clone());
            m.column_mut(j + 1).copy_from_slice(col);
        }
        Self::new(names, m)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Index of a column that is identically one, if any.
    pub fn intercept_column(&self) -> Option<usize> {
        (0..self.ncols()).find(|&j| self.matrix.column(j).iter().all(|&v| v == 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub coef: f64,
    pub std_error: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub outcome: String,
    pub model: Model,
    pub terms: Vec<Term>,
    /// In-sample R^2; linear models only.
    pub r_squared: Option<f64>,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Penalized deviance after each accepted Newton step (logistic only).
    pub deviance_trace: Vec<f64>,
    /// Norm of the penalized score at the final iterate (logistic only).
    pub gradient_norm: f64,
}

impl RegressionResult {
    pub fn term(&self, name: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coef).collect()
    }
}

/// Householder QR with column pivoting, `A P = Q R`.
struct PivotedQr {
    /// Householder vectors below the diagonal, R on and above it.
    qr: DMatrix<f64>,
    tau: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    fn new(a: &DMatrix<f64>) -> Self {
        let (n, p) = a.shape();
        let mut qr = a.clone();
        let mut perm: Vec<usize> = (0..p).collect();
        let mut tau = vec![0.0; p.min(n)];
        let mut norms: Vec<f64> = (0..p).map(|j| qr.column(j).norm_squared()).collect();
        let scale = norms.iter().cloned().fold(0.0, f64::max).sqrt();
        let tol = scale * 1e-10 * (n.max(p) as f64);
        let mut rank = 0;
        for k in 0..p.min(n) {
            // recompute trailing norms to avoid downdate drift
            for j in k..p {
                norms[j] = qr.view((k, j), (n - k, 1)).norm_squared();
            }
            let (best, _) = (k..p)
                .map(|j| (j, norms[j]))
                .fold((k, -1.0), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
            if best != k {
                qr.swap_columns(k, best);
                perm.swap(k, best);
                norms.swap(k, best);
            }
            let alpha = norms[k].sqrt();
            if alpha <= tol {
                break;
            }
            rank += 1;
            let x0 = qr[(k, k)];
            let beta = if x0 >= 0.0 { -alpha } else { alpha };
            let v0 = x0 - beta;
            for i in (k + 1)..n {
                qr[(i, k)] /= v0;
            }
            tau[k] = (beta - x0) / beta;
            qr[(k, k)] = beta;
            for j in (k + 1)..p {
                let mut s = qr[(k, j)];
                for i in (k + 1)..n {
                    s += qr[(i, k)] * qr[(i, j)];
                }
                s *= tau[k];
                qr[(k, j)] -= s;
                for i in (k + 1)..n {
                    let vik = qr[(i, k)];
                    qr[(i, j)] -= s * vik;
                }
            }
        }
        Self {
            qr,
            tau,
            perm,
            rank,
        }
    }

    /// `Q^T b`
    fn qt_mul(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.qr.nrows();
        let mut y = b.clone();
        for k in 0..self.rank {
            let mut s = y[k];
            for i in (k + 1)..n {
                s += self.qr[(i, k)] * y[i];
            }
            s *= self.tau[k];
            y[k] -= s;
            for i in (k + 1)..n {
                y[i] -= s * self.qr[(i, k)];
            }
        }
        y
    }

    /// Upper-triangular inverse of the leading `rank x rank` block of R.
    fn r_inverse(&self) -> DMatrix<f64> {
        let r = self.rank;
        let mut inv = DMatrix::zeros(r, r);
        for j in 0..r {
            inv[(j, j)] = 1.0 / self.qr[(j, j)];
            for i in (0..j).rev() {
                let mut s = 0.0;
                for k in (i + 1)..=j {
                    s += self.qr[(i, k)] * inv[(k, j)];
                }
                inv[(i, j)] = -s / self.qr[(i, i)];
            }
        }
        inv
    }
}

fn two_sided_normal(z: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * normal.sf(z.abs())).min(1.0)
}

/// Ordinary least squares via a column-pivoted QR factorization.
///
/// The design must contain an intercept column and have full column rank;
/// otherwise the columns that fall outside the numerical rank are named in
/// [`StatsError::RankDeficient`].
pub fn ols_regression(
    outcome: &str,
    design: &Design,
    y: &[f64],
) -> Result<RegressionResult, StatsError> {
    let (n, p) = (design.nrows(), design.ncols());
    if y.len() != n {
        return Err(StatsError::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if n <= p {
        return Err(StatsError::NotEnoughObservations { n, p });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let qr = PivotedQr::new(design.matrix());
    if qr.rank < p {
        let mut columns: Vec<String> = qr.perm[qr.rank..]
            .iter()
            .map(|&j| design.names()[j].clone())
            .collect();
        columns.sort();
        return Err(StatsError::RankDeficient { columns });
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.qt_mul(&yv);
    let rinv = qr.r_inverse();
    let z = &rinv * qty.rows(0, p);
    let mut beta = DVector::zeros(p);
    for (k, &j) in qr.perm.iter().enumerate() {
        beta[j] = z[k];
    }
    let residual = &yv - design.matrix() * &beta;
    let rss = residual.norm_squared();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let r_squared = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let dof = (n - p) as f64;
    let sigma2 = rss / dof;
    // (X^T X)^{-1} = P R^{-1} R^{-T} P^T
    let cov_perm = &rinv * rinv.transpose();
    let t_dist = StudentsT::new(0.0, 1.0, dof).expect("positive dof");
    let terms = (0..p)
        .map(|j| {
            let k = qr.perm.iter().position(|&c| c == j).expect("permutation");
            let se = (sigma2 * cov_perm[(k, k)]).sqrt();
            let p_value = if se > 0.0 {
                (2.0 * t_dist.sf((beta[j] / se).abs())).min(1.0)
            } else if beta[j] == 0.0 {
                1.0
            } else {
                0.0
            };
            Term {
                name: design.names()[j].clone(),
                coef: beta[j],
                std_error: se,
                p_value,
            }
        })
        .collect();
    Ok(RegressionResult {
        outcome: outcome.to_string(),
        model: Model::Linear,
        terms,
        r_squared: Some(r_squared),
        n,
        converged: true,
        iterations: 1,
        deviance_trace: Vec::new(),
        gradient_norm: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    /// L2 strength on non-intercept coefficients; the penalty is `l2/2 * |beta|^2`.
    pub l2: f64,
    pub max_iter: usize,
    /// Convergence threshold on the penalized score norm.
    pub gradient_tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            l2: 1.0,
            max_iter: 100,
            gradient_tol: 1e-8,
        }
    }
}

/// Raw output of the Newton solver.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coef: DVector<f64>,
    /// Inverse of the penalized observed information at `coef`.
    pub covariance: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub deviance_trace: Vec<f64>,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Newton–Raphson with step halving for L2-penalized logistic regression.
///
/// `unpenalized` marks a column (typically the intercept) excluded from the
/// penalty. The penalized deviance is non-increasing across accepted steps.
pub fn fit_logistic(
    x: &DMatrix<f64>,
    y: &[f64],
    unpenalized: Option<usize>,
    opts: LogisticOptions,
) -> LogisticFit {
    let (n, p) = x.shape();
    let penalty: DVector<f64> = DVector::from_fn(p, |j, _| {
        if Some(j) == unpenalized {
            0.0
        } else {
            opts.l2
        }
    });
    let yv = DVector::from_column_slice(y);
    let objective = |beta: &DVector<f64>| -> f64 {
        let eta = x * beta;
        let nll: f64 = (0..n).map(|i| softplus(eta[i]) - y[i] * eta[i]).sum();
        2.0 * nll + beta.component_mul(beta).dot(&penalty)
    };
    let score = |beta: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
        let prob = (x * beta).map(sigmoid);
        let g = x.transpose() * (&yv - &prob) - penalty.component_mul(beta);
        (g, prob)
    };
    let information = |prob: &DVector<f64>| -> DMatrix<f64> {
        let mut xw = x.clone();
        for i in 0..n {
            let w = prob[i] * (1.0 - prob[i]);
            xw.row_mut(i).scale_mut(w);
        }
        let mut h = x.transpose() * xw;
        for j in 0..p {
            h[(j, j)] += penalty[j];
        }
        h
    };
    let solve = |h: &DMatrix<f64>, g: &DVector<f64>| -> Option<(DVector<f64>, DMatrix<f64>)> {
        let chol = h.clone().cholesky()?;
        Some((chol.solve(g), chol.inverse()))
    };

    let mut beta = DVector::zeros(p);
    let mut dev = objective(&beta);
    let mut trace = vec![dev];
    let mut converged = false;
    let mut iterations = 0;
    let (mut g, mut prob) = score(&beta);
    while iterations < opts.max_iter {
        if g.norm() < opts.gradient_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let h = information(&prob);
        let Some((step, _)) = solve(&h, &g) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &beta + &step * t;
            let cdev = objective(&candidate);
            if cdev <= dev {
                beta = candidate;
                dev = cdev;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        trace.push(dev);
        (g, prob) = score(&beta);
    }
    if !converged && g.norm() < opts.gradient_tol {
        converged = true;
    }
    let covariance = solve(&information(&prob), &g)
        .map(|(_, inv)| inv)
        .unwrap_or_else(|| DMatrix::from_element(p, p, f64::NAN));
    LogisticFit {
        coef: beta,
        covariance,
        converged,
        iterations,
        gradient_norm: g.norm(),
        deviance_trace: trace,
    }
}

/// Multivariate logistic regression with Wald standard errors and p-values.
///
/// The intercept column (all ones) is left unpenalized; every other
/// coefficient carries an L2 penalty of strength `opts.l2`. A fit that does
/// not reach the gradient tolerance is returned with `converged = false`.
pub fn logistic_regression_mv(
    outcome: &str,
    design: &Design,
    y: &[f64],
    opts: LogisticOptions,
) -> Result<RegressionResult, StatsError> {
    let (n, p) = (design.nrows(), design.ncols());
    if y.len() != n {
        return Err(StatsError::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if n <= p {
        return Err(StatsError::NotEnoughObservations { n, p });
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(StatsError::NonBinaryOutcome);
    }
    let positives = y.iter().filter(|&&v| v == 1.0).count();
    if positives == 0 || positives == n {
        return Err(StatsError::SingleClass);
    }
    let fit = fit_logistic(design.matrix(), y, design.intercept_column(), opts);
    let terms = (0..p)
        .map(|j| {
            let se = fit.covariance[(j, j)].sqrt();
            let coef = fit.coef[j];
            Term {
                name: design.names()[j].clone(),
                coef,
                std_error: se,
                p_value: if se > 0.0 {
                    two_sided_normal(coef / se)
                } else {
                    f64::NAN
                },
            }
        })
        .collect();
    Ok(RegressionResult {
        outcome: outcome.to_string(),
        model: Model::Logistic,
        terms,
        r_squared: None,
        n,
        converged: fit.converged,
        iterations: fit.iterations,
        deviance_trace: fit.deviance_trace,
        gradient_norm: fit.gradient_norm,
    })
}

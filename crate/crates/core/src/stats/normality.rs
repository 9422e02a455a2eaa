//! Shapiro–Wilk W test using Royston's (1992, 1995) approximations for the
//! coefficients and the null distribution of W.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{check_finite, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapiroResult {
    pub w: f64,
    pub p_value: f64,
}

const G: [f64; 2] = [-2.273, 0.459];
const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.544, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

pub fn shapiro_wilk(x: &[f64]) -> Result<ShapiroResult, StatsError> {
    let n = x.len();
    if n < 3 {
        return Err(StatsError::SampleTooSmall { n, min: 3 });
    }
    if n > 5000 {
        return Err(StatsError::SampleTooLarge { n, max: 5000 });
    }
    check_finite(x)?;
    let mut xs = x.to_vec();
    xs.sort_by(f64::total_cmp);
    let range = xs[n - 1] - xs[0];
    if range <= 0.0 {
        return Err(StatsError::ConstantSample);
    }

    let nf = n as f64;
    let half = n / 2;
    // coefficients for the upper half, a[0] pairs x(n) with x(1)
    let mut a = vec![0.0; half];
    if n == 3 {
        a[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let m: Vec<f64> = (1..=half)
            .map(|i| -normal.inverse_cdf((i as f64 - 0.375) / (nf + 0.25)))
            .collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / nf.sqrt();
        let a1 = poly(&C1, rsn) + m[0] / ssumm2;
        let (start, fac) = if n > 5 {
            let a2 = poly(&C2, rsn) + m[1] / ssumm2;
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
                / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
                .sqrt();
            a[1] = a2;
            (2, fac)
        } else {
            let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            (1, fac)
        };
        a[0] = a1;
        for i in start..half {
            a[i] = m[i] / fac;
        }
    }

    // W as the squared correlation between the data and the coefficients,
    // evaluated as 1 - W to keep precision near W = 1
    let scaled: Vec<f64> = xs.iter().map(|v| v / range).collect();
    let mean_x = scaled.iter().sum::<f64>() / nf;
    let coef = |i: usize| -> f64 {
        if i < half {
            -a[i]
        } else if n % 2 == 1 && i == half {
            0.0
        } else {
            a[n - 1 - i]
        }
    };
    let mean_a = (0..n).map(coef).sum::<f64>() / nf;
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (i, &xi) in scaled.iter().enumerate() {
        let da = coef(i) - mean_a;
        let dx = xi - mean_x;
        ssa += da * da;
        ssx += dx * dx;
        sax += da * dx;
    }
    let root = (ssa * ssx).sqrt();
    let w1 = (root - sax) * (root + sax) / (ssa * ssx);
    let w = 1.0 - w1;

    if n == 3 {
        let p = 6.0 / std::f64::consts::PI * (w.sqrt().asin() - std::f64::consts::PI / 3.0);
        return Ok(ShapiroResult {
            w,
            p_value: p.clamp(0.0, 1.0),
        });
    }

    let mut y = w1.ln();
    let (m, s) = if n <= 11 {
        let gamma = poly(&G, nf);
        if y >= gamma {
            return Ok(ShapiroResult {
                w,
                p_value: 1e-99,
            });
        }
        y = -(gamma - y).ln();
        (poly(&C3, nf), poly(&C4, nf).exp())
    } else {
        let ln_n = nf.ln();
        (poly(&C5, ln_n), poly(&C6, ln_n).exp())
    };
    let p = Normal::new(m, s).expect("positive scale").sf(y);
    Ok(ShapiroResult {
        w,
        p_value: p.clamp(0.0, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(x: &[f64], w: f64, p: f64) {
        let r = shapiro_wilk(x).unwrap();
        assert!((r.w - w).abs() < 1e-6, "W {} vs {}", r.w, w);
        assert!((r.p_value - p).abs() < 1e-5 * p.max(1e-3), "p {} vs {}", r.p_value, p);
    }

    // Reference values from scipy.stats.shapiro (SciPy's port of Royston's swilk).
    #[test]
    fn normal_quantiles() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (1..=50)
            .map(|i| normal.inverse_cdf((i as f64 - 0.5) / 50.0))
            .collect();
        let r = shapiro_wilk(&x).unwrap();
        assert!(r.w > 0.99 && r.p_value > 0.5);
        check(&x, 0.9992035683859155, 1.0);
    }

    #[test]
    fn single_outlier() {
        let mut x = vec![1.0; 19];
        x.push(1000.0);
        let r = shapiro_wilk(&x).unwrap();
        assert!(r.p_value < 0.001);
        check(&x, 0.23587389697721584, 2.6930778843226267e-09);
    }

    #[test]
    fn small_and_medium_samples() {
        check(&[1.0, 2.0, 4.0], 0.9642857142857142, 0.6368868450289689);
        check(
            &[2.1, 3.4, 1.9, 5.6, 4.4, 3.3, 2.8, 4.0, 3.9, 2.5, 3.1],
            0.9648928961853555,
            0.8308415541845486,
        );
        check(
            &[
                0.5, 1.7, 1.8, 2.9, 3.3, 8.1, 0.2, 4.4, 5.0, 2.2, 1.1, 0.9, 3.7, 6.6, 2.0,
            ],
            0.9222360894663588,
            0.20834940571754612,
        );
        let x: Vec<f64> = (0..30).map(|i| (3.0 * i as f64 / 29.0).exp()).collect();
        check(&x, 0.8630617284471821, 0.0011784898460671274);
    }

    #[test]
    fn errors() {
        assert_eq!(shapiro_wilk(&[1.0; 10]), Err(StatsError::ConstantSample));
        assert!(matches!(
            shapiro_wilk(&[1.0, 2.0]),
            Err(StatsError::SampleTooSmall { .. })
        ));
        assert!(matches!(
            shapiro_wilk(&vec![0.5; 5001]),
            Err(StatsError::SampleTooLarge { .. })
        ));
    }
}

use serde::{Deserialize, Serialize};

use super::{check_finite, StatsError};

/// Terms of the Kolmogorov series are summed until they drop below this.
const SERIES_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    /// Largest absolute gap between the two ECDFs.
    pub d: f64,
    pub p_value: f64,
}

/// Two-sample KS statistic `sup_t |F_x(t) - F_y(t)|` over right-continuous ECDFs.
pub fn ks_statistic(x: &[f64], y: &[f64]) -> f64 {
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (nx, ny) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() || j < ys.len() {
        let t = match (xs.get(i), ys.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / nx - j as f64 / ny).abs());
    }
    d
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
///
/// Uses the theta-function form for small `lambda` and the alternating
/// series otherwise; the result is floored at the smallest positive normal
/// float so that p-values stay in `(0, 1]`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let q = if lambda < 1.18 {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut cdf = 0.0;
        let mut k = 1.0f64;
        loop {
            let term = (-(2.0 * k - 1.0).powi(2) * pi2 / (8.0 * lambda * lambda)).exp();
            cdf += term;
            if term < SERIES_TOL {
                break;
            }
            k += 1.0;
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * cdf
    } else {
        let mut sum = 0.0;
        let mut k = 1.0f64;
        let mut sign = 1.0;
        loop {
            let term = (-2.0 * k * k * lambda * lambda).exp();
            sum += sign * term;
            if term < SERIES_TOL {
                break;
            }
            sign = -sign;
            k += 1.0;
        }
        2.0 * sum
    };
    q.clamp(f64::MIN_POSITIVE, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value at the
/// effective size `nx * ny / (nx + ny)`. The asymptotic p-value is
/// optimistic-to-conservative for very small samples (n < 10).
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<KsResult, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(x)?;
    check_finite(y)?;
    let d = ks_statistic(x, y);
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let ne = nx * ny / (nx + ny);
    Ok(KsResult {
        d,
        p_value: kolmogorov_sf(ne.sqrt() * d),
    })
}

/// One-sample KS test of `x` against a continuous reference CDF.
pub fn ks_one_sample(x: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult, StatsError> {
    if x.is_empty() {
        return Err(StatsError::EmptySample);
    }
    check_finite(x)?;
    let mut xs = x.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    Ok(KsResult {
        d,
        p_value: kolmogorov_sf(n.sqrt() * d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_multisets() {
        let r = ks_two_sample(&[3.0, 1.0, 2.0, 2.0], &[2.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(r.d, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn disjoint_supports() {
        let r = ks_two_sample(&[0.0; 4], &[1.0; 4]).unwrap();
        assert_eq!(r.d, 1.0);
    }

    #[test]
    fn shifted_triples() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((r.d - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_sample() {
        assert_eq!(ks_two_sample(&[], &[1.0]), Err(StatsError::EmptySample));
    }

    #[test]
    fn kolmogorov_limit_matches_scipy_kstwobign() {
        // scipy.stats.kstwobign.sf
        let cases = [
            (0.3, 9.9999069419866549e-01),
            (0.5, 9.6394524366487511e-01),
            (1.0, 2.6999967167735456e-01),
            (1.18, 1.2345380942976571e-01),
            (1.2, 1.1224966667072497e-01),
            (1.5, 2.2217962616525127e-02),
            (2.0, 6.7092525577969533e-04),
            (3.0, 3.0459959489425258e-08),
        ];
        for (lambda, expected) in cases {
            let got = kolmogorov_sf(lambda);
            assert!(
                (got - expected).abs() <= 1e-10 * expected.max(1e-3),
                "lambda={lambda}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn asymptotic_p_value_against_reference() {
        let a = [
            0.61, 0.29, 0.06, 0.59, -1.73, -0.74, 0.51, -0.56, 0.39, 1.64, 0.05, -0.06, 0.64,
            -0.82, 0.37, 1.77, 1.09, -1.28, 2.36, 1.31, 1.05, -0.32, -0.4, 1.06, -2.47,
        ];
        let b = [
            2.2, 1.66, 1.38, 0.2, 0.36, 0.0, 0.96, 1.56, 0.44, 1.5, -0.3, 0.66, 2.31, 3.29, -0.27,
            -0.37, 0.38, 0.7, 0.52, -0.44,
        ];
        let r = ks_two_sample(&a, &b).unwrap();
        assert!((r.d - 0.24).abs() < 1e-12);
        // kstwobign.sf(sqrt(25*20/45) * 0.24)
        assert!((r.p_value - 0.5441424115741981).abs() < 1e-9);
    }

    #[test]
    fn huge_lambda_stays_positive() {
        let p = kolmogorov_sf(100.0);
        assert!(p > 0.0 && p <= 1e-300);
    }

    #[test]
    fn one_sample_uniform() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let r = ks_one_sample(&x, |t| t.clamp(0.0, 1.0)).unwrap();
        assert!((r.d - 0.005).abs() < 1e-12);
        assert!(r.p_value > 0.99);
    }
}

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use super::{check_finite, StatsError};

/// Mid-ranks (1-based) of `values` and the tie sum `sum(t^3 - t)`.
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KruskalResult {
    pub h: f64,
    pub p_value: f64,
    /// Rank epsilon-squared, `H / ((n^2 - 1) / (n + 1))`.
    pub epsilon_squared: f64,
    pub df: usize,
}

fn validate_groups(groups: &[&[f64]], min_groups: usize) -> Result<usize, StatsError> {
    if groups.len() < min_groups {
        return Err(StatsError::TooFewGroups {
            got: groups.len(),
            min: min_groups,
        });
    }
    for g in groups {
        if g.is_empty() {
            return Err(StatsError::EmptySample);
        }
        check_finite(g)?;
    }
    Ok(groups.iter().map(|g| g.len()).sum())
}

/// Kruskal–Wallis H test with tie correction.
///
/// When every observation is equal the statistic is defined as `H = 0`,
/// `p = 1`, `eps2 = 0`.
pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<KruskalResult, StatsError> {
    let n = validate_groups(groups, 2)?;
    if n < 3 {
        return Err(StatsError::SampleTooSmall { n, min: 3 });
    }
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let (ranks, ties) = midranks(&pooled);
    let nf = n as f64;
    let df = groups.len() - 1;
    let correction = 1.0 - ties / (nf * nf * nf - nf);
    if correction <= 0.0 {
        return Ok(KruskalResult {
            h: 0.0,
            p_value: 1.0,
            epsilon_squared: 0.0,
            df,
        });
    }
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h_raw = 12.0 / (nf * (nf + 1.0)) * sum - 3.0 * (nf + 1.0);
    let h = (h_raw / correction).max(0.0);
    let chi2 = ChiSquared::new(df as f64).expect("df >= 1");
    Ok(KruskalResult {
        h,
        p_value: chi2.sf(h).clamp(f64::MIN_POSITIVE, 1.0),
        epsilon_squared: (h / ((nf * nf - 1.0) / (nf + 1.0))).clamp(0.0, 1.0),
        df,
    })
}

/// Pairwise Dunn comparisons; matrices are `k x k` with a unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DunnResult {
    pub z: Vec<Vec<f64>>,
    pub p_raw: Vec<Vec<f64>>,
    /// Bonferroni-adjusted, `min(1, p * k(k-1)/2)`.
    pub p_adjusted: Vec<Vec<f64>>,
}

/// Dunn's post-hoc test on mean ranks with tie-corrected variance and
/// Bonferroni adjustment.
pub fn dunn_posthoc(groups: &[&[f64]]) -> Result<DunnResult, StatsError> {
    let n = validate_groups(groups, 3)?;
    let k = groups.len();
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let (ranks, ties) = midranks(&pooled);
    let nf = n as f64;
    let mut mean_rank = Vec::with_capacity(k);
    let mut offset = 0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        mean_rank.push(r / g.len() as f64);
        offset += g.len();
    }
    let spread = nf * (nf + 1.0) / 12.0 - ties / (12.0 * (nf - 1.0));
    let comparisons = (k * (k - 1) / 2) as f64;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");

    let mut z = vec![vec![0.0; k]; k];
    let mut p_raw = vec![vec![1.0; k]; k];
    let mut p_adjusted = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let se =
                (spread * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64)).sqrt();
            let diff = mean_rank[i] - mean_rank[j];
            let (zij, p) = if se > 0.0 {
                let zij = diff / se;
                (zij, (2.0 * normal.sf(zij.abs())).clamp(f64::MIN_POSITIVE, 1.0))
            } else {
                (0.0, 1.0)
            };
            z[i][j] = zij;
            p_raw[i][j] = p;
            p_adjusted[i][j] = (p * comparisons).min(1.0);
        }
    }
    Ok(DunnResult {
        z,
        p_raw,
        p_adjusted,
    })
}

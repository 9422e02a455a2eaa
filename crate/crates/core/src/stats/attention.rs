use serde::{Deserialize, Serialize};

use super::{check_finite, ks_two_sample, StatsError};

/// Axis-aligned half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoxRegion {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionAlignment {
    pub mean_in: f64,
    pub mean_out: f64,
    /// Sample standard deviations of the two value sets.
    pub sd_in: f64,
    pub sd_out: f64,
    pub n_in: usize,
    pub n_out: usize,
    pub d: f64,
    pub p_value: f64,
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = if x.len() > 1 {
        (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn split(
    values: &[f64],
    width: usize,
    height: usize,
    boxes: &[BoxRegion],
) -> Result<(Vec<f64>, Vec<f64>), StatsError> {
    if values.len() != width * height {
        return Err(StatsError::DimensionMismatch {
            expected: width * height,
            got: values.len(),
        });
    }
    check_finite(values)?;
    for (index, b) in boxes.iter().enumerate() {
        if b.x0 > b.x1 || b.y0 > b.y1 || b.x1 > width || b.y1 > height {
            return Err(StatsError::BoxOutOfBounds {
                index,
                width,
                height,
            });
        }
    }
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    for y in 0..height {
        for x in 0..width {
            let v = values[y * width + x];
            if boxes.iter().any(|b| b.contains(x, y)) {
                inside.push(v);
            } else {
                outside.push(v);
            }
        }
    }
    if inside.is_empty() {
        return Err(StatsError::EmptyRegion("in-box"));
    }
    if outside.is_empty() {
        return Err(StatsError::EmptyRegion("out-of-box"));
    }
    Ok((inside, outside))
}

fn summarize(inside: &[f64], outside: &[f64]) -> Result<AttentionAlignment, StatsError> {
    let ks = ks_two_sample(inside, outside)?;
    let (mean_in, sd_in) = mean_sd(inside);
    let (mean_out, sd_out) = mean_sd(outside);
    Ok(AttentionAlignment {
        mean_in,
        mean_out,
        sd_in,
        sd_out,
        n_in: inside.len(),
        n_out: outside.len(),
        d: ks.d,
        p_value: ks.p_value,
    })
}

/// Compares attention inside the union of `boxes` with attention outside,
/// pixel by pixel, on one row-major `width x height` grid.
pub fn attention_alignment(
    values: &[f64],
    width: usize,
    height: usize,
    boxes: &[BoxRegion],
) -> Result<AttentionAlignment, StatsError> {
    let (inside, outside) = split(values, width, height, boxes)?;
    summarize(&inside, &outside)
}

/// One attention map with its lesion boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub boxes: Vec<BoxRegion>,
}

/// Pools every in-box pixel and every out-of-box pixel across `maps` and
/// compares the two sets.
pub fn attention_alignment_pixels(maps: &[AttentionMap]) -> Result<AttentionAlignment, StatsError> {
    if maps.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    for m in maps {
        let (i, o) = split(&m.values, m.width, m.height, &m.boxes)?;
        inside.extend(i);
        outside.extend(o);
    }
    summarize(&inside, &outside)
}

/// Cohort-level comparison: each map contributes its mean in-box and mean
/// out-of-box attention, and the KS test runs on those per-map means.
pub fn attention_alignment_pooled(maps: &[AttentionMap]) -> Result<AttentionAlignment, StatsError> {
    if maps.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut means_in = Vec::with_capacity(maps.len());
    let mut means_out = Vec::with_capacity(maps.len());
    for m in maps {
        let (inside, outside) = split(&m.values, m.width, m.height, &m.boxes)?;
        means_in.push(mean_sd(&inside).0);
        means_out.push(mean_sd(&outside).0);
    }
    summarize(&means_in, &means_out)
}

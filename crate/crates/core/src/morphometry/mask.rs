use std::collections::VecDeque;

use super::MorphError;

/// Label value for background pixels.
pub const BACKGROUND: u8 = 0;
/// Label value for Bowman's capsule pixels.
pub const BOW: u8 = 1;
/// Label value for glomerular tuft pixels.
pub const TUFT: u8 = 2;

/// One of the two segmented glomerular structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Structure {
    Bow,
    Tuft,
}

impl Structure {
    pub fn label(self) -> u8 {
        match self {
            Structure::Bow => BOW,
            Structure::Tuft => TUFT,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Structure::Bow => "bow",
            Structure::Tuft => "tuft",
        }
    }
}

/// Labeled raster of a single glomerulus.
///
/// Labels are stored row-major; `resolution` is micrometers per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    resolution: f64,
}

impl EntityMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self, MorphError> {
        Self::with_resolution(width, height, labels, 1.0)
    }

    pub fn with_resolution(
        width: usize,
        height: usize,
        labels: Vec<u8>,
        resolution: f64,
    ) -> Result<Self, MorphError> {
        if width.checked_mul(height) != Some(labels.len()) {
            return Err(MorphError::DimensionMismatch {
                width,
                height,
                len: labels.len(),
            });
        }
        if let Some(pos) = labels.iter().position(|&l| l > TUFT) {
            return Err(MorphError::InvalidLabel {
                value: labels[pos],
                x: pos % width.max(1),
                y: pos / width.max(1),
            });
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(MorphError::InvalidResolution(resolution));
        }
        Ok(Self {
            width,
            height,
            labels,
            resolution,
        })
    }

    /// Builds a mask from a closure evaluated at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, MorphError> {
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y));
            }
        }
        Self::new(width, height, labels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

/// A connected set of pixels, stored as a bitmap over its bounding box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelComponent {
    x0: usize,
    y0: usize,
    width: usize,
    height: usize,
    cells: Vec<bool>,
    count: usize,
}

impl PixelComponent {
    /// Builds a component from absolute pixel coordinates. Duplicates are ignored.
    pub fn from_pixels(pixels: &[(usize, usize)]) -> Option<Self> {
        let x0 = pixels.iter().map(|p| p.0).min()?;
        let y0 = pixels.iter().map(|p| p.1).min()?;
        let x1 = pixels.iter().map(|p| p.0).max()?;
        let y1 = pixels.iter().map(|p| p.1).max()?;
        let width = x1 - x0 + 1;
        let height = y1 - y0 + 1;
        let mut cells = vec![false; width * height];
        for &(x, y) in pixels {
            cells[(y - y0) * width + (x - x0)] = true;
        }
        let count = cells.iter().filter(|&&c| c).count();
        Some(Self {
            x0,
            y0,
            width,
            height,
            cells,
            count,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.count
    }

    /// Absolute coordinate of the bounding box's top-left pixel.
    pub fn origin(&self) -> (usize, usize) {
        (self.x0, self.y0)
    }

    pub fn bbox_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Membership test in bounding-box-local coordinates; out of range is `false`.
    pub fn contains_local(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return false;
        }
        self.cells[y as usize * self.width + x as usize]
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0
            && y >= self.y0
            && self.contains_local((x - self.x0) as i64, (y - self.y0) as i64)
    }

    /// Local coordinates of the member pixels in row-major order.
    pub fn local_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    /// Absolute coordinates of the member pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.local_pixels()
            .map(move |(x, y)| (x + self.x0, y + self.y0))
    }

    /// Returns a copy with every background region that is not 4-connected
    /// to the outside of the bounding box switched on.
    pub fn fill_holes(&self) -> PixelComponent {
        let pw = self.width + 2;
        let ph = self.height + 2;
        let mut outside = vec![false; pw * ph];
        let mut queue = VecDeque::new();
        outside[0] = true;
        queue.push_back((0usize, 0usize));
        while let Some((x, y)) = queue.pop_front() {
            let neighbours = [
                (x.wrapping_sub(1), y),
                (x + 1, y),
                (x, y.wrapping_sub(1)),
                (x, y + 1),
            ];
            for (nx, ny) in neighbours {
                if nx >= pw || ny >= ph {
                    continue;
                }
                let idx = ny * pw + nx;
                if outside[idx] || self.contains_local(nx as i64 - 1, ny as i64 - 1) {
                    continue;
                }
                outside[idx] = true;
                queue.push_back((nx, ny));
            }
        }
        let mut cells = vec![false; self.width * self.height];
        for y in 0..self.height {
            for x in 0..self.width {
                cells[y * self.width + x] = !outside[(y + 1) * pw + x + 1];
            }
        }
        let count = cells.iter().filter(|&&c| c).count();
        PixelComponent {
            x0: self.x0,
            y0: self.y0,
            width: self.width,
            height: self.height,
            cells,
            count,
        }
    }
}

/// Largest 8-connected component of `label`. Ties go to the component whose
/// first pixel comes first in row-major order.
pub fn extract_component(mask: &EntityMask, label: u8) -> Result<PixelComponent, MorphError> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut best: Option<Vec<(usize, usize)>> = None;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || mask.labels[start] != label {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut members = Vec::new();
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            members.push((x, y));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let n = ny as usize * w + nx as usize;
                    if !seen[n] && mask.labels[n] == label {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        if best.as_ref().map_or(true, |b| members.len() > b.len()) {
            best = Some(members);
        }
    }
    best.and_then(|px| PixelComponent::from_pixels(&px))
        .ok_or(MorphError::NoPixelsForLabel(label))
}

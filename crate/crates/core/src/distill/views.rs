use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::DistillError;

/// Row-major grayscale image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel count mismatch");
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let pixels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear sample at continuous pixel coordinates, clamped to the border.
    fn sample(&self, u: f64, v: f64) -> f64 {
        let u = u.clamp(0.0, (self.width - 1) as f64);
        let v = v.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (u.floor() as usize, v.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (u - x0 as f64, v - y0 as f64);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Resamples the rectangle `[x0, x0+w) x [y0, y0+h)` (pixel units) to
    /// `out x out` by sampling at output pixel centres.
    pub fn crop_resize(&self, x0: f64, y0: f64, w: f64, h: f64, out: usize) -> Image {
        let (sx, sy) = (w / out as f64, h / out as f64);
        Image::from_fn(out, out, |ox, oy| {
            self.sample(
                x0 + (ox as f64 + 0.5) * sx - 0.5,
                y0 + (oy as f64 + 0.5) * sy - 0.5,
            )
        })
    }

    fn flip_horizontal(&mut self) {
        for row in self.pixels.chunks_mut(self.width) {
            row.reverse();
        }
    }

    /// Separable `[1, 2, 1] / 4` blur with clamped borders.
    fn blur(&mut self) {
        let (w, h) = (self.width, self.height);
        let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
            let mut dst = vec![0.0; src.len()];
            for y in 0..h {
                for x in 0..w {
                    let (a, b) = if horizontal {
                        (y * w + x.saturating_sub(1), y * w + (x + 1).min(w - 1))
                    } else {
                        (y.saturating_sub(1) * w + x, (y + 1).min(h - 1) * w + x)
                    };
                    dst[y * w + x] = 0.25 * src[a] + 0.5 * src[y * w + x] + 0.25 * src[b];
                }
            }
            dst
        };
        let tmp = pass(&self.pixels, true);
        self.pixels = pass(&tmp, false);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Augmentations {
    /// Horizontal flip with probability 1/2.
    pub flip: bool,
    /// `x -> (x - mean) * contrast + mean + brightness`, contrast in
    /// [0.8, 1.2], brightness in [-0.1, 0.1].
    pub jitter: bool,
    /// 3x3 binomial blur with probability 1/2.
    pub blur: bool,
}

impl Default for Augmentations {
    fn default() -> Self {
        Self {
            flip: true,
            jitter: true,
            blur: true,
        }
    }
}

impl Augmentations {
    pub const NONE: Augmentations = Augmentations {
        flip: false,
        jitter: false,
        blur: false,
    };

    fn apply<R: Rng>(&self, img: &mut Image, rng: &mut R) {
        if self.flip && rng.gen_bool(0.5) {
            img.flip_horizontal();
        }
        if self.jitter {
            let contrast = rng.gen_range(0.8..=1.2);
            let brightness = rng.gen_range(-0.1..=0.1);
            let mean = img.pixels.iter().sum::<f64>() / img.pixels.len() as f64;
            for p in &mut img.pixels {
                *p = (*p - mean) * contrast + mean + brightness;
            }
        }
        if self.blur && rng.gen_bool(0.5) {
            img.blur();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewConfig {
    pub n_global: usize,
    pub n_local: usize,
    /// Bounds of the local crop area as a fraction of the entity area.
    pub s_min: f64,
    pub s_max: f64,
    pub global_size: usize,
    pub local_size: usize,
    pub augment: Augmentations,
}

impl Default for ViewConfig {
    fn default() -> Self {
        Self {
            n_global: 2,
            n_local: 6,
            s_min: 0.4,
            s_max: 1.0,
            global_size: 16,
            local_size: 16,
            augment: Augmentations::default(),
        }
    }
}

impl ViewConfig {
    pub fn validate(&self) -> Result<(), DistillError> {
        let bad = |m: &str| Err(DistillError::InvalidConfig(m.to_string()));
        if self.n_global == 0 || self.n_local == 0 {
            return bad("view counts must be at least 1");
        }
        if !(self.s_min > 0.0 && self.s_min <= self.s_max && self.s_max <= 1.0) {
            return bad("crop scale bounds must satisfy 0 < s_min <= s_max <= 1");
        }
        if self.global_size == 0 || self.local_size == 0 {
            return bad("view sizes must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Views {
    pub globals: Vec<Image>,
    pub locals: Vec<Image>,
    /// Crop area over entity area, one per local view.
    pub scales: Vec<f64>,
}

/// Global views cover the whole entity; local views are crops of a uniformly
/// drawn area fraction, with the entity's aspect ratio, at a uniform position.
pub fn make_views<R: Rng>(
    entity: &Image,
    cfg: &ViewConfig,
    rng: &mut R,
) -> Result<Views, DistillError> {
    cfg.validate()?;
    if entity.width < cfg.local_size || entity.height < cfg.local_size {
        return Err(DistillError::EntityTooSmall {
            width: entity.width,
            height: entity.height,
            min: cfg.local_size,
        });
    }
    let (w, h) = (entity.width as f64, entity.height as f64);
    let globals = (0..cfg.n_global)
        .map(|_| {
            let mut g = entity.crop_resize(0.0, 0.0, w, h, cfg.global_size);
            cfg.augment.apply(&mut g, rng);
            g
        })
        .collect();
    let mut locals = Vec::with_capacity(cfg.n_local);
    let mut scales = Vec::with_capacity(cfg.n_local);
    for _ in 0..cfg.n_local {
        let s = if cfg.s_min < cfg.s_max {
            rng.gen_range(cfg.s_min..cfg.s_max)
        } else {
            cfg.s_min
        };
        let (cw, ch) = (w * s.sqrt(), h * s.sqrt());
        let x0 = rng.gen::<f64>() * (w - cw);
        let y0 = rng.gen::<f64>() * (h - ch);
        let mut l = entity.crop_resize(x0, y0, cw, ch, cfg.local_size);
        cfg.augment.apply(&mut l, rng);
        locals.push(l);
        scales.push(s);
    }
    Ok(Views {
        globals,
        locals,
        scales,
    })
}

/// Procedurally generated glomerulus-like entities in two latent classes.
#[derive(Debug, Clone, PartialEq)]
pub struct EntitySet {
    pub images: Vec<Image>,
    pub classes: Vec<u8>,
}

/// Each entity is a `size x size` image: a dim rotated ellipse (capsule,
/// intensity 0.35) around a brighter concentric ellipse (tuft) on a zero
/// background, plus N(0, 0.03) pixel noise.
///
/// Class 0 has a small bright tuft (axis ratio 0.35-0.5, intensity 0.85).
/// Class 1 has a large dimmer tuft (ratio 0.65-0.8, intensity 0.6) with a
/// striped texture of amplitude 0.15. Classes alternate, starting with 0.
pub fn synthetic_entities(n_per_class: usize, size: usize, seed: u64) -> EntitySet {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.03).unwrap();
    let mut images = Vec::with_capacity(2 * n_per_class);
    let mut classes = Vec::with_capacity(2 * n_per_class);
    let s = size as f64;
    for i in 0..2 * n_per_class {
        let class = (i % 2) as u8;
        let cx = s / 2.0 + rng.gen_range(-1.5..1.5);
        let cy = s / 2.0 + rng.gen_range(-1.5..1.5);
        let a = s * rng.gen_range(0.38..0.46);
        let b = s * rng.gen_range(0.30..0.40);
        let theta = rng.gen_range(0.0..std::f64::consts::PI);
        let (ratio, level) = if class == 0 {
            (rng.gen_range(0.35..0.5), 0.85)
        } else {
            (rng.gen_range(0.65..0.8), 0.6)
        };
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let (ct, st) = (theta.cos(), theta.sin());
        let mut img = Image::from_fn(size, size, |x, y| {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let u = (dx * ct + dy * st) / a;
            let v = (-dx * st + dy * ct) / b;
            let r2 = u * u + v * v;
            if r2 <= ratio * ratio {
                let texture = if class == 1 {
                    0.15 * (1.5 * x as f64 + phase).sin()
                } else {
                    0.0
                };
                level + texture
            } else if r2 <= 1.0 {
                0.35
            } else {
                0.0
            }
        });
        for p in &mut img.pixels {
            *p += noise.sample(&mut rng);
        }
        images.push(img);
        classes.push(class);
    }
    EntitySet { images, classes }
}

use serde::{Deserialize, Serialize};

use super::contour::trace_contour;
use super::mask::PixelComponent;

/// Isotropy correction for chamfered crack contours, `pi * (1 + sqrt 2) / 8`.
///
/// The chamfered length of a digitized straight segment, averaged over all
/// orientations, overshoots the true length by the inverse of this factor.
/// Without it a rasterized disk scores `Cir ~ 0.90`.
pub const PERIMETER_ISOTROPY: f64 = std::f64::consts::PI * (1.0 + std::f64::consts::SQRT_2) / 8.0;

/// Second-moment eigenvalue ratio below which a shape counts as a line.
const DEGENERATE_RATIO: f64 = 1e-12;

/// Eccentricity reported for degenerate shapes.
pub const DEGENERATE_ECC: f64 = 1.0 - 1e-9;

/// Area, perimeter and moment-ellipse descriptors of one structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub area: f64,
    pub perimeter: f64,
    /// Major semi-axis of the moment-equivalent ellipse.
    pub major: f64,
    /// Minor semi-axis of the moment-equivalent ellipse.
    pub minor: f64,
    pub circularity: f64,
    pub eccentricity: f64,
    /// Set when the minor axis vanishes; eccentricity is then [`DEGENERATE_ECC`].
    pub degenerate: bool,
}

/// Computes shape descriptors after filling interior holes.
///
/// Lengths are scaled by `resolution` (units per pixel) and areas by its
/// square. Moments are taken about pixel centres in bounding-box-local
/// coordinates, so translating a component leaves every output bit-identical.
pub fn shape_params(component: &PixelComponent, resolution: f64) -> ShapeParams {
    let filled = component.fill_holes();
    let count = filled.pixel_count();
    assert!(count > 0, "shape_params requires a nonempty component");

    let n = count as f64;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (x, y) in filled.local_pixels() {
        sx += x as f64;
        sy += y as f64;
    }
    let (cx, cy) = (sx / n, sy / n);
    let (mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0);
    for (x, y) in filled.local_pixels() {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        mxx += dx * dx;
        myy += dy * dy;
        mxy += dx * dy;
    }
    let (mxx, myy, mxy) = (mxx / n, myy / n, mxy / n);
    let (l1, l2) = sym2_eigenvalues(mxx, myy, mxy);

    let polygon = trace_contour(&filled);
    let area = n * resolution * resolution;
    let perimeter = polygon.chamfer_length() * PERIMETER_ISOTROPY * resolution;
    let major = 2.0 * l1.sqrt() * resolution;
    let minor = 2.0 * l2.sqrt() * resolution;
    let degenerate = !(l1 > 0.0) || l2 <= DEGENERATE_RATIO * l1;
    let eccentricity = if degenerate {
        DEGENERATE_ECC
    } else {
        (1.0 - l2 / l1).max(0.0).sqrt()
    };
    ShapeParams {
        area,
        perimeter,
        major,
        minor,
        circularity: 4.0 * std::f64::consts::PI * area / (perimeter * perimeter),
        eccentricity,
        degenerate,
    }
}

/// Eigenvalues `(larger, smaller)` of `[[a, c], [c, b]]`, clamped at zero.
fn sym2_eigenvalues(a: f64, b: f64, c: f64) -> (f64, f64) {
    let mean = 0.5 * (a + b);
    let half_diff = 0.5 * (a - b);
    let r = half_diff.hypot(c);
    ((mean + r).max(0.0), (mean - r).max(0.0))
}

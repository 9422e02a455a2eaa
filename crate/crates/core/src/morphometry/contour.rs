use super::mask::PixelComponent;

/// Closed rectilinear polygon on pixel-corner coordinates.
///
/// `x` grows with the column index and `y` with the row index. Vertices are
/// ordered so the shoelace area is positive (counterclockwise in that frame)
/// and consecutive vertices always differ in direction, so every vertex is a
/// corner of the boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polygon {
    vertices: Vec<(i64, i64)>,
}

impl Polygon {
    pub fn vertices(&self) -> &[(i64, i64)] {
        &self.vertices
    }

    /// Twice the signed shoelace area.
    pub fn signed_area2(&self) -> i64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let (x0, y0) = self.vertices[i];
                let (x1, y1) = self.vertices[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum()
    }

    pub fn area(&self) -> f64 {
        self.signed_area2() as f64 / 2.0
    }

    /// Number of unit pixel edges along the boundary.
    pub fn edge_count(&self) -> u64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| {
                let (x0, y0) = self.vertices[i];
                let (x1, y1) = self.vertices[(i + 1) % n];
                ((x1 - x0).abs() + (y1 - y0).abs()) as u64
            })
            .sum()
    }

    pub fn corner_count(&self) -> u64 {
        self.vertices.len() as u64
    }

    /// Length of the polygon through the midpoints of consecutive unit edges:
    /// every corner is cut by a chamfer of length `sqrt(1/2)`.
    pub fn chamfer_length(&self) -> f64 {
        let corners = self.corner_count();
        (self.edge_count() - corners) as f64 + corners as f64 * std::f64::consts::FRAC_1_SQRT_2
    }
}

const STEP: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// Traces the outer boundary of `component` along pixel edges.
///
/// At pinch vertices (two pixels touching only diagonally) the trace turns
/// toward the diagonal neighbour, which keeps 8-connected components on a
/// single loop.
pub fn trace_contour(component: &PixelComponent) -> Polygon {
    let (w, h) = component.bbox_size();
    let vw = w + 1;
    // outgoing direction bitmask per local vertex
    let mut out = vec![0u8; vw * (h + 1)];
    let vid = |x: i64, y: i64| y as usize * vw + x as usize;
    for (px, py) in component.local_pixels() {
        let (x, y) = (px as i64, py as i64);
        if !component.contains_local(x, y - 1) {
            out[vid(x, y)] |= 1 << 0;
        }
        if !component.contains_local(x + 1, y) {
            out[vid(x + 1, y)] |= 1 << 1;
        }
        if !component.contains_local(x, y + 1) {
            out[vid(x + 1, y + 1)] |= 1 << 2;
        }
        if !component.contains_local(x - 1, y) {
            out[vid(x, y + 1)] |= 1 << 3;
        }
    }

    // topmost row, leftmost pixel: its top edge is on the outer boundary
    let (sx, sy) = component
        .local_pixels()
        .next()
        .expect("component is nonempty");
    let start = ((sx as i64, sy as i64), 0usize);

    let (ox, oy) = component.origin();
    let (ox, oy) = (ox as i64, oy as i64);
    let mut vertices = Vec::new();
    let (mut pos, mut dir) = start;
    loop {
        let (dx, dy) = STEP[dir];
        let next = (pos.0 + dx, pos.1 + dy);
        let avail = out[vid(next.0, next.1)];
        let right = (dir + 3) % 4;
        let left = (dir + 1) % 4;
        let next_dir = [right, dir, left]
            .into_iter()
            .find(|&d| avail & (1 << d) != 0)
            .expect("boundary edges form closed loops");
        if next_dir != dir {
            vertices.push((next.0 + ox, next.1 + oy));
        }
        pos = next;
        dir = next_dir;
        if (pos, dir) == start {
            break;
        }
    }
    // begin the vertex list at the start corner
    if let Some(k) = vertices
        .iter()
        .position(|&v| v == (start.0 .0 + ox, start.0 .1 + oy))
    {
        vertices.rotate_left(k);
    }
    Polygon { vertices }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comp(pixels: &[(usize, usize)]) -> PixelComponent {
        PixelComponent::from_pixels(pixels).unwrap()
    }

    #[test]
    fn unit_pixel_is_unit_square() {
        let p = trace_contour(&comp(&[(4, 7)]));
        assert_eq!(p.vertices(), &[(4, 7), (5, 7), (5, 8), (4, 8)]);
        assert_eq!(p.signed_area2(), 2);
    }

    #[test]
    fn three_by_three_square() {
        let px: Vec<_> = (0..3).flat_map(|y| (0..3).map(move |x| (x, y))).collect();
        let p = trace_contour(&comp(&px));
        assert_eq!(p.vertices(), &[(0, 0), (3, 0), (3, 3), (0, 3)]);
        assert_eq!(p.edge_count(), 12);
        assert_eq!(p.area(), 9.0);
    }

    #[test]
    fn pinch_keeps_single_loop() {
        let p = trace_contour(&comp(&[(0, 0), (1, 1), (2, 2)]));
        assert_eq!(p.area(), 3.0);
        assert_eq!(p.edge_count(), 12);
        assert_eq!(p.corner_count(), 12);
    }

    #[test]
    fn l_shape() {
        let p = trace_contour(&comp(&[(0, 0), (0, 1), (1, 1)]));
        assert_eq!(p.vertices().len(), 6);
        assert_eq!(p.area(), 3.0);
    }

    #[test]
    fn outer_loop_ignores_holes() {
        let px: Vec<_> = (0..5)
            .flat_map(|y| (0..5).map(move |x| (x, y)))
            .filter(|&(x, y)| !(x == 2 && y == 2))
            .collect();
        let p = trace_contour(&comp(&px));
        assert_eq!(p.area(), 25.0);
        assert_eq!(p.edge_count(), 20);
    }
}

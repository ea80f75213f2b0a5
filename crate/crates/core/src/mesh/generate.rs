use super::{Mesh, MeshFamily, Point, Rect};
use crate::error::{invalid, Result};

/// Structured triangulation: `n x n` squares, each split along the
/// lower-left to upper-right diagonal.
pub fn generate_triangular(rect: Rect, n: usize) -> Result<Mesh> {
    rect.check()?;
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let vertices = grid_vertices(rect, n, |_, _| 0.0);
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = idx(i, j);
            let b = idx(i + 1, j);
            let c = idx(i + 1, j + 1);
            let d = idx(i, j + 1);
            cells.push(vec![a, b, c]);
            cells.push(vec![a, c, d]);
        }
    }
    Mesh::from_polygons(vertices, cells, Some(rect), MeshFamily::Triangular { n })
}

/// Kershaw-type quadrilateral mesh.
///
/// Vertical grid lines stay straight. Interior horizontal lines are bent
/// into a Z: shifted up over the left quarter, down over the right quarter,
/// with a linear ramp in between, and the shift alternates sign from one
/// line to the next. The largest shift is `distortion * hy / 2`, so every
/// cell stays a convex trapezoid for `distortion < 1`.
pub fn generate_kershaw(rect: Rect, n: usize, distortion: f64) -> Result<Mesh> {
    rect.check()?;
    if n < 2 || !n.is_multiple_of(2) {
        return Err(invalid("n", "must be even and at least 2"));
    }
    if !(0.0..1.0).contains(&distortion) {
        return Err(invalid("distortion", "must lie in [0, 1)"));
    }
    let hy = rect.height() / n as f64;
    let shift = |i: usize, j: usize| {
        if j == 0 || j == n {
            return 0.0;
        }
        let xi = i as f64 / n as f64;
        let profile = (1.0 - 4.0 * (xi - 0.25)).clamp(-1.0, 1.0);
        let sign = if j.is_multiple_of(2) { -1.0 } else { 1.0 };
        0.5 * distortion * hy * profile * sign
    };
    let vertices = grid_vertices(rect, n, shift);
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push(vec![
                idx(i, j),
                idx(i + 1, j),
                idx(i + 1, j + 1),
                idx(i, j + 1),
            ]);
        }
    }
    Mesh::from_polygons(
        vertices,
        cells,
        Some(rect),
        MeshFamily::Kershaw { n, distortion },
    )
}

fn grid_vertices(rect: Rect, n: usize, dy: impl Fn(usize, usize) -> f64) -> Vec<Point> {
    let mut v = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            // Snap the last line to the rectangle edge exactly.
            let x = if i == n {
                rect.x1
            } else {
                rect.x0 + rect.width() * i as f64 / n as f64
            };
            let y = if j == n {
                rect.y1
            } else {
                rect.y0 + rect.height() * j as f64 / n as f64
            };
            v.push([x, y + dy(i, j)]);
        }
    }
    v
}

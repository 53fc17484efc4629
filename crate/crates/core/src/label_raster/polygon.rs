//! Even-odd scanline polygon fill and convex hulls in image coordinates.

/// Twice the signed area (shoelace). Positive for counter-clockwise order in
/// a y-up frame.
pub fn signed_area2(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let p = poly[i];
            let q = poly[(i + 1) % n];
            p[0] * q[1] - q[0] * p[1]
        })
        .sum()
}

/// Fewer than three vertices, or all vertices on one line.
pub fn is_degenerate(poly: &[[f64; 2]]) -> bool {
    if poly.len() < 3 {
        return true;
    }
    let o = poly[0];
    let Some(&d) = poly.iter().find(|p| **p != o) else {
        return true;
    };
    poly.iter()
        .all(|p| (d[0] - o[0]) * (p[1] - o[1]) - (d[1] - o[1]) * (p[0] - o[0]) == 0.0)
}

/// Calls `paint(x, y)` for every pixel of a `width × height` canvas whose
/// center lies inside the polygon (even-odd rule) or on its boundary.
///
/// Degenerate polygons (see [`is_degenerate`]) paint nothing.
/// Each pixel is reported at most once.
pub fn fill_polygon(
    poly: &[[f64; 2]],
    width: usize,
    height: usize,
    mut paint: impl FnMut(usize, usize),
) {
    if is_degenerate(poly) {
        return;
    }
    let (ymin, ymax) = poly
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p[1]), hi.max(p[1]))
        });
    let row_lo = (ymin - 0.5).ceil().max(0.0);
    let row_hi = (ymax - 0.5).floor().min(height as f64 - 1.0);
    if row_lo > row_hi {
        return;
    }

    let n = poly.len();
    let mut crossings = Vec::with_capacity(n);
    let mut row = vec![false; width];
    for y in row_lo as usize..=row_hi as usize {
        let yc = y as f64 + 0.5;
        crossings.clear();
        row.iter_mut().for_each(|r| *r = false);

        for i in 0..n {
            let p = poly[i];
            let q = poly[(i + 1) % n];
            if (p[1] > yc) != (q[1] > yc) {
                crossings.push(p[0] + (yc - p[1]) * (q[0] - p[0]) / (q[1] - p[1]));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            mark_span(&mut row, pair[0], pair[1]);
        }

        // Boundary pixels the half-open crossing rule can miss: horizontal
        // edges lying on the row and vertices sitting exactly on it.
        for i in 0..n {
            let p = poly[i];
            let q = poly[(i + 1) % n];
            if p[1] == yc && q[1] == yc {
                mark_span(&mut row, p[0].min(q[0]), p[0].max(q[0]));
            } else if p[1].min(q[1]) <= yc && yc <= p[1].max(q[1]) {
                let x = if p[1] == yc {
                    p[0]
                } else if q[1] == yc {
                    q[0]
                } else {
                    p[0] + (yc - p[1]) * (q[0] - p[0]) / (q[1] - p[1])
                };
                let px = x - 0.5;
                if px.fract() == 0.0 && px >= 0.0 && px < width as f64 {
                    row[px as usize] = true;
                }
            }
        }

        for (x, &hit) in row.iter().enumerate() {
            if hit {
                paint(x, y);
            }
        }
    }
}

/// Marks pixels whose centers lie in `[xa, xb]`.
fn mark_span(row: &mut [bool], xa: f64, xb: f64) {
    let lo = (xa - 0.5).ceil().max(0.0);
    let hi = (xb - 0.5).floor().min(row.len() as f64 - 1.0);
    if lo > hi {
        return;
    }
    for r in &mut row[lo as usize..=hi as usize] {
        *r = true;
    }
}

/// Even-odd containment of a point, boundary included.
pub fn contains(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    if is_degenerate(poly) {
        return false;
    }
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let within = p[0] >= a[0].min(b[0])
            && p[0] <= a[0].max(b[0])
            && p[1] >= a[1].min(b[1])
            && p[1] <= a[1].max(b[1]);
        if cross == 0.0 && within {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if x > p[0] {
                inside = !inside;
            }
        }
    }
    inside
}

/// Convex hull by Andrew's monotone chain. Collinear points are dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(pts.len() * 2);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

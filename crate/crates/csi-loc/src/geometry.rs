//! Planar geometry: points, distances, and convex hulls over reference-point
//! grids. Coordinates are meters in the scene frame.

use serde::{Deserialize, Serialize};

/// A 2-D point (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn distance(self, other: Point2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn add(self, dx: f64, dy: f64) -> Point2 {
        Point2::new(self.x + dx, self.y + dy)
    }

    pub fn midpoint(self, other: Point2) -> Point2 {
        Point2::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

/// Convex hull of a point set via Andrew's monotone chain.
///
/// Returns hull vertices in counter-clockwise order without repeating the
/// first vertex. Degenerate inputs (all collinear) return the two extremes;
/// a single point returns itself.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Point2, a: Point2, b: Point2| -> f64 {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut lower: Vec<Point2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Whether `p` lies inside (or on the boundary of) the convex hull, with a
/// slack of `tol` meters outward.
pub fn point_in_hull(hull: &[Point2], p: Point2, tol: f64) -> bool {
    match hull.len() {
        0 => false,
        1 => hull[0].distance(p) <= tol,
        2 => distance_to_segment(p, hull[0], hull[1]) <= tol,
        _ => {
            // CCW hull: p is inside iff it is on the left of every edge.
            for i in 0..hull.len() {
                let a = hull[i];
                let b = hull[(i + 1) % hull.len()];
                let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
                let edge_len = a.distance(b).max(1e-30);
                if cross / edge_len < -tol {
                    return false;
                }
            }
            true
        }
    }
}

/// Euclidean distance from `p` to the hull boundary/interior (0 if inside).
pub fn distance_to_hull(hull: &[Point2], p: Point2) -> f64 {
    match hull.len() {
        0 => f64::INFINITY,
        1 => hull[0].distance(p),
        2 => distance_to_segment(p, hull[0], hull[1]),
        _ => {
            if point_in_hull(hull, p, 0.0) {
                return 0.0;
            }
            (0..hull.len())
                .map(|i| distance_to_segment(p, hull[i], hull[(i + 1) % hull.len()]))
                .fold(f64::INFINITY, f64::min)
        }
    }
}

fn distance_to_segment(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(Point2::new(a.x + t * dx, a.y + t * dy))
}

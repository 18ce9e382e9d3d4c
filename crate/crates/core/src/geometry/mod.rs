//! Domains, tessellations and linear networks.
//!
//! Every object here is immutable once built. Rectangles carry their area and
//! diameter; tessellations carry piecewise-linear bases and dual-cell areas;
//! networks carry the shortest-path metric.

mod network;
mod tessellation;

pub use network::{largest_component, Discretization, LinearNetwork, NetLocation, Segment};
pub use tessellation::{BasisWeights, Tessellation, TessellationKind};

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &Point, t: f64) -> Point {
        Point::new(
            self.x + t * (other.x - self.x),
            self.y + t * (other.y - self.y),
        )
    }

    pub fn midpoint(&self, other: &Point) -> Point {
        self.lerp(other, 0.5)
    }
}

/// Axis-aligned rectangle `[x_min, x_max] × [y_min, y_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectDomain {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl RectDomain {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !finite || x_max <= x_min || y_max <= y_min {
            return Err(invalid(format!(
                "degenerate rectangle [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(RectDomain {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// The square `[lo, hi]²`.
    pub fn square(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, lo, hi, hi)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Largest distance between two points of the rectangle (its diagonal).
    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Point {
        Point::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x_min, self.y_min),
            Point::new(self.x_max, self.y_min),
            Point::new(self.x_max, self.y_max),
            Point::new(self.x_min, self.y_max),
        ]
    }
}

/// Either a planar rectangle or a linear network.
#[derive(Clone, Debug)]
pub enum SpatialDomain {
    Rect(RectDomain),
    Network(Arc<LinearNetwork>),
}

impl SpatialDomain {
    /// Area of a rectangle or total length of a network.
    pub fn measure(&self) -> f64 {
        match self {
            SpatialDomain::Rect(r) => r.area(),
            SpatialDomain::Network(n) => n.total_length(),
        }
    }
}

/// Whether two cells at set distance `d` form an α-neighboring pair.
///
/// Touching cells always do. Cells separated by a positive gap count when the
/// gap is below α; a gap equal to α (up to rounding) does not add a pair,
/// because the only relocations spanning it start and end on cell
/// boundaries, which also belong to touching cells.
pub fn within_alpha(d: f64, alpha: f64, scale: f64) -> bool {
    d <= 1e-12 * scale || d < alpha * (1.0 - 1e-9)
}

/// Twice the signed area of triangle `(a, b, c)`.
pub(crate) fn cross(a: &Point, b: &Point, c: &Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Area of a simple polygon given in order (either orientation).
pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (p, q) = (&poly[i], &poly[(i + 1) % n]);
            p.x * q.y - q.x * p.y
        })
        .sum();
    0.5 * twice.abs()
}

pub fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.distance(&Point::new(a.x + t * dx, a.y + t * dy))
}

/// Distance between closed segments `[p, q]` and `[a, b]`; zero when they meet.
pub fn segment_distance(p: &Point, q: &Point, a: &Point, b: &Point) -> f64 {
    let d1 = cross(a, b, p);
    let d2 = cross(a, b, q);
    let d3 = cross(p, q, a);
    let d4 = cross(p, q, b);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return 0.0;
    }
    point_segment_distance(p, a, b)
        .min(point_segment_distance(q, a, b))
        .min(point_segment_distance(a, p, q))
        .min(point_segment_distance(b, p, q))
}

/// Set distance between two closed convex polygons that do not overlap in
/// their interiors (cells of a partition).
pub fn polygon_distance(a: &[Point], b: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..a.len() {
        let (p, q) = (&a[i], &a[(i + 1) % a.len()]);
        for k in 0..b.len() {
            let d = segment_distance(p, q, &b[k], &b[(k + 1) % b.len()]);
            if d < best {
                best = d;
                if best == 0.0 {
                    return 0.0;
                }
            }
        }
    }
    best
}

//! Convex hulls, polygon clipping and the visible-area fraction of a
//! projected object.

use nalgebra::Point2;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HullError {
    #[error("convex hull is degenerate ({0} distinct non-collinear points)")]
    DegenerateHull(usize),
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    /// Area covered by a `width x height` image whose pixel centres sit at
    /// integer coordinates: `[-0.5, width - 0.5] x [-0.5, height - 0.5]`.
    pub fn image(width: u32, height: u32) -> Self {
        Self::new(-0.5, -0.5, width as f64 - 0.5, height as f64 - 0.5)
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }
}

fn cross(o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Andrew's monotone chain. Returns the hull with positive signed area
/// (counter-clockwise in x-right, y-up axes), without repeated endpoints.
pub fn convex_hull(points: &[Point2<f64>]) -> Result<Vec<Point2<f64>>, HullError> {
    let mut pts: Vec<Point2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(HullError::DegenerateHull(pts.len()));
    }
    let mut lower: Vec<Point2<f64>> = Vec::with_capacity(pts.len());
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point2<f64>> = Vec::with_capacity(pts.len());
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 || polygon_area(&lower) <= 0.0 {
        return Err(HullError::DegenerateHull(lower.len()));
    }
    Ok(lower)
}

/// Absolute shoelace area.
pub fn polygon_area(poly: &[Point2<f64>]) -> f64 {
    signed_area(poly).abs()
}

fn signed_area(poly: &[Point2<f64>]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..poly.len() {
        let a = &poly[i];
        let b = &poly[(i + 1) % poly.len()];
        twice += a.x * b.y - b.x * a.y;
    }
    0.5 * twice
}

/// Sutherland-Hodgman clipping of a convex or simple polygon against an
/// axis-aligned rectangle.
pub fn clip_to_rect(poly: &[Point2<f64>], rect: &Rect) -> Vec<Point2<f64>> {
    // each edge: inside test and the intersection of segment a-b with it
    type Inside = fn(&Point2<f64>, &Rect) -> bool;
    type Cut = fn(&Point2<f64>, &Point2<f64>, &Rect) -> Point2<f64>;
    let edges: [(Inside, Cut); 4] = [
        (|p, r| p.x >= r.x0, |a, b, r| Point2::new(r.x0, a.y + (r.x0 - a.x) / (b.x - a.x) * (b.y - a.y))),
        (|p, r| p.x <= r.x1, |a, b, r| Point2::new(r.x1, a.y + (r.x1 - a.x) / (b.x - a.x) * (b.y - a.y))),
        (|p, r| p.y >= r.y0, |a, b, r| Point2::new(a.x + (r.y0 - a.y) / (b.y - a.y) * (b.x - a.x), r.y0)),
        (|p, r| p.y <= r.y1, |a, b, r| Point2::new(a.x + (r.y1 - a.y) / (b.y - a.y) * (b.x - a.x), r.y1)),
    ];
    let mut output = poly.to_vec();
    for (inside, cut) in edges {
        if output.is_empty() {
            break;
        }
        let input = std::mem::take(&mut output);
        let mut prev = *input.last().unwrap();
        for cur in input {
            let (cin, pin) = (inside(&cur, rect), inside(&prev, rect));
            if cin {
                if !pin {
                    output.push(cut(&prev, &cur, rect));
                }
                output.push(cur);
            } else if pin {
                output.push(cut(&prev, &cur, rect));
            }
            prev = cur;
        }
    }
    output
}

/// Fraction of the convex hull of `points` lying inside `rect`.
pub fn visibility_in_rect(points: &[Point2<f64>], rect: &Rect) -> Result<f64, HullError> {
    let hull = convex_hull(points)?;
    let total = polygon_area(&hull);
    let inside = polygon_area(&clip_to_rect(&hull, rect));
    Ok((inside / total).clamp(0.0, 1.0))
}

/// Fraction of the convex hull of `points` inside a `width x height` image.
pub fn visibility_fraction(points: &[Point2<f64>], dims: (u32, u32)) -> Result<f64, HullError> {
    visibility_in_rect(points, &Rect::image(dims.0, dims.1))
}

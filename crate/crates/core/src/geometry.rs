//! Planar convex polygons and the clipping primitives used to build exact
//! power cells.

use serde::{Deserialize, Serialize};

/// A point in the plane.
pub type Point2 = [f64; 2];

/// Absolute tolerance on cross products when deciding collinearity.
pub const COLLINEAR_EPS: f64 = 1e-12;

#[inline]
pub(crate) fn dot2(a: Point2, b: Point2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub(crate) fn sub2(a: Point2, b: Point2) -> Point2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub(crate) fn cross2(a: Point2, b: Point2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Euclidean distance between two planar points.
pub fn segment_length(p: Point2, q: Point2) -> f64 {
    (q[0] - p[0]).hypot(q[1] - p[1])
}

/// Origin of an edge of a clipped polygon: either a piece of the original
/// outline or the supporting line of a clipping half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeLabel {
    /// Edge `k` of the polygon that clipping started from.
    Boundary(usize),
    /// Half-plane tagged with this identifier (a neighbouring cell index
    /// when building power cells).
    Clip(usize),
}

/// Convex polygon with counter-clockwise vertices. The empty polygon has no
/// vertices and zero area.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    /// Wraps a vertex list without checking it. Callers own the CCW/convexity
    /// invariant; use [`ConvexPolygon::try_new`] for untrusted input.
    pub fn from_ccw_unchecked(vertices: Vec<Point2>) -> Self {
        Self { vertices }
    }

    /// Validates a counter-clockwise convex vertex list.
    ///
    /// Every turn must be non-negative (up to [`COLLINEAR_EPS`]) and at least
    /// three turns must be strictly positive.
    pub fn try_new(vertices: Vec<Point2>) -> Option<Self> {
        let n = vertices.len();
        if n < 3 {
            return None;
        }
        let mut strict = 0;
        for k in 0..n {
            let a = vertices[k];
            let b = vertices[(k + 1) % n];
            let c = vertices[(k + 2) % n];
            let turn = cross2(sub2(b, a), sub2(c, b));
            if turn < -COLLINEAR_EPS {
                return None;
            }
            if turn > COLLINEAR_EPS {
                strict += 1;
            }
        }
        // A positive total turning with all-left turns can still wind twice.
        let poly = Self { vertices };
        if strict < 3 || poly.signed_area() <= 0.0 {
            return None;
        }
        let mut winding = 0.0;
        for k in 0..n {
            let a = poly.vertices[k];
            let b = poly.vertices[(k + 1) % n];
            let c = poly.vertices[(k + 2) % n];
            let u = sub2(b, a);
            let v = sub2(c, b);
            winding += cross2(u, v).atan2(dot2(u, v));
        }
        if (winding - std::f64::consts::TAU).abs() > 1e-6 {
            return None;
        }
        Some(poly)
    }

    /// Axis-aligned rectangle `[lo, hi]`.
    pub fn rectangle(lo: Point2, hi: Point2) -> Self {
        Self {
            vertices: vec![lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]],
        }
    }

    /// Regular polygon with `sides` vertices inscribed in a circle.
    pub fn regular(center: Point2, radius: f64, sides: usize) -> Self {
        let vertices = (0..sides)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / sides as f64;
                [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
            })
            .collect();
        Self { vertices }
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut acc = 0.0;
        for k in 0..n {
            acc += cross2(self.vertices[k], self.vertices[(k + 1) % n]);
        }
        0.5 * acc
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        self.signed_area().max(0.0)
    }

    /// Area centroid. Returns the vertex mean for degenerate polygons and the
    /// origin for the empty polygon.
    pub fn centroid(&self) -> Point2 {
        let n = self.vertices.len();
        if n == 0 {
            return [0.0, 0.0];
        }
        // Shift to the first vertex so large offsets do not cancel.
        let o = self.vertices[0];
        let mut a = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for k in 0..n {
            let p = sub2(self.vertices[k], o);
            let q = sub2(self.vertices[(k + 1) % n], o);
            let c = cross2(p, q);
            a += c;
            cx += (p[0] + q[0]) * c;
            cy += (p[1] + q[1]) * c;
        }
        if a.abs() <= f64::MIN_POSITIVE {
            let inv = 1.0 / n as f64;
            let s = self
                .vertices
                .iter()
                .fold([0.0, 0.0], |s, v| [s[0] + v[0], s[1] + v[1]]);
            return [s[0] * inv, s[1] * inv];
        }
        [o[0] + cx / (3.0 * a), o[1] + cy / (3.0 * a)]
    }

    /// Second moment `∫ ‖x − c‖² dx` about an arbitrary point `c`.
    pub fn second_moment_about(&self, c: Point2) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut acc = 0.0;
        for k in 0..n {
            let p = sub2(self.vertices[k], c);
            let q = sub2(self.vertices[(k + 1) % n], c);
            let w = cross2(p, q);
            acc += w
                * (p[0] * p[0] + p[0] * q[0] + q[0] * q[0] + p[1] * p[1] + p[1] * q[1] + q[1] * q[1]);
        }
        (acc / 12.0).max(0.0)
    }

    /// Axis-aligned bounding box as `(lo, hi)`.
    pub fn bounding_box(&self) -> (Point2, Point2) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for a in 0..2 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        (lo, hi)
    }

    /// Largest signed distance of `x` to the supporting lines of the edges.
    /// Non-positive exactly when `x` is inside; equals minus the distance to
    /// the boundary for interior points.
    pub fn signed_distance(&self, x: Point2) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return f64::INFINITY;
        }
        let mut worst = f64::NEG_INFINITY;
        for k in 0..n {
            let a = self.vertices[k];
            let b = self.vertices[(k + 1) % n];
            let e = sub2(b, a);
            let len = e[0].hypot(e[1]);
            if len == 0.0 {
                continue;
            }
            // Outward normal of a CCW edge is (e_y, -e_x).
            let d = (e[1] * (x[0] - a[0]) - e[0] * (x[1] - a[1])) / len;
            worst = worst.max(d);
        }
        worst
    }

    pub fn contains(&self, x: Point2) -> bool {
        self.signed_distance(x) <= 0.0
    }

    /// Intersection with the half-plane `{x : ⟨a, x⟩ ≤ b}`.
    pub fn clip_halfplane(&self, a: Point2, b: f64) -> ConvexPolygon {
        let labelled = LabelledPolygon::from_polygon(self);
        labelled.clip(a, b, EdgeLabel::Clip(0)).into_polygon()
    }

    /// Parameter interval `[t0, t1]` of `p + t·dir` inside the polygon, with
    /// `t` restricted to `[t_min, t_max]`. `None` when the line misses.
    pub fn clip_line(&self, p: Point2, dir: Point2, t_min: f64, t_max: f64) -> Option<(f64, f64)> {
        let n = self.vertices.len();
        if n < 3 {
            return None;
        }
        let (mut lo, mut hi) = (t_min, t_max);
        for k in 0..n {
            let a = self.vertices[k];
            let e = sub2(self.vertices[(k + 1) % n], a);
            let normal = [e[1], -e[0]];
            // Inside: ⟨normal, x − a⟩ ≤ 0.
            let num = dot2(normal, sub2(p, a));
            let den = dot2(normal, dir);
            if den.abs() <= f64::MIN_POSITIVE {
                if num > 0.0 {
                    return None;
                }
                continue;
            }
            let t = -num / den;
            if den > 0.0 {
                hi = hi.min(t);
            } else {
                lo = lo.max(t);
            }
            if lo > hi {
                return None;
            }
        }
        Some((lo, hi))
    }
}

/// Convex polygon whose edges remember where they came from. Edge `k` runs
/// from `vertices[k]` to `vertices[k + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledPolygon {
    pub vertices: Vec<Point2>,
    pub labels: Vec<EdgeLabel>,
}

impl LabelledPolygon {
    pub fn from_polygon(poly: &ConvexPolygon) -> Self {
        let labels = (0..poly.vertices.len()).map(EdgeLabel::Boundary).collect();
        Self {
            vertices: poly.vertices.clone(),
            labels,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Sutherland–Hodgman step against `⟨a, x⟩ ≤ b`; new edges carry `tag`.
    pub fn clip(&self, a: Point2, b: f64, tag: EdgeLabel) -> LabelledPolygon {
        let n = self.vertices.len();
        if n < 3 {
            return LabelledPolygon {
                vertices: Vec::new(),
                labels: Vec::new(),
            };
        }
        let values: Vec<f64> = self.vertices.iter().map(|v| dot2(a, *v) - b).collect();
        if values.iter().all(|&v| v <= 0.0) {
            return self.clone();
        }
        let mut vertices = Vec::with_capacity(n + 1);
        let mut labels = Vec::with_capacity(n + 1);
        for k in 0..n {
            let kn = (k + 1) % n;
            let (p, q) = (self.vertices[k], self.vertices[kn]);
            let (dp, dq) = (values[k], values[kn]);
            let label = self.labels[k];
            if dp <= 0.0 {
                vertices.push(p);
                labels.push(label);
                if dq > 0.0 {
                    let t = dp / (dp - dq);
                    vertices.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
                    labels.push(tag);
                }
            } else if dq <= 0.0 {
                let t = dp / (dp - dq);
                vertices.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
                labels.push(label);
            }
        }
        let mut out = LabelledPolygon { vertices, labels };
        out.drop_repeated_vertices();
        if out.vertices.len() < 3 {
            out.vertices.clear();
            out.labels.clear();
        }
        out
    }

    // A repeated vertex means the edge leaving the first copy is empty; the
    // second copy carries the label of the edge that actually leaves it.
    fn drop_repeated_vertices(&mut self) {
        let n = self.vertices.len();
        if n < 2 {
            return;
        }
        let mut keep = vec![true; n];
        for (k, keep) in keep.iter_mut().enumerate() {
            let next = (k + 1) % n;
            if k != next && self.vertices[k] == self.vertices[next] {
                *keep = false;
            }
        }
        if keep.iter().all(|&k| k) {
            return;
        }
        let mut k = 0;
        self.vertices.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        let mut k = 0;
        self.labels.retain(|_| {
            k += 1;
            keep[k - 1]
        });
    }

    pub fn edge(&self, k: usize) -> (Point2, Point2) {
        (self.vertices[k], self.vertices[(k + 1) % self.vertices.len()])
    }

    pub fn into_polygon(self) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.vertices,
        }
    }

    pub fn to_polygon(&self) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.vertices.clone(),
        }
    }
}

/// Convex hull of a planar point set (Andrew's monotone chain), CCW, without
/// collinear boundary points. Fewer than three hull points are returned as-is.
pub fn convex_hull_2d(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let turn = |o: Point2, a: Point2, b: Point2| cross2(sub2(a, o), sub2(b, o));
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Largest pairwise distance within a point set.
pub fn diameter(points: &[Point2]) -> f64 {
    let mut best: f64 = 0.0;
    for (k, p) in points.iter().enumerate() {
        for q in &points[k + 1..] {
            best = best.max(segment_length(*p, *q));
        }
    }
    best
}

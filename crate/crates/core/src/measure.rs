//! Source domains with uniform density and discrete target measures.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConvexPolygon, Point2};

/// Two target points closer than this are duplicates.
pub const DUPLICATE_EPS: f64 = 1e-12;

/// Number of sides of the polygon standing in for a disk in exact 2D mode.
pub const DISK_POLYGON_SIDES: usize = 256;

/// Geometric support of the source measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Axis-aligned box `∏ [lo_k, hi_k]`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// Convex polygon, 2D only.
    Polygon { polygon: ConvexPolygon },
}

/// Convex compact domain Ω carrying the uniform probability measure μ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SourceDomain {
    shape: Shape,
    seed: u64,
}

impl SourceDomain {
    pub fn new(shape: Shape, seed: u64) -> Result<Self> {
        match &shape {
            Shape::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::InvalidDomain("box bounds must have equal, non-zero length".into()));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && h > l)) {
                    return Err(Error::InvalidDomain("box must have positive extent on every axis".into()));
                }
            }
            Shape::Ball { center, radius } => {
                if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidDomain("ball center must be a finite vector".into()));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidDomain("ball radius must be positive".into()));
                }
            }
            Shape::Polygon { polygon } => {
                if ConvexPolygon::try_new(polygon.vertices().to_vec()).is_none() {
                    return Err(Error::InvalidDomain(
                        "polygon must be simple, convex and counter-clockwise".into(),
                    ));
                }
            }
        }
        Ok(Self { shape, seed })
    }

    pub fn unit_box(dim: usize, seed: u64) -> Self {
        Self {
            shape: Shape::Box {
                lo: vec![0.0; dim],
                hi: vec![1.0; dim],
            },
            seed,
        }
    }

    pub fn square(lo: f64, hi: f64, seed: u64) -> Self {
        Self {
            shape: Shape::Box {
                lo: vec![lo; 2],
                hi: vec![hi; 2],
            },
            seed,
        }
    }

    pub fn disk(center: Point2, radius: f64, seed: u64) -> Self {
        Self {
            shape: Shape::Ball {
                center: center.to_vec(),
                radius,
            },
            seed,
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Box { lo, .. } => lo.len(),
            Shape::Ball { center, .. } => center.len(),
            Shape::Polygon { .. } => 2,
        }
    }

    /// Lebesgue volume of Ω.
    pub fn volume(&self) -> f64 {
        match &self.shape {
            Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| h - l).product(),
            Shape::Ball { center, radius } => {
                let d = center.len() as f64;
                let unit = std::f64::consts::PI.powf(d / 2.0) / statrs::function::gamma::gamma(d / 2.0 + 1.0);
                unit * radius.powf(d)
            }
            Shape::Polygon { polygon } => polygon.area(),
        }
    }

    pub fn center(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
            Shape::Ball { center, .. } => center.clone(),
            Shape::Polygon { polygon } => polygon.centroid().to_vec(),
        }
    }

    /// Radius of a ball around [`SourceDomain::center`] contained in Ω.
    pub fn inner_radius(&self) -> f64 {
        match &self.shape {
            Shape::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| 0.5 * (h - l))
                .fold(f64::INFINITY, f64::min),
            Shape::Ball { radius, .. } => *radius,
            Shape::Polygon { polygon } => -polygon.signed_distance(polygon.centroid()),
        }
    }

    /// The polygon used for exact planar computations. Disks are replaced by
    /// the inscribed regular [`DISK_POLYGON_SIDES`]-gon, whose area then
    /// normalizes the density.
    pub fn polygon_2d(&self) -> Option<ConvexPolygon> {
        if self.dim() != 2 {
            return None;
        }
        Some(match &self.shape {
            Shape::Box { lo, hi } => ConvexPolygon::rectangle([lo[0], lo[1]], [hi[0], hi[1]]),
            Shape::Ball { center, radius } => {
                ConvexPolygon::regular([center[0], center[1]], *radius, DISK_POLYGON_SIDES)
            }
            Shape::Polygon { polygon } => polygon.clone(),
        })
    }

    /// Signed distance-like function: non-positive exactly on Ω. Exact inside
    /// balls and polygons; for boxes it is the largest per-axis violation.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .zip(x)
                .map(|((l, h), v)| (l - v).max(v - h))
                .fold(f64::NEG_INFINITY, f64::max),
            Shape::Ball { center, radius } => {
                let r2: f64 = center.iter().zip(x).map(|(c, v)| (v - c) * (v - c)).sum();
                r2.sqrt() - radius
            }
            Shape::Polygon { polygon } => polygon.signed_distance([x[0], x[1]]),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.signed_distance(x) <= 0.0
    }

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
            Shape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Shape::Polygon { polygon } => {
                let (lo, hi) = polygon.bounding_box();
                (lo.to_vec(), hi.to_vec())
            }
        }
    }

    /// Seeded generator for this domain's default stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Draws one point of μ.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let (lo, hi) = self.bounding_box();
        self.sample_in_box(rng, &lo, &hi, out);
    }

    // Box: per-axis uniforms. Ball and polygon: rejection from the bounding box.
    fn sample_in_box<R: Rng + ?Sized>(&self, rng: &mut R, lo: &[f64], hi: &[f64], out: &mut [f64]) {
        loop {
            for ((o, l), h) in out.iter_mut().zip(lo).zip(hi) {
                *o = rng.gen_range(*l..*h);
            }
            if matches!(self.shape, Shape::Box { .. }) || self.signed_distance(out) <= 0.0 {
                return;
            }
        }
    }

    /// `count` i.i.d. samples of μ, flattened row-major (`count × dim`).
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        let d = self.dim();
        let (lo, hi) = self.bounding_box();
        let mut out = vec![0.0; count * d];
        for row in out.chunks_exact_mut(d) {
            self.sample_in_box(rng, &lo, &hi, row);
        }
        out
    }

    /// Samples from the domain's own seeded stream; identical calls return
    /// identical samples.
    pub fn sample(&self, count: usize) -> Vec<f64> {
        self.sample_with(&mut self.rng(), count)
    }
}

/// Finite sum of weighted Dirac masses `ν = Σ ν_i δ_{y_i}` of total mass 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteTargetMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

/// Moves the rounding residual of `Σ w` into the last weight so that the
/// left-to-right sum is exactly one. The sum is monotone in the last term,
/// so the ulp steps terminate.
fn normalize_exactly(mut w: Vec<f64>) -> Vec<f64> {
    let Some(last) = w.len().checked_sub(1) else {
        return w;
    };
    let head: f64 = w[..last].iter().sum();
    w[last] = 1.0 - head;
    for _ in 0..64 {
        let sum = head + w[last];
        if sum == 1.0 {
            break;
        }
        w[last] = if sum < 1.0 { w[last].next_up() } else { w[last].next_down() };
    }
    w
}

impl DiscreteTargetMeasure {
    /// Validates and normalizes a target measure.
    ///
    /// Weights summing to within `mass_tolerance` of 1 are rescaled to sum to
    /// one; anything further off is rejected.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>, mass_tolerance: f64) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::EmptyTarget);
        }
        if weights.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: weights.len(),
            });
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        let mut flat = Vec::with_capacity(n * dim);
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("target coordinate"));
            }
            flat.extend_from_slice(p);
        }
        Self::from_flat(dim, flat, weights, mass_tolerance)
    }

    /// Same as [`DiscreteTargetMeasure::new`] over row-major coordinates.
    pub fn from_flat(dim: usize, points: Vec<f64>, weights: Vec<f64>, mass_tolerance: f64) -> Result<Self> {
        if dim == 0 || !points.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: points.len(),
            });
        }
        let n = points.len() / dim;
        if n == 0 {
            return Err(Error::EmptyTarget);
        }
        if weights.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: weights.len(),
            });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("target coordinate"));
        }
        for (index, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFinite("target weight"));
            }
            if w <= 0.0 {
                return Err(Error::NonpositiveWeight { index, weight: w });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > mass_tolerance {
            return Err(Error::MassMismatch {
                total: sum,
                tolerance: mass_tolerance,
            });
        }
        let weights = normalize_exactly(weights.iter().map(|w| w / sum).collect());
        let measure = Self { dim, points, weights };
        measure.check_distinct()?;
        Ok(measure)
    }

    /// Equal weights `1/n`, up to the rounding fix in the last weight.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        let w = if n == 0 { 0.0 } else { 1.0 / n as f64 };
        Self::new(points, vec![w; n], 1e-9)
    }

    fn check_distinct(&self) -> Result<()> {
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.point(a)[0].total_cmp(&self.point(b)[0]));
        for (k, &a) in order.iter().enumerate() {
            let pa = self.point(a);
            for &b in &order[k + 1..] {
                let pb = self.point(b);
                if pb[0] - pa[0] > DUPLICATE_EPS {
                    break;
                }
                let d2: f64 = pa.iter().zip(pb).map(|(x, y)| (x - y) * (x - y)).sum();
                if d2.sqrt() <= DUPLICATE_EPS {
                    return Err(Error::DuplicatePoint {
                        first: a.min(b),
                        second: a.max(b),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Planar coordinates of point `i`; panics unless `dim == 2`.
    pub fn point2(&self, i: usize) -> Point2 {
        assert_eq!(self.dim, 2);
        [self.points[2 * i], self.points[2 * i + 1]]
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.point(i)
            .iter()
            .zip(self.point(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Mean of the support points under ν.
    pub fn barycenter(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (ck, pk) in c.iter_mut().zip(self.point(i)) {
                *ck += w * pk;
            }
        }
        c
    }

    /// Translated copy.
    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut points = self.points.clone();
        for row in points.chunks_exact_mut(self.dim) {
            for (p, s) in row.iter_mut().zip(shift) {
                *p += s;
            }
        }
        Self {
            dim: self.dim,
            points,
            weights: self.weights.clone(),
        }
    }

    /// Loads a target from CSV: `dim` coordinate columns, then an optional
    /// weight column (uniform weights when absent). A first row that does not
    /// parse as numbers is treated as a header.
    pub fn from_csv_path(path: &Path, dim: usize, mass_tolerance: f64) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file, dim, mass_tolerance)
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R, dim: usize, mass_tolerance: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .flexible(true)
            .from_reader(reader);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut weighted: Option<bool> = None;
        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::Csv(e.to_string()))?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            let values = match parsed {
                Ok(v) => v,
                Err(_) if row == 0 => continue,
                Err(_) => return Err(Error::Csv(format!("row {}: non-numeric field", row + 1))),
            };
            let has_weight = match values.len() {
                l if l == dim => false,
                l if l == dim + 1 => true,
                l => {
                    return Err(Error::Csv(format!(
                        "row {}: expected {dim} or {} columns, found {l}",
                        row + 1,
                        dim + 1
                    )))
                }
            };
            if *weighted.get_or_insert(has_weight) != has_weight {
                return Err(Error::Csv(format!("row {}: inconsistent weight column", row + 1)));
            }
            points.extend_from_slice(&values[..dim]);
            if has_weight {
                weights.push(values[dim]);
            }
        }
        let n = points.len() / dim.max(1);
        if n == 0 {
            return Err(Error::EmptyTarget);
        }
        if weighted != Some(true) {
            weights = vec![1.0 / n as f64; n];
        }
        Self::from_flat(dim, points, weights, mass_tolerance)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.len() {
            for v in self.point(i) {
                s.push_str(&format!("{v},"));
            }
            s.push_str(&format!("{}\n", self.weights[i]));
        }
        s
    }
}

//! Legendre dual of a planar Brenier potential.
//!
//! Each supporting plane `⟨x, y_i⟩ + h_i` dualizes to the lifted point
//! `(y_i, −h_i)`. The lower convex hull of the lifted points is the graph of
//! the conjugate `u_h*`, and its projection onto the target points is the
//! weighted Delaunay triangulation, combinatorially dual to the power
//! diagram. Every hull edge also carries the geometry of its dual power facet
//! so the result can be restricted to a domain and compared with the cells
//! obtained by clipping.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::cells::FACET_EPS;
use crate::error::{Error, Result};
use crate::geometry::{convex_hull_2d, cross2, dot2, segment_length, sub2, Point2};
use crate::measure::SourceDomain;
use crate::potential::BrenierPotential;

const ORIENT_EPS: f64 = 1e-11;
const LOWER_NORMAL_EPS: f64 = 1e-9;

/// Power facet dual to a weighted Delaunay edge, in ℝ² (not yet clipped).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DualFacet {
    Segment { from: Point2, to: Point2 },
    Ray { origin: Point2, direction: Point2 },
    Line { point: Point2, direction: Point2 },
}

impl DualFacet {
    fn parametrize(&self) -> (Point2, Point2, f64, f64) {
        match *self {
            DualFacet::Segment { from, to } => (from, sub2(to, from), 0.0, 1.0),
            DualFacet::Ray { origin, direction } => (origin, direction, 0.0, f64::INFINITY),
            DualFacet::Line { point, direction } => (point, direction, f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualEdge {
    pub i: usize,
    pub j: usize,
    pub facet: DualFacet,
}

/// Affine piece `y ↦ ⟨slope, y⟩ + offset` of the conjugate `u_h*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjugatePiece {
    pub slope: Point2,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualTriangulation {
    /// Weighted Delaunay edges `i < j`, sorted.
    pub edges: Vec<DualEdge>,
    /// Lower-hull triangles (empty in the flat and collinear fallbacks).
    pub triangles: Vec<[usize; 3]>,
    /// Targets that are not vertices of the lower hull; their power cells
    /// are empty in all of ℝ².
    pub hidden: Vec<usize>,
    /// The target points are collinear and the dual is one-dimensional.
    pub collinear: bool,
    pieces: Vec<ConjugatePiece>,
    vertices: Vec<usize>,
    points: Vec<Point2>,
}

/// Restricted dual edge: the part of the power facet inside Ω.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictedEdge {
    pub i: usize,
    pub j: usize,
    /// Facet length inside Ω divided by the area of Ω.
    pub measure: f64,
}

impl DualTriangulation {
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.i, e.j)).collect()
    }

    /// Lower-hull vertices, i.e. targets with non-empty cells in ℝ².
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// `u_h*(y)` for `y` in the convex hull of the targets.
    pub fn conjugate(&self, y: Point2) -> f64 {
        self.pieces
            .iter()
            .map(|p| dot2(p.slope, y) + p.offset)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `u_h**(x) = max_v ⟨x, y_v⟩ − u_h*(y_v)` over the lower-hull vertices.
    pub fn biconjugate(&self, x: Point2) -> f64 {
        self.vertices
            .iter()
            .map(|&v| {
                let y = self.points[v];
                dot2(x, y) - self.conjugate(y)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Clips every dual facet to Ω and keeps the edges whose facet has
    /// positive length there.
    pub fn restrict(&self, domain: &SourceDomain) -> Result<Vec<RestrictedEdge>> {
        let omega = domain
            .polygon_2d()
            .ok_or_else(|| Error::DimensionUnsupported(domain.dim()))?;
        let area = omega.area();
        let (lo, hi) = omega.bounding_box();
        let min_len = FACET_EPS * segment_length(lo, hi);
        let mut out = Vec::new();
        for e in &self.edges {
            let (p, dir, t0, t1) = e.facet.parametrize();
            let scale = dir[0].hypot(dir[1]);
            if scale == 0.0 {
                continue;
            }
            if let Some((a, b)) = omega.clip_line(p, dir, t0, t1) {
                let len = (b - a) * scale;
                if len > min_len {
                    out.push(RestrictedEdge {
                        i: e.i,
                        j: e.j,
                        measure: len / area,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Builds the weighted Delaunay triangulation of a planar potential from the
/// lower convex hull of the lifted points `(y_i, −h_i)`.
pub fn legendre_dual(potential: &BrenierPotential) -> Result<DualTriangulation> {
    if potential.dim() != 2 {
        return Err(Error::DimensionUnsupported(potential.dim()));
    }
    let n = potential.len();
    let points: Vec<Point2> = (0..n).map(|i| potential.target().point2(i)).collect();
    let h = potential.heights();

    if n == 1 {
        return Ok(DualTriangulation {
            edges: Vec::new(),
            triangles: Vec::new(),
            hidden: Vec::new(),
            collinear: true,
            pieces: vec![ConjugatePiece {
                slope: [0.0, 0.0],
                offset: -h[0],
            }],
            vertices: vec![0],
            points,
        });
    }

    let frame = Frame::new(&points, h);
    let lifted: Vec<[f64; 3]> = (0..n).map(|i| frame.lift(points[i], h[i])).collect();

    if let Some(axis) = collinear_axis(&lifted) {
        return Ok(collinear_dual(points, h, axis));
    }

    match Hull::build(&lifted) {
        Some(hull) => Ok(hull_dual(&hull, points, h)),
        None => Ok(flat_dual(points, h)),
    }
}

// Coordinates centred on the target barycenter, scaled to unit extent, with
// the height axis scaled independently (affine maps preserve the hull).
struct Frame {
    center: Point2,
    xy_scale: f64,
    z_center: f64,
    z_scale: f64,
}

impl Frame {
    fn new(points: &[Point2], h: &[f64]) -> Self {
        let n = points.len() as f64;
        let center = points
            .iter()
            .fold([0.0, 0.0], |c, p| [c[0] + p[0] / n, c[1] + p[1] / n]);
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let xy_scale = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
        let zmin = h.iter().copied().fold(f64::INFINITY, f64::min);
        let zmax = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z_scale = (zmax - zmin).max(1e-6 * xy_scale * xy_scale);
        Self {
            center,
            xy_scale,
            z_center: -0.5 * (zmin + zmax),
            z_scale,
        }
    }

    fn lift(&self, p: Point2, h: f64) -> [f64; 3] {
        [
            (p[0] - self.center[0]) / self.xy_scale,
            (p[1] - self.center[1]) / self.xy_scale,
            (-h - self.z_center) / self.z_scale,
        ]
    }
}

fn collinear_axis(lifted: &[[f64; 3]]) -> Option<Point2> {
    let a = [lifted[0][0], lifted[0][1]];
    let (far, _) = lifted
        .iter()
        .map(|p| [p[0], p[1]])
        .enumerate()
        .map(|(k, p)| (k, segment_length(a, p)))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    let b = [lifted[far][0], lifted[far][1]];
    let d = sub2(b, a);
    let len = d[0].hypot(d[1]);
    let dir = [d[0] / len, d[1] / len];
    let spread = lifted
        .iter()
        .map(|p| cross2(dir, sub2([p[0], p[1]], a)).abs())
        .fold(0.0, f64::max);
    (spread <= ORIENT_EPS).then_some(dir)
}

fn collinear_dual(points: Vec<Point2>, h: &[f64], axis: Point2) -> DualTriangulation {
    let n = points.len();
    let t: Vec<f64> = points.iter().map(|p| dot2(*p, axis)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| t[a].total_cmp(&t[b]));
    // Lower hull of (t, −h).
    let mut chain: Vec<usize> = Vec::new();
    for &k in &order {
        while chain.len() >= 2 {
            let (a, b) = (chain[chain.len() - 2], chain[chain.len() - 1]);
            let turn = (t[b] - t[a]) * (-h[k] + h[a]) - (-h[b] + h[a]) * (t[k] - t[a]);
            if turn <= 0.0 {
                chain.pop();
            } else {
                break;
            }
        }
        chain.push(k);
    }
    let normal = [-axis[1], axis[0]];
    let mut edges = Vec::new();
    let mut pieces = Vec::new();
    for w in chain.windows(2) {
        let (a, b) = (w[0], w[1]);
        let diff = sub2(points[a], points[b]);
        let s = (h[b] - h[a]) / dot2(diff, diff);
        edges.push(DualEdge {
            i: a.min(b),
            j: a.max(b),
            facet: DualFacet::Line {
                point: [s * diff[0], s * diff[1]],
                direction: normal,
            },
        });
        let slope_t = (h[a] - h[b]) / (t[b] - t[a]);
        pieces.push(ConjugatePiece {
            slope: [slope_t * axis[0], slope_t * axis[1]],
            offset: -h[a] - slope_t * t[a],
        });
    }
    if chain.len() == 1 {
        pieces.push(ConjugatePiece {
            slope: [0.0, 0.0],
            offset: -h[chain[0]],
        });
    }
    finish(points, edges, Vec::new(), pieces, chain, true)
}

fn flat_dual(points: Vec<Point2>, h: &[f64]) -> DualTriangulation {
    let hull = convex_hull_2d(&points);
    let index_of = |p: Point2| points.iter().position(|q| *q == p).expect("hull vertex is a target");
    let ring: Vec<usize> = hull.iter().map(|p| index_of(*p)).collect();
    let (a, b, c) = (ring[0], ring[1], ring[2]);
    let alpha = power_vertex(&points, h, a, b, c);
    let beta = -h[a] - dot2(alpha, points[a]);
    let mut edges = Vec::new();
    for k in 0..ring.len() {
        let (i, j) = (ring[k], ring[(k + 1) % ring.len()]);
        let e = sub2(points[j], points[i]);
        // CCW ring: the outward normal of edge (i, j) is (e_y, −e_x).
        edges.push(DualEdge {
            i: i.min(j),
            j: i.max(j),
            facet: DualFacet::Ray {
                origin: alpha,
                direction: [e[1], -e[0]],
            },
        });
    }
    let pieces = vec![ConjugatePiece {
        slope: alpha,
        offset: beta,
    }];
    finish(points, edges, Vec::new(), pieces, ring, false)
}

fn finish(
    points: Vec<Point2>,
    mut edges: Vec<DualEdge>,
    triangles: Vec<[usize; 3]>,
    pieces: Vec<ConjugatePiece>,
    mut vertices: Vec<usize>,
    collinear: bool,
) -> DualTriangulation {
    edges.sort_by_key(|a| (a.i, a.j));
    vertices.sort_unstable();
    vertices.dedup();
    let hidden = (0..points.len()).filter(|v| vertices.binary_search(v).is_err()).collect();
    DualTriangulation {
        edges,
        triangles,
        hidden,
        collinear,
        pieces,
        vertices,
        points,
    }
}

/// Point where the planes of cells `a`, `b`, `c` meet; it is also the slope
/// of the conjugate on the lifted triangle `abc`.
fn power_vertex(points: &[Point2], h: &[f64], a: usize, b: usize, c: usize) -> Point2 {
    // ⟨x, y_b − y_a⟩ = h_a − h_b,  ⟨x, y_c − y_a⟩ = h_a − h_c
    let u = sub2(points[b], points[a]);
    let v = sub2(points[c], points[a]);
    let (ru, rv) = (h[a] - h[b], h[a] - h[c]);
    let det = cross2(u, v);
    [(ru * v[1] - rv * u[1]) / det, (u[0] * rv - v[0] * ru) / det]
}

fn hull_dual(hull: &Hull, points: Vec<Point2>, h: &[f64]) -> DualTriangulation {
    let lower: Vec<&HullFace> = hull
        .faces
        .iter()
        .filter(|f| f.alive && f.normal[2] < -LOWER_NORMAL_EPS)
        .collect();

    let mut triangles = Vec::with_capacity(lower.len());
    let mut pieces = Vec::with_capacity(lower.len());
    let mut vertices = Vec::new();
    // Undirected edge -> (power vertex, opposite vertex) of each lower face.
    let mut by_edge: BTreeMap<(usize, usize), Vec<(Point2, usize)>> = BTreeMap::new();
    for f in &lower {
        let [a, b, c] = f.v;
        let alpha = power_vertex(&points, h, a, b, c);
        pieces.push(ConjugatePiece {
            slope: alpha,
            offset: -h[a] - dot2(alpha, points[a]),
        });
        let mut tri = f.v;
        tri.sort_unstable();
        triangles.push(tri);
        vertices.extend_from_slice(&f.v);
        for (p, q, r) in [(a, b, c), (b, c, a), (c, a, b)] {
            by_edge.entry((p.min(q), p.max(q))).or_default().push((alpha, r));
        }
    }
    triangles.sort_unstable();

    let mut edges = Vec::with_capacity(by_edge.len());
    for ((i, j), sides) in by_edge {
        let facet = if sides.len() >= 2 {
            DualFacet::Segment {
                from: sides[0].0,
                to: sides[1].0,
            }
        } else {
            let (alpha, k) = sides[0];
            let e = sub2(points[j], points[i]);
            let mut dir = [e[1], -e[0]];
            if dot2(dir, sub2(points[k], points[i])) > 0.0 {
                dir = [-dir[0], -dir[1]];
            }
            DualFacet::Ray {
                origin: alpha,
                direction: dir,
            }
        };
        edges.push(DualEdge { i, j, facet });
    }
    finish(points, edges, triangles, pieces, vertices, false)
}

#[derive(Debug, Clone)]
struct HullFace {
    v: [usize; 3],
    normal: [f64; 3],
    offset: f64,
    alive: bool,
}

/// Incremental 3D convex hull with outward-oriented triangular faces.
struct Hull {
    faces: Vec<HullFace>,
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

impl Hull {
    fn face(pts: &[[f64; 3]], a: usize, b: usize, c: usize) -> HullFace {
        let n = cross3(sub3(pts[b], pts[a]), sub3(pts[c], pts[a]));
        let len = norm3(n);
        let normal = if len > 0.0 { [n[0] / len, n[1] / len, n[2] / len] } else { [0.0; 3] };
        HullFace {
            v: [a, b, c],
            normal,
            offset: dot3(normal, pts[a]),
            alive: true,
        }
    }

    fn distance(f: &HullFace, p: [f64; 3]) -> f64 {
        dot3(f.normal, p) - f.offset
    }

    /// `None` when all points are coplanar.
    fn build(pts: &[[f64; 3]]) -> Option<Hull> {
        let n = pts.len();
        let i0 = (0..n).min_by(|&a, &b| pts[a][0].total_cmp(&pts[b][0])).unwrap();
        let i1 = (0..n).max_by(|&a, &b| norm3(sub3(pts[a], pts[i0])).total_cmp(&norm3(sub3(pts[b], pts[i0])))).unwrap();
        let d01 = sub3(pts[i1], pts[i0]);
        let i2 = (0..n)
            .max_by(|&a, &b| {
                norm3(cross3(d01, sub3(pts[a], pts[i0]))).total_cmp(&norm3(cross3(d01, sub3(pts[b], pts[i0]))))
            })
            .unwrap();
        let base = Self::face(pts, i0, i1, i2);
        if norm3(cross3(d01, sub3(pts[i2], pts[i0]))) <= ORIENT_EPS {
            return None;
        }
        let i3 = (0..n)
            .max_by(|&a, &b| Self::distance(&base, pts[a]).abs().total_cmp(&Self::distance(&base, pts[b]).abs()))
            .unwrap();
        if Self::distance(&base, pts[i3]).abs() <= ORIENT_EPS {
            return None;
        }

        let mut hull = Hull { faces: Vec::new() };
        let mut edge_face: HashMap<(usize, usize), usize> = HashMap::new();
        let tetra = [i0, i1, i2, i3];
        for skip in 0..4 {
            let mut tri: Vec<usize> = tetra.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, &v)| v).collect();
            let mut f = Self::face(pts, tri[0], tri[1], tri[2]);
            if Self::distance(&f, pts[tetra[skip]]) > 0.0 {
                tri.swap(1, 2);
                f = Self::face(pts, tri[0], tri[1], tri[2]);
            }
            hull.push(f, &mut edge_face);
        }

        for p in 0..n {
            if tetra.contains(&p) {
                continue;
            }
            hull.insert(pts, p, &mut edge_face);
        }
        Some(hull)
    }

    fn push(&mut self, f: HullFace, edge_face: &mut HashMap<(usize, usize), usize>) {
        let id = self.faces.len();
        let [a, b, c] = f.v;
        for e in [(a, b), (b, c), (c, a)] {
            edge_face.insert(e, id);
        }
        self.faces.push(f);
    }

    fn insert(&mut self, pts: &[[f64; 3]], p: usize, edge_face: &mut HashMap<(usize, usize), usize>) {
        let mut seed = None;
        let mut best = ORIENT_EPS;
        for (k, f) in self.faces.iter().enumerate() {
            if !f.alive {
                continue;
            }
            let d = Self::distance(f, pts[p]);
            if d > best {
                best = d;
                seed = Some(k);
            }
        }
        let Some(seed) = seed else { return };

        // Grow the visible region from the most visible face so that it stays
        // connected even when near-coplanar decisions disagree.
        let mut visible = vec![seed];
        let mut in_visible: HashMap<usize, ()> = HashMap::from([(seed, ())]);
        let mut k = 0;
        while k < visible.len() {
            let [a, b, c] = self.faces[visible[k]].v;
            for (u, v) in [(a, b), (b, c), (c, a)] {
                if let Some(&g) = edge_face.get(&(v, u)) {
                    if !in_visible.contains_key(&g) && Self::distance(&self.faces[g], pts[p]) > ORIENT_EPS {
                        in_visible.insert(g, ());
                        visible.push(g);
                    }
                }
            }
            k += 1;
        }

        let mut horizon = Vec::new();
        for &f in &visible {
            let [a, b, c] = self.faces[f].v;
            for (u, v) in [(a, b), (b, c), (c, a)] {
                match edge_face.get(&(v, u)) {
                    Some(g) if in_visible.contains_key(g) => {}
                    _ => horizon.push((u, v)),
                }
            }
        }
        for &f in &visible {
            self.faces[f].alive = false;
            let [a, b, c] = self.faces[f].v;
            for e in [(a, b), (b, c), (c, a)] {
                if edge_face.get(&e) == Some(&f) {
                    edge_face.remove(&e);
                }
            }
        }
        for (u, v) in horizon {
            let f = Self::face(pts, u, v, p);
            self.push(f, edge_face);
        }
    }
}

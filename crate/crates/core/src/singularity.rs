//! Discrete singular sets of the transport map.
//!
//! A facet between cells `i` and `j` is singular when the map jumps by more
//! than a threshold `θ` across it, i.e. `‖y_i − y_j‖ > θ`. Singular facets
//! that share endpoints are grouped into chains, and the power-diagram
//! vertices carry the targets of their incident cells, whose convex hull is
//! the discrete subgradient there.

use serde::{Deserialize, Serialize};

use crate::cells::PowerCellStats;
use crate::error::{Error, Result};
use crate::geometry::{convex_hull_2d, diameter, Point2};
use crate::measure::{DiscreteTargetMeasure, SourceDomain};
use crate::potential::BrenierPotential;

/// Relative tolerance for merging diagram vertices.
const MERGE_EPS: f64 = 1e-9;

/// Multiple of the median adjacent gap used as the default threshold.
pub const DEFAULT_THRESHOLD_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularFacet {
    pub i: usize,
    pub j: usize,
    pub segment: [Point2; 2],
    /// `‖y_i − y_j‖`.
    pub gap: f64,
}

/// A point where three or more cells meet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramVertex {
    pub position: Point2,
    /// Incident cells, ascending.
    pub cells: Vec<usize>,
    /// Targets of the incident cells.
    pub reachable: Vec<Point2>,
    /// Number of singular facets ending here.
    pub singular_degree: usize,
}

/// Cells joined by non-singular facets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub cells: Vec<usize>,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityGraph {
    pub threshold: f64,
    pub facets: Vec<SingularFacet>,
    pub vertices: Vec<DiagramVertex>,
    /// Indices into `facets`, one list per connected chain.
    pub chains: Vec<Vec<usize>>,
    pub regions: Vec<Region>,
}

impl SingularityGraph {
    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    /// Vertices where at least three singular facets meet.
    pub fn singular_vertices(&self) -> impl Iterator<Item = (usize, &DiagramVertex)> {
        self.vertices.iter().enumerate().filter(|(_, v)| v.singular_degree >= 3)
    }

    pub fn is_singular(&self, i: usize, j: usize) -> bool {
        let (a, b) = (i.min(j), i.max(j));
        self.facets.iter().any(|f| f.i == a && f.j == b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialize")
    }
}

/// `DEFAULT_THRESHOLD_FACTOR` times the median of `‖y_i − y_j‖` over facets
/// with positive measure.
pub fn default_threshold(stats: &PowerCellStats, target: &DiscreteTargetMeasure) -> Option<f64> {
    let mut gaps: Vec<f64> = stats
        .facets
        .iter()
        .filter(|f| f.measure.is_none_or(|m| m > 0.0))
        .map(|f| target.distance(f.i, f.j))
        .collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(f64::total_cmp);
    let k = gaps.len();
    let median = if k % 2 == 1 {
        gaps[k / 2]
    } else {
        0.5 * (gaps[k / 2 - 1] + gaps[k / 2])
    };
    Some(DEFAULT_THRESHOLD_FACTOR * median)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }

    /// Dense labels `0..k` in order of first appearance.
    fn labels(&mut self) -> Vec<usize> {
        let n = self.0.len();
        let mut map = vec![usize::MAX; n];
        let mut next = 0;
        (0..n)
            .map(|a| {
                let r = self.find(a);
                if map[r] == usize::MAX {
                    map[r] = next;
                    next += 1;
                }
                map[r]
            })
            .collect()
    }
}

/// Merges points closer than `tol` and returns a cluster id per point.
fn merge_points(points: &[Point2], tol: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]));
    let mut uf = UnionFind::new(points.len());
    for (k, &a) in order.iter().enumerate() {
        for &b in &order[k + 1..] {
            if points[b][0] - points[a][0] > tol {
                break;
            }
            if (points[b][1] - points[a][1]).abs() <= tol {
                uf.union(a, b);
            }
        }
    }
    uf.labels()
}

/// Marks facets with `‖y_i − y_j‖ > threshold` as singular and assembles
/// vertices, chains and regions. Needs exact planar statistics.
pub fn detect_singular_facets(
    stats: &PowerCellStats,
    target: &DiscreteTargetMeasure,
    threshold: f64,
) -> Result<SingularityGraph> {
    if !(threshold > 0.0) {
        return Err(Error::ThresholdNonpositive(threshold));
    }
    if target.dim() != 2 {
        return Err(Error::DimensionUnsupported(target.dim()));
    }
    if stats.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            found: stats.len(),
        });
    }
    let cells = match &stats.cells {
        Some(c) if stats.has_facet_measures() => c,
        _ => return Err(Error::FacetMeasuresUnavailable),
    };

    let facets: Vec<SingularFacet> = stats
        .facets
        .iter()
        .filter(|f| f.measure.unwrap_or(0.0) > 0.0)
        .filter_map(|f| {
            let gap = target.distance(f.i, f.j);
            let segment = f.segment?;
            (gap > threshold).then_some(SingularFacet {
                i: f.i,
                j: f.j,
                segment,
                gap,
            })
        })
        .collect();

    // Point registry: every cell corner followed by every singular facet endpoint.
    let mut points = Vec::new();
    let mut owner = Vec::new();
    for (c, poly) in cells.iter().enumerate() {
        for &v in poly.vertices() {
            points.push(v);
            owner.push(c);
        }
    }
    let corner_count = points.len();
    for f in &facets {
        points.extend_from_slice(&f.segment);
    }
    let tol = MERGE_EPS * diameter(&points[..corner_count]).max(1.0);
    let cluster = merge_points(&points, tol);
    let cluster_count = cluster.iter().copied().max().map_or(0, |m| m + 1);

    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); cluster_count];
    let mut position = vec![[0.0; 2]; cluster_count];
    for k in 0..corner_count {
        incident[cluster[k]].push(owner[k]);
        position[cluster[k]] = points[k];
    }
    let mut degree = vec![0usize; cluster_count];
    let mut chain_uf = UnionFind::new(facets.len());
    let mut first_facet = vec![usize::MAX; cluster_count];
    for (f, _) in facets.iter().enumerate() {
        for end in 0..2 {
            let c = cluster[corner_count + 2 * f + end];
            degree[c] += 1;
            if first_facet[c] == usize::MAX {
                first_facet[c] = f;
            } else {
                chain_uf.union(first_facet[c], f);
            }
        }
    }

    let mut vertices = Vec::new();
    for c in 0..cluster_count {
        let mut inc = std::mem::take(&mut incident[c]);
        inc.sort_unstable();
        inc.dedup();
        if inc.len() >= 3 {
            vertices.push(DiagramVertex {
                position: position[c],
                reachable: inc.iter().map(|&i| target.point2(i)).collect(),
                cells: inc,
                singular_degree: degree[c],
            });
        }
    }
    vertices.sort_by(|a, b| {
        a.position[0]
            .total_cmp(&b.position[0])
            .then(a.position[1].total_cmp(&b.position[1]))
    });

    let labels = chain_uf.labels();
    let mut chains: Vec<Vec<usize>> = vec![Vec::new(); labels.iter().copied().max().map_or(0, |m| m + 1)];
    for (f, &l) in labels.iter().enumerate() {
        chains[l].push(f);
    }

    let mut region_uf = UnionFind::new(stats.len());
    for f in &stats.facets {
        if f.measure.unwrap_or(0.0) > 0.0 && target.distance(f.i, f.j) <= threshold {
            region_uf.union(f.i, f.j);
        }
    }
    let region_labels = region_uf.labels();
    let mut regions: Vec<Region> = Vec::new();
    for (i, &l) in region_labels.iter().enumerate() {
        if l == regions.len() {
            regions.push(Region {
                cells: Vec::new(),
                mass: 0.0,
            });
        }
        regions[l].cells.push(i);
        regions[l].mass += stats.measures[i];
    }

    Ok(SingularityGraph {
        threshold,
        facets,
        vertices,
        chains,
        regions,
    })
}

/// A change of cell along a probed segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    /// Midpoint of the step on which the cell changed.
    pub t: f64,
    pub from: usize,
    pub to: usize,
    /// `‖y_from − y_to‖`.
    pub jump: f64,
    pub is_singular: bool,
}

/// Walks `p + t(q − p)` for `t = k/steps` and records every change of the
/// assigned cell.
pub fn probe_segment(
    potential: &BrenierPotential,
    graph: &SingularityGraph,
    domain: &SourceDomain,
    p: &[f64],
    q: &[f64],
    steps: usize,
) -> Result<Vec<Crossing>> {
    let d = potential.dim();
    for x in [p, q] {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
        if !domain.contains(x) {
            return Err(Error::PointOutsideDomain(x.to_vec()));
        }
    }
    if steps < 2 {
        return Err(Error::InvalidConfig(format!("probe needs at least 2 steps, got {steps}")));
    }
    let target = potential.target();
    let mut x = vec![0.0; d];
    let mut at = |t: f64| {
        for k in 0..d {
            x[k] = p[k] + t * (q[k] - p[k]);
        }
        potential.assign_cell(&x)
    };
    let mut out = Vec::new();
    let mut prev = at(0.0);
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        let cur = at(t);
        if cur != prev {
            let jump = target.distance(prev, cur);
            out.push(Crossing {
                t: (k as f64 - 0.5) / steps as f64,
                from: prev,
                to: cur,
                jump,
                is_singular: jump > graph.threshold,
            });
            prev = cur;
        }
    }
    Ok(out)
}

/// Convex hull (counter-clockwise) of the targets reachable at a diagram
/// vertex.
pub fn cell_subgradient_extent(graph: &SingularityGraph, vertex: usize) -> Result<Vec<Point2>> {
    let v = graph.vertices.get(vertex).ok_or(Error::VertexNotFound(vertex))?;
    Ok(convex_hull_2d(&v.reachable))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::exact_cell_stats_2d;
    use crate::solver::{solve, SolverConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn solved(domain: &SourceDomain, target: DiscreteTargetMeasure) -> (BrenierPotential, PowerCellStats) {
        let target = Arc::new(target);
        let report = solve(domain, Arc::clone(&target), &SolverConfig::exact(), None).unwrap();
        let u = report.potential(target).unwrap();
        let stats = exact_cell_stats_2d(&u, domain).unwrap();
        (u, stats)
    }

    fn grid(k: usize, spacing: f64) -> DiscreteTargetMeasure {
        let mut pts = Vec::new();
        for a in 0..k {
            for b in 0..k {
                pts.push(vec![a as f64 * spacing, b as f64 * spacing]);
            }
        }
        DiscreteTargetMeasure::uniform(pts).unwrap()
    }

    fn two_clusters(per: usize, seed: u64) -> DiscreteTargetMeasure {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        for cx in [-5.0, 5.0] {
            while pts.len() < if cx < 0.0 { per } else { 2 * per } {
                let (a, b): (f64, f64) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
                if a * a + b * b <= 0.25 {
                    pts.push(vec![cx + a, b]);
                }
            }
        }
        DiscreteTargetMeasure::uniform(pts).unwrap()
    }

    #[test]
    fn rejects_bad_threshold_and_mc_stats() {
        let domain = SourceDomain::square(0.0, 1.0, 0);
        let (u, stats) = solved(&domain, grid(2, 1.0));
        assert_eq!(
            detect_singular_facets(&stats, u.target(), 0.0).unwrap_err(),
            Error::ThresholdNonpositive(0.0)
        );
        let mc = crate::cells::mc_cell_stats_sampled(&u, &domain, 1000);
        assert_eq!(
            detect_singular_facets(&mc, u.target(), 1.0).unwrap_err(),
            Error::FacetMeasuresUnavailable
        );
    }

    #[test]
    fn grid_has_no_singular_facets_and_small_subgradients() {
        let domain = SourceDomain::square(-1.0, 1.0, 0);
        let spacing = 0.5;
        let (u, stats) = solved(&domain, grid(5, spacing));
        let g = detect_singular_facets(&stats, u.target(), 3.0 * spacing).unwrap();
        assert!(g.is_empty());
        assert_eq!(g.regions.len(), 1);
        assert!(!g.vertices.is_empty());
        for k in 0..g.vertices.len() {
            let hull = cell_subgradient_extent(&g, k).unwrap();
            assert!(hull.len() >= 3);
            assert!(diameter(&hull) <= 2.0 * spacing + 1e-9);
        }
        assert_eq!(cell_subgradient_extent(&g, g.vertices.len()), Err(Error::VertexNotFound(g.vertices.len())));
    }

    #[test]
    fn raising_threshold_shrinks_singular_set() {
        let domain = SourceDomain::disk([0.0, 0.0], 1.0, 0);
        let (u, stats) = solved(&domain, two_clusters(15, 4));
        let mut prev: Option<Vec<(usize, usize)>> = None;
        for theta in [0.05, 0.2, 0.5, 1.0, 3.0, 9.0, 20.0] {
            let g = detect_singular_facets(&stats, u.target(), theta).unwrap();
            let set: Vec<(usize, usize)> = g.facets.iter().map(|f| (f.i, f.j)).collect();
            for f in &g.facets {
                assert!(f.gap > theta);
                assert!(stats.facet_measure(f.i, f.j) > 0.0);
            }
            if let Some(p) = &prev {
                assert!(set.iter().all(|e| p.contains(e)));
            }
            prev = Some(set);
        }
        assert!(prev.unwrap().is_empty());
    }

    #[test]
    fn two_clusters_split_the_disk_along_one_chain() {
        let domain = SourceDomain::disk([0.0, 0.0], 1.0, 0);
        let (u, stats) = solved(&domain, two_clusters(20, 9));
        let g = detect_singular_facets(&stats, u.target(), 3.0).unwrap();
        assert_eq!(g.chains.len(), 1);
        assert_eq!(g.regions.len(), 2);
        for r in &g.regions {
            assert!((r.mass - 0.5).abs() < 1e-3, "{}", r.mass);
        }
        let crossings = probe_segment(&u, &g, &domain, &[-0.9, 0.0], &[0.9, 0.0], 10_000).unwrap();
        assert!(crossings.iter().any(|c| c.is_singular));
    }

    #[test]
    fn probe_inside_one_cell_and_across_bisector() {
        let domain = SourceDomain::square(-1.0, 1.0, 0);
        let t = Arc::new(DiscreteTargetMeasure::uniform(vec![vec![-1.0, 0.0], vec![1.0, 0.0]]).unwrap());
        let u = BrenierPotential::flat(t);
        let stats = exact_cell_stats_2d(&u, &domain).unwrap();
        let g = detect_singular_facets(&stats, u.target(), 1.0).unwrap();
        assert_eq!(g.chains.len(), 1);
        let none = probe_segment(&u, &g, &domain, &[-0.9, -0.5], &[-0.1, 0.5], 100).unwrap();
        assert!(none.is_empty());
        let steps = 1000;
        let one = probe_segment(&u, &g, &domain, &[-0.5, 0.0], &[0.5, 0.0], steps).unwrap();
        assert_eq!(one.len(), 1);
        assert!((one[0].t - 0.5).abs() <= 1.0 / steps as f64);
        assert_eq!((one[0].from, one[0].to), (0, 1));
        assert!(one[0].is_singular);
        assert!(matches!(
            probe_segment(&u, &g, &domain, &[2.0, 0.0], &[0.0, 0.0], 10),
            Err(Error::PointOutsideDomain(_))
        ));
    }

    #[test]
    fn probe_counts_match_geometric_intersections() {
        let domain = SourceDomain::square(0.0, 1.0, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pts: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let (u, stats) = solved(&domain, DiscreteTargetMeasure::uniform(pts).unwrap());
        let g = detect_singular_facets(&stats, u.target(), 0.3).unwrap();
        let cells = stats.cells.as_ref().unwrap();
        let steps = 20_000;
        let mut checked = 0;
        for _ in 0..100 {
            let p = [rng.gen::<f64>(), rng.gen::<f64>()];
            let q = [rng.gen::<f64>(), rng.gen::<f64>()];
            let dir = [q[0] - p[0], q[1] - p[1]];
            let mut pieces: Vec<(f64, f64)> = cells
                .iter()
                .filter_map(|c| c.clip_line(p, dir, 0.0, 1.0))
                .filter(|(a, b)| b - a > 1e-12)
                .collect();
            pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
            // Stepping cannot resolve pieces shorter than a step.
            if pieces.iter().any(|(a, b)| b - a < 2.0 / steps as f64) {
                continue;
            }
            checked += 1;
            let crossings = probe_segment(&u, &g, &domain, &p, &q, steps).unwrap();
            assert_eq!(crossings.len(), pieces.len() - 1);
            for (c, w) in crossings.iter().zip(pieces.windows(2)) {
                assert!((c.t - w[0].1).abs() <= 1.0 / steps as f64);
            }
        }
        assert!(checked >= 80, "{checked}");
    }

    #[test]
    fn json_export() {
        let domain = SourceDomain::disk([0.0, 0.0], 1.0, 0);
        let (u, stats) = solved(&domain, two_clusters(5, 1));
        let g = detect_singular_facets(&stats, u.target(), 3.0).unwrap();
        let back: SingularityGraph = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(back, g);
    }
}

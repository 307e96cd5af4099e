//! Power-diagram cell statistics: μ-volumes of the cells `W_i(h) ∩ Ω`,
//! the μ-measures of shared facets, and cell adjacency.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot2, segment_length, ConvexPolygon, EdgeLabel, LabelledPolygon, Point2};
use crate::measure::SourceDomain;
use crate::potential::BrenierPotential;

/// Facets shorter than this fraction of the domain diameter count as absent.
pub const FACET_EPS: f64 = 1e-12;

/// Samples used by the Monte Carlo adjacency estimate.
const MC_ADJACENCY_SAMPLES: usize = 2000;
const MC_ADJACENCY_NEIGHBOURS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatsMode {
    Exact2d,
    MonteCarlo,
}

/// Shared boundary between two cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub i: usize,
    pub j: usize,
    /// μ-measure of `W_i ∩ W_j ∩ Ω`; `None` when only adjacency is known.
    pub measure: Option<f64>,
    /// Planar segment of the facet (exact 2D only).
    pub segment: Option<[Point2; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCellStats {
    pub mode: StatsMode,
    /// `w_i(h)`.
    pub measures: Vec<f64>,
    /// Adjacent pairs with `i < j`, sorted lexicographically.
    pub facets: Vec<Facet>,
    /// Clipped cell polygons (exact 2D only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<ConvexPolygon>>,
    /// Sample count behind Monte Carlo estimates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

impl PowerCellStats {
    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn total_measure(&self) -> f64 {
        self.measures.iter().sum()
    }

    pub fn has_facet_measures(&self) -> bool {
        self.facets.iter().all(|f| f.measure.is_some()) && self.mode == StatsMode::Exact2d
    }

    /// `s_ij`, zero for non-adjacent pairs.
    pub fn facet_measure(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (i.min(j), i.max(j));
        self.facets
            .binary_search_by(|f| (f.i, f.j).cmp(&(a, b)))
            .ok()
            .and_then(|k| self.facets[k].measure)
            .unwrap_or(0.0)
    }

    pub fn adjacency(&self) -> Vec<(usize, usize)> {
        self.facets.iter().map(|f| (f.i, f.j)).collect()
    }

    /// Neighbour lists per cell.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for f in &self.facets {
            out[f.i].push(f.j);
            out[f.j].push(f.i);
        }
        out
    }

    pub fn min_measure(&self) -> f64 {
        self.measures.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Io(format!("invalid cell statistics json: {e}")))
    }
}

/// Clips Ω down to cell `i` of the power diagram. Edges created by the
/// half-plane against cell `j` carry `EdgeLabel::Clip(j)`.
pub(crate) fn clip_cell(potential: &BrenierPotential, omega: &ConvexPolygon, i: usize) -> LabelledPolygon {
    let target = potential.target();
    let h = potential.heights();
    let yi = target.point2(i);
    let mut cell = LabelledPolygon::from_polygon(omega);
    for j in 0..potential.len() {
        if j == i {
            continue;
        }
        let yj = target.point2(j);
        // ⟨x, y_j − y_i⟩ ≤ h_i − h_j
        let a = [yj[0] - yi[0], yj[1] - yi[1]];
        cell = cell.clip(a, h[i] - h[j], EdgeLabel::Clip(j));
        if cell.is_empty() {
            break;
        }
    }
    cell
}

/// Exact cell measures and facet measures for a planar potential, with the
/// uniform density on `domain` (disks use their inscribed polygon).
pub fn exact_cell_stats_2d(potential: &BrenierPotential, domain: &SourceDomain) -> Result<PowerCellStats> {
    if potential.dim() != 2 {
        return Err(Error::DimensionUnsupported(potential.dim()));
    }
    let omega = domain
        .polygon_2d()
        .ok_or_else(|| Error::DimensionUnsupported(domain.dim()))?;
    Ok(exact_cell_stats_on(potential, &omega))
}

pub(crate) fn exact_cell_stats_on(potential: &BrenierPotential, omega: &ConvexPolygon) -> PowerCellStats {
    let area = omega.area();
    let (lo, hi) = omega.bounding_box();
    let min_len = FACET_EPS * segment_length(lo, hi);
    let n = potential.len();

    let cells: Vec<LabelledPolygon> = (0..n).into_par_iter().map(|i| clip_cell(potential, omega, i)).collect();

    let measures: Vec<f64> = cells.iter().map(|c| c.to_polygon().area() / area).collect();

    // Each facet is seen from both sides; average the two lengths so that
    // s_ij == s_ji exactly.
    let mut pieces: Vec<(usize, usize, f64, [Point2; 2])> = Vec::new();
    for (i, cell) in cells.iter().enumerate() {
        for (k, label) in cell.labels.iter().enumerate() {
            if let EdgeLabel::Clip(j) = *label {
                let (p, q) = cell.edge(k);
                pieces.push((i.min(j), i.max(j), segment_length(p, q), [p, q]));
            }
        }
    }
    pieces.sort_by_key(|a| (a.0, a.1));
    let mut facets = Vec::new();
    let mut k = 0;
    while k < pieces.len() {
        let (i, j) = (pieces[k].0, pieces[k].1);
        let mut total = 0.0;
        let mut sides = 0;
        let mut best = pieces[k].3;
        let mut best_len = -1.0;
        while k < pieces.len() && (pieces[k].0, pieces[k].1) == (i, j) {
            total += pieces[k].2;
            sides += 1;
            if pieces[k].2 > best_len {
                best_len = pieces[k].2;
                best = pieces[k].3;
            }
            k += 1;
        }
        let len = if sides >= 2 { total / sides as f64 } else { total };
        if len > min_len {
            facets.push(Facet {
                i,
                j,
                measure: Some(len / area),
                segment: Some(best),
            });
        }
    }

    PowerCellStats {
        mode: StatsMode::Exact2d,
        measures,
        facets,
        cells: Some(cells.into_iter().map(LabelledPolygon::into_polygon).collect()),
        samples: None,
    }
}

/// Monte Carlo cell measures from a fixed row-major sample set. Adjacency is
/// estimated from nearest-neighbour sample pairs falling in different cells;
/// facet measures are not available.
pub fn mc_cell_stats(potential: &BrenierPotential, samples: &[f64]) -> PowerCellStats {
    let d = potential.dim();
    let n = potential.len();
    let count = samples.len() / d;
    let labels = potential.assign_batch(samples);
    let mut hist = vec![0usize; n];
    for &l in &labels {
        hist[l] += 1;
    }
    let measures: Vec<f64> = hist.iter().map(|&c| c as f64 / count.max(1) as f64).collect();

    let m = count.min(MC_ADJACENCY_SAMPLES);
    let labels = &labels;
    let mut pairs: Vec<(usize, usize)> = (0..m)
        .into_par_iter()
        .flat_map_iter(|a| {
            let xa = &samples[a * d..(a + 1) * d];
            let mut near: Vec<(f64, usize)> = (0..m)
                .filter(|&b| b != a)
                .map(|b| {
                    let xb = &samples[b * d..(b + 1) * d];
                    (xa.iter().zip(xb).map(|(u, v)| (u - v) * (u - v)).sum::<f64>(), b)
                })
                .collect();
            let k = MC_ADJACENCY_NEIGHBOURS.min(near.len());
            if k > 0 && k < near.len() {
                near.select_nth_unstable_by(k - 1, |x, y| x.0.total_cmp(&y.0));
            }
            let la = labels[a];
            near.into_iter()
                .take(k)
                .filter_map(move |(_, b)| {
                    let lb = labels[b];
                    (la != lb).then_some((la.min(lb), la.max(lb)))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    pairs.sort_unstable();
    pairs.dedup();

    PowerCellStats {
        mode: StatsMode::MonteCarlo,
        measures,
        facets: pairs
            .into_iter()
            .map(|(i, j)| Facet {
                i,
                j,
                measure: None,
                segment: None,
            })
            .collect(),
        cells: None,
        samples: Some(count),
    }
}

/// Convenience: Monte Carlo statistics from `count` fresh samples of the
/// domain's seeded stream.
pub fn mc_cell_stats_sampled(potential: &BrenierPotential, domain: &SourceDomain, count: usize) -> PowerCellStats {
    let samples = domain.sample(count);
    mc_cell_stats(potential, &samples)
}

/// `½ ∫ ‖x − y_i‖² dμ` summed over exact planar cells.
pub(crate) fn exact_quadratic_cost(potential: &BrenierPotential, stats: &PowerCellStats, area: f64) -> f64 {
    let cells = stats.cells.as_ref().expect("exact stats carry cells");
    cells
        .iter()
        .enumerate()
        .map(|(i, c)| 0.5 * c.second_moment_about(potential.target().point2(i)) / area)
        .sum()
}

/// `∫_Ω u_h dμ` over exact planar cells.
pub(crate) fn exact_potential_integral(potential: &BrenierPotential, stats: &PowerCellStats) -> f64 {
    let cells = stats.cells.as_ref().expect("exact stats carry cells");
    cells
        .iter()
        .enumerate()
        .filter(|(i, _)| stats.measures[*i] > 0.0)
        .map(|(i, c)| stats.measures[i] * (dot2(c.centroid(), potential.target().point2(i)) + potential.heights()[i]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::DiscreteTargetMeasure;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn centered_square() -> SourceDomain {
        SourceDomain::square(-0.5, 0.5, 1)
    }

    fn pair() -> BrenierPotential {
        let t = DiscreteTargetMeasure::uniform(vec![vec![-0.5, 0.0], vec![0.5, 0.0]]).unwrap();
        BrenierPotential::flat(Arc::new(t))
    }

    #[test]
    fn symmetric_pair_on_square() {
        let s = exact_cell_stats_2d(&pair(), &centered_square()).unwrap();
        assert_eq!(s.measures, vec![0.5, 0.5]);
        assert_eq!(s.facets.len(), 1);
        assert!((s.facet_measure(0, 1) - 1.0).abs() < 1e-15);
        assert_eq!(s.facet_measure(1, 0), s.facet_measure(0, 1));
    }

    #[test]
    fn facet_measure_matches_derivative_of_cell_measure() {
        // ∂w_1/∂h_2 = -s_12 / ‖y_1 - y_2‖ = -1.
        let u = pair();
        let eps = 1e-5;
        let up = u.with_heights(vec![0.0, eps]);
        let dn = u.with_heights(vec![0.0, -eps]);
        let dom = centered_square();
        let fd = (exact_cell_stats_2d(&up, &dom).unwrap().measures[0] - exact_cell_stats_2d(&dn, &dom).unwrap().measures[0])
            / (2.0 * eps);
        assert!((fd + 1.0).abs() < 1e-9, "{fd}");
    }

    #[test]
    fn single_cell() {
        let t = DiscreteTargetMeasure::uniform(vec![vec![0.2, 0.1]]).unwrap();
        let u = BrenierPotential::flat(Arc::new(t));
        let s = exact_cell_stats_2d(&u, &centered_square()).unwrap();
        assert_eq!(s.measures, vec![1.0]);
        assert!(s.facets.is_empty());
        let mc = mc_cell_stats_sampled(&u, &centered_square(), 1000);
        assert_eq!(mc.measures, vec![1.0]);
    }

    #[test]
    fn rejects_non_planar() {
        let t = DiscreteTargetMeasure::uniform(vec![vec![0.0, 0.0, 0.0]]).unwrap();
        let u = BrenierPotential::flat(Arc::new(t));
        let err = exact_cell_stats_2d(&u, &SourceDomain::unit_box(3, 0)).unwrap_err();
        assert_eq!(err, Error::DimensionUnsupported(3));
    }

    #[test]
    fn mc_pair_within_binomial_band() {
        let s = mc_cell_stats_sampled(&pair(), &centered_square(), 1_000_000);
        assert!((0.4985..=0.5015).contains(&s.measures[0]), "{}", s.measures[0]);
        assert_eq!(s.adjacency(), vec![(0, 1)]);
        assert!(!s.has_facet_measures());
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> BrenierPotential {
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let t = Arc::new(DiscreteTargetMeasure::uniform(pts).unwrap());
        let h = (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect();
        BrenierPotential::new(t, h).unwrap()
    }

    #[test]
    fn exact_partition_bookkeeping_and_gauge_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dom = SourceDomain::disk([0.1, 0.0], 1.2, 0);
        for _ in 0..10 {
            let u = random_instance(&mut rng, 30);
            let s = exact_cell_stats_2d(&u, &dom).unwrap();
            assert!((s.total_measure() - 1.0).abs() < 1e-9);
            // Cells are interior-disjoint: a sample lands in exactly the
            // polygon of the cell it is assigned to.
            let cells = s.cells.as_ref().unwrap();
            for x in dom.sample(500).chunks_exact(2) {
                let omega = dom.polygon_2d().unwrap();
                if !omega.contains([x[0], x[1]]) {
                    continue;
                }
                let i = u.assign_cell(x);
                assert!(cells[i].signed_distance([x[0], x[1]]) <= 1e-9);
            }
            let shifted = u.with_heights(u.heights().iter().map(|h| h + 0.75).collect());
            let s2 = exact_cell_stats_2d(&shifted, &dom).unwrap();
            assert_eq!(s.adjacency(), s2.adjacency());
            for (a, b) in s.measures.iter().zip(&s2.measures) {
                assert!((a - b).abs() < 1e-12);
            }
            for (f, g) in s.facets.iter().zip(&s2.facets) {
                assert!((f.measure.unwrap() - g.measure.unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mc_agrees_with_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dom = SourceDomain::square(-1.0, 1.0, 77);
        let count = 200_000;
        for _ in 0..5 {
            let u = random_instance(&mut rng, 12);
            let exact = exact_cell_stats_2d(&u, &dom).unwrap();
            let mc = mc_cell_stats_sampled(&u, &dom, count);
            for (w, m) in exact.measures.iter().zip(&mc.measures) {
                let sigma = (w * (1.0 - w) / count as f64).sqrt();
                assert!((w - m).abs() <= 3.0 * sigma + 1e-12, "{w} vs {m}");
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let s = exact_cell_stats_2d(&pair(), &centered_square()).unwrap();
        let back = PowerCellStats::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }
}

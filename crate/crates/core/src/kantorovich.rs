//! Discrete Kantorovich problem between two finite measures, solved exactly
//! by a primal network simplex. Used as a reference for transport costs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::DiscreteTargetMeasure;

/// Largest accepted number of cost entries `m·n`.
pub const MAX_COST_ENTRIES: usize = 1_000_000;

/// Allowed difference between the source and target total masses.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Tolerance of the marginal and dual feasibility checks.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    /// `½‖x − y‖²`.
    Quadratic,
    /// `‖x − y‖`.
    Euclidean,
}

impl CostKind {
    pub fn from_exponent(p: u32) -> Option<Self> {
        match p {
            2 => Some(Self::Quadratic),
            1 => Some(Self::Euclidean),
            _ => None,
        }
    }

    pub fn eval(self, x: &[f64], y: &[f64]) -> f64 {
        let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        match self {
            Self::Quadratic => 0.5 * sq,
            Self::Euclidean => sq.sqrt(),
        }
    }
}

/// Row-major `m × n` matrix of transported masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    pub masses: Vec<f64>,
}

impl TransportPlan {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.masses[a * self.cols + b]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.masses.chunks_exact(self.cols).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in self.masses.chunks_exact(self.cols) {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        out
    }

    /// Entries larger than `tol`.
    pub fn support(&self, tol: f64) -> usize {
        self.masses.iter().filter(|&&v| v > tol).count()
    }

    /// `a,b,mass` rows for the nonzero entries.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source,target,mass\n");
        for a in 0..self.rows {
            for b in 0..self.cols {
                let v = self.get(a, b);
                if v != 0.0 {
                    out.push_str(&format!("{a},{b},{v:e}\n"));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPotentials {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl DualPotentials {
    /// `Σ φ_a μ_a + Σ ψ_b ν_b`.
    pub fn objective(&self, source_weights: &[f64], target_weights: &[f64]) -> f64 {
        dot(&self.phi, source_weights) + dot(&self.psi, target_weights)
    }

    /// `max_ab (φ_a + ψ_b − c_ab)`; feasible potentials give a value `≤ 0`.
    pub fn max_violation(&self, cost: &[f64]) -> f64 {
        let n = self.psi.len();
        let mut worst = f64::NEG_INFINITY;
        for (a, p) in self.phi.iter().enumerate() {
            for (b, q) in self.psi.iter().enumerate() {
                worst = worst.max(p + q - cost[a * n + b]);
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub plan: TransportPlan,
    pub cost: f64,
    pub duals: DualPotentials,
    pub pivots: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major cost matrix between row-major `source_points` and the target.
pub fn cost_matrix(source_points: &[f64], target: &DiscreteTargetMeasure, kind: CostKind) -> Result<Vec<f64>> {
    let d = target.dim();
    if !source_points.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: source_points.len() % d,
        });
    }
    let (m, n) = (source_points.len() / d, target.len());
    if m.saturating_mul(n) > MAX_COST_ENTRIES {
        return Err(Error::SizeLimitExceeded(m.saturating_mul(n)));
    }
    Ok(source_points
        .par_chunks_exact(d)
        .flat_map_iter(|x| (0..n).map(move |b| kind.eval(x, target.point(b))))
        .collect())
}

/// `ψ_b = min_a (c_ab − φ_a)`.
pub fn c_transform(phi: &[f64], cost: &[f64]) -> Vec<f64> {
    let m = phi.len();
    let n = cost.len() / m.max(1);
    (0..n)
        .map(|b| (0..m).map(|a| cost[a * n + b] - phi[a]).fold(f64::INFINITY, f64::min))
        .collect()
}

/// `φ_a = min_b (c_ab − ψ_b)`, the transform in the other direction.
pub fn c_transform_rows(psi: &[f64], cost: &[f64]) -> Vec<f64> {
    let n = psi.len();
    cost.chunks_exact(n)
        .map(|row| row.iter().zip(psi).map(|(c, p)| c - p).fold(f64::INFINITY, f64::min))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCheck {
    pub cost: f64,
    pub feasible: bool,
    pub min_entry: f64,
    pub max_row_error: f64,
    pub max_col_error: f64,
}

/// Recomputes `⟨ρ, c⟩` and the marginal errors of a plan.
pub fn verify_plan(plan: &TransportPlan, cost: &[f64], source_weights: &[f64], target_weights: &[f64]) -> PlanCheck {
    let cost_value = dot(&plan.masses, cost);
    let min_entry = plan.masses.iter().copied().fold(f64::INFINITY, f64::min);
    let err = |got: Vec<f64>, want: &[f64]| {
        if got.len() != want.len() {
            return f64::INFINITY;
        }
        got.iter().zip(want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max)
    };
    let max_row_error = err(plan.row_sums(), source_weights);
    let max_col_error = err(plan.col_sums(), target_weights);
    PlanCheck {
        cost: cost_value,
        feasible: cost.len() == plan.masses.len()
            && min_entry >= 0.0
            && max_row_error <= FEASIBILITY_TOLERANCE
            && max_col_error <= FEASIBILITY_TOLERANCE,
        min_entry,
        max_row_error,
        max_col_error,
    }
}

/// Optimal plan between `Σ μ_a δ_{x_a}` and the target under `kind`.
pub fn solve_lp(
    source_points: &[f64],
    source_weights: &[f64],
    target: &DiscreteTargetMeasure,
    kind: CostKind,
) -> Result<LpSolution> {
    let cost = cost_matrix(source_points, target, kind)?;
    let m = source_points.len() / target.dim();
    if source_weights.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            found: source_weights.len(),
        });
    }
    if m == 0 {
        return Err(Error::EmptyTarget);
    }
    for (index, &weight) in source_weights.iter().enumerate() {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::NonpositiveWeight { index, weight });
        }
    }
    let total: f64 = source_weights.iter().sum();
    let target_total: f64 = target.weights().iter().sum();
    if (total - target_total).abs() > MASS_TOLERANCE {
        return Err(Error::MassMismatch {
            total,
            tolerance: MASS_TOLERANCE,
        });
    }
    solve_with_cost(&cost, source_weights, target.weights())
}

/// Network simplex on a dense cost matrix. Masses must balance.
pub fn solve_with_cost(cost: &[f64], supply: &[f64], demand: &[f64]) -> Result<LpSolution> {
    let (m, n) = (supply.len(), demand.len());
    if cost.len() != m * n {
        return Err(Error::LengthMismatch {
            expected: m * n,
            found: cost.len(),
        });
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("cost"));
    }
    let mut simplex = Simplex::new(cost, supply, demand);
    simplex.run()?;
    let flows = simplex.flow[..m * n].iter().map(|&f| f.max(0.0)).collect::<Vec<_>>();
    let plan = TransportPlan {
        rows: m,
        cols: n,
        masses: flows,
    };
    let mut phi: Vec<f64> = (0..m).map(|a| -simplex.pi[a]).collect();
    let mut psi: Vec<f64> = (0..n).map(|b| simplex.pi[m + b]).collect();
    // φ + ψ is invariant under opposite shifts; pin ψ_0 = 0.
    let shift = psi[0];
    psi.iter_mut().for_each(|v| *v -= shift);
    phi.iter_mut().for_each(|v| *v += shift);
    Ok(LpSolution {
        cost: dot(&plan.masses, cost),
        plan,
        duals: DualPotentials { phi, psi },
        pivots: simplex.pivots,
    })
}

/// Spanning-tree state of the transportation network.
///
/// Nodes `0..m` are sources, `m..m+n` sinks and `m+n` an artificial root.
/// Arc `a·n + b` runs from source `a` to sink `b`; arc `m·n + v` is the
/// artificial arc between node `v` and the root.
struct Simplex<'a> {
    cost: &'a [f64],
    m: usize,
    n: usize,
    big: f64,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    next_block: usize,
    pivots: usize,
}

impl<'a> Simplex<'a> {
    fn new(cost: &'a [f64], supply: &[f64], demand: &[f64]) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let max_cost = cost.iter().copied().fold(0.0_f64, |a, c| a.max(c.abs()));
        let big = (max_cost + 1.0) * (m + n + 1) as f64;
        let arcs = m * n + m + n;
        let mut flow = vec![0.0; arcs];
        let mut in_tree = vec![false; arcs];
        for a in 0..m {
            flow[m * n + a] = supply[a];
            in_tree[m * n + a] = true;
        }
        for b in 0..n {
            flow[m * n + m + b] = demand[b];
            in_tree[m * n + m + b] = true;
        }
        let nodes = m + n + 1;
        let mut s = Self {
            cost,
            m,
            n,
            big,
            flow,
            in_tree,
            parent: vec![usize::MAX; nodes],
            pred: vec![usize::MAX; nodes],
            depth: vec![0; nodes],
            pi: vec![0.0; nodes],
            next_block: 0,
            pivots: 0,
        };
        s.rebuild();
        s
    }

    fn root(&self) -> usize {
        self.m + self.n
    }

    fn ends(&self, arc: usize) -> (usize, usize) {
        let real = self.m * self.n;
        if arc < real {
            (arc / self.n, self.m + arc % self.n)
        } else {
            let v = arc - real;
            if v < self.m {
                (v, self.root())
            } else {
                (self.root(), v)
            }
        }
    }

    fn arc_cost(&self, arc: usize) -> f64 {
        if arc < self.m * self.n {
            self.cost[arc]
        } else {
            self.big
        }
    }

    fn reduced(&self, arc: usize) -> f64 {
        let (u, v) = self.ends(arc);
        self.arc_cost(arc) + self.pi[u] - self.pi[v]
    }

    /// Recomputes parents, depths and potentials from the tree arcs.
    fn rebuild(&mut self) {
        let nodes = self.m + self.n + 1;
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nodes];
        for (arc, _) in self.in_tree.iter().enumerate().filter(|(_, &t)| t) {
            let (u, v) = self.ends(arc);
            adj[u].push((v, arc));
            adj[v].push((u, arc));
        }
        let root = self.root();
        self.parent.iter_mut().for_each(|p| *p = usize::MAX);
        self.parent[root] = root;
        self.depth[root] = 0;
        self.pi[root] = 0.0;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &(v, arc) in &adj[u] {
                if self.parent[v] != usize::MAX {
                    continue;
                }
                self.parent[v] = u;
                self.pred[v] = arc;
                self.depth[v] = self.depth[u] + 1;
                let (from, _) = self.ends(arc);
                // Reduced cost of a tree arc vanishes.
                self.pi[v] = if from == u {
                    self.pi[u] + self.arc_cost(arc)
                } else {
                    self.pi[u] - self.arc_cost(arc)
                };
                queue.push_back(v);
            }
        }
    }

    /// Block pricing over the real arcs: returns the most negative reduced
    /// cost arc of the first block that contains a violating arc.
    fn entering(&mut self, tol: f64) -> Option<usize> {
        let total = self.m * self.n;
        let block = ((total as f64).sqrt().ceil() as usize).max(10).min(total);
        let mut best = None;
        let mut best_rc = -tol;
        let mut scanned = 0;
        let mut arc = self.next_block;
        while scanned < total {
            let end = scanned + block;
            while scanned < end.min(total) {
                if !self.in_tree[arc] {
                    let rc = self.reduced(arc);
                    if rc < best_rc {
                        best_rc = rc;
                        best = Some(arc);
                    }
                }
                scanned += 1;
                arc += 1;
                if arc == total {
                    arc = 0;
                }
            }
            if best.is_some() {
                self.next_block = arc;
                return best;
            }
        }
        None
    }

    fn run(&mut self) -> Result<()> {
        let max_cost = self.cost.iter().copied().fold(0.0_f64, |a, c| a.max(c.abs()));
        let tol = 1e-12 * (1.0 + max_cost);
        let limit = 50 * (self.m * self.n + self.m + self.n) + 1000;
        while let Some(enter) = self.entering(tol) {
            self.pivot(enter);
            self.pivots += 1;
            if self.pivots > limit {
                return Err(Error::InvalidConfig("network simplex exceeded its pivot limit".into()));
            }
        }
        Ok(())
    }

    fn pivot(&mut self, enter: usize) {
        let (first, second) = self.ends(enter);
        let mut u = first;
        let mut v = second;
        while u != v {
            if self.depth[u] >= self.depth[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        let join = u;

        // Flow runs join → first → second → join. On the first side the
        // cycle goes down the tree, so arcs pointing up lose flow; on the
        // second side it goes up, so arcs pointing down lose flow.
        let mut delta = f64::INFINITY;
        let mut leaving = enter;
        let mut w = first;
        while w != join {
            let arc = self.pred[w];
            if self.ends(arc).0 == w && self.flow[arc] < delta {
                delta = self.flow[arc];
                leaving = arc;
            }
            w = self.parent[w];
        }
        let mut w = second;
        while w != join {
            let arc = self.pred[w];
            if self.ends(arc).1 == w && self.flow[arc] <= delta {
                delta = self.flow[arc];
                leaving = arc;
            }
            w = self.parent[w];
        }
        debug_assert!(delta.is_finite());

        if delta > 0.0 {
            self.flow[enter] += delta;
            let mut w = first;
            while w != join {
                let arc = self.pred[w];
                if self.ends(arc).0 == w {
                    self.flow[arc] -= delta;
                } else {
                    self.flow[arc] += delta;
                }
                w = self.parent[w];
            }
            let mut w = second;
            while w != join {
                let arc = self.pred[w];
                if self.ends(arc).1 == w {
                    self.flow[arc] -= delta;
                } else {
                    self.flow[arc] += delta;
                }
                w = self.parent[w];
            }
        }
        self.flow[leaving] = 0.0;
        self.in_tree[leaving] = false;
        self.in_tree[enter] = true;
        self.rebuild();
    }
}

//! Minimization of the convex Alexandrov energy
//!
//! ```text
//! E(h) = ∫_0^h Σ_i w_i(η) dη_i − Σ_i h_i ν_i
//! ```
//!
//! whose gradient is `w(h) − ν` and whose Hessian is the weighted graph
//! Laplacian with off-diagonal entries `−s_ij / ‖y_i − y_j‖`. The minimizer
//! is unique up to a constant shift of `h` and makes every power cell carry
//! exactly its target mass.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cells::{exact_cell_stats_on, exact_potential_integral, exact_quadratic_cost, mc_cell_stats, PowerCellStats};
use crate::error::{Error, Result};
use crate::geometry::ConvexPolygon;
use crate::measure::{DiscreteTargetMeasure, SourceDomain};
use crate::potential::{gauge_normalize, BrenierPotential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    /// Exact planar cells, damped Newton.
    Exact2d,
    /// Frozen Monte Carlo samples, gradient descent.
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: SolveMode,
    /// Stop once `max_i |w_i − ν_i|` is at most this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Step shrink factor of the line search, in (0, 1).
    pub damping: f64,
    pub min_step: f64,
    /// Monte Carlo sample count.
    pub samples: usize,
    pub seed: u64,
}

impl SolverConfig {
    pub fn exact() -> Self {
        Self {
            mode: SolveMode::Exact2d,
            tolerance: 1e-6,
            max_iterations: 1000,
            damping: 0.5,
            min_step: 1e-12,
            samples: 1_000_000,
            seed: 0,
        }
    }

    pub fn monte_carlo() -> Self {
        Self {
            mode: SolveMode::MonteCarlo,
            tolerance: 5e-3,
            ..Self::exact()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::InvalidConfig(format!("damping must lie in (0, 1), got {}", self.damping)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if !(self.min_step > 0.0) {
            return Err(Error::InvalidConfig("min_step must be positive".into()));
        }
        if self.mode == SolveMode::MonteCarlo && self.samples == 0 {
            return Err(Error::InvalidConfig("monte carlo mode needs at least one sample".into()));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::exact()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub mode: SolveMode,
    /// Final heights, shifted so that `min h_i = 0`.
    pub heights: Vec<f64>,
    /// Final cell measures `w_i(h)`.
    pub measures: Vec<f64>,
    pub iterations: usize,
    /// `max_i |w_i − ν_i|` at every iterate, starting with the initial point.
    pub residual_history: Vec<f64>,
    /// `∫ u_h dμ − Σ h_i ν_i` at every iterate.
    pub energy_history: Vec<f64>,
    /// Accepted step lengths.
    pub step_history: Vec<f64>,
    pub converged: bool,
    pub hit_max_iterations: bool,
    pub step_underflow: bool,
    /// The initial heights left some cell empty and were replaced.
    pub bootstrapped: bool,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }

    pub fn potential(&self, target: Arc<DiscreteTargetMeasure>) -> Result<BrenierPotential> {
        BrenierPotential::new(target, self.heights.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialize")
    }
}

/// Computes `w(h)` for a domain, either exactly (planar) or from a frozen
/// sample set.
#[derive(Debug, Clone)]
pub enum CellEstimator {
    Exact2d { omega: ConvexPolygon },
    MonteCarlo { dim: usize, samples: Vec<f64> },
}

impl CellEstimator {
    pub fn exact(domain: &SourceDomain) -> Result<Self> {
        let omega = domain
            .polygon_2d()
            .ok_or_else(|| Error::DimensionUnsupported(domain.dim()))?;
        Ok(Self::Exact2d { omega })
    }

    /// Freezes `count` samples drawn with `seed` (common random numbers
    /// across iterations).
    pub fn monte_carlo(domain: &SourceDomain, count: usize, seed: u64) -> Self {
        let samples = domain.clone().with_seed(seed).sample(count);
        Self::MonteCarlo {
            dim: domain.dim(),
            samples,
        }
    }

    pub fn for_config(domain: &SourceDomain, config: &SolverConfig) -> Result<Self> {
        match config.mode {
            SolveMode::Exact2d => Self::exact(domain),
            SolveMode::MonteCarlo => Ok(Self::monte_carlo(domain, config.samples, config.seed)),
        }
    }

    pub fn stats(&self, potential: &BrenierPotential) -> PowerCellStats {
        match self {
            Self::Exact2d { omega } => exact_cell_stats_on(potential, omega),
            Self::MonteCarlo { samples, .. } => mc_cell_stats(potential, samples),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Exact2d { .. } => 2,
            Self::MonteCarlo { dim, .. } => *dim,
        }
    }

    /// `∫_Ω u_h dμ − Σ h_i ν_i`, the energy up to an additive constant.
    pub fn closed_form_energy(&self, potential: &BrenierPotential, stats: &PowerCellStats) -> f64 {
        let integral = match self {
            Self::Exact2d { .. } => exact_potential_integral(potential, stats),
            Self::MonteCarlo { dim, samples } => {
                let count = samples.len() / dim;
                samples.chunks_exact(*dim).map(|x| potential.evaluate(x)).sum::<f64>() / count as f64
            }
        };
        integral - dot(potential.heights(), potential.target().weights())
    }

    /// `½ ∫ ‖x − ∇u_h(x)‖² dμ`.
    pub fn transport_cost(&self, potential: &BrenierPotential) -> f64 {
        match self {
            Self::Exact2d { omega } => {
                let stats = exact_cell_stats_on(potential, omega);
                exact_quadratic_cost(potential, &stats, omega.area())
            }
            Self::MonteCarlo { dim, samples } => transport_cost_mc(potential, samples, *dim),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `∇E(h) = w(h) − ν`.
pub fn gradient(stats: &PowerCellStats, target: &DiscreteTargetMeasure) -> Vec<f64> {
    stats.measures.iter().zip(target.weights()).map(|(w, nu)| w - nu).collect()
}

/// Hessian of the energy, `∂w_i/∂h_j`: off-diagonal `−s_ij / ‖y_i − y_j‖`,
/// diagonal the negated row sum. Symmetric, rows sum to zero.
pub fn hessian(stats: &PowerCellStats, target: &DiscreteTargetMeasure) -> Result<DMatrix<f64>> {
    if !stats.has_facet_measures() {
        return Err(Error::FacetMeasuresUnavailable);
    }
    let n = stats.len();
    let mut hess = DMatrix::zeros(n, n);
    for f in &stats.facets {
        let v = f.measure.expect("checked above") / target.distance(f.i, f.j);
        hess[(f.i, f.j)] -= v;
        hess[(f.j, f.i)] -= v;
        hess[(f.i, f.i)] += v;
        hess[(f.j, f.j)] += v;
    }
    Ok(hess)
}

/// The energy at the potential's heights as a line integral of `w` from
/// `base` along the straight segment (composite trapezoid rule with
/// `quadrature_steps` panels), minus `Σ h_i ν_i`.
pub fn energy(
    potential: &BrenierPotential,
    estimator: &CellEstimator,
    base: &[f64],
    quadrature_steps: usize,
) -> Result<f64> {
    let h = potential.heights();
    if base.len() != h.len() {
        return Err(Error::LengthMismatch {
            expected: h.len(),
            found: base.len(),
        });
    }
    let steps = quadrature_steps.max(1);
    let dir: Vec<f64> = h.iter().zip(base).map(|(a, b)| a - b).collect();
    let mut integral = 0.0;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let eta: Vec<f64> = base.iter().zip(&dir).map(|(b, d)| b + t * d).collect();
        let stats = estimator.stats(&potential.with_heights(eta));
        if let Some(cell) = stats.measures.iter().position(|&w| w <= 0.0) {
            return Err(Error::PathLeavesAdmissibleSet { cell });
        }
        let weight = if k == 0 || k == steps { 0.5 } else { 1.0 };
        integral += weight * dot(&stats.measures, &dir);
    }
    Ok(integral / steps as f64 - dot(h, potential.target().weights()))
}

/// Heights whose power diagram is the Voronoi diagram of the targets,
/// shrunk into Ω: the point `c_Ω + (y_i − c_Y)/s` lies in cell `i` and well
/// inside Ω, so every cell has positive measure.
pub fn admissible_heights(domain: &SourceDomain, target: &DiscreteTargetMeasure) -> Vec<f64> {
    let n = target.len();
    let d = target.dim();
    let c_omega = domain.center();
    let mean: Vec<f64> = (0..d)
        .map(|k| (0..n).map(|i| target.point(i)[k]).sum::<f64>() / n as f64)
        .collect();
    let spread = (0..n)
        .map(|i| target.point(i).iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if spread == 0.0 {
        return vec![0.0; n];
    }
    let s = 2.0 * spread / domain.inner_radius();
    (0..n)
        .map(|i| {
            let y = target.point(i);
            -dot(&c_omega, y) + (dot(&mean, y) - 0.5 * dot(y, y)) / s
        })
        .collect()
}

struct Iterate {
    potential: BrenierPotential,
    stats: PowerCellStats,
    residual: f64,
    energy: f64,
}

impl Iterate {
    fn new(potential: BrenierPotential, estimator: &CellEstimator) -> Self {
        let stats = estimator.stats(&potential);
        let residual = max_abs(&gradient(&stats, potential.target()));
        let energy = estimator.closed_form_energy(&potential, &stats);
        Self {
            potential,
            stats,
            residual,
            energy,
        }
    }
}

/// Finds heights with `w_i(h) = ν_i` for every cell.
///
/// Exact mode runs Newton with `h_n` pinned to remove the constant null
/// direction; steps are halved until every cell keeps at least half of the
/// initial minimum mass and the residual drops by a factor `1 − λ/2`.
/// Monte Carlo mode uses gradient steps on the frozen-sample energy with an
/// Armijo test.
///
/// Non-convergence is returned as [`Error::MaxIterations`] or
/// [`Error::StepUnderflow`] carrying the partial report.
pub fn solve(
    domain: &SourceDomain,
    target: Arc<DiscreteTargetMeasure>,
    config: &SolverConfig,
    h_init: Option<&[f64]>,
) -> Result<SolveReport> {
    config.validate()?;
    if domain.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            found: target.dim(),
        });
    }
    let estimator = CellEstimator::for_config(domain, config)?;
    let n = target.len();
    let heights = match h_init {
        Some(h) => h.to_vec(),
        None => vec![0.0; n],
    };
    let mut current = Iterate::new(BrenierPotential::new(Arc::clone(&target), heights)?, &estimator);
    let mut bootstrapped = false;
    if current.stats.min_measure() <= 0.0 {
        bootstrapped = true;
        let h = admissible_heights(domain, &target);
        current = Iterate::new(BrenierPotential::new(Arc::clone(&target), h)?, &estimator);
        if let Some(cell) = current.stats.measures.iter().position(|&w| w <= 0.0) {
            return Err(Error::InitialPointOutsideH { cell });
        }
    }

    let min_nu = target.weights().iter().copied().fold(f64::INFINITY, f64::min);
    let floor = 0.5 * current.stats.min_measure().min(min_nu);

    let mut report = SolveReport {
        mode: config.mode,
        heights: Vec::new(),
        measures: Vec::new(),
        iterations: 0,
        residual_history: vec![current.residual],
        energy_history: vec![current.energy],
        step_history: Vec::new(),
        converged: false,
        hit_max_iterations: false,
        step_underflow: false,
        bootstrapped,
    };

    let mut last_step: f64 = 1.0;
    while current.residual > config.tolerance {
        if report.iterations >= config.max_iterations {
            report.hit_max_iterations = true;
            finalize(&mut report, &current);
            return Err(Error::MaxIterations(Box::new(report)));
        }
        let grad = gradient(&current.stats, &target);
        let next = match config.mode {
            SolveMode::Exact2d => {
                let dir = newton_direction(&current.stats, &target, &grad)?;
                line_search(&current, &dir, 1.0, config, &estimator, |cand, lambda| {
                    cand.stats.min_measure() >= floor && cand.residual <= (1.0 - 0.5 * lambda) * current.residual
                })
            }
            SolveMode::MonteCarlo => {
                let dir: Vec<f64> = grad.iter().map(|g| -g).collect();
                let slope = dot(&grad, &grad);
                let start = (2.0 * last_step).min(1e6);
                line_search(&current, &dir, start, config, &estimator, |cand, lambda| {
                    cand.stats.min_measure() > 0.0 && cand.energy <= current.energy - 1e-4 * lambda * slope
                })
            }
        };
        match next {
            Some((cand, lambda)) => {
                last_step = lambda;
                current = cand;
                report.iterations += 1;
                report.residual_history.push(current.residual);
                report.energy_history.push(current.energy);
                report.step_history.push(lambda);
            }
            None => {
                report.step_underflow = true;
                finalize(&mut report, &current);
                return Err(Error::StepUnderflow(Box::new(report)));
            }
        }
    }
    report.converged = true;
    finalize(&mut report, &current);
    Ok(report)
}

fn finalize(report: &mut SolveReport, current: &Iterate) {
    report.heights = gauge_normalize(current.potential.heights());
    report.measures = current.stats.measures.clone();
}

fn line_search(
    current: &Iterate,
    dir: &[f64],
    start: f64,
    config: &SolverConfig,
    estimator: &CellEstimator,
    accept: impl Fn(&Iterate, f64) -> bool,
) -> Option<(Iterate, f64)> {
    let h = current.potential.heights();
    let mut lambda = start;
    while lambda >= config.min_step {
        let trial: Vec<f64> = h.iter().zip(dir).map(|(a, d)| a + lambda * d).collect();
        let cand = Iterate::new(current.potential.with_heights(trial), estimator);
        if accept(&cand, lambda) {
            return Some((cand, lambda));
        }
        lambda *= config.damping;
    }
    None
}

/// Solves `H δ = −g` on the subspace `δ_n = 0`.
fn newton_direction(stats: &PowerCellStats, target: &DiscreteTargetMeasure, grad: &[f64]) -> Result<Vec<f64>> {
    let n = grad.len();
    let mut dir = vec![0.0; n];
    if n == 1 {
        return Ok(dir);
    }
    let hess = hessian(stats, target)?;
    let reduced = hess.view((0, 0), (n - 1, n - 1)).into_owned();
    let rhs = DVector::from_iterator(n - 1, grad[..n - 1].iter().map(|g| -g));
    let sol = match reduced.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => match reduced.lu().solve(&rhs) {
            Some(s) => s,
            // Disconnected adjacency: fall back to the gradient direction.
            None => DVector::from_iterator(n - 1, grad[..n - 1].iter().map(|g| -g)),
        },
    };
    dir[..n - 1].copy_from_slice(sol.as_slice());
    Ok(dir)
}

/// `½ E‖x − T(x)‖²` over a row-major sample set.
pub fn transport_cost_mc(potential: &BrenierPotential, samples: &[f64], dim: usize) -> f64 {
    use rayon::prelude::*;
    let count = samples.len() / dim;
    let total: f64 = samples
        .par_chunks_exact(dim)
        .map(|x| {
            let y = potential.transport_map(x);
            0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    total / count as f64
}

/// `½ ∫ ‖x − ∇u_h(x)‖² dμ` by exact integration over the planar cells.
pub fn transport_cost(potential: &BrenierPotential, domain: &SourceDomain) -> Result<f64> {
    Ok(CellEstimator::exact(domain)?.transport_cost(potential))
}

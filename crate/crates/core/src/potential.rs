//! The piecewise-linear Brenier potential `u_h(x) = max_i ⟨x, y_i⟩ + h_i`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::DiscreteTargetMeasure;

/// Upper envelope of the supporting planes `⟨x, y_i⟩ + h_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrenierPotential {
    target: Arc<DiscreteTargetMeasure>,
    heights: Vec<f64>,
}

impl BrenierPotential {
    pub fn new(target: Arc<DiscreteTargetMeasure>, heights: Vec<f64>) -> Result<Self> {
        if heights.len() != target.len() {
            return Err(Error::LengthMismatch {
                expected: target.len(),
                found: heights.len(),
            });
        }
        if heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::NonFinite("height"));
        }
        Ok(Self { target, heights })
    }

    /// All heights zero.
    pub fn flat(target: Arc<DiscreteTargetMeasure>) -> Self {
        let heights = vec![0.0; target.len()];
        Self { target, heights }
    }

    pub fn target(&self) -> &DiscreteTargetMeasure {
        &self.target
    }

    pub fn target_arc(&self) -> &Arc<DiscreteTargetMeasure> {
        &self.target
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub(crate) fn with_heights(&self, heights: Vec<f64>) -> Self {
        debug_assert_eq!(heights.len(), self.heights.len());
        Self {
            target: Arc::clone(&self.target),
            heights,
        }
    }

    /// Shifts heights so that the smallest one is zero. Cells, measures and
    /// the transport map do not change.
    pub fn normalized(&self) -> Self {
        self.with_heights(gauge_normalize(&self.heights))
    }

    #[inline]
    fn plane(&self, i: usize, x: &[f64]) -> f64 {
        let y = self.target.point(i);
        let mut acc = self.heights[i];
        for (a, b) in x.iter().zip(y) {
            acc += a * b;
        }
        acc
    }

    /// `u_h(x)`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        (0..self.len()).map(|i| self.plane(i, x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the cell containing `x`; ties go to the lowest index.
    pub fn assign_cell(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_val = self.plane(0, x);
        for i in 1..self.len() {
            let v = self.plane(i, x);
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        best
    }

    /// `∇u_h(x)`, i.e. the target point of the cell containing `x`.
    pub fn transport_map(&self, x: &[f64]) -> &[f64] {
        self.target.point(self.assign_cell(x))
    }

    /// Cell indices for a row-major batch of points.
    pub fn assign_batch(&self, xs: &[f64]) -> Vec<usize> {
        use rayon::prelude::*;
        let d = self.dim();
        xs.par_chunks_exact(d).map(|x| self.assign_cell(x)).collect()
    }
}

/// Heights shifted so that their minimum is zero.
pub fn gauge_normalize(h: &[f64]) -> Vec<f64> {
    let m = h.iter().copied().fold(f64::INFINITY, f64::min);
    h.iter().map(|v| v - m).collect()
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lower_j, upper_j]` in which the optimizers search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::DimensionMismatch(
                "box needs matching, non-empty lower and upper bounds".into(),
            ));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::InvalidParameter(format!(
                    "degenerate interval [{lo}, {hi}] in dimension {j}"
                )));
            }
        }
        Ok(SearchBox { lower, upper })
    }

    pub fn from_intervals(intervals: &[(f64, f64)]) -> Result<Self> {
        let (lower, upper) = intervals.iter().copied().unzip();
        SearchBox::new(lower, upper)
    }

    /// Same interval in every dimension.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        SearchBox::new(vec![lo; dim], vec![hi; dim])
    }

    pub(crate) fn from_parts_unchecked(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        SearchBox { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn range(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn ranges(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.range(j)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(j, &v)| v >= self.lower[j] && v <= self.upper[j])
    }

    pub fn clip(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.lower[j] + rng.gen::<f64>() * self.range(j))
            .collect()
    }
}

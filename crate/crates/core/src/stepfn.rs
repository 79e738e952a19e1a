use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-continuous step function over time, used for cumulative hazards,
/// survival curves and cumulative incidence curves.
///
/// The value before the first breakpoint is `initial` (0 for cumulative
/// hazards and CIFs, 1 for survival curves).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    initial: f64,
}

impl StepFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, initial: f64) -> Result<Self> {
        if breakpoints.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "step function has {} breakpoints but {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "step function breakpoints must be strictly increasing".into(),
            ));
        }
        if breakpoints.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput(
                "step function breakpoints must be finite".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            values,
            initial,
        })
    }

    /// A function that is `initial` everywhere.
    pub fn constant(initial: f64) -> Self {
        Self {
            breakpoints: Vec::new(),
            values: Vec::new(),
            initial,
        }
    }

    /// Right-continuous evaluation: the value of the last breakpoint <= t.
    pub fn eval(&self, t: f64) -> f64 {
        match self.breakpoints.partition_point(|&b| b <= t) {
            0 => self.initial,
            n => self.values[n - 1],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn len(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breakpoints.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.breakpoints
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }
}

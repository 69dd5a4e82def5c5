//! Right-continuous step functions over time.

use serde::Serialize;

/// A right-continuous step function: `value(t)` is the value at the last
/// knot with time `<= t`, or `initial` before the first knot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFunction {
    pub initial: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn new(initial: f64, times: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(times.len(), values.len(), "knot times and values differ in length");
        debug_assert!(times.windows(2).all(|w| w[0] <= w[1]), "knot times must be sorted");
        Self {
            initial,
            times,
            values,
        }
    }

    /// Constant function with no knots.
    pub fn constant(value: f64) -> Self {
        Self::new(value, Vec::new(), Vec::new())
    }

    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&k| k <= t);
        if idx == 0 {
            self.initial
        } else {
            self.values[idx - 1]
        }
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    /// Largest absolute difference between two step functions over all t.
    ///
    /// Both functions are piecewise constant, so the supremum is attained at
    /// a knot of one of them (or before all knots).
    pub fn sup_distance(&self, other: &StepFunction) -> f64 {
        let mut worst = (self.initial - other.initial).abs();
        for &t in self.times.iter().chain(other.times.iter()) {
            worst = worst.max((self.eval(t) - other.eval(t)).abs());
        }
        worst
    }
}

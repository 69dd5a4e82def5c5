//! Fitting the dependence parameters to a target OS curve.

pub mod ks;
pub mod nelder_mead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cif::{cycle_start_months, CYCLE_DAYS};
use crate::microsim::{simulate_cohort, DependenceParams, ModelError, ModelSpec};
use crate::step::StepFunction;

pub use ks::{kolmogorov_q, ks_lack_of_fit, ks_statistic, KsResult};
pub use nelder_mead::{multi_start, nelder_mead_bounded, NmOutcome, NmSettings};

#[derive(Debug, Error, PartialEq)]
pub enum CalibrateError {
    #[error("curves must share a non-empty grid (got {0} and {1} points)")]
    Grid(usize, usize),
    #[error("effective sample size must be >= 1, got {0}")]
    EffectiveN(f64),
    #[error("invalid bounds: {0}")]
    Bounds(String),
    #[error("target must cover at least cycles 0 and 1")]
    ShortTarget,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub theta: (f64, f64),
    pub omega: (f64, f64),
}

impl Bounds {
    pub fn default_for(horizon_cycles: usize) -> Self {
        Self {
            theta: (1.0, 20.0),
            omega: (1.0, horizon_cycles as f64),
        }
    }

    pub fn validate(&self) -> Result<(), CalibrateError> {
        let (tl, th) = self.theta;
        let (ol, oh) = self.omega;
        if ![tl, th, ol, oh].iter().all(|v| v.is_finite()) {
            return Err(CalibrateError::Bounds("bounds must be finite".into()));
        }
        if tl < 1.0 || ol < 1.0 {
            return Err(CalibrateError::Bounds("lower bounds must be >= 1".into()));
        }
        if tl > th || ol > oh {
            return Err(CalibrateError::Bounds("lower bound above upper bound".into()));
        }
        Ok(())
    }

    fn lo(&self) -> [f64; 2] {
        [self.theta.0, self.omega.0]
    }

    fn hi(&self) -> [f64; 2] {
        [self.theta.1, self.omega.1]
    }

    /// The lower corner plus the 25%/75% interior grid.
    pub fn default_starts(&self) -> Vec<(f64, f64)> {
        let at = |(lo, hi): (f64, f64), f: f64| lo + f * (hi - lo);
        let mut starts = vec![(self.theta.0, self.omega.0)];
        for fo in [0.25, 0.75] {
            for ft in [0.25, 0.75] {
                starts.push((at(self.theta, ft), at(self.omega, fo)));
            }
        }
        starts
    }
}

/// Sample a survival step function (time in months) at cycle starts
/// `0..=horizon`, stopping at the last cycle inside its follow-up.
pub fn target_on_cycles(curve: &StepFunction, follow_up: f64, horizon: usize) -> Vec<f64> {
    (0..=horizon)
        .map(|c| cycle_start_months(c, CYCLE_DAYS))
        .take_while(|&t| t <= follow_up + 1e-9)
        .map(|t| curve.eval(t))
        .collect()
}

/// Sum of squared differences over cycles `1..` present in both curves.
pub fn sse(s_mod: &[f64], target: &[f64]) -> f64 {
    s_mod
        .iter()
        .zip(target)
        .skip(1)
        .map(|(m, t)| (m - t) * (m - t))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProblem {
    pub spec: ModelSpec,
    /// Target survival at cycle starts `0..=C` (may stop early).
    pub target: Vec<f64>,
    pub bounds: Bounds,
    pub settings: NmSettings,
    pub starts: Vec<(f64, f64)>,
    /// Effective sample size for the KS test.
    pub n_eff: f64,
}

impl CalibrationProblem {
    pub fn new(spec: ModelSpec, target: Vec<f64>, n_eff: f64) -> Self {
        let bounds = Bounds::default_for(spec.horizon_cycles);
        Self {
            spec,
            target,
            starts: bounds.default_starts(),
            bounds,
            settings: NmSettings::default(),
            n_eff,
        }
    }

    pub fn validate(&self) -> Result<(), CalibrateError> {
        self.spec.validate()?;
        self.bounds.validate()?;
        if self.target.len() < 2 {
            return Err(CalibrateError::ShortTarget);
        }
        if !(self.n_eff >= 1.0) {
            return Err(CalibrateError::EffectiveN(self.n_eff));
        }
        Ok(())
    }
}

/// Objective at `dep`: SSE between the simulated and target OS curves.
pub fn sse_objective(dep: DependenceParams, problem: &CalibrationProblem) -> f64 {
    sse(&simulate_cohort(&problem.spec, dep).os_curve, &problem.target)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub start: usize,
    pub theta: f64,
    pub omega: f64,
    pub sse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub theta: f64,
    pub omega: f64,
    pub sse: f64,
    pub evaluations: usize,
    pub ks: KsResult,
    pub converged: bool,
    pub os_curve: Vec<f64>,
    pub trace: Vec<TracePoint>,
}

impl CalibrationResult {
    pub fn params(&self) -> DependenceParams {
        DependenceParams {
            theta: self.theta,
            omega: self.omega,
        }
    }
}

pub fn calibrate(problem: &CalibrationProblem) -> Result<CalibrationResult, CalibrateError> {
    problem.validate()?;
    let lo = problem.bounds.lo();
    let hi = problem.bounds.hi();
    let mut trace = Vec::new();
    let mut best: Option<NmOutcome> = None;
    let mut evaluations = 0;
    for (i, &(t0, o0)) in problem.starts.iter().enumerate() {
        let objective = |x: &[f64]| {
            let dep = DependenceParams {
                theta: x[0],
                omega: x[1],
            };
            let f = sse_objective(dep, problem);
            trace.push(TracePoint {
                start: i,
                theta: x[0],
                omega: x[1],
                sse: f,
            });
            f
        };
        let run = nelder_mead_bounded(objective, &[t0, o0], &lo, &hi, &problem.settings);
        evaluations += run.evaluations;
        if best.as_ref().is_none_or(|b| run.f < b.f) {
            best = Some(run);
        }
    }
    let best = best.ok_or_else(|| CalibrateError::Bounds("no starting points".into()))?;
    let dep = DependenceParams {
        theta: best.x[0],
        omega: best.x[1],
    };
    let os_curve = simulate_cohort(&problem.spec, dep).os_curve;
    let k = problem.target.len().min(os_curve.len());
    let ks = ks_lack_of_fit(&os_curve[..k], &problem.target[..k], problem.n_eff)?;
    Ok(CalibrationResult {
        theta: dep.theta,
        omega: dep.omega,
        sse: best.f,
        evaluations,
        ks,
        converged: best.converged,
        os_curve,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sse_examples() {
        assert!((sse(&[1.0; 11], &[0.9; 11]) - 0.1).abs() < 1e-12);
        let shifted: Vec<f64> = (0..88).map(|c| 1.0 - c as f64 * 0.01).collect();
        let target: Vec<f64> = shifted.iter().map(|v| v - 0.05).collect();
        assert!((sse(&shifted, &target) - 0.2175).abs() < 1e-12);
    }

    #[test]
    fn default_starts_cover_the_box() {
        let b = Bounds::default_for(87);
        let s = b.default_starts();
        assert_eq!(s.len(), 5);
        assert_eq!(s[0], (1.0, 1.0));
        assert!(s.contains(&(5.75, 22.5)));
        assert!(s.contains(&(15.25, 65.5)));
    }

    #[test]
    fn bad_bounds() {
        let b = Bounds {
            theta: (0.5, 2.0),
            omega: (1.0, 3.0),
        };
        assert!(b.validate().is_err());
        let b = Bounds {
            theta: (3.0, 2.0),
            omega: (1.0, 3.0),
        };
        assert!(b.validate().is_err());
    }
}

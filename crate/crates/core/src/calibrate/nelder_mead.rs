//! Nelder-Mead simplex search inside a box.
//!
//! Every candidate is clipped coordinate-wise onto the box before it is
//! evaluated, so the objective is never called outside the bounds.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmSettings {
    /// Stop when the objective spread over the simplex falls below
    /// `f_tol * (1 + |f_best|)`.
    pub f_tol: f64,
    /// Stop when every vertex is within `x_tol` of the best (max-norm).
    pub x_tol: f64,
    /// Evaluation budget per start, restarts included.
    pub max_evals: usize,
    /// Fresh simplices built around the best point after convergence.
    pub restarts: usize,
    /// Initial simplex edge as a fraction of the box width.
    pub initial_step: f64,
}

impl Default for NmSettings {
    fn default() -> Self {
        Self {
            // the objective moves in steps of about 1/n^2
            f_tol: 1e-12,
            x_tol: 1e-6,
            max_evals: 400,
            restarts: 2,
            initial_step: 0.1,
        }
    }
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NmOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub converged: bool,
}

pub fn clip(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

struct Counted<'a, F> {
    f: &'a mut F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<'_, F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        (self.f)(x)
    }
}

/// Minimize `f` over the box `[lo, hi]` starting from `x0`.
pub fn nelder_mead_bounded<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    settings: &NmSettings,
) -> NmOutcome {
    assert!(x0.len() == lo.len() && lo.len() == hi.len());
    let mut start = x0.to_vec();
    clip(&mut start, lo, hi);
    let mut counted = Counted { f: &mut f, evals: 0 };
    let f0 = counted.call(&start);
    let mut best = (start, f0);
    let mut converged = false;
    for round in 0..=settings.restarts {
        let (x, fx, ok) = run_simplex(&mut counted, best.clone(), lo, hi, settings);
        let improved = fx < best.1;
        if fx <= best.1 {
            best = (x, fx);
        }
        converged = ok;
        if !ok || (round > 0 && !improved) {
            break;
        }
    }
    NmOutcome {
        x: best.0,
        f: best.1,
        evaluations: counted.evals,
        converged,
    }
}

fn run_simplex<F: FnMut(&[f64]) -> f64>(
    f: &mut Counted<'_, F>,
    (x0, f0): (Vec<f64>, f64),
    lo: &[f64],
    hi: &[f64],
    s: &NmSettings,
) -> (Vec<f64>, f64, bool) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.clone(), f0)];
    for i in 0..n {
        let step = s.initial_step * (hi[i] - lo[i]);
        let mut x = x0.clone();
        x[i] = if x[i] + step <= hi[i] { x[i] + step } else { x[i] - step };
        clip(&mut x, lo, hi);
        if f.evals >= s.max_evals {
            return (x0, f0, false);
        }
        let fx = f.call(&x);
        simplex.push((x, fx));
    }

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let f_best = simplex[0].1;
        let f_worst = simplex[n].1;
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if f_worst - f_best < s.f_tol * (1.0 + f_best.abs()) || size < s.x_tol {
            let (x, fx) = simplex.swap_remove(0);
            return (x, fx, true);
        }
        if f.evals >= s.max_evals {
            let (x, fx) = simplex.swap_remove(0);
            return (x, fx, false);
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for i in 0..n {
                centroid[i] += x[i] / n as f64;
            }
        }
        let towards = |from: &[f64], coef: f64| -> Vec<f64> {
            let mut p: Vec<f64> = (0..n).map(|i| centroid[i] + coef * (from[i] - centroid[i])).collect();
            clip(&mut p, lo, hi);
            p
        };

        let worst = simplex[n].0.clone();
        let xr = towards(&worst, -REFLECT);
        let fr = f.call(&xr);
        if fr < f_best {
            let xe = towards(&xr, EXPAND);
            let fe = f.call(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < f_worst {
            let xc = towards(&xr, CONTRACT);
            let fc = f.call(&xc);
            (xc, fc, fc <= fr)
        } else {
            let xc = towards(&worst, CONTRACT);
            let fc = f.call(&xc);
            (xc, fc, fc < f_worst)
        };
        if accept {
            simplex[n] = (xc, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let mut x: Vec<f64> = (0..n).map(|i| anchor[i] + SHRINK * (v.0[i] - anchor[i])).collect();
            clip(&mut x, lo, hi);
            v.1 = f.call(&x);
            v.0 = x;
        }
    }
}

/// Run from every start and keep the best result. Ties go to the earlier
/// start.
pub fn multi_start<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    starts: &[Vec<f64>],
    lo: &[f64],
    hi: &[f64],
    settings: &NmSettings,
) -> (NmOutcome, Vec<NmOutcome>) {
    assert!(!starts.is_empty(), "at least one start is required");
    let runs: Vec<NmOutcome> = starts
        .iter()
        .map(|x0| nelder_mead_bounded(&mut f, x0, lo, hi, settings))
        .collect();
    let best = runs
        .iter()
        .fold(None::<&NmOutcome>, |acc, r| match acc {
            Some(b) if b.f <= r.f => Some(b),
            _ => Some(r),
        })
        .cloned()
        .unwrap();
    (best, runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2);
        let s = NmSettings {
            f_tol: 1e-12,
            x_tol: 1e-8,
            ..Default::default()
        };
        let r = nelder_mead_bounded(f, &[5.0, 5.0], &[0.0, 0.0], &[10.0, 10.0], &s);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 2.0).abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn active_bound() {
        let r = nelder_mead_bounded(|x: &[f64]| (x[0] + 1.0).powi(2), &[3.0], &[1.0], &[5.0], &NmSettings::default());
        assert_eq!(r.x, vec![1.0]);
        assert_eq!(r.f, 4.0);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let s = NmSettings {
            f_tol: 1e-14,
            x_tol: 1e-10,
            max_evals: 5000,
            restarts: 3,
            ..Default::default()
        };
        let r = nelder_mead_bounded(f, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &s);
        assert!((r.x[0] - 1.0).abs() < 1e-2 && (r.x[1] - 1.0).abs() < 1e-2, "{:?}", r.x);
    }

    #[test]
    fn collapsed_box() {
        let r = nelder_mead_bounded(|x: &[f64]| x[0] + x[1], &[0.0, 9.0], &[2.0, 3.0], &[2.0, 3.0], &NmSettings::default());
        assert_eq!(r.x, vec![2.0, 3.0]);
        assert_eq!(r.f, 5.0);
        assert!(r.converged);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let s = NmSettings {
            max_evals: 5,
            f_tol: 0.0,
            x_tol: 0.0,
            ..Default::default()
        };
        let r = nelder_mead_bounded(|x: &[f64]| x[0].sin() + x[1].cos(), &[1.0, 1.0], &[-9.0, -9.0], &[9.0, 9.0], &s);
        assert!(!r.converged);
        assert!(r.evaluations <= 7);
    }

    #[test]
    fn never_leaves_box() {
        let lo = [1.0, 1.0];
        let hi = [20.0, 87.0];
        let f = |x: &[f64]| {
            assert!(x[0] >= lo[0] && x[0] <= hi[0] && x[1] >= lo[1] && x[1] <= hi[1]);
            (x[0] + 30.0).powi(2) + (x[1] - 200.0).powi(2)
        };
        let (best, runs) = multi_start(f, &[vec![1.0, 1.0], vec![10.0, 40.0]], &lo, &hi, &NmSettings::default());
        assert_eq!(runs.len(), 2);
        assert_eq!(best.x, vec![1.0, 87.0]);
    }
}

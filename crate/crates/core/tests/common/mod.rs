#![allow(dead_code)]

pub mod oracles;

use std::path::PathBuf;

use linesim::cif::TransitionTable;
use linesim::curve::DigitizedCurve;
use linesim::microsim::{ModelSpec, Strategy};

use oracles::kaplan_meier;

/// The bundled synthetic trial fixtures.
pub fn fixture_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/config.json")
}

/// Constant hazards in every state.
pub fn stationary_spec(l1: (f64, f64), l2: (f64, f64), ed: f64, n: usize, seed: u64) -> ModelSpec {
    let mut spec = ModelSpec::new(
        Strategy::DctFirst,
        TransitionTable::constant(l1.0, l1.1, 1),
        TransitionTable::constant(l2.0, l2.1, 1),
        TransitionTable::constant(0.0, ed, 1),
    );
    spec.n_patients = n;
    spec.seed = seed;
    spec
}

/// Published-style curve for raw data: KM knots, `rows` evenly spaced
/// risk counts and the total event count.
pub fn digitize(times: &[f64], ind: &[u8], rows: usize) -> DigitizedCurve {
    let km = kaplan_meier(times, ind);
    let end = times.iter().copied().fold(0.0, f64::max);
    let mut points = vec![(0.0, 1.0)];
    points.extend(km.iter().copied());
    if end > points.last().unwrap().0 {
        points.push((end, points.last().unwrap().1));
    }
    let risk: Vec<(f64, f64)> = (0..rows)
        .map(|r| {
            let t = r as f64 * end / rows as f64;
            (t, times.iter().filter(|&&x| x >= t).count() as f64)
        })
        .collect();
    let events = ind.iter().filter(|&&d| d == 1).count() as u32;
    DigitizedCurve::new("synthetic", &points, &risk, Some(events)).unwrap()
}

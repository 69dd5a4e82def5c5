//! Reconstruction of pseudo individual-patient data from a digitized
//! Kaplan–Meier curve and its numbers-at-risk table.
//!
//! Within each interval between published risk times the number of censored
//! subjects is chosen so that the implied number at risk at the next risk
//! time matches the published count. Censoring times are spread evenly over
//! the interval; event counts at each drop are set so the reconstructed
//! product-limit ratio reproduces the digitized survival. After the last
//! risk time the remaining drops become events (censoring inside the tail is
//! only introduced to bring the event total within two of a published count,
//! spread evenly or, failing that, ahead of the latest drop that allows it,
//! but never so that survival reaches zero where the curve does not)
//! and whoever is left is censored at maximum follow-up.

use serde::Serialize;
use thiserror::Error;

use crate::curve::{CurvePoint, DigitizedCurve};
use crate::step::StepFunction;

/// Allowed difference between reconstructed and published event totals.
const TAIL_EVENT_SLACK: u32 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum ReconstructError {
    #[error("reconstruction needs at least two risk-table rows, got {0}")]
    TooFewRiskRows(usize),
    #[error("curve infeasible in risk interval {interval}: {reason}")]
    Infeasible { interval: usize, reason: String },
}

/// Per-subject observation times (months) and event indicators
/// (1 = event, 0 = censored).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructedIpd {
    pub times: Vec<f64>,
    pub indicators: Vec<u8>,
    pub n_subjects: usize,
}

impl ReconstructedIpd {
    /// Build from parallel vectors; panics if lengths differ or an indicator
    /// is not 0/1.
    pub fn new(times: Vec<f64>, indicators: Vec<u8>) -> Self {
        assert_eq!(times.len(), indicators.len(), "times and indicators differ in length");
        assert!(indicators.iter().all(|&d| d <= 1), "indicators must be 0 or 1");
        let n_subjects = times.len();
        Self {
            times,
            indicators,
            n_subjects,
        }
    }

    pub fn events(&self) -> usize {
        self.indicators.iter().filter(|&&d| d == 1).count()
    }

    pub fn censored(&self) -> usize {
        self.n_subjects - self.events()
    }

    pub fn max_time(&self) -> f64 {
        self.times.iter().copied().fold(0.0, f64::max)
    }
}

/// Product-limit estimate. Knots sit at distinct event times only.
pub fn km_estimate(ipd: &ReconstructedIpd) -> StepFunction {
    let mut order: Vec<usize> = (0..ipd.n_subjects).collect();
    order.sort_by(|&a, &b| ipd.times[a].total_cmp(&ipd.times[b]));

    let mut at_risk = ipd.n_subjects;
    let mut surv = 1.0;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let t = ipd.times[order[i]];
        let mut deaths = 0;
        let mut leaving = 0;
        while i < order.len() && ipd.times[order[i]] == t {
            deaths += ipd.indicators[order[i]] as usize;
            leaving += 1;
            i += 1;
        }
        if deaths > 0 {
            surv *= 1.0 - deaths as f64 / at_risk as f64;
            times.push(t);
            values.push(surv);
        }
        at_risk -= leaving;
    }
    StepFunction::new(1.0, times, values)
}

/// Running state carried across intervals.
#[derive(Debug, Clone, Copy)]
struct Cursor {
    at_risk: u32,
    /// Reconstructed KM value after the last assigned event.
    km: f64,
}

#[derive(Debug)]
struct IntervalOutcome {
    events: Vec<(f64, u32)>,
    censor_times: Vec<f64>,
    at_risk_end: u32,
    km_end: f64,
    /// A drop arrived after the risk set was already empty.
    unmet_drop: bool,
    /// Survival hit zero at a drop the curve shows above zero.
    premature_zero: bool,
}

/// Replays one interval with `n_censor` censorings spread evenly over
/// `(start, end)`. Returns `None` when censoring would remove more subjects
/// than remain.
fn replay_interval(
    drops: &[CurvePoint],
    start: f64,
    end: f64,
    n_censor: u32,
    cursor: Cursor,
) -> Option<IntervalOutcome> {
    let step = (end - start) / (n_censor as f64 + 1.0);
    let censor_times: Vec<f64> = (1..=n_censor).map(|j| start + j as f64 * step).collect();

    let mut at_risk = cursor.at_risk;
    let mut km = cursor.km;
    let mut next_censor = 0usize;
    let mut events = Vec::new();
    let mut unmet_drop = false;
    let mut premature_zero = false;
    for drop in drops {
        while next_censor < censor_times.len() && censor_times[next_censor] < drop.time {
            at_risk = at_risk.checked_sub(1)?;
            next_censor += 1;
        }
        if at_risk == 0 || km <= 0.0 {
            unmet_drop |= drop.survival < km - 1e-9;
            continue;
        }
        let ratio = (drop.survival / km).min(1.0);
        let deaths = ((at_risk as f64) * (1.0 - ratio)).round().clamp(0.0, at_risk as f64) as u32;
        if deaths > 0 {
            km *= 1.0 - deaths as f64 / at_risk as f64;
            at_risk -= deaths;
            events.push((drop.time, deaths));
            premature_zero |= at_risk == 0 && drop.survival > 0.0;
        }
    }
    let remaining = censor_times.len() - next_censor;
    at_risk = at_risk.checked_sub(remaining as u32)?;
    Some(IntervalOutcome {
        events,
        censor_times,
        at_risk_end: at_risk,
        km_end: km,
        unmet_drop,
        premature_zero,
    })
}

/// Infer event and censoring times from a digitized curve.
pub fn reconstruct(curve: &DigitizedCurve) -> Result<ReconstructedIpd, ReconstructError> {
    let risk = &curve.risk_table;
    if risk.len() < 2 {
        return Err(ReconstructError::TooFewRiskRows(risk.len()));
    }
    let points = &curve.points;
    let n_total = risk[0].n_at_risk;
    let mut cursor = Cursor {
        at_risk: n_total,
        km: 1.0,
    };
    let mut events: Vec<(f64, u32)> = Vec::new();
    let mut censorings: Vec<f64> = Vec::new();

    let drops_in = |lo: f64, hi: f64| -> &[CurvePoint] {
        let a = points.partition_point(|p| p.time < lo);
        let b = points.partition_point(|p| p.time < hi);
        &points[a..b]
    };

    for (interval, w) in risk.windows(2).enumerate() {
        let (start, end, target) = (w[0].time, w[1].time, w[1].n_at_risk);
        let drops = drops_in(start, end);

        // Scan censor counts upward; keep the smallest count with the least
        // discrepancy against the published number at risk, never one that
        // strands a drop with nobody at risk.
        let mut best: Option<((bool, u32), IntervalOutcome)> = None;
        for n_censor in 0..=cursor.at_risk {
            let Some(outcome) = replay_interval(drops, start, end, n_censor, cursor) else {
                break;
            };
            let key = (outcome.unmet_drop, outcome.at_risk_end.abs_diff(target));
            let improves = best.as_ref().is_none_or(|(k, _)| key < *k);
            let overshoot = outcome.at_risk_end + 2 < target;
            if improves {
                best = Some((key, outcome));
            }
            if key.1 == 0 || overshoot {
                break;
            }
        }
        let ((_, gap), outcome) = best.expect("zero censorings always replays");
        if outcome.unmet_drop {
            return Err(ReconstructError::Infeasible {
                interval,
                reason: "survival drops after every subject has left the risk set".into(),
            });
        }
        if gap > 1 && outcome.at_risk_end < target {
            return Err(ReconstructError::Infeasible {
                interval,
                reason: format!(
                    "drops require more events than the published counts allow ({} at risk implied, {} published)",
                    outcome.at_risk_end, target
                ),
            });
        }
        events.extend_from_slice(&outcome.events);
        censorings.extend_from_slice(&outcome.censor_times);
        cursor = Cursor {
            at_risk: outcome.at_risk_end,
            km: outcome.km_end,
        };
    }

    // Tail beyond the last published risk time.
    let last_risk = risk[risk.len() - 1].time;
    let follow_up = curve.max_follow_up();
    let tail = drops_in(last_risk, f64::INFINITY);
    let tail_outcome = match curve.total_events {
        None => replay_interval(tail, last_risk, follow_up, 0, cursor),
        Some(total) => {
            let so_far: u32 = events.iter().map(|e| e.1).sum();
            let search = |spread_until: f64| {
                let mut best: Option<((bool, u32), IntervalOutcome)> = None;
                for n_censor in 0..=cursor.at_risk {
                    let Some(outcome) = replay_interval(tail, last_risk, spread_until, n_censor, cursor) else {
                        break;
                    };
                    let tail_events: u32 = outcome.events.iter().map(|e| e.1).sum();
                    let gap = (so_far + tail_events).abs_diff(total);
                    let key = (
                        outcome.unmet_drop || outcome.premature_zero,
                        gap.saturating_sub(TAIL_EVENT_SLACK),
                    );
                    if best.as_ref().is_none_or(|(k, _)| key < *k) {
                        best = Some((key, outcome));
                    }
                    if key.1 == 0 || so_far + tail_events < total {
                        break;
                    }
                }
                best.expect("zero censorings always replays")
            };
            // Even spreading to follow-up can leave too many at risk for the
            // early drops; then pull the censorings in ahead of successively
            // earlier drops and keep the latest cutoff that works.
            let cutoffs = std::iter::once(follow_up)
                .chain(tail.iter().rev().map(|d| d.time).filter(|&t| t > last_risk));
            let mut best: Option<((bool, u32), IntervalOutcome)> = None;
            for cutoff in cutoffs {
                let found = search(cutoff);
                if best.as_ref().is_none_or(|(k, _)| found.0 < *k) {
                    best = Some(found);
                }
                if best.as_ref().is_some_and(|(k, _)| *k == (false, 0)) {
                    break;
                }
            }
            best.map(|b| b.1)
        }
    }
    .expect("zero censorings always replays");
    if tail_outcome.unmet_drop {
        return Err(ReconstructError::Infeasible {
            interval: risk.len() - 1,
            reason: "survival drops after every subject has left the risk set".into(),
        });
    }
    events.extend_from_slice(&tail_outcome.events);
    censorings.extend_from_slice(&tail_outcome.censor_times);
    censorings.extend(std::iter::repeat_n(follow_up, tail_outcome.at_risk_end as usize));

    // Chronological order; events precede censorings at a shared time.
    let mut rows: Vec<(f64, u8)> = Vec::with_capacity(n_total as usize);
    for (t, d) in events {
        rows.extend(std::iter::repeat_n((t, 1u8), d as usize));
    }
    rows.extend(censorings.into_iter().map(|t| (t, 0u8)));
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    debug_assert_eq!(rows.len(), n_total as usize);

    let (times, indicators) = rows.into_iter().unzip();
    Ok(ReconstructedIpd::new(times, indicators))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: &[(f64, f64)], risk: &[(f64, f64)], total: Option<u32>) -> DigitizedCurve {
        DigitizedCurve::new("t", points, risk, total).unwrap()
    }

    #[test]
    fn km_hand_example() {
        let ipd = ReconstructedIpd::new(vec![1.0, 2.0, 3.0], vec![1, 0, 1]);
        let km = km_estimate(&ipd);
        assert_eq!(km.eval(0.5), 1.0);
        assert!((km.eval(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((km.eval(2.5) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(km.eval(3.0), 0.0);
    }

    #[test]
    fn km_without_events_is_flat() {
        let ipd = ReconstructedIpd::new(vec![1.0, 4.0, 9.0], vec![0, 0, 0]);
        let km = km_estimate(&ipd);
        assert!(km.times.is_empty());
        assert_eq!(km.eval(100.0), 1.0);
    }

    #[test]
    fn km_single_subject() {
        let km = km_estimate(&ReconstructedIpd::new(vec![5.0], vec![1]));
        assert_eq!(km.eval(4.999), 1.0);
        assert_eq!(km.eval(5.0), 0.0);
    }

    #[test]
    fn flat_curve_is_all_censored_at_end() {
        let c = curve(&[(0.0, 1.0), (12.0, 1.0)], &[(0.0, 10.0), (12.0, 10.0)], None);
        let ipd = reconstruct(&c).unwrap();
        assert_eq!(ipd.n_subjects, 10);
        assert_eq!(ipd.events(), 0);
        assert!(ipd.times.iter().all(|&t| t == 12.0));
    }

    #[test]
    fn single_drop_hand_trace() {
        let c = curve(&[(0.0, 1.0), (2.0, 0.9)], &[(0.0, 10.0), (4.0, 9.0)], None);
        let ipd = reconstruct(&c).unwrap();
        assert_eq!(ipd.events(), 1);
        assert_eq!(ipd.times[0], 2.0);
        assert_eq!(ipd.indicators[0], 1);
        assert_eq!(ipd.censored(), 9);
        assert!(ipd.times[1..].iter().all(|&t| t == 4.0));
    }

    #[test]
    fn censoring_is_inferred_from_attrition() {
        // 20 at risk, 2 events at t=1, 13 at risk at t=6: 5 censored inside.
        let c = curve(
            &[(0.0, 1.0), (1.0, 0.9), (8.0, 0.9)],
            &[(0.0, 20.0), (6.0, 13.0)],
            None,
        );
        let ipd = reconstruct(&c).unwrap();
        assert_eq!(ipd.n_subjects, 20);
        assert_eq!(ipd.events(), 2);
        let inside = ipd
            .times
            .iter()
            .zip(&ipd.indicators)
            .filter(|(&t, &d)| d == 0 && t > 0.0 && t < 6.0)
            .count();
        assert_eq!(inside, 5);
    }

    #[test]
    fn tied_drop_gets_one_timestamp() {
        let c = curve(&[(0.0, 1.0), (3.0, 0.7)], &[(0.0, 10.0), (5.0, 7.0)], None);
        let ipd = reconstruct(&c).unwrap();
        let event_times: Vec<f64> = ipd
            .times
            .iter()
            .zip(&ipd.indicators)
            .filter(|(_, &d)| d == 1)
            .map(|(&t, _)| t)
            .collect();
        assert_eq!(event_times, vec![3.0; 3]);
    }

    #[test]
    fn impossible_drop_is_reported_with_interval() {
        // Half the cohort dies but 9 of 10 are still published at risk.
        let c = curve(&[(0.0, 1.0), (2.0, 0.5)], &[(0.0, 10.0), (4.0, 9.0), (8.0, 2.0)], None);
        let err = reconstruct(&c).unwrap_err();
        assert!(matches!(err, ReconstructError::Infeasible { interval: 0, .. }));
    }

    #[test]
    fn total_events_steers_tail_censoring() {
        // Tail drop from 0.8 to 0.4 with 10 left: without censoring that is 5 events.
        let points = [(0.0, 1.0), (1.0, 0.8), (19.0, 0.4), (20.0, 0.4)];
        let risk = [(0.0, 10.0), (5.0, 8.0)];
        let free = reconstruct(&curve(&points, &risk, None)).unwrap();
        assert_eq!(free.events(), 2 + 4);
        // within two of the published total: tail left alone
        assert_eq!(reconstruct(&curve(&points, &risk, Some(4))).unwrap(), free);
        let pinned = reconstruct(&curve(&points, &risk, Some(3))).unwrap();
        assert!(pinned.events().abs_diff(3) <= 2, "{pinned:?}");
        assert!(pinned.events() < free.events());
        assert_eq!(pinned.n_subjects, 10);
    }

    #[test]
    fn tail_censoring_moves_ahead_of_early_drop() {
        // Nine at risk, halved at 66 then gone at 93. Only two events were
        // published, so most of the nine must leave before the first drop.
        let points = [(0.0, 1.0), (66.0, 0.5), (93.0, 0.0)];
        let risk = [(0.0, 20.0), (31.0, 9.0), (62.0, 9.0)];
        let ipd = reconstruct(&curve(&points, &risk, Some(2))).unwrap();
        assert!(ipd.events() <= 4, "{ipd:?}");
        let early = ipd.times.iter().zip(&ipd.indicators).filter(|(&t, &d)| d == 0 && t > 62.0 && t < 66.0);
        assert!(early.count() >= 5);
    }

    #[test]
    fn needs_two_risk_rows() {
        let c = curve(&[(0.0, 1.0)], &[(0.0, 10.0)], None);
        assert_eq!(reconstruct(&c), Err(ReconstructError::TooFewRiskRows(1)));
    }
}

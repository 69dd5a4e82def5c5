//! Digitized survival curves and their numbers-at-risk tables.
//!
//! Curves arrive as JSON documents:
//!
//! ```json
//! { "label": "OS", "points": [[0, 1.0], [6, 0.8]], "risk_table": [[0, 100], [6, 78]], "total_events": null }
//! ```
//!
//! Times are in months. Loading validates every structural invariant and
//! normalizes the point list (near-duplicate times collapsed, a leading
//! `(0, 1)` added when absent).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::step::StepFunction;

/// Two digitized times closer than this (months) are treated as the same time.
pub const DUPLICATE_TIME_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub time: f64,
    pub survival: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskRow {
    pub time: f64,
    pub n_at_risk: u32,
}

/// The invariant a rejected curve violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    NoPoints,
    NoRiskRows,
    TimeNegative,
    TimesNotIncreasing,
    DuplicateTimeConflict,
    SurvivalOutOfRange,
    SurvivalNonIncreasing,
    RiskTimesNotIncreasing,
    RiskCountInvalid,
    RiskNonIncreasing,
    RiskStartsAfterPoints,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::NoPoints => "at least one point required",
            Rule::NoRiskRows => "at least one risk-table row required",
            Rule::TimeNegative => "time must be finite and >= 0",
            Rule::TimesNotIncreasing => "times strictly increasing",
            Rule::DuplicateTimeConflict => "duplicate time with differing survival",
            Rule::SurvivalOutOfRange => "survival in [0, 1]",
            Rule::SurvivalNonIncreasing => "survival non-increasing",
            Rule::RiskTimesNotIncreasing => "risk-table times strictly increasing",
            Rule::RiskCountInvalid => "n_at_risk must be a non-negative integer",
            Rule::RiskNonIncreasing => "n_at_risk non-increasing",
            Rule::RiskStartsAfterPoints => "risk table must start no later than the first point",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("curve document does not match schema: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("reading curve {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{rule} (violated at {field}[{index}])")]
    Validation {
        rule: Rule,
        field: &'static str,
        index: usize,
    },
    #[error("PFS follow-up ({pfs_end} months) exceeds OS follow-up ({os_end} months) by more than one reporting interval")]
    FollowUpMismatch { pfs_end: f64, os_end: f64 },
}

impl CurveError {
    pub fn rule(&self) -> Option<Rule> {
        match self {
            CurveError::Validation { rule, .. } => Some(*rule),
            _ => None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveDocument {
    label: String,
    points: Vec<[f64; 2]>,
    risk_table: Vec<[f64; 2]>,
    #[serde(default)]
    total_events: Option<u32>,
}

/// A validated digitized survival curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DigitizedCurve {
    pub label: String,
    pub points: Vec<CurvePoint>,
    pub risk_table: Vec<RiskRow>,
    pub total_events: Option<u32>,
}

fn invalid(rule: Rule, field: &'static str, index: usize) -> CurveError {
    CurveError::Validation { rule, field, index }
}

impl DigitizedCurve {
    /// Validate raw coordinates and build a normalized curve.
    ///
    /// Indices in validation errors refer to positions in the input slices.
    pub fn new(
        label: impl Into<String>,
        points: &[(f64, f64)],
        risk_table: &[(f64, f64)],
        total_events: Option<u32>,
    ) -> Result<Self, CurveError> {
        if points.is_empty() {
            return Err(invalid(Rule::NoPoints, "points", 0));
        }
        if risk_table.is_empty() {
            return Err(invalid(Rule::NoRiskRows, "risk_table", 0));
        }

        let mut kept: Vec<CurvePoint> = Vec::with_capacity(points.len() + 1);
        for (i, &(time, survival)) in points.iter().enumerate() {
            if !time.is_finite() || time < 0.0 {
                return Err(invalid(Rule::TimeNegative, "points", i));
            }
            if !survival.is_finite() || !(0.0..=1.0).contains(&survival) {
                return Err(invalid(Rule::SurvivalOutOfRange, "points", i));
            }
            if let Some(prev) = kept.last() {
                if (time - prev.time).abs() <= DUPLICATE_TIME_TOLERANCE {
                    if survival == prev.survival {
                        continue;
                    }
                    return Err(invalid(Rule::DuplicateTimeConflict, "points", i));
                }
                if time < prev.time {
                    return Err(invalid(Rule::TimesNotIncreasing, "points", i));
                }
                if survival > prev.survival {
                    return Err(invalid(Rule::SurvivalNonIncreasing, "points", i));
                }
            }
            kept.push(CurvePoint { time, survival });
        }
        if kept[0].time > DUPLICATE_TIME_TOLERANCE {
            kept.insert(
                0,
                CurvePoint {
                    time: 0.0,
                    survival: 1.0,
                },
            );
        }

        let mut rows: Vec<RiskRow> = Vec::with_capacity(risk_table.len());
        for (i, &(time, count)) in risk_table.iter().enumerate() {
            if !time.is_finite() || time < 0.0 {
                return Err(invalid(Rule::TimeNegative, "risk_table", i));
            }
            if !count.is_finite() || count < 0.0 || count.fract() != 0.0 || count > u32::MAX as f64 {
                return Err(invalid(Rule::RiskCountInvalid, "risk_table", i));
            }
            let n_at_risk = count as u32;
            if let Some(prev) = rows.last() {
                if time <= prev.time {
                    return Err(invalid(Rule::RiskTimesNotIncreasing, "risk_table", i));
                }
                if n_at_risk > prev.n_at_risk {
                    return Err(invalid(Rule::RiskNonIncreasing, "risk_table", i));
                }
            }
            rows.push(RiskRow { time, n_at_risk });
        }
        if rows[0].time > kept[0].time + DUPLICATE_TIME_TOLERANCE {
            return Err(invalid(Rule::RiskStartsAfterPoints, "risk_table", 0));
        }

        Ok(Self {
            label: label.into(),
            points: kept,
            risk_table: rows,
            total_events,
        })
    }

    /// The curve as a right-continuous step function (1 before the first point).
    pub fn step_function(&self) -> StepFunction {
        StepFunction::new(
            1.0,
            self.points.iter().map(|p| p.time).collect(),
            self.points.iter().map(|p| p.survival).collect(),
        )
    }

    /// Last time covered by either the points or the risk table.
    pub fn max_follow_up(&self) -> f64 {
        let last_point = self.points.last().map_or(0.0, |p| p.time);
        let last_risk = self.risk_table.last().map_or(0.0, |r| r.time);
        last_point.max(last_risk)
    }

    /// Serialize back to the JSON curve schema.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            label: &'a str,
            points: Vec<[f64; 2]>,
            risk_table: Vec<[f64; 2]>,
            total_events: Option<u32>,
        }
        let out = Out {
            label: &self.label,
            points: self.points.iter().map(|p| [p.time, p.survival]).collect(),
            risk_table: self
                .risk_table
                .iter()
                .map(|r| [r.time, r.n_at_risk as f64])
                .collect(),
            total_events: self.total_events,
        };
        serde_json::to_string_pretty(&out).expect("curve serialization cannot fail")
    }
}

/// Parse and validate a curve document.
pub fn load_curve(source: &str) -> Result<DigitizedCurve, CurveError> {
    let doc: CurveDocument = serde_json::from_str(source)?;
    let points: Vec<(f64, f64)> = doc.points.iter().map(|p| (p[0], p[1])).collect();
    let risk: Vec<(f64, f64)> = doc.risk_table.iter().map(|r| (r[0], r[1])).collect();
    DigitizedCurve::new(doc.label, &points, &risk, doc.total_events)
}

pub fn load_curve_file(path: &Path) -> Result<DigitizedCurve, CurveError> {
    let text = std::fs::read_to_string(path).map_err(|source| CurveError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_curve(&text)
}

/// Whether deaths count as PFS events or were censored when the PFS curve was
/// published.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeathHandling {
    DeathIsEvent,
    DeathIsCensored,
}

impl std::str::FromStr for DeathHandling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "death_is_event" | "death-is-event" | "event" => Ok(Self::DeathIsEvent),
            "death_is_censored" | "death-is-censored" | "censored" => Ok(Self::DeathIsCensored),
            other => Err(format!("unknown death handling `{other}`")),
        }
    }
}

/// PFS and OS curves reported by one trial arm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialCurveSet {
    pub pfs: DigitizedCurve,
    pub os: DigitizedCurve,
    pub pfs_death_handling: DeathHandling,
}

impl TrialCurveSet {
    pub fn new(
        pfs: DigitizedCurve,
        os: DigitizedCurve,
        pfs_death_handling: DeathHandling,
    ) -> Result<Self, CurveError> {
        let interval = os
            .risk_table
            .windows(2)
            .map(|w| w[1].time - w[0].time)
            .fold(0.0, f64::max);
        let pfs_end = pfs.points.last().map_or(0.0, |p| p.time);
        let os_end = os.points.last().map_or(0.0, |p| p.time);
        if pfs_end > os_end + interval + DUPLICATE_TIME_TOLERANCE {
            return Err(CurveError::FollowUpMismatch { pfs_end, os_end });
        }
        Ok(Self {
            pfs,
            os,
            pfs_death_handling,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        r#"{"label":"OS","points":[[0,1.0],[6,0.8]],"risk_table":[[0,100],[6,78]],"total_events":null}"#;

    #[test]
    fn loads_minimal_curve() {
        let c = load_curve(MINIMAL).unwrap();
        assert_eq!(c.points.len(), 2);
        assert_eq!(c.risk_table[1].n_at_risk, 78);
        assert_eq!(c.total_events, None);
    }

    #[test]
    fn rejects_rising_survival_with_index() {
        let doc = r#"{"label":"x","points":[[0,1.0],[6,0.8],[12,0.9]],"risk_table":[[0,10]]}"#;
        let err = load_curve(doc).unwrap_err();
        assert_eq!(err.rule(), Some(Rule::SurvivalNonIncreasing));
        assert!(matches!(err, CurveError::Validation { index: 2, .. }));
        assert!(err.to_string().contains("survival non-increasing"));
    }

    #[test]
    fn rejects_growing_risk_table() {
        let doc = r#"{"label":"x","points":[[0,1.0],[6,0.8]],"risk_table":[[0,100],[6,120]]}"#;
        let err = load_curve(doc).unwrap_err();
        assert_eq!(err.rule(), Some(Rule::RiskNonIncreasing));
        assert!(err.to_string().contains("n_at_risk non-increasing"));
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = load_curve(r#"{"label":"x","risk_table":[[0,1]]}"#).unwrap_err();
        assert!(matches!(err, CurveError::Parse(_)));
        assert!(err.to_string().contains("points"));
        let err = load_curve(r#"{"label":"x","points":[[0,"a"]],"risk_table":[[0,1]]}"#).unwrap_err();
        assert!(matches!(err, CurveError::Parse(_)));
    }

    #[test]
    fn collapses_duplicates_and_prepends_origin() {
        let c = DigitizedCurve::new(
            "x",
            &[(2.0, 0.9), (2.005, 0.9), (4.0, 0.5)],
            &[(0.0, 10.0)],
            None,
        )
        .unwrap();
        let times: Vec<f64> = c.points.iter().map(|p| p.time).collect();
        assert_eq!(times, vec![0.0, 2.0, 4.0]);
        assert_eq!(c.points[0].survival, 1.0);

        let err = DigitizedCurve::new("x", &[(2.0, 0.9), (2.005, 0.8)], &[(0.0, 10.0)], None)
            .unwrap_err();
        assert_eq!(err.rule(), Some(Rule::DuplicateTimeConflict));
    }

    #[test]
    fn rejects_bad_values() {
        let e = DigitizedCurve::new("x", &[(0.0, 1.2)], &[(0.0, 1.0)], None).unwrap_err();
        assert_eq!(e.rule(), Some(Rule::SurvivalOutOfRange));
        let e = DigitizedCurve::new("x", &[(-1.0, 1.0)], &[(0.0, 1.0)], None).unwrap_err();
        assert_eq!(e.rule(), Some(Rule::TimeNegative));
        let e = DigitizedCurve::new("x", &[(0.0, 1.0)], &[(0.0, 1.5)], None).unwrap_err();
        assert_eq!(e.rule(), Some(Rule::RiskCountInvalid));
        let e = DigitizedCurve::new("x", &[(0.0, 1.0)], &[(1.0, 5.0)], None).unwrap_err();
        assert_eq!(e.rule(), Some(Rule::RiskStartsAfterPoints));
        let e = DigitizedCurve::new("x", &[(0.0, 1.0), (3.0, 0.9), (2.0, 0.8)], &[(0.0, 5.0)], None)
            .unwrap_err();
        assert_eq!(e.rule(), Some(Rule::TimesNotIncreasing));
    }

    #[test]
    fn json_round_trip_is_stable() {
        let c = load_curve(MINIMAL).unwrap();
        let again = load_curve(&c.to_json()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn pfs_follow_up_cannot_outrun_os() {
        let os = DigitizedCurve::new("os", &[(0.0, 1.0), (12.0, 0.7)], &[(0.0, 10.0), (6.0, 9.0)], None)
            .unwrap();
        let short = DigitizedCurve::new("pfs", &[(0.0, 1.0), (15.0, 0.5)], &[(0.0, 10.0)], None).unwrap();
        assert!(TrialCurveSet::new(short, os.clone(), DeathHandling::DeathIsEvent).is_ok());
        let long = DigitizedCurve::new("pfs", &[(0.0, 1.0), (30.0, 0.5)], &[(0.0, 10.0)], None).unwrap();
        assert!(matches!(
            TrialCurveSet::new(long, os, DeathHandling::DeathIsEvent),
            Err(CurveError::FollowUpMismatch { .. })
        ));
    }
}

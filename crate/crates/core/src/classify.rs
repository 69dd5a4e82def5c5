//! Splitting PFS observations into progression and death events by matching
//! them against OS death times.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::DeathHandling;
use crate::ipd::ReconstructedIpd;

/// Default matching margin in months.
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum EventCode {
    Censored = 0,
    Progression = 1,
    Death = 2,
}

impl EventCode {
    pub fn from_u8(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Censored),
            1 => Some(Self::Progression),
            2 => Some(Self::Death),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("matching margin must be finite and non-negative, got {0}")]
    InvalidEpsilon(f64),
}

/// Observation times with three-level event codes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompetingRisksData {
    pub times: Vec<f64>,
    pub codes: Vec<EventCode>,
    pub epsilon: f64,
}

impl CompetingRisksData {
    pub fn new(times: Vec<f64>, codes: Vec<EventCode>, epsilon: f64) -> Self {
        assert_eq!(times.len(), codes.len(), "times and codes differ in length");
        Self {
            times,
            codes,
            epsilon,
        }
    }

    /// OS data read as a single-cause dataset: every event is a death.
    pub fn deaths_only(os: &ReconstructedIpd) -> Self {
        let codes = os
            .indicators
            .iter()
            .map(|&d| if d == 1 { EventCode::Death } else { EventCode::Censored })
            .collect();
        Self::new(os.times.clone(), codes, 0.0)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn count(&self, code: EventCode) -> usize {
        self.codes.iter().filter(|&&c| c == code).count()
    }
}

/// Recode PFS observations that coincide (within `epsilon`) with an OS death.
///
/// OS deaths are visited in ascending time order. Each picks the earliest
/// still-eligible PFS observation inside `[t - epsilon, t + epsilon]`, lowest
/// index first on ties. Eligible means coded as a progression event when
/// deaths count as PFS events, or as censored when deaths were censored.
pub fn classify_events(
    pfs: &ReconstructedIpd,
    os: &ReconstructedIpd,
    epsilon: f64,
    death_handling: DeathHandling,
) -> Result<CompetingRisksData, ClassifyError> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(ClassifyError::InvalidEpsilon(epsilon));
    }
    let eligible = match death_handling {
        DeathHandling::DeathIsEvent => EventCode::Progression,
        DeathHandling::DeathIsCensored => EventCode::Censored,
    };
    let mut codes: Vec<EventCode> = pfs
        .indicators
        .iter()
        .map(|&d| if d == 1 { EventCode::Progression } else { EventCode::Censored })
        .collect();

    let mut by_time: Vec<usize> = (0..pfs.n_subjects).collect();
    by_time.sort_by(|&a, &b| pfs.times[a].total_cmp(&pfs.times[b]).then(a.cmp(&b)));

    let mut deaths: Vec<usize> = (0..os.n_subjects).filter(|&i| os.indicators[i] == 1).collect();
    deaths.sort_by(|&a, &b| os.times[a].total_cmp(&os.times[b]).then(a.cmp(&b)));

    for &d in &deaths {
        let lo = os.times[d] - epsilon;
        let hi = os.times[d] + epsilon;
        let start = by_time.partition_point(|&j| pfs.times[j] < lo);
        let hit = by_time[start..]
            .iter()
            .take_while(|&&j| pfs.times[j] <= hi)
            .find(|&&j| codes[j] == eligible);
        if let Some(&j) = hit {
            codes[j] = EventCode::Death;
        }
    }

    Ok(CompetingRisksData::new(pfs.times.clone(), codes, epsilon))
}

//! Cumulative incidence under competing risks and per-cycle hazards.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{CompetingRisksData, EventCode};

pub const DAYS_PER_MONTH: f64 = 30.4375;
pub const CYCLE_DAYS: f64 = 21.0;

/// Number of trailing observed cycles averaged for the tail.
const TAIL_WINDOW: usize = 4;

/// Cycle `c` start time in months for a given cycle length in days.
pub fn cycle_start_months(c: usize, cycle_days: f64) -> f64 {
    c as f64 * (cycle_days / DAYS_PER_MONTH)
}

#[derive(Debug, Error, PartialEq)]
pub enum CifError {
    #[error("competing-risks data is empty")]
    Empty,
    #[error("cycle length must be positive, got {0} days")]
    CycleLength(f64),
    #[error("horizon must be at least one cycle")]
    Horizon,
}

/// CIFs for progression and death plus event-free survival on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CifPair {
    pub grid: Vec<f64>,
    pub f_prog: Vec<f64>,
    pub f_death: Vec<f64>,
    pub s_all: Vec<f64>,
}

impl CifPair {
    fn index_at(&self, t: f64) -> Option<usize> {
        self.grid.partition_point(|&g| g <= t).checked_sub(1)
    }

    /// `(f_prog, f_death, s_all)` at time `t`, right-continuous.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        match self.index_at(t) {
            Some(i) => (self.f_prog[i], self.f_death[i], self.s_all[i]),
            None => (0.0, 0.0, 1.0),
        }
    }

    pub fn last_time(&self) -> f64 {
        self.grid.last().copied().unwrap_or(0.0)
    }
}

/// Aalen-Johansen estimate of the two cause-specific CIFs.
///
/// The grid holds 0, every distinct event time and the last observation.
pub fn estimate_cif(data: &CompetingRisksData) -> Result<CifPair, CifError> {
    if data.is_empty() {
        return Err(CifError::Empty);
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data.times[a].total_cmp(&data.times[b]));

    let mut out = CifPair {
        grid: vec![0.0],
        f_prog: vec![0.0],
        f_death: vec![0.0],
        s_all: vec![1.0],
    };
    let (mut fp, mut fd, mut s) = (0.0_f64, 0.0_f64, 1.0_f64);
    let mut at_risk = data.len();
    let mut i = 0;
    while i < order.len() {
        let t = data.times[order[i]];
        let (mut dp, mut dd, mut all) = (0usize, 0usize, 0usize);
        while i < order.len() && data.times[order[i]] == t {
            match data.codes[order[i]] {
                EventCode::Progression => dp += 1,
                EventCode::Death => dd += 1,
                EventCode::Censored => {}
            }
            all += 1;
            i += 1;
        }
        if dp + dd > 0 {
            let n = at_risk as f64;
            let inc_p = s * dp as f64 / n;
            let inc_d = s * dd as f64 / n;
            fp += inc_p;
            fd += inc_d;
            s *= (at_risk - dp - dd) as f64 / n;
            push_point(&mut out, t, fp, fd, s);
        }
        at_risk -= all;
    }
    let last = data.times[*order.last().unwrap()];
    if last > out.last_time() {
        push_point(&mut out, last, fp, fd, s);
    }
    Ok(out)
}

fn push_point(out: &mut CifPair, t: f64, fp: f64, fd: f64, s: f64) {
    if t == 0.0 {
        // events at time zero replace the origin row
        out.f_prog[0] = fp;
        out.f_death[0] = fd;
        out.s_all[0] = s;
        return;
    }
    out.grid.push(t);
    out.f_prog.push(fp);
    out.f_death.push(fd);
    out.s_all.push(s);
}

/// Per-cycle transition probabilities for progression and death.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub h_prog: Vec<f64>,
    pub h_death: Vec<f64>,
}

impl TransitionTable {
    pub fn new(h_prog: Vec<f64>, h_death: Vec<f64>) -> Self {
        assert_eq!(h_prog.len(), h_death.len());
        Self { h_prog, h_death }
    }

    /// Time-homogeneous table.
    pub fn constant(h_prog: f64, h_death: f64, cycles: usize) -> Self {
        Self::new(vec![h_prog; cycles], vec![h_death; cycles])
    }

    pub fn cycles(&self) -> usize {
        self.h_prog.len()
    }

    /// Hazards for cycle `c`; cycles past the end reuse the last row.
    #[inline]
    pub fn at(&self, c: usize) -> (f64, f64) {
        if self.h_prog.is_empty() {
            return (0.0, 0.0);
        }
        let i = c.min(self.h_prog.len() - 1);
        (self.h_prog[i], self.h_death[i])
    }
}

/// Difference quotients of the CIFs over cycle boundaries.
///
/// Cycles ending after the last grid time are filled with the mean hazards
/// of the last observed cycles that still had subjects event-free.
pub fn discrete_hazards(
    cif: &CifPair,
    cycle_days: f64,
    horizon_cycles: usize,
) -> Result<TransitionTable, CifError> {
    if !(cycle_days > 0.0) || !cycle_days.is_finite() {
        return Err(CifError::CycleLength(cycle_days));
    }
    if horizon_cycles == 0 {
        return Err(CifError::Horizon);
    }
    let end = cif.last_time();
    let mut h_prog = Vec::with_capacity(horizon_cycles);
    let mut h_death = Vec::with_capacity(horizon_cycles);
    let mut observed = Vec::new();
    for c in 0..horizon_cycles {
        let t0 = cycle_start_months(c, cycle_days);
        let t1 = cycle_start_months(c + 1, cycle_days);
        if t1 > end {
            break;
        }
        let (p0, d0, s0) = cif.eval(t0);
        let (p1, d1, _) = cif.eval(t1);
        let (hp, hd) = if s0 > 0.0 {
            ((p1 - p0) / s0, (d1 - d0) / s0)
        } else {
            (0.0, 0.0)
        };
        if s0 > 0.0 {
            observed.push(c);
        }
        h_prog.push(hp);
        h_death.push(hd);
    }
    if h_prog.len() < horizon_cycles {
        let tail: Vec<usize> = observed.iter().rev().take(TAIL_WINDOW).copied().collect();
        let (tp, td) = if tail.is_empty() {
            (0.0, 0.0)
        } else {
            let k = tail.len() as f64;
            (
                tail.iter().map(|&c| h_prog[c]).sum::<f64>() / k,
                tail.iter().map(|&c| h_death[c]).sum::<f64>() / k,
            )
        };
        h_prog.resize(horizon_cycles, tp);
        h_death.resize(horizon_cycles, td);
    }
    for c in 0..horizon_cycles {
        let total = h_prog[c] + h_death[c];
        if total > 1.0 {
            log::warn!("cycle {c}: hazards sum to {total}, rescaling to 1");
            h_prog[c] /= total;
            h_death[c] /= total;
        }
    }
    Ok(TransitionTable::new(h_prog, h_death))
}

//! Discrete-time individual-level simulation of the two-line sequence.
//!
//! States are recorded at the start of each cycle. Within a cycle the draws
//! are made in a fixed order: death, progression, discontinuation, adverse
//! events. Their effect shows up in the state of the next cycle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cif::TransitionTable;
use crate::rng::{self, PatientStream};

/// Patients simulated per parallel work item.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    DctFirst,
    AaFirst,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::DctFirst, Strategy::AaFirst];

    pub fn drugs(self) -> (Drug, Drug) {
        match self {
            Strategy::DctFirst => (Drug::Dct, Drug::Aa),
            Strategy::AaFirst => (Drug::Aa, Drug::Dct),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::DctFirst => "dct_first",
            Strategy::AaFirst => "aa_first",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "dct_first" => Ok(Strategy::DctFirst),
            "aa_first" => Ok(Strategy::AaFirst),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Drug {
    Dct,
    Aa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum State {
    L1 = 0,
    PostL1 = 1,
    L2 = 2,
    PostL2 = 3,
    Ed = 4,
    Death = 5,
}

impl State {
    pub const ALL: [State; 6] = [
        State::L1,
        State::PostL1,
        State::L2,
        State::PostL2,
        State::Ed,
        State::Death,
    ];

    pub fn name(self) -> &'static str {
        match self {
            State::L1 => "L1",
            State::PostL1 => "PostL1",
            State::L2 => "L2",
            State::PostL2 => "PostL2",
            State::Ed => "ED",
            State::Death => "Death",
        }
    }

    /// Transitions allowed between consecutive cycles.
    pub fn can_move_to(self, next: State) -> bool {
        use State::*;
        match self {
            L1 => true,
            PostL1 => next != L1,
            L2 => matches!(next, L2 | PostL2 | Ed | Death),
            PostL2 => matches!(next, PostL2 | Ed | Death),
            Ed => matches!(next, Ed | Death),
            Death => next == Death,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("theta must be finite and >= 1, got {0}")]
    Theta(f64),
    #[error("omega must be finite and >= 1, got {0}")]
    Omega(f64),
    #[error("{0} must be a probability in [0, 1], got {1}")]
    Probability(String, f64),
    #[error("horizon must be at least one cycle")]
    Horizon,
    #[error("cohort must contain at least one patient")]
    EmptyCohort,
    #[error("{0} transition table is empty")]
    EmptyTable(&'static str),
    #[error("{0} must be at least one cycle")]
    Window(String),
}

/// Parameters of the hazard ratio applied after progression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependenceParams {
    pub theta: f64,
    pub omega: f64,
}

impl DependenceParams {
    pub fn new(theta: f64, omega: f64) -> Result<Self, ModelError> {
        if !theta.is_finite() || theta < 1.0 {
            return Err(ModelError::Theta(theta));
        }
        if !omega.is_finite() || omega < 1.0 {
            return Err(ModelError::Omega(omega));
        }
        Ok(Self { theta, omega })
    }

    /// No dependence between lines.
    pub fn independent() -> Self {
        Self {
            theta: 1.0,
            omega: 1.0,
        }
    }
}

/// Hazard ratio for a patient whose first progression happened in cycle `t1`.
pub fn g_hazard_ratio(t1: f64, dep: DependenceParams) -> f64 {
    if t1 < dep.omega {
        dep.theta - (dep.theta - 1.0) / dep.omega * t1
    } else {
        1.0
    }
}

/// Scale a per-cycle probability by a hazard ratio.
#[inline]
pub fn apply_hr(p: f64, hr: f64) -> f64 {
    if hr == 1.0 {
        p
    } else {
        1.0 - (1.0 - p).powf(hr)
    }
}

/// Per-cycle probability that spreads a cumulative probability evenly over
/// `cycles` cycles.
pub fn per_cycle_rate(overall: f64, cycles: u32) -> f64 {
    1.0 - (1.0 - overall).powf(1.0 / cycles as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Discontinuation {
    None,
    /// A fixed course of `planned_cycles`, with an early stop probability
    /// moving linearly from `early_first` in the first cycle to
    /// `early_last` in the last.
    Course {
        planned_cycles: u32,
        early_first: f64,
        early_last: f64,
    },
    /// Cumulative stop probability `overall` spread over the first `window`
    /// cycles of the line.
    Window { overall: f64, window: u32 },
}

impl Discontinuation {
    fn rate(&self, k: u32) -> f64 {
        match *self {
            Discontinuation::None => 0.0,
            Discontinuation::Course {
                planned_cycles,
                early_first,
                early_last,
            } => {
                if planned_cycles <= 1 {
                    early_first
                } else {
                    let frac = k as f64 / (planned_cycles - 1) as f64;
                    early_first + (early_last - early_first) * frac
                }
            }
            Discontinuation::Window { overall, window } => {
                if k < window {
                    per_cycle_rate(overall, window)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AeKind {
    Fatigue,
    Neutropenia,
    FebrileNeutropenia,
}

impl AeKind {
    fn slot(self) -> usize {
        match self {
            AeKind::Fatigue => rng::SLOT_FATIGUE,
            AeKind::Neutropenia => rng::SLOT_NEUTROPENIA,
            AeKind::FebrileNeutropenia => rng::SLOT_FEBRILE,
        }
    }
}

/// An adverse event with cumulative probability `overall` over the first
/// `window` cycles of a line. Each kind occurs at most once per line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeRisk {
    pub kind: AeKind,
    pub overall: f64,
    pub window: u32,
}

/// Treatment details for one line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineTherapy {
    pub drug: Drug,
    pub discontinuation: Discontinuation,
    pub adverse_events: Vec<AeRisk>,
}

impl LineTherapy {
    /// Published scheduling and toxicity inputs for `drug` given as line 1
    /// or line 2.
    pub fn standard(drug: Drug, line: u8) -> Self {
        let ae = |kind, overall, window| AeRisk {
            kind,
            overall,
            window,
        };
        let (discontinuation, adverse_events) = match (drug, line) {
            (Drug::Dct, 1) => (
                Discontinuation::Course {
                    planned_cycles: 6,
                    early_first: 0.043,
                    early_last: 0.019,
                },
                vec![
                    ae(AeKind::Neutropenia, 0.12, 6),
                    ae(AeKind::FebrileNeutropenia, 0.061, 6),
                ],
            ),
            (Drug::Dct, _) => (
                Discontinuation::Course {
                    planned_cycles: 10,
                    early_first: 0.016,
                    early_last: 0.016,
                },
                vec![
                    ae(AeKind::Neutropenia, 0.163, 6),
                    ae(AeKind::FebrileNeutropenia, 0.044, 6),
                ],
            ),
            (Drug::Aa, 1) => (
                Discontinuation::Window {
                    overall: 0.12,
                    window: 9,
                },
                vec![ae(AeKind::Fatigue, 0.02, 9)],
            ),
            (Drug::Aa, _) => (
                Discontinuation::Window {
                    overall: 0.10,
                    window: 9,
                },
                vec![ae(AeKind::Fatigue, 0.02, 9)],
            ),
        };
        Self {
            drug,
            discontinuation,
            adverse_events,
        }
    }

    /// Therapy that never stops early and causes no adverse events.
    pub fn plain(drug: Drug) -> Self {
        Self {
            drug,
            discontinuation: Discontinuation::None,
            adverse_events: Vec::new(),
        }
    }
}

pub const DEFAULT_HORIZON: usize = 87;
pub const DEFAULT_P_DIRECT_ED: f64 = 0.10;
pub const DEFAULT_N_PATIENTS: usize = 100_000;

/// Everything needed to simulate one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub strategy: Strategy,
    pub line1: TransitionTable,
    pub line2: TransitionTable,
    /// Only the death column is used.
    pub ed_death: TransitionTable,
    pub p_direct_ed: f64,
    pub therapy1: LineTherapy,
    pub therapy2: LineTherapy,
    pub horizon_cycles: usize,
    pub n_patients: usize,
    pub seed: u64,
}

impl ModelSpec {
    /// Spec with the standard therapy inputs for `strategy`.
    pub fn new(
        strategy: Strategy,
        line1: TransitionTable,
        line2: TransitionTable,
        ed_death: TransitionTable,
    ) -> Self {
        let (d1, d2) = strategy.drugs();
        Self {
            strategy,
            line1,
            line2,
            ed_death,
            p_direct_ed: DEFAULT_P_DIRECT_ED,
            therapy1: LineTherapy::standard(d1, 1),
            therapy2: LineTherapy::standard(d2, 2),
            horizon_cycles: DEFAULT_HORIZON,
            n_patients: DEFAULT_N_PATIENTS,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.horizon_cycles == 0 {
            return Err(ModelError::Horizon);
        }
        if self.n_patients == 0 {
            return Err(ModelError::EmptyCohort);
        }
        check_prob("p_direct_ed", self.p_direct_ed)?;
        for (name, table) in [
            ("line1", &self.line1),
            ("line2", &self.line2),
            ("ed_death", &self.ed_death),
        ] {
            if table.cycles() == 0 {
                return Err(ModelError::EmptyTable(name));
            }
            for c in 0..table.cycles() {
                let (hp, hd) = table.at(c);
                check_prob(&format!("{name} h_prog[{c}]"), hp)?;
                check_prob(&format!("{name} h_death[{c}]"), hd)?;
                if hp + hd > 1.0 + 1e-12 {
                    return Err(ModelError::Probability(format!("{name} h_prog+h_death[{c}]"), hp + hd));
                }
            }
        }
        for (line, therapy) in [(1, &self.therapy1), (2, &self.therapy2)] {
            match therapy.discontinuation {
                Discontinuation::None => {}
                Discontinuation::Course {
                    planned_cycles,
                    early_first,
                    early_last,
                } => {
                    if planned_cycles == 0 {
                        return Err(ModelError::Window(format!("line {line} planned cycles")));
                    }
                    check_prob(&format!("line {line} early discontinuation"), early_first)?;
                    check_prob(&format!("line {line} early discontinuation"), early_last)?;
                }
                Discontinuation::Window { overall, window } => {
                    if window == 0 {
                        return Err(ModelError::Window(format!("line {line} discontinuation window")));
                    }
                    check_prob(&format!("line {line} discontinuation"), overall)?;
                }
            }
            for ae in &therapy.adverse_events {
                if ae.window == 0 {
                    return Err(ModelError::Window(format!("line {line} {:?} window", ae.kind)));
                }
                check_prob(&format!("line {line} {:?}", ae.kind), ae.overall)?;
            }
        }
        Ok(())
    }
}

fn check_prob(name: &str, p: f64) -> Result<(), ModelError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ModelError::Probability(name.to_string(), p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Progression,
    Death,
    Discontinuation,
    Ae(AeKind),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatientTrajectory {
    /// State at the start of each cycle `0..C`.
    pub states: Vec<State>,
    /// Cycle in which the first progression happened.
    pub t1: Option<u32>,
    /// Cycle in which the patient died.
    pub death_cycle: Option<u32>,
    pub events: Vec<(u32, Event)>,
}

impl PatientTrajectory {
    pub fn alive_at(&self, c: u32) -> bool {
        self.death_cycle.is_none_or(|d| c <= d)
    }
}

/// Simulate one patient on a given random stream.
pub fn simulate_patient(
    spec: &ModelSpec,
    dep: DependenceParams,
    stream: &mut PatientStream,
) -> PatientTrajectory {
    let horizon = spec.horizon_cycles;
    let mut states = Vec::with_capacity(horizon);
    let mut events = Vec::new();
    let mut state = State::L1;
    let mut t1: Option<u32> = None;
    let mut hr = 1.0;
    let mut death_cycle = None;
    let mut line_entry = 0usize;
    let mut ed_entry = 0usize;
    // bit i set once adverse_events[i] of the current line has fired
    let mut ae_seen: u32 = 0;

    for c in 0..horizon {
        states.push(state);
        if state == State::Death {
            continue;
        }
        let u = stream.cycle(c as u64);
        let (hp, hd) = match state {
            State::L1 | State::PostL1 => spec.line1.at(c),
            State::L2 | State::PostL2 => {
                let (p, d) = spec.line2.at(c - line_entry);
                (apply_hr(p, hr), apply_hr(d, hr))
            }
            State::Ed => (0.0, apply_hr(spec.ed_death.at(c - ed_entry).1, hr)),
            State::Death => unreachable!(),
        };

        if u[rng::SLOT_DEATH] < hd {
            events.push((c as u32, Event::Death));
            death_cycle = Some(c as u32);
            state = State::Death;
            continue;
        }

        let on_therapy = matches!(state, State::L1 | State::L2);
        let therapy = if matches!(state, State::L1 | State::PostL1) {
            &spec.therapy1
        } else {
            &spec.therapy2
        };
        let k = (c - line_entry) as u32;

        let p_prog = if hd < 1.0 { hp / (1.0 - hd) } else { 0.0 };
        let mut next = state;
        if u[rng::SLOT_PROGRESSION] < p_prog {
            events.push((c as u32, Event::Progression));
            match state {
                State::L1 | State::PostL1 => {
                    t1 = Some(c as u32);
                    hr = g_hazard_ratio(c as f64, dep);
                    if u[rng::SLOT_BRANCH] < spec.p_direct_ed {
                        next = State::Ed;
                        ed_entry = c + 1;
                    } else {
                        next = State::L2;
                        line_entry = c + 1;
                    }
                }
                _ => {
                    next = State::Ed;
                    ed_entry = c + 1;
                }
            }
        } else if on_therapy {
            let stop = match therapy.discontinuation {
                Discontinuation::Course { planned_cycles, .. } if k + 1 >= planned_cycles => true,
                d => u[rng::SLOT_DISCONTINUE] < d.rate(k),
            };
            if stop {
                events.push((c as u32, Event::Discontinuation));
                next = if state == State::L1 {
                    State::PostL1
                } else {
                    State::PostL2
                };
            }
        }

        if on_therapy {
            for (i, ae) in therapy.adverse_events.iter().enumerate() {
                if ae_seen & (1 << i) == 0
                    && k < ae.window
                    && u[ae.kind.slot()] < per_cycle_rate(ae.overall, ae.window)
                {
                    ae_seen |= 1 << i;
                    events.push((c as u32, Event::Ae(ae.kind)));
                }
            }
        }
        if next == State::L2 {
            ae_seen = 0;
        }
        state = next;
    }

    PatientTrajectory {
        states,
        t1,
        death_cycle,
        events,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortResult {
    /// Fraction alive at the start of cycles `0..=C`.
    pub os_curve: Vec<f64>,
    /// Patients in each state at the start of cycles `0..C`, indexed by
    /// `State as usize`.
    pub occupancy: Vec<[u64; 6]>,
    pub n_patients: usize,
}

/// Simulate the cohort and summarise it.
pub fn simulate_cohort(spec: &ModelSpec, dep: DependenceParams) -> CohortResult {
    simulate_cohort_with(spec, dep, |_| ()).0
}

/// Simulate the cohort, also returning `per_patient(trajectory)` for every
/// patient in index order.
///
/// Patients are simulated in parallel on the current rayon pool. Each
/// patient's draws come from its own stream, and the summaries are integer
/// counts, so the result does not depend on the number of threads.
pub fn simulate_cohort_with<T, F>(
    spec: &ModelSpec,
    dep: DependenceParams,
    per_patient: F,
) -> (CohortResult, Vec<T>)
where
    T: Send,
    F: Fn(&PatientTrajectory) -> T + Sync,
{
    let horizon = spec.horizon_cycles;
    let n = spec.n_patients;
    let chunks: Vec<(Vec<u64>, Vec<[u64; 6]>, Vec<T>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut alive = vec![0u64; horizon + 1];
            let mut occupancy = vec![[0u64; 6]; horizon];
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut outputs = Vec::with_capacity(hi - lo);
            for patient in lo..hi {
                let mut stream = PatientStream::new(spec.seed, patient as u64);
                let traj = simulate_patient(spec, dep, &mut stream);
                for (c, s) in traj.states.iter().enumerate() {
                    occupancy[c][*s as usize] += 1;
                }
                let survived = match traj.death_cycle {
                    Some(d) => d as usize + 1,
                    None => horizon + 1,
                };
                for a in &mut alive[..survived] {
                    *a += 1;
                }
                outputs.push(per_patient(&traj));
            }
            (alive, occupancy, outputs)
        })
        .collect();

    let mut alive = vec![0u64; horizon + 1];
    let mut occupancy = vec![[0u64; 6]; horizon];
    let mut outputs = Vec::with_capacity(n);
    for (a, o, out) in chunks {
        for (x, y) in alive.iter_mut().zip(a) {
            *x += y;
        }
        for (x, y) in occupancy.iter_mut().zip(o) {
            for s in 0..6 {
                x[s] += y[s];
            }
        }
        outputs.extend(out);
    }
    let os_curve = alive.iter().map(|&a| a as f64 / n as f64).collect();
    (
        CohortResult {
            os_curve,
            occupancy,
            n_patients: n,
        },
        outputs,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(h1: (f64, f64), h2: (f64, f64), hed: f64, strategy: Strategy) -> ModelSpec {
        let mut s = ModelSpec::new(
            strategy,
            TransitionTable::constant(h1.0, h1.1, 87),
            TransitionTable::constant(h2.0, h2.1, 87),
            TransitionTable::constant(0.0, hed, 87),
        );
        s.n_patients = 2000;
        s.seed = 11;
        s
    }

    #[test]
    fn g_examples() {
        let dep = DependenceParams::new(2.21, 87.0).unwrap();
        assert_eq!(g_hazard_ratio(0.0, dep), 2.21);
        assert_eq!(g_hazard_ratio(87.0, dep), 1.0);
        assert!((g_hazard_ratio(43.5, dep) - 1.605).abs() < 1e-12);
        assert!(DependenceParams::new(0.5, 3.0).is_err());
        assert!(DependenceParams::new(2.0, 0.0).is_err());
    }

    #[test]
    fn apply_hr_examples() {
        assert_eq!(apply_hr(0.1, 1.0), 0.1);
        assert!((apply_hr(0.1, 2.0) - 0.19).abs() < 1e-15);
        assert_eq!(apply_hr(0.0, 7.0), 0.0);
        assert!((apply_hr(0.05, 5.07) - 0.228_992_364_846).abs() < 1e-12);
    }

    #[test]
    fn zero_hazards_show_the_schedule() {
        let mut s = spec((0.0, 0.0), (0.0, 0.0), 0.0, Strategy::DctFirst);
        s.horizon_cycles = 10;
        s.therapy1.adverse_events.clear();
        s.therapy1.discontinuation = Discontinuation::Course {
            planned_cycles: 6,
            early_first: 0.0,
            early_last: 0.0,
        };
        let t = simulate_patient(&s, DependenceParams::independent(), &mut PatientStream::new(1, 0));
        let mut want = vec![State::L1; 6];
        want.extend([State::PostL1; 4]);
        assert_eq!(t.states, want);
        assert_eq!(t.events, vec![(5, Event::Discontinuation)]);
        assert_eq!(t.death_cycle, None);
    }

    #[test]
    fn certain_death() {
        let s = spec((0.0, 1.0), (0.0, 0.0), 0.0, Strategy::AaFirst);
        let t = simulate_patient(&s, DependenceParams::independent(), &mut PatientStream::new(1, 0));
        assert_eq!(t.states[0], State::L1);
        assert!(t.states[1..].iter().all(|&x| x == State::Death));
        assert_eq!(t.death_cycle, Some(0));
        assert!(!t.alive_at(1));
    }

    #[test]
    fn transitions_are_legal() {
        let s = spec((0.08, 0.01), (0.1, 0.03), 0.2, Strategy::DctFirst);
        let dep = DependenceParams::new(3.0, 30.0).unwrap();
        let (_, trajs) = simulate_cohort_with(&s, dep, |t| t.clone());
        for t in &trajs {
            assert_eq!(t.states[0], State::L1);
            for w in t.states.windows(2) {
                assert!(w[0].can_move_to(w[1]), "{:?} -> {:?}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn single_patient_curve_is_binary() {
        let mut s = spec((0.05, 0.05), (0.1, 0.1), 0.2, Strategy::AaFirst);
        s.n_patients = 1;
        let r = simulate_cohort(&s, DependenceParams::independent());
        assert_eq!(r.os_curve.len(), 88);
        assert!(r.os_curve.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn theta_one_ignores_omega() {
        let s = spec((0.05, 0.02), (0.1, 0.05), 0.2, Strategy::DctFirst);
        let a = simulate_cohort(&s, DependenceParams::new(1.0, 1.0).unwrap());
        let b = simulate_cohort(&s, DependenceParams::new(1.0, 999.0).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn validation() {
        let mut s = spec((0.05, 0.02), (0.1, 0.05), 0.2, Strategy::DctFirst);
        assert!(s.validate().is_ok());
        s.p_direct_ed = 1.5;
        assert!(matches!(s.validate(), Err(ModelError::Probability(..))));
        s.p_direct_ed = 0.1;
        s.horizon_cycles = 0;
        assert_eq!(s.validate(), Err(ModelError::Horizon));
    }
}

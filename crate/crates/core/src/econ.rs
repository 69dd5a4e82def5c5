//! Discounted costs and QALYs along simulated trajectories.

use serde::{Deserialize, Serialize};

use crate::microsim::{
    simulate_cohort_with, AeKind, CohortResult, DependenceParams, Drug, Event, ModelSpec,
    PatientTrajectory, State, Strategy,
};

pub const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pricing {
    Generic,
    Branded,
    OnPatent,
}

impl Pricing {
    pub const ALL: [Pricing; 3] = [Pricing::Generic, Pricing::Branded, Pricing::OnPatent];

    pub fn name(self) -> &'static str {
        match self {
            Pricing::Generic => "generic",
            Pricing::Branded => "branded",
            Pricing::OnPatent => "on_patent",
        }
    }
}

impl std::str::FromStr for Pricing {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "generic" => Ok(Pricing::Generic),
            "branded" => Ok(Pricing::Branded),
            "on_patent" | "onpatent" => Ok(Pricing::OnPatent),
            other => Err(format!("unknown pricing `{other}`")),
        }
    }
}

/// Costs are US dollars per 21-day cycle unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EconomicInputs {
    pub aa_generic: f64,
    pub aa_branded: f64,
    pub aa_on_patent: f64,
    pub dct_drug: f64,
    pub aa_non_drug: f64,
    pub dct_non_drug: f64,
    /// Office visits and labs while off therapy.
    pub off_treatment_monitoring: f64,
    pub adt: f64,
    pub extensive_disease: f64,
    /// One-time costs.
    pub neutropenia: f64,
    pub febrile_neutropenia: f64,

    pub u_l1_aa: f64,
    pub u_l1_dct: f64,
    pub u_l2_aa: f64,
    pub u_l2_dct: f64,
    pub u_extensive_disease: f64,
    /// Cycles for utility to recover linearly after docetaxel stops.
    pub dct_recovery_cycles: u32,
    pub u_l1_fatigue: f64,
    pub u_l1_febrile: f64,
    pub u_l2_fatigue: f64,
    pub u_l2_febrile: f64,

    pub discount_rate: f64,
    pub cycle_days: f64,
}

impl Default for EconomicInputs {
    fn default() -> Self {
        Self {
            aa_generic: 296.0,
            aa_branded: 2396.0,
            aa_on_patent: 6560.0,
            dct_drug: 2388.0,
            aa_non_drug: 39.0,
            dct_non_drug: 287.0,
            off_treatment_monitoring: 39.0,
            adt: 1153.0,
            extensive_disease: 5477.0,
            neutropenia: 8143.0,
            febrile_neutropenia: 19675.0,
            u_l1_aa: 0.83,
            u_l1_dct: 0.78,
            u_l2_aa: 0.725,
            u_l2_dct: 0.675,
            u_extensive_disease: 0.62,
            dct_recovery_cycles: 9,
            u_l1_fatigue: 0.78,
            u_l1_febrile: 0.47,
            u_l2_fatigue: 0.675,
            u_l2_febrile: 0.365,
            discount_rate: 0.03,
            cycle_days: 21.0,
        }
    }
}

impl EconomicInputs {
    pub fn validate(&self) -> Result<(), String> {
        let costs = [
            self.aa_generic,
            self.aa_branded,
            self.aa_on_patent,
            self.dct_drug,
            self.aa_non_drug,
            self.dct_non_drug,
            self.off_treatment_monitoring,
            self.adt,
            self.extensive_disease,
            self.neutropenia,
            self.febrile_neutropenia,
        ];
        if costs.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err("costs must be finite and non-negative".into());
        }
        let utils = [
            self.u_l1_aa,
            self.u_l1_dct,
            self.u_l2_aa,
            self.u_l2_dct,
            self.u_extensive_disease,
            self.u_l1_fatigue,
            self.u_l1_febrile,
            self.u_l2_fatigue,
            self.u_l2_febrile,
        ];
        if utils.iter().any(|u| !(0.0..=1.0).contains(u)) {
            return Err("utilities must lie in [0, 1]".into());
        }
        if !self.discount_rate.is_finite() || self.discount_rate < 0.0 {
            return Err("discount rate must be non-negative".into());
        }
        if !(self.cycle_days > 0.0) {
            return Err("cycle length must be positive".into());
        }
        Ok(())
    }

    fn aa_price(&self, pricing: Pricing) -> f64 {
        match pricing {
            Pricing::Generic => self.aa_generic,
            Pricing::Branded => self.aa_branded,
            Pricing::OnPatent => self.aa_on_patent,
        }
    }

    fn on_treatment_cost(&self, drug: Drug, pricing: Pricing) -> f64 {
        match drug {
            Drug::Aa => self.aa_price(pricing) + self.aa_non_drug,
            Drug::Dct => self.dct_drug + self.dct_non_drug,
        }
    }

    fn on_treatment_utility(&self, drug: Drug, line: u8) -> f64 {
        match (drug, line) {
            (Drug::Aa, 1) => self.u_l1_aa,
            (Drug::Dct, 1) => self.u_l1_dct,
            (Drug::Aa, _) => self.u_l2_aa,
            (Drug::Dct, _) => self.u_l2_dct,
        }
    }

    /// Utility `k` cycles after therapy on `drug` stopped in `line`.
    fn off_treatment_utility(&self, drug: Drug, line: u8, k: u32) -> f64 {
        let settled = self.on_treatment_utility(Drug::Aa, line);
        match drug {
            Drug::Aa => settled,
            Drug::Dct => {
                let start = self.on_treatment_utility(Drug::Dct, line);
                let n = self.dct_recovery_cycles.max(1);
                start + (settled - start) * k.min(n) as f64 / n as f64
            }
        }
    }

    fn ae_utility(&self, kind: AeKind, line: u8) -> Option<f64> {
        match (kind, line) {
            (AeKind::Fatigue, 1) => Some(self.u_l1_fatigue),
            (AeKind::Fatigue, _) => Some(self.u_l2_fatigue),
            (AeKind::FebrileNeutropenia, 1) => Some(self.u_l1_febrile),
            (AeKind::FebrileNeutropenia, _) => Some(self.u_l2_febrile),
            (AeKind::Neutropenia, _) => None,
        }
    }

    fn ae_cost(&self, kind: AeKind) -> f64 {
        match kind {
            AeKind::Fatigue => 0.0,
            AeKind::Neutropenia => self.neutropenia,
            AeKind::FebrileNeutropenia => self.febrile_neutropenia,
        }
    }

    pub fn cycle_years(&self) -> f64 {
        self.cycle_days / DAYS_PER_YEAR
    }
}

/// `(1 + rate)^(-cycle * cycle_days / 365.25)`.
pub fn discount_factor(cycle: usize, rate: f64, cycle_days: f64) -> f64 {
    if cycle == 0 || rate == 0.0 {
        return 1.0;
    }
    (1.0 + rate).powf(-(cycle as f64) * cycle_days / DAYS_PER_YEAR)
}

/// Discounted cost and QALYs of one trajectory.
pub fn accumulate(
    traj: &PatientTrajectory,
    strategy: Strategy,
    inputs: &EconomicInputs,
    pricing: Pricing,
) -> (f64, f64) {
    let (drug1, drug2) = strategy.drugs();
    let cycle_years = inputs.cycle_years();
    let mut cost = 0.0;
    let mut qaly = 0.0;
    let mut off_since = 0usize;
    let mut ev = 0;
    for (c, &state) in traj.states.iter().enumerate() {
        if c > 0 && state != traj.states[c - 1] {
            off_since = c;
        }
        let (mut cycle_cost, mut utility) = match state {
            State::L1 => (inputs.on_treatment_cost(drug1, pricing), inputs.on_treatment_utility(drug1, 1)),
            State::L2 => (inputs.on_treatment_cost(drug2, pricing), inputs.on_treatment_utility(drug2, 2)),
            State::PostL1 => (
                inputs.off_treatment_monitoring,
                inputs.off_treatment_utility(drug1, 1, (c - off_since) as u32),
            ),
            State::PostL2 => (
                inputs.off_treatment_monitoring,
                inputs.off_treatment_utility(drug2, 2, (c - off_since) as u32),
            ),
            State::Ed => (inputs.extensive_disease, inputs.u_extensive_disease),
            State::Death => break,
        };
        cycle_cost += inputs.adt;
        let line = if state == State::L2 { 2 } else { 1 };
        while ev < traj.events.len() && (traj.events[ev].0 as usize) <= c {
            if traj.events[ev].0 as usize == c {
                if let Event::Ae(kind) = traj.events[ev].1 {
                    cycle_cost += inputs.ae_cost(kind);
                    if let Some(u) = inputs.ae_utility(kind, line) {
                        utility = utility.min(u);
                    }
                }
            }
            ev += 1;
        }
        let df = discount_factor(c, inputs.discount_rate, inputs.cycle_days);
        cost += df * cycle_cost;
        qaly += df * utility * cycle_years;
    }
    (cost, qaly)
}

/// Mean discounted cost and QALYs for one strategy under one pricing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrategyTotals {
    pub strategy: Strategy,
    pub pricing: Pricing,
    pub cost: f64,
    pub qaly: f64,
}

/// Simulate `spec` once and cost it under every pricing in `pricings`.
pub fn evaluate_strategy(
    spec: &ModelSpec,
    dep: DependenceParams,
    inputs: &EconomicInputs,
    pricings: &[Pricing],
) -> (CohortResult, Vec<StrategyTotals>) {
    let strategy = spec.strategy;
    let (cohort, per_patient) = simulate_cohort_with(spec, dep, |t| {
        pricings
            .iter()
            .map(|&p| accumulate(t, strategy, inputs, p))
            .collect::<Vec<_>>()
    });
    let n = per_patient.len() as f64;
    let totals = pricings
        .iter()
        .enumerate()
        .map(|(i, &pricing)| {
            let mut cost = 0.0;
            let mut qaly = 0.0;
            for row in &per_patient {
                cost += row[i].0;
                qaly += row[i].1;
            }
            StrategyTotals {
                strategy,
                pricing,
                cost: cost / n,
                qaly: qaly / n,
            }
        })
        .collect();
    (cohort, totals)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IcerLabel {
    Ratio,
    Dominant,
    Dominated,
    Undefined,
}

impl IcerLabel {
    pub fn name(self) -> &'static str {
        match self {
            IcerLabel::Ratio => "ratio",
            IcerLabel::Dominant => "dominant",
            IcerLabel::Dominated => "dominated",
            IcerLabel::Undefined => "undefined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IcerOutcome {
    pub label: IcerLabel,
    pub ratio: Option<f64>,
}

pub fn icer(delta_cost: f64, delta_qaly: f64) -> IcerOutcome {
    if delta_qaly == 0.0 {
        return IcerOutcome {
            label: IcerLabel::Undefined,
            ratio: None,
        };
    }
    let ratio = delta_cost / delta_qaly;
    if delta_qaly > 0.0 && delta_cost < 0.0 {
        IcerOutcome {
            label: IcerLabel::Dominant,
            ratio: Some(ratio),
        }
    } else if delta_qaly < 0.0 && delta_cost > 0.0 {
        IcerOutcome {
            label: IcerLabel::Dominated,
            ratio: None,
        }
    } else {
        IcerOutcome {
            label: IcerLabel::Ratio,
            ratio: Some(ratio),
        }
    }
}

/// Both strategies plus the increment of AA-first over DCT-first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CeResult {
    pub dct_first: StrategyTotals,
    pub aa_first: StrategyTotals,
    pub delta_cost: f64,
    pub delta_qaly: f64,
    pub icer: IcerOutcome,
}

impl CeResult {
    pub fn new(dct_first: StrategyTotals, aa_first: StrategyTotals) -> Self {
        let delta_cost = aa_first.cost - dct_first.cost;
        let delta_qaly = aa_first.qaly - dct_first.qaly;
        Self {
            dct_first,
            aa_first,
            delta_cost,
            delta_qaly,
            icer: icer(delta_cost, delta_qaly),
        }
    }
}

/// Whole dollars.
pub fn display_cost(v: f64) -> String {
    format!("{:.0}", v)
}

/// Two decimals.
pub fn display_qaly(v: f64) -> String {
    format!("{:.2}", v)
}

//! Synthetic "desk trials" standing in for published trial curves.
//!
//! A continuous-time truth model generates patient-level data for five
//! trials, which are then digitized into KM coordinates plus risk tables:
//!
//! - two first-line arms (docetaxel, abiraterone) whose post-progression
//!   survival follows the second-line arm of the other drug and then
//!   extensive disease, with hazards inflated for early progressors by
//!   `hr(t1) = 1 + (theta - 1) * max(0, 1 - t1 / omega)`;
//! - two second-line arms (docetaxel, abiraterone) recruited without that
//!   penalty, as a trial population would be;
//! - one extensive-disease arm reporting OS only.
//!
//! Progression times are Weibull, death before progression and survival in
//! extensive disease are exponential. Follow-up is administrative (uniform
//! accrual) with a small exponential dropout. Observed times are rounded up
//! to a 0.05-month grid so digitized knots never collide.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::curve::{CurveError, DeathHandling, DigitizedCurve, TrialCurveSet};
use crate::ipd::{km_estimate, ReconstructedIpd};

pub const TIME_GRID: f64 = 0.02;
/// Half a grid step: only deaths recorded at the same instant as a PFS
/// event are matched.
pub const FIXTURE_EPSILON: f64 = TIME_GRID / 2.0;
pub const RISK_TABLE_STEP: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineTruth {
    pub prog_shape: f64,
    /// Weibull scale in months.
    pub prog_scale: f64,
    /// Monthly death rate before progression.
    pub death_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeskTruth {
    pub l1_dct: LineTruth,
    pub l1_aa: LineTruth,
    pub l2_dct: LineTruth,
    pub l2_aa: LineTruth,
    /// Monthly death rate in extensive disease.
    pub ed_rate: f64,
    pub p_direct_ed: f64,
    pub theta: f64,
    /// Months of first-line control beyond which no penalty applies.
    pub omega_months: f64,
}

impl Default for DeskTruth {
    fn default() -> Self {
        Self {
            l1_dct: LineTruth {
                prog_shape: 1.3,
                prog_scale: 42.0,
                death_rate: 0.003,
            },
            l1_aa: LineTruth {
                prog_shape: 1.3,
                prog_scale: 57.0,
                death_rate: 0.003,
            },
            l2_dct: LineTruth {
                prog_shape: 1.4,
                prog_scale: 17.0,
                death_rate: 0.008,
            },
            l2_aa: LineTruth {
                prog_shape: 1.4,
                prog_scale: 22.0,
                death_rate: 0.006,
            },
            ed_rate: std::f64::consts::LN_2 / 13.4,
            p_direct_ed: 0.10,
            theta: 2.5,
            omega_months: 24.0,
        }
    }
}

impl DeskTruth {
    fn hr(&self, t1: f64) -> f64 {
        1.0 + (self.theta - 1.0) * (1.0 - t1 / self.omega_months).max(0.0)
    }
}

/// Enrolment size and follow-up of one synthetic trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialDesign {
    pub n: usize,
    pub accrual_months: f64,
    pub analysis_month: f64,
    pub dropout_rate: f64,
}

impl TrialDesign {
    const fn new(n: usize, accrual_months: f64, analysis_month: f64) -> Self {
        Self {
            n,
            accrual_months,
            analysis_month,
            dropout_rate: 0.002,
        }
    }

    fn censor_time(&self, rng: &mut ChaCha8Rng) -> f64 {
        let admin = self.analysis_month - self.accrual_months * rng.random::<f64>();
        admin.min(exponential(rng, self.dropout_rate))
    }
}

pub const LINE1_DCT_DESIGN: TrialDesign = TrialDesign::new(397, 42.0, 90.0);
pub const LINE1_AA_DESIGN: TrialDesign = TrialDesign::new(597, 30.0, 56.0);
pub const LINE2_DCT_DESIGN: TrialDesign = TrialDesign::new(526, 24.0, 36.0);
pub const LINE2_AA_DESIGN: TrialDesign = TrialDesign::new(564, 30.0, 54.0);
pub const ED_DESIGN: TrialDesign = TrialDesign::new(600, 24.0, 42.0);

fn exponential(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// Weibull draw with every hazard multiplied by `hr`.
fn weibull(rng: &mut ChaCha8Rng, shape: f64, scale: f64, hr: f64) -> f64 {
    let e = -(1.0 - rng.random::<f64>()).ln() / hr;
    scale * e.powf(1.0 / shape)
}

/// Round up to the time grid, never returning 0.
pub fn quantize(t: f64) -> f64 {
    let steps = (t / TIME_GRID - 1e-9).ceil().max(1.0);
    (steps * TIME_GRID * 1e6).round() / 1e6
}

/// Latent (uncensored) times for one patient.
struct Latent {
    /// First progression, or infinity if death came first.
    progression: f64,
    death: f64,
}

fn second_line(rng: &mut ChaCha8Rng, line: &LineTruth, ed_rate: f64, hr: f64) -> Latent {
    let prog = weibull(rng, line.prog_shape, line.prog_scale, hr);
    let death = exponential(rng, line.death_rate * hr);
    if death < prog {
        Latent {
            progression: f64::INFINITY,
            death,
        }
    } else {
        Latent {
            progression: prog,
            death: prog + exponential(rng, ed_rate * hr),
        }
    }
}

fn first_line(rng: &mut ChaCha8Rng, truth: &DeskTruth, line1: &LineTruth, line2: &LineTruth) -> Latent {
    let prog = weibull(rng, line1.prog_shape, line1.prog_scale, 1.0);
    let death = exponential(rng, line1.death_rate);
    if death < prog {
        return Latent {
            progression: f64::INFINITY,
            death,
        };
    }
    let hr = truth.hr(prog);
    let after = if rng.random::<f64>() < truth.p_direct_ed {
        exponential(rng, truth.ed_rate * hr)
    } else {
        second_line(rng, line2, truth.ed_rate, hr).death
    };
    Latent {
        progression: prog,
        death: prog + after,
    }
}

/// Observed PFS and OS for a cohort of latent times.
fn observe(
    latent: &[Latent],
    censor: &[f64],
    handling: DeathHandling,
) -> (ReconstructedIpd, ReconstructedIpd) {
    let mut pfs = (Vec::new(), Vec::new());
    let mut os = (Vec::new(), Vec::new());
    for (l, &c) in latent.iter().zip(censor) {
        let first = l.progression.min(l.death);
        let pfs_event = if l.progression <= l.death {
            1
        } else {
            match handling {
                DeathHandling::DeathIsEvent => 1,
                DeathHandling::DeathIsCensored => 0,
            }
        };
        if first <= c {
            pfs.0.push(quantize(first));
            pfs.1.push(pfs_event);
        } else {
            pfs.0.push(quantize(c));
            pfs.1.push(0);
        }
        if l.death <= c {
            os.0.push(quantize(l.death));
            os.1.push(1);
        } else {
            os.0.push(quantize(c));
            os.1.push(0);
        }
    }
    (ReconstructedIpd::new(pfs.0, pfs.1), ReconstructedIpd::new(os.0, os.1))
}

/// KM coordinates, a risk table every `step` months and the event total.
pub fn digitize(label: &str, data: &ReconstructedIpd, step: f64) -> Result<DigitizedCurve, CurveError> {
    let km = km_estimate(data);
    let mut points: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    points.extend(km.knots());
    let end = data.max_time();
    let last = points.last().copied().unwrap();
    if end > last.0 {
        points.push((end, last.1));
    }
    let mut risk = Vec::new();
    let mut k = 0;
    while k as f64 * step <= end {
        let t = k as f64 * step;
        let n = data.times.iter().filter(|&&x| x >= t).count();
        risk.push((t, n as f64));
        k += 1;
    }
    DigitizedCurve::new(label, &points, &risk, Some(data.events() as u32))
}

#[derive(Debug, Clone)]
pub struct DeskTrials {
    pub line1_dct: TrialCurveSet,
    pub line1_aa: TrialCurveSet,
    pub line2_dct: TrialCurveSet,
    pub line2_aa: TrialCurveSet,
    pub ed_os: DigitizedCurve,
}

fn trial_set(
    label: &str,
    latent: Vec<Latent>,
    design: &TrialDesign,
    handling: DeathHandling,
    rng: &mut ChaCha8Rng,
) -> Result<TrialCurveSet, CurveError> {
    let censor: Vec<f64> = (0..latent.len()).map(|_| design.censor_time(rng)).collect();
    let (pfs, os) = observe(&latent, &censor, handling);
    TrialCurveSet::new(
        digitize(&format!("{label} PFS"), &pfs, RISK_TABLE_STEP)?,
        digitize(&format!("{label} OS"), &os, RISK_TABLE_STEP)?,
        handling,
    )
}

/// Generate all five trials from one seed.
pub fn desk_trials(truth: &DeskTruth, seed: u64) -> Result<DeskTrials, CurveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = *truth;
    let cohort = |rng: &mut ChaCha8Rng, n: usize, f: &dyn Fn(&mut ChaCha8Rng) -> Latent| {
        (0..n).map(|_| f(rng)).collect::<Vec<_>>()
    };

    let latent = cohort(&mut rng, LINE1_DCT_DESIGN.n, &|r| first_line(r, &t, &t.l1_dct, &t.l2_aa));
    let line1_dct = trial_set("line 1 DCT", latent, &LINE1_DCT_DESIGN, DeathHandling::DeathIsCensored, &mut rng)?;

    let latent = cohort(&mut rng, LINE1_AA_DESIGN.n, &|r| first_line(r, &t, &t.l1_aa, &t.l2_dct));
    let line1_aa = trial_set("line 1 AA", latent, &LINE1_AA_DESIGN, DeathHandling::DeathIsEvent, &mut rng)?;

    let latent = cohort(&mut rng, LINE2_DCT_DESIGN.n, &|r| second_line(r, &t.l2_dct, t.ed_rate, 1.0));
    let line2_dct = trial_set("line 2 DCT", latent, &LINE2_DCT_DESIGN, DeathHandling::DeathIsEvent, &mut rng)?;

    let latent = cohort(&mut rng, LINE2_AA_DESIGN.n, &|r| second_line(r, &t.l2_aa, t.ed_rate, 1.0));
    let line2_aa = trial_set("line 2 AA", latent, &LINE2_AA_DESIGN, DeathHandling::DeathIsEvent, &mut rng)?;

    let latent = cohort(&mut rng, ED_DESIGN.n, &|r| Latent {
        progression: f64::INFINITY,
        death: exponential(r, t.ed_rate),
    });
    let censor: Vec<f64> = (0..latent.len()).map(|_| ED_DESIGN.censor_time(&mut rng)).collect();
    let (_, os) = observe(&latent, &censor, DeathHandling::DeathIsEvent);
    let ed_os = digitize("extensive disease OS", &os, RISK_TABLE_STEP)?;

    Ok(DeskTrials {
        line1_dct,
        line1_aa,
        line2_dct,
        line2_aa,
        ed_os,
    })
}

/// Seed used for the committed fixture set.
pub const FIXTURE_SEED: u64 = 20_210_601;

/// Write the desk trials and a matching run configuration into `dir`.
pub fn write_fixtures(dir: &Path, seed: u64, n_patients: usize) -> std::io::Result<()> {
    write_fixtures_from(&DeskTruth::default(), dir, seed, n_patients)
}

pub fn write_fixtures_from(truth: &DeskTruth, dir: &Path, seed: u64, n_patients: usize) -> std::io::Result<()> {
    let trials = desk_trials(truth, seed)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    std::fs::create_dir_all(dir)?;
    let write = |name: &str, body: String| std::fs::write(dir.join(name), body + "\n");
    for (key, set) in [
        ("line1_dct", &trials.line1_dct),
        ("line1_aa", &trials.line1_aa),
        ("line2_dct", &trials.line2_dct),
        ("line2_aa", &trials.line2_aa),
    ] {
        write(&format!("{key}_pfs.json"), set.pfs.to_json())?;
        write(&format!("{key}_os.json"), set.os.to_json())?;
    }
    write("ed_os.json", trials.ed_os.to_json())?;

    let trial = |key: &str, handling: DeathHandling| {
        serde_json::json!({
            "pfs": format!("{key}_pfs.json"),
            "os": format!("{key}_os.json"),
            "death_handling": handling,
        })
    };
    let config = serde_json::json!({
        "seed": seed,
        "epsilon": FIXTURE_EPSILON,
        "trials": {
            "line1_dct": trial("line1_dct", trials.line1_dct.pfs_death_handling),
            "line1_aa": trial("line1_aa", trials.line1_aa.pfs_death_handling),
            "line2_dct": trial("line2_dct", trials.line2_dct.pfs_death_handling),
            "line2_aa": trial("line2_aa", trials.line2_aa.pfs_death_handling),
            "extensive_disease": { "os": "ed_os.json" },
        },
        "model": {
            "horizon_cycles": 87,
            "n_patients": n_patients,
            "p_direct_ed": 0.1,
        },
    });
    write("config.json", serde_json::to_string_pretty(&config).expect("config serializes"))
}

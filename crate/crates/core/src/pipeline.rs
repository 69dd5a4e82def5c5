//! End-to-end workflow: curves to cost-effectiveness tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::calibrate::{calibrate, target_on_cycles, CalibrationProblem, CalibrationResult, TracePoint};
use crate::cif::{discrete_hazards, estimate_cif, CifPair, TransitionTable, CYCLE_DAYS};
use crate::classify::{classify_events, CompetingRisksData};
use crate::config::{LoadedConfig, RunConfig, TrialFiles};
use crate::curve::{load_curve_file, CurveError, DigitizedCurve};
use crate::econ::{display_cost, display_qaly, evaluate_strategy, CeResult, Pricing, StrategyTotals};
use crate::io;
use crate::ipd::{km_estimate, reconstruct, ReconstructedIpd};
use crate::microsim::{CohortResult, DependenceParams, Drug, ModelSpec, Strategy};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A failure in a named pipeline stage.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("stage `{stage}` failed: {cause}")]
pub struct PipelineError {
    pub stage: String,
    pub cause: String,
}

impl PipelineError {
    pub fn new(stage: &str, cause: impl std::fmt::Display) -> Self {
        Self {
            stage: stage.to_string(),
            cause: cause.to_string(),
        }
    }
}

fn at<T, E: std::fmt::Display>(stage: &str, r: Result<T, E>) -> Result<T, PipelineError> {
    r.map_err(|e| PipelineError::new(stage, e))
}

/// The four trial arms, keyed by line and drug.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TrialKey {
    Line1Dct,
    Line1Aa,
    Line2Dct,
    Line2Aa,
}

impl TrialKey {
    pub const ALL: [TrialKey; 4] = [TrialKey::Line1Dct, TrialKey::Line1Aa, TrialKey::Line2Dct, TrialKey::Line2Aa];

    pub fn name(self) -> &'static str {
        match self {
            TrialKey::Line1Dct => "line1_dct",
            TrialKey::Line1Aa => "line1_aa",
            TrialKey::Line2Dct => "line2_dct",
            TrialKey::Line2Aa => "line2_aa",
        }
    }

    pub fn of(line: u8, drug: Drug) -> Self {
        match (line, drug) {
            (1, Drug::Dct) => TrialKey::Line1Dct,
            (1, Drug::Aa) => TrialKey::Line1Aa,
            (_, Drug::Dct) => TrialKey::Line2Dct,
            (_, Drug::Aa) => TrialKey::Line2Aa,
        }
    }

    fn files(self, cfg: &RunConfig) -> &TrialFiles {
        match self {
            TrialKey::Line1Dct => &cfg.trials.line1_dct,
            TrialKey::Line1Aa => &cfg.trials.line1_aa,
            TrialKey::Line2Dct => &cfg.trials.line2_dct,
            TrialKey::Line2Aa => &cfg.trials.line2_aa,
        }
    }
}

/// Everything derived from one trial arm.
#[derive(Debug, Clone)]
pub struct ArmData {
    pub pfs_ipd: ReconstructedIpd,
    pub os_ipd: ReconstructedIpd,
    pub classified: CompetingRisksData,
    pub cif: CifPair,
    pub table: TransitionTable,
}

/// Model inputs estimated from the trial curves.
#[derive(Debug, Clone)]
pub struct Estimates {
    pub arms: BTreeMap<TrialKey, ArmData>,
    pub ed_ipd: ReconstructedIpd,
    pub ed_cif: CifPair,
    pub ed_table: TransitionTable,
}

fn load(stage: &str, cfg: &LoadedConfig, p: &Path) -> Result<DigitizedCurve, PipelineError> {
    let path = cfg.resolve(p);
    load_curve_file(&path).map_err(|e| match e {
        CurveError::Io { .. } => PipelineError::new(stage, e),
        _ => PipelineError::new(stage, format!("{}: {e}", path.display())),
    })
}

fn reconstruct_named(stage: &str, curve: &DigitizedCurve) -> Result<ReconstructedIpd, PipelineError> {
    reconstruct(curve).map_err(|e| PipelineError::new(stage, format!("{}: {e}", curve.label)))
}

/// Reconstruct every curve in the config.
pub fn reconstruct_all(
    cfg: &LoadedConfig,
) -> Result<(BTreeMap<TrialKey, (ReconstructedIpd, ReconstructedIpd)>, ReconstructedIpd), PipelineError> {
    let mut out = BTreeMap::new();
    for key in TrialKey::ALL {
        let files = key.files(&cfg.config);
        let pfs = load("reconstruct", cfg, &files.pfs)?;
        let os = load("reconstruct", cfg, &files.os)?;
        at(
            "reconstruct",
            crate::curve::TrialCurveSet::new(pfs.clone(), os.clone(), files.death_handling),
        )?;
        out.insert(key, (reconstruct_named("reconstruct", &pfs)?, reconstruct_named("reconstruct", &os)?));
    }
    let ed = load("reconstruct", cfg, &cfg.config.trials.extensive_disease.os)?;
    Ok((out, reconstruct_named("reconstruct", &ed)?))
}

/// Classification, CIFs and per-cycle hazards for every arm.
pub fn estimate(
    cfg: &RunConfig,
    ipd: BTreeMap<TrialKey, (ReconstructedIpd, ReconstructedIpd)>,
    ed_ipd: ReconstructedIpd,
) -> Result<Estimates, PipelineError> {
    let horizon = cfg.model.horizon_cycles;
    let mut arms = BTreeMap::new();
    for (key, (pfs_ipd, os_ipd)) in ipd {
        let handling = key.files(cfg).death_handling;
        let classified = at("classify", classify_events(&pfs_ipd, &os_ipd, cfg.epsilon, handling))?;
        let cif = at("cif", estimate_cif(&classified))?;
        let table = at("cif", discrete_hazards(&cif, CYCLE_DAYS, horizon))?;
        arms.insert(
            key,
            ArmData {
                pfs_ipd,
                os_ipd,
                classified,
                cif,
                table,
            },
        );
    }
    let ed_cif = at("cif", estimate_cif(&CompetingRisksData::deaths_only(&ed_ipd)))?;
    let ed_table = at("cif", discrete_hazards(&ed_cif, CYCLE_DAYS, horizon))?;
    Ok(Estimates {
        arms,
        ed_ipd,
        ed_cif,
        ed_table,
    })
}

pub fn model_spec(cfg: &RunConfig, est: &Estimates, strategy: Strategy, seed: u64) -> ModelSpec {
    let (d1, d2) = strategy.drugs();
    let mut spec = ModelSpec::new(
        strategy,
        est.arms[&TrialKey::of(1, d1)].table.clone(),
        est.arms[&TrialKey::of(2, d2)].table.clone(),
        est.ed_table.clone(),
    );
    spec.p_direct_ed = cfg.model.p_direct_ed;
    spec.horizon_cycles = cfg.model.horizon_cycles;
    spec.n_patients = cfg.model.n_patients;
    spec.seed = seed;
    spec
}

/// Target OS on the cycle grid and its effective sample size.
pub fn target_for(cfg: &RunConfig, est: &Estimates, strategy: Strategy) -> (Vec<f64>, f64) {
    let os = &est.arms[&TrialKey::of(1, strategy.drugs().0)].os_ipd;
    let target = target_on_cycles(&km_estimate(os), os.max_time(), cfg.model.horizon_cycles);
    (target, os.n_subjects as f64)
}

pub fn calibration_problem(
    cfg: &RunConfig,
    spec: ModelSpec,
    target: Vec<f64>,
    n_eff: f64,
) -> CalibrationProblem {
    let mut problem = CalibrationProblem::new(spec, target, n_eff);
    problem.bounds = cfg.bounds();
    problem.starts = cfg
        .calibration
        .starts
        .clone()
        .unwrap_or_else(|| problem.bounds.default_starts());
    problem.settings = cfg.calibration.optimizer;
    problem
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub strategy: Strategy,
    pub theta: f64,
    pub omega: f64,
    pub sse: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub p: f64,
    pub converged: bool,
    pub evaluations: usize,
    pub n_eff: f64,
    pub trace: Vec<TracePoint>,
}

impl CalibrationReport {
    pub fn new(strategy: Strategy, n_eff: f64, r: &CalibrationResult) -> Self {
        Self {
            strategy,
            theta: r.theta,
            omega: r.omega,
            sse: r.sse,
            d: r.ks.d,
            p: r.ks.p,
            converged: r.converged,
            evaluations: r.evaluations,
            n_eff,
            trace: r.trace.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

/// One row group of a cost-effectiveness table.
#[derive(Debug, Clone, Copy)]
pub struct CeRow {
    pub label: &'static str,
    pub dct_params: DependenceParams,
    pub aa_params: DependenceParams,
    pub result: CeResult,
}

pub const CE_HEADER: [&str; 14] = [
    "strategy",
    "cost",
    "qaly",
    "dcost",
    "dqaly",
    "icer",
    "icer_label",
    "theta",
    "omega",
    "cost_exact",
    "qaly_exact",
    "dcost_exact",
    "dqaly_exact",
    "icer_exact",
];

fn ce_lines(row: &CeRow) -> [Vec<String>; 2] {
    let r = &row.result;
    let strat = |t: &StrategyTotals, dep: DependenceParams| {
        vec![
            t.strategy.name().to_string(),
            display_cost(t.cost),
            display_qaly(t.qaly),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            dep.theta.to_string(),
            dep.omega.to_string(),
            t.cost.to_string(),
            t.qaly.to_string(),
            String::new(),
            String::new(),
            String::new(),
        ]
    };
    let first = strat(&r.dct_first, row.dct_params);
    let mut second = strat(&r.aa_first, row.aa_params);
    let (icer_display, icer_exact) = match r.icer.ratio {
        Some(v) => (display_cost(v), v.to_string()),
        None => ("NA".to_string(), "NA".to_string()),
    };
    second[3] = display_cost(r.delta_cost);
    second[4] = display_qaly(r.delta_qaly);
    second[5] = icer_display;
    second[6] = r.icer.label.name().to_string();
    second[11] = r.delta_cost.to_string();
    second[12] = r.delta_qaly.to_string();
    second[13] = icer_exact;
    [first, second]
}

/// Write a CE table; `key` names the first column (scenario or pricing).
pub fn write_ce_table(path: &Path, key: &str, rows: &[CeRow]) -> Result<(), io::IoError> {
    let mut header = vec![key];
    header.extend(CE_HEADER);
    io::write_rows(
        path,
        &header,
        rows.iter().flat_map(|row| {
            ce_lines(row).into_iter().map(move |mut line| {
                line.insert(0, row.label.to_string());
                line
            })
        }),
    )
}

/// Memoized cohort runs costed under every pricing.
pub struct CeRunner<'a> {
    cfg: &'a RunConfig,
    est: &'a Estimates,
    seed: u64,
    cache: Vec<((Strategy, u64, u64), (CohortResult, Vec<StrategyTotals>))>,
}

impl<'a> CeRunner<'a> {
    pub fn new(cfg: &'a RunConfig, est: &'a Estimates, seed: u64) -> Self {
        Self {
            cfg,
            est,
            seed,
            cache: Vec::new(),
        }
    }

    pub fn totals(&mut self, strategy: Strategy, dep: DependenceParams, pricing: Pricing) -> StrategyTotals {
        let key = (strategy, dep.theta.to_bits(), dep.omega.to_bits());
        let idx = match self.cache.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                let spec = model_spec(self.cfg, self.est, strategy, self.seed);
                let run = evaluate_strategy(&spec, dep, &self.cfg.economics, &Pricing::ALL);
                self.cache.push((key, run));
                self.cache.len() - 1
            }
        };
        let totals = &self.cache[idx].1 .1;
        *totals.iter().find(|t| t.pricing == pricing).expect("all pricings evaluated")
    }

    pub fn cohort(&mut self, strategy: Strategy, dep: DependenceParams) -> &CohortResult {
        self.totals(strategy, dep, Pricing::Generic);
        let key = (strategy, dep.theta.to_bits(), dep.omega.to_bits());
        &self.cache.iter().find(|(k, _)| *k == key).unwrap().1 .0
    }

    pub fn row(&mut self, label: &'static str, dct: DependenceParams, aa: DependenceParams, pricing: Pricing) -> CeRow {
        let d = self.totals(Strategy::DctFirst, dct, pricing);
        let a = self.totals(Strategy::AaFirst, aa, pricing);
        CeRow {
            label,
            dct_params: dct,
            aa_params: aa,
            result: CeResult::new(d, a),
        }
    }
}

/// Calibration scenarios: no correction, each strategy's optimum applied to
/// both, and each strategy with its own optimum.
pub fn scenario_rows(
    runner: &mut CeRunner<'_>,
    dct_opt: DependenceParams,
    aa_opt: DependenceParams,
    pricing: Pricing,
) -> Vec<CeRow> {
    let none = DependenceParams::independent();
    vec![
        runner.row("no_correction", none, none, pricing),
        runner.row("dct_optimal", dct_opt, dct_opt, pricing),
        runner.row("aa_optimal", aa_opt, aa_opt, pricing),
        runner.row("own_optimal", dct_opt, aa_opt, pricing),
    ]
}

/// AA price variation at the base-case parameters.
pub fn pricing_rows(runner: &mut CeRunner<'_>, base: DependenceParams) -> Vec<CeRow> {
    Pricing::ALL
        .iter()
        .map(|&p| runner.row(p.name(), base, base, p))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub stage: String,
    pub cause: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub n_patients: usize,
    pub status: String,
    pub failure: Option<Failure>,
    pub stages: Vec<StageRecord>,
    pub artifacts: Vec<Artifact>,
}

struct Run<'a> {
    out: &'a Path,
    written: Vec<PathBuf>,
    stages: Vec<StageRecord>,
}

impl Run<'_> {
    fn file(&mut self, rel: &str) -> PathBuf {
        self.written.push(PathBuf::from(rel));
        self.out.join(rel)
    }

    fn done(&mut self, stage: &str) {
        self.stages.push(StageRecord {
            name: stage.to_string(),
            status: "complete".to_string(),
        });
    }
}

pub const STAGES: [&str; 7] = ["reconstruct", "classify", "cif", "calibrate", "simulate", "ce", "manifest"];

/// Run every stage, writing artifacts and `manifest.json` under `out`.
///
/// The manifest is written even when a stage fails; it then names the stage
/// and cause and lists only what was produced.
pub fn run_all(cfg: &LoadedConfig, out: &Path, seed: u64) -> Result<Manifest, PipelineError> {
    at("setup", std::fs::create_dir_all(out))?;
    let mut run = Run {
        out,
        written: Vec::new(),
        stages: Vec::new(),
    };
    let result = run_stages(cfg, &mut run, seed);
    let failure = result.as_ref().err().map(|e| Failure {
        stage: e.stage.clone(),
        cause: e.cause.clone(),
    });
    if let Some(f) = &failure {
        run.stages.push(StageRecord {
            name: f.stage.clone(),
            status: "failed".to_string(),
        });
    }
    let mut artifacts = Vec::new();
    run.written.sort();
    run.written.dedup();
    for rel in &run.written {
        let Ok(bytes) = std::fs::read(out.join(rel)) else {
            continue;
        };
        artifacts.push(Artifact {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = Manifest {
        tool: "linesim".to_string(),
        version: VERSION.to_string(),
        seed,
        config_sha256: cfg.sha256.clone(),
        n_patients: cfg.config.model.n_patients,
        status: if failure.is_some() { "incomplete" } else { "complete" }.to_string(),
        failure,
        stages: run.stages.clone(),
        artifacts,
    };
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    at("manifest", std::fs::write(out.join("manifest.json"), body))?;
    result.map(|_| manifest)
}

fn run_stages(cfg: &LoadedConfig, run: &mut Run<'_>, seed: u64) -> Result<(), PipelineError> {
    let c = &cfg.config;

    let (ipd, ed_ipd) = reconstruct_all(cfg)?;
    for (key, (pfs, os)) in &ipd {
        at("reconstruct", io::write_ipd(&run.file(&format!("ipd/{}_pfs.csv", key.name())), pfs))?;
        at("reconstruct", io::write_ipd(&run.file(&format!("ipd/{}_os.csv", key.name())), os))?;
    }
    at("reconstruct", io::write_ipd(&run.file("ipd/ed_os.csv"), &ed_ipd))?;
    run.done("reconstruct");

    let est = estimate(c, ipd, ed_ipd)?;
    for (key, arm) in &est.arms {
        at("classify", io::write_classified(&run.file(&format!("classified/{}.csv", key.name())), &arm.classified))?;
    }
    run.done("classify");
    for (key, arm) in &est.arms {
        at("cif", io::write_cif(&run.file(&format!("cif/{}.csv", key.name())), &arm.cif))?;
        at("cif", io::write_transitions(&run.file(&format!("transitions/{}.csv", key.name())), &arm.table))?;
    }
    at("cif", io::write_cif(&run.file("cif/ed.csv"), &est.ed_cif))?;
    at("cif", io::write_transitions(&run.file("transitions/ed.csv"), &est.ed_table))?;
    run.done("cif");

    let mut optimum = BTreeMap::new();
    let mut targets = BTreeMap::new();
    for strategy in Strategy::ALL {
        let (target, n_eff) = target_for(c, &est, strategy);
        let problem = calibration_problem(c, model_spec(c, &est, strategy, seed), target.clone(), n_eff);
        let result = at("calibrate", calibrate(&problem))?;
        let report = CalibrationReport::new(strategy, n_eff, &result);
        let path = run.file(&format!("calibration/{}.json", strategy.name()));
        at("calibrate", io::write_text(&path, &report.to_json()))?;
        optimum.insert(strategy.name(), result.params());
        targets.insert(strategy.name(), target);
    }
    run.done("calibrate");

    let dct_opt = optimum["dct_first"];
    let aa_opt = optimum["aa_first"];
    let mut runner = CeRunner::new(c, &est, seed);
    for strategy in Strategy::ALL {
        let target = &targets[strategy.name()];
        let curves: Vec<Vec<f64>> = [DependenceParams::independent(), dct_opt, aa_opt]
            .iter()
            .map(|&dep| runner.cohort(strategy, dep).os_curve.clone())
            .collect();
        let rows = (0..=c.model.horizon_cycles).map(|cyc| {
            vec![
                cyc.to_string(),
                crate::cif::cycle_start_months(cyc, CYCLE_DAYS).to_string(),
                target.get(cyc).map(|v| v.to_string()).unwrap_or_default(),
                curves[0][cyc].to_string(),
                curves[1][cyc].to_string(),
                curves[2][cyc].to_string(),
            ]
        });
        let path = run.file(&format!("curves/os_comparison_{}.csv", strategy.name()));
        at(
            "simulate",
            io::write_rows(&path, &["cycle", "month", "target", "uncalibrated", "dct_params", "aa_params"], rows),
        )?;
    }
    run.done("simulate");

    let table_a = scenario_rows(&mut runner, dct_opt, aa_opt, c.scenario_pricing);
    at("ce", write_ce_table(&run.file("ce/table3a.csv"), "scenario", &table_a))?;
    let table_b = pricing_rows(&mut runner, dct_opt);
    at("ce", write_ce_table(&run.file("ce/table3b.csv"), "pricing", &table_b))?;
    run.done("ce");
    Ok(())
}

/// Convenience used by the CLI and tests: the CE row for one pricing.
pub fn ce_at(
    cfg: &RunConfig,
    est: &Estimates,
    seed: u64,
    dep: DependenceParams,
    pricing: Pricing,
) -> CeRow {
    CeRunner::new(cfg, est, seed).row("base", dep, dep, pricing)
}

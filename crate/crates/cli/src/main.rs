use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use linesim::calibrate::calibrate;
use linesim::cif::{discrete_hazards, estimate_cif, CYCLE_DAYS};
use linesim::classify::{classify_events, CompetingRisksData, DEFAULT_EPSILON};
use linesim::config::{load_config, LoadedConfig};
use linesim::curve::{load_curve_file, DeathHandling};
use linesim::econ::Pricing;
use linesim::io;
use linesim::ipd::reconstruct;
use linesim::microsim::{simulate_cohort, DependenceParams, Strategy};
use linesim::pipeline::{self, CalibrationReport};

#[derive(Parser)]
#[command(name = "linesim", version, about = "Two-line treatment sequence microsimulation")]
struct Cli {
    /// Worker threads for cohort simulation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<(LoadedConfig, u64)> {
        let cfg = load_config(&self.config)?;
        let seed = self.seed.unwrap_or(cfg.config.seed);
        Ok((cfg, seed))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct patient-level data from a digitized curve.
    Reconstruct {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split PFS events into progression and death.
    Classify {
        #[arg(long)]
        pfs: PathBuf,
        #[arg(long)]
        os: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value = "death_is_event")]
        death_handling: DeathHandling,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cumulative incidence and per-cycle hazards.
    Cif {
        /// `time,code` from classify, or `time,indicator` for death-only data.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write per-cycle hazards here.
        #[arg(long)]
        transitions: Option<PathBuf>,
        #[arg(long, default_value_t = 87)]
        horizon: usize,
    },
    /// Simulate one strategy at fixed dependence parameters.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "dct_first")]
        strategy: Strategy,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit theta and omega to the first-line OS curve.
    Calibrate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "dct_first")]
        strategy: Strategy,
        /// `cycle,survival` target; defaults to the strategy's first-line OS.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cost-effectiveness of both strategies at one AA price.
    Ce {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "generic")]
        pricing: Pricing,
        /// Dependence parameters; calibrated to the DCT-first arm if omitted.
        #[arg(long, requires = "omega")]
        theta: Option<f64>,
        #[arg(long, requires = "theta")]
        omega: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Every stage, writing all artifacts and a manifest.
    RunAll {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory; defaults to the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic trial curves and a matching config.
    MakeFixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = linesim::fixtures::FIXTURE_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        n_patients: usize,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    if let Err(e) = pool.install(|| run(cli.command)) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn estimates(cfg: &LoadedConfig) -> Result<pipeline::Estimates> {
    let (ipd, ed) = pipeline::reconstruct_all(cfg)?;
    Ok(pipeline::estimate(&cfg.config, ipd, ed)?)
}

fn read_competing(path: &Path) -> Result<CompetingRisksData> {
    match io::read_classified(path) {
        Ok(d) => Ok(d),
        Err(io::IoError::Header { .. }) => Ok(CompetingRisksData::deaths_only(&io::read_ipd(path)?)),
        Err(e) => Err(e.into()),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Reconstruct { curve, out } => {
            let c = load_curve_file(&curve).with_context(|| format!("loading {}", curve.display()))?;
            let ipd = reconstruct(&c).with_context(|| format!("reconstructing {}", curve.display()))?;
            io::write_ipd(&out, &ipd)?;
        }
        Command::Classify {
            pfs,
            os,
            epsilon,
            death_handling,
            out,
        } => {
            let data = classify_events(&io::read_ipd(&pfs)?, &io::read_ipd(&os)?, epsilon, death_handling)?;
            io::write_classified(&out, &data)?;
        }
        Command::Cif {
            data,
            out,
            transitions,
            horizon,
        } => {
            let cif = estimate_cif(&read_competing(&data)?)?;
            io::write_cif(&out, &cif)?;
            if let Some(path) = transitions {
                io::write_transitions(&path, &discrete_hazards(&cif, CYCLE_DAYS, horizon)?)?;
            }
        }
        Command::Simulate {
            cfg,
            strategy,
            theta,
            omega,
            out,
        } => {
            let (cfg, seed) = cfg.load()?;
            let est = estimates(&cfg)?;
            let spec = pipeline::model_spec(&cfg.config, &est, strategy, seed);
            let cohort = simulate_cohort(&spec, DependenceParams::new(theta, omega)?);
            io::write_survival(&out.join("os_curve.csv"), &cohort.os_curve)?;
            io::write_occupancy(&out.join("occupancy.csv"), &cohort)?;
        }
        Command::Calibrate {
            cfg,
            strategy,
            target,
            out,
        } => {
            let (cfg, seed) = cfg.load()?;
            let est = estimates(&cfg)?;
            let (default_target, n_eff) = pipeline::target_for(&cfg.config, &est, strategy);
            let target = match target {
                Some(p) => io::read_survival(&p)?,
                None => default_target,
            };
            let spec = pipeline::model_spec(&cfg.config, &est, strategy, seed);
            let problem = pipeline::calibration_problem(&cfg.config, spec, target, n_eff);
            let result = calibrate(&problem)?;
            io::write_text(&out, &CalibrationReport::new(strategy, n_eff, &result).to_json())?;
        }
        Command::Ce {
            cfg,
            pricing,
            theta,
            omega,
            out,
        } => {
            let (cfg, seed) = cfg.load()?;
            let est = estimates(&cfg)?;
            let dep = match (theta, omega) {
                (Some(t), Some(o)) => DependenceParams::new(t, o)?,
                _ => {
                    let (target, n_eff) = pipeline::target_for(&cfg.config, &est, Strategy::DctFirst);
                    let spec = pipeline::model_spec(&cfg.config, &est, Strategy::DctFirst, seed);
                    calibrate(&pipeline::calibration_problem(&cfg.config, spec, target, n_eff))?.params()
                }
            };
            let row = pipeline::ce_at(&cfg.config, &est, seed, dep, pricing);
            pipeline::write_ce_table(&out, "pricing", &[pipeline::CeRow {
                label: pricing.name(),
                ..row
            }])?;
        }
        Command::RunAll { cfg, out } => {
            let (cfg, seed) = cfg.load()?;
            let out = match out.or_else(|| cfg.config.output_dir.as_deref().map(|p| cfg.resolve(p))) {
                Some(o) => o,
                None => bail!("no output directory: pass --out or set output_dir in the config"),
            };
            pipeline::run_all(&cfg, &out, seed)?;
        }
        Command::MakeFixtures { out, seed, n_patients } => {
            linesim::fixtures::write_fixtures(&out, seed, n_patients)
                .with_context(|| format!("writing fixtures to {}", out.display()))?;
        }
    }
    Ok(())
}

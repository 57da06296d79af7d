//! Command-line front end: `check | bound | simulate | verify | adjustment | oracle`.
//!
//! Exit codes: 0 success, 1 condition or assertion failure, 2 usage or
//! config error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::certificate::{BoundCertificate, RecheckReport};
use crate::config::{ConfigError, ExperimentConfig};
use crate::lundberg::{adjustment_coefficient, ruin_bound_with, AdjustmentCoefficient, BoundOptions, LundbergError};
use crate::oracle::{exact_sup_prob, LatticeModel, OracleError};
use crate::schedule::ConditionReport;
use crate::sim::{estimate_ruin_with, to_csv, RuinEstimate, RuinFloor, SimSettings};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "ruinbound", version, about = "Ruin probabilities and explicit exponential ruin bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the exponential-moment, truncated-moment and drift conditions.
    Check(CommonArgs),
    /// Build the bound certificate.
    Bound(CommonArgs),
    /// Monte Carlo ruin estimates over the x grid (CSV).
    Simulate(CommonArgs),
    /// Compare Monte Carlo upper confidence limits against the bound.
    Verify(VerifyArgs),
    /// Adjustment coefficient of a single step law.
    Adjustment(CommonArgs),
    /// Exact finite-horizon probabilities for lattice models (CSV).
    Oracle(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub delta_grid: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Verify this certificate instead of building one.
    #[arg(long)]
    pub certificate: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lundberg(#[from] LundbergError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CommandError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Usage(_) | Self::Write { .. } => EXIT_USAGE,
            Self::Oracle(OracleError::NotLattice { .. })
            | Self::Oracle(OracleError::NotDiscrete { .. })
            | Self::Oracle(OracleError::BadPitch(_)) => EXIT_USAGE,
            Self::Lundberg(_) | Self::Oracle(_) => EXIT_FAIL,
        }
    }
}

pub fn bound_options(cfg: &ExperimentConfig) -> BoundOptions {
    BoundOptions {
        delta: cfg.delta_override,
        grid_search: cfg.delta_grid_search,
        surrogate_scale: cfg.surrogate_scale,
    }
}

pub fn sim_settings(cfg: &ExperimentConfig) -> Result<SimSettings, CommandError> {
    let floor = match cfg.abandon_epsilon {
        Some(eps) => Some(RuinFloor::certified(&cfg.model, eps)?),
        None => None,
    };
    Ok(SimSettings {
        horizon_n: cfg.horizon_n,
        trials: cfg.trials,
        seed: cfg.seed,
        workers: cfg.workers,
        floor,
    })
}

fn require_grid(cfg: &ExperimentConfig) -> Result<(), CommandError> {
    if cfg.x_grid.is_empty() {
        Err(CommandError::Usage("x_grid must be nonempty".into()))
    } else {
        Ok(())
    }
}

pub fn cmd_check(cfg: &ExperimentConfig) -> ConditionReport {
    cfg.model.check_conditions()
}

pub fn cmd_bound(cfg: &ExperimentConfig) -> Result<BoundCertificate, CommandError> {
    let bound = ruin_bound_with(&cfg.model, &bound_options(cfg))?;
    Ok(BoundCertificate::new(cfg.model.clone(), bound))
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Vec<RuinEstimate>, CommandError> {
    require_grid(cfg)?;
    Ok(estimate_ruin_with(&cfg.model, &cfg.x_grid, &sim_settings(cfg)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRow {
    pub x: f64,
    pub psi_hat: f64,
    pub ci_high: f64,
    /// `min{1, c3 exp(-c4 x)}`.
    pub lemma_bound: f64,
    /// `lemma_bound - (ci_high + floor_epsilon)`.
    pub lemma_margin: f64,
    pub lemma_status: CheckStatus,
    /// `exp(-c1 x)` when `x >= c2`.
    pub theorem_bound: Option<f64>,
    pub theorem_margin: Option<f64>,
    pub theorem_status: CheckStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub certificate_valid: bool,
    pub certificate: BoundCertificate,
    pub recheck: RecheckReport,
    pub rows: Vec<VerifyRow>,
    pub trials: u64,
    pub horizon_n: usize,
    pub seed: u64,
    pub workers: usize,
    pub floor_epsilon: Option<f64>,
}

/// Checks `ci_high` against both bound forms at every grid point.
pub fn verify_against(cert: BoundCertificate, estimates: &[RuinEstimate], settings: &SimSettings) -> VerifyReport {
    let recheck = cert.recheck();
    let certificate_valid = recheck.passed();
    let eps = settings.floor.map_or(0.0, |f| f.epsilon);
    let rows: Vec<VerifyRow> = estimates
        .iter()
        .map(|e| {
            let upper = e.ci_high + eps;
            let lemma_bound = cert.bound.lemma.bound_at(e.x);
            let lemma_margin = lemma_bound - upper;
            let theorem_bound = cert.bound.bound_at(e.x);
            let theorem_margin = theorem_bound.map(|b| b - upper);
            let status = |ok: bool| if ok { CheckStatus::Pass } else { CheckStatus::Fail };
            VerifyRow {
                x: e.x,
                psi_hat: e.psi_hat,
                ci_high: e.ci_high,
                lemma_bound,
                lemma_margin,
                lemma_status: status(certificate_valid && lemma_margin >= 0.0),
                theorem_bound,
                theorem_margin,
                theorem_status: match theorem_margin {
                    None => CheckStatus::NotApplicable,
                    Some(m) => status(certificate_valid && m >= 0.0),
                },
            }
        })
        .collect();
    let passed = certificate_valid
        && rows
            .iter()
            .all(|r| r.lemma_status == CheckStatus::Pass && r.theorem_status != CheckStatus::Fail);
    VerifyReport {
        passed,
        certificate_valid,
        certificate: cert,
        recheck,
        rows,
        trials: settings.trials,
        horizon_n: settings.horizon_n,
        seed: settings.seed,
        workers: settings.workers,
        floor_epsilon: settings.floor.map(|f| f.epsilon),
    }
}

pub fn cmd_verify(cfg: &ExperimentConfig, certificate: Option<BoundCertificate>) -> Result<VerifyReport, CommandError> {
    require_grid(cfg)?;
    let cert = match certificate {
        Some(c) => {
            if c.model != cfg.model {
                return Err(CommandError::Usage("certificate model differs from the config model".into()));
            }
            c
        }
        None => cmd_bound(cfg)?,
    };
    let settings = sim_settings(cfg)?;
    let estimates = estimate_ruin_with(&cfg.model, &cfg.x_grid, &settings);
    Ok(verify_against(cert, &estimates, &settings))
}

pub fn cmd_adjustment(cfg: &ExperimentConfig) -> Result<AdjustmentCoefficient, CommandError> {
    let s = &cfg.model.schedule;
    if !s.prefix.is_empty() || s.cycle.len() != 1 {
        return Err(CommandError::Usage(
            "adjustment needs a single step law (empty prefix, one-element cycle)".into(),
        ));
    }
    let law = &s.cycle[0];
    Ok(adjustment_coefficient(&law.claim, &law.inter, cfg.model.premium)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub x: f64,
    pub n_max: usize,
    pub prob: f64,
    pub cutoff_mass: f64,
    pub lower_cutoff: u64,
    pub pitch: f64,
}

pub fn cmd_oracle(cfg: &ExperimentConfig) -> Result<Vec<OracleRow>, CommandError> {
    require_grid(cfg)?;
    let lm = LatticeModel::from_model(&cfg.model, cfg.oracle.pitch)?;
    Ok(cfg
        .x_grid
        .iter()
        .map(|&x| {
            let r = exact_sup_prob(&lm, x, cfg.oracle.n_max, cfg.oracle.lower_cutoff);
            OracleRow {
                x,
                n_max: cfg.oracle.n_max,
                prob: r.prob,
                cutoff_mass: r.cutoff_mass,
                lower_cutoff: r.lower_cutoff,
                pitch: lm.pitch,
            }
        })
        .collect())
}

pub fn oracle_csv(rows: &[OracleRow]) -> String {
    let mut out = String::from("x,n_max,prob,cutoff_mass,lower_cutoff,pitch\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.x, r.n_max, r.prob, r.cutoff_mass, r.lower_cutoff, r.pitch
        ));
    }
    out
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig, CommandError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(d) = args.delta {
        cfg.delta_override = Some(d);
    }
    if args.delta_grid {
        cfg.delta_grid_search = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CommandError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CommandError::Write {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types always serialize");
    s.push('\n');
    s
}

fn run_command(command: &Command) -> Result<u8, CommandError> {
    match command {
        Command::Check(a) => {
            let cfg = load_config(a)?;
            let report = cmd_check(&cfg);
            emit(&json(&report), a.out.as_deref().or(cfg.output.json.as_deref()))?;
            Ok(if report.all_hold() { EXIT_OK } else { EXIT_FAIL })
        }
        Command::Bound(a) => {
            let cfg = load_config(a)?;
            let cert = cmd_bound(&cfg)?;
            emit(&json(&cert), a.out.as_deref().or(cfg.output.json.as_deref()))?;
            Ok(EXIT_OK)
        }
        Command::Simulate(a) => {
            let cfg = load_config(a)?;
            let est = cmd_simulate(&cfg)?;
            for e in &est {
                let frac = e.near_barrier_fraction();
                if frac > 0.01 {
                    eprintln!(
                        "warning: x = {}: {:.2}% of surviving paths ended the horizon near the barrier; increase horizon_n",
                        e.x,
                        100.0 * frac
                    );
                }
            }
            emit(&to_csv(&est), a.out.as_deref().or(cfg.output.csv.as_deref()))?;
            Ok(EXIT_OK)
        }
        Command::Verify(v) => {
            let a = &v.common;
            let cfg = load_config(a)?;
            let cert = match &v.certificate {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    Some(serde_json::from_str(&text).map_err(ConfigError::Parse)?)
                }
                None => None,
            };
            let report = cmd_verify(&cfg, cert)?;
            for f in report.recheck.failures() {
                eprintln!("certificate check `{}` failed: {}", f.name, f.detail);
            }
            emit(&json(&report), a.out.as_deref().or(cfg.output.json.as_deref()))?;
            Ok(if report.passed { EXIT_OK } else { EXIT_FAIL })
        }
        Command::Adjustment(a) => {
            let cfg = load_config(a)?;
            let r = cmd_adjustment(&cfg)?;
            emit(&json(&r), a.out.as_deref().or(cfg.output.json.as_deref()))?;
            Ok(EXIT_OK)
        }
        Command::Oracle(a) => {
            let cfg = load_config(a)?;
            let rows = cmd_oracle(&cfg)?;
            emit(&oracle_csv(&rows), a.out.as_deref().or(cfg.output.csv.as_deref()))?;
            Ok(EXIT_OK)
        }
    }
}

pub fn run(cli: Cli) -> ExitCode {
    match run_command(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

//! Experiment driver: strict JSON config parsing, seeded scenario
//! generation, parallel realizations, diagnostics, and plot-ready outputs.
//!
//! One invocation runs one mode of one scenario and writes four files into
//! the output directory:
//!
//! - `scenario.json`: every sampled array, replayable without regeneration
//! - `metrics.csv`: per-recorded-turn mean/std of the squared violation
//!   (plus mean cost and mean sum of rewards for quadratic scenarios)
//! - `diagnostics.json`: property reports, rate fit, equilibrium-gap table
//! - `manifest.json`: seeds, version, wall time, per-realization status
//!
//! `metrics.csv` and `diagnostics.json` are byte-identical across reruns
//! and across worker counts; the manifest carries wall time and is not.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    self, aggregate_realizations, aggregate_series, Aggregate, PropertyReport, RateFit,
};
use crate::dynamics::{
    run_trajectory, ControlMode, Init, InitSpec, NoiseModel, RecordSpec, RunSpec, ScalarObserver,
    StepSchedule, Trajectory,
};
use crate::error::{Error, Result};
use crate::game_model::GameSpec;
use crate::ne_oracle::{solve_ne, SteeringParams, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::scenarios::{
    gen_dsm, gen_quadratic, global_cost, global_cost_gradient, sum_rewards, DsmParams, QuadParams,
    Scenario,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_DIAGNOSTICS: i32 = 4;

/// Which comparison mode the realizations run in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Controlled,
    /// Control input pinned at zero.
    Uncontrolled,
    /// Players follow the gradient of the global cost instead of their own
    /// rewards (quadratic scenarios only); control input pinned at zero.
    DirectGlobal,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "controlled" => Ok(Mode::Controlled),
            "uncontrolled" => Ok(Mode::Uncontrolled),
            "direct-global" => Ok(Mode::DirectGlobal),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected controlled, uncontrolled or direct-global)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub eta: f64,
    pub t1: f64,
    pub eps: f64,
    pub t2: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            eta: 0.5,
            t1: 1.0,
            eps: 0.75,
            t2: 1.0,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<StepSchedule> {
        StepSchedule::new(self.eta, self.t1, self.eps, self.t2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// Run the sampled equilibrium-map checks (non-expansiveness,
    /// co-coercivity, Lipschitz ratio).
    pub property_checks: bool,
    /// Fit the log-log decay slope of the mean squared violation.
    pub rate_fit: bool,
    /// Number of log-spaced turns at which to solve for the exact
    /// equilibrium and record the tracking gap; 0 disables.
    pub ne_gap_points: usize,
    /// Control-input pairs per property check.
    pub pairs: usize,
    /// Half-width of the sampling box for control inputs.
    pub alpha_halfwidth: f64,
    /// Sample pairs used when estimating missing game constants.
    pub estimate_samples: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            property_checks: false,
            rate_fit: false,
            ne_gap_points: 0,
            pairs: 200,
            alpha_halfwidth: diagnostics::DEFAULT_ALPHA_HALFWIDTH,
            estimate_samples: 400,
        }
    }
}

impl DiagnosticsConfig {
    fn any(&self) -> bool {
        self.property_checks || self.rate_fit || self.ne_gap_points > 0
    }
}

/// Uniform initial ranges `x ~ U[0, x_high]` (projected), `alpha ~ U[0, alpha_high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub x_high: f64,
    pub alpha_high: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            x_high: 0.1,
            alpha_high: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioConfig {
    Dsm {
        seed: u64,
        #[serde(flatten)]
        params: DsmParams,
    },
    Quadratic {
        seed: u64,
        #[serde(flatten)]
        params: QuadParams,
    },
}

impl ScenarioConfig {
    pub fn generate(&self) -> Result<Scenario> {
        match self {
            ScenarioConfig::Dsm { seed, params } => gen_dsm(params, *seed),
            ScenarioConfig::Quadratic { seed, params } => gen_quadratic(params, *seed),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ScenarioConfig::Dsm { seed, .. } | ScenarioConfig::Quadratic { seed, .. } => *seed,
        }
    }
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub schedule: ScheduleConfig,
    pub noise_sigma: f64,
    pub horizon: u64,
    pub realizations: usize,
    pub record_stride: u64,
    pub seed: u64,
    pub mode: Mode,
    pub diagnostics: DiagnosticsConfig,
    pub init: InitConfig,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.realizations < 1 {
            return Err(Error::Config("realizations must be at least 1".into()));
        }
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.record_stride < 1 {
            return Err(Error::Config("record_stride must be at least 1".into()));
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(Error::Config("noise_sigma must be >= 0".into()));
        }
        self.schedule.build()?;
        if self.mode == Mode::DirectGlobal
            && !matches!(self.scenario, ScenarioConfig::Quadratic { .. })
        {
            return Err(Error::Config(
                "direct-global mode is only defined for quadratic scenarios".into(),
            ));
        }
        Ok(())
    }
}

/// Raw shape of the config file; the scenario block is dispatched by hand so
/// unknown keys are rejected with the offending name even inside the tagged
/// block.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: serde_json::Value,
    #[serde(default)]
    schedule: ScheduleConfig,
    #[serde(default = "default_sigma")]
    noise_sigma: f64,
    #[serde(default = "default_horizon")]
    horizon: u64,
    #[serde(default = "default_realizations")]
    realizations: usize,
    #[serde(default = "default_stride")]
    record_stride: u64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    mode: Mode,
    #[serde(default)]
    diagnostics: DiagnosticsConfig,
    #[serde(default)]
    init: InitConfig,
    #[serde(default = "default_out_dir")]
    out_dir: PathBuf,
}

fn default_sigma() -> f64 {
    0.5
}
fn default_horizon() -> u64 {
    100_000
}
fn default_realizations() -> usize {
    100
}
fn default_stride() -> u64 {
    100
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn parse_scenario(value: serde_json::Value) -> Result<ScenarioConfig> {
    let mut obj = match value {
        serde_json::Value::Object(map) => map,
        _ => return Err(Error::Config("`scenario` must be an object".into())),
    };
    let kind = obj
        .remove("kind")
        .ok_or_else(|| Error::Config("scenario needs a `kind` field".into()))?;
    let kind = kind
        .as_str()
        .ok_or_else(|| Error::Config("scenario `kind` must be a string".into()))?
        .to_string();
    let seed = match obj.remove("seed") {
        None => 1,
        Some(v) => v
            .as_u64()
            .ok_or_else(|| Error::Config("scenario `seed` must be an unsigned integer".into()))?,
    };
    let rest = serde_json::Value::Object(obj);
    match kind.as_str() {
        "dsm" => {
            let params: DsmParams = serde_json::from_value(rest)
                .map_err(|e| Error::Config(format!("scenario: {e}")))?;
            Ok(ScenarioConfig::Dsm { seed, params })
        }
        "quadratic" => {
            let params: QuadParams = serde_json::from_value(rest)
                .map_err(|e| Error::Config(format!("scenario: {e}")))?;
            Ok(ScenarioConfig::Quadratic { seed, params })
        }
        other => Err(Error::Config(format!(
            "unknown scenario kind `{other}` (expected dsm or quadratic)"
        ))),
    }
}

/// Strict parse of a config document: unknown keys are rejected by name,
/// defaults fill everything except the scenario, and the step-size schedule
/// is validated immediately.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let config = ExperimentConfig {
        scenario: parse_scenario(raw.scenario)?,
        schedule: raw.schedule,
        noise_sigma: raw.noise_sigma,
        horizon: raw.horizon,
        realizations: raw.realizations,
        record_stride: raw.record_stride,
        seed: raw.seed,
        mode: raw.mode,
        diagnostics: raw.diagnostics,
        init: raw.init,
        out_dir: raw.out_dir,
    };
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

#[derive(Debug, Clone, Serialize)]
pub struct RealizationStatus {
    pub index: usize,
    pub ok: bool,
    pub error: Option<String>,
}

/// Per-turn equilibrium-gap sample, averaged over realizations.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NeGapPoint {
    pub t: u64,
    /// Mean `||x_t - x*(alpha_t)||^2`.
    pub mean_gap_sq: f64,
    /// Mean `||A x*(alpha_t) - target||^2`: how far the steered equilibrium
    /// itself still is from the constraints.
    pub mean_equilibrium_violation_sq: f64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct DiagnosticsReport {
    pub mu_hat: Option<f64>,
    pub lipschitz_hat: Option<f64>,
    pub property_checks: Vec<PropertyReport>,
    pub skipped: Option<String>,
    pub rate_fit: Option<RateFit>,
    pub rate_fit_error: Option<String>,
    pub ne_gap: Vec<NeGapPoint>,
}

pub struct ExperimentSummary {
    pub out_dir: PathBuf,
    pub statuses: Vec<RealizationStatus>,
    pub aggregate: Option<Aggregate>,
    pub diagnostics: Option<DiagnosticsReport>,
    /// False only if a requested property check ran and failed.
    pub diagnostics_pass: Option<bool>,
}

impl ExperimentSummary {
    pub fn failed_realizations(&self) -> usize {
        self.statuses.iter().filter(|s| !s.ok).count()
    }

    pub fn exit_code(&self) -> i32 {
        if self.failed_realizations() > 0 {
            EXIT_DIVERGED
        } else if self.diagnostics_pass == Some(false) {
            EXIT_DIAGNOSTICS
        } else {
            EXIT_OK
        }
    }
}

/// `count` log-spaced turns between `lo` and `hi`, deduplicated.
pub fn log_spaced_times(lo: u64, hi: u64, count: usize) -> Vec<u64> {
    if count == 0 || hi == 0 {
        return Vec::new();
    }
    let lo = lo.clamp(1, hi);
    if count == 1 || lo == hi {
        return vec![hi];
    }
    let ln_lo = (lo as f64).ln();
    let ln_hi = (hi as f64).ln();
    let mut out: Vec<u64> = (0..count)
        .map(|j| {
            (ln_lo + (ln_hi - ln_lo) * j as f64 / (count - 1) as f64)
                .exp()
                .round() as u64
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Runs all realizations of a configured experiment and writes its outputs.
///
/// Realization `k` always draws from random stream `k + 1` of the master
/// seed (stream 0 belongs to diagnostics), so results are independent of
/// the worker count. A diverged realization is reported in the summary and
/// the manifest rather than aborting the others.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let started = Instant::now();
    std::fs::create_dir_all(&config.out_dir)?;

    let scenario = Arc::new(config.scenario.generate()?);
    let game = scenario.game()?;
    let constraint = scenario.constraint()?;

    // The game the players actually follow; only direct-global mode differs.
    let drive_game = match config.mode {
        Mode::DirectGlobal => {
            GameSpec::new(game.action_sets().to_vec(), global_cost_gradient(&scenario)?)?
        }
        _ => game.clone(),
    };
    let control_mode = match config.mode {
        Mode::Controlled => ControlMode::Controlled,
        Mode::Uncontrolled | Mode::DirectGlobal => ControlMode::Uncontrolled,
    };

    let mut observers: Vec<ScalarObserver> = Vec::new();
    if matches!(scenario.as_ref(), Scenario::Quadratic(_)) {
        let sc = scenario.clone();
        observers.push(ScalarObserver::new("cost", move |x: &[f64]| {
            global_cost(&sc, x).expect("cost evaluation")
        }));
        let sc = scenario.clone();
        observers.push(ScalarObserver::new("sum_rewards", move |x: &[f64]| {
            sum_rewards(&sc, x).expect("reward evaluation")
        }));
    }

    let snapshot_times = if config.diagnostics.ne_gap_points > 0 {
        log_spaced_times(
            100.min(config.horizon),
            config.horizon,
            config.diagnostics.ne_gap_points,
        )
    } else {
        Vec::new()
    };

    let spec = RunSpec {
        game: &drive_game,
        constraint: &constraint,
        schedule: config.schedule.build()?,
        noise: NoiseModel::Gaussian {
            sigma: config.noise_sigma,
        },
        horizon: config.horizon,
        record: RecordSpec {
            stride: config.record_stride,
            snapshot_times,
        },
        mode: control_mode,
        init: InitSpec {
            x: Init::Uniform {
                low: 0.0,
                high: config.init.x_high,
            },
            alpha: Init::Uniform {
                low: 0.0,
                high: config.init.alpha_high,
            },
        },
    };

    let results: Vec<Result<Trajectory>> = (0..config.realizations)
        .into_par_iter()
        .map(|r| run_trajectory(&spec, config.seed, r as u64 + 1, &observers))
        .collect();

    let mut statuses = Vec::with_capacity(results.len());
    let mut successes: Vec<Trajectory> = Vec::new();
    for (index, res) in results.into_iter().enumerate() {
        match res {
            Ok(t) => {
                statuses.push(RealizationStatus {
                    index,
                    ok: true,
                    error: None,
                });
                successes.push(t);
            }
            Err(e) => statuses.push(RealizationStatus {
                index,
                ok: false,
                error: Some(e.to_string()),
            }),
        }
    }

    let aggregate = if successes.is_empty() {
        None
    } else {
        Some(aggregate_realizations(&successes)?)
    };
    if let Some(agg) = &aggregate {
        write_metrics(&config.out_dir.join("metrics.csv"), agg, &successes)?;
    }

    let (diagnostics, diagnostics_pass) = if config.diagnostics.any() {
        let report = run_diagnostics(config, &game, &constraint, &successes, aggregate.as_ref())?;
        let pass = if report.property_checks.is_empty() {
            None
        } else {
            Some(report.property_checks.iter().all(|r| r.pass))
        };
        (Some(report), pass)
    } else {
        (None, None)
    };
    if let Some(report) = &diagnostics {
        let path = config.out_dir.join("diagnostics.json");
        std::fs::write(path, serde_json::to_string_pretty(report)?)?;
    }

    scenario.save(&config.out_dir.join("scenario.json"))?;

    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "master_seed": config.seed,
        "scenario_seed": config.scenario.seed(),
        "realizations_ok": statuses.iter().filter(|s| s.ok).count(),
        "realizations_failed": statuses.iter().filter(|s| !s.ok).count(),
        "statuses": statuses,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    std::fs::write(
        config.out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;

    Ok(ExperimentSummary {
        out_dir: config.out_dir.clone(),
        statuses,
        aggregate,
        diagnostics,
        diagnostics_pass,
    })
}

/// Columns: `t, mean_violation_sq, std_violation_sq` plus one mean column
/// per recorded scalar observable. Never writes a non-finite value.
fn write_metrics(path: &Path, agg: &Aggregate, trajs: &[Trajectory]) -> Result<()> {
    let scalar_names: Vec<String> = trajs
        .first()
        .map(|t| t.scalar_names.clone())
        .unwrap_or_default();
    let mut scalar_means: Vec<Vec<f64>> = Vec::new();
    for (s_idx, _) in scalar_names.iter().enumerate() {
        let rows: Vec<&[f64]> = trajs.iter().map(|t| t.scalars[s_idx].as_slice()).collect();
        let (mean, _) = aggregate_series(&rows)?;
        scalar_means.push(mean);
    }

    let mut out = String::new();
    out.push_str("t,mean_violation_sq,std_violation_sq");
    for name in &scalar_names {
        out.push_str(&format!(",mean_{name}"));
    }
    out.push('\n');
    for (i, t) in agg.times.iter().enumerate() {
        let mut row = format!("{t},{},{}", agg.mean[i], agg.std[i]);
        for mean in &scalar_means {
            row.push_str(&format!(",{}", mean[i]));
        }
        if row.contains("NaN") || row.contains("inf") {
            return Err(Error::invalid("refusing to write non-finite metrics"));
        }
        out.push_str(&row);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn run_diagnostics(
    config: &ExperimentConfig,
    game: &GameSpec,
    constraint: &crate::game_model::ConstraintSpec,
    successes: &[Trajectory],
    aggregate: Option<&Aggregate>,
) -> Result<DiagnosticsReport> {
    let mut report = DiagnosticsReport::default();
    let dcfg = &config.diagnostics;

    let needs_solver = dcfg.property_checks || dcfg.ne_gap_points > 0;
    let mut solver_game = game.clone();
    if needs_solver {
        // Stream 0 of the master seed is reserved for diagnostics sampling.
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(0);
        solver_game =
            diagnostics::with_estimated_constants(game, dcfg.estimate_samples, &mut rng)?;
        report.mu_hat = solver_game.mu;
        report.lipschitz_hat = solver_game.lipschitz;
        if solver_game.mu.unwrap_or(0.0) <= 0.0 {
            eprintln!(
                "warning: sampled monotonicity modulus is not positive ({:?}); \
                 equilibrium-based diagnostics skipped",
                solver_game.mu
            );
            report.skipped =
                Some("monotonicity estimate not positive; equilibrium solves unavailable".into());
        }
    }
    let solver_ready = needs_solver && solver_game.mu.unwrap_or(0.0) > 0.0;

    if dcfg.property_checks && solver_ready {
        // The modulus quoted in the checks is calibrated against equilibria
        // pairs, which probe the directions the equilibrium map moves along.
        let mut cal_rng = ChaCha8Rng::seed_from_u64(config.seed);
        cal_rng.set_stream(u64::MAX - 1);
        let mu_ne = diagnostics::estimate_monotonicity_at_equilibria(
            &solver_game,
            constraint,
            64,
            dcfg.alpha_halfwidth,
            &mut cal_rng,
        )?;
        // 1% headroom for worst-case pairs outside the calibration sample.
        let mu_hat = solver_game.mu.unwrap().min(0.99 * mu_ne);
        report.mu_hat = Some(mu_hat);
        let params = SteeringParams::new(mu_hat, constraint.a_norm())?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(u64::MAX);
        report.property_checks.push(diagnostics::check_steering_nonexpansive(
            &solver_game,
            constraint,
            &params,
            dcfg.pairs,
            dcfg.alpha_halfwidth,
            &mut rng,
        )?);
        report.property_checks.push(diagnostics::check_cocoercivity(
            &solver_game,
            constraint,
            dcfg.pairs,
            dcfg.alpha_halfwidth,
            mu_hat,
            &mut rng,
        )?);
        report.property_checks.push(diagnostics::check_ne_lipschitz(
            &solver_game,
            constraint,
            dcfg.pairs,
            dcfg.alpha_halfwidth,
            &mut rng,
        )?);
    }

    if dcfg.rate_fit {
        if let Some(agg) = aggregate {
            let lo = if config.horizon >= 2000 {
                1000
            } else {
                (config.horizon / 10).max(1)
            };
            match diagnostics::fit_rate(&agg.times, &agg.mean, (lo, config.horizon)) {
                Ok(fit) => report.rate_fit = Some(fit),
                Err(e) => report.rate_fit_error = Some(e.to_string()),
            }
        } else {
            report.rate_fit_error = Some("no successful realizations".into());
        }
    }

    if dcfg.ne_gap_points > 0 && solver_ready && !successes.is_empty() {
        report.ne_gap = equilibrium_gap_table(&solver_game, constraint, successes)?;
    }

    Ok(report)
}

/// Post-hoc equilibrium solves at every snapshot: tracking gap and the
/// residual constraint violation of the steered equilibrium itself.
fn equilibrium_gap_table(
    game: &GameSpec,
    constraint: &crate::game_model::ConstraintSpec,
    successes: &[Trajectory],
) -> Result<Vec<NeGapPoint>> {
    let grid: Vec<u64> = successes[0].snapshots.iter().map(|s| s.t).collect();
    if successes.iter().any(|tr| {
        tr.snapshots.len() != grid.len()
            || tr.snapshots.iter().zip(&grid).any(|(s, t)| s.t != *t)
    }) {
        return Err(Error::invalid("snapshot grids differ across realizations"));
    }

    let per_real: Vec<Vec<(f64, f64)>> = successes
        .par_iter()
        .map(|tr| -> Result<Vec<(f64, f64)>> {
            tr.snapshots
                .iter()
                .map(|snap| {
                    let alpha = ndarray::Array1::from_vec(snap.alpha.clone());
                    let sol =
                        solve_ne(game, constraint, &alpha.view(), DEFAULT_TOL, DEFAULT_MAX_ITER)?;
                    let gap_sq: f64 = snap
                        .x
                        .iter()
                        .zip(sol.x_star.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    let load = constraint.matrix().dot(&sol.x_star) - constraint.target();
                    let lv_sq: f64 = load.iter().map(|v| v * v).sum();
                    Ok((gap_sq, lv_sq))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    // Sorted sums keep the means independent of realization order.
    let mut table = Vec::with_capacity(grid.len());
    for (idx, t) in grid.iter().enumerate() {
        let mut gaps: Vec<f64> = per_real.iter().map(|r| r[idx].0).collect();
        let mut loads: Vec<f64> = per_real.iter().map(|r| r[idx].1).collect();
        gaps.sort_by(f64::total_cmp);
        loads.sort_by(f64::total_cmp);
        let n = gaps.len() as f64;
        table.push(NeGapPoint {
            t: *t,
            mean_gap_sq: gaps.iter().sum::<f64>() / n,
            mean_equilibrium_violation_sq: loads.iter().sum::<f64>() / n,
        });
    }
    Ok(table)
}

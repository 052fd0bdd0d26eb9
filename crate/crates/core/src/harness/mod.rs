//! Experiments: configs, verification of the predicted law against
//! simulation, sweeps, and their CSV/JSON outputs.

pub mod config;
pub mod io;

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

pub use config::{ExperimentConfig, GraphInput, MKeyword, MSpec, SweepAxis};

use crate::exact_oracle::{exact_row, expected_hitting_time, ExactRow, OracleError};
use crate::landscape::{
    check_assumptions, partition_degree, AssumptionReport, AsymptoticDegree, Betas, DegreeTable, LandscapeError,
    WellDepth,
};
use crate::predictor::{predicted_survival_with, PredictError, PredictRow, Regime, DEFAULT_QUAD_TOLERANCE};
use crate::rates::RateSchedule;
use crate::simulator::{estimate_survival, run_hitting, run_replicates, HittingSample, SimError, TrialStats};
use crate::topology::{enumerate_configs, BipartiteGraph, StateSpace, TopologyError, DEFAULT_STATE_CAP};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Landscape(#[from] LandscapeError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("empty input")]
    EmptyInput,
    #[error("sweep axis has no values")]
    EmptySweep,
}

impl HarnessError {
    /// Process exit code: 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Topology(_) | HarnessError::EmptySweep => 2,
            _ => 1,
        }
    }
}

/// Two-sided Kolmogorov–Smirnov statistic of sorted samples against `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> Result<f64, HarnessError> {
    if sorted.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    if sorted.windows(2).any(|w| w[0] > w[1]) {
        return Err(HarnessError::Config("ks_distance expects sorted samples".into()));
    }
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let hi = (i + 1) as f64 / n;
        let lo = i as f64 / n;
        d = d.max((hi - f).abs()).max((lo - f).abs());
    }
    Ok(d)
}

/// KS distance of `values / mean(values)` from the unit exponential.
pub fn ks_vs_exponential(values: &[f64]) -> Result<f64, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::EmptyInput);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut xs: Vec<f64> = values.iter().map(|v| v / mean).collect();
    xs.sort_by(f64::total_cmp);
    ks_distance(&xs, |x| 1.0 - (-x).exp())
}

/// Row of `samples.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRow {
    pub replicate: usize,
    pub seed: u64,
    pub t_v: Option<f64>,
    pub n_events: u64,
    pub timeout: bool,
}

pub const SAMPLE_HEADER: [&str; 5] = ["replicate", "seed", "t_v", "n_events", "timeout"];

impl SampleRow {
    pub fn from_samples(samples: &[HittingSample]) -> Vec<SampleRow> {
        samples
            .iter()
            .enumerate()
            .map(|(i, s)| SampleRow { replicate: i, seed: s.seed, t_v: s.t_v, n_events: s.n_events, timeout: s.timed_out() })
            .collect()
    }
}

/// Row of the regeneration log CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegenRow {
    pub replicate: usize,
    pub start: f64,
    pub success: bool,
    pub ticks: u64,
    pub duration: f64,
    pub end: f64,
}

pub const REGEN_HEADER: [&str; 6] = ["replicate", "start", "success", "ticks", "duration", "end"];

impl RegenRow {
    pub fn from_samples(samples: &[HittingSample]) -> Vec<RegenRow> {
        let mut rows = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            for r in s.regen_log.iter().flat_map(|l| &l.records) {
                rows.push(RegenRow { replicate: i, start: r.start, success: r.success, ticks: r.ticks, duration: r.duration, end: r.end });
            }
        }
        rows
    }
}

/// Row of `survival.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalRow {
    pub tau: f64,
    pub empirical: f64,
    pub se: f64,
    pub predicted: f64,
}

pub const SURVIVAL_HEADER: [&str; 4] = ["tau", "empirical", "se", "predicted"];

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub graph: String,
    pub schedule: RateSchedule,
    pub m_spec: String,
    #[serde(rename = "M")]
    pub m: f64,
    pub replicates: usize,
    pub seed: u64,
    pub t_max: f64,
    pub eps0: f64,
    pub nu0: f64,
    pub gamma0: f64,
    /// Mean crossover time of the chain frozen at time 0.
    pub frozen_mean: f64,
    pub critical_timescale: f64,
    pub regime: Regime,
    pub product: f64,
    pub truncation: Option<f64>,
    pub rows: Vec<SurvivalRow>,
    pub sup_distance: f64,
    pub tolerance: f64,
    pub distance_ok: bool,
    /// KS distance of `T_v / mean(T_v)` from the unit exponential; absent
    /// when any replicate timed out.
    pub ks_exponential: Option<f64>,
    pub empirical_mean: Option<f64>,
    pub trials: TrialStats,
    pub per_trial_success: Option<f64>,
    pub censored_fraction: f64,
    pub assumptions: AssumptionReport,
    pub assumptions_ok: bool,
    pub assumptions_required: bool,
    pub pass: bool,
    pub total_events: u64,
    pub runtime_seconds: f64,
    pub warnings: Vec<String>,
}

pub struct ExperimentOutput {
    pub report: VerificationReport,
    pub samples: Vec<HittingSample>,
}

impl ExperimentOutput {
    pub fn sample_rows(&self) -> Vec<SampleRow> {
        SampleRow::from_samples(&self.samples)
    }

    /// Writes `samples.csv`, `survival.csv` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        io::write_csv(&dir.join("samples.csv"), &SAMPLE_HEADER, &self.sample_rows())?;
        io::write_csv(&dir.join("survival.csv"), &SURVIVAL_HEADER, &self.report.rows)?;
        io::write_json(&dir.join("report.json"), &self.report)
    }
}

/// Graph, state space and the frozen-time quantities at time 0.
pub struct Prepared {
    pub graph: BipartiteGraph,
    pub space: StateSpace,
    pub betas: Betas,
    pub row0: ExactRow,
    pub m: f64,
    pub t_max: f64,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    cfg.validate()?;
    let graph = cfg.graph.build()?;
    let space = enumerate_configs(&graph, cfg.state_cap.unwrap_or(DEFAULT_STATE_CAP))?;
    let betas = Betas::new(cfg.schedule.beta_u(), cfg.schedule.beta_v())?;
    let row0 = exact_row(&space, &cfg.schedule, 0.0)?;
    let m = cfg.m.resolve(cfg.schedule.lambda(), row0.nu_check)?;
    let t_max = cfg.horizon(m);
    Ok(Prepared { graph, space, betas, row0, m, t_max })
}

/// Crossover samples from `u` to `v`, in replicate order.
pub fn simulate_samples(
    g: &BipartiteGraph,
    s: &RateSchedule,
    replicates: usize,
    seed: u64,
    t_max: f64,
    regen_log: bool,
) -> Result<Vec<HittingSample>, HarnessError> {
    let out = run_replicates(replicates, seed, |_, rs| run_hitting(g, s, g.u_config(), g.v_config(), rs, t_max, regen_log));
    out.into_iter().map(|r| r.map_err(HarnessError::from)).collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let started = Instant::now();
    let p = prepare(cfg)?;
    let mut warnings = Vec::new();
    let assumptions = check_assumptions(&p.space, &p.graph, &p.betas)?;
    warnings.extend(assumptions.warnings.iter().cloned());
    let assumptions_ok = assumptions.isoperimetric_assumption && assumptions.no_deep_well && assumptions.energy_barrier;
    let frozen_mean = expected_hitting_time(&p.space, p.row0.lambda_u, p.row0.lambda_v, p.space.u_index(), p.space.v_index())?;

    let prediction =
        predicted_survival_with(&p.space, &cfg.schedule, p.m, &cfg.tau_grid, cfg.thresholds, DEFAULT_QUAD_TOLERANCE)?;
    let samples = simulate_samples(&p.graph, &cfg.schedule, cfg.replicates, cfg.seed, p.t_max, false)?;
    let curve = estimate_survival(&samples, p.m, &cfg.tau_grid)?;
    warnings.extend(curve.warnings.iter().cloned());

    let rows: Vec<SurvivalRow> = cfg
        .tau_grid
        .iter()
        .enumerate()
        .map(|(i, &tau)| SurvivalRow {
            tau,
            empirical: curve.survival[i],
            se: curve.se[i],
            predicted: prediction.survival[i],
        })
        .collect();
    let sup_distance = rows.iter().map(|r| (r.empirical - r.predicted).abs()).fold(0.0, f64::max);
    let distance_ok = rows.iter().all(|r| r.empirical.is_finite()) && sup_distance <= cfg.tolerance;

    let hits: Vec<f64> = samples.iter().filter_map(|s| s.t_v).collect();
    let all_hit = hits.len() == samples.len();
    let ks_exponential = if all_hit { Some(ks_vs_exponential(&hits)?) } else { None };
    let empirical_mean = all_hit.then(|| hits.iter().sum::<f64>() / hits.len() as f64);
    let mut trials = TrialStats::default();
    for s in &samples {
        trials.merge(&s.trials);
    }
    let pass = distance_ok && (!cfg.require_assumptions || assumptions_ok);
    let report = VerificationReport {
        graph: cfg.graph.label(),
        schedule: cfg.schedule.clone(),
        m_spec: cfg.m.label(),
        m: p.m,
        replicates: cfg.replicates,
        seed: cfg.seed,
        t_max: p.t_max,
        eps0: p.row0.eps_check,
        nu0: p.row0.nu_check,
        gamma0: p.row0.gamma,
        frozen_mean,
        critical_timescale: 1.0 / p.row0.nu_check,
        regime: prediction.regime,
        product: prediction.product,
        truncation: prediction.truncation,
        rows,
        sup_distance,
        tolerance: cfg.tolerance,
        distance_ok,
        ks_exponential,
        empirical_mean,
        trials,
        per_trial_success: trials.success_fraction(),
        censored_fraction: curve.censored_fraction,
        assumptions,
        assumptions_ok,
        assumptions_required: cfg.require_assumptions,
        pass,
        total_events: samples.iter().map(|s| s.n_events).sum(),
        runtime_seconds: started.elapsed().as_secs_f64(),
        warnings,
    };
    Ok(ExperimentOutput { report, samples })
}

/// Predicted survival rows for the configured `M` and grid.
pub fn predict(cfg: &ExperimentConfig) -> Result<Vec<PredictRow>, HarnessError> {
    let p = prepare(cfg)?;
    let pred = predicted_survival_with(&p.space, &cfg.schedule, p.m, &cfg.tau_grid, cfg.thresholds, DEFAULT_QUAD_TOLERANCE)?;
    Ok(pred.rows())
}

pub const EXACT_HEADER: [&str; 7] = ["t", "lambda_u", "lambda_v", "gamma", "eps_check", "nu_check", "mean_T_uv"];

/// Frozen-time oracle rows at `t = Mτ` for `τ ∈ {0} ∪ grid`, stopping at
/// the depletion time.
pub fn exact_table(cfg: &ExperimentConfig) -> Result<Vec<ExactRow>, HarnessError> {
    let p = prepare(cfg)?;
    let depletion = cfg.schedule.effective_depletion_time();
    let mut rows = vec![p.row0];
    for &tau in &cfg.tau_grid {
        let t = p.m * tau;
        if depletion.is_some_and(|d| t >= d) {
            break;
        }
        rows.push(exact_row(&p.space, &cfg.schedule, t)?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct LandscapeReport {
    pub graph: String,
    pub beta_u: String,
    pub beta_v: String,
    pub states: usize,
    pub partition_degree: AsymptoticDegree,
    pub pi_degree_u: AsymptoticDegree,
    pub pi_degree_v: AsymptoticDegree,
    pub psi_uv: AsymptoticDegree,
    pub gamma: AsymptoticDegree,
    pub gamma_check: WellDepth,
    pub assumptions: AssumptionReport,
}

pub fn landscape_report(cfg: &ExperimentConfig) -> Result<LandscapeReport, HarnessError> {
    cfg.validate()?;
    let graph = cfg.graph.build()?;
    let space = enumerate_configs(&graph, cfg.state_cap.unwrap_or(DEFAULT_STATE_CAP))?;
    let betas = Betas::new(cfg.schedule.beta_u(), cfg.schedule.beta_v())?;
    let table = DegreeTable::new(&space, &betas);
    let (u, v) = (space.u_index(), space.v_index());
    let assumptions = check_assumptions(&space, &graph, &betas)?;
    Ok(LandscapeReport {
        graph: cfg.graph.label(),
        beta_u: cfg.schedule.beta_u().to_string(),
        beta_v: cfg.schedule.beta_v().to_string(),
        states: space.len(),
        partition_degree: partition_degree(&space, &betas),
        pi_degree_u: table.pi(u),
        pi_degree_v: table.pi(v),
        psi_uv: table.critical_resistance(&[u], &[v])?,
        gamma: assumptions.gamma,
        gamma_check: assumptions.gamma_check.clone(),
        assumptions,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub parameter: String,
    pub value: String,
    pub seed: u64,
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub nu0: Option<f64>,
    pub product: Option<f64>,
    pub regime: Option<Regime>,
    pub sup_distance: Option<f64>,
    pub pass: bool,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: [&str; 11] =
    ["index", "parameter", "value", "seed", "M", "nu0", "product", "regime", "sup_distance", "pass", "error"];

pub struct SweepPoint {
    pub row: SweepRow,
    pub output: Option<ExperimentOutput>,
}

/// Runs the template at every axis value with seed `base + index`.
/// Failures are recorded per point and do not stop the sweep.
pub fn sweep(template: &ExperimentConfig, axis: &SweepAxis) -> Result<Vec<SweepPoint>, HarnessError> {
    if axis.is_empty() {
        return Err(HarnessError::EmptySweep);
    }
    let mut points = Vec::with_capacity(axis.len());
    for i in 0..axis.len() {
        let seed = template.seed.wrapping_add(i as u64);
        let mut row = SweepRow {
            index: i,
            parameter: axis.name().to_string(),
            value: axis.value_label(i),
            seed,
            m: None,
            nu0: None,
            product: None,
            regime: None,
            sup_distance: None,
            pass: false,
            error: None,
        };
        let result = axis.apply(template, i).and_then(|mut cfg| {
            cfg.seed = seed;
            run_experiment(&cfg)
        });
        let output = match result {
            Ok(out) => {
                let r = &out.report;
                row.m = Some(r.m);
                row.nu0 = Some(r.nu0);
                row.product = Some(r.product);
                row.regime = Some(r.regime);
                row.sup_distance = Some(r.sup_distance);
                row.pass = r.pass;
                Some(out)
            }
            Err(e) => {
                row.error = Some(e.to_string());
                None
            }
        };
        points.push(SweepPoint { row, output });
    }
    Ok(points)
}

/// Writes `sweep.csv` and one subdirectory of outputs per successful point.
pub fn write_sweep(points: &[SweepPoint], dir: &Path) -> Result<(), HarnessError> {
    let rows: Vec<&SweepRow> = points.iter().map(|p| &p.row).collect();
    io::write_csv(&dir.join("sweep.csv"), &SWEEP_HEADER, &rows)?;
    for p in points {
        if let Some(out) = &p.output {
            out.write(&dir.join(format!("point_{:03}", p.row.index)))?;
        }
    }
    Ok(())
}

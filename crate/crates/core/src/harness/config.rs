//! Experiment configuration files.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::predictor::RegimeThresholds;
use crate::rates::{Exponent, RateSchedule};
use crate::topology::{BipartiteGraph, GraphFile, GraphSpec, TopologyError};

use super::HarnessError;

/// Graph given as a selector string or inline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GraphInput {
    Spec(GraphSpec),
    Inline(GraphFile),
}

impl GraphInput {
    pub fn build(&self) -> Result<BipartiteGraph, TopologyError> {
        match self {
            GraphInput::Spec(s) => s.build(),
            GraphInput::Inline(f) => f.to_graph(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            GraphInput::Spec(s) => s.to_string(),
            GraphInput::Inline(f) => format!("inline:{}+{}", f.u.len(), f.v.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MKeyword {
    #[serde(rename = "critical")]
    Critical,
}

fn one() -> f64 {
    1.0
}

/// Time scale `M`: a number, `"critical"` (`1/ν̌(0)`), `{"critical": k}`
/// (`k/ν̌(0)`), or `{"coeff": c, "exponent": e}` (`c·λ^e`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MSpec {
    Absolute(f64),
    Keyword(MKeyword),
    Critical { critical: f64 },
    PowerLaw {
        #[serde(default = "one")]
        coeff: f64,
        exponent: Exponent,
    },
}

impl MSpec {
    pub fn resolve(&self, lambda: f64, nu0: f64) -> Result<f64, HarnessError> {
        let m = match self {
            MSpec::Absolute(m) => *m,
            MSpec::Keyword(MKeyword::Critical) => 1.0 / nu0,
            MSpec::Critical { critical } => critical / nu0,
            MSpec::PowerLaw { coeff, exponent } => coeff * lambda.powf(exponent.to_f64()),
        };
        if m > 0.0 && m.is_finite() {
            Ok(m)
        } else {
            Err(HarnessError::Config(format!("M resolves to {m}, expected a positive finite value")))
        }
    }

    pub fn label(&self) -> String {
        match self {
            MSpec::Absolute(m) => m.to_string(),
            MSpec::Keyword(_) => "critical".into(),
            MSpec::Critical { critical } => format!("{critical}/nu0"),
            MSpec::PowerLaw { coeff, exponent } => format!("{coeff}*lambda^{exponent}"),
        }
    }
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Lambda(Vec<f64>),
    M(Vec<MSpec>),
    BetaU(Vec<Exponent>),
    BetaV(Vec<Exponent>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Lambda(_) => "lambda",
            SweepAxis::M(_) => "m",
            SweepAxis::BetaU(_) => "beta_u",
            SweepAxis::BetaV(_) => "beta_v",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Lambda(v) => v.len(),
            SweepAxis::M(v) => v.len(),
            SweepAxis::BetaU(v) => v.len(),
            SweepAxis::BetaV(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value_label(&self, i: usize) -> String {
        match self {
            SweepAxis::Lambda(v) => v[i].to_string(),
            SweepAxis::M(v) => v[i].label(),
            SweepAxis::BetaU(v) => v[i].to_string(),
            SweepAxis::BetaV(v) => v[i].to_string(),
        }
    }

    /// Template with the `i`-th value substituted.
    pub fn apply(&self, template: &ExperimentConfig, i: usize) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = template.clone();
        cfg.sweep = None;
        let bad = |e: crate::rates::ScheduleError| HarnessError::Config(e.to_string());
        match self {
            SweepAxis::Lambda(v) => cfg.schedule = cfg.schedule.with_lambda(v[i]).map_err(bad)?,
            SweepAxis::M(v) => cfg.m = v[i].clone(),
            SweepAxis::BetaU(v) => cfg.schedule = cfg.schedule.with_betas(v[i], cfg.schedule.beta_v()).map_err(bad)?,
            SweepAxis::BetaV(v) => cfg.schedule = cfg.schedule.with_betas(cfg.schedule.beta_u(), v[i]).map_err(bad)?,
        }
        Ok(cfg)
    }
}

fn default_m() -> MSpec {
    MSpec::Keyword(MKeyword::Critical)
}

fn default_replicates() -> usize {
    2000
}

fn default_tau_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

fn default_tolerance() -> f64 {
    0.05
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphInput,
    pub schedule: RateSchedule,
    #[serde(default = "default_m")]
    pub m: MSpec,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tau_grid")]
    pub tau_grid: Vec<f64>,
    /// Simulation horizon; derived from `M`, the grid and the depletion
    /// time when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    /// Largest accepted sup distance between empirical and predicted
    /// survival on the grid.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub thresholds: RegimeThresholds,
    /// Fail the verification when the structural or energy-barrier
    /// hypotheses do not hold.
    #[serde(default = "yes")]
    pub require_assumptions: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxis>,
    /// Output directory used when none is given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(graph: GraphSpec, schedule: RateSchedule) -> Self {
        ExperimentConfig {
            graph: GraphInput::Spec(graph),
            schedule,
            m: default_m(),
            replicates: default_replicates(),
            seed: 0,
            tau_grid: default_tau_grid(),
            t_max: None,
            tolerance: default_tolerance(),
            thresholds: RegimeThresholds::default(),
            require_assumptions: true,
            state_cap: None,
            sweep: None,
            out_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.tau_grid.is_empty()
            || !self.tau_grid.iter().all(|t| t.is_finite() && *t > 0.0)
            || !self.tau_grid.windows(2).all(|w| w[0] < w[1])
        {
            return bad("tau_grid must be nonempty, positive and strictly increasing");
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0 && t.is_finite()) {
                return bad("t_max must be positive and finite");
            }
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1.0) {
            return bad("tolerance must lie in (0, 1]");
        }
        if !(self.thresholds.low > 0.0 && self.thresholds.low < self.thresholds.high) {
            return bad("thresholds must satisfy 0 < low < high");
        }
        if let MSpec::Absolute(m) = self.m {
            if !(m > 0.0 && m.is_finite()) {
                return bad("M must be positive and finite");
            }
        }
        Ok(())
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_grid.last().copied().unwrap_or(1.0)
    }

    /// Horizon: `t_max` if set, else `max(10·M·τ_max, 2·depletion)`.
    pub fn horizon(&self, m: f64) -> f64 {
        self.t_max.unwrap_or_else(|| {
            let base = 10.0 * m * self.tau_max();
            match self.schedule.effective_depletion_time() {
                Some(d) => base.max(2.0 * d),
                None => base,
            }
        })
    }
}

//! Predicted law of the crossover time.
//!
//! With `ν̌(s) = ε̌(s)γ(s)` the crossover rate of the chain frozen at time
//! `s`, the survival of `T_v/M` is approximated by
//! `exp(−∫₀^τ M ν̌(Mσ) dσ) = exp(−∫₀^{Mτ} ν̌(t) dt)`. The integral is done
//! numerically with `ν̌` from the exact oracle. Closed forms for complete
//! bipartite graphs and tori serve as independent cross-checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact_oracle::{nu_check, OracleError};
use crate::rates::RateSchedule;
use crate::topology::StateSpace;

pub const DEFAULT_QUAD_TOLERANCE: f64 = 1e-6;
const MAX_DEPTH: u32 = 40;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("M must be positive and finite (got {0})")]
    BadScale(f64),
    #[error("tau grid must be nonnegative and strictly increasing")]
    BadGrid,
    #[error("exponent p = (|U|-1) beta_u must be positive (got {0})")]
    NonPositiveExponent(f64),
    #[error("alpha = {0} lies outside (0, 1)")]
    AlphaOutOfRange(f64),
    #[error("invalid argument: {0}")]
    BadArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Subcritical => "subcritical",
            Regime::Critical => "critical",
            Regime::Supercritical => "supercritical",
        })
    }
}

/// Bounds on `M·ν̌(0)` separating the three regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds { low: 0.1, high: 10.0 }
    }
}

pub fn regime_classify(m: f64, nu0: f64, th: RegimeThresholds) -> (Regime, f64) {
    let product = m * nu0;
    let regime = if product > th.high {
        Regime::Supercritical
    } else if product < th.low {
        Regime::Subcritical
    } else {
        Regime::Critical
    };
    (regime, product)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalPrediction {
    pub tau: Vec<f64>,
    pub survival: Vec<f64>,
    pub regime: Regime,
    pub m: f64,
    pub nu0: f64,
    pub product: f64,
    /// `τ*` past which `λ_U` is exhausted and the survival is 0.
    pub truncation: Option<f64>,
}

/// One row of the `predict` CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictRow {
    pub tau: f64,
    pub survival_predicted: f64,
    pub regime: Regime,
    #[serde(rename = "M")]
    pub m: f64,
    pub nu0: f64,
}

impl SurvivalPrediction {
    pub fn rows(&self) -> Vec<PredictRow> {
        self.tau
            .iter()
            .zip(&self.survival)
            .map(|(&tau, &s)| PredictRow { tau, survival_predicted: s, regime: self.regime, m: self.m, nu0: self.nu0 })
            .collect()
    }
}

struct Simpson<'a, F: FnMut(f64) -> Result<f64, PredictError>> {
    f: &'a mut F,
}

impl<F: FnMut(f64) -> Result<f64, PredictError>> Simpson<'_, F> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(&mut self, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<f64, PredictError> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let flm = (self.f)(lm)?;
        let frm = (self.f)(rm)?;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        Ok(self.recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + self.recurse(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to relative tolerance.
pub fn adaptive_simpson<F>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64, PredictError>
where
    F: FnMut(f64) -> Result<f64, PredictError>,
{
    if b <= a {
        return Ok(0.0);
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let fm = f(0.5 * (a + b))?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // coarse scale estimate from a five-point rule keeps the tolerance relative
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    let mut s = Simpson { f: &mut f };
    s.recurse(a, b, fa, fm, fb, whole, rel_tol * scale, MAX_DEPTH)
}

fn check_grid(tau_grid: &[f64]) -> Result<(), PredictError> {
    let ok = tau_grid.iter().all(|t| t.is_finite() && *t >= 0.0) && tau_grid.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(PredictError::BadGrid)
    }
}

/// `∫₀^{t_k} ν̌` at every `t_k` in an increasing list of real times, split
/// at the schedule's kinks.
pub fn cumulative_rate_integral(
    space: &StateSpace,
    s: &RateSchedule,
    times: &[f64],
    rel_tol: f64,
) -> Result<Vec<f64>, PredictError> {
    let mut kinks: Vec<f64> = [s.freeze_time(), Some(s.u_depletion_time())].into_iter().flatten().collect();
    kinks.sort_by(f64::total_cmp);
    let nu = |t: f64| nu_check(space, s, t).map_err(PredictError::from);
    let mut out = Vec::with_capacity(times.len());
    let (mut acc, mut from) = (0.0, 0.0);
    for &to in times {
        let mut a = from;
        for &k in kinks.iter().filter(|&&k| k > from && k < to) {
            acc += adaptive_simpson(nu, a, k, rel_tol)?;
            a = k;
        }
        acc += adaptive_simpson(nu, a, to, rel_tol)?;
        out.push(acc);
        from = to;
    }
    Ok(out)
}

/// Survival of `T_v/M` on `tau_grid`. The `(1 − ε̌(0))` prefactor is
/// dropped so the curve starts at 1; it is 0 once `Mτ` reaches the
/// depletion time.
pub fn predicted_survival(
    space: &StateSpace,
    s: &RateSchedule,
    m: f64,
    tau_grid: &[f64],
) -> Result<SurvivalPrediction, PredictError> {
    predicted_survival_with(space, s, m, tau_grid, RegimeThresholds::default(), DEFAULT_QUAD_TOLERANCE)
}

pub fn predicted_survival_with(
    space: &StateSpace,
    s: &RateSchedule,
    m: f64,
    tau_grid: &[f64],
    thresholds: RegimeThresholds,
    rel_tol: f64,
) -> Result<SurvivalPrediction, PredictError> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(PredictError::BadScale(m));
    }
    check_grid(tau_grid)?;
    let nu0 = nu_check(space, s, 0.0)?;
    let (regime, product) = regime_classify(m, nu0, thresholds);
    let depletion = s.effective_depletion_time();
    let truncation = depletion.map(|d| d / m);
    let live: Vec<f64> = tau_grid
        .iter()
        .map(|&tau| m * tau)
        .take_while(|&t| depletion.map_or(true, |d| t < d))
        .collect();
    let integrals = cumulative_rate_integral(space, s, &live, rel_tol)?;
    let mut survival: Vec<f64> = integrals.iter().map(|i| (-i).exp()).collect();
    survival.resize(tau_grid.len(), 0.0);
    Ok(SurvivalPrediction { tau: tau_grid.to_vec(), survival, regime, m, nu0, product, truncation })
}

/// `1/ν̌(0)`, the scale at which `M·ν̌(0) = 1`.
pub fn critical_timescale(space: &StateSpace, s: &RateSchedule) -> Result<f64, PredictError> {
    Ok(1.0 / nu_check(space, s, 0.0)?)
}

/// Leading-order mean crossover time `λ_U^{m−1}/m` on a complete bipartite
/// graph with `|U| = m`.
pub fn cbg_mean_crossover(m: usize, lambda_u: f64) -> Result<f64, PredictError> {
    if m < 2 {
        return Err(PredictError::BadArgument(format!("|U| must be at least 2 (got {m})")));
    }
    if !(lambda_u > 0.0) {
        return Err(PredictError::BadArgument(format!("lambda_u must be positive (got {lambda_u})")));
    }
    Ok(lambda_u.powi(m as i32 - 1) / m as f64)
}

/// Critical droplet size `⌈1/α⌉`.
pub fn critical_droplet(alpha: f64) -> Result<u32, PredictError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(PredictError::AlphaOutOfRange(alpha));
    }
    Ok((1.0 / alpha).ceil() as u32)
}

/// Leading-order mean crossover time on an `m × n` even torus:
/// `λ_U^{ℓ(ℓ+1)+1} / (4mnℓ λ_V^{ℓ(ℓ−1)})` with `ℓ = ⌈1/α⌉`.
pub fn torus_mean_crossover(m: usize, n: usize, lambda_u: f64, lambda_v: f64, alpha: f64) -> Result<f64, PredictError> {
    let l = critical_droplet(alpha)? as i32;
    if m == 0 || n == 0 || m % 2 != 0 || n % 2 != 0 {
        return Err(PredictError::BadArgument(format!("torus sides must be even and positive (got {m}x{n})")));
    }
    let lf = l as f64;
    Ok(lambda_u.powi(l * (l + 1) + 1) / (4.0 * (m * n) as f64 * lf * lambda_v.powi(l * (l - 1))))
}

/// Parameters of the complete bipartite closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbgParams {
    pub n_u: usize,
    pub beta_u: f64,
    pub c_u: f64,
    pub mu_u: f64,
    pub lambda: f64,
}

impl CbgParams {
    pub fn from_schedule(n_u: usize, s: &RateSchedule) -> Self {
        CbgParams { n_u, beta_u: s.beta_u().to_f64(), c_u: s.c_u(), mu_u: s.mu_u(), lambda: s.lambda() }
    }

    pub fn exponent(&self) -> f64 {
        (self.n_u as f64 - 1.0) * self.beta_u
    }
}

/// `exp(−∫₀^τ M (c_Uλ − μ_U Mσ)^{−p} dσ)`, `p = (|U|−1)β_U`, in closed form;
/// 0 for `τ ≥ (c_U/μ_U)(λ/M)`.
pub fn cbg_closed_form_survival(params: &CbgParams, m: f64, tau: f64) -> Result<f64, PredictError> {
    cbg_closed_form_survival_scaled(params, m, tau, 1.0)
}

/// As [`cbg_closed_form_survival`] with the integrand multiplied by
/// `kappa`, the bounded prefactor of `ν̌(s) ≈ κ λ_U(s)^{−(|U|−1)}`.
pub fn cbg_closed_form_survival_scaled(params: &CbgParams, m: f64, tau: f64, kappa: f64) -> Result<f64, PredictError> {
    let p = params.exponent();
    if !(p > 0.0) {
        return Err(PredictError::NonPositiveExponent(p));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(PredictError::BadScale(m));
    }
    if !(tau >= 0.0) {
        return Err(PredictError::BadGrid);
    }
    let x0 = params.c_u * params.lambda;
    let xt = x0 - params.mu_u * m * tau;
    if xt <= 0.0 {
        return Ok(0.0);
    }
    let integral = if (p - 1.0).abs() < 1e-12 {
        (x0 / xt).ln() / params.mu_u
    } else {
        (xt.powf(1.0 - p) - x0.powf(1.0 - p)) / (params.mu_u * (p - 1.0))
    };
    Ok((-kappa * integral).exp())
}

/// `κ = ν̌(0)·(c_Uλ)^p`, matching the closed form's rate to the exact one
/// at time 0.
pub fn cbg_prefactor(space: &StateSpace, s: &RateSchedule) -> Result<f64, PredictError> {
    let params = CbgParams::from_schedule(space.n_u(), s);
    Ok(nu_check(space, s, 0.0)? * (params.c_u * params.lambda).powf(params.exponent()))
}

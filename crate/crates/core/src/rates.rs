//! Time-varying activation rates `λ_U(t)`, `λ_V(t)` and the clock rate `γ(t)`.
//!
//! `λ_U(t) = ([c_U λ − μ_U t]^+)^{β_U}` decreases to zero at the depletion
//! time `c_U λ / μ_U`; `λ_V(t) = (c_V λ + μ_V t)^{β_V}` grows. An optional
//! freeze time holds both rates at their values from then on.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::topology::BipartiteGraph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("{name} must be positive and finite (got {value})")]
    NotPositive { name: &'static str, value: f64 },
    #[error("exponents must satisfy beta_v > beta_u > 0 (got beta_u={beta_u}, beta_v={beta_v})")]
    BadExponents { beta_u: Rational64, beta_v: Rational64 },
    #[error("freeze time must be nonnegative (got {0})")]
    NegativeFreeze(f64),
    #[error("cannot parse `{0}` as a rational number")]
    BadRational(String),
}

/// Exact rational exponent, parsed from `"p/q"`, an integer, or a decimal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exponent(pub Rational64);

impl Exponent {
    pub fn new(numer: i64, denom: i64) -> Self {
        Exponent(Rational64::new(numer, denom))
    }

    pub fn value(self) -> Rational64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl FromStr for Exponent {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ScheduleError::BadRational(s.to_string());
        let t = s.trim();
        if let Some((p, q)) = t.split_once('/') {
            let p: i64 = p.trim().parse().map_err(|_| bad())?;
            let q: i64 = q.trim().parse().map_err(|_| bad())?;
            if q == 0 {
                return Err(bad());
            }
            return Ok(Exponent(Rational64::new(p, q)));
        }
        let (neg, digits) = match t.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, t),
        };
        let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
        if int.is_empty() && frac.is_empty()
            || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit())
            || frac.len() > 15
        {
            return Err(bad());
        }
        let denom = 10i64.pow(frac.len() as u32);
        let whole: i64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let part: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let numer = whole
            .checked_mul(denom)
            .and_then(|w| w.checked_add(part))
            .ok_or_else(bad)?;
        let r = Rational64::new(numer, denom);
        Ok(Exponent(if neg { -r } else { r }))
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Int(i64),
            Float(f64),
        }
        let text = match Raw::deserialize(d)? {
            Raw::Text(s) => s,
            Raw::Int(i) => i.to_string(),
            // shortest round-trip decimal, then read exactly
            Raw::Float(x) => format!("{x}"),
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Anything that can drive the simulator: per-site birth rates on each side.
///
/// Implementations must keep `lambda_u` nonincreasing and `lambda_v`
/// nondecreasing in time; the thinning envelopes rely on it.
pub trait ActivationRates: Sync {
    fn lambda_u(&self, t: f64) -> f64;
    fn lambda_v(&self, t: f64) -> f64;

    /// Length of the windows on which thinning envelopes are recomputed.
    fn envelope_window(&self, t_max: f64) -> f64 {
        t_max
    }

    fn gamma(&self, g: &BipartiteGraph, t: f64) -> f64 {
        (1.0 + self.lambda_u(t)) * g.n_u() as f64 + (1.0 + self.lambda_v(t)) * g.n_v() as f64
    }

    /// Upper bound of `γ` on `[t0, t1]`, exact at `t0 == t1`.
    fn gamma_sup(&self, g: &BipartiteGraph, t0: f64, t1: f64) -> f64 {
        (1.0 + self.lambda_u(t0)) * g.n_u() as f64 + (1.0 + self.lambda_v(t1)) * g.n_v() as f64
    }
}

/// Time-homogeneous rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantRates {
    pub lambda_u: f64,
    pub lambda_v: f64,
}

impl ActivationRates for ConstantRates {
    fn lambda_u(&self, _t: f64) -> f64 {
        self.lambda_u
    }

    fn lambda_v(&self, _t: f64) -> f64 {
        self.lambda_v
    }
}

/// Parameters of the power-law schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleSpec", into = "ScheduleSpec")]
pub struct RateSchedule {
    lambda: f64,
    c_u: f64,
    c_v: f64,
    mu_u: f64,
    mu_v: f64,
    beta_u: Exponent,
    beta_v: Exponent,
    freeze_time: Option<f64>,
}

/// Serialized form of a [`RateSchedule`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub lambda: f64,
    pub c_u: f64,
    pub c_v: f64,
    pub mu_u: f64,
    pub mu_v: f64,
    pub beta_u: Exponent,
    pub beta_v: Exponent,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze_time: Option<f64>,
}

impl TryFrom<ScheduleSpec> for RateSchedule {
    type Error = ScheduleError;

    fn try_from(s: ScheduleSpec) -> Result<Self, Self::Error> {
        RateSchedule::new(s.lambda, s.c_u, s.c_v, s.mu_u, s.mu_v, s.beta_u, s.beta_v, s.freeze_time)
    }
}

impl From<RateSchedule> for ScheduleSpec {
    fn from(s: RateSchedule) -> Self {
        ScheduleSpec {
            lambda: s.lambda,
            c_u: s.c_u,
            c_v: s.c_v,
            mu_u: s.mu_u,
            mu_v: s.mu_v,
            beta_u: s.beta_u,
            beta_v: s.beta_v,
            freeze_time: s.freeze_time,
        }
    }
}

impl RateSchedule {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lambda: f64,
        c_u: f64,
        c_v: f64,
        mu_u: f64,
        mu_v: f64,
        beta_u: Exponent,
        beta_v: Exponent,
        freeze_time: Option<f64>,
    ) -> Result<Self, ScheduleError> {
        for (name, value) in [
            ("lambda", lambda),
            ("c_u", c_u),
            ("c_v", c_v),
            ("mu_u", mu_u),
            ("mu_v", mu_v),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ScheduleError::NotPositive { name, value });
            }
        }
        if !(beta_u.0.is_positive() && beta_v.0 > beta_u.0) {
            return Err(ScheduleError::BadExponents { beta_u: beta_u.0, beta_v: beta_v.0 });
        }
        if let Some(f) = freeze_time {
            if !(f >= 0.0) {
                return Err(ScheduleError::NegativeFreeze(f));
            }
        }
        Ok(Self { lambda, c_u, c_v, mu_u, mu_v, beta_u, beta_v, freeze_time })
    }

    /// Unit coefficients: `λ_U(t) = (λ − t)^+^{β_U}`, `λ_V(t) = (λ + t)^{β_V}`.
    pub fn unit(lambda: f64, beta_u: Exponent, beta_v: Exponent) -> Result<Self, ScheduleError> {
        Self::new(lambda, 1.0, 1.0, 1.0, 1.0, beta_u, beta_v, None)
    }

    pub fn with_freeze_time(mut self, freeze_time: Option<f64>) -> Result<Self, ScheduleError> {
        if let Some(f) = freeze_time {
            if !(f >= 0.0) {
                return Err(ScheduleError::NegativeFreeze(f));
            }
        }
        self.freeze_time = freeze_time;
        Ok(self)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self, ScheduleError> {
        let mut spec = ScheduleSpec::from(self.clone());
        spec.lambda = lambda;
        spec.try_into()
    }

    pub fn with_betas(&self, beta_u: Exponent, beta_v: Exponent) -> Result<Self, ScheduleError> {
        let mut spec = ScheduleSpec::from(self.clone());
        spec.beta_u = beta_u;
        spec.beta_v = beta_v;
        spec.try_into()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn c_u(&self) -> f64 {
        self.c_u
    }
    pub fn c_v(&self) -> f64 {
        self.c_v
    }
    pub fn mu_u(&self) -> f64 {
        self.mu_u
    }
    pub fn mu_v(&self) -> f64 {
        self.mu_v
    }
    pub fn beta_u(&self) -> Exponent {
        self.beta_u
    }
    pub fn beta_v(&self) -> Exponent {
        self.beta_v
    }
    pub fn freeze_time(&self) -> Option<f64> {
        self.freeze_time
    }

    fn effective_time(&self, t: f64) -> f64 {
        match self.freeze_time {
            Some(f) => t.min(f),
            None => t,
        }
    }

    pub fn lambda_u_at(&self, t: f64) -> f64 {
        let base = self.c_u * self.lambda - self.mu_u * self.effective_time(t);
        if base <= 0.0 {
            0.0
        } else {
            base.powf(self.beta_u.to_f64())
        }
    }

    pub fn lambda_v_at(&self, t: f64) -> f64 {
        (self.c_v * self.lambda + self.mu_v * self.effective_time(t)).powf(self.beta_v.to_f64())
    }

    pub fn gamma_at(&self, g: &BipartiteGraph, t: f64) -> f64 {
        ActivationRates::gamma(self, g, t)
    }

    pub fn gamma_sup(&self, g: &BipartiteGraph, t0: f64, t1: f64) -> f64 {
        ActivationRates::gamma_sup(self, g, t0, t1)
    }

    /// Limit of `log λ_V / log λ_U − 1`, i.e. `β_V/β_U − 1`.
    pub fn alpha(&self) -> f64 {
        (self.beta_v.0 / self.beta_u.0 - Rational64::from_integer(1))
            .to_f64()
            .unwrap_or(f64::NAN)
    }

    pub fn alpha_exact(&self) -> Rational64 {
        self.beta_v.0 / self.beta_u.0 - Rational64::from_integer(1)
    }

    /// Time at which `λ_U` reaches zero, ignoring any freeze.
    pub fn u_depletion_time(&self) -> f64 {
        self.c_u * self.lambda / self.mu_u
    }

    /// Depletion time if it is reached before the schedule freezes.
    pub fn effective_depletion_time(&self) -> Option<f64> {
        let d = self.u_depletion_time();
        match self.freeze_time {
            Some(f) if f < d => None,
            _ => Some(d),
        }
    }

    /// Homogeneous rates frozen at time `t`.
    pub fn frozen_at(&self, t: f64) -> ConstantRates {
        ConstantRates { lambda_u: self.lambda_u_at(t), lambda_v: self.lambda_v_at(t) }
    }
}

impl ActivationRates for RateSchedule {
    fn lambda_u(&self, t: f64) -> f64 {
        self.lambda_u_at(t)
    }

    fn lambda_v(&self, t: f64) -> f64 {
        self.lambda_v_at(t)
    }

    fn envelope_window(&self, t_max: f64) -> f64 {
        let mu_max = self.mu_u.max(self.mu_v);
        (t_max / 64.0).min(self.lambda / (8.0 * mu_max))
    }
}

impl std::ops::Add for Exponent {
    type Output = Exponent;

    fn add(self, rhs: Exponent) -> Exponent {
        Exponent(self.0 + rhs.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn r(p: i64, q: i64) -> Exponent {
        Exponent::new(p, q)
    }

    fn unit(lambda: f64, bu: Exponent, bv: Exponent) -> RateSchedule {
        RateSchedule::unit(lambda, bu, bv).unwrap()
    }

    #[test]
    fn lambda_u_values() {
        let s = unit(100.0, r(1, 1), r(3, 2));
        assert_eq!(s.lambda_u_at(0.0), 100.0);
        assert_eq!(s.lambda_u_at(100.0), 0.0);
        assert_eq!(s.lambda_u_at(150.0), 0.0);
        let s = unit(100.0, r(1, 2), r(3, 4));
        assert_relative_eq!(s.lambda_u_at(75.0), 5.0, max_relative = 1e-15);
    }

    #[test]
    fn lambda_v_values_and_freezing() {
        let s = unit(100.0, r(1, 2), r(1, 1));
        assert_eq!(s.lambda_v_at(0.0), 100.0);
        assert_eq!(s.lambda_v_at(50.0), 150.0);
        let frozen = s.clone().with_freeze_time(Some(50.0)).unwrap();
        assert_eq!(frozen.lambda_v_at(80.0), 150.0);
        assert_eq!(frozen.lambda_u_at(80.0), frozen.lambda_u_at(50.0));
    }

    #[test]
    fn gamma_formula() {
        let k11 = BipartiteGraph::complete_bipartite(1, 1).unwrap();
        let k22 = BipartiteGraph::complete_bipartite(2, 2).unwrap();
        let c = |lu, lv| ConstantRates { lambda_u: lu, lambda_v: lv };
        assert_eq!(c(2.0, 4.0).gamma(&k11, 0.0), 8.0);
        assert_eq!(c(3.0, 5.0).gamma(&k22, 0.0), 20.0);
        assert_eq!(c(0.0, 9.0).gamma(&k22, 0.0), 22.0);
    }

    #[test]
    fn gamma_sup_values() {
        let k22 = BipartiteGraph::complete_bipartite(2, 2).unwrap();
        // linear rates: (1+100)*2 + (1+110)*2
        assert_eq!(LinearRates.gamma_sup(&k22, 0.0, 10.0), 424.0);
        let s = unit(100.0, r(1, 1), r(3, 2));
        let frozen = s.clone().with_freeze_time(Some(0.0)).unwrap();
        assert_eq!(frozen.gamma_sup(&k22, 0.0, 10.0), frozen.gamma_at(&k22, 5.0));
        for t in [0.0, 3.5, 99.0, 120.0] {
            assert_eq!(s.gamma_sup(&k22, t, t), s.gamma_at(&k22, t));
        }
    }

    /// `λ_U = 100 − t`, `λ_V = 100 + t`: the linear case that the exponent
    /// invariant `β_V > β_U` excludes from [`RateSchedule`].
    struct LinearRates;

    impl ActivationRates for LinearRates {
        fn lambda_u(&self, t: f64) -> f64 {
            (100.0 - t).max(0.0)
        }
        fn lambda_v(&self, t: f64) -> f64 {
            100.0 + t
        }
    }

    #[test]
    fn alpha_and_depletion() {
        assert_eq!(unit(10.0, r(1, 1), r(3, 2)).alpha(), 0.5);
        assert_eq!(unit(10.0, r(1, 2), r(3, 4)).alpha(), 0.5);
        assert!(matches!(
            RateSchedule::unit(10.0, r(1, 2), r(1, 2)),
            Err(ScheduleError::BadExponents { .. })
        ));
        assert_eq!(unit(100.0, r(1, 1), r(2, 1)).u_depletion_time(), 100.0);
        let s = RateSchedule::new(100.0, 2.0, 1.0, 4.0, 1.0, r(1, 1), r(2, 1), None).unwrap();
        assert_eq!(s.u_depletion_time(), 50.0);
        assert_eq!(unit(1.0, r(1, 1), r(2, 1)).u_depletion_time(), 1.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(RateSchedule::new(0.0, 1.0, 1.0, 1.0, 1.0, r(1, 2), r(1, 1), None).is_err());
        assert!(RateSchedule::new(1.0, 1.0, -1.0, 1.0, 1.0, r(1, 2), r(1, 1), None).is_err());
        assert!(RateSchedule::new(1.0, 1.0, 1.0, 1.0, 1.0, r(0, 1), r(1, 1), None).is_err());
        assert!(RateSchedule::new(1.0, 1.0, 1.0, 1.0, 1.0, r(1, 2), r(1, 1), Some(-1.0)).is_err());
    }

    #[test]
    fn exponent_parsing() {
        assert_eq!("3/2".parse::<Exponent>().unwrap(), r(3, 2));
        assert_eq!("1.5".parse::<Exponent>().unwrap(), r(3, 2));
        assert_eq!("0.75".parse::<Exponent>().unwrap(), r(3, 4));
        assert_eq!("2".parse::<Exponent>().unwrap(), r(2, 1));
        assert!("x/2".parse::<Exponent>().is_err());
        assert!("1/0".parse::<Exponent>().is_err());
        let json = r#"{"lambda":100,"c_u":1,"c_v":1,"mu_u":1,"mu_v":1,"beta_u":"1/2","beta_v":0.75}"#;
        let s: RateSchedule = serde_json::from_str(json).unwrap();
        assert_eq!((s.beta_u(), s.beta_v()), (r(1, 2), r(3, 4)));
        let back: RateSchedule = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"lambda":100,"c_u":1,"c_v":1,"mu_u":1,"mu_v":1,"beta_u":"1","beta_v":"1/2"}"#;
        assert!(serde_json::from_str::<RateSchedule>(bad).is_err());
    }

    fn small_exponent() -> impl Strategy<Value = Exponent> {
        (1i64..=8).prop_map(|p| Exponent::new(p, 4))
    }

    proptest! {
        #[test]
        fn rates_are_monotone(lambda in 1.0f64..500.0, cu in 0.2f64..3.0, mu in 0.2f64..3.0,
                              bu in small_exponent(), t0 in 0.0f64..600.0, dt in 0.0f64..50.0) {
            let s = RateSchedule::new(lambda, cu, 1.0, mu, mu, bu, bu + Exponent::new(1, 4), None).unwrap();
            prop_assert!(s.lambda_u_at(t0 + dt) <= s.lambda_u_at(t0));
            prop_assert!(s.lambda_v_at(t0 + dt) >= s.lambda_v_at(t0));
        }

        #[test]
        fn gamma_sup_dominates(lambda in 1.0f64..300.0, bu in small_exponent(),
                               t0 in 0.0f64..400.0, width in 0.0f64..40.0, frac in 0.0f64..1.0) {
            let g = BipartiteGraph::complete_bipartite(2, 3).unwrap();
            let s = unit(lambda, bu, bu + Exponent::new(1, 2));
            let t = t0 + frac * width;
            let sup = s.gamma_sup(&g, t0, t0 + width);
            let gamma = s.gamma_at(&g, t);
            prop_assert!(gamma.is_finite() && gamma > 0.0);
            prop_assert!(gamma <= sup * (1.0 + 1e-12));
        }

        // ratio bounds on both rates for nearby times away from depletion
        #[test]
        fn rate_ratio_regularity(lambda in 10.0f64..1000.0, cu in 0.5f64..2.0, cv in 0.5f64..2.0,
                                 mu_u in 0.1f64..3.0, mu_v in 0.1f64..3.0,
                                 bu in (1i64..=7).prop_map(|p| Exponent::new(p, 4)),
                                 a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let bv = bu + Exponent::new(1, 4);
            let s = RateSchedule::new(lambda, cu, cv, mu_u, mu_v, bu, bv, None).unwrap();
            // times with c_U λ − μ_U max(s, s') ≥ c_U λ / 2 and μ_V max(s, s') ≤ c_V λ
            let limit = (cu * lambda / (2.0 * mu_u)).min(cv * lambda / mu_v);
            let (t, tp) = (a * limit, b * limit);
            let theta_u = 4.0 * bu.to_f64() * mu_u * (t - tp).abs() / (cu * lambda);
            let ru = s.lambda_u_at(t) / s.lambda_u_at(tp);
            prop_assert!(ru <= (1.0 + theta_u) * (1.0 + 1e-12));
            prop_assert!(ru >= 1.0 / (1.0 + theta_u) * (1.0 - 1e-12));
            let theta_v = 4.0 * bv.to_f64() * mu_v * (t - tp).abs() / (cv * lambda);
            let rv = s.lambda_v_at(t) / s.lambda_v_at(tp);
            prop_assert!(rv <= (1.0 + theta_v) * (1.0 + 1e-12));
            prop_assert!(rv >= 1.0 / (1.0 + theta_v) * (1.0 - 1e-12));
        }

        #[test]
        fn order_stability(lambda in 10.0f64..1000.0, cu in 0.5f64..2.0, cv in 0.5f64..2.0,
                           mu_u in 0.1f64..3.0, mu_v in 0.1f64..3.0, bu in small_exponent(),
                           delta in 0.05f64..0.95, m_frac in 0.01f64..1.0, tau in 0.1f64..5.0,
                           frac in 0.0f64..1.0) {
            let bv = bu + Exponent::new(1, 2);
            let s = RateSchedule::new(lambda, cu, cv, mu_u, mu_v, bu, bv, None).unwrap();
            let m = m_frac * lambda;
            let sigma_max = tau.min((1.0 - delta) * cu * lambda / (mu_u * m));
            let sigma = frac * sigma_max;
            let ru = s.lambda_u_at(m * sigma) / s.lambda_u_at(0.0);
            prop_assert!(ru <= 1.0 + 1e-12);
            prop_assert!(ru >= delta.powf(bu.to_f64()) * (1.0 - 1e-12));
            let rv = s.lambda_v_at(m * sigma) / s.lambda_v_at(0.0);
            prop_assert!(rv >= 1.0 - 1e-12);
            let cap = ((cv + mu_v * tau * m / lambda) / cv).powf(bv.to_f64());
            prop_assert!(rv <= cap * (1.0 + 1e-12));
        }
    }
}

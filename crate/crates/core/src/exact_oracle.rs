//! Exact computations for the chain with frozen rates on an enumerated
//! state space.
//!
//! The discrete kernel moves from `x` to a neighbour by a birth in `U`
//! with probability `λ_U/γ`, a birth in `V` with `λ_V/γ`, or a death with
//! `1/γ`; the diagonal absorbs blocked and no-op ticks. Continuous-time
//! quantities divide discrete step counts by `γ`.
//!
//! A tick that leaves the chain at `u` counts as a return to `u`, so the
//! success probability of a trial is `Σ_y K(u,y) h(y)` with `h` the
//! probability of hitting `v` before `u`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::rates::RateSchedule;
use crate::topology::{MoveKind, StateSpace};

/// Relative residual accepted from the dense solves.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("linear system is singular: some state cannot reach the boundary")]
    Singular,
    #[error("solve residual {residual:e} exceeds {RESIDUAL_TOLERANCE:e}")]
    Residual { residual: f64 },
    #[error("source and target states coincide (index {0})")]
    SameState(usize),
    #[error("state index {0} out of range")]
    BadIndex(usize),
    #[error("rates must be finite with lambda_u >= 0 and lambda_v > 0 (got {lambda_u}, {lambda_v})")]
    BadRates { lambda_u: f64, lambda_v: f64 },
}

/// Row-stochastic kernel of the chain with rates frozen at `time`.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    pub matrix: DMatrix<f64>,
    pub time: f64,
    pub gamma: f64,
    pub lambda_u: f64,
    pub lambda_v: f64,
}

#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    pub probs: Vec<f64>,
    pub lambda_u: f64,
    pub lambda_v: f64,
}

fn check_rates(lu: f64, lv: f64) -> Result<(), OracleError> {
    if lu >= 0.0 && lv > 0.0 && lu.is_finite() && lv.is_finite() {
        Ok(())
    } else {
        Err(OracleError::BadRates { lambda_u: lu, lambda_v: lv })
    }
}

/// Clock rate `(1+λ_U)|U| + (1+λ_V)|V|` for a state space.
pub fn clock_rate(space: &StateSpace, lu: f64, lv: f64) -> f64 {
    (1.0 + lu) * space.n_u() as f64 + (1.0 + lv) * space.n_v() as f64
}

/// Jump rate of a single-site move, before division by `γ`.
fn move_rate(kind: MoveKind, lu: f64, lv: f64) -> f64 {
    match kind {
        MoveKind::BirthU => lu,
        MoveKind::BirthV => lv,
        MoveKind::DeathU | MoveKind::DeathV => 1.0,
    }
}

/// Kernel with explicit frozen rates.
pub fn kernel(space: &StateSpace, lu: f64, lv: f64) -> Result<TransitionKernel, OracleError> {
    check_rates(lu, lv)?;
    let n = space.len();
    let gamma = clock_rate(space, lu, lv);
    let mut matrix = DMatrix::zeros(n, n);
    for x in 0..n {
        let mut out = 0.0;
        for mv in space.moves(x) {
            let p = move_rate(mv.kind, lu, lv) / gamma;
            matrix[(x, mv.to)] = p;
            out += p;
        }
        matrix[(x, x)] = 1.0 - out;
    }
    Ok(TransitionKernel { matrix, time: f64::NAN, gamma, lambda_u: lu, lambda_v: lv })
}

/// Kernel `K^{(t)}` with the schedule's rates at time `t`.
pub fn kernel_at(space: &StateSpace, s: &RateSchedule, t: f64) -> Result<TransitionKernel, OracleError> {
    let mut k = kernel(space, s.lambda_u_at(t), s.lambda_v_at(t))?;
    k.time = t;
    Ok(k)
}

/// Reversible law `π(x) ∝ λ_U^{a(x)} λ_V^{b(x)}`.
pub fn stationary(space: &StateSpace, lu: f64, lv: f64) -> Result<StationaryDistribution, OracleError> {
    check_rates(lu, lv)?;
    // log weights keep large exponents representable
    let log_w: Vec<f64> = (0..space.len())
        .map(|x| {
            let (a, b) = space.counts(x);
            let lu_part = if a == 0 { 0.0 } else { a as f64 * lu.ln() };
            lu_part + b as f64 * lv.ln()
        })
        .collect();
    let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(StationaryDistribution {
        probs: w.into_iter().map(|x| x / z).collect(),
        lambda_u: lu,
        lambda_v: lv,
    })
}

struct Solution {
    x: DVector<f64>,
}

/// Solves `A x = b` by LU with partial pivoting and checks the relative
/// residual `‖Ax−b‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞)`.
fn solve_dense(a: DMatrix<f64>, b: DVector<f64>) -> Result<Solution, OracleError> {
    let lu = a.clone().lu();
    let x = lu.solve(&b).ok_or(OracleError::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::Singular);
    }
    let r = &a * &x - &b;
    let norm_a = a
        .row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let denom = norm_a * x.amax() + b.amax();
    let residual = if denom > 0.0 { r.amax() / denom } else { r.amax() };
    if residual > RESIDUAL_TOLERANCE {
        return Err(OracleError::Residual { residual });
    }
    Ok(Solution { x })
}

/// Solves `Σ_y q(x,y)(f(x) − f(y)) = source(x)` for `x` off the boundary,
/// with `f` fixed on the boundary. Rows are scaled by their total rate.
fn boundary_value_solve(
    space: &StateSpace,
    lu: f64,
    lv: f64,
    boundary: &[(usize, f64)],
    source: impl Fn(usize) -> f64,
) -> Result<Vec<f64>, OracleError> {
    let n = space.len();
    let mut fixed = vec![None; n];
    for &(i, val) in boundary {
        fixed[i] = Some(val);
    }
    let interior: Vec<usize> = (0..n).filter(|&x| fixed[x].is_none()).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &x) in interior.iter().enumerate() {
        slot[x] = k;
    }
    let m = interior.len();
    let mut a = DMatrix::zeros(m, m);
    let mut b = DVector::zeros(m);
    for (k, &x) in interior.iter().enumerate() {
        let total: f64 = space.moves(x).iter().map(|mv| move_rate(mv.kind, lu, lv)).sum();
        if total == 0.0 {
            return Err(OracleError::Singular);
        }
        a[(k, k)] = 1.0;
        b[k] = source(x) / total;
        for mv in space.moves(x) {
            let q = move_rate(mv.kind, lu, lv) / total;
            if q == 0.0 {
                continue;
            }
            match fixed[mv.to] {
                Some(val) => b[k] += q * val,
                None => a[(k, slot[mv.to])] -= q,
            }
        }
    }
    let sol = if m > 0 { solve_dense(a, b)?.x } else { DVector::zeros(0) };
    Ok((0..n)
        .map(|x| fixed[x].unwrap_or_else(|| sol[slot[x]]))
        .collect())
}

fn check_index(space: &StateSpace, i: usize) -> Result<(), OracleError> {
    if i < space.len() {
        Ok(())
    } else {
        Err(OracleError::BadIndex(i))
    }
}

/// Probability of hitting `target` before `avoid`, for every start state.
pub fn hitting_probabilities(
    space: &StateSpace,
    lu: f64,
    lv: f64,
    target: usize,
    avoid: usize,
) -> Result<Vec<f64>, OracleError> {
    check_rates(lu, lv)?;
    check_index(space, target)?;
    check_index(space, avoid)?;
    if target == avoid {
        return Err(OracleError::SameState(target));
    }
    boundary_value_solve(space, lu, lv, &[(target, 1.0), (avoid, 0.0)], |_| 0.0)
}

/// `P_u(T_v < T_u^↺)` for the discrete chain: success probability of one
/// trial started at `u`.
pub fn hitting_prob_before_return(space: &StateSpace, lu: f64, lv: f64) -> Result<f64, OracleError> {
    let (u, v) = (space.u_index(), space.v_index());
    let h = hitting_probabilities(space, lu, lv, v, u)?;
    let gamma = clock_rate(space, lu, lv);
    Ok(space
        .moves(u)
        .iter()
        .map(|mv| move_rate(mv.kind, lu, lv) / gamma * h[mv.to])
        .sum())
}

/// Mean number of clock ticks to reach `to`, for every start state.
pub fn expected_steps(
    space: &StateSpace,
    lu: f64,
    lv: f64,
    to: usize,
) -> Result<Vec<f64>, OracleError> {
    check_rates(lu, lv)?;
    check_index(space, to)?;
    let gamma = clock_rate(space, lu, lv);
    // Σ_y K(x,y)(E_x − E_y) = 1, i.e. Σ_y q(x,y)(E_x − E_y) = γ
    boundary_value_solve(space, lu, lv, &[(to, 0.0)], |_| gamma)
}

/// Mean continuous hitting time `E_from[T_to]`.
pub fn expected_hitting_time(
    space: &StateSpace,
    lu: f64,
    lv: f64,
    from: usize,
    to: usize,
) -> Result<f64, OracleError> {
    check_index(space, from)?;
    if from == to {
        return Err(OracleError::SameState(from));
    }
    let steps = expected_steps(space, lu, lv, to)?;
    Ok(steps[from] / clock_rate(space, lu, lv))
}

/// Effective resistance between `a` and `b` in the network with
/// conductances `c(x,y) = π(x)K(x,y)`. Returns `f64::INFINITY` when no
/// positive-conductance path joins them.
pub fn effective_resistance(
    space: &StateSpace,
    lu: f64,
    lv: f64,
    a: usize,
    b: usize,
) -> Result<f64, OracleError> {
    check_index(space, a)?;
    check_index(space, b)?;
    if a == b {
        return Err(OracleError::SameState(a));
    }
    let pi = stationary(space, lu, lv)?;
    let gamma = clock_rate(space, lu, lv);
    let n = space.len();
    let conductance = |x: usize, kind: MoveKind| pi.probs[x] * move_rate(kind, lu, lv) / gamma;

    // restrict to the component of `a` joined by positive conductances
    let mut seen = vec![false; n];
    let mut stack = vec![a];
    seen[a] = true;
    while let Some(x) = stack.pop() {
        for mv in space.moves(x) {
            if !seen[mv.to] && conductance(x, mv.kind) > 0.0 {
                seen[mv.to] = true;
                stack.push(mv.to);
            }
        }
    }
    if !seen[b] {
        return Ok(f64::INFINITY);
    }
    let interior: Vec<usize> = (0..n).filter(|&x| seen[x] && x != a && x != b).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &x) in interior.iter().enumerate() {
        slot[x] = k;
    }
    // unit voltage at `a`, ground at `b`; rows normalized by total conductance
    let m = interior.len();
    let mut lap = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for (k, &x) in interior.iter().enumerate() {
        let total: f64 = space.moves(x).iter().map(|mv| conductance(x, mv.kind)).sum();
        lap[(k, k)] = 1.0;
        for mv in space.moves(x) {
            let c = conductance(x, mv.kind) / total;
            if c == 0.0 {
                continue;
            }
            if mv.to == a {
                rhs[k] += c;
            } else if mv.to != b {
                lap[(k, slot[mv.to])] -= c;
            }
        }
    }
    let voltage = if m > 0 { solve_dense(lap, rhs)?.x } else { DVector::zeros(0) };
    let potential = |y: usize| {
        if y == a {
            1.0
        } else if y == b {
            0.0
        } else {
            voltage[slot[y]]
        }
    };
    let current: f64 = space
        .moves(a)
        .iter()
        .map(|mv| conductance(a, mv.kind) * (1.0 - potential(mv.to)))
        .sum();
    Ok(1.0 / current)
}

/// `ν̌(t) = ε̌(t) γ(t)` with the schedule frozen at `t`.
pub fn nu_check(space: &StateSpace, s: &RateSchedule, t: f64) -> Result<f64, OracleError> {
    let (lu, lv) = (s.lambda_u_at(t), s.lambda_v_at(t));
    Ok(hitting_prob_before_return(space, lu, lv)? * clock_rate(space, lu, lv))
}

/// Frozen-time quantities reported by the `exact` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ExactRow {
    pub t: f64,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub gamma: f64,
    pub eps_check: f64,
    pub nu_check: f64,
    #[serde(rename = "mean_T_uv")]
    pub mean_t_uv: f64,
}

pub fn exact_row(space: &StateSpace, s: &RateSchedule, t: f64) -> Result<ExactRow, OracleError> {
    let (lu, lv) = (s.lambda_u_at(t), s.lambda_v_at(t));
    let gamma = clock_rate(space, lu, lv);
    let eps = hitting_prob_before_return(space, lu, lv)?;
    let mean = expected_hitting_time(space, lu, lv, space.u_index(), space.v_index())?;
    Ok(ExactRow {
        t,
        lambda_u: lu,
        lambda_v: lv,
        gamma,
        eps_check: eps,
        nu_check: eps * gamma,
        mean_t_uv: mean,
    })
}

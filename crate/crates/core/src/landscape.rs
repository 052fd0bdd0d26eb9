//! Exact order-of-magnitude arithmetic on the configuration graph.
//!
//! With `λ_U ≍ λ^{β_U}`, `λ_V ≍ λ^{β_V}` and `γ ≍ λ^{β_V}`, every stationary
//! weight, conductance and resistance is `≍ λ^d` for a degree
//! `d = a·β_U + b·β_V` with integer `a`, `b`. Degrees are compared exactly
//! as rationals; prefactors are invisible at this level.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_rational::Rational64;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::rates::Exponent;
use crate::topology::{BipartiteGraph, GraphFamily, MoveKind, StateSpace};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LandscapeError {
    #[error("exponents must satisfy beta_v > beta_u > 0")]
    BadExponents,
    #[error("states {0} and {1} are not joined by a single-site move")]
    NotAdjacent(usize, usize),
    #[error("state sets must be nonempty and disjoint")]
    BadSets,
    #[error("no path joins the two state sets")]
    Unreachable,
    #[error("state space has fewer than three states")]
    TooSmall,
    #[error("state index {0} out of range")]
    BadIndex(usize),
}

/// Pair of exact exponents with `β_V > β_U > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Betas {
    pub u: Rational64,
    pub v: Rational64,
}

impl Betas {
    pub fn new(u: Exponent, v: Exponent) -> Result<Self, LandscapeError> {
        if u.0 > Rational64::from_integer(0) && v.0 > u.0 {
            Ok(Betas { u: u.0, v: v.0 })
        } else {
            Err(LandscapeError::BadExponents)
        }
    }

    pub fn degree(&self, a: i64, b: i64) -> AsymptoticDegree {
        AsymptoticDegree {
            value: self.u * a + self.v * b,
            u_coeff: a,
            v_coeff: b,
        }
    }
}

/// Exponent `d` of a quantity `≍ λ^d`, with its `(a, b)` witness
/// `d = a·β_U + b·β_V`. Ordering and equality use the value only.
#[derive(Debug, Clone, Copy)]
pub struct AsymptoticDegree {
    pub value: Rational64,
    pub u_coeff: i64,
    pub v_coeff: i64,
}

impl AsymptoticDegree {
    pub fn zero() -> Self {
        AsymptoticDegree { value: Rational64::from_integer(0), u_coeff: 0, v_coeff: 0 }
    }

    pub fn scale(self, k: i64) -> Self {
        AsymptoticDegree { value: self.value * k, u_coeff: self.u_coeff * k, v_coeff: self.v_coeff * k }
    }
}

impl PartialEq for AsymptoticDegree {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl Eq for AsymptoticDegree {}

impl PartialOrd for AsymptoticDegree {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for AsymptoticDegree {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value.cmp(&other.value)
    }
}

/// Degree of a product.
impl Add for AsymptoticDegree {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        AsymptoticDegree {
            value: self.value + o.value,
            u_coeff: self.u_coeff + o.u_coeff,
            v_coeff: self.v_coeff + o.v_coeff,
        }
    }
}

/// Degree of a quotient.
impl Sub for AsymptoticDegree {
    type Output = Self;

    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

/// Degree of a reciprocal.
impl Neg for AsymptoticDegree {
    type Output = Self;

    fn neg(self) -> Self {
        AsymptoticDegree { value: -self.value, u_coeff: -self.u_coeff, v_coeff: -self.v_coeff }
    }
}

impl fmt::Display for AsymptoticDegree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.value.is_integer() {
            write!(f, "{}", self.value.numer())
        } else {
            write!(f, "{}/{}", self.value.numer(), self.value.denom())
        }
    }
}

impl Serialize for AsymptoticDegree {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("AsymptoticDegree", 3)?;
        st.serialize_field("degree", &self.to_string())?;
        st.serialize_field("u_coeff", &self.u_coeff)?;
        st.serialize_field("v_coeff", &self.v_coeff)?;
        st.end()
    }
}

/// Degree of a sum: the largest term.
pub fn degree_of_sum(terms: impl IntoIterator<Item = AsymptoticDegree>) -> Option<AsymptoticDegree> {
    terms.into_iter().max()
}

fn weight_degree(space: &StateSpace, x: usize, betas: &Betas) -> AsymptoticDegree {
    let (a, b) = space.counts(x);
    betas.degree(a as i64, b as i64)
}

/// Degree of the partition function: the largest weight degree, first by
/// state index on ties.
pub fn partition_degree(space: &StateSpace, betas: &Betas) -> AsymptoticDegree {
    let mut best = weight_degree(space, 0, betas);
    for x in 1..space.len() {
        let d = weight_degree(space, x, betas);
        if d > best {
            best = d;
        }
    }
    best
}

fn check_index(space: &StateSpace, x: usize) -> Result<(), LandscapeError> {
    if x < space.len() {
        Ok(())
    } else {
        Err(LandscapeError::BadIndex(x))
    }
}

/// `deg π(x) = a(x)β_U + b(x)β_V − deg Z`.
pub fn pi_degree(space: &StateSpace, x: usize, betas: &Betas) -> Result<AsymptoticDegree, LandscapeError> {
    check_index(space, x)?;
    Ok(weight_degree(space, x, betas) - partition_degree(space, betas))
}

fn kernel_degree(kind: MoveKind, betas: &Betas) -> AsymptoticDegree {
    match kind {
        MoveKind::BirthU => betas.degree(1, -1),
        MoveKind::BirthV => AsymptoticDegree::zero(),
        MoveKind::DeathU | MoveKind::DeathV => betas.degree(0, -1),
    }
}

/// Precomputed degrees for repeated queries on one state space.
#[derive(Debug, Clone)]
pub struct DegreeTable {
    pi: Vec<AsymptoticDegree>,
    /// Undirected configuration-graph edges `(x, y, deg r)`, `x < y`.
    edges: Vec<(usize, usize, AsymptoticDegree)>,
    n: usize,
}

impl DegreeTable {
    pub fn new(space: &StateSpace, betas: &Betas) -> Self {
        let z = partition_degree(space, betas);
        let pi: Vec<_> = (0..space.len()).map(|x| weight_degree(space, x, betas) - z).collect();
        let mut edges = Vec::new();
        for x in 0..space.len() {
            for mv in space.moves(x) {
                if x < mv.to {
                    edges.push((x, mv.to, -(pi[x] + kernel_degree(mv.kind, betas))));
                }
            }
        }
        edges.sort_by(|a, b| a.2.cmp(&b.2).then((a.0, a.1).cmp(&(b.0, b.1))));
        DegreeTable { pi, edges, n: space.len() }
    }

    pub fn pi(&self, x: usize) -> AsymptoticDegree {
        self.pi[x]
    }

    /// Minimax edge degree over paths from `a_set` to `b_set`, found by
    /// binary search over the sorted edge degrees with a connectivity check.
    pub fn critical_resistance(&self, a_set: &[usize], b_set: &[usize]) -> Result<AsymptoticDegree, LandscapeError> {
        let mut in_b = vec![false; self.n];
        for &b in b_set {
            if b >= self.n {
                return Err(LandscapeError::BadIndex(b));
            }
            in_b[b] = true;
        }
        if a_set.is_empty() || b_set.is_empty() {
            return Err(LandscapeError::BadSets);
        }
        for &a in a_set {
            if a >= self.n {
                return Err(LandscapeError::BadIndex(a));
            }
            if in_b[a] {
                return Err(LandscapeError::BadSets);
            }
        }
        // distinct degree thresholds, ascending
        let mut thresholds: Vec<AsymptoticDegree> = self.edges.iter().map(|e| e.2).collect();
        thresholds.dedup();
        let connected = |k: usize| {
            let limit = thresholds[k];
            let mut uf = UnionFind::new(self.n);
            for &(x, y, d) in &self.edges {
                if d > limit {
                    break;
                }
                uf.union(x, y);
            }
            let roots: std::collections::HashSet<usize> = b_set.iter().map(|&b| uf.find(b)).collect();
            a_set.iter().any(|&a| roots.contains(&uf.find(a)))
        };
        if thresholds.is_empty() || !connected(thresholds.len() - 1) {
            return Err(LandscapeError::Unreachable);
        }
        let (mut lo, mut hi) = (0, thresholds.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if connected(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(thresholds[lo])
    }

    /// `Ψ(x, targets)` for every `x` at once, by merging components in
    /// increasing edge order (Kruskal). Entries for targets are `None`.
    pub fn critical_resistance_to_set(&self, targets: &[usize]) -> Vec<Option<AsymptoticDegree>> {
        let mut uf = UnionFind::new(self.n);
        let mut members: Vec<Vec<usize>> = (0..self.n).map(|x| vec![x]).collect();
        let mut hits_target = vec![false; self.n];
        for &t in targets {
            hits_target[t] = true;
        }
        let mut out = vec![None; self.n];
        for &(x, y, d) in &self.edges {
            let (rx, ry) = (uf.find(x), uf.find(y));
            if rx == ry {
                continue;
            }
            let (tx, ty) = (hits_target[rx], hits_target[ry]);
            if tx != ty {
                let newly = if tx { &members[ry] } else { &members[rx] };
                for &z in newly {
                    out[z] = Some(d);
                }
            }
            let root = uf.union(rx, ry);
            let other = if root == rx { ry } else { rx };
            let moved = std::mem::take(&mut members[other]);
            members[root].extend(moved);
            hits_target[root] = tx || ty;
        }
        for &t in targets {
            out[t] = None;
        }
        out
    }

    /// States with strictly larger stationary degree than `x`.
    pub fn j_minus(&self, x: usize) -> Vec<usize> {
        (0..self.n).filter(|&y| self.pi[y] > self.pi[x]).collect()
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Joins two sets and returns the surviving root.
    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => {
                self.parent[ra] = rb;
                rb
            }
            Ordering::Greater => {
                self.parent[rb] = ra;
                ra
            }
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
                ra
            }
        }
    }
}

/// `deg r(x,y) = −deg π(x) − deg K(x,y)` for a single-site move.
pub fn resistance_degree(space: &StateSpace, x: usize, y: usize, betas: &Betas) -> Result<AsymptoticDegree, LandscapeError> {
    check_index(space, x)?;
    check_index(space, y)?;
    let mv = space
        .moves(x)
        .iter()
        .find(|m| m.to == y)
        .ok_or(LandscapeError::NotAdjacent(x, y))?;
    Ok(-(pi_degree(space, x, betas)? + kernel_degree(mv.kind, betas)))
}

/// `deg Ψ(A, B)`: the smallest achievable largest edge resistance degree.
pub fn critical_resistance_degree(
    space: &StateSpace,
    a_set: &[usize],
    b_set: &[usize],
    betas: &Betas,
) -> Result<AsymptoticDegree, LandscapeError> {
    DegreeTable::new(space, betas).critical_resistance(a_set, b_set)
}

pub fn j_minus(space: &StateSpace, x: usize, betas: &Betas) -> Result<Vec<usize>, LandscapeError> {
    check_index(space, x)?;
    Ok(DegreeTable::new(space, betas).j_minus(x))
}

/// `deg Γ = deg π(u) + deg Ψ(u, v)`.
pub fn gamma_barrier(space: &StateSpace, betas: &Betas) -> Result<AsymptoticDegree, LandscapeError> {
    let table = DegreeTable::new(space, betas);
    let (u, v) = (space.u_index(), space.v_index());
    Ok(table.pi(u) + table.critical_resistance(&[u], &[v])?)
}

/// Deepest well outside `{u, v}`, computed against `{u, v}` and against
/// each state's `J⁻` set.
#[derive(Debug, Clone, Serialize)]
pub struct WellDepth {
    pub via_uv: AsymptoticDegree,
    /// `None` when some state outside `{u, v}` has an empty `J⁻`.
    pub via_j_minus: Option<AsymptoticDegree>,
    pub forms_agree: bool,
}

pub fn gamma_check_barrier(space: &StateSpace, betas: &Betas) -> Result<WellDepth, LandscapeError> {
    if space.len() < 3 {
        return Err(LandscapeError::TooSmall);
    }
    let table = DegreeTable::new(space, betas);
    let (u, v) = (space.u_index(), space.v_index());
    let to_uv = table.critical_resistance_to_set(&[u, v]);
    let others: Vec<usize> = (0..space.len()).filter(|&x| x != u && x != v).collect();
    let mut via_uv: Option<AsymptoticDegree> = None;
    for &x in &others {
        let psi = to_uv[x].ok_or(LandscapeError::Unreachable)?;
        let d = table.pi(x) + psi;
        via_uv = Some(via_uv.map_or(d, |m| m.max(d)));
    }
    let mut via_j: Option<AsymptoticDegree> = None;
    let mut complete = true;
    for &x in &others {
        let targets = table.j_minus(x);
        if targets.is_empty() {
            complete = false;
            break;
        }
        let d = table.pi(x) + table.critical_resistance(&[x], &targets)?;
        via_j = Some(via_j.map_or(d, |m| m.max(d)));
    }
    let via_uv = via_uv.ok_or(LandscapeError::TooSmall)?;
    let via_j_minus = if complete { via_j } else { None };
    Ok(WellDepth {
        via_uv,
        via_j_minus,
        forms_agree: via_j_minus == Some(via_uv),
    })
}

/// Booleans for the structural and energy-barrier hypotheses.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    /// Complete bipartite with `|U| > 1`.
    pub complete_bipartite_multi_u: bool,
    /// `β_U|U| < β_V|V|`: `u` metastable, `v` stable.
    pub beta_balance: bool,
    /// The graph is an even torus, for which the isoperimetric hypothesis
    /// on general graphs is known to hold.
    pub known_isoperimetric_family: bool,
    pub isoperimetric_assumption: bool,
    /// `deg Γ̌ < deg Γ`; strict degree inequality also absorbs a `log γ`
    /// factor.
    pub no_deep_well: bool,
    /// `2 deg Γ̌ < deg Γ`, i.e. `Γ̌ ≺ √Γ`.
    pub energy_barrier: bool,
    /// `β_V < (|U|+1)β_U`.
    pub cbg_condition: bool,
    pub gamma: AsymptoticDegree,
    pub gamma_check: WellDepth,
    pub warnings: Vec<String>,
}

pub fn check_assumptions(
    space: &StateSpace,
    g: &BipartiteGraph,
    betas: &Betas,
) -> Result<AssumptionReport, LandscapeError> {
    let gamma = gamma_barrier(space, betas)?;
    let gamma_check = gamma_check_barrier(space, betas)?;
    let n_u = g.n_u() as i64;
    let complete_bipartite_multi_u = g.is_complete_bipartite() && g.n_u() > 1;
    let beta_balance = betas.u * n_u < betas.v * g.n_v() as i64;
    let known_isoperimetric_family = matches!(g.family(), GraphFamily::EvenTorus { .. });
    let isoperimetric_assumption =
        complete_bipartite_multi_u || (beta_balance && known_isoperimetric_family);
    let well = gamma_check.via_uv;
    let no_deep_well = well < gamma;
    let energy_barrier = well.scale(2) < gamma;
    let cbg_condition = betas.v < betas.u * (n_u + 1);
    let mut warnings = Vec::new();
    if !gamma_check.forms_agree {
        warnings.push(format!(
            "well depth via {{u,v}} ({}) differs from the J- form ({})",
            gamma_check.via_uv,
            gamma_check
                .via_j_minus
                .map_or_else(|| "undefined".to_string(), |d| d.to_string())
        ));
    }
    if complete_bipartite_multi_u && !cbg_condition {
        warnings.push(
            "beta_v >= (|U|+1) beta_u: on complete bipartite graphs the crossover law does not \
             depend on beta_v, which may be lowered below (|U|+1) beta_u"
                .to_string(),
        );
    }
    if !complete_bipartite_multi_u && beta_balance && !known_isoperimetric_family {
        warnings.push(
            "beta_u|U| < beta_v|V| holds but the isoperimetric hypothesis is not checked for this graph"
                .to_string(),
        );
    }
    Ok(AssumptionReport {
        complete_bipartite_multi_u,
        beta_balance,
        known_isoperimetric_family,
        isoperimetric_assumption,
        no_deep_well,
        energy_barrier,
        cbg_condition,
        gamma,
        gamma_check,
        warnings,
    })
}

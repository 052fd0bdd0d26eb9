//! Bipartite interference graphs and their hard-core configuration spaces.
//!
//! Vertices are dense ids `0..|U|+|V|` with all of `U` first, so a
//! configuration is a `u64` bitmask with bit `i` set when vertex `i` is
//! active. Graphs are limited to 64 vertices.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default bound on the number of enumerated configurations.
pub const DEFAULT_STATE_CAP: usize = 1 << 24;

/// Largest vertex count representable by the bitmask layout.
pub const MAX_VERTICES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("graph sizes must be positive (got |U|={u}, |V|={v})")]
    EmptyPart { u: usize, v: usize },
    #[error("torus dimensions must be even with m*n >= 4 (got {m}x{n})")]
    InvalidTorus { m: usize, n: usize },
    #[error("graph has {0} vertices, at most {MAX_VERTICES} are supported")]
    TooManyVertices(usize),
    #[error("label `{0}` appears more than once")]
    DuplicateLabel(String),
    #[error("edge references unknown label `{0}`")]
    UnknownLabel(String),
    #[error("edge ({0}, {1}) joins two vertices on the same side")]
    NotBipartite(String, String),
    #[error("edge ({0}, {1}) listed twice")]
    DuplicateEdge(String, String),
    #[error("state space exceeds the cap of {cap} configurations")]
    StateSpaceTooLarge { cap: usize },
    #[error("configuration {0:#x} has bits outside the graph")]
    ForeignConfig(u64),
    #[error("configuration {0:#x} is not an independent set")]
    NotIndependent(u64),
    #[error("invalid graph spec `{0}`: expected complete:m,n | torus:m,n | file:PATH")]
    BadSpec(String),
    #[error("cannot read graph file {path}: {reason}")]
    File { path: String, reason: String },
}

/// Which family a graph was generated from; used by assumption checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFamily {
    CompleteBipartite { m: usize, n: usize },
    EvenTorus { m: usize, n: usize },
    Custom,
}

/// Interference graph with vertex bipartition `U`/`V` and cross edges only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    labels: Vec<String>,
    n_u: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    neighbor_masks: Vec<u64>,
    family: GraphFamily,
}

impl BipartiteGraph {
    fn build(
        labels: Vec<String>,
        n_u: usize,
        edges: BTreeSet<(usize, usize)>,
        family: GraphFamily,
    ) -> Result<Self, TopologyError> {
        let n = labels.len();
        let n_v = n - n_u;
        if n_u == 0 || n_v == 0 {
            return Err(TopologyError::EmptyPart { u: n_u, v: n_v });
        }
        if n > MAX_VERTICES {
            return Err(TopologyError::TooManyVertices(n));
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut neighbor_masks = vec![0u64; n];
        for &(a, b) in &edges {
            debug_assert!(a < n_u && b >= n_u);
            adjacency[a].push(b);
            adjacency[b].push(a);
            neighbor_masks[a] |= 1 << b;
            neighbor_masks[b] |= 1 << a;
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            labels,
            n_u,
            edges: edges.into_iter().collect(),
            adjacency,
            neighbor_masks,
            family,
        })
    }

    /// Complete bipartite graph `K_{m,n}`.
    pub fn complete_bipartite(m: usize, n: usize) -> Result<Self, TopologyError> {
        if m == 0 || n == 0 {
            return Err(TopologyError::EmptyPart { u: m, v: n });
        }
        if m + n > MAX_VERTICES {
            return Err(TopologyError::TooManyVertices(m + n));
        }
        let labels = (0..m)
            .map(|i| format!("u{i}"))
            .chain((0..n).map(|j| format!("v{j}")))
            .collect();
        let edges = (0..m)
            .flat_map(|i| (0..n).map(move |j| (i, m + j)))
            .collect();
        Self::build(labels, m, edges, GraphFamily::CompleteBipartite { m, n })
    }

    /// Torus `Z_m x Z_n` with nearest-neighbour edges. Even-parity sites form
    /// `U`. Wraparound duplicates (m = 2 or n = 2) collapse to single edges.
    pub fn even_torus(m: usize, n: usize) -> Result<Self, TopologyError> {
        if m % 2 != 0 || n % 2 != 0 || m * n < 4 {
            return Err(TopologyError::InvalidTorus { m, n });
        }
        if m * n > MAX_VERTICES {
            return Err(TopologyError::TooManyVertices(m * n));
        }
        let sites: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
        let (even, odd): (Vec<_>, Vec<_>) = sites.iter().partition(|(i, j)| (i + j) % 2 == 0);
        let n_u = even.len();
        let mut id = HashMap::new();
        let mut labels = Vec::with_capacity(m * n);
        for &(i, j) in even.iter().chain(odd.iter()) {
            id.insert((i, j), labels.len());
            labels.push(format!("{i},{j}"));
        }
        let mut edges = BTreeSet::new();
        for &(i, j) in &sites {
            let a = id[&(i, j)];
            for (ni, nj) in [((i + 1) % m, j), (i, (j + 1) % n)] {
                let b = id[&(ni, nj)];
                edges.insert(if a < n_u { (a, b) } else { (b, a) });
            }
        }
        Self::build(labels, n_u, edges, GraphFamily::EvenTorus { m, n })
    }

    /// Validated graph from labelled parts and edges; vertex order follows
    /// the input order.
    pub fn from_edge_list<S: AsRef<str>>(
        u_labels: &[S],
        v_labels: &[S],
        edges: &[(S, S)],
    ) -> Result<Self, TopologyError> {
        let mut id = HashMap::new();
        let mut labels = Vec::new();
        for l in u_labels.iter().chain(v_labels.iter()) {
            let l = l.as_ref().to_string();
            if id.insert(l.clone(), labels.len()).is_some() {
                return Err(TopologyError::DuplicateLabel(l));
            }
            labels.push(l);
        }
        let n_u = u_labels.len();
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            let ia = *id.get(a).ok_or_else(|| TopologyError::UnknownLabel(a.into()))?;
            let ib = *id.get(b).ok_or_else(|| TopologyError::UnknownLabel(b.into()))?;
            let pair = match (ia < n_u, ib < n_u) {
                (true, false) => (ia, ib),
                (false, true) => (ib, ia),
                _ => return Err(TopologyError::NotBipartite(a.into(), b.into())),
            };
            if !set.insert(pair) {
                return Err(TopologyError::DuplicateEdge(a.into(), b.into()));
            }
        }
        Self::build(labels, n_u, set, GraphFamily::Custom)
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_v(&self) -> usize {
        self.labels.len() - self.n_u
    }

    pub fn n_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Edges as `(u, v)` id pairs, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn neighbor_mask(&self, i: usize) -> u64 {
        self.neighbor_masks[i]
    }

    pub fn family(&self) -> GraphFamily {
        self.family
    }

    pub fn is_u(&self, i: usize) -> bool {
        i < self.n_u
    }

    pub fn u_mask(&self) -> u64 {
        low_bits(self.n_u)
    }

    pub fn v_mask(&self) -> u64 {
        low_bits(self.n_vertices()) & !self.u_mask()
    }

    pub fn all_mask(&self) -> u64 {
        low_bits(self.n_vertices())
    }

    /// True iff no edge has both endpoints in `subset`.
    pub fn is_independent(&self, subset: u64) -> bool {
        let mut rest = subset & self.u_mask();
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            if self.neighbor_masks[i] & subset != 0 {
                return false;
            }
            rest &= rest - 1;
        }
        true
    }

    /// Validates a bitmask as a hard-core configuration of this graph.
    pub fn config(&self, bits: u64) -> Result<HardCoreConfig, TopologyError> {
        if bits & !self.all_mask() != 0 {
            return Err(TopologyError::ForeignConfig(bits));
        }
        if !self.is_independent(bits) {
            return Err(TopologyError::NotIndependent(bits));
        }
        Ok(HardCoreConfig(bits))
    }

    /// All of `U` active.
    pub fn u_config(&self) -> HardCoreConfig {
        HardCoreConfig(self.u_mask())
    }

    /// All of `V` active.
    pub fn v_config(&self) -> HardCoreConfig {
        HardCoreConfig(self.v_mask())
    }

    /// The stochastic order: `x ⊑ y` iff `x` has at least the `U`-activity
    /// and at most the `V`-activity of `y`.
    pub fn precedes(&self, x: HardCoreConfig, y: HardCoreConfig) -> Result<bool, TopologyError> {
        for c in [x, y] {
            if c.0 & !self.all_mask() != 0 {
                return Err(TopologyError::ForeignConfig(c.0));
            }
        }
        Ok(precedes_masks(self.u_mask(), x.0, y.0))
    }

    /// True for `K_{m,n}` with `m > 1`, detected structurally.
    pub fn is_complete_bipartite(&self) -> bool {
        self.edges.len() == self.n_u() * self.n_v()
    }
}

/// Order check on raw masks; `u_mask` selects the `U` side.
#[inline]
pub(crate) fn precedes_masks(u_mask: u64, x: u64, y: u64) -> bool {
    let (xu, yu) = (x & u_mask, y & u_mask);
    let (xv, yv) = (x & !u_mask, y & !u_mask);
    yu & !xu == 0 && xv & !yv == 0
}

fn low_bits(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// A feasible joint activity state: bit `i` set when vertex `i` is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HardCoreConfig(pub u64);

impl HardCoreConfig {
    pub const EMPTY: HardCoreConfig = HardCoreConfig(0);

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn is_active(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn count_in(self, mask: u64) -> u32 {
        (self.0 & mask).count_ones()
    }
}

impl fmt::Display for HardCoreConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// Kind of a single-site transition between neighbouring configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveKind {
    BirthU,
    BirthV,
    DeathU,
    DeathV,
}

impl MoveKind {
    pub fn is_birth(self) -> bool {
        matches!(self, MoveKind::BirthU | MoveKind::BirthV)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub to: usize,
    pub site: usize,
    pub kind: MoveKind,
}

/// Enumerated configuration space of a graph, ordered by number of active
/// sites and then by bitmask value.
#[derive(Debug, Clone)]
pub struct StateSpace {
    configs: Vec<HardCoreConfig>,
    index: HashMap<u64, usize>,
    counts: Vec<(u32, u32)>,
    moves: Vec<Vec<Move>>,
    n_u: usize,
    n_v: usize,
    u_mask: u64,
    u_index: usize,
    v_index: usize,
    empty_index: usize,
}

/// Enumerates every independent set of `g`, failing once more than `cap`
/// configurations are found.
pub fn enumerate_configs(g: &BipartiteGraph, cap: usize) -> Result<StateSpace, TopologyError> {
    let n = g.n_vertices();
    let mut found = Vec::new();
    // depth-first over vertices; `allowed` tracks vertices not yet blocked
    let mut stack = vec![(0usize, 0u64)];
    while let Some((i, set)) = stack.pop() {
        if i == n {
            found.push(set);
            if found.len() > cap {
                return Err(TopologyError::StateSpaceTooLarge { cap });
            }
            continue;
        }
        stack.push((i + 1, set));
        if g.neighbor_mask(i) & set == 0 {
            stack.push((i + 1, set | 1 << i));
        }
    }
    found.sort_unstable_by_key(|&b| (b.count_ones(), b));
    let configs: Vec<HardCoreConfig> = found.into_iter().map(HardCoreConfig).collect();
    let index: HashMap<u64, usize> = configs.iter().enumerate().map(|(k, c)| (c.0, k)).collect();
    let u_mask = g.u_mask();
    let counts = configs
        .iter()
        .map(|c| (c.count_in(u_mask), c.count_in(!u_mask)))
        .collect();
    let moves = configs
        .iter()
        .map(|c| {
            (0..n)
                .filter_map(|i| {
                    let bit = 1u64 << i;
                    let to = index.get(&(c.0 ^ bit))?;
                    let kind = match (c.0 & bit != 0, g.is_u(i)) {
                        (true, true) => MoveKind::DeathU,
                        (true, false) => MoveKind::DeathV,
                        (false, true) => MoveKind::BirthU,
                        (false, false) => MoveKind::BirthV,
                    };
                    Some(Move { to: *to, site: i, kind })
                })
                .collect()
        })
        .collect();
    Ok(StateSpace {
        u_index: index[&g.u_mask()],
        v_index: index[&g.v_mask()],
        empty_index: index[&0],
        configs,
        index,
        counts,
        moves,
        n_u: g.n_u(),
        n_v: g.n_v(),
        u_mask,
    })
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn configs(&self) -> &[HardCoreConfig] {
        &self.configs
    }

    pub fn config(&self, idx: usize) -> HardCoreConfig {
        self.configs[idx]
    }

    pub fn index_of(&self, c: HardCoreConfig) -> Option<usize> {
        self.index.get(&c.0).copied()
    }

    /// Active counts `(a, b)` in `U` and `V`.
    pub fn counts(&self, idx: usize) -> (u32, u32) {
        self.counts[idx]
    }

    /// Single-site transitions out of a configuration.
    pub fn moves(&self, idx: usize) -> &[Move] {
        &self.moves[idx]
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn u_index(&self) -> usize {
        self.u_index
    }

    pub fn v_index(&self) -> usize {
        self.v_index
    }

    pub fn empty_index(&self) -> usize {
        self.empty_index
    }

    /// `x ⊑ y` on state indices.
    pub fn precedes(&self, x: usize, y: usize) -> bool {
        precedes_masks(self.u_mask, self.configs[x].0, self.configs[y].0)
    }
}

/// On-disk graph description: labels for both parts and label pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub u: Vec<String>,
    pub v: Vec<String>,
    pub edges: Vec<(String, String)>,
}

impl GraphFile {
    pub fn to_graph(&self) -> Result<BipartiteGraph, TopologyError> {
        BipartiteGraph::from_edge_list(&self.u, &self.v, &self.edges)
    }
}

/// Graph selector: `complete:m,n`, `torus:m,n` or `file:PATH`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GraphSpec {
    Complete(usize, usize),
    Torus(usize, usize),
    File(PathBuf),
}

impl GraphSpec {
    pub fn build(&self) -> Result<BipartiteGraph, TopologyError> {
        match self {
            GraphSpec::Complete(m, n) => BipartiteGraph::complete_bipartite(*m, *n),
            GraphSpec::Torus(m, n) => BipartiteGraph::even_torus(*m, *n),
            GraphSpec::File(path) => {
                let err = |reason: String| TopologyError::File {
                    path: path.display().to_string(),
                    reason,
                };
                let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
                let file: GraphFile = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
                file.to_graph()
            }
        }
    }
}

impl FromStr for GraphSpec {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TopologyError::BadSpec(s.to_string());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let pair = || -> Result<(usize, usize), TopologyError> {
            let (a, b) = rest.split_once(',').ok_or_else(bad)?;
            Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
        };
        match kind {
            "complete" => pair().map(|(m, n)| GraphSpec::Complete(m, n)),
            "torus" => pair().map(|(m, n)| GraphSpec::Torus(m, n)),
            "file" if !rest.is_empty() => Ok(GraphSpec::File(PathBuf::from(rest))),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for GraphSpec {
    type Error = TopologyError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<GraphSpec> for String {
    fn from(spec: GraphSpec) -> String {
        spec.to_string()
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::Complete(m, n) => write!(f, "complete:{m},{n}"),
            GraphSpec::Torus(m, n) => write!(f, "torus:{m},{n}"),
            GraphSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_count(g: &BipartiteGraph) -> usize {
        (0..1u64 << g.n_vertices()).filter(|&s| g.is_independent(s)).count()
    }

    #[test]
    fn complete_bipartite_sizes() {
        let g = BipartiteGraph::complete_bipartite(2, 2).unwrap();
        assert_eq!(g.n_vertices(), 4);
        assert_eq!(g.edges().len(), 4);
        let g = BipartiteGraph::complete_bipartite(3, 3).unwrap();
        assert_eq!(g.edges().len(), 9);
        assert!((0..3).all(|i| g.neighbors(i).len() == 3));
        let g = BipartiteGraph::complete_bipartite(1, 1).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        assert!(BipartiteGraph::complete_bipartite(0, 3).is_err());
    }

    #[test]
    fn torus_sizes_and_wraparound() {
        let g = BipartiteGraph::even_torus(4, 4).unwrap();
        assert_eq!(g.n_vertices(), 16);
        assert_eq!(g.edges().len(), 32);
        assert_eq!((g.n_u(), g.n_v()), (8, 8));
        let g = BipartiteGraph::even_torus(2, 2).unwrap();
        assert_eq!(g.edges().len(), 4);
        assert!((0..4).all(|i| g.neighbors(i).len() == 2));
        assert_eq!(
            BipartiteGraph::even_torus(3, 4),
            Err(TopologyError::InvalidTorus { m: 3, n: 4 })
        );
    }

    #[test]
    fn torus_degrees_with_partial_wraparound() {
        for (m, n) in [(2, 4), (4, 2), (4, 6), (6, 6), (2, 6)] {
            let g = BipartiteGraph::even_torus(m, n).unwrap();
            let expected = if m > 2 { 2 } else { 1 } + if n > 2 { 2 } else { 1 };
            for i in 0..g.n_vertices() {
                assert_eq!(g.neighbors(i).len(), expected, "{m}x{n} vertex {i}");
            }
        }
    }

    #[test]
    fn edge_list_validation() {
        let g = BipartiteGraph::from_edge_list(&["a"], &["b"], &[("a", "b")]).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(
            BipartiteGraph::from_edge_list(&["a", "b"], &["c"], &[("a", "b")]),
            Err(TopologyError::NotBipartite("a".into(), "b".into()))
        );
        let g = BipartiteGraph::from_edge_list(&["a", "b"], &["c", "d"], &[("a", "c"), ("d", "b")])
            .unwrap();
        assert_eq!(g.edges(), &[(0, 2), (1, 3)]);
        assert!(matches!(
            BipartiteGraph::from_edge_list(&["a"], &["b"], &[("a", "z")]),
            Err(TopologyError::UnknownLabel(_))
        ));
        assert!(matches!(
            BipartiteGraph::from_edge_list(&["a"], &["a"], &[]),
            Err(TopologyError::DuplicateLabel(_))
        ));
        assert!(matches!(
            BipartiteGraph::from_edge_list(&["a"], &["b"], &[("a", "b"), ("b", "a")]),
            Err(TopologyError::DuplicateEdge(..))
        ));
    }

    #[test]
    fn enumeration_matches_exhaustive_subsets() {
        for (m, n, expected) in [(2, 2, 7), (3, 3, 15), (1, 1, 3)] {
            let g = BipartiteGraph::complete_bipartite(m, n).unwrap();
            assert_eq!(brute_force_count(&g), expected);
            let space = enumerate_configs(&g, DEFAULT_STATE_CAP).unwrap();
            assert_eq!(space.len(), expected);
            assert_eq!(space.config(space.empty_index()), HardCoreConfig::EMPTY);
            assert_eq!(space.config(space.u_index()), g.u_config());
            assert_eq!(space.config(space.v_index()), g.v_config());
        }
        for m in 1..=5 {
            for n in 1..=5 {
                let g = BipartiteGraph::complete_bipartite(m, n).unwrap();
                let space = enumerate_configs(&g, DEFAULT_STATE_CAP).unwrap();
                assert_eq!(space.len(), (1 << m) + (1 << n) - 1);
                assert_eq!(space.len(), brute_force_count(&g));
            }
        }
        let g = BipartiteGraph::even_torus(4, 4).unwrap();
        assert_eq!(enumerate_configs(&g, DEFAULT_STATE_CAP).unwrap().len(), brute_force_count(&g));
    }

    #[test]
    fn enumeration_order_and_cap() {
        let g = BipartiteGraph::complete_bipartite(2, 2).unwrap();
        let space = enumerate_configs(&g, 100).unwrap();
        let keys: Vec<_> = space.configs().iter().map(|c| (c.0.count_ones(), c.0)).collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(space.empty_index(), 0);
        for (k, c) in space.configs().iter().enumerate() {
            assert_eq!(space.index_of(*c), Some(k));
        }
        assert_eq!(
            enumerate_configs(&g, 6).unwrap_err(),
            TopologyError::StateSpaceTooLarge { cap: 6 }
        );
    }

    #[test]
    fn independence_checks() {
        let g = BipartiteGraph::complete_bipartite(2, 2).unwrap();
        assert!(g.is_independent(g.u_mask()));
        assert!(!g.is_independent(0b0101));
        assert!(g.is_independent(0));
        assert!(g.config(0b10000).is_err());
    }

    #[test]
    fn order_extremes_and_incomparable_pair() {
        let g = BipartiteGraph::complete_bipartite(2, 2).unwrap();
        let space = enumerate_configs(&g, 100).unwrap();
        for &c in space.configs() {
            assert!(g.precedes(g.u_config(), c).unwrap());
            assert!(g.precedes(c, g.v_config()).unwrap());
        }
        let (x, y) = (HardCoreConfig(0b01), HardCoreConfig(0b10));
        assert!(!g.precedes(x, y).unwrap());
        assert!(!g.precedes(y, x).unwrap());
        assert!(g.precedes(x, HardCoreConfig(1 << 7)).is_err());
    }

    #[test]
    fn order_is_a_partial_order() {
        for g in [
            BipartiteGraph::complete_bipartite(2, 3).unwrap(),
            BipartiteGraph::even_torus(2, 4).unwrap(),
            BipartiteGraph::even_torus(4, 4).unwrap(),
        ] {
            let space = enumerate_configs(&g, 1000).unwrap();
            let n = space.len();
            assert!(n <= 1000);
            for x in 0..n {
                assert!(space.precedes(x, x));
                assert!(space.precedes(space.u_index(), x));
                assert!(space.precedes(x, space.v_index()));
                for y in 0..n {
                    if x != y && space.precedes(x, y) {
                        assert!(!space.precedes(y, x));
                    }
                }
            }
            // transitivity on a sparse sample of triples keeps this cheap
            for x in (0..n).step_by(7) {
                for y in 0..n {
                    if !space.precedes(x, y) {
                        continue;
                    }
                    for z in (0..n).step_by(3) {
                        if space.precedes(y, z) {
                            assert!(space.precedes(x, z));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn moves_are_single_site_flips() {
        let g = BipartiteGraph::complete_bipartite(1, 1).unwrap();
        let space = enumerate_configs(&g, 10).unwrap();
        let empty = space.empty_index();
        let kinds: Vec<_> = space.moves(empty).iter().map(|m| m.kind).collect();
        assert_eq!(kinds, vec![MoveKind::BirthU, MoveKind::BirthV]);
        assert_eq!(space.moves(space.u_index()).len(), 1);
    }

    #[test]
    fn graph_spec_parsing() {
        assert_eq!("complete:3,2".parse::<GraphSpec>().unwrap(), GraphSpec::Complete(3, 2));
        assert_eq!("torus:4,4".parse::<GraphSpec>().unwrap(), GraphSpec::Torus(4, 4));
        assert_eq!(
            "file:g.json".parse::<GraphSpec>().unwrap(),
            GraphSpec::File(PathBuf::from("g.json"))
        );
        assert!("ring:3".parse::<GraphSpec>().is_err());
        let json = r#"{"u":["a","b"],"v":["c"],"edges":[["a","c"],["b","c"]]}"#;
        let file: GraphFile = serde_json::from_str(json).unwrap();
        assert_eq!(file.to_graph().unwrap().edges().len(), 2);
    }
}

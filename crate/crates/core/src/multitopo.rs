//! Lossless encoding of several finite T0-topologies (given by their Hasse
//! diagrams) on one vertex set as a single vertex-edge-weighted graph.
//!
//! Every topology `i` is tagged with a distinct prime `p_i`. An undirected
//! edge carries the product of the primes of all topologies containing it,
//! and every vertex carries one dimension per topology: the edge count of the
//! longest directed chain starting at it. Factoring the weight recovers which
//! topologies own an edge, and the dimensions recover its orientation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("vertex label {0:?} appears more than once")]
    DuplicateVertex(String),
    #[error("topology {topology} references unknown vertex {label:?}")]
    UnknownVertex { topology: usize, label: String },
    #[error("topology {0} contains a directed cycle")]
    CyclicInput(usize),
    #[error("prime {0} is assigned to more than one topology")]
    DuplicatePrime(u64),
    #[error("{0} is not a prime")]
    NotPrime(u64),
    #[error("expected {expected} primes, got {got}")]
    PrimeCount { expected: usize, got: usize },
    #[error("edge weight {weight} on {{{u}, {v}}} has a factor outside the prime list")]
    UnknownPrimeFactor { u: String, v: String, weight: u64 },
    #[error("edge weight {weight} on {{{u}, {v}}} is not squarefree")]
    NotSquarefree { u: String, v: String, weight: u64 },
    #[error("edge {{{u}, {v}}} cannot be oriented in topology {topology}: equal dimensions")]
    AmbiguousOrientation { u: String, v: String, topology: usize },
    #[error("graph is malformed: {0}")]
    Malformed(String),
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// The first `count` primes, 2, 3, 5, ...
pub fn first_primes(count: usize) -> Vec<u64> {
    (2u64..).filter(|&n| is_prime(n)).take(count).collect()
}

/// The smallest prime that is `>= n` (and at least 2).
pub fn prime_at_least(n: u64) -> u64 {
    (n.max(2)..).find(|&q| is_prime(q)).expect("primes are unbounded")
}

/// A family of N directed acyclic graphs on one vertex set, each tagged with a
/// distinct prime. Edges are stored as index pairs into `vertices`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyFamily {
    vertices: Vec<String>,
    dags: Vec<BTreeSet<(usize, usize)>>,
    primes: Vec<u64>,
}

impl TopologyFamily {
    /// Builds a family from labelled edges. When `primes` is `None` the first N
    /// primes are assigned by topology index.
    pub fn new<S: AsRef<str>>(
        vertices: Vec<String>,
        dags: &[Vec<(S, S)>],
        primes: Option<Vec<u64>>,
    ) -> Result<Self, TopologyError> {
        let mut index = HashMap::with_capacity(vertices.len());
        for (i, v) in vertices.iter().enumerate() {
            if index.insert(v.clone(), i).is_some() {
                return Err(TopologyError::DuplicateVertex(v.clone()));
            }
        }
        let mut indexed = Vec::with_capacity(dags.len());
        for (t, edges) in dags.iter().enumerate() {
            let mut set = BTreeSet::new();
            for (a, b) in edges {
                let lookup = |s: &str| {
                    index.get(s).copied().ok_or_else(|| TopologyError::UnknownVertex {
                        topology: t,
                        label: s.to_string(),
                    })
                };
                set.insert((lookup(a.as_ref())?, lookup(b.as_ref())?));
            }
            indexed.push(set);
        }
        Self::from_indices(vertices, indexed, primes)
    }

    pub fn from_indices(
        vertices: Vec<String>,
        dags: Vec<BTreeSet<(usize, usize)>>,
        primes: Option<Vec<u64>>,
    ) -> Result<Self, TopologyError> {
        let primes = primes.unwrap_or_else(|| first_primes(dags.len()));
        let family = TopologyFamily {
            vertices,
            dags,
            primes,
        };
        family.validate()?;
        Ok(family)
    }

    fn validate(&self) -> Result<(), TopologyError> {
        let n = self.vertices.len();
        let mut seen = BTreeSet::new();
        for v in &self.vertices {
            if !seen.insert(v) {
                return Err(TopologyError::DuplicateVertex(v.clone()));
            }
        }
        if self.primes.len() != self.dags.len() {
            return Err(TopologyError::PrimeCount {
                expected: self.dags.len(),
                got: self.primes.len(),
            });
        }
        let mut used = BTreeSet::new();
        for &p in &self.primes {
            if !is_prime(p) {
                return Err(TopologyError::NotPrime(p));
            }
            if !used.insert(p) {
                return Err(TopologyError::DuplicatePrime(p));
            }
        }
        for (t, dag) in self.dags.iter().enumerate() {
            if let Some(&(a, b)) = dag.iter().find(|&&(a, b)| a >= n || b >= n) {
                let bad = if a >= n { a } else { b };
                return Err(TopologyError::UnknownVertex {
                    topology: t,
                    label: format!("#{bad}"),
                });
            }
            if chain_lengths(n, dag).is_none() {
                return Err(TopologyError::CyclicInput(t));
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn dags(&self) -> &[BTreeSet<(usize, usize)>] {
        &self.dags
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn len(&self) -> usize {
        self.dags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dags.is_empty()
    }
}

/// Length (in edges) of the longest directed path starting at each vertex, or
/// `None` if the edge set has a cycle.
pub fn chain_lengths(n: usize, edges: &BTreeSet<(usize, usize)>) -> Option<Vec<u32>> {
    let mut out_edges = vec![Vec::new(); n];
    let mut in_degree = vec![0usize; n];
    for &(a, b) in edges {
        out_edges[a].push(b);
        in_degree[b] += 1;
    }
    let mut queue: Vec<usize> = (0..n).filter(|&v| in_degree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = queue.pop() {
        order.push(v);
        for &w in &out_edges[v] {
            in_degree[w] -= 1;
            if in_degree[w] == 0 {
                queue.push(w);
            }
        }
    }
    if order.len() != n {
        return None;
    }
    let mut length = vec![0u32; n];
    for &v in order.iter().rev() {
        length[v] = out_edges[v].iter().map(|&w| length[w] + 1).max().unwrap_or(0);
    }
    Some(length)
}

/// The tuple `(V, E, w, d)`: undirected simple edges with prime-product
/// weights and per-topology vertex dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedMultiGraph {
    vertices: Vec<String>,
    /// Keyed by `(u, v)` with `u < v`.
    weights: BTreeMap<(usize, usize), u64>,
    /// `dims[v][i]` is the dimension of `v` in topology `i`.
    dims: Vec<Vec<u32>>,
}

impl WeightedMultiGraph {
    pub fn new(
        vertices: Vec<String>,
        weights: BTreeMap<(usize, usize), u64>,
        dims: Vec<Vec<u32>>,
    ) -> Result<Self, TopologyError> {
        let n = vertices.len();
        if dims.len() != n {
            return Err(TopologyError::Malformed(format!(
                "{} dimension vectors for {} vertices",
                dims.len(),
                n
            )));
        }
        if let Some(width) = dims.first().map(Vec::len) {
            if dims.iter().any(|d| d.len() != width) {
                return Err(TopologyError::Malformed(
                    "dimension vectors differ in length".into(),
                ));
            }
        }
        for (&(u, v), &w) in &weights {
            if u >= v || v >= n {
                return Err(TopologyError::Malformed(format!("bad edge ({u}, {v})")));
            }
            if w < 2 {
                return Err(TopologyError::Malformed(format!("edge weight {w} < 2")));
            }
        }
        Ok(WeightedMultiGraph {
            vertices,
            weights,
            dims,
        })
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn weights(&self) -> &BTreeMap<(usize, usize), u64> {
        &self.weights
    }

    pub fn weight(&self, u: usize, v: usize) -> Option<u64> {
        self.weights.get(&(u.min(v), u.max(v))).copied()
    }

    pub fn dims(&self) -> &[Vec<u32>] {
        &self.dims
    }

    /// Default numeric edge length for shortest paths: `1 / ln(w + 1)`, so
    /// edges shared by more topologies are shorter.
    pub fn distance_weight(w: u64) -> f64 {
        1.0 / ((w as f64) + 1.0).ln()
    }

    /// Edge list with the default distance weights.
    pub fn distance_edges(&self) -> Vec<(usize, usize, f64)> {
        self.weights
            .iter()
            .map(|(&(u, v), &w)| (u, v, Self::distance_weight(w)))
            .collect()
    }
}

pub fn encode(family: &TopologyFamily) -> Result<WeightedMultiGraph, TopologyError> {
    family.validate()?;
    let n = family.vertices.len();
    let mut weights: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut dims = vec![vec![0u32; family.len()]; n];
    for (t, dag) in family.dags.iter().enumerate() {
        let lengths = chain_lengths(n, dag).ok_or(TopologyError::CyclicInput(t))?;
        for (v, len) in lengths.into_iter().enumerate() {
            dims[v][t] = len;
        }
        for &(a, b) in dag {
            *weights.entry((a.min(b), a.max(b))).or_insert(1) *= family.primes[t];
        }
    }
    WeightedMultiGraph::new(family.vertices.clone(), weights, dims)
}

pub fn decode(g: &WeightedMultiGraph, primes: &[u64]) -> Result<TopologyFamily, TopologyError> {
    let width = g.dims.first().map_or(primes.len(), Vec::len);
    if width != primes.len() {
        return Err(TopologyError::PrimeCount {
            expected: width,
            got: primes.len(),
        });
    }
    let mut dags = vec![BTreeSet::new(); primes.len()];
    for (&(u, v), &weight) in &g.weights {
        let label = |x: usize| g.vertices[x].clone();
        let mut rest = weight;
        for (i, &p) in primes.iter().enumerate() {
            if rest % p != 0 {
                continue;
            }
            rest /= p;
            if rest % p == 0 {
                return Err(TopologyError::NotSquarefree {
                    u: label(u),
                    v: label(v),
                    weight,
                });
            }
            let (du, dv) = (g.dims[u][i], g.dims[v][i]);
            let edge = match du.cmp(&dv) {
                std::cmp::Ordering::Greater => (u, v),
                std::cmp::Ordering::Less => (v, u),
                std::cmp::Ordering::Equal => {
                    return Err(TopologyError::AmbiguousOrientation {
                        u: label(u),
                        v: label(v),
                        topology: i,
                    })
                }
            };
            dags[i].insert(edge);
        }
        if rest != 1 {
            return Err(TopologyError::UnknownPrimeFactor {
                u: label(u),
                v: label(v),
                weight,
            });
        }
    }
    TopologyFamily::from_indices(g.vertices.clone(), dags, Some(primes.to_vec()))
}

/// On-disk form of a topology family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFile {
    pub vertices: Vec<String>,
    pub topologies: Vec<TopologyEdges>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primes: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyEdges {
    pub edges: Vec<(String, String)>,
}

/// On-disk form of an encoded graph. `w` is aligned with `edges`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub vertices: Vec<String>,
    pub edges: Vec<(String, String)>,
    pub w: Vec<u64>,
    pub d: BTreeMap<String, Vec<u32>>,
    pub primes: Vec<u64>,
    /// Optional explicit edge lengths for shortest paths, aligned with `edges`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_weights: Option<Vec<f64>>,
}

impl FamilyFile {
    pub fn to_family(&self) -> Result<TopologyFamily, TopologyError> {
        let dags: Vec<Vec<(String, String)>> =
            self.topologies.iter().map(|t| t.edges.clone()).collect();
        TopologyFamily::new(self.vertices.clone(), &dags, self.primes.clone())
    }

    /// Canonical form: edges sorted by vertex position, primes explicit.
    pub fn from_family(family: &TopologyFamily) -> Self {
        let label = |i: usize| family.vertices[i].clone();
        FamilyFile {
            vertices: family.vertices.clone(),
            topologies: family
                .dags
                .iter()
                .map(|dag| TopologyEdges {
                    edges: dag.iter().map(|&(a, b)| (label(a), label(b))).collect(),
                })
                .collect(),
            primes: Some(family.primes.clone()),
        }
    }
}

impl GraphFile {
    pub fn from_graph(g: &WeightedMultiGraph, primes: &[u64]) -> Self {
        let label = |i: usize| g.vertices[i].clone();
        GraphFile {
            vertices: g.vertices.clone(),
            edges: g.weights.keys().map(|&(u, v)| (label(u), label(v))).collect(),
            w: g.weights.values().copied().collect(),
            d: g
                .vertices
                .iter()
                .cloned()
                .zip(g.dims.iter().cloned())
                .collect(),
            primes: primes.to_vec(),
            distance_weights: None,
        }
    }

    pub fn to_graph(&self) -> Result<WeightedMultiGraph, TopologyError> {
        if self.edges.len() != self.w.len() {
            return Err(TopologyError::Malformed(
                "`edges` and `w` differ in length".into(),
            ));
        }
        let index: HashMap<&str, usize> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), i))
            .collect();
        let lookup = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| TopologyError::Malformed(format!("unknown vertex {s:?}")))
        };
        let mut weights = BTreeMap::new();
        for ((a, b), &w) in self.edges.iter().zip(&self.w) {
            let (u, v) = (lookup(a)?, lookup(b)?);
            if u == v || weights.insert((u.min(v), u.max(v)), w).is_some() {
                return Err(TopologyError::Malformed(format!("bad edge {{{a}, {b}}}")));
            }
        }
        let dims = self
            .vertices
            .iter()
            .map(|v| {
                self.d
                    .get(v)
                    .cloned()
                    .ok_or_else(|| TopologyError::Malformed(format!("no dimensions for {v:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        WeightedMultiGraph::new(self.vertices.clone(), weights, dims)
    }

    /// Distance-weighted edge list: explicit weights when present, otherwise
    /// the `1 / ln(w + 1)` default.
    pub fn distance_edges(&self) -> Result<Vec<(usize, usize, f64)>, TopologyError> {
        let g = self.to_graph()?;
        match &self.distance_weights {
            None => Ok(g.distance_edges()),
            Some(explicit) => {
                if explicit.len() != self.edges.len() {
                    return Err(TopologyError::Malformed(
                        "`distance_weights` and `edges` differ in length".into(),
                    ));
                }
                let index: HashMap<&str, usize> = self
                    .vertices
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (v.as_str(), i))
                    .collect();
                Ok(self
                    .edges
                    .iter()
                    .zip(explicit)
                    .map(|((a, b), &x)| (index[a.as_str()], index[b.as_str()], x))
                    .collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn worked_example() -> TopologyFamily {
        TopologyFamily::new(
            labels(&["a", "b", "c"]),
            &[vec![("a", "b")], vec![("a", "b"), ("b", "c")]],
            Some(vec![2, 3]),
        )
        .unwrap()
    }

    #[test]
    fn encodes_worked_example() {
        let g = encode(&worked_example()).unwrap();
        assert_eq!(g.weight(0, 1), Some(6));
        assert_eq!(g.weight(1, 2), Some(3));
        assert_eq!(g.weight(0, 2), None);
        assert_eq!(g.dims(), &[vec![1, 2], vec![0, 1], vec![0, 0]]);
    }

    #[test]
    fn decodes_worked_example() {
        let family = worked_example();
        let back = decode(&encode(&family).unwrap(), &[2, 3]).unwrap();
        assert_eq!(back, family);
        assert_eq!(back.dags()[0], BTreeSet::from([(0, 1)]));
        assert_eq!(back.dags()[1], BTreeSet::from([(0, 1), (1, 2)]));
    }

    #[test]
    fn single_vertex_empty_dag() {
        let family =
            TopologyFamily::new(labels(&["a"]), &[Vec::<(&str, &str)>::new()], None).unwrap();
        let g = encode(&family).unwrap();
        assert!(g.weights().is_empty());
        assert_eq!(g.dims(), &[vec![0]]);
    }

    #[test]
    fn rejects_two_cycle() {
        let err = TopologyFamily::new(
            labels(&["a", "b"]),
            &[vec![("a", "b"), ("b", "a")]],
            None,
        )
        .unwrap_err();
        assert_eq!(err, TopologyError::CyclicInput(0));
    }

    #[test]
    fn rejects_self_loop_and_duplicate_primes() {
        let err = TopologyFamily::new(labels(&["a"]), &[vec![("a", "a")]], None).unwrap_err();
        assert_eq!(err, TopologyError::CyclicInput(0));
        let err = TopologyFamily::new(
            labels(&["a", "b"]),
            &[vec![("a", "b")], vec![]],
            Some(vec![3, 3]),
        )
        .unwrap_err();
        assert_eq!(err, TopologyError::DuplicatePrime(3));
        let err =
            TopologyFamily::new(labels(&["a", "b"]), &[vec![("a", "b")]], Some(vec![4])).unwrap_err();
        assert_eq!(err, TopologyError::NotPrime(4));
    }

    #[test]
    fn unknown_prime_factor() {
        let g = WeightedMultiGraph::new(
            labels(&["a", "b"]),
            BTreeMap::from([((0, 1), 5)]),
            vec![vec![1, 0], vec![0, 0]],
        )
        .unwrap();
        assert!(matches!(
            decode(&g, &[2, 3]),
            Err(TopologyError::UnknownPrimeFactor { weight: 5, .. })
        ));
    }

    #[test]
    fn ambiguous_orientation() {
        let g = WeightedMultiGraph::new(
            labels(&["a", "b"]),
            BTreeMap::from([((0, 1), 2)]),
            vec![vec![0], vec![0]],
        )
        .unwrap();
        assert!(matches!(
            decode(&g, &[2]),
            Err(TopologyError::AmbiguousOrientation { topology: 0, .. })
        ));
    }

    #[test]
    fn non_squarefree_weight() {
        let g = WeightedMultiGraph::new(
            labels(&["a", "b"]),
            BTreeMap::from([((0, 1), 4)]),
            vec![vec![1], vec![0]],
        )
        .unwrap();
        assert!(matches!(
            decode(&g, &[2]),
            Err(TopologyError::NotSquarefree { .. })
        ));
    }

    #[test]
    fn file_roundtrip_is_canonical() {
        let family = worked_example();
        let g = encode(&family).unwrap();
        let file = GraphFile::from_graph(&g, family.primes());
        let json = serde_json::to_string(&file).unwrap();
        let parsed: GraphFile = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.to_graph().unwrap(), g);
        let ff = FamilyFile::from_family(&family);
        assert_eq!(ff.to_family().unwrap(), family);
    }

    #[test]
    fn prime_helpers() {
        assert_eq!(first_primes(5), vec![2, 3, 5, 7, 11]);
        assert_eq!(prime_at_least(0), 2);
        assert_eq!(prime_at_least(4), 5);
        assert_eq!(prime_at_least(7), 7);
    }
}

//! Graph distances, subdominant ultrametric and the dendrogram index of
//! ultrametric balls.

use std::collections::HashMap;

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IndexError {
    #[error("graph is disconnected: no path between vertices {0} and {1}")]
    DisconnectedGraph(usize, usize),
    #[error("edge ({0}, {1}) has non-positive or non-finite weight {2}")]
    BadWeight(usize, usize, f64),
    #[error("edge ({0}, {1}) references a vertex outside 0..{2}")]
    BadVertex(usize, usize, usize),
    #[error("matrix is not a valid dissimilarity: {0}")]
    InvalidMatrix(String),
    #[error("distinct vertices {0} and {1} are at distance zero")]
    ZeroDistance(usize, usize),
    #[error("malformed dendrogram record: {0}")]
    BadRecord(String),
}

/// Symmetric non-negative `n x n` matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, IndexError> {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                entries[i * n + j] = f(i, j);
            }
        }
        let m = DistanceMatrix { n, entries };
        m.validate()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, IndexError> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(IndexError::InvalidMatrix("matrix is not square".into()));
        }
        Self::from_fn(n, |i, j| rows[i][j])
    }

    fn validate(&self) -> Result<(), IndexError> {
        for i in 0..self.n {
            if self.get(i, i) != 0.0 {
                return Err(IndexError::InvalidMatrix(format!("diagonal entry {i} is non-zero")));
            }
            for j in 0..self.n {
                let x = self.get(i, j);
                if !x.is_finite() || x < 0.0 {
                    return Err(IndexError::InvalidMatrix(format!("entry ({i}, {j}) = {x}")));
                }
                if x != self.get(j, i) {
                    return Err(IndexError::InvalidMatrix(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// Checks `d(u,w) <= d(u,v) + d(v,w)` over all triples, with relative slack `tol`.
    pub fn satisfies_triangle(&self, tol: f64) -> bool {
        let n = self.n;
        (0..n).all(|u| {
            (0..n).all(|v| {
                (0..n).all(|w| self.get(u, w) <= (self.get(u, v) + self.get(v, w)) * (1.0 + tol))
            })
        })
    }

    /// Checks the strong triangle inequality exactly.
    pub fn is_ultrametric(&self) -> bool {
        let n = self.n;
        (0..n).all(|u| {
            (0..n).all(|v| (0..n).all(|w| self.get(u, w) <= self.get(u, v).max(self.get(v, w))))
        })
    }
}

/// A distance matrix satisfying the strong triangle inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct UltrametricMatrix(DistanceMatrix);

impl UltrametricMatrix {
    pub fn new(d: DistanceMatrix) -> Result<Self, IndexError> {
        if !d.is_ultrametric() {
            return Err(IndexError::InvalidMatrix("strong triangle inequality fails".into()));
        }
        Ok(UltrametricMatrix(d))
    }

    pub fn matrix(&self) -> &DistanceMatrix {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn len(&self) -> usize {
        self.0.n
    }

    pub fn is_empty(&self) -> bool {
        self.0.n == 0
    }
}

/// All-pairs shortest path lengths of an undirected weighted graph on `n` vertices.
pub fn graph_distances(n: usize, edges: &[(usize, usize, f64)]) -> Result<DistanceMatrix, IndexError> {
    let mut graph = UnGraph::<(), f64>::with_capacity(n, edges.len());
    let nodes: Vec<NodeIndex> = (0..n).map(|_| graph.add_node(())).collect();
    for &(u, v, w) in edges {
        if u >= n || v >= n {
            return Err(IndexError::BadVertex(u, v, n));
        }
        if !(w.is_finite() && w > 0.0) {
            return Err(IndexError::BadWeight(u, v, w));
        }
        graph.add_edge(nodes[u], nodes[v], w);
    }
    let mut entries = vec![0.0; n * n];
    for (i, &source) in nodes.iter().enumerate() {
        let lengths = dijkstra(&graph, source, None, |e| *e.weight());
        for (j, target) in nodes.iter().enumerate() {
            match lengths.get(target) {
                Some(&d) => entries[i * n + j] = if i == j { 0.0 } else { d },
                None => return Err(IndexError::DisconnectedGraph(i, j)),
            }
        }
    }
    // Dijkstra from either endpoint may round differently; keep the smaller.
    for i in 0..n {
        for j in i + 1..n {
            let d = entries[i * n + j].min(entries[j * n + i]);
            entries[i * n + j] = d;
            entries[j * n + i] = d;
        }
    }
    DistanceMatrix::from_fn(n, |i, j| entries[i * n + j])
}

/// Largest ultrametric below `d`: minimax path lengths, computed by single
/// linkage over a minimum spanning tree of the complete graph.
pub fn subdominant_ultrametric(d: &DistanceMatrix) -> UltrametricMatrix {
    let n = d.len();
    let mut tree_edges = Vec::with_capacity(n.saturating_sub(1));
    if n > 0 {
        // Prim on the dense complete graph.
        let mut in_tree = vec![false; n];
        let mut best = vec![f64::INFINITY; n];
        let mut from = vec![0usize; n];
        in_tree[0] = true;
        for (j, b) in best.iter_mut().enumerate().skip(1) {
            *b = d.get(0, j);
        }
        for _ in 1..n {
            let next = (0..n)
                .filter(|&j| !in_tree[j])
                .min_by(|&a, &b| best[a].total_cmp(&best[b]).then(a.cmp(&b)))
                .expect("vertices remain outside the tree");
            in_tree[next] = true;
            tree_edges.push((best[next], from[next], next));
            for j in 0..n {
                if !in_tree[j] && d.get(next, j) < best[j] {
                    best[j] = d.get(next, j);
                    from[j] = next;
                }
            }
        }
    }
    tree_edges.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut entries = vec![0.0; n * n];
    let mut cluster_of: Vec<usize> = (0..n).collect();
    let mut members: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
    for (height, a, b) in tree_edges {
        let (ca, cb) = (cluster_of[a], cluster_of[b]);
        let (keep, gone) = if members[ca].len() >= members[cb].len() {
            (ca, cb)
        } else {
            (cb, ca)
        };
        let moved = std::mem::take(&mut members[gone]);
        for &u in &members[keep] {
            for &v in &moved {
                entries[u * n + v] = height;
                entries[v * n + u] = height;
            }
        }
        for &v in &moved {
            cluster_of[v] = keep;
        }
        members[keep].extend(moved);
    }
    UltrametricMatrix(DistanceMatrix { n, entries })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DendrogramNode {
    /// Sorted vertex indices of the ball.
    pub members: Vec<usize>,
    /// Merge height (diameter) of the ball; zero for leaves.
    pub radius: f64,
    /// Ordered by smallest member.
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    /// Edge distance from the root; the root is level 0.
    pub level: usize,
}

impl DendrogramNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Rooted tree of the distinct balls of an ultrametric. Node 0 is the root and
/// nodes are numbered in breadth-first order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    nodes: Vec<DendrogramNode>,
    leaf_of: Vec<usize>,
}

pub fn build_dendrogram(delta: &UltrametricMatrix) -> Result<Dendrogram, IndexError> {
    let n = delta.len();
    if n == 0 {
        return Err(IndexError::InvalidMatrix("empty vertex set".into()));
    }
    let mut nodes = vec![DendrogramNode {
        members: (0..n).collect(),
        radius: 0.0,
        children: Vec::new(),
        parent: None,
        level: 0,
    }];
    let mut leaf_of = vec![usize::MAX; n];
    let mut cursor = 0;
    while cursor < nodes.len() {
        let members = nodes[cursor].members.clone();
        if members.len() == 1 {
            leaf_of[members[0]] = cursor;
            cursor += 1;
            continue;
        }
        let mut radius = 0.0f64;
        for (i, &u) in members.iter().enumerate() {
            for &v in &members[i + 1..] {
                radius = radius.max(delta.get(u, v));
            }
        }
        if radius == 0.0 {
            return Err(IndexError::ZeroDistance(members[0], members[1]));
        }
        nodes[cursor].radius = radius;
        let mut assigned = vec![false; members.len()];
        for i in 0..members.len() {
            if assigned[i] {
                continue;
            }
            let class: Vec<usize> = (i..members.len())
                .filter(|&j| !assigned[j] && delta.get(members[i], members[j]) < radius)
                .collect();
            for &j in &class {
                assigned[j] = true;
            }
            let id = nodes.len();
            nodes.push(DendrogramNode {
                members: class.iter().map(|&j| members[j]).collect(),
                radius: 0.0,
                children: Vec::new(),
                parent: Some(cursor),
                level: nodes[cursor].level + 1,
            });
            nodes[cursor].children.push(id);
        }
        cursor += 1;
    }
    Ok(Dendrogram { nodes, leaf_of })
}

impl Dendrogram {
    pub fn root(&self) -> usize {
        0
    }

    pub fn nodes(&self) -> &[DendrogramNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &DendrogramNode {
        &self.nodes[id]
    }

    pub fn vertex_count(&self) -> usize {
        self.leaf_of.len()
    }

    pub fn leaf_node(&self, v: usize) -> usize {
        self.leaf_of[v]
    }

    /// Largest level of any node.
    pub fn max_level(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    pub fn nodes_at_level(&self, level: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(move |&i| self.nodes[i].level == level)
    }

    pub fn max_branching(&self) -> usize {
        self.nodes.iter().map(|n| n.children.len()).max().unwrap_or(0)
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(move |&i| !self.nodes[i].is_leaf())
    }

    /// True when the root is the only non-singleton ball.
    pub fn is_trivial(&self) -> bool {
        self.nodes[0].children.iter().all(|&c| self.nodes[c].is_leaf())
    }

    /// Node ids from `id` up to the root, inclusive.
    pub fn ancestors(&self, id: usize) -> Vec<usize> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path
    }

    pub fn lca(&self, a: usize, b: usize) -> usize {
        let (mut a, mut b) = (a, b);
        while self.nodes[a].level > self.nodes[b].level {
            a = self.nodes[a].parent.expect("non-root has parent");
        }
        while self.nodes[b].level > self.nodes[a].level {
            b = self.nodes[b].parent.expect("non-root has parent");
        }
        while a != b {
            a = self.nodes[a].parent.expect("non-root has parent");
            b = self.nodes[b].parent.expect("non-root has parent");
        }
        a
    }

    /// Ancestor of vertex `v` at `level`, or the leaf of `v` when it is shallower.
    pub fn ancestor_at_level(&self, v: usize, level: usize) -> usize {
        let mut cur = self.leaf_of[v];
        while self.nodes[cur].level > level {
            cur = self.nodes[cur].parent.expect("non-root has parent");
        }
        cur
    }

    /// Child of `node` whose ball contains vertex `v`.
    pub fn child_containing(&self, node: usize, v: usize) -> Option<usize> {
        self.nodes[node]
            .children
            .iter()
            .copied()
            .find(|&c| self.nodes[c].members.binary_search(&v).is_ok())
    }

    /// The smallest non-singleton ball containing `x`: the members of its
    /// leaf's parent. A single-vertex tree yields `{x}`.
    pub fn minimal_cluster(&self, x: usize) -> &[usize] {
        let leaf = self.leaf_of[x];
        match self.nodes[leaf].parent {
            Some(parent) => &self.nodes[parent].members,
            None => &self.nodes[leaf].members,
        }
    }

    /// Node id of the minimal cluster of `x`.
    pub fn minimal_cluster_node(&self, x: usize) -> usize {
        let leaf = self.leaf_of[x];
        self.nodes[leaf].parent.unwrap_or(leaf)
    }

    /// The ultrametric read back from the tree: radius of the lowest common ancestor.
    pub fn cophenetic(&self) -> UltrametricMatrix {
        let n = self.vertex_count();
        let mut entries = vec![0.0; n * n];
        for u in 0..n {
            for v in 0..n {
                if u != v {
                    entries[u * n + v] = self.nodes[self.lca(self.leaf_of[u], self.leaf_of[v])].radius;
                }
            }
        }
        UltrametricMatrix(DistanceMatrix { n, entries })
    }

    pub fn to_record(&self, labels: &[String]) -> DendrogramRecord {
        self.record_at(0, labels)
    }

    fn record_at(&self, id: usize, labels: &[String]) -> DendrogramRecord {
        let node = &self.nodes[id];
        if node.is_leaf() {
            DendrogramRecord::Leaf {
                radius: node.radius,
                leaf: labels[node.members[0]].clone(),
            }
        } else {
            DendrogramRecord::Node {
                radius: node.radius,
                children: node.children.iter().map(|&c| self.record_at(c, labels)).collect(),
            }
        }
    }

    /// Rebuilds a dendrogram from its nested record; `labels` fixes the vertex numbering.
    pub fn from_record(record: &DendrogramRecord, labels: &[String]) -> Result<Self, IndexError> {
        let index: HashMap<&str, usize> =
            labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let n = labels.len();
        let mut delta = vec![0.0; n * n];
        let mut seen = vec![false; n];
        fn walk(
            r: &DendrogramRecord,
            index: &HashMap<&str, usize>,
            delta: &mut [f64],
            seen: &mut [bool],
            n: usize,
        ) -> Result<Vec<usize>, IndexError> {
            match r {
                DendrogramRecord::Leaf { leaf, .. } => {
                    let &v = index
                        .get(leaf.as_str())
                        .ok_or_else(|| IndexError::BadRecord(format!("unknown leaf {leaf:?}")))?;
                    if std::mem::replace(&mut seen[v], true) {
                        return Err(IndexError::BadRecord(format!("leaf {leaf:?} repeated")));
                    }
                    Ok(vec![v])
                }
                DendrogramRecord::Node { radius, children } => {
                    let mut all: Vec<usize> = Vec::new();
                    for c in children {
                        let sub = walk(c, index, delta, seen, n)?;
                        for &u in &all {
                            for &v in &sub {
                                delta[u * n + v] = *radius;
                                delta[v * n + u] = *radius;
                            }
                        }
                        all.extend(sub);
                    }
                    Ok(all)
                }
            }
        }
        walk(record, &index, &mut delta, &mut seen, n)?;
        if seen.iter().any(|s| !s) {
            return Err(IndexError::BadRecord("record does not cover every vertex".into()));
        }
        let d = DistanceMatrix::from_fn(n, |i, j| delta[i * n + j])?;
        let dend = build_dendrogram(&UltrametricMatrix::new(d)?)?;
        if dend.to_record(labels) != *record {
            return Err(IndexError::BadRecord("record is not a canonical ball tree".into()));
        }
        Ok(dend)
    }
}

/// Persistent form of the index: nested `{radius, children}` / `{radius, leaf}` records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DendrogramRecord {
    Node {
        radius: f64,
        children: Vec<DendrogramRecord>,
    },
    Leaf {
        radius: f64,
        leaf: String,
    },
}

//! Cluster-parallel topological sorting driven by the ultrametric index.
//!
//! Minimal clusters are sorted independently, then merged pairwise after
//! adding the chain edges of each sorted cluster. Local sorts and merges break
//! ties by descending chain length (the vertex dimension of the encoding) and
//! then by vertex index. Every local order is therefore a restriction of one
//! global linear extension, and merging never meets contradictory chains.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use rayon::prelude::*;
use thiserror::Error;

use crate::multitopo::chain_lengths;
use crate::ultraindex::Dendrogram;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SortError {
    #[error("cycle detected among the vertices being sorted")]
    CycleDetected,
    #[error("edge ({0}, {1}) references a vertex outside 0..{2}")]
    BadVertex(usize, usize, usize),
    #[error("vertex {0} is not in the graph")]
    UnknownVertex(usize),
    #[error("the seed list is empty")]
    EmptySeeds,
    #[error("dendrogram covers {0} vertices but the graph has {1}")]
    SizeMismatch(usize, usize),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

/// Directed graph on vertices `0..n`.
#[derive(Debug, Clone)]
pub struct Dag {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    out: Vec<Vec<usize>>,
    /// Longest chain from each vertex; `None` when the graph has a cycle.
    heights: Option<Vec<u32>>,
}

impl Dag {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, SortError> {
        let edges: BTreeSet<(usize, usize)> = edges.into_iter().collect();
        let mut out = vec![Vec::new(); n];
        for &(a, b) in &edges {
            if a >= n || b >= n {
                return Err(SortError::BadVertex(a, b, n));
            }
            out[a].push(b);
        }
        let heights = chain_lengths(n, &edges);
        Ok(Dag {
            n,
            edges,
            out,
            heights,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn is_acyclic(&self) -> bool {
        self.heights.is_some()
    }

    fn priority(&self, v: usize) -> (i64, usize) {
        let h = self.heights.as_ref().map_or(0, |h| h[v] as i64);
        (-h, v)
    }
}

/// Checks that every edge of `dag` points forward in `order` and that `order`
/// is a permutation of the vertices.
pub fn is_linear_extension(dag: &Dag, order: &[usize]) -> bool {
    if order.len() != dag.n {
        return false;
    }
    let mut pos = vec![usize::MAX; dag.n];
    for (i, &v) in order.iter().enumerate() {
        if v >= dag.n || pos[v] != usize::MAX {
            return false;
        }
        pos[v] = i;
    }
    dag.edges.iter().all(|&(a, b)| pos[a] < pos[b])
}

/// Kahn's algorithm on `members` (sorted, distinct) using the induced edges of
/// `dag` plus `extra` edges; ties go to the smallest `key`.
fn kahn_with<K: Ord + Copy>(
    dag: &Dag,
    members: &[usize],
    extra: &[(usize, usize)],
    key: impl Fn(usize) -> K,
) -> Result<Vec<usize>, SortError> {
    let mut local = vec![usize::MAX; dag.n];
    for (i, &v) in members.iter().enumerate() {
        local[v] = i;
    }
    let m = members.len();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut in_degree = vec![0usize; m];
    for (i, &v) in members.iter().enumerate() {
        for &w in &dag.out[v] {
            if local[w] != usize::MAX {
                succ[i].push(local[w]);
                in_degree[local[w]] += 1;
            }
        }
    }
    for &(a, b) in extra {
        let (a, b) = (local[a], local[b]);
        succ[a].push(b);
        in_degree[b] += 1;
    }
    let mut ready: BinaryHeap<Reverse<(K, usize)>> = (0..m)
        .filter(|&i| in_degree[i] == 0)
        .map(|i| Reverse((key(members[i]), i)))
        .collect();
    let mut order = Vec::with_capacity(m);
    while let Some(Reverse((_, i))) = ready.pop() {
        order.push(members[i]);
        for &j in &succ[i] {
            in_degree[j] -= 1;
            if in_degree[j] == 0 {
                ready.push(Reverse((key(members[j]), j)));
            }
        }
    }
    if order.len() != m {
        return Err(SortError::CycleDetected);
    }
    Ok(order)
}

fn checked_members(dag: &Dag, members: &[usize]) -> Result<Vec<usize>, SortError> {
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&v) = sorted.iter().find(|&&v| v >= dag.n) {
        return Err(SortError::UnknownVertex(v));
    }
    Ok(sorted)
}

/// Kahn's algorithm restricted to `members` (all vertices when `None`); the
/// smallest ready vertex index goes first.
pub fn kahn_sort(dag: &Dag, members: Option<&[usize]>) -> Result<Vec<usize>, SortError> {
    let members = match members {
        Some(m) => checked_members(dag, m)?,
        None => (0..dag.n).collect(),
    };
    kahn_with(dag, &members, &[], |v| v)
}

/// A ball of the index together with a linear extension of the induced DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortedCluster {
    /// Sorted vertex indices.
    pub members: Vec<usize>,
    pub order: Vec<usize>,
}

impl SortedCluster {
    fn chain(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.order.windows(2).map(|w| (w[0], w[1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterRelation {
    Disjoint,
    /// `U(x)` strictly inside `U(y)`.
    LeftInsideRight,
    /// `U(y)` strictly inside `U(x)`.
    RightInsideLeft,
    Equal,
}

/// Sorts the minimal cluster `U(x)`.
pub fn cluster_sort(dend: &Dendrogram, dag: &Dag, x: usize) -> Result<SortedCluster, SortError> {
    if x >= dag.n || x >= dend.vertex_count() {
        return Err(SortError::UnknownVertex(x));
    }
    let members = dend.minimal_cluster(x).to_vec();
    let order = kahn_with(dag, &members, &[], |v| dag.priority(v))?;
    Ok(SortedCluster { members, order })
}

/// Relation between `U(x)` and `U(y)` from the two membership tests.
pub fn compare_clusters(dend: &Dendrogram, x: usize, y: usize) -> ClusterRelation {
    let x_in_uy = dend.minimal_cluster(y).binary_search(&x).is_ok();
    let y_in_ux = dend.minimal_cluster(x).binary_search(&y).is_ok();
    match (x_in_uy, y_in_ux) {
        (true, true) => ClusterRelation::Equal,
        (true, false) => ClusterRelation::LeftInsideRight,
        (false, true) => ClusterRelation::RightInsideLeft,
        (false, false) => ClusterRelation::Disjoint,
    }
}

/// Sorts the union of two sorted clusters under the original edges plus the
/// chain edges of both input orders.
pub fn merge_sorted_clusters(
    dag: &Dag,
    left: &SortedCluster,
    right: &SortedCluster,
) -> Result<SortedCluster, SortError> {
    let mut members: Vec<usize> = left.members.iter().chain(&right.members).copied().collect();
    members = checked_members(dag, &members)?;
    let extra: Vec<(usize, usize)> = left.chain().chain(right.chain()).collect();
    let order = kahn_with(dag, &members, &extra, |v| dag.priority(v))?;
    Ok(SortedCluster { members, order })
}

/// Full topological sort: cluster sorts for all seeds in parallel, then a
/// binary reduction of pairwise merges over the clusters ordered by smallest
/// member. Vertices not covered by any seed cluster enter as singletons.
/// With a trivial index (one non-trivial ball) this is plain [`kahn_sort`].
pub fn parallel_toposort(
    dag: &Dag,
    dend: &Dendrogram,
    seeds: &[usize],
    parallelism: usize,
) -> Result<Vec<usize>, SortError> {
    if seeds.is_empty() {
        return Err(SortError::EmptySeeds);
    }
    if dend.vertex_count() != dag.n {
        return Err(SortError::SizeMismatch(dend.vertex_count(), dag.n));
    }
    if let Some(&s) = seeds.iter().find(|&&s| s >= dag.n) {
        return Err(SortError::UnknownVertex(s));
    }
    if dend.is_trivial() {
        return kahn_sort(dag, None);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| SortError::Pool(e.to_string()))?;
    pool.install(|| {
        let mut clusters = seeds
            .par_iter()
            .map(|&x| cluster_sort(dend, dag, x))
            .collect::<Result<Vec<_>, _>>()?;
        clusters.sort_by(|a, b| a.members.cmp(&b.members));
        clusters.dedup_by(|a, b| a.members == b.members);

        let mut covered = vec![false; dag.n];
        for c in &clusters {
            for &v in &c.members {
                covered[v] = true;
            }
        }
        clusters.extend((0..dag.n).filter(|&v| !covered[v]).map(|v| SortedCluster {
            members: vec![v],
            order: vec![v],
        }));
        clusters.sort_by(|a, b| a.members.cmp(&b.members));

        while clusters.len() > 1 {
            clusters = clusters
                .par_chunks(2)
                .map(|pair| match pair {
                    [a, b] => merge_sorted_clusters(dag, a, b),
                    [a] => Ok(a.clone()),
                    _ => unreachable!("chunks hold one or two clusters"),
                })
                .collect::<Result<Vec<_>, _>>()?;
        }
        Ok(clusters.pop().map(|c| c.order).unwrap_or_default())
    })
}

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use ultradiff::multitopo::{first_primes, TopologyFamily};
use ultradiff::ultraindex::{build_dendrogram, Dendrogram, DistanceMatrix, UltrametricMatrix};

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dendrogram(rows: &[Vec<f64>]) -> Dendrogram {
    let d = DistanceMatrix::from_rows(rows).unwrap();
    build_dendrogram(&UltrametricMatrix::new(d).unwrap()).unwrap()
}

pub fn rows_of(d: &DistanceMatrix) -> Vec<Vec<f64>> {
    (0..d.len()).map(|i| d.row(i).to_vec()).collect()
}

/// Edges of a random DAG: a random vertex order with each forward pair kept
/// with probability `density`.
pub fn random_dag_edges(rng: &mut TestRng, n: usize, density: f64) -> BTreeSet<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = BTreeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                edges.insert((order[i], order[j]));
            }
        }
    }
    edges
}

pub fn random_family(rng: &mut TestRng, max_topologies: usize, max_vertices: usize) -> TopologyFamily {
    let topologies = rng.gen_range(1..=max_topologies);
    let n = rng.gen_range(1..=max_vertices);
    let vertices: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let dags = (0..topologies)
        .map(|_| {
            let density = rng.gen_range(0.0..0.15);
            random_dag_edges(rng, n, density)
        })
        .collect();
    let mut primes = first_primes(10);
    primes.shuffle(rng);
    primes.truncate(topologies);
    TopologyFamily::from_indices(vertices, dags, Some(primes)).unwrap()
}

/// Shortest-path closure of random positive weights on the complete graph.
pub fn random_metric(rng: &mut TestRng, n: usize, lo: f64, hi: f64) -> DistanceMatrix {
    let mut d = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let w = rng.gen_range(lo..hi);
            d[i][j] = w;
            d[j][i] = w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    DistanceMatrix::from_rows(&d).unwrap()
}

/// Ultrametric from repeatedly merging 2..=`max_children` random groups at
/// strictly increasing integer heights.
pub fn merge_ultrametric(rng: &mut TestRng, n: usize, max_children: usize) -> Vec<Vec<f64>> {
    let mut groups: Vec<Vec<usize>> = (0..n).map(|v| vec![v]).collect();
    let mut rows = vec![vec![0.0f64; n]; n];
    let mut height = 0.0f64;
    while groups.len() > 1 {
        height += rng.gen_range(1..4) as f64;
        let k = rng.gen_range(2..=max_children.min(groups.len()));
        let mut merged: Vec<usize> = Vec::new();
        for _ in 0..k {
            let i = rng.gen_range(0..groups.len());
            let g = groups.swap_remove(i);
            for &a in &merged {
                for &b in &g {
                    rows[a][b] = height;
                    rows[b][a] = height;
                }
            }
            merged.extend(g);
        }
        groups.push(merged);
    }
    rows
}

/// Ultrametric of a random rooted tree of depth at most `max_depth` with
/// 2..=`max_children` children per internal node; the root has radius
/// `2 max_depth + 2` and each child sits 1 or 2 below its parent.
pub fn shaped_ultrametric(
    rng: &mut TestRng,
    max_children: usize,
    max_depth: usize,
    max_leaves: usize,
) -> Vec<Vec<f64>> {
    loop {
        // Root path of every leaf as alternating (radius, sibling tag) entries.
        let mut paths: Vec<Vec<f64>> = Vec::new();
        grow(rng, &mut paths, Vec::new(), 2.0 * max_depth as f64 + 2.0, 0, max_children, max_depth);
        let n = paths.len();
        if n > max_leaves {
            continue;
        }
        let mut rows = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let common = paths[i]
                        .iter()
                        .zip(&paths[j])
                        .take_while(|(a, b)| a == b)
                        .count();
                    rows[i][j] = paths[i][common - 1];
                }
            }
        }
        return rows;
    }
}

fn grow(
    rng: &mut TestRng,
    leaves: &mut Vec<Vec<f64>>,
    path: Vec<f64>,
    radius: f64,
    depth: usize,
    max_children: usize,
    max_depth: usize,
) {
    let is_leaf = depth == max_depth || (depth > 0 && rng.gen_bool(0.35));
    if is_leaf {
        leaves.push(path);
        return;
    }
    let c = rng.gen_range(2..=max_children);
    for idx in 0..c {
        let mut child = path.clone();
        child.push(radius);
        child.push(-(idx as f64) - 1.0);
        let step = rng.gen_range(1..=2) as f64;
        grow(rng, leaves, child, radius - step, depth + 1, max_children, max_depth);
    }
}

/// Random kappa matrix: positive on a random edge set, zero elsewhere.
pub fn random_kappa(rng: &mut TestRng, n: usize) -> Vec<Vec<f64>> {
    let mut k = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.6) {
                let w = rng.gen_range(0.2..3.0);
                k[i][j] = w;
                k[j][i] = w;
            }
        }
    }
    k
}

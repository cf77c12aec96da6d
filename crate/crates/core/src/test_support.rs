use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ultraindex::{build_dendrogram, Dendrogram, DistanceMatrix, UltrametricMatrix};

pub fn dendrogram(rows: &[Vec<f64>]) -> Dendrogram {
    let d = DistanceMatrix::from_rows(rows).unwrap();
    build_dendrogram(&UltrametricMatrix::new(d).unwrap()).unwrap()
}

/// Ultrametric from repeatedly merging 2..=`max_children` random groups at
/// strictly increasing integer heights.
pub fn random_ultrametric(n: usize, seed: u64, max_children: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
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

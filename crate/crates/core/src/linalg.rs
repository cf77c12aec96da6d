//! Dense symmetric eigensolve shared by the spectral and heat modules.

use nalgebra::{DMatrix, DVector};

/// Eigenvalues gap below which eigenvectors are treated as one multiplet.
pub const DEGENERACY_GAP: f64 = 1e-9;

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order and
/// eigenvectors as orthonormal columns.
#[derive(Debug, Clone)]
pub struct SymmetricSpectrum {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymmetricSpectrum {
    /// `V diag(f(values)) V^T`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.vectors.nrows(), self.vectors.ncols(), |i, k| {
            self.vectors[(i, k)] * f(self.values[k])
        });
        &scaled * self.vectors.transpose()
    }

    /// Index ranges of numerically degenerate eigenvalues.
    pub fn multiplets(&self) -> Vec<std::ops::Range<usize>> {
        let n = self.values.len();
        let mut out = Vec::new();
        let mut start = 0;
        for k in 1..=n {
            if k == n || (self.values[k - 1] - self.values[k]).abs() >= DEGENERACY_GAP {
                out.push(start..k);
                start = k;
            }
        }
        out
    }
}

/// Returns `None` when the iteration fails to converge.
pub fn symmetric_eigen(s: &DMatrix<f64>) -> Option<SymmetricSpectrum> {
    let n = s.nrows();
    let sym = (s + s.transpose()) * 0.5;
    let eig = nalgebra::linalg::SymmetricEigen::try_new(sym, f64::EPSILON, 0)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])]);
    let spectrum = SymmetricSpectrum {
        values,
        vectors: vectors.clone(),
    };
    for range in spectrum.multiplets() {
        if range.len() > 1 {
            reorthogonalize(&mut vectors, range);
        }
    }
    Some(SymmetricSpectrum {
        values: spectrum.values,
        vectors,
    })
}

/// Two passes of modified Gram-Schmidt over the given columns.
fn reorthogonalize(vectors: &mut DMatrix<f64>, range: std::ops::Range<usize>) {
    for _ in 0..2 {
        for k in range.clone() {
            for j in range.start..k {
                let proj = vectors.column(j).dot(&vectors.column(k));
                let cj = vectors.column(j).clone_owned();
                vectors.column_mut(k).axpy(-proj, &cj, 1.0);
            }
            let norm = vectors.column(k).norm();
            vectors.column_mut(k).scale_mut(1.0 / norm);
        }
    }
}

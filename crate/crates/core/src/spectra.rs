//! Eigenfunctions of the hierarchical operators: Kozyrev wavelets inside the
//! vertex discs, ultrametric wavelets on the dendrogram, and the modes of the
//! vertex-level block Laplacian.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::symmetric_eigen;
use crate::operators::{generator, Bullet, GeneratorMatrix, KernelSpec, Measure, OperatorError};
use crate::padic::{DiscAssignment, Discretization, PAdicCell};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectraError {
    #[error("ball {0:?} is not inside a vertex disc")]
    BallOutsideZ(Vec<u32>),
    #[error("character index {j} must lie in 1..{p}")]
    BadJ { j: u32, p: u64 },
    #[error("discretization level {n} is too coarse for a ball at level {d}")]
    LevelTooCoarse { n: usize, d: usize },
    #[error("node {0} is a leaf")]
    LeafNode(usize),
    #[error("character index {k} must lie in 1..{c}")]
    TrivialCharacter { k: usize, c: usize },
    #[error("basis has {got} functions for {expected} cells")]
    IncompleteBasis { expected: usize, got: usize },
    #[error("vector has length {got}, operator has size {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("eigensolver did not converge")]
    NoConvergence,
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

fn root_of_unity(k: u64, n: u64) -> Complex64 {
    Complex64::from_polar(1.0, TAU * (k % n) as f64 / n as f64)
}

/// Vertex whose disc contains `ball`, requiring `ball` to be at least as fine.
fn host_vertex(assign: &DiscAssignment, ball: &PAdicCell) -> Result<usize, SpectraError> {
    assign
        .vertex_of(ball)
        .ok_or_else(|| SpectraError::BallOutsideZ(ball.digits.clone()))
}

/// Kozyrev wavelet `psi_{B,j}`: on the child of `B` with branch digit `a` it
/// equals `|B|^{-1/2} e^{2 pi i j a / p}`, normalized for `measure`; zero off `B`.
pub fn kozyrev_wavelet(
    assign: &DiscAssignment,
    disc: &Discretization,
    ball: &PAdicCell,
    j: u32,
    measure: Measure,
) -> Result<Vec<Complex64>, SpectraError> {
    let v = host_vertex(assign, ball)?;
    let p = assign.p();
    if j == 0 || u64::from(j) >= p {
        return Err(SpectraError::BadJ { j, p });
    }
    let d = ball.level();
    if disc.level() <= d {
        return Err(SpectraError::LevelTooCoarse { n: disc.level(), d });
    }
    let mut scale = (p as f64).powf(d as f64 / 2.0);
    if measure == Measure::Nu {
        scale /= assign.density(v).sqrt();
    }
    let mut psi = vec![Complex64::new(0.0, 0.0); disc.len()];
    for i in disc.cells_in(ball) {
        let a = disc.cell(i).cell.digits[d];
        psi[i] = root_of_unity(u64::from(j) * u64::from(a), p) * scale;
    }
    Ok(psi)
}

/// Eigenvalue of the Vladimirov part on `U_v` for a ball of level `d >= m`
/// under Haar measure:
/// `-(1 - 1/p) sum_{j=m}^{d-1} p^{j(alpha-1)} - p^{d(alpha-1)}`.
pub fn kozyrev_local_eigenvalue(p: u64, alpha: f64, m: usize, d: usize) -> f64 {
    let p = p as f64;
    let shells: f64 = (m..d).map(|j| p.powf(j as f64 * (alpha - 1.0))).sum();
    -(1.0 - 1.0 / p) * shells - p.powf(d as f64 * (alpha - 1.0))
}

/// Escape rate from `U_v` to the other discs: `sum_{w != v} k(v,w) mu(U_w)`.
fn escape_rate(spec: &KernelSpec, assign: &DiscAssignment, v: usize, measure: Measure) -> f64 {
    (0..assign.vertex_count())
        .filter(|&w| w != v)
        .map(|w| {
            let vol = match measure {
                Measure::Haar => assign.disc(w).volume(),
                Measure::Nu => assign.nu_vertex(w),
            };
            spec.rate(v, w) * vol
        })
        .sum()
}

/// Eigenvalue of every `psi_{B,j}`; it does not depend on `j`.
pub fn kozyrev_eigenvalue(
    spec: &KernelSpec,
    assign: &DiscAssignment,
    ball: &PAdicCell,
    measure: Measure,
) -> Result<f64, SpectraError> {
    let v = host_vertex(assign, ball)?;
    let local = kozyrev_local_eigenvalue(assign.p(), spec.alpha(), assign.m(), ball.level());
    let density = match measure {
        Measure::Haar => 1.0,
        Measure::Nu => assign.density(v),
    };
    Ok(density * local - escape_rate(spec, assign, v, measure))
}

/// The closed form `1 - p^{d(1+alpha)} (p^{-m(1+alpha)} + 1) - sum k(v,w) mu(U_w)`
/// as usually stated for Haar measure. It does not match the operator; see
/// [`kozyrev_eigenvalue`] for the value the generator confirms.
pub fn published_kozyrev_eigenvalue(
    spec: &KernelSpec,
    assign: &DiscAssignment,
    ball: &PAdicCell,
) -> Result<f64, SpectraError> {
    let v = host_vertex(assign, ball)?;
    let p = assign.p() as f64;
    let a = spec.alpha();
    let (d, m) = (ball.level() as f64, assign.m() as f64);
    Ok(1.0 - p.powf(d * (1.0 + a)) * (p.powf(-m * (1.0 + a)) + 1.0)
        - escape_rate(spec, assign, v, Measure::Haar))
}

/// Ultrametric wavelet `psi_{n,k}`: `nu(n)^{-1/2} e^{2 pi i k idx / c}` on the
/// child of index `idx`, zero outside the node.
pub fn ultrametric_wavelet(
    assign: &DiscAssignment,
    disc: &Discretization,
    node: usize,
    k: usize,
) -> Result<Vec<Complex64>, SpectraError> {
    let dend = assign.dendrogram();
    let children = &dend.node(node).children;
    let c = children.len();
    if c == 0 {
        return Err(SpectraError::LeafNode(node));
    }
    if k == 0 || k >= c {
        return Err(SpectraError::TrivialCharacter { k, c });
    }
    let scale = assign.measure().nu(node).powf(-0.5);
    let values: Vec<Complex64> = (0..c)
        .map(|idx| root_of_unity((k * idx) as u64, c as u64) * scale)
        .collect();
    let per_vertex: Vec<Option<Complex64>> = (0..assign.vertex_count())
        .map(|v| {
            children
                .iter()
                .position(|&ch| dend.node(ch).members.binary_search(&v).is_ok())
                .map(|idx| values[idx])
        })
        .collect();
    Ok(disc
        .cells()
        .iter()
        .map(|cell| {
            cell.vertex
                .and_then(|v| per_vertex[v])
                .unwrap_or(Complex64::new(0.0, 0.0))
        })
        .collect())
}

/// Eigenvalue of `psi_{n,k}` under the ultrametric bullet and `nu`:
/// `-r_n^{-alpha} nu(n) - sum_{a} r_a^{-alpha} (nu(a) - nu(a'))` over the strict
/// ancestors `a` of `n`, with `a'` the child of `a` on the path to `n`.
pub fn ultrametric_eigenvalue(assign: &DiscAssignment, node: usize, alpha: f64) -> Result<f64, SpectraError> {
    let dend = assign.dendrogram();
    let nu = assign.measure();
    let here = dend.node(node);
    if here.is_leaf() {
        return Err(SpectraError::LeafNode(node));
    }
    let mut gamma = -here.radius.powf(-alpha) * nu.nu(node);
    let mut below = node;
    while let Some(up) = dend.node(below).parent {
        gamma -= dend.node(up).radius.powf(-alpha) * (nu.nu(up) - nu.nu(below));
        below = up;
    }
    Ok(gamma)
}

/// The closed form `-diam^{-alpha} |C(n)| nu(n \ m(x))` as usually stated. It
/// carries an extra factor `c - 1` on the local term and omits the escape
/// through the ancestors; see [`ultrametric_eigenvalue`].
pub fn published_ultrametric_eigenvalue(assign: &DiscAssignment, node: usize, alpha: f64) -> Result<f64, SpectraError> {
    let dend = assign.dendrogram();
    let here = dend.node(node);
    let c = here.children.len();
    if c == 0 {
        return Err(SpectraError::LeafNode(node));
    }
    let nu = assign.measure();
    let child = nu.nu(here.children[0]);
    Ok(-here.radius.powf(-alpha) * c as f64 * (nu.nu(node) - child))
}

/// An eigenvector of the vertex-level generator `L[v][w] = k(v,w) mu(U_w)`,
/// normalized so that `sum_v e_v^2 mu(U_v) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMode {
    pub lambda: f64,
    pub vertex_values: Vec<f64>,
}

impl BlockMode {
    /// The mode as a function constant on each vertex disc.
    pub fn lift(&self, disc: &Discretization) -> Vec<Complex64> {
        disc.cells()
            .iter()
            .map(|c| Complex64::new(c.vertex.map_or(0.0, |v| self.vertex_values[v]), 0.0))
            .collect()
    }
}

pub fn laplacian_block_modes(
    spec: &KernelSpec,
    assign: &DiscAssignment,
    measure: Measure,
) -> Result<Vec<BlockMode>, SpectraError> {
    let n = assign.vertex_count();
    let vol: Vec<f64> = (0..n)
        .map(|v| match measure {
            Measure::Haar => assign.disc(v).volume(),
            Measure::Nu => assign.nu_vertex(v),
        })
        .collect();
    let mut sym = DMatrix::zeros(n, n);
    for v in 0..n {
        let mut out = 0.0;
        for w in 0..n {
            if v != w {
                sym[(v, w)] = spec.rate(v, w) * (vol[v] * vol[w]).sqrt();
                out += spec.rate(v, w) * vol[w];
            }
        }
        sym[(v, v)] = -out;
    }
    let eig = symmetric_eigen(&sym).ok_or(SpectraError::NoConvergence)?;
    Ok((0..n)
        .map(|k| BlockMode {
            lambda: eig.values[k],
            vertex_values: (0..n).map(|v| eig.vectors[(v, k)] / vol[v].sqrt()).collect(),
        })
        .collect())
}

/// `||A psi - lambda psi||_inf / max(1, |lambda|)`.
pub fn verify_eigenpair(a: &GeneratorMatrix, psi: &[Complex64], lambda: f64) -> Result<f64, SpectraError> {
    if psi.len() != a.len() {
        return Err(SpectraError::DimensionMismatch {
            expected: a.len(),
            got: psi.len(),
        });
    }
    let image = a.apply_complex(psi);
    let err = image
        .iter()
        .zip(psi)
        .map(|(ap, p)| (ap - p * lambda).norm())
        .fold(0.0, f64::max);
    Ok(err / lambda.abs().max(1.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PairKind {
    Kozyrev { vertex: usize, ball: Vec<u32>, j: u32 },
    Ultrametric { node: usize, k: usize },
    Block { index: usize },
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub kind: PairKind,
    pub lambda: f64,
    pub psi: Vec<Complex64>,
    pub residual: f64,
}

/// A complete orthonormal eigenbasis of the level-`n` functions on `Z`.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub measure: Measure,
    pub weights: Vec<f64>,
    pub pairs: Vec<EigenPair>,
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `<a, b> = sum_x w(x) conj(a(x)) b(x)`.
    pub fn inner(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter()
            .zip(b)
            .zip(&self.weights)
            .map(|((x, y), w)| x.conj() * y * *w)
            .sum()
    }

    pub fn gram(&self) -> DMatrix<Complex64> {
        let n = self.len();
        let rows: Vec<Vec<Complex64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| self.inner(&self.pairs[i].psi, &self.pairs[j].psi))
                    .collect()
            })
            .collect();
        DMatrix::from_fn(n, n, |i, j| rows[i][j])
    }

    /// `sum_k psi_k(x) conj(psi_k(y)) w(y)`, which reproduces every vector.
    pub fn projector_sum(&self) -> DMatrix<Complex64> {
        let n = self.weights.len();
        DMatrix::from_fn(n, n, |x, y| {
            self.pairs
                .iter()
                .map(|p| p.psi[x] * p.psi[y].conj())
                .sum::<Complex64>()
                * self.weights[y]
        })
    }

    pub fn max_residual(&self) -> f64 {
        self.pairs.iter().map(|p| p.residual).fold(0.0, f64::max)
    }
}

fn identity_error(m: &DMatrix<Complex64>) -> f64 {
    let mut err = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            err = err.max((m[(i, j)] - target).norm());
        }
    }
    err
}

/// Largest entry of `G - I` for the Gram matrix `G`.
pub fn gram_error(basis: &EigenBasis) -> f64 {
    identity_error(&basis.gram())
}

/// Largest entry of `P - I` for the summed rank-one projectors `P`.
pub fn projector_error(basis: &EigenBasis) -> f64 {
    identity_error(&basis.projector_sum())
}

/// Kozyrev wavelets on all balls strictly inside the vertex discs and above
/// the discretization level, then the vertex-level modes: the block
/// Laplacian's eigenvectors, or for the ultrametric bullet under `nu` the
/// constant and the ultrametric wavelets.
pub fn full_basis(
    spec: &KernelSpec,
    assign: &DiscAssignment,
    disc: &Discretization,
    measure: Measure,
) -> Result<EigenBasis, SpectraError> {
    let a = generator(spec, assign, disc, measure)?;
    let n = disc.level();
    let mut pairs: Vec<(PairKind, f64, Vec<Complex64>)> = Vec::new();

    for v in 0..assign.vertex_count() {
        for d in assign.m()..n {
            for ball in assign.disc(v).descendants(d) {
                let lambda = kozyrev_eigenvalue(spec, assign, &ball, measure)?;
                for j in 1..assign.p() as u32 {
                    let psi = kozyrev_wavelet(assign, disc, &ball, j, measure)?;
                    let kind = PairKind::Kozyrev {
                        vertex: v,
                        ball: ball.digits.clone(),
                        j,
                    };
                    pairs.push((kind, lambda, psi));
                }
            }
        }
    }

    if measure == Measure::Nu && spec.bullet() == Bullet::Ultrametric {
        let constant = vec![Complex64::new(1.0, 0.0); disc.len()];
        pairs.push((PairKind::Constant, 0.0, constant));
        let dend = assign.dendrogram();
        for node in dend.internal_nodes() {
            let lambda = ultrametric_eigenvalue(assign, node, spec.alpha())?;
            for k in 1..dend.node(node).children.len() {
                let psi = ultrametric_wavelet(assign, disc, node, k)?;
                pairs.push((PairKind::Ultrametric { node, k }, lambda, psi));
            }
        }
    } else {
        for (index, mode) in laplacian_block_modes(spec, assign, measure)?.into_iter().enumerate() {
            pairs.push((PairKind::Block { index }, mode.lambda, mode.lift(disc)));
        }
    }

    if pairs.len() != disc.len() {
        return Err(SpectraError::IncompleteBasis {
            expected: disc.len(),
            got: pairs.len(),
        });
    }
    let pairs = pairs
        .into_par_iter()
        .map(|(kind, lambda, psi)| {
            let residual = verify_eigenpair(&a, &psi, lambda)?;
            Ok(EigenPair {
                kind,
                lambda,
                psi,
                residual,
            })
        })
        .collect::<Result<Vec<_>, SpectraError>>()?;
    Ok(EigenBasis {
        measure,
        weights: a.weights().to_vec(),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::padic::{discretize, embed, embed_with_prime};
    use crate::test_support::{dendrogram, random_ultrametric};
    use proptest::prelude::*;

    fn single(p: u64) -> DiscAssignment {
        embed_with_prime(&dendrogram(&[vec![0.0]]), p).unwrap()
    }

    fn delta_spec(rows: &[Vec<f64>], alpha: f64) -> KernelSpec {
        KernelSpec::new(Bullet::Ultrametric, alpha, rows).unwrap()
    }

    #[test]
    fn binary_wavelet_values() {
        let a = single(2);
        let disc = discretize(&a, 2).unwrap();
        let ball = PAdicCell::new(2, vec![1]).unwrap();
        let psi = kozyrev_wavelet(&a, &disc, &ball, 1, Measure::Haar).unwrap();
        let s = 2f64.sqrt();
        let expect = [0.0, 0.0, s, -s];
        for (x, e) in psi.iter().zip(expect) {
            assert!((x.re - e).abs() < 1e-15 && x.im.abs() < 1e-15);
        }
        assert!(matches!(
            kozyrev_wavelet(&a, &disc, &ball, 2, Measure::Haar),
            Err(SpectraError::BadJ { .. })
        ));
        assert!(matches!(
            kozyrev_wavelet(&a, &disc, &ball.child(0), 1, Measure::Haar),
            Err(SpectraError::LevelTooCoarse { .. })
        ));
    }

    #[test]
    fn wavelet_orthogonality() {
        let a = single(3);
        let disc = discretize(&a, 2).unwrap();
        let ip = |x: &[Complex64], y: &[Complex64]| -> Complex64 {
            x.iter().zip(y).map(|(a, b)| a.conj() * b).sum::<Complex64>() / 9.0
        };
        let b0 = PAdicCell::new(3, vec![0]).unwrap();
        let b1 = PAdicCell::new(3, vec![1]).unwrap();
        let p01 = kozyrev_wavelet(&a, &disc, &b0, 1, Measure::Haar).unwrap();
        let p02 = kozyrev_wavelet(&a, &disc, &b0, 2, Measure::Haar).unwrap();
        let p11 = kozyrev_wavelet(&a, &disc, &b1, 1, Measure::Haar).unwrap();
        assert!(ip(&p01, &p11).norm() < 1e-15);
        assert!(ip(&p01, &p02).norm() < 1e-15);
        assert!((ip(&p01, &p01).re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn certified_kozyrev_value_and_published_form() {
        let a = single(3);
        let spec = delta_spec(&[vec![0.0]], 1.0);
        let ball = PAdicCell::new(3, vec![1]).unwrap();
        let lambda = kozyrev_eigenvalue(&spec, &a, &ball, Measure::Haar).unwrap();
        assert!((lambda + 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(published_kozyrev_eigenvalue(&spec, &a, &ball).unwrap(), -17.0);

        let disc = discretize(&a, 2).unwrap();
        let g = generator(&spec, &a, &disc, Measure::Haar).unwrap();
        let psi = kozyrev_wavelet(&a, &disc, &ball, 1, Measure::Haar).unwrap();
        assert!(verify_eigenpair(&g, &psi, lambda).unwrap() < 1e-12);
        assert!(verify_eigenpair(&g, &psi, -17.0).unwrap() > 0.5);
    }

    #[test]
    fn second_vertex_shifts_by_escape_rate() {
        // Discs of radius 1/3 inside Z_3, at ultrametric distance 1.
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        let a = embed(&dendrogram(&rows));
        let spec = delta_spec(&rows, 1.0);
        let ball = a.disc(0).clone();
        let lone = kozyrev_local_eigenvalue(3, 1.0, 1, 1);
        let lambda = kozyrev_eigenvalue(&spec, &a, &ball, Measure::Haar).unwrap();
        assert!((lambda - (lone - 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn eigenvalue_ignores_j() {
        let a = single(5);
        let spec = delta_spec(&[vec![0.0]], 2.0);
        let disc = discretize(&a, 2).unwrap();
        let g = generator(&spec, &a, &disc, Measure::Haar).unwrap();
        let ball = PAdicCell::new(5, vec![3]).unwrap();
        let lambda = kozyrev_eigenvalue(&spec, &a, &ball, Measure::Haar).unwrap();
        for j in 1..5 {
            let psi = kozyrev_wavelet(&a, &disc, &ball, j, Measure::Haar).unwrap();
            assert!(verify_eigenpair(&g, &psi, lambda).unwrap() < 1e-12);
        }
    }

    #[test]
    fn local_eigenvalue_decreases_with_depth() {
        for p in [2, 3, 5] {
            for alpha in [1.0, 1.5, 2.0] {
                for m in 0..3 {
                    let values: Vec<f64> = (m..m + 6)
                        .map(|d| kozyrev_local_eigenvalue(p, alpha, m, d))
                        .collect();
                    assert!(values.windows(2).all(|w| w[1] < w[0]));
                }
            }
        }
    }

    #[test]
    fn two_children_ultrametric_eigenvalue() {
        let r = 2.5;
        let rows = vec![vec![0.0, r], vec![r, 0.0]];
        let a = embed(&dendrogram(&rows));
        let spec = delta_spec(&rows, 1.0);
        let disc = discretize(&a, a.m() + 1).unwrap();
        let g = generator(&spec, &a, &disc, Measure::Nu).unwrap();
        let gamma = ultrametric_eigenvalue(&a, 0, 1.0).unwrap();
        assert!((gamma + 1.0 / r).abs() < 1e-15);
        assert!((published_ultrametric_eigenvalue(&a, 0, 1.0).unwrap() + 1.0 / r).abs() < 1e-15);
        let psi = ultrametric_wavelet(&a, &disc, 0, 1).unwrap();
        let s = 1.0;
        assert!((psi[0].re - s).abs() < 1e-15 && (psi[disc.len() - 1].re + s).abs() < 1e-15);
        assert!(verify_eigenpair(&g, &psi, gamma).unwrap() < 1e-12);
        assert!(matches!(
            ultrametric_wavelet(&a, &disc, 0, 0),
            Err(SpectraError::TrivialCharacter { .. })
        ));
        assert!(matches!(
            ultrametric_wavelet(&a, &disc, 1, 1),
            Err(SpectraError::LeafNode(1))
        ));
    }

    #[test]
    fn three_children_share_an_eigenvalue() {
        // Root over {a, b, c, d}: a deeper node {a, b, c} with three children.
        let rows = vec![
            vec![0.0, 1.0, 1.0, 4.0],
            vec![1.0, 0.0, 1.0, 4.0],
            vec![1.0, 1.0, 0.0, 4.0],
            vec![4.0, 4.0, 4.0, 0.0],
        ];
        let a = embed(&dendrogram(&rows));
        let spec = delta_spec(&rows, 1.0);
        let disc = discretize(&a, a.m() + 1).unwrap();
        let g = generator(&spec, &a, &disc, Measure::Nu).unwrap();
        let node = a.dendrogram().child_containing(0, 0).unwrap();
        let gamma = ultrametric_eigenvalue(&a, node, 1.0).unwrap();
        for k in 1..3 {
            let psi = ultrametric_wavelet(&a, &disc, node, k).unwrap();
            assert!(verify_eigenpair(&g, &psi, gamma).unwrap() < 1e-12);
        }
        let published = published_ultrametric_eigenvalue(&a, node, 1.0).unwrap();
        assert!((published - gamma).abs() > 0.1);
    }

    #[test]
    fn block_modes_examples() {
        let a = single(2);
        let spec = delta_spec(&[vec![0.0]], 1.0);
        let modes = laplacian_block_modes(&spec, &a, Measure::Haar).unwrap();
        assert_eq!(modes.len(), 1);
        assert_eq!(modes[0].lambda, 0.0);

        let rows = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
        let pair = embed(&dendrogram(&rows));
        let spec = delta_spec(&rows, 1.0);
        let modes = laplacian_block_modes(&spec, &pair, Measure::Haar).unwrap();
        // rate 1/2, volume 1/2 each: eigenvalues 0 and -2 r h = -1/2.
        assert!(modes[0].lambda.abs() < 1e-15);
        assert!((modes[1].lambda + 0.5).abs() < 1e-15);
    }

    #[test]
    fn basis_counts() {
        let rows = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let a = embed(&dendrogram(&rows));
        let spec = delta_spec(&rows, 1.0);
        let disc = discretize(&a, a.m() + 1).unwrap();
        let haar = full_basis(&spec, &a, &disc, Measure::Haar).unwrap();
        let count = |b: &EigenBasis, f: fn(&PairKind) -> bool| b.pairs.iter().filter(|p| f(&p.kind)).count();
        assert_eq!(haar.len(), 4);
        assert_eq!(count(&haar, |k| matches!(k, PairKind::Kozyrev { .. })), 2);
        assert_eq!(count(&haar, |k| matches!(k, PairKind::Block { .. })), 2);
        let nu = full_basis(&spec, &a, &disc, Measure::Nu).unwrap();
        assert_eq!(count(&nu, |k| matches!(k, PairKind::Constant)), 1);
        assert_eq!(count(&nu, |k| matches!(k, PairKind::Ultrametric { .. })), 1);
        assert_eq!(count(&nu, |k| matches!(k, PairKind::Kozyrev { .. })), 2);
        for b in [&haar, &nu] {
            assert!(gram_error(b) < 1e-12);
            assert!(projector_error(b) < 1e-12);
            assert!(b.max_residual() < 1e-12);
        }
    }

    #[test]
    fn verify_eigenpair_checks() {
        let a = single(2);
        let spec = delta_spec(&[vec![0.0]], 1.0);
        let disc = discretize(&a, 2).unwrap();
        let g = generator(&spec, &a, &disc, Measure::Haar).unwrap();
        let one = vec![Complex64::new(1.0, 0.0); 4];
        assert_eq!(verify_eigenpair(&g, &one, 0.0).unwrap(), 0.0);
        assert!(matches!(
            verify_eigenpair(&g, &one[..3], 0.0),
            Err(SpectraError::DimensionMismatch { .. })
        ));
        let ball = PAdicCell::root(2);
        let lambda = kozyrev_eigenvalue(&spec, &a, &ball, Measure::Haar).unwrap();
        let psi = kozyrev_wavelet(&a, &disc, &ball, 1, Measure::Haar).unwrap();
        let off = verify_eigenpair(&g, &psi, lambda + 1.0).unwrap();
        assert!(off >= 0.5 / (lambda + 1.0).abs().max(1.0));
    }

    #[test]
    fn roots_of_unity_identity() {
        for n in 2..=7u64 {
            for j in 0..n {
                let zj = root_of_unity(j, n);
                let sum: Complex64 = (0..n).filter(|&l| l != j).map(|l| zj - root_of_unity(l, n)).sum();
                assert!((sum - zj * n as f64).norm() < 1e-12);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn wavelets_are_orthonormal_per_node(n in 2usize..12, seed in any::<u64>()) {
            let rows = random_ultrametric(n, seed, 4);
            let a = embed(&dendrogram(&rows));
            let disc = discretize(&a, a.m() + 1).unwrap();
            let nu = disc.nu_volumes();
            let ip = |x: &[Complex64], y: &[Complex64]| -> Complex64 {
                x.iter().zip(y).zip(&nu).map(|((a, b), w)| a.conj() * b * *w).sum()
            };
            let dend = a.dendrogram();
            for node in dend.internal_nodes() {
                let c = dend.node(node).children.len();
                let inside: Vec<Complex64> = disc.cells().iter()
                    .map(|cell| {
                        let hit = cell.vertex.is_some_and(|v| dend.node(node).members.binary_search(&v).is_ok());
                        Complex64::new(if hit { 1.0 } else { 0.0 }, 0.0)
                    })
                    .collect();
                let mut fns: Vec<Vec<Complex64>> = (1..c).map(|k| ultrametric_wavelet(&a, &disc, node, k).unwrap()).collect();
                for f in &fns {
                    prop_assert!(ip(f, &vec![Complex64::new(1.0, 0.0); disc.len()]).norm() < 1e-12);
                }
                fns.push(inside);
                for i in 0..fns.len() {
                    for j in 0..i {
                        prop_assert!(ip(&fns[i], &fns[j]).norm() < 1e-12);
                    }
                }
            }
        }

        #[test]
        fn spectrum_is_non_positive(n in 1usize..6, seed in any::<u64>(), alpha in 1.0f64..2.5) {
            let rows = random_ultrametric(n, seed, 3);
            let a = embed(&dendrogram(&rows));
            let disc = discretize(&a, a.m() + 1).unwrap();
            let spec = delta_spec(&rows, alpha);
            for measure in [Measure::Haar, Measure::Nu] {
                let basis = full_basis(&spec, &a, &disc, measure).unwrap();
                prop_assert!(basis.pairs.iter().all(|p| p.lambda <= 1e-12));
                prop_assert!(basis.max_residual() < 1e-9);
            }
        }
    }
}

//! Heat semigroups of the generator matrices, spectral heat kernels, and
//! numerical certification of the truncation, kernel-swap and level
//! convergence estimates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{symmetric_eigen, SymmetricSpectrum};
use crate::operators::{generator, truncated_domain, GeneratorMatrix, KernelSpec, Measure, OperatorError};
use crate::padic::{discretize, DiscAssignment, Discretization, PadicError};
use crate::spectra::{EigenBasis, PairKind, SpectraError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HeatError {
    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("basis has {got} functions for {expected} cells")]
    IncompleteBasis { expected: usize, got: usize },
    #[error("vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("bound violated: measured {measured:e} exceeds bound {bound:e} at t = {t}")]
    BoundViolated { measured: f64, bound: f64, t: f64 },
    #[error("kernels use different exponents {0} and {1}")]
    AlphaMismatch(f64, f64),
    #[error("level {n} must lie in {min}..={max}")]
    BadLevel { n: usize, min: usize, max: usize },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Padic(#[from] PadicError),
    #[error(transparent)]
    Spectra(#[from] SpectraError),
}

fn check_time(t: f64) -> Result<(), HeatError> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(HeatError::NegativeTime(t))
    }
}

/// `T(t) = exp(tA)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupMatrix {
    pub t: f64,
    pub matrix: DMatrix<f64>,
}

impl SemigroupMatrix {
    /// Largest `|row sum - 1|`.
    pub fn row_sum_error(&self) -> f64 {
        self.matrix
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.matrix.min()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(u)).as_slice().to_vec()
    }

    /// Norm induced by the sup norm: the largest absolute row sum.
    pub fn sup_norm(m: &DMatrix<f64>) -> f64 {
        m.row_iter()
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Exponentials of one generator at many times. Uses the eigendecomposition
/// of `W^{1/2} A W^{-1/2}`, or Pade scaling and squaring if the
/// eigensolver fails.
#[derive(Debug, Clone)]
pub struct Propagator {
    spectrum: Option<SymmetricSpectrum>,
    sqrt_w: Vec<f64>,
    generator: DMatrix<f64>,
}

impl Propagator {
    pub fn new(a: &GeneratorMatrix) -> Self {
        Propagator {
            spectrum: symmetric_eigen(&a.symmetrized()),
            sqrt_w: a.weights().iter().map(|w| w.sqrt()).collect(),
            generator: a.matrix().clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.sqrt_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sqrt_w.is_empty()
    }

    pub fn at(&self, t: f64) -> Result<SemigroupMatrix, HeatError> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(SemigroupMatrix {
                t,
                matrix: DMatrix::identity(self.len(), self.len()),
            });
        }
        let matrix = match &self.spectrum {
            Some(s) => {
                let e = s.map(|lambda| (lambda * t).exp());
                DMatrix::from_fn(self.len(), self.len(), |x, y| e[(x, y)] * self.sqrt_w[y] / self.sqrt_w[x])
            }
            None => (&self.generator * t).exp(),
        };
        Ok(SemigroupMatrix { t, matrix })
    }

    /// `T(t) u` without forming the matrix.
    pub fn apply(&self, t: f64, u: &[f64]) -> Result<Vec<f64>, HeatError> {
        check_time(t)?;
        if u.len() != self.len() {
            return Err(HeatError::DimensionMismatch {
                expected: self.len(),
                got: u.len(),
            });
        }
        if t == 0.0 {
            return Ok(u.to_vec());
        }
        match &self.spectrum {
            Some(s) => {
                let scaled = DVector::from_iterator(self.len(), u.iter().zip(&self.sqrt_w).map(|(x, w)| x * w));
                let mut coef = s.vectors.transpose() * scaled;
                for (c, lambda) in coef.iter_mut().zip(s.values.iter()) {
                    *c *= (lambda * t).exp();
                }
                let back = &s.vectors * coef;
                Ok(back.iter().zip(&self.sqrt_w).map(|(x, w)| x / w).collect())
            }
            None => Ok(self.at(t)?.apply(u)),
        }
    }
}

pub fn semigroup(a: &GeneratorMatrix, t: f64) -> Result<SemigroupMatrix, HeatError> {
    check_time(t)?;
    Propagator::new(a).at(t)
}

/// Transition density `p(t,x,y)` with respect to the basis measure; the
/// transition matrix is `p(t,x,y) w(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatKernelTable {
    pub t: f64,
    pub kernel: DMatrix<f64>,
    /// Largest imaginary part dropped from the spectral sum.
    pub imaginary_residue: f64,
}

impl HeatKernelTable {
    pub fn transition(&self, weights: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.kernel.nrows(), self.kernel.ncols(), |x, y| self.kernel[(x, y)] * weights[y])
    }
}

fn check_basis(basis: &EigenBasis) -> Result<(), HeatError> {
    if basis.pairs.len() != basis.weights.len() {
        return Err(HeatError::IncompleteBasis {
            expected: basis.weights.len(),
            got: basis.pairs.len(),
        });
    }
    Ok(())
}

/// `p(t,x,y) = sum_lambda e^{lambda t} psi(x) conj(psi(y))`.
pub fn heat_kernel(basis: &EigenBasis, t: f64) -> Result<HeatKernelTable, HeatError> {
    check_time(t)?;
    check_basis(basis)?;
    let n = basis.weights.len();
    let decay: Vec<f64> = basis.pairs.iter().map(|p| (p.lambda * t).exp()).collect();
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|x| {
            (0..n)
                .map(|y| {
                    basis
                        .pairs
                        .iter()
                        .zip(&decay)
                        .map(|(p, e)| p.psi[x] * p.psi[y].conj() * *e)
                        .sum()
                })
                .collect()
        })
        .collect();
    let imaginary_residue = rows
        .iter()
        .flatten()
        .map(|z| z.im.abs())
        .fold(0.0, f64::max);
    Ok(HeatKernelTable {
        t,
        kernel: DMatrix::from_fn(n, n, |x, y| rows[x][y].re),
        imaginary_residue,
    })
}

/// Expands `u0` in the basis, evolves each coefficient by `e^{lambda t}`, and
/// sums back.
pub fn solve_cauchy(basis: &EigenBasis, u0: &[f64], t: f64) -> Result<Vec<f64>, HeatError> {
    evolve_selected(basis, u0, t, |_| true)
}

fn evolve_selected(
    basis: &EigenBasis,
    u0: &[f64],
    t: f64,
    keep: impl Fn(&PairKind) -> bool,
) -> Result<Vec<f64>, HeatError> {
    check_time(t)?;
    check_basis(basis)?;
    if u0.len() != basis.weights.len() {
        return Err(HeatError::DimensionMismatch {
            expected: basis.weights.len(),
            got: u0.len(),
        });
    }
    let u: Vec<Complex64> = u0.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); u0.len()];
    for pair in basis.pairs.iter().filter(|p| keep(&p.kind)) {
        let c = basis.inner(&pair.psi, &u) * (pair.lambda * t).exp();
        for (o, psi) in out.iter_mut().zip(&pair.psi) {
            *o += psi * c;
        }
    }
    Ok(out.into_iter().map(|z| z.re).collect())
}

/// The part of the evolved solution carried by Kozyrev wavelets on balls of
/// level `n` or finer.
pub fn wavelet_tail(basis: &EigenBasis, u0: &[f64], n: usize, t: f64) -> Result<Vec<f64>, HeatError> {
    evolve_selected(basis, u0, t, |k| matches!(k, PairKind::Kozyrev { ball, .. } if ball.len() >= n))
}

/// `t = 0`, 64 log-spaced points in `[tau/1000, tau)`, and `tau`.
pub fn time_grid(tau: f64) -> Vec<f64> {
    let mut grid = vec![0.0];
    if tau > 0.0 {
        let lo = (tau / 1000.0).ln();
        let hi = tau.ln();
        grid.extend((0..64).map(|i| (lo + (hi - lo) * i as f64 / 64.0).exp()));
        grid.push(tau);
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairConstant {
    pub w: usize,
    pub v: usize,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSample {
    pub t: f64,
    pub measured: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    /// Largest measured gap over the time grid.
    pub measured_sup_error: f64,
    /// Right-hand side at the final time.
    pub theoretical_bound: f64,
    /// The same estimate without the factor 2 on the constant sum.
    pub statement_bound: f64,
    pub constants: Vec<PairConstant>,
    /// `Vol(U_v)` per vertex.
    pub volumes: Vec<f64>,
    /// `Vol(Z_l \ Z)`; zero for kernel swaps.
    pub filler_volume: f64,
    pub max_rate: f64,
    /// Smallest `bound - measured` over the grid.
    pub slack: f64,
    pub samples: Vec<BoundSample>,
}

fn finish_report(
    samples: Vec<BoundSample>,
    constants: Vec<PairConstant>,
    volumes: Vec<f64>,
    filler_volume: f64,
    max_rate: f64,
    statement_bound: f64,
) -> Result<BoundReport, HeatError> {
    let worst = samples
        .iter()
        .min_by(|a, b| (a.bound - a.measured).total_cmp(&(b.bound - b.measured)))
        .expect("time grid is never empty");
    let slack = worst.bound - worst.measured;
    if slack < -1e-9 {
        return Err(HeatError::BoundViolated {
            measured: worst.measured,
            bound: worst.bound,
            t: worst.t,
        });
    }
    let last = samples.last().expect("time grid is never empty");
    Ok(BoundReport {
        measured_sup_error: samples.iter().map(|s| s.measured).fold(0.0, f64::max),
        theoretical_bound: last.bound,
        statement_bound,
        constants,
        volumes,
        filler_volume,
        max_rate,
        slack,
        samples,
    })
}

/// Mean-value bound on `|a^{-alpha} - b^{-alpha}|`; exact difference when one
/// side is a missing edge.
fn rate_gap_constant(alpha: f64, a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        let ra = if a == 0.0 { 0.0 } else { a.powf(-alpha) };
        let rb = if b == 0.0 { 0.0 } else { b.powf(-alpha) };
        (ra - rb).abs()
    } else {
        alpha * (a - b).abs() / a.min(b).powf(alpha + 1.0)
    }
}

/// Compares the semigroup on `Z` with the one obtained by cutting the tree
/// at level `cut`, on the cells of `Z`, for `u` extended by zero. The
/// estimate is `t ||u|| (2 sum C_{w,v} Vol(U_v) + Vol(Z_l \ Z) max k^l)`.
pub fn truncation_bound(
    spec: &KernelSpec,
    assign: &DiscAssignment,
    cut: usize,
    n: usize,
    t_max: f64,
    u: &[f64],
) -> Result<BoundReport, HeatError> {
    check_time(t_max)?;
    let disc = discretize(assign, n)?;
    if u.len() != disc.len() {
        return Err(HeatError::DimensionMismatch {
            expected: disc.len(),
            got: u.len(),
        });
    }
    let dom = truncated_domain(assign, cut, n)?;
    let full = Propagator::new(&generator(spec, assign, &disc, Measure::Haar)?);
    let trunc_gen = dom.generator(spec)?;
    let max_rate = trunc_gen.rates().max();
    let trunc = Propagator::new(&trunc_gen);

    let dend = assign.dendrogram();
    let region: Vec<usize> = (0..assign.vertex_count())
        .map(|v| dend.ancestor_at_level(v, cut))
        .collect();
    let volumes: Vec<f64> = (0..assign.vertex_count()).map(|v| assign.disc(v).volume()).collect();
    let mut constants = Vec::new();
    for w in 0..assign.vertex_count() {
        for v in 0..assign.vertex_count() {
            if w != v && region[w] == region[v] {
                let dist = crate::padic::padic_distance(assign.disc(w), assign.disc(v))?;
                let c = rate_gap_constant(spec.alpha(), dist, spec.base(w, v));
                constants.push(PairConstant { w, v, c });
            }
        }
    }
    let c_sum = constants.iter().fold(0.0, |acc, c| acc + c.c * volumes[c.v]);
    let filler = dom.filler_volume();
    let u_norm = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let rhs = |t: f64, two: f64| t * u_norm * (two * c_sum + filler * max_rate);

    let mut extended = u.to_vec();
    extended.resize(dom.discretization().len(), 0.0);
    let z = dom.z_cells();
    let samples = time_grid(t_max)
        .into_par_iter()
        .map(|t| {
            let a = full.apply(t, u)?;
            let b = trunc.apply(t, &extended)?;
            let measured = a[..z]
                .iter()
                .zip(&b[..z])
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            Ok(BoundSample {
                t,
                measured,
                bound: rhs(t, 2.0),
            })
        })
        .collect::<Result<Vec<_>, HeatError>>()?;
    finish_report(samples, constants, volumes, filler, max_rate, rhs(t_max, 1.0))
}

/// Compares the semigroups of two kernels in the sup-induced operator norm;
/// the estimate is `2 t sum_{w != v} C~_{w,v} Vol(U_v)`.
pub fn kernel_swap_bound(
    a: &KernelSpec,
    b: &KernelSpec,
    assign: &DiscAssignment,
    n: usize,
    measure: Measure,
    t: f64,
) -> Result<BoundReport, HeatError> {
    check_time(t)?;
    if a.alpha() != b.alpha() {
        return Err(HeatError::AlphaMismatch(a.alpha(), b.alpha()));
    }
    let disc = discretize(assign, n)?;
    let ta = semigroup(&generator(a, assign, &disc, measure)?, t)?;
    let tb = semigroup(&generator(b, assign, &disc, measure)?, t)?;
    let measured = SemigroupMatrix::sup_norm(&(&ta.matrix - &tb.matrix));

    let count = assign.vertex_count();
    let volumes: Vec<f64> = (0..count)
        .map(|v| match measure {
            Measure::Haar => assign.disc(v).volume(),
            Measure::Nu => assign.nu_vertex(v),
        })
        .collect();
    let mut constants = Vec::new();
    for w in 0..count {
        for v in 0..count {
            if w != v {
                let c = rate_gap_constant(a.alpha(), a.base(w, v), b.base(w, v));
                constants.push(PairConstant { w, v, c });
            }
        }
    }
    let c_sum = constants.iter().fold(0.0, |acc, c| acc + c.c * volumes[c.v]);
    let max_rate = (0..count)
        .flat_map(|w| (0..count).filter(move |&v| v != w).map(move |v| (w, v)))
        .map(|(w, v)| a.rate(w, v).max(b.rate(w, v)))
        .fold(0.0, f64::max);
    let sample = BoundSample {
        t,
        measured,
        bound: 2.0 * t * c_sum,
    };
    finish_report(vec![sample], constants, volumes, 0.0, max_rate, t * c_sum)
}

/// How the initial datum is restricted to a coarser level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    /// Value at the cell's all-zero extension.
    Sample,
    /// Measure-weighted mean over the cell.
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    /// `sup_t ||E_n u_n(t) - u_N(t)||_inf` over the time grid.
    pub sup_gap: f64,
}

/// For every level `n` in `levels`, restricts `u0` (given on the cells of
/// level `reference`) to level `n`, evolves there, embeds back, and records
/// the worst gap to the reference solution over the time grid of `tau`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    spec: &KernelSpec,
    assign: &DiscAssignment,
    measure: Measure,
    reference: usize,
    u0: &[f64],
    levels: &[usize],
    tau: f64,
    projection: Projection,
) -> Result<Vec<ConvergenceRow>, HeatError> {
    check_time(tau)?;
    let fine = discretize(assign, reference)?;
    if u0.len() != fine.len() {
        return Err(HeatError::DimensionMismatch {
            expected: fine.len(),
            got: u0.len(),
        });
    }
    for &n in levels {
        if n <= assign.m() || n > reference {
            return Err(HeatError::BadLevel {
                n,
                min: assign.m() + 1,
                max: reference,
            });
        }
    }
    let reference_prop = Propagator::new(&generator(spec, assign, &fine, measure)?);
    let grid = time_grid(tau);
    let reference_paths = grid
        .par_iter()
        .map(|&t| reference_prop.apply(t, u0))
        .collect::<Result<Vec<_>, _>>()?;

    levels
        .par_iter()
        .map(|&n| {
            let coarse = discretize(assign, n)?;
            let parent = parents(&fine, &coarse, n);
            let un = project(&fine, &coarse, &parent, u0, measure, projection);
            let prop = Propagator::new(&generator(spec, assign, &coarse, measure)?);
            let mut sup_gap = 0.0f64;
            for (&t, reference_u) in grid.iter().zip(&reference_paths) {
                let coarse_u = prop.apply(t, &un)?;
                for (x, r) in reference_u.iter().enumerate() {
                    sup_gap = sup_gap.max((coarse_u[parent[x]] - r).abs());
                }
            }
            Ok(ConvergenceRow { n, sup_gap })
        })
        .collect()
}

/// Index of the level-`n` cell containing each fine cell.
fn parents(fine: &Discretization, coarse: &Discretization, n: usize) -> Vec<usize> {
    fine.cells()
        .iter()
        .map(|c| {
            coarse
                .index_of(&c.cell.truncate(n))
                .expect("coarse cells cover the fine ones")
        })
        .collect()
}

fn project(
    fine: &Discretization,
    coarse: &Discretization,
    parent: &[usize],
    u0: &[f64],
    measure: Measure,
    projection: Projection,
) -> Vec<f64> {
    match projection {
        Projection::Sample => coarse
            .cells()
            .iter()
            .map(|c| {
                let mut rep = c.cell.clone();
                rep.digits.resize(fine.level(), 0);
                u0[fine.index_of(&rep).expect("representative lies in the fine grid")]
            })
            .collect(),
        Projection::Average => {
            let mut sum = vec![0.0; coarse.len()];
            let mut mass = vec![0.0; coarse.len()];
            for (x, c) in fine.cells().iter().enumerate() {
                let w = measure.volume(c);
                sum[parent[x]] += w * u0[x];
                mass[parent[x]] += w;
            }
            sum.iter().zip(&mass).map(|(s, m)| s / m).collect()
        }
    }
}

/// Embeds a level-`n` function into the cells of `fine`.
pub fn embed_level(fine: &Discretization, coarse: &Discretization, u: &[f64]) -> Vec<f64> {
    parents(fine, coarse, coarse.level())
        .into_iter()
        .map(|i| u[i])
        .collect()
}

/// Restricts a fine-level function to level `coarse.level()`.
pub fn project_level(
    fine: &Discretization,
    coarse: &Discretization,
    u0: &[f64],
    measure: Measure,
    projection: Projection,
) -> Vec<f64> {
    let parent = parents(fine, coarse, coarse.level());
    project(fine, coarse, &parent, u0, measure, projection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::Bullet;
    use crate::padic::{embed, embed_with_prime};
    use crate::spectra::full_basis;
    use crate::test_support::{dendrogram, random_ultrametric};
    use proptest::prelude::*;

    fn delta_spec(rows: &[Vec<f64>], alpha: f64) -> KernelSpec {
        KernelSpec::new(Bullet::Ultrametric, alpha, rows).unwrap()
    }

    fn two_state(r: f64, h: f64) -> GeneratorMatrix {
        let rates = DMatrix::from_row_slice(2, 2, &[0.0, r, r, 0.0]);
        GeneratorMatrix::from_rates(1, Measure::Haar, rates, vec![h, h]).unwrap()
    }

    #[test]
    fn two_state_exponential() {
        let (r, h, t) = (1.7, 0.25, 0.9);
        let s = semigroup(&two_state(r, h), t).unwrap();
        let off = (1.0 - (-2.0 * r * h * t).exp()) / 2.0;
        assert!((s.matrix[(0, 1)] - off).abs() < 1e-15);
        assert!((s.matrix[(0, 0)] - (1.0 - off)).abs() < 1e-15);
        assert_eq!(semigroup(&two_state(r, h), 0.0).unwrap().matrix, DMatrix::identity(2, 2));
        assert!(matches!(semigroup(&two_state(r, h), -1.0), Err(HeatError::NegativeTime(_))));
    }

    #[test]
    fn semigroup_law_and_stochasticity() {
        let rows = vec![vec![0.0, 1.0, 3.0], vec![1.0, 0.0, 3.0], vec![3.0, 3.0, 0.0]];
        let a = embed(&dendrogram(&rows));
        let disc = discretize(&a, a.m() + 2).unwrap();
        let g = generator(&delta_spec(&rows, 1.3), &a, &disc, Measure::Nu).unwrap();
        let prop = Propagator::new(&g);
        let (s, t) = (0.3, 1.1);
        let lhs = prop.at(s + t).unwrap().matrix;
        let rhs = prop.at(s).unwrap().matrix * prop.at(t).unwrap().matrix;
        assert!((lhs - rhs).amax() < 1e-12);
        for t in [0.01, 0.1, 1.0, 10.0] {
            let m = prop.at(t).unwrap();
            assert!(m.row_sum_error() < 1e-12);
            assert!(m.min_entry() > -1e-12);
        }
        let pade = (g.matrix() * 0.7).exp();
        assert!((prop.at(0.7).unwrap().matrix - pade).amax() < 1e-10);
    }

    #[test]
    fn kernel_matches_semigroup_and_balances() {
        let rows = vec![vec![0.0, 2.0], vec![2.0, 0.0]];
        let a = embed(&dendrogram(&rows));
        let disc = discretize(&a, a.m() + 2).unwrap();
        let spec = delta_spec(&rows, 1.0);
        for measure in [Measure::Haar, Measure::Nu] {
            let basis = full_basis(&spec, &a, &disc, measure).unwrap();
            let g = generator(&spec, &a, &disc, measure).unwrap();
            for t in [0.0, 0.5, 3.0] {
                let table = heat_kernel(&basis, t).unwrap();
                assert!(table.imaginary_residue < 1e-12);
                let tm = table.transition(&basis.weights);
                assert!((tm - semigroup(&g, t).unwrap().matrix).amax() < 1e-12);
                let k = &table.kernel;
                assert!((k - k.transpose()).amax() < 1e-10 * k.amax().max(1.0));
            }
        }
    }

    #[test]
    fn long_time_limit_is_stationary() {
        let rows = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 2.0], vec![2.0, 2.0, 0.0]];
        let a = embed(&dendrogram(&rows));
        let disc = discretize(&a, a.m() + 1).unwrap();
        let spec = delta_spec(&rows, 1.0);
        let basis = full_basis(&spec, &a, &disc, Measure::Nu).unwrap();
        let gap = basis
            .pairs
            .iter()
            .map(|p| p.lambda)
            .filter(|&l| l < -1e-12)
            .fold(f64::NEG_INFINITY, f64::max);
        let t = 40.0 / -gap;
        let tm = heat_kernel(&basis, t).unwrap().transition(&basis.weights);
        for x in 0..disc.len() {
            for y in 0..disc.len() {
                assert!((tm[(x, y)] - basis.weights[y]).abs() < 10.0 * (gap * t).exp());
            }
        }
    }

    #[test]
    fn cauchy_examples() {
        let one = embed_with_prime(&dendrogram(&[vec![0.0]]), 3).unwrap();
        let disc = discretize(&one, 2).unwrap();
        let spec = delta_spec(&[vec![0.0]], 1.0);
        let basis = full_basis(&spec, &one, &disc, Measure::Haar).unwrap();
        let c = vec![2.5; disc.len()];
        for t in [0.0, 1.0, 7.0] {
            let u = solve_cauchy(&basis, &c, t).unwrap();
            assert!(u.iter().all(|x| (x - 2.5).abs() < 1e-12));
        }
        let mode = basis.pairs.iter().find(|p| matches!(p.kind, PairKind::Block { .. })).unwrap();
        let psi: Vec<f64> = mode.psi.iter().map(|z| z.re).collect();
        let u = solve_cauchy(&basis, &psi, 0.4).unwrap();
        for (a, b) in u.iter().zip(&psi) {
            assert!((a - b * (mode.lambda * 0.4).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn untouched_truncation_measures_zero() {
        let rows = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 2.0], vec![2.0, 2.0, 0.0]];
        let a = embed(&dendrogram(&rows));
        let spec = delta_spec(&rows, 1.0);
        let n = a.m() + 1;
        let u: Vec<f64> = (0..discretize(&a, n).unwrap().len()).map(|i| (i as f64).sin()).collect();
        let max = a.dendrogram().max_level();
        let r = truncation_bound(&spec, &a, max, n, 1.0, &u).unwrap();
        assert!(r.measured_sup_error < 1e-12);
        assert!(r.theoretical_bound >= 0.0);
        let shallow = truncation_bound(&spec, &a, 1, n, 1.0, &u).unwrap();
        assert!(shallow.slack >= -1e-9);
        assert!(shallow.theoretical_bound >= r.theoretical_bound);
    }

    #[test]
    fn swap_bounds() {
        let rows = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 2.0], vec![2.0, 2.0, 0.0]];
        let a = embed(&dendrogram(&rows));
        let n = a.m() + 1;
        let delta = delta_spec(&rows, 1.0);
        let same = kernel_swap_bound(&delta, &delta, &a, n, Measure::Haar, 1.0).unwrap();
        assert_eq!(same.measured_sup_error, 0.0);
        assert_eq!(same.theoretical_bound, 0.0);

        let path = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]];
        let d_e = KernelSpec::new(Bullet::GraphDistance, 1.0, &path).unwrap();
        for t in [0.1, 1.0, 5.0] {
            let r = kernel_swap_bound(&d_e, &delta, &a, n, Measure::Haar, t).unwrap();
            assert!(r.slack >= 0.0);
            assert!(r.measured_sup_error > 0.0);
        }
        let other = delta.with_alpha(2.0).unwrap();
        assert!(matches!(
            kernel_swap_bound(&delta, &other, &a, n, Measure::Haar, 1.0),
            Err(HeatError::AlphaMismatch(..))
        ));
    }

    #[test]
    fn time_grid_shape() {
        let g = time_grid(2.0);
        assert_eq!(g.len(), 66);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 2.0);
        assert!(g.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(time_grid(0.0), vec![0.0]);
    }

    #[test]
    fn locally_constant_data_converges_exactly() {
        let one = embed_with_prime(&dendrogram(&[vec![0.0]]), 2).unwrap();
        let spec = delta_spec(&[vec![0.0]], 1.0);
        let fine = discretize(&one, 5).unwrap();
        let coarse = discretize(&one, 2).unwrap();
        let u2: Vec<f64> = (0..coarse.len()).map(|i| i as f64 - 1.5).collect();
        let u0 = embed_level(&fine, &coarse, &u2);
        let rows = convergence_study(&spec, &one, Measure::Haar, 5, &u0, &[1, 2, 3, 4, 5], 1.0, Projection::Sample).unwrap();
        assert!(rows[0].sup_gap > 0.1);
        for r in &rows[1..] {
            assert!(r.sup_gap < 1e-12, "{r:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn solutions_contract(n in 1usize..5, seed in any::<u64>(), alpha in 1.0f64..2.0) {
            use rand::{Rng, SeedableRng};
            let rows = random_ultrametric(n, seed, 3);
            let a = embed(&dendrogram(&rows));
            let disc = discretize(&a, a.m() + 1).unwrap();
            let spec = delta_spec(&rows, alpha);
            let basis = full_basis(&spec, &a, &disc, Measure::Nu).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let u0: Vec<f64> = (0..disc.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let prop = Propagator::new(&generator(&spec, &a, &disc, Measure::Nu).unwrap());
            let mut last = f64::INFINITY;
            for t in time_grid(3.0) {
                let u = solve_cauchy(&basis, &u0, t).unwrap();
                let direct = prop.apply(t, &u0).unwrap();
                let norm = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                prop_assert!(u.iter().zip(&direct).all(|(x, y)| (x - y).abs() < 1e-9));
                prop_assert!(norm <= last + 1e-10);
                last = norm;
            }
        }
    }
}

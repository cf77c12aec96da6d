//! Jump kernels over p-adic cells and the exact finite-level generator
//! matrices `A[x][y] = k(x,y) mu(y)`, `A[x][x] = -sum_y A[x][y]`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::padic::{padic_distance, DiscAssignment, DiscCell, Discretization, PAdicCell, PadicError};
use crate::ultraindex::{DistanceMatrix, UltrametricMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("alpha must be at least 1, got {0}")]
    InvalidAlpha(f64),
    #[error("invalid kernel source matrix: {0}")]
    InvalidBase(String),
    #[error("cell {0:?} does not lie in a vertex disc")]
    CellOutsideZ(Vec<u32>),
    #[error("truncation level {level} must lie in 1..={max}")]
    InvalidLevel { level: usize, max: usize },
    #[error("cell measure must be positive (cell {0})")]
    ZeroWeight(usize),
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Padic(#[from] PadicError),
}

/// Interaction between distinct vertex discs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bullet {
    /// `kappa(v,w)^{-alpha}` on edges, 0 elsewhere.
    Adjacency,
    /// `d_E(v,w)^{-alpha}`.
    #[serde(rename = "graphdist")]
    GraphDistance,
    /// `delta(v,w)^{-alpha}`.
    Ultrametric,
}

impl fmt::Display for Bullet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bullet::Adjacency => "adjacency",
            Bullet::GraphDistance => "graphdist",
            Bullet::Ultrametric => "ultrametric",
        })
    }
}

impl FromStr for Bullet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adjacency" => Ok(Bullet::Adjacency),
            "graphdist" => Ok(Bullet::GraphDistance),
            "ultrametric" => Ok(Bullet::Ultrametric),
            other => Err(format!(
                "unknown bullet '{other}' (expected adjacency, graphdist or ultrametric)"
            )),
        }
    }
}

/// A bullet, the exponent `alpha`, and the vertex matrix it is applied to.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    bullet: Bullet,
    alpha: f64,
    n: usize,
    base: Vec<f64>,
}

impl KernelSpec {
    /// `base` is `kappa` for the adjacency bullet (0 marks a non-edge) and a
    /// metric otherwise.
    pub fn new(bullet: Bullet, alpha: f64, base: &[Vec<f64>]) -> Result<Self, OperatorError> {
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(OperatorError::InvalidAlpha(alpha));
        }
        let n = base.len();
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in base.iter().enumerate() {
            if row.len() != n {
                return Err(OperatorError::InvalidBase(format!("row {i} has length {}", row.len())));
            }
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() || x < 0.0 {
                    return Err(OperatorError::InvalidBase(format!("entry ({i},{j}) = {x}")));
                }
                if x != base[j][i] {
                    return Err(OperatorError::InvalidBase(format!("entry ({i},{j}) is not symmetric")));
                }
                if i != j && x == 0.0 && bullet != Bullet::Adjacency {
                    return Err(OperatorError::InvalidBase(format!(
                        "distance ({i},{j}) is zero"
                    )));
                }
            }
            flat.extend_from_slice(row);
        }
        Ok(KernelSpec {
            bullet,
            alpha,
            n,
            base: flat,
        })
    }

    pub fn adjacency(kappa: &[Vec<f64>], alpha: f64) -> Result<Self, OperatorError> {
        Self::new(Bullet::Adjacency, alpha, kappa)
    }

    pub fn graph_distance(d: &DistanceMatrix, alpha: f64) -> Result<Self, OperatorError> {
        Self::new(Bullet::GraphDistance, alpha, &rows_of(d))
    }

    pub fn ultrametric(delta: &UltrametricMatrix, alpha: f64) -> Result<Self, OperatorError> {
        Self::new(Bullet::Ultrametric, alpha, &rows_of(delta.matrix()))
    }

    pub fn bullet(&self) -> Bullet {
        self.bullet
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    /// The source value `kappa`, `d_E` or `delta` for a vertex pair.
    pub fn base(&self, v: usize, w: usize) -> f64 {
        self.base[v * self.n + w]
    }

    /// Jump rate `k(v,w)` between distinct vertices.
    pub fn rate(&self, v: usize, w: usize) -> f64 {
        let b = self.base(v, w);
        if b == 0.0 {
            0.0
        } else {
            b.powf(-self.alpha)
        }
    }

    /// Same bullet and source matrix with another exponent.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self, OperatorError> {
        if !(alpha >= 1.0 && alpha.is_finite()) {
            return Err(OperatorError::InvalidAlpha(alpha));
        }
        Ok(KernelSpec { alpha, ..self.clone() })
    }
}

fn rows_of(d: &DistanceMatrix) -> Vec<Vec<f64>> {
    (0..d.len()).map(|i| d.row(i).to_vec()).collect()
}

/// `kappa(v,w) = 1 / ln(w + 1)` from prime-product edge weights, 0 off the edges.
pub fn kappa_from_weights(n: usize, weights: impl IntoIterator<Item = ((usize, usize), u64)>) -> Vec<Vec<f64>> {
    let mut kappa = vec![vec![0.0; n]; n];
    for ((u, v), w) in weights {
        let k = 1.0 / ((w as f64) + 1.0).ln();
        kappa[u][v] = k;
        kappa[v][u] = k;
    }
    kappa
}

/// Vladimirov rate `|x - y|_p^{-alpha}`; zero for equal cells.
fn vladimirov(x: &PAdicCell, y: &PAdicCell, alpha: f64) -> Result<f64, OperatorError> {
    let d = padic_distance(x, y)?;
    Ok(if d == 0.0 { 0.0 } else { d.powf(-alpha) })
}

/// Kernel `k(x,y)` of the hierarchical operator between two cells of `Z`.
pub fn kernel_value(
    spec: &KernelSpec,
    assign: &DiscAssignment,
    x: &PAdicCell,
    y: &PAdicCell,
) -> Result<f64, OperatorError> {
    let vx = assign
        .vertex_of(x)
        .ok_or_else(|| OperatorError::CellOutsideZ(x.digits.clone()))?;
    let vy = assign
        .vertex_of(y)
        .ok_or_else(|| OperatorError::CellOutsideZ(y.digits.clone()))?;
    if vx == vy {
        vladimirov(x, y, spec.alpha)
    } else {
        Ok(spec.rate(vx, vy))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Haar,
    Nu,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::Haar => "haar",
            Measure::Nu => "nu",
        })
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "haar" => Ok(Measure::Haar),
            "nu" => Ok(Measure::Nu),
            other => Err(format!("unknown measure '{other}' (expected haar or nu)")),
        }
    }
}

impl Measure {
    pub fn volume(self, cell: &DiscCell) -> f64 {
        match self {
            Measure::Haar => cell.haar,
            Measure::Nu => cell.nu,
        }
    }
}

/// Generator of a finite-state jump process: symmetric rates `K` and
/// positive cell weights `w`, acting by `(Au)(x) = sum_y K[x][y] w[y] (u(y) - u(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    level: usize,
    measure: Measure,
    weights: Vec<f64>,
    rates: DMatrix<f64>,
    matrix: DMatrix<f64>,
}

impl GeneratorMatrix {
    pub fn from_rates(
        level: usize,
        measure: Measure,
        rates: DMatrix<f64>,
        weights: Vec<f64>,
    ) -> Result<Self, OperatorError> {
        let n = weights.len();
        if rates.nrows() != n || rates.ncols() != n {
            return Err(OperatorError::SizeMismatch {
                expected: n,
                got: rates.nrows(),
            });
        }
        if let Some(i) = weights.iter().position(|&w| !w.is_finite() || w <= 0.0) {
            return Err(OperatorError::ZeroWeight(i));
        }
        let mut matrix = DMatrix::zeros(n, n);
        for x in 0..n {
            let mut total = 0.0;
            for y in 0..n {
                if x != y {
                    let a = rates[(x, y)] * weights[y];
                    matrix[(x, y)] = a;
                    total += a;
                }
            }
            matrix[(x, x)] = -total;
        }
        Ok(GeneratorMatrix {
            level,
            measure,
            weights,
            rates,
            matrix,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Total outflow rate `-A[x][x]`.
    pub fn degree(&self, x: usize) -> f64 {
        -self.matrix[(x, x)]
    }

    /// `Au`, summed in difference form.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|x| {
                (0..self.len())
                    .filter(|&y| y != x)
                    .map(|y| self.matrix[(x, y)] * (u[y] - u[x]))
                    .sum()
            })
            .collect()
    }

    pub fn apply_complex(&self, u: &[Complex64]) -> Vec<Complex64> {
        (0..self.len())
            .map(|x| {
                (0..self.len())
                    .filter(|&y| y != x)
                    .map(|y| (u[y] - u[x]) * self.matrix[(x, y)])
                    .sum()
            })
            .collect()
    }

    /// `W^{1/2} A W^{-1/2}`, symmetric because the rates are.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let n = self.len();
        let sqrt_w: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        DMatrix::from_fn(n, n, |x, y| {
            if x == y {
                self.matrix[(x, x)]
            } else {
                self.rates[(x, y)] * sqrt_w[x] * sqrt_w[y]
            }
        })
    }
}

/// Generator assembled row by row from a cell-pair rate function.
fn assemble(
    disc: &Discretization,
    measure: Measure,
    rate: impl Fn(usize, usize) -> Result<f64, OperatorError> + Sync,
) -> Result<GeneratorMatrix, OperatorError> {
    let n = disc.len();
    let rows = (0..n)
        .into_par_iter()
        .map(|x| {
            (0..n)
                .map(|y| if x == y { Ok(0.0) } else { rate(x, y) })
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rates = DMatrix::from_fn(n, n, |x, y| rows[x][y]);
    let weights = disc.cells().iter().map(|c| measure.volume(c)).collect();
    GeneratorMatrix::from_rates(disc.level(), measure, rates, weights)
}

/// Generator of the hierarchical operator on the level-`n` cells of `Z`.
pub fn generator(
    spec: &KernelSpec,
    assign: &DiscAssignment,
    disc: &Discretization,
    measure: Measure,
) -> Result<GeneratorMatrix, OperatorError> {
    if spec.vertex_count() != assign.vertex_count() {
        return Err(OperatorError::SizeMismatch {
            expected: assign.vertex_count(),
            got: spec.vertex_count(),
        });
    }
    let cells = disc.cells();
    if let Some(c) = cells.iter().find(|c| c.vertex.is_none()) {
        return Err(OperatorError::CellOutsideZ(c.cell.digits.clone()));
    }
    assemble(disc, measure, |x, y| {
        let (cx, cy) = (&cells[x], &cells[y]);
        match (cx.vertex, cy.vertex) {
            (Some(v), Some(w)) if v == w => vladimirov(&cx.cell, &cy.cell, spec.alpha),
            (Some(v), Some(w)) => Ok(spec.rate(v, w)),
            _ => Err(OperatorError::CellOutsideZ(cx.cell.digits.clone())),
        }
    })
}

/// `deg(x) = sum_{y != x} k(x,y) vol(y)` under Haar measure.
pub fn degree(
    spec: &KernelSpec,
    assign: &DiscAssignment,
    disc: &Discretization,
    x: usize,
) -> Result<f64, OperatorError> {
    let cx = &disc.cell(x).cell;
    disc.cells()
        .iter()
        .enumerate()
        .filter(|&(y, _)| y != x)
        .map(|(_, c)| Ok(kernel_value(spec, assign, cx, &c.cell)? * c.haar))
        .sum()
}

/// The domain `Z_l` obtained by cutting the tree at level `l`: the balls of the
/// level-`l` nodes plus the discs of shallower leaves, discretized at level
/// `n`. Cells of `Z` come first, in the order of [`crate::padic::discretize`],
/// followed by the filler cells of `Z_l \ Z`.
#[derive(Debug, Clone)]
pub struct TruncatedDomain {
    cut: usize,
    disc: Discretization,
    /// Region (level-`l` node, or shallower leaf) of every cell.
    regions: Vec<usize>,
    z_cells: usize,
}

impl TruncatedDomain {
    pub fn cut_level(&self) -> usize {
        self.cut
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    pub fn region(&self, cell: usize) -> usize {
        self.regions[cell]
    }

    /// Number of cells lying in `Z`; they are the leading cells.
    pub fn z_cells(&self) -> usize {
        self.z_cells
    }

    /// Haar volume of `Z_l \ Z`.
    pub fn filler_volume(&self) -> f64 {
        self.disc.cells()[self.z_cells..].iter().fold(0.0, |acc, c| acc + c.haar)
    }

    /// Truncated kernel `k^l`: Vladimirov rate inside one region, the vertex
    /// rate between cells of `Z` in different regions, and 0 otherwise.
    pub fn kernel(&self, spec: &KernelSpec, x: usize, y: usize) -> Result<f64, OperatorError> {
        let (cx, cy) = (self.disc.cell(x), self.disc.cell(y));
        if self.regions[x] == self.regions[y] {
            return vladimirov(&cx.cell, &cy.cell, spec.alpha);
        }
        Ok(match (cx.vertex, cy.vertex) {
            (Some(v), Some(w)) => spec.rate(v, w),
            _ => 0.0,
        })
    }

    /// Haar-measure generator of the truncated operator on `Z_l`.
    pub fn generator(&self, spec: &KernelSpec) -> Result<GeneratorMatrix, OperatorError> {
        assemble(&self.disc, Measure::Haar, |x, y| self.kernel(spec, x, y))
    }
}

pub fn truncated_domain(
    assign: &DiscAssignment,
    cut: usize,
    n: usize,
) -> Result<TruncatedDomain, OperatorError> {
    let dend = assign.dendrogram();
    let max = dend.max_level();
    if cut == 0 || cut > max {
        return Err(OperatorError::InvalidLevel { level: cut, max });
    }
    let base = crate::padic::discretize(assign, n)?;
    let region_of_vertex: Vec<usize> = (0..assign.vertex_count())
        .map(|v| dend.ancestor_at_level(v, cut))
        .collect();
    let mut cells: Vec<DiscCell> = base.cells().to_vec();
    let mut regions: Vec<usize> = cells
        .iter()
        .map(|c| region_of_vertex[c.vertex.expect("cells of Z carry a vertex")])
        .collect();
    let z_cells = cells.len();

    let mut seen = region_of_vertex.clone();
    seen.sort_unstable();
    seen.dedup();
    let haar = (assign.p() as f64).powi(-(n as i32));
    for region in seen {
        let ball = assign.ball(region);
        if (assign.p() as usize).pow((n - ball.level()) as u32) + cells.len() > crate::padic::MAX_CELLS {
            return Err(PadicError::TooManyCells(crate::padic::MAX_CELLS + 1).into());
        }
        for cell in ball.descendants(n) {
            if base.index_of(&cell).is_none() {
                cells.push(DiscCell {
                    cell,
                    vertex: None,
                    node: region,
                    haar,
                    nu: 0.0,
                });
                regions.push(region);
            }
        }
    }
    let disc = Discretization::new(assign.p(), n, cells)?;
    Ok(TruncatedDomain {
        cut,
        disc,
        regions,
        z_cells,
    })
}

//! Finite-precision p-adic balls, the embedding of a dendrogram into the
//! p-adic integers, and the equal-split tree measure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::multitopo::{is_prime, prime_at_least};
use crate::ultraindex::Dendrogram;

/// Largest number of cells any discretization may hold.
pub const MAX_CELLS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PadicError {
    #[error("cells use different primes {0} and {1}")]
    PrimeMismatch(u64, u64),
    #[error("cells have different levels {0} and {1}")]
    LevelMismatch(usize, usize),
    #[error("level {n} is not finer than the vertex disc level {m}")]
    LevelTooCoarse { n: usize, m: usize },
    #[error("discretization would need {0} cells (limit {MAX_CELLS})")]
    TooManyCells(usize),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("prime {p} is smaller than the branching factor {branching}")]
    PrimeTooSmall { p: u64, branching: usize },
    #[error("digit {digit} is out of range for p = {p}")]
    BadDigit { digit: u32, p: u64 },
    #[error("cells overlap or repeat")]
    OverlappingCells,
    #[error("malformed assignment record: {0}")]
    BadRecord(String),
}

/// The ball `a_0 + a_1 p + ... + a_{n-1} p^{n-1} + p^n Z_p`, stored as its
/// digits; `digits[k]` is the coefficient of `p^k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PAdicCell {
    pub p: u64,
    pub digits: Vec<u32>,
}

impl PAdicCell {
    pub fn new(p: u64, digits: Vec<u32>) -> Result<Self, PadicError> {
        if !is_prime(p) {
            return Err(PadicError::NotPrime(p));
        }
        if let Some(&digit) = digits.iter().find(|&&d| u64::from(d) >= p) {
            return Err(PadicError::BadDigit { digit, p });
        }
        Ok(PAdicCell { p, digits })
    }

    /// The whole ring `Z_p`.
    pub fn root(p: u64) -> Self {
        PAdicCell { p, digits: Vec::new() }
    }

    pub fn level(&self) -> usize {
        self.digits.len()
    }

    /// Haar volume `p^{-level}`.
    pub fn volume(&self) -> f64 {
        (self.p as f64).powi(-(self.level() as i32))
    }

    /// Whether `other` lies inside this ball.
    pub fn contains(&self, other: &PAdicCell) -> bool {
        self.p == other.p && other.digits.starts_with(&self.digits)
    }

    pub fn child(&self, digit: u32) -> PAdicCell {
        let mut digits = self.digits.clone();
        digits.push(digit);
        PAdicCell { p: self.p, digits }
    }

    /// The enclosing ball at `level` (which must not exceed this level).
    pub fn truncate(&self, level: usize) -> PAdicCell {
        PAdicCell {
            p: self.p,
            digits: self.digits[..level].to_vec(),
        }
    }

    /// All sub-balls at level `n`, in lexicographic digit order.
    pub fn descendants(&self, n: usize) -> Vec<PAdicCell> {
        let mut out = vec![self.clone()];
        for _ in self.level()..n {
            out = out
                .iter()
                .flat_map(|c| (0..self.p as u32).map(move |a| c.child(a)))
                .collect();
        }
        out
    }
}

/// Length of the common digit prefix.
pub fn common_prefix(x: &PAdicCell, y: &PAdicCell) -> usize {
    x.digits
        .iter()
        .zip(&y.digits)
        .take_while(|(a, b)| a == b)
        .count()
}

/// `|x - y|_p` between two cells of one level: `p^{-j}` for a common prefix of
/// length `j`, and 0 for equal cells.
pub fn padic_distance(x: &PAdicCell, y: &PAdicCell) -> Result<f64, PadicError> {
    if x.p != y.p {
        return Err(PadicError::PrimeMismatch(x.p, y.p));
    }
    if x.level() != y.level() {
        return Err(PadicError::LevelMismatch(x.level(), y.level()));
    }
    let j = common_prefix(x, y);
    if j == x.level() {
        return Ok(0.0);
    }
    Ok((x.p as f64).powi(-(j as i32)))
}

/// Equal-split measure on the dendrogram: the root has mass 1 and every node
/// divides its mass evenly among its children.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeMeasure {
    /// `nu(node) = 1 / denominators[node]`; `None` past `u128`.
    denominators: Vec<Option<u128>>,
    values: Vec<f64>,
}

impl TreeMeasure {
    pub fn nu(&self, node: usize) -> f64 {
        self.values[node]
    }

    /// Exact reciprocal of `nu(node)`.
    pub fn denominator(&self, node: usize) -> Option<u128> {
        self.denominators[node]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn tree_measure(dend: &Dendrogram) -> TreeMeasure {
    let count = dend.nodes().len();
    let mut denominators = vec![Some(1u128); count];
    let mut float_denoms = vec![1.0f64; count];
    // Breadth-first numbering puts every parent before its children.
    for id in 0..count {
        let node = dend.node(id);
        let c = node.children.len();
        for &child in &node.children {
            denominators[child] = denominators[id].and_then(|d| d.checked_mul(c as u128));
            float_denoms[child] = float_denoms[id] * c as f64;
        }
    }
    let values = denominators
        .iter()
        .zip(&float_denoms)
        .map(|(d, f)| match d {
            Some(d) => 1.0 / *d as f64,
            None => 1.0 / f,
        })
        .collect();
    TreeMeasure {
        denominators,
        values,
    }
}

/// Placement of every vertex as a p-adic disc of common level `m`, together
/// with the ball of every dendrogram node.
///
/// Distinct internal radii `r_0 > r_1 > ... > r_{K-1}` are ranked; a node of
/// radius `r_q` maps to a ball of level `q`, its children branch on digit `q`,
/// and leaves sit at level `m = K`. Two vertices whose lowest common ancestor
/// has radius `r_q` then lie at p-adic distance `p^{-q}`, so `rho(p^{-q}) = r_q`.
#[derive(Debug, Clone)]
pub struct DiscAssignment {
    p: u64,
    m: usize,
    balls: Vec<PAdicCell>,
    rho: Vec<f64>,
    dendrogram: Dendrogram,
    measure: TreeMeasure,
}

/// Smallest prime that can host the branching of `dend`.
pub fn minimal_prime(dend: &Dendrogram) -> u64 {
    prime_at_least(dend.max_branching().max(2) as u64)
}

pub fn embed(dend: &Dendrogram) -> DiscAssignment {
    embed_with_prime(dend, minimal_prime(dend)).expect("minimal prime accommodates the branching")
}

/// Embedding with a caller-chosen prime, at least the branching factor.
pub fn embed_with_prime(dend: &Dendrogram, p: u64) -> Result<DiscAssignment, PadicError> {
    if !is_prime(p) {
        return Err(PadicError::NotPrime(p));
    }
    let branching = dend.max_branching();
    if (branching as u64) > p {
        return Err(PadicError::PrimeTooSmall { p, branching });
    }
    let mut radii: Vec<f64> = dend
        .internal_nodes()
        .map(|id| dend.node(id).radius)
        .collect();
    radii.sort_by(|a, b| b.total_cmp(a));
    radii.dedup();
    let m = radii.len();
    let rank = |id: usize| -> usize {
        let node = dend.node(id);
        if node.is_leaf() {
            m
        } else {
            radii
                .iter()
                .position(|&r| r == node.radius)
                .expect("internal radius is ranked")
        }
    };

    let count = dend.nodes().len();
    let mut balls = vec![PAdicCell::root(p); count];
    let root = dend.root();
    balls[root].digits = vec![0; rank(root)];
    for id in 0..count {
        for (idx, &child) in dend.node(id).children.iter().enumerate() {
            let mut digits = balls[id].digits.clone();
            digits.push(idx as u32);
            digits.resize(rank(child), 0);
            balls[child].digits = digits;
        }
    }
    Ok(DiscAssignment {
        p,
        m,
        balls,
        rho: radii,
        dendrogram: dend.clone(),
        measure: tree_measure(dend),
    })
}

impl DiscAssignment {
    pub fn p(&self) -> u64 {
        self.p
    }

    /// Common level of the vertex discs; each disc has radius `p^{-m}`.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn vertex_count(&self) -> usize {
        self.dendrogram.vertex_count()
    }

    /// The disc `U_v`.
    pub fn disc(&self, v: usize) -> &PAdicCell {
        &self.balls[self.dendrogram.leaf_node(v)]
    }

    /// The ball of a dendrogram node.
    pub fn ball(&self, node: usize) -> &PAdicCell {
        &self.balls[node]
    }

    pub fn dendrogram(&self) -> &Dendrogram {
        &self.dendrogram
    }

    pub fn measure(&self) -> &TreeMeasure {
        &self.measure
    }

    /// `rho_table()[k]` is the ultrametric value at p-adic distance `p^{-k}`.
    pub fn rho_table(&self) -> &[f64] {
        &self.rho
    }

    /// `rho(|x - y|_p)` for a distance `p^{-k}`, `k < m`.
    pub fn rho(&self, padic_dist: f64) -> Option<f64> {
        if padic_dist <= 0.0 {
            return None;
        }
        let k = (-padic_dist.ln() / (self.p as f64).ln()).round();
        if k < 0.0 {
            return None;
        }
        let k = k as usize;
        ((self.p as f64).powi(-(k as i32)) == padic_dist)
            .then(|| self.rho.get(k).copied())
            .flatten()
    }

    /// Vertex whose disc contains `cell`, if any.
    pub fn vertex_of(&self, cell: &PAdicCell) -> Option<usize> {
        if cell.p != self.p || cell.level() < self.m {
            return None;
        }
        (0..self.vertex_count()).find(|&v| self.disc(v).contains(cell))
    }

    /// Ratio of `nu` to Haar measure on `U_v`: `nu(v) p^m`.
    pub fn density(&self, v: usize) -> f64 {
        self.measure.nu(self.dendrogram.leaf_node(v)) * (self.p as f64).powi(self.m as i32)
    }

    pub fn nu_vertex(&self, v: usize) -> f64 {
        self.measure.nu(self.dendrogram.leaf_node(v))
    }

    pub fn to_record(&self, labels: &[String]) -> AssignmentRecord {
        AssignmentRecord {
            p: self.p,
            m: self.m,
            discs: (0..self.vertex_count())
                .map(|v| (labels[v].clone(), self.disc(v).digits.clone()))
                .collect(),
            rho: self.rho.clone(),
        }
    }
}

/// Serialized form of an assignment: prime, disc level, per-vertex digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub p: u64,
    pub m: usize,
    pub discs: BTreeMap<String, Vec<u32>>,
    pub rho: Vec<f64>,
}

/// One cell of a discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscCell {
    pub cell: PAdicCell,
    /// Vertex whose disc contains the cell; `None` for filler outside `Z`.
    pub vertex: Option<usize>,
    /// Dendrogram node the cell was generated from.
    pub node: usize,
    pub haar: f64,
    pub nu: f64,
}

/// A finite partition of `Z` (or of a larger union of balls) into cells of
/// one level.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    p: u64,
    level: usize,
    cells: Vec<DiscCell>,
    index: BTreeMap<Vec<u32>, usize>,
}

impl Discretization {
    pub fn new(p: u64, level: usize, cells: Vec<DiscCell>) -> Result<Self, PadicError> {
        if cells.len() > MAX_CELLS {
            return Err(PadicError::TooManyCells(cells.len()));
        }
        let mut index = BTreeMap::new();
        for (i, c) in cells.iter().enumerate() {
            if c.cell.p != p {
                return Err(PadicError::PrimeMismatch(p, c.cell.p));
            }
            if c.cell.level() != level {
                return Err(PadicError::LevelMismatch(level, c.cell.level()));
            }
            if index.insert(c.cell.digits.clone(), i).is_some() {
                return Err(PadicError::OverlappingCells);
            }
        }
        Ok(Discretization {
            p,
            level,
            cells,
            index,
        })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[DiscCell] {
        &self.cells
    }

    pub fn cell(&self, i: usize) -> &DiscCell {
        &self.cells[i]
    }

    pub fn index_of(&self, cell: &PAdicCell) -> Option<usize> {
        if cell.p != self.p {
            return None;
        }
        self.index.get(&cell.digits).copied()
    }

    /// Indices of the cells inside `ball`.
    pub fn cells_in(&self, ball: &PAdicCell) -> Vec<usize> {
        self.index
            .range(ball.digits.clone()..)
            .take_while(|(d, _)| d.starts_with(&ball.digits))
            .map(|(_, &i)| i)
            .collect()
    }

    pub fn haar_volumes(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.haar).collect()
    }

    pub fn nu_volumes(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.nu).collect()
    }
}

fn check_cell_count(assign: &DiscAssignment, balls: usize, depth: usize) -> Result<(), PadicError> {
    let per_ball = (assign.p as u128).checked_pow(depth as u32);
    match per_ball.and_then(|c| c.checked_mul(balls as u128)) {
        Some(total) if total <= MAX_CELLS as u128 => Ok(()),
        Some(total) => Err(PadicError::TooManyCells(total.min(usize::MAX as u128) as usize)),
        None => Err(PadicError::TooManyCells(usize::MAX)),
    }
}

/// All level-`n` cells of `Z`, grouped by vertex in index order.
pub fn discretize(assign: &DiscAssignment, n: usize) -> Result<Discretization, PadicError> {
    if n <= assign.m {
        return Err(PadicError::LevelTooCoarse { n, m: assign.m });
    }
    check_cell_count(assign, assign.vertex_count(), n - assign.m)?;
    let haar = (assign.p as f64).powi(-(n as i32));
    let split = (assign.p as f64).powi((n - assign.m) as i32);
    let mut cells = Vec::new();
    for v in 0..assign.vertex_count() {
        let node = assign.dendrogram.leaf_node(v);
        let nu = assign.measure.nu(node) / split;
        for cell in assign.disc(v).descendants(n) {
            cells.push(DiscCell {
                cell,
                vertex: Some(v),
                node,
                haar,
                nu,
            });
        }
    }
    Discretization::new(assign.p, n, cells)
}

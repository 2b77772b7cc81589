//! Position-dependent weighted adjacency matrices and their spectral moments.
//!
//! Robots at positions `x_i` induce a complete weighted graph with
//! `a_ij = exp(-c * ||x_i - x_j||_z)`. The k-th spectral moment is
//! `m_k = tr(A^k) / n`, computed from a chain of dense matrix powers so the
//! gradient code can reuse `A^1 .. A^{s-1}`.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance used inside the exponential weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Metric {
    /// Manhattan distance, `z = 1`.
    L1,
    /// Euclidean distance, `z = 2`.
    L2,
}

impl Metric {
    pub fn norm(self, diff: impl Iterator<Item = f64>) -> f64 {
        match self {
            Metric::L1 => diff.map(f64::abs).sum(),
            Metric::L2 => diff.map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}

impl TryFrom<u8> for Metric {
    type Error = String;

    fn try_from(z: u8) -> std::result::Result<Self, Self::Error> {
        match z {
            1 => Ok(Metric::L1),
            2 => Ok(Metric::L2),
            other => Err(format!("metric selector must be 1 or 2, got {other}")),
        }
    }
}

impl From<Metric> for u8 {
    fn from(m: Metric) -> u8 {
        match m {
            Metric::L1 => 1,
            Metric::L2 => 2,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", u8::from(*self))
    }
}

/// Positions of `n` robots in `d`-dimensional space, stored as an `n x d`
/// matrix whose row `i` is robot `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotConfiguration {
    positions: DMatrix<f64>,
}

impl RobotConfiguration {
    pub fn new(positions: DMatrix<f64>) -> Result<Self> {
        let (n, d) = positions.shape();
        if n < 2 {
            return Err(Error::InvalidConfiguration(format!(
                "need at least 2 robots, got {n}"
            )));
        }
        if d < 1 {
            return Err(Error::InvalidConfiguration(
                "spatial dimension must be at least 1".into(),
            ));
        }
        if let Some(bad) = positions.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidConfiguration(format!(
                "non-finite coordinate {bad}"
            )));
        }
        Ok(Self { positions })
    }

    /// Builds a configuration from one row of coordinates per robot.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidConfiguration(
                "rows have differing dimensions".into(),
            ));
        }
        Self::new(DMatrix::from_fn(n, d, |i, r| rows[i][r]))
    }

    pub fn n(&self) -> usize {
        self.positions.nrows()
    }

    pub fn d(&self) -> usize {
        self.positions.ncols()
    }

    pub fn coord(&self, i: usize, r: usize) -> f64 {
        self.positions[(i, r)]
    }

    pub fn positions(&self) -> &DMatrix<f64> {
        &self.positions
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| (0..self.d()).map(|r| self.coord(i, r)).collect())
            .collect()
    }

    /// Row-major flattening `x_1_1, x_1_2, .., x_n_d`.
    pub fn flat(&self) -> Vec<f64> {
        self.to_rows().into_iter().flatten().collect()
    }

    pub fn centroid(&self) -> Vec<f64> {
        let n = self.n() as f64;
        (0..self.d())
            .map(|r| self.positions.column(r).iter().sum::<f64>() / n)
            .collect()
    }

    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        if offset.len() != self.d() {
            return Err(Error::DimensionMismatch(format!(
                "offset has {} components, configuration has dimension {}",
                offset.len(),
                self.d()
            )));
        }
        Self::new(DMatrix::from_fn(self.n(), self.d(), |i, r| {
            self.coord(i, r) + offset[r]
        }))
    }

    /// Moves every robot toward the centroid: `x_i <- c + alpha (x_i - c)`.
    pub fn contracted(&self, alpha: f64) -> Self {
        let center = self.centroid();
        let positions = DMatrix::from_fn(self.n(), self.d(), |i, r| {
            center[r] + alpha * (self.coord(i, r) - center[r])
        });
        Self { positions }
    }

    /// Relabels robots so that new robot `i` is old robot `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        let mut seen = vec![false; n];
        if perm.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for {} robots",
                perm.len(),
                n
            )));
        }
        for &p in perm {
            if p >= n || seen[p] {
                return Err(Error::InvalidConfiguration(format!(
                    "not a permutation: {perm:?}"
                )));
            }
            seen[p] = true;
        }
        Ok(Self {
            positions: DMatrix::from_fn(n, self.d(), |i, r| self.coord(perm[i], r)),
        })
    }

    /// Permutation that sorts robots lexicographically by coordinates.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by(|&a, &b| {
            (0..self.d())
                .map(|r| self.coord(a, r).total_cmp(&self.coord(b, r)))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        });
        order
    }

    /// The same configuration with robots in [`canonical_order`](Self::canonical_order).
    ///
    /// Any relabeling of a configuration canonicalizes to the same matrix, so
    /// quantities computed from it are bit-identical across relabelings.
    pub fn canonicalized(&self) -> Self {
        let order = self.canonical_order();
        Self {
            positions: DMatrix::from_fn(self.n(), self.d(), |i, r| self.coord(order[i], r)),
        }
    }

    /// Rearranges the values within each coordinate column so that robots are
    /// ranked the same way as in `reference`, placing the configuration in
    /// the reference's ordering region while keeping its coordinate values.
    pub fn ordered_like(&self, reference: &RobotConfiguration) -> Result<Self> {
        if reference.positions.shape() != self.positions.shape() {
            return Err(Error::DimensionMismatch(format!(
                "reference shape {:?} vs configuration {:?}",
                reference.positions.shape(),
                self.positions.shape()
            )));
        }
        let (n, d) = self.positions.shape();
        let mut positions = DMatrix::zeros(n, d);
        for r in 0..d {
            let mut values: Vec<f64> = (0..n).map(|i| self.coord(i, r)).collect();
            values.sort_by(f64::total_cmp);
            let mut ranks: Vec<usize> = (0..n).collect();
            ranks.sort_by(|&a, &b| reference.coord(a, r).total_cmp(&reference.coord(b, r)));
            for (value, &i) in values.into_iter().zip(&ranks) {
                positions[(i, r)] = value;
            }
        }
        Self::new(positions)
    }

    /// `x + scale * delta` for a field of the same shape.
    pub fn displaced(&self, delta: &DMatrix<f64>, scale: f64) -> Result<Self> {
        if delta.shape() != self.positions.shape() {
            return Err(Error::DimensionMismatch(format!(
                "displacement shape {:?} vs configuration {:?}",
                delta.shape(),
                self.positions.shape()
            )));
        }
        Self::new(&self.positions + delta * scale)
    }
}

/// Symmetric nonnegative weight matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAdjacency {
    weights: DMatrix<f64>,
}

impl WeightedAdjacency {
    /// Wraps an arbitrary weight matrix after checking symmetry, a zero
    /// diagonal, and finite nonnegative entries.
    pub fn from_matrix(weights: DMatrix<f64>) -> Result<Self> {
        let (n, m) = weights.shape();
        if n != m || n < 1 {
            return Err(Error::DimensionMismatch(format!(
                "adjacency must be square, got {n}x{m}"
            )));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidConfiguration(format!(
                    "nonzero diagonal entry at {i}"
                )));
            }
            for j in 0..n {
                let w = weights[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidConfiguration(format!(
                        "weight ({i},{j}) = {w} is not finite and nonnegative"
                    )));
                }
                if w != weights[(j, i)] {
                    return Err(Error::InvalidConfiguration(format!(
                        "asymmetric weights at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { weights })
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.weights
    }
}

/// Spectral moments `m_1 .. m_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MomentVector(Vec<f64>);

impl MomentVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    /// Truncation order `s`.
    pub fn order(&self) -> usize {
        self.0.len()
    }

    /// The `k`-th moment, one-based.
    pub fn moment(&self, k: usize) -> f64 {
        self.0[k - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Matrix `D` with `D_ij = ||x_i - x_j||_z`.
pub fn pairwise_distance(config: &RobotConfiguration, metric: Metric) -> DMatrix<f64> {
    let n = config.n();
    let d = config.d();
    let mut dist = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = metric.norm((0..d).map(|r| config.coord(i, r) - config.coord(j, r)));
            dist[(i, j)] = v;
            dist[(j, i)] = v;
        }
    }
    dist
}

/// `a_ij = exp(-c ||x_i - x_j||_z)` off the diagonal, zero on it.
///
/// Weights are strictly positive for finite positions unless the exponential
/// underflows (distances beyond roughly `745 / c`).
pub fn build_adjacency(
    config: &RobotConfiguration,
    c: f64,
    metric: Metric,
) -> Result<WeightedAdjacency> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidDecay(c));
    }
    let mut weights = pairwise_distance(config, metric);
    let n = config.n();
    for i in 0..n {
        for j in 0..n {
            weights[(i, j)] = if i == j { 0.0 } else { (-c * weights[(i, j)]).exp() };
        }
    }
    Ok(WeightedAdjacency { weights })
}

/// Powers `A^1 .. A^s` of an adjacency matrix.
#[derive(Debug, Clone)]
pub struct PowerChain {
    powers: Vec<DMatrix<f64>>,
}

impl PowerChain {
    pub fn new(adjacency: &WeightedAdjacency, s: usize) -> Result<Self> {
        check_order(s, adjacency.n())?;
        let a = adjacency.matrix();
        let mut powers = Vec::with_capacity(s);
        powers.push(a.clone());
        for k in 1..s {
            let next = &powers[k - 1] * a;
            powers.push(next);
        }
        Ok(Self { powers })
    }

    pub fn order(&self) -> usize {
        self.powers.len()
    }

    pub fn n(&self) -> usize {
        self.powers[0].nrows()
    }

    /// `A^k` for `1 <= k <= s`.
    pub fn power(&self, k: usize) -> &DMatrix<f64> {
        &self.powers[k - 1]
    }

    /// `[A^k]_ij` for `0 <= k <= s`, with `A^0 = I`.
    pub fn entry(&self, k: usize, i: usize, j: usize) -> f64 {
        if k == 0 {
            if i == j {
                1.0
            } else {
                0.0
            }
        } else {
            self.powers[k - 1][(i, j)]
        }
    }

    pub fn moments(&self) -> MomentVector {
        let n = self.n() as f64;
        MomentVector(self.powers.iter().map(|p| p.trace() / n).collect())
    }
}

fn check_order(s: usize, n: usize) -> Result<()> {
    if s < 1 || s > n {
        return Err(Error::OrderOutOfRange { order: s, n });
    }
    Ok(())
}

/// `m_k = tr(A^k) / n` for `k = 1..s` by iterated multiplication.
pub fn spectral_moments(adjacency: &WeightedAdjacency, s: usize) -> Result<MomentVector> {
    Ok(PowerChain::new(adjacency, s)?.moments())
}

/// Moments `m_1..m_s` of the adjacency induced by `config`, evaluated with
/// robots in canonical order so that every relabeling of the same
/// configuration gives bit-identical results.
pub fn configuration_moments(
    config: &RobotConfiguration,
    c: f64,
    metric: Metric,
    s: usize,
) -> Result<MomentVector> {
    spectral_moments(&build_adjacency(&config.canonicalized(), c, metric)?, s)
}

/// Real spectrum of the symmetric adjacency, sorted descending.
pub fn eigenvalues(adjacency: &WeightedAdjacency) -> Vec<f64> {
    let mut eigs: Vec<f64> = SymmetricEigen::new(adjacency.matrix().clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigs.sort_by(|a, b| b.total_cmp(a));
    eigs
}

/// `m_k = (1/n) sum_i lambda_i^k` for `k = 1..s`.
pub fn moments_from_eigenvalues(eigs: &[f64], s: usize) -> Result<MomentVector> {
    let n = eigs.len();
    check_order(s, n)?;
    let nf = n as f64;
    let mut powers = vec![1.0; n];
    let mut out = Vec::with_capacity(s);
    for _ in 0..s {
        for (p, &l) in powers.iter_mut().zip(eigs) {
            *p *= l;
        }
        out.push(powers.iter().sum::<f64>() / nf);
    }
    Ok(MomentVector(out))
}

/// Upper bound on `n^(k-1)` for [`walk_weight_sum`].
pub const WALK_ENUMERATION_LIMIT: u128 = 1_000_000;

/// Sums the weights of all length-`k` walks `i = v_0, v_1, .., v_k = j` on the
/// complete graph, where a walk's weight is the product of its edge weights.
///
/// Exhaustive over the `n^(k-1)` interior node sequences; exists to check
/// `[A^k]_ij` independently of matrix multiplication.
pub fn walk_weight_sum(adjacency: &WeightedAdjacency, k: usize, i: usize, j: usize) -> Result<f64> {
    let n = adjacency.n();
    for idx in [i, j] {
        if idx >= n {
            return Err(Error::NodeOutOfRange { index: idx, n });
        }
    }
    if !(1..=5).contains(&k) {
        return Err(Error::OrderOutOfRange { order: k, n: 5 });
    }
    let count = (n as u128).pow(k as u32 - 1);
    if count > WALK_ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            count,
            limit: WALK_ENUMERATION_LIMIT,
        });
    }

    let interior = k - 1;
    let mut nodes = vec![0usize; interior];
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        let mut prev = i;
        for &v in nodes.iter().chain(std::iter::once(&j)) {
            weight *= adjacency.weight(prev, v);
            prev = v;
        }
        total += weight;

        // odometer increment over the interior nodes
        let mut pos = 0;
        loop {
            if pos == interior {
                return Ok(total);
            }
            nodes[pos] += 1;
            if nodes[pos] < n {
                break;
            }
            nodes[pos] = 0;
            pos += 1;
        }
    }
}

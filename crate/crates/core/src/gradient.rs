//! Moment-matching cost, barrier potential and their analytic gradients.
//!
//! With `A = A(x)` and `D_r` the direction matrix for coordinate `r`
//! (`sgn(x_ir - x_jr)` under l1, `(x_ir - x_jr) / ||x_i - x_j||_2` under l2),
//!
//! ```text
//! dm_k / dx_ir = -(2 k c / n) [(A o D_r) A^{k-1}]_ii
//! ```
//!
//! Every gradient here is a linear combination of these terms, so they share
//! one helper that folds the per-moment coefficients into a single weight
//! matrix before touching the coordinates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{
    build_adjacency, Metric, MomentVector, PowerChain, RobotConfiguration, WeightedAdjacency,
};
use crate::scenarios::TargetSpectrum;

/// Barrier constant [`ControllerParams::new`] applies to every moment
/// `k >= 2` when no targets are known yet.
///
/// At the minimum of the cost plus barrier each guarded margin settles near
/// `eps^(1/4)`; `1e-18` puts that margin at about `3e-5`. Scenario files
/// default to [`relative_epsilons`] instead.
pub const DEFAULT_EPSILON: f64 = 1e-18;

/// Default relative margin for [`relative_epsilons`].
pub const DEFAULT_BARRIER_MARGIN: f64 = 1e-3;

/// Barrier constants `eps_k = (margin * max(|m_k*|, 1e-6))^4`, which place
/// each moment's barrier equilibrium a fraction `margin` above its target.
pub fn relative_epsilons(targets: &TargetSpectrum, margin: f64) -> Vec<f64> {
    (1..=targets.order())
        .map(|k| {
            if k == 1 {
                0.0
            } else {
                (margin * targets.moment(k).abs().max(1e-6)).powi(4)
            }
        })
        .collect()
}

/// Default step for central finite differences.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    /// Decay constant in `a_ij = exp(-c ||x_i - x_j||)`.
    pub c: f64,
    pub metric: Metric,
    /// Truncation order `s`.
    pub order: usize,
    /// `eps_1 .. eps_s`; `eps_1` is always zero because `m_1` is constant.
    pub epsilons: Vec<f64>,
    pub barrier_enabled: bool,
}

impl ControllerParams {
    pub fn new(c: f64, metric: Metric, order: usize) -> Self {
        let epsilons = (1..=order)
            .map(|k| if k == 1 { 0.0 } else { DEFAULT_EPSILON })
            .collect();
        Self {
            c,
            metric,
            order,
            epsilons,
            barrier_enabled: true,
        }
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        for (k, e) in self.epsilons.iter_mut().enumerate() {
            *e = if k == 0 { 0.0 } else { eps };
        }
        self
    }

    pub fn without_barrier(mut self) -> Self {
        self.barrier_enabled = false;
        self
    }

    /// Checks the parameter invariants for a network of `n` robots.
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidDecay(self.c));
        }
        if self.order < 2 || self.order > n {
            return Err(Error::OrderOutOfRange { order: self.order, n });
        }
        if self.epsilons.len() != self.order {
            return Err(Error::DimensionMismatch(format!(
                "{} barrier constants for order {}",
                self.epsilons.len(),
                self.order
            )));
        }
        if self.epsilons[0] != 0.0 {
            return Err(Error::InvalidConfiguration(
                "eps_1 must be zero: the first moment is identically zero".into(),
            ));
        }
        if self.epsilons.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::InvalidConfiguration(
                "barrier constants must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    fn epsilon(&self, k: usize) -> f64 {
        self.epsilons[k - 1]
    }
}

/// `S_r` with entries `sgn(x_ir - x_jr)` and `sgn(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignMatrix {
    coordinate: usize,
    entries: DMatrix<f64>,
}

impl SignMatrix {
    pub fn coordinate(&self) -> usize {
        self.coordinate
    }

    pub fn entry(&self, i: usize, j: usize) -> i8 {
        self.entries[(i, j)] as i8
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

/// Velocity command `u`, one row per robot.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField(pub DMatrix<f64>);

impl ControlField {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, r: usize) -> f64 {
        self.0[(i, r)]
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sign_matrix(config: &RobotConfiguration, r: usize) -> Result<SignMatrix> {
    if r >= config.d() {
        return Err(Error::CoordinateOutOfRange {
            index: r,
            d: config.d(),
        });
    }
    let n = config.n();
    let entries = DMatrix::from_fn(n, n, |i, j| sign(config.coord(i, r) - config.coord(j, r)));
    Ok(SignMatrix {
        coordinate: r,
        entries,
    })
}

/// `d ||x_i - x_j||_z / d x_ir` for every pair; zero for coincident robots
/// under l2, where the norm is not differentiable.
pub fn direction_matrix(config: &RobotConfiguration, r: usize, metric: Metric) -> Result<DMatrix<f64>> {
    match metric {
        Metric::L1 => Ok(sign_matrix(config, r)?.entries),
        Metric::L2 => {
            if r >= config.d() {
                return Err(Error::CoordinateOutOfRange {
                    index: r,
                    d: config.d(),
                });
            }
            let n = config.n();
            let d = config.d();
            Ok(DMatrix::from_fn(n, n, |i, j| {
                let norm = Metric::L2.norm((0..d).map(|q| config.coord(i, q) - config.coord(j, q)));
                if norm == 0.0 {
                    0.0
                } else {
                    (config.coord(i, r) - config.coord(j, r)) / norm
                }
            }))
        }
    }
}

fn matrix_power(a: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(a.nrows(), a.ncols());
    for _ in 0..p {
        out = &out * a;
    }
    out
}

/// Derivative of `tr(A^k)` with respect to the symmetric pair `a_ij = a_ji`:
/// `2k [A^{k-1}]_ij`.
pub fn trace_derivative(adjacency: &WeightedAdjacency, k: usize, i: usize, j: usize) -> Result<f64> {
    let n = adjacency.n();
    for idx in [i, j] {
        if idx >= n {
            return Err(Error::NodeOutOfRange { index: idx, n });
        }
    }
    if i == j {
        return Err(Error::DiagonalPair(i));
    }
    if k == 0 {
        return Err(Error::OrderOutOfRange { order: 0, n });
    }
    let power = matrix_power(adjacency.matrix(), k - 1);
    Ok(2.0 * k as f64 * power[(i, j)])
}

/// Adjacency, its power chain and moments at one configuration.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub adjacency: WeightedAdjacency,
    pub chain: PowerChain,
    pub moments: MomentVector,
}

impl Evaluation {
    pub fn new(config: &RobotConfiguration, params: &ControllerParams) -> Result<Self> {
        let adjacency = build_adjacency(config, params.c, params.metric)?;
        let chain = PowerChain::new(&adjacency, params.order)?;
        let moments = chain.moments();
        Ok(Self {
            adjacency,
            chain,
            moments,
        })
    }

    /// `f_s = sum_{k=2}^s (m_k - m_k*)^2 / 4k`.
    pub fn cost(&self, targets: &TargetSpectrum) -> f64 {
        (2..=self.moments.order())
            .map(|k| {
                let r = self.moments.moment(k) - targets.moment(k);
                r * r / (4.0 * k as f64)
            })
            .sum()
    }

    /// `m_k - m_k*` for `k = 2..s`.
    pub fn margins(&self, targets: &TargetSpectrum) -> Vec<f64> {
        (2..=self.moments.order())
            .map(|k| self.moments.moment(k) - targets.moment(k))
            .collect()
    }

    /// `b_s = sum_{k=2}^s eps_k / (4k (m_k - m_k*)^2)` over terms with
    /// `eps_k > 0`; those terms require a strictly positive margin.
    pub fn barrier(&self, targets: &TargetSpectrum, params: &ControllerParams) -> Result<f64> {
        let mut total = 0.0;
        for k in 2..=self.moments.order() {
            let eps = params.epsilon(k);
            if eps == 0.0 {
                continue;
            }
            let margin = self.moments.moment(k) - targets.moment(k);
            if !(margin > 0.0) {
                return Err(Error::Infeasible { order: k, margin });
            }
            total += eps / (4.0 * k as f64 * margin * margin);
        }
        Ok(total)
    }

    /// `sum_k coef_k * dm_k/dx` with `coefs[k-1]` the coefficient of moment
    /// `k`. The k = 1 coefficient is ignored (`dm_1/dx = 0`).
    pub fn combine_moment_gradients(
        &self,
        config: &RobotConfiguration,
        params: &ControllerParams,
        coefs: &[f64],
    ) -> Result<DMatrix<f64>> {
        let n = config.n();
        let a = self.adjacency.matrix();
        let scale = -2.0 * params.c / n as f64;

        // W = sum_k coef_k * (-2kc/n) * A^{k-1}, k >= 2
        let mut w: DMatrix<f64> = DMatrix::zeros(n, n);
        for (idx, &coef) in coefs.iter().enumerate().skip(1) {
            let k = idx + 1;
            if coef == 0.0 {
                continue;
            }
            w += self.chain.power(k - 1) * (coef * scale * k as f64);
        }

        let mut grad = DMatrix::zeros(n, config.d());
        for r in 0..config.d() {
            let dir = direction_matrix(config, r, params.metric)?;
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += a[(i, j)] * dir[(i, j)] * w[(j, i)];
                }
                grad[(i, r)] = acc;
            }
        }
        Ok(grad)
    }

    /// `grad f_s`.
    pub fn cost_gradient(
        &self,
        config: &RobotConfiguration,
        targets: &TargetSpectrum,
        params: &ControllerParams,
    ) -> Result<DMatrix<f64>> {
        let coefs = self.cost_coefficients(targets);
        self.combine_moment_gradients(config, params, &coefs)
    }

    /// `grad b_s`.
    pub fn barrier_gradient(
        &self,
        config: &RobotConfiguration,
        targets: &TargetSpectrum,
        params: &ControllerParams,
    ) -> Result<DMatrix<f64>> {
        let coefs = self.barrier_coefficients(targets, params)?;
        self.combine_moment_gradients(config, params, &coefs)
    }

    /// `grad (f_s + b_s)`, or `grad f_s` when the barrier is disabled.
    pub fn potential_gradient(
        &self,
        config: &RobotConfiguration,
        targets: &TargetSpectrum,
        params: &ControllerParams,
    ) -> Result<DMatrix<f64>> {
        let mut coefs = self.cost_coefficients(targets);
        if params.barrier_enabled {
            for (c, b) in coefs.iter_mut().zip(self.barrier_coefficients(targets, params)?) {
                *c += b;
            }
        }
        self.combine_moment_gradients(config, params, &coefs)
    }

    fn cost_coefficients(&self, targets: &TargetSpectrum) -> Vec<f64> {
        (1..=self.moments.order())
            .map(|k| {
                if k == 1 {
                    0.0
                } else {
                    (self.moments.moment(k) - targets.moment(k)) / (2.0 * k as f64)
                }
            })
            .collect()
    }

    fn barrier_coefficients(
        &self,
        targets: &TargetSpectrum,
        params: &ControllerParams,
    ) -> Result<Vec<f64>> {
        let mut coefs = vec![0.0; self.moments.order()];
        for k in 2..=self.moments.order() {
            let eps = params.epsilon(k);
            if eps == 0.0 {
                continue;
            }
            let margin = self.moments.moment(k) - targets.moment(k);
            if !(margin > 0.0) {
                return Err(Error::Infeasible { order: k, margin });
            }
            coefs[k - 1] = -eps / (2.0 * k as f64 * margin.powi(3));
        }
        Ok(coefs)
    }
}

fn check_targets(targets: &TargetSpectrum, params: &ControllerParams) -> Result<()> {
    if targets.order() != params.order {
        return Err(Error::DimensionMismatch(format!(
            "targets of order {} for controller of order {}",
            targets.order(),
            params.order
        )));
    }
    Ok(())
}

/// `dm_k / dx` as an `n x d` matrix, for `2 <= k <= s`.
pub fn moment_gradient(
    config: &RobotConfiguration,
    params: &ControllerParams,
    k: usize,
) -> Result<DMatrix<f64>> {
    if k < 2 || k > params.order {
        return Err(Error::OrderOutOfRange {
            order: k,
            n: params.order,
        });
    }
    let eval = Evaluation::new(config, params)?;
    let mut coefs = vec![0.0; params.order];
    coefs[k - 1] = 1.0;
    eval.combine_moment_gradients(config, params, &coefs)
}

pub fn cost(
    config: &RobotConfiguration,
    targets: &TargetSpectrum,
    params: &ControllerParams,
) -> Result<f64> {
    check_targets(targets, params)?;
    Ok(Evaluation::new(config, params)?.cost(targets))
}

/// `u = -grad f_s`, the moment-matching control law.
pub fn control_law(
    config: &RobotConfiguration,
    targets: &TargetSpectrum,
    params: &ControllerParams,
) -> Result<ControlField> {
    check_targets(targets, params)?;
    let eval = Evaluation::new(config, params)?;
    Ok(ControlField(-eval.cost_gradient(config, targets, params)?))
}

pub fn barrier(
    config: &RobotConfiguration,
    targets: &TargetSpectrum,
    params: &ControllerParams,
) -> Result<f64> {
    check_targets(targets, params)?;
    Evaluation::new(config, params)?.barrier(targets, params)
}

pub fn barrier_gradient(
    config: &RobotConfiguration,
    targets: &TargetSpectrum,
    params: &ControllerParams,
) -> Result<DMatrix<f64>> {
    check_targets(targets, params)?;
    Evaluation::new(config, params)?.barrier_gradient(config, targets, params)
}

/// Central differences `(phi(x + h e_ir) - phi(x - h e_ir)) / 2h`.
pub fn finite_difference_gradient<F>(field: F, config: &RobotConfiguration, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&RobotConfiguration) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidConfiguration(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let (n, d) = (config.n(), config.d());
    let mut grad = DMatrix::zeros(n, d);
    let mut bump = DMatrix::zeros(n, d);
    for i in 0..n {
        for r in 0..d {
            bump[(i, r)] = 1.0;
            let plus = field(&config.displaced(&bump, h)?)?;
            let minus = field(&config.displaced(&bump, -h)?)?;
            bump[(i, r)] = 0.0;
            grad[(i, r)] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(grad)
}

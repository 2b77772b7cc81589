//! Randomized oracle suite comparing the analytic quantities against
//! independent computations:
//!
//! | check              | oracle                                   | tolerance |
//! |--------------------|------------------------------------------|-----------|
//! | `control_law`      | central differences of the cost          | `1e-5`    |
//! | `moment_gradient`  | central differences of each moment       | `1e-5`    |
//! | `barrier_gradient` | central differences of the barrier       | `1e-4`    |
//! | `trace_derivative` | central differences of `tr(A^k)`         | `1e-6`    |
//! | `walk_enumeration` | exhaustive walk sums vs matrix powers    | `1e-12`   |
//! | `spectral_moments` | moments from a symmetric eigensolver     | `1e-9`    |
//!
//! Gradient errors are normwise, `max |g - g_fd| / max |g_fd|`; scalar errors
//! are relative to `max(|oracle|, 1e-12)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gradient::{
    barrier, barrier_gradient, control_law, cost, finite_difference_gradient, moment_gradient,
    trace_derivative, ControllerParams,
};
use crate::network::{
    build_adjacency, eigenvalues, moments_from_eigenvalues, spectral_moments, walk_weight_sum,
    Metric, PowerChain, RobotConfiguration, WeightedAdjacency,
};
use crate::scenarios::{random_geometric_config, TargetSpectrum};

/// Central-difference step used by every finite-difference oracle.
pub const FD_STEP: f64 = 1e-6;
/// Smallest coordinate gap between robots in a generated configuration, so
/// that `±FD_STEP` never crosses an l1 tie.
pub const MIN_COORDINATE_GAP: f64 = 1e-3;

/// Largest `n` and `k` the walk enumeration check uses.
pub const WALK_MAX_N: usize = 5;
pub const WALK_MAX_K: usize = 4;
pub const TRACE_MAX_K: usize = 6;
pub const GRADIENT_MAX_S: usize = 5;

/// Which analytic quantity to corrupt, for exercising the failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    ControlLaw,
    MomentGradient,
    BarrierGradient,
    TraceDerivative,
    WalkEnumeration,
    SpectralMoments,
}

impl Check {
    pub const ALL: [Check; 6] = [
        Check::ControlLaw,
        Check::MomentGradient,
        Check::BarrierGradient,
        Check::TraceDerivative,
        Check::WalkEnumeration,
        Check::SpectralMoments,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::ControlLaw => "control_law",
            Check::MomentGradient => "moment_gradient",
            Check::BarrierGradient => "barrier_gradient",
            Check::TraceDerivative => "trace_derivative",
            Check::WalkEnumeration => "walk_enumeration",
            Check::SpectralMoments => "spectral_moments",
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            Check::ControlLaw | Check::MomentGradient => 1e-5,
            Check::BarrierGradient => 1e-4,
            Check::TraceDerivative => 1e-6,
            Check::WalkEnumeration => 1e-12,
            Check::SpectralMoments => 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub n: usize,
    pub d: usize,
    pub trials: usize,
    pub seed: u64,
    /// Multiplies the named analytic quantity by `1 + 1e-3` before comparing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<Check>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n: 6,
            d: 2,
            trials: 20,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: Check,
    pub name: String,
    pub tolerance: f64,
    pub worst_error: f64,
    /// Number of individual comparisons behind `worst_error`.
    pub comparisons: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub options: VerifyOptions,
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }

    pub fn check(&self, check: Check) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.check == check)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("verify report serializes")
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        for c in &self.checks {
            out.push_str(&format!(
                "{:<17} {} worst {:.3e} (tolerance {:.0e}, {} comparisons)\n",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.worst_error,
                c.tolerance,
                c.comparisons
            ));
        }
        out.push_str(if self.passed() { "all checks passed\n" } else { "FAILED\n" });
        out
    }
}

struct Tally {
    worst: f64,
    count: usize,
}

impl Tally {
    fn record(&mut self, err: f64) {
        // NaN must fail the check, so it is kept rather than ignored by max
        self.worst = if err.is_nan() || self.worst.is_nan() { f64::NAN } else { self.worst.max(err) };
        self.count += 1;
    }
}

fn scalar_error(value: f64, oracle: f64) -> f64 {
    (value - oracle).abs() / oracle.abs().max(1e-12)
}

fn normwise_error(value: &DMatrix<f64>, oracle: &DMatrix<f64>) -> f64 {
    let scale = oracle.amax().max(1e-12);
    (value - oracle).amax() / scale
}

/// Uniform configuration whose robots differ by at least
/// [`MIN_COORDINATE_GAP`] in every coordinate.
pub fn tie_free_config(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<RobotConfiguration> {
    loop {
        let cfg = random_geometric_config(n, d, rng.random())?;
        let tie_free = (0..d).all(|r| {
            let mut col: Vec<f64> = (0..n).map(|i| cfg.coord(i, r)).collect();
            col.sort_by(f64::total_cmp);
            col.windows(2).all(|w| w[1] - w[0] >= MIN_COORDINATE_GAP)
        });
        if tie_free {
            return Ok(cfg);
        }
    }
}

/// Symmetric matrix with zero diagonal and i.i.d. uniform `[0, 1)` weights.
pub fn random_weights(n: usize, rng: &mut ChaCha8Rng) -> Result<WeightedAdjacency> {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = rng.random();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    WeightedAdjacency::from_matrix(w)
}

fn corrupt(fault: Option<Check>, check: Check) -> f64 {
    if fault == Some(check) {
        1.0 + 1e-3
    } else {
        1.0
    }
}

/// Runs every check on `options.trials` random instances. Each trial draws
/// one tie-free configuration, a decay `c` in `[0.5, 2)` and an order `s`,
/// and exercises both metrics.
pub fn run(options: &VerifyOptions) -> Result<VerifyReport> {
    let VerifyOptions { n, d, trials, seed, fault } = options.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tallies: Vec<Tally> = Check::ALL.iter().map(|_| Tally { worst: 0.0, count: 0 }).collect();
    let idx = |c: Check| Check::ALL.iter().position(|x| *x == c).unwrap();

    let mut warnings = Vec::new();
    if trials == 0 {
        warnings.push("no trials requested; every check passes vacuously".to_string());
    }
    if n > WALK_MAX_N {
        warnings.push(format!(
            "walk enumeration uses n = {WALK_MAX_N} instead of {n} to bound its cost"
        ));
    }

    for _ in 0..trials {
        let config = tie_free_config(n, d, &mut rng)?;
        let c = 0.5 + 1.5 * rng.random::<f64>();
        let s = rng.random_range(2..=GRADIENT_MAX_S.min(n));
        let other = tie_free_config(n, d, &mut rng)?;

        for metric in [Metric::L1, Metric::L2] {
            let params = ControllerParams::new(c, metric, s);
            let targets = TargetSpectrum::new(
                spectral_moments(&build_adjacency(&other, c, metric)?, s)?.into_vec(),
                None,
            )?;

            let analytic = control_law(&config, &targets, &params)?.0 * corrupt(fault, Check::ControlLaw);
            let fd = -finite_difference_gradient(|x| cost(x, &targets, &params), &config, FD_STEP)?;
            tallies[idx(Check::ControlLaw)].record(normwise_error(&analytic, &fd));

            for k in 2..=s {
                let analytic = moment_gradient(&config, &params, k)? * corrupt(fault, Check::MomentGradient);
                let fd = finite_difference_gradient(
                    |x| Ok(spectral_moments(&build_adjacency(x, c, metric)?, k)?.moment(k)),
                    &config,
                    FD_STEP,
                )?;
                tallies[idx(Check::MomentGradient)].record(normwise_error(&analytic, &fd));
            }

            // spreading the robots out lowers every moment of order >= 2, so
            // these targets leave the configuration strictly feasible
            let spread = config.contracted(1.5);
            let below = spectral_moments(&build_adjacency(&spread, c, metric)?, s)?.into_vec();
            let targets = TargetSpectrum::new(below, None)?;
            let params = params.with_epsilon(1e-3);
            let analytic =
                barrier_gradient(&config, &targets, &params)? * corrupt(fault, Check::BarrierGradient);
            let fd = finite_difference_gradient(|x| barrier(x, &targets, &params), &config, FD_STEP)?;
            tallies[idx(Check::BarrierGradient)].record(normwise_error(&analytic, &fd));
        }

        let adjacency = build_adjacency(&config, c, Metric::L1)?;
        for k in 1..=TRACE_MAX_K {
            for i in 0..n {
                for j in i + 1..n {
                    let analytic =
                        trace_derivative(&adjacency, k, i, j)? * corrupt(fault, Check::TraceDerivative);
                    let fd = trace_difference(&adjacency, k, i, j)?;
                    tallies[idx(Check::TraceDerivative)].record(scalar_error(analytic, fd));
                }
            }
        }

        let walk_n = n.min(WALK_MAX_N);
        let weights = random_weights(walk_n, &mut rng)?;
        let chain = PowerChain::new(&weights, WALK_MAX_K.min(walk_n))?;
        for k in 1..=chain.order() {
            for i in 0..walk_n {
                for j in 0..walk_n {
                    let analytic = chain.entry(k, i, j) * corrupt(fault, Check::WalkEnumeration);
                    let oracle = walk_weight_sum(&weights, k, i, j)?;
                    tallies[idx(Check::WalkEnumeration)].record(scalar_error(analytic, oracle));
                }
            }
        }

        let moments = spectral_moments(&adjacency, n)?;
        let oracle = moments_from_eigenvalues(&eigenvalues(&adjacency), n)?;
        for k in 2..=n {
            let analytic = moments.moment(k) * corrupt(fault, Check::SpectralMoments);
            tallies[idx(Check::SpectralMoments)].record(scalar_error(analytic, oracle.moment(k)));
        }
    }

    let checks = Check::ALL
        .iter()
        .zip(tallies)
        .map(|(&check, t)| CheckResult {
            check,
            name: check.name().to_string(),
            tolerance: check.tolerance(),
            worst_error: t.worst,
            comparisons: t.count,
            passed: t.worst < check.tolerance(),
        })
        .collect();
    Ok(VerifyReport {
        options: options.clone(),
        checks,
        warnings,
    })
}

/// Central difference of `tr(A^k)` when `a_ij` and `a_ji` move together.
fn trace_difference(adjacency: &WeightedAdjacency, k: usize, i: usize, j: usize) -> Result<f64> {
    let trace = |delta: f64| -> Result<f64> {
        let mut w = adjacency.matrix().clone();
        w[(i, j)] += delta;
        w[(j, i)] += delta;
        let mut p = w.clone();
        for _ in 1..k {
            p = &p * &w;
        }
        Ok(p.trace())
    };
    Ok((trace(FD_STEP)? - trace(-FD_STEP)?) / (2.0 * FD_STEP))
}

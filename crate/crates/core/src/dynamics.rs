//! Explicit integration of the barrier-augmented gradient flow
//! `x' = -grad (f_s + b_s)`.
//!
//! Each step moves along the negative gradient and is accepted only if the
//! candidate stays inside the feasible set and does not increase the
//! potential. Rejected steps halve `dt`; five consecutive acceptances double
//! it again, never past the configured initial step.
//!
//! Under the l1 metric the gradient jumps across hyperplanes where two robots
//! share a coordinate, and plain steps chatter across such a tie until `dt`
//! underflows. Before giving up, the integrator tries a sliding step: robots
//! tied in a coordinate (to [`TIE_TOLERANCE`]) are snapped together and moved
//! by their averaged gradient component, so the tie is kept.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::{ControllerParams, Evaluation};
use crate::network::{eigenvalues, Metric, MomentVector, RobotConfiguration};
use crate::scenarios::{coincident_moments, Scenario, TargetSpectrum};

/// Consecutive accepted steps before `dt` is doubled.
pub const GROWTH_STREAK: usize = 5;
/// Contraction factor applied by [`ensure_feasible`].
pub const CONTRACTION: f64 = 0.9;
/// Contractions attempted before giving up; `0.9^2000` is far below the
/// smallest relative spacing of doubles.
pub const MAX_CONTRACTIONS: usize = 2000;
/// Relative feasibility slack required by [`ensure_feasible`].
pub const SLACK_FRACTION: f64 = 0.1;
/// Absolute floor of the feasibility slack.
pub const SLACK_FLOOR: f64 = 1e-3;
/// Coordinates closer than this, relative to the configuration's extent,
/// count as tied for a sliding step.
pub const TIE_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub dt: f64,
    pub max_time: f64,
    pub cost_tolerance: f64,
    pub min_step: f64,
    pub record_every: usize,
    /// The run also counts as converged once every moment lies within this
    /// relative band of its target (above it, when the barrier is enabled).
    pub moment_tolerance: f64,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            dt: 0.05,
            max_time: 1e4,
            cost_tolerance: 1e-8,
            min_step: 1e-8,
            record_every: 100,
            moment_tolerance: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Converged,
    Horizon,
    Stalled,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::Horizon => "horizon",
            Termination::Stalled => "stalled",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub configuration: RobotConfiguration,
    pub moments: MomentVector,
    pub cost: f64,
    pub barrier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub samples: Vec<Sample>,
    /// Configuration the flow started from, after [`ensure_feasible`].
    pub start_configuration: RobotConfiguration,
    pub final_configuration: RobotConfiguration,
    pub final_moments: MomentVector,
    pub final_eigenvalues: Vec<f64>,
    pub termination: Termination,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Accepted steps taken by sliding along coordinate ties.
    pub sliding_steps: usize,
    pub final_time: f64,
    /// Coordinate pairs whose strict initial ordering was reversed by the
    /// final state. The convergence argument assumes this stays at zero.
    pub ordering_violations: usize,
}

/// `m_k(x) - m_k*` for `k = 2..s`; feasible iff all entries are positive.
pub fn feasibility_margin(
    config: &RobotConfiguration,
    targets: &TargetSpectrum,
    params: &ControllerParams,
) -> Result<Vec<f64>> {
    Ok(Evaluation::new(config, params)?.margins(targets))
}

fn is_feasible(margins: &[f64]) -> bool {
    margins.iter().all(|m| *m > 0.0)
}

/// Relative error `|m_k - m_k*| / max(|m_k*|, 1e-12)`.
pub fn relative_error(value: f64, target: f64) -> f64 {
    (value - target).abs() / target.abs().max(1e-12)
}

/// Whether every margin `m_k - m_k*`, `k = 2..s`, is within `tolerance`
/// relative to its target; with `from_above` the margins must also be
/// strictly positive.
pub fn within_band(margins: &[f64], targets: &TargetSpectrum, tolerance: f64, from_above: bool) -> bool {
    margins.iter().enumerate().all(|(idx, &m)| {
        let target = targets.moment(idx + 2);
        (!from_above || m > 0.0) && relative_error(target + m, target) <= tolerance
    })
}

/// Slack [`ensure_feasible`] demands for moment `k`: 10% of the target's
/// magnitude with a floor of `1e-3`, capped at half the gap to the
/// coincident-configuration moment so the contraction can reach it.
pub fn required_slack(target: f64, bound: f64) -> f64 {
    (SLACK_FRACTION * target.abs()).max(SLACK_FLOOR).min(0.5 * (bound - target))
}

/// Contracts the configuration toward its centroid by [`CONTRACTION`] until
/// every margin reaches its [`required_slack`]. Already-feasible
/// configurations (all margins strictly positive) are returned unchanged.
pub fn ensure_feasible(
    config: &RobotConfiguration,
    targets: &TargetSpectrum,
    params: &ControllerParams,
) -> Result<RobotConfiguration> {
    let n = config.n();
    let s = targets.order();
    let bound = coincident_moments(n, s);
    for k in 2..=s {
        if targets.moment(k) >= bound[k - 1] {
            return Err(Error::Unrealizable {
                order: k,
                target: targets.moment(k),
                bound: bound[k - 1],
            });
        }
    }
    let slack: Vec<f64> = (2..=s)
        .map(|k| required_slack(targets.moment(k), bound[k - 1]))
        .collect();

    let mut current = config.clone();
    if is_feasible(&feasibility_margin(&current, targets, params)?) {
        return Ok(current);
    }
    // moments increase monotonically toward the coincident limit
    for _ in 0..MAX_CONTRACTIONS {
        let margins = feasibility_margin(&current, targets, params)?;
        if margins.iter().zip(&slack).all(|(m, s)| m >= s) {
            return Ok(current);
        }
        current = current.contracted(CONTRACTION);
    }
    let margins = feasibility_margin(&current, targets, params)?;
    let (idx, _) = margins
        .iter()
        .zip(&slack)
        .enumerate()
        .find(|(_, (m, s))| m < s)
        .expect("some margin is short of its slack");
    let k = idx + 2;
    Err(Error::Unrealizable {
        order: k,
        target: targets.moment(k),
        bound: bound[k - 1],
    })
}

/// Result of a single integration attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub configuration: RobotConfiguration,
    pub accepted: bool,
    /// Step size to use next: unchanged on acceptance, halved on rejection.
    pub dt: f64,
}

/// Cost, barrier and gradient at one accepted state.
struct State {
    config: RobotConfiguration,
    eval: Evaluation,
    cost: f64,
    barrier: f64,
}

impl State {
    fn new(config: RobotConfiguration, targets: &TargetSpectrum, params: &ControllerParams) -> Result<Self> {
        let eval = Evaluation::new(&config, params)?;
        let cost = eval.cost(targets);
        let barrier = if params.barrier_enabled {
            eval.barrier(targets, params)?
        } else {
            0.0
        };
        Ok(Self {
            config,
            eval,
            cost,
            barrier,
        })
    }

    fn potential(&self) -> f64 {
        self.cost + self.barrier
    }
}

/// Tries `x' = x - dt grad(f_s + b_s)` from `current`.
fn attempt(
    current: &State,
    targets: &TargetSpectrum,
    params: &ControllerParams,
    dt: f64,
) -> Result<Option<State>> {
    let grad = current.eval.potential_gradient(&current.config, targets, params)?;
    let candidate = current.config.displaced(&grad, -dt)?;
    judge(current, candidate, targets, params)
}

/// Groups of robots whose coordinate `r` agrees to [`TIE_TOLERANCE`].
fn tie_groups(config: &RobotConfiguration, r: usize) -> Vec<Vec<usize>> {
    let n = config.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| config.coord(a, r).total_cmp(&config.coord(b, r)));
    let extent = config.coord(order[n - 1], r) - config.coord(order[0], r);
    let tolerance = TIE_TOLERANCE * extent.max(1.0);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group = vec![order[0]];
    for pair in order.windows(2) {
        if config.coord(pair[1], r) - config.coord(pair[0], r) <= tolerance {
            group.push(pair[1]);
        } else {
            groups.push(std::mem::replace(&mut group, vec![pair[1]]));
        }
    }
    groups.push(group);
    groups.retain(|g| g.len() > 1);
    groups
}

/// Sliding step along l1 tie hyperplanes. Returns `Ok(None)` without
/// evaluating anything if no coordinates are tied.
fn attempt_sliding(
    current: &State,
    targets: &TargetSpectrum,
    params: &ControllerParams,
    dt: f64,
) -> Result<Option<State>> {
    let mut grad = current.eval.potential_gradient(&current.config, targets, params)?;
    let mut positions = current.config.positions().clone();
    let mut tied = false;
    for r in 0..current.config.d() {
        for group in tie_groups(&current.config, r) {
            tied = true;
            let len = group.len() as f64;
            let x = group.iter().map(|&i| positions[(i, r)]).sum::<f64>() / len;
            let g = group.iter().map(|&i| grad[(i, r)]).sum::<f64>() / len;
            for &i in &group {
                positions[(i, r)] = x;
                grad[(i, r)] = g;
            }
        }
    }
    if !tied {
        return Ok(None);
    }
    let candidate = RobotConfiguration::new(positions - grad * dt)?;
    judge(current, candidate, targets, params)
}

/// Accepts `candidate` if it is feasible and does not raise the potential.
fn judge(
    current: &State,
    candidate: RobotConfiguration,
    targets: &TargetSpectrum,
    params: &ControllerParams,
) -> Result<Option<State>> {
    let eval = Evaluation::new(&candidate, params)?;
    if params.barrier_enabled && !is_feasible(&eval.margins(targets)) {
        return Ok(None);
    }
    let next = State {
        cost: eval.cost(targets),
        barrier: if params.barrier_enabled {
            eval.barrier(targets, params)?
        } else {
            0.0
        },
        config: candidate,
        eval,
    };
    if next.potential() <= current.potential() {
        Ok(Some(next))
    } else {
        Ok(None)
    }
}

/// One accept/reject step of size `dt`.
///
/// Fails with [`Error::Infeasible`] if `config` itself is infeasible (barrier
/// enabled) and with [`Error::Stalled`] if a rejection would push `dt` below
/// `settings.min_step`.
pub fn step(
    config: &RobotConfiguration,
    targets: &TargetSpectrum,
    params: &ControllerParams,
    settings: &SimulationSettings,
    dt: f64,
) -> Result<StepOutcome> {
    let current = State::new(config.clone(), targets, params)?;
    match attempt(&current, targets, params, dt)? {
        Some(next) => Ok(StepOutcome {
            configuration: next.config,
            accepted: true,
            dt,
        }),
        None => {
            let halved = dt / 2.0;
            if halved < settings.min_step {
                return Err(Error::Stalled {
                    min_step: settings.min_step,
                });
            }
            Ok(StepOutcome {
                configuration: config.clone(),
                accepted: false,
                dt: halved,
            })
        }
    }
}

/// Largest acceptable sliding step, halving from `settings.dt` down to
/// `settings.min_step`.
fn slide(
    state: &State,
    targets: &TargetSpectrum,
    params: &ControllerParams,
    settings: &SimulationSettings,
) -> Result<Option<(State, f64)>> {
    let mut dt = settings.dt;
    while dt >= settings.min_step {
        match attempt_sliding(state, targets, params, dt)? {
            Some(next) => return Ok(Some((next, dt))),
            None if tie_groups_any(&state.config) => dt /= 2.0,
            None => return Ok(None),
        }
    }
    Ok(None)
}

fn tie_groups_any(config: &RobotConfiguration) -> bool {
    (0..config.d()).any(|r| !tie_groups(config, r).is_empty())
}

fn ordering_violations(start: &RobotConfiguration, end: &RobotConfiguration) -> usize {
    let (n, d) = (start.n(), start.d());
    let mut count = 0;
    for r in 0..d {
        for i in 0..n {
            for j in 0..n {
                if start.coord(i, r) < start.coord(j, r) && end.coord(i, r) > end.coord(j, r) {
                    count += 1;
                }
            }
        }
    }
    count
}

fn sample(t: f64, state: &State) -> Sample {
    Sample {
        t,
        configuration: state.config.clone(),
        moments: state.eval.moments.clone(),
        cost: state.cost,
        barrier: state.barrier,
    }
}

/// Runs the flow from the scenario's initial configuration until the cost
/// drops below tolerance, the horizon is reached, or the step size stalls.
///
/// With the barrier enabled the start is first made feasible; unrealizable
/// targets are reported as [`Error::Unrealizable`].
pub fn simulate(scenario: &Scenario) -> Result<TrajectoryRecord> {
    let params = &scenario.params;
    let targets = &scenario.targets;
    let settings = &scenario.settings;
    params.validate(scenario.n())?;

    let mut start = scenario.initial.configuration()?;
    if params.barrier_enabled {
        start = ensure_feasible(&start, targets, params)?;
    }

    let mut state = State::new(start.clone(), targets, params)?;
    let mut samples = vec![sample(0.0, &state)];
    let mut t = 0.0;
    let mut dt = settings.dt;
    let mut streak = 0;
    let mut accepted_steps = 0;
    let mut rejected_steps = 0;
    let mut sliding_steps = 0;

    let termination = loop {
        if state.cost <= settings.cost_tolerance
            || within_band(&state.eval.margins(targets), targets, settings.moment_tolerance, params.barrier_enabled)
        {
            break Termination::Converged;
        }
        if t >= settings.max_time {
            break Termination::Horizon;
        }
        match attempt(&state, targets, params, dt)? {
            Some(next) => {
                state = next;
                t += dt;
                accepted_steps += 1;
                streak += 1;
                if streak == GROWTH_STREAK {
                    streak = 0;
                    dt = (2.0 * dt).min(settings.dt);
                }
                if accepted_steps % settings.record_every == 0 {
                    samples.push(sample(t, &state));
                }
            }
            None => {
                rejected_steps += 1;
                streak = 0;
                dt /= 2.0;
                if dt >= settings.min_step {
                    continue;
                }
                if params.metric == Metric::L1 {
                    if let Some((next, used)) = slide(&state, targets, params, settings)? {
                        state = next;
                        t += used;
                        dt = used;
                        accepted_steps += 1;
                        sliding_steps += 1;
                        if accepted_steps % settings.record_every == 0 {
                            samples.push(sample(t, &state));
                        }
                        continue;
                    }
                }
                break Termination::Stalled;
            }
        }
    };

    if samples.last().map_or(true, |s| s.t < t) {
        samples.push(sample(t, &state));
    }

    Ok(TrajectoryRecord {
        final_eigenvalues: eigenvalues(&state.eval.adjacency),
        final_moments: state.eval.moments.clone(),
        ordering_violations: ordering_violations(&start, &state.config),
        final_configuration: state.config,
        start_configuration: start,
        samples,
        termination,
        accepted_steps,
        rejected_steps,
        sliding_steps,
        final_time: t,
    })
}

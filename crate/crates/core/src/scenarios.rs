//! Initial configurations, target spectra and complete simulation scenarios.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::SimulationSettings;
use crate::error::{Error, Result};
use crate::gradient::ControllerParams;
use crate::network::{
    build_adjacency, eigenvalues, moments_from_eigenvalues, spectral_moments, RobotConfiguration,
};

/// Published spectra of the two reference formations.
pub mod published {
    pub const HEXAGON7_MOMENTS: [f64; 7] = [0.0, 0.53, 0.64, 1.22, 2.02, 3.47, 5.90];
    pub const HEXAGON7_EIGENVALUES: [f64; 7] = [-0.51, -0.47, -0.40, -0.40, 0.05, 0.05, 1.70];
    /// Only the first six moments of the ten-robot network are known.
    pub const RGG10_MOMENTS: [f64; 6] = [0.0, 3.11, 13.45, 71.60, 368.36, 1905.0];
    pub const RGG10_EIGENVALUES: [f64; 10] =
        [-0.89, -0.85, -0.84, -0.79, -0.77, -0.68, -0.61, 0.02, 0.27, 5.16];
}

/// Seed of the hexagon7 preset's random start.
pub const HEXAGON7_SEED: u64 = 7;
/// Seed of the rgg10 preset's random start.
pub const RGG10_SEED: u64 = 10;

/// Tolerance when comparing target moments to those implied by reference
/// eigenvalues: `1e-2 * max(|m_k*|, 1)`. Published tables are rounded to two
/// decimals.
pub const REFERENCE_TOLERANCE: f64 = 1e-2;

/// Desired moments `m_1* .. m_s*`, optionally with the eigenvalues they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpectrum {
    moments: Vec<f64>,
    reference_eigenvalues: Option<Vec<f64>>,
}

impl TargetSpectrum {
    pub fn new(moments: Vec<f64>, reference_eigenvalues: Option<Vec<f64>>) -> Result<Self> {
        if moments.is_empty() {
            return Err(Error::InvalidConfiguration("empty target spectrum".into()));
        }
        if moments
            .iter()
            .chain(reference_eigenvalues.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidConfiguration(
                "target values must be finite".into(),
            ));
        }
        Ok(Self {
            moments,
            reference_eigenvalues,
        })
    }

    pub fn order(&self) -> usize {
        self.moments.len()
    }

    /// `m_k*`, one-based.
    pub fn moment(&self, k: usize) -> f64 {
        self.moments[k - 1]
    }

    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    pub fn reference_eigenvalues(&self) -> Option<&[f64]> {
        self.reference_eigenvalues.as_deref()
    }

    /// The first `s` targets.
    pub fn truncated(&self, s: usize) -> Result<Self> {
        if s == 0 || s > self.order() {
            return Err(Error::OrderOutOfRange {
                order: s,
                n: self.order(),
            });
        }
        Ok(Self {
            moments: self.moments[..s].to_vec(),
            reference_eigenvalues: self.reference_eigenvalues.clone(),
        })
    }

    fn violations(&self, out: &mut Vec<Violation>) {
        if self.moments[0] != 0.0 {
            out.push(Violation::new(
                "targets.moments[0]",
                format!("first moment must be 0 for a graph without self-loops, got {}", self.moments[0]),
            ));
        }
        for (idx, &m) in self.moments.iter().enumerate() {
            let k = idx + 1;
            if k % 2 == 0 && m < 0.0 {
                out.push(Violation::new(
                    format!("targets.moments[{idx}]"),
                    format!("even moment m_{k} must be nonnegative, got {m}"),
                ));
            }
        }
        if let Some(eigs) = &self.reference_eigenvalues {
            if self.order() > eigs.len() {
                out.push(Violation::new(
                    "reference_eigenvalues",
                    format!("{} eigenvalues cannot check {} moments", eigs.len(), self.order()),
                ));
                return;
            }
            let implied = moments_from_eigenvalues(eigs, self.order())
                .expect("order checked against eigenvalue count");
            for (idx, (&got, &want)) in implied.values().iter().zip(&self.moments).enumerate() {
                if (got - want).abs() > REFERENCE_TOLERANCE * want.abs().max(1.0) {
                    out.push(Violation::new(
                        "reference_eigenvalues",
                        format!(
                            "eigenvalues imply m_{} = {got:.4}, target is {want}",
                            idx + 1
                        ),
                    ));
                }
            }
        }
    }
}

/// Moments of `n` coincident robots: the unit-weight complete graph with
/// spectrum `{n-1, -1, .., -1}`. Every reachable moment is below these.
pub fn coincident_moments(n: usize, s: usize) -> Vec<f64> {
    let nf = n as f64;
    (1..=s as i32)
        .map(|k| ((nf - 1.0).powi(k) + (nf - 1.0) * (-1.0f64).powi(k)) / nf)
        .collect()
}

/// How the starting configuration is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Positions(RobotConfiguration),
    /// i.i.d. uniform coordinates on `[0, 1]` from [`random_geometric_config`].
    Random { n: usize, d: usize, seed: u64 },
}

impl InitialCondition {
    pub fn n(&self) -> usize {
        match self {
            InitialCondition::Positions(cfg) => cfg.n(),
            InitialCondition::Random { n, .. } => *n,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            InitialCondition::Positions(cfg) => cfg.d(),
            InitialCondition::Random { d, .. } => *d,
        }
    }

    pub fn configuration(&self) -> Result<RobotConfiguration> {
        match self {
            InitialCondition::Positions(cfg) => Ok(cfg.clone()),
            InitialCondition::Random { n, d, seed } => random_geometric_config(*n, *d, *seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub initial: InitialCondition,
    pub params: ControllerParams,
    pub targets: TargetSpectrum,
    pub settings: SimulationSettings,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.initial.n()
    }

    pub fn d(&self) -> usize {
        self.initial.d()
    }
}

/// One failed scenario check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub constraint: String,
}

impl Violation {
    fn new(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            constraint: constraint.into(),
        }
    }

    /// Whether this is a target that no configuration can reach.
    pub fn is_unrealizable(&self) -> bool {
        self.constraint.starts_with("unrealizable")
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

/// `n` robots with coordinates drawn i.i.d. uniform on `[0, 1)`.
///
/// The generator is ChaCha8 seeded through `SeedableRng::seed_from_u64`;
/// coordinates are drawn robot by robot, dimension by dimension, each as a
/// 53-bit mantissa scaled by `2^-53`.
pub fn random_geometric_config(n: usize, d: usize, seed: u64) -> Result<RobotConfiguration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = DMatrix::zeros(n, d);
    for i in 0..n {
        for r in 0..d {
            positions[(i, r)] = rng.random::<f64>();
        }
    }
    RobotConfiguration::new(positions)
}

/// Seven robots: one at the origin and six on a circle of radius
/// `side_length` at multiples of 60 degrees. Extra dimensions are zero.
pub fn hexagon_formation(side_length: f64, d: usize) -> Result<RobotConfiguration> {
    if !(side_length > 0.0 && side_length.is_finite()) {
        return Err(Error::InvalidConfiguration(format!(
            "side length must be positive, got {side_length}"
        )));
    }
    if d < 2 {
        return Err(Error::InvalidConfiguration(
            "hexagon formation needs at least 2 dimensions".into(),
        ));
    }
    let mut positions = DMatrix::zeros(7, d);
    for t in 0..6 {
        let angle = PI / 3.0 * t as f64;
        positions[(t + 1, 0)] = side_length * angle.cos();
        positions[(t + 1, 1)] = side_length * angle.sin();
    }
    RobotConfiguration::new(positions)
}

/// Targets realized by an exemplar formation: its first `s` moments, with
/// its full spectrum as reference.
pub fn target_from_formation(
    config: &RobotConfiguration,
    params: &ControllerParams,
    s: usize,
) -> Result<TargetSpectrum> {
    let adjacency = build_adjacency(config, params.c, params.metric)?;
    let moments = spectral_moments(&adjacency, s)?;
    TargetSpectrum::new(moments.into_vec(), Some(eigenvalues(&adjacency)))
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 2] = ["hexagon7", "rgg10"];

/// Scenario for one of the published examples, with default controller and
/// simulation settings and the l1 metric.
///
/// `hexagon7` tracks all seven moments; `rgg10` tracks the first four. Use
/// [`crate::schema::ScenarioFile::preset`] to change the order before
/// building.
pub fn preset(name: &str) -> Result<Scenario> {
    crate::schema::ScenarioFile::preset(name)?
        .into_scenario()
        .map_err(|v| Error::InvalidConfiguration(format!("preset {name}: {v:?}")))
}

/// Checks every scenario invariant, returning the scenario untouched or the
/// full list of violations.
pub fn validate_scenario(scenario: Scenario) -> std::result::Result<Scenario, Vec<Violation>> {
    let mut out = Vec::new();
    let n = scenario.n();
    let d = scenario.d();
    let p = &scenario.params;
    let st = &scenario.settings;

    if n < 2 {
        out.push(Violation::new("n", format!("need at least 2 robots, got {n}")));
    }
    if d < 1 {
        out.push(Violation::new("d", "dimension must be at least 1"));
    }
    if let InitialCondition::Positions(cfg) = &scenario.initial {
        if cfg.positions().iter().any(|v| !v.is_finite()) {
            out.push(Violation::new("positions", "coordinates must be finite"));
        }
    }
    if !(p.c > 0.0 && p.c.is_finite()) {
        out.push(Violation::new("c", format!("decay constant must be positive, got {}", p.c)));
    }
    if p.order < 2 || p.order > n {
        out.push(Violation::new(
            "s",
            format!("truncation order must satisfy 2 <= s <= n = {n}, got {}", p.order),
        ));
    }
    if p.epsilons.len() != p.order {
        out.push(Violation::new(
            "epsilons",
            format!("expected {} barrier constants, got {}", p.order, p.epsilons.len()),
        ));
    } else {
        if p.epsilons[0] != 0.0 {
            out.push(Violation::new("epsilons[0]", "eps_1 must be 0"));
        }
        if p.epsilons.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            out.push(Violation::new("epsilons", "barrier constants must be finite and nonnegative"));
        }
    }
    if scenario.targets.order() != p.order {
        out.push(Violation::new(
            "targets",
            format!("{} target moments for truncation order {}", scenario.targets.order(), p.order),
        ));
    }
    scenario.targets.violations(&mut out);

    if !(st.dt > st.min_step && st.min_step > 0.0) {
        out.push(Violation::new(
            "dt",
            format!("need dt > min_step > 0, got dt = {}, min_step = {}", st.dt, st.min_step),
        ));
    }
    if !(st.max_time > 0.0) {
        out.push(Violation::new("max_time", "horizon must be positive"));
    }
    if !(st.cost_tolerance > 0.0) {
        out.push(Violation::new("cost_tolerance", "tolerance must be positive"));
    }
    if st.record_every == 0 {
        out.push(Violation::new("record_every", "sampling stride must be at least 1"));
    }

    if p.barrier_enabled && n >= 2 {
        let bound = coincident_moments(n, scenario.targets.order());
        for k in 2..=scenario.targets.order() {
            let target = scenario.targets.moment(k);
            if target >= bound[k - 1] {
                out.push(Violation::new(
                    format!("targets.moments[{}]", k - 1),
                    format!(
                        "unrealizable: m_{k}* = {target} must be below the coincident-configuration moment {}",
                        bound[k - 1]
                    ),
                ));
            }
        }
    }

    if out.is_empty() {
        Ok(scenario)
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{pairwise_distance, Metric};

    #[test]
    fn random_config_is_deterministic() {
        let a = random_geometric_config(6, 2, 42).unwrap();
        let b = random_geometric_config(6, 2, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_geometric_config(6, 2, 43).unwrap());
        assert!(a.positions().iter().all(|v| (0.0..1.0).contains(v)));
        assert_eq!(random_geometric_config(2, 3, 0).unwrap().n(), 2);
    }

    #[test]
    fn uniform_mean() {
        let cfg = random_geometric_config(10_000, 2, 2024).unwrap();
        for mean in cfg.centroid() {
            assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
        }
    }

    #[test]
    fn hexagon_geometry() {
        let hex = hexagon_formation(1.0, 2).unwrap();
        assert_eq!(hex.n(), 7);
        assert_eq!((hex.coord(0, 0), hex.coord(0, 1)), (0.0, 0.0));
        assert!((hex.coord(1, 0) - 1.0).abs() < 1e-15 && hex.coord(1, 1).abs() < 1e-15);
        assert!((hex.coord(2, 0) - 0.5).abs() < 1e-15);
        assert!((hex.coord(2, 1) - 3f64.sqrt() / 2.0).abs() < 1e-15);

        let side = 0.8;
        let hex = hexagon_formation(side, 2).unwrap();
        let dist = pairwise_distance(&hex, Metric::L2);
        for t in 1..=6 {
            assert!((dist[(0, t)] - side).abs() < 1e-14);
            let next = t % 6 + 1;
            assert!((dist[(t, next)] - side).abs() < 1e-14);
        }
        assert!(hexagon_formation(0.0, 2).is_err());
        assert!(hexagon_formation(1.0, 1).is_err());
    }

    #[test]
    fn coincident_formation_targets() {
        let cfg = RobotConfiguration::new(DMatrix::from_element(4, 2, 0.5)).unwrap();
        let params = ControllerParams::new(1.0, Metric::L1, 4);
        let t = target_from_formation(&cfg, &params, 4).unwrap();
        for (got, want) in t.moments().iter().zip(coincident_moments(4, 4)) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(coincident_moments(3, 2), vec![0.0, 2.0]);
    }

    #[test]
    fn formation_targets_agree_with_their_spectrum() {
        let params = ControllerParams::new(1.0, Metric::L2, 5);
        for seed in 0..5 {
            let cfg = random_geometric_config(6, 2, seed).unwrap();
            let t = target_from_formation(&cfg, &params, 5).unwrap();
            let again = moments_from_eigenvalues(t.reference_eigenvalues().unwrap(), 5).unwrap();
            for (a, b) in again.values().iter().zip(t.moments()) {
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn presets_carry_published_targets() {
        let hex = preset("hexagon7").unwrap();
        assert_eq!(hex.targets.moments(), &published::HEXAGON7_MOMENTS);
        assert_eq!(hex.params.metric, Metric::L1);
        assert_eq!(hex.n(), 7);
        let rgg = preset("rgg10").unwrap();
        assert_eq!(rgg.targets.moments(), &[0.0, 3.11, 13.45, 71.60]);
        assert_eq!(rgg.n(), 10);
        assert!(matches!(preset("square4"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn published_pairs_are_consistent() {
        for (eigs, moments) in [
            (&published::HEXAGON7_EIGENVALUES[..], &published::HEXAGON7_MOMENTS[..]),
            (&published::RGG10_EIGENVALUES[..], &published::RGG10_MOMENTS[..]),
        ] {
            let t = TargetSpectrum::new(moments.to_vec(), Some(eigs.to_vec())).unwrap();
            let mut v = Vec::new();
            t.violations(&mut v);
            assert!(v.is_empty(), "{v:?}");
        }
    }

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            assert!(validate_scenario(preset(name).unwrap()).is_ok(), "{name}");
        }
    }

    #[test]
    fn validation_reports_violations() {
        let mut sc = preset("hexagon7").unwrap();
        sc.params.order = 8;
        let errs = validate_scenario(sc).unwrap_err();
        assert!(errs.iter().any(|v| v.field == "s"));

        let mut sc = preset("hexagon7").unwrap();
        let mut m = sc.targets.moments().to_vec();
        m[0] = 0.1;
        sc.targets = TargetSpectrum::new(m, None).unwrap();
        let errs = validate_scenario(sc).unwrap_err();
        assert!(errs.iter().any(|v| v.field == "targets.moments[0]"));

        let mut sc = preset("hexagon7").unwrap();
        let mut m = sc.targets.moments().to_vec();
        m[1] = 6.0;
        sc.targets = TargetSpectrum::new(m, None).unwrap();
        let errs = validate_scenario(sc).unwrap_err();
        assert!(errs.iter().any(|v| v.constraint.contains("unrealizable")));

        let mut sc = preset("rgg10").unwrap();
        sc.settings.min_step = sc.settings.dt * 2.0;
        sc.settings.record_every = 0;
        let errs = validate_scenario(sc).unwrap_err();
        assert!(errs.iter().any(|v| v.field == "dt"));
        assert!(errs.iter().any(|v| v.field == "record_every"));
    }
}

//! JSON scenario files and `key=value` overrides.
//!
//! ```json
//! {
//!   "name": "hexagon7", "n": 7, "d": 2, "seed": 7,
//!   "c": 1.0, "z": 1, "s": 7,
//!   "targets": { "moments": [0, 0.53, 0.64, 1.22, 2.02, 3.47, 5.90] },
//!   "reference_eigenvalues": [-0.51, -0.47, -0.40, -0.40, 0.05, 0.05, 1.70]
//! }
//! ```
//!
//! Exactly one of `seed` and `positions` gives the start. Targets are either
//! explicit `moments` (at least `s` values; extras are ignored) or a
//! `formation` whose moments become the targets. Omitted numeric fields take
//! the library defaults. Unknown fields are rejected.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dynamics::SimulationSettings;
use crate::error::{Error, Result};
use crate::gradient::{relative_epsilons, ControllerParams, DEFAULT_BARRIER_MARGIN};
use crate::network::{Metric, RobotConfiguration};
use crate::scenarios::{
    hexagon_formation, published, random_geometric_config, target_from_formation,
    validate_scenario, InitialCondition, Scenario, TargetSpectrum, Violation, HEXAGON7_SEED,
    RGG10_SEED,
};

/// Relative band [`ScenarioFile::round_trip`] scenarios must reach.
pub const ROUND_TRIP_TOLERANCE: f64 = 5e-3;

fn default_c() -> f64 {
    1.0
}

fn default_metric() -> Metric {
    Metric::L1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub n: usize,
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_metric")]
    pub z: Metric,
    pub s: usize,
    /// `eps_1 .. eps_s`; defaults to `relative_epsilons(targets, barrier_margin)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default = "default_true")]
    pub barrier_enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_tolerance: Option<f64>,
    /// Relative barrier equilibrium margin used when `epsilons` is omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier_margin: Option<f64>,
    pub targets: TargetsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_eigenvalues: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum TargetsSpec {
    Moments(Vec<f64>),
    Formation(Formation),
}

/// Exemplar formation whose spectrum is used as the target. Its decay
/// constant and metric are the scenario's own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "parameters", rename_all = "lowercase")]
pub enum Formation {
    Hexagon { side_length: f64 },
    Random { seed: u64 },
    Positions { positions: Vec<Vec<f64>> },
}

impl Formation {
    pub fn configuration(&self, n: usize, d: usize) -> Result<RobotConfiguration> {
        match self {
            Formation::Hexagon { side_length } => hexagon_formation(*side_length, d),
            Formation::Random { seed } => random_geometric_config(n, d, *seed),
            Formation::Positions { positions } => RobotConfiguration::from_rows(positions),
        }
    }
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfiguration(e.to_string()))
    }

    /// Parses `text`, applies `overrides` to the raw JSON, then deserializes.
    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfiguration(e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_json::from_value(value).map_err(|e| Error::InvalidConfiguration(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario files always serialize")
    }

    /// Applies overrides to an already-parsed file.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut value = serde_json::to_value(self).expect("scenario files always serialize");
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_json::from_value(value).map_err(|e| Error::InvalidConfiguration(e.to_string()))
    }

    /// File form of a named preset.
    ///
    /// `hexagon7` tracks all seven published moments; `rgg10` tracks the first
    /// four and carries the six published values, so `s` may be raised to 6.
    pub fn preset(name: &str) -> Result<Self> {
        let (n, seed, s, moments, eigs): (usize, u64, usize, Vec<f64>, Vec<f64>) = match name {
            "hexagon7" => (
                7,
                HEXAGON7_SEED,
                7,
                published::HEXAGON7_MOMENTS.to_vec(),
                published::HEXAGON7_EIGENVALUES.to_vec(),
            ),
            "rgg10" => (
                10,
                RGG10_SEED,
                4,
                published::RGG10_MOMENTS.to_vec(),
                published::RGG10_EIGENVALUES.to_vec(),
            ),
            other => return Err(Error::UnknownPreset(other.to_string())),
        };
        Ok(Self {
            name: name.to_string(),
            n,
            d: 2,
            seed: Some(seed),
            positions: None,
            c: default_c(),
            z: Metric::L1,
            s,
            epsilons: None,
            barrier_enabled: true,
            dt: None,
            max_time: None,
            cost_tolerance: None,
            min_step: None,
            record_every: None,
            moment_tolerance: None,
            barrier_margin: None,
            targets: TargetsSpec::Moments(moments),
            reference_eigenvalues: Some(eigs),
        })
    }

    /// Self-consistent scenario: targets are the first `s` moments of the
    /// uniform formation drawn with `formation_seed`, and the start is drawn
    /// with `start_seed`, then rearranged coordinate by coordinate into the
    /// formation's ordering of robots. Stops once every moment is within
    /// `0.5%` above its target.
    pub fn round_trip(
        n: usize,
        d: usize,
        s: usize,
        z: Metric,
        formation_seed: u64,
        start_seed: u64,
    ) -> Result<Self> {
        let formation = random_geometric_config(n, d, formation_seed)?;
        let start = random_geometric_config(n, d, start_seed)?.ordered_like(&formation)?;
        Ok(Self {
            name: format!("round-trip-n{n}-d{d}-s{s}-{formation_seed}-{start_seed}"),
            n,
            d,
            seed: None,
            positions: Some(start.to_rows()),
            c: default_c(),
            z,
            s,
            epsilons: None,
            barrier_enabled: true,
            dt: None,
            max_time: None,
            cost_tolerance: None,
            min_step: None,
            record_every: None,
            moment_tolerance: Some(ROUND_TRIP_TOLERANCE),
            barrier_margin: None,
            targets: TargetsSpec::Formation(Formation::Random {
                seed: formation_seed,
            }),
            reference_eigenvalues: None,
        })
    }

    /// Builds and validates the scenario.
    pub fn into_scenario(self) -> std::result::Result<Scenario, Vec<Violation>> {
        let mut violations = Vec::new();
        let fail = |field: &str, msg: String| Violation {
            field: field.to_string(),
            constraint: msg,
        };

        let initial = match (&self.seed, &self.positions) {
            (Some(seed), None) => Some(InitialCondition::Random {
                n: self.n,
                d: self.d,
                seed: *seed,
            }),
            (None, Some(rows)) => match RobotConfiguration::from_rows(rows) {
                Ok(cfg) if cfg.n() == self.n && cfg.d() == self.d => {
                    Some(InitialCondition::Positions(cfg))
                }
                Ok(cfg) => {
                    violations.push(fail(
                        "positions",
                        format!("{}x{} positions for n = {}, d = {}", cfg.n(), cfg.d(), self.n, self.d),
                    ));
                    None
                }
                Err(e) => {
                    violations.push(fail("positions", e.to_string()));
                    None
                }
            },
            _ => {
                violations.push(fail("seed", "exactly one of seed and positions must be given".into()));
                None
            }
        };

        let mut params = ControllerParams::new(self.c, self.z, self.s);
        params.barrier_enabled = self.barrier_enabled;

        let defaults = SimulationSettings::default();
        let settings = SimulationSettings {
            dt: self.dt.unwrap_or(defaults.dt),
            max_time: self.max_time.unwrap_or(defaults.max_time),
            cost_tolerance: self.cost_tolerance.unwrap_or(defaults.cost_tolerance),
            min_step: self.min_step.unwrap_or(defaults.min_step),
            record_every: self.record_every.unwrap_or(defaults.record_every),
            moment_tolerance: self.moment_tolerance.unwrap_or(defaults.moment_tolerance),
        };

        let targets = match &self.targets {
            TargetsSpec::Moments(m) => {
                if m.len() < self.s {
                    violations.push(fail(
                        "targets.moments",
                        format!("{} target moments for truncation order {}", m.len(), self.s),
                    ));
                    None
                } else if self.s == 0 {
                    violations.push(fail("s", "truncation order must be at least 2".into()));
                    None
                } else {
                    TargetSpectrum::new(m[..self.s].to_vec(), self.reference_eigenvalues.clone())
                        .map_err(|e| violations.push(fail("targets.moments", e.to_string())))
                        .ok()
                }
            }
            TargetsSpec::Formation(f) => {
                let built = f.configuration(self.n, self.d).and_then(|cfg| {
                    if cfg.n() != self.n || cfg.d() != self.d {
                        return Err(Error::DimensionMismatch(format!(
                            "formation has {} robots in {} dimensions, scenario has n = {}, d = {}",
                            cfg.n(),
                            cfg.d(),
                            self.n,
                            self.d
                        )));
                    }
                    let mut p = ControllerParams::new(self.c, self.z, self.s);
                    p.barrier_enabled = false;
                    target_from_formation(&cfg, &p, self.s)
                });
                match built {
                    Ok(t) => Some(t),
                    Err(e) => {
                        violations.push(fail("targets.formation", e.to_string()));
                        None
                    }
                }
            }
        };

        let (Some(initial), Some(targets)) = (initial, targets) else {
            return Err(violations);
        };
        if !violations.is_empty() {
            return Err(violations);
        }
        params.epsilons = match &self.epsilons {
            Some(eps) => eps.clone(),
            None => relative_epsilons(&targets, self.barrier_margin.unwrap_or(DEFAULT_BARRIER_MARGIN)),
        };
        validate_scenario(Scenario {
            name: self.name,
            initial,
            params,
            targets,
            settings,
        })
    }
}

/// Applies one `dotted.path=value` override to a JSON document. The value is
/// parsed as JSON when possible and kept as a string otherwise; missing
/// intermediate objects are created.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::InvalidConfiguration(format!("override '{assignment}' is not key=value"))
    })?;
    let path = path.trim();
    if path.is_empty() {
        return Err(Error::InvalidConfiguration(format!(
            "override '{assignment}' has an empty key"
        )));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));

    let mut node = doc;
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        let last = parts.peek().is_none();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| {
                    Error::InvalidConfiguration(format!("'{part}' in '{path}' is not an index"))
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    Error::InvalidConfiguration(format!("index {idx} out of range ({len}) in '{path}'"))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(Error::InvalidConfiguration(format!(
                    "cannot descend into '{part}' of '{path}'"
                )))
            }
        };
    }
    unreachable!("split always yields at least one part")
}

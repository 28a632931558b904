//! Experiment configuration: loading, overrides and validation.
//!
//! Numbers may be written as decimals or as fractions in strings
//! (`"81/49"`), both in config files and in `--set` values.

use std::fmt;
use std::path::PathBuf;

use capdrop::analysis::{EstimatorConfig, Ring};
use capdrop::sim::detector::VirtualDetector;
use capdrop::sim::presets::FdParams;
use capdrop::sim::{Corridor, Junction, LaneDropSetup, Link, OnRamp, RingSetup};
use capdrop::{FundamentalDiagram, Schedule};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Riemann,
    PerturbedRiemann,
    RingBistability,
    Mfd,
    Statics,
    EstimateDrop,
    CustomCorridor,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Riemann => "riemann",
            ExperimentKind::PerturbedRiemann => "perturbed-riemann",
            ExperimentKind::RingBistability => "ring-bistability",
            ExperimentKind::Mfd => "mfd",
            ExperimentKind::Statics => "statics",
            ExperimentKind::EstimateDrop => "estimate-drop",
            ExperimentKind::CustomCorridor => "custom-corridor",
        }
    }

    pub fn simulates(self) -> bool {
        matches!(
            self,
            ExperimentKind::PerturbedRiemann
                | ExperimentKind::RingBistability
                | ExperimentKind::Statics
                | ExperimentKind::CustomCorridor
        )
    }

    fn default_duration(self) -> f64 {
        match self {
            ExperimentKind::RingBistability => 150.0,
            ExperimentKind::PerturbedRiemann => 1500.0,
            ExperimentKind::Statics => 3000.0,
            _ => 600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiemannConfig {
    pub fd: FdParams,
    pub lanes_up: u32,
    pub lanes_down: u32,
    pub c_star: f64,
    pub k_up: f64,
    pub k_down: f64,
}

impl Default for RiemannConfig {
    fn default() -> Self {
        RiemannConfig {
            fd: FdParams::default(),
            lanes_up: 4,
            lanes_down: 3,
            c_star: 81.0 / 49.0,
            k_up: 3.5 / 49.0,
            k_down: 3.3 / 49.0,
        }
    }
}

/// Riemann data on the open lane drop with a bump of length `length` just
/// upstream of the drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    pub k1: f64,
    pub k0: f64,
    pub k2: f64,
    pub length: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig { k1: 2.8 / 49.0, k0: 3.5 / 49.0, k2: 2.8 / 49.0, length: 70.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaticsConfig {
    pub d0: f64,
    pub s0: f64,
    /// Grid size per axis for the observable diagram; 0 skips it.
    pub grid: usize,
}

impl Default for StaticsConfig {
    fn default() -> Self {
        StaticsConfig { d0: 100.0 / 49.0, s0: 90.0 / 49.0, grid: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfdConfig {
    pub samples: usize,
}

impl Default for MfdConfig {
    fn default() -> Self {
        MfdConfig { samples: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub length: f64,
    pub lanes: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum JunctionSpec {
    Standard,
    CapacityDrop {
        c_star: f64,
    },
    /// On-ramp merge; the merge capacity is that of the downstream link.
    Merge {
        alpha: f64,
        delta: f64,
        /// `(start_time, veh/s)` breakpoints.
        ramp_arrivals: Vec<(f64, f64)>,
        ramp_capacity: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundarySpec {
    Ring,
    Open {
        demand: Vec<(f64, f64)>,
        supply: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSpec {
    pub base: f64,
    /// `(x0, x1, k)` overrides, positions in metres from the corridor start.
    pub pieces: Vec<(f64, f64, f64)>,
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec { base: 0.0, pieces: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorSpec {
    #[serde(default)]
    pub fd: FdParams,
    pub links: Vec<LinkSpec>,
    pub junctions: Vec<JunctionSpec>,
    pub boundary: BoundarySpec,
    pub dx: f64,
    pub dt: f64,
    #[serde(default)]
    pub initial: InitialSpec,
}

impl CorridorSpec {
    pub fn build(&self) -> capdrop::Result<(Corridor, Vec<f64>)> {
        let links = self
            .links
            .iter()
            .map(|l| Ok(Link { length: l.length, fd: self.fd.diagram(l.lanes)? }))
            .collect::<capdrop::Result<Vec<_>>>()?;
        let junctions = self
            .junctions
            .iter()
            .enumerate()
            .map(|(j, spec)| {
                Ok(match spec {
                    JunctionSpec::Standard => Junction::standard(),
                    JunctionSpec::CapacityDrop { c_star } => Junction::capacity_drop(*c_star),
                    JunctionSpec::Merge { alpha, delta, ramp_arrivals, ramp_capacity } => {
                        let c3 = links.get(j + 1).or(links.first()).map_or(0.0, |l| l.fd.capacity());
                        let ramp = OnRamp {
                            arrivals: Schedule::piecewise(ramp_arrivals.clone())?,
                            capacity: *ramp_capacity,
                        };
                        Junction::merge(*alpha, *delta, c3, ramp)
                    }
                })
            })
            .collect::<capdrop::Result<Vec<_>>>()?;
        let corridor = match &self.boundary {
            BoundarySpec::Ring => Corridor::ring(links, junctions, self.dx, self.dt)?,
            BoundarySpec::Open { demand, supply } => Corridor::open(
                links,
                junctions,
                Schedule::piecewise(demand.clone())?,
                Schedule::piecewise(supply.clone())?,
                self.dx,
                self.dt,
            )?,
        };
        let initial = corridor.cell_average(self.initial.base, &self.initial.pieces);
        Ok((corridor, initial))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seconds; `None` picks a per-experiment default.
    pub duration: Option<f64>,
    /// Density snapshot cadence in steps; `None` aims for about 200 frames.
    pub snapshot_every: Option<usize>,
    /// Extra interfaces to record; presets add their junction interfaces.
    pub tagged: Vec<usize>,
    pub detectors: Vec<VirtualDetector>,
    pub averaging_fraction: f64,
    pub convergence_tol: f64,
    pub convergence_steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            duration: None,
            snapshot_every: None,
            tagged: Vec::new(),
            detectors: Vec::new(),
            averaging_fraction: 0.2,
            convergence_tol: 1e-8,
            convergence_steps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Dotted config path, e.g. `epsilon` or `ring.c_star`.
    pub parameter: String,
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

impl SweepConfig {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.from];
        }
        let n = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| self.from + (self.to - self.from) * i as f64 / n)
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub ring: RingSetup,
    /// Ring perturbation amplitude, veh/m.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub lane_drop: LaneDropSetup,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub statics: StaticsConfig,
    #[serde(default)]
    pub riemann: RiemannConfig,
    #[serde(default)]
    pub mfd: MfdConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    /// Detector CSV for `estimate-drop`.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub corridor: Option<CorridorSpec>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

fn default_epsilon() -> f64 {
    0.3 / 49.0
}

impl ExperimentConfig {
    pub fn duration(&self) -> f64 {
        self.run.duration.unwrap_or_else(|| self.kind.default_duration())
    }

    /// Builds the corridor and initial field of a simulating experiment.
    pub fn scenario(&self) -> capdrop::Result<Scenario> {
        let (corridor, initial, tagged) = match self.kind {
            ExperimentKind::RingBistability => {
                let (c, k) = self.ring.build(self.epsilon)?;
                let drop = self.ring.drop_interface();
                let mid = c.junction_interface(0);
                (c, k, vec![drop, mid])
            }
            ExperimentKind::PerturbedRiemann => {
                let p = &self.perturbation;
                let (c, k) = self.lane_drop.perturbed_riemann(p.k1, p.k0, p.k2, p.length)?;
                let m = c.interface_count();
                (c, k, vec![0, self.lane_drop.drop_interface(), m - 1])
            }
            ExperimentKind::Statics => {
                let (c, k) = self.lane_drop.open_statics(self.statics.d0, self.statics.s0)?;
                let m = c.interface_count();
                (c, k, vec![0, self.lane_drop.drop_interface(), m - 1])
            }
            ExperimentKind::CustomCorridor => {
                let spec = self
                    .corridor
                    .as_ref()
                    .ok_or_else(|| capdrop::Error::Parameter("custom-corridor needs a corridor block".into()))?;
                let (c, k) = spec.build()?;
                let tagged = (0..c.junctions().len()).map(|j| c.junction_interface(j)).collect();
                (c, k, tagged)
            }
            other => {
                return Err(capdrop::Error::Parameter(format!("{} does not simulate a corridor", other.name())));
            }
        };
        let mut tagged: Vec<usize> = tagged
            .into_iter()
            .chain(self.run.tagged.iter().copied())
            .chain(self.run.detectors.iter().map(|d| d.interface))
            .collect();
        tagged.sort_unstable();
        tagged.dedup();
        Ok(Scenario { corridor, initial, tagged })
    }

    /// Every constraint violation, each with its config path.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Violations::default();
        let kind = self.kind;
        match kind {
            ExperimentKind::RingBistability | ExperimentKind::Mfd => {
                check_fd(&mut v, "ring.fd", &self.ring.fd);
                v.check("ring.lanes_1", self.ring.lanes_1 > 0, "must be at least 1");
                v.check("ring.lanes_2", self.ring.lanes_2 > 0, "must be at least 1");
                v.check("ring.length", self.ring.length > 0.0, "must be positive");
                v.check(
                    "ring.l1",
                    self.ring.l1 > 0.0 && self.ring.l1 < self.ring.length,
                    format!("must lie strictly inside (0, {})", self.ring.length),
                );
                v.check("ring.c_star", self.ring.c_star > 0.0, "must be positive");
                if kind == ExperimentKind::RingBistability {
                    check_numerics(&mut v, "ring", &self.ring.fd, self.ring.dx, self.ring.dt);
                    v.check("epsilon", self.epsilon >= 0.0, "must be non-negative");
                } else {
                    v.check("mfd.samples", self.mfd.samples >= 2, "must be at least 2");
                    if v.is_empty() {
                        let ring = self.ring.fd.diagram(self.ring.lanes_1).and_then(|fd1| {
                            let fd2 = self.ring.fd.diagram(self.ring.lanes_2)?;
                            Ring::new(fd1, fd2, self.ring.l1, self.ring.length, self.ring.c_star)
                        });
                        if let Err(e) = ring {
                            v.push("ring", e.to_string());
                        }
                    }
                }
            }
            ExperimentKind::PerturbedRiemann | ExperimentKind::Statics => {
                let ld = &self.lane_drop;
                check_fd(&mut v, "lane_drop.fd", &ld.fd);
                v.check("lane_drop.lanes_up", ld.lanes_up > 0, "must be at least 1");
                v.check("lane_drop.lanes_down", ld.lanes_down > 0, "must be at least 1");
                v.check("lane_drop.c_star", ld.c_star > 0.0, "must be positive");
                v.check("lane_drop.upstream_length", ld.upstream_length > 0.0, "must be positive");
                v.check("lane_drop.downstream_length", ld.downstream_length > 0.0, "must be positive");
                check_numerics(&mut v, "lane_drop", &ld.fd, ld.dx, ld.dt);
                if kind == ExperimentKind::Statics {
                    v.check("statics.d0", self.statics.d0 >= 0.0, "must be non-negative");
                    v.check("statics.s0", self.statics.s0 >= 0.0, "must be non-negative");
                    v.check("statics.grid", self.statics.grid != 1, "must be 0 (off) or at least 2");
                } else {
                    v.check("perturbation.length", self.perturbation.length >= 0.0, "must be non-negative");
                }
            }
            ExperimentKind::Riemann => {
                let r = &self.riemann;
                check_fd(&mut v, "riemann.fd", &r.fd);
                v.check("riemann.lanes_up", r.lanes_up > 0, "must be at least 1");
                v.check("riemann.lanes_down", r.lanes_down > 0, "must be at least 1");
                v.check("riemann.c_star", r.c_star > 0.0, "must be positive");
                v.check("riemann.k_up", r.k_up >= 0.0, "must be non-negative");
                v.check("riemann.k_down", r.k_down >= 0.0, "must be non-negative");
            }
            ExperimentKind::EstimateDrop => {
                let e = &self.estimator;
                v.check("input", self.input.is_some(), "a detector CSV is required");
                v.check("estimator.g_ft", e.g_ft > 0.0, "must be positive");
                v.check("estimator.lanes", e.lanes > 0, "must be at least 1");
                v.check("estimator.window_s", e.window_s > 0.0, "must be positive");
                v.check("estimator.cv_threshold", e.cv_threshold > 0.0, "must be positive");
                v.check(
                    "estimator.queued_speed_ratio",
                    e.queued_speed_ratio > 0.0 && e.queued_speed_ratio < 1.0,
                    "must lie in (0, 1)",
                );
                v.check(
                    "estimator.free_speed_percentile",
                    e.free_speed_percentile > 0.0 && e.free_speed_percentile <= 1.0,
                    "must lie in (0, 1]",
                );
            }
            ExperimentKind::CustomCorridor => match &self.corridor {
                None => v.push("corridor", "required for custom-corridor"),
                Some(c) => {
                    check_fd(&mut v, "corridor.fd", &c.fd);
                    check_numerics(&mut v, "corridor", &c.fd, c.dx, c.dt);
                    v.check("corridor.links", !c.links.is_empty(), "needs at least one link");
                    for (i, l) in c.links.iter().enumerate() {
                        v.check(format!("corridor.links[{i}].length"), l.length > 0.0, "must be positive");
                        v.check(format!("corridor.links[{i}].lanes"), l.lanes > 0, "must be at least 1");
                    }
                    let need = match c.boundary {
                        BoundarySpec::Ring => c.links.len(),
                        BoundarySpec::Open { .. } => c.links.len().saturating_sub(1),
                    };
                    v.check(
                        "corridor.junctions",
                        c.junctions.len() == need,
                        format!("{} links need {need} junctions, got {}", c.links.len(), c.junctions.len()),
                    );
                }
            },
        }

        if kind.simulates() {
            let r = &self.run;
            if let Some(d) = r.duration {
                v.check("run.duration", d >= 0.0 && d.is_finite(), "must be a non-negative number of seconds");
            }
            v.check("run.snapshot_every", r.snapshot_every != Some(0), "must be at least 1");
            v.check(
                "run.averaging_fraction",
                r.averaging_fraction > 0.0 && r.averaging_fraction <= 1.0,
                "must lie in (0, 1]",
            );
            v.check("run.convergence_tol", r.convergence_tol > 0.0, "must be positive");
            v.check("run.convergence_steps", r.convergence_steps > 0, "must be at least 1");
            for (i, d) in r.detectors.iter().enumerate() {
                v.check(format!("run.detectors[{i}].interval_s"), d.interval_s > 0.0, "must be positive");
                v.check(format!("run.detectors[{i}].g_ft"), d.g_ft > 0.0, "must be positive");
            }
            // interface indices and the remaining model checks need the built corridor
            if v.is_empty() {
                match self.scenario() {
                    Err(e) => v.push(self.scenario_path(), e.to_string()),
                    Ok(s) => {
                        let m = s.corridor.interface_count();
                        for (i, &t) in r.tagged.iter().enumerate() {
                            v.check(format!("run.tagged[{i}]"), t < m, format!("interface {t} does not exist (corridor has {m})"));
                        }
                        for (i, d) in r.detectors.iter().enumerate() {
                            v.check(
                                format!("run.detectors[{i}].interface"),
                                d.interface < m && (d.interface > 0 || s.corridor.is_ring()),
                                format!("interface {} has no upstream cell in a corridor of {m} interfaces", d.interface),
                            );
                        }
                    }
                }
            }
        }

        if let Some(s) = &self.sweep {
            v.check("sweep.parameter", !s.parameter.is_empty(), "must name a config field");
            v.check("sweep.count", s.count >= 1, "the sweep range is empty");
            v.check("sweep.from", s.from.is_finite(), "must be finite");
            v.check("sweep.to", s.to.is_finite(), "must be finite");
            if !s.parameter.is_empty() {
                let echo = serde_json::to_value(self).expect("config serializes");
                match lookup(&echo, &s.parameter) {
                    Some(Value::Number(_)) | Some(Value::Null) => {}
                    Some(_) => v.push("sweep.parameter", format!("`{}` is not numeric", s.parameter)),
                    None => v.push("sweep.parameter", format!("`{}` is not a config field", s.parameter)),
                }
            }
        }
        v.0
    }

    fn scenario_path(&self) -> &'static str {
        match self.kind {
            ExperimentKind::RingBistability => "ring",
            ExperimentKind::CustomCorridor => "corridor",
            ExperimentKind::Statics => "statics",
            _ => "perturbation",
        }
    }
}

pub struct Scenario {
    pub corridor: Corridor,
    pub initial: Vec<f64>,
    pub tagged: Vec<usize>,
}

fn check_fd(v: &mut Violations, path: &str, fd: &FdParams) {
    v.check(format!("{path}.free_flow_speed"), fd.free_flow_speed > 0.0, "must be positive");
    v.check(format!("{path}.time_gap"), fd.time_gap > 0.0, "must be positive");
    v.check(format!("{path}.jam_density_per_lane"), fd.jam_density_per_lane > 0.0, "must be positive");
}

fn check_numerics(v: &mut Violations, path: &str, fd: &FdParams, dx: f64, dt: f64) {
    v.check(format!("{path}.dx"), dx > 0.0, "must be positive");
    v.check(format!("{path}.dt"), dt > 0.0, "must be positive");
    if dx > 0.0 && dt > 0.0 && fd.free_flow_speed > 0.0 {
        let bound = dx / fd.free_flow_speed;
        v.check(
            format!("{path}.dt"),
            dt <= bound * (1.0 + 1e-12),
            format!("CFL bound violated: v* dt must not exceed dx, so dt <= {bound} s (got {dt})"),
        );
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Default)]
struct Violations(Vec<Violation>);

impl Violations {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation { path: path.into(), message: message.into() });
    }

    fn check(&mut self, path: impl Into<String>, ok: bool, message: impl Into<String>) {
        if !ok {
            self.push(path, message);
        }
    }

    fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Syntax(String),
    /// Unknown field or wrong type, at a path.
    Schema(Violation),
    Override(String),
    Constraints(Vec<Violation>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Syntax(m) => write!(f, "config syntax error: {m}"),
            ConfigError::Schema(v) => write!(f, "config error at {v}"),
            ConfigError::Override(m) => write!(f, "bad override: {m}"),
            ConfigError::Constraints(vs) => {
                write!(f, "config has {} constraint violation(s):", vs.len())?;
                for v in vs {
                    write!(f, "\n  {v}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parses a decimal or a fraction `a/b`.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let x = match s.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
            if b == 0.0 {
                return None;
            }
            a / b
        }
        None => s.parse().ok()?,
    };
    x.is_finite().then_some(x)
}

/// Turns numeric strings into JSON numbers, leaving identifier-like fields
/// alone.
fn normalize(v: &mut Value) {
    match v {
        Value::Object(map) => {
            for (key, item) in map.iter_mut() {
                if matches!(key.as_str(), "station_id" | "parameter" | "kind" | "dir" | "input") {
                    continue;
                }
                normalize(item);
            }
        }
        Value::Array(items) => items.iter_mut().for_each(normalize),
        Value::String(s) => {
            if let Some(n) = parse_number(s).and_then(serde_json::Number::from_f64) {
                *v = Value::Number(n);
            }
        }
        _ => {}
    }
}

fn lookup<'a>(v: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(v, |v, key| v.as_object()?.get(key))
}

/// Sets `path` (dotted) to `value`, creating intermediate objects.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), ConfigError> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::Override(format!("`{path}` is not a dotted field path")));
    }
    let mut cur = root;
    for (i, key) in keys.iter().enumerate() {
        let obj = match cur {
            Value::Object(map) => map,
            Value::Null => {
                *cur = Value::Object(Default::default());
                cur.as_object_mut().expect("just created")
            }
            _ => {
                return Err(ConfigError::Override(format!(
                    "`{}` is not an object",
                    keys[..i].join(".")
                )))
            }
        };
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(key.to_string()).or_insert(Value::Null);
    }
    unreachable!("path has at least one key")
}

/// `path=value`; the value is read as JSON when it parses, else as a string.
pub fn parse_override(text: &str) -> Result<(String, Value), ConfigError> {
    let (path, raw) = text
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(format!("`{text}` is not of the form path=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path.trim().to_string(), value))
}

pub fn parse_value(text: &str) -> Result<Value, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))
}

/// Normalizes, deserializes and validates a config tree.
pub fn from_value(mut value: Value) -> Result<ExperimentConfig, ConfigError> {
    normalize(&mut value);
    let config: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Schema(Violation { path, message: e.into_inner().to_string() })
    })?;
    let violations = config.violations();
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Constraints(violations))
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    from_value(parse_value(text)?)
}

pub fn preset(name: &str) -> Option<&'static str> {
    Some(match name {
        "ring-bistability" => include_str!("../presets/ring_bistability.json"),
        "perturbed-riemann" => include_str!("../presets/perturbed_riemann.json"),
        "statics" => include_str!("../presets/statics.json"),
        "mfd" => include_str!("../presets/mfd.json"),
        "riemann" => include_str!("../presets/riemann.json"),
        "merge-corridor" => include_str!("../presets/merge_corridor.json"),
        _ => return None,
    })
}

pub const PRESETS: &[&str] = &["ring-bistability", "perturbed-riemann", "statics", "mfd", "riemann", "merge-corridor"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions() {
        assert_eq!(parse_number("81/49"), Some(81.0 / 49.0));
        assert_eq!(parse_number(" 0.3 / 49 "), Some(0.3 / 49.0));
        assert_eq!(parse_number("1e-3"), Some(1e-3));
        assert_eq!(parse_number("1/0"), None);
        assert_eq!(parse_number("ring"), None);
    }

    #[test]
    fn set_path_creates_objects() {
        let mut v = serde_json::json!({"kind": "mfd"});
        set_path(&mut v, "ring.c_star", Value::from(1.5)).unwrap();
        assert_eq!(v["ring"]["c_star"], 1.5);
        assert!(set_path(&mut v, "kind.x", Value::from(1)).is_err());
        assert!(set_path(&mut v, "a..b", Value::from(1)).is_err());
    }

    #[test]
    fn presets_parse() {
        for name in PRESETS {
            parse_config(preset(name).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn violations_are_collected() {
        let err = parse_config(r#"{"kind": "ring-bistability", "ring": {"dt": 1.0, "lanes_1": 0}, "epsilon": -1}"#)
            .unwrap_err();
        let ConfigError::Constraints(vs) = err else { panic!("{err}") };
        let paths: Vec<&str> = vs.iter().map(|v| v.path.as_str()).collect();
        assert!(paths.contains(&"ring.dt"));
        assert!(paths.contains(&"ring.lanes_1"));
        assert!(paths.contains(&"epsilon"));
    }

    #[test]
    fn unknown_field_has_a_path() {
        let err = parse_config(r#"{"kind": "riemann", "riemann": {"k_upp": 0.1}}"#).unwrap_err();
        let ConfigError::Schema(v) = err else { panic!("{err}") };
        assert_eq!(v.path, "riemann.k_upp");
    }

    #[test]
    fn sweep_parameter_must_exist() {
        let err = parse_config(r#"{"kind": "ring-bistability", "sweep": {"parameter": "ring.nope", "from": 0, "to": 1, "count": 0}}"#)
            .unwrap_err();
        let ConfigError::Constraints(vs) = err else { panic!("{err}") };
        assert!(vs.iter().any(|v| v.path == "sweep.count"));
        assert!(vs.iter().any(|v| v.path == "sweep.parameter"));
    }
}

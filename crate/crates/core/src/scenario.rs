//! Scenario files: track, start state, planner, simulator and tracker settings in TOML.
//!
//! Parsing is strict: unknown keys are rejected and errors carry the offending line.

use std::path::Path as FsPath;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pmm_axis::{AxisBounds, AxisBoundsSet, PointState};
use crate::sim::{Environment, GateMotion, QuadParams, WindRegion};
use crate::tracker::{CascadeGains, ContouringConfig};
use crate::velocity_graph::{
    ConeGrid, Gate, PlannerConfig, DEFAULT_EPS, DEFAULT_H_RANDOM, DEFAULT_HORIZON, DEFAULT_MAX_ITER,
};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("{path}: line {line}: {message}")]
    Syntax { path: String, line: usize, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    pub track: TrackSpec,
    pub start: StartSpec,
    #[serde(default)]
    pub pmm: PmmSpec,
    #[serde(default)]
    pub cone: ConeSpec,
    #[serde(default)]
    pub planner: PlannerSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wind: Vec<WindSpec>,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default)]
    pub quad: QuadParamsSpec,
    #[serde(default)]
    pub tracker: ContouringConfig,
    #[serde(default)]
    pub cascade: CascadeGains,
    #[serde(default)]
    pub run: RunSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSpec {
    pub gates: Vec<GateSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub center: [f64; 3],
    pub exit_dir: [f64; 3],
    pub pass_radius: f64,
    /// Knots `[t, dx, dy, dz]` of the center displacement.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub motion: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSpec {
    pub p: [f64; 3],
    #[serde(default)]
    pub v: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PmmSpec {
    pub a_lo: [f64; 3],
    pub a_hi: [f64; 3],
}

impl Default for PmmSpec {
    fn default() -> Self {
        Self { a_lo: [-20.0, -20.0, -9.0], a_hi: [20.0, 20.0, 25.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConeSpec {
    pub v_max: f64,
    pub yaw_span_deg: f64,
    pub pitch_span_deg: f64,
    pub s: usize,
    pub h_random: usize,
}

impl Default for ConeSpec {
    fn default() -> Self {
        Self { v_max: 20.0, yaw_span_deg: 120.0, pitch_span_deg: 90.0, s: 3, h_random: DEFAULT_H_RANDOM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSpec {
    pub horizon: usize,
    pub eps: f64,
    pub max_iter: usize,
    pub lazy: bool,
}

impl Default for PlannerSpec {
    fn default() -> Self {
        Self { horizon: DEFAULT_HORIZON, eps: DEFAULT_EPS, max_iter: DEFAULT_MAX_ITER, lazy: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindSpec {
    pub box_min: [f64; 3],
    pub box_max: [f64; 3],
    pub force: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    pub dt: f64,
    pub control_hz: f64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self { dt: 1e-3, control_hz: 100.0 }
    }
}

/// Optional overrides of the vehicle parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadParamsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drag: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub laps: usize,
    /// s
    pub timeout: f64,
    pub replan_every: usize,
    /// Crossings of a gate plane farther than this from the center are not counted as attempts.
    pub capture_radius: f64,
    /// Spacing of the reference path samples in plan time, s.
    pub path_dt: f64,
    /// Replanning pauses while the reference is this close (in plan time) to its next gate, s.
    pub replan_freeze: f64,
    /// A new plan replaces the current reference only if it is faster to the last shared gate,
    /// or the vehicle has drifted this far from the reference, m.
    pub switch_deviation: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self { laps: 1, timeout: 30.0, replan_every: 1, capture_radius: 5.0, path_dt: 0.01, replan_freeze: 0.25, switch_deviation: 0.3 }
    }
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

impl Scenario {
    /// Parses and validates scenario text; `origin` names the source in diagnostics.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ParseError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| ParseError::Syntax {
            path: origin.to_string(),
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        scenario.validate().map_err(|message| ParseError::Invalid { path: origin.to_string(), message })?;
        Ok(scenario)
    }

    pub fn from_file(path: impl AsRef<FsPath>) -> Result<Self, ParseError> {
        let path = path.as_ref();
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io { path: origin.clone(), source })?;
        Self::from_toml_str(&text, &origin)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Checks every semantic constraint that the schema alone cannot express.
    pub fn validate(&self) -> Result<(), String> {
        if self.track.gates.is_empty() {
            return Err("track.gates: at least one gate is required".into());
        }
        if self.run.laps < 1 {
            return Err("run.laps must be at least 1".into());
        }
        if self.run.replan_every < 1 {
            return Err("run.replan_every must be at least 1".into());
        }
        if !(self.run.timeout > 0.0 && self.run.capture_radius > 0.0 && self.run.path_dt > 0.0) {
            return Err("run.timeout, run.capture_radius and run.path_dt must be positive".into());
        }
        if !(self.run.replan_freeze >= 0.0 && self.run.switch_deviation >= 0.0) {
            return Err("run.replan_freeze and run.switch_deviation must be nonnegative".into());
        }
        if !(self.sim.dt > 0.0 && self.sim.control_hz > 0.0) {
            return Err("sim.dt and sim.control_hz must be positive".into());
        }
        let ratio = 1.0 / (self.sim.control_hz * self.sim.dt);
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err("sim: control period must be a whole number of sim steps".into());
        }
        self.bounds().map_err(|e| format!("pmm: {e}"))?;
        self.gates().map_err(|e| format!("track.gates: {e}"))?;
        self.cone_grid().validate().map_err(|e| format!("cone: {e}"))?;
        if self.cone.h_random < 1 {
            return Err("cone.h_random must be at least 1".into());
        }
        if self.planner.horizon < 1 || self.planner.max_iter < 1 {
            return Err("planner.horizon and planner.max_iter must be at least 1".into());
        }
        if !(self.planner.eps > 0.0 && self.planner.eps <= 1.0) {
            return Err("planner.eps must lie in (0, 1]".into());
        }
        self.environment().map_err(|e| format!("wind: {e}"))?;
        self.quad_params().validate().map_err(|e| format!("quad: {e}"))?;
        self.tracker.validate().map_err(|e| format!("tracker: {e}"))?;
        Ok(())
    }

    pub fn bounds(&self) -> Result<AxisBoundsSet, crate::pmm_axis::AxisError> {
        Ok([
            AxisBounds::new(self.pmm.a_lo[0], self.pmm.a_hi[0])?,
            AxisBounds::new(self.pmm.a_lo[1], self.pmm.a_hi[1])?,
            AxisBounds::new(self.pmm.a_lo[2], self.pmm.a_hi[2])?,
        ])
    }

    pub fn gates(&self) -> Result<Vec<Gate>, String> {
        self.track
            .gates
            .iter()
            .enumerate()
            .map(|(id, g)| {
                let gate = Gate::new(id, v3(g.center), v3(g.exit_dir), g.pass_radius).map_err(|e| e.to_string())?;
                if g.motion.is_empty() {
                    return Ok(gate);
                }
                let knots = g.motion.iter().map(|k| (k[0], Vector3::new(k[1], k[2], k[3]))).collect();
                Ok(gate.with_motion(GateMotion::new(knots).map_err(|e| format!("gate {id}: {e}"))?))
            })
            .collect()
    }

    pub fn start_state(&self) -> PointState {
        PointState::new(v3(self.start.p), v3(self.start.v))
    }

    pub fn cone_grid(&self) -> ConeGrid {
        ConeGrid::from_spans(self.cone.v_max, self.cone.yaw_span_deg, self.cone.pitch_span_deg, self.cone.s)
    }

    /// Planner settings; panics only if called on an unvalidated scenario with bad bounds.
    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            horizon: self.planner.horizon,
            cone: self.cone_grid(),
            h_random: self.cone.h_random,
            eps: self.planner.eps,
            max_iter: self.planner.max_iter,
            lazy: self.planner.lazy,
            bounds: self.bounds().expect("validated bounds"),
        }
    }

    pub fn environment(&self) -> Result<Environment, crate::sim::SimError> {
        let wind = self
            .wind
            .iter()
            .map(|w| WindRegion::new(v3(w.box_min), v3(w.box_max), v3(w.force)))
            .collect::<Result<_, _>>()?;
        Ok(Environment { wind })
    }

    pub fn quad_params(&self) -> QuadParams {
        let mut p = QuadParams::default();
        let q = &self.quad;
        if let Some(x) = q.mass {
            p.mass = x;
        }
        if let Some(x) = q.inertia {
            p.inertia = v3(x);
        }
        if let Some(x) = q.arm_length {
            p.arm_length = x;
        }
        if let Some(x) = q.c_tau {
            p.c_tau = x;
        }
        if let Some(x) = q.u_min {
            p.u_min = x;
        }
        if let Some(x) = q.u_max {
            p.u_max = x;
        }
        if let Some(x) = q.drag {
            p.drag = v3(x);
        }
        p
    }

    /// Simulator steps per control tick.
    pub fn steps_per_tick(&self) -> usize {
        (1.0 / (self.sim.control_hz * self.sim.dt)).round() as usize
    }
}

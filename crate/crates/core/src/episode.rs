//! Closed-loop episodes: plan, track with the contouring controller, simulate and score.

use std::io::Write;
use std::sync::mpsc;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::path::{assemble_path, project_progress, Path, PathError, Shared};
use crate::pmm_axis::PointState;
use crate::scenario::Scenario;
use crate::sim::{detect_gate_pass, gate_at, step_rk4, wind_force, PassEvent, QuadState};
use crate::tracker::{cascade, solve_contouring, ContouringSolution, TrackerState, WarmStart};
use crate::velocity_graph::{plan_query, plan_receding, plan_through, Gate, PlanError, PlannerConfig, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Plan the whole course once and track it.
    Fixed,
    /// Replan over the next gates from the measured state every few control ticks.
    Replan,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(Mode::Fixed),
            "replan" => Ok(Mode::Replan),
            other => Err(format!("unknown mode `{other}` (expected fixed|replan)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOptions {
    pub mode: Mode,
    pub seed: u64,
    /// Defaults to random sampling for the fixed reference and refocusing for replanning.
    pub strategy: Option<Strategy>,
    pub replan_every: Option<usize>,
    pub lazy: Option<bool>,
    /// Plan on the control thread; otherwise a planner thread publishes paths concurrently.
    pub deterministic: bool,
    pub record_log: bool,
}

impl EpisodeOptions {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self { mode, seed, strategy: None, replan_every: None, lazy: None, deterministic: true, record_log: true }
    }

    fn strategy(&self) -> Strategy {
        self.strategy.unwrap_or(match self.mode {
            Mode::Fixed => Strategy::Random,
            Mode::Replan => Strategy::Refocus,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Completed,
    Timeout,
    NonFinite,
    NoPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatePass {
    /// Position in the flown gate sequence (laps unrolled).
    pub index: usize,
    pub gate_id: usize,
    pub lap: usize,
    pub time: f64,
    pub deviation: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// Time of the final gate pass, if the course was completed.
    pub lap_time: Option<f64>,
    pub deviations: Vec<f64>,
    pub all_valid: bool,
    pub misses: usize,
    /// Mean contour error norm over control ticks, m.
    pub mean_contour_error: f64,
    /// Mean progress rate over control ticks, m/s.
    pub mean_progress_rate: f64,
    /// Mean contour error right after each new reference is published, m.
    pub mean_start_contour_error: f64,
    pub replans: usize,
    pub replan_failures: usize,
    pub solver_failures: usize,
    pub saturated_fraction: f64,
}

/// One control tick of the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub theta: f64,
    pub v_theta: f64,
    pub e_c: f64,
    pub e_l: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub f4: f64,
    pub saturated: bool,
    pub wind_x: f64,
    pub wind_y: f64,
    pub wind_z: f64,
    /// Next gate in the unrolled sequence at the start of the tick.
    pub target: usize,
    /// `pass:<index>` or `miss:<index>` when a gate plane was crossed during the tick.
    pub gate_event: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub mode: Mode,
    pub seed: u64,
    pub status: EpisodeStatus,
    pub message: String,
    pub metrics: EpisodeMetrics,
    pub passes: Vec<GatePass>,
    #[serde(skip)]
    pub log: Vec<LogRow>,
}

impl EpisodeResult {
    pub fn write_log_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        for row in &self.log {
            wr.serialize(row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_log_csv<R: std::io::Read>(r: R) -> Result<Vec<LogRow>, csv::Error> {
        csv::Reader::from_reader(r).deserialize().collect()
    }
}

/// Length of the straight run appended past the last gate so the horizon never runs off.
fn extension_length(scenario: &Scenario) -> f64 {
    (scenario.tracker.v_theta_max * scenario.tracker.n as f64 * scenario.tracker.dt).max(10.0)
}

fn build_path(plan: &crate::velocity_graph::PmmPlan, scenario: &Scenario) -> Result<Path, PathError> {
    let mut path = assemble_path(plan, scenario.run.path_dt)?;
    path.extend_straight(extension_length(scenario), 0.1);
    Ok(path)
}

#[derive(Debug)]
enum PlanFailure {
    Plan(PlanError),
    Path(PathError),
}

impl std::fmt::Display for PlanFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlanFailure::Plan(e) => write!(f, "{e}"),
            PlanFailure::Path(e) => write!(f, "{e}"),
        }
    }
}

/// A reference path together with what the replanner needs to continue from it.
#[derive(Debug)]
struct Reference {
    path: Path,
    /// Position in the unrolled sequence of the first gate on the path.
    first_gate: usize,
    /// Gate velocities of the plan behind the path, keyed by sequence position.
    gate_velocities: Vec<(usize, Vector3<f64>)>,
}

impl Reference {
    /// Plan time left until the path reaches sequence gate `target`, if the path covers it.
    fn time_to_gate(&self, target: usize, theta: f64) -> Option<f64> {
        let g = *self.path.gate_thetas.get(target.checked_sub(self.first_gate)?)?;
        Some(self.path.plan_time_at(g) - self.path.plan_time_at(theta))
    }

    /// Sequence position of the last gate on the path.
    fn last_gate(&self) -> usize {
        self.first_gate + self.path.gate_thetas.len().saturating_sub(1)
    }
}

/// The reference being flown and the vehicle's progress along it.
#[derive(Clone, Copy)]
struct Flying<'a> {
    reference: &'a Reference,
    theta: f64,
}

/// Everything needed to issue a replanning query.
struct Replanner<'a> {
    scenario: &'a Scenario,
    sequence: &'a [Gate],
    cfg: PlannerConfig,
    strategy: Strategy,
    seed: u64,
}

impl Replanner<'_> {
    /// Plans over the next gates from `(p, v)`. When the gate velocities of the previous reference
    /// give a faster plan from the same state than the fresh search, that plan is kept instead,
    /// so a search that lands in a worse basin cannot make the reference jump. `None` means the
    /// current reference still gets there first and should be kept.
    fn plan(
        &self,
        p: Vector3<f64>,
        v: Vector3<f64>,
        t: f64,
        target: usize,
        query: u64,
        current: Option<Flying<'_>>,
    ) -> Result<Option<Reference>, PlanFailure> {
        let end = (target + self.cfg.horizon).min(self.sequence.len());
        let gates: Vec<Gate> = self.sequence[target..end].iter().map(|g| gate_at(g, t)).collect();
        let start = PointState::new(p, v);
        let mut plan = plan_query(&start, &gates, &self.cfg, self.strategy, self.seed.wrapping_add(query))
            .map_err(PlanFailure::Plan)?
            .plan;
        if let Some(Flying { reference: prev, .. }) = current {
            let kept: Vec<Vector3<f64>> = (target..end)
                .zip(&plan.gate_velocities)
                .map(|(i, fresh)| prev.gate_velocities.iter().find(|(j, _)| *j == i).map_or(*fresh, |(_, v)| *v))
                .collect();
            if kept != plan.gate_velocities {
                let positions: Vec<Vector3<f64>> = gates.iter().map(|g| g.center).collect();
                if let Ok(old) = plan_through(&start, &positions, &kept, &self.cfg.bounds) {
                    if old.total_time < plan.total_time {
                        plan = old;
                    }
                }
            }
        }
        let fresh = Reference {
            path: build_path(&plan, self.scenario).map_err(PlanFailure::Path)?,
            first_gate: target,
            gate_velocities: (target..end).zip(plan.gate_velocities.iter().copied()).collect(),
        };
        if let Some(Flying { reference: prev, theta }) = current {
            let on_track = project_progress(&prev.path, &p, theta).e_c.norm() <= self.scenario.run.switch_deviation;
            let old = on_track.then(|| self.continued_time(prev, theta, &gates, &fresh)).flatten();
            if old.is_some_and(|old| old <= plan.total_time) {
                return Ok(None);
            }
        }
        Ok(Some(fresh))
    }
}

impl Replanner<'_> {
    /// Plan time for the current reference to reach the last gate of `fresh`, continuing past the
    /// reference's own last gate with the fresh gate velocities.
    fn continued_time(&self, prev: &Reference, theta: f64, gates: &[Gate], fresh: &Reference) -> Option<f64> {
        let (first, last) = (fresh.first_gate, fresh.last_gate());
        if prev.last_gate() >= last {
            return prev.time_to_gate(last, theta);
        }
        let own_last = prev.last_gate();
        let to_own_last = prev.time_to_gate(own_last, theta)?;
        let (_, v_own) = *prev.gate_velocities.iter().find(|(j, _)| *j == own_last)?;
        let from = PointState::new(gates.get(own_last.checked_sub(first)?)?.center, v_own);
        let rest = (own_last + 1 - first)..=(last - first);
        let positions: Vec<Vector3<f64>> = gates[rest.clone()].iter().map(|g| g.center).collect();
        let velocities: Vec<Vector3<f64>> = fresh.gate_velocities[rest].iter().map(|(_, v)| *v).collect();
        let tail = plan_through(&from, &positions, &velocities, &self.cfg.bounds).ok()?;
        Some(to_own_last + tail.total_time)
    }
}

/// Plane crossings far from the gate are not attempts at it.
fn captured_pass(
    p_prev: &Vector3<f64>,
    p_now: &Vector3<f64>,
    t_prev: f64,
    t_now: f64,
    gate: &Gate,
    capture_radius: f64,
) -> Option<PassEvent> {
    detect_gate_pass(p_prev, p_now, t_prev, t_now, gate).filter(|e| e.deviation <= capture_radius)
}

struct PlanRequest {
    p: Vector3<f64>,
    v: Vector3<f64>,
    t: f64,
    target: usize,
    query: u64,
    /// Progress along the reference the control loop was flying.
    theta: f64,
}

/// Runs one episode; failures are reported in the result rather than returned as errors.
pub fn run_episode(scenario: &Scenario, opts: &EpisodeOptions) -> EpisodeResult {
    let track = scenario.gates().expect("validated scenario");
    let sequence: Vec<Gate> = (0..scenario.run.laps).flat_map(|_| track.iter().cloned()).collect();
    let mut cfg = scenario.planner_config();
    if let Some(lazy) = opts.lazy {
        cfg.lazy = lazy;
    }
    let replanner = Replanner { scenario, sequence: &sequence, cfg, strategy: opts.strategy(), seed: opts.seed };

    if opts.mode == Mode::Replan && !opts.deterministic {
        let shared = Shared::<Reference>::default();
        let (tx, rx) = mpsc::channel::<PlanRequest>();
        return std::thread::scope(|scope| {
            let shared_ref = &shared;
            let replanner_ref = &replanner;
            scope.spawn(move || {
                while let Ok(mut req) = rx.recv() {
                    // Only the newest request matters.
                    while let Ok(newer) = rx.try_recv() {
                        req = newer;
                    }
                    let previous = shared_ref.load();
                    let current = previous.as_deref().map(|reference| Flying { reference, theta: req.theta });
                    if let Ok(Some(r)) = replanner_ref.plan(req.p, req.v, req.t, req.target, req.query, current) {
                        shared_ref.store(r);
                    }
                }
            });
            run_loop(scenario, opts, &replanner, &track, Some((&shared, tx)))
        });
    }
    run_loop(scenario, opts, &replanner, &track, None)
}

fn run_loop(
    scenario: &Scenario,
    opts: &EpisodeOptions,
    replanner: &Replanner<'_>,
    track: &[Gate],
    async_planner: Option<(&Shared<Reference>, mpsc::Sender<PlanRequest>)>,
) -> EpisodeResult {
    let sequence = replanner.sequence;
    let params = scenario.quad_params();
    let env = scenario.environment().expect("validated scenario");
    let tcfg = scenario.tracker;
    let gains = scenario.cascade;
    let steps = scenario.steps_per_tick();
    let dt = scenario.sim.dt;
    let tick_dt = dt * steps as f64;
    let replan_every = opts.replan_every.unwrap_or(scenario.run.replan_every).max(1);
    let start = scenario.start_state();

    let mut result = EpisodeResult {
        mode: opts.mode,
        seed: opts.seed,
        status: EpisodeStatus::Timeout,
        message: String::new(),
        metrics: EpisodeMetrics::default(),
        passes: Vec::new(),
        log: Vec::new(),
    };
    let mut start_errors = Vec::new();

    let initial = match opts.mode {
        Mode::Fixed => {
            let gates: Vec<Gate> = sequence.iter().map(|g| gate_at(g, 0.0)).collect();
            let track_now: Vec<Gate> = track.iter().map(|g| gate_at(g, 0.0)).collect();
            plan_receding(&start, &gates, &track_now, &replanner.cfg, replanner.strategy, opts.seed)
                .map_err(PlanFailure::Plan)
                .and_then(|out| {
                    let path = build_path(&out.plan, scenario).map_err(PlanFailure::Path)?;
                    Ok(Reference { path, first_gate: 0, gate_velocities: Vec::new() })
                })
        }
        Mode::Replan => replanner.plan(start.p, start.v, 0.0, 0, 0, None).map(|r| r.expect("no reference to keep")),
    };
    let mut reference = match initial {
        Ok(r) => Arc::new(r),
        Err(e) => {
            result.status = EpisodeStatus::NoPath;
            result.message = format!("initial plan failed: {e}");
            return result;
        }
    };
    if let Some((shared, _)) = &async_planner {
        let r = Arc::into_inner(reference).expect("sole owner");
        shared.store(r);
        reference = shared.load().expect("just stored");
    }
    start_errors.push(project_progress(&reference.path, &start.p, 0.0).e_c.norm());

    let mut state = QuadState { v: start.v, ..QuadState::hover_at(start.p) };
    let mut tstate = TrackerState { v_theta: start.v.norm().min(tcfg.v_theta_max), ..Default::default() };
    let mut warm: Option<WarmStart> = None;
    let mut accel = Vector3::zeros();
    let mut target = 0;
    let mut t = 0.0;
    let mut tick: u64 = 0;
    let (mut sum_ec, mut sum_vt, mut saturated_ticks) = (0.0, 0.0, 0usize);
    let mut fresh_path = false;

    loop {
        if t >= scenario.run.timeout {
            result.status = EpisodeStatus::Timeout;
            result.message = format!("timeout after {t:.3} s with {target}/{} gates", sequence.len());
            break;
        }
        // Close to a gate the exact gate state is nearly unreachable from any perturbed state,
        // so the current reference is flown through it unchanged.
        let near_gate = reference.time_to_gate(target, tstate.theta).is_some_and(|left| left < scenario.run.replan_freeze);
        if opts.mode == Mode::Replan && tick > 0 && tick.is_multiple_of(replan_every as u64) && !near_gate {
            result.metrics.replans += 1;
            match &async_planner {
                None => match replanner.plan(state.p, state.v, t, target, tick, Some(Flying { reference: &reference, theta: tstate.theta })) {
                    Ok(Some(r)) => {
                        reference = Arc::new(r);
                        fresh_path = true;
                    }
                    Ok(None) => {}
                    Err(_) => result.metrics.replan_failures += 1,
                },
                Some((_, tx)) => {
                    let _ = tx.send(PlanRequest { p: state.p, v: state.v, t, target, query: tick, theta: tstate.theta });
                }
            }
        }
        if let Some((shared, _)) = &async_planner {
            if let Some(latest) = shared.load() {
                if !Arc::ptr_eq(&latest, &reference) {
                    reference = latest;
                    fresh_path = true;
                }
            }
        }
        let path = &reference.path;
        if fresh_path {
            tstate.theta = 0.0;
        }
        let errs = project_progress(path, &state.p, tstate.theta);
        if fresh_path {
            start_errors.push(errs.e_c.norm());
            fresh_path = false;
        }
        tstate.theta = errs.theta_star;

        match solve_contouring(&state.p, &state.v, &tstate, warm.as_ref(), path, &tcfg) {
            Ok(sol) => {
                accel = sol.accel;
                tstate.v_theta = sol.state.v_theta;
                tstate.last_accel = accel;
                warm = Some(ContouringSolution::shifted(&sol, tick_dt, tcfg.dt));
            }
            Err(_) => {
                result.metrics.solver_failures += 1;
                warm = None;
            }
        }

        let row_t = t;
        let row_state = state;
        let row_target = target;
        let mut last_cmd = [0.0; 4];
        let mut tick_saturated = false;
        let mut event = String::new();
        let mut failed = None;
        for _ in 0..steps {
            let (cmd, sat) = cascade(&accel, &state, &params, &gains);
            last_cmd = cmd.f;
            tick_saturated |= sat;
            let next = match step_rk4(&state, &cmd, &params, &env, t, dt) {
                Ok(s) => s,
                Err(e) => {
                    failed = Some(e.to_string());
                    break;
                }
            };
            let t_next = t + dt;
            if target < sequence.len() {
                let gate = gate_at(&sequence[target], t_next);
                if let Some(ev) = captured_pass(&state.p, &next.p, t, t_next, &gate, scenario.run.capture_radius) {
                    result.passes.push(GatePass {
                        index: target,
                        gate_id: gate.id,
                        lap: target / track.len(),
                        time: ev.time,
                        deviation: ev.deviation,
                        valid: ev.valid,
                    });
                    event = format!("{}:{target}", if ev.valid { "pass" } else { "miss" });
                    target += 1;
                }
            }
            state = next;
            t = t_next;
            if target == sequence.len() {
                break;
            }
        }
        tick += 1;
        sum_ec += errs.e_c.norm();
        sum_vt += tstate.v_theta;
        saturated_ticks += tick_saturated as usize;
        if opts.record_log {
            let wind = wind_force(&row_state.p, row_t, &env);
            result.log.push(LogRow {
                t: row_t,
                px: row_state.p.x,
                py: row_state.p.y,
                pz: row_state.p.z,
                vx: row_state.v.x,
                vy: row_state.v.y,
                vz: row_state.v.z,
                theta: errs.theta_star,
                v_theta: tstate.v_theta,
                e_c: errs.e_c.norm(),
                e_l: errs.e_l.norm(),
                f1: last_cmd[0],
                f2: last_cmd[1],
                f3: last_cmd[2],
                f4: last_cmd[3],
                saturated: tick_saturated,
                wind_x: wind.x,
                wind_y: wind.y,
                wind_z: wind.z,
                target: row_target,
                gate_event: event,
            });
        }
        if let Some(msg) = failed {
            result.status = EpisodeStatus::NonFinite;
            result.message = msg;
            break;
        }
        if target == sequence.len() {
            result.status = EpisodeStatus::Completed;
            result.metrics.lap_time = result.passes.last().map(|p| p.time);
            break;
        }
    }

    let ticks = tick.max(1) as f64;
    let m = &mut result.metrics;
    m.deviations = result.passes.iter().map(|p| p.deviation).collect();
    m.misses = result.passes.iter().filter(|p| !p.valid).count();
    m.all_valid = result.status == EpisodeStatus::Completed && m.misses == 0;
    m.mean_contour_error = sum_ec / ticks;
    m.mean_progress_rate = sum_vt / ticks;
    m.mean_start_contour_error = start_errors.iter().sum::<f64>() / start_errors.len().max(1) as f64;
    m.saturated_fraction = saturated_ticks as f64 / ticks;
    result
}

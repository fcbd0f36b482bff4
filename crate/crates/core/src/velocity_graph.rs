//! Receding-horizon planning over sampled gate velocities.
//!
//! Every gate in the horizon contributes one layer of candidate velocities. Edges connect
//! consecutive layers and weigh the duration of the synchronized point-mass segment between
//! the two states; a layered Dijkstra search picks the fastest chain. Node sets come either
//! from uniform random draws inside a cone around the gate exit direction, or from a regular
//! grid that is refocused around the incumbent optimum until it stops improving.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pmm_axis::{solve_segment, AxisBoundsSet, PmmSegment, PointSample, PointState, SegmentError};
use crate::sim::GateMotion;

pub const DEFAULT_HORIZON: usize = 3;
pub const DEFAULT_EPS: f64 = 0.99;
pub const DEFAULT_MAX_ITER: usize = 10;
pub const DEFAULT_H_RANDOM: usize = 150;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no gates to plan through")]
    NoGates,
    #[error("gate layer {0} has no velocity samples")]
    EmptyLayer(usize),
    #[error("node sets ({sets}) do not match gates ({gates})")]
    LayerMismatch { sets: usize, gates: usize },
    #[error("no feasible chain of segments through the gate horizon")]
    NoPath,
    #[error("invalid cone: {0}")]
    InvalidCone(String),
    #[error("invalid gate: {0}")]
    InvalidGate(String),
    #[error("segment: {0}")]
    Segment(#[from] SegmentError),
}

/// A waypoint to fly through, passed along `exit_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub id: usize,
    pub center: Vector3<f64>,
    pub exit_dir: Vector3<f64>,
    pub pass_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion: Option<GateMotion>,
}

impl Gate {
    /// Builds a gate, normalizing `exit_dir`.
    pub fn new(id: usize, center: Vector3<f64>, exit_dir: Vector3<f64>, pass_radius: f64) -> Result<Self, PlanError> {
        let n = exit_dir.norm();
        if !(n > 1e-9) || !n.is_finite() {
            return Err(PlanError::InvalidGate(format!("gate {id}: exit_dir must be nonzero")));
        }
        if !(pass_radius > 0.0) {
            return Err(PlanError::InvalidGate(format!("gate {id}: pass_radius must be positive")));
        }
        Ok(Self { id, center, exit_dir: exit_dir / n, pass_radius, motion: None })
    }

    pub fn with_motion(mut self, motion: GateMotion) -> Self {
        self.motion = Some(motion);
        self
    }

    pub fn frame(&self) -> ExitFrame {
        ExitFrame::new(&self.exit_dir)
    }
}

/// Orthonormal frame attached to a gate: `forward` is the exit direction, `left` is horizontal
/// (unless the exit direction is vertical) and `up = forward x left`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitFrame {
    pub forward: Vector3<f64>,
    pub left: Vector3<f64>,
    pub up: Vector3<f64>,
}

impl ExitFrame {
    pub fn new(exit_dir: &Vector3<f64>) -> Self {
        let forward = exit_dir.normalize();
        let mut left = Vector3::z().cross(&forward);
        if left.norm() < 1e-6 {
            left = forward.cross(&Vector3::x());
        }
        let left = left.normalize();
        let up = forward.cross(&left);
        Self { forward, left, up }
    }

    /// Velocity with the given speed, yaw (about `up`) and pitch (towards `up`).
    pub fn velocity(&self, c: &ConeCoords) -> Vector3<f64> {
        let (sy, cy) = c.yaw.sin_cos();
        let (sp, cp) = c.pitch.sin_cos();
        c.speed * (cp * cy * self.forward + cp * sy * self.left + sp * self.up)
    }

    /// Inverse of [`ExitFrame::velocity`]; angles are `None` for a zero vector.
    pub fn coords(&self, v: &Vector3<f64>) -> (f64, Option<(f64, f64)>) {
        let speed = v.norm();
        if speed < 1e-12 {
            return (speed, None);
        }
        let yaw = v.dot(&self.left).atan2(v.dot(&self.forward));
        let pitch = (v.dot(&self.up) / speed).clamp(-1.0, 1.0).asin();
        (speed, Some((yaw, pitch)))
    }
}

/// Speed / yaw / pitch coordinates of a velocity in a gate's exit frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeCoords {
    pub speed: f64,
    pub yaw: f64,
    pub pitch: f64,
}

/// Box in (speed, yaw, pitch) around a gate exit direction, binned `s` ways per dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeGrid {
    pub v_min: f64,
    pub v_max: f64,
    pub yaw_min: f64,
    pub yaw_max: f64,
    pub pitch_min: f64,
    pub pitch_max: f64,
    pub s: usize,
}

impl Default for ConeGrid {
    fn default() -> Self {
        Self {
            v_min: 0.0,
            v_max: 20.0,
            yaw_min: (-60.0f64).to_radians(),
            yaw_max: 60.0f64.to_radians(),
            pitch_min: (-45.0f64).to_radians(),
            pitch_max: 45.0f64.to_radians(),
            s: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dim {
    Speed,
    Yaw,
    Pitch,
}

impl ConeGrid {
    /// Symmetric cone from speed cap and full angular spans in degrees.
    pub fn from_spans(v_max: f64, yaw_span_deg: f64, pitch_span_deg: f64, s: usize) -> Self {
        let yaw = 0.5 * yaw_span_deg.to_radians();
        let pitch = 0.5 * pitch_span_deg.to_radians();
        Self { v_min: 0.0, v_max, yaw_min: -yaw, yaw_max: yaw, pitch_min: -pitch, pitch_max: pitch, s }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: &str| Err(PlanError::InvalidCone(m.to_string()));
        let vals = [self.v_min, self.v_max, self.yaw_min, self.yaw_max, self.pitch_min, self.pitch_max];
        if vals.iter().any(|v| !v.is_finite()) {
            return bad("non-finite bound");
        }
        if self.v_min < 0.0 {
            return bad("v_min must be >= 0");
        }
        if self.v_min > self.v_max || self.yaw_min > self.yaw_max || self.pitch_min > self.pitch_max {
            return bad("min exceeds max");
        }
        if self.yaw_min <= -std::f64::consts::PI || self.yaw_max >= std::f64::consts::PI {
            return bad("yaw must stay within (-180, 180) degrees");
        }
        if self.pitch_min < -FRAC_PI_2 || self.pitch_max > FRAC_PI_2 {
            return bad("pitch must stay within [-90, 90] degrees");
        }
        if self.s == 0 {
            return bad("s must be >= 1");
        }
        Ok(())
    }

    fn range(&self, d: Dim) -> (f64, f64) {
        match d {
            Dim::Speed => (self.v_min, self.v_max),
            Dim::Yaw => (self.yaw_min, self.yaw_max),
            Dim::Pitch => (self.pitch_min, self.pitch_max),
        }
    }

    fn set_range(&mut self, d: Dim, lo: f64, hi: f64) {
        match d {
            Dim::Speed => (self.v_min, self.v_max) = (lo, hi),
            Dim::Yaw => (self.yaw_min, self.yaw_max) = (lo, hi),
            Dim::Pitch => (self.pitch_min, self.pitch_max) = (lo, hi),
        }
    }

    /// Grid spacing of one dimension; endpoints are both sampled.
    fn step(&self, d: Dim) -> f64 {
        let (lo, hi) = self.range(d);
        if self.s > 1 {
            (hi - lo) / (self.s - 1) as f64
        } else {
            hi - lo
        }
    }

    fn grid_value(&self, d: Dim, i: usize) -> f64 {
        let (lo, hi) = self.range(d);
        if self.s == 1 {
            0.5 * (lo + hi)
        } else if i + 1 == self.s {
            hi
        } else {
            lo + i as f64 * self.step(d)
        }
    }

    pub fn center(&self) -> ConeCoords {
        ConeCoords {
            speed: 0.5 * (self.v_min + self.v_max),
            yaw: 0.5 * (self.yaw_min + self.yaw_max),
            pitch: 0.5 * (self.pitch_min + self.pitch_max),
        }
    }

    pub fn spans(&self) -> [f64; 3] {
        [self.v_max - self.v_min, self.yaw_max - self.yaw_min, self.pitch_max - self.pitch_min]
    }

    /// Whether `c` lies inside the cone (with a small tolerance).
    pub fn contains(&self, c: &ConeCoords) -> bool {
        let tol = 1e-9;
        c.speed >= self.v_min - tol
            && c.speed <= self.v_max + tol
            && c.yaw >= self.yaw_min - tol
            && c.yaw <= self.yaw_max + tol
            && c.pitch >= self.pitch_min - tol
            && c.pitch <= self.pitch_max + tol
    }
}

/// The `s^3` grid velocities of `cone` at `gate`, ordered speed-major, then yaw, then pitch.
pub fn grid_samples(gate: &Gate, cone: &ConeGrid) -> Vec<Vector3<f64>> {
    let frame = gate.frame();
    let s = cone.s;
    let mut out = Vec::with_capacity(s * s * s);
    for l in 0..s {
        let speed = cone.grid_value(Dim::Speed, l);
        for m in 0..s {
            let yaw = cone.grid_value(Dim::Yaw, m);
            for n in 0..s {
                let pitch = cone.grid_value(Dim::Pitch, n);
                out.push(frame.velocity(&ConeCoords { speed, yaw, pitch }));
            }
        }
    }
    out
}

/// `h` velocities drawn uniformly in (speed, yaw, pitch) inside `cone`.
pub fn random_cone_samples(gate: &Gate, cone: &ConeGrid, h: usize, rng_seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    draw_cone_samples(gate, cone, h, &mut rng)
}

fn draw_cone_samples(gate: &Gate, cone: &ConeGrid, h: usize, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
    let frame = gate.frame();
    let mut uniform = |lo: f64, hi: f64| lo + (hi - lo) * rng.gen::<f64>();
    (0..h)
        .map(|_| {
            let speed = uniform(cone.v_min, cone.v_max);
            let yaw = uniform(cone.yaw_min, cone.yaw_max);
            let pitch = uniform(cone.pitch_min, cone.pitch_max);
            frame.velocity(&ConeCoords { speed, yaw, pitch })
        })
        .collect()
}

/// Recenters every dimension on the optimum with half-width equal to half the previous grid
/// step, clipped to `feasible`. With `s = 3` every iteration halves each span.
pub fn refocus_cone(cone: &ConeGrid, feasible: &ConeGrid, optimum: &Vector3<f64>, gate: &Gate) -> ConeGrid {
    let (speed, angles) = gate.frame().coords(optimum);
    let center = cone.center();
    let (yaw, pitch) = angles.unwrap_or((center.yaw, center.pitch));
    let mut out = *cone;
    for (d, c) in [(Dim::Speed, speed), (Dim::Yaw, yaw), (Dim::Pitch, pitch)] {
        let half = 0.5 * cone.step(d);
        let (flo, fhi) = feasible.range(d);
        let c = c.clamp(flo, fhi);
        out.set_range(d, (c - half).max(flo), (c + half).min(fhi));
    }
    out
}

/// Worst-case number of edges over `iterations` searches with `h` nodes per gate.
pub fn edge_count_bound(h: u64, horizon: u64, iterations: u64) -> u64 {
    (h + h * h * (horizon - 1)) * iterations
}

/// Layered graph of candidate gate velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGraph {
    pub start: PointState,
    pub gate_positions: Vec<Vector3<f64>>,
    pub layers: Vec<Vec<Vector3<f64>>>,
}

/// Chained point-mass segments through a sequence of gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmmPlan {
    pub segments: Vec<PmmSegment>,
    pub gate_velocities: Vec<Vector3<f64>>,
    pub total_time: f64,
}

impl PmmPlan {
    pub fn start(&self) -> Option<PointState> {
        self.segments.first().map(|s| s.start)
    }

    /// Segment index and local time for a global time `t` (clamped).
    fn locate(&self, t: f64) -> (usize, f64) {
        let mut t = t.max(0.0);
        for (i, seg) in self.segments.iter().enumerate() {
            if t <= seg.duration || i + 1 == self.segments.len() {
                return (i, t);
            }
            t -= seg.duration;
        }
        (0, 0.0)
    }

    /// Kinematics at plan time `t`, clamped into `[0, total_time]`.
    pub fn sample(&self, t: f64) -> Option<PointSample> {
        if self.segments.is_empty() {
            return None;
        }
        let (i, local) = self.locate(t);
        Some(self.segments[i].sample(local))
    }

    /// Appends `other`, which must start where this plan ends.
    pub fn extend(&mut self, other: PmmPlan) {
        self.total_time += other.total_time;
        self.segments.extend(other.segments);
        self.gate_velocities.extend(other.gate_velocities);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SearchStats {
    pub edges_evaluated: u64,
    pub nodes_expanded: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub plan: PmmPlan,
    /// Chosen node index in every layer.
    pub chosen: Vec<usize>,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, usize, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .total_cmp(&other.0)
            .then(self.1.cmp(&other.1))
            .then(self.2.cmp(&other.2))
    }
}

/// Fastest chain of gate velocities from `start` through `gate_positions`.
///
/// With `lazy` set, the edges leaving a node are only computed when the node is expanded;
/// otherwise the whole graph is evaluated before the search.
pub fn shortest_velocity_path(
    start: &PointState,
    gate_positions: &[Vector3<f64>],
    node_sets: &[Vec<Vector3<f64>>],
    u: &AxisBoundsSet,
    lazy: bool,
) -> Result<SearchResult, PlanError> {
    let layers = gate_positions.len();
    if layers == 0 {
        return Err(PlanError::NoGates);
    }
    if node_sets.len() != layers {
        return Err(PlanError::LayerMismatch { sets: node_sets.len(), gates: layers });
    }
    if let Some(i) = node_sets.iter().position(|s| s.is_empty()) {
        return Err(PlanError::EmptyLayer(i));
    }

    // Layer 0 is the start node; layer i + 1 holds the nodes of gate i.
    let state_of = |layer: usize, idx: usize| -> PointState {
        if layer == 0 {
            *start
        } else {
            PointState::new(gate_positions[layer - 1], node_sets[layer - 1][idx])
        }
    };
    let layer_len = |layer: usize| if layer == 0 { 1 } else { node_sets[layer - 1].len() };

    let mut stats = SearchStats::default();
    let mut edge_weight = |from: &PointState, to: &PointState| -> Option<f64> {
        stats.edges_evaluated += 1;
        solve_segment(from, to, u).ok().map(|s| s.duration)
    };

    // Eager mode: every edge up front.
    let mut eager: Vec<Vec<Vec<Option<f64>>>> = Vec::new();
    if !lazy {
        for layer in 0..layers {
            let mut rows = Vec::with_capacity(layer_len(layer));
            for i in 0..layer_len(layer) {
                let from = state_of(layer, i);
                rows.push((0..layer_len(layer + 1)).map(|j| edge_weight(&from, &state_of(layer + 1, j))).collect());
            }
            eager.push(rows);
        }
    }

    let mut dist: Vec<Vec<f64>> = (0..=layers).map(|l| vec![f64::INFINITY; layer_len(l)]).collect();
    let mut parent: Vec<Vec<usize>> = (0..=layers).map(|l| vec![usize::MAX; layer_len(l)]).collect();
    let mut done: Vec<Vec<bool>> = (0..=layers).map(|l| vec![false; layer_len(l)]).collect();
    let mut heap = BinaryHeap::new();
    dist[0][0] = 0.0;
    heap.push(Reverse(Key(0.0, 0, 0)));

    let mut target = None;
    while let Some(Reverse(Key(d, layer, idx))) = heap.pop() {
        if done[layer][idx] {
            continue;
        }
        done[layer][idx] = true;
        if layer == layers {
            target = Some(idx);
            break;
        }
        stats.nodes_expanded += 1;
        let from = state_of(layer, idx);
        for j in 0..layer_len(layer + 1) {
            if done[layer + 1][j] {
                continue;
            }
            let w = if lazy { edge_weight(&from, &state_of(layer + 1, j)) } else { eager[layer][idx][j] };
            let Some(w) = w else { continue };
            let nd = d + w;
            if nd < dist[layer + 1][j] {
                dist[layer + 1][j] = nd;
                parent[layer + 1][j] = idx;
                heap.push(Reverse(Key(nd, layer + 1, j)));
            }
        }
    }
    let last = target.ok_or(PlanError::NoPath)?;

    let mut chosen = vec![0; layers];
    let mut idx = last;
    for layer in (1..=layers).rev() {
        chosen[layer - 1] = idx;
        idx = parent[layer][idx];
    }

    let velocities: Vec<_> = chosen.iter().enumerate().map(|(l, &j)| node_sets[l][j]).collect();
    let plan = plan_through(start, gate_positions, &velocities, u)?;
    Ok(SearchResult { plan, chosen, stats })
}

/// Chains minimum-time segments from `start` through fixed gate velocities.
pub fn plan_through(
    start: &PointState,
    gate_positions: &[Vector3<f64>],
    velocities: &[Vector3<f64>],
    u: &AxisBoundsSet,
) -> Result<PmmPlan, PlanError> {
    if gate_positions.len() != velocities.len() {
        return Err(PlanError::LayerMismatch { sets: velocities.len(), gates: gate_positions.len() });
    }
    if gate_positions.is_empty() {
        return Err(PlanError::NoGates);
    }
    let mut segments = Vec::with_capacity(velocities.len());
    let mut from = *start;
    let mut total_time = 0.0;
    for (p, v) in gate_positions.iter().zip(velocities) {
        let to = PointState::new(*p, *v);
        let seg = solve_segment(&from, &to, u)?;
        total_time += seg.duration;
        segments.push(seg);
        from = to;
    }
    Ok(PmmPlan { segments, gate_velocities: velocities.to_vec(), total_time })
}

/// One search of the refocusing loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefocusIteration {
    /// Optimum of this iteration's graph.
    pub iterate_time: f64,
    /// Best time found so far (non-increasing).
    pub best_time: f64,
    pub edges_evaluated: u64,
    pub cones: Vec<ConeGrid>,
}

/// Outcome of a planning query.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub plan: PmmPlan,
    pub edges_evaluated: u64,
    pub iterations: Vec<RefocusIteration>,
}

impl PlanOutcome {
    pub fn iteration_count(&self) -> usize {
        self.iterations.len().max(1)
    }
}

fn gate_positions(gates: &[Gate]) -> Vec<Vector3<f64>> {
    gates.iter().map(|g| g.center).collect()
}

/// Grid search refocused around the optimum until an iteration improves on the previous one
/// by less than a factor `eps` (`T_k > eps * T_{k-1}`), or `max_iter` searches have run.
pub fn plan_refocusing(
    start: &PointState,
    gates: &[Gate],
    initial_cone: &ConeGrid,
    u: &AxisBoundsSet,
    eps: f64,
    max_iter: usize,
    lazy: bool,
) -> Result<PlanOutcome, PlanError> {
    if gates.is_empty() {
        return Err(PlanError::NoGates);
    }
    initial_cone.validate()?;
    let positions = gate_positions(gates);
    let mut cones = vec![*initial_cone; gates.len()];
    let mut best: Option<SearchResult> = None;
    let mut iterations = Vec::new();
    let mut edges = 0;
    let mut prev_time = f64::INFINITY;
    for _ in 0..max_iter.max(1) {
        let node_sets: Vec<_> = gates.iter().zip(&cones).map(|(g, c)| grid_samples(g, c)).collect();
        let result = shortest_velocity_path(start, &positions, &node_sets, u, lazy)?;
        edges += result.stats.edges_evaluated;
        let t_k = result.plan.total_time;
        let used_cones = cones.clone();
        for ((cone, gate), v) in cones.iter_mut().zip(gates).zip(&result.plan.gate_velocities) {
            *cone = refocus_cone(cone, initial_cone, v, gate);
        }
        if best.as_ref().is_none_or(|b| t_k < b.plan.total_time) {
            best = Some(result.clone());
        }
        let best_time = best.as_ref().map(|b| b.plan.total_time).unwrap_or(t_k);
        iterations.push(RefocusIteration {
            iterate_time: t_k,
            best_time,
            edges_evaluated: result.stats.edges_evaluated,
            cones: used_cones,
        });
        if t_k > eps * prev_time || best_time == 0.0 {
            break;
        }
        prev_time = t_k;
    }
    let best = best.ok_or(PlanError::NoPath)?;
    Ok(PlanOutcome { plan: best.plan, edges_evaluated: edges, iterations })
}

/// Search over `h` uniformly drawn cone velocities per gate.
pub fn plan_random(
    start: &PointState,
    gates: &[Gate],
    cone: &ConeGrid,
    u: &AxisBoundsSet,
    h: usize,
    rng_seed: u64,
    lazy: bool,
) -> Result<PlanOutcome, PlanError> {
    if gates.is_empty() {
        return Err(PlanError::NoGates);
    }
    cone.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let node_sets: Vec<_> = gates.iter().map(|g| draw_cone_samples(g, cone, h, &mut rng)).collect();
    let result = shortest_velocity_path(start, &gate_positions(gates), &node_sets, u, lazy)?;
    let t = result.plan.total_time;
    Ok(PlanOutcome {
        plan: result.plan,
        edges_evaluated: result.stats.edges_evaluated,
        iterations: vec![RefocusIteration {
            iterate_time: t,
            best_time: t,
            edges_evaluated: result.stats.edges_evaluated,
            cones: vec![*cone; gates.len()],
        }],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Refocus,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Strategy::Random),
            "refocus" => Ok(Strategy::Refocus),
            other => Err(format!("unknown strategy `{other}` (expected random|refocus)")),
        }
    }
}

/// Planner settings shared by both strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub cone: ConeGrid,
    pub h_random: usize,
    pub eps: f64,
    pub max_iter: usize,
    pub lazy: bool,
    pub bounds: AxisBoundsSet,
}

impl PlannerConfig {
    pub fn with_bounds(bounds: AxisBoundsSet) -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            cone: ConeGrid::default(),
            h_random: DEFAULT_H_RANDOM,
            eps: DEFAULT_EPS,
            max_iter: DEFAULT_MAX_ITER,
            lazy: true,
            bounds,
        }
    }
}

/// The next `horizon` gates starting at `from`, wrapping around the track.
pub fn horizon_gates(track: &[Gate], from: usize, horizon: usize) -> Vec<Gate> {
    (0..horizon.min(track.len().max(1)))
        .map(|k| track[(from + k) % track.len()].clone())
        .collect()
}

/// One planning query with the chosen strategy.
pub fn plan_query(
    start: &PointState,
    gates: &[Gate],
    cfg: &PlannerConfig,
    strategy: Strategy,
    seed: u64,
) -> Result<PlanOutcome, PlanError> {
    match strategy {
        Strategy::Random => plan_random(start, gates, &cfg.cone, &cfg.bounds, cfg.h_random, seed, cfg.lazy),
        Strategy::Refocus => plan_refocusing(start, gates, &cfg.cone, &cfg.bounds, cfg.eps, cfg.max_iter, cfg.lazy),
    }
}

/// Reference through every gate of `sequence`: each query covers the next `horizon` gates
/// (wrapping), and only its first segment is committed before moving on.
pub fn plan_receding(
    start: &PointState,
    sequence: &[Gate],
    track: &[Gate],
    cfg: &PlannerConfig,
    strategy: Strategy,
    seed: u64,
) -> Result<PlanOutcome, PlanError> {
    if sequence.is_empty() {
        return Err(PlanError::NoGates);
    }
    let mut from = *start;
    let mut plan = PmmPlan { segments: Vec::new(), gate_velocities: Vec::new(), total_time: 0.0 };
    let mut edges = 0;
    let mut iterations = Vec::new();
    for (k, gate) in sequence.iter().enumerate() {
        let track_idx = track.iter().position(|g| g.id == gate.id).unwrap_or(0);
        let mut window = vec![gate.clone()];
        window.extend(horizon_gates(track, track_idx + 1, cfg.horizon.saturating_sub(1)));
        let out = plan_query(&from, &window, cfg, strategy, seed.wrapping_add(k as u64))?;
        edges += out.edges_evaluated;
        iterations.extend(out.iterations);
        let seg = out.plan.segments[0];
        plan.total_time += seg.duration;
        plan.segments.push(seg);
        plan.gate_velocities.push(seg.end.v);
        from = seg.end;
    }
    Ok(PlanOutcome { plan, edges_evaluated: edges, iterations })
}

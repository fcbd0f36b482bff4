//! Closed-form time-optimal bang-bang motion of a double integrator along a
//! single axis, duration synchronization by acceleration scaling, and the
//! synchronized three-axis point-mass segment built on top of them.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the nonnegativity of switching times. Tiny negatives are clamped to zero.
pub const FEAS_TOL: f64 = 1e-9;
/// Slack allowed past the end of a trajectory when evaluating it.
pub const EVAL_TOL: f64 = 1e-9;
/// Two switch orders whose durations differ by less than this are treated as a tie.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AxisError {
    #[error("invalid acceleration bounds: need u_lo < 0 < u_hi, got ({lo}, {hi})")]
    InvalidBounds { lo: f64, hi: f64 },
    #[error("non-finite boundary value")]
    NonFinite,
    #[error("no nonnegative bang-bang solution exists")]
    Infeasible,
    #[error("time {t} outside trajectory duration {duration}")]
    OutOfRange { t: f64, duration: f64 },
    #[error("requested duration {requested} is shorter than the minimum time {minimum}")]
    InfeasibleDuration { requested: f64, minimum: f64 },
    #[error("no acceleration scale in (0, 1] reaches duration {requested}")]
    NoConvergence { requested: f64 },
}

/// Boundary conditions of one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBoundary {
    pub p0: f64,
    pub v0: f64,
    pub p2: f64,
    pub v2: f64,
}

impl AxisBoundary {
    pub fn new(p0: f64, v0: f64, p2: f64, v2: f64) -> Self {
        Self { p0, v0, p2, v2 }
    }

    fn is_finite(&self) -> bool {
        self.p0.is_finite() && self.v0.is_finite() && self.p2.is_finite() && self.v2.is_finite()
    }

    /// Mirror image: positions and velocities negated.
    pub fn mirrored(&self) -> Self {
        Self::new(-self.p0, -self.v0, -self.p2, -self.v2)
    }
}

/// Acceleration limits of one axis, `u_lo < 0 < u_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBounds {
    pub u_lo: f64,
    pub u_hi: f64,
}

impl AxisBounds {
    pub fn new(u_lo: f64, u_hi: f64) -> Result<Self, AxisError> {
        let b = Self { u_lo, u_hi };
        b.validate()?;
        Ok(b)
    }

    pub fn symmetric(a: f64) -> Result<Self, AxisError> {
        Self::new(-a, a)
    }

    pub fn validate(&self) -> Result<(), AxisError> {
        if self.u_lo.is_finite() && self.u_hi.is_finite() && self.u_lo < 0.0 && 0.0 < self.u_hi {
            Ok(())
        } else {
            Err(AxisError::InvalidBounds { lo: self.u_lo, hi: self.u_hi })
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { u_lo: alpha * self.u_lo, u_hi: alpha * self.u_hi }
    }

    /// Bounds of the mirrored problem (`u_lo <-> -u_hi`).
    pub fn mirrored(&self) -> Self {
        Self { u_lo: -self.u_hi, u_hi: -self.u_lo }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwitchOrder {
    LoThenHi,
    HiThenLo,
}

impl SwitchOrder {
    fn accels(self, u: &AxisBounds) -> (f64, f64) {
        match self {
            SwitchOrder::LoThenHi => (u.u_lo, u.u_hi),
            SwitchOrder::HiThenLo => (u.u_hi, u.u_lo),
        }
    }
}

/// Position, velocity and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSample {
    pub p: f64,
    pub v: f64,
    pub a: f64,
}

/// Two constant-acceleration phases: `a1` for `t1`, then `a2` for `t2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBangBang {
    pub order: SwitchOrder,
    pub t1: f64,
    pub t2: f64,
    pub a1: f64,
    pub a2: f64,
    pub boundary: AxisBoundary,
}

impl AxisBangBang {
    pub fn total_time(&self) -> f64 {
        self.t1 + self.t2
    }

    /// State `(p1, v1)` at the switching instant.
    pub fn switch_state(&self) -> (f64, f64) {
        let b = &self.boundary;
        let p1 = b.p0 + b.v0 * self.t1 + 0.5 * self.a1 * self.t1 * self.t1;
        let v1 = b.v0 + self.a1 * self.t1;
        (p1, v1)
    }

    /// Evaluates the profile at `t`, rejecting times outside `[0, t1 + t2]` by more than [`EVAL_TOL`].
    pub fn evaluate(&self, t: f64) -> Result<AxisSample, AxisError> {
        let duration = self.total_time();
        if !(t >= -EVAL_TOL && t <= duration + EVAL_TOL) {
            return Err(AxisError::OutOfRange { t, duration });
        }
        Ok(self.sample(t))
    }

    /// Evaluates the profile with `t` clamped into the trajectory duration.
    pub fn sample(&self, t: f64) -> AxisSample {
        let t = t.clamp(0.0, self.total_time());
        let b = &self.boundary;
        if t <= 0.0 {
            return AxisSample { p: b.p0, v: b.v0, a: self.a1 };
        }
        if t < self.t1 {
            AxisSample {
                p: b.p0 + b.v0 * t + 0.5 * self.a1 * t * t,
                v: b.v0 + self.a1 * t,
                a: self.a1,
            }
        } else {
            let (p1, v1) = self.switch_state();
            let tau = t - self.t1;
            AxisSample {
                p: p1 + v1 * tau + 0.5 * self.a2 * tau * tau,
                v: v1 + self.a2 * tau,
                a: self.a2,
            }
        }
    }
}

/// Evaluates `traj` at `t`. See [`AxisBangBang::evaluate`].
pub fn evaluate_axis(traj: &AxisBangBang, t: f64) -> Result<AxisSample, AxisError> {
    traj.evaluate(t)
}

/// All `(t1, t2)` pairs with nonnegative durations for the phase accelerations `(a1, a2)`.
///
/// Eliminating `t1`, `t2` from the motion equations leaves
/// `v1^2 (1/a1 - 1/a2) / 2 = dp + v0^2/(2 a1) - v2^2/(2 a2)`, so both signs of `v1` are tried.
fn bang_bang_candidates(b: &AxisBoundary, a1: f64, a2: f64) -> impl Iterator<Item = (f64, f64)> {
    let k = 0.5 * (1.0 / a1 - 1.0 / a2);
    let rhs = (b.p2 - b.p0) + b.v0 * b.v0 / (2.0 * a1) - b.v2 * b.v2 / (2.0 * a2);
    let mut v1_sq = rhs / k;
    let scale = 1.0 + b.v0 * b.v0 + b.v2 * b.v2;
    let mut out = [None, None];
    if v1_sq >= -1e-12 * scale {
        v1_sq = v1_sq.max(0.0);
        let r = v1_sq.sqrt();
        for (slot, v1) in out.iter_mut().zip([r, -r]) {
            let t1 = (v1 - b.v0) / a1;
            let t2 = (b.v2 - v1) / a2;
            if t1 >= -FEAS_TOL && t2 >= -FEAS_TOL {
                *slot = Some((t1.max(0.0), t2.max(0.0)));
            }
        }
        if r == 0.0 {
            out[1] = None;
        }
    }
    out.into_iter().flatten()
}

/// Time-optimal bang-bang profile between the boundary states under `u`.
pub fn solve_axis_min_time(b: &AxisBoundary, u: &AxisBounds) -> Result<AxisBangBang, AxisError> {
    u.validate()?;
    if !b.is_finite() {
        return Err(AxisError::NonFinite);
    }
    let mut best: Option<AxisBangBang> = None;
    // HiThenLo first so that it wins ties.
    for order in [SwitchOrder::HiThenLo, SwitchOrder::LoThenHi] {
        let (a1, a2) = order.accels(u);
        for (t1, t2) in bang_bang_candidates(b, a1, a2) {
            let cand = AxisBangBang { order, t1, t2, a1, a2, boundary: *b };
            let better = match &best {
                None => true,
                Some(cur) => cand.total_time() < cur.total_time() - TIE_TOL,
            };
            if better {
                best = Some(cand);
            }
        }
    }
    best.ok_or(AxisError::Infeasible)
}

/// Bang-bang profile stretched to a prescribed duration by scaling the bounds with `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncResult {
    pub traj: AxisBangBang,
    pub alpha: f64,
}

/// Profile that needs no acceleration at all: `p2 = p0 + v0 T` and `v2 = v0`.
fn coasting(b: &AxisBoundary, t_star: f64) -> bool {
    let scale = 1.0 + b.p0.abs() + b.p2.abs() + (b.v0.abs() + b.v2.abs()) * (1.0 + t_star);
    (b.v2 - b.v0).abs() <= 1e-12 * scale && (b.p2 - b.p0 - b.v0 * t_star).abs() <= 1e-12 * scale
}

/// Solutions `(order, t1, alpha)` of the bang-bang motion equations with bounds scaled by
/// `alpha` and the extra condition `t1 + t2 = t_star`.
///
/// With `D = dp - v0 T` and `dv = v2 - v0`, eliminating `alpha` leaves a quadratic in `t1`:
/// `dv (a2 - a1)/2 t1^2 + (a1 - a2)(dv T - D) t1 + a2 T (dv T/2 - D) = 0`.
fn augmented_solutions(b: &AxisBoundary, u: &AxisBounds, t_star: f64) -> Vec<(SwitchOrder, f64, f64)> {
    let dv = b.v2 - b.v0;
    let d = b.p2 - b.p0 - b.v0 * t_star;
    let mut out = Vec::with_capacity(4);
    for order in [SwitchOrder::HiThenLo, SwitchOrder::LoThenHi] {
        let (a1, a2) = order.accels(u);
        let qa = 0.5 * dv * (a2 - a1);
        let qb = (a1 - a2) * (dv * t_star - d);
        let qc = a2 * t_star * (0.5 * dv * t_star - d);
        for t1 in quadratic_roots(qa, qb, qc) {
            if !(t1 >= -FEAS_TOL && t1 <= t_star + FEAS_TOL) {
                continue;
            }
            let t1 = t1.clamp(0.0, t_star);
            let t2 = t_star - t1;
            let den_v = a1 * t1 + a2 * t2;
            let den_p = a1 * t1 * (t_star - 0.5 * t1) + 0.5 * a2 * t2 * t2;
            let alpha = if den_v.abs() * t_star >= den_p.abs() { dv / den_v } else { d / den_p };
            if alpha.is_finite() && alpha > 0.0 && alpha <= 1.0 + 1e-9 {
                let (t1, alpha) = polish(b, a1, a2, t_star, t1, alpha.min(1.0));
                out.push((order, t1, alpha));
            }
        }
    }
    out
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a.abs() <= 1e-14 * scale {
        if b == 0.0 {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < -1e-12 * (b * b + (4.0 * a * c).abs()) {
        return Vec::new();
    }
    let sq = disc.max(0.0).sqrt();
    // Numerically stable pair.
    let q = -0.5 * (b + b.signum() * sq);
    if q == 0.0 {
        return vec![0.0];
    }
    let r1 = q / a;
    let r2 = c / q;
    if sq == 0.0 {
        vec![r1]
    } else {
        vec![r1, r2]
    }
}

/// A few Newton steps on the velocity and position residuals in `(t1, alpha)`.
fn polish(b: &AxisBoundary, a1: f64, a2: f64, t_star: f64, t1: f64, alpha: f64) -> (f64, f64) {
    let residual = |t1: f64, alpha: f64| {
        let t2 = t_star - t1;
        let rv = b.v0 + alpha * (a1 * t1 + a2 * t2) - b.v2;
        let rp = b.p0 + b.v0 * t_star + alpha * (a1 * t1 * (t_star - 0.5 * t1) + 0.5 * a2 * t2 * t2) - b.p2;
        (rv, rp)
    };
    let (mut t1, mut alpha) = (t1, alpha);
    let (mut rv, mut rp) = residual(t1, alpha);
    for _ in 0..4 {
        let norm = rv.abs() + rp.abs();
        if norm == 0.0 {
            break;
        }
        let t2 = t_star - t1;
        let j11 = alpha * (a1 - a2);
        let j12 = a1 * t1 + a2 * t2;
        let j21 = alpha * (a1 - a2) * t2;
        let j22 = a1 * t1 * (t_star - 0.5 * t1) + 0.5 * a2 * t2 * t2;
        let det = j11 * j22 - j12 * j21;
        if det.abs() < 1e-14 * (j11.abs() * j22.abs() + j12.abs() * j21.abs()).max(1e-300) {
            break;
        }
        let dt1 = (rv * j22 - rp * j12) / det;
        let dal = (j11 * rp - j21 * rv) / det;
        let nt1 = (t1 - dt1).clamp(0.0, t_star);
        let nal = (alpha - dal).min(1.0);
        if !(nal > 0.0) {
            break;
        }
        let (nrv, nrp) = residual(nt1, nal);
        if nrv.abs() + nrp.abs() >= norm {
            break;
        }
        t1 = nt1;
        alpha = nal;
        rv = nrv;
        rp = nrp;
    }
    (t1, alpha)
}

/// Stretches the axis motion to last exactly `t_star` by scaling both bounds with `alpha`.
///
/// When the augmented system has several solutions the largest `alpha` in `(0, 1]` wins.
/// Some durations of an axis that is already cruising close to its target velocity cannot be
/// reached by any single-switch profile; those return [`AxisError::NoConvergence`].
pub fn scale_axis_to_duration(
    b: &AxisBoundary,
    u: &AxisBounds,
    t_star: f64,
) -> Result<SyncResult, AxisError> {
    let min = solve_axis_min_time(b, u)?;
    scale_from_min(&min, u, t_star)
}

fn scale_from_min(min: &AxisBangBang, u: &AxisBounds, t_star: f64) -> Result<SyncResult, AxisError> {
    let b = &min.boundary;
    let minimum = min.total_time();
    if !t_star.is_finite() || t_star < minimum - 1e-9 {
        return Err(AxisError::InfeasibleDuration { requested: t_star, minimum });
    }
    if coasting(b, t_star) {
        let half = 0.5 * t_star;
        let traj = AxisBangBang {
            order: SwitchOrder::HiThenLo,
            t1: half,
            t2: t_star - half,
            a1: 0.0,
            a2: 0.0,
            boundary: *b,
        };
        return Ok(SyncResult { traj, alpha: 1.0 });
    }
    if t_star - minimum <= 1e-12 * (1.0 + t_star) {
        let mut traj = *min;
        // Pin the duration to the request exactly.
        traj.t2 = (t_star - traj.t1).max(0.0);
        return Ok(SyncResult { traj, alpha: 1.0 });
    }

    let candidates = augmented_solutions(b, u, t_star);
    let build = |&(order, t1, alpha): &(SwitchOrder, f64, f64)| {
        let (a1, a2) = order.accels(&u.scaled(alpha));
        SyncResult {
            traj: AxisBangBang { order, t1, t2: t_star - t1, a1, a2, boundary: *b },
            alpha,
        }
    };
    candidates
        .iter()
        .map(build)
        .fold(None, |best: Option<SyncResult>, cand| match best {
            Some(cur) if cur.alpha >= cand.alpha - 1e-12 => Some(cur),
            _ => Some(cand),
        })
        .ok_or(AxisError::NoConvergence { requested: t_star })
}

/// Position and velocity of a point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl PointState {
    pub fn new(p: Vector3<f64>, v: Vector3<f64>) -> Self {
        Self { p, v }
    }

    fn axis(&self, i: usize, to: &PointState) -> AxisBoundary {
        AxisBoundary::new(self.p[i], self.v[i], to.p[i], to.v[i])
    }
}

/// Per-axis acceleration bounds (x, y, z).
pub type AxisBoundsSet = [AxisBounds; 3];

#[derive(Debug, Error, Clone, PartialEq)]
#[error("axis {axis}: {source}")]
pub struct SegmentError {
    pub axis: usize,
    #[source]
    pub source: AxisError,
}

/// Three synchronized axis profiles sharing the duration `duration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmmSegment {
    pub start: PointState,
    pub end: PointState,
    pub axes: [AxisBangBang; 3],
    pub alphas: [f64; 3],
    pub duration: f64,
}

/// Position, velocity and acceleration vectors at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSample {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
}

impl PmmSegment {
    /// Kinematics at `t`, clamped into `[0, duration]`.
    pub fn sample(&self, t: f64) -> PointSample {
        let mut out = PointSample { p: Vector3::zeros(), v: Vector3::zeros(), a: Vector3::zeros() };
        for (i, axis) in self.axes.iter().enumerate() {
            let s = axis.sample(t);
            out.p[i] = s.p;
            out.v[i] = s.v;
            out.a[i] = s.a;
        }
        out
    }
}

/// Slowest single-axis minimum time `max(T_x, T_y, T_z)`, without building the synchronized
/// profiles. A lower bound on [`solve_segment`]'s duration, and equal to it unless an axis
/// cannot be stretched that far.
pub fn segment_min_time(
    start: &PointState,
    end: &PointState,
    u: &AxisBoundsSet,
) -> Result<f64, SegmentError> {
    let mut t = 0.0f64;
    for (axis, bounds) in u.iter().enumerate() {
        let traj = solve_axis_min_time(&start.axis(axis, end), bounds)
            .map_err(|source| SegmentError { axis, source })?;
        t = t.max(traj.total_time());
    }
    Ok(t)
}

/// Durations of every unscaled bang-bang solution of the axis, both switch orders.
fn unscaled_durations(b: &AxisBoundary, u: &AxisBounds) -> Vec<f64> {
    [SwitchOrder::HiThenLo, SwitchOrder::LoThenHi]
        .into_iter()
        .flat_map(|order| {
            let (a1, a2) = order.accels(u);
            bang_bang_candidates(b, a1, a2).map(|(t1, t2)| t1 + t2).collect::<Vec<_>>()
        })
        .collect()
}

/// Solves each axis, takes the slowest one as the segment duration and stretches the others.
///
/// An axis that is already moving can have a gap in the durations it reaches with scaled bounds:
/// too weak a brake cannot make it arrive late, until the duration is long enough to overshoot
/// and come back. The ends of such gaps are unscaled solutions, so when the slowest minimum time
/// falls into a gap the segment takes the shortest of those durations that every axis reaches.
pub fn solve_segment(
    start: &PointState,
    end: &PointState,
    u: &AxisBoundsSet,
) -> Result<PmmSegment, SegmentError> {
    let mut mins = [None; 3];
    let mut t_star = 0.0f64;
    for (axis, bounds) in u.iter().enumerate() {
        let traj = solve_axis_min_time(&start.axis(axis, end), bounds)
            .map_err(|source| SegmentError { axis, source })?;
        t_star = t_star.max(traj.total_time());
        mins[axis] = Some(traj);
    }
    let mins = mins.map(|m| m.expect("every axis solved"));
    let first = match synchronize(start, end, u, &mins, t_star) {
        Err(e) if matches!(e.source, AxisError::NoConvergence { .. }) => e,
        done => return done,
    };
    let mut later: Vec<f64> = mins
        .iter()
        .zip(u)
        .flat_map(|(m, bounds)| unscaled_durations(&m.boundary, bounds))
        .filter(|t| *t > t_star)
        .collect();
    later.sort_by(f64::total_cmp);
    later
        .into_iter()
        .find_map(|t| synchronize(start, end, u, &mins, t).ok())
        .ok_or(first)
}

fn synchronize(
    start: &PointState,
    end: &PointState,
    u: &AxisBoundsSet,
    mins: &[AxisBangBang; 3],
    t_star: f64,
) -> Result<PmmSegment, SegmentError> {
    let mut axes = *mins;
    let mut alphas = [1.0; 3];
    for axis in 0..3 {
        let min = mins[axis];
        if min.total_time() == t_star && !coasting(&min.boundary, t_star) {
            continue;
        }
        let sync = scale_from_min(&min, &u[axis], t_star).map_err(|source| SegmentError { axis, source })?;
        axes[axis] = sync.traj;
        alphas[axis] = sync.alpha;
    }
    Ok(PmmSegment { start: *start, end: *end, axes, alphas, duration: t_star })
}

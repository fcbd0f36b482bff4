//! Rigid-body quadrotor model with linear drag, integrated with classical RK4.
//!
//! The attitude quaternion maps body to world coordinates and is renormalized after every
//! step. Rotor thrusts enter through [`rotor_mix`](crate::tracker::rotor_mix).

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tracker::rotor_mix;
use crate::velocity_graph::Gate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("non-finite state at t = {t}: {what}")]
    NonFinite { t: f64, what: String },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("gate motion times must be strictly increasing")]
    UnorderedSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadParams {
    /// kg
    pub mass: f64,
    /// Diagonal of the inertia tensor, kg m^2.
    pub inertia: Vector3<f64>,
    /// m
    pub arm_length: f64,
    /// Rotor torque constant, m.
    pub c_tau: f64,
    /// Per-rotor thrust limits, N.
    pub u_min: f64,
    pub u_max: f64,
    /// Diagonal linear drag, kg/s.
    pub drag: Vector3<f64>,
    /// m/s^2
    pub gravity: Vector3<f64>,
}

impl Default for QuadParams {
    fn default() -> Self {
        Self {
            mass: 0.752,
            inertia: Vector3::new(2.5e-3, 2.1e-3, 4.3e-3),
            arm_length: 0.15,
            c_tau: 0.022,
            u_min: 0.0,
            u_max: 8.5,
            drag: Vector3::new(0.26, 0.28, 0.42),
            gravity: Vector3::new(0.0, 0.0, -9.81),
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidParams(m.to_string()));
        if !(self.mass > 0.0) {
            return bad("mass must be positive");
        }
        if self.inertia.iter().any(|j| !(*j > 0.0)) {
            return bad("inertia entries must be positive");
        }
        if !(self.arm_length > 0.0 && self.c_tau > 0.0) {
            return bad("arm_length and c_tau must be positive");
        }
        if !(0.0 <= self.u_min && self.u_min < self.u_max) {
            return bad("need 0 <= u_min < u_max");
        }
        if self.drag.iter().any(|d| !(*d >= 0.0)) {
            return bad("drag entries must be nonnegative");
        }
        Ok(())
    }

    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity.norm() / 4.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadState {
    pub p: Vector3<f64>,
    /// Body-to-world rotation.
    pub q: UnitQuaternion<f64>,
    pub v: Vector3<f64>,
    /// Body rates in the body frame.
    pub w: Vector3<f64>,
}

impl QuadState {
    pub fn hover_at(p: Vector3<f64>) -> Self {
        Self { p, q: UnitQuaternion::identity(), v: Vector3::zeros(), w: Vector3::zeros() }
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.v.iter()).chain(self.w.iter()).all(|x| x.is_finite())
            && self.q.coords.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotorCommand {
    pub f: [f64; 4],
}

impl RotorCommand {
    pub fn uniform(f: f64) -> Self {
        Self { f: [f; 4] }
    }
}

/// Time derivative of a [`QuadState`]; `dq` is not a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub dp: Vector3<f64>,
    pub dq: Quaternion<f64>,
    pub dv: Vector3<f64>,
    pub dw: Vector3<f64>,
}

impl StateDerivative {
    pub fn norm(&self) -> f64 {
        (self.dp.norm_squared() + self.dq.coords.norm_squared() + self.dv.norm_squared() + self.dw.norm_squared())
            .sqrt()
    }
}

/// Axis-aligned box with a constant force acting on anything inside (boundary included).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindRegion {
    pub box_min: Vector3<f64>,
    pub box_max: Vector3<f64>,
    pub force: Vector3<f64>,
}

impl WindRegion {
    pub fn new(box_min: Vector3<f64>, box_max: Vector3<f64>, force: Vector3<f64>) -> Result<Self, SimError> {
        if (0..3).any(|i| !(box_min[i] < box_max[i])) {
            return Err(SimError::InvalidParams("wind box min must be below max on every axis".into()));
        }
        Ok(Self { box_min, box_max, force })
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.box_min[i] && p[i] <= self.box_max[i])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub wind: Vec<WindRegion>,
}

/// Sum of the forces of all wind regions containing `p`.
pub fn wind_force(p: &Vector3<f64>, _t: f64, env: &Environment) -> Vector3<f64> {
    env.wind.iter().filter(|w| w.contains(p)).map(|w| w.force).sum()
}

/// Piecewise-linear gate displacement over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateMotion {
    schedule: Vec<(f64, Vector3<f64>)>,
}

impl GateMotion {
    pub fn new(schedule: Vec<(f64, Vector3<f64>)>) -> Result<Self, SimError> {
        if schedule.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(SimError::UnorderedSchedule);
        }
        Ok(Self { schedule })
    }

    pub fn schedule(&self) -> &[(f64, Vector3<f64>)] {
        &self.schedule
    }

    /// Zero before the first knot, held after the last one, linear in between.
    pub fn offset(&self, t: f64) -> Vector3<f64> {
        let Some(first) = self.schedule.first() else { return Vector3::zeros() };
        if t < first.0 {
            return Vector3::zeros();
        }
        let i = self.schedule.partition_point(|(tk, _)| *tk <= t);
        if i >= self.schedule.len() {
            return self.schedule[self.schedule.len() - 1].1;
        }
        let (t0, o0) = self.schedule[i - 1];
        let (t1, o1) = self.schedule[i];
        o0 + (o1 - o0) * ((t - t0) / (t1 - t0))
    }
}

/// The gate as it stands at time `t`.
pub fn gate_at(gate: &Gate, t: f64) -> Gate {
    let mut g = gate.clone();
    if let Some(m) = &gate.motion {
        g.center += m.offset(t);
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassEvent {
    /// Distance from the crossing point to the gate center, in the gate plane.
    pub deviation: f64,
    pub time: f64,
    pub valid: bool,
}

/// Forward crossing of the gate plane by the segment `p_prev -> p_now`.
pub fn detect_gate_pass(
    p_prev: &Vector3<f64>,
    p_now: &Vector3<f64>,
    t_prev: f64,
    t_now: f64,
    gate: &Gate,
) -> Option<PassEvent> {
    let n = gate.exit_dir;
    let d0 = (p_prev - gate.center).dot(&n);
    let d1 = (p_now - gate.center).dot(&n);
    if !(d0 < 0.0 && d1 >= 0.0) {
        return None;
    }
    let s = d0 / (d0 - d1);
    let x = p_prev + (p_now - p_prev) * s;
    let r = x - gate.center;
    let deviation = (r - n * r.dot(&n)).norm();
    Some(PassEvent { deviation, time: t_prev + (t_now - t_prev) * s, valid: deviation <= gate.pass_radius })
}

/// Rigid-body dynamics with linear drag and an external world-frame force.
pub fn deriv(state: &QuadState, cmd: &RotorCommand, params: &QuadParams, external_force: &Vector3<f64>) -> StateDerivative {
    let (f_t, tau) = rotor_mix(&cmd.f, params);
    let rot = state.q.to_rotation_matrix();
    let r = rot.matrix();
    let drag = r * nalgebra::Matrix3::from_diagonal(&params.drag) * r.transpose() * state.v;
    let dv = params.gravity + r * Vector3::new(0.0, 0.0, f_t) / params.mass - drag / params.mass
        + external_force / params.mass;
    let j = params.inertia;
    let jw = j.component_mul(&state.w);
    let dw = (tau - state.w.cross(&jw)).component_div(&j);
    let dq = state.q.quaternion() * Quaternion::from_imag(state.w) * 0.5;
    StateDerivative { dp: state.v, dq, dv, dw }
}

fn advance(state: &QuadState, d: &StateDerivative, h: f64) -> QuadState {
    QuadState {
        p: state.p + d.dp * h,
        q: UnitQuaternion::new_unchecked(state.q.quaternion() + d.dq * h),
        v: state.v + d.dv * h,
        w: state.w + d.dw * h,
    }
}

/// One classical RK4 step; wind is sampled at each stage position.
pub fn step_rk4(
    state: &QuadState,
    cmd: &RotorCommand,
    params: &QuadParams,
    env: &Environment,
    t: f64,
    dt: f64,
) -> Result<QuadState, SimError> {
    let f = |s: &QuadState, ts: f64| deriv(s, cmd, params, &wind_force(&s.p, ts, env));
    let k1 = f(state, t);
    let k2 = f(&advance(state, &k1, 0.5 * dt), t + 0.5 * dt);
    let k3 = f(&advance(state, &k2, 0.5 * dt), t + 0.5 * dt);
    let k4 = f(&advance(state, &k3, dt), t + dt);
    let w = dt / 6.0;
    let q = state.q.quaternion() + (k1.dq + k2.dq * 2.0 + k3.dq * 2.0 + k4.dq) * w;
    let next = QuadState {
        p: state.p + (k1.dp + k2.dp * 2.0 + k3.dp * 2.0 + k4.dp) * w,
        q: UnitQuaternion::from_quaternion(q),
        v: state.v + (k1.dv + k2.dv * 2.0 + k3.dv * 2.0 + k4.dv) * w,
        w: state.w + (k1.dw + k2.dw * 2.0 + k3.dw * 2.0 + k4.dw) * w,
    };
    if !next.is_finite() {
        return Err(SimError::NonFinite { t: t + dt, what: format!("{next:?}") });
    }
    Ok(next)
}

//! Contouring tracker on a point-mass prediction model, plus the attitude/rate cascade and
//! rotor mixing that turn its acceleration command into single-rotor thrusts.
//!
//! The receding-horizon problem is solved by projected gradient descent with a
//! Barzilai-Borwein step and Armijo backtracking. Every accepted iterate lowers the cost, so
//! the returned horizon is never worse than its warm start.

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::path::Path;
use crate::sim::{QuadParams, QuadState, RotorCommand};

const FD_THETA: f64 = 1e-3;
const ARMIJO: f64 = 1e-4;
const CONSTRAINT_TOL: f64 = 1e-6;
/// Floor of the schedule cap so progress never stalls where a plan passes near rest, m/s.
const MIN_RATE_CAP: f64 = 1.0;
/// Smallest upward specific thrust the cascade will request, m/s^2.
const MIN_UP_ACCEL: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
    #[error("contouring solver diverged: {0}")]
    SolverDiverged(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContouringConfig {
    pub q_l: f64,
    pub q_c: f64,
    pub mu: f64,
    pub r_dv: f64,
    pub v_theta_max: f64,
    /// Largest change of progress rate between consecutive steps, m/s.
    pub dv_theta_max: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub dt: f64,
    pub a_lo: Vector3<f64>,
    pub a_hi: Vector3<f64>,
    pub max_iter: usize,
    /// Keeps predicted progress from running ahead of the plan's own schedule, replayed at this
    /// rate from the current progress; 0 leaves only `v_theta_max`.
    pub plan_speed_scale: f64,
}

impl Default for ContouringConfig {
    fn default() -> Self {
        Self {
            q_l: 100.0,
            q_c: 200.0,
            mu: 1.0,
            r_dv: 0.1,
            v_theta_max: 20.0,
            dv_theta_max: 1.5,
            n: 20,
            dt: 0.06,
            a_lo: Vector3::new(-20.0, -20.0, -9.0),
            a_hi: Vector3::new(20.0, 20.0, 25.0),
            max_iter: 8,
            plan_speed_scale: 1.0,
        }
    }
}

impl ContouringConfig {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let bad = |m: &str| Err(TrackerError::InvalidConfig(m.to_string()));
        if [self.q_l, self.q_c, self.mu, self.r_dv, self.plan_speed_scale].iter().any(|w| !(*w >= 0.0)) {
            return bad("weights must be nonnegative");
        }
        if self.n < 1 {
            return bad("N must be at least 1");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.v_theta_max > 0.0 && self.dv_theta_max > 0.0) {
            return bad("progress-rate bounds must be positive");
        }
        if (0..3).any(|i| !(self.a_lo[i] < self.a_hi[i])) {
            return bad("acceleration bounds need a_lo < a_hi");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackerState {
    pub theta: f64,
    pub v_theta: f64,
    pub last_accel: Vector3<f64>,
}

/// One predicted step: the position reached after applying `accel` and advancing progress at
/// `v_theta` for one horizon interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonStep {
    pub position: Vector3<f64>,
    pub accel: Vector3<f64>,
    pub v_theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContouringSolution {
    pub accel: Vector3<f64>,
    pub state: TrackerState,
    pub horizon: Vec<HorizonStep>,
    pub cost: f64,
    /// Cost of the starting point followed by every accepted iterate.
    pub cost_trace: Vec<f64>,
    accels: Vec<Vector3<f64>>,
    v_thetas: Vec<f64>,
}

/// Decision variables carried between ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub accels: Vec<Vector3<f64>>,
    pub v_thetas: Vec<f64>,
}

impl ContouringSolution {
    /// The solution advanced by `elapsed` seconds, held at its last value past the horizon.
    pub fn shifted(&self, elapsed: f64, dt: f64) -> WarmStart {
        let n = self.accels.len();
        let shift = (elapsed / dt).max(0.0);
        let at = |k: usize| {
            let s = k as f64 + shift;
            let i = (s.floor() as usize).min(n - 1);
            let j = (i + 1).min(n - 1);
            let f = (s - i as f64).clamp(0.0, 1.0);
            (self.accels[i] * (1.0 - f) + self.accels[j] * f, self.v_thetas[i] * (1.0 - f) + self.v_thetas[j] * f)
        };
        let (accels, v_thetas) = (0..n).map(at).unzip();
        WarmStart { accels, v_thetas }
    }
}

fn stage_cost(p: &Vector3<f64>, theta: f64, path: &Path, cfg: &ContouringConfig) -> f64 {
    let (q, t) = path.point_at_clamped(theta);
    let e = p - q;
    let el = e.dot(&t);
    let ec2 = (e.norm_squared() - el * el).max(0.0);
    cfg.q_l * el * el + cfg.q_c * ec2
}

/// Sum of lag, contour, progress-rate-change and progress terms along a predicted horizon.
pub fn contouring_cost(
    horizon: &[HorizonStep],
    theta0: f64,
    v_theta_prev: f64,
    path: &Path,
    cfg: &ContouringConfig,
) -> f64 {
    let mut theta = theta0;
    let mut prev = v_theta_prev;
    let mut cost = 0.0;
    for s in horizon {
        theta += s.v_theta * cfg.dt;
        let dv = s.v_theta - prev;
        cost += stage_cost(&s.position, theta, path, cfg) + cfg.r_dv * dv * dv - cfg.mu * s.v_theta;
        prev = s.v_theta;
    }
    cost
}

/// Internal problem over scaled variables: `z = accel * dt` and progress rates.
struct Problem<'a> {
    p0: Vector3<f64>,
    v0: Vector3<f64>,
    theta0: f64,
    /// Plan time at `theta0`.
    plan_t0: f64,
    v_theta_prev: f64,
    path: &'a Path,
    cfg: &'a ContouringConfig,
}

#[derive(Clone)]
struct Vars {
    z: Vec<Vector3<f64>>,
    vt: Vec<f64>,
}

impl Problem<'_> {
    fn rollout(&self, x: &Vars) -> Vec<HorizonStep> {
        let dt = self.cfg.dt;
        let (mut p, mut v) = (self.p0, self.v0);
        x.z.iter()
            .zip(&x.vt)
            .map(|(z, &vt)| {
                let a = z / dt;
                p += v * dt + a * (0.5 * dt * dt);
                v += a * dt;
                HorizonStep { position: p, accel: a, v_theta: vt }
            })
            .collect()
    }

    fn cost(&self, x: &Vars) -> f64 {
        contouring_cost(&self.rollout(x), self.theta0, self.v_theta_prev, self.path, self.cfg)
    }

    fn gradient(&self, x: &Vars) -> Vars {
        let cfg = self.cfg;
        let dt = cfg.dt;
        let n = x.z.len();
        let horizon = self.rollout(x);
        // Stage sensitivities to position and progress at each step.
        let mut gp = Vec::with_capacity(n);
        let mut gth = Vec::with_capacity(n);
        let mut theta = self.theta0;
        for (k, s) in horizon.iter().enumerate() {
            theta += x.vt[k] * dt;
            let (q, t) = self.path.point_at_clamped(theta);
            let e = s.position - q;
            let el = e.dot(&t);
            gp.push(e * (2.0 * cfg.q_c) + t * (2.0 * (cfg.q_l - cfg.q_c) * el));
            let hi = stage_cost(&s.position, theta + FD_THETA, self.path, cfg);
            let lo = stage_cost(&s.position, theta - FD_THETA, self.path, cfg);
            gth.push((hi - lo) / (2.0 * FD_THETA));
        }
        // p_k (1-based) = p0 + k dt v0 + sum_{j<k} (k - j - 1/2) dt z_j
        let mut gz = vec![Vector3::zeros(); n];
        let mut tail_sum = Vector3::zeros();
        let mut tail_weighted = Vector3::zeros();
        for j in (0..n).rev() {
            // Steps k = j+1..n, with weight (k - j - 1/2).
            tail_weighted += tail_sum + gp[j] * 0.5;
            tail_sum += gp[j];
            gz[j] = tail_weighted * dt;
        }
        // theta_k = theta0 + dt sum_{j<k} vt_j
        let mut gv = vec![0.0; n];
        let mut acc = 0.0;
        for j in (0..n).rev() {
            acc += gth[j];
            gv[j] = acc * dt - cfg.mu;
        }
        let mut prev = self.v_theta_prev;
        for j in 0..n {
            let d = x.vt[j] - prev;
            gv[j] += 2.0 * cfg.r_dv * d;
            if j > 0 {
                gv[j - 1] -= 2.0 * cfg.r_dv * d;
            }
            prev = x.vt[j];
        }
        Vars { z: gz, vt: gv }
    }

    /// Clamp accelerations into the box and progress rates into their bounds, forward in time.
    fn project(&self, x: &mut Vars) {
        let cfg = self.cfg;
        for z in &mut x.z {
            for i in 0..3 {
                z[i] = z[i].clamp(cfg.a_lo[i] * cfg.dt, cfg.a_hi[i] * cfg.dt);
            }
        }
        let mut prev = self.v_theta_prev.clamp(0.0, cfg.v_theta_max);
        let mut theta = self.theta0;
        for (k, vt) in x.vt.iter_mut().enumerate() {
            let (lo, hi) = self.rate_range(k, prev, theta);
            *vt = vt.clamp(lo, hi);
            prev = *vt;
            theta += *vt * cfg.dt;
        }
    }

    /// Feasible rate for step `k` after rate `prev`, starting the step at progress `theta`. The
    /// rate-change bound wins over the schedule cap when they conflict.
    fn rate_range(&self, k: usize, prev: f64, theta: f64) -> (f64, f64) {
        let cfg = self.cfg;
        let lo = (prev - cfg.dv_theta_max).max(0.0);
        let mut hi = (prev + cfg.dv_theta_max).min(cfg.v_theta_max);
        if cfg.plan_speed_scale > 0.0 {
            let t = self.plan_t0 + cfg.plan_speed_scale * (k + 1) as f64 * cfg.dt;
            let cap = ((self.path.progress_at_time(t) - theta) / cfg.dt).max(MIN_RATE_CAP);
            hi = hi.min(cap);
        }
        (lo, hi.max(lo))
    }

    /// Damped Gauss-Newton direction over the variables not pinned at a bound, or `None` if
    /// the system cannot be factored. `damping` is relative to the largest curvature.
    fn newton_direction(&self, x: &Vars, g: &Vars, damping: f64) -> Option<Vars> {
        let cfg = self.cfg;
        let dt = cfg.dt;
        let n = x.z.len();
        let dim = 4 * n;
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        let mut theta = self.theta0;
        for k in 1..=n {
            theta += x.vt[k - 1] * dt;
            let (_, t) = self.path.point_at_clamped(theta);
            let tt = t * t.transpose();
            let pp = (Matrix3::identity() - tt) * (2.0 * cfg.q_c) + tt * (2.0 * cfg.q_l);
            let pth = t * (-2.0 * cfg.q_l * dt);
            let thth = 2.0 * cfg.q_l * dt * dt;
            for j in 0..k {
                let cj = (k - j) as f64 - 0.5;
                for m in 0..k {
                    let cm = (k - m) as f64 - 0.5;
                    let mut blk = h.fixed_view_mut::<3, 3>(3 * j, 3 * m);
                    blk += pp * (cj * cm * dt * dt);
                    let mut col = h.fixed_view_mut::<3, 1>(3 * j, 3 * n + m);
                    col += pth * (cj * dt);
                    let mut row = h.fixed_view_mut::<1, 3>(3 * n + m, 3 * j);
                    row += pth.transpose() * (cj * dt);
                    h[(3 * n + j, 3 * n + m)] += thth;
                }
            }
        }
        for k in 0..n {
            let i = 3 * n + k;
            h[(i, i)] += 2.0 * cfg.r_dv;
            if k > 0 {
                h[(i - 1, i - 1)] += 2.0 * cfg.r_dv;
                h[(i, i - 1)] -= 2.0 * cfg.r_dv;
                h[(i - 1, i)] -= 2.0 * cfg.r_dv;
            }
        }

        let mut rhs = DVector::<f64>::zeros(dim);
        let mut free = vec![true; dim];
        let mut prev = self.v_theta_prev.clamp(0.0, cfg.v_theta_max);
        let mut theta = self.theta0;
        for k in 0..n {
            for i in 0..3 {
                let (lo, hi) = (cfg.a_lo[i] * dt, cfg.a_hi[i] * dt);
                let (xi, gi) = (x.z[k][i], g.z[k][i]);
                free[3 * k + i] = !((xi <= lo + 1e-12 && gi > 0.0) || (xi >= hi - 1e-12 && gi < 0.0));
                rhs[3 * k + i] = -gi;
            }
            let (lo, hi) = self.rate_range(k, prev, theta);
            let (xi, gi) = (x.vt[k], g.vt[k]);
            free[3 * n + k] = !((xi <= lo + 1e-12 && gi > 0.0) || (xi >= hi - 1e-12 && gi < 0.0));
            rhs[3 * n + k] = -gi;
            prev = xi;
            theta += xi * dt;
        }
        let scale = (0..dim).map(|i| h[(i, i)]).fold(0.0, f64::max).max(1e-12);
        for i in 0..dim {
            if free[i] {
                h[(i, i)] += damping.max(1e-8) * scale;
            } else {
                h.row_mut(i).fill(0.0);
                h.column_mut(i).fill(0.0);
                h[(i, i)] = 1.0;
                rhs[i] = 0.0;
            }
        }
        let d = h.cholesky()?.solve(&rhs);
        if !d.iter().all(|v| v.is_finite()) {
            return None;
        }
        Some(Vars {
            z: (0..n).map(|k| Vector3::new(d[3 * k], d[3 * k + 1], d[3 * k + 2])).collect(),
            vt: (0..n).map(|k| d[3 * n + k]).collect(),
        })
    }

    fn violation(&self, x: &Vars) -> f64 {
        let cfg = self.cfg;
        let mut worst: f64 = 0.0;
        for z in &x.z {
            for i in 0..3 {
                let a = z[i] / cfg.dt;
                worst = worst.max(cfg.a_lo[i] - a).max(a - cfg.a_hi[i]);
            }
        }
        let mut prev = self.v_theta_prev.clamp(0.0, cfg.v_theta_max);
        let mut theta = self.theta0;
        for (k, &vt) in x.vt.iter().enumerate() {
            let (lo, hi) = self.rate_range(k, prev, theta);
            worst = worst.max(lo - vt).max(vt - hi);
            prev = vt;
            theta += vt * cfg.dt;
        }
        worst
    }
}

fn dot(a: &Vars, b: &Vars) -> f64 {
    a.z.iter().zip(&b.z).map(|(x, y)| x.dot(y)).sum::<f64>() + a.vt.iter().zip(&b.vt).map(|(x, y)| x * y).sum::<f64>()
}

fn axpy(x: &Vars, s: f64, d: &Vars) -> Vars {
    Vars {
        z: x.z.iter().zip(&d.z).map(|(a, b)| a + b * s).collect(),
        vt: x.vt.iter().zip(&d.vt).map(|(a, b)| a + b * s).collect(),
    }
}

/// Solves one receding-horizon contouring problem from position `p` and velocity `v`.
///
/// `state.theta` is used as the initial progress; callers re-project it onto the current path
/// before each tick. Without a warm start the horizon starts from zero acceleration and the
/// previous progress rate.
pub fn solve_contouring(
    p: &Vector3<f64>,
    v: &Vector3<f64>,
    state: &TrackerState,
    warm: Option<&WarmStart>,
    path: &Path,
    cfg: &ContouringConfig,
) -> Result<ContouringSolution, TrackerError> {
    cfg.validate()?;
    let n = cfg.n;
    let prob = Problem {
        p0: *p,
        v0: *v,
        theta0: state.theta,
        plan_t0: path.plan_time_at(state.theta),
        v_theta_prev: state.v_theta,
        path,
        cfg,
    };

    let cold = Vars { z: vec![Vector3::zeros(); n], vt: vec![state.v_theta; n] };
    let mut x = match warm {
        Some(w) if w.accels.len() == n && w.v_thetas.len() == n => {
            Vars { z: w.accels.iter().map(|a| a * cfg.dt).collect(), vt: w.v_thetas.clone() }
        }
        _ => cold.clone(),
    };
    prob.project(&mut x);
    let mut fx = prob.cost(&x);
    if !fx.is_finite() {
        return Err(TrackerError::SolverDiverged(format!("non-finite initial cost {fx}")));
    }
    let mut trace = vec![fx];
    let mut g = prob.gradient(&x);
    let gnorm = dot(&g, &g).sqrt();
    let mut step = if gnorm > 0.0 { 1.0 / gnorm } else { 1.0 };
    let mut damping = 1e-3;

    for _ in 0..cfg.max_iter {
        // Armijo search along the projected arc of direction `d` (scaled by `s0`).
        let search = |d: &Vars, s0: f64, tries: usize| {
            let mut s = s0;
            for _ in 0..tries {
                let mut cand = axpy(&x, s, d);
                prob.project(&mut cand);
                let delta = axpy(&cand, -1.0, &x);
                let decrease = dot(&g, &delta);
                if decrease >= 0.0 {
                    return None;
                }
                let fc = prob.cost(&cand);
                if fc.is_finite() && fc <= fx + ARMIJO * decrease {
                    return Some((cand, fc, delta, s));
                }
                s *= 0.5;
            }
            None
        };
        let newton = prob.newton_direction(&x, &g, damping).and_then(|d| search(&d, 1.0, 12));
        match &newton {
            Some((_, _, _, s)) if *s == 1.0 => damping = (damping / 3.0).max(1e-8),
            Some(_) => damping *= 4.0,
            None => damping *= 10.0,
        }
        let accepted = match newton {
            Some(hit) => Some(hit),
            None => {
                let neg = axpy(&g, -2.0, &g);
                search(&neg, step, 30)
            }
        };
        let Some((cand, fc, d, s)) = accepted else { break };
        let g_new = prob.gradient(&cand);
        let y = axpy(&g_new, -1.0, &g);
        let sy = dot(&d, &y);
        step = if sy > 1e-16 { (dot(&d, &d) / sy).clamp(1e-8, 1e3) } else { s * 2.0 };
        let improvement = fx - fc;
        x = cand;
        fx = fc;
        g = g_new;
        trace.push(fx);
        if improvement <= 1e-10 * (1.0 + fx.abs()) {
            break;
        }
    }

    let viol = prob.violation(&x);
    if viol > CONSTRAINT_TOL || !fx.is_finite() || fx > trace[0] + 1e-9 {
        return Err(TrackerError::SolverDiverged(format!("cost {fx}, constraint violation {viol}")));
    }
    let horizon = prob.rollout(&x);
    let accel = horizon[0].accel;
    let accels: Vec<_> = horizon.iter().map(|h| h.accel).collect();
    Ok(ContouringSolution {
        accel,
        state: TrackerState { theta: state.theta, v_theta: x.vt[0], last_accel: accel },
        horizon,
        cost: fx,
        cost_trace: trace,
        accels,
        v_thetas: x.vt,
    })
}

/// Collective thrust and body torques of the X-configuration rotor set.
pub fn rotor_mix(f: &[f64; 4], params: &QuadParams) -> (f64, Vector3<f64>) {
    let k = params.arm_length / std::f64::consts::SQRT_2;
    let c = params.c_tau;
    let f_t = f[0] + f[1] + f[2] + f[3];
    let tau = Vector3::new(
        k * (f[0] + f[1] - f[2] - f[3]),
        k * (-f[0] + f[1] + f[2] - f[3]),
        c * (f[0] - f[1] + f[2] - f[3]),
    );
    (f_t, tau)
}

/// Exact inverse of [`rotor_mix`] with no clamping.
pub fn rotor_unmix_exact(f_t: f64, tau: &Vector3<f64>, params: &QuadParams) -> [f64; 4] {
    // The mixing rows are mutually orthogonal, so the inverse is the scaled transpose.
    let k = params.arm_length / std::f64::consts::SQRT_2;
    let c = params.c_tau;
    let (a, b, d, e) = (f_t / 4.0, tau.x / (4.0 * k), tau.y / (4.0 * k), tau.z / (4.0 * c));
    [a + b - d + e, a + b + d - e, a - b + d + e, a - b - d - e]
}

/// Inverse mixing followed by clamping to the rotor limits; the flag reports any clamping.
pub fn rotor_unmix(f_t: f64, tau: &Vector3<f64>, params: &QuadParams) -> ([f64; 4], bool) {
    let mut f = rotor_unmix_exact(f_t, tau, params);
    let mut saturated = false;
    for x in &mut f {
        let c = x.clamp(params.u_min, params.u_max);
        if c != *x {
            saturated = true;
        }
        *x = c;
    }
    (f, saturated)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CascadeGains {
    /// Attitude error to body-rate gain for roll/pitch and yaw, 1/s.
    pub k_att: Vector3<f64>,
    /// Body-rate error to angular acceleration gain, 1/s.
    pub k_rate: Vector3<f64>,
}

impl Default for CascadeGains {
    fn default() -> Self {
        Self { k_att: Vector3::new(20.0, 20.0, 5.0), k_rate: Vector3::new(70.0, 70.0, 20.0) }
    }
}

/// Attitude and rate loops from a net-acceleration command down to rotor thrusts.
///
/// When the torque request and collective thrust cannot both be met, the collective is
/// adjusted first so the attitude authority is kept; any remaining excess is clamped. The
/// returned flag is set whenever either adjustment happened.
pub fn cascade(
    accel_cmd: &Vector3<f64>,
    state: &QuadState,
    params: &QuadParams,
    gains: &CascadeGains,
) -> (RotorCommand, bool) {
    let rot = state.q.to_rotation_matrix();
    let r = rot.matrix();
    let drag = r * Matrix3::from_diagonal(&params.drag) * r.transpose() * state.v;
    let mut f_des = (accel_cmd - params.gravity) * params.mass + drag;
    // Keep some upward thrust so a steep descent never asks the vehicle to flip over.
    f_des.z = f_des.z.max(MIN_UP_ACCEL * params.mass);

    let z_b = r.column(2).into_owned();
    let collective = f_des.dot(&z_b).max(0.0);
    let z_d = if f_des.norm() > 1e-6 { f_des.normalize() } else { Vector3::z() };
    let y_d = {
        let y = z_d.cross(&Vector3::x());
        if y.norm() > 1e-6 { y.normalize() } else { z_d.cross(&Vector3::y()).normalize() * -1.0 }
    };
    let x_d = y_d.cross(&z_d);
    let r_d = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x_d, y_d, z_d]));
    let q_d = UnitQuaternion::from_rotation_matrix(&r_d);

    let q_e = state.q.inverse() * q_d;
    let sign = if q_e.w >= 0.0 { 1.0 } else { -1.0 };
    let w_des = (q_e.imag() * (2.0 * sign)).component_mul(&gains.k_att);
    let jw = params.inertia.component_mul(&state.w);
    let tau = params.inertia.component_mul(&(w_des - state.w).component_mul(&gains.k_rate)) + state.w.cross(&jw);

    let base = rotor_unmix_exact(0.0, &tau, params);
    let spread_lo = base.iter().copied().fold(f64::INFINITY, f64::min);
    let spread_hi = base.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = params.u_min - spread_lo;
    let hi = params.u_max - spread_hi;
    let per_rotor = collective / 4.0;
    let adjusted = if lo <= hi { per_rotor.clamp(lo, hi) } else { 0.5 * (lo + hi) };
    let (f, clamped) = rotor_unmix(adjusted * 4.0, &tau, params);
    (RotorCommand { f }, clamped || adjusted != per_rotor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> QuadParams {
        QuadParams::default()
    }

    #[test]
    fn mix_examples() {
        let p = params();
        let (ft, tau) = rotor_mix(&[2.0; 4], &p);
        assert_eq!(ft, 8.0);
        assert!(tau.norm() < 1e-15);
        let (ft, tau) = rotor_mix(&[1.0, 1.0, 0.0, 0.0], &p);
        assert_eq!(ft, 2.0);
        assert!((tau.x - 0.212_132_034_355_964_3).abs() < 1e-12);
        assert!(tau.y.abs() < 1e-15 && tau.z.abs() < 1e-15);
    }

    #[test]
    fn unmix_inverts_mix() {
        let p = params();
        for f in [[1.0, 1.0, 0.0, 0.0], [2.0; 4], [0.3, 4.1, 7.7, 2.2]] {
            let (ft, tau) = rotor_mix(&f, &p);
            let back = rotor_unmix_exact(ft, &tau, &p);
            for i in 0..4 {
                assert!((back[i] - f[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hover_cascade() {
        let p = params();
        let s = QuadState::hover_at(Vector3::zeros());
        let (cmd, sat) = cascade(&Vector3::zeros(), &s, &p, &CascadeGains::default());
        assert!(!sat);
        for f in cmd.f {
            assert!((f - 1.844_28).abs() < 1e-4, "{f}");
        }
    }

    #[test]
    fn vertical_cascade_has_no_torque() {
        let p = params();
        let s = QuadState::hover_at(Vector3::zeros());
        let (cmd, sat) = cascade(&Vector3::new(0.0, 0.0, 5.0), &s, &p, &CascadeGains::default());
        assert!(!sat);
        let (ft, tau) = rotor_mix(&cmd.f, &p);
        assert!(tau.norm() < 1e-12);
        assert!((ft - p.mass * (5.0 + 9.81)).abs() < 1e-9);
    }

    #[test]
    fn excessive_command_saturates() {
        let p = params();
        let s = QuadState::hover_at(Vector3::zeros());
        let (cmd, sat) = cascade(&Vector3::new(0.0, 0.0, 80.0), &s, &p, &CascadeGains::default());
        assert!(sat);
        assert!(cmd.f.iter().all(|f| *f <= p.u_max && *f >= p.u_min));
    }

    #[test]
    fn zero_horizon_cost_is_progress_reward() {
        let path = crate::path::Path {
            samples: (0..=100)
                .map(|i| crate::path::PathSample {
                    theta: i as f64,
                    position: Vector3::new(i as f64, 0.0, 0.0),
                    tangent: Vector3::x(),
                    plan_time: i as f64,
                })
                .collect(),
            total_length: 100.0,
            gate_thetas: vec![],
        };
        let cfg = ContouringConfig::default();
        let v = 3.0;
        let horizon: Vec<_> = (1..=cfg.n)
            .map(|k| HorizonStep { position: Vector3::new(v * cfg.dt * k as f64, 0.0, 0.0), accel: Vector3::zeros(), v_theta: v })
            .collect();
        let c = contouring_cost(&horizon, 0.0, v, &path, &cfg);
        assert!((c + cfg.mu * v * cfg.n as f64).abs() < 1e-9, "{c}");
    }

    fn line(len: f64) -> crate::path::Path {
        let n = (len * 10.0) as usize;
        crate::path::Path {
            samples: (0..=n)
                .map(|i| {
                    let th = i as f64 * 0.1;
                    crate::path::PathSample { theta: th, position: Vector3::new(th, 0.0, 0.0), tangent: Vector3::x(), plan_time: th }
                })
                .collect(),
            total_length: n as f64 * 0.1,
            gate_thetas: vec![],
        }
    }

    #[test]
    fn starts_along_straight_path() {
        let path = line(100.0);
        let cfg = ContouringConfig::default();
        let sol = solve_contouring(&Vector3::zeros(), &Vector3::zeros(), &TrackerState::default(), None, &path, &cfg).unwrap();
        let a = sol.accel;
        assert!(a.norm() > 0.0 && a.x >= 0.99 * a.norm(), "{a:?}");
        assert!(sol.horizon.iter().all(|h| (h.position.y.powi(2) + h.position.z.powi(2)).sqrt() < 1e-3));
        assert!(sol.cost_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn pulls_back_towards_path_without_progress_reward() {
        let path = line(100.0);
        let cfg = ContouringConfig { mu: 0.0, ..Default::default() };
        let state = TrackerState { theta: 5.0, ..Default::default() };
        let sol = solve_contouring(&Vector3::new(5.0, 1.0, 0.0), &Vector3::zeros(), &state, None, &path, &cfg).unwrap();
        assert!(sol.accel.y < 0.0, "{:?}", sol.accel);
    }
}

//! Arc-length parameterized reference path built from a point-mass plan, with the contour and
//! lag error decomposition used by the tracker.

use std::io::{BufRead, Write};
use std::sync::{Arc, RwLock};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::velocity_graph::PmmPlan;

pub const DEFAULT_SAMPLE_DT: f64 = 0.01;
/// Half-width of the progress window searched by [`project_progress`], m.
pub const PROJECTION_WINDOW: f64 = 2.0;
const MIN_SPEED: f64 = 0.01;
const MIN_LENGTH: f64 = 1e-6;
/// Plan-time rate used past the end of a plan that finishes nearly at rest, m/s.
const MIN_EXTENSION_SPEED: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("plan has no segments")]
    EmptyPlan,
    #[error("degenerate plan: total length {0} m")]
    DegeneratePlan(f64),
    #[error("progress {theta} outside [0, {length}]")]
    OutOfRange { theta: f64, length: f64 },
    #[error("sample_dt must be positive")]
    BadSampleDt,
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub theta: f64,
    pub position: Vector3<f64>,
    pub tangent: Vector3<f64>,
    pub plan_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub samples: Vec<PathSample>,
    pub total_length: f64,
    /// Progress at which each gate of the plan is reached.
    pub gate_thetas: Vec<f64>,
}

/// Decomposition of `p - path(theta_star)` along and across the path tangent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourErrors {
    pub e_c: Vector3<f64>,
    pub e_l: Vector3<f64>,
    pub theta_star: f64,
}

/// Samples the plan every `sample_dt` (plus every segment end) and measures chordal arc length.
pub fn assemble_path(plan: &PmmPlan, sample_dt: f64) -> Result<Path, PathError> {
    if plan.segments.is_empty() {
        return Err(PathError::EmptyPlan);
    }
    if !(sample_dt > 0.0) {
        return Err(PathError::BadSampleDt);
    }
    // (time, position, velocity)
    let mut raw: Vec<(f64, Vector3<f64>, Vector3<f64>)> = Vec::new();
    let mut gate_idx = Vec::with_capacity(plan.segments.len());
    let mut t0 = 0.0;
    for seg in &plan.segments {
        let n = (seg.duration / sample_dt).ceil().max(1.0) as usize;
        let first = if raw.is_empty() { 0 } else { 1 };
        for k in first..=n {
            let local = if k == n { seg.duration } else { k as f64 * sample_dt };
            let s = seg.sample(local);
            raw.push((t0 + local, s.p, s.v));
        }
        gate_idx.push(raw.len() - 1);
        t0 += seg.duration;
    }

    let mut samples: Vec<PathSample> = Vec::with_capacity(raw.len());
    let mut gate_thetas = Vec::with_capacity(gate_idx.len());
    let mut next_gate = 0;
    let mut theta = 0.0;
    for (i, &(t, p, _)) in raw.iter().enumerate() {
        if let Some(last) = samples.last() {
            let chord = (p - last.position).norm();
            if chord > 1e-12 {
                theta += chord;
                samples.push(PathSample { theta, position: p, tangent: tangent_at(&raw, i), plan_time: t });
            }
        } else {
            samples.push(PathSample { theta, position: p, tangent: tangent_at(&raw, i), plan_time: t });
        }
        while next_gate < gate_idx.len() && gate_idx[next_gate] == i {
            gate_thetas.push(theta);
            next_gate += 1;
        }
    }
    if theta < MIN_LENGTH {
        return Err(PathError::DegeneratePlan(theta));
    }
    Ok(Path { samples, total_length: theta, gate_thetas })
}

/// Velocity direction, or the direction towards the next distinct sample when nearly at rest.
fn tangent_at(raw: &[(f64, Vector3<f64>, Vector3<f64>)], i: usize) -> Vector3<f64> {
    let (_, p, v) = raw[i];
    if v.norm() >= MIN_SPEED {
        return v.normalize();
    }
    for &(_, q, _) in &raw[i + 1..] {
        if (q - p).norm() > 1e-12 {
            return (q - p).normalize();
        }
    }
    for &(_, q, _) in raw[..i].iter().rev() {
        if (p - q).norm() > 1e-12 {
            return (p - q).normalize();
        }
    }
    Vector3::x()
}

impl Path {
    /// Appends a straight run of `length` metres along the final tangent, flown at the final
    /// plan speed.
    pub fn extend_straight(&mut self, length: f64, spacing: f64) {
        let Some(last) = self.samples.last().copied() else { return };
        if !(length > 0.0 && spacing > 0.0) {
            return;
        }
        let speed = self.speed_at(last.theta).max(MIN_EXTENSION_SPEED);
        let n = (length / spacing).ceil() as usize;
        let step = length / n as f64;
        for k in 1..=n {
            let d = k as f64 * step;
            self.samples.push(PathSample {
                theta: last.theta + d,
                position: last.position + last.tangent * d,
                tangent: last.tangent,
                plan_time: last.plan_time + d / speed,
            });
        }
        self.total_length = last.theta + length;
    }

    fn clamp_theta(&self, theta: f64) -> f64 {
        theta.clamp(0.0, self.total_length)
    }

    /// Index `i` such that `theta` lies in `[theta_i, theta_{i+1}]`.
    fn segment_index(&self, theta: f64) -> usize {
        let i = self.samples.partition_point(|s| s.theta <= theta);
        i.saturating_sub(1).min(self.samples.len().saturating_sub(2))
    }

    /// Position and unit tangent at `theta`.
    pub fn point_at(&self, theta: f64) -> Result<(Vector3<f64>, Vector3<f64>), PathError> {
        if !(theta >= 0.0 && theta <= self.total_length) {
            return Err(PathError::OutOfRange { theta, length: self.total_length });
        }
        Ok(self.point_at_clamped(theta))
    }

    /// Like [`Path::point_at`] with `theta` clamped into the path.
    pub fn point_at_clamped(&self, theta: f64) -> (Vector3<f64>, Vector3<f64>) {
        let theta = self.clamp_theta(theta);
        if self.samples.len() == 1 {
            let s = &self.samples[0];
            return (s.position, s.tangent);
        }
        let i = self.segment_index(theta);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let s = ((theta - a.theta) / (b.theta - a.theta)).clamp(0.0, 1.0);
        if s == 0.0 {
            return (a.position, a.tangent);
        }
        if s == 1.0 {
            return (b.position, b.tangent);
        }
        let p = a.position + (b.position - a.position) * s;
        let t = a.tangent + (b.tangent - a.tangent) * s;
        let n = t.norm();
        let t = if n > 1e-9 { t / n } else { (b.position - a.position).normalize() };
        (p, t)
    }

    /// Plan time associated with `theta` (linear between samples).
    pub fn plan_time_at(&self, theta: f64) -> f64 {
        let theta = self.clamp_theta(theta);
        if self.samples.len() == 1 {
            return self.samples[0].plan_time;
        }
        let i = self.segment_index(theta);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let s = ((theta - a.theta) / (b.theta - a.theta)).clamp(0.0, 1.0);
        a.plan_time + (b.plan_time - a.plan_time) * s
    }

    /// Progress reached at plan time `t` (linear between samples), clamped to the path.
    pub fn progress_at_time(&self, t: f64) -> f64 {
        let (first, last) = (&self.samples[0], &self.samples[self.samples.len() - 1]);
        if t <= first.plan_time {
            return first.theta;
        }
        if t >= last.plan_time {
            return last.theta;
        }
        let i = self.samples.partition_point(|s| s.plan_time <= t).saturating_sub(1);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let s = (t - a.plan_time) / (b.plan_time - a.plan_time);
        a.theta + (b.theta - a.theta) * s
    }

    /// Planned speed at `theta`: progress per unit plan time over the enclosing sample interval.
    pub fn speed_at(&self, theta: f64) -> f64 {
        if self.samples.len() < 2 {
            return 0.0;
        }
        let i = self.segment_index(self.clamp_theta(theta));
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let dt = b.plan_time - a.plan_time;
        if dt > 0.0 { (b.theta - a.theta) / dt } else { 0.0 }
    }

    pub fn max_spacing(&self) -> f64 {
        self.samples.windows(2).map(|w| w[1].theta - w[0].theta).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), PathError> {
        writeln!(w, "theta,x,y,z,tx,ty,tz,plan_time")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                s.theta, s.position.x, s.position.y, s.position.z, s.tangent.x, s.tangent.y, s.tangent.z, s.plan_time
            )?;
        }
        Ok(())
    }

    /// Reads the samples written by [`Path::write_csv`]; gate progress values are not stored.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Path, PathError> {
        let mut samples = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| PathError::Csv(format!("line {}: {e}", n + 1)))?;
            if vals.len() != 8 {
                return Err(PathError::Csv(format!("line {}: expected 8 columns, got {}", n + 1, vals.len())));
            }
            samples.push(PathSample {
                theta: vals[0],
                position: Vector3::new(vals[1], vals[2], vals[3]),
                tangent: Vector3::new(vals[4], vals[5], vals[6]),
                plan_time: vals[7],
            });
        }
        let total_length = samples.last().map(|s| s.theta).unwrap_or(0.0);
        Ok(Path { samples, total_length, gate_thetas: Vec::new() })
    }
}

/// Closest path point to `p` with progress within `window` of `theta_guess`, and the error
/// decomposition at that point.
pub fn project_progress_window(path: &Path, p: &Vector3<f64>, theta_guess: f64, window: f64) -> ContourErrors {
    let guess = path.clamp_theta(theta_guess);
    let lo = path.clamp_theta(guess - window);
    let hi = path.clamp_theta(guess + window);
    let mut best_theta = guess;
    let mut best_d2 = f64::INFINITY;
    if path.samples.len() == 1 {
        best_theta = path.samples[0].theta;
    } else {
        let first = path.segment_index(lo);
        let last = path.segment_index(hi);
        for i in first..=last {
            let (a, b) = (&path.samples[i], &path.samples[i + 1]);
            let ab = b.position - a.position;
            let len2 = ab.norm_squared();
            let s = if len2 > 0.0 { ((p - a.position).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let theta = (a.theta + (b.theta - a.theta) * s).clamp(lo, hi);
            let (q, _) = path.point_at_clamped(theta);
            let d2 = (p - q).norm_squared();
            if d2 < best_d2 {
                best_d2 = d2;
                best_theta = theta;
            }
        }
    }
    let (q, t) = path.point_at_clamped(best_theta);
    let e = p - q;
    let e_l = t * e.dot(&t);
    ContourErrors { e_c: e - e_l, e_l, theta_star: best_theta }
}

/// [`project_progress_window`] with the default window.
pub fn project_progress(path: &Path, p: &Vector3<f64>, theta_guess: f64) -> ContourErrors {
    project_progress_window(path, p, theta_guess, PROJECTION_WINDOW)
}

/// Latest published value; readers always see a complete snapshot.
#[derive(Debug)]
pub struct Shared<T> {
    inner: RwLock<Option<Arc<T>>>,
}

impl<T> Default for Shared<T> {
    fn default() -> Self {
        Self { inner: RwLock::new(None) }
    }
}

impl<T> Shared<T> {
    pub fn new(value: T) -> Self {
        Self { inner: RwLock::new(Some(Arc::new(value))) }
    }

    pub fn load(&self) -> Option<Arc<T>> {
        self.inner.read().expect("snapshot lock poisoned").clone()
    }

    pub fn store(&self, value: T) {
        *self.inner.write().expect("snapshot lock poisoned") = Some(Arc::new(value));
    }
}

/// Reference path exchanged between a planner thread and the control loop.
pub type SharedPath = Shared<Path>;

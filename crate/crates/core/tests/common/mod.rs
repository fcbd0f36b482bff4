//! Independent reference solvers used by the integration tests. None of these call into the
//! closed-form paths they check.
#![allow(dead_code)]

use quadplan::pmm_axis::{AxisBoundary, AxisBounds};

/// Minimum bang-bang time by brute force: for both switch orders, scan `t1` on a dense grid,
/// derive `t2` from the velocity equation, and bisect sign changes of the position residual.
pub fn axis_time_oracle(b: &AxisBoundary, u: &AxisBounds) -> Option<f64> {
    let amin = u.u_hi.min(-u.u_lo);
    let dp = (b.p2 - b.p0).abs();
    let t1_max = 4.0 * (b.v0.abs() + b.v2.abs()) / amin + 4.0 * (dp / amin).sqrt() + 1.0;
    let mut best: Option<f64> = None;
    for (a1, a2) in [(u.u_lo, u.u_hi), (u.u_hi, u.u_lo)] {
        let t2_of = |t1: f64| (b.v2 - b.v0 - a1 * t1) / a2;
        let residual = |t1: f64| {
            let t2 = t2_of(t1);
            let v1 = b.v0 + a1 * t1;
            b.p0 + b.v0 * t1 + 0.5 * a1 * t1 * t1 + v1 * t2 + 0.5 * a2 * t2 * t2 - b.p2
        };
        let n = 20_000;
        let mut prev_t = 0.0;
        let mut prev_r = residual(0.0);
        if prev_r == 0.0 && t2_of(0.0) >= 0.0 {
            best = Some(best.map_or(t2_of(0.0), |x: f64| x.min(t2_of(0.0))));
        }
        for i in 1..=n {
            let t = t1_max * i as f64 / n as f64;
            let r = residual(t);
            if prev_r.signum() != r.signum() || r == 0.0 {
                let (mut lo, mut hi, mut rlo) = (prev_t, t, prev_r);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let rm = residual(mid);
                    if rm.signum() == rlo.signum() && rm != 0.0 {
                        lo = mid;
                        rlo = rm;
                    } else {
                        hi = mid;
                    }
                }
                let t1 = 0.5 * (lo + hi);
                let t2 = t2_of(t1);
                if t2 >= -1e-9 {
                    let total = t1 + t2.max(0.0);
                    best = Some(best.map_or(total, |x: f64| x.min(total)));
                }
            }
            prev_t = t;
            prev_r = r;
        }
    }
    best
}

/// Acceleration scale found by bisection on `alpha`, using the brute-force time oracle above.
/// Returns `None` when the minimum time under tiny scales never exceeds `t_star`.
pub fn alpha_bisection_oracle(b: &AxisBoundary, u: &AxisBounds, t_star: f64) -> Option<f64> {
    let time = |alpha: f64| axis_time_oracle(b, &u.scaled(alpha));
    let (mut lo, mut hi) = (1e-6, 1.0);
    if time(lo)? < t_star {
        return None;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if time(mid)? > t_star {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Exact forward integration of piecewise-constant acceleration `accels[i]` held for `durs[i]`.
pub fn integrate_piecewise(p0: f64, v0: f64, pieces: &[(f64, f64)], substeps: usize) -> (f64, f64) {
    let (mut p, mut v) = (p0, v0);
    for &(a, dur) in pieces {
        let h = dur / substeps as f64;
        for _ in 0..substeps {
            p += v * h + 0.5 * a * h * h;
            v += a * h;
        }
    }
    (p, v)
}

/// Every chain of one node per layer, scored by summed synchronized segment durations; infeasible edges drop the
/// chain. Returns the best time and its node indices.
pub fn exhaustive_chain(
    start: &quadplan::pmm_axis::PointState,
    positions: &[nalgebra::Vector3<f64>],
    node_sets: &[Vec<nalgebra::Vector3<f64>>],
    u: &quadplan::pmm_axis::AxisBoundsSet,
) -> Option<(f64, Vec<usize>)> {
    use quadplan::pmm_axis::{solve_segment, PointState};
    let mut best: Option<(f64, Vec<usize>)> = None;
    let total: usize = node_sets.iter().map(Vec::len).product();
    for mut code in 0..total {
        let mut idx = Vec::with_capacity(node_sets.len());
        for set in node_sets {
            idx.push(code % set.len());
            code /= set.len();
        }
        let mut from = *start;
        let mut t = 0.0;
        let mut ok = true;
        for (layer, &i) in idx.iter().enumerate() {
            let to = PointState::new(positions[layer], node_sets[layer][i]);
            match solve_segment(&from, &to, u) {
                Ok(seg) => t += seg.duration,
                Err(_) => {
                    ok = false;
                    break;
                }
            }
            from = to;
        }
        if ok && best.as_ref().is_none_or(|(b, _)| t < *b) {
            best = Some((t, idx));
        }
    }
    best
}

/// Splits-like benchmark scenario shipped with the repository.
pub fn track_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../tracks").join(format!("{name}.toml"))
}

use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use quadplan::sim::*;
use quadplan::velocity_graph::Gate;

fn no_drag() -> QuadParams {
    QuadParams { drag: Vector3::zeros(), ..QuadParams::default() }
}

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn attitude() -> impl Strategy<Value = UnitQuaternion<f64>> {
    vec3(3.0).prop_map(UnitQuaternion::from_scaled_axis)
}

fn fly(mut s: QuadState, cmd: &RotorCommand, params: &QuadParams, env: &Environment, dt: f64, steps: usize) -> QuadState {
    for k in 0..steps {
        s = step_rk4(&s, cmd, params, env, k as f64 * dt, dt).unwrap();
    }
    s
}

/// Asymmetric thrusts from a spinning, tilted start.
fn tumbling() -> (QuadState, RotorCommand) {
    let s = QuadState {
        p: Vector3::new(0.0, 0.0, 10.0),
        q: UnitQuaternion::from_euler_angles(0.3, -0.2, 0.5),
        v: Vector3::new(2.0, -1.0, 0.5),
        w: Vector3::new(3.0, -2.0, 1.0),
    };
    (s, RotorCommand { f: [2.5, 1.2, 2.0, 1.6] })
}

#[test]
fn hover_step_leaves_state_unchanged() {
    let params = QuadParams::default();
    let s0 = QuadState::hover_at(Vector3::new(1.0, 2.0, 3.0));
    let s1 = step_rk4(&s0, &RotorCommand::uniform(params.hover_thrust()), &params, &Environment::default(), 0.0, 1e-3).unwrap();
    assert!((s1.p - s0.p).norm() <= 1e-12);
    assert!((s1.v - s0.v).norm() <= 1e-12);
    assert!((s1.w - s0.w).norm() <= 1e-12);
    assert!(s1.q.angle_to(&s0.q) <= 1e-12);
}

#[test]
fn level_drag_matches_hand_arithmetic() {
    let params = QuadParams::default();
    let mut s = QuadState::hover_at(Vector3::zeros());
    s.v = Vector3::new(10.0, 0.0, 0.0);
    let d = deriv(&s, &RotorCommand::uniform(params.hover_thrust()), &params, &Vector3::zeros());
    // 0.26 * 10 / 0.752
    assert!((d.dv.x + 3.457_446_808_510_638).abs() <= 1e-12, "{}", d.dv.x);
    assert!(d.dv.y.abs() <= 1e-15 && d.dv.z.abs() <= 1e-12);
}

#[test]
fn free_fall_velocity_change() {
    let params = no_drag();
    let s = fly(QuadState::hover_at(Vector3::new(0.0, 0.0, 5.0)), &RotorCommand::uniform(0.0), &params, &Environment::default(), 1e-3, 100);
    assert!((s.v.z + 0.981).abs() <= 1e-6, "{}", s.v.z);
    assert!(s.v.x.abs() <= 1e-15 && s.v.y.abs() <= 1e-15);
}

#[test]
fn rk4_is_fourth_order_on_a_tumble() {
    let params = QuadParams::default();
    let env = Environment::default();
    let (s0, cmd) = tumbling();
    let horizon = 0.5;
    let run = |dt: f64| fly(s0, &cmd, &params, &env, dt, (horizon / dt).round() as usize);
    let dt = 0.01;
    let reference = run(dt / 16.0);
    let err = |s: &QuadState| {
        (s.p - reference.p).norm() + (s.v - reference.v).norm() + (s.w - reference.w).norm() + s.q.angle_to(&reference.q)
    };
    let coarse = err(&run(dt));
    let fine = err(&run(dt / 2.0));
    assert!(coarse > 1e-12, "coarse error {coarse} is at round-off");
    assert!(coarse / fine >= 12.0, "error ratio {} ({coarse} vs {fine})", coarse / fine);
}

#[test]
fn replay_is_bitwise_identical() {
    let params = QuadParams::default();
    let env = Environment { wind: vec![WindRegion::new(Vector3::new(-5.0, -5.0, 0.0), Vector3::new(5.0, 5.0, 20.0), Vector3::new(25.0, 0.0, 0.0)).unwrap()] };
    let (s0, cmd) = tumbling();
    let a = fly(s0, &cmd, &params, &env, 1e-3, 700);
    let b = fly(s0, &cmd, &params, &env, 1e-3, 700);
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    assert_eq!(a, b);
}

#[test]
fn wind_box_is_closed() {
    let env = Environment { wind: vec![WindRegion::new(Vector3::zeros(), Vector3::new(1.0, 2.0, 3.0), Vector3::new(25.0, 0.0, 0.0)).unwrap()] };
    assert_eq!(wind_force(&Vector3::new(0.5, 1.0, 1.5), 0.0, &env), Vector3::new(25.0, 0.0, 0.0));
    assert_eq!(wind_force(&Vector3::new(1.0, 2.0, 3.0), 0.0, &env), Vector3::new(25.0, 0.0, 0.0));
    assert_eq!(wind_force(&Vector3::new(1.0 + 1e-9, 1.0, 1.0), 0.0, &env), Vector3::zeros());
}

#[test]
fn gate_schedule_interpolates_between_knots() {
    let motion = GateMotion::new(vec![(1.0, Vector3::zeros()), (3.0, Vector3::new(1.5, 0.0, -0.5))]).unwrap();
    let gate = Gate::new(0, Vector3::new(10.0, 0.0, 2.0), Vector3::x(), 0.5).unwrap().with_motion(motion);
    assert_eq!(gate_at(&gate, 0.0).center, Vector3::new(10.0, 0.0, 2.0));
    assert_eq!(gate_at(&gate, 3.0).center, Vector3::new(11.5, 0.0, 1.5));
    // A quarter of the way: 10 + 1.5/4, 2 - 0.5/4.
    let c = gate_at(&gate, 1.5).center;
    assert!((c - Vector3::new(10.375, 0.0, 1.875)).norm() <= 1e-12, "{c:?}");
    assert_eq!(gate_at(&gate, 9.0).center, Vector3::new(11.5, 0.0, 1.5));
}

#[test]
fn segment_in_gate_plane_is_not_a_pass() {
    let gate = Gate::new(0, Vector3::zeros(), Vector3::x(), 1.0).unwrap();
    assert!(detect_gate_pass(&Vector3::new(0.0, -1.0, 0.0), &Vector3::new(0.0, 1.0, 0.0), 0.0, 1.0, &gate).is_none());
    assert!(detect_gate_pass(&Vector3::new(-1.0, 0.2, 0.0), &Vector3::new(-0.5, 0.2, 0.0), 0.0, 1.0, &gate).is_none());
    // Backwards through the plane.
    assert!(detect_gate_pass(&Vector3::new(1.0, 0.0, 0.0), &Vector3::new(-1.0, 0.0, 0.0), 0.0, 1.0, &gate).is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unpowered_flight_without_drag_is_ballistic(p in vec3(10.0), v in vec3(5.0), q in attitude(), w in vec3(4.0)) {
        let params = no_drag();
        let s0 = QuadState { p, q, v, w };
        let s = fly(s0, &RotorCommand::uniform(0.0), &params, &Environment::default(), 1e-3, 1000);
        let g = params.gravity;
        prop_assert!((s.p - (p + v + g * 0.5)).norm() <= 1e-9, "{:?}", s.p - (p + v + g * 0.5));
        prop_assert!((s.v - (v + g)).norm() <= 1e-9);
    }

    #[test]
    fn quaternion_stays_unit(q in attitude(), w in vec3(8.0), f in prop::array::uniform4(0.0..8.5f64)) {
        let params = QuadParams::default();
        let mut s = QuadState { p: Vector3::zeros(), q, v: Vector3::zeros(), w };
        for k in 0..500 {
            s = step_rk4(&s, &RotorCommand { f }, &params, &Environment::default(), k as f64 * 1e-3, 1e-3).unwrap();
            prop_assert!((s.q.quaternion().norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_axis_spin_keeps_angular_momentum(axis in 0usize..3, rate in -20.0..20.0f64, thrust in 0.0..8.5f64) {
        // Equal thrusts give zero torque about every axis.
        let params = QuadParams::default();
        let mut w = Vector3::zeros();
        w[axis] = rate;
        let mut s = QuadState { p: Vector3::zeros(), q: UnitQuaternion::identity(), v: Vector3::zeros(), w };
        let h0 = params.inertia.component_mul(&s.w);
        for k in 0..200 {
            let before = params.inertia.component_mul(&s.w);
            s = step_rk4(&s, &RotorCommand::uniform(thrust), &params, &Environment::default(), k as f64 * 1e-3, 1e-3).unwrap();
            let after = params.inertia.component_mul(&s.w);
            prop_assert!((after - before).norm() <= 1e-9);
        }
        prop_assert!((params.inertia.component_mul(&s.w) - h0).norm() <= 1e-9);
    }

    #[test]
    fn oblique_crossing_reports_in_plane_offset(
        n in vec3(1.0).prop_filter("normal", |n| n.norm() > 0.1),
        side in vec3(1.0),
        dir in vec3(1.0),
        before in 0.01..2.0f64,
        after in 0.0..2.0f64,
        center in vec3(5.0),
    ) {
        let n = n.normalize();
        let u = side - n * side.dot(&n);
        prop_assume!(u.norm() > 0.1);
        let u = u.normalize();
        // Heading at least 15 degrees out of the plane, forward through it.
        prop_assume!(dir.norm() > 0.1);
        let mut d = dir.normalize();
        if d.dot(&n) < 0.0 {
            d -= n * (2.0 * d.dot(&n));
        }
        prop_assume!(d.dot(&n) > 0.26);
        let gate = Gate::new(0, center, n, 1.0).unwrap();
        let x = center + u * 0.3;
        let ev = detect_gate_pass(&(x - d * before), &(x + d * after), 2.0, 2.5, &gate).unwrap();
        prop_assert!((ev.deviation - 0.3).abs() <= 1e-9, "{}", ev.deviation);
        prop_assert!(ev.valid);
        let t = 2.0 + 0.5 * before / (before + after);
        prop_assert!((ev.time - t).abs() <= 1e-9);
    }
}

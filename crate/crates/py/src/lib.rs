use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use quadplan::episode::{run_episode, EpisodeOptions, Mode};
use quadplan::pmm_axis::{solve_axis_min_time, AxisBoundary, AxisBounds};
use quadplan::scenario::Scenario;
use quadplan::velocity_graph::{horizon_gates, plan_query, Strategy};

create_exception!(quadplan_py, ScenarioError, PyException);
create_exception!(quadplan_py, PlanningError, PyException);

fn load(path: &str) -> PyResult<Scenario> {
    Scenario::from_file(path).map_err(|e| ScenarioError::new_err(e.to_string()))
}

fn strategy(name: &str) -> PyResult<Strategy> {
    match name {
        "random" => Ok(Strategy::Random),
        "refocus" => Ok(Strategy::Refocus),
        other => Err(pyo3::exceptions::PyValueError::new_err(format!("unknown strategy {other:?}"))),
    }
}

/// Round-trips a serializable value through `json.loads` to get plain Python objects.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyException::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Minimum-time bang-bang profile on one axis: returns `(t1, t2, a1, a2)`.
#[pyfunction]
fn axis_min_time(p0: f64, v0: f64, p2: f64, v2: f64, a_lo: f64, a_hi: f64) -> PyResult<(f64, f64, f64, f64)> {
    let u = AxisBounds::new(a_lo, a_hi).map_err(|e| pyo3::exceptions::PyValueError::new_err(e.to_string()))?;
    let t = solve_axis_min_time(&AxisBoundary::new(p0, v0, p2, v2), &u)
        .map_err(|e| PlanningError::new_err(e.to_string()))?;
    Ok((t.t1, t.t2, t.a1, t.a2))
}

/// Plan from the scenario's start state over its first gates.
#[pyfunction]
#[pyo3(signature = (scenario, strategy = "refocus", seed = None))]
fn plan<'py>(py: Python<'py>, scenario: &str, strategy: &str, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let sc = load(scenario)?;
    let s = self::strategy(strategy)?;
    let cfg = sc.planner_config();
    let track = sc.gates().map_err(ScenarioError::new_err)?;
    let gates = horizon_gates(&track, 0, cfg.horizon.min(track.len()));
    let out = py
        .detach(|| plan_query(&sc.start_state(), &gates, &cfg, s, seed.unwrap_or(sc.seed)))
        .map_err(|e| PlanningError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    d.set_item("total_time", out.plan.total_time)?;
    d.set_item("edges_evaluated", out.edges_evaluated)?;
    let vels: Vec<[f64; 3]> = out.plan.gate_velocities.iter().map(|v| [v.x, v.y, v.z]).collect();
    d.set_item("gate_velocities", vels)?;
    let best: Vec<f64> = out.iterations.iter().map(|i| i.best_time).collect();
    d.set_item("best_times", best)?;
    Ok(d)
}

/// Fly one closed-loop episode and return its result as a dict.
#[pyfunction]
#[pyo3(signature = (scenario, mode = "replan", seed = None))]
fn race<'py>(py: Python<'py>, scenario: &str, mode: &str, seed: Option<u64>) -> PyResult<Bound<'py, PyAny>> {
    let sc = load(scenario)?;
    let mode = match mode {
        "fixed" => Mode::Fixed,
        "replan" => Mode::Replan,
        other => return Err(pyo3::exceptions::PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    let opts = EpisodeOptions::new(mode, seed.unwrap_or(sc.seed));
    let result = py.detach(|| run_episode(&sc, &opts));
    to_py(py, &result)
}

/// Parse and validate a scenario file, returning it as a dict.
#[pyfunction]
fn load_scenario<'py>(py: Python<'py>, path: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &load(path)?)
}

#[pymodule]
fn quadplan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ScenarioError", m.py().get_type::<ScenarioError>())?;
    m.add("PlanningError", m.py().get_type::<PlanningError>())?;
    m.add_function(wrap_pyfunction!(axis_min_time, m)?)?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(race, m)?)?;
    m.add_function(wrap_pyfunction!(load_scenario, m)?)?;
    Ok(())
}

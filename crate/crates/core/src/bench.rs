//! Head-to-head comparison of the sampling strategies on planning queries taken from
//! closed-loop reference runs.

use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{run_episode, EpisodeOptions, EpisodeStatus, Mode};
use crate::pmm_axis::PointState;
use crate::scenario::Scenario;
use crate::sim::gate_at;
use crate::velocity_graph::{plan_random, plan_refocusing, Gate, PlanError};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no seeds given")]
    NoSeeds,
    #[error("seed {seed}: reference run produced no planning queries")]
    NoQueries { seed: u64 },
    #[error("seed {seed}, t = {t:.3}: {source}")]
    Plan { seed: u64, t: f64, source: PlanError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    /// Take a query every this many control ticks of the reference run.
    pub sample_every: usize,
    /// Half-width of the uniform start-position jitter per seed, m.
    pub start_jitter: f64,
    pub lazy: Option<bool>,
    /// Also fly fixed and replanning episodes per seed and report their metrics.
    pub episodes: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { sample_every: 10, start_jitter: 0.5, lazy: None, episodes: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryComparison {
    pub seed: u64,
    pub t: f64,
    pub target: usize,
    pub t_random: f64,
    pub t_refocus: f64,
    pub wall_random_ms: f64,
    pub wall_refocus_ms: f64,
    pub edges_random: u64,
    pub edges_refocus: u64,
    pub refocus_iterations: usize,
    /// Non-increasing best times of the refocusing loop.
    pub refocus_best_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StrategySummary {
    pub queries: usize,
    pub mean_wall_ms: f64,
    pub max_wall_ms: f64,
    pub total_wall_ms: f64,
    pub mean_edges: f64,
    pub mean_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub mode: Mode,
    pub status: EpisodeStatus,
    pub lap_time: Option<f64>,
    pub max_deviation: f64,
    pub mean_contour_error: f64,
    pub mean_progress_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seeds: Vec<u64>,
    pub queries: Vec<QueryComparison>,
    pub random: StrategySummary,
    pub refocus: StrategySummary,
    /// Share of queries where refocusing is within 1% of random sampling or better.
    pub refocus_within_1pct: f64,
    pub median_refocus_iterations: f64,
    pub episodes: Vec<EpisodeSummary>,
}

fn summarize(times: &[f64], walls: &[f64], edges: &[u64]) -> StrategySummary {
    let n = walls.len().max(1) as f64;
    StrategySummary {
        queries: walls.len(),
        mean_wall_ms: walls.iter().sum::<f64>() / n,
        max_wall_ms: walls.iter().copied().fold(0.0, f64::max),
        total_wall_ms: walls.iter().sum(),
        mean_edges: edges.iter().map(|e| *e as f64).sum::<f64>() / n,
        mean_time: times.iter().sum::<f64>() / n,
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 { xs[m] } else { 0.5 * (xs[m - 1] + xs[m]) }
}

/// The scenario with its start position jittered reproducibly by `seed`.
pub fn jittered(scenario: &Scenario, seed: u64, jitter: f64) -> Scenario {
    let mut s = scenario.clone();
    if jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in &mut s.start.p {
            *x += rng.gen_range(-jitter..=jitter);
        }
    }
    s
}

/// Runs the strategy comparison for every seed, in seed order.
pub fn cmd_bench(scenario: &Scenario, seeds: &[u64], opts: &BenchOptions) -> Result<BenchReport, BenchError> {
    if seeds.is_empty() {
        return Err(BenchError::NoSeeds);
    }
    let mut cfg = scenario.planner_config();
    if let Some(lazy) = opts.lazy {
        cfg.lazy = lazy;
    }
    let track = scenario.gates().expect("validated scenario");
    let sequence: Vec<Gate> = (0..scenario.run.laps).flat_map(|_| track.iter().cloned()).collect();
    let every = opts.sample_every.max(1);

    let mut queries = Vec::new();
    let mut episodes = Vec::new();
    for &seed in seeds {
        let sc = jittered(scenario, seed, opts.start_jitter);
        let mut ep_opts = EpisodeOptions::new(Mode::Replan, seed);
        ep_opts.lazy = opts.lazy;
        let reference = run_episode(&sc, &ep_opts);
        let before = queries.len();
        for (k, row) in reference.log.iter().enumerate().step_by(every) {
            if row.target >= sequence.len() {
                continue;
            }
            let end = (row.target + cfg.horizon).min(sequence.len());
            let gates: Vec<Gate> = sequence[row.target..end].iter().map(|g| gate_at(g, row.t)).collect();
            let start = PointState::new(Vector3::new(row.px, row.py, row.pz), Vector3::new(row.vx, row.vy, row.vz));
            let err = |source| BenchError::Plan { seed, t: row.t, source };

            let clock = Instant::now();
            let random = plan_random(&start, &gates, &cfg.cone, &cfg.bounds, cfg.h_random, seed.wrapping_add(k as u64), cfg.lazy)
                .map_err(err)?;
            let wall_random_ms = clock.elapsed().as_secs_f64() * 1e3;
            let clock = Instant::now();
            let refocus = plan_refocusing(&start, &gates, &cfg.cone, &cfg.bounds, cfg.eps, cfg.max_iter, cfg.lazy)
                .map_err(err)?;
            let wall_refocus_ms = clock.elapsed().as_secs_f64() * 1e3;

            queries.push(QueryComparison {
                seed,
                t: row.t,
                target: row.target,
                t_random: random.plan.total_time,
                t_refocus: refocus.plan.total_time,
                wall_random_ms,
                wall_refocus_ms,
                edges_random: random.edges_evaluated,
                edges_refocus: refocus.edges_evaluated,
                refocus_iterations: refocus.iteration_count(),
                refocus_best_times: refocus.iterations.iter().map(|i| i.best_time).collect(),
            });
        }
        if queries.len() == before {
            return Err(BenchError::NoQueries { seed });
        }
        if opts.episodes {
            let fixed = run_episode(&sc, &EpisodeOptions { record_log: false, ..EpisodeOptions::new(Mode::Fixed, seed) });
            for r in [&fixed, &reference] {
                episodes.push(EpisodeSummary {
                    seed,
                    mode: r.mode,
                    status: r.status,
                    lap_time: r.metrics.lap_time,
                    max_deviation: r.metrics.deviations.iter().copied().fold(0.0, f64::max),
                    mean_contour_error: r.metrics.mean_contour_error,
                    mean_progress_rate: r.metrics.mean_progress_rate,
                });
            }
        }
    }

    let col = |f: fn(&QueryComparison) -> f64| queries.iter().map(f).collect::<Vec<_>>();
    let random = summarize(
        &col(|q| q.t_random),
        &col(|q| q.wall_random_ms),
        &queries.iter().map(|q| q.edges_random).collect::<Vec<_>>(),
    );
    let refocus = summarize(
        &col(|q| q.t_refocus),
        &col(|q| q.wall_refocus_ms),
        &queries.iter().map(|q| q.edges_refocus).collect::<Vec<_>>(),
    );
    let within = queries.iter().filter(|q| q.t_refocus <= q.t_random * 1.01).count();
    Ok(BenchReport {
        seeds: seeds.to_vec(),
        refocus_within_1pct: within as f64 / queries.len() as f64,
        median_refocus_iterations: median(queries.iter().map(|q| q.refocus_iterations as f64).collect()),
        queries,
        random,
        refocus,
        episodes,
    })
}

impl BenchReport {
    /// Human-readable aggregate table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("queries: {} over {} seeds\n", self.queries.len(), self.seeds.len()));
        out.push_str("strategy  mean_ms   max_ms    total_ms   mean_edges  mean_T*\n");
        for (name, s) in [("random", &self.random), ("refocus", &self.refocus)] {
            out.push_str(&format!(
                "{name:<8}  {:>7.3}  {:>7.3}  {:>9.1}  {:>10.1}  {:>7.4}\n",
                s.mean_wall_ms, s.max_wall_ms, s.total_wall_ms, s.mean_edges, s.mean_time
            ));
        }
        out.push_str(&format!(
            "refocus within 1% of random: {:.1}%  median refocus iterations: {}\n",
            100.0 * self.refocus_within_1pct,
            self.median_refocus_iterations
        ));
        for e in &self.episodes {
            let lap = e.lap_time.map(|t| format!("{t:.3}")).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "seed {:>3} {:<6} {:<10} lap {:>7}  max dev {:.3}  mean e_c {:.3}\n",
                e.seed,
                format!("{:?}", e.mode).to_lowercase(),
                format!("{:?}", e.status).to_lowercase(),
                lap,
                e.max_deviation,
                e.mean_contour_error
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_seed_list_is_an_error() {
        let text = "[start]\np = [0.0, 0.0, 1.0]\n[[track.gates]]\ncenter = [5.0, 0.0, 1.0]\nexit_dir = [1.0, 0.0, 0.0]\npass_radius = 0.5\n";
        let s = Scenario::from_toml_str(text, "mem").unwrap();
        assert!(matches!(cmd_bench(&s, &[], &BenchOptions::default()), Err(BenchError::NoSeeds)));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

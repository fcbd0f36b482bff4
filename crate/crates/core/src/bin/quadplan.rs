use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use quadplan::bench::{cmd_bench, BenchOptions};
use quadplan::episode::{run_episode, EpisodeOptions, EpisodeResult, EpisodeStatus, Mode};
use quadplan::path::assemble_path;
use quadplan::scenario::Scenario;
use quadplan::velocity_graph::{horizon_gates, plan_query, PmmPlan, RefocusIteration, Strategy};

const EXIT_PARSE: u8 = 2;
const EXIT_EPISODE: u8 = 3;
const EXIT_OTHER: u8 = 1;

#[derive(Parser)]
#[command(name = "quadplan", version, about = "Time-optimal replanning and closed-loop racing on point-mass plans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Fixed,
    Replan,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Random,
    Refocus,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Random => Strategy::Random,
            StrategyArg::Refocus => Strategy::Refocus,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// One plan from the start state over the first gates of the track.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "refocus")]
        strategy: StrategyArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        lazy: Option<OnOff>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fly a closed-loop episode; without --mode both modes are flown and compared.
    Race {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replan_every: Option<usize>,
        #[arg(long, value_enum)]
        lazy: Option<OnOff>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Plan on the control thread (the default).
        #[arg(long, conflicts_with = "async_planner")]
        deterministic: bool,
        /// Run the planner on its own thread and swap references as they arrive.
        #[arg(long)]
        async_planner: bool,
    },
    /// Compare sampling strategies on queries from closed-loop reference runs.
    Bench {
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3, 4, 5, 6, 7, 8, 9])]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 10)]
        sample_every: usize,
        #[arg(long, value_enum)]
        lazy: Option<OnOff>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip the fixed/replanning episode comparison.
        #[arg(long)]
        no_episodes: bool,
    },
}

#[derive(Debug)]
enum Failure {
    Parse(String),
    Episode(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Parse(_) => EXIT_PARSE,
            Failure::Episode(_) => EXIT_EPISODE,
            Failure::Other(_) => EXIT_OTHER,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Parse(m) | Failure::Episode(m) | Failure::Other(m) => m,
        }
    }
}

fn other(e: impl std::fmt::Display) -> Failure {
    Failure::Other(e.to_string())
}

fn load(path: &FsPath) -> Result<Scenario, Failure> {
    Scenario::from_file(path).map_err(|e| Failure::Parse(e.to_string()))
}

fn lazy_flag(x: Option<OnOff>) -> Option<bool> {
    x.map(|v| matches!(v, OnOff::On))
}

fn write_json<T: Serialize>(dir: &FsPath, name: &str, value: &T) -> Result<(), Failure> {
    let f = File::create(dir.join(name)).map_err(other)?;
    serde_json::to_writer_pretty(BufWriter::new(f), value).map_err(other)
}

fn out_dir(out: &Option<PathBuf>) -> Result<Option<&FsPath>, Failure> {
    match out {
        Some(d) => {
            fs::create_dir_all(d).map_err(other)?;
            Ok(Some(d.as_path()))
        }
        None => Ok(None),
    }
}

#[derive(Serialize)]
struct PlanArtifact<'a> {
    strategy: Strategy,
    total_time: f64,
    edges_evaluated: u64,
    wall_ms: f64,
    iterations: &'a [RefocusIteration],
    plan: &'a PmmPlan,
}

fn cmd_plan(
    scenario: &FsPath,
    strategy: Strategy,
    seed: Option<u64>,
    lazy: Option<bool>,
    out: &Option<PathBuf>,
) -> Result<(), Failure> {
    let sc = load(scenario)?;
    let mut cfg = sc.planner_config();
    if let Some(l) = lazy {
        cfg.lazy = l;
    }
    let track = sc.gates().map_err(Failure::Parse)?;
    let gates = horizon_gates(&track, 0, cfg.horizon.min(track.len()));
    let clock = Instant::now();
    let outcome = plan_query(&sc.start_state(), &gates, &cfg, strategy, seed.unwrap_or(sc.seed))
        .map_err(|e| Failure::Episode(format!("planning failed: {e}")))?;
    let wall_ms = clock.elapsed().as_secs_f64() * 1e3;

    println!("T* = {:.6} s", outcome.plan.total_time);
    println!("edges evaluated = {}", outcome.edges_evaluated);
    println!("wall time = {wall_ms:.3} ms");
    if strategy == Strategy::Refocus {
        let seq: Vec<String> = outcome.iterations.iter().map(|i| format!("{:.6}", i.best_time)).collect();
        println!("T*_k = [{}]", seq.join(", "));
    }
    if let Some(dir) = out_dir(out)? {
        let artifact = PlanArtifact {
            strategy,
            total_time: outcome.plan.total_time,
            edges_evaluated: outcome.edges_evaluated,
            wall_ms,
            iterations: &outcome.iterations,
            plan: &outcome.plan,
        };
        write_json(dir, "plan.json", &artifact)?;
        let path = assemble_path(&outcome.plan, sc.run.path_dt).map_err(other)?;
        path.write_csv(BufWriter::new(File::create(dir.join("path.csv")).map_err(other)?)).map_err(other)?;
    }
    Ok(())
}

fn summary_line(r: &EpisodeResult, total_gates: usize) -> String {
    let lap = r.metrics.lap_time.map(|t| format!("{t:.3} s")).unwrap_or_else(|| "-".into());
    let max_dev = r.metrics.deviations.iter().copied().fold(0.0, f64::max);
    format!(
        "{:<6} status={:<9} lap={lap:<9} gates={}/{} misses={} max_dev={max_dev:.3} m mean_e_c={:.3} m mean_v_theta={:.2} m/s",
        format!("{:?}", r.mode).to_lowercase(),
        format!("{:?}", r.status).to_lowercase(),
        r.passes.len(),
        total_gates,
        r.metrics.misses,
        r.metrics.mean_contour_error,
        r.metrics.mean_progress_rate,
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_race(
    scenario: &FsPath,
    mode: Option<Mode>,
    strategy: Option<Strategy>,
    seed: Option<u64>,
    replan_every: Option<usize>,
    lazy: Option<bool>,
    out: &Option<PathBuf>,
    deterministic: bool,
) -> Result<(), Failure> {
    let sc = load(scenario)?;
    let modes = match mode {
        Some(m) => vec![m],
        None => vec![Mode::Fixed, Mode::Replan],
    };
    let dir = out_dir(out)?;
    let mut failures = Vec::new();
    for m in modes {
        let opts = EpisodeOptions {
            strategy,
            replan_every,
            lazy,
            deterministic,
            ..EpisodeOptions::new(m, seed.unwrap_or(sc.seed))
        };
        let result = run_episode(&sc, &opts);
        println!("{}", summary_line(&result, sc.track.gates.len() * sc.run.laps));
        if let Some(dir) = dir {
            let name = format!("{:?}", m).to_lowercase();
            write_json(dir, &format!("episode_{name}.json"), &result)?;
            let f = File::create(dir.join(format!("log_{name}.csv"))).map_err(other)?;
            result.write_log_csv(BufWriter::new(f)).map_err(other)?;
        }
        if result.status != EpisodeStatus::Completed {
            failures.push(format!("{:?}: {:?} {}", m, result.status, result.message));
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Episode(failures.join("; ")))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Plan { scenario, strategy, seed, lazy, out } => {
            cmd_plan(&scenario, strategy.into(), seed, lazy_flag(lazy), &out)
        }
        Command::Race { scenario, mode, strategy, seed, replan_every, lazy, out, deterministic: _, async_planner } => {
            let mode = mode.map(|m| match m {
                ModeArg::Fixed => Mode::Fixed,
                ModeArg::Replan => Mode::Replan,
            });
            cmd_race(&scenario, mode, strategy.map(Into::into), seed, replan_every, lazy_flag(lazy), &out, !async_planner)
        }
        Command::Bench { scenario, seeds, sample_every, lazy, out, no_episodes } => {
            let sc = load(&scenario)?;
            let opts = BenchOptions { sample_every, lazy: lazy_flag(lazy), episodes: !no_episodes, ..Default::default() };
            let report = cmd_bench(&sc, &seeds, &opts).map_err(|e| Failure::Episode(e.to_string()))?;
            print!("{}", report.table());
            if let Some(dir) = out_dir(&out)? {
                write_json(dir, "bench.json", &report)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

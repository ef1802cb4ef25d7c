//! Subcommand implementations. Each returns data or a [`CliError`]; printing
//! and exit codes are left to `main`.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use tracing::{info, warn};

use vlnloop_core::eval::{aggregate, bundled_baselines, emit_report, EpisodeOutcome, Report, ReportFormat};
use vlnloop_core::model::{load_episode_set, Action, Episode, Pose};
use vlnloop_core::navloop::trace::{read_trace, render_failed_trace, render_trace, ParsedTrace};
use vlnloop_core::navloop::{run_episode, EpisodeResult, FrameSink, NoFrames};
use vlnloop_core::policy::{
    ModelPolicy, OraclePolicy, Policy, RemoteClient, ReplayPolicy, ZeroMovementPolicy,
};
use vlnloop_core::sim::geodesic_distance;
use vlnloop_core::sim::protocol::{serve_tcp_threaded, ProtocolServer, RemoteSimulator};
use vlnloop_core::sim::{load_map_file, BuiltinSimulator, Observation, SimParams, Simulator};

use crate::config::{PolicySpec, RunConfig, SimulatorSpec};
use crate::error::CliError;

/// Per-coordinate tolerance used when replaying a trace.
pub const REPLAY_TOLERANCE: f64 = 1e-9;

pub const TRACES_DIR: &str = "traces";
pub const FRAMES_DIR: &str = "frames";

pub fn report_file_name(format: ReportFormat) -> String {
    format!("report.{}", format.extension())
}

/// Loads the episode set with absolute map paths, keeping the first `limit` episodes.
pub fn load_episodes(path: &Path, limit: Option<usize>) -> Result<Vec<Episode>, CliError> {
    let abs = std::fs::canonicalize(path).map_err(|e| CliError::io(path, e))?;
    let mut episodes = load_episode_set(&abs)?;
    if let Some(n) = limit {
        episodes.truncate(n);
    }
    Ok(episodes)
}

/// Writes observations as PNG files under `<out>/frames/<episode>/`.
struct DirFrames {
    out: PathBuf,
}

impl FrameSink for DirFrames {
    fn save(&mut self, episode_id: &str, obs: &Observation) -> Result<Option<String>, String> {
        let rel = format!("{FRAMES_DIR}/{episode_id}/{:03}.png", obs.step);
        let path = self.out.join(&rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        }
        let png = obs.frame.to_png().map_err(|e| e.to_string())?;
        std::fs::write(&path, png).map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(Some(rel))
    }
}

fn build_simulator(spec: &SimulatorSpec, params: SimParams) -> Result<Box<dyn Simulator>, CliError> {
    Ok(match spec {
        SimulatorSpec::Builtin => Box::new(BuiltinSimulator::new(params)),
        SimulatorSpec::Remote(addr) => Box::new(RemoteSimulator::connect(addr.as_str())?),
    })
}

fn build_policy(
    cfg: &RunConfig,
    replay: &Option<HashMap<String, Vec<Action>>>,
) -> Result<Box<dyn Policy>, CliError> {
    Ok(match &cfg.policy {
        PolicySpec::ZeroMovement => Box::new(ZeroMovementPolicy),
        PolicySpec::Oracle => Box::new(OraclePolicy::new(cfg.sim_params, cfg.loop_cfg.success_radius)),
        PolicySpec::Replay(_) => Box::new(ReplayPolicy::per_episode(
            replay.clone().expect("replay actions loaded"),
        )),
        PolicySpec::Remote(endpoint) => Box::new(ModelPolicy::new(
            RemoteClient::new(endpoint.clone()).map_err(|e| CliError::Config(e.to_string()))?,
        )),
    })
}

/// Trace files in `dir`, sorted by name.
pub fn trace_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "jsonl") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn trace_or_dir(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if path.is_dir() {
        trace_files(path)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

/// Recorded actions per episode id, taken from one trace or a directory of traces.
pub fn load_replay_actions(path: &Path) -> Result<HashMap<String, Vec<Action>>, CliError> {
    let mut out = HashMap::new();
    for file in trace_or_dir(path)? {
        let trace = read_trace(&file)?;
        let actions = trace.steps.iter().map(|s| s.action).collect();
        out.insert(trace.episode.episode_id, actions);
    }
    Ok(out)
}

pub struct RunOutput {
    pub report: Report,
    pub report_text: String,
    pub report_path: PathBuf,
    pub trace_paths: Vec<PathBuf>,
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Runs the configured episodes, writing one trace per episode and a report.
/// Navigation failures are results; the first aborted episode stops the run
/// and is returned as the error.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    let episodes = load_episodes(&cfg.episode_set, cfg.limit)?;
    if episodes.is_empty() {
        return Err(vlnloop_core::eval::EvalError::EmptyResults.into());
    }
    let prompt = cfg.effective_prompt()?;
    let replay = match &cfg.policy {
        PolicySpec::Replay(path) => Some(load_replay_actions(path)?),
        _ => None,
    };
    let traces_dir = cfg.output_dir.join(TRACES_DIR);
    if traces_dir.exists() {
        // stale traces from an earlier run would leak into cmd_eval
        for old in trace_files(&traces_dir)? {
            std::fs::remove_file(&old).map_err(|e| CliError::io(&old, e))?;
        }
    }
    std::fs::create_dir_all(&traces_dir).map_err(|e| CliError::io(&traces_dir, e))?;

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<EpisodeResult, CliError>>>> =
        Mutex::new((0..episodes.len()).map(|_| None).collect());
    let workers = cfg.parallelism.min(episodes.len());

    let worker = || -> Result<(), CliError> {
        let mut sim = build_simulator(&cfg.simulator, cfg.sim_params)?;
        let mut policy = build_policy(cfg, &replay)?;
        let mut frames: Box<dyn FrameSink> = if cfg.save_frames {
            Box::new(DirFrames { out: cfg.output_dir.clone() })
        } else {
            Box::new(NoFrames)
        };
        loop {
            if abort.load(Ordering::SeqCst) {
                return Ok(());
            }
            let i = next.fetch_add(1, Ordering::SeqCst);
            let Some(ep) = episodes.get(i) else { return Ok(()) };
            let path = traces_dir.join(format!("{}.jsonl", ep.episode_id));
            let outcome = match run_episode(ep, sim.as_mut(), policy.as_mut(), &cfg.loop_cfg, &prompt, frames.as_mut()) {
                Ok(result) => {
                    info!(
                        episode = %ep.episode_id,
                        steps = result.steps_taken,
                        success = result.success,
                        "episode finished"
                    );
                    write_file(&path, &render_trace(&result)).map(|_| result)
                }
                Err(failure) => {
                    warn!(episode = %ep.episode_id, "episode aborted: {failure}");
                    abort.store(true, Ordering::SeqCst);
                    write_file(&path, &render_failed_trace(ep, &failure))
                        .and(Err(CliError::Episode(failure)))
                }
            };
            if outcome.is_err() {
                abort.store(true, Ordering::SeqCst);
            }
            slots.lock().unwrap()[i] = Some(outcome);
        }
    };

    let setup_errors: Vec<CliError> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers).map(|_| s.spawn(&worker)).collect();
        handles
            .into_iter()
            .filter_map(|h| h.join().expect("worker thread panicked").err())
            .collect()
    });
    if let Some(e) = setup_errors.into_iter().next() {
        return Err(e);
    }

    let mut results = Vec::with_capacity(episodes.len());
    let mut trace_paths = Vec::with_capacity(episodes.len());
    for (slot, ep) in slots.into_inner().unwrap().into_iter().zip(&episodes) {
        match slot {
            Some(Ok(r)) => {
                trace_paths.push(traces_dir.join(format!("{}.jsonl", ep.episode_id)));
                results.push(r);
            }
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    let outcomes: Vec<EpisodeOutcome> = results.iter().map(EpisodeOutcome::from).collect();
    let report = aggregate(&outcomes)?;
    let format = cfg.report_format();
    let baselines = cfg.baselines.then(bundled_baselines);
    let report_text = emit_report(&report, format, baselines.as_deref());
    let report_path = cfg.output_dir.join(report_file_name(format));
    write_file(&report_path, &report_text)?;
    Ok(RunOutput {
        report,
        report_text,
        report_path,
        trace_paths,
    })
}

/// Recomputes the report from trace files alone.
pub fn cmd_eval(trace_dir: &Path, format: ReportFormat, baselines: bool) -> Result<String, CliError> {
    let files = trace_files(trace_dir)?;
    let mut outcomes = Vec::with_capacity(files.len());
    for file in &files {
        let trace = read_trace(file)?;
        outcomes.push(EpisodeOutcome::from(&trace.summary));
    }
    let report = aggregate(&outcomes)?;
    let rows = baselines.then(bundled_baselines);
    Ok(emit_report(&report, format, rows.as_deref()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayVerdict {
    pub trace: PathBuf,
    pub episode_id: String,
    pub verdict: &'static str,
    pub steps: usize,
}

fn heading_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

fn pose_gap(a: &Pose, b: &Pose) -> Option<String> {
    let gaps = [
        ("x", (a.x - b.x).abs()),
        ("y", (a.y - b.y).abs()),
        ("heading", heading_gap(a.heading, b.heading)),
    ];
    gaps.iter()
        .find(|(_, g)| !(*g <= REPLAY_TOLERANCE))
        .map(|(name, g)| {
            format!(
                "{name} differs by {g:e} (recorded ({}, {}, {}), replayed ({}, {}, {}))",
                a.x, a.y, a.heading, b.x, b.y, b.heading
            )
        })
}

fn replay_one(path: &Path, trace: &ParsedTrace, sim: &mut dyn Simulator) -> Result<usize, CliError> {
    let diverged = |step: usize, detail: String| CliError::Divergence {
        path: path.to_path_buf(),
        step,
        detail,
    };
    let reset = sim.reset(&trace.episode)?;
    let mut pose = reset.pose;
    if let Some(d) = pose_gap(&trace.episode.start, &pose) {
        return Err(diverged(0, format!("start pose: {d}")));
    }
    for rec in &trace.steps {
        if let Some(d) = pose_gap(&rec.pose_before, &pose) {
            return Err(diverged(rec.step, format!("pose before: {d}")));
        }
        if rec.action != Action::Stop {
            let r = sim.step(rec.action)?;
            if r.collided != rec.collided {
                return Err(diverged(
                    rec.step,
                    format!("collided recorded {} replayed {}", rec.collided, r.collided),
                ));
            }
            pose = r.pose;
        }
        if let Some(d) = pose_gap(&rec.pose_after, &pose) {
            return Err(diverged(rec.step, format!("pose after: {d}")));
        }
    }
    if let Some(d) = pose_gap(&trace.summary.final_pose, &pose) {
        return Err(diverged(trace.steps.len(), format!("final pose: {d}")));
    }
    Ok(trace.steps.len())
}

/// Re-executes each trace's actions and checks the recorded poses.
pub fn cmd_replay(
    path: &Path,
    sim: &SimulatorSpec,
    params: SimParams,
) -> Result<Vec<ReplayVerdict>, CliError> {
    let files = trace_or_dir(path)?;
    if files.is_empty() {
        return Err(vlnloop_core::eval::EvalError::EmptyResults.into());
    }
    let mut simulator = build_simulator(sim, params)?;
    let mut verdicts = Vec::with_capacity(files.len());
    for file in files {
        let trace = read_trace(&file)?;
        let steps = replay_one(&file, &trace, simulator.as_mut())?;
        verdicts.push(ReplayVerdict {
            trace: file,
            episode_id: trace.episode.episode_id,
            verdict: "pass",
            steps,
        });
    }
    Ok(verdicts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationIssue {
    pub subject: String,
    pub problem: String,
}

/// Checks an episode set: maps load, start and goal are free, and the stored
/// shortest-path length matches the geodesic within 1e-6 m.
pub fn cmd_validate(episodes_path: &Path) -> Result<(usize, Vec<ValidationIssue>), CliError> {
    let episodes = load_episodes(episodes_path, None)?;
    let mut issues = Vec::new();
    let mut issue = |subject: &str, problem: String| {
        issues.push(ValidationIssue {
            subject: subject.to_string(),
            problem,
        })
    };
    let mut seen = std::collections::HashSet::new();
    for ep in &episodes {
        let id = ep.episode_id.as_str();
        if !seen.insert(id) {
            issue(id, "duplicate episode id".into());
        }
        let map = match load_map_file(&ep.map_ref) {
            Ok(m) => m,
            Err(e) => {
                issue(id, format!("map {}: {e}", ep.map_ref.display()));
                continue;
            }
        };
        if !map.is_free_point(ep.start.position()) {
            issue(id, "start is not in free space".into());
            continue;
        }
        if !map.is_free_point(ep.goal) {
            issue(id, "goal is not in free space".into());
            continue;
        }
        match geodesic_distance(&map, ep.start.position(), ep.goal) {
            Ok(l) if (l - ep.shortest_path_length).abs() > 1e-6 => issue(
                id,
                format!("shortest_path_length {} but geodesic is {l}", ep.shortest_path_length),
            ),
            Ok(_) => {}
            Err(e) => issue(id, e.to_string()),
        }
        if !(ep.shortest_path_length > 0.0) {
            issue(id, "shortest_path_length must be positive".into());
        }
    }
    Ok((episodes.len(), issues))
}

pub enum ServeMode {
    Stdio,
    Tcp(String),
}

/// Serves the simulator protocol for an episode set.
pub fn cmd_serve(episodes_path: &Path, mode: ServeMode, params: SimParams) -> Result<(), CliError> {
    let episodes = load_episodes(episodes_path, None)?;
    match mode {
        ServeMode::Stdio => {
            let mut server = ProtocolServer::new(episodes, BuiltinSimulator::new(params));
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            server
                .serve_stream(BufReader::new(stdin.lock()), BufWriter::new(stdout.lock()))
                .map_err(|e| CliError::io("<stdio>", e))
        }
        ServeMode::Tcp(addr) => {
            let listener = TcpListener::bind(&addr).map_err(|e| CliError::io(&addr, e))?;
            let local = listener.local_addr().map_err(|e| CliError::io(&addr, e))?;
            // announce the bound address so callers can use port 0
            println!("{}", serde_json::json!({ "listening": local.to_string() }));
            serve_tcp_threaded(listener, episodes, params).map_err(|e| CliError::io(&addr, e))
        }
    }
}

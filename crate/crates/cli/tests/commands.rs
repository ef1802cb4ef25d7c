use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::Command;

use vlnloop_cli::commands::{cmd_eval, cmd_replay, cmd_run, cmd_validate, trace_files};
use vlnloop_cli::{CliError, Overrides, RunConfig, SimulatorSpec};
use vlnloop_core::eval::ReportFormat;
use vlnloop_core::model::load_episode_set;
use vlnloop_core::sim::protocol::serve_tcp_threaded;
use vlnloop_core::sim::SimParams;

fn episodes_file() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/episodes.json")
}

fn config(out: &Path, policy: &str) -> RunConfig {
    let flags = Overrides {
        episodes: Some(episodes_file()),
        policy: Some(policy.into()),
        out: Some(out.to_path_buf()),
        ..Overrides::default()
    };
    RunConfig::resolve(None, &flags).unwrap()
}

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vlnloop"));
    cmd.env_remove("VLN_API_KEY");
    cmd
}

#[test]
fn zero_movement_run_reports_zero_success() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmd_run(&config(dir.path(), "zero_movement")).unwrap();
    assert_eq!(out.report.n_episodes, 12);
    assert_eq!(out.report.sr, 0.0);
    assert_eq!(out.report.spl, 0.0);
}

#[test]
fn limit_selects_first_episodes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), "oracle");
    cfg.limit = Some(5);
    cmd_run(&cfg).unwrap();
    let files = trace_files(&dir.path().join("traces")).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    let first5: Vec<String> = load_episode_set(&episodes_file()).unwrap()[..5]
        .iter()
        .map(|e| e.episode_id.clone())
        .collect();
    assert_eq!(names, first5);
}

#[test]
fn eval_reproduces_run_report_in_every_format() {
    let dir = tempfile::tempdir().unwrap();
    for (fmt, name) in [("json", "report.json"), ("csv", "report.csv"), ("table", "report.txt")] {
        let mut cfg = config(dir.path(), "oracle");
        cfg.format = fmt.parse().unwrap();
        cfg.baselines = true;
        cmd_run(&cfg).unwrap();
        let run_text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let eval_text = cmd_eval(&dir.path().join("traces"), fmt.parse().unwrap(), true).unwrap();
        assert_eq!(run_text, eval_text, "{fmt}");
    }
}

#[test]
fn eval_of_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_eval(dir.path(), ReportFormat::Json, false).unwrap_err();
    assert_eq!(err.kind(), "empty_results");
}

#[test]
fn eval_names_file_and_line_of_truncated_trace() {
    let dir = tempfile::tempdir().unwrap();
    cmd_run(&config(dir.path(), "oracle")).unwrap();
    let victim = dir.path().join("traces/ep_003.jsonl");
    let text = std::fs::read_to_string(&victim).unwrap();
    let lines = text.lines().count();
    std::fs::write(&victim, &text[..text.len() - 30]).unwrap();
    let err = cmd_eval(&dir.path().join("traces"), ReportFormat::Json, false).unwrap_err();
    assert_eq!(err.kind(), "malformed_trace");
    let msg = err.to_string();
    assert!(msg.contains("ep_003.jsonl"), "{msg}");
    assert!(msg.contains(&format!(":{lines}:")), "{msg}");
}

#[test]
fn replay_passes_then_detects_edit() {
    let dir = tempfile::tempdir().unwrap();
    cmd_run(&config(dir.path(), "oracle")).unwrap();
    let traces = dir.path().join("traces");
    let verdicts = cmd_replay(&traces, &SimulatorSpec::Builtin, SimParams::default()).unwrap();
    assert_eq!(verdicts.len(), 12);
    assert!(verdicts.iter().all(|v| v.verdict == "pass"));

    // nudge pose_after of step 4 by 1e-6 m
    let victim = traces.join("ep_005.jsonl");
    let text = std::fs::read_to_string(&victim).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut step: serde_json::Value = serde_json::from_str(&lines[5]).unwrap();
    assert_eq!(step["step"], 4);
    let x = step["pose_after"]["x"].as_f64().unwrap();
    step["pose_after"]["x"] = serde_json::json!(x + 1e-6);
    lines[5] = step.to_string();
    std::fs::write(&victim, lines.join("\n") + "\n").unwrap();
    match cmd_replay(&victim, &SimulatorSpec::Builtin, SimParams::default()).unwrap_err() {
        CliError::Divergence { step, .. } => assert_eq!(step, 4),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn replay_with_missing_map_reports_it() {
    let dir = tempfile::tempdir().unwrap();
    cmd_run(&config(dir.path(), "zero_movement")).unwrap();
    let victim = dir.path().join("traces/ep_000.jsonl");
    let text = std::fs::read_to_string(&victim).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut header: serde_json::Value = serde_json::from_str(&lines[0]).unwrap();
    header["episode"]["map"] = serde_json::json!("/nonexistent/map.txt");
    lines[0] = header.to_string();
    std::fs::write(&victim, lines.join("\n") + "\n").unwrap();
    let err = cmd_replay(&victim, &SimulatorSpec::Builtin, SimParams::default()).unwrap_err();
    assert_eq!(err.kind(), "map_not_found");
}

#[test]
fn remote_simulator_matches_builtin() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let episodes = load_episode_set(&std::fs::canonicalize(episodes_file()).unwrap()).unwrap();
    std::thread::spawn(move || serve_tcp_threaded(listener, episodes, SimParams::default()));

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let builtin = cmd_run(&config(a.path(), "oracle")).unwrap();
    let mut cfg = config(b.path(), "oracle");
    cfg.simulator = SimulatorSpec::Remote(addr);
    cfg.parallelism = 3;
    let remote = cmd_run(&cfg).unwrap();
    assert_eq!(builtin.report_text, remote.report_text);
    for name in ["ep_000.jsonl", "ep_006.jsonl", "ep_011.jsonl"] {
        let x = std::fs::read(a.path().join("traces").join(name)).unwrap();
        let y = std::fs::read(b.path().join("traces").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn replay_policy_reproduces_a_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = cmd_run(&config(a.path(), "oracle")).unwrap();
    let spec = format!("replay:{}", a.path().join("traces").display());
    let second = cmd_run(&config(b.path(), &spec)).unwrap();
    assert_eq!(first.report, second.report);
}

#[test]
fn bundled_set_validates() {
    let (n, issues) = cmd_validate(&episodes_file()).unwrap();
    assert_eq!(n, 12);
    assert!(issues.is_empty(), "{issues:?}");
}

#[test]
fn validate_flags_wrong_shortest_path() {
    let dir = tempfile::tempdir().unwrap();
    let maps = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/maps");
    let text = std::fs::read_to_string(episodes_file())
        .unwrap()
        .replace("\"maps/", &format!("\"{}/", maps.display()));
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v[2]["shortest_path_length"] = serde_json::json!(1.0);
    let path = dir.path().join("episodes.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let (_, issues) = cmd_validate(&path).unwrap();
    assert_eq!(issues.len(), 1);
    assert_eq!(issues[0].subject, "ep_002");
}

#[test]
fn binary_reports_unreachable_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        r#"{"policy": {"remote": {"max_retries": 1, "backoff": 0.01, "timeout": 2.0}}}"#,
    )
    .unwrap();
    let output = bin()
        .args(["run", "--limit", "1", "--policy", "remote", "--endpoint"])
        .arg(format!("http://127.0.0.1:{port}/v1"))
        .arg("--config")
        .arg(&cfg_path)
        .arg("--episodes")
        .arg(episodes_file())
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    let line = stderr.lines().last().unwrap();
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    assert_eq!(v["error"]["kind"], "transport");
    assert!(v["error"]["message"].as_str().unwrap().contains("2 attempt(s)"));
}

#[test]
fn binary_rejects_bad_config_with_error_line() {
    let output = bin()
        .args(["run", "--parallel", "0", "--episodes"])
        .arg(episodes_file())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    let v: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(v["error"]["kind"], "config");
}

#[test]
fn binary_config_shows_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, r#"{"loop": {"max_steps": 20, "window": 9}, "seed": 3}"#).unwrap();
    let output = bin()
        .args(["config", "--max-steps", "12", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(output.status.success());
    let v: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(v["loop"]["max_steps"], 12);
    assert_eq!(v["loop"]["window"], 9);
    assert_eq!(v["loop"]["success_radius"], 3.0);
    assert_eq!(v["seed"], 3);
}

#[test]
fn save_frames_writes_pngs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), "oracle");
    cfg.limit = Some(1);
    cfg.save_frames = true;
    let out = cmd_run(&cfg).unwrap();
    let trace = std::fs::read_to_string(&out.trace_paths[0]).unwrap();
    let step: serde_json::Value = serde_json::from_str(trace.lines().nth(1).unwrap()).unwrap();
    let rel = step["frame_after"].as_str().unwrap();
    let png = std::fs::read(dir.path().join(rel)).unwrap();
    assert_eq!(&png[1..4], b"PNG");
}

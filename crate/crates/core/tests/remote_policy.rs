mod common;

use std::time::{Duration, Instant};

use common::stub::{Reply, Stub};
use vlnloop_core::model::Action;
use vlnloop_core::navloop::{run_episode, LoopConfig, NoFrames, StopReason};
use vlnloop_core::policy::{
    GatewayError, ModelPolicy, ParseEventKind, PolicyEndpointConfig, RemoteClient, CORRECTIVE_SENTENCE,
};
use vlnloop_core::prompt::{DecodeParams, PromptConfig, VlmRequest};
use vlnloop_core::sim::{BuiltinSimulator, Frame, SimParams, FRAME_SIZE};

fn config(base_url: &str, max_retries: u32, timeout: f64) -> PolicyEndpointConfig {
    PolicyEndpointConfig {
        base_url: base_url.to_string(),
        max_retries,
        timeout,
        backoff: 0.01,
        ..PolicyEndpointConfig::default()
    }
}

fn request() -> VlmRequest {
    VlmRequest {
        system_text: "system".into(),
        user_text: "user".into(),
        images: vec![Frame::from_rgb(vec![9; FRAME_SIZE * FRAME_SIZE * 3]).unwrap()],
        decode: DecodeParams { seed: Some(7), ..DecodeParams::default() },
    }
}

#[test]
fn echo_returns_content_and_sends_expected_body() {
    let stub = Stub::start(vec![Reply::content("hello")]);
    let mut cfg = config(&stub.base_url, 2, 5.0);
    cfg.api_key = Some("secret".into());
    let out = RemoteClient::new(cfg).unwrap().infer(&request()).unwrap();
    assert_eq!(out.text, "hello");
    assert!(out.latency >= 0.0);
    let reqs = stub.requests.lock().unwrap();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].path, "/v1/chat/completions");
    assert_eq!(reqs[0].authorization.as_deref(), Some("Bearer secret"));
    let body = &reqs[0].body;
    assert_eq!(body["seed"], 7);
    assert_eq!(body["temperature"], 0.0);
    let user = body["messages"][1]["content"].as_array().unwrap();
    assert_eq!(user.len(), 2);
    let url = user[0]["image_url"]["url"].as_str().unwrap();
    let b64 = url.strip_prefix("data:image/png;base64,").unwrap();
    assert_eq!(Frame::from_png_base64(b64).unwrap(), request().images[0]);
    assert_eq!(user[1]["text"], "user");
}

#[test]
fn server_errors_retry_then_fail_after_three_attempts() {
    let stub = Stub::start(vec![Reply::status(500)]);
    let err = RemoteClient::new(config(&stub.base_url, 2, 5.0))
        .unwrap()
        .infer(&request())
        .unwrap_err();
    assert!(matches!(err, GatewayError::Transport { attempts: 3, .. }), "{err:?}");
    assert_eq!(stub.hits(), 3);
}

#[test]
fn recovers_when_a_retry_succeeds() {
    let stub = Stub::start(vec![Reply::status(503), Reply::status(429), Reply::content("ok")]);
    let out = RemoteClient::new(config(&stub.base_url, 2, 5.0))
        .unwrap()
        .infer(&request())
        .unwrap();
    assert_eq!(out.text, "ok");
    assert_eq!(stub.hits(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let stub = Stub::start(vec![Reply::status(400)]);
    let err = RemoteClient::new(config(&stub.base_url, 2, 5.0))
        .unwrap()
        .infer(&request())
        .unwrap_err();
    assert!(matches!(err, GatewayError::Status { status: 400, .. }), "{err:?}");
    assert_eq!(stub.hits(), 1);
}

#[test]
fn slow_endpoint_times_out_past_deadline() {
    let stub = Stub::start(vec![Reply::content("late").delayed(Duration::from_millis(1500))]);
    let started = Instant::now();
    let err = RemoteClient::new(config(&stub.base_url, 0, 0.3))
        .unwrap()
        .infer(&request())
        .unwrap_err();
    let elapsed = started.elapsed();
    assert!(matches!(err, GatewayError::Timeout { attempts: 1 }), "{err:?}");
    assert!(elapsed >= Duration::from_millis(300), "{elapsed:?}");
    assert!(elapsed < Duration::from_millis(1400), "{elapsed:?}");
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = RemoteClient::new(config(&format!("http://127.0.0.1:{port}/v1"), 1, 1.0))
        .unwrap()
        .infer(&request())
        .unwrap_err();
    assert!(matches!(err, GatewayError::Transport { attempts: 2, .. }), "{err:?}");
}

#[test]
fn full_episode_with_scripted_decisions() {
    let episodes = common::bundled_episodes();
    let ep = &episodes[0];
    let forward = r#"```json
{"action": "move_forward", "reflection": "The corridor continues."}
```"#;
    let mut replies = vec![Reply::content("I am not sure."), Reply::content(forward)];
    replies.extend((0..30).map(|_| Reply::content(forward)));
    let stub = Stub::start(replies);
    let mut policy = ModelPolicy::new(RemoteClient::new(config(&stub.base_url, 0, 5.0)).unwrap());
    let mut sim = BuiltinSimulator::new(SimParams::default());
    let cfg = LoopConfig::default();
    let result = run_episode(ep, &mut sim, &mut policy, &cfg, &PromptConfig::default(), &mut NoFrames).unwrap();

    assert_eq!(result.stop_reason, StopReason::GoalReached);
    assert!(result.success);
    assert!(result.trace.iter().all(|r| r.action == Action::MoveForward));
    let first = &result.trace[0];
    assert_eq!(first.parse_events.len(), 1);
    assert_eq!(first.parse_events[0].kind, ParseEventKind::ParseFailure);

    let reqs = stub.requests.lock().unwrap();
    // one extra request for the corrective re-ask
    assert_eq!(reqs.len(), result.trace.len() + 1);
    let user_text = |i: usize| {
        let parts = reqs[i].body["messages"][1]["content"].as_array().unwrap().clone();
        (parts.len() - 1, parts.last().unwrap()["text"].as_str().unwrap().to_string())
    };
    let (images, text) = user_text(1);
    assert_eq!(images, 1);
    assert!(text.contains(CORRECTIVE_SENTENCE));
    let (images, text) = user_text(2);
    assert_eq!(images, 2);
    assert!(text.contains("Your previous reflection was: \"The corridor continues.\""));
    for r in reqs.iter() {
        let system = r.body["messages"][0]["content"][0]["text"].as_str().unwrap();
        let all = format!("{system}{}", r.body["messages"][1]);
        assert!(!all.contains("distance"), "goal distance leaked into prompt");
    }
}

#[test]
fn timeouts_are_retried_and_counted() {
    let stub = Stub::start(vec![Reply::content("late").delayed(Duration::from_millis(800))]);
    let err = RemoteClient::new(config(&stub.base_url, 2, 0.2))
        .unwrap()
        .infer(&request())
        .unwrap_err();
    assert!(matches!(err, GatewayError::Timeout { attempts: 3 }), "{err:?}");
    assert_eq!(stub.hits(), 3);
}

//! Minimal chat-completions endpoint for policy tests.

use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};
use tiny_http::{Header, Response, Server};

#[derive(Clone)]
pub struct Reply {
    pub status: u16,
    pub body: String,
    pub delay: Duration,
}

impl Reply {
    /// A 200 answer whose message content is `text`.
    pub fn content(text: &str) -> Self {
        let body = json!({
            "choices": [{ "index": 0, "message": { "role": "assistant", "content": text } }]
        });
        Self { status: 200, body: body.to_string(), delay: Duration::ZERO }
    }

    pub fn status(status: u16) -> Self {
        Self { status, body: "{\"error\":\"stub\"}".into(), delay: Duration::ZERO }
    }

    pub fn delayed(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

pub struct Recorded {
    pub path: String,
    pub authorization: Option<String>,
    pub body: Value,
}

pub struct Stub {
    pub base_url: String,
    pub requests: Arc<Mutex<Vec<Recorded>>>,
    server: Arc<Server>,
    handle: Option<JoinHandle<()>>,
}

impl Stub {
    /// Serves `replies` in order, repeating the last one once they run out.
    pub fn start(replies: Vec<Reply>) -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").unwrap());
        let port = server.server_addr().to_ip().unwrap().port();
        let requests = Arc::new(Mutex::new(Vec::new()));
        let (srv, log) = (server.clone(), requests.clone());
        let handle = std::thread::spawn(move || {
            let mut n = 0;
            for mut req in srv.incoming_requests() {
                let mut text = String::new();
                let _ = req.as_reader().read_to_string(&mut text);
                let authorization = req
                    .headers()
                    .iter()
                    .find(|h| h.field.equiv("Authorization"))
                    .map(|h| h.value.to_string());
                log.lock().unwrap().push(Recorded {
                    path: req.url().to_string(),
                    authorization,
                    body: serde_json::from_str(&text).unwrap_or(Value::Null),
                });
                let reply = replies[n.min(replies.len() - 1)].clone();
                n += 1;
                std::thread::spawn(move || {
                    std::thread::sleep(reply.delay);
                    let header = Header::from_bytes("Content-Type", "application/json").unwrap();
                    let _ = req.respond(
                        Response::from_string(reply.body)
                            .with_status_code(reply.status)
                            .with_header(header),
                    );
                });
            }
        });
        Self {
            base_url: format!("http://127.0.0.1:{port}/v1"),
            requests,
            server,
            handle: Some(handle),
        }
    }

    pub fn hits(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

impl Drop for Stub {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

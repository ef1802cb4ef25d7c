//! Newline-delimited JSON simulator protocol.
//!
//! One request object per line, one response object per line:
//!
//! ```text
//! {"cmd":"reset","episode_id":"corridor-01"}
//! {"cmd":"step","action":"move_forward"}
//! {"cmd":"episodes"}
//! {"cmd":"close"}
//! ```
//!
//! Reset and step answer with the frame as base64 PNG, the pose, the collision
//! flag, the step counter and the ground-truth distance to goal. Failures
//! answer `{"ok":false,"error":...}` and keep the session open.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::{BuiltinSimulator, Observation, SimError, SimParams, SimResponse, Simulator};
use crate::model::{Action, Episode, Pose};
use crate::sim::frame::Frame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Request {
    Reset { episode_id: String },
    Step { action: Action },
    Episodes,
    Close,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl From<Pose> for WirePose {
    fn from(p: Pose) -> Self {
        Self {
            x: p.x,
            y: p.y,
            heading: p.heading,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Response {
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame_png_base64: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pose: Option<WirePose>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collided: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_to_goal: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn error(message: impl Into<String>) -> Self {
        Self {
            ok: false,
            error: Some(message.into()),
            ..Default::default()
        }
    }

    pub fn from_sim(r: &SimResponse) -> Result<Self, SimError> {
        let png = r
            .observation
            .frame
            .to_png_base64()
            .map_err(|e| SimError::Protocol(e.to_string()))?;
        Ok(Self {
            ok: true,
            frame_png_base64: Some(png),
            pose: Some(r.pose.into()),
            collided: Some(r.collided),
            step: Some(r.step),
            distance_to_goal: Some(r.distance_to_goal),
            ..Default::default()
        })
    }

    /// Converts an ok reset/step response back into a [`SimResponse`].
    pub fn into_sim(self) -> Result<SimResponse, SimError> {
        if !self.ok {
            return Err(SimError::Protocol(
                self.error.unwrap_or_else(|| "peer reported failure".into()),
            ));
        }
        let missing = |field: &str| SimError::Protocol(format!("response missing field {field}"));
        let png = self.frame_png_base64.ok_or_else(|| missing("frame_png_base64"))?;
        let pose = self.pose.ok_or_else(|| missing("pose"))?;
        let step = self.step.ok_or_else(|| missing("step"))?;
        let frame = Frame::from_png_base64(&png).map_err(|e| SimError::Protocol(e.to_string()))?;
        Ok(SimResponse {
            observation: Observation { frame, step },
            pose: Pose::new(pose.x, pose.y, pose.heading)
                .map_err(|e| SimError::Protocol(e.to_string()))?,
            collided: self.collided.ok_or_else(|| missing("collided"))?,
            step,
            distance_to_goal: self.distance_to_goal.ok_or_else(|| missing("distance_to_goal"))?,
        })
    }
}

/// Serves the protocol from a built-in simulator over a fixed episode set.
pub struct ProtocolServer {
    episodes: BTreeMap<String, Episode>,
    sim: BuiltinSimulator,
}

impl ProtocolServer {
    pub fn new(episodes: Vec<Episode>, sim: BuiltinSimulator) -> Self {
        Self {
            episodes: episodes
                .into_iter()
                .map(|e| (e.episode_id.clone(), e))
                .collect(),
            sim,
        }
    }

    /// Handles one raw request line. The boolean is true when the session should end.
    pub fn handle_line(&mut self, line: &str) -> (Response, bool) {
        let request: Request = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => return (Response::error(format!("malformed request: {e}")), false),
        };
        debug!(?request, "simulator request");
        let result = match request {
            Request::Close => return (Response { ok: true, ..Default::default() }, true),
            Request::Episodes => {
                return (
                    Response {
                        ok: true,
                        episodes: Some(self.episodes.keys().cloned().collect()),
                        ..Default::default()
                    },
                    false,
                )
            }
            Request::Reset { episode_id } => match self.episodes.get(&episode_id) {
                Some(ep) => self.sim.reset(ep),
                None => Err(SimError::EpisodeNotFound(episode_id)),
            },
            Request::Step { action } => self.sim.step(action),
        };
        let response = result
            .and_then(|r| Response::from_sim(&r))
            .unwrap_or_else(|e| Response::error(e.to_string()));
        (response, false)
    }

    /// Runs one session until `close` or end of input.
    pub fn serve_stream<R: BufRead, W: Write>(&mut self, reader: R, mut writer: W) -> std::io::Result<()> {
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (response, done) = self.handle_line(&line);
            serde_json::to_writer(&mut writer, &response)?;
            writer.write_all(b"\n")?;
            writer.flush()?;
            if done {
                break;
            }
        }
        Ok(())
    }

    /// Accepts TCP connections one at a time and serves each to completion.
    pub fn serve_tcp(&mut self, listener: TcpListener) -> std::io::Result<()> {
        for stream in listener.incoming() {
            let stream = stream?;
            let reader = BufReader::new(stream.try_clone()?);
            if let Err(e) = self.serve_stream(reader, BufWriter::new(stream)) {
                warn!("session ended with error: {e}");
            }
        }
        Ok(())
    }
}

/// Accepts TCP connections and serves each on its own thread with a fresh
/// simulator, so several clients can run episodes at once.
pub fn serve_tcp_threaded(
    listener: TcpListener,
    episodes: Vec<Episode>,
    params: SimParams,
) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let episodes = episodes.clone();
        std::thread::spawn(move || {
            let mut server = ProtocolServer::new(episodes, BuiltinSimulator::new(params));
            let session = stream
                .try_clone()
                .and_then(|r| server.serve_stream(BufReader::new(r), BufWriter::new(stream)));
            if let Err(e) = session {
                warn!("session ended with error: {e}");
            }
        });
    }
    Ok(())
}

/// Client side of the protocol.
pub struct RemoteSimulator {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
}

impl RemoteSimulator {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, SimError> {
        let stream = TcpStream::connect(addr)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Self::from_streams(reader, stream))
    }

    /// Spawns `program args...` and speaks the protocol over its stdin/stdout.
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, SimError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut sim = Self::from_streams(BufReader::new(stdout), stdin);
        sim.child = Some(child);
        Ok(sim)
    }

    pub fn from_streams<R, W>(reader: R, writer: W) -> Self
    where
        R: BufRead + Send + 'static,
        W: Write + Send + 'static,
    {
        Self {
            reader: Box::new(reader),
            writer: Box::new(writer),
            child: None,
        }
    }

    pub fn request(&mut self, request: &Request) -> Result<Response, SimError> {
        serde_json::to_writer(&mut self.writer, request)
            .map_err(|e| SimError::Protocol(e.to_string()))?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(SimError::Protocol("connection closed by simulator".into()));
        }
        serde_json::from_str(&line).map_err(|e| SimError::Protocol(format!("bad response: {e}")))
    }

    pub fn episodes(&mut self) -> Result<Vec<String>, SimError> {
        let r = self.request(&Request::Episodes)?;
        if !r.ok {
            return Err(SimError::Protocol(r.error.unwrap_or_default()));
        }
        r.episodes
            .ok_or_else(|| SimError::Protocol("response missing field episodes".into()))
    }

    pub fn close(&mut self) -> Result<(), SimError> {
        self.request(&Request::Close)?;
        if let Some(mut child) = self.child.take() {
            child.wait()?;
        }
        Ok(())
    }
}

impl Simulator for RemoteSimulator {
    fn reset(&mut self, episode: &Episode) -> Result<SimResponse, SimError> {
        self.request(&Request::Reset {
            episode_id: episode.episode_id.clone(),
        })?
        .into_sim()
    }

    fn step(&mut self, action: Action) -> Result<SimResponse, SimError> {
        if action == Action::Stop {
            return Err(SimError::StopPassedToSimulator);
        }
        self.request(&Request::Step { action })?.into_sim()
    }
}

impl Drop for RemoteSimulator {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

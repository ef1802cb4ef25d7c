//! Run configuration: built-in defaults, overlaid by an optional JSON config
//! file, overlaid by command-line flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use vlnloop_core::eval::ReportFormat;
use vlnloop_core::navloop::LoopConfig;
use vlnloop_core::policy::PolicyEndpointConfig;
use vlnloop_core::prompt::PromptConfig;
use vlnloop_core::sim::SimParams;

use crate::error::CliError;

pub const API_KEY_ENV: &str = "VLN_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulatorSpec {
    Builtin,
    /// `host:port` of a server speaking the simulator protocol.
    Remote(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySpec {
    ZeroMovement,
    Oracle,
    /// A trace file, or a directory of trace files, whose actions are replayed.
    Replay(PathBuf),
    Remote(PolicyEndpointConfig),
}

impl PolicySpec {
    /// Parses the `--policy` flag. `remote` keeps `current` endpoint settings
    /// when the config file already chose a remote policy.
    pub fn parse_flag(s: &str, current: &PolicySpec) -> Result<Self, CliError> {
        match s {
            "zero_movement" => Ok(PolicySpec::ZeroMovement),
            "oracle" => Ok(PolicySpec::Oracle),
            "remote" => Ok(match current {
                PolicySpec::Remote(cfg) => PolicySpec::Remote(cfg.clone()),
                _ => PolicySpec::Remote(PolicyEndpointConfig::default()),
            }),
            other => match other.strip_prefix("replay:") {
                Some(path) if !path.is_empty() => Ok(PolicySpec::Replay(PathBuf::from(path))),
                _ => Err(CliError::Config(format!(
                    "unknown policy {other:?} (expected zero_movement, oracle, replay:<path> or remote)"
                ))),
            },
        }
    }

    pub fn is_scripted(&self) -> bool {
        !matches!(self, PolicySpec::Remote(_))
    }
}

/// Report format as written in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatSpec {
    Json,
    Csv,
    Table,
}

impl From<FormatSpec> for ReportFormat {
    fn from(f: FormatSpec) -> Self {
        match f {
            FormatSpec::Json => ReportFormat::Json,
            FormatSpec::Csv => ReportFormat::Csv,
            FormatSpec::Table => ReportFormat::Table,
        }
    }
}

impl FromStr for FormatSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.parse::<ReportFormat>().map_err(|e| CliError::Config(e.to_string()))? {
            ReportFormat::Json => Ok(FormatSpec::Json),
            ReportFormat::Csv => Ok(FormatSpec::Csv),
            ReportFormat::Table => Ok(FormatSpec::Table),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub episode_set: PathBuf,
    pub limit: Option<usize>,
    pub simulator: SimulatorSpec,
    pub policy: PolicySpec,
    #[serde(rename = "loop")]
    pub loop_cfg: LoopConfig,
    pub sim_params: SimParams,
    pub prompt: PromptConfig,
    /// Directory of template files overriding the shipped prompt texts.
    pub template_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub parallelism: usize,
    pub seed: u64,
    pub format: FormatSpec,
    pub baselines: bool,
    pub save_frames: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            episode_set: PathBuf::from("episodes.json"),
            limit: None,
            simulator: SimulatorSpec::Builtin,
            policy: PolicySpec::ZeroMovement,
            loop_cfg: LoopConfig::default(),
            sim_params: SimParams::default(),
            prompt: PromptConfig::default(),
            template_dir: None,
            output_dir: PathBuf::from("runs/latest"),
            parallelism: 1,
            seed: 0,
            format: FormatSpec::Json,
            baselines: false,
            save_frames: false,
        }
    }
}

/// Command-line values that override the config file when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub episodes: Option<PathBuf>,
    pub limit: Option<usize>,
    pub policy: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub sim: Option<String>,
    pub sim_addr: Option<String>,
    pub max_steps: Option<usize>,
    pub success_radius: Option<f64>,
    pub window: Option<usize>,
    pub out: Option<PathBuf>,
    pub parallel: Option<usize>,
    pub seed: Option<u64>,
    pub format: Option<String>,
    pub baselines: bool,
    pub save_frames: bool,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("parsing config {}: {e}", path.display())))
    }

    /// Defaults, then `file`, then `flags`, then the API key from the environment.
    pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply(flags)?;
        if let PolicySpec::Remote(endpoint) = &mut cfg.policy {
            if let Ok(key) = std::env::var(API_KEY_ENV) {
                if !key.is_empty() {
                    endpoint.api_key = Some(key);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, f: &Overrides) -> Result<(), CliError> {
        if let Some(v) = &f.episodes {
            self.episode_set = v.clone();
        }
        if f.limit.is_some() {
            self.limit = f.limit;
        }
        if let Some(p) = &f.policy {
            self.policy = PolicySpec::parse_flag(p, &self.policy)?;
        }
        if f.endpoint.is_some() || f.model.is_some() {
            let PolicySpec::Remote(endpoint) = &mut self.policy else {
                return Err(CliError::Config("--endpoint and --model need --policy remote".into()));
            };
            if let Some(url) = &f.endpoint {
                endpoint.base_url = url.clone();
            }
            if let Some(model) = &f.model {
                endpoint.model_name = model.clone();
            }
        }
        match (f.sim.as_deref(), &f.sim_addr) {
            (Some("builtin"), None) => self.simulator = SimulatorSpec::Builtin,
            (Some("builtin"), Some(_)) => {
                return Err(CliError::Config("--sim-addr needs --sim remote".into()))
            }
            (Some("remote"), Some(addr)) => self.simulator = SimulatorSpec::Remote(addr.clone()),
            (Some("remote"), None) => match &self.simulator {
                SimulatorSpec::Remote(_) => {}
                SimulatorSpec::Builtin => {
                    return Err(CliError::Config("--sim remote needs --sim-addr".into()))
                }
            },
            (None, Some(addr)) => self.simulator = SimulatorSpec::Remote(addr.clone()),
            (None, None) => {}
            (Some(other), _) => {
                return Err(CliError::Config(format!(
                    "unknown simulator {other:?} (expected builtin or remote)"
                )))
            }
        }
        if let Some(v) = f.max_steps {
            self.loop_cfg.max_steps = v;
        }
        if let Some(v) = f.success_radius {
            self.loop_cfg.success_radius = v;
        }
        if let Some(v) = f.window {
            self.loop_cfg.window = v;
        }
        if let Some(v) = &f.out {
            self.output_dir = v.clone();
        }
        if let Some(v) = f.parallel {
            self.parallelism = v;
        }
        if let Some(v) = f.seed {
            self.seed = v;
        }
        if let Some(v) = &f.format {
            self.format = v.parse()?;
        }
        self.baselines |= f.baselines;
        self.save_frames |= f.save_frames;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.parallelism == 0 {
            return Err(CliError::Config("parallelism must be at least 1".into()));
        }
        if self.limit == Some(0) {
            return Err(CliError::Config("--limit must be at least 1".into()));
        }
        self.loop_cfg.validate().map_err(CliError::Config)?;
        self.prompt
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if (self.prompt.turn_angle - self.sim_params.turn_angle).abs() > 1e-12
            || (self.prompt.forward_step - self.sim_params.forward_step).abs() > 1e-12
        {
            return Err(CliError::Config(
                "prompt turn_angle/forward_step must match sim_params".into(),
            ));
        }
        if let PolicySpec::Remote(endpoint) = &self.policy {
            if !(endpoint.timeout > 0.0) {
                return Err(CliError::Config("endpoint timeout must be > 0".into()));
            }
        }
        Ok(())
    }

    /// Prompt settings actually sent: loop window, run seed and endpoint
    /// temperature folded in, templates loaded.
    pub fn effective_prompt(&self) -> Result<PromptConfig, CliError> {
        let mut prompt = match &self.template_dir {
            Some(dir) => self
                .prompt
                .clone()
                .with_template_dir(dir)
                .map_err(|e| CliError::Config(e.to_string()))?,
            None => self.prompt.clone(),
        };
        prompt.window = self.loop_cfg.window;
        prompt.decode.seed = Some(self.seed);
        if let PolicySpec::Remote(endpoint) = &self.policy {
            prompt.decode.temperature = endpoint.temperature;
        }
        Ok(prompt)
    }

    pub fn report_format(&self) -> ReportFormat {
        self.format.into()
    }
}

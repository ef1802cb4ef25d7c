use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use vlnloop_cli::commands::{cmd_eval, cmd_replay, cmd_run, cmd_serve, cmd_validate, ServeMode};
use vlnloop_cli::{CliError, Overrides, RunConfig, SimulatorSpec};
use vlnloop_core::eval::ReportFormat;
use vlnloop_core::sim::SimParams;

#[derive(Parser)]
#[command(name = "vlnloop", version, about = "Vision-and-language navigation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an episode set and write traces plus a report.
    Run(RunArgs),
    /// Recompute the report from a directory of trace files.
    Eval {
        trace_dir: PathBuf,
        #[arg(long, default_value = "json")]
        format: String,
        /// Include published reference rows.
        #[arg(long)]
        baselines: bool,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-execute traces and verify the recorded poses.
    Replay {
        /// A trace file or a directory of traces.
        trace: PathBuf,
        #[arg(long, default_value = "builtin")]
        sim: String,
        #[arg(long)]
        sim_addr: Option<String>,
    },
    /// Check an episode set and its maps.
    Validate {
        #[arg(long)]
        episodes: PathBuf,
    },
    /// Serve the simulator protocol over TCP or stdio.
    Serve {
        #[arg(long)]
        episodes: PathBuf,
        /// Address to listen on, e.g. 127.0.0.1:7420.
        #[arg(long, conflicts_with = "stdio")]
        listen: Option<String>,
        #[arg(long)]
        stdio: bool,
    },
    /// Print the effective run configuration as JSON.
    Config(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<PathBuf>,
    /// Run only the first N episodes in file order.
    #[arg(long)]
    limit: Option<usize>,
    /// zero_movement | oracle | replay:<path> | remote
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// builtin | remote
    #[arg(long)]
    sim: Option<String>,
    #[arg(long)]
    sim_addr: Option<String>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    success_radius: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// json | csv | table
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    baselines: bool,
    #[arg(long)]
    save_frames: bool,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, CliError> {
        let flags = Overrides {
            episodes: self.episodes,
            limit: self.limit,
            policy: self.policy,
            endpoint: self.endpoint,
            model: self.model,
            sim: self.sim,
            sim_addr: self.sim_addr,
            max_steps: self.max_steps,
            success_radius: self.success_radius,
            window: self.window,
            out: self.out,
            parallel: self.parallel,
            seed: self.seed,
            format: self.format,
            baselines: self.baselines,
            save_frames: self.save_frames,
        };
        RunConfig::resolve(self.config.as_deref(), &flags)
    }
}

fn parse_format(s: &str) -> Result<ReportFormat, CliError> {
    s.parse().map_err(|e: vlnloop_core::eval::EvalError| CliError::Config(e.to_string()))
}

fn simulator_spec(sim: &str, addr: Option<String>) -> Result<SimulatorSpec, CliError> {
    match (sim, addr) {
        ("builtin", None) => Ok(SimulatorSpec::Builtin),
        ("remote", Some(a)) => Ok(SimulatorSpec::Remote(a)),
        ("remote", None) => Err(CliError::Config("--sim remote needs --sim-addr".into())),
        ("builtin", Some(_)) => Err(CliError::Config("--sim-addr needs --sim remote".into())),
        (other, _) => Err(CliError::Config(format!("unknown simulator {other:?}"))),
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let out = cmd_run(&cfg)?;
            print!("{}", out.report_text);
            eprintln!(
                "wrote {} trace(s) and {}",
                out.trace_paths.len(),
                out.report_path.display()
            );
        }
        Command::Eval { trace_dir, format, baselines, out } => {
            let text = cmd_eval(&trace_dir, parse_format(&format)?, baselines)?;
            if let Some(path) = out {
                std::fs::write(&path, &text).map_err(|e| CliError::io(&path, e))?;
            }
            print!("{text}");
        }
        Command::Replay { trace, sim, sim_addr } => {
            let spec = simulator_spec(&sim, sim_addr)?;
            for verdict in cmd_replay(&trace, &spec, SimParams::default())? {
                println!("{}", serde_json::to_string(&verdict).expect("verdict serializes"));
            }
        }
        Command::Validate { episodes } => {
            let (count, issues) = cmd_validate(&episodes)?;
            for issue in &issues {
                println!("{}", serde_json::to_string(issue).expect("issue serializes"));
            }
            if !issues.is_empty() {
                return Err(CliError::Invalid(issues.len()));
            }
            println!("{}", serde_json::json!({ "episodes": count, "status": "ok" }));
        }
        Command::Serve { episodes, listen, stdio } => {
            let mode = match (listen, stdio) {
                (Some(addr), false) => ServeMode::Tcp(addr),
                (None, true) => ServeMode::Stdio,
                _ => return Err(CliError::Config("serve needs --listen <addr> or --stdio".into())),
            };
            cmd_serve(&episodes, mode, SimParams::default())?;
        }
        Command::Config(args) => {
            let cfg = args.resolve()?;
            println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("VLNLOOP_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.error_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitCode, Stdio};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use marketsim::domain::AgentId;
use marketsim::sim::{self, AgentLauncher, ReportFormat, RunConfig, RunOptions, SimError};

#[derive(Parser)]
#[command(name = "marketsim", version, about = "Config-driven market simulation runner")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one session and write its outputs.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a config several times and compare trade logs and reports.
    Verify {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        runs: usize,
    },
    /// Time the config at several roster sizes.
    Bench {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [10, 50, 150])]
        agents: Vec<usize>,
        /// Also write the CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render the report of a finished run.
    Report {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Html)]
        format: Format,
    },
    /// Run one agent of a config against a remote engine.
    #[command(hide = true)]
    Agent {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        agent_id: String,
        #[arg(long)]
        connect: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Html,
    Json,
}

/// Starts agents by re-running this binary.
struct SelfLauncher {
    exe: PathBuf,
}

impl AgentLauncher for SelfLauncher {
    fn launch(&self, config: &Path, agent_id: &AgentId, addr: SocketAddr) -> std::io::Result<Child> {
        Command::new(&self.exe)
            .arg("agent")
            .arg("--config")
            .arg(config)
            .arg("--agent-id")
            .arg(agent_id.as_str())
            .arg("--connect")
            .arg(addr.to_string())
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .spawn()
    }
}

fn options() -> RunOptions {
    let launcher = std::env::current_exe()
        .ok()
        .map(|exe| Arc::new(SelfLauncher { exe }) as Arc<dyn AgentLauncher>);
    RunOptions {
        transcript: false,
        launcher,
    }
}

fn run(config: &Path, out: Option<PathBuf>) -> Result<(), SimError> {
    let cfg = RunConfig::load(config)?;
    let dir = out
        .or_else(|| cfg.output_dir.as_ref().map(|d| cfg.resolve(d)))
        .unwrap_or_else(|| PathBuf::from("out"));
    let outcome = sim::run(&cfg, &options())?;
    sim::write_outputs(&outcome.outputs, &dir)?;
    for (agent, why) in &outcome.stats.agent_failures {
        eprintln!("warning: {agent}: {why}");
    }
    println!(
        "{} agents, {} decision points, {:.0} ms -> {}",
        outcome.stats.agents,
        outcome.stats.decision_points,
        outcome.stats.wall.as_secs_f64() * 1e3,
        dir.display()
    );
    Ok(())
}

fn verify(config: &Path, runs: usize) -> Result<bool, SimError> {
    let cfg = RunConfig::load(config)?;
    if !cfg.is_deterministic() {
        eprintln!("warning: roster has external providers; identical runs are not guaranteed");
    }
    let verdict = sim::verify(&cfg, runs, &options())?;
    for (i, d) in verdict.digests.iter().enumerate() {
        println!("run {}: {d:016x}", i + 1);
    }
    println!("{}", if verdict.identical { "identical" } else { "divergent" });
    Ok(verdict.identical)
}

fn bench(config: &Path, agents: &[usize], out: Option<PathBuf>) -> Result<(), SimError> {
    let cfg = RunConfig::load(config)?;
    let rows = sim::bench(&cfg, agents, &options())?;
    let text = sim::bench_csv(&rows)?;
    print!("{text}");
    if let Some(path) = out {
        std::fs::write(&path, &text).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run { config, out } => run(&config, out),
        Cmd::Verify { config, runs } => match verify(&config, runs) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(3),
            Err(e) => Err(e),
        },
        Cmd::Bench { config, agents, out } => bench(&config, &agents, out),
        Cmd::Report { run_dir, format } => {
            let format = match format {
                Format::Html => ReportFormat::Html,
                Format::Json => ReportFormat::Json,
            };
            sim::render_saved(&run_dir, format).map(|text| print!("{text}"))
        }
        Cmd::Agent {
            config,
            agent_id,
            connect,
        } => RunConfig::load(&config).and_then(|cfg| sim::run_remote_agent(&cfg, &agent_id, &connect).map(|_| ())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Where agents run: threads on the in-process broker, threads over TCP,
//! or separate OS processes over TCP.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::Child;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use crate::agents::{AgentError, AgentOutcome, AgentRuntime, AgentSetup, Strategy};
use crate::bus::{Broker, BrokerConnection, TcpConnection, TcpServer};
use crate::domain::AgentId;

use super::config::{AgentSlot, RunConfig, TransportKind};
use super::SimError;

/// Starts one agent as a child process that connects back to `addr`.
///
/// The binary decides how; the usual answer is re-running itself with an
/// `agent` subcommand.
pub trait AgentLauncher: Send + Sync {
    fn launch(&self, config: &Path, agent_id: &AgentId, addr: SocketAddr) -> std::io::Result<Child>;
}

type AgentThread = JoinHandle<Result<AgentOutcome, AgentError>>;

/// Running agents of one session.
pub(super) struct Hosted {
    threads: Vec<(AgentId, AgentThread)>,
    children: Vec<(AgentId, Child)>,
    server: Option<TcpServer>,
    config_file: Option<PathBuf>,
}

pub(super) fn idle_timeout(cfg: &RunConfig) -> Duration {
    Duration::from_secs(60).max(Duration::from_millis(cfg.session.decision_timeout_ms.saturating_mul(2)))
}

fn setup(cfg: &RunConfig, slot: &AgentSlot) -> AgentSetup {
    AgentSetup {
        agent_id: slot.agent_id.clone(),
        roster_index: slot.roster_index,
        instrument: cfg.instrument.clone(),
        action_interval_ms: cfg.action_interval_ms(),
        history: slot.history,
        idle_timeout: idle_timeout(cfg),
    }
}

fn spawn_thread<F>(agent: &AgentId, body: F) -> Result<AgentThread, SimError>
where
    F: FnOnce() -> Result<AgentOutcome, AgentError> + Send + 'static,
{
    std::thread::Builder::new()
        .name(format!("agent-{agent}"))
        .spawn(body)
        .map_err(|e| SimError::Runtime(format!("cannot start agent thread: {e}")))
}

type Built = Vec<(AgentSlot, Box<dyn Strategy>)>;

fn build_all(cfg: &RunConfig) -> Result<Built, SimError> {
    cfg.roster()
        .into_iter()
        .map(|slot| {
            let strategy = slot
                .strategy
                .build(slot.agent_id.as_str(), &cfg.instrument)
                .map_err(|e| SimError::Config(format!("agent {}: {e}", slot.agent_id)))?;
            Ok((slot, strategy))
        })
        .collect()
}

fn temp_config(cfg: &RunConfig) -> Result<PathBuf, SimError> {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or_default();
    let path = std::env::temp_dir().join(format!("marketsim-{}-{nanos}.toml", std::process::id()));
    std::fs::write(&path, cfg.to_toml()?).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

impl Hosted {
    pub fn start(cfg: &RunConfig, broker: &Arc<Broker>, launcher: Option<&dyn AgentLauncher>) -> Result<Self, SimError> {
        let mut hosted = Hosted {
            threads: Vec::new(),
            children: Vec::new(),
            server: None,
            config_file: None,
        };
        match cfg.transport.kind {
            TransportKind::InProcess => {
                for (slot, strategy) in build_all(cfg)? {
                    let conn = BrokerConnection::connect(broker, slot.agent_id.as_str());
                    let runtime = AgentRuntime::new(setup(cfg, &slot), conn, strategy);
                    let handle = spawn_thread(&slot.agent_id, move || runtime.run())?;
                    hosted.threads.push((slot.agent_id, handle));
                }
            }
            TransportKind::Tcp => {
                let server = TcpServer::bind(Arc::clone(broker), cfg.transport.bind.as_str())?;
                let addr = server.local_addr();
                hosted.server = Some(server);
                if cfg.transport.processes {
                    let launcher = launcher
                        .ok_or_else(|| SimError::Config("process transport needs an agent launcher".into()))?;
                    let path = temp_config(cfg)?;
                    hosted.config_file = Some(path.clone());
                    for slot in cfg.roster() {
                        match launcher.launch(&path, &slot.agent_id, addr) {
                            Ok(child) => hosted.children.push((slot.agent_id, child)),
                            Err(e) => {
                                hosted.abort();
                                return Err(SimError::Runtime(format!("cannot launch {}: {e}", slot.agent_id)));
                            }
                        }
                    }
                } else {
                    for (slot, strategy) in build_all(cfg)? {
                        let setup = setup(cfg, &slot);
                        let handle = spawn_thread(&slot.agent_id, move || {
                            let conn = TcpConnection::connect(addr, setup.agent_id.as_str())?;
                            AgentRuntime::new(setup, conn, strategy).run()
                        })?;
                        hosted.threads.push((slot.agent_id, handle));
                    }
                }
            }
        }
        Ok(hosted)
    }

    /// Waits for every agent after the session ended. Agent failures are
    /// logged, not fatal: the engine already accounted for silent agents.
    pub fn join(mut self, wait: Duration) -> Vec<(AgentId, String)> {
        let mut failures = Vec::new();
        for (agent, handle) in std::mem::take(&mut self.threads) {
            match handle.join() {
                Ok(Ok(_)) => {}
                Ok(Err(e)) => failures.push((agent, e.to_string())),
                Err(_) => failures.push((agent, "agent thread panicked".into())),
            }
        }
        let deadline = std::time::Instant::now() + wait;
        for (agent, mut child) in std::mem::take(&mut self.children) {
            loop {
                match child.try_wait() {
                    Ok(Some(status)) if status.success() => break,
                    Ok(Some(status)) => {
                        failures.push((agent.clone(), format!("agent process exited with {status}")));
                        break;
                    }
                    Ok(None) if std::time::Instant::now() < deadline => {
                        std::thread::sleep(Duration::from_millis(10));
                    }
                    _ => {
                        let _ = child.kill();
                        let _ = child.wait();
                        failures.push((agent.clone(), "agent process did not exit".into()));
                        break;
                    }
                }
            }
        }
        for (agent, why) in &failures {
            log::warn!("{agent}: {why}");
        }
        failures
    }

    /// Kills child processes without waiting for a clean exit.
    pub fn abort(&mut self) {
        for (_, child) in &mut self.children {
            let _ = child.kill();
            let _ = child.wait();
        }
        self.children.clear();
    }
}

impl Drop for Hosted {
    fn drop(&mut self) {
        self.abort();
        if let Some(server) = &mut self.server {
            server.shutdown();
        }
        if let Some(path) = self.config_file.take() {
            let _ = std::fs::remove_file(path);
        }
    }
}

/// Body of an agent process: connect to the engine at `addr` and trade until
/// the session ends.
pub fn run_remote_agent(cfg: &RunConfig, agent_id: &str, addr: &str) -> Result<AgentOutcome, SimError> {
    let slot = cfg
        .roster()
        .into_iter()
        .find(|s| s.agent_id.as_str() == agent_id)
        .ok_or_else(|| SimError::Config(format!("agent {agent_id} is not in the roster")))?;
    let strategy = slot
        .strategy
        .build(agent_id, &cfg.instrument)
        .map_err(|e| SimError::Config(format!("agent {agent_id}: {e}")))?;
    let conn = TcpConnection::connect(addr, agent_id)?;
    Ok(AgentRuntime::new(setup(cfg, &slot), conn, strategy).run()?)
}

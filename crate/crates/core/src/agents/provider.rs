//! Bridge to decision logic living outside this process.
//!
//! Each decision point sends the [`DecisionContext`] as one JSON document and
//! expects a JSON array of [`ActionRequest`] back. Anything else is logged and
//! treated as an empty decision.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::time::Duration;

use crossbeam_channel::{Receiver, RecvTimeoutError};
use serde::{Deserialize, Serialize};

use crate::bus::canonical_json;
use crate::data::DataQuery;
use crate::domain::SimTime;

use super::strategy::{Decision, Strategy};
use super::{parse_actions, AgentError, DecisionContext};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    /// Program and arguments; speaks newline-delimited JSON on stdin/stdout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Vec<String>>,
    /// Endpoint receiving the context as an HTTP POST body.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// When set, fundamentals and corporate events from this far back are
    /// fetched before every decision.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fundamentals_lookback_ms: Option<u64>,
}

fn default_timeout_ms() -> u64 {
    10_000
}

impl ProviderConfig {
    pub fn command(argv: &[&str]) -> Self {
        ProviderConfig {
            command: Some(argv.iter().map(|s| s.to_string()).collect()),
            url: None,
            timeout_ms: default_timeout_ms(),
            fundamentals_lookback_ms: None,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        match (&self.command, &self.url) {
            (Some(argv), None) if !argv.is_empty() => Ok(()),
            (None, Some(url)) if url.starts_with("http://") || url.starts_with("https://") => Ok(()),
            (Some(_), Some(_)) => Err(AgentError::ProviderConfig("set either command or url, not both".into())),
            _ => Err(AgentError::ProviderConfig("needs a non-empty command or an http(s) url".into())),
        }
    }
}

/// Why a provider exchange produced no actions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderFault {
    Timeout,
    Transport(String),
    Malformed(String),
}

impl ProviderFault {
    pub fn code(&self) -> &'static str {
        match self {
            ProviderFault::Timeout => "PROVIDER_TIMEOUT",
            ProviderFault::Transport(_) => "PROVIDER_UNREACHABLE",
            ProviderFault::Malformed(_) => "MALFORMED_RESPONSE",
        }
    }

    fn describe(&self) -> String {
        match self {
            ProviderFault::Timeout => self.code().to_string(),
            ProviderFault::Transport(m) | ProviderFault::Malformed(m) => format!("{}: {m}", self.code()),
        }
    }
}

enum Transport {
    Process {
        child: Child,
        stdin: Option<ChildStdin>,
        lines: Receiver<String>,
    },
    Http {
        agent: ureq::Agent,
        url: String,
    },
}

pub struct ExternalProvider {
    config: ProviderConfig,
    symbol: String,
    transport: Transport,
    faults: Vec<ProviderFault>,
}

impl ExternalProvider {
    pub fn start(config: ProviderConfig, symbol: String) -> Result<Self, AgentError> {
        config.validate()?;
        let transport = match (&config.command, &config.url) {
            (Some(argv), _) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| AgentError::ProviderSpawn(format!("{}: {e}", argv[0])))?;
                let stdin = child.stdin.take();
                let stdout = child.stdout.take().expect("stdout is piped");
                let (tx, lines) = crossbeam_channel::unbounded();
                std::thread::Builder::new()
                    .name("provider-stdout".into())
                    .spawn(move || {
                        for line in BufReader::new(stdout).lines() {
                            let Ok(line) = line else { break };
                            if tx.send(line).is_err() {
                                break;
                            }
                        }
                    })
                    .map_err(|e| AgentError::ProviderSpawn(e.to_string()))?;
                Transport::Process { child, stdin, lines }
            }
            (None, Some(url)) => {
                let cfg = ureq::Agent::config_builder()
                    .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
                    .build();
                Transport::Http {
                    agent: ureq::Agent::new_with_config(cfg),
                    url: url.clone(),
                }
            }
            (None, None) => unreachable!("validated above"),
        };
        Ok(ExternalProvider {
            config,
            symbol,
            transport,
            faults: Vec::new(),
        })
    }

    /// Problems seen so far, oldest first.
    pub fn faults(&self) -> &[ProviderFault] {
        &self.faults
    }

    fn exchange(&mut self, body: &str) -> Result<String, ProviderFault> {
        let timeout = Duration::from_millis(self.config.timeout_ms);
        match &mut self.transport {
            Transport::Process { stdin, lines, .. } => {
                // A reply that arrived after its deadline belongs to an old context.
                for stale in lines.try_iter() {
                    log::warn!("discarding late provider reply ({} bytes)", stale.len());
                }
                let pipe = stdin
                    .as_mut()
                    .ok_or_else(|| ProviderFault::Transport("stdin closed".into()))?;
                pipe.write_all(body.as_bytes())
                    .and_then(|_| pipe.write_all(b"\n"))
                    .and_then(|_| pipe.flush())
                    .map_err(|e| ProviderFault::Transport(e.to_string()))?;
                match lines.recv_timeout(timeout) {
                    Ok(line) => Ok(line),
                    Err(RecvTimeoutError::Timeout) => Err(ProviderFault::Timeout),
                    Err(RecvTimeoutError::Disconnected) => Err(ProviderFault::Transport("provider exited".into())),
                }
            }
            Transport::Http { agent, url } => {
                let result = agent
                    .post(url.as_str())
                    .header("content-type", "application/json")
                    .send(body)
                    .and_then(|mut r| r.body_mut().read_to_string());
                result.map_err(|e| match e {
                    ureq::Error::Timeout(_) => ProviderFault::Timeout,
                    other => ProviderFault::Transport(other.to_string()),
                })
            }
        }
    }
}

impl Drop for ExternalProvider {
    fn drop(&mut self) {
        if let Transport::Process { child, stdin, .. } = &mut self.transport {
            drop(stdin.take());
            let deadline = std::time::Instant::now() + Duration::from_millis(500);
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => return,
                    Ok(None) if std::time::Instant::now() < deadline => {
                        std::thread::sleep(Duration::from_millis(10))
                    }
                    _ => break,
                }
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Strategy for ExternalProvider {
    fn data_requests(&mut self, now: SimTime) -> Vec<DataQuery> {
        let Some(lookback) = self.config.fundamentals_lookback_ms else {
            return Vec::new();
        };
        ["fundamentals", "events"]
            .iter()
            .map(|kind| DataQuery {
                symbol: self.symbol.clone(),
                kind: kind.to_string(),
                from: now.saturating_sub(lookback),
                to: now,
            })
            .collect()
    }

    fn decide(&mut self, ctx: &DecisionContext) -> Decision {
        let body = match canonical_json(ctx) {
            Ok(b) => b,
            Err(e) => {
                log::error!("cannot encode decision context: {e}");
                return Decision::none();
            }
        };
        let outcome = self
            .exchange(&body)
            .and_then(|reply| parse_actions(&reply).map_err(|e| ProviderFault::Malformed(e.to_string())));
        match outcome {
            Ok(actions) => {
                let notes: Vec<&str> = actions
                    .iter()
                    .map(|a| a.explanation.as_str())
                    .filter(|e| !e.is_empty())
                    .collect();
                let explanation = (!notes.is_empty()).then(|| notes.join(" | "));
                Decision { actions, explanation }
            }
            Err(fault) => {
                log::warn!("agent {} at {}: {}", ctx.agent_id, ctx.sim_time, fault.describe());
                let explanation = Some(fault.describe());
                self.faults.push(fault);
                Decision {
                    actions: Vec::new(),
                    explanation,
                }
            }
        }
    }
}

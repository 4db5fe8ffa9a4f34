use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bus::canonical_json;
use crate::domain::{AgentId, SimTime};

use super::ActionRequest;

/// What an agent decided at one decision point, including doing nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub agent_id: AgentId,
    pub sim_time: SimTime,
    pub actions: Vec<ActionRequest>,
    pub explanation: Option<String>,
}

/// Append-only JSON-lines decision log.
pub struct AuditLog<W: Write> {
    out: W,
    lines: u64,
}

impl AuditLog<BufWriter<File>> {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(AuditLog::new(BufWriter::new(File::create(path)?)))
    }
}

impl<W: Write> AuditLog<W> {
    pub fn new(out: W) -> Self {
        AuditLog { out, lines: 0 }
    }

    pub fn append(&mut self, record: &DecisionRecord) -> std::io::Result<()> {
        let line = canonical_json(record).map_err(std::io::Error::other)?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.lines += 1;
        Ok(())
    }

    pub fn lines(&self) -> u64 {
        self.lines
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn read_audit(text: &str) -> Result<Vec<DecisionRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::ActionKind;

    #[test]
    fn explanation_round_trips_exactly() {
        let text = "Breakout above 128.40 \u{2014} \"momentum\"\n\ttabbed, ünïcödé";
        let rec = DecisionRecord {
            agent_id: AgentId::new("A1"),
            sim_time: SimTime(60_000),
            actions: vec![ActionRequest::market(ActionKind::Buy, 3, "go")],
            explanation: Some(text.to_string()),
        };
        let empty = DecisionRecord {
            agent_id: AgentId::new("A1"),
            sim_time: SimTime(120_000),
            actions: vec![],
            explanation: None,
        };
        let mut log = AuditLog::new(Vec::new());
        log.append(&rec).unwrap();
        log.append(&empty).unwrap();
        assert_eq!(log.lines(), 2);
        let bytes = log.finish().unwrap();
        let back = read_audit(std::str::from_utf8(&bytes).unwrap()).unwrap();
        assert_eq!(back, vec![rec, empty]);
        assert_eq!(back[0].explanation.as_deref(), Some(text));
    }
}

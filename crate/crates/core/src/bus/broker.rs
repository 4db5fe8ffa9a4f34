use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crossbeam_channel::{Receiver, RecvTimeoutError, Sender};

use crate::domain::SimTime;

use super::{BusError, Connection, Envelope, Payload, ENGINE_ID};

/// Topic filter: exact name, `prefix.*`, or `*`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern(String);

impl Pattern {
    pub fn new(pattern: &str) -> Self {
        Pattern(pattern.to_string())
    }

    pub fn matches(&self, topic: &str) -> bool {
        if self.0 == "*" {
            return true;
        }
        match self.0.strip_suffix(".*") {
            Some(prefix) => topic.len() > prefix.len() + 1 && topic.starts_with(prefix) && topic.as_bytes()[prefix.len()] == b'.',
            None => self.0 == topic,
        }
    }
}

/// One delivery as seen by a non-engine subscriber.
#[derive(Debug, Clone)]
pub struct TranscriptEntry {
    /// Engine clock when the message was handed to the subscriber.
    pub engine_clock: SimTime,
    pub recipient: String,
    pub envelope: Arc<Envelope>,
}

struct Subscriber {
    name: String,
    patterns: Vec<Pattern>,
    tx: Sender<Arc<Envelope>>,
}

#[derive(Default)]
struct State {
    subscribers: BTreeMap<u64, Subscriber>,
    next_id: u64,
}

/// In-process topic broker. Fan-out happens under one lock, so every
/// subscriber sees messages from a given sender in publish order.
pub struct Broker {
    state: Mutex<State>,
    clock: AtomicU64,
    delivered: AtomicU64,
    transcript: Option<Mutex<Vec<TranscriptEntry>>>,
}

impl Broker {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::build(false))
    }

    /// A broker that records every delivery to agents.
    pub fn with_transcript() -> Arc<Self> {
        Arc::new(Self::build(true))
    }

    fn build(transcript: bool) -> Self {
        Broker {
            state: Mutex::new(State::default()),
            clock: AtomicU64::new(0),
            delivered: AtomicU64::new(0),
            transcript: transcript.then(|| Mutex::new(Vec::new())),
        }
    }

    /// The engine moves this forward; it is only read for the transcript.
    pub fn set_clock(&self, now: SimTime) {
        self.clock.store(now.0, Ordering::SeqCst);
    }

    pub fn clock(&self) -> SimTime {
        SimTime(self.clock.load(Ordering::SeqCst))
    }

    pub fn delivered(&self) -> u64 {
        self.delivered.load(Ordering::Relaxed)
    }

    pub fn take_transcript(&self) -> Vec<TranscriptEntry> {
        self.transcript
            .as_ref()
            .map(|t| std::mem::take(&mut *t.lock().expect("transcript lock")))
            .unwrap_or_default()
    }

    /// Registers a subscriber and returns its id and inbox.
    pub fn attach(&self, name: &str) -> (u64, Receiver<Arc<Envelope>>) {
        let (tx, rx) = crossbeam_channel::unbounded();
        let mut state = self.state.lock().expect("broker lock");
        let id = state.next_id;
        state.next_id += 1;
        state.subscribers.insert(
            id,
            Subscriber {
                name: name.to_string(),
                patterns: Vec::new(),
                tx,
            },
        );
        (id, rx)
    }

    pub fn detach(&self, id: u64) {
        self.state.lock().expect("broker lock").subscribers.remove(&id);
    }

    pub fn subscribe(&self, id: u64, pattern: &str) -> Result<(), BusError> {
        let mut state = self.state.lock().expect("broker lock");
        let sub = state.subscribers.get_mut(&id).ok_or(BusError::Disconnected)?;
        sub.patterns.push(Pattern::new(pattern));
        Ok(())
    }

    /// Delivers to every current subscriber whose patterns match the topic.
    pub fn publish(&self, envelope: Envelope) -> Result<(), BusError> {
        let envelope = Arc::new(envelope);
        let mut state = self.state.lock().expect("broker lock");
        let clock = self.clock();
        let mut gone = Vec::new();
        for (id, sub) in &state.subscribers {
            if !sub.patterns.iter().any(|p| p.matches(&envelope.topic)) {
                continue;
            }
            if sub.tx.send(Arc::clone(&envelope)).is_err() {
                gone.push(*id);
                continue;
            }
            self.delivered.fetch_add(1, Ordering::Relaxed);
            if let Some(t) = &self.transcript {
                if sub.name != ENGINE_ID {
                    t.lock().expect("transcript lock").push(TranscriptEntry {
                        engine_clock: clock,
                        recipient: sub.name.clone(),
                        envelope: Arc::clone(&envelope),
                    });
                }
            }
        }
        for id in gone {
            state.subscribers.remove(&id);
        }
        Ok(())
    }
}

/// Drops redelivered envelopes: anything at or below the last seq seen from its sender.
#[derive(Debug, Clone, Default)]
pub struct Deduper {
    last: HashMap<String, u64>,
    dropped: u64,
}

impl Deduper {
    pub fn accept(&mut self, envelope: &Envelope) -> bool {
        let last = self.last.entry(envelope.sender.clone()).or_insert(0);
        if envelope.seq <= *last {
            self.dropped += 1;
            return false;
        }
        *last = envelope.seq;
        true
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

/// An endpoint attached directly to a [`Broker`].
pub struct BrokerConnection {
    broker: Arc<Broker>,
    id: u64,
    name: String,
    rx: Receiver<Arc<Envelope>>,
    seq: u64,
    dedupe: Deduper,
    open: bool,
}

impl BrokerConnection {
    pub fn connect(broker: &Arc<Broker>, name: &str) -> Self {
        let (id, rx) = broker.attach(name);
        BrokerConnection {
            broker: Arc::clone(broker),
            id,
            name: name.to_string(),
            rx,
            seq: 0,
            dedupe: Deduper::default(),
            open: true,
        }
    }

    pub fn close(&mut self) {
        if self.open {
            self.broker.detach(self.id);
            self.open = false;
        }
    }

    pub fn duplicates_dropped(&self) -> u64 {
        self.dedupe.dropped()
    }

    /// Publishes an already-sequenced envelope, e.g. a redelivery.
    pub fn publish_raw(&self, envelope: Envelope) -> Result<(), BusError> {
        if !self.open {
            return Err(BusError::Disconnected);
        }
        self.broker.publish(envelope)
    }
}

impl Drop for BrokerConnection {
    fn drop(&mut self) {
        self.close();
    }
}

impl Connection for BrokerConnection {
    fn name(&self) -> &str {
        &self.name
    }

    fn subscribe(&mut self, pattern: &str) -> Result<(), BusError> {
        if !self.open {
            return Err(BusError::Disconnected);
        }
        self.broker.subscribe(self.id, pattern)
    }

    fn publish(&mut self, topic: &str, sim_time: SimTime, payload: Payload) -> Result<u64, BusError> {
        if !self.open {
            return Err(BusError::Disconnected);
        }
        self.seq += 1;
        self.broker.publish(Envelope {
            topic: topic.to_string(),
            sender: self.name.clone(),
            seq: self.seq,
            sim_time,
            payload,
        })?;
        Ok(self.seq)
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Arc<Envelope>>, BusError> {
        let deadline = std::time::Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(std::time::Instant::now());
            match self.rx.recv_timeout(left) {
                Ok(env) => {
                    if self.dedupe.accept(&env) {
                        return Ok(Some(env));
                    }
                }
                Err(RecvTimeoutError::Timeout) => return Ok(None),
                Err(RecvTimeoutError::Disconnected) => return Err(BusError::Disconnected),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::AgentId;

    fn tick(t: u64) -> Payload {
        Payload::TimeTick { sim_time: SimTime(t), market_open: true }
    }

    #[test]
    fn patterns() {
        assert!(Pattern::new("market.*").matches("market.NVDA"));
        assert!(!Pattern::new("market.*").matches("market"));
        assert!(!Pattern::new("market.*").matches("marketplace.X"));
        assert!(Pattern::new("exec.A1").matches("exec.A1"));
        assert!(!Pattern::new("exec.A1").matches("exec.A10"));
        assert!(Pattern::new("*").matches("anything"));
    }

    #[test]
    fn fifo_isolation_and_late_subscribers() {
        let broker = Broker::new();
        let mut engine = BrokerConnection::connect(&broker, ENGINE_ID);
        let mut a1 = BrokerConnection::connect(&broker, "A1");
        let mut a2 = BrokerConnection::connect(&broker, "A2");
        a1.subscribe("exec.A1").unwrap();
        a2.subscribe("exec.A2").unwrap();
        engine.publish("exec.A1", SimTime(0), tick(1)).unwrap();
        engine.publish("exec.A1", SimTime(0), tick(2)).unwrap();
        let got: Vec<u64> = (0..2)
            .map(|_| a1.recv_timeout(Duration::from_millis(50)).unwrap().unwrap().seq)
            .collect();
        assert_eq!(got, vec![1, 2]);
        assert!(a2.recv_timeout(Duration::from_millis(10)).unwrap().is_none());

        let mut late = BrokerConnection::connect(&broker, "A3");
        late.subscribe("exec.A1").unwrap();
        engine.publish("exec.A1", SimTime(0), tick(3)).unwrap();
        assert_eq!(late.recv_timeout(Duration::from_millis(50)).unwrap().unwrap().seq, 3);
        assert!(late.recv_timeout(Duration::from_millis(10)).unwrap().is_none());
    }

    #[test]
    fn duplicates_are_dropped() {
        let broker = Broker::new();
        let agent = BrokerConnection::connect(&broker, "A1");
        let mut engine = BrokerConnection::connect(&broker, ENGINE_ID);
        engine.subscribe("engine").unwrap();
        let env = Envelope {
            topic: "engine".into(),
            sender: "A1".into(),
            seq: 1,
            sim_time: SimTime(0),
            payload: Payload::AgentReady { agent_id: AgentId::new("A1") },
        };
        agent.publish_raw(env.clone()).unwrap();
        agent.publish_raw(env).unwrap();
        assert!(engine.recv_timeout(Duration::from_millis(50)).unwrap().is_some());
        assert!(engine.recv_timeout(Duration::from_millis(10)).unwrap().is_none());
        assert_eq!(engine.duplicates_dropped(), 1);
    }

    #[test]
    fn closed_connection_reports_disconnected() {
        let broker = Broker::new();
        let mut c = BrokerConnection::connect(&broker, "A1");
        c.close();
        assert_eq!(c.publish("x", SimTime(0), tick(0)), Err(BusError::Disconnected));
        assert_eq!(c.subscribe("x"), Err(BusError::Disconnected));
    }

    #[test]
    fn transcript_records_agent_deliveries() {
        let broker = Broker::with_transcript();
        let mut engine = BrokerConnection::connect(&broker, ENGINE_ID);
        let mut a = BrokerConnection::connect(&broker, "A1");
        a.subscribe("control").unwrap();
        broker.set_clock(SimTime(5));
        engine.publish("control", SimTime(5), tick(5)).unwrap();
        let t = broker.take_transcript();
        assert_eq!(t.len(), 1);
        assert_eq!((t[0].engine_clock, t[0].recipient.as_str()), (SimTime(5), "A1"));
    }
}

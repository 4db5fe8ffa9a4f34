use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::domain::{AgentId, OrderId, Price, PricedOrder, Side, SimTime};

use super::{BookUpdate, Ladder, MatchError, MatchingEngine, ReplayWarning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BookEventKind {
    Add,
    Cancel,
    Execute,
}

/// One row of an order-event replay stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookEvent {
    pub event_time: SimTime,
    pub kind: BookEventKind,
    pub order_id: OrderId,
    pub side: Side,
    pub price: Price,
    pub quantity: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentAction {
    Submit {
        order: PricedOrder,
        budget: Option<i128>,
    },
    Cancel {
        order_id: OrderId,
    },
}

/// An agent instruction with its matcher arrival time and per-agent sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentInstruction {
    pub arrival: SimTime,
    pub agent_id: AgentId,
    pub seq: u64,
    pub action: AgentAction,
}

impl AgentInstruction {
    /// Engine processing order: arrival time, then agent id, then agent sequence.
    pub fn priority_cmp(&self, other: &Self) -> Ordering {
        self.arrival
            .cmp(&other.arrival)
            .then_with(|| self.agent_id.cmp(&other.agent_id))
            .then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepSource {
    Event(BookEvent),
    Agent(AgentInstruction),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayStep {
    pub time: SimTime,
    pub source: StepSource,
    pub updates: Vec<BookUpdate>,
    pub canceled: bool,
    pub warning: Option<ReplayWarning>,
    /// Depth after the step, `depth` levels per side.
    pub top: Ladder,
}

/// Replays exogenous events with agent instructions interleaved by time.
///
/// At equal timestamps exogenous events go first; agent instructions follow
/// in `(agent_id, seq)` order. Events must already be time-sorted.
pub fn replay_events(
    engine: &mut MatchingEngine,
    events: &[BookEvent],
    agent_orders: &[AgentInstruction],
    depth: usize,
) -> Result<Vec<ReplayStep>, MatchError> {
    for (index, pair) in events.windows(2).enumerate() {
        if pair[1].event_time < pair[0].event_time {
            return Err(MatchError::UnsortedInput {
                index: index + 1,
                time: pair[1].event_time,
            });
        }
    }
    let mut agents: Vec<&AgentInstruction> = agent_orders.iter().collect();
    agents.sort_by(|a, b| a.priority_cmp(b));

    let mut steps = Vec::with_capacity(events.len() + agents.len());
    let mut ev = events.iter().peekable();
    let mut ag = agents.into_iter().peekable();
    loop {
        let take_event = match (ev.peek(), ag.peek()) {
            (None, None) => break,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (Some(e), Some(a)) => e.event_time <= a.arrival,
        };
        let step = if take_event {
            let event = ev.next().expect("peeked");
            let (updates, warning) = match engine.apply_event(event) {
                Ok(updates) => (updates, None),
                Err(w) => {
                    log::warn!("replay: {w:?} at {}", event.event_time);
                    (Vec::new(), Some(w))
                }
            };
            ReplayStep {
                time: event.event_time,
                source: StepSource::Event(event.clone()),
                updates,
                canceled: false,
                warning,
                top: engine.book_top(depth),
            }
        } else {
            let instruction = ag.next().expect("peeked");
            let (updates, canceled) = match &instruction.action {
                AgentAction::Submit { order, budget } => {
                    (engine.submit(order, instruction.arrival, *budget), false)
                }
                AgentAction::Cancel { order_id } => (Vec::new(), engine.cancel(*order_id).is_some()),
            };
            ReplayStep {
                time: instruction.arrival,
                source: StepSource::Agent(instruction.clone()),
                updates,
                canceled,
                warning: None,
                top: engine.book_top(depth),
            }
        };
        steps.push(step);
    }
    Ok(steps)
}

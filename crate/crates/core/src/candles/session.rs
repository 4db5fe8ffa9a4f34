use serde::{Deserialize, Serialize};

use crate::domain::SimTime;

const DAY_MS: u64 = 86_400_000;

/// When the market accepts executions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SessionCalendar {
    /// 24/7 venue; there is never a session boundary.
    #[default]
    Always,
    /// Every bar is its own session (daily bars of a day-session market).
    PerBar,
    /// One session per UTC day covering `[open_ms, close_ms)` after midnight.
    Daily {
        open_ms: u64,
        close_ms: u64,
        #[serde(default)]
        weekdays_only: bool,
    },
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub u64);

impl SessionCalendar {
    /// Session containing a bar that starts at `bar_start`, if the market is open.
    pub fn session_of(&self, bar_start: SimTime) -> Option<SessionId> {
        match *self {
            SessionCalendar::Always => Some(SessionId(0)),
            SessionCalendar::PerBar => Some(SessionId(bar_start.0)),
            SessionCalendar::Daily {
                open_ms,
                close_ms,
                weekdays_only,
            } => {
                let day = bar_start.0 / DAY_MS;
                let offset = bar_start.0 % DAY_MS;
                // 1970-01-01 was a Thursday; Monday = 0.
                let weekday = (day + 3) % 7;
                if weekdays_only && weekday >= 5 {
                    return None;
                }
                (open_ms..close_ms).contains(&offset).then_some(SessionId(day))
            }
        }
    }

    pub fn has_boundaries(&self) -> bool {
        !matches!(self, SessionCalendar::Always)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event", content = "session")]
pub enum SessionEvent {
    Closed(SessionId),
    Opened(SessionId),
}

/// Tracks the current session as the engine walks bar boundaries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionClock {
    pub calendar: SessionCalendar,
    pub current: Option<SessionId>,
    pub bar_index: u64,
    pub market_open: bool,
}

impl SessionClock {
    pub fn new(calendar: SessionCalendar) -> Self {
        SessionClock {
            calendar,
            current: None,
            bar_index: 0,
            market_open: false,
        }
    }

    /// Moves to the bar starting at `now` and reports any boundary crossed.
    pub fn advance(&mut self, now: SimTime) -> Vec<SessionEvent> {
        let next = self.calendar.session_of(now);
        let mut events = Vec::new();
        if next != self.current {
            if let Some(prev) = self.current {
                events.push(SessionEvent::Closed(prev));
            }
            if let Some(new) = next {
                events.push(SessionEvent::Opened(new));
            }
        }
        self.bar_index += 1;
        self.current = next;
        self.market_open = next.is_some();
        events
    }

    /// End of data. Calendars with boundaries close the running session.
    pub fn finish(&mut self) -> Vec<SessionEvent> {
        let events = match (self.calendar.has_boundaries(), self.current) {
            (true, Some(prev)) => vec![SessionEvent::Closed(prev)],
            _ => Vec::new(),
        };
        if self.calendar.has_boundaries() {
            self.current = None;
            self.market_open = false;
        }
        events
    }
}

//! History events and their JSON Lines form.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::tasks::{Bit, ProcessId, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    R,
    P,
}

/// Payloads exchanged through the message buffer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Input { value: Bit },
    /// `value = None` is the `?` proposal.
    Round { phase: Phase, round: u32, value: Option<Bit> },
    /// Answer `value` obtained from oracle number `oracle`.
    Report { oracle: usize, value: Bit },
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Input { value } => write!(f, "input({value})"),
            Message::Round { phase, round, value } => {
                let v = value.map_or('?', Bit::as_char);
                write!(f, "({phase:?},{v},{round})")
            }
            Message::Report { oracle, value } => write!(f, "({oracle},{value})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Location {
    Buffer,
    /// Decisions are local steps.
    Local,
    Sanctuary(String),
}

impl Location {
    pub fn as_str(&self) -> &str {
        match self {
            Location::Buffer => "buffer",
            Location::Local => "local",
            Location::Sanctuary(s) => s,
        }
    }

    pub fn parse(s: &str) -> Location {
        match s {
            "buffer" => Location::Buffer,
            "local" => Location::Local,
            other => Location::Sanctuary(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EventKind {
    Send { msg: Message, to: Vec<ProcessId> },
    Receive { from: ProcessId, sent_at: Time, msg: Message },
    Query { value: Bit },
    Answer { value: Bit },
    Decide { value: Bit },
}

impl EventKind {
    pub fn code(&self) -> &'static str {
        match self {
            EventKind::Send { .. } => "S",
            EventKind::Receive { .. } => "R",
            EventKind::Query { .. } => "Q",
            EventKind::Answer { .. } => "A",
            EventKind::Decide { .. } => "D",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "RawEvent", try_from = "RawEvent")]
pub struct Event {
    pub time: Time,
    pub pid: ProcessId,
    pub loc: Location,
    pub kind: EventKind,
}

impl Event {
    pub fn sanctuary(&self) -> Option<&str> {
        match &self.loc {
            Location::Sanctuary(s) => Some(s),
            _ => None,
        }
    }

    pub fn decision(&self) -> Option<Bit> {
        match self.kind {
            EventKind::Decide { value } => Some(value),
            _ => None,
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} {} {} ", self.time, self.pid, self.kind.code())?;
        match &self.kind {
            EventKind::Send { msg, to } => write!(f, "{msg} to {}", to.len()),
            EventKind::Receive { from, msg, .. } => write!(f, "{msg} from {from}"),
            EventKind::Query { value } | EventKind::Answer { value } => write!(f, "{value} @{}", self.loc.as_str()),
            EventKind::Decide { value } => write!(f, "{value}"),
        }
    }
}

/// Flat record of one JSONL line.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawEvent {
    t: Time,
    loc: String,
    pid: ProcessId,
    kind: String,
    payload: Value,
}

impl From<Event> for RawEvent {
    fn from(e: Event) -> Self {
        let payload = match &e.kind {
            EventKind::Send { msg, to } => json!({ "msg": msg, "to": to }),
            EventKind::Receive { from, sent_at, msg } => json!({ "from": from, "sent_at": sent_at, "msg": msg }),
            EventKind::Query { value } | EventKind::Answer { value } | EventKind::Decide { value } => json!({ "value": value }),
        };
        RawEvent {
            t: e.time,
            loc: e.loc.as_str().to_string(),
            pid: e.pid,
            kind: e.kind.code().to_string(),
            payload,
        }
    }
}

#[derive(Deserialize)]
struct SendPayload {
    msg: Message,
    to: Vec<ProcessId>,
}

#[derive(Deserialize)]
struct ReceivePayload {
    from: ProcessId,
    sent_at: Time,
    msg: Message,
}

#[derive(Deserialize)]
struct ValuePayload {
    value: Bit,
}

impl TryFrom<RawEvent> for Event {
    type Error = String;

    fn try_from(raw: RawEvent) -> Result<Self, String> {
        let bad = |e: serde_json::Error| format!("event at t={}: {e}", raw.t);
        let value = || serde_json::from_value::<ValuePayload>(raw.payload.clone()).map(|p| p.value).map_err(bad);
        let kind = match raw.kind.as_str() {
            "S" => {
                let p: SendPayload = serde_json::from_value(raw.payload.clone()).map_err(bad)?;
                EventKind::Send { msg: p.msg, to: p.to }
            }
            "R" => {
                let p: ReceivePayload = serde_json::from_value(raw.payload.clone()).map_err(bad)?;
                EventKind::Receive {
                    from: p.from,
                    sent_at: p.sent_at,
                    msg: p.msg,
                }
            }
            "Q" => EventKind::Query { value: value()? },
            "A" => EventKind::Answer { value: value()? },
            "D" => EventKind::Decide { value: value()? },
            other => return Err(format!("unknown event kind {other:?} at t={}", raw.t)),
        };
        Ok(Event {
            time: raw.t,
            pid: raw.pid,
            loc: Location::parse(&raw.loc),
            kind,
        })
    }
}

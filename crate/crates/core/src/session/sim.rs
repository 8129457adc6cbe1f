//! In-process channel simulation with a scripted adversary.
//!
//! Message indices in a script: data messages are numbered `0..N` in send
//! order, `N` is the initiator's authenticator and `N + 1` the responder's.

use std::fmt;
use std::str::FromStr;

use super::{Direction, Outcome, Role, SessionConfig, SessionState};
use crate::error::{Error, Result};
use crate::session::frame::{frame, FrameType};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduledMessage {
    pub direction: Direction,
    pub payload: Vec<u8>,
}

/// `count` messages alternating between the two directions, initiator
/// first.
pub fn synthetic_schedule(count: usize) -> Vec<ScheduledMessage> {
    (0..count)
        .map(|i| ScheduledMessage {
            direction: if i % 2 == 0 {
                Direction::InitiatorToResponder
            } else {
                Direction::ResponderToInitiator
            },
            payload: format!("message {i}").into_bytes(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AdversaryAction {
    PassThrough,
    /// Flip bit `bit` (MSB-first) of the wire frame carrying `message`.
    FlipBit { message: usize, bit: usize },
    Drop { message: usize },
    /// Swap the delivery order of two data messages.
    Reorder { first: usize, second: usize },
    /// Deliver an extra data frame after the scheduled data messages.
    Inject { direction: Direction, payload: Vec<u8> },
}

impl fmt::Display for AdversaryAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryAction::PassThrough => write!(f, "pass"),
            AdversaryAction::FlipBit { message, bit } => write!(f, "flip {message} {bit}"),
            AdversaryAction::Drop { message } => write!(f, "drop {message}"),
            AdversaryAction::Reorder { first, second } => write!(f, "reorder {first} {second}"),
            AdversaryAction::Inject { direction, payload } => {
                let d = match direction {
                    Direction::InitiatorToResponder => "i2r",
                    Direction::ResponderToInitiator => "r2i",
                };
                write!(f, "inject {d} {}", hex::encode(payload))
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChannelScript {
    pub actions: Vec<AdversaryAction>,
}

impl ChannelScript {
    pub fn honest() -> Self {
        Self::default()
    }

    pub fn new(actions: Vec<AdversaryAction>) -> Self {
        ChannelScript { actions }
    }

    /// Checks every index against a run of `data_messages` data messages.
    pub fn validate(&self, data_messages: usize) -> Result<()> {
        let total = data_messages + 2;
        for a in &self.actions {
            match *a {
                AdversaryAction::FlipBit { message, .. } | AdversaryAction::Drop { message }
                    if message >= total =>
                {
                    return Err(Error::ScriptError(format!("'{a}': message {message} out of range")));
                }
                AdversaryAction::Reorder { first, second }
                    if first >= data_messages || second >= data_messages =>
                {
                    return Err(Error::ScriptError(format!("'{a}': reorder applies to data messages only")));
                }
                AdversaryAction::Reorder { first, second } if first == second => {
                    return Err(Error::ScriptError(format!("'{a}': reorder needs two distinct messages")));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

impl FromStr for ChannelScript {
    type Err = Error;

    /// One action per line; blank lines and `#` comments are skipped.
    fn from_str(text: &str) -> Result<Self> {
        let mut actions = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |why: &str| Error::ScriptError(format!("line {}: {why}: '{line}'", n + 1));
            let words: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad("expected a number"));
            let action = match words.as_slice() {
                ["pass"] => AdversaryAction::PassThrough,
                ["flip", m, b] => AdversaryAction::FlipBit { message: num(m)?, bit: num(b)? },
                ["drop", m] => AdversaryAction::Drop { message: num(m)? },
                ["reorder", a, b] => AdversaryAction::Reorder { first: num(a)?, second: num(b)? },
                ["inject", d, payload @ ..] if !payload.is_empty() => {
                    let direction = match *d {
                        "i2r" => Direction::InitiatorToResponder,
                        "r2i" => Direction::ResponderToInitiator,
                        _ => return Err(bad("direction must be i2r or r2i")),
                    };
                    let hex_text: String = payload.concat();
                    let payload = hex::decode(hex_text).map_err(|_| bad("payload is not hex"))?;
                    AdversaryAction::Inject { direction, payload }
                }
                _ => return Err(bad("unrecognized action")),
            };
            actions.push(action);
        }
        Ok(ChannelScript { actions })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub seq: usize,
    pub direction: Direction,
    pub action: &'static str,
    pub prefix: Vec<u8>,
}

const PREFIX_BYTES: usize = 8;

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = if self.prefix.is_empty() { "-".to_string() } else { hex::encode(&self.prefix) };
        write!(f, "{} {} {} {prefix}", self.seq, self.direction.label(), self.action)
    }
}

/// Line-per-event record of a simulated run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    fn record(&mut self, direction: Direction, action: &'static str, wire: &[u8]) {
        self.events.push(Event {
            seq: self.events.len(),
            direction,
            action,
            prefix: wire[..wire.len().min(PREFIX_BYTES)].to_vec(),
        });
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn count(&self, action: &str) -> usize {
        self.events.iter().filter(|e| e.action == action).count()
    }
}

impl fmt::Display for EventLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.events {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct SessionRun {
    pub initiator: Outcome,
    pub responder: Outcome,
    pub log: EventLog,
    pub initiator_state: SessionState,
    pub responder_state: SessionState,
}

impl SessionRun {
    pub fn both_accepted(&self) -> bool {
        self.initiator.is_accepted() && self.responder.is_accepted()
    }
}

struct InFlight {
    index: usize,
    direction: Direction,
    wire: Vec<u8>,
}

fn flip(wire: &mut [u8], bit: usize, log: &mut EventLog, direction: Direction) -> Result<()> {
    if bit >= wire.len() * 8 {
        return Err(Error::ScriptError(format!(
            "bit {bit} is beyond a {}-octet frame",
            wire.len()
        )));
    }
    wire[bit / 8] ^= 0x80 >> (bit % 8);
    log.record(direction, "flip", wire);
    Ok(())
}

/// Runs both parties through `schedule` over a channel controlled by
/// `script`.
///
/// All data messages are sent first, then delivered in (possibly
/// reordered) order, followed by injected frames. The initiator then
/// finalizes; the responder checks that authenticator before sending its
/// own, so a responder that aborts never signs.
pub fn run_scripted(
    initiator: SessionConfig,
    responder: SessionConfig,
    schedule: &[ScheduledMessage],
    script: &ChannelScript,
) -> Result<SessionRun> {
    if initiator.role != Role::Initiator || responder.role != Role::Responder {
        return Err(Error::InvalidParameter("configs must be initiator then responder".into()));
    }
    let n = schedule.len();
    script.validate(n)?;
    let mut ini = SessionState::new(initiator);
    let mut res = SessionState::new(responder);
    let mut log = EventLog::default();

    let mut flight = Vec::with_capacity(n);
    for (index, m) in schedule.iter().enumerate() {
        let sender = match m.direction {
            Direction::InitiatorToResponder => &mut ini,
            Direction::ResponderToInitiator => &mut res,
        };
        let wire = sender.send(&m.payload)?;
        log.record(m.direction, "send", &wire);
        flight.push(InFlight { index, direction: m.direction, wire });
    }

    let dropped = |i: usize| {
        script
            .actions
            .iter()
            .any(|a| matches!(a, AdversaryAction::Drop { message } if *message == i))
    };

    for a in &script.actions {
        match a {
            AdversaryAction::FlipBit { message, bit } if *message < n => {
                let m = &mut flight[*message];
                flip(&mut m.wire, *bit, &mut log, m.direction)?;
            }
            AdversaryAction::Reorder { first, second } => {
                let p = flight.iter().position(|m| m.index == *first).expect("validated");
                let q = flight.iter().position(|m| m.index == *second).expect("validated");
                flight.swap(p, q);
                log.record(flight[q].direction, "reorder", &flight[q].wire);
            }
            _ => {}
        }
    }
    for a in &script.actions {
        if let AdversaryAction::Inject { direction, payload } = a {
            flight.push(InFlight {
                index: usize::MAX,
                direction: *direction,
                wire: frame(FrameType::Data, payload),
            });
        }
    }

    for m in &flight {
        let receiver = match m.direction {
            Direction::InitiatorToResponder => &mut res,
            Direction::ResponderToInitiator => &mut ini,
        };
        if m.index == usize::MAX {
            let _ = receiver.receive(&m.wire);
            log.record(m.direction, "inject", &m.wire);
        } else if dropped(m.index) {
            log.record(m.direction, "drop", &m.wire);
        } else {
            let action = if receiver.receive(&m.wire).is_ok() { "recv" } else { "reject" };
            log.record(m.direction, action, &m.wire);
        }
    }

    let deliver_auth = |sender: &mut SessionState,
                            receiver: &mut SessionState,
                            index: usize,
                            log: &mut EventLog|
     -> Result<()> {
        let direction = sender.role().outgoing();
        let wire = match sender.finalize_send() {
            Ok(auth) => auth.to_frame(),
            Err(_) => {
                log.record(direction, "abort", &[]);
                receiver.finalize_missing();
                return Ok(());
            }
        };
        for a in &script.actions {
            if let AdversaryAction::FlipBit { message, bit } = a {
                if *message == index {
                    let mut w = wire.clone();
                    flip(&mut w, *bit, log, direction)?;
                    return finish_auth(receiver, &w, dropped(index), log, direction);
                }
            }
        }
        finish_auth(receiver, &wire, dropped(index), log, direction)
    };

    deliver_auth(&mut ini, &mut res, n, &mut log)?;
    if matches!(res.phase(), super::Phase::Aborted(_)) {
        log.record(Direction::ResponderToInitiator, "abort", &[]);
        ini.finalize_missing();
    } else {
        deliver_auth(&mut res, &mut ini, n + 1, &mut log)?;
    }

    Ok(SessionRun {
        initiator: ini.outcome(),
        responder: res.outcome(),
        log,
        initiator_state: ini,
        responder_state: res,
    })
}

fn finish_auth(
    receiver: &mut SessionState,
    wire: &[u8],
    drop: bool,
    log: &mut EventLog,
    direction: Direction,
) -> Result<()> {
    if drop {
        log.record(direction, "drop", wire);
        receiver.finalize_missing();
    } else {
        log.record(direction, "auth", wire);
        receiver.finalize_receive_frame(wire);
    }
    Ok(())
}

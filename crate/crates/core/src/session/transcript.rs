use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    InitiatorToResponder,
    ResponderToInitiator,
}

impl Direction {
    pub fn code(self) -> u8 {
        match self {
            Direction::InitiatorToResponder => 0x01,
            Direction::ResponderToInitiator => 0x02,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::InitiatorToResponder => "I>R",
            Direction::ResponderToInitiator => "R>I",
        }
    }

    pub fn reverse(self) -> Direction {
        match self {
            Direction::InitiatorToResponder => Direction::ResponderToInitiator,
            Direction::ResponderToInitiator => Direction::InitiatorToResponder,
        }
    }

    fn index(self) -> usize {
        match self {
            Direction::InitiatorToResponder => 0,
            Direction::ResponderToInitiator => 1,
        }
    }

    const ALL: [Direction; 2] = [Direction::InitiatorToResponder, Direction::ResponderToInitiator];
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub direction: Direction,
    pub seq: u32,
    pub payload: Vec<u8>,
}

/// One party's record of a conversation, kept as two FIFO streams.
///
/// The relative interleaving of the two directions is not recorded: on an
/// asynchronous channel the two parties legitimately see different
/// interleavings, while each direction's order is fixed by its sender.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    streams: [Vec<Vec<u8>>; 2],
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a transcript from entries, checking that each direction's
    /// sequence numbers run 0, 1, 2, ... in order.
    pub fn from_entries(entries: &[Entry]) -> Result<Self> {
        let mut t = Transcript::new();
        for e in entries {
            let expected = t.streams[e.direction.index()].len() as u32;
            if e.seq != expected {
                return Err(Error::InvalidParameter(format!(
                    "{} sequence number {} where {expected} was expected",
                    e.direction.label(),
                    e.seq
                )));
            }
            t.push(e.direction, e.payload.clone());
        }
        Ok(t)
    }

    /// Appends a payload and returns its sequence number.
    pub fn push(&mut self, direction: Direction, payload: Vec<u8>) -> u32 {
        let stream = &mut self.streams[direction.index()];
        stream.push(payload);
        (stream.len() - 1) as u32
    }

    pub fn len(&self) -> usize {
        self.streams.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, direction: Direction) -> usize {
        self.streams[direction.index()].len()
    }

    /// Entries in canonical order: all initiator messages, then all
    /// responder messages, each by sequence number.
    pub fn entries(&self) -> impl Iterator<Item = Entry> + '_ {
        Direction::ALL.into_iter().flat_map(move |d| {
            self.streams[d.index()]
                .iter()
                .enumerate()
                .map(move |(seq, p)| Entry {
                    direction: d,
                    seq: seq as u32,
                    payload: p.clone(),
                })
        })
    }

    /// `direction ‖ seq (4) ‖ length (4) ‖ payload` per entry, canonical
    /// order.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for d in Direction::ALL {
            for (seq, p) in self.streams[d.index()].iter().enumerate() {
                out.push(d.code());
                out.extend_from_slice(&(seq as u32).to_be_bytes());
                out.extend_from_slice(&(p.len() as u32).to_be_bytes());
                out.extend_from_slice(p);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Direction::*;

    #[test]
    fn sequence_numbers_are_per_direction() {
        let mut t = Transcript::new();
        assert_eq!(t.push(InitiatorToResponder, b"a".to_vec()), 0);
        assert_eq!(t.push(ResponderToInitiator, b"b".to_vec()), 0);
        assert_eq!(t.push(InitiatorToResponder, b"c".to_vec()), 1);
        assert_eq!(t.len(), 3);
        let seqs: Vec<_> = t.entries().map(|e| (e.direction, e.seq)).collect();
        assert_eq!(
            seqs,
            vec![(InitiatorToResponder, 0), (InitiatorToResponder, 1), (ResponderToInitiator, 0)]
        );
    }

    #[test]
    fn from_entries_rejects_gaps() {
        let e = |direction, seq| Entry { direction, seq, payload: vec![] };
        assert!(Transcript::from_entries(&[e(InitiatorToResponder, 0), e(ResponderToInitiator, 0)]).is_ok());
        assert!(Transcript::from_entries(&[e(InitiatorToResponder, 1)]).is_err());
        assert!(Transcript::from_entries(&[e(InitiatorToResponder, 0), e(InitiatorToResponder, 0)]).is_err());
    }

    #[test]
    fn interleaving_does_not_change_encoding() {
        let mut a = Transcript::new();
        a.push(InitiatorToResponder, b"x".to_vec());
        a.push(ResponderToInitiator, b"y".to_vec());
        let mut b = Transcript::new();
        b.push(ResponderToInitiator, b"y".to_vec());
        b.push(InitiatorToResponder, b"x".to_vec());
        assert_eq!(a.encode(), b.encode());
    }

    #[test]
    fn length_prefix_separates_payload_boundaries() {
        let mut a = Transcript::new();
        a.push(InitiatorToResponder, b"ab".to_vec());
        a.push(InitiatorToResponder, b"c".to_vec());
        let mut b = Transcript::new();
        b.push(InitiatorToResponder, b"a".to_vec());
        b.push(InitiatorToResponder, b"bc".to_vec());
        assert_ne!(a.encode(), b.encode());
        let mut empty = Transcript::new();
        empty.push(InitiatorToResponder, vec![]);
        assert_ne!(empty.encode(), Transcript::new().encode());
    }
}

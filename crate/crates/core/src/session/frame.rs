//! `QAB1 ‖ type ‖ length (4) ‖ body`

use crate::error::{Error, Result};

pub const FRAME_MAGIC: &[u8; 4] = b"QAB1";
pub const FRAME_HEADER_BYTES: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameType {
    Data,
    Authenticator,
}

impl FrameType {
    pub fn code(self) -> u8 {
        match self {
            FrameType::Data => 0x01,
            FrameType::Authenticator => 0x02,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0x01 => Some(FrameType::Data),
            0x02 => Some(FrameType::Authenticator),
            _ => None,
        }
    }
}

pub fn frame(kind: FrameType, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_HEADER_BYTES + body.len());
    out.extend_from_slice(FRAME_MAGIC);
    out.push(kind.code());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out
}

pub fn deframe(bytes: &[u8]) -> Result<(FrameType, &[u8])> {
    if bytes.len() < FRAME_HEADER_BYTES {
        return Err(Error::FrameError(format!("frame of {} octets is too short", bytes.len())));
    }
    if &bytes[..4] != FRAME_MAGIC {
        return Err(Error::FrameError("bad frame magic".into()));
    }
    let kind = FrameType::from_code(bytes[4])
        .ok_or_else(|| Error::FrameError(format!("unknown frame type {:#04x}", bytes[4])))?;
    let len = u32::from_be_bytes(bytes[5..9].try_into().expect("4 octets")) as usize;
    let body = &bytes[FRAME_HEADER_BYTES..];
    if body.len() != len {
        return Err(Error::FrameError(format!(
            "length field says {len} octets, body has {}",
            body.len()
        )));
    }
    Ok((kind, body))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_payload_frames() {
        let f = frame(FrameType::Data, &[]);
        assert_eq!(f.len(), FRAME_HEADER_BYTES);
        assert_eq!(deframe(&f).unwrap(), (FrameType::Data, &[][..]));
    }

    #[test]
    fn malformed_frames() {
        let f = frame(FrameType::Data, b"abc");
        assert!(deframe(&f[..8]).is_err());
        assert!(deframe(&f[..f.len() - 1]).is_err());
        let mut bad = f.clone();
        bad[4] = 0x07;
        assert!(deframe(&bad).is_err());
        bad = f.clone();
        bad[0] ^= 1;
        assert!(deframe(&bad).is_err());
    }

    proptest! {
        #[test]
        fn deframe_inverts_frame(body in proptest::collection::vec(any::<u8>(), 0..512), auth in any::<bool>()) {
            let kind = if auth { FrameType::Authenticator } else { FrameType::Data };
            let f = frame(kind, &body);
            let (k, b) = deframe(&f).unwrap();
            prop_assert_eq!(k, kind);
            prop_assert_eq!(b, &body[..]);
        }
    }
}

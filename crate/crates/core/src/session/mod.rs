//! Transcript-authenticated sessions.
//!
//! Both parties exchange any number of messages over an unauthenticated
//! channel, recording each in their [`Transcript`]. When done, each party
//! sends exactly one authenticator: a one-time signature over the digest
//! of its transcript, its role label and an optional commitment to its
//! next public key. A party accepts only if the peer's authenticator
//! verifies and describes the same conversation it saw itself.

mod frame;
mod sim;
mod transcript;

use std::fmt;

pub use frame::{deframe, frame, FrameType, FRAME_HEADER_BYTES, FRAME_MAGIC};
pub use sim::{
    run_scripted, synthetic_schedule, AdversaryAction, ChannelScript, Event, EventLog, ScheduledMessage,
    SessionRun,
};
pub use transcript::{Direction, Entry, Transcript};

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::lamport::{LamportPrivateKey, LamportPublicKey, LamportSignature};
use crate::merkle::{merkle_verify, MerkleKeySet, MerkleParams, MerkleRoot, MerkleSignature};
use crate::primitives::{eval_g, eval_t, mac_tag, mac_verify, ct_eq, DigestBits, FamilyKey, FamilyKeys, MAC_TAG_BYTES};

pub const INITIATOR_LABEL: u8 = 0x49;
pub const RESPONDER_LABEL: u8 = 0x52;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

impl Role {
    pub fn label(self) -> u8 {
        match self {
            Role::Initiator => INITIATOR_LABEL,
            Role::Responder => RESPONDER_LABEL,
        }
    }

    pub fn peer(self) -> Role {
        match self {
            Role::Initiator => Role::Responder,
            Role::Responder => Role::Initiator,
        }
    }

    /// Direction of the messages this role sends.
    pub fn outgoing(self) -> Direction {
        match self {
            Role::Initiator => Direction::InitiatorToResponder,
            Role::Responder => Direction::ResponderToInitiator,
        }
    }
}

pub enum SigningKey {
    Lamport(LamportPrivateKey),
    Merkle(MerkleKeySet),
}

impl SigningKey {
    fn digest_bits(&self) -> usize {
        match self {
            SigningKey::Lamport(k) => k.params().digest_bits(),
            SigningKey::Merkle(k) => k.params().ots().digest_bits(),
        }
    }

    fn sign(&mut self, keys: &FamilyKeys, message: &[u8]) -> Result<SignatureBlob> {
        match self {
            SigningKey::Lamport(k) => k.sign(keys, message).map(SignatureBlob::Lamport),
            SigningKey::Merkle(k) => k.sign(message).map(SignatureBlob::Merkle),
        }
    }
}

impl fmt::Debug for SigningKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigningKey::Lamport(k) => f.debug_tuple("Lamport").field(k).finish(),
            SigningKey::Merkle(k) => f.debug_tuple("Merkle").field(k).finish(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum PeerKey {
    Lamport(LamportPublicKey),
    Merkle { root: MerkleRoot, params: MerkleParams },
}

impl PeerKey {
    fn digest_bits(&self) -> usize {
        match self {
            PeerKey::Lamport(k) => k.params().digest_bits(),
            PeerKey::Merkle { params, .. } => params.ots().digest_bits(),
        }
    }

    fn verify(&self, keys: &FamilyKeys, message: &[u8], sig: &SignatureBlob) -> Result<bool> {
        match (self, sig) {
            (PeerKey::Lamport(pk), SignatureBlob::Lamport(s)) => pk.verify(message, s),
            (PeerKey::Merkle { root, params }, SignatureBlob::Merkle(s)) => {
                merkle_verify(root, params, keys, message, s)
            }
            _ => Err(Error::ParamMismatch("signature kind does not match peer key".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SignatureBlob {
    Lamport(LamportSignature),
    Merkle(MerkleSignature),
}

impl SignatureBlob {
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            SignatureBlob::Lamport(s) => s.to_bytes(),
            SignatureBlob::Merkle(s) => s.to_bytes(),
        }
    }

    /// Dispatches on the leading magic.
    pub fn from_bytes(bytes: &[u8], keys: &FamilyKeys) -> Result<Self> {
        match bytes.get(..4) {
            Some(m) if m == crate::lamport::SIGNATURE_MAGIC => {
                LamportSignature::from_bytes(bytes).map(SignatureBlob::Lamport)
            }
            Some(m) if m == crate::merkle::SIGNATURE_MAGIC => {
                MerkleSignature::from_bytes(bytes, keys).map(SignatureBlob::Merkle)
            }
            _ => Err(Error::Malformed("unknown signature magic".into())),
        }
    }
}

/// Commitment to a public key announced for the next session.
pub fn commit_public_key(keys: &FamilyKeys, pk: &LamportPublicKey, bits: usize) -> Result<Vec<u8>> {
    eval_t(keys.t(), &pk.to_bytes(), bits)
}

/// Accepts `candidate` as the peer's next key only if it matches the
/// commitment carried by a previously accepted authenticator.
pub fn accept_committed_key(
    keys: &FamilyKeys,
    commitment: &[u8],
    candidate: LamportPublicKey,
) -> Result<LamportPublicKey> {
    let expected = commit_public_key(keys, &candidate, commitment.len() * 8)?;
    if ct_eq(&expected, commitment) {
        Ok(candidate)
    } else {
        Err(Error::ParamMismatch("public key does not match commitment".into()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Authenticator {
    pub transcript_digest: DigestBits,
    pub role_label: u8,
    pub commitment: Option<Vec<u8>>,
    pub signature: SignatureBlob,
    pub mac_tag: Option<[u8; MAC_TAG_BYTES]>,
}

impl Authenticator {
    /// The octets covered by the signature and the MAC:
    /// `digest ‖ role ‖ flag ‖ [commitment]`.
    pub fn signed_bytes(digest: &DigestBits, role_label: u8, commitment: Option<&[u8]>) -> Vec<u8> {
        let mut out = digest.as_bytes().to_vec();
        out.push(role_label);
        match commitment {
            Some(c) => {
                out.push(1);
                out.extend_from_slice(c);
            }
            None => out.push(0),
        }
        out
    }

    fn covered(&self) -> Vec<u8> {
        Self::signed_bytes(&self.transcript_digest, self.role_label, self.commitment.as_deref())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(&self.covered());
        if let Some(tag) = &self.mac_tag {
            w.bytes(tag);
        }
        w.bytes(&self.signature.to_bytes());
        w.finish()
    }

    /// Parses an authenticator body. Digest and commitment widths and MAC
    /// presence come from the receiver's configuration.
    pub fn decode(body: &[u8], digest_bits: usize, with_mac: bool, keys: &FamilyKeys) -> Result<Self> {
        let mut r = Reader::new(body);
        let transcript_digest = DigestBits::from_bytes(r.take(digest_bits / 8)?.to_vec())?;
        let role_label = r.u8()?;
        let commitment = match r.u8()? {
            0 => None,
            1 => Some(r.take(digest_bits / 8)?.to_vec()),
            v => return Err(Error::Malformed(format!("bad commitment flag {v:#04x}"))),
        };
        let mac_tag = if with_mac {
            Some(r.take(MAC_TAG_BYTES)?.try_into().expect("16 octets"))
        } else {
            None
        };
        let signature = SignatureBlob::from_bytes(r.rest(), keys)?;
        Ok(Authenticator {
            transcript_digest,
            role_label,
            commitment,
            signature,
            mac_tag,
        })
    }

    pub fn to_frame(&self) -> Vec<u8> {
        frame(FrameType::Authenticator, &self.encode())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AbortReason {
    Malformed,
    MacMismatch,
    RoleMismatch,
    BadSignature,
    DigestMismatch,
    MissingAuthenticator,
    KeyAlreadyUsed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Phase {
    Exchanging,
    Finalizing,
    Accepted,
    Aborted(AbortReason),
}

impl Phase {
    fn name(&self) -> &'static str {
        match self {
            Phase::Exchanging => "Exchanging",
            Phase::Finalizing => "Finalizing",
            Phase::Accepted => "Accepted",
            Phase::Aborted(_) => "Aborted",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// Carries the peer's commitment to its next key, if any.
    Accepted(Option<Vec<u8>>),
    Aborted(AbortReason),
}

impl Outcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Outcome::Accepted(_))
    }
}

#[derive(Debug)]
pub struct SessionConfig {
    pub role: Role,
    pub keys: FamilyKeys,
    pub signing_key: SigningKey,
    pub peer_key: PeerKey,
    /// Own public key for the next session, committed to in the
    /// authenticator.
    pub next_public_key: Option<LamportPublicKey>,
    pub mac_key: Option<FamilyKey>,
}

/// One party of a session.
#[derive(Debug)]
pub struct SessionState {
    config: SessionConfig,
    phase: Phase,
    transcript: Transcript,
    own_sent: bool,
    peer_commitment: Option<Option<Vec<u8>>>,
    signatures_issued: usize,
    frame_errors: usize,
}

impl SessionState {
    pub fn new(config: SessionConfig) -> Self {
        SessionState {
            config,
            phase: Phase::Exchanging,
            transcript: Transcript::new(),
            own_sent: false,
            peer_commitment: None,
            signatures_issued: 0,
            frame_errors: 0,
        }
    }

    pub fn role(&self) -> Role {
        self.config.role
    }

    pub fn phase(&self) -> &Phase {
        &self.phase
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn signatures_issued(&self) -> usize {
        self.signatures_issued
    }

    pub fn frame_errors(&self) -> usize {
        self.frame_errors
    }

    pub fn has_sent_authenticator(&self) -> bool {
        self.own_sent
    }

    /// Final result once the session has settled; a session still waiting
    /// for the peer's authenticator counts as aborted.
    pub fn outcome(&self) -> Outcome {
        match (&self.phase, &self.peer_commitment) {
            (Phase::Accepted, Some(c)) => Outcome::Accepted(c.clone()),
            (Phase::Aborted(r), _) => Outcome::Aborted(*r),
            _ => Outcome::Aborted(AbortReason::MissingAuthenticator),
        }
    }

    pub fn into_config(self) -> SessionConfig {
        self.config
    }

    fn require_exchanging(&self) -> Result<()> {
        if self.phase == Phase::Exchanging {
            Ok(())
        } else {
            Err(Error::PhaseViolation(self.phase.name()))
        }
    }

    /// Records `payload` as sent and returns its wire frame.
    pub fn send(&mut self, payload: &[u8]) -> Result<Vec<u8>> {
        self.require_exchanging()?;
        self.transcript.push(self.config.role.outgoing(), payload.to_vec());
        Ok(frame(FrameType::Data, payload))
    }

    /// Deframes a data message from the peer and records it. Malformed
    /// frames are counted and reported but leave the session running; the
    /// mismatch surfaces at finalization.
    pub fn receive(&mut self, wire: &[u8]) -> Result<Vec<u8>> {
        self.require_exchanging()?;
        let body = match deframe(wire) {
            Ok((FrameType::Data, body)) => body,
            Ok((FrameType::Authenticator, _)) => {
                self.frame_errors += 1;
                return Err(Error::FrameError("authenticator frame on data path".into()));
            }
            Err(e) => {
                self.frame_errors += 1;
                return Err(e);
            }
        };
        self.transcript.push(self.config.role.peer().outgoing(), body.to_vec());
        Ok(body.to_vec())
    }

    fn own_digest(&self, bits: usize) -> Result<DigestBits> {
        eval_g(self.config.keys.g(), &self.transcript.encode(), bits)
    }

    fn abort(&mut self, reason: AbortReason) -> Outcome {
        self.phase = Phase::Aborted(reason);
        Outcome::Aborted(reason)
    }

    /// Closes the local view and signs it. Consumes the one-time key.
    pub fn finalize_send(&mut self) -> Result<Authenticator> {
        match self.phase {
            Phase::Exchanging | Phase::Finalizing => {}
            _ => return Err(Error::PhaseViolation(self.phase.name())),
        }
        if self.own_sent {
            self.abort(AbortReason::KeyAlreadyUsed);
            return Err(Error::KeyAlreadyUsed);
        }
        self.phase = Phase::Finalizing;
        let bits = self.config.signing_key.digest_bits();
        let digest = self.own_digest(bits)?;
        let commitment = match &self.config.next_public_key {
            Some(pk) => Some(commit_public_key(&self.config.keys, pk, bits)?),
            None => None,
        };
        let label = self.config.role.label();
        let covered = Authenticator::signed_bytes(&digest, label, commitment.as_deref());
        let signature = match self.config.signing_key.sign(&self.config.keys, &covered) {
            Ok(s) => s,
            Err(e) => {
                let reason = match e {
                    Error::KeyAlreadyUsed | Error::TreeExhausted => AbortReason::KeyAlreadyUsed,
                    _ => AbortReason::Malformed,
                };
                self.abort(reason);
                return Err(e);
            }
        };
        self.own_sent = true;
        self.signatures_issued += 1;
        let mac_tag = match &self.config.mac_key {
            Some(k) => Some(mac_tag(k, &covered)?),
            None => None,
        };
        if self.peer_commitment.is_some() {
            self.phase = Phase::Accepted;
        }
        Ok(Authenticator {
            transcript_digest: digest,
            role_label: label,
            commitment,
            signature,
            mac_tag,
        })
    }

    /// Checks the peer's authenticator against the local view.
    ///
    /// Checks run MAC, role label, signature, transcript digest; the first
    /// failure aborts the session.
    pub fn finalize_receive(&mut self, auth: &Authenticator) -> Outcome {
        match self.phase {
            Phase::Exchanging | Phase::Finalizing if self.peer_commitment.is_none() => {}
            Phase::Aborted(r) => return Outcome::Aborted(r),
            _ => return self.abort(AbortReason::Malformed),
        }
        self.phase = Phase::Finalizing;
        let covered = auth.covered();

        if let Some(key) = &self.config.mac_key {
            let ok = auth
                .mac_tag
                .as_ref()
                .is_some_and(|t| mac_verify(key, &covered, t).unwrap_or(false));
            if !ok {
                return self.abort(AbortReason::MacMismatch);
            }
        }
        if auth.role_label != self.config.role.peer().label() {
            return self.abort(AbortReason::RoleMismatch);
        }
        let peer_bits = self.config.peer_key.digest_bits();
        if auth.transcript_digest.bit_len() != peer_bits
            || auth.commitment.as_ref().is_some_and(|c| c.len() * 8 != peer_bits)
        {
            return self.abort(AbortReason::Malformed);
        }
        match self.config.peer_key.verify(&self.config.keys, &covered, &auth.signature) {
            Ok(true) => {}
            Ok(false) => return self.abort(AbortReason::BadSignature),
            Err(_) => return self.abort(AbortReason::Malformed),
        }
        match self.own_digest(peer_bits) {
            Ok(d) if d == auth.transcript_digest => {}
            _ => return self.abort(AbortReason::DigestMismatch),
        }
        self.peer_commitment = Some(auth.commitment.clone());
        if self.own_sent {
            self.phase = Phase::Accepted;
        }
        Outcome::Accepted(auth.commitment.clone())
    }

    /// Deframes and decodes an authenticator, then checks it.
    pub fn finalize_receive_frame(&mut self, wire: &[u8]) -> Outcome {
        let decoded = deframe(wire).and_then(|(kind, body)| {
            if kind != FrameType::Authenticator {
                return Err(Error::FrameError("expected an authenticator frame".into()));
            }
            Authenticator::decode(
                body,
                self.config.peer_key.digest_bits(),
                self.config.mac_key.is_some(),
                &self.config.keys,
            )
        });
        match decoded {
            Ok(auth) => self.finalize_receive(&auth),
            Err(_) => {
                if matches!(self.phase, Phase::Aborted(_)) {
                    return self.outcome();
                }
                self.abort(AbortReason::Malformed)
            }
        }
    }

    /// Records that the peer's authenticator never arrived.
    pub fn finalize_missing(&mut self) -> Outcome {
        if matches!(self.phase, Phase::Aborted(_)) {
            return self.outcome();
        }
        self.abort(AbortReason::MissingAuthenticator)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lamport::{keygen_from_seed, LamportParams};
    use crate::primitives::{Purpose, Seed};

    fn pair(keys: &FamilyKeys, tag: u8) -> (LamportPrivateKey, LamportPublicKey) {
        let params = LamportParams::new(16, 32).unwrap();
        keygen_from_seed(params, keys, &Seed::new(vec![tag; 16]).unwrap()).unwrap()
    }

    fn states(mac: bool) -> (SessionState, SessionState) {
        let keys = FamilyKeys::from_label(b"session unit");
        let (isk, ipk) = pair(&keys, 1);
        let (rsk, rpk) = pair(&keys, 2);
        let mac_key = mac.then(|| FamilyKey::new(Purpose::Mac, [3; 32]));
        let i = SessionConfig {
            role: Role::Initiator,
            keys: keys.clone(),
            signing_key: SigningKey::Lamport(isk),
            peer_key: PeerKey::Lamport(rpk),
            next_public_key: None,
            mac_key: mac_key.clone(),
        };
        let r = SessionConfig {
            role: Role::Responder,
            keys,
            signing_key: SigningKey::Lamport(rsk),
            peer_key: PeerKey::Lamport(ipk),
            next_public_key: None,
            mac_key,
        };
        (SessionState::new(i), SessionState::new(r))
    }

    #[test]
    fn send_assigns_sequence_numbers() {
        let (mut i, _) = states(false);
        i.send(b"a").unwrap();
        i.send(b"").unwrap();
        let seqs: Vec<u32> = i.transcript().entries().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![0, 1]);
        assert_eq!(i.transcript().len(), 2);
    }

    #[test]
    fn honest_exchange_accepts() {
        let (mut i, mut r) = states(true);
        for k in 0..3u8 {
            let w = i.send(&[k; 10]).unwrap();
            assert_eq!(r.receive(&w).unwrap(), vec![k; 10]);
            let w = r.send(&[k + 100; 5]).unwrap();
            i.receive(&w).unwrap();
        }
        let ai = i.finalize_send().unwrap();
        let ar = r.finalize_send().unwrap();
        assert!(r.finalize_receive_frame(&ai.to_frame()).is_accepted());
        assert!(i.finalize_receive(&ar).is_accepted());
        assert_eq!(i.phase(), &Phase::Accepted);
        assert_eq!(r.phase(), &Phase::Accepted);
        assert_eq!(i.signatures_issued(), 1);
        assert!(matches!(i.send(b"late"), Err(Error::PhaseViolation(_))));
    }

    #[test]
    fn second_finalize_send_fails() {
        let (mut i, _) = states(false);
        i.finalize_send().unwrap();
        assert!(matches!(i.finalize_send(), Err(Error::KeyAlreadyUsed)));
        assert_eq!(i.phase(), &Phase::Aborted(AbortReason::KeyAlreadyUsed));
        assert_eq!(i.signatures_issued(), 1);
    }

    #[test]
    fn reflected_authenticator_is_rejected() {
        let (mut i, _) = states(true);
        let own = i.finalize_send().unwrap();
        assert_eq!(i.finalize_receive(&own), Outcome::Aborted(AbortReason::RoleMismatch));
    }

    #[test]
    fn mac_failure_aborts_before_own_signature() {
        let (mut i, mut r) = states(true);
        let mut ai = i.finalize_send().unwrap();
        ai.mac_tag.as_mut().unwrap()[0] ^= 1;
        assert_eq!(r.finalize_receive(&ai), Outcome::Aborted(AbortReason::MacMismatch));
        assert_eq!(r.signatures_issued(), 0);
        assert!(!r.has_sent_authenticator());
    }

    #[test]
    fn receiving_first_then_sending_accepts() {
        let (mut i, mut r) = states(false);
        let w = i.send(b"hello").unwrap();
        r.receive(&w).unwrap();
        let ai = i.finalize_send().unwrap();
        assert!(r.finalize_receive(&ai).is_accepted());
        assert_eq!(r.phase(), &Phase::Finalizing);
        let ar = r.finalize_send().unwrap();
        assert_eq!(r.phase(), &Phase::Accepted);
        assert!(i.finalize_receive(&ar).is_accepted());
    }

    #[test]
    fn garbage_frames_are_recorded_not_fatal() {
        let (_, mut r) = states(false);
        assert!(matches!(r.receive(b"junk"), Err(Error::FrameError(_))));
        assert_eq!(r.frame_errors(), 1);
        assert_eq!(r.phase(), &Phase::Exchanging);
        assert_eq!(r.finalize_receive_frame(b"QAB1"), Outcome::Aborted(AbortReason::Malformed));
    }
}

//! User ↔ relying-party protocols: authentication and attribute transfer.
//!
//! Both run over one ordered byte stream between the two parties and consult
//! nothing but the RP's local contract replica.
//!
//! 1. Outer tunnel: the user picks a fresh key and sends it encrypted to the
//!    RP's out-of-band known encryption key. Only the real RP can continue.
//! 2. Authentication: the user claims an account; the RP encrypts a 32-byte
//!    challenge to the encryption key registered on that account; the user
//!    returns the plaintext; the RP compares in constant time and sends an inner
//!    key, again encrypted to the account's key.
//! 3. Inner tunnel: every later frame is encrypted under the inner key and then
//!    again under the outer key. The inner layer is bound to the outer session,
//!    so a relaying RP that forwards a victim's challenge still cannot produce or
//!    forward a frame the victim RP will accept.
//! 4. Attribute transfer: the user sends plaintext descriptor, data and nonce
//!    for one of their attributes; the RP recomputes the hash and compares it
//!    with the field on its replica.
//!
//! Every frame after the first carries a per-direction sequence number that is
//! authenticated as associated data.

mod authority;
mod driver;
mod frame;
mod rp;
mod user;

use alloc::string::String;
use alloc::vec::Vec;

use rand_core::CryptoRngCore;

pub use authority::{evaluate_manager_authority, AuthorityDecision};
pub use driver::{
    accept_outer_channel, open_outer_channel, rp_authenticate, rp_verify_attribute, send_attribute, user_authenticate,
    user_close, Clock, FrameTransport, TransportError,
};
pub use frame::{frame_len_from_prefix, Frame, MessageType, HEADER_LEN, MAX_FRAME_LEN};
pub use rp::{AttributeVerification, Challenge, RpSession, CHALLENGE_LEN, CHALLENGE_LIFETIME_MS};
pub use user::UserSession;

use crate::codec::{DecodeError, Decoder, Encoder};
use crate::contract::attribute_hash;
use crate::crypto::{hash_parts, sym_decrypt_with_aad, sym_encrypt_with_aad, Address, DigestValue, SymmetricKey};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("transport: {0}")]
    Transport(TransportError),
    #[error("session closed")]
    SessionClosed,
    #[error("malformed message: {0}")]
    Malformed(&'static str),
    #[error("decryption failed")]
    DecryptionFailed,
    #[error("sequence mismatch: expected {expected}, got {got}")]
    SequenceMismatch { expected: u64, got: u64 },
    #[error("unexpected message {got:?}, expected {expected:?}")]
    UnexpectedMessage { expected: MessageType, got: MessageType },
    #[error("operation not valid in state {0:?}")]
    InvalidState(SessionState),
    #[error("unknown account")]
    UnknownAccount,
    #[error("account is invalid")]
    AccountInvalid,
    #[error("wrong challenge response")]
    WrongChallenge,
    #[error("challenge expired")]
    ChallengeExpired,
    #[error("peer rejected the session: {0}")]
    Rejected(String),
    #[error("peer closed the session")]
    PeerClosed,
}

impl ProtocolError {
    /// Identifier carried in close frames.
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::Transport(_) => "transport",
            ProtocolError::SessionClosed => "session-closed",
            ProtocolError::Malformed(_) => "malformed",
            ProtocolError::DecryptionFailed => "decryption-failed",
            ProtocolError::SequenceMismatch { .. } => "sequence-mismatch",
            ProtocolError::UnexpectedMessage { .. } => "unexpected-message",
            ProtocolError::InvalidState(_) => "invalid-state",
            ProtocolError::UnknownAccount => "unknown-account",
            ProtocolError::AccountInvalid => "account-invalid",
            ProtocolError::WrongChallenge => "wrong-challenge",
            ProtocolError::ChallengeExpired => "challenge-expired",
            ProtocolError::Rejected(_) => "rejected",
            ProtocolError::PeerClosed => "closed",
        }
    }
}

impl From<DecodeError> for ProtocolError {
    fn from(_: DecodeError) -> Self {
        ProtocolError::Malformed("payload encoding")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Connected,
    Challenged,
    Authenticated,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    User,
    Rp,
}

impl Side {
    fn direction(self) -> u8 {
        match self {
            Side::User => 0,
            Side::Rp => 1,
        }
    }

    fn peer(self) -> Side {
        match self {
            Side::User => Side::Rp,
            Side::Rp => Side::User,
        }
    }
}

const OUTER_AAD: &[u8] = b"IDMS-OUTER-v1";
const INNER_AAD: &[u8] = b"IDMS-INNER-v1";
const BINDING_DOMAIN: &[u8] = b"IDMS-SESSION-v1";

/// Layered channel state for one connection.
#[derive(Debug, Clone)]
pub struct SecureSession {
    side: Side,
    outer_key: SymmetricKey,
    inner_key: Option<SymmetricKey>,
    binding: DigestValue,
    peer_account: Option<Address>,
    state: SessionState,
    send_seq: u64,
    recv_seq: u64,
}

impl SecureSession {
    pub(crate) fn new(side: Side, outer_key: SymmetricKey) -> Self {
        let binding = hash_parts(&[BINDING_DOMAIN, outer_key.as_bytes()]);
        SecureSession {
            side,
            outer_key,
            inner_key: None,
            binding,
            peer_account: None,
            state: SessionState::Connected,
            // Sequence 0 in the user → RP direction is the key-transport frame.
            send_seq: if side == Side::User { 1 } else { 0 },
            recv_seq: if side == Side::Rp { 1 } else { 0 },
        }
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn peer_account(&self) -> Option<Address> {
        self.peer_account
    }

    pub fn outer_key(&self) -> &SymmetricKey {
        &self.outer_key
    }

    pub fn inner_key(&self) -> Option<&SymmetricKey> {
        self.inner_key.as_ref()
    }

    pub fn is_open(&self) -> bool {
        self.state != SessionState::Closed
    }

    pub(crate) fn close(&mut self) {
        self.state = SessionState::Closed;
    }

    fn aad(prefix: &[u8], binding: Option<&DigestValue>, side: Side, msg_type: MessageType, seq: u64) -> Vec<u8> {
        let mut aad = Vec::with_capacity(prefix.len() + 32 + 10);
        aad.extend_from_slice(prefix);
        if let Some(b) = binding {
            aad.extend_from_slice(&b.0);
        }
        aad.push(side.direction());
        aad.extend_from_slice(&Frame::header_aad(msg_type, seq));
        aad
    }

    pub(crate) fn seal(
        &mut self,
        msg_type: MessageType,
        payload: &[u8],
        rng: &mut impl CryptoRngCore,
    ) -> Result<Vec<u8>, ProtocolError> {
        if self.state == SessionState::Closed {
            return Err(ProtocolError::SessionClosed);
        }
        let seq = self.send_seq;
        let inner_body;
        let plaintext = match &self.inner_key {
            Some(inner) => {
                let aad = Self::aad(INNER_AAD, Some(&self.binding), self.side, msg_type, seq);
                inner_body = sym_encrypt_with_aad(inner, payload, &aad, rng);
                &inner_body[..]
            }
            None => payload,
        };
        let aad = Self::aad(OUTER_AAD, None, self.side, msg_type, seq);
        let body = sym_encrypt_with_aad(&self.outer_key, plaintext, &aad, rng);
        self.send_seq += 1;
        Ok(Frame { msg_type, sequence: seq, body }.encode())
    }

    /// Opens the next frame. Any failure closes the session.
    pub(crate) fn open(&mut self, bytes: &[u8]) -> Result<(MessageType, Vec<u8>), ProtocolError> {
        if self.state == SessionState::Closed {
            return Err(ProtocolError::SessionClosed);
        }
        let result = self.open_inner(bytes);
        if result.is_err() {
            self.close();
        }
        result
    }

    fn open_inner(&mut self, bytes: &[u8]) -> Result<(MessageType, Vec<u8>), ProtocolError> {
        let frame = Frame::decode(bytes)?;
        if frame.sequence != self.recv_seq {
            return Err(ProtocolError::SequenceMismatch { expected: self.recv_seq, got: frame.sequence });
        }
        let peer = self.side.peer();
        let aad = Self::aad(OUTER_AAD, None, peer, frame.msg_type, frame.sequence);
        let mut payload =
            sym_decrypt_with_aad(&self.outer_key, &frame.body, &aad).map_err(|_| ProtocolError::DecryptionFailed)?;
        if let Some(inner) = &self.inner_key {
            let aad = Self::aad(INNER_AAD, Some(&self.binding), peer, frame.msg_type, frame.sequence);
            payload = sym_decrypt_with_aad(inner, &payload, &aad).map_err(|_| ProtocolError::DecryptionFailed)?;
        }
        self.recv_seq += 1;
        Ok((frame.msg_type, payload))
    }

    /// Opens a frame that must be of type `expected`. A close frame from the
    /// peer is turned into [`ProtocolError::Rejected`] / [`ProtocolError::PeerClosed`].
    pub(crate) fn expect(&mut self, bytes: &[u8], expected: MessageType) -> Result<Vec<u8>, ProtocolError> {
        let (msg_type, payload) = self.open(bytes)?;
        if msg_type == expected {
            return Ok(payload);
        }
        self.close();
        if msg_type == MessageType::Close {
            return Err(close_reason(&payload));
        }
        Err(ProtocolError::UnexpectedMessage { expected, got: msg_type })
    }

    pub(crate) fn close_frame(&mut self, code: &str, rng: &mut impl CryptoRngCore) -> Option<Vec<u8>> {
        let mut e = Encoder::new();
        e.text(code);
        let frame = self.seal(MessageType::Close, &e.finish(), rng).ok();
        self.close();
        frame
    }
}

pub(crate) fn close_reason(payload: &[u8]) -> ProtocolError {
    match Decoder::new(payload).text() {
        Ok(code) if code == "closed" => ProtocolError::PeerClosed,
        Ok(code) => ProtocolError::Rejected(code),
        Err(_) => ProtocolError::Malformed("close payload"),
    }
}

/// Plaintexts a user presents for one attribute on their account.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributePackage {
    pub account: Address,
    pub index: u64,
    pub descriptor_plain: Vec<u8>,
    pub data_plain: Vec<u8>,
    pub nonce: Vec<u8>,
}

impl AttributePackage {
    pub fn hash(&self) -> DigestValue {
        attribute_hash(&self.data_plain, &self.nonce, &self.descriptor_plain)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.raw(&self.account.0).u64(self.index).bytes(&self.descriptor_plain).bytes(&self.data_plain).bytes(&self.nonce);
        e.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes);
        let pkg = AttributePackage {
            account: d.address()?,
            index: d.u64()?,
            descriptor_plain: d.bytes()?.to_vec(),
            data_plain: d.bytes()?.to_vec(),
            nonce: d.bytes()?.to_vec(),
        };
        d.finish()?;
        Ok(pkg)
    }
}

/// Why an attribute package was not accepted. These do not end the session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum VerifyError {
    #[error("hash mismatch")]
    HashMismatch,
    #[error("unknown attribute index")]
    UnknownIndex,
    #[error("attribute has been deleted")]
    DeletedAttribute,
    #[error("package account differs from the authenticated account")]
    AccountMismatch,
    #[error("account not present on the replica")]
    UnknownAccount,
}

impl VerifyError {
    fn code(self) -> u8 {
        match self {
            VerifyError::HashMismatch => 1,
            VerifyError::UnknownIndex => 2,
            VerifyError::DeletedAttribute => 3,
            VerifyError::AccountMismatch => 4,
            VerifyError::UnknownAccount => 5,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => VerifyError::HashMismatch,
            2 => VerifyError::UnknownIndex,
            3 => VerifyError::DeletedAttribute,
            4 => VerifyError::AccountMismatch,
            5 => VerifyError::UnknownAccount,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            VerifyError::HashMismatch => "hash-mismatch",
            VerifyError::UnknownIndex => "unknown-index",
            VerifyError::DeletedAttribute => "deleted-attribute",
            VerifyError::AccountMismatch => "account-mismatch",
            VerifyError::UnknownAccount => "unknown-account",
        }
    }
}

/// What the RP reports back for one package.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationResult {
    pub index: u64,
    pub outcome: Result<(), VerifyError>,
}

impl VerificationResult {
    fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.u64(self.index).u8(match self.outcome {
            Ok(()) => 0,
            Err(v) => v.code(),
        });
        e.finish()
    }

    fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        let mut d = Decoder::new(bytes);
        let index = d.u64()?;
        let code = d.u8()?;
        d.finish()?;
        let outcome = match code {
            0 => Ok(()),
            c => Err(VerifyError::from_code(c).ok_or(ProtocolError::Malformed("verification status"))?),
        };
        Ok(VerificationResult { index, outcome })
    }
}

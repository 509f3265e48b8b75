use alloc::vec::Vec;

use rand_core::CryptoRngCore;
use subtle::ConstantTimeEq;

use super::{
    AttributePackage, Frame, MessageType, ProtocolError, SecureSession, SessionState, Side, VerificationResult,
    VerifyError,
};
use crate::contract::{AttributeField, ContractError, ContractState};
use crate::crypto::{asym_encrypt, Address, EncryptionKey, KeyPair, SymmetricKey, ADDRESS_LEN};

pub const CHALLENGE_LEN: usize = 32;
pub const CHALLENGE_LIFETIME_MS: u64 = 60_000;

/// A single-use random challenge.
#[derive(Clone)]
pub struct Challenge {
    value: [u8; CHALLENGE_LEN],
    pub issued_at: u64,
}

impl core::fmt::Debug for Challenge {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Challenge").field("issued_at", &self.issued_at).finish_non_exhaustive()
    }
}

impl Challenge {
    pub fn generate(rng: &mut impl CryptoRngCore, now_ms: u64) -> Self {
        let mut value = [0u8; CHALLENGE_LEN];
        rng.fill_bytes(&mut value);
        Challenge { value, issued_at: now_ms }
    }

    pub fn value(&self) -> &[u8; CHALLENGE_LEN] {
        &self.value
    }

    pub fn is_expired(&self, now_ms: u64) -> bool {
        now_ms.saturating_sub(self.issued_at) > CHALLENGE_LIFETIME_MS
    }

    /// Constant-time comparison; consumes the challenge.
    pub fn check(self, response: &[u8], now_ms: u64) -> Result<(), ProtocolError> {
        if self.is_expired(now_ms) {
            return Err(ProtocolError::ChallengeExpired);
        }
        if response.len() != CHALLENGE_LEN || !bool::from(self.value.ct_eq(response)) {
            return Err(ProtocolError::WrongChallenge);
        }
        Ok(())
    }
}

/// Outcome of one attribute package on the RP side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeVerification {
    pub package: AttributePackage,
    pub outcome: Result<AttributeField, VerifyError>,
}

/// Relying-party side of a session.
#[derive(Debug, Clone)]
pub struct RpSession {
    session: SecureSession,
    challenge: Option<Challenge>,
    claimed: Option<(Address, EncryptionKey)>,
}

impl RpSession {
    /// Unwraps the outer key from the user's first frame.
    pub fn accept(frame: &[u8], rp_keys: &KeyPair) -> Result<Self, ProtocolError> {
        let frame = Frame::decode(frame)?;
        if frame.msg_type != MessageType::OuterKeyTransport {
            return Err(ProtocolError::UnexpectedMessage {
                expected: MessageType::OuterKeyTransport,
                got: frame.msg_type,
            });
        }
        if frame.sequence != 0 {
            return Err(ProtocolError::SequenceMismatch { expected: 0, got: frame.sequence });
        }
        let raw = rp_keys.decrypt(&frame.body).map_err(|_| ProtocolError::DecryptionFailed)?;
        let outer_key = SymmetricKey::from_slice(&raw).map_err(|_| ProtocolError::Malformed("outer key length"))?;
        Ok(RpSession { session: SecureSession::new(Side::Rp, outer_key), challenge: None, claimed: None })
    }

    pub fn session(&self) -> &SecureSession {
        &self.session
    }

    pub fn state(&self) -> SessionState {
        self.session.state
    }

    pub fn peer_account(&self) -> Option<Address> {
        self.session.peer_account
    }

    fn require(&self, state: SessionState) -> Result<(), ProtocolError> {
        if self.session.state != state {
            return Err(ProtocolError::InvalidState(self.session.state));
        }
        Ok(())
    }

    /// Looks the claimed account up on the local replica and answers with a
    /// challenge encrypted to the account's registered encryption key.
    pub fn handle_claim(
        &mut self,
        frame: &[u8],
        replica: &ContractState,
        rng: &mut impl CryptoRngCore,
        now_ms: u64,
    ) -> Result<Vec<u8>, ProtocolError> {
        self.require(SessionState::Connected)?;
        let payload = self.session.expect(frame, MessageType::AccountClaim)?;
        let account = Address(
            <[u8; ADDRESS_LEN]>::try_from(&payload[..])
                .map_err(|_| self.fail(ProtocolError::Malformed("account claim")))?,
        );
        let (keys, valid) = replica.view_public_key(&account).map_err(|e| {
            debug_assert_eq!(e, ContractError::UnknownUser);
            self.fail(ProtocolError::UnknownAccount)
        })?;
        if !valid {
            return Err(self.fail(ProtocolError::AccountInvalid));
        }
        let challenge = Challenge::generate(rng, now_ms);
        let body = asym_encrypt(&keys.encryption, challenge.value(), rng);
        self.challenge = Some(challenge);
        self.claimed = Some((account, keys.encryption));
        self.session.state = SessionState::Challenged;
        self.session.seal(MessageType::EncryptedChallenge, &body, rng)
    }

    /// Checks the response and, on success, sends the inner key and switches
    /// to the nested tunnel. The challenge is discarded either way.
    pub fn handle_response(
        &mut self,
        frame: &[u8],
        rng: &mut impl CryptoRngCore,
        now_ms: u64,
    ) -> Result<Vec<u8>, ProtocolError> {
        self.require(SessionState::Challenged)?;
        let challenge = self.challenge.take().ok_or(ProtocolError::InvalidState(self.session.state))?;
        let response = self.session.expect(frame, MessageType::ChallengeResponse)?;
        challenge.check(&response, now_ms).map_err(|e| self.fail(e))?;
        let (account, encryption_key) = self.claimed.expect("set with the challenge");
        let inner = SymmetricKey::generate(rng);
        let body = asym_encrypt(&encryption_key, inner.as_bytes(), rng);
        let frame = self.session.seal(MessageType::InnerKeyTransport, &body, rng)?;
        self.session.inner_key = Some(inner);
        self.session.peer_account = Some(account);
        self.session.state = SessionState::Authenticated;
        Ok(frame)
    }

    /// Receives the next inner-tunnel frame. `Ok(None)` means the user closed
    /// the session cleanly.
    pub fn receive_package(&mut self, frame: &[u8]) -> Result<Option<AttributePackage>, ProtocolError> {
        self.require(SessionState::Authenticated)?;
        let (msg_type, payload) = self.session.open(frame)?;
        match msg_type {
            MessageType::AttributePackage => AttributePackage::decode(&payload)
                .map(Some)
                .map_err(|_| self.fail(ProtocolError::Malformed("attribute package"))),
            MessageType::Close => {
                self.session.close();
                match super::close_reason(&payload) {
                    ProtocolError::PeerClosed => Ok(None),
                    e => Err(e),
                }
            }
            got => Err(self.fail(ProtocolError::UnexpectedMessage { expected: MessageType::AttributePackage, got })),
        }
    }

    /// Recomputes the package hash and compares it with the field on the
    /// replica. Pure function of `(replica, package, authenticated account)`.
    pub fn verify_package(
        &self,
        pkg: &AttributePackage,
        replica: &ContractState,
    ) -> Result<AttributeField, VerifyError> {
        if Some(pkg.account) != self.session.peer_account {
            return Err(VerifyError::AccountMismatch);
        }
        verify_against_replica(pkg, replica)
    }

    pub fn result_frame(
        &mut self,
        index: u64,
        outcome: Result<(), VerifyError>,
        rng: &mut impl CryptoRngCore,
    ) -> Result<Vec<u8>, ProtocolError> {
        self.require(SessionState::Authenticated)?;
        self.session.seal(MessageType::VerificationResult, &VerificationResult { index, outcome }.encode(), rng)
    }

    /// Close frame carrying the error code, if a channel exists to carry it.
    pub fn error_frame(&mut self, error: &ProtocolError, rng: &mut impl CryptoRngCore) -> Option<Vec<u8>> {
        // A failed `open` has already closed the session locally; reopen just
        // long enough to tell the peer why.
        if self.session.state == SessionState::Closed {
            self.session.state = SessionState::Connected;
        }
        self.session.close_frame(error.code(), rng)
    }

    fn fail(&mut self, e: ProtocolError) -> ProtocolError {
        self.session.close();
        e
    }
}

pub(crate) fn verify_against_replica(
    pkg: &AttributePackage,
    replica: &ContractState,
) -> Result<AttributeField, VerifyError> {
    let field = replica.view_attribute(&pkg.account, pkg.index).map_err(|e| match e {
        ContractError::UnknownUser => VerifyError::UnknownAccount,
        ContractError::DeletedAttribute(_) => VerifyError::DeletedAttribute,
        _ => VerifyError::UnknownIndex,
    })?;
    if field.hash != pkg.hash() {
        return Err(VerifyError::HashMismatch);
    }
    Ok(field.clone())
}

use alloc::vec::Vec;

use rand_core::CryptoRngCore;

use super::{
    AttributePackage, Frame, MessageType, ProtocolError, SecureSession, SessionState, Side, VerificationResult,
};
use crate::crypto::{asym_encrypt, Address, EncryptionKey, KeyPair, SymmetricKey, SYMMETRIC_KEY_LEN};
use crate::protocol::rp::CHALLENGE_LEN;

/// Client side of a session.
#[derive(Debug, Clone)]
pub struct UserSession {
    pub(crate) session: SecureSession,
    claimed: Option<Address>,
}

impl UserSession {
    /// Picks the outer key and returns the key-transport frame for the RP.
    pub fn open(rp_encryption_key: &EncryptionKey, rng: &mut impl CryptoRngCore) -> (Self, Vec<u8>) {
        let outer_key = SymmetricKey::generate(rng);
        let body = asym_encrypt(rp_encryption_key, outer_key.as_bytes(), rng);
        let frame = Frame { msg_type: MessageType::OuterKeyTransport, sequence: 0, body }.encode();
        (UserSession { session: SecureSession::new(Side::User, outer_key), claimed: None }, frame)
    }

    pub fn session(&self) -> &SecureSession {
        &self.session
    }

    pub fn state(&self) -> SessionState {
        self.session.state
    }

    fn require(&self, state: SessionState) -> Result<(), ProtocolError> {
        if self.session.state != state {
            return Err(ProtocolError::InvalidState(self.session.state));
        }
        Ok(())
    }

    pub fn claim(&mut self, account: Address, rng: &mut impl CryptoRngCore) -> Result<Vec<u8>, ProtocolError> {
        self.require(SessionState::Connected)?;
        if self.claimed.is_some() {
            return Err(ProtocolError::InvalidState(self.session.state));
        }
        let frame = self.session.seal(MessageType::AccountClaim, &account.0, rng)?;
        self.claimed = Some(account);
        Ok(frame)
    }

    /// Decrypts the RP's challenge with the account's private key and returns
    /// the response frame.
    pub fn answer_challenge(
        &mut self,
        frame: &[u8],
        keys: &KeyPair,
        rng: &mut impl CryptoRngCore,
    ) -> Result<Vec<u8>, ProtocolError> {
        self.require(SessionState::Connected)?;
        if self.claimed.is_none() {
            return Err(ProtocolError::InvalidState(self.session.state));
        }
        let payload = self.session.expect(frame, MessageType::EncryptedChallenge)?;
        let challenge = keys.decrypt(&payload).map_err(|_| {
            self.session.close();
            ProtocolError::DecryptionFailed
        })?;
        if challenge.len() != CHALLENGE_LEN {
            self.session.close();
            return Err(ProtocolError::Malformed("challenge length"));
        }
        self.session.state = SessionState::Challenged;
        self.session.seal(MessageType::ChallengeResponse, &challenge, rng)
    }

    /// Unwraps the inner key and switches to the nested tunnel.
    pub fn accept_inner_key(&mut self, frame: &[u8], keys: &KeyPair) -> Result<(), ProtocolError> {
        self.require(SessionState::Challenged)?;
        let payload = self.session.expect(frame, MessageType::InnerKeyTransport)?;
        let raw = keys.decrypt(&payload).map_err(|_| {
            self.session.close();
            ProtocolError::DecryptionFailed
        })?;
        if raw.len() != SYMMETRIC_KEY_LEN {
            self.session.close();
            return Err(ProtocolError::Malformed("inner key length"));
        }
        self.session.inner_key = Some(SymmetricKey::from_slice(&raw).expect("length checked"));
        self.session.peer_account = self.claimed;
        self.session.state = SessionState::Authenticated;
        Ok(())
    }

    pub fn send_attribute(
        &mut self,
        pkg: &AttributePackage,
        rng: &mut impl CryptoRngCore,
    ) -> Result<Vec<u8>, ProtocolError> {
        self.require(SessionState::Authenticated)?;
        self.session.seal(MessageType::AttributePackage, &pkg.encode(), rng)
    }

    pub fn read_result(&mut self, frame: &[u8]) -> Result<VerificationResult, ProtocolError> {
        self.require(SessionState::Authenticated)?;
        let payload = self.session.expect(frame, MessageType::VerificationResult)?;
        VerificationResult::decode(&payload)
    }

    /// Polite shutdown frame.
    pub fn close(&mut self, rng: &mut impl CryptoRngCore) -> Option<Vec<u8>> {
        self.session.close_frame("closed", rng)
    }
}

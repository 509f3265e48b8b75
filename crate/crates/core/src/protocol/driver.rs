//! Blocking flows over any [`FrameTransport`].

use alloc::string::String;
use alloc::vec::Vec;

use rand_core::CryptoRngCore;

use super::{AttributePackage, AttributeVerification, ProtocolError, RpSession, UserSession, VerificationResult};
use crate::contract::ContractState;
use crate::crypto::{Address, EncryptionKey, KeyPair};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("connection closed")]
    Closed,
    #[error("{0}")]
    Io(String),
}

impl From<TransportError> for ProtocolError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Closed => ProtocolError::SessionClosed,
            e => ProtocolError::Transport(e),
        }
    }
}

/// An ordered, reliable stream of whole frames.
pub trait FrameTransport {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), TransportError>;
    fn recv_frame(&mut self) -> Result<Vec<u8>, TransportError>;
}

impl<T: FrameTransport + ?Sized> FrameTransport for &mut T {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        (**self).send_frame(frame)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>, TransportError> {
        (**self).recv_frame()
    }
}

/// Milliseconds from an arbitrary epoch; only differences matter.
pub trait Clock {
    fn now_millis(&self) -> u64;
}

impl<F: Fn() -> u64> Clock for F {
    fn now_millis(&self) -> u64 {
        self()
    }
}

pub fn open_outer_channel(
    transport: &mut impl FrameTransport,
    rp_encryption_key: &EncryptionKey,
    rng: &mut impl CryptoRngCore,
) -> Result<UserSession, ProtocolError> {
    let (session, frame) = UserSession::open(rp_encryption_key, rng);
    transport.send_frame(&frame)?;
    Ok(session)
}

pub fn accept_outer_channel(
    transport: &mut impl FrameTransport,
    rp_keys: &KeyPair,
) -> Result<RpSession, ProtocolError> {
    let frame = transport.recv_frame()?;
    RpSession::accept(&frame, rp_keys)
}

pub fn user_authenticate(
    session: &mut UserSession,
    transport: &mut impl FrameTransport,
    account: Address,
    keys: &KeyPair,
    rng: &mut impl CryptoRngCore,
) -> Result<(), ProtocolError> {
    let claim = session.claim(account, rng)?;
    transport.send_frame(&claim)?;
    let challenge = transport.recv_frame()?;
    let response = session.answer_challenge(&challenge, keys, rng)?;
    transport.send_frame(&response)?;
    let inner = transport.recv_frame()?;
    session.accept_inner_key(&inner, keys)
}

/// Runs the RP half of authentication. On failure the user is told why with a
/// close frame before the error is returned.
pub fn rp_authenticate(
    session: &mut RpSession,
    transport: &mut impl FrameTransport,
    replica: &ContractState,
    rng: &mut impl CryptoRngCore,
    clock: &impl Clock,
) -> Result<Address, ProtocolError> {
    let result = (|| {
        let claim = transport.recv_frame()?;
        let challenge = session.handle_claim(&claim, replica, rng, clock.now_millis())?;
        transport.send_frame(&challenge)?;
        let response = transport.recv_frame()?;
        let inner = session.handle_response(&response, rng, clock.now_millis())?;
        transport.send_frame(&inner)?;
        Ok(session.peer_account().expect("authenticated"))
    })();
    if let Err(e) = &result {
        notify_failure(session, transport, e, rng);
    }
    result
}

fn notify_failure(
    session: &mut RpSession,
    transport: &mut impl FrameTransport,
    error: &ProtocolError,
    rng: &mut impl CryptoRngCore,
) {
    if matches!(error, ProtocolError::Transport(_) | ProtocolError::SessionClosed | ProtocolError::PeerClosed) {
        return;
    }
    if let Some(frame) = session.error_frame(error, rng) {
        let _ = transport.send_frame(&frame);
    }
}

/// Sends one package and waits for the RP's verdict.
pub fn send_attribute(
    session: &mut UserSession,
    transport: &mut impl FrameTransport,
    pkg: &AttributePackage,
    rng: &mut impl CryptoRngCore,
) -> Result<VerificationResult, ProtocolError> {
    let frame = session.send_attribute(pkg, rng)?;
    transport.send_frame(&frame)?;
    let reply = transport.recv_frame()?;
    session.read_result(&reply)
}

pub fn user_close(
    session: &mut UserSession,
    transport: &mut impl FrameTransport,
    rng: &mut impl CryptoRngCore,
) -> Result<(), ProtocolError> {
    if let Some(frame) = session.close(rng) {
        transport.send_frame(&frame)?;
    }
    Ok(())
}

/// Receives and verifies the next package, replying with the verdict.
/// Returns `Ok(None)` once the user closes the session.
pub fn rp_verify_attribute(
    session: &mut RpSession,
    transport: &mut impl FrameTransport,
    replica: &ContractState,
    rng: &mut impl CryptoRngCore,
) -> Result<Option<AttributeVerification>, ProtocolError> {
    let frame = transport.recv_frame()?;
    let package = match session.receive_package(&frame) {
        Ok(Some(p)) => p,
        Ok(None) => return Ok(None),
        Err(e) => {
            notify_failure(session, transport, &e, rng);
            return Err(e);
        }
    };
    let outcome = session.verify_package(&package, replica);
    let reply = session.result_frame(package.index, outcome.as_ref().map(|_| ()).map_err(|e| *e), rng)?;
    transport.send_frame(&reply)?;
    Ok(Some(AttributeVerification { package, outcome }))
}

//! Wire framing shared by both tunnels.
//!
//! ```text
//! +----------------+---------+-----------------+------------------+
//! | length: u32 BE | type:u8 | sequence: u64 BE| body (ciphertext)|
//! +----------------+---------+-----------------+------------------+
//! ```
//! `length` counts every byte after itself (`9 + body.len()`).

use alloc::vec::Vec;

use super::ProtocolError;

pub const HEADER_LEN: usize = 4 + 1 + 8;
pub const MAX_FRAME_LEN: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    OuterKeyTransport = 0x01,
    AccountClaim = 0x02,
    EncryptedChallenge = 0x03,
    ChallengeResponse = 0x04,
    InnerKeyTransport = 0x05,
    AttributePackage = 0x06,
    VerificationResult = 0x07,
    Close = 0x08,
}

impl MessageType {
    pub fn from_code(code: u8) -> Result<Self, ProtocolError> {
        Ok(match code {
            0x01 => MessageType::OuterKeyTransport,
            0x02 => MessageType::AccountClaim,
            0x03 => MessageType::EncryptedChallenge,
            0x04 => MessageType::ChallengeResponse,
            0x05 => MessageType::InnerKeyTransport,
            0x06 => MessageType::AttributePackage,
            0x07 => MessageType::VerificationResult,
            0x08 => MessageType::Close,
            _ => return Err(ProtocolError::Malformed("unknown message type")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MessageType,
    pub sequence: u64,
    pub body: Vec<u8>,
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.body.len());
        out.extend_from_slice(&((9 + self.body.len()) as u32).to_be_bytes());
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.sequence.to_be_bytes());
        out.extend_from_slice(&self.body);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProtocolError> {
        if bytes.len() < HEADER_LEN {
            return Err(ProtocolError::Malformed("short frame"));
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
        if len != bytes.len() - 4 || len > MAX_FRAME_LEN {
            return Err(ProtocolError::Malformed("frame length mismatch"));
        }
        Ok(Frame {
            msg_type: MessageType::from_code(bytes[4])?,
            sequence: u64::from_be_bytes(bytes[5..13].try_into().expect("8 bytes")),
            body: bytes[13..].to_vec(),
        })
    }

    /// Header bytes covered by the AEAD tag: type and sequence.
    pub(crate) fn header_aad(msg_type: MessageType, sequence: u64) -> [u8; 9] {
        let mut aad = [0u8; 9];
        aad[0] = msg_type as u8;
        aad[1..].copy_from_slice(&sequence.to_be_bytes());
        aad
    }
}

/// Length of the frame that starts at `prefix`, once its first four bytes are
/// known. Used by stream readers.
pub fn frame_len_from_prefix(prefix: [u8; 4]) -> Result<usize, ProtocolError> {
    let len = u32::from_be_bytes(prefix) as usize;
    if !(9..=MAX_FRAME_LEN).contains(&len) {
        return Err(ProtocolError::Malformed("frame length out of range"));
    }
    Ok(len)
}

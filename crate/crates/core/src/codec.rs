//! Canonical byte encoding shared by transactions, blocks and state snapshots.
//!
//! Integers are fixed-width big-endian. Variable-length byte strings and text
//! carry a `u32` big-endian length prefix. Lists carry a `u32` count followed by
//! their elements. Optional values carry a one-byte tag (0 absent, 1 present).
//! Fixed-size values (keys, addresses, digests) are written raw.

use alloc::string::String;
use alloc::vec::Vec;

use crate::crypto::{Address, DigestValue, EncryptionKey, PublicKey, PublicKeys, Signature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("trailing bytes after value")]
    TrailingBytes,
    #[error("invalid tag {0}")]
    InvalidTag(u8),
    #[error("invalid utf-8 text")]
    InvalidUtf8,
    #[error("length {0} exceeds limit")]
    TooLong(usize),
}

const MAX_FIELD_LEN: usize = 16 * 1024 * 1024;

#[derive(Default, Debug, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(v as u8)
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        self.u32(bytes.len() as u32);
        self.raw(bytes)
    }

    pub fn text(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn opt_bytes(&mut self, v: Option<&[u8]>) -> &mut Self {
        match v {
            None => self.u8(0),
            Some(b) => self.u8(1).bytes(b),
        }
    }

    pub fn opt_text(&mut self, v: Option<&str>) -> &mut Self {
        self.opt_bytes(v.map(str::as_bytes))
    }

    pub fn count(&mut self, n: usize) -> &mut Self {
        self.u32(n as u32)
    }

    pub fn public_keys(&mut self, keys: &PublicKeys) -> &mut Self {
        self.raw(&keys.signing.0).raw(&keys.encryption.0)
    }
}

#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    input: &'a [u8],
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Decoder { input }
    }

    pub fn remaining(&self) -> usize {
        self.input.len()
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        if self.input.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::TrailingBytes)
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.input.len() < n {
            return Err(DecodeError::Truncated);
        }
        let (head, tail) = self.input.split_at(n);
        self.input = tail;
        Ok(head)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool, DecodeError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            t => Err(DecodeError::InvalidTag(t)),
        }
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.u32()? as usize;
        if len > MAX_FIELD_LEN {
            return Err(DecodeError::TooLong(len));
        }
        self.take(len)
    }

    pub fn text(&mut self) -> Result<String, DecodeError> {
        let b = self.bytes()?;
        core::str::from_utf8(b).map(String::from).map_err(|_| DecodeError::InvalidUtf8)
    }

    pub fn opt_bytes(&mut self) -> Result<Option<&'a [u8]>, DecodeError> {
        match self.u8()? {
            0 => Ok(None),
            1 => self.bytes().map(Some),
            t => Err(DecodeError::InvalidTag(t)),
        }
    }

    pub fn opt_text(&mut self) -> Result<Option<String>, DecodeError> {
        match self.opt_bytes()? {
            None => Ok(None),
            Some(b) => core::str::from_utf8(b).map(|s| Some(String::from(s))).map_err(|_| DecodeError::InvalidUtf8),
        }
    }

    /// Reads a list count, bounded by the bytes left so hostile input cannot
    /// trigger huge allocations.
    pub fn count(&mut self) -> Result<usize, DecodeError> {
        let n = self.u32()? as usize;
        if n > self.input.len() {
            return Err(DecodeError::TooLong(n));
        }
        Ok(n)
    }

    pub fn address(&mut self) -> Result<Address, DecodeError> {
        self.array().map(Address)
    }

    pub fn digest(&mut self) -> Result<DigestValue, DecodeError> {
        self.array().map(DigestValue)
    }

    pub fn public_key(&mut self) -> Result<PublicKey, DecodeError> {
        self.array().map(PublicKey)
    }

    pub fn signature(&mut self) -> Result<Signature, DecodeError> {
        self.array().map(Signature)
    }

    pub fn public_keys(&mut self) -> Result<PublicKeys, DecodeError> {
        Ok(PublicKeys { signing: self.public_key()?, encryption: EncryptionKey(self.array()?) })
    }
}

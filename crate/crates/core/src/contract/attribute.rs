//! Attribute fields as stored on a user record, and the helpers managers and
//! users need to build and open them.
//!
//! Hash rule: `hash = SHA-256(data ∥ nonce ∥ descriptor)` over the plaintexts,
//! where `nonce` is [`ATTRIBUTE_NONCE_LEN`] random bytes. When data is embedded
//! in the record it is stored as `sym_encrypt(data ∥ nonce)`. The descriptor is
//! always encrypted under the same per-attribute secret key, and that key is
//! wrapped to the user's encryption key.

use alloc::string::String;
use alloc::vec::Vec;

use rand_core::CryptoRngCore;

use crate::codec::{DecodeError, Decoder, Encoder};
use crate::crypto::{
    asym_decrypt, asym_encrypt, hash_parts, sym_decrypt, sym_encrypt, CryptoError, DigestValue, EncryptionKey, KeyPair,
    PublicKey, SymmetricKey,
};

pub const ATTRIBUTE_NONCE_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeField {
    /// Signing key of whoever posted the field. Equal to the user's own key for
    /// self-attested attributes.
    pub manager_public_key: PublicKey,
    pub identity: bool,
    pub encrypted_secret_key: Option<Vec<u8>>,
    pub descriptor: Vec<u8>,
    pub data: Option<Vec<u8>>,
    pub location: Option<String>,
    pub hash: DigestValue,
}

impl AttributeField {
    pub fn encode_into(&self, e: &mut Encoder) {
        e.raw(&self.manager_public_key.0)
            .bool(self.identity)
            .opt_bytes(self.encrypted_secret_key.as_deref())
            .bytes(&self.descriptor)
            .opt_bytes(self.data.as_deref())
            .opt_text(self.location.as_deref())
            .raw(&self.hash.0);
    }

    pub fn decode_from(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(AttributeField {
            manager_public_key: d.public_key()?,
            identity: d.bool()?,
            encrypted_secret_key: d.opt_bytes()?.map(<[u8]>::to_vec),
            descriptor: d.bytes()?.to_vec(),
            data: d.opt_bytes()?.map(<[u8]>::to_vec),
            location: d.opt_text()?,
            hash: d.digest()?,
        })
    }

    /// Structural check: anything encrypted needs a wrapped key to open it.
    pub fn is_well_formed(&self) -> bool {
        let has_encrypted = self.data.is_some() || self.location.is_some() || !self.descriptor.is_empty();
        !has_encrypted || self.encrypted_secret_key.is_some()
    }

    /// Whether the given plaintexts reproduce the public hash.
    pub fn matches(&self, data: &[u8], nonce: &[u8], descriptor: &[u8]) -> bool {
        attribute_hash(data, nonce, descriptor) == self.hash
    }
}

pub fn attribute_hash(data: &[u8], nonce: &[u8], descriptor: &[u8]) -> DigestValue {
    hash_parts(&[data, nonce, descriptor])
}

/// What the user (and only the user) keeps or recovers for an attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributePlaintext {
    pub descriptor: Vec<u8>,
    pub data: Vec<u8>,
    pub nonce: Vec<u8>,
}

impl AttributePlaintext {
    pub fn hash(&self) -> DigestValue {
        attribute_hash(&self.data, &self.nonce, &self.descriptor)
    }
}

/// Builds an [`AttributeField`] from plaintexts for a given user.
#[derive(Debug, Clone)]
pub struct AttributeBuilder {
    descriptor: Vec<u8>,
    data: Vec<u8>,
    identity: bool,
    embed_data: bool,
    location: Option<String>,
    nonce: Option<[u8; ATTRIBUTE_NONCE_LEN]>,
}

impl AttributeBuilder {
    pub fn new(descriptor: impl Into<Vec<u8>>, data: impl Into<Vec<u8>>) -> Self {
        AttributeBuilder {
            descriptor: descriptor.into(),
            data: data.into(),
            identity: false,
            embed_data: false,
            location: None,
            nonce: None,
        }
    }

    pub fn identity(mut self, identity: bool) -> Self {
        self.identity = identity;
        self
    }

    /// Store `sym_encrypt(data ∥ nonce)` in the record so the user can recover it.
    pub fn embed_data(mut self, embed: bool) -> Self {
        self.embed_data = embed;
        self
    }

    pub fn location(mut self, location: impl Into<String>) -> Self {
        self.location = Some(location.into());
        self
    }

    pub fn nonce(mut self, nonce: [u8; ATTRIBUTE_NONCE_LEN]) -> Self {
        self.nonce = Some(nonce);
        self
    }

    pub fn build(
        self,
        poster: &PublicKey,
        user_encryption_key: &EncryptionKey,
        rng: &mut impl CryptoRngCore,
    ) -> (AttributeField, AttributePlaintext) {
        let nonce = self.nonce.unwrap_or_else(|| {
            let mut n = [0u8; ATTRIBUTE_NONCE_LEN];
            rng.fill_bytes(&mut n);
            n
        });
        let secret = SymmetricKey::generate(rng);
        let descriptor = sym_encrypt(&secret, &self.descriptor, rng);
        let data = self.embed_data.then(|| {
            let mut padded = self.data.clone();
            padded.extend_from_slice(&nonce);
            sym_encrypt(&secret, &padded, rng)
        });
        let encrypted_secret_key = Some(asym_encrypt(user_encryption_key, secret.as_bytes(), rng));
        let hash = attribute_hash(&self.data, &nonce, &self.descriptor);
        let field = AttributeField {
            manager_public_key: *poster,
            identity: self.identity,
            encrypted_secret_key,
            descriptor,
            data,
            location: self.location,
            hash,
        };
        let plain = AttributePlaintext { descriptor: self.descriptor, data: self.data, nonce: nonce.to_vec() };
        (field, plain)
    }
}

/// Contents the user can recover from the record alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenedAttribute {
    pub descriptor: Vec<u8>,
    /// `(data, nonce)` when the data was embedded in the record.
    pub data: Option<(Vec<u8>, Vec<u8>)>,
}

impl OpenedAttribute {
    pub fn into_plaintext(self) -> Option<AttributePlaintext> {
        let descriptor = self.descriptor;
        self.data.map(|(data, nonce)| AttributePlaintext { descriptor, data, nonce })
    }
}

/// Decrypts the descriptor and any embedded data with the user's private key.
pub fn open_attribute(field: &AttributeField, user: &KeyPair) -> Result<OpenedAttribute, CryptoError> {
    let wrapped = field.encrypted_secret_key.as_deref().ok_or(CryptoError::MalformedKey)?;
    let secret = SymmetricKey::from_slice(&asym_decrypt(user, wrapped)?)?;
    let descriptor = sym_decrypt(&secret, &field.descriptor)?;
    let data = match &field.data {
        None => None,
        Some(ct) => {
            let mut padded = sym_decrypt(&secret, ct)?;
            if padded.len() < ATTRIBUTE_NONCE_LEN {
                return Err(CryptoError::DecryptionFailed);
            }
            let nonce = padded.split_off(padded.len() - ATTRIBUTE_NONCE_LEN);
            Some((padded, nonce))
        }
    };
    Ok(OpenedAttribute { descriptor, data })
}

//! Cryptographic primitives shared by the contract, ledger and protocol layers.
//!
//! Every identity holds two keypairs: an Ed25519 key for signing transactions
//! and an X25519 key for receiving encrypted material (challenges, session keys,
//! attribute secret keys). The signing public key is the identity; the address
//! is derived from it.
//!
//! * hash: SHA-256
//! * asymmetric encryption: ephemeral X25519 + HKDF-SHA256 + ChaCha20-Poly1305
//! * symmetric encryption: ChaCha20-Poly1305 with a random 96-bit nonce prefix
//!
//! The algorithms are selected by [`ActiveSuite`]; everything else in the crate
//! goes through the free functions in this module.

use alloc::vec::Vec;
use core::fmt;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signer, Verifier};
use hkdf::Hkdf;
use rand_core::CryptoRngCore;
use sha2::{Digest as _, Sha256};

pub const DIGEST_LEN: usize = 32;
pub const ADDRESS_LEN: usize = 20;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const SYMMETRIC_KEY_LEN: usize = 32;
/// Length of a keygen seed in deterministic mode.
pub const SEED_LEN: usize = 32;
/// Serialized secret material: signing seed followed by the X25519 secret.
pub const SECRET_LEN: usize = 64;

const SYM_NONCE_LEN: usize = 12;
const AEAD_TAG_LEN: usize = 16;
const ASYM_INFO: &[u8] = b"idms-asym-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("malformed seed: expected {expected} bytes, got {got}")]
    MalformedSeed { expected: usize, got: usize },
    #[error("malformed key material")]
    MalformedKey,
    #[error("malformed signature")]
    MalformedSignature,
    #[error("decryption failed")]
    DecryptionFailed,
}

macro_rules! byte_newtype {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
                let arr: [u8; $len] = bytes.try_into().map_err(|_| CryptoError::MalformedKey)?;
                Ok(Self(arr))
            }
        }

        impl AsRef<[u8]> for $name {
            fn as_ref(&self) -> &[u8] {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                for b in self.0.iter() {
                    write!(f, "{:02x}", b)?;
                }
                Ok(())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self)
            }
        }
    };
}

byte_newtype!(
    /// SHA-256 output.
    DigestValue,
    DIGEST_LEN
);
byte_newtype!(
    /// Account address: the first 20 bytes of the hash of a signing public key.
    Address,
    ADDRESS_LEN
);
byte_newtype!(
    /// Ed25519 verifying key. This is the public identity of an account.
    PublicKey,
    PUBLIC_KEY_LEN
);
byte_newtype!(
    /// X25519 public key that encrypted material is addressed to.
    EncryptionKey,
    PUBLIC_KEY_LEN
);
byte_newtype!(Signature, SIGNATURE_LEN);

impl Address {
    pub const ZERO: Address = Address([0; ADDRESS_LEN]);

    pub fn of(key: &PublicKey) -> Address {
        let digest = hash_bytes(&key.0);
        let mut out = [0u8; ADDRESS_LEN];
        out.copy_from_slice(&digest.0[..ADDRESS_LEN]);
        Address(out)
    }
}

impl DigestValue {
    pub const ZERO: DigestValue = DigestValue([0; DIGEST_LEN]);
}

impl PublicKey {
    pub fn address(&self) -> Address {
        Address::of(self)
    }
}

/// Symmetric key. Only constructed from random bytes or decrypted key material.
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey([u8; SYMMETRIC_KEY_LEN]);

impl SymmetricKey {
    pub fn generate(rng: &mut impl CryptoRngCore) -> Self {
        let mut key = [0u8; SYMMETRIC_KEY_LEN];
        rng.fill_bytes(&mut key);
        SymmetricKey(key)
    }

    pub(crate) fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; SYMMETRIC_KEY_LEN] = bytes.try_into().map_err(|_| CryptoError::MalformedKey)?;
        Ok(SymmetricKey(arr))
    }

    pub fn as_bytes(&self) -> &[u8; SYMMETRIC_KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(..)")
    }
}

/// The public half of an identity, as registered on the contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKeys {
    pub signing: PublicKey,
    pub encryption: EncryptionKey,
}

impl PublicKeys {
    pub fn address(&self) -> Address {
        self.signing.address()
    }

    pub fn to_bytes(&self) -> [u8; 2 * PUBLIC_KEY_LEN] {
        let mut out = [0u8; 2 * PUBLIC_KEY_LEN];
        out[..PUBLIC_KEY_LEN].copy_from_slice(&self.signing.0);
        out[PUBLIC_KEY_LEN..].copy_from_slice(&self.encryption.0);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != 2 * PUBLIC_KEY_LEN {
            return Err(CryptoError::MalformedKey);
        }
        Ok(PublicKeys {
            signing: PublicKey::from_slice(&bytes[..PUBLIC_KEY_LEN])?,
            encryption: EncryptionKey::from_slice(&bytes[PUBLIC_KEY_LEN..])?,
        })
    }
}

/// A signing keypair and an encryption keypair bundled as one identity.
#[derive(Clone)]
pub struct KeyPair {
    signing: ed25519_dalek::SigningKey,
    encryption: x25519_dalek::StaticSecret,
    public: PublicKeys,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public).finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn generate(rng: &mut impl CryptoRngCore) -> Self {
        let mut secret = [0u8; SECRET_LEN];
        rng.fill_bytes(&mut secret);
        Self::from_secret_bytes(&secret).expect("secret has the right length")
    }

    /// Deterministic generation for tests and reproducible fixtures.
    pub fn from_seed(seed: &[u8]) -> Result<Self, CryptoError> {
        if seed.len() != SEED_LEN {
            return Err(CryptoError::MalformedSeed { expected: SEED_LEN, got: seed.len() });
        }
        let mut secret = [0u8; SECRET_LEN];
        secret[..32].copy_from_slice(&hash_parts(&[b"idms-keygen-sign", seed]).0);
        secret[32..].copy_from_slice(&hash_parts(&[b"idms-keygen-enc", seed]).0);
        Self::from_secret_bytes(&secret)
    }

    pub fn from_secret_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != SECRET_LEN {
            return Err(CryptoError::MalformedKey);
        }
        let mut sign_seed = [0u8; 32];
        sign_seed.copy_from_slice(&bytes[..32]);
        let mut enc_secret = [0u8; 32];
        enc_secret.copy_from_slice(&bytes[32..]);
        let signing = ed25519_dalek::SigningKey::from_bytes(&sign_seed);
        let encryption = x25519_dalek::StaticSecret::from(enc_secret);
        let public = PublicKeys {
            signing: PublicKey(signing.verifying_key().to_bytes()),
            encryption: EncryptionKey(x25519_dalek::PublicKey::from(&encryption).to_bytes()),
        };
        Ok(KeyPair { signing, encryption, public })
    }

    pub fn to_secret_bytes(&self) -> [u8; SECRET_LEN] {
        let mut out = [0u8; SECRET_LEN];
        out[..32].copy_from_slice(&self.signing.to_bytes());
        out[32..].copy_from_slice(&self.encryption.to_bytes());
        out
    }

    pub fn public(&self) -> &PublicKeys {
        &self.public
    }

    pub fn address(&self) -> Address {
        self.public.address()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        ActiveSuite::sign(self, message)
    }

    pub fn decrypt(&self, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        ActiveSuite::asym_decrypt(self, ciphertext)
    }
}

/// The algorithm set used by the crate.
pub trait Suite {
    const NAME: &'static str;
    fn hash(input: &[u8]) -> DigestValue;
    fn sign(keys: &KeyPair, message: &[u8]) -> Signature;
    fn verify(key: &PublicKey, message: &[u8], signature: &Signature) -> bool;
    fn asym_encrypt(recipient: &EncryptionKey, plaintext: &[u8], rng: &mut impl CryptoRngCore) -> Vec<u8>;
    fn asym_decrypt(keys: &KeyPair, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError>;
    fn sym_encrypt(key: &SymmetricKey, plaintext: &[u8], aad: &[u8], rng: &mut impl CryptoRngCore) -> Vec<u8>;
    fn sym_decrypt(key: &SymmetricKey, ciphertext: &[u8], aad: &[u8]) -> Result<Vec<u8>, CryptoError>;
}

pub struct Sha256Ed25519X25519;

pub type ActiveSuite = Sha256Ed25519X25519;

fn aead_seal(key: &[u8; 32], nonce: &[u8; SYM_NONCE_LEN], msg: &[u8], aad: &[u8]) -> Vec<u8> {
    ChaCha20Poly1305::new(Key::from_slice(key))
        .encrypt(Nonce::from_slice(nonce), Payload { msg, aad })
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers")
}

fn aead_open(key: &[u8; 32], nonce: &[u8; SYM_NONCE_LEN], msg: &[u8], aad: &[u8]) -> Result<Vec<u8>, CryptoError> {
    ChaCha20Poly1305::new(Key::from_slice(key))
        .decrypt(Nonce::from_slice(nonce), Payload { msg, aad })
        .map_err(|_| CryptoError::DecryptionFailed)
}

fn asym_wrap_key(shared: &[u8; 32], ephemeral: &[u8; 32], recipient: &[u8; 32]) -> [u8; 32] {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(ephemeral);
    salt[32..].copy_from_slice(recipient);
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared);
    let mut okm = [0u8; 32];
    hk.expand(ASYM_INFO, &mut okm).expect("32 bytes is a valid HKDF-SHA256 output length");
    okm
}

impl Suite for Sha256Ed25519X25519 {
    const NAME: &'static str = "sha256-ed25519-x25519-chacha20poly1305";

    fn hash(input: &[u8]) -> DigestValue {
        DigestValue(Sha256::digest(input).into())
    }

    fn sign(keys: &KeyPair, message: &[u8]) -> Signature {
        Signature(keys.signing.sign(message).to_bytes())
    }

    fn verify(key: &PublicKey, message: &[u8], signature: &Signature) -> bool {
        let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&key.0) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
        vk.verify(message, &sig).is_ok()
    }

    fn asym_encrypt(recipient: &EncryptionKey, plaintext: &[u8], rng: &mut impl CryptoRngCore) -> Vec<u8> {
        let ephemeral = x25519_dalek::StaticSecret::random_from_rng(&mut *rng);
        let ephemeral_pub = x25519_dalek::PublicKey::from(&ephemeral).to_bytes();
        let shared = ephemeral.diffie_hellman(&x25519_dalek::PublicKey::from(recipient.0));
        let key = asym_wrap_key(shared.as_bytes(), &ephemeral_pub, &recipient.0);
        // The wrap key is single-use, so a fixed nonce is sound.
        let body = aead_seal(&key, &[0u8; SYM_NONCE_LEN], plaintext, &[]);
        let mut out = Vec::with_capacity(32 + body.len());
        out.extend_from_slice(&ephemeral_pub);
        out.extend_from_slice(&body);
        out
    }

    fn asym_decrypt(keys: &KeyPair, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
        if ciphertext.len() < 32 + AEAD_TAG_LEN {
            return Err(CryptoError::DecryptionFailed);
        }
        let mut ephemeral_pub = [0u8; 32];
        ephemeral_pub.copy_from_slice(&ciphertext[..32]);
        let shared = keys.encryption.diffie_hellman(&x25519_dalek::PublicKey::from(ephemeral_pub));
        if !shared.was_contributory() {
            return Err(CryptoError::DecryptionFailed);
        }
        let key = asym_wrap_key(shared.as_bytes(), &ephemeral_pub, &keys.public.encryption.0);
        aead_open(&key, &[0u8; SYM_NONCE_LEN], &ciphertext[32..], &[])
    }

    fn sym_encrypt(key: &SymmetricKey, plaintext: &[u8], aad: &[u8], rng: &mut impl CryptoRngCore) -> Vec<u8> {
        let mut nonce = [0u8; SYM_NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let body = aead_seal(&key.0, &nonce, plaintext, aad);
        let mut out = Vec::with_capacity(SYM_NONCE_LEN + body.len());
        out.extend_from_slice(&nonce);
        out.extend_from_slice(&body);
        out
    }

    fn sym_decrypt(key: &SymmetricKey, ciphertext: &[u8], aad: &[u8]) -> Result<Vec<u8>, CryptoError> {
        if ciphertext.len() < SYM_NONCE_LEN + AEAD_TAG_LEN {
            return Err(CryptoError::DecryptionFailed);
        }
        let mut nonce = [0u8; SYM_NONCE_LEN];
        nonce.copy_from_slice(&ciphertext[..SYM_NONCE_LEN]);
        aead_open(&key.0, &nonce, &ciphertext[SYM_NONCE_LEN..], aad)
    }
}

pub fn hash_bytes(input: &[u8]) -> DigestValue {
    ActiveSuite::hash(input)
}

/// Hash of the plain concatenation of `parts`.
pub fn hash_parts(parts: &[&[u8]]) -> DigestValue {
    let mut buf = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        buf.extend_from_slice(p);
    }
    hash_bytes(&buf)
}

pub fn sign(keys: &KeyPair, message: &[u8]) -> Signature {
    ActiveSuite::sign(keys, message)
}

pub fn verify(key: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    ActiveSuite::verify(key, message, signature)
}

/// Checks a raw signature byte-string; wrong lengths are reported instead of failing silently.
pub fn verify_raw(key: &PublicKey, message: &[u8], signature: &[u8]) -> Result<bool, CryptoError> {
    let sig: [u8; SIGNATURE_LEN] = signature.try_into().map_err(|_| CryptoError::MalformedSignature)?;
    Ok(verify(key, message, &Signature(sig)))
}

pub fn asym_encrypt(recipient: &EncryptionKey, plaintext: &[u8], rng: &mut impl CryptoRngCore) -> Vec<u8> {
    ActiveSuite::asym_encrypt(recipient, plaintext, rng)
}

pub fn asym_decrypt(keys: &KeyPair, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    ActiveSuite::asym_decrypt(keys, ciphertext)
}

pub fn sym_encrypt(key: &SymmetricKey, plaintext: &[u8], rng: &mut impl CryptoRngCore) -> Vec<u8> {
    ActiveSuite::sym_encrypt(key, plaintext, &[], rng)
}

pub fn sym_decrypt(key: &SymmetricKey, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    ActiveSuite::sym_decrypt(key, ciphertext, &[])
}

pub fn sym_encrypt_with_aad(key: &SymmetricKey, plaintext: &[u8], aad: &[u8], rng: &mut impl CryptoRngCore) -> Vec<u8> {
    ActiveSuite::sym_encrypt(key, plaintext, aad, rng)
}

pub fn sym_decrypt_with_aad(key: &SymmetricKey, ciphertext: &[u8], aad: &[u8]) -> Result<Vec<u8>, CryptoError> {
    ActiveSuite::sym_decrypt(key, ciphertext, aad)
}

pub fn random_bytes(rng: &mut impl CryptoRngCore, n: usize) -> Vec<u8> {
    let mut out = alloc::vec![0u8; n];
    rng.fill_bytes(&mut out);
    out
}

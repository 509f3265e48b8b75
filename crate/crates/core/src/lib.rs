//! Core of a smart-contract federated identity management system.
//!
//! * [`crypto`]: the primitive suite (SHA-256, Ed25519, X25519 + ChaCha20-Poly1305).
//! * [`contract`]: the identity contract state machine and its views.
//! * [`ledger`]: a deterministic single-sealer chain that orders signed calls.
//! * [`cost`]: per-function gas and Ether/USD arithmetic.
//! * [`protocol`]: user ↔ relying-party authentication and attribute transfer,
//!   run directly between the two parties against a local replica.
//!
//! The crate is `no_std` and only needs `alloc`. I/O lives in the companion
//! `idms` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod codec;
pub mod contract;
pub mod cost;
pub mod crypto;
pub mod ledger;
pub mod protocol;

use alloc::string::String;
use alloc::vec::Vec;

use crate::contract::ContractState;
use crate::crypto::{Address, PublicKey};

/// RP-side judgement of whoever posted an attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthorityDecision {
    pub manager_address: Address,
    pub manager_valid: bool,
    pub descriptors: Vec<String>,
    /// Required descriptors that were found on the manager record.
    pub matched_policy: Vec<String>,
    pub accepted: bool,
}

/// Accepts iff the key resolves to a valid manager whose plaintext descriptors
/// contain every required descriptor verbatim. Self-attested attributes have no
/// manager record and pass only an empty policy.
pub fn evaluate_manager_authority(
    replica: &ContractState,
    manager_public_key: &PublicKey,
    required_descriptors: &[String],
) -> AuthorityDecision {
    let manager_address = manager_public_key.address();
    let Some(record) = replica.manager(&manager_address) else {
        return AuthorityDecision {
            manager_address,
            manager_valid: false,
            descriptors: Vec::new(),
            matched_policy: Vec::new(),
            accepted: required_descriptors.is_empty(),
        };
    };
    let matched_policy: Vec<String> =
        required_descriptors.iter().filter(|r| record.descriptors.contains(r)).cloned().collect();
    let accepted = record.valid && matched_policy.len() == required_descriptors.len();
    AuthorityDecision {
        manager_address,
        manager_valid: record.valid,
        descriptors: record.descriptors.clone(),
        matched_policy,
        accepted,
    }
}

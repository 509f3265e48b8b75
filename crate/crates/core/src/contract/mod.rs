//! The identity management contract: a deterministic state machine over
//! owner, manager and user records.
//!
//! Role rules enforced here:
//! * the owner only adds and invalidates managers;
//! * account managers create user accounts, manage identity attributes on the
//!   accounts they created, and may remove only those accounts;
//! * attribute managers post non-identity attributes once the user permits them;
//! * users permit/deny attribute managers, delete their non-identity attributes,
//!   post self-attested attributes, and may delete their own account.
//!
//! Nothing is ever removed from the maps. Invalidation flips a `valid` flag and
//! attribute deletion leaves a tombstone so indices stay stable.

mod attribute;
mod call;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

pub use attribute::{
    attribute_hash, open_attribute, AttributeBuilder, AttributeField, AttributePlaintext, OpenedAttribute,
    ATTRIBUTE_NONCE_LEN,
};
pub use call::{Call, Function, TxFunction, UnknownFunction, ViewFunction};

use crate::codec::{DecodeError, Decoder, Encoder};
use crate::crypto::{Address, DigestValue, PublicKey, PublicKeys};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ContractError {
    #[error("caller is not the contract owner")]
    NotOwner,
    #[error("manager already exists and is valid")]
    DuplicateManager,
    #[error("manager must have at least one descriptor")]
    MissingDescriptors,
    #[error("the owner address cannot hold a manager or user account")]
    ReservedOwnerAddress,
    #[error("unknown manager")]
    UnknownManager,
    #[error("manager already invalid")]
    AlreadyInvalid,
    #[error("caller is not a valid account manager")]
    NotAccountManager,
    #[error("user account already exists and is valid")]
    DuplicateUser,
    #[error("identity attribute must be flagged identity and carry the caller's key")]
    MalformedIdentityAttribute,
    #[error("attribute carries encrypted content without a wrapped secret key")]
    MalformedAttribute,
    #[error("caller is not authorized for this account")]
    NotAuthorized,
    #[error("unknown user")]
    UnknownUser,
    #[error("user account is invalid")]
    InvalidUser,
    #[error("caller is not permitted to post attributes to this account")]
    NotPermitted,
    #[error("caller may not post identity attributes to this account")]
    IdentityFlagForbidden,
    #[error("attribute manager key does not match the caller")]
    KeyMismatch,
    #[error("users cannot delete identity attributes")]
    UserDeletingIdentityAttribute,
    #[error("unknown attribute index {0}")]
    UnknownIndex(u64),
    #[error("attribute {0} has been deleted")]
    DeletedAttribute(u64),
    #[error("caller is not a valid user")]
    NotAUser,
}

impl ContractError {
    /// Stable kebab-case identifier used in receipts and logs.
    pub fn code(&self) -> &'static str {
        match self {
            ContractError::NotOwner => "not-owner",
            ContractError::DuplicateManager => "duplicate-manager",
            ContractError::MissingDescriptors => "missing-descriptors",
            ContractError::ReservedOwnerAddress => "reserved-owner-address",
            ContractError::UnknownManager => "unknown-manager",
            ContractError::AlreadyInvalid => "already-invalid",
            ContractError::NotAccountManager => "not-account-manager",
            ContractError::DuplicateUser => "duplicate-user",
            ContractError::MalformedIdentityAttribute => "malformed-identity-attribute",
            ContractError::MalformedAttribute => "malformed-attribute",
            ContractError::NotAuthorized => "not-authorized",
            ContractError::UnknownUser => "unknown-user",
            ContractError::InvalidUser => "invalid-user",
            ContractError::NotPermitted => "not-permitted",
            ContractError::IdentityFlagForbidden => "identity-flag-forbidden",
            ContractError::KeyMismatch => "key-mismatch",
            ContractError::UserDeletingIdentityAttribute => "user-deleting-identity-attribute",
            ContractError::UnknownIndex(_) => "unknown-index",
            ContractError::DeletedAttribute(_) => "deleted-attribute",
            ContractError::NotAUser => "not-a-user",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ManagerKind {
    Account,
    Attribute,
}

impl ManagerKind {
    pub fn code(self) -> u8 {
        match self {
            ManagerKind::Account => 1,
            ManagerKind::Attribute => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, DecodeError> {
        match code {
            1 => Ok(ManagerKind::Account),
            2 => Ok(ManagerKind::Attribute),
            t => Err(DecodeError::InvalidTag(t)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ManagerKind::Account => "account_manager",
            ManagerKind::Attribute => "attribute_manager",
        }
    }
}

/// Public manager descriptor record. Descriptors are plaintext by design:
/// relying parties read them to judge an attribute's source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManagerRecord {
    pub public_key: PublicKey,
    pub kind: ManagerKind,
    pub descriptors: Vec<String>,
    pub valid: bool,
    pub created_at: u64,
}

/// Pseudonymous user account. Holds keys and attribute fields only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRecord {
    pub keys: PublicKeys,
    pub creator: Address,
    pub valid: bool,
    /// `None` marks a deleted attribute.
    pub attributes: Vec<Option<AttributeField>>,
    pub permitted_attribute_managers: BTreeSet<Address>,
}

/// Result of a successfully applied transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    AttributeIndex(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractState {
    owner: PublicKeys,
    managers: BTreeMap<Address, ManagerRecord>,
    users: BTreeMap<Address, UserRecord>,
}

impl ContractState {
    pub fn new(owner: PublicKeys) -> Self {
        ContractState { owner, managers: BTreeMap::new(), users: BTreeMap::new() }
    }

    pub fn owner(&self) -> &PublicKeys {
        &self.owner
    }

    pub fn owner_address(&self) -> Address {
        self.owner.address()
    }

    pub fn managers(&self) -> &BTreeMap<Address, ManagerRecord> {
        &self.managers
    }

    pub fn users(&self) -> &BTreeMap<Address, UserRecord> {
        &self.users
    }

    pub fn manager(&self, address: &Address) -> Option<&ManagerRecord> {
        self.managers.get(address)
    }

    pub fn user(&self, address: &Address) -> Option<&UserRecord> {
        self.users.get(address)
    }

    fn valid_manager(&self, address: &Address, kind: ManagerKind) -> bool {
        self.managers.get(address).is_some_and(|m| m.valid && m.kind == kind)
    }

    fn is_valid_manager(&self, address: &Address) -> bool {
        self.managers.get(address).is_some_and(|m| m.valid)
    }

    /// Applies one authenticated call. State is untouched on error.
    pub fn apply(&mut self, caller: &PublicKey, call: &Call, height: u64) -> Result<Outcome, ContractError> {
        let caller_addr = caller.address();
        match call {
            Call::AddManager { public_key, kind, descriptors } => {
                self.add_manager(&caller_addr, public_key, *kind, descriptors, height)
            }
            Call::DeleteManager { manager } => self.delete_manager(&caller_addr, manager),
            Call::AddUserAccount { keys, identity_attributes } => {
                self.add_user_account(caller, keys, identity_attributes)
            }
            Call::DeleteUserAccount { user } => self.delete_user_account(&caller_addr, user),
            Call::AddAttribute { user, attribute } => self.add_attribute(caller, user, attribute),
            Call::DeleteAttribute { user, index } => self.delete_attribute(caller, user, *index),
            Call::PermitAttributeManager { manager } => self.permit_attribute_manager(&caller_addr, manager),
            Call::DenyAttributeManager { manager } => self.deny_attribute_manager(&caller_addr, manager),
        }
    }

    fn add_manager(
        &mut self,
        caller: &Address,
        key: &PublicKey,
        kind: ManagerKind,
        descriptors: &[String],
        height: u64,
    ) -> Result<Outcome, ContractError> {
        if *caller != self.owner_address() {
            return Err(ContractError::NotOwner);
        }
        let address = key.address();
        if address == self.owner_address() {
            return Err(ContractError::ReservedOwnerAddress);
        }
        if self.is_valid_manager(&address) {
            return Err(ContractError::DuplicateManager);
        }
        if descriptors.is_empty() {
            return Err(ContractError::MissingDescriptors);
        }
        self.managers.insert(
            address,
            ManagerRecord {
                public_key: *key,
                kind,
                descriptors: descriptors.to_vec(),
                valid: true,
                created_at: height,
            },
        );
        Ok(Outcome::Done)
    }

    fn delete_manager(&mut self, caller: &Address, manager: &Address) -> Result<Outcome, ContractError> {
        if *caller != self.owner_address() {
            return Err(ContractError::NotOwner);
        }
        let record = self.managers.get_mut(manager).ok_or(ContractError::UnknownManager)?;
        if !record.valid {
            return Err(ContractError::AlreadyInvalid);
        }
        record.valid = false;
        Ok(Outcome::Done)
    }

    fn add_user_account(
        &mut self,
        caller: &PublicKey,
        keys: &PublicKeys,
        identity_attributes: &[AttributeField],
    ) -> Result<Outcome, ContractError> {
        let caller_addr = caller.address();
        if !self.valid_manager(&caller_addr, ManagerKind::Account) {
            return Err(ContractError::NotAccountManager);
        }
        let address = keys.address();
        if address == self.owner_address() {
            return Err(ContractError::ReservedOwnerAddress);
        }
        if self.users.get(&address).is_some_and(|u| u.valid) {
            return Err(ContractError::DuplicateUser);
        }
        for attr in identity_attributes {
            if !attr.identity || attr.manager_public_key != *caller {
                return Err(ContractError::MalformedIdentityAttribute);
            }
            if !attr.is_well_formed() {
                return Err(ContractError::MalformedAttribute);
            }
        }
        // A deleted account's slots stay tombstoned; the new record continues
        // after them.
        let mut attributes: Vec<Option<AttributeField>> =
            self.users.get(&address).map_or_else(Vec::new, |old| old.attributes.iter().map(|_| None).collect());
        attributes.extend(identity_attributes.iter().cloned().map(Some));
        self.users.insert(
            address,
            UserRecord {
                keys: *keys,
                creator: caller_addr,
                valid: true,
                attributes,
                permitted_attribute_managers: BTreeSet::new(),
            },
        );
        Ok(Outcome::Done)
    }

    fn delete_user_account(&mut self, caller: &Address, user: &Address) -> Result<Outcome, ContractError> {
        let record = self.users.get(user).ok_or(ContractError::UnknownUser)?;
        let is_user = caller == user;
        let is_creator = *caller == record.creator && self.valid_manager(caller, ManagerKind::Account);
        if !is_user && !is_creator {
            return Err(ContractError::NotAuthorized);
        }
        if !record.valid {
            return Err(ContractError::InvalidUser);
        }
        self.users.get_mut(user).expect("checked above").valid = false;
        Ok(Outcome::Done)
    }

    fn add_attribute(
        &mut self,
        caller: &PublicKey,
        user: &Address,
        attr: &AttributeField,
    ) -> Result<Outcome, ContractError> {
        let caller_addr = caller.address();
        let record = self.users.get(user).ok_or(ContractError::UnknownUser)?;
        if !record.valid {
            return Err(ContractError::InvalidUser);
        }
        if attr.manager_public_key != *caller {
            return Err(ContractError::KeyMismatch);
        }
        let is_creator = caller_addr == record.creator && self.valid_manager(&caller_addr, ManagerKind::Account);
        if !is_creator {
            if attr.identity {
                return Err(ContractError::IdentityFlagForbidden);
            }
            let is_user = caller_addr == *user;
            let is_permitted = self.valid_manager(&caller_addr, ManagerKind::Attribute)
                && record.permitted_attribute_managers.contains(&caller_addr);
            if !is_user && !is_permitted {
                return Err(ContractError::NotPermitted);
            }
        }
        if !attr.is_well_formed() {
            return Err(ContractError::MalformedAttribute);
        }
        let record = self.users.get_mut(user).expect("checked above");
        record.attributes.push(Some(attr.clone()));
        Ok(Outcome::AttributeIndex(record.attributes.len() as u64 - 1))
    }

    fn delete_attribute(&mut self, caller: &PublicKey, user: &Address, index: u64) -> Result<Outcome, ContractError> {
        let caller_addr = caller.address();
        let record = self.users.get(user).ok_or(ContractError::UnknownUser)?;
        if !record.valid {
            return Err(ContractError::InvalidUser);
        }
        let slot = usize::try_from(index)
            .ok()
            .and_then(|i| record.attributes.get(i))
            .ok_or(ContractError::UnknownIndex(index))?;
        let attr = slot.as_ref().ok_or(ContractError::DeletedAttribute(index))?;
        let is_user = caller_addr == *user;
        let is_poster = attr.manager_public_key == *caller && (is_user || self.is_valid_manager(&caller_addr));
        if !is_poster {
            if !is_user {
                return Err(ContractError::NotAuthorized);
            }
            if attr.identity {
                return Err(ContractError::UserDeletingIdentityAttribute);
            }
        }
        self.users.get_mut(user).expect("checked above").attributes[index as usize] = None;
        Ok(Outcome::Done)
    }

    fn permit_attribute_manager(&mut self, caller: &Address, manager: &Address) -> Result<Outcome, ContractError> {
        if !self.users.get(caller).is_some_and(|u| u.valid) {
            return Err(ContractError::NotAUser);
        }
        if !self.valid_manager(manager, ManagerKind::Attribute) {
            return Err(ContractError::UnknownManager);
        }
        self.users.get_mut(caller).expect("checked above").permitted_attribute_managers.insert(*manager);
        Ok(Outcome::Done)
    }

    fn deny_attribute_manager(&mut self, caller: &Address, manager: &Address) -> Result<Outcome, ContractError> {
        let record = self.users.get_mut(caller).filter(|u| u.valid).ok_or(ContractError::NotAUser)?;
        record.permitted_attribute_managers.remove(manager);
        Ok(Outcome::Done)
    }

    // Views. These never touch the chain and cost nothing.

    /// Signing and encryption keys registered for a user, plus the validity flag.
    pub fn view_public_key(&self, user: &Address) -> Result<(PublicKeys, bool), ContractError> {
        self.users.get(user).map(|u| (u.keys, u.valid)).ok_or(ContractError::UnknownUser)
    }

    pub fn view_attribute(&self, user: &Address, index: u64) -> Result<&AttributeField, ContractError> {
        let record = self.users.get(user).ok_or(ContractError::UnknownUser)?;
        usize::try_from(index)
            .ok()
            .and_then(|i| record.attributes.get(i))
            .ok_or(ContractError::UnknownIndex(index))?
            .as_ref()
            .ok_or(ContractError::DeletedAttribute(index))
    }

    pub fn compare_hash(&self, user: &Address, index: u64, candidate: &DigestValue) -> Result<bool, ContractError> {
        Ok(self.view_attribute(user, index)?.hash == *candidate)
    }

    /// Canonical serialization: owner keys, then managers and users sorted by
    /// address. Two states are equal iff their encodings are equal.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.raw(b"IDMSSTATE1").public_keys(&self.owner).count(self.managers.len());
        for (addr, m) in &self.managers {
            e.raw(&addr.0).raw(&m.public_key.0).u8(m.kind.code()).count(m.descriptors.len());
            for d in &m.descriptors {
                e.text(d);
            }
            e.bool(m.valid).u64(m.created_at);
        }
        e.count(self.users.len());
        for (addr, u) in &self.users {
            e.raw(&addr.0).public_keys(&u.keys).raw(&u.creator.0).bool(u.valid);
            e.count(u.attributes.len());
            for slot in &u.attributes {
                match slot {
                    None => {
                        e.u8(0);
                    }
                    Some(a) => {
                        e.u8(1);
                        a.encode_into(&mut e);
                    }
                }
            }
            e.count(u.permitted_attribute_managers.len());
            for m in &u.permitted_attribute_managers {
                e.raw(&m.0);
            }
        }
        e.finish()
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes);
        if d.take(10)? != b"IDMSSTATE1" {
            return Err(DecodeError::InvalidTag(0));
        }
        let owner = d.public_keys()?;
        let mut managers = BTreeMap::new();
        for _ in 0..d.count()? {
            let addr = d.address()?;
            let public_key = d.public_key()?;
            let kind = ManagerKind::from_code(d.u8()?)?;
            let n = d.count()?;
            let mut descriptors = Vec::with_capacity(n);
            for _ in 0..n {
                descriptors.push(d.text()?);
            }
            let valid = d.bool()?;
            let created_at = d.u64()?;
            managers.insert(addr, ManagerRecord { public_key, kind, descriptors, valid, created_at });
        }
        let mut users = BTreeMap::new();
        for _ in 0..d.count()? {
            let addr = d.address()?;
            let keys = d.public_keys()?;
            let creator = d.address()?;
            let valid = d.bool()?;
            let n = d.count()?;
            let mut attributes = Vec::with_capacity(n);
            for _ in 0..n {
                attributes.push(match d.u8()? {
                    0 => None,
                    1 => Some(AttributeField::decode_from(&mut d)?),
                    t => return Err(DecodeError::InvalidTag(t)),
                });
            }
            let mut permitted = BTreeSet::new();
            for _ in 0..d.count()? {
                permitted.insert(d.address()?);
            }
            users
                .insert(addr, UserRecord { keys, creator, valid, attributes, permitted_attribute_managers: permitted });
        }
        d.finish()?;
        Ok(ContractState { owner, managers, users })
    }
}

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::codec::{DecodeError, Decoder, Encoder};
use crate::crypto::{Address, PublicKey, PublicKeys};

use super::attribute::AttributeField;
use super::ManagerKind;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown contract function `{0}`")]
pub struct UnknownFunction(pub String);

/// The closed set of state-changing contract functions. There is no upgrade
/// or administrative escape hatch beyond these eight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum TxFunction {
    AddManager = 1,
    DeleteManager = 2,
    AddUserAccount = 3,
    DeleteUserAccount = 4,
    AddAttribute = 5,
    DeleteAttribute = 6,
    PermitAttributeManager = 7,
    DenyAttributeManager = 8,
}

impl TxFunction {
    pub const ALL: [TxFunction; 8] = [
        TxFunction::AddManager,
        TxFunction::DeleteManager,
        TxFunction::AddUserAccount,
        TxFunction::DeleteUserAccount,
        TxFunction::AddAttribute,
        TxFunction::DeleteAttribute,
        TxFunction::PermitAttributeManager,
        TxFunction::DenyAttributeManager,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self, UnknownFunction> {
        Self::ALL
            .into_iter()
            .find(|f| f.code() == code)
            .ok_or_else(|| UnknownFunction(alloc::format!("0x{:02x}", code)))
    }

    pub fn name(self) -> &'static str {
        match self {
            TxFunction::AddManager => "add_manager",
            TxFunction::DeleteManager => "delete_manager",
            TxFunction::AddUserAccount => "add_user_account",
            TxFunction::DeleteUserAccount => "delete_user_account",
            TxFunction::AddAttribute => "add_attribute",
            TxFunction::DeleteAttribute => "delete_attribute",
            TxFunction::PermitAttributeManager => "permit_attribute_manager",
            TxFunction::DenyAttributeManager => "deny_attribute_manager",
        }
    }

    /// Role column of the function table, for display.
    pub fn permitted_role(self) -> &'static str {
        match self {
            TxFunction::AddManager | TxFunction::DeleteManager => "Contract Owner",
            TxFunction::AddUserAccount | TxFunction::DeleteUserAccount => "Account Manager",
            TxFunction::AddAttribute | TxFunction::DeleteAttribute => "Managers / Users",
            TxFunction::PermitAttributeManager | TxFunction::DenyAttributeManager => "Users",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViewFunction {
    CompareHash,
    ViewAttribute,
    ViewPublicKey,
}

impl ViewFunction {
    pub const ALL: [ViewFunction; 3] =
        [ViewFunction::CompareHash, ViewFunction::ViewAttribute, ViewFunction::ViewPublicKey];

    pub fn name(self) -> &'static str {
        match self {
            ViewFunction::CompareHash => "compare_hash",
            ViewFunction::ViewAttribute => "view_attribute",
            ViewFunction::ViewPublicKey => "view_public_key",
        }
    }
}

/// Any contract function, transaction or view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Function {
    Transaction(TxFunction),
    View(ViewFunction),
}

impl Function {
    /// All eleven functions in table order.
    pub fn all() -> impl Iterator<Item = Function> {
        TxFunction::ALL.into_iter().map(Function::Transaction).chain(ViewFunction::ALL.into_iter().map(Function::View))
    }

    pub fn name(self) -> &'static str {
        match self {
            Function::Transaction(f) => f.name(),
            Function::View(v) => v.name(),
        }
    }

    pub fn is_view(self) -> bool {
        matches!(self, Function::View(_))
    }

    /// Title-cased label, e.g. "Add Attribute".
    pub fn title(self) -> String {
        let mut out = String::new();
        for (i, word) in self.name().split('_').enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let mut chars = word.chars();
            if let Some(c) = chars.next() {
                out.extend(c.to_uppercase());
                out.push_str(chars.as_str());
            }
        }
        out
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for TxFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Function {
    type Err = UnknownFunction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let normalized: String =
            s.trim().chars().map(|c| if c == '-' || c == ' ' { '_' } else { c.to_ascii_lowercase() }).collect();
        Function::all().find(|f| f.name() == normalized).ok_or_else(|| UnknownFunction(String::from(s)))
    }
}

impl FromStr for TxFunction {
    type Err = UnknownFunction;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.parse::<Function>()? {
            Function::Transaction(f) => Ok(f),
            Function::View(_) => Err(UnknownFunction(String::from(s))),
        }
    }
}

/// A decoded transaction call with its arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Call {
    AddManager { public_key: PublicKey, kind: ManagerKind, descriptors: Vec<String> },
    DeleteManager { manager: Address },
    AddUserAccount { keys: PublicKeys, identity_attributes: Vec<AttributeField> },
    DeleteUserAccount { user: Address },
    AddAttribute { user: Address, attribute: AttributeField },
    DeleteAttribute { user: Address, index: u64 },
    PermitAttributeManager { manager: Address },
    DenyAttributeManager { manager: Address },
}

impl Call {
    pub fn function(&self) -> TxFunction {
        match self {
            Call::AddManager { .. } => TxFunction::AddManager,
            Call::DeleteManager { .. } => TxFunction::DeleteManager,
            Call::AddUserAccount { .. } => TxFunction::AddUserAccount,
            Call::DeleteUserAccount { .. } => TxFunction::DeleteUserAccount,
            Call::AddAttribute { .. } => TxFunction::AddAttribute,
            Call::DeleteAttribute { .. } => TxFunction::DeleteAttribute,
            Call::PermitAttributeManager { .. } => TxFunction::PermitAttributeManager,
            Call::DenyAttributeManager { .. } => TxFunction::DenyAttributeManager,
        }
    }

    /// Canonical argument bytes, fields in declaration order.
    pub fn encode_args(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        match self {
            Call::AddManager { public_key, kind, descriptors } => {
                e.raw(&public_key.0).u8(kind.code()).count(descriptors.len());
                for d in descriptors {
                    e.text(d);
                }
            }
            Call::DeleteManager { manager }
            | Call::PermitAttributeManager { manager }
            | Call::DenyAttributeManager { manager } => {
                e.raw(&manager.0);
            }
            Call::AddUserAccount { keys, identity_attributes } => {
                e.public_keys(keys).count(identity_attributes.len());
                for a in identity_attributes {
                    a.encode_into(&mut e);
                }
            }
            Call::DeleteUserAccount { user } => {
                e.raw(&user.0);
            }
            Call::AddAttribute { user, attribute } => {
                e.raw(&user.0);
                attribute.encode_into(&mut e);
            }
            Call::DeleteAttribute { user, index } => {
                e.raw(&user.0).u64(*index);
            }
        }
        e.finish()
    }

    pub fn decode_args(function: TxFunction, args: &[u8]) -> Result<Call, DecodeError> {
        let mut d = Decoder::new(args);
        let call = match function {
            TxFunction::AddManager => {
                let public_key = d.public_key()?;
                let kind = ManagerKind::from_code(d.u8()?)?;
                let n = d.count()?;
                let mut descriptors = Vec::with_capacity(n);
                for _ in 0..n {
                    descriptors.push(d.text()?);
                }
                Call::AddManager { public_key, kind, descriptors }
            }
            TxFunction::DeleteManager => Call::DeleteManager { manager: d.address()? },
            TxFunction::AddUserAccount => {
                let keys = d.public_keys()?;
                let n = d.count()?;
                let mut identity_attributes = Vec::with_capacity(n);
                for _ in 0..n {
                    identity_attributes.push(AttributeField::decode_from(&mut d)?);
                }
                Call::AddUserAccount { keys, identity_attributes }
            }
            TxFunction::DeleteUserAccount => Call::DeleteUserAccount { user: d.address()? },
            TxFunction::AddAttribute => {
                Call::AddAttribute { user: d.address()?, attribute: AttributeField::decode_from(&mut d)? }
            }
            TxFunction::DeleteAttribute => Call::DeleteAttribute { user: d.address()?, index: d.u64()? },
            TxFunction::PermitAttributeManager => Call::PermitAttributeManager { manager: d.address()? },
            TxFunction::DenyAttributeManager => Call::DenyAttributeManager { manager: d.address()? },
        };
        d.finish()?;
        Ok(call)
    }
}

//! On-disk formats.
//!
//! Key files are one line of lowercase hex. The first decoded byte is a format
//! tag, followed by the raw key material:
//!
//! | tag    | contents                                                 |
//! |--------|----------------------------------------------------------|
//! | `0x01` | secret: 32-byte Ed25519 seed ∥ 32-byte X25519 secret     |
//! | `0x02` | public: 32-byte Ed25519 key ∥ 32-byte X25519 key         |
//!
//! The public half of `<path>` is written next to it as `<path>.pub`. Secret
//! files are created with mode `0600`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use idms_core::contract::AttributePlaintext;
use idms_core::crypto::{Address, KeyPair, PublicKeys, ADDRESS_LEN};
use idms_core::ledger::Chain;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SECRET_TAG: u8 = 0x01;
pub const PUBLIC_TAG: u8 = 0x02;

pub fn public_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".pub");
    PathBuf::from(s)
}

fn read_hex(path: &Path) -> Result<Vec<u8>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    hex::decode(text.trim()).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// Writes `contents` to a sibling temp file and renames it into place.
fn write_atomic(path: &Path, contents: &[u8], private: bool) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp~");
    let mut opts = fs::OpenOptions::new();
    opts.write(true).create(true).truncate(true);
    #[cfg(unix)]
    if private {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    #[cfg(not(unix))]
    let _ = private;
    let mut f = opts.open(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(contents).and_then(|()| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_keys(path: &Path, keys: &KeyPair) -> Result<(), CliError> {
    let mut secret = vec![SECRET_TAG];
    secret.extend_from_slice(&keys.to_secret_bytes());
    write_atomic(path, format!("{}\n", hex::encode(secret)).as_bytes(), true)?;
    write_public(&public_path(path), keys.public())
}

pub fn write_public(path: &Path, keys: &PublicKeys) -> Result<(), CliError> {
    let mut public = vec![PUBLIC_TAG];
    public.extend_from_slice(&keys.to_bytes());
    write_atomic(path, format!("{}\n", hex::encode(public)).as_bytes(), false)
}

pub fn read_keys(path: &Path) -> Result<KeyPair, CliError> {
    let bytes = read_hex(path)?;
    match bytes.split_first() {
        Some((&SECRET_TAG, rest)) => {
            KeyPair::from_secret_bytes(rest).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
        }
        Some((&PUBLIC_TAG, _)) => Err(CliError::Parse(format!("{}: public key file, secret expected", path.display()))),
        _ => Err(CliError::Parse(format!("{}: unknown key file format", path.display()))),
    }
}

/// Reads public keys from either a public or a secret key file.
pub fn read_public(path: &Path) -> Result<PublicKeys, CliError> {
    let bytes = read_hex(path)?;
    match bytes.split_first() {
        Some((&PUBLIC_TAG, rest)) => {
            PublicKeys::from_bytes(rest).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
        }
        Some((&SECRET_TAG, _)) => Ok(*read_keys(path)?.public()),
        _ => Err(CliError::Parse(format!("{}: unknown key file format", path.display()))),
    }
}

/// Accepts a 40-digit hex address or the path of a key file.
pub fn resolve_address(arg: &str) -> Result<Address, CliError> {
    let trimmed = arg.strip_prefix("0x").unwrap_or(arg);
    if trimmed.len() == 2 * ADDRESS_LEN {
        if let Ok(bytes) = hex::decode(trimmed) {
            return Ok(Address::from_slice(&bytes).expect("length checked"));
        }
    }
    let path = Path::new(arg);
    if path.exists() {
        return Ok(read_public(path)?.address());
    }
    Err(CliError::Parse(format!("not an address or key file: {arg}")))
}

pub fn load_chain(path: &Path) -> Result<Chain, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Chain::from_bytes(&bytes).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

pub fn save_chain(path: &Path, chain: &Chain) -> Result<(), CliError> {
    write_atomic(path, &chain.to_bytes(), false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Owner,
    AccountManager,
    AttributeManager,
    User,
    Rp,
}

/// Per-identity settings. The nonce only ever moves forward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub role: Role,
    pub keys: PathBuf,
    pub chain: PathBuf,
    #[serde(default)]
    pub next_nonce: u64,
}

impl Profile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = toml::to_string(self).map_err(|e| CliError::Parse(e.to_string()))?;
        write_atomic(path, text.as_bytes(), false)
    }

    pub fn advance_nonce(&mut self, used: u64) {
        self.next_nonce = self.next_nonce.max(used + 1);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct StoredAttribute {
    descriptor: String,
    data: String,
    nonce: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    location: Option<String>,
}

/// A user's private copies of attribute plaintexts, one TOML file per
/// `(account, index)` under `<root>/<account>/<index>.toml`. Byte strings
/// are hex.
#[derive(Debug, Clone)]
pub struct AttributeStore {
    root: PathBuf,
}

impl AttributeStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        AttributeStore { root: root.into() }
    }

    fn path(&self, account: &Address, index: u64) -> PathBuf {
        self.root.join(account.to_string()).join(format!("{index}.toml"))
    }

    pub fn put(
        &self,
        account: &Address,
        index: u64,
        plain: &AttributePlaintext,
        location: Option<&str>,
    ) -> Result<PathBuf, CliError> {
        let path = self.path(account, index);
        let dir = path.parent().expect("joined path");
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let record = StoredAttribute {
            descriptor: hex::encode(&plain.descriptor),
            data: hex::encode(&plain.data),
            nonce: hex::encode(&plain.nonce),
            location: location.map(str::to_owned),
        };
        let text = toml::to_string(&record).map_err(|e| CliError::Parse(e.to_string()))?;
        write_atomic(&path, text.as_bytes(), true)?;
        Ok(path)
    }

    pub fn get(&self, account: &Address, index: u64) -> Result<AttributePlaintext, CliError> {
        let path = self.path(account, index);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let record: StoredAttribute =
            toml::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        let field = |s: &str| hex::decode(s).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())));
        Ok(AttributePlaintext {
            descriptor: field(&record.descriptor)?,
            data: field(&record.data)?,
            nonce: field(&record.nonce)?,
        })
    }

    /// Every stored index for `account`, in order.
    pub fn indices(&self, account: &Address) -> Result<Vec<u64>, CliError> {
        let dir = self.root.join(account.to_string());
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out = BTreeMap::new();
        for entry in fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))? {
            let name = entry.map_err(|e| CliError::io(&dir, e))?.file_name();
            if let Some(i) = name.to_str().and_then(|n| n.strip_suffix(".toml")).and_then(|n| n.parse().ok()) {
                out.insert(i, ());
            }
        }
        Ok(out.into_keys().collect())
    }
}

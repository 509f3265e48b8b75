use std::path::Path;

/// Failure classes of the command-line tool, each with its own exit code.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CliError {
    /// The ledger refused the transaction or the contract reverted it.
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Rejected(_) => 1,
            CliError::Protocol(_) => 2,
            CliError::Io(_) | CliError::Parse(_) => 3,
        }
    }
}

impl From<idms_core::protocol::ProtocolError> for CliError {
    fn from(e: idms_core::protocol::ProtocolError) -> Self {
        CliError::Protocol(format!("{} ({e})", e.code()))
    }
}

impl From<idms_core::ledger::RejectReason> for CliError {
    fn from(e: idms_core::ledger::RejectReason) -> Self {
        CliError::Rejected(format!("{} ({e})", e.code()))
    }
}

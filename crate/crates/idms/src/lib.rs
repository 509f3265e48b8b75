//! Standard-library side of the identity ledger: key, chain, profile and
//! attribute-store files, a TCP frame transport, the relying-party service,
//! the scripted walkthrough and the `idms` command line.

pub mod cli;
pub mod error;
pub mod files;
pub mod log;
pub mod net;
pub mod scenario;

pub use error::CliError;

//! TCP transport, the relying-party service and the user client.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use idms_core::contract::{AttributeField, AttributePlaintext, ContractState};
use idms_core::crypto::{Address, EncryptionKey, KeyPair};
use idms_core::protocol::{
    self, evaluate_manager_authority, frame_len_from_prefix, AttributePackage, FrameTransport, ProtocolError,
    TransportError, VerificationResult,
};
use rand_core::OsRng;

use crate::error::CliError;
use crate::log::Logger;

const IO_TIMEOUT: Duration = Duration::from_secs(30);

/// Whole frames over a TCP stream.
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> std::io::Result<Self> {
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(IO_TIMEOUT))?;
        stream.set_write_timeout(Some(IO_TIMEOUT))?;
        Ok(TcpTransport { stream })
    }

    pub fn connect(addr: impl ToSocketAddrs) -> std::io::Result<Self> {
        TcpTransport::new(TcpStream::connect(addr)?)
    }

    pub fn peer_addr(&self) -> Option<SocketAddr> {
        self.stream.peer_addr().ok()
    }
}

fn io_err(e: std::io::Error) -> TransportError {
    match e.kind() {
        std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::ConnectionReset | std::io::ErrorKind::BrokenPipe => {
            TransportError::Closed
        }
        _ => TransportError::Io(e.to_string()),
    }
}

impl FrameTransport for TcpTransport {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        self.stream.write_all(frame).map_err(io_err)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>, TransportError> {
        let mut prefix = [0u8; 4];
        self.stream.read_exact(&mut prefix).map_err(io_err)?;
        let len = frame_len_from_prefix(prefix).map_err(|e| TransportError::Io(e.to_string()))?;
        let mut frame = vec![0u8; 4 + len];
        frame[..4].copy_from_slice(&prefix);
        self.stream.read_exact(&mut frame[4..]).map_err(io_err)?;
        Ok(frame)
    }
}

/// Relying-party settings.
#[derive(Clone)]
pub struct RpConfig {
    pub keys: KeyPair,
    pub replica: Arc<ContractState>,
    /// Descriptors a poster must hold for an attribute to be accepted.
    pub required_descriptors: Vec<String>,
}

/// Per-session summary returned by [`handle_session`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionReport {
    pub account: Option<Address>,
    pub verified: Vec<(u64, Result<bool, String>)>,
    pub error: Option<String>,
}

/// Runs one complete session: authentication, then packages until the user
/// closes. Every outcome is logged; nothing is written to any ledger.
pub fn handle_session(
    transport: &mut impl FrameTransport,
    config: &RpConfig,
    log: &Logger,
    id: usize,
) -> SessionReport {
    let mut report = SessionReport::default();
    let start = Instant::now();
    let clock = move || start.elapsed().as_millis() as u64;
    let fail = |report: &mut SessionReport, e: ProtocolError| {
        log.event("rp.session.error", &[("session", &id), ("code", &e.code()), ("detail", &e)]);
        report.error = Some(e.code().to_owned());
    };
    let mut session = match protocol::accept_outer_channel(transport, &config.keys) {
        Ok(s) => s,
        Err(e) => {
            fail(&mut report, e);
            return report;
        }
    };
    let account = match protocol::rp_authenticate(&mut session, transport, &config.replica, &mut OsRng, &clock) {
        Ok(a) => a,
        Err(e) => {
            fail(&mut report, e);
            return report;
        }
    };
    report.account = Some(account);
    log.event("rp.authenticated", &[("session", &id), ("account", &account)]);
    loop {
        match protocol::rp_verify_attribute(&mut session, transport, &config.replica, &mut OsRng) {
            Ok(None) => break,
            Ok(Some(v)) => {
                let index = v.package.index;
                match &v.outcome {
                    Ok(field) => {
                        let accepted = log_authority(log, id, index, field, &v.package, config);
                        report.verified.push((index, Ok(accepted)));
                    }
                    Err(e) => {
                        log.event("rp.attribute", &[("session", &id), ("index", &index), ("result", &e.name())]);
                        report.verified.push((index, Err(e.name().to_owned())));
                    }
                }
            }
            Err(e) => {
                fail(&mut report, e);
                return report;
            }
        }
    }
    log.event("rp.session.closed", &[("session", &id), ("account", &account)]);
    report
}

fn log_authority(
    log: &Logger,
    id: usize,
    index: u64,
    field: &AttributeField,
    pkg: &AttributePackage,
    config: &RpConfig,
) -> bool {
    let decision = evaluate_manager_authority(&config.replica, &field.manager_public_key, &config.required_descriptors);
    let descriptor = String::from_utf8_lossy(&pkg.descriptor_plain);
    log.event(
        "rp.attribute",
        &[("session", &id), ("index", &index), ("result", &"verified"), ("descriptor", &descriptor)],
    );
    log.event(
        "rp.authority",
        &[
            ("session", &id),
            ("index", &index),
            ("manager", &decision.manager_address),
            ("manager_valid", &decision.manager_valid),
            ("descriptors", &decision.descriptors.join(",")),
            ("accepted", &decision.accepted),
        ],
    );
    decision.accepted
}

/// Accepts connections until `max_sessions` have been handled (forever when
/// `None`), one thread per connection. Returns the number of sessions served.
pub fn serve(
    listener: TcpListener,
    config: RpConfig,
    log: Logger,
    max_sessions: Option<usize>,
) -> std::io::Result<usize> {
    let served = Arc::new(AtomicUsize::new(0));
    let mut workers = Vec::new();
    log.event("rp.listening", &[("addr", &listener.local_addr()?)]);
    for (id, stream) in listener.incoming().enumerate() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log.event("rp.accept.error", &[("detail", &e)]);
                continue;
            }
        };
        let (config, log, served) = (config.clone(), log.clone(), served.clone());
        workers.push(thread::spawn(move || {
            let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
            log.event("rp.session.open", &[("session", &id), ("peer", &peer)]);
            match TcpTransport::new(stream) {
                Ok(mut t) => {
                    handle_session(&mut t, &config, &log, id);
                }
                Err(e) => log.event("rp.session.error", &[("session", &id), ("code", &"io"), ("detail", &e)]),
            }
            served.fetch_add(1, Ordering::SeqCst);
        }));
        if max_sessions.is_some_and(|m| id + 1 >= m) {
            break;
        }
    }
    for w in workers {
        let _ = w.join();
    }
    Ok(served.load(Ordering::SeqCst))
}

/// Authenticates as `account` and presents each plaintext in turn.
pub fn connect_and_present(
    transport: &mut impl FrameTransport,
    rp_encryption_key: &EncryptionKey,
    keys: &KeyPair,
    account: Address,
    attributes: &[(u64, AttributePlaintext)],
    log: &Logger,
) -> Result<Vec<VerificationResult>, CliError> {
    let mut session = protocol::open_outer_channel(transport, rp_encryption_key, &mut OsRng)?;
    protocol::user_authenticate(&mut session, transport, account, keys, &mut OsRng)?;
    log.event("user.authenticated", &[("account", &account)]);
    let mut results = Vec::new();
    for (index, plain) in attributes {
        let pkg = AttributePackage {
            account,
            index: *index,
            descriptor_plain: plain.descriptor.clone(),
            data_plain: plain.data.clone(),
            nonce: plain.nonce.clone(),
        };
        let result = protocol::send_attribute(&mut session, transport, &pkg, &mut OsRng)?;
        let outcome = match result.outcome {
            Ok(()) => "verified",
            Err(e) => e.name(),
        };
        log.event("user.attribute", &[("index", &result.index), ("result", &outcome)]);
        results.push(result);
    }
    protocol::user_close(&mut session, transport, &mut OsRng)?;
    Ok(results)
}

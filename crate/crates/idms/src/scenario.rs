//! Scripted walkthrough: a bank opens Bob's account, the University of
//! Corellia posts his degree and GPA, and Ally's relying party checks both.

use std::net::TcpListener;
use std::sync::Arc;
use std::thread;

use idms_core::contract::{open_attribute, AttributeBuilder, AttributePlaintext, Call, ManagerKind, TxFunction};
use idms_core::cost::{chain_cost_summary, format_ether, format_usd, Prices};
use idms_core::crypto::KeyPair;
use idms_core::ledger::{replicate, Chain, Transaction};
use rand_core::OsRng;

use crate::error::CliError;
use crate::log::Logger;
use crate::net::{connect_and_present, handle_session, RpConfig, TcpTransport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Variant {
    Full,
    /// Bob never permits the university.
    MissingPermit,
    /// Bob tries to remove the identity attribute the bank gave him.
    UserDeletesIdentity,
    /// After a full run Bob deletes his GPA and Ally checks again.
    DeleteGpa,
}

impl Variant {
    /// Name of the step expected to fail, if any.
    pub fn predicted_failure(self) -> Option<&'static str> {
        match self {
            Variant::Full => None,
            Variant::MissingPermit => Some("university-posts-degree"),
            Variant::UserDeletesIdentity => Some("bob-deletes-identity-attribute"),
            Variant::DeleteGpa => Some("ally-reverifies-gpa"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub number: usize,
    pub name: &'static str,
    /// Gas charged, for steps that are transactions.
    pub gas: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub number: usize,
    pub name: &'static str,
    pub error: CliError,
}

pub struct Report {
    pub steps: Vec<Step>,
    pub failure: Option<Failure>,
    pub chain: Chain,
}

impl Report {
    /// Functions of every transaction on the chain, in order.
    pub fn transactions(&self) -> Vec<TxFunction> {
        self.chain.receipts().iter().map(|r| r.function).collect()
    }

    pub fn total_gas(&self) -> u64 {
        self.chain.receipts().iter().map(|r| r.gas).sum()
    }
}

pub const DEGREE: (&str, &str) = ("degree", "BSc Astrophysics, University of Corellia");
pub const GPA: (&str, &str) = ("gpa", "3.87");
pub const DEGREE_LOCATION: &str = "https://registry.corellia.edu/degrees/bob";
pub const UNIVERSITY_DESCRIPTORS: [&str; 2] = ["university", "University of Corellia"];

struct Run<'a> {
    log: &'a Logger,
    chain: Chain,
    steps: Vec<Step>,
}

impl Run<'_> {
    fn next_number(&self) -> usize {
        self.steps.len() + 1
    }

    fn fail(&self, name: &'static str, error: CliError) -> Failure {
        let number = self.next_number();
        self.log.event("scenario.failed", &[("step", &number), ("name", &name), ("error", &error)]);
        Failure { number, name, error }
    }

    fn done(&mut self, name: &'static str, gas: Option<u64>) {
        let number = self.next_number();
        match gas {
            Some(g) => {
                self.log.event("scenario.step", &[("step", &number), ("name", &name), ("status", &"ok"), ("gas", &g)])
            }
            None => self.log.event("scenario.step", &[("step", &number), ("name", &name), ("status", &"ok")]),
        }
        self.steps.push(Step { number, name, gas });
    }

    /// Signs, submits and seals one transaction, failing on a reverted receipt.
    fn transact(&mut self, name: &'static str, keys: &KeyPair, call: Call) -> Result<(), Failure> {
        let nonce = self.chain.next_nonce(&keys.address());
        let tx = Transaction::new_signed(keys, &call, nonce);
        self.chain.submit_transaction(tx).map_err(|e| self.fail(name, e.into()))?;
        self.chain.seal_block();
        let receipt = self.chain.receipts().last().expect("sealed one transaction").clone();
        if let Err(e) = &receipt.result {
            return Err(self.fail(name, CliError::Rejected(format!("{} ({e})", e.code()))));
        }
        self.done(name, Some(receipt.gas));
        Ok(())
    }
}

/// Presents `attributes` for Bob to a fresh RP over loopback TCP. Every
/// package must verify and come from a poster holding the "university"
/// descriptor.
fn ally_verifies(
    chain: &Chain,
    bob: &KeyPair,
    attributes: &[(u64, AttributePlaintext)],
    log: &Logger,
) -> Result<(), CliError> {
    let replica = replicate(chain).map_err(|e| CliError::Parse(e.to_string()))?;
    let ally = KeyPair::generate(&mut OsRng);
    let config = RpConfig {
        keys: ally.clone(),
        replica: Arc::new(replica),
        required_descriptors: vec![UNIVERSITY_DESCRIPTORS[0].to_owned()],
    };
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| CliError::Io(e.to_string()))?;
    let addr = listener.local_addr().map_err(|e| CliError::Io(e.to_string()))?;
    let rp_log = log.clone();
    let server = thread::spawn(move || {
        let (stream, _) = listener.accept().map_err(|e| CliError::Io(e.to_string()))?;
        let mut t = TcpTransport::new(stream).map_err(|e| CliError::Io(e.to_string()))?;
        Ok::<_, CliError>(handle_session(&mut t, &config, &rp_log, 0))
    });
    let mut client = TcpTransport::connect(addr).map_err(|e| CliError::Io(e.to_string()))?;
    let results = connect_and_present(&mut client, &ally.public().encryption, bob, bob.address(), attributes, log);
    drop(client);
    let report = server.join().map_err(|_| CliError::Io("rp thread panicked".into()))??;
    for r in results? {
        if let Err(e) = r.outcome {
            return Err(CliError::Protocol(format!("index {}: {}", r.index, e.name())));
        }
    }
    for (index, accepted) in report.verified {
        match accepted {
            Ok(true) => {}
            Ok(false) => return Err(CliError::Protocol(format!("index {index}: poster lacks authority"))),
            Err(e) => return Err(CliError::Protocol(format!("index {index}: {e}"))),
        }
    }
    Ok(())
}

pub fn run_corellia(variant: Variant, log: &Logger) -> Report {
    let owner = KeyPair::generate(&mut OsRng);
    let mut run = Run { log, chain: Chain::new(*owner.public()), steps: Vec::new() };
    let failure = corellia_steps(&mut run, &owner, variant).err();
    if failure.is_none() {
        let summary = chain_cost_summary(&run.chain, run.chain.schedule(), &Prices::default());
        log.event(
            "scenario.done",
            &[
                ("transactions", &summary.transactions),
                ("total_gas", &summary.total.gas),
                ("ether", &format_ether(summary.total.ether)),
                ("usd", &format_usd(summary.total.usd)),
            ],
        );
    }
    Report { steps: run.steps, failure, chain: run.chain }
}

fn corellia_steps(run: &mut Run<'_>, owner: &KeyPair, variant: Variant) -> Result<(), Failure> {
    let bank = KeyPair::generate(&mut OsRng);
    let university = KeyPair::generate(&mut OsRng);
    let bob = KeyPair::generate(&mut OsRng);

    run.transact(
        "owner-authorizes-bank",
        owner,
        Call::AddManager {
            public_key: bank.public().signing,
            kind: ManagerKind::Account,
            descriptors: vec!["bank".into(), "Bank of Corellia".into()],
        },
    )?;
    run.transact(
        "owner-authorizes-university",
        owner,
        Call::AddManager {
            public_key: university.public().signing,
            kind: ManagerKind::Attribute,
            descriptors: UNIVERSITY_DESCRIPTORS.iter().map(|d| d.to_string()).collect(),
        },
    )?;
    let (identity, _) = AttributeBuilder::new("name", "Bob").identity(true).embed_data(true).build(
        &bank.public().signing,
        &bob.public().encryption,
        &mut OsRng,
    );
    run.transact(
        "bank-creates-bob",
        &bank,
        Call::AddUserAccount { keys: *bob.public(), identity_attributes: vec![identity] },
    )?;
    if variant == Variant::UserDeletesIdentity {
        run.transact("bob-deletes-identity-attribute", &bob, Call::DeleteAttribute { user: bob.address(), index: 0 })?;
    }
    if variant != Variant::MissingPermit {
        run.transact("bob-permits-university", &bob, Call::PermitAttributeManager { manager: university.address() })?;
    }

    let (degree, degree_plain) = AttributeBuilder::new(DEGREE.0, DEGREE.1).location(DEGREE_LOCATION).build(
        &university.public().signing,
        &bob.public().encryption,
        &mut OsRng,
    );
    run.transact(
        "university-posts-degree",
        &university,
        Call::AddAttribute { user: bob.address(), attribute: degree },
    )?;
    let (gpa, gpa_plain) = AttributeBuilder::new(GPA.0, GPA.1).embed_data(true).build(
        &university.public().signing,
        &bob.public().encryption,
        &mut OsRng,
    );
    run.transact("university-posts-gpa", &university, Call::AddAttribute { user: bob.address(), attribute: gpa })?;

    let name = "bob-decrypts-gpa";
    let record = run
        .chain
        .state()
        .view_attribute(&bob.address(), 2)
        .map_err(|e| run.fail(name, CliError::Rejected(e.code().into())))?;
    let opened = open_attribute(record, &bob)
        .ok()
        .and_then(|o| o.into_plaintext())
        .ok_or_else(|| run.fail(name, CliError::Protocol("cannot decrypt gpa".into())))?;
    if opened != gpa_plain {
        return Err(run.fail(name, CliError::Protocol("decrypted gpa differs".into())));
    }
    run.done(name, None);

    let attributes = [(1, degree_plain), (2, opened)];
    let name = "ally-verifies";
    ally_verifies(&run.chain, &bob, &attributes, run.log).map_err(|e| run.fail(name, e))?;
    run.done(name, None);

    if variant == Variant::DeleteGpa {
        run.transact("bob-deletes-gpa", &bob, Call::DeleteAttribute { user: bob.address(), index: 2 })?;
        let name = "ally-reverifies-gpa";
        ally_verifies(&run.chain, &bob, &attributes[1..], run.log).map_err(|e| run.fail(name, e))?;
        run.done(name, None);
    }
    Ok(())
}

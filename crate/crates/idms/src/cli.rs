use std::net::TcpListener;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use idms_core::contract::attribute_hash;
use idms_core::contract::{
    open_attribute, AttributeBuilder, AttributePlaintext, Call, Function, ManagerKind, Outcome, ATTRIBUTE_NONCE_LEN,
};
use idms_core::cost::{
    chain_cost_summary, cost_report, format_ether, format_usd, parse_decimal, Prices, DEFAULT_ETHER_PRICE,
    DEFAULT_GAS_PRICE,
};
use idms_core::crypto::{Address, DigestValue, KeyPair, PublicKeys};
use idms_core::ledger::{replicate, Chain, Transaction};
use rand_core::OsRng;

use crate::error::CliError;
use crate::files::{self, AttributeStore, Profile, Role};
use crate::log::Logger;
use crate::net::{self, RpConfig, TcpTransport};
use crate::scenario::{self, Variant};

#[derive(Debug, Parser)]
#[command(name = "idms", version, about = "Identity ledger simulator, relying-party service and client")]
pub struct Cli {
    /// Profile file supplying role, keys, chain and the next nonce.
    #[arg(long, global = true, env = "IDMS_PROFILE")]
    pub profile: Option<PathBuf>,
    /// Chain (or replica) file.
    #[arg(long, global = true, env = "IDMS_CHAIN")]
    pub chain: Option<PathBuf>,
    /// Secret key file of the acting party.
    #[arg(long, global = true, env = "IDMS_KEYS")]
    pub keys: Option<PathBuf>,
    /// Directory of plaintext attribute copies.
    #[arg(long, global = true, env = "IDMS_STORE")]
    pub store: Option<PathBuf>,
    /// Queue the transaction without sealing a block.
    #[arg(long, global = true)]
    pub no_seal: bool,
    /// Use this transaction nonce instead of the next free one.
    #[arg(long, global = true)]
    pub tx_nonce: Option<u64>,
    /// Ether per gas.
    #[arg(long, global = true, default_value = DEFAULT_GAS_PRICE)]
    pub gas_price: String,
    /// USD per Ether.
    #[arg(long, global = true, default_value = DEFAULT_ETHER_PRICE)]
    pub ether_price: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a key pair; writes `<out>` and `<out>.pub`.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        /// 32-byte hex seed for reproducible keys.
        #[arg(long)]
        seed: Option<String>,
    },
    /// Print the address of a key file (defaults to --keys).
    Address { key: Option<PathBuf> },
    /// Create a new chain owned by --keys.
    Init {
        #[arg(long)]
        force: bool,
    },
    #[command(subcommand)]
    Profile(ProfileCmd),
    #[command(subcommand)]
    Owner(OwnerCmd),
    #[command(subcommand)]
    Manager(ManagerCmd),
    #[command(subcommand)]
    User(UserCmd),
    #[command(subcommand)]
    Chain(ChainCmd),
    #[command(subcommand)]
    View(ViewCmd),
    /// Gas and price table, or the cost of one function.
    Costs {
        function: Option<String>,
        /// Sum the cost of every transaction on --chain instead.
        #[arg(long)]
        chain_summary: bool,
    },
    #[command(subcommand)]
    Rp(RpCmd),
    #[command(subcommand)]
    Scenario(ScenarioCmd),
}

#[derive(Debug, Subcommand)]
pub enum ProfileCmd {
    /// Write a profile from --keys and --chain.
    Create {
        #[arg(long, value_enum)]
        role: Role,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum OwnerCmd {
    AddManager {
        /// Key file of the new manager.
        #[arg(long)]
        manager: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Descriptor of the manager; repeatable.
        #[arg(long = "descriptor", required = true)]
        descriptors: Vec<String>,
    },
    DeleteManager {
        #[arg(long)]
        manager: String,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum KindArg {
    Account,
    Attribute,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[arg(long)]
    pub descriptor: String,
    #[arg(long)]
    pub data: String,
    /// Store the encrypted data in the record so the user can recover it.
    #[arg(long)]
    pub embed: bool,
    #[arg(long)]
    pub location: Option<String>,
    #[arg(long)]
    pub identity: bool,
}

#[derive(Debug, Subcommand)]
pub enum ManagerCmd {
    AddUser {
        /// Key file of the new user.
        #[arg(long)]
        user: PathBuf,
        /// Identity attribute as `descriptor=data`; repeatable.
        #[arg(long = "identity")]
        identity: Vec<String>,
    },
    DeleteUser {
        #[arg(long)]
        user: String,
    },
    /// Post an attribute; the plaintext copy goes to --store when given.
    AddAttribute {
        #[arg(long)]
        user: String,
        #[command(flatten)]
        attribute: AttributeArgs,
    },
    DeleteAttribute {
        #[arg(long)]
        user: String,
        #[arg(long)]
        index: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum UserCmd {
    Permit {
        #[arg(long)]
        manager: String,
    },
    Deny {
        #[arg(long)]
        manager: String,
    },
    AddAttribute {
        #[command(flatten)]
        attribute: AttributeArgs,
    },
    DeleteAttribute {
        #[arg(long)]
        index: u64,
    },
    DeleteAccount,
    /// Authenticate to an RP and present stored attributes.
    Connect {
        #[arg(long)]
        rp: String,
        /// Key file of the RP (its public half is enough).
        #[arg(long)]
        rp_key: PathBuf,
        /// Attribute index to present; repeatable. Defaults to every stored one.
        #[arg(long = "index")]
        indices: Vec<u64>,
        /// Account to claim, defaults to the address of --keys.
        #[arg(long)]
        account: Option<String>,
    },
    /// Decrypt an attribute from the chain and save it to --store.
    Decrypt {
        #[arg(long)]
        index: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum ChainCmd {
    Show,
    Seal,
    Verify,
}

#[derive(Debug, Subcommand)]
pub enum ViewCmd {
    PublicKey {
        #[arg(long)]
        user: String,
    },
    Attribute {
        #[arg(long)]
        user: String,
        #[arg(long)]
        index: u64,
    },
    /// Compare a digest, or the hash of given hex plaintexts, with the record.
    CompareHash {
        #[arg(long)]
        user: String,
        #[arg(long)]
        index: u64,
        #[arg(long, conflicts_with_all = ["descriptor", "data", "nonce"])]
        hash: Option<String>,
        #[arg(long, requires_all = ["data", "nonce"])]
        descriptor: Option<String>,
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        nonce: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RpCmd {
    /// Serve authentication and attribute checks against the --chain replica.
    Serve {
        #[arg(long)]
        listen: String,
        /// Descriptor required of attribute posters; repeatable.
        #[arg(long = "require")]
        required: Vec<String>,
        #[arg(long)]
        max_sessions: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    Run {
        #[arg(value_enum)]
        name: ScenarioName,
        #[arg(long, value_enum, default_value = "full")]
        variant: Variant,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ScenarioName {
    Corellia,
}

/// Resolved global settings.
struct Ctx<'a> {
    cli: &'a Cli,
    log: &'a Logger,
    profile: Option<(PathBuf, Profile)>,
}

impl Ctx<'_> {
    fn keys_path(&self) -> Result<PathBuf, CliError> {
        self.cli
            .keys
            .clone()
            .or_else(|| self.profile.as_ref().map(|(_, p)| p.keys.clone()))
            .ok_or_else(|| CliError::Parse("no key file: pass --keys or --profile".into()))
    }

    fn chain_path(&self) -> Result<PathBuf, CliError> {
        self.cli
            .chain
            .clone()
            .or_else(|| self.profile.as_ref().map(|(_, p)| p.chain.clone()))
            .ok_or_else(|| CliError::Parse("no chain file: pass --chain or --profile".into()))
    }

    fn keys(&self) -> Result<KeyPair, CliError> {
        files::read_keys(&self.keys_path()?)
    }

    fn chain(&self) -> Result<Chain, CliError> {
        files::load_chain(&self.chain_path()?)
    }

    fn store(&self) -> Result<AttributeStore, CliError> {
        self.cli
            .store
            .clone()
            .map(AttributeStore::new)
            .ok_or_else(|| CliError::Parse("no attribute store: pass --store".into()))
    }

    fn prices(&self) -> Result<Prices, CliError> {
        let parse = |s: &str| parse_decimal(s).ok_or_else(|| CliError::Parse(format!("bad price: {s}")));
        Prices::new(parse(&self.cli.gas_price)?, parse(&self.cli.ether_price)?)
            .map_err(|e| CliError::Parse(e.to_string()))
    }

    fn require_role(&self, allowed: &[Role]) -> Result<(), CliError> {
        match &self.profile {
            Some((_, p)) if !allowed.contains(&p.role) => {
                Err(CliError::Rejected(format!("profile role {:?} cannot run this command", p.role)))
            }
            _ => Ok(()),
        }
    }

    /// Signs, submits and (unless --no-seal) seals one transaction, then
    /// reports the receipt and its cost.
    fn transact(&mut self, call: Call) -> Result<Option<Outcome>, CliError> {
        let keys = self.keys()?;
        let chain_path = self.chain_path()?;
        let mut chain = files::load_chain(&chain_path)?;
        let sender = keys.address();
        let floor = self.profile.as_ref().map_or(0, |(_, p)| p.next_nonce);
        let nonce = self.cli.tx_nonce.unwrap_or_else(|| chain.next_nonce(&sender).max(floor));
        let tx = Transaction::new_signed(&keys, &call, nonce);
        let function = tx.function;
        let id = chain.submit_transaction(tx).inspect_err(|e| {
            self.log.event("tx.rejected", &[("function", &function.name()), ("nonce", &nonce), ("reason", &e.code())]);
        })?;
        if let Some((path, profile)) = &mut self.profile {
            profile.advance_nonce(nonce);
            profile.save(path)?;
        }
        if self.cli.no_seal {
            files::save_chain(&chain_path, &chain)?;
            self.log.event("tx.pending", &[("id", &id), ("function", &function.name()), ("nonce", &nonce)]);
            return Ok(None);
        }
        chain.seal_block();
        files::save_chain(&chain_path, &chain)?;
        let receipt = chain.receipts().iter().rev().find(|r| r.tx_id == id).expect("sealed").clone();
        let report = cost_report(Function::Transaction(function), chain.schedule(), &self.prices()?);
        let status = match &receipt.result {
            Ok(_) => "ok",
            Err(e) => e.code(),
        };
        self.log.event(
            "tx.receipt",
            &[
                ("id", &id),
                ("height", &receipt.height),
                ("function", &function.name()),
                ("nonce", &nonce),
                ("status", &status),
            ],
        );
        self.log.event(
            "tx.cost",
            &[("gas", &report.gas), ("ether", &format_ether(report.ether)), ("usd", &format_usd(report.usd))],
        );
        match receipt.result {
            Ok(outcome) => Ok(Some(outcome)),
            Err(e) => Err(CliError::Rejected(format!("{} ({e})", e.code()))),
        }
    }
}

fn user_keys_on_chain(chain: &Chain, user: &Address) -> Result<PublicKeys, CliError> {
    let (keys, _) = chain.state().view_public_key(user).map_err(|e| CliError::Rejected(e.code().into()))?;
    Ok(keys)
}

fn hex_arg(name: &str, s: &str) -> Result<Vec<u8>, CliError> {
    hex::decode(s).map_err(|e| CliError::Parse(format!("--{name}: {e}")))
}

fn build_attribute(
    args: &AttributeArgs,
    poster: &KeyPair,
    user: &PublicKeys,
) -> (idms_core::contract::AttributeField, AttributePlaintext) {
    let mut b = AttributeBuilder::new(args.descriptor.as_bytes(), args.data.as_bytes())
        .identity(args.identity)
        .embed_data(args.embed);
    if let Some(l) = &args.location {
        b = b.location(l.clone());
    }
    b.build(&poster.public().signing, &user.encryption, &mut OsRng)
}

fn save_posted(
    ctx: &Ctx<'_>,
    user: &Address,
    outcome: Option<Outcome>,
    plain: &AttributePlaintext,
    location: Option<&str>,
) -> Result<(), CliError> {
    let Some(store) = ctx.cli.store.as_ref().map(AttributeStore::new) else {
        return Ok(());
    };
    match outcome {
        Some(Outcome::AttributeIndex(index)) => {
            let path = store.put(user, index, plain, location)?;
            ctx.log.event("store.saved", &[("account", user), ("index", &index), ("path", &path.display())]);
        }
        _ => ctx.log.event("store.skipped", &[("reason", &"index unknown until sealed")]),
    }
    Ok(())
}

fn log_outcome(log: &Logger, outcome: Option<Outcome>) {
    if let Some(Outcome::AttributeIndex(i)) = outcome {
        log.event("attribute.index", &[("index", &i)]);
    }
}

/// Parses arguments and runs one command.
pub fn run(cli: &Cli, log: &Logger) -> Result<(), CliError> {
    let profile = match &cli.profile {
        Some(p) if p.exists() => Some((p.clone(), Profile::load(p)?)),
        Some(p) if !matches!(cli.command, Command::Profile(_)) => {
            return Err(CliError::Io(format!("{}: profile not found", p.display())))
        }
        _ => None,
    };
    let mut ctx = Ctx { cli, log, profile };
    match &cli.command {
        Command::Keygen { out, seed } => {
            let keys = match seed {
                Some(s) => KeyPair::from_seed(&hex_arg("seed", s)?).map_err(|e| CliError::Parse(e.to_string()))?,
                None => KeyPair::generate(&mut OsRng),
            };
            files::write_keys(out, &keys)?;
            log.event("keys.created", &[("address", &keys.address()), ("path", &out.display())]);
        }
        Command::Address { key } => {
            let path = key.clone().map_or_else(|| ctx.keys_path(), Ok)?;
            println!("{}", files::read_public(&path)?.address());
        }
        Command::Init { force } => {
            let path = ctx.chain_path()?;
            if path.exists() && !force {
                return Err(CliError::Io(format!("{}: already exists (use --force)", path.display())));
            }
            let owner = files::read_public(&ctx.keys_path()?)?;
            let chain = Chain::new(owner);
            files::save_chain(&path, &chain)?;
            log.event(
                "chain.created",
                &[("owner", &owner.address()), ("genesis", &chain.blocks()[0].block_hash), ("path", &path.display())],
            );
        }
        Command::Profile(ProfileCmd::Create { role, out }) => {
            let profile = Profile { role: *role, keys: ctx.keys_path()?, chain: ctx.chain_path()?, next_nonce: 0 };
            profile.save(out)?;
            log.event("profile.created", &[("path", &out.display())]);
        }
        Command::Owner(cmd) => {
            ctx.require_role(&[Role::Owner])?;
            let call = match cmd {
                OwnerCmd::AddManager { manager, kind, descriptors } => Call::AddManager {
                    public_key: files::read_public(manager)?.signing,
                    kind: match kind {
                        KindArg::Account => ManagerKind::Account,
                        KindArg::Attribute => ManagerKind::Attribute,
                    },
                    descriptors: descriptors.clone(),
                },
                OwnerCmd::DeleteManager { manager } => {
                    Call::DeleteManager { manager: files::resolve_address(manager)? }
                }
            };
            ctx.transact(call)?;
        }
        Command::Manager(cmd) => run_manager(&mut ctx, cmd)?,
        Command::User(cmd) => run_user(&mut ctx, cmd)?,
        Command::Chain(cmd) => run_chain(&ctx, cmd)?,
        Command::View(cmd) => run_view(&ctx, cmd)?,
        Command::Costs { function, chain_summary } => run_costs(&ctx, function.as_deref(), *chain_summary)?,
        Command::Rp(RpCmd::Serve { listen, required, max_sessions }) => {
            let keys = ctx.keys()?;
            let replica = replicate(&ctx.chain()?).map_err(|e| CliError::Parse(e.to_string()))?;
            let listener = TcpListener::bind(listen).map_err(|e| CliError::Io(format!("{listen}: {e}")))?;
            let config = RpConfig { keys, replica: Arc::new(replica), required_descriptors: required.clone() };
            let served =
                net::serve(listener, config, log.clone(), *max_sessions).map_err(|e| CliError::Io(e.to_string()))?;
            log.event("rp.stopped", &[("sessions", &served)]);
        }
        Command::Scenario(ScenarioCmd::Run { name: ScenarioName::Corellia, variant }) => {
            let report = scenario::run_corellia(*variant, log);
            if let Some(f) = report.failure {
                return Err(f.error);
            }
        }
    }
    Ok(())
}

fn run_manager(ctx: &mut Ctx<'_>, cmd: &ManagerCmd) -> Result<(), CliError> {
    match cmd {
        ManagerCmd::AddUser { user, identity } => {
            ctx.require_role(&[Role::AccountManager])?;
            let keys = ctx.keys()?;
            let user_keys = files::read_public(user)?;
            let mut fields = Vec::new();
            let mut plains = Vec::new();
            for spec in identity {
                let (descriptor, data) = spec
                    .split_once('=')
                    .ok_or_else(|| CliError::Parse(format!("--identity expects descriptor=data, got {spec}")))?;
                let args = AttributeArgs {
                    descriptor: descriptor.into(),
                    data: data.into(),
                    embed: true,
                    location: None,
                    identity: true,
                };
                let (field, plain) = build_attribute(&args, &keys, &user_keys);
                fields.push(field);
                plains.push(plain);
            }
            let outcome = ctx.transact(Call::AddUserAccount { keys: user_keys, identity_attributes: fields })?;
            if outcome.is_some() {
                if let Some(store) = ctx.cli.store.as_ref().map(AttributeStore::new) {
                    for (i, plain) in plains.iter().enumerate() {
                        store.put(&user_keys.address(), i as u64, plain, None)?;
                    }
                }
            }
            ctx.log.event("user.created", &[("address", &user_keys.address())]);
        }
        ManagerCmd::DeleteUser { user } => {
            ctx.require_role(&[Role::AccountManager])?;
            ctx.transact(Call::DeleteUserAccount { user: files::resolve_address(user)? })?;
        }
        ManagerCmd::AddAttribute { user, attribute } => {
            ctx.require_role(&[Role::AccountManager, Role::AttributeManager])?;
            let user = files::resolve_address(user)?;
            let user_keys = user_keys_on_chain(&ctx.chain()?, &user)?;
            let (field, plain) = build_attribute(attribute, &ctx.keys()?, &user_keys);
            let outcome = ctx.transact(Call::AddAttribute { user, attribute: field })?;
            log_outcome(ctx.log, outcome);
            save_posted(ctx, &user, outcome, &plain, attribute.location.as_deref())?;
        }
        ManagerCmd::DeleteAttribute { user, index } => {
            ctx.require_role(&[Role::AccountManager, Role::AttributeManager])?;
            ctx.transact(Call::DeleteAttribute { user: files::resolve_address(user)?, index: *index })?;
        }
    }
    Ok(())
}

fn run_user(ctx: &mut Ctx<'_>, cmd: &UserCmd) -> Result<(), CliError> {
    if !matches!(cmd, UserCmd::Connect { .. } | UserCmd::Decrypt { .. }) {
        ctx.require_role(&[Role::User])?;
    }
    match cmd {
        UserCmd::Permit { manager } => {
            ctx.transact(Call::PermitAttributeManager { manager: files::resolve_address(manager)? })?;
        }
        UserCmd::Deny { manager } => {
            ctx.transact(Call::DenyAttributeManager { manager: files::resolve_address(manager)? })?;
        }
        UserCmd::AddAttribute { attribute } => {
            let keys = ctx.keys()?;
            let (field, plain) = build_attribute(attribute, &keys, keys.public());
            let outcome = ctx.transact(Call::AddAttribute { user: keys.address(), attribute: field })?;
            log_outcome(ctx.log, outcome);
            save_posted(ctx, &keys.address(), outcome, &plain, attribute.location.as_deref())?;
        }
        UserCmd::DeleteAttribute { index } => {
            let user = ctx.keys()?.address();
            ctx.transact(Call::DeleteAttribute { user, index: *index })?;
        }
        UserCmd::DeleteAccount => {
            let user = ctx.keys()?.address();
            ctx.transact(Call::DeleteUserAccount { user })?;
        }
        UserCmd::Connect { rp, rp_key, indices, account } => {
            let keys = ctx.keys()?;
            let account = account.as_deref().map(files::resolve_address).transpose()?.unwrap_or(keys.address());
            let store = ctx.store()?;
            let indices = if indices.is_empty() { store.indices(&account)? } else { indices.clone() };
            let attributes =
                indices.iter().map(|&i| store.get(&account, i).map(|p| (i, p))).collect::<Result<Vec<_>, _>>()?;
            let rp_keys = files::read_public(rp_key)?;
            let mut transport = TcpTransport::connect(rp.as_str()).map_err(|e| CliError::Io(format!("{rp}: {e}")))?;
            ctx.log.event("user.connected", &[("rp", rp)]);
            let results =
                net::connect_and_present(&mut transport, &rp_keys.encryption, &keys, account, &attributes, ctx.log)?;
            let failed: Vec<String> =
                results.iter().filter_map(|r| r.outcome.err().map(|e| format!("{}:{}", r.index, e.name()))).collect();
            if !failed.is_empty() {
                return Err(CliError::Protocol(format!("not verified: {}", failed.join(", "))));
            }
        }
        UserCmd::Decrypt { index } => {
            let keys = ctx.keys()?;
            let chain = ctx.chain()?;
            let field = chain
                .state()
                .view_attribute(&keys.address(), *index)
                .map_err(|e| CliError::Rejected(e.code().into()))?;
            let opened = open_attribute(field, &keys).map_err(|e| CliError::Protocol(e.to_string()))?;
            let descriptor = String::from_utf8_lossy(&opened.descriptor).into_owned();
            match &opened.data {
                Some((data, nonce)) => ctx.log.event(
                    "attribute.decrypted",
                    &[
                        ("index", index),
                        ("descriptor", &descriptor),
                        ("data", &String::from_utf8_lossy(data)),
                        ("nonce", &hex::encode(nonce)),
                    ],
                ),
                None => ctx.log.event(
                    "attribute.decrypted",
                    &[("index", index), ("descriptor", &descriptor), ("data", &"<not embedded>")],
                ),
            }
            if let Some(location) = &field.location {
                ctx.log.event("attribute.location", &[("index", index), ("location", location)]);
            }
            let location = field.location.clone();
            if let (Some(plain), Some(store)) = (opened.into_plaintext(), ctx.cli.store.as_ref()) {
                let path = AttributeStore::new(store).put(&keys.address(), *index, &plain, location.as_deref())?;
                ctx.log
                    .event("store.saved", &[("account", &keys.address()), ("index", index), ("path", &path.display())]);
            }
        }
    }
    Ok(())
}

fn run_chain(ctx: &Ctx<'_>, cmd: &ChainCmd) -> Result<(), CliError> {
    let path = ctx.chain_path()?;
    let mut chain = files::load_chain(&path)?;
    match cmd {
        ChainCmd::Show => {
            ctx.log.event(
                "chain.summary",
                &[
                    ("owner", &chain.owner().address()),
                    ("height", &chain.height()),
                    ("pending", &chain.pending().len()),
                ],
            );
            for b in chain.blocks() {
                ctx.log.event(
                    "chain.block",
                    &[
                        ("height", &b.height),
                        ("hash", &b.block_hash),
                        ("previous", &b.previous_hash),
                        ("transactions", &b.transactions.len()),
                    ],
                );
            }
            for r in chain.receipts() {
                let status = match &r.result {
                    Ok(_) => "ok",
                    Err(e) => e.code(),
                };
                ctx.log.event(
                    "chain.receipt",
                    &[
                        ("height", &r.height),
                        ("index", &r.index),
                        ("sender", &r.sender),
                        ("function", &r.function.name()),
                        ("gas", &r.gas),
                        ("status", &status),
                    ],
                );
            }
        }
        ChainCmd::Seal => {
            let count = chain.pending().len();
            let block = chain.seal_block();
            ctx.log.event(
                "chain.sealed",
                &[("height", &block.height), ("hash", &block.block_hash), ("transactions", &count)],
            );
            files::save_chain(&path, &chain)?;
        }
        ChainCmd::Verify => {
            chain.verify().map_err(|e| CliError::Parse(e.to_string()))?;
            let state = replicate(&chain).map_err(|e| CliError::Parse(e.to_string()))?;
            let digest = idms_core::crypto::hash_bytes(&state.canonical_bytes());
            ctx.log.event("chain.valid", &[("height", &chain.height()), ("state", &digest)]);
        }
    }
    Ok(())
}

fn run_view(ctx: &Ctx<'_>, cmd: &ViewCmd) -> Result<(), CliError> {
    let chain = ctx.chain()?;
    let state = chain.state();
    let contract_err = |e: idms_core::contract::ContractError| CliError::Rejected(e.code().into());
    match cmd {
        ViewCmd::PublicKey { user } => {
            let user = files::resolve_address(user)?;
            let (keys, valid) = state.view_public_key(&user).map_err(contract_err)?;
            ctx.log.event(
                "view.public-key",
                &[("user", &user), ("signing", &keys.signing), ("encryption", &keys.encryption), ("valid", &valid)],
            );
        }
        ViewCmd::Attribute { user, index } => {
            let user = files::resolve_address(user)?;
            let f = state.view_attribute(&user, *index).map_err(contract_err)?;
            ctx.log.event(
                "view.attribute",
                &[
                    ("user", &user),
                    ("index", index),
                    ("manager", &f.manager_public_key.address()),
                    ("identity", &f.identity),
                    ("descriptor_bytes", &f.descriptor.len()),
                    ("data_bytes", &f.data.as_ref().map_or(0, Vec::len)),
                    ("location", &f.location.as_deref().unwrap_or("")),
                    ("hash", &f.hash),
                ],
            );
        }
        ViewCmd::CompareHash { user, index, hash, descriptor, data, nonce } => {
            let user = files::resolve_address(user)?;
            let candidate = match (hash, descriptor, data, nonce) {
                (Some(h), ..) => {
                    DigestValue::from_slice(&hex_arg("hash", h)?).map_err(|e| CliError::Parse(e.to_string()))?
                }
                (None, Some(desc), Some(data), Some(nonce)) => {
                    let nonce = hex_arg("nonce", nonce)?;
                    if nonce.len() != ATTRIBUTE_NONCE_LEN {
                        return Err(CliError::Parse(format!("--nonce must be {ATTRIBUTE_NONCE_LEN} bytes")));
                    }
                    attribute_hash(&hex_arg("data", data)?, &nonce, &hex_arg("descriptor", desc)?)
                }
                _ => return Err(CliError::Parse("pass --hash or --descriptor/--data/--nonce".into())),
            };
            let matched = state.compare_hash(&user, *index, &candidate).map_err(contract_err)?;
            ctx.log.event("view.compare-hash", &[("user", &user), ("index", index), ("match", &matched)]);
        }
    }
    Ok(())
}

fn run_costs(ctx: &Ctx<'_>, function: Option<&str>, chain_summary: bool) -> Result<(), CliError> {
    let prices = ctx.prices()?;
    if chain_summary {
        let chain = ctx.chain()?;
        let s = chain_cost_summary(&chain, chain.schedule(), &prices);
        for (sender, c) in &s.per_sender {
            ctx.log.event(
                "costs.sender",
                &[("sender", sender), ("gas", &c.gas), ("ether", &format_ether(c.ether)), ("usd", &format_usd(c.usd))],
            );
        }
        ctx.log.event(
            "costs.total",
            &[
                ("transactions", &s.transactions),
                ("gas", &s.total.gas),
                ("ether", &format_ether(s.total.ether)),
                ("usd", &format_usd(s.total.usd)),
            ],
        );
        return Ok(());
    }
    let schedule = idms_core::cost::GasSchedule::default_schedule();
    let functions: Vec<Function> = match function {
        Some(name) => vec![Function::from_str(name).map_err(|e| CliError::Parse(e.to_string()))?],
        None => Function::all().collect(),
    };
    for f in functions {
        let r = cost_report(f, &schedule, &prices);
        ctx.log.event(
            "costs.function",
            &[("function", &f.name()), ("gas", &r.gas), ("ether", &format_ether(r.ether)), ("usd", &format_usd(r.usd))],
        );
    }
    Ok(())
}

/// Shared by the binary and the tests: parse, run, map to an exit code.
pub fn main_with<I, T>(args: I, log: &Logger) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match run(&cli, log) {
        Ok(()) => 0,
        Err(e) => {
            log.event("error", &[("code", &e.exit_code()), ("detail", &e)]);
            e.exit_code()
        }
    }
}

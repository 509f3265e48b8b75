//! Simulated append-only ledger hosting the contract.
//!
//! A single sealing authority orders signed transactions into hash-linked
//! blocks. Contract state is never stored: it is a pure fold of the block
//! sequence, so any replica replaying the same chain reaches the same state.
//!
//! Transaction signing payload:
//! `"IDMS-TX-v1" ∥ function:u8 ∥ len:u32 ∥ args ∥ nonce:u64`.
//! Block hash: `SHA-256("IDMS-BLOCK-v1" ∥ height:u64 ∥ previous_hash ∥ body)`
//! where `body` is the owner's public keys for the genesis block and
//! `count:u32 ∥ (len:u32 ∥ tx)*` otherwise.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::codec::{DecodeError, Decoder, Encoder};
use crate::contract::{Call, ContractError, ContractState, Outcome, TxFunction};
use crate::cost::GasSchedule;
use crate::crypto::{hash_bytes, Address, DigestValue, KeyPair, PublicKey, PublicKeys, Signature};

const TX_DOMAIN: &[u8] = b"IDMS-TX-v1";
const BLOCK_DOMAIN: &[u8] = b"IDMS-BLOCK-v1";
const CHAIN_MAGIC: &[u8; 8] = b"IDMSCHN1";
const RECORD_BLOCK: u8 = b'B';
const RECORD_PENDING: u8 = b'T';

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RejectReason {
    #[error("bad signature")]
    BadSignature,
    #[error("sender address does not match the sender public key")]
    AddressMismatch,
    #[error("nonce reuse: {got} is not above {last}")]
    NonceReuse { last: u64, got: u64 },
    #[error("unknown function code 0x{0:02x}")]
    UnknownFunction(u8),
    #[error("malformed arguments: {0}")]
    MalformedArgs(DecodeError),
    #[error("malformed transaction encoding: {0}")]
    MalformedEncoding(DecodeError),
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::BadSignature => "bad-signature",
            RejectReason::AddressMismatch => "address-mismatch",
            RejectReason::NonceReuse { .. } => "nonce-reuse",
            RejectReason::UnknownFunction(_) => "unknown-function",
            RejectReason::MalformedArgs(_) => "malformed-args",
            RejectReason::MalformedEncoding(_) => "malformed-encoding",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub sender: Address,
    pub sender_public_key: PublicKey,
    pub function: TxFunction,
    pub args: Vec<u8>,
    pub nonce: u64,
    pub signature: Signature,
}

impl Transaction {
    pub fn signing_payload(function: TxFunction, args: &[u8], nonce: u64) -> Vec<u8> {
        let mut e = Encoder::new();
        e.raw(TX_DOMAIN).u8(function.code()).bytes(args).u64(nonce);
        e.finish()
    }

    pub fn new_signed(keys: &KeyPair, call: &Call, nonce: u64) -> Self {
        let function = call.function();
        let args = call.encode_args();
        let signature = keys.sign(&Self::signing_payload(function, &args, nonce));
        Transaction {
            sender: keys.address(),
            sender_public_key: keys.public().signing,
            function,
            args,
            nonce,
            signature,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.raw(&self.sender.0)
            .raw(&self.sender_public_key.0)
            .u8(self.function.code())
            .bytes(&self.args)
            .u64(self.nonce)
            .raw(&self.signature.0);
        e.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, RejectReason> {
        let malformed = RejectReason::MalformedEncoding;
        let mut d = Decoder::new(bytes);
        let sender = d.address().map_err(malformed)?;
        let sender_public_key = d.public_key().map_err(malformed)?;
        let code = d.u8().map_err(malformed)?;
        let function = TxFunction::from_code(code).map_err(|_| RejectReason::UnknownFunction(code))?;
        let args = d.bytes().map_err(malformed)?.to_vec();
        let nonce = d.u64().map_err(malformed)?;
        let signature = d.signature().map_err(malformed)?;
        d.finish().map_err(malformed)?;
        Ok(Transaction { sender, sender_public_key, function, args, nonce, signature })
    }

    pub fn id(&self) -> DigestValue {
        hash_bytes(&self.encode())
    }

    pub fn call(&self) -> Result<Call, DecodeError> {
        Call::decode_args(self.function, &self.args)
    }

    /// Stateless checks: signature, address binding, argument decoding.
    pub fn check(&self) -> Result<Call, RejectReason> {
        if Address::of(&self.sender_public_key) != self.sender {
            return Err(RejectReason::AddressMismatch);
        }
        let payload = Self::signing_payload(self.function, &self.args, self.nonce);
        if !crate::crypto::verify(&self.sender_public_key, &payload, &self.signature) {
            return Err(RejectReason::BadSignature);
        }
        self.call().map_err(RejectReason::MalformedArgs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub previous_hash: DigestValue,
    pub transactions: Vec<Transaction>,
    pub block_hash: DigestValue,
}

impl Block {
    pub fn genesis(owner: &PublicKeys) -> Self {
        let mut b = Block {
            height: 0,
            previous_hash: DigestValue::ZERO,
            transactions: Vec::new(),
            block_hash: DigestValue::ZERO,
        };
        b.block_hash = b.compute_hash(owner);
        b
    }

    fn body(&self, owner: &PublicKeys) -> Vec<u8> {
        let mut e = Encoder::new();
        if self.height == 0 {
            e.public_keys(owner);
        } else {
            e.count(self.transactions.len());
            for tx in &self.transactions {
                e.bytes(&tx.encode());
            }
        }
        e.finish()
    }

    pub fn compute_hash(&self, owner: &PublicKeys) -> DigestValue {
        let mut e = Encoder::new();
        e.raw(BLOCK_DOMAIN).u64(self.height).raw(&self.previous_hash.0).raw(&self.body(owner));
        hash_bytes(&e.finish())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.u64(self.height).raw(&self.previous_hash.0).count(self.transactions.len());
        for tx in &self.transactions {
            e.bytes(&tx.encode());
        }
        e.raw(&self.block_hash.0);
        e.finish()
    }

    /// Decodes the block layout. Transactions with unknown function codes or a
    /// broken encoding surface as a [`RejectReason`].
    pub fn decode(bytes: &[u8]) -> Result<Self, RejectReason> {
        let malformed = RejectReason::MalformedEncoding;
        let mut d = Decoder::new(bytes);
        let height = d.u64().map_err(malformed)?;
        let previous_hash = d.digest().map_err(malformed)?;
        let n = d.count().map_err(malformed)?;
        let mut transactions = Vec::with_capacity(n);
        for _ in 0..n {
            transactions.push(Transaction::decode(d.bytes().map_err(malformed)?)?);
        }
        let block_hash = d.digest().map_err(malformed)?;
        d.finish().map_err(malformed)?;
        Ok(Block { height, previous_hash, transactions, block_hash })
    }
}

/// Per-transaction execution record. Failed applications are recorded and
/// charged like successful ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxReceipt {
    pub height: u64,
    pub index: usize,
    pub tx_id: DigestValue,
    pub sender: Address,
    pub function: TxFunction,
    pub gas: u64,
    pub result: Result<Outcome, ContractError>,
}

impl TxReceipt {
    pub fn succeeded(&self) -> bool {
        self.result.is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntegrityFault {
    BadGenesis,
    HeightMismatch { expected: u64, found: u64 },
    BrokenLink,
    BlockHashMismatch,
    Transaction { index: usize, reason: RejectReason },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("chain integrity failure at block {block}: {fault:?}")]
pub struct IntegrityError {
    pub block: u64,
    pub fault: IntegrityFault,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainFileError {
    #[error("not a chain file")]
    BadMagic,
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("bad record: {0}")]
    Record(RejectReason),
    #[error(transparent)]
    Integrity(#[from] IntegrityError),
}

/// The sealed block sequence plus the pending pool, with the state and
/// receipts derived from the sealed part.
#[derive(Debug, Clone)]
pub struct Chain {
    owner: PublicKeys,
    schedule: GasSchedule,
    blocks: Vec<Block>,
    pending: Vec<Transaction>,
    state: ContractState,
    receipts: Vec<TxReceipt>,
    last_nonce: BTreeMap<Address, u64>,
}

impl Chain {
    pub fn new(owner: PublicKeys) -> Self {
        Chain {
            owner,
            schedule: GasSchedule::default_schedule(),
            blocks: alloc::vec![Block::genesis(&owner)],
            pending: Vec::new(),
            state: ContractState::new(owner),
            receipts: Vec::new(),
            last_nonce: BTreeMap::new(),
        }
    }

    pub fn owner(&self) -> &PublicKeys {
        &self.owner
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.pending
    }

    pub fn receipts(&self) -> &[TxReceipt] {
        &self.receipts
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    /// State as of the last sealed block.
    pub fn state(&self) -> &ContractState {
        &self.state
    }

    pub fn schedule(&self) -> &GasSchedule {
        &self.schedule
    }

    /// Next nonce a sender should use, counting pending transactions.
    pub fn next_nonce(&self, sender: &Address) -> u64 {
        self.last_nonce.get(sender).map_or(0, |n| n + 1)
    }

    /// Validates and queues a transaction. Rejected transactions leave no trace.
    pub fn submit_transaction(&mut self, tx: Transaction) -> Result<DigestValue, RejectReason> {
        tx.check()?;
        if let Some(&last) = self.last_nonce.get(&tx.sender) {
            if tx.nonce <= last {
                return Err(RejectReason::NonceReuse { last, got: tx.nonce });
            }
        }
        self.last_nonce.insert(tx.sender, tx.nonce);
        let id = tx.id();
        self.pending.push(tx);
        Ok(id)
    }

    /// Submission path for raw bytes, e.g. from a file or the network.
    pub fn submit_encoded(&mut self, bytes: &[u8]) -> Result<DigestValue, RejectReason> {
        self.submit_transaction(Transaction::decode(bytes)?)
    }

    /// Moves all pending transactions into a new block and applies them.
    pub fn seal_block(&mut self) -> &Block {
        let height = self.blocks.len() as u64;
        let previous_hash = self.blocks.last().expect("genesis always present").block_hash;
        let transactions = core::mem::take(&mut self.pending);
        let mut block = Block { height, previous_hash, transactions, block_hash: DigestValue::ZERO };
        block.block_hash = block.compute_hash(&self.owner);
        apply_block(&mut self.state, &block, &self.schedule, &mut self.receipts);
        self.blocks.push(block);
        self.blocks.last().expect("just pushed")
    }

    /// Checks hash links, block hashes, signatures and per-sender nonce order.
    pub fn verify(&self) -> Result<(), IntegrityError> {
        verify_blocks(&self.owner, &self.blocks)
    }

    pub fn is_valid(&self) -> bool {
        self.verify().is_ok()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.raw(CHAIN_MAGIC).public_keys(&self.owner);
        for b in &self.blocks {
            let enc = b.encode();
            e.u32(enc.len() as u32 + 1).u8(RECORD_BLOCK).raw(&enc);
        }
        for tx in &self.pending {
            let enc = tx.encode();
            e.u32(enc.len() as u32 + 1).u8(RECORD_PENDING).raw(&enc);
        }
        e.finish()
    }

    /// Parses a chain file, verifies it and rebuilds state by replay.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ChainFileError> {
        let mut d = Decoder::new(bytes);
        if d.take(CHAIN_MAGIC.len()).map_err(|_| ChainFileError::BadMagic)? != CHAIN_MAGIC {
            return Err(ChainFileError::BadMagic);
        }
        let owner = d.public_keys()?;
        let mut blocks = Vec::new();
        let mut pending = Vec::new();
        while d.remaining() > 0 {
            let len = d.u32()? as usize;
            let record = d.take(len)?;
            let (&tag, body) = record.split_first().ok_or(DecodeError::Truncated)?;
            match tag {
                RECORD_BLOCK => blocks.push(Block::decode(body).map_err(ChainFileError::Record)?),
                RECORD_PENDING => pending.push(Transaction::decode(body).map_err(ChainFileError::Record)?),
                t => return Err(DecodeError::InvalidTag(t).into()),
            }
        }
        let mut chain = Chain::from_blocks(owner, blocks)?;
        for (i, tx) in pending.into_iter().enumerate() {
            chain.submit_transaction(tx).map_err(|reason| IntegrityError {
                block: chain.height() + 1,
                fault: IntegrityFault::Transaction { index: i, reason },
            })?;
        }
        Ok(chain)
    }

    /// Rebuilds a chain (state, receipts, nonces) from verified blocks.
    pub fn from_blocks(owner: PublicKeys, blocks: Vec<Block>) -> Result<Self, IntegrityError> {
        verify_blocks(&owner, &blocks)?;
        let schedule = GasSchedule::default_schedule();
        let mut state = ContractState::new(owner);
        let mut receipts = Vec::new();
        let mut last_nonce = BTreeMap::new();
        for b in &blocks {
            apply_block(&mut state, b, &schedule, &mut receipts);
            for tx in &b.transactions {
                last_nonce.insert(tx.sender, tx.nonce);
            }
        }
        Ok(Chain { owner, schedule, blocks, pending: Vec::new(), state, receipts, last_nonce })
    }
}

fn apply_block(state: &mut ContractState, block: &Block, schedule: &GasSchedule, receipts: &mut Vec<TxReceipt>) {
    for (index, tx) in block.transactions.iter().enumerate() {
        let result = match tx.call() {
            Ok(call) => state.apply(&tx.sender_public_key, &call, block.height),
            // Unreachable for verified blocks; submit rejects undecodable args.
            Err(_) => Err(ContractError::NotAuthorized),
        };
        receipts.push(TxReceipt {
            height: block.height,
            index,
            tx_id: tx.id(),
            sender: tx.sender,
            function: tx.function,
            gas: schedule.transaction_gas(tx.function),
            result,
        });
    }
}

fn verify_blocks(owner: &PublicKeys, blocks: &[Block]) -> Result<(), IntegrityError> {
    let genesis = blocks.first().ok_or(IntegrityError { block: 0, fault: IntegrityFault::BadGenesis })?;
    if genesis.height != 0
        || genesis.previous_hash != DigestValue::ZERO
        || !genesis.transactions.is_empty()
        || genesis.block_hash != genesis.compute_hash(owner)
    {
        return Err(IntegrityError { block: 0, fault: IntegrityFault::BadGenesis });
    }
    let mut last_nonce: BTreeMap<Address, u64> = BTreeMap::new();
    for (i, pair) in blocks.windows(2).enumerate() {
        let (prev, block) = (&pair[0], &pair[1]);
        let expected = i as u64 + 1;
        let fail = |fault| IntegrityError { block: expected, fault };
        if block.height != expected {
            return Err(fail(IntegrityFault::HeightMismatch { expected, found: block.height }));
        }
        if block.previous_hash != prev.block_hash {
            return Err(fail(IntegrityFault::BrokenLink));
        }
        if block.block_hash != block.compute_hash(owner) {
            return Err(fail(IntegrityFault::BlockHashMismatch));
        }
        for (index, tx) in block.transactions.iter().enumerate() {
            let tx_fault = |reason| fail(IntegrityFault::Transaction { index, reason });
            tx.check().map_err(tx_fault)?;
            if let Some(&last) = last_nonce.get(&tx.sender) {
                if tx.nonce <= last {
                    return Err(tx_fault(RejectReason::NonceReuse { last, got: tx.nonce }));
                }
            }
            last_nonce.insert(tx.sender, tx.nonce);
        }
    }
    Ok(())
}

/// Replays a chain from genesis into a fresh state. Pure function of the blocks.
pub fn replicate(chain: &Chain) -> Result<ContractState, IntegrityError> {
    replay(chain.owner(), chain.blocks())
}

pub fn replay(owner: &PublicKeys, blocks: &[Block]) -> Result<ContractState, IntegrityError> {
    verify_blocks(owner, blocks)?;
    let schedule = GasSchedule::default_schedule();
    let mut state = ContractState::new(*owner);
    let mut receipts = Vec::new();
    for b in blocks {
        apply_block(&mut state, b, &schedule, &mut receipts);
    }
    Ok(state)
}

pub fn verify_chain(chain: &Chain) -> bool {
    chain.is_valid()
}

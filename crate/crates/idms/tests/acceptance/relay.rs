//! A relaying adversary. It runs its own honest-looking RP endpoint toward
//! the user and an honest-looking client toward a second RP, and builds
//! frames by hand from the public frame layout.

use idms_core::contract::ContractState;
use idms_core::crypto::{sym_decrypt_with_aad, sym_encrypt_with_aad, Address, KeyPair, SymmetricKey};
use idms_core::protocol::{AttributePackage, Frame, MessageType, RpSession, UserSession};
use rand_chacha::ChaCha20Rng;
use rand_core::RngCore;

/// One end of an outer channel whose key the adversary knows.
pub struct RawChannel {
    pub key: SymmetricKey,
    pub send_dir: u8,
    pub send_seq: u64,
    pub recv_seq: u64,
}

fn aad(dir: u8, t: MessageType, seq: u64) -> Vec<u8> {
    let mut a = b"IDMS-OUTER-v1".to_vec();
    a.push(dir);
    a.push(t as u8);
    a.extend_from_slice(&seq.to_be_bytes());
    a
}

impl RawChannel {
    /// As the RP: sends with direction 1 from 0, receives from 1 (the key
    /// transport frame was 0).
    pub fn as_rp(key: SymmetricKey) -> Self {
        RawChannel { key, send_dir: 1, send_seq: 0, recv_seq: 1 }
    }

    pub fn as_user(key: SymmetricKey) -> Self {
        RawChannel { key, send_dir: 0, send_seq: 1, recv_seq: 0 }
    }

    pub fn seal(&mut self, t: MessageType, payload: &[u8], rng: &mut ChaCha20Rng) -> Vec<u8> {
        let body = sym_encrypt_with_aad(&self.key, payload, &aad(self.send_dir, t, self.send_seq), rng);
        let f = Frame { msg_type: t, sequence: self.send_seq, body };
        self.send_seq += 1;
        f.encode()
    }

    pub fn open(&mut self, bytes: &[u8]) -> Option<(MessageType, Vec<u8>)> {
        let f = Frame::decode(bytes).ok()?;
        if f.sequence != self.recv_seq {
            return None;
        }
        let p = sym_decrypt_with_aad(&self.key, &f.body, &aad(1 - self.send_dir, f.msg_type, f.sequence)).ok()?;
        self.recv_seq += 1;
        Some((f.msg_type, p))
    }
}

pub struct Outcome {
    /// The relay got RP2 to authenticate the session as the victim.
    pub authenticated: bool,
    /// Inner frames RP2 accepted as attribute packages.
    pub accepted_inner: usize,
    pub attempts: usize,
}

/// Runs one relay attempt. `victim` connects to the adversary (`rp1`), which
/// simultaneously claims the victim's account at `rp2`.
pub fn relay_attempt(
    victim: &KeyPair,
    account: Address,
    package: &AttributePackage,
    rp1: &KeyPair,
    rp2: &KeyPair,
    replica: &ContractState,
    rng: &mut ChaCha20Rng,
) -> Outcome {
    let mut out = Outcome { authenticated: false, accepted_inner: 0, attempts: 0 };

    let (mut user, hello) = UserSession::open(&rp1.public().encryption, rng);
    let rp1_end = RpSession::accept(&hello, rp1).expect("adversary decrypts its own key transport");
    let mut to_user = RawChannel::as_rp(rp1_end.session().outer_key().clone());

    let (adv, hello2) = UserSession::open(&rp2.public().encryption, rng);
    let mut rp2_end = RpSession::accept(&hello2, rp2).expect("honest rp accepts");
    let mut to_rp2 = RawChannel::as_user(adv.session().outer_key().clone());

    let claim = user.claim(account, rng).expect("claim");
    let (_, claimed) = to_user.open(&claim).expect("adversary reads claim");
    assert_eq!(claimed, account.0);
    let forged_claim = to_rp2.seal(MessageType::AccountClaim, &account.0, rng);
    let challenge = rp2_end.handle_claim(&forged_claim, replica, rng, 0).expect("rp2 challenges");
    let (_, encrypted_challenge) = to_rp2.open(&challenge).expect("adversary holds rp2 outer key");

    let relayed = to_user.seal(MessageType::EncryptedChallenge, &encrypted_challenge, rng);
    let Ok(response) = user.answer_challenge(&relayed, victim, rng) else { return out };
    let (_, value) = to_user.open(&response).expect("adversary reads response");
    let forwarded = to_rp2.seal(MessageType::ChallengeResponse, &value, rng);
    let Ok(inner) = rp2_end.handle_response(&forwarded, rng, 0) else { return out };
    out.authenticated = true;

    let (_, wrapped_inner) = to_rp2.open(&inner).expect("outer layer");
    let relayed_inner = to_user.seal(MessageType::InnerKeyTransport, &wrapped_inner, rng);
    user.accept_inner_key(&relayed_inner, victim).expect("user unwraps the relayed inner key");

    // Every forgery is tried against a fresh copy of rp2's session.
    let try_frame = |frame: &[u8], out: &mut Outcome| {
        let mut rp2_copy = rp2_end.clone();
        out.attempts += 1;
        if let Ok(Some(_)) = rp2_copy.receive_package(frame) {
            out.accepted_inner += 1;
        }
    };

    let user_frame = user.send_attribute(package, rng).expect("victim sends");
    try_frame(&user_frame, &mut out);

    let (t, inner_ct) = to_user.open(&user_frame).expect("outer layer of victim frame");
    let mut rp2_send = RawChannel { key: to_rp2.key.clone(), send_dir: 0, send_seq: to_rp2.send_seq, recv_seq: 0 };
    let rewrapped = rp2_send.seal(t, &inner_ct, rng);
    try_frame(&rewrapped, &mut out);

    for len in [0usize, 16, 48, inner_ct.len()] {
        let mut junk = vec![0u8; len];
        rng.fill_bytes(&mut junk);
        let mut s = RawChannel { key: to_rp2.key.clone(), send_dir: 0, send_seq: to_rp2.send_seq, recv_seq: 0 };
        try_frame(&s.seal(MessageType::AttributePackage, &junk, rng), &mut out);
    }

    let mut flipped = inner_ct.clone();
    let bit = (rng.next_u32() as usize) % (flipped.len() * 8);
    flipped[bit / 8] ^= 1 << (bit % 8);
    let mut s = RawChannel { key: to_rp2.key.clone(), send_dir: 0, send_seq: to_rp2.send_seq, recv_seq: 0 };
    try_frame(&s.seal(MessageType::AttributePackage, &flipped, rng), &mut out);
    out
}

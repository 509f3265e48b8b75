//! Reference values computed without the crates under test.

/// Expected gas, Ether text and printed USD text per function.
pub const COST_TABLE: [(&str, u64, &str, &str); 11] = [
    ("add_manager", 66632, "2.0E-4", "$0.03"),
    ("delete_manager", 17677, "5.3E-5", "$0.01"),
    ("add_user_account", 94562, "2.8E-4", "$0.05"),
    ("delete_user_account", 65020, "2.0E-4", "$0.03"),
    ("add_attribute", 182045, "5.5E-4", "$0.09"),
    ("delete_attribute", 33017, "9.9E-5", "$0.02"),
    ("permit_attribute_manager", 45151, "1.4E-4", "$0.02"),
    ("deny_attribute_manager", 15283, "4.6E-5", "$0.01"),
    ("compare_hash", 0, "0", "$0"),
    ("view_attribute", 0, "0", "$0"),
    ("view_public_key", 0, "0", "$0"),
];

pub fn table_gas(function: &str) -> u64 {
    COST_TABLE.iter().find(|r| r.0 == function).map(|r| r.1).expect("function in table")
}

fn primes(n: usize) -> Vec<u64> {
    let mut out = Vec::new();
    let mut c = 2u64;
    while out.len() < n {
        if (2..c).take_while(|d| d * d <= c).all(|d| !c.is_multiple_of(d)) {
            out.push(c);
        }
        c += 1;
    }
    out
}

fn frac32(x: f64) -> u32 {
    ((x - x.floor()) * 4294967296.0) as u32
}

/// Straight transcription of the SHA-256 definition, with the round and
/// initial constants derived from prime roots at run time.
pub fn sha256(msg: &[u8]) -> [u8; 32] {
    let p = primes(64);
    let k: Vec<u32> = p.iter().map(|&q| frac32((q as f64).cbrt())).collect();
    let mut h: Vec<u32> = p[..8].iter().map(|&q| frac32((q as f64).sqrt())).collect();

    let mut data = msg.to_vec();
    data.push(0x80);
    while data.len() % 64 != 56 {
        data.push(0);
    }
    data.extend_from_slice(&((msg.len() as u64) * 8).to_be_bytes());

    for block in data.chunks(64) {
        let mut w = [0u32; 64];
        for i in 0..16 {
            w[i] = u32::from_be_bytes([block[4 * i], block[4 * i + 1], block[4 * i + 2], block[4 * i + 3]]);
        }
        for i in 16..64 {
            let s0 = w[i - 15].rotate_right(7) ^ w[i - 15].rotate_right(18) ^ (w[i - 15] >> 3);
            let s1 = w[i - 2].rotate_right(17) ^ w[i - 2].rotate_right(19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16].wrapping_add(s0).wrapping_add(w[i - 7]).wrapping_add(s1);
        }
        let (mut a, mut b, mut c, mut d, mut e, mut f, mut g, mut hh) =
            (h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7]);
        for i in 0..64 {
            let s1 = e.rotate_right(6) ^ e.rotate_right(11) ^ e.rotate_right(25);
            let ch = (e & f) ^ (!e & g);
            let t1 = hh.wrapping_add(s1).wrapping_add(ch).wrapping_add(k[i]).wrapping_add(w[i]);
            let s0 = a.rotate_right(2) ^ a.rotate_right(13) ^ a.rotate_right(22);
            let maj = (a & b) ^ (a & c) ^ (b & c);
            let t2 = s0.wrapping_add(maj);
            hh = g;
            g = f;
            f = e;
            e = d.wrapping_add(t1);
            d = c;
            c = b;
            b = a;
            a = t1.wrapping_add(t2);
        }
        for (x, y) in h.iter_mut().zip([a, b, c, d, e, f, g, hh]) {
            *x = x.wrapping_add(y);
        }
    }
    let mut out = [0u8; 32];
    for (i, word) in h.iter().enumerate() {
        out[4 * i..4 * i + 4].copy_from_slice(&word.to_be_bytes());
    }
    out
}

/// Published test vectors for the reference implementation itself.
pub const SHA256_VECTORS: [(&str, usize, &str); 4] = [
    ("", 1, "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"),
    ("abc", 1, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"),
    (
        "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq",
        1,
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1",
    ),
    ("a", 1_000_000, "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0"),
];

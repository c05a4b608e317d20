//! AES-128 (FIPS 197), the HE-unfriendly baseline cipher, plus a CTR mode
//! used to wrap key material.
//!
//! Table-based and not constant time.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AesError {
    #[error("AES-128 needs a 16-byte key, got {0} bytes")]
    BadKeyLength(usize),
}

pub type Block128 = [u8; 16];

const ROUNDS: usize = 10;

const fn xtime(b: u8) -> u8 {
    (b << 1) ^ if b & 0x80 != 0 { 0x1b } else { 0 }
}

const fn gmul(mut a: u8, mut b: u8) -> u8 {
    let mut acc = 0;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        a = xtime(a);
        b >>= 1;
    }
    acc
}

const fn build_sboxes() -> ([u8; 256], [u8; 256]) {
    let mut sbox = [0u8; 256];
    let mut inv = [0u8; 256];
    let mut x = 0usize;
    while x < 256 {
        // x^254 is the field inverse (0 maps to 0).
        let mut y: u8 = 1;
        let mut e = 0;
        while e < 254 {
            y = gmul(y, x as u8);
            e += 1;
        }
        let b = y;
        let s = b ^ b.rotate_left(1) ^ b.rotate_left(2) ^ b.rotate_left(3) ^ b.rotate_left(4) ^ 0x63;
        sbox[x] = s;
        inv[s as usize] = x as u8;
        x += 1;
    }
    (sbox, inv)
}

const SBOXES: ([u8; 256], [u8; 256]) = build_sboxes();
static SBOX: [u8; 256] = SBOXES.0;
static INV_SBOX: [u8; 256] = SBOXES.1;

/// Expanded round keys `w[0..=Nr]`.
#[derive(Clone, PartialEq, Eq)]
pub struct AesKeySchedule {
    round_keys: [Block128; ROUNDS + 1],
}

impl std::fmt::Debug for AesKeySchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("AesKeySchedule(..)")
    }
}

impl AesKeySchedule {
    pub fn rounds(&self) -> usize {
        ROUNDS
    }

    pub fn round_key(&self, i: usize) -> &Block128 {
        &self.round_keys[i]
    }
}

pub fn key_expansion(key: &[u8]) -> Result<AesKeySchedule, AesError> {
    let key: &[u8; 16] = key.try_into().map_err(|_| AesError::BadKeyLength(key.len()))?;
    let mut w = [[0u8; 4]; 4 * (ROUNDS + 1)];
    for (i, word) in key.chunks_exact(4).enumerate() {
        w[i].copy_from_slice(word);
    }
    let mut rcon = 1u8;
    for i in 4..w.len() {
        let mut temp = w[i - 1];
        if i % 4 == 0 {
            temp.rotate_left(1);
            for b in temp.iter_mut() {
                *b = SBOX[*b as usize];
            }
            temp[0] ^= rcon;
            rcon = xtime(rcon);
        }
        for k in 0..4 {
            w[i][k] = w[i - 4][k] ^ temp[k];
        }
    }
    let mut round_keys = [[0u8; 16]; ROUNDS + 1];
    for (r, rk) in round_keys.iter_mut().enumerate() {
        for c in 0..4 {
            rk[4 * c..4 * c + 4].copy_from_slice(&w[4 * r + c]);
        }
    }
    Ok(AesKeySchedule { round_keys })
}

// State byte (row r, column c) lives at index 4c + r.

fn add_round_key(s: &mut Block128, k: &Block128) {
    for (a, b) in s.iter_mut().zip(k) {
        *a ^= b;
    }
}

fn sub_bytes(s: &mut Block128, table: &[u8; 256]) {
    for b in s.iter_mut() {
        *b = table[*b as usize];
    }
}

fn shift_rows(s: &mut Block128) {
    let old = *s;
    for r in 1..4 {
        for c in 0..4 {
            s[4 * c + r] = old[4 * ((c + r) % 4) + r];
        }
    }
}

fn inv_shift_rows(s: &mut Block128) {
    let old = *s;
    for r in 1..4 {
        for c in 0..4 {
            s[4 * ((c + r) % 4) + r] = old[4 * c + r];
        }
    }
}

fn mix_columns_with(s: &mut Block128, m: [u8; 4]) {
    for col in s.chunks_exact_mut(4) {
        let a = [col[0], col[1], col[2], col[3]];
        for r in 0..4 {
            col[r] = gmul(a[0], m[(4 - r) % 4])
                ^ gmul(a[1], m[(5 - r) % 4])
                ^ gmul(a[2], m[(6 - r) % 4])
                ^ gmul(a[3], m[(7 - r) % 4]);
        }
    }
}

fn mix_columns(s: &mut Block128) {
    mix_columns_with(s, [2, 3, 1, 1]);
}

fn inv_mix_columns(s: &mut Block128) {
    mix_columns_with(s, [14, 11, 13, 9]);
}

pub fn cipher(block: &Block128, ks: &AesKeySchedule) -> Block128 {
    let mut s = *block;
    add_round_key(&mut s, &ks.round_keys[0]);
    for round in 1..ROUNDS {
        sub_bytes(&mut s, &SBOX);
        shift_rows(&mut s);
        mix_columns(&mut s);
        add_round_key(&mut s, &ks.round_keys[round]);
    }
    sub_bytes(&mut s, &SBOX);
    shift_rows(&mut s);
    add_round_key(&mut s, &ks.round_keys[ROUNDS]);
    s
}

pub fn inv_cipher(block: &Block128, ks: &AesKeySchedule) -> Block128 {
    let mut s = *block;
    add_round_key(&mut s, &ks.round_keys[ROUNDS]);
    for round in (1..ROUNDS).rev() {
        inv_shift_rows(&mut s);
        sub_bytes(&mut s, &INV_SBOX);
        add_round_key(&mut s, &ks.round_keys[round]);
        inv_mix_columns(&mut s);
    }
    inv_shift_rows(&mut s);
    sub_bytes(&mut s, &INV_SBOX);
    add_round_key(&mut s, &ks.round_keys[0]);
    s
}

/// CTR mode: keystream block j encrypts the IV with its last four bytes
/// replaced by `(iv_counter + j) mod 2^32` big-endian. Self-inverse.
pub fn ctr_wrap(ks: &AesKeySchedule, iv: &Block128, data: &[u8]) -> Vec<u8> {
    let base = u32::from_be_bytes([iv[12], iv[13], iv[14], iv[15]]);
    let mut out = Vec::with_capacity(data.len());
    for (j, chunk) in data.chunks(16).enumerate() {
        let mut ctr = *iv;
        ctr[12..].copy_from_slice(&base.wrapping_add(j as u32).to_be_bytes());
        let pad = cipher(&ctr, ks);
        out.extend(chunk.iter().zip(pad).map(|(d, k)| d ^ k));
    }
    out
}

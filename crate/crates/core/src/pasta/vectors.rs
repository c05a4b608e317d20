//! Plain-text keystream vectors, one case per line:
//!
//! ```text
//! p t r nonce counter key_0 … key_{2t-1} -> ks_0 … ks_{t-1}
//! ```
//!
//! All values decimal and space-separated. Lines starting with `#` are
//! comments.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use super::{keystream_block, PastaError, PastaParams, PastaSecretKey};
use crate::xof::StreamPosition;

#[derive(Debug, Error)]
pub enum VectorError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Pasta(#[from] PastaError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeystreamVector {
    pub p: u32,
    pub t: usize,
    pub r: usize,
    pub pos: StreamPosition,
    pub key: Vec<u32>,
    pub keystream: Vec<u32>,
}

impl KeystreamVector {
    pub fn generate(params: &PastaParams, key: &PastaSecretKey, pos: StreamPosition) -> Result<Self, PastaError> {
        let ks = keystream_block(key, pos, params)?;
        Ok(KeystreamVector {
            p: params.p(),
            t: params.t(),
            r: params.rounds(),
            pos,
            key: key.words().iter().map(|w| w.value()).collect(),
            keystream: ks.iter().map(|w| w.value()).collect(),
        })
    }

    pub fn to_line(&self) -> String {
        let mut s = format!(
            "{} {} {} {} {}",
            self.p, self.t, self.r, self.pos.nonce, self.pos.counter
        );
        for k in &self.key {
            write!(s, " {k}").unwrap();
        }
        s.push_str(" ->");
        for k in &self.keystream {
            write!(s, " {k}").unwrap();
        }
        s
    }

    /// Recomputes the keystream with this crate and compares.
    pub fn verify(&self) -> Result<bool, PastaError> {
        let params = PastaParams::new(self.p as u64, self.t, self.r)?;
        let key = PastaSecretKey::from_u32(&self.key, &params)?;
        let ks = keystream_block(&key, self.pos, &params)?;
        Ok(ks.iter().map(|w| w.value()).eq(self.keystream.iter().copied()))
    }
}

/// `count` vectors with keys and positions drawn from `rng`.
pub fn generate<R: Rng + ?Sized>(
    params: &PastaParams,
    count: usize,
    rng: &mut R,
) -> Result<Vec<KeystreamVector>, PastaError> {
    (0..count)
        .map(|_| {
            let key = PastaSecretKey::random(params, rng);
            let pos = StreamPosition::new(rng.gen(), rng.gen_range(0..1u64 << 20));
            KeystreamVector::generate(params, &key, pos)
        })
        .collect()
}

pub fn render(vectors: &[KeystreamVector]) -> String {
    let mut out = String::new();
    for v in vectors {
        out.push_str(&v.to_line());
        out.push('\n');
    }
    out
}

pub fn parse(text: &str) -> Result<Vec<KeystreamVector>, VectorError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| VectorError::Malformed {
            line,
            reason: reason.to_string(),
        };
        let (lhs, rhs) = body.split_once("->").ok_or_else(|| bad("missing '->'"))?;
        let nums = |s: &str| -> Result<Vec<u64>, VectorError> {
            s.split_whitespace()
                .map(|tok| tok.parse::<u64>().map_err(|_| bad(&format!("bad number {tok:?}"))))
                .collect()
        };
        let left = nums(lhs)?;
        let right = nums(rhs)?;
        if left.len() < 5 {
            return Err(bad("expected p t r nonce counter"));
        }
        let (p, t, r) = (left[0], left[1] as usize, left[2] as usize);
        if left.len() != 5 + 2 * t {
            return Err(bad("key length is not 2t"));
        }
        if right.len() != t {
            return Err(bad("keystream length is not t"));
        }
        let word = |v: u64| u32::try_from(v).map_err(|_| bad("word exceeds 32 bits"));
        out.push(KeystreamVector {
            p: word(p)?,
            t,
            r,
            pos: StreamPosition::new(left[3], left[4]),
            key: left[5..].iter().map(|&v| word(v)).collect::<Result<_, _>>()?,
            keystream: right.iter().map(|&v| word(v)).collect::<Result<_, _>>()?,
        });
    }
    Ok(out)
}

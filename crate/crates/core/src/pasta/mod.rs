//! The Pasta stream cipher over F_p^{2t}.
//!
//! A block keystream is the left half of the keyed permutation
//! `A_r ∘ S ∘ A_{r-1} ∘ S' ∘ … ∘ A_1 ∘ S' ∘ A_0` applied to the key, where
//! every affine layer `A_j` comes from SHAKE128 over the public
//! `(nonce, counter)` pair.

mod matrix;
mod round;
pub mod vectors;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

pub use matrix::Matrix;
pub use round::{
    affine_apply, derive_round_material, keystream_block, pasta_permutation, sbox_cube, sbox_feistel, AffineLayer,
    RoundMaterial,
};

use crate::field::{FieldElement, FieldError, PrimeModulus};
use crate::xof::{StreamPosition, XofError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PastaError {
    #[error("invalid cipher parameters: {0}")]
    BadParams(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("word {index} = {value} is not reduced modulo {modulus}")]
    UnreducedWord { index: usize, value: u64, modulus: u32 },
    #[error("unknown profile {0:?}")]
    BadProfile(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Xof(#[from] XofError),
}

/// Field, geometry and round count of one cipher instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PastaParams {
    p: PrimeModulus,
    t: usize,
    r: usize,
    mix_halves: bool,
}

impl PastaParams {
    pub fn new(p: u64, t: usize, r: usize) -> Result<Self, PastaError> {
        let modulus = PrimeModulus::new(p)?;
        if t == 0 {
            return Err(PastaError::BadParams("t must be at least 1".into()));
        }
        if r == 0 {
            return Err(PastaError::BadParams("r must be at least 1".into()));
        }
        if (p - 1).is_multiple_of(3) {
            return Err(PastaError::BadParams(format!(
                "cube map is not a bijection: 3 divides p - 1 = {}",
                p - 1
            )));
        }
        Ok(PastaParams {
            p: modulus,
            t,
            r,
            mix_halves: true,
        })
    }

    /// p = 65537, t = 17, r = 4.
    pub fn pasta4_edge() -> Self {
        Self::new(65537, 17, 4).expect("static profile")
    }

    /// p = 65537, t = 17, r = 3.
    pub fn pasta3_edge() -> Self {
        Self::new(65537, 17, 3).expect("static profile")
    }

    /// Disables the cross-half mix after each affine layer.
    pub fn with_mix_halves(mut self, on: bool) -> Self {
        self.mix_halves = on;
        self
    }

    pub fn modulus(&self) -> PrimeModulus {
        self.p
    }

    pub fn p(&self) -> u32 {
        self.p.value()
    }

    /// Words per half-state, which is also the block size.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn rounds(&self) -> usize {
        self.r
    }

    pub fn mix_halves(&self) -> bool {
        self.mix_halves
    }

    pub fn state_words(&self) -> usize {
        2 * self.t
    }

    /// Multiplicative depth of one keystream block: one level per Feistel
    /// layer plus two for the final cube.
    pub fn keystream_depth(&self) -> u32 {
        (self.r as u32 - 1) + 2
    }

    pub fn blocks_for(&self, words: usize) -> usize {
        words.div_ceil(self.t)
    }
}

/// Named parameter profiles accepted by the CLI and config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Pasta3Edge,
    Pasta4Edge,
    Custom { p: u64, t: usize, r: usize },
}

impl Profile {
    pub fn params(self) -> Result<PastaParams, PastaError> {
        match self {
            Profile::Pasta3Edge => Ok(PastaParams::pasta3_edge()),
            Profile::Pasta4Edge => Ok(PastaParams::pasta4_edge()),
            Profile::Custom { p, t, r } => PastaParams::new(p, t, r),
        }
    }
}

impl FromStr for Profile {
    type Err = PastaError;

    /// `pasta3-edge`, `pasta4-edge`, or `custom:p,t,r`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pasta3-edge" => Ok(Profile::Pasta3Edge),
            "pasta4-edge" => Ok(Profile::Pasta4Edge),
            other => {
                let bad = || PastaError::BadProfile(other.to_string());
                let body = other.strip_prefix("custom:").ok_or_else(bad)?;
                let parts: Vec<&str> = body.split(',').map(str::trim).collect();
                let [p, t, r] = parts.as_slice() else {
                    return Err(bad());
                };
                Ok(Profile::Custom {
                    p: p.parse().map_err(|_| bad())?,
                    t: t.parse().map_err(|_| bad())?,
                    r: r.parse().map_err(|_| bad())?,
                })
            }
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Pasta3Edge => f.write_str("pasta3-edge"),
            Profile::Pasta4Edge => f.write_str("pasta4-edge"),
            Profile::Custom { p, t, r } => write!(f, "custom:{p},{t},{r}"),
        }
    }
}

/// Checks that every raw word is below p.
pub fn reduce_words(words: &[u32], p: PrimeModulus) -> Result<Vec<FieldElement>, PastaError> {
    words
        .iter()
        .enumerate()
        .map(|(index, &w)| {
            p.element(w as u64).map_err(|_| PastaError::UnreducedWord {
                index,
                value: w as u64,
                modulus: p.value(),
            })
        })
        .collect()
}

fn check_reduced(words: &[FieldElement], p: PrimeModulus) -> Result<(), PastaError> {
    match words.iter().position(|w| w.value() >= p.value()) {
        Some(index) => Err(PastaError::UnreducedWord {
            index,
            value: words[index].value() as u64,
            modulus: p.value(),
        }),
        None => Ok(()),
    }
}

/// The 2t-word symmetric key.
#[derive(Clone, PartialEq, Eq)]
pub struct PastaSecretKey {
    words: Vec<FieldElement>,
}

impl fmt::Debug for PastaSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PastaSecretKey({} words)", self.words.len())
    }
}

impl PastaSecretKey {
    pub fn new(words: Vec<FieldElement>, params: &PastaParams) -> Result<Self, PastaError> {
        if words.len() != params.state_words() {
            return Err(PastaError::DimensionMismatch {
                expected: params.state_words(),
                got: words.len(),
            });
        }
        check_reduced(&words, params.modulus())?;
        Ok(PastaSecretKey { words })
    }

    pub fn from_u32(words: &[u32], params: &PastaParams) -> Result<Self, PastaError> {
        Self::new(reduce_words(words, params.modulus())?, params)
    }

    pub fn random<R: Rng + ?Sized>(params: &PastaParams, rng: &mut R) -> Self {
        let p = params.p();
        let words = (0..params.state_words())
            .map(|_| params.modulus().reduce(rng.gen_range(0..p) as u64))
            .collect();
        PastaSecretKey { words }
    }

    pub fn words(&self) -> &[FieldElement] {
        &self.words
    }
}

/// Permutation state `x_L || x_R`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PastaState {
    pub left: Vec<FieldElement>,
    pub right: Vec<FieldElement>,
}

impl PastaState {
    pub fn from_words(words: &[FieldElement]) -> Self {
        let (l, r) = words.split_at(words.len() / 2);
        PastaState {
            left: l.to_vec(),
            right: r.to_vec(),
        }
    }

    pub fn to_words(&self) -> Vec<FieldElement> {
        let mut v = Vec::with_capacity(self.left.len() + self.right.len());
        v.extend_from_slice(&self.left);
        v.extend_from_slice(&self.right);
        v
    }

    pub fn half_len(&self) -> usize {
        self.left.len()
    }
}

/// Concatenated ciphertext blocks `c_0 || c_1 || …` under one nonce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymCiphertext {
    pub nonce: u64,
    pub words: Vec<FieldElement>,
}

impl SymCiphertext {
    pub fn word_count(&self) -> usize {
        self.words.len()
    }
}

/// `c_i = m_i + left_t(Pasta-π(sk, N, i))`; a short final block uses a
/// keystream prefix.
pub fn encrypt(
    key: &PastaSecretKey,
    nonce: u64,
    message: &[FieldElement],
    params: &PastaParams,
) -> Result<SymCiphertext, PastaError> {
    check_reduced(message, params.modulus())?;
    let words = apply_keystream(key, nonce, message, params, |p, m, k| p.add(m, k))?;
    Ok(SymCiphertext { nonce, words })
}

pub fn decrypt(
    key: &PastaSecretKey,
    ct: &SymCiphertext,
    params: &PastaParams,
) -> Result<Vec<FieldElement>, PastaError> {
    check_reduced(&ct.words, params.modulus())?;
    apply_keystream(key, ct.nonce, &ct.words, params, |p, c, k| p.sub(c, k))
}

fn apply_keystream(
    key: &PastaSecretKey,
    nonce: u64,
    input: &[FieldElement],
    params: &PastaParams,
    op: impl Fn(PrimeModulus, FieldElement, FieldElement) -> FieldElement,
) -> Result<Vec<FieldElement>, PastaError> {
    let p = params.modulus();
    let mut out = Vec::with_capacity(input.len());
    for (i, block) in input.chunks(params.t()).enumerate() {
        let ks = keystream_block(key, StreamPosition::new(nonce, i as u64), params)?;
        out.extend(block.iter().zip(&ks).map(|(&w, &k)| op(p, w, k)));
    }
    Ok(out)
}

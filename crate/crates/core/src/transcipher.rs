//! Server-side evaluation of Pasta decryption under HE, and a small
//! encrypted linear classifier on the result.
//!
//! Everything here takes only public material: the HE evaluation keys,
//! HE-encrypted key words, public stream positions and symmetric
//! ciphertexts.

use rand::Rng;
use thiserror::Error;

use crate::field::{FieldElement, PrimeModulus};
use crate::he::{BackendKind, HeCiphertext, HeError, HeParams, HePublicMaterial};
use crate::pasta::{derive_round_material, AffineLayer, Matrix, PastaError, PastaParams, SymCiphertext};
use crate::xof::StreamPosition;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranscipherError {
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Pasta(#[from] PastaError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("encrypted key word {index} has depth {depth}, expected a fresh ciphertext")]
    StaleKey { index: usize, depth: u32 },
}

/// HE ciphertexts of the `2t` Pasta key words.
#[derive(Debug, Clone)]
pub struct EncryptedPastaKey {
    pasta: PastaParams,
    words: Vec<HeCiphertext>,
}

impl EncryptedPastaKey {
    /// Client-side helper: encrypts the key words under `pk`.
    pub fn encrypt<R: Rng + ?Sized>(
        key_words: &[FieldElement],
        pasta: &PastaParams,
        pk: &HePublicMaterial,
        rng: &mut R,
    ) -> Result<Self, TranscipherError> {
        let words = key_words
            .iter()
            .map(|&w| pk.encrypt(w, rng))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_parts(*pasta, words)
    }

    pub fn from_parts(pasta: PastaParams, words: Vec<HeCiphertext>) -> Result<Self, TranscipherError> {
        if words.len() != pasta.state_words() {
            return Err(TranscipherError::DimensionMismatch {
                expected: pasta.state_words(),
                got: words.len(),
            });
        }
        if let Some((index, ct)) = words.iter().enumerate().find(|(_, c)| c.depth() != 0) {
            return Err(TranscipherError::StaleKey {
                index,
                depth: ct.depth(),
            });
        }
        Ok(EncryptedPastaKey { pasta, words })
    }

    pub fn params(&self) -> &PastaParams {
        &self.pasta
    }

    pub fn words(&self) -> &[HeCiphertext] {
        &self.words
    }
}

/// A sequence of HE-encrypted field words.
#[derive(Debug, Clone, Default)]
pub struct EncryptedVector(pub Vec<HeCiphertext>);

impl EncryptedVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_depth(&self) -> u32 {
        self.0.iter().map(HeCiphertext::depth).max().unwrap_or(0)
    }

    pub fn into_inner(self) -> Vec<HeCiphertext> {
        self.0
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), TranscipherError> {
    if expected != got {
        return Err(TranscipherError::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn he_mat_vec(
    pk: &HePublicMaterial,
    m: &Matrix,
    c: &[FieldElement],
    x: &[HeCiphertext],
) -> Result<Vec<HeCiphertext>, TranscipherError> {
    check_len(m.dim(), x.len())?;
    (0..m.dim())
        .map(|row| {
            let terms: Vec<_> = x.iter().zip(m.row(row)).map(|(ct, &k)| (ct, k)).collect();
            let acc = pk.dot_plain(&terms)?;
            Ok(pk.add_plain(&acc, c[row])?)
        })
        .collect()
}

/// `y_L = M_L x_L + c_L`, `y_R = M_R x_R + c_R`, then the optional mix.
/// Only plaintext-ciphertext products.
pub fn he_affine(
    pk: &HePublicMaterial,
    layer: &AffineLayer,
    st: &EncryptedVector,
    mix_halves: bool,
) -> Result<EncryptedVector, TranscipherError> {
    let t = layer.half_len();
    check_len(2 * t, st.len())?;
    let (xl, xr) = st.0.split_at(t);
    let mut left = he_mat_vec(pk, &layer.m_left, &layer.c_left, xl)?;
    let mut right = he_mat_vec(pk, &layer.m_right, &layer.c_right, xr)?;
    if mix_halves {
        for (l, r) in left.iter_mut().zip(right.iter_mut()) {
            let u = pk.add(l, r)?;
            *l = pk.add(l, &u)?;
            *r = pk.add(r, &u)?;
        }
    }
    left.append(&mut right);
    Ok(EncryptedVector(left))
}

/// `out_0 = x_0`, `out_i = x_i + x_{i-1}^2`.
pub fn he_sbox_feistel(pk: &HePublicMaterial, st: &EncryptedVector) -> Result<EncryptedVector, TranscipherError> {
    let x = &st.0;
    let mut out = Vec::with_capacity(x.len());
    if let Some(first) = x.first() {
        out.push(first.clone());
    }
    for i in 1..x.len() {
        out.push(pk.add(&x[i], &pk.square(&x[i - 1])?)?);
    }
    Ok(EncryptedVector(out))
}

pub fn he_sbox_cube(pk: &HePublicMaterial, st: &EncryptedVector) -> Result<EncryptedVector, TranscipherError> {
    st.0.iter()
        .map(|x| Ok(pk.mul(&pk.square(x)?, x)?))
        .collect::<Result<_, _>>()
        .map(EncryptedVector)
}

/// HE encryption of `keystream_block(sk, pos)`; depth `(r - 1) + 2`.
pub fn he_keystream(
    pk: &HePublicMaterial,
    ek: &EncryptedPastaKey,
    pos: StreamPosition,
) -> Result<EncryptedVector, TranscipherError> {
    let params = &ek.pasta;
    let material = derive_round_material(params, pos)?;
    let r = params.rounds();
    let mix = params.mix_halves();
    let mut state = he_affine(pk, &material.layers[0], &EncryptedVector(ek.words.clone()), mix)?;
    for layer in &material.layers[1..r] {
        state = he_affine(pk, layer, &he_sbox_feistel(pk, &state)?, mix)?;
    }
    let mut out = he_affine(pk, &material.layers[r], &he_sbox_cube(pk, &state)?, mix)?.0;
    out.truncate(params.t());
    Ok(EncryptedVector(out))
}

/// HE encryptions of the message words of one ciphertext block.
pub fn transcipher_block(
    pk: &HePublicMaterial,
    ek: &EncryptedPastaKey,
    pos: StreamPosition,
    c_block: &[FieldElement],
) -> Result<EncryptedVector, TranscipherError> {
    let t = ek.pasta.t();
    if c_block.len() > t {
        return Err(TranscipherError::DimensionMismatch {
            expected: t,
            got: c_block.len(),
        });
    }
    let p = ek.pasta.modulus();
    if let Some((index, w)) = c_block.iter().enumerate().find(|(_, w)| w.value() >= p.value()) {
        return Err(PastaError::UnreducedWord {
            index,
            value: w.value() as u64,
            modulus: p.value(),
        }
        .into());
    }
    let ks = he_keystream(pk, ek, pos)?;
    c_block
        .iter()
        .zip(&ks.0)
        .map(|(&c, k)| Ok(pk.add_plain(&pk.neg(k)?, c)?))
        .collect::<Result<_, _>>()
        .map(EncryptedVector)
}

/// Transciphers every block of `ct` (block `i` uses counter `i`).
pub fn transcipher(
    pk: &HePublicMaterial,
    ek: &EncryptedPastaKey,
    ct: &SymCiphertext,
) -> Result<EncryptedVector, TranscipherError> {
    let mut out = Vec::with_capacity(ct.words.len());
    for (i, block) in ct.words.chunks(ek.pasta.t()).enumerate() {
        out.extend(transcipher_block(pk, ek, StreamPosition::new(ct.nonce, i as u64), block)?.0);
    }
    Ok(EncryptedVector(out))
}

/// `classes x features` weights, per-class bias, optional `x^2` activation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearModel {
    weights: Vec<Vec<FieldElement>>,
    bias: Vec<FieldElement>,
    square_activation: bool,
}

impl LinearModel {
    pub fn new(
        weights: Vec<Vec<FieldElement>>,
        bias: Vec<FieldElement>,
        square_activation: bool,
    ) -> Result<Self, TranscipherError> {
        check_len(weights.len(), bias.len())?;
        if let Some(first) = weights.first() {
            for row in &weights {
                check_len(first.len(), row.len())?;
            }
        }
        Ok(LinearModel {
            weights,
            bias,
            square_activation,
        })
    }

    /// Uniform weights and bias in `[0, p)`.
    pub fn random<R: Rng + ?Sized>(
        classes: usize,
        features: usize,
        p: PrimeModulus,
        square_activation: bool,
        rng: &mut R,
    ) -> Self {
        let mut draw = || p.reduce(rng.gen_range(0..p.value() as u64));
        let weights = (0..classes).map(|_| (0..features).map(|_| draw()).collect()).collect();
        let bias = (0..classes).map(|_| draw()).collect();
        LinearModel {
            weights,
            bias,
            square_activation,
        }
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn features(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn weights(&self) -> &[Vec<FieldElement>] {
        &self.weights
    }

    pub fn bias(&self) -> &[FieldElement] {
        &self.bias
    }

    pub fn square_activation(&self) -> bool {
        self.square_activation
    }

    pub fn eval_plain(&self, x: &[FieldElement], p: PrimeModulus) -> Result<Vec<FieldElement>, TranscipherError> {
        check_len(self.features(), x.len())?;
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(row, &b)| {
                let s = row.iter().zip(x).fold(b, |acc, (&w, &v)| p.add(acc, p.mul(w, v)));
                if self.square_activation {
                    p.mul(s, s)
                } else {
                    s
                }
            })
            .collect())
    }
}

pub fn he_linear_model(
    pk: &HePublicMaterial,
    features: &EncryptedVector,
    model: &LinearModel,
) -> Result<EncryptedVector, TranscipherError> {
    check_len(model.features(), features.len())?;
    model
        .weights
        .iter()
        .zip(&model.bias)
        .map(|(row, &b)| {
            let terms: Vec<_> = features.0.iter().zip(row).map(|(ct, &w)| (ct, w)).collect();
            let score = if terms.is_empty() {
                return Err(TranscipherError::DimensionMismatch { expected: 1, got: 0 });
            } else {
                pk.add_plain(&pk.dot_plain(&terms)?, b)?
            };
            Ok(if model.square_activation {
                pk.square(&score)?
            } else {
                score
            })
        })
        .collect::<Result<_, _>>()
        .map(EncryptedVector)
}

/// Modulus size (bits) estimated to cover the keystream circuit, an
/// optional `fan_in`-term linear layer and an optional squaring.
/// Per-operation costs are empirical fits at n = 1024.
pub fn estimated_modulus_bits(pasta: &PastaParams, he: &HeParams, fan_in: usize, activation: bool) -> u32 {
    let lp = (pasta.p() as f64).log2();
    let ln = (he.ring_degree() as f64).log2();
    let fresh = lp + 1.0 + ln / 2.0 + 6.0;
    let mul = lp + ln / 2.0 + 4.0;
    let affine = lp + 0.5 * (pasta.t() as f64).log2() + 2.0;
    let layers = (pasta.rounds() + 1) as f64;
    let depth = pasta.keystream_depth() as f64 + if activation { 1.0 } else { 0.0 };
    let model = if fan_in > 0 {
        lp + 0.5 * (fan_in as f64).log2()
    } else {
        0.0
    };
    (fresh + layers * affine + depth * mul + model + 10.0).ceil() as u32
}

/// The default modulus size, or the estimate rounded up to 20 bits when
/// the default cannot hold the circuit.
pub fn recommended_modulus_bits(kind: BackendKind, pasta: &PastaParams, fan_in: usize, activation: bool) -> u32 {
    let base = HeParams::for_backend(kind, pasta.modulus());
    let need = estimated_modulus_bits(pasta, &base, fan_in, activation);
    if kind == BackendKind::Transparent || need <= HeParams::DEFAULT_MODULUS_BITS {
        HeParams::DEFAULT_MODULUS_BITS
    } else {
        need.div_ceil(20) * 20
    }
}

/// Default parameters for `kind` with the recommended modulus.
pub fn recommended_he_params(kind: BackendKind, pasta: &PastaParams, fan_in: usize, activation: bool) -> HeParams {
    HeParams::for_backend(kind, pasta.modulus())
        .with_modulus_bits(recommended_modulus_bits(kind, pasta, fan_in, activation))
        .expect("recommended modulus is valid")
}

//! Leveled homomorphic encryption of scalars mod p.
//!
//! Two backends share one contract:
//!
//! * `transparent` keeps the plaintext inside the "ciphertext" and only
//!   tracks multiplicative depth. It is the functional oracle.
//! * `bfv-toy` is a BFV-style RLWE scheme with the message in the constant
//!   coefficient, one big-integer modulus q, and base-w relinearization.
//!
//! Neither backend is secure. The BFV parameters are sized for
//! correctness of small circuits, nothing more.

mod bfv;
pub mod codec;
pub mod ntt;

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::field::{FieldElement, PrimeModulus};
use bfv::{BfvContext, Poly, RelinKey};
use ntt::NttPoly;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeError {
    #[error("invalid HE parameters: {0}")]
    BadParams(String),
    #[error("ciphertext or key belongs to different HE parameters")]
    ParamsMismatch,
    #[error("noise budget exhausted ({budget_bits:.1} bits left)")]
    NoiseOverflow { budget_bits: f64 },
    #[error("plaintext {value} is not reduced modulo {modulus}")]
    Unreduced { value: u32, modulus: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackendKind {
    Transparent,
    BfvToy,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Transparent => "transparent",
            BackendKind::BfvToy => "bfv-toy",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = HeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "transparent" => Ok(BackendKind::Transparent),
            "bfv-toy" | "bfv" => Ok(BackendKind::BfvToy),
            other => Err(HeError::BadParams(format!("unknown backend {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeParams {
    kind: BackendKind,
    plaintext_modulus: PrimeModulus,
    ring_degree: usize,
    ciphertext_modulus: BigUint,
    decomp_log_base: u32,
    error_stddev: f64,
}

impl HeParams {
    pub const DEFAULT_RING_DEGREE: usize = 1024;
    pub const DEFAULT_MODULUS_BITS: u32 = 180;
    pub const DEFAULT_DECOMP_LOG_BASE: u32 = 20;
    pub const DEFAULT_ERROR_STDDEV: f64 = 3.2;

    pub fn new(
        kind: BackendKind,
        plaintext_modulus: PrimeModulus,
        ring_degree: usize,
        ciphertext_modulus: BigUint,
        decomp_log_base: u32,
        error_stddev: f64,
    ) -> Result<Self, HeError> {
        let bad = |m: String| Err(HeError::BadParams(m));
        if !ring_degree.is_power_of_two() || !(2..=1 << 15).contains(&ring_degree) {
            return bad(format!("ring degree {ring_degree} is not a power of two in [2, 2^15]"));
        }
        if ciphertext_modulus <= BigUint::from(plaintext_modulus.value()) {
            return bad("ciphertext modulus must exceed the plaintext modulus".into());
        }
        if ciphertext_modulus.bits() > 1024 {
            return bad("ciphertext modulus wider than 1024 bits".into());
        }
        if !(1..=30).contains(&decomp_log_base) {
            return bad(format!("decomposition base 2^{decomp_log_base} outside 2^1..2^30"));
        }
        if !(error_stddev.is_finite() && error_stddev > 0.0 && error_stddev < 1e6) {
            return bad(format!("error stddev {error_stddev} out of range"));
        }
        Ok(HeParams {
            kind,
            plaintext_modulus,
            ring_degree,
            ciphertext_modulus,
            decomp_log_base,
            error_stddev,
        })
    }

    /// n = 1024, log2 q ≈ 180, w = 2^20, σ = 3.2.
    pub fn bfv_toy(p: PrimeModulus) -> Self {
        Self::new(
            BackendKind::BfvToy,
            p,
            Self::DEFAULT_RING_DEGREE,
            Self::modulus_for_bits(p, Self::DEFAULT_MODULUS_BITS),
            Self::DEFAULT_DECOMP_LOG_BASE,
            Self::DEFAULT_ERROR_STDDEV,
        )
        .expect("default parameters are valid")
    }

    pub fn transparent(p: PrimeModulus) -> Self {
        HeParams {
            kind: BackendKind::Transparent,
            ..Self::bfv_toy(p)
        }
    }

    pub fn for_backend(kind: BackendKind, p: PrimeModulus) -> Self {
        match kind {
            BackendKind::Transparent => Self::transparent(p),
            BackendKind::BfvToy => Self::bfv_toy(p),
        }
    }

    /// Largest `q <= 2^bits` with `q ≡ 1 (mod p)`, so `Δ p = q - 1`.
    pub fn modulus_for_bits(p: PrimeModulus, bits: u32) -> BigUint {
        let top = BigUint::one() << bits;
        let r = (&top - 1u8) % p.value();
        top - r
    }

    pub fn with_modulus_bits(self, bits: u32) -> Result<Self, HeError> {
        let q = Self::modulus_for_bits(self.plaintext_modulus, bits);
        Self::new(
            self.kind,
            self.plaintext_modulus,
            self.ring_degree,
            q,
            self.decomp_log_base,
            self.error_stddev,
        )
    }

    pub fn with_ring_degree(self, n: usize) -> Result<Self, HeError> {
        Self::new(
            self.kind,
            self.plaintext_modulus,
            n,
            self.ciphertext_modulus,
            self.decomp_log_base,
            self.error_stddev,
        )
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    pub fn plaintext_modulus(&self) -> PrimeModulus {
        self.plaintext_modulus
    }

    pub fn ring_degree(&self) -> usize {
        self.ring_degree
    }

    pub fn ciphertext_modulus(&self) -> &BigUint {
        &self.ciphertext_modulus
    }

    pub fn modulus_bits(&self) -> u64 {
        self.ciphertext_modulus.bits()
    }

    pub fn decomp_log_base(&self) -> u32 {
        self.decomp_log_base
    }

    pub fn error_stddev(&self) -> f64 {
        self.error_stddev
    }

    /// FNV-1a over the canonical encoding; binds ciphertexts to params.
    pub fn fingerprint(&self) -> u64 {
        let mut w = crate::codec::ByteWriter::new();
        w.u32(self.plaintext_modulus.value());
        codec::write_params(&mut w, self);
        w.into_bytes().iter().fold(0xcbf29ce484222325u64, |h, &b| {
            (h ^ b as u64).wrapping_mul(0x100000001b3)
        })
    }
}

pub(crate) struct HeContext {
    params: HeParams,
    fingerprint: u64,
    bfv: Option<BfvContext>,
}

impl HeContext {
    pub(crate) fn new(params: HeParams) -> Arc<Self> {
        let bfv = match params.kind {
            BackendKind::Transparent => None,
            BackendKind::BfvToy => Some(BfvContext::new(&params)),
        };
        Arc::new(HeContext {
            fingerprint: params.fingerprint(),
            params,
            bfv,
        })
    }

    /// Context without backend tables, enough for decoding.
    pub(crate) fn new_light(params: HeParams) -> Self {
        HeContext {
            fingerprint: params.fingerprint(),
            params,
            bfv: None,
        }
    }

    fn bfv(&self) -> &BfvContext {
        self.bfv.as_ref().expect("bfv backend")
    }
}

#[derive(Clone, PartialEq, Eq)]
pub(crate) enum CtBody {
    Transparent(FieldElement),
    Bfv { c0: Poly, c1: Poly },
}

/// Degree-1 ciphertext of one field element, with its circuit depth.
#[derive(Clone, PartialEq, Eq)]
pub struct HeCiphertext {
    depth: u32,
    params_id: u64,
    body: CtBody,
}

impl fmt::Debug for HeCiphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.body {
            CtBody::Transparent(_) => "transparent",
            CtBody::Bfv { .. } => "bfv-toy",
        };
        write!(f, "HeCiphertext({kind}, depth {})", self.depth)
    }
}

impl HeCiphertext {
    pub fn depth(&self) -> u32 {
        self.depth
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseReport {
    pub depth: u32,
    /// `log2(q / 2p) - log2 |noise|`; infinite for the transparent backend.
    pub noise_budget_bits: f64,
}

enum SecretInner {
    Transparent,
    Bfv(Vec<i64>),
}

pub struct HeSecretKey {
    ctx: Arc<HeContext>,
    inner: SecretInner,
}

impl fmt::Debug for HeSecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HeSecretKey({})", self.ctx.params.kind)
    }
}

enum PublicInner {
    Transparent,
    Bfv {
        b: Poly,
        a: Poly,
        relin: RelinKey,
        relin_ntt: OnceLock<Vec<(NttPoly, NttPoly)>>,
    },
}

/// Encryption and evaluation keys. Everything the server needs, nothing
/// that decrypts.
pub struct HePublicMaterial {
    ctx: Arc<HeContext>,
    inner: PublicInner,
}

impl fmt::Debug for HePublicMaterial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HePublicMaterial({})", self.ctx.params.kind)
    }
}

/// Deterministic key generation from a 64-bit seed.
pub fn keygen(params: &HeParams, seed: u64) -> (HeSecretKey, HePublicMaterial) {
    let ctx = HeContext::new(params.clone());
    match params.kind {
        BackendKind::Transparent => (
            HeSecretKey {
                ctx: ctx.clone(),
                inner: SecretInner::Transparent,
            },
            HePublicMaterial {
                ctx,
                inner: PublicInner::Transparent,
            },
        ),
        BackendKind::BfvToy => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (s, b, a, relin) = ctx.bfv().keygen(&mut rng);
            (
                HeSecretKey {
                    ctx: ctx.clone(),
                    inner: SecretInner::Bfv(s),
                },
                HePublicMaterial {
                    ctx,
                    inner: PublicInner::Bfv {
                        b,
                        a,
                        relin,
                        relin_ntt: OnceLock::new(),
                    },
                },
            )
        }
    }
}

impl HePublicMaterial {
    pub fn params(&self) -> &HeParams {
        &self.ctx.params
    }

    fn check(&self, ct: &HeCiphertext) -> Result<(), HeError> {
        let kind_ok = matches!(
            (&ct.body, &self.inner),
            (CtBody::Transparent(_), PublicInner::Transparent) | (CtBody::Bfv { .. }, PublicInner::Bfv { .. })
        );
        if kind_ok && ct.params_id == self.ctx.fingerprint {
            Ok(())
        } else {
            Err(HeError::ParamsMismatch)
        }
    }

    fn wrap(&self, depth: u32, body: CtBody) -> HeCiphertext {
        HeCiphertext {
            depth,
            params_id: self.ctx.fingerprint,
            body,
        }
    }

    fn p(&self) -> PrimeModulus {
        self.ctx.params.plaintext_modulus
    }

    pub fn encrypt<R: Rng + ?Sized>(&self, m: FieldElement, rng: &mut R) -> Result<HeCiphertext, HeError> {
        let p = self.p();
        if m.value() >= p.value() {
            return Err(HeError::Unreduced {
                value: m.value(),
                modulus: p.value(),
            });
        }
        let body = match &self.inner {
            PublicInner::Transparent => CtBody::Transparent(m),
            PublicInner::Bfv { b, a, .. } => {
                let (c0, c1) = self.ctx.bfv().encrypt(b, a, m.value() as u64, rng);
                CtBody::Bfv { c0, c1 }
            }
        };
        Ok(self.wrap(0, body))
    }

    pub fn add(&self, x: &HeCiphertext, y: &HeCiphertext) -> Result<HeCiphertext, HeError> {
        self.binary(x, y, |p, a, b| p.add(a, b), |ctx, a, b| ctx.add(a, b))
    }

    pub fn sub(&self, x: &HeCiphertext, y: &HeCiphertext) -> Result<HeCiphertext, HeError> {
        self.binary(x, y, |p, a, b| p.sub(a, b), |ctx, a, b| ctx.sub(a, b))
    }

    fn binary(
        &self,
        x: &HeCiphertext,
        y: &HeCiphertext,
        plain: impl Fn(PrimeModulus, FieldElement, FieldElement) -> FieldElement,
        ring: impl Fn(&BfvContext, &Poly, &Poly) -> Poly,
    ) -> Result<HeCiphertext, HeError> {
        self.check(x)?;
        self.check(y)?;
        let depth = x.depth.max(y.depth);
        let body = match (&x.body, &y.body) {
            (CtBody::Transparent(a), CtBody::Transparent(b)) => CtBody::Transparent(plain(self.p(), *a, *b)),
            (CtBody::Bfv { c0, c1 }, CtBody::Bfv { c0: d0, c1: d1 }) => {
                let ctx = self.ctx.bfv();
                CtBody::Bfv {
                    c0: ring(ctx, c0, d0),
                    c1: ring(ctx, c1, d1),
                }
            }
            _ => return Err(HeError::ParamsMismatch),
        };
        Ok(self.wrap(depth, body))
    }

    pub fn neg(&self, x: &HeCiphertext) -> Result<HeCiphertext, HeError> {
        self.check(x)?;
        let body = match &x.body {
            CtBody::Transparent(a) => CtBody::Transparent(self.p().neg(*a)),
            CtBody::Bfv { c0, c1 } => {
                let ctx = self.ctx.bfv();
                CtBody::Bfv {
                    c0: ctx.neg(c0),
                    c1: ctx.neg(c1),
                }
            }
        };
        Ok(self.wrap(x.depth, body))
    }

    pub fn add_plain(&self, x: &HeCiphertext, k: FieldElement) -> Result<HeCiphertext, HeError> {
        self.check(x)?;
        let k = self.p().reduce(k.value() as u64);
        let body = match &x.body {
            CtBody::Transparent(a) => CtBody::Transparent(self.p().add(*a, k)),
            CtBody::Bfv { c0, c1 } => {
                let ctx = self.ctx.bfv();
                CtBody::Bfv {
                    c0: ctx.add_constant(c0, &(&ctx.delta * k.value())),
                    c1: c1.clone(),
                }
            }
        };
        Ok(self.wrap(x.depth, body))
    }

    pub fn mul_plain(&self, x: &HeCiphertext, k: FieldElement) -> Result<HeCiphertext, HeError> {
        self.dot_plain(&[(x, k)])
    }

    /// `Σ mul_plain(x_i, k_i)` with a single reduction per coefficient.
    pub fn dot_plain(&self, terms: &[(&HeCiphertext, FieldElement)]) -> Result<HeCiphertext, HeError> {
        let Some((first, _)) = terms.first() else {
            return Err(HeError::BadParams("empty linear combination".into()));
        };
        for (ct, _) in terms {
            self.check(ct)?;
        }
        let p = self.p();
        let depth = terms.iter().map(|(ct, _)| ct.depth).max().unwrap_or(0);
        let body = match &first.body {
            CtBody::Transparent(_) => {
                let mut acc = FieldElement::ZERO;
                for (ct, k) in terms {
                    let CtBody::Transparent(v) = ct.body else {
                        return Err(HeError::ParamsMismatch);
                    };
                    acc = p.add(acc, p.mul(v, p.reduce(k.value() as u64)));
                }
                CtBody::Transparent(acc)
            }
            CtBody::Bfv { .. } => {
                let mut t0 = Vec::with_capacity(terms.len());
                let mut t1 = Vec::with_capacity(terms.len());
                for (ct, k) in terms {
                    let CtBody::Bfv { c0, c1 } = &ct.body else {
                        return Err(HeError::ParamsMismatch);
                    };
                    let kc = p.centered(p.reduce(k.value() as u64));
                    t0.push((c0, kc));
                    t1.push((c1, kc));
                }
                let ctx = self.ctx.bfv();
                CtBody::Bfv {
                    c0: ctx.scalar_dot(&t0),
                    c1: ctx.scalar_dot(&t1),
                }
            }
        };
        Ok(self.wrap(depth, body))
    }

    pub fn mul(&self, x: &HeCiphertext, y: &HeCiphertext) -> Result<HeCiphertext, HeError> {
        self.check(x)?;
        self.check(y)?;
        let depth = x.depth.max(y.depth) + 1;
        let body = match (&x.body, &y.body, &self.inner) {
            (CtBody::Transparent(a), CtBody::Transparent(b), _) => CtBody::Transparent(self.p().mul(*a, *b)),
            (CtBody::Bfv { c0, c1 }, CtBody::Bfv { c0: d0, c1: d1 }, PublicInner::Bfv { relin, relin_ntt, .. }) => {
                let ctx = self.ctx.bfv();
                let keys = relin_ntt.get_or_init(|| ctx.relin_ntt(relin));
                let (c0, c1) = ctx.mul((c0, c1), (d0, d1), keys);
                CtBody::Bfv { c0, c1 }
            }
            _ => return Err(HeError::ParamsMismatch),
        };
        Ok(self.wrap(depth, body))
    }

    pub fn square(&self, x: &HeCiphertext) -> Result<HeCiphertext, HeError> {
        self.mul(x, x)
    }

    #[cfg(test)]
    pub(crate) fn bfv_public_pair(&self) -> Option<(&Poly, &Poly)> {
        match &self.inner {
            PublicInner::Bfv { b, a, .. } => Some((b, a)),
            PublicInner::Transparent => None,
        }
    }
}

impl HeSecretKey {
    pub fn params(&self) -> &HeParams {
        &self.ctx.params
    }

    fn check(&self, ct: &HeCiphertext) -> Result<(), HeError> {
        if ct.params_id != self.ctx.fingerprint {
            return Err(HeError::ParamsMismatch);
        }
        Ok(())
    }

    /// Decrypts without consulting the noise level.
    pub fn decrypt_unchecked(&self, ct: &HeCiphertext) -> Result<FieldElement, HeError> {
        self.check(ct)?;
        match (&ct.body, &self.inner) {
            (CtBody::Transparent(v), SecretInner::Transparent) => Ok(*v),
            (CtBody::Bfv { c0, c1 }, SecretInner::Bfv(s)) => {
                let ctx = self.ctx.bfv();
                let m = ctx.decode(&ctx.phase(c0, c1, s));
                Ok(self.ctx.params.plaintext_modulus.reduce(m))
            }
            _ => Err(HeError::ParamsMismatch),
        }
    }

    /// Decrypts, failing with `NoiseOverflow` once less than one bit of
    /// budget remains. Detection is best-effort: a ciphertext that already
    /// overflowed can still land inside the window and decode wrongly.
    pub fn decrypt(&self, ct: &HeCiphertext) -> Result<FieldElement, HeError> {
        let m = self.decrypt_unchecked(ct)?;
        let report = self.noise_budget(ct)?;
        if report.noise_budget_bits < 1.0 {
            return Err(HeError::NoiseOverflow {
                budget_bits: report.noise_budget_bits,
            });
        }
        Ok(m)
    }

    /// Exact noise measurement using the secret key.
    pub fn noise_budget(&self, ct: &HeCiphertext) -> Result<NoiseReport, HeError> {
        self.check(ct)?;
        match (&ct.body, &self.inner) {
            (CtBody::Transparent(_), SecretInner::Transparent) => Ok(NoiseReport {
                depth: ct.depth,
                noise_budget_bits: f64::INFINITY,
            }),
            (CtBody::Bfv { c0, c1 }, SecretInner::Bfv(s)) => {
                let ctx = self.ctx.bfv();
                let phase = ctx.phase(c0, c1, s);
                let m = ctx.decode(&phase);
                let noise = ctx.noise_magnitude(&phase, m);
                let p = self.ctx.params.plaintext_modulus.value() as f64;
                let budget = log2_big(&ctx.q) - (2.0 * p).log2() - log2_big(&noise).max(0.0);
                Ok(NoiseReport {
                    depth: ct.depth,
                    noise_budget_bits: budget,
                })
            }
            _ => Err(HeError::ParamsMismatch),
        }
    }

    #[cfg(test)]
    pub(crate) fn bfv_secret(&self) -> Option<&[i64]> {
        match &self.inner {
            SecretInner::Bfv(s) => Some(s),
            SecretInner::Transparent => None,
        }
    }
}

/// log2 of a big integer, accurate to f64 precision; 0 maps to -inf.
pub(crate) fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits == 0 {
        return f64::NEG_INFINITY;
    }
    let shift = bits.saturating_sub(53);
    let top = (x >> shift).to_f64().unwrap_or(f64::MAX);
    top.log2() + shift as f64
}

//! Prime-field arithmetic over 32-bit moduli.
//!
//! The modulus is a runtime value so the same code serves the tiny test
//! fields (p = 5, 17, 251, 257) and the deployment field p = 65537.

use std::fmt;

use thiserror::Error;

use crate::xof::XofStream;

/// Upper bound on rejected draws before [`PrimeModulus::sample`] gives up.
pub const MAX_REDRAWS: usize = 1_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("modulus {0} is not a prime greater than 3")]
    BadModulus(u64),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("value {value} is not reduced modulo {modulus}")]
    Unreduced { value: u64, modulus: u32 },
    #[error("rejection sampling stalled after {MAX_REDRAWS} redraws")]
    SamplingStall,
}

/// A field word, always in `[0, p)` for the modulus it was produced under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[repr(transparent)]
pub struct FieldElement(u32);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    #[inline]
    pub fn value(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A prime modulus `3 < p < 2^32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimeModulus {
    p: u32,
    mask: u32,
}

impl PrimeModulus {
    pub fn new(p: u64) -> Result<Self, FieldError> {
        if p <= 3 || p > u32::MAX as u64 || !is_prime_u64(p) {
            return Err(FieldError::BadModulus(p));
        }
        let p = p as u32;
        let bits = 32 - (p - 1).leading_zeros();
        let mask = if bits == 32 { u32::MAX } else { (1u32 << bits) - 1 };
        Ok(PrimeModulus { p, mask })
    }

    #[inline]
    pub fn value(self) -> u32 {
        self.p
    }

    /// Bit width `k` with `2^(k-1) < p <= 2^k`.
    pub fn bits(self) -> u32 {
        self.mask.count_ones()
    }

    /// Checked conversion of a raw word.
    pub fn element(self, v: u64) -> Result<FieldElement, FieldError> {
        if v < self.p as u64 {
            Ok(FieldElement(v as u32))
        } else {
            Err(FieldError::Unreduced {
                value: v,
                modulus: self.p,
            })
        }
    }

    /// Reduces an arbitrary integer.
    #[inline]
    pub fn reduce(self, v: u64) -> FieldElement {
        FieldElement((v % self.p as u64) as u32)
    }

    /// Reduces a signed integer into `[0, p)`.
    #[inline]
    pub fn reduce_i64(self, v: i64) -> FieldElement {
        FieldElement(v.rem_euclid(self.p as i64) as u32)
    }

    #[inline]
    pub fn add(self, a: FieldElement, b: FieldElement) -> FieldElement {
        let s = a.0 as u64 + b.0 as u64;
        let p = self.p as u64;
        FieldElement(if s >= p { s - p } else { s } as u32)
    }

    #[inline]
    pub fn sub(self, a: FieldElement, b: FieldElement) -> FieldElement {
        if a.0 >= b.0 {
            FieldElement(a.0 - b.0)
        } else {
            FieldElement((a.0 as u64 + self.p as u64 - b.0 as u64) as u32)
        }
    }

    #[inline]
    pub fn neg(self, a: FieldElement) -> FieldElement {
        if a.0 == 0 {
            a
        } else {
            FieldElement(self.p - a.0)
        }
    }

    #[inline]
    pub fn mul(self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(((a.0 as u64 * b.0 as u64) % self.p as u64) as u32)
    }

    pub fn pow(self, a: FieldElement, mut e: u64) -> FieldElement {
        let mut base = a;
        let mut acc = FieldElement(1 % self.p);
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// Inverse by Fermat's little theorem.
    pub fn inv(self, a: FieldElement) -> Result<FieldElement, FieldError> {
        if a.is_zero() {
            return Err(FieldError::ZeroInverse);
        }
        Ok(self.pow(a, self.p as u64 - 2))
    }

    /// Draws one uniform element from the stream by masked rejection
    /// sampling on 4-byte little-endian words.
    pub fn sample(self, stream: &mut XofStream) -> Result<FieldElement, FieldError> {
        let mut word = [0u8; 4];
        for _ in 0..=MAX_REDRAWS {
            stream.fill(&mut word);
            let candidate = u32::from_le_bytes(word) & self.mask;
            if candidate < self.p {
                return Ok(FieldElement(candidate));
            }
        }
        Err(FieldError::SamplingStall)
    }

    /// Centered lift into `(-p/2, p/2]`.
    pub fn centered(self, a: FieldElement) -> i64 {
        let v = a.0 as i64;
        if v > (self.p / 2) as i64 {
            v - self.p as i64
        } else {
            v
        }
    }
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut base: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod_u64(acc, base, m);
        }
        base = mul_mod_u64(base, base, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin, exact for every 64-bit input.
pub fn is_prime_u64(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &b in &BASES {
        if n.is_multiple_of(b) {
            return n == b;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xof::{StreamPosition, XofStream};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m(p: u64) -> PrimeModulus {
        PrimeModulus::new(p).unwrap()
    }

    fn fe(v: u32) -> FieldElement {
        FieldElement(v)
    }

    #[test]
    fn rejects_composites_and_small_primes() {
        for bad in [0, 1, 2, 3, 4, 9, 65535, 1 << 32, 4_294_967_295] {
            assert!(PrimeModulus::new(bad).is_err(), "{bad}");
        }
        for good in [5, 17, 251, 257, 65537, 2_147_483_647, 4_294_967_291] {
            assert!(PrimeModulus::new(good).is_ok(), "{good}");
        }
    }

    #[test]
    fn primality_matches_trial_division() {
        for n in 0..20_000u64 {
            let trial = n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0);
            assert_eq!(is_prime_u64(n), trial, "{n}");
        }
    }

    #[test]
    fn add_sub_examples() {
        let p5 = m(5);
        let big = m(65537);
        assert_eq!(big.add(fe(0), fe(1234)), fe(1234));
        assert_eq!(p5.add(fe(3), fe(4)), fe(2));
        // (65536 + 65536) mod 65537 = 131072 - 65537
        assert_eq!(big.add(fe(65536), fe(65536)), fe(65535));
        assert_eq!(p5.sub(fe(2), fe(4)), fe(3));
        assert_eq!(p5.neg(fe(0)), fe(0));
        assert_eq!(p5.neg(fe(1)), fe(4));
    }

    #[test]
    fn mul_pow_examples() {
        let big = m(65537);
        assert_eq!(big.mul(fe(1), fe(777)), fe(777));
        // (-1)(-1)
        assert_eq!(big.mul(fe(65536), fe(65536)), fe(1));
        assert_eq!(big.pow(fe(9), 0), fe(1));
        assert_eq!(m(17).pow(fe(2), 3), fe(8));
        assert_eq!(big.pow(fe(5), 65536), fe(1));
    }

    #[test]
    fn inverse_examples_and_exhaustive_sweep() {
        assert_eq!(m(5).inv(fe(1)).unwrap(), fe(1));
        assert_eq!(m(5).inv(fe(2)).unwrap(), fe(3));
        assert_eq!(m(5).inv(fe(0)), Err(FieldError::ZeroInverse));
        let big = m(65537);
        let v = big.inv(fe(1234)).unwrap();
        assert_eq!(big.mul(fe(1234), v), fe(1));
        let p = m(251);
        for a in 1..251 {
            assert_eq!(p.mul(fe(a), p.inv(fe(a)).unwrap()), fe(1));
        }
    }

    #[test]
    fn ring_laws_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &pv in &[5u64, 17, 251, 65537, 4_294_967_291] {
            let p = m(pv);
            for _ in 0..10_000 / 5 {
                let a = p.reduce(rng.gen());
                let b = p.reduce(rng.gen());
                let c = p.reduce(rng.gen());
                assert_eq!(p.add(a, b), p.add(b, a));
                assert_eq!(p.mul(a, b), p.mul(b, a));
                assert_eq!(p.add(p.add(a, b), c), p.add(a, p.add(b, c)));
                assert_eq!(p.mul(p.mul(a, b), c), p.mul(a, p.mul(b, c)));
                assert_eq!(p.sub(p.add(a, b), b), a);
                // big-integer oracle
                let want = (a.value() as u128 * b.value() as u128 % pv as u128) as u32;
                assert_eq!(p.mul(a, b).value(), want);
            }
        }
    }

    #[test]
    fn sample_accepts_below_modulus() {
        let mut s = XofStream::from_bytes(&[0x01, 0, 0, 0]);
        assert_eq!(m(65537).sample(&mut s).unwrap(), fe(1));
    }

    #[test]
    fn sample_rejects_masked_overflow() {
        // 0xFFFFFFFF masks to 0x1FFFF = 131071 >= 65537, so the next word wins.
        let mut s = XofStream::from_bytes(&[0xFF, 0xFF, 0xFF, 0xFF, 0x02, 0, 0, 0]);
        assert_eq!(m(65537).sample(&mut s).unwrap(), fe(2));
    }

    #[test]
    fn sample_stalls_on_degenerate_stream() {
        let mut s = XofStream::from_bytes(&[0xFF; 4 * (MAX_REDRAWS + 1)]);
        assert_eq!(m(65537).sample(&mut s), Err(FieldError::SamplingStall));
    }

    #[test]
    fn sample_is_below_modulus_and_deterministic() {
        let p = m(2_147_483_647);
        let pos = StreamPosition::new(3, 4);
        let mut a = XofStream::new(b"field-test", pos).unwrap();
        let mut b = XofStream::new(b"field-test", pos).unwrap();
        for _ in 0..1000 {
            let x = p.sample(&mut a).unwrap();
            assert!(x.value() < p.value());
            assert_eq!(x, p.sample(&mut b).unwrap());
        }
    }

    #[test]
    fn sample_is_uniform_chi_square() {
        let p = m(17);
        let mut s = XofStream::new(b"chi-square", StreamPosition::new(0, 0)).unwrap();
        let draws = 100_000;
        let mut counts = [0u32; 17];
        for _ in 0..draws {
            counts[p.sample(&mut s).unwrap().value() as usize] += 1;
        }
        let expected = draws as f64 / 17.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 16 degrees of freedom: mean 16, sigma sqrt(32)
        assert!(chi2 < 16.0 + 3.0 * 32f64.sqrt(), "chi2 = {chi2}");
    }
}

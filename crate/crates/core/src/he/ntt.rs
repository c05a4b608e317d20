//! Exact integer products in Z[X]/(X^n + 1).
//!
//! Coefficients are reduced modulo enough 62-bit NTT-friendly primes to
//! cover the product's magnitude, multiplied pointwise after a negacyclic
//! NTT, then recombined by Garner's CRT into centered big integers. The
//! caller reduces modulo q (or scales) afterwards.

use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Zero};

use crate::field::is_prime_u64;

/// Supports ring degrees up to 2^16.
const MAX_LOG_N: u32 = 16;
const MAX_PRIMES: usize = 48;

fn ntt_primes() -> &'static [u64] {
    static PRIMES: OnceLock<Vec<u64>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let step = 1u64 << (MAX_LOG_N + 1);
        let mut k = ((1u64 << 62) - 1) / step;
        let mut out = Vec::with_capacity(MAX_PRIMES);
        while out.len() < MAX_PRIMES {
            let cand = k * step + 1;
            if is_prime_u64(cand) {
                out.push(cand);
            }
            k -= 1;
        }
        out
    })
}

#[inline]
fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, b, p);
        }
        b = mul_mod(b, b, p);
        e >>= 1;
    }
    acc
}

fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Twiddle tables for one prime and ring degree.
#[derive(Debug)]
struct PrimeTables {
    p: u64,
    psi_rev: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    n_inv: u64,
}

impl PrimeTables {
    fn new(p: u64, n: usize) -> Self {
        let log_n = n.trailing_zeros();
        let order = 2 * n as u64;
        let psi = (2..)
            .map(|g| pow_mod(g, (p - 1) / order, p))
            .find(|&psi| pow_mod(psi, n as u64, p) == p - 1)
            .expect("prime is 1 mod 2n");
        let psi_inv = pow_mod(psi, p - 2, p);
        let mut psi_rev = vec![0; n];
        let mut psi_inv_rev = vec![0; n];
        let (mut fwd, mut inv) = (1u64, 1u64);
        for i in 0..n {
            let r = bit_reverse(i, log_n);
            psi_rev[r] = fwd;
            psi_inv_rev[r] = inv;
            fwd = mul_mod(fwd, psi, p);
            inv = mul_mod(inv, psi_inv, p);
        }
        PrimeTables {
            p,
            psi_rev,
            psi_inv_rev,
            n_inv: pow_mod(n as u64, p - 2, p),
        }
    }

    fn forward(&self, a: &mut [u64]) {
        let p = self.p;
        let n = a.len();
        let mut t = n;
        let mut m = 1;
        while m < n {
            t /= 2;
            for i in 0..m {
                let j1 = 2 * i * t;
                let s = self.psi_rev[m + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = mul_mod(a[j + t], s, p);
                    a[j] = if u + v >= p { u + v - p } else { u + v };
                    a[j + t] = if u >= v { u - v } else { u + p - v };
                }
            }
            m *= 2;
        }
    }

    fn inverse(&self, a: &mut [u64]) {
        let p = self.p;
        let n = a.len();
        let mut t = 1;
        let mut m = n;
        while m > 1 {
            let h = m / 2;
            let mut j1 = 0;
            for i in 0..h {
                let s = self.psi_inv_rev[h + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = if u + v >= p { u + v - p } else { u + v };
                    a[j + t] = mul_mod(if u >= v { u - v } else { u + p - v }, s, p);
                }
                j1 += 2 * t;
            }
            t *= 2;
            m = h;
        }
        for x in a.iter_mut() {
            *x = mul_mod(*x, self.n_inv, p);
        }
    }
}

/// A polynomial in evaluation form, one residue vector per prime.
#[derive(Debug, Clone)]
pub struct NttPoly {
    residues: Vec<Vec<u64>>,
}

impl NttPoly {
    pub fn prime_count(&self) -> usize {
        self.residues.len()
    }
}

/// Multiplication plan for a fixed ring degree.
#[derive(Debug)]
pub struct NttPlan {
    n: usize,
    tables: Vec<PrimeTables>,
    /// `inv[i][j] = P_j^{-1} mod P_i` for j < i.
    garner_inv: Vec<Vec<u64>>,
    /// Prefix products and their halves, indexed by prime count.
    moduli: Vec<(BigUint, BigUint)>,
}

impl NttPlan {
    /// Plan able to represent products of magnitude below `2^max_bits`.
    pub fn new(n: usize, max_bits: u64) -> Self {
        assert!(
            n.is_power_of_two() && n.trailing_zeros() <= MAX_LOG_N,
            "bad ring degree {n}"
        );
        let primes = ntt_primes();
        let count = Self::primes_for_bits(max_bits);
        assert!(count <= primes.len(), "product too wide: {max_bits} bits");
        let tables: Vec<PrimeTables> = primes[..count].iter().map(|&p| PrimeTables::new(p, n)).collect();
        let garner_inv = (0..count)
            .map(|i| {
                (0..i)
                    .map(|j| pow_mod(primes[j] % primes[i], primes[i] - 2, primes[i]))
                    .collect()
            })
            .collect();
        let mut moduli = Vec::with_capacity(count + 1);
        let mut m = BigUint::one();
        moduli.push((m.clone(), BigUint::zero()));
        for &p in &primes[..count] {
            m *= p;
            moduli.push((m.clone(), &m >> 1));
        }
        NttPlan {
            n,
            tables,
            garner_inv,
            moduli,
        }
    }

    /// Primes needed so that the CRT modulus exceeds `2 * 2^bits`.
    pub fn primes_for_bits(bits: u64) -> usize {
        // Every prime exceeds 2^61.
        (bits as usize + 2).div_ceil(61)
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn max_primes(&self) -> usize {
        self.tables.len()
    }

    fn residue_of(limbs: &[u64], negative: bool, p: u64) -> u64 {
        let mut r = 0u64;
        for &limb in limbs.iter().rev() {
            r = (((r as u128) << 64 | limb as u128) % p as u128) as u64;
        }
        if negative && r != 0 {
            p - r
        } else {
            r
        }
    }

    fn forward_limbs<I>(&self, coeffs: I, primes: usize) -> NttPoly
    where
        I: Iterator<Item = (Vec<u64>, bool)>,
    {
        assert!(primes <= self.tables.len());
        let digits: Vec<(Vec<u64>, bool)> = coeffs.collect();
        assert_eq!(digits.len(), self.n);
        let residues = self.tables[..primes]
            .iter()
            .map(|tab| {
                let mut v: Vec<u64> = digits
                    .iter()
                    .map(|(limbs, neg)| Self::residue_of(limbs, *neg, tab.p))
                    .collect();
                tab.forward(&mut v);
                v
            })
            .collect();
        NttPoly { residues }
    }

    pub fn forward_signed(&self, a: &[BigInt], primes: usize) -> NttPoly {
        self.forward_limbs(
            a.iter()
                .map(|c| (c.magnitude().to_u64_digits(), c.sign() == Sign::Minus)),
            primes,
        )
    }

    pub fn forward_unsigned(&self, a: &[BigUint], primes: usize) -> NttPoly {
        self.forward_limbs(a.iter().map(|c| (c.to_u64_digits(), false)), primes)
    }

    pub fn forward_small(&self, a: &[i64], primes: usize) -> NttPoly {
        self.forward_limbs(a.iter().map(|&c| (vec![c.unsigned_abs()], c < 0)), primes)
    }

    pub fn zero(&self, primes: usize) -> NttPoly {
        NttPoly {
            residues: vec![vec![0; self.n]; primes],
        }
    }

    /// `acc += a * b` pointwise.
    pub fn mul_acc(&self, acc: &mut NttPoly, a: &NttPoly, b: &NttPoly) {
        for (k, out) in acc.residues.iter_mut().enumerate() {
            let p = self.tables[k].p;
            for ((o, &x), &y) in out.iter_mut().zip(&a.residues[k]).zip(&b.residues[k]) {
                let prod = mul_mod(x, y, p);
                *o = if *o + prod >= p { *o + prod - p } else { *o + prod };
            }
        }
    }

    pub fn mul(&self, a: &NttPoly, b: &NttPoly) -> NttPoly {
        let primes = a.prime_count().min(b.prime_count());
        let mut acc = self.zero(primes);
        self.mul_acc(&mut acc, a, b);
        acc
    }

    /// Inverse transform and centered CRT reconstruction.
    pub fn backward(&self, mut x: NttPoly) -> Vec<BigInt> {
        let k = x.prime_count();
        for (tab, v) in self.tables.iter().zip(x.residues.iter_mut()) {
            tab.inverse(v);
        }
        let primes: Vec<u64> = self.tables[..k].iter().map(|t| t.p).collect();
        let (modulus, half) = &self.moduli[k];
        let mut mixed = vec![0u64; k];
        (0..self.n)
            .map(|c| {
                for i in 0..k {
                    let p = primes[i];
                    let mut v = x.residues[i][c];
                    for (j, &m) in mixed[..i].iter().enumerate() {
                        let d = m % p;
                        v = if v >= d { v - d } else { v + p - d };
                        v = mul_mod(v, self.garner_inv[i][j], p);
                    }
                    mixed[i] = v;
                }
                let mut acc = BigUint::from(mixed[k - 1]);
                for i in (0..k - 1).rev() {
                    acc *= primes[i];
                    acc += mixed[i];
                }
                if &acc > half {
                    BigInt::from_biguint(Sign::Minus, modulus - acc)
                } else {
                    BigInt::from_biguint(Sign::Plus, acc)
                }
            })
            .collect()
    }
}

/// Reference O(n^2) negacyclic product over the integers.
pub fn negacyclic_schoolbook(a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
    let n = a.len();
    let mut out = vec![BigInt::zero(); n];
    for i in 0..n {
        if a[i].is_zero() {
            continue;
        }
        for j in 0..n {
            let prod = &a[i] * &b[j];
            if i + j < n {
                out[i + j] += prod;
            } else {
                out[i + j - n] -= prod;
            }
        }
    }
    out
}

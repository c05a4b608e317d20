//! Scalar BFV over R_q = Z_q[X]/(X^n + 1) with a single big-integer q.

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;

use super::ntt::{NttPlan, NttPoly};
use super::HeParams;

/// Coefficients in `[0, q)`.
pub(crate) type Poly = Vec<BigUint>;

pub(crate) struct RelinKey {
    pub parts: Vec<(Poly, Poly)>,
}

pub(crate) struct BfvContext {
    pub n: usize,
    pub q: BigUint,
    q_half: BigUint,
    q_bigint: BigInt,
    p: u64,
    pub delta: BigUint,
    log_w: u32,
    pub digits: usize,
    err_bound: i64,
    plan: NttPlan,
    small_primes: usize,
    tensor_primes: usize,
    pub relin_primes: usize,
}

fn ceil_log2(x: u64) -> u64 {
    64 - x.saturating_sub(1).leading_zeros() as u64
}

impl BfvContext {
    pub fn new(params: &HeParams) -> Self {
        let n = params.ring_degree();
        let q = params.ciphertext_modulus().clone();
        let p = params.plaintext_modulus().value() as u64;
        let q_bits = q.bits();
        let log_n = n.trailing_zeros() as u64;
        let log_w = params.decomp_log_base();
        let digits = q_bits.div_ceil(log_w as u64) as usize;
        let small_bits = q_bits + log_n + 1;
        let tensor_bits = 2 * q_bits + log_n + 1;
        let relin_bits = q_bits + log_w as u64 + log_n + ceil_log2(digits as u64) + 1;
        let plan = NttPlan::new(n, small_bits.max(tensor_bits).max(relin_bits));
        BfvContext {
            n,
            q_half: &q >> 1,
            q_bigint: BigInt::from(q.clone()),
            delta: &q / p,
            q,
            p,
            log_w,
            digits,
            err_bound: (6.0 * params.error_stddev()).floor().max(1.0) as i64,
            small_primes: NttPlan::primes_for_bits(small_bits),
            tensor_primes: NttPlan::primes_for_bits(tensor_bits),
            relin_primes: NttPlan::primes_for_bits(relin_bits),
            plan,
        }
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Poly {
        (0..self.n).map(|_| rng.gen_biguint_below(&self.q)).collect()
    }

    pub fn sample_ternary<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        (0..self.n).map(|_| rng.gen_range(-1..=1)).collect()
    }

    /// Uniform integers in `[-6σ, 6σ]`.
    pub fn sample_error<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        let b = self.err_bound;
        (0..self.n).map(|_| rng.gen_range(-b..=b)).collect()
    }

    pub fn reduce_signed(&self, x: &BigInt) -> BigUint {
        x.mod_floor(&self.q_bigint).magnitude().clone()
    }

    fn reduce_signed_vec(&self, v: Vec<BigInt>) -> Poly {
        v.iter().map(|x| self.reduce_signed(x)).collect()
    }

    pub fn lift_small(&self, v: &[i64]) -> Poly {
        v.iter().map(|&x| self.reduce_signed(&BigInt::from(x))).collect()
    }

    pub fn centered(&self, x: &BigUint) -> BigInt {
        if x > &self.q_half {
            -BigInt::from(&self.q - x)
        } else {
            BigInt::from(x.clone())
        }
    }

    pub fn add(&self, a: &Poly, b: &Poly) -> Poly {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let s = x + y;
                if s >= self.q {
                    s - &self.q
                } else {
                    s
                }
            })
            .collect()
    }

    pub fn neg(&self, a: &Poly) -> Poly {
        a.iter()
            .map(|x| if x.is_zero() { x.clone() } else { &self.q - x })
            .collect()
    }

    pub fn sub(&self, a: &Poly, b: &Poly) -> Poly {
        a.iter()
            .zip(b)
            .map(|(x, y)| if x >= y { x - y } else { x + &self.q - y })
            .collect()
    }

    pub fn add_constant(&self, a: &Poly, k: &BigUint) -> Poly {
        let mut out = a.clone();
        out[0] = (&out[0] + k) % &self.q;
        out
    }

    /// `Σ k_i a_i mod q` with signed small scalars, reduced once.
    pub fn scalar_dot(&self, terms: &[(&Poly, i64)]) -> Poly {
        (0..self.n)
            .map(|c| {
                let mut pos = BigUint::zero();
                let mut neg = BigUint::zero();
                for (poly, k) in terms {
                    match k.cmp(&0) {
                        std::cmp::Ordering::Greater => pos += &poly[c] * k.unsigned_abs(),
                        std::cmp::Ordering::Less => neg += &poly[c] * k.unsigned_abs(),
                        std::cmp::Ordering::Equal => {}
                    }
                }
                let pos = pos % &self.q;
                let neg = neg % &self.q;
                if pos >= neg {
                    pos - neg
                } else {
                    pos + &self.q - neg
                }
            })
            .collect()
    }

    /// `a * s mod q` for a short `s`.
    pub fn mul_small(&self, a: &Poly, s: &[i64]) -> Poly {
        let k = self.small_primes;
        let prod = self
            .plan
            .mul(&self.plan.forward_unsigned(a, k), &self.plan.forward_small(s, k));
        self.reduce_signed_vec(self.plan.backward(prod))
    }

    /// Exact `s * s` in Z[X]/(X^n+1) for short `s`.
    pub fn square_small(&self, s: &[i64]) -> Vec<i64> {
        let f = self.plan.forward_small(s, 1);
        self.plan
            .backward(self.plan.mul(&f, &f))
            .iter()
            .map(|x| x.to_i64().expect("short square fits"))
            .collect()
    }

    pub fn keygen<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<i64>, Poly, Poly, RelinKey) {
        let s = self.sample_ternary(rng);
        let a = self.sample_uniform(rng);
        let e = self.sample_error(rng);
        // b = -(a s + e)
        let b = self.neg(&self.add(&self.mul_small(&a, &s), &self.lift_small(&e)));
        let s2 = self.lift_small(&self.square_small(&s));
        let mut parts = Vec::with_capacity(self.digits);
        let mut w_pow = BigUint::from(1u8);
        for _ in 0..self.digits {
            let aj = self.sample_uniform(rng);
            let ej = self.sample_error(rng);
            let mask = self.neg(&self.add(&self.mul_small(&aj, &s), &self.lift_small(&ej)));
            let scaled: Poly = s2.iter().map(|x| (x * &w_pow) % &self.q).collect();
            parts.push((self.add(&mask, &scaled), aj));
            w_pow <<= self.log_w;
        }
        (s, b, a, RelinKey { parts })
    }

    pub fn relin_ntt(&self, key: &RelinKey) -> Vec<(NttPoly, NttPoly)> {
        let k = self.relin_primes;
        key.parts
            .iter()
            .map(|(k0, k1)| (self.plan.forward_unsigned(k0, k), self.plan.forward_unsigned(k1, k)))
            .collect()
    }

    pub fn encrypt<R: Rng + ?Sized>(&self, b: &Poly, a: &Poly, m: u64, rng: &mut R) -> (Poly, Poly) {
        let u = self.sample_ternary(rng);
        let e1 = self.sample_error(rng);
        let e2 = self.sample_error(rng);
        let c0 = self.add(&self.mul_small(b, &u), &self.lift_small(&e1));
        let c0 = self.add_constant(&c0, &(&self.delta * m));
        let c1 = self.add(&self.mul_small(a, &u), &self.lift_small(&e2));
        (c0, c1)
    }

    /// `c0 + c1 s mod q`.
    pub fn phase(&self, c0: &Poly, c1: &Poly, s: &[i64]) -> Poly {
        self.add(c0, &self.mul_small(c1, s))
    }

    /// `round(p * v / q) mod p` of the constant coefficient.
    pub fn decode(&self, phase: &Poly) -> u64 {
        let num = (&phase[0] * self.p * 2u8) + &self.q;
        let den = &self.q * 2u8;
        ((num / den) % self.p).to_u64().expect("reduced mod p")
    }

    /// Largest centered coefficient of `phase - Δ m`.
    pub fn noise_magnitude(&self, phase: &Poly, m: u64) -> BigUint {
        let shifted = self.sub(phase, &{
            let mut z = vec![BigUint::zero(); self.n];
            z[0] = &self.delta * m % &self.q;
            z
        });
        shifted
            .iter()
            .map(|x| self.centered(x).magnitude().clone())
            .max()
            .unwrap_or_default()
    }

    fn scale_round(&self, x: &BigInt) -> BigUint {
        // floor((2 p x + q) / 2q)
        let num = x * BigInt::from(2 * self.p) + &self.q_bigint;
        let den = &self.q_bigint * 2;
        self.reduce_signed(&num.div_floor(&den))
    }

    /// Digit `j` of every coefficient in base `2^log_w`.
    pub fn decompose(&self, a: &Poly) -> Vec<Vec<i64>> {
        let limbs: Vec<Vec<u64>> = a.iter().map(|x| x.to_u64_digits()).collect();
        let w = self.log_w as usize;
        (0..self.digits)
            .map(|j| limbs.iter().map(|l| bit_slice(l, j * w, w) as i64).collect())
            .collect()
    }

    /// Tensor, rescale by p/q, and relinearize with `keys`.
    pub fn mul(&self, (c0, c1): (&Poly, &Poly), (d0, d1): (&Poly, &Poly), keys: &[(NttPoly, NttPoly)]) -> (Poly, Poly) {
        let k = self.tensor_primes;
        let lift = |p: &Poly| -> Vec<BigInt> { p.iter().map(|x| self.centered(x)).collect() };
        let fc0 = self.plan.forward_signed(&lift(c0), k);
        let fc1 = self.plan.forward_signed(&lift(c1), k);
        let fd0 = self.plan.forward_signed(&lift(d0), k);
        let fd1 = self.plan.forward_signed(&lift(d1), k);
        let e0 = self.plan.mul(&fc0, &fd0);
        let mut e1 = self.plan.mul(&fc0, &fd1);
        self.plan.mul_acc(&mut e1, &fc1, &fd0);
        let e2 = self.plan.mul(&fc1, &fd1);
        let scale = |f: NttPoly| -> Poly { self.plan.backward(f).iter().map(|x| self.scale_round(x)).collect() };
        let (e0, e1, e2) = (scale(e0), scale(e1), scale(e2));

        let kr = self.relin_primes;
        let mut acc0 = self.plan.zero(kr);
        let mut acc1 = self.plan.zero(kr);
        for (digit, (k0, k1)) in self.decompose(&e2).iter().zip(keys) {
            let fd = self.plan.forward_small(digit, kr);
            self.plan.mul_acc(&mut acc0, &fd, k0);
            self.plan.mul_acc(&mut acc1, &fd, k1);
        }
        let r0 = self.reduce_signed_vec(self.plan.backward(acc0));
        let r1 = self.reduce_signed_vec(self.plan.backward(acc1));
        (self.add(&e0, &r0), self.add(&e1, &r1))
    }
}

fn bit_slice(limbs: &[u64], start: usize, len: usize) -> u64 {
    let mut out = 0u64;
    for b in 0..len {
        let bit = start + b;
        let limb = bit / 64;
        if limb >= limbs.len() {
            break;
        }
        out |= ((limbs[limb] >> (bit % 64)) & 1) << b;
    }
    out
}

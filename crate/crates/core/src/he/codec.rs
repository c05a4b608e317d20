//! Serialization of HE parameters, ciphertexts and public material.
//!
//! ```text
//! params      kind u8 | n u32 | log_w u32 | stddev f64 | q blob (LE)
//! ciphertext  kind u8 | depth u32 | body
//!   kind 0    value u32
//!   kind 1    poly c0 | poly c1
//! poly        count u32 | width u32 | count * width bytes, LE coefficients
//! public      kind u8 | (kind 1) poly b | poly a | digits u32 | digits * (poly, poly)
//! ```
//!
//! The plaintext modulus travels separately (it is part of the Pasta
//! parameters).

use std::sync::OnceLock;

use num_bigint::BigUint;

use super::bfv::{Poly, RelinKey};
use super::{BackendKind, CtBody, HeCiphertext, HeContext, HeParams, HePublicMaterial, PublicInner};
use crate::codec::{ByteReader, ByteWriter, DecodeError};
use crate::field::PrimeModulus;

fn kind_byte(kind: BackendKind) -> u8 {
    match kind {
        BackendKind::Transparent => 0,
        BackendKind::BfvToy => 1,
    }
}

fn kind_from(b: u8) -> Result<BackendKind, DecodeError> {
    match b {
        0 => Ok(BackendKind::Transparent),
        1 => Ok(BackendKind::BfvToy),
        other => Err(DecodeError::Invalid(format!("unknown backend kind {other}"))),
    }
}

pub fn write_params(w: &mut ByteWriter, params: &HeParams) {
    w.u8(kind_byte(params.kind))
        .u32(params.ring_degree as u32)
        .u32(params.decomp_log_base)
        .f64(params.error_stddev)
        .blob(&params.ciphertext_modulus.to_bytes_le());
}

pub fn read_params(r: &mut ByteReader<'_>, p: PrimeModulus) -> Result<HeParams, DecodeError> {
    let kind = kind_from(r.u8()?)?;
    let n = r.u32()? as usize;
    let log_w = r.u32()?;
    let stddev = r.f64()?;
    let q = BigUint::from_bytes_le(r.blob()?);
    HeParams::new(kind, p, n, q, log_w, stddev).map_err(|e| DecodeError::Invalid(e.to_string()))
}

fn write_poly(w: &mut ByteWriter, poly: &Poly, width: usize) {
    w.u32(poly.len() as u32).u32(width as u32);
    for c in poly {
        let mut bytes = c.to_bytes_le();
        bytes.resize(width, 0);
        w.bytes(&bytes);
    }
}

fn read_poly(r: &mut ByteReader<'_>, ctx: &HeContext) -> Result<Poly, DecodeError> {
    let n = r.u32()? as usize;
    let width = r.u32()? as usize;
    let expected = ctx.params.ring_degree;
    let q = &ctx.params.ciphertext_modulus;
    if n != expected {
        return Err(DecodeError::Invalid(format!(
            "polynomial has {n} coefficients, expected {expected}"
        )));
    }
    if width != coeff_width(q) {
        return Err(DecodeError::Invalid(format!("coefficient width {width}")));
    }
    let raw = r.take(n * width)?;
    raw.chunks_exact(width)
        .map(|c| {
            let v = BigUint::from_bytes_le(c);
            if &v >= q {
                Err(DecodeError::Invalid("coefficient not reduced mod q".into()))
            } else {
                Ok(v)
            }
        })
        .collect()
}

fn coeff_width(q: &BigUint) -> usize {
    q.bits().div_ceil(8) as usize
}

pub fn write_ciphertext(w: &mut ByteWriter, ct: &HeCiphertext, params: &HeParams) {
    match &ct.body {
        CtBody::Transparent(v) => {
            w.u8(0).u32(ct.depth).u32(v.value());
        }
        CtBody::Bfv { c0, c1 } => {
            let width = coeff_width(&params.ciphertext_modulus);
            w.u8(1).u32(ct.depth);
            write_poly(w, c0, width);
            write_poly(w, c1, width);
        }
    }
}

/// Decodes a ciphertext and binds it to `params`.
pub fn read_ciphertext(r: &mut ByteReader<'_>, ctx_params: &HeParams) -> Result<HeCiphertext, DecodeError> {
    let ctx = HeContext::new_light(ctx_params.clone());
    read_ciphertext_in(r, &ctx)
}

pub(crate) fn read_ciphertext_in(r: &mut ByteReader<'_>, ctx: &HeContext) -> Result<HeCiphertext, DecodeError> {
    let kind = kind_from(r.u8()?)?;
    if kind != ctx.params.kind {
        return Err(DecodeError::Invalid(format!(
            "ciphertext kind {kind} under {} parameters",
            ctx.params.kind
        )));
    }
    let depth = r.u32()?;
    let body = match kind {
        BackendKind::Transparent => {
            let v = r.u32()?;
            let elem = ctx
                .params
                .plaintext_modulus
                .element(v as u64)
                .map_err(|e| DecodeError::Invalid(e.to_string()))?;
            CtBody::Transparent(elem)
        }
        BackendKind::BfvToy => {
            let c0 = read_poly(r, ctx)?;
            let c1 = read_poly(r, ctx)?;
            CtBody::Bfv { c0, c1 }
        }
    };
    Ok(HeCiphertext {
        depth,
        params_id: ctx.fingerprint,
        body,
    })
}

pub fn write_public(w: &mut ByteWriter, pk: &HePublicMaterial) {
    let params = &pk.ctx.params;
    w.u8(kind_byte(params.kind));
    if let PublicInner::Bfv { b, a, relin, .. } = &pk.inner {
        let width = coeff_width(&params.ciphertext_modulus);
        write_poly(w, b, width);
        write_poly(w, a, width);
        w.u32(relin.parts.len() as u32);
        for (k0, k1) in &relin.parts {
            write_poly(w, k0, width);
            write_poly(w, k1, width);
        }
    }
}

pub fn read_public(r: &mut ByteReader<'_>, params: &HeParams) -> Result<HePublicMaterial, DecodeError> {
    let kind = kind_from(r.u8()?)?;
    if kind != params.kind {
        return Err(DecodeError::Invalid(format!(
            "public material kind {kind} under {} parameters",
            params.kind
        )));
    }
    let ctx = HeContext::new(params.clone());
    let inner = match kind {
        BackendKind::Transparent => PublicInner::Transparent,
        BackendKind::BfvToy => {
            let b = read_poly(r, &ctx)?;
            let a = read_poly(r, &ctx)?;
            let digits = r.u32()? as usize;
            if digits != ctx.bfv().digits {
                return Err(DecodeError::Invalid(format!("{digits} relinearization digits")));
            }
            let mut parts = Vec::with_capacity(digits);
            for _ in 0..digits {
                let k0 = read_poly(r, &ctx)?;
                let k1 = read_poly(r, &ctx)?;
                parts.push((k0, k1));
            }
            PublicInner::Bfv {
                b,
                a,
                relin: RelinKey { parts },
                relin_ntt: OnceLock::new(),
            }
        }
    };
    Ok(HePublicMaterial { ctx, inner })
}

impl HePublicMaterial {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        write_public(&mut w, self);
        w.into_bytes()
    }

    pub fn encode_ciphertext(&self, w: &mut ByteWriter, ct: &HeCiphertext) {
        write_ciphertext(w, ct, &self.ctx.params);
    }

    pub fn decode_ciphertext(&self, r: &mut ByteReader<'_>) -> Result<HeCiphertext, DecodeError> {
        read_ciphertext_in(r, &self.ctx)
    }
}

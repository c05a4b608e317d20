use super::{Matrix, PastaError, PastaParams, PastaSecretKey, PastaState};
use crate::field::{FieldElement, PrimeModulus};
use crate::xof::{StreamPosition, XofStream, ROUND_MATERIAL_TAG};

/// One affine layer: per-half matrix and constant, then the optional
/// `(2y_L + y_R, y_L + 2y_R)` mix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineLayer {
    pub m_left: Matrix,
    pub m_right: Matrix,
    pub c_left: Vec<FieldElement>,
    pub c_right: Vec<FieldElement>,
}

impl AffineLayer {
    pub fn half_len(&self) -> usize {
        self.c_left.len()
    }

    /// Identity matrices, zero constants.
    pub fn identity(t: usize) -> Self {
        AffineLayer {
            m_left: Matrix::identity(t),
            m_right: Matrix::identity(t),
            c_left: vec![FieldElement::ZERO; t],
            c_right: vec![FieldElement::ZERO; t],
        }
    }
}

/// Layers `A_0 ..= A_r` for one stream position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundMaterial {
    pub layers: Vec<AffineLayer>,
}

fn sample_vec(p: PrimeModulus, len: usize, stream: &mut XofStream) -> Result<Vec<FieldElement>, PastaError> {
    (0..len).map(|_| p.sample(stream).map_err(PastaError::from)).collect()
}

fn sample_invertible(p: PrimeModulus, t: usize, stream: &mut XofStream) -> Result<Matrix, PastaError> {
    loop {
        let m = Matrix::from_rows(t, sample_vec(p, t * t, stream)?).expect("t*t entries");
        if m.is_invertible(p) {
            return Ok(m);
        }
    }
}

/// Samples, for j = 0..=r and in this order, `m_left`, `m_right` (row-major,
/// resampled whole while singular), `c_left`, `c_right`.
pub fn derive_round_material(params: &PastaParams, pos: StreamPosition) -> Result<RoundMaterial, PastaError> {
    let p = params.modulus();
    let t = params.t();
    let mut stream = XofStream::new(ROUND_MATERIAL_TAG, pos)?;
    let mut layers = Vec::with_capacity(params.rounds() + 1);
    for _ in 0..=params.rounds() {
        let m_left = sample_invertible(p, t, &mut stream)?;
        let m_right = sample_invertible(p, t, &mut stream)?;
        let c_left = sample_vec(p, t, &mut stream)?;
        let c_right = sample_vec(p, t, &mut stream)?;
        layers.push(AffineLayer {
            m_left,
            m_right,
            c_left,
            c_right,
        });
    }
    Ok(RoundMaterial { layers })
}

pub fn affine_apply(layer: &AffineLayer, s: &PastaState, params: &PastaParams) -> Result<PastaState, PastaError> {
    let t = layer.half_len();
    for got in [
        s.left.len(),
        s.right.len(),
        layer.m_left.dim(),
        layer.m_right.dim(),
        layer.c_right.len(),
    ] {
        if got != t {
            return Err(PastaError::DimensionMismatch { expected: t, got });
        }
    }
    let p = params.modulus();
    let mut left = layer.m_left.mul_vec(&s.left, p);
    let mut right = layer.m_right.mul_vec(&s.right, p);
    for (y, c) in left.iter_mut().zip(&layer.c_left) {
        *y = p.add(*y, *c);
    }
    for (y, c) in right.iter_mut().zip(&layer.c_right) {
        *y = p.add(*y, *c);
    }
    if params.mix_halves() {
        for (l, r) in left.iter_mut().zip(right.iter_mut()) {
            let u = p.add(*l, *r);
            *l = p.add(*l, u);
            *r = p.add(*r, u);
        }
    }
    Ok(PastaState { left, right })
}

/// `out_0 = x_0`, `out_i = x_i + x_{i-1}^2` over the whole 2t-vector, using
/// the input words on both sides.
pub fn sbox_feistel(s: &PastaState, p: PrimeModulus) -> PastaState {
    let x = s.to_words();
    let mut out = x.clone();
    for i in 1..x.len() {
        out[i] = p.add(x[i], p.mul(x[i - 1], x[i - 1]));
    }
    PastaState::from_words(&out)
}

pub fn sbox_cube(s: &PastaState, p: PrimeModulus) -> PastaState {
    let cube = |v: &FieldElement| p.mul(p.mul(*v, *v), *v);
    PastaState {
        left: s.left.iter().map(cube).collect(),
        right: s.right.iter().map(cube).collect(),
    }
}

/// Runs the permutation with precomputed material.
pub(crate) fn permute_with(
    material: &RoundMaterial,
    input: PastaState,
    params: &PastaParams,
) -> Result<PastaState, PastaError> {
    let p = params.modulus();
    let r = params.rounds();
    let mut state = affine_apply(&material.layers[0], &input, params)?;
    for layer in &material.layers[1..r] {
        state = affine_apply(layer, &sbox_feistel(&state, p), params)?;
    }
    affine_apply(&material.layers[r], &sbox_cube(&state, p), params)
}

pub fn pasta_permutation(
    key: &PastaSecretKey,
    pos: StreamPosition,
    params: &PastaParams,
) -> Result<PastaState, PastaError> {
    let material = derive_round_material(params, pos)?;
    permute_with(&material, PastaState::from_words(key.words()), params)
}

/// `left_t` of the permutation output.
pub fn keystream_block(
    key: &PastaSecretKey,
    pos: StreamPosition,
    params: &PastaParams,
) -> Result<Vec<FieldElement>, PastaError> {
    Ok(pasta_permutation(key, pos, params)?.left)
}

use crate::field::{FieldElement, PrimeModulus};

/// Square matrix over F_p, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    dim: usize,
    entries: Vec<FieldElement>,
}

impl Matrix {
    pub fn from_rows(dim: usize, entries: Vec<FieldElement>) -> Option<Self> {
        (entries.len() == dim * dim).then_some(Matrix { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![FieldElement::ZERO; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = FieldElement::ONE;
        }
        Matrix { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[FieldElement] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[FieldElement] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, row: usize, col: usize) -> FieldElement {
        self.entries[row * self.dim + col]
    }

    /// `self * x`. Accumulates in u64 and reduces once per row when that
    /// cannot overflow.
    pub fn mul_vec(&self, x: &[FieldElement], p: PrimeModulus) -> Vec<FieldElement> {
        debug_assert_eq!(x.len(), self.dim);
        let pv = p.value() as u64;
        let max_term = (pv - 1) * (pv - 1);
        let lazy = max_term.checked_mul(self.dim as u64).is_some();
        (0..self.dim)
            .map(|i| {
                let row = self.row(i);
                if lazy {
                    let acc: u64 = row
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a.value() as u64 * b.value() as u64)
                        .sum();
                    p.reduce(acc)
                } else {
                    row.iter()
                        .zip(x)
                        .fold(FieldElement::ZERO, |acc, (&a, &b)| p.add(acc, p.mul(a, b)))
                }
            })
            .collect()
    }

    /// Determinant by Gaussian elimination mod p.
    pub fn determinant(&self, p: PrimeModulus) -> FieldElement {
        let n = self.dim;
        let mut a = self.entries.clone();
        let mut det = FieldElement::ONE;
        for col in 0..n {
            let Some(pivot) = (col..n).find(|&r| !a[r * n + col].is_zero()) else {
                return FieldElement::ZERO;
            };
            if pivot != col {
                for k in 0..n {
                    a.swap(pivot * n + k, col * n + k);
                }
                det = p.neg(det);
            }
            let pv = a[col * n + col];
            det = p.mul(det, pv);
            let inv = p.inv(pv).expect("pivot is nonzero");
            for r in col + 1..n {
                let factor = p.mul(a[r * n + col], inv);
                if factor.is_zero() {
                    continue;
                }
                for k in col..n {
                    let sub = p.mul(factor, a[col * n + k]);
                    a[r * n + k] = p.sub(a[r * n + k], sub);
                }
            }
        }
        det
    }

    pub fn is_invertible(&self, p: PrimeModulus) -> bool {
        !self.determinant(p).is_zero()
    }
}

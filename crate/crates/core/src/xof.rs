//! SHAKE128 byte streams keyed by public stream positions.
//!
//! The absorbed seed is `tag || 0x00 || nonce_le64 || counter_le64`. Only
//! public values go in, so client and server derive the same bytes.

use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::{Shake128, Shake128Reader};
use thiserror::Error;

/// Domain tag for Pasta round material.
pub const ROUND_MATERIAL_TAG: &[u8] = b"HHEML-PASTA-RM";

pub const MAX_TAG_LEN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum XofError {
    #[error("domain tag must be 1..={MAX_TAG_LEN} bytes, got {0}")]
    BadTag(usize),
}

/// Public `(nonce, counter)` pair that selects one keystream block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct StreamPosition {
    pub nonce: u64,
    pub counter: u64,
}

impl StreamPosition {
    pub fn new(nonce: u64, counter: u64) -> Self {
        StreamPosition { nonce, counter }
    }
}

/// The exact byte string absorbed for `(tag, pos)`.
pub fn seed_bytes(tag: &[u8], pos: StreamPosition) -> Result<Vec<u8>, XofError> {
    if tag.is_empty() || tag.len() > MAX_TAG_LEN {
        return Err(XofError::BadTag(tag.len()));
    }
    let mut seed = Vec::with_capacity(tag.len() + 17);
    seed.extend_from_slice(tag);
    seed.push(0x00);
    seed.extend_from_slice(&pos.nonce.to_le_bytes());
    seed.extend_from_slice(&pos.counter.to_le_bytes());
    Ok(seed)
}

enum Source {
    Shake(Box<Shake128Reader>),
    #[cfg(test)]
    Fixed(Vec<u8>),
}

pub struct XofStream {
    seed: Vec<u8>,
    offset: u64,
    source: Source,
}

impl XofStream {
    pub fn new(tag: &[u8], pos: StreamPosition) -> Result<Self, XofError> {
        let seed = seed_bytes(tag, pos)?;
        let mut hasher = Shake128::default();
        hasher.update(&seed);
        Ok(XofStream {
            seed,
            offset: 0,
            source: Source::Shake(Box::new(hasher.finalize_xof())),
        })
    }

    /// Stream over scripted bytes, zero-padded once exhausted.
    #[cfg(test)]
    pub(crate) fn from_bytes(bytes: &[u8]) -> Self {
        XofStream {
            seed: Vec::new(),
            offset: 0,
            source: Source::Fixed(bytes.to_vec()),
        }
    }

    pub fn seed(&self) -> &[u8] {
        &self.seed
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn fill(&mut self, out: &mut [u8]) {
        match &mut self.source {
            Source::Shake(reader) => reader.read(out),
            #[cfg(test)]
            Source::Fixed(bytes) => {
                let start = (self.offset as usize).min(bytes.len());
                let avail = &bytes[start..];
                let n = avail.len().min(out.len());
                out[..n].copy_from_slice(&avail[..n]);
                out[n..].fill(0);
            }
        }
        self.offset += out.len() as u64;
    }

    pub fn squeeze(&mut self, n: usize) -> Vec<u8> {
        let mut out = vec![0u8; n];
        self.fill(&mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn hex(bytes: &[u8]) -> String {
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }

    #[test]
    fn seed_layout() {
        let seed = seed_bytes(ROUND_MATERIAL_TAG, StreamPosition::new(1, 2)).unwrap();
        let mut want = ROUND_MATERIAL_TAG.to_vec();
        want.extend_from_slice(&[0, 1, 0, 0, 0, 0, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(seed, want);
    }

    #[test]
    fn bad_tags() {
        let pos = StreamPosition::default();
        assert_eq!(XofStream::new(b"", pos).err(), Some(XofError::BadTag(0)));
        assert_eq!(XofStream::new(&[b'x'; 17], pos).err(), Some(XofError::BadTag(17)));
        assert!(XofStream::new(&[b'x'; 16], pos).is_ok());
    }

    // Expected bytes computed with Python's hashlib.shake_128.
    #[test]
    fn matches_reference_shake128() {
        let mut s = XofStream::new(ROUND_MATERIAL_TAG, StreamPosition::new(0, 0)).unwrap();
        assert_eq!(
            hex(&s.squeeze(32)),
            "50764a577acd7bf4ec3f11faf1c2adc0256496da57e78324e35cc3d444095179"
        );
        let mut s = XofStream::new(ROUND_MATERIAL_TAG, StreamPosition::new(1, 2)).unwrap();
        assert_eq!(
            hex(&s.squeeze(32)),
            "eb4560b29505db833e6b375decb1206272fc4adfad1959e9c2858eb27d75fed4"
        );
    }

    #[test]
    fn squeeze_is_split_invariant() {
        let pos = StreamPosition::new(9, 9);
        let whole = XofStream::new(ROUND_MATERIAL_TAG, pos).unwrap().squeeze(32);
        let mut s = XofStream::new(ROUND_MATERIAL_TAG, pos).unwrap();
        assert!(s.squeeze(0).is_empty());
        let mut parts = s.squeeze(16);
        parts.extend(s.squeeze(16));
        assert_eq!(parts, whole);
        assert_eq!(s.offset(), 32);
    }

    #[test]
    fn counters_separate_streams() {
        let a = XofStream::new(ROUND_MATERIAL_TAG, StreamPosition::new(0, 0))
            .unwrap()
            .squeeze(64);
        let b = XofStream::new(ROUND_MATERIAL_TAG, StreamPosition::new(0, 1))
            .unwrap()
            .squeeze(64);
        assert_ne!(a, b);
    }

    #[test]
    fn distinct_positions_distinct_prefixes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut positions = HashSet::new();
        let mut prefixes = HashSet::new();
        while positions.len() < 10_000 {
            let pos = StreamPosition::new(rng.gen(), rng.gen_range(0..64));
            if positions.insert(pos) {
                let bytes = XofStream::new(ROUND_MATERIAL_TAG, pos).unwrap().squeeze(64);
                assert!(prefixes.insert(bytes));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn any_partition_concatenates_identically(cuts in proptest::collection::vec(0usize..40, 0..8)) {
            let pos = StreamPosition::new(5, 6);
            let total: usize = cuts.iter().sum();
            let whole = XofStream::new(b"split", pos).unwrap().squeeze(total);
            let mut s = XofStream::new(b"split", pos).unwrap();
            let mut joined = Vec::new();
            for c in cuts {
                joined.extend(s.squeeze(c));
            }
            proptest::prop_assert_eq!(joined, whole);
        }
    }
}

//! On-disk formats: word files, the `HHE1` ciphertext container, key
//! files and the JSON config.
//!
//! ```text
//! HHE1 container   "HHE1" | p u32 | t u32 | r u32 | nonce u64 | word_count u64 | words u32...
//! ```
//!
//! All integers little-endian.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{ByteReader, ByteWriter, DecodeError};
use crate::field::FieldElement;
use crate::he::{BackendKind, HeParams};
use crate::pasta::{PastaError, PastaParams, PastaSecretKey, Profile, SymCiphertext};
use crate::protocol::ModelStore;
use crate::transcipher::{recommended_modulus_bits, LinearModel};

pub const CONTAINER_MAGIC: [u8; 4] = *b"HHE1";
pub const CONTAINER_HEADER_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("bad container header: {0}")]
    BadHeader(String),
    #[error("word file length {0} is not a multiple of 4")]
    RaggedWords(usize),
    #[error(transparent)]
    Pasta(#[from] PastaError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid settings: {0}")]
    Invalid(String),
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, FileError> {
    std::fs::read(path).map_err(|source| FileError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FileError> {
    std::fs::write(path, bytes).map_err(|source| FileError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn words_from_bytes(bytes: &[u8]) -> Result<Vec<u32>, FileError> {
    if !bytes.len().is_multiple_of(4) {
        return Err(FileError::RaggedWords(bytes.len()));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

pub fn words_to_bytes(words: &[u32]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}

pub fn encode_container(pasta: &PastaParams, ct: &SymCiphertext) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(&CONTAINER_MAGIC)
        .u32(pasta.p())
        .u32(pasta.t() as u32)
        .u32(pasta.rounds() as u32)
        .u64(ct.nonce)
        .u64(ct.words.len() as u64);
    for word in &ct.words {
        w.u32(word.value());
    }
    w.into_bytes()
}

/// Container header fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainerHeader {
    pub p: u32,
    pub t: u32,
    pub r: u32,
    pub nonce: u64,
    pub word_count: u64,
}

pub fn decode_container(bytes: &[u8]) -> Result<(ContainerHeader, Vec<u32>), FileError> {
    let bad = |e: DecodeError| FileError::BadHeader(e.to_string());
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4).map_err(bad)?;
    if magic != CONTAINER_MAGIC {
        return Err(FileError::BadHeader(format!("magic {magic:02x?}")));
    }
    let header = ContainerHeader {
        p: r.u32().map_err(bad)?,
        t: r.u32().map_err(bad)?,
        r: r.u32().map_err(bad)?,
        nonce: r.u64().map_err(bad)?,
        word_count: r.u64().map_err(bad)?,
    };
    if header.word_count.saturating_mul(4) != r.remaining() as u64 {
        return Err(FileError::BadHeader(format!(
            "word_count {} but {} payload bytes",
            header.word_count,
            r.remaining()
        )));
    }
    let words = (0..header.word_count)
        .map(|_| r.u32())
        .collect::<Result<_, _>>()
        .map_err(bad)?;
    Ok((header, words))
}

/// Parses a container written for `pasta`, checking header and word range.
pub fn open_container(bytes: &[u8], pasta: &PastaParams) -> Result<SymCiphertext, FileError> {
    let (h, words) = decode_container(bytes)?;
    if (h.p, h.t as usize, h.r as usize) != (pasta.p(), pasta.t(), pasta.rounds()) {
        return Err(FileError::BadHeader(format!(
            "container is for (p={}, t={}, r={}), key is for (p={}, t={}, r={})",
            h.p,
            h.t,
            h.r,
            pasta.p(),
            pasta.t(),
            pasta.rounds()
        )));
    }
    let words = crate::pasta::reduce_words(&words, pasta.modulus())?;
    Ok(SymCiphertext { nonce: h.nonce, words })
}

/// HE parameter overrides; unset fields use the backend defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring_degree: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus_bits: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomp_log_base: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_stddev: Option<f64>,
}

impl HeSettings {
    /// Fields set in `over` replace those in `self`.
    pub fn overridden_by(&self, over: &HeSettings) -> HeSettings {
        HeSettings {
            ring_degree: over.ring_degree.or(self.ring_degree),
            modulus_bits: over.modulus_bits.or(self.modulus_bits),
            decomp_log_base: over.decomp_log_base.or(self.decomp_log_base),
            error_stddev: over.error_stddev.or(self.error_stddev),
        }
    }

    /// Fills unset fields. Without an explicit modulus the size is chosen
    /// to fit the keystream circuit plus a `fan_in` linear layer with
    /// optional squaring.
    pub fn filled(&self, kind: BackendKind, pasta: &PastaParams, fan_in: usize, activation: bool) -> HeSettings {
        let base = HeParams::for_backend(kind, pasta.modulus());
        HeSettings {
            ring_degree: Some(self.ring_degree.unwrap_or(base.ring_degree())),
            modulus_bits: Some(
                self.modulus_bits
                    .unwrap_or_else(|| recommended_modulus_bits(kind, pasta, fan_in, activation)),
            ),
            decomp_log_base: Some(self.decomp_log_base.unwrap_or(base.decomp_log_base())),
            error_stddev: Some(self.error_stddev.unwrap_or(base.error_stddev())),
        }
    }

    pub fn resolve(
        &self,
        kind: BackendKind,
        pasta: &PastaParams,
        fan_in: usize,
        activation: bool,
    ) -> Result<HeParams, FileError> {
        let f = self.filled(kind, pasta, fan_in, activation);
        HeParams::new(
            kind,
            pasta.modulus(),
            f.ring_degree.expect("filled"),
            HeParams::modulus_for_bits(pasta.modulus(), f.modulus_bits.expect("filled")),
            f.decomp_log_base.expect("filled"),
            f.error_stddev.expect("filled"),
        )
        .map_err(|e| FileError::Invalid(e.to_string()))
    }
}

/// Secret client material: the Pasta key and the seed of the HE keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyFile {
    pub profile: String,
    pub mix_halves: bool,
    pub pasta_key: Vec<u32>,
    pub backend: String,
    pub he_seed: u64,
    #[serde(default)]
    pub he: HeSettings,
}

impl KeyFile {
    pub fn pasta_params(&self) -> Result<PastaParams, FileError> {
        let profile: Profile = self.profile.parse()?;
        Ok(profile.params()?.with_mix_halves(self.mix_halves))
    }

    pub fn pasta_key(&self) -> Result<PastaSecretKey, FileError> {
        Ok(PastaSecretKey::from_u32(&self.pasta_key, &self.pasta_params()?)?)
    }

    pub fn backend(&self) -> Result<BackendKind, FileError> {
        self.backend
            .parse()
            .map_err(|e: crate::he::HeError| FileError::Invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        let bytes = read_file(path)?;
        serde_json::from_slice(&bytes).map_err(|source| FileError::Json {
            path: path.to_owned(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("key file serializes") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub id: String,
    pub classes: usize,
    pub features: usize,
    pub seed: u64,
    #[serde(default)]
    pub square_activation: bool,
}

impl ModelSpec {
    /// Weights and bias drawn uniformly mod p from a ChaCha20 stream.
    pub fn build(&self, pasta: &PastaParams) -> LinearModel {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        LinearModel::random(
            self.classes,
            self.features,
            pasta.modulus(),
            self.square_activation,
            &mut rng,
        )
    }
}

pub fn default_models() -> Vec<ModelSpec> {
    vec![
        ModelSpec {
            id: "mnist-linear".into(),
            classes: 10,
            features: 784,
            seed: 7,
            square_activation: false,
        },
        ModelSpec {
            id: "mnist-square".into(),
            classes: 10,
            features: 784,
            seed: 7,
            square_activation: true,
        },
    ]
}

/// JSON config shared by `serve` and `infer`. Flags override fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub profile: String,
    /// Client-side override of the key file's backend.
    pub backend: Option<String>,
    /// Client-side overrides of the key file's HE settings.
    pub he: HeSettings,
    pub host: String,
    pub port: Option<u16>,
    pub model: String,
    pub models: Vec<ModelSpec>,
    pub timeout_secs: u64,
    pub key_path: Option<PathBuf>,
    pub data_path: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            profile: "pasta4-edge".into(),
            backend: None,
            he: HeSettings::default(),
            host: "127.0.0.1".into(),
            port: None,
            model: "mnist-linear".into(),
            models: default_models(),
            timeout_secs: 30,
            key_path: None,
            data_path: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, FileError> {
        let bytes = read_file(path)?;
        let cfg: Config = serde_json::from_slice(&bytes).map_err(|source| FileError::Json {
            path: path.to_owned(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), FileError> {
        self.pasta_params()?;
        if let Some(b) = &self.backend {
            b.parse::<BackendKind>()
                .map_err(|e| FileError::Invalid(e.to_string()))?;
        }
        if self.timeout_secs == 0 {
            return Err(FileError::Invalid("timeout_secs must be positive".into()));
        }
        let mut ids: Vec<&str> = self.models.iter().map(|m| m.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(FileError::Invalid("duplicate model id".into()));
        }
        if let Some(m) = self.models.iter().find(|m| m.classes == 0 || m.features == 0) {
            return Err(FileError::Invalid(format!("model {:?} has an empty shape", m.id)));
        }
        Ok(())
    }

    pub fn pasta_params(&self) -> Result<PastaParams, FileError> {
        let profile: Profile = self.profile.parse()?;
        Ok(profile.params()?)
    }

    pub fn model_store(&self) -> Result<ModelStore, FileError> {
        let pasta = self.pasta_params()?;
        let mut store = ModelStore::new();
        for spec in &self.models {
            store.insert(spec.id.clone(), pasta.p(), spec.build(&pasta));
        }
        Ok(store)
    }
}

pub fn field_words(words: &[FieldElement]) -> Vec<u32> {
    words.iter().map(|w| w.value()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn container_roundtrip_and_layout() {
        let pasta = PastaParams::pasta4_edge();
        let p = pasta.modulus();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let ct = SymCiphertext {
            nonce: 0x0102030405060708,
            words: (0..40).map(|_| p.reduce(rng.gen_range(0..65537))).collect(),
        };
        let bytes = encode_container(&pasta, &ct);
        assert_eq!(bytes.len(), CONTAINER_HEADER_LEN + 160);
        assert_eq!(&bytes[..4], b"HHE1");
        assert_eq!(&bytes[4..8], &65537u32.to_le_bytes());
        assert_eq!(&bytes[16..24], &[8, 7, 6, 5, 4, 3, 2, 1]);
        assert_eq!(&bytes[24..32], &40u64.to_le_bytes());
        assert_eq!(open_container(&bytes, &pasta).unwrap(), ct);
    }

    #[test]
    fn container_errors() {
        let pasta = PastaParams::new(257, 2, 3).unwrap();
        let ct = SymCiphertext {
            nonce: 1,
            words: vec![FieldElement::ONE; 3],
        };
        let good = encode_container(&pasta, &ct);
        let mut v = good.clone();
        v[0] = b'X';
        assert!(matches!(decode_container(&v), Err(FileError::BadHeader(_))));
        assert!(matches!(decode_container(&good[..20]), Err(FileError::BadHeader(_))));
        assert!(matches!(
            decode_container(&good[..good.len() - 1]),
            Err(FileError::BadHeader(_))
        ));
        assert!(matches!(
            open_container(&good, &PastaParams::new(257, 2, 4).unwrap()),
            Err(FileError::BadHeader(_))
        ));
        let mut v = good.clone();
        let n = v.len();
        v[n - 4..].copy_from_slice(&300u32.to_le_bytes());
        assert!(matches!(
            open_container(&v, &pasta),
            Err(FileError::Pasta(PastaError::UnreducedWord { .. }))
        ));
        let empty = encode_container(
            &pasta,
            &SymCiphertext {
                nonce: 0,
                words: vec![],
            },
        );
        assert_eq!(open_container(&empty, &pasta).unwrap().words.len(), 0);
    }

    #[test]
    fn word_files() {
        assert_eq!(words_from_bytes(&[1, 0, 0, 0, 2, 0, 0, 0]).unwrap(), vec![1, 2]);
        assert!(matches!(words_from_bytes(&[1, 2, 3]), Err(FileError::RaggedWords(3))));
        assert_eq!(words_to_bytes(&[0x01020304]), vec![4, 3, 2, 1]);
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg: Config = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, Config::default());
        cfg.validate().unwrap();
        let cfg: Config =
            serde_json::from_str(r#"{"profile": "custom:257,2,3", "backend": "bfv-toy", "he": {"ring_degree": 256}}"#)
                .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.pasta_params().unwrap().t(), 2);
        assert!(serde_json::from_str::<Config>(r#"{"prot": 1}"#).is_err());
        for bad in [
            r#"{"profile": "pasta9"}"#,
            r#"{"backend": "ckks"}"#,
            r#"{"timeout_secs": 0}"#,
        ] {
            let cfg: Config = serde_json::from_str(bad).unwrap();
            assert!(cfg.validate().is_err(), "{bad}");
        }
        let store = Config::default().model_store().unwrap();
        assert_eq!(store.ids(), vec!["mnist-linear", "mnist-square"]);
    }

    #[test]
    fn he_settings_override() {
        let base = HeSettings {
            ring_degree: Some(1024),
            modulus_bits: Some(320),
            ..HeSettings::default()
        };
        let over = HeSettings {
            modulus_bits: Some(200),
            error_stddev: Some(2.0),
            ..HeSettings::default()
        };
        let merged = base.overridden_by(&over);
        assert_eq!(
            (
                merged.ring_degree,
                merged.modulus_bits,
                merged.decomp_log_base,
                merged.error_stddev
            ),
            (Some(1024), Some(200), None, Some(2.0))
        );
        assert_eq!(base.overridden_by(&HeSettings::default()), base);
    }

    #[test]
    fn he_settings_resolution() {
        let edge = PastaParams::pasta4_edge();
        let auto = HeSettings::default()
            .resolve(BackendKind::BfvToy, &edge, 784, false)
            .unwrap();
        assert!(auto.modulus_bits() > 180);
        let fixed = HeSettings {
            modulus_bits: Some(180),
            ring_degree: Some(512),
            ..HeSettings::default()
        }
        .resolve(BackendKind::BfvToy, &edge, 784, false)
        .unwrap();
        assert_eq!((fixed.modulus_bits(), fixed.ring_degree()), (180, 512));
        let filled = HeSettings::default().filled(BackendKind::BfvToy, &edge, 784, true);
        assert_eq!(
            filled.resolve(BackendKind::BfvToy, &edge, 0, false).unwrap(),
            HeSettings::default()
                .resolve(BackendKind::BfvToy, &edge, 784, true)
                .unwrap()
        );
        let bad = HeSettings {
            ring_degree: Some(100),
            ..HeSettings::default()
        };
        assert!(bad.resolve(BackendKind::BfvToy, &edge, 0, false).is_err());
    }
}

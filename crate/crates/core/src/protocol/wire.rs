//! Frames and message payloads.
//!
//! ```text
//! frame    "HHEM" | version 0x01 | msg_type u8 | payload_len u32 | payload
//! pasta    p u32 | t u32 | r u32 | mix_halves u8
//! 0x01 ClientHello        pasta | he params
//! 0x02 ServerHello        accepted u8 | pasta | he params
//! 0x03 KeyProvision       blob public material | count u32 | count * blob ciphertext
//! 0x04 DataUpload         nonce u64 | word_count u64 | word_count * u32
//! 0x05 InferRequest       blob utf-8 model id
//! 0x06 ResultCiphertexts  count u32 | count * blob ciphertext
//! 0x7F Error              code u8 | blob utf-8 reason
//! ```
//!
//! Integers are little-endian. HE objects stay opaque byte blobs here and
//! are decoded by the session against the negotiated parameters.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::codec::{ByteReader, ByteWriter, DecodeError};
use crate::he::codec::{read_params, write_params};
use crate::he::HeParams;
use crate::pasta::PastaParams;

pub const MAGIC: [u8; 4] = *b"HHEM";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 10;
pub const MAX_PAYLOAD: u32 = 1 << 28;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0:#04x}")]
    BadVersion(u8),
    #[error("truncated frame: {needed} more bytes needed")]
    TruncatedFrame { needed: usize },
    #[error("payload of {0} bytes exceeds the 2^28 cap")]
    OversizedFrame(u64),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("{0} bytes after the frame")]
    TrailingBytes(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<DecodeError> for FrameError {
    fn from(e: DecodeError) -> Self {
        FrameError::Malformed(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    ClientHello = 0x01,
    ServerHello = 0x02,
    KeyProvision = 0x03,
    DataUpload = 0x04,
    InferRequest = 0x05,
    ResultCiphertexts = 0x06,
    Error = 0x7F,
}

impl MsgType {
    pub const ALL: [MsgType; 7] = [
        MsgType::ClientHello,
        MsgType::ServerHello,
        MsgType::KeyProvision,
        MsgType::DataUpload,
        MsgType::InferRequest,
        MsgType::ResultCiphertexts,
        MsgType::Error,
    ];

    pub fn from_byte(b: u8) -> Result<Self, FrameError> {
        Self::ALL
            .into_iter()
            .find(|t| *t as u8 == b)
            .ok_or(FrameError::UnknownType(b))
    }
}

/// Error codes carried by `Error` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    Malformed,
    BadPhase,
    EmptyData,
    ParamsRejected,
    UnknownModel,
    DimensionMismatch,
    Internal,
    Other(u8),
}

impl ErrorCode {
    pub fn byte(self) -> u8 {
        match self {
            ErrorCode::Malformed => 0x01,
            ErrorCode::BadPhase => 0x02,
            ErrorCode::EmptyData => 0x03,
            ErrorCode::ParamsRejected => 0x04,
            ErrorCode::UnknownModel => 0x05,
            ErrorCode::DimensionMismatch => 0x06,
            ErrorCode::Internal => 0x07,
            ErrorCode::Other(b) => b,
        }
    }

    pub fn from_byte(b: u8) -> Self {
        match b {
            0x01 => ErrorCode::Malformed,
            0x02 => ErrorCode::BadPhase,
            0x03 => ErrorCode::EmptyData,
            0x04 => ErrorCode::ParamsRejected,
            0x05 => ErrorCode::UnknownModel,
            0x06 => ErrorCode::DimensionMismatch,
            0x07 => ErrorCode::Internal,
            other => ErrorCode::Other(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    ClientHello {
        pasta: PastaParams,
        he: HeParams,
    },
    ServerHello {
        accepted: bool,
        pasta: PastaParams,
        he: HeParams,
    },
    KeyProvision {
        public_material: Vec<u8>,
        key_words: Vec<Vec<u8>>,
    },
    DataUpload {
        nonce: u64,
        words: Vec<u32>,
    },
    InferRequest {
        model_id: String,
    },
    ResultCiphertexts {
        ciphertexts: Vec<Vec<u8>>,
    },
    Error {
        code: ErrorCode,
        reason: String,
    },
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::ClientHello { .. } => MsgType::ClientHello,
            Message::ServerHello { .. } => MsgType::ServerHello,
            Message::KeyProvision { .. } => MsgType::KeyProvision,
            Message::DataUpload { .. } => MsgType::DataUpload,
            Message::InferRequest { .. } => MsgType::InferRequest,
            Message::ResultCiphertexts { .. } => MsgType::ResultCiphertexts,
            Message::Error { .. } => MsgType::Error,
        }
    }

    pub fn error(code: ErrorCode, reason: impl Into<String>) -> Self {
        Message::Error {
            code,
            reason: reason.into(),
        }
    }

    fn encode_payload(&self, w: &mut ByteWriter) {
        match self {
            Message::ClientHello { pasta, he } => {
                write_pasta(w, pasta);
                write_params(w, he);
            }
            Message::ServerHello { accepted, pasta, he } => {
                w.u8(*accepted as u8);
                write_pasta(w, pasta);
                write_params(w, he);
            }
            Message::KeyProvision {
                public_material,
                key_words,
            } => {
                w.blob(public_material);
                write_blobs(w, key_words);
            }
            Message::DataUpload { nonce, words } => {
                w.u64(*nonce).u64(words.len() as u64);
                for &x in words {
                    w.u32(x);
                }
            }
            Message::InferRequest { model_id } => {
                w.blob(model_id.as_bytes());
            }
            Message::ResultCiphertexts { ciphertexts } => write_blobs(w, ciphertexts),
            Message::Error { code, reason } => {
                w.u8(code.byte()).blob(reason.as_bytes());
            }
        }
    }

    fn decode_payload(ty: MsgType, payload: &[u8]) -> Result<Self, FrameError> {
        let mut r = ByteReader::new(payload);
        let msg = match ty {
            MsgType::ClientHello => {
                let pasta = read_pasta(&mut r)?;
                let he = read_params(&mut r, pasta.modulus())?;
                Message::ClientHello { pasta, he }
            }
            MsgType::ServerHello => {
                let accepted = match r.u8()? {
                    0 => false,
                    1 => true,
                    b => return Err(FrameError::Malformed(format!("accept flag {b}"))),
                };
                let pasta = read_pasta(&mut r)?;
                let he = read_params(&mut r, pasta.modulus())?;
                Message::ServerHello { accepted, pasta, he }
            }
            MsgType::KeyProvision => Message::KeyProvision {
                public_material: r.blob()?.to_vec(),
                key_words: read_blobs(&mut r)?,
            },
            MsgType::DataUpload => {
                let nonce = r.u64()?;
                let count = r.u64()?;
                if count.saturating_mul(4) > r.remaining() as u64 {
                    return Err(FrameError::Malformed(format!("word_count {count} exceeds payload")));
                }
                let words = (0..count).map(|_| r.u32()).collect::<Result<_, _>>()?;
                Message::DataUpload { nonce, words }
            }
            MsgType::InferRequest => Message::InferRequest {
                model_id: utf8(r.blob()?)?,
            },
            MsgType::ResultCiphertexts => Message::ResultCiphertexts {
                ciphertexts: read_blobs(&mut r)?,
            },
            MsgType::Error => Message::Error {
                code: ErrorCode::from_byte(r.u8()?),
                reason: utf8(r.blob()?)?,
            },
        };
        r.finish()?;
        Ok(msg)
    }
}

fn utf8(b: &[u8]) -> Result<String, FrameError> {
    String::from_utf8(b.to_vec()).map_err(|_| FrameError::Malformed("invalid utf-8".into()))
}

fn write_blobs(w: &mut ByteWriter, blobs: &[Vec<u8>]) {
    w.u32(blobs.len() as u32);
    for b in blobs {
        w.blob(b);
    }
}

fn read_blobs(r: &mut ByteReader<'_>) -> Result<Vec<Vec<u8>>, FrameError> {
    let n = r.count(4)?;
    (0..n).map(|_| Ok(r.blob()?.to_vec())).collect()
}

pub fn write_pasta(w: &mut ByteWriter, pasta: &PastaParams) {
    w.u32(pasta.p())
        .u32(pasta.t() as u32)
        .u32(pasta.rounds() as u32)
        .u8(pasta.mix_halves() as u8);
}

pub fn read_pasta(r: &mut ByteReader<'_>) -> Result<PastaParams, FrameError> {
    let p = r.u32()?;
    let t = r.u32()? as usize;
    let rounds = r.u32()? as usize;
    let mix = match r.u8()? {
        0 => false,
        1 => true,
        b => return Err(FrameError::Malformed(format!("mix flag {b}"))),
    };
    PastaParams::new(p as u64, t, rounds)
        .map(|params| params.with_mix_halves(mix))
        .map_err(|e| FrameError::Malformed(e.to_string()))
}

pub fn encode_frame(msg: &Message) -> Vec<u8> {
    let mut payload = ByteWriter::new();
    msg.encode_payload(&mut payload);
    let payload = payload.into_bytes();
    let mut w = ByteWriter::new();
    w.bytes(&MAGIC)
        .u8(VERSION)
        .u8(msg.msg_type() as u8)
        .u32(payload.len() as u32)
        .bytes(&payload);
    w.into_bytes()
}

struct Header {
    ty: u8,
    len: u32,
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<Header, FrameError> {
    let magic: [u8; 4] = h[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(FrameError::BadMagic(magic));
    }
    if h[4] != VERSION {
        return Err(FrameError::BadVersion(h[4]));
    }
    let len = u32::from_le_bytes(h[6..10].try_into().expect("4 bytes"));
    if len > MAX_PAYLOAD {
        return Err(FrameError::OversizedFrame(len as u64));
    }
    Ok(Header { ty: h[5], len })
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame(bytes: &[u8]) -> Result<Message, FrameError> {
    let (msg, used) = decode_frame_prefix(bytes)?;
    if used != bytes.len() {
        return Err(FrameError::TrailingBytes(bytes.len() - used));
    }
    Ok(msg)
}

/// Decodes the frame at the start of `bytes`; returns it and its length.
pub fn decode_frame_prefix(bytes: &[u8]) -> Result<(Message, usize), FrameError> {
    if bytes.len() < HEADER_LEN {
        // Report a wrong magic as soon as it is visible.
        let seen = bytes.len().min(4);
        if bytes[..seen] != MAGIC[..seen] {
            let mut m = [0u8; 4];
            m[..seen].copy_from_slice(&bytes[..seen]);
            return Err(FrameError::BadMagic(m));
        }
        return Err(FrameError::TruncatedFrame {
            needed: HEADER_LEN - bytes.len(),
        });
    }
    let header = parse_header(bytes[..HEADER_LEN].try_into().expect("header length"))?;
    let ty = MsgType::from_byte(header.ty)?;
    let end = HEADER_LEN + header.len as usize;
    if bytes.len() < end {
        return Err(FrameError::TruncatedFrame {
            needed: end - bytes.len(),
        });
    }
    Ok((Message::decode_payload(ty, &bytes[HEADER_LEN..end])?, end))
}

/// Reads one frame from a stream. A clean EOF before any byte is
/// reported as `UnexpectedEof`.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Message, FrameError> {
    let mut h = [0u8; HEADER_LEN];
    r.read_exact(&mut h)?;
    let header = parse_header(&h)?;
    let ty = MsgType::from_byte(header.ty)?;
    let mut payload = Vec::new();
    r.take(header.len as u64).read_to_end(&mut payload)?;
    if payload.len() < header.len as usize {
        return Err(FrameError::TruncatedFrame {
            needed: header.len as usize - payload.len(),
        });
    }
    Message::decode_payload(ty, &payload)
}

pub fn write_frame<W: Write>(w: &mut W, msg: &Message) -> io::Result<()> {
    w.write_all(&encode_frame(msg))?;
    w.flush()
}

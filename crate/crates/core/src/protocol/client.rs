//! Client side: Hello, KeyProvision, DataUpload, InferRequest, then
//! decrypt the returned HE scores locally.

use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use rand::Rng;
use thiserror::Error;

use super::wire::{read_frame, write_frame, ErrorCode, FrameError, Message, MsgType};
use crate::codec::{ByteReader, ByteWriter, DecodeError};
use crate::field::FieldElement;
use crate::he::{HeError, HePublicMaterial, HeSecretKey};
use crate::pasta::{encrypt, PastaError, PastaParams, PastaSecretKey};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Io(#[from] io::Error),
    #[error("no response within the session timeout")]
    SessionTimeout,
    #[error("frame: {0}")]
    Frame(FrameError),
    #[error("server error {code:?}: {reason}")]
    Server { code: ErrorCode, reason: String },
    #[error("unexpected {0:?} frame")]
    Unexpected(MsgType),
    #[error("server changed the negotiated parameters")]
    ParamsChanged,
    #[error("result ciphertext: {0}")]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Pasta(#[from] PastaError),
}

impl From<FrameError> for ClientError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::Io(io) if is_timeout(&io) => ClientError::SessionTimeout,
            FrameError::Io(io) => ClientError::Io(io),
            other => ClientError::Frame(other),
        }
    }
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut)
}

/// Everything the client holds for one inference.
pub struct ClientRequest<'a> {
    pub pasta: &'a PastaParams,
    pub pasta_key: &'a PastaSecretKey,
    pub he_secret: &'a HeSecretKey,
    pub he_public: &'a HePublicMaterial,
    pub nonce: u64,
    pub message: &'a [FieldElement],
    pub model_id: &'a str,
}

/// Opens a TCP connection with per-phase read/write timeouts.
pub fn connect<A: ToSocketAddrs>(addr: A, timeout: Duration) -> io::Result<TcpStream> {
    let mut last = None;
    for a in addr.to_socket_addrs()? {
        match TcpStream::connect_timeout(&a, timeout) {
            Ok(s) => {
                s.set_read_timeout(Some(timeout))?;
                s.set_write_timeout(Some(timeout))?;
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address")))
}

/// Sends `msg`; if the server already hung up, surfaces its pending Error
/// frame instead of the broken pipe.
fn send<S: Read + Write>(stream: &mut S, msg: &Message) -> Result<(), ClientError> {
    if let Err(e) = write_frame(stream, msg) {
        if let Ok(Message::Error { code, reason }) = read_frame(stream) {
            return Err(ClientError::Server { code, reason });
        }
        return Err(if is_timeout(&e) {
            ClientError::SessionTimeout
        } else {
            e.into()
        });
    }
    Ok(())
}

fn receive<S: Read>(stream: &mut S, want: MsgType) -> Result<Message, ClientError> {
    match read_frame(stream)? {
        Message::Error { code, reason } => Err(ClientError::Server { code, reason }),
        m if m.msg_type() == want => Ok(m),
        m => Err(ClientError::Unexpected(m.msg_type())),
    }
}

/// Runs one full session and returns the decrypted scores.
pub fn client_session<S: Read + Write, R: Rng + ?Sized>(
    stream: &mut S,
    req: &ClientRequest<'_>,
    rng: &mut R,
) -> Result<Vec<FieldElement>, ClientError> {
    let he = req.he_public.params().clone();
    send(
        stream,
        &Message::ClientHello {
            pasta: *req.pasta,
            he: he.clone(),
        },
    )?;
    match receive(stream, MsgType::ServerHello)? {
        Message::ServerHello {
            accepted: true,
            pasta,
            he: echo,
        } if pasta == *req.pasta && echo == he => {}
        _ => return Err(ClientError::ParamsChanged),
    }

    let key_words = req
        .pasta_key
        .words()
        .iter()
        .map(|&w| {
            let ct = req.he_public.encrypt(w, rng)?;
            let mut b = ByteWriter::new();
            req.he_public.encode_ciphertext(&mut b, &ct);
            Ok(b.into_bytes())
        })
        .collect::<Result<Vec<_>, HeError>>()?;
    send(
        stream,
        &Message::KeyProvision {
            public_material: req.he_public.to_bytes(),
            key_words,
        },
    )?;

    let ct = encrypt(req.pasta_key, req.nonce, req.message, req.pasta)?;
    send(
        stream,
        &Message::DataUpload {
            nonce: ct.nonce,
            words: ct.words.iter().map(|w| w.value()).collect(),
        },
    )?;
    send(
        stream,
        &Message::InferRequest {
            model_id: req.model_id.to_string(),
        },
    )?;
    let Message::ResultCiphertexts { ciphertexts } = receive(stream, MsgType::ResultCiphertexts)? else {
        unreachable!("receive checks the type")
    };
    ciphertexts
        .iter()
        .map(|b| {
            let mut r = ByteReader::new(b);
            let ct = req.he_public.decode_ciphertext(&mut r)?;
            r.finish()?;
            Ok(req.he_secret.decrypt(&ct)?)
        })
        .collect()
}

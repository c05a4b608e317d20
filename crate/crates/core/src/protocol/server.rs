//! Server side: the per-connection session state machine and the accept
//! loop. Works only with public material; decryption keys never appear
//! here.

use std::collections::HashMap;
use std::io;
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use super::wire::{read_frame, write_frame, ErrorCode, FrameError, Message, MsgType};
use crate::codec::ByteReader;
use crate::field::FieldElement;
use crate::he::codec::read_public;
use crate::he::{HeParams, HePublicMaterial};
use crate::pasta::{PastaParams, SymCiphertext};
use crate::transcipher::{he_linear_model, transcipher, EncryptedPastaKey, LinearModel, TranscipherError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    AwaitHello,
    AwaitKeys,
    AwaitData,
    Evaluating,
    Done,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::AwaitHello,
        Phase::AwaitKeys,
        Phase::AwaitData,
        Phase::Evaluating,
        Phase::Done,
    ];

    /// The one message type accepted in this phase.
    pub fn expects(self) -> Option<MsgType> {
        match self {
            Phase::AwaitHello => Some(MsgType::ClientHello),
            Phase::AwaitKeys => Some(MsgType::KeyProvision),
            Phase::AwaitData => Some(MsgType::DataUpload),
            Phase::Evaluating => Some(MsgType::InferRequest),
            Phase::Done => None,
        }
    }
}

/// A linear model bound to the plaintext modulus it was built for.
#[derive(Debug, Clone)]
pub struct StoredModel {
    pub modulus: u32,
    pub model: LinearModel,
}

/// Read-only models shared by all sessions.
#[derive(Debug, Clone, Default)]
pub struct ModelStore {
    models: HashMap<String, StoredModel>,
}

impl ModelStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, modulus: u32, model: LinearModel) {
        self.models.insert(id.into(), StoredModel { modulus, model });
    }

    pub fn get(&self, id: &str) -> Option<&StoredModel> {
        self.models.get(id)
    }

    pub fn ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.models.keys().map(String::as_str).collect();
        ids.sort_unstable();
        ids
    }
}

#[derive(Debug, Clone)]
pub struct ServerPolicy {
    pub max_words: usize,
    pub max_ring_degree: usize,
}

impl Default for ServerPolicy {
    fn default() -> Self {
        ServerPolicy {
            max_words: 1 << 16,
            max_ring_degree: 1 << 13,
        }
    }
}

struct Negotiated {
    pasta: PastaParams,
    he: HeParams,
}

/// One client's session. Feed it decoded messages in order; after any
/// error it moves to `Done` and rejects everything else.
pub struct ServerSession<'a> {
    store: &'a ModelStore,
    policy: &'a ServerPolicy,
    phase: Phase,
    negotiated: Option<Negotiated>,
    public: Option<HePublicMaterial>,
    key: Option<EncryptedPastaKey>,
    data: Option<SymCiphertext>,
}

type Reject = (ErrorCode, String);

impl<'a> ServerSession<'a> {
    pub fn new(store: &'a ModelStore, policy: &'a ServerPolicy) -> Self {
        ServerSession {
            store,
            policy,
            phase: Phase::AwaitHello,
            negotiated: None,
            public: None,
            key: None,
            data: None,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Processes one message; returns the reply, if the message has one.
    pub fn handle(&mut self, msg: Message) -> Option<Message> {
        let ty = msg.msg_type();
        if self.phase.expects() != Some(ty) {
            let phase = self.phase;
            self.phase = Phase::Done;
            return Some(Message::error(
                ErrorCode::BadPhase,
                format!("{ty:?} not allowed in {phase:?}"),
            ));
        }
        let result = match msg {
            Message::ClientHello { pasta, he } => self.on_hello(pasta, he).map(Some),
            Message::KeyProvision {
                public_material,
                key_words,
            } => self.on_keys(&public_material, &key_words).map(|_| None),
            Message::DataUpload { nonce, words } => self.on_data(nonce, &words).map(|_| None),
            Message::InferRequest { model_id } => self.on_infer(&model_id).map(Some),
            _ => unreachable!("phase table admits only client messages"),
        };
        match result {
            Ok(reply) => reply,
            Err((code, reason)) => {
                self.phase = Phase::Done;
                Some(Message::error(code, reason))
            }
        }
    }

    fn on_hello(&mut self, pasta: PastaParams, he: HeParams) -> Result<Message, Reject> {
        if he.ring_degree() > self.policy.max_ring_degree {
            return Err((
                ErrorCode::ParamsRejected,
                format!("ring degree {} too large", he.ring_degree()),
            ));
        }
        self.negotiated = Some(Negotiated { pasta, he: he.clone() });
        self.phase = Phase::AwaitKeys;
        Ok(Message::ServerHello {
            accepted: true,
            pasta,
            he,
        })
    }

    fn on_keys(&mut self, public_material: &[u8], key_words: &[Vec<u8>]) -> Result<(), Reject> {
        let neg = self.negotiated.as_ref().expect("hello precedes keys");
        let malformed = |e: crate::codec::DecodeError| (ErrorCode::Malformed, e.to_string());
        let mut r = ByteReader::new(public_material);
        let public = read_public(&mut r, &neg.he).map_err(malformed)?;
        r.finish().map_err(malformed)?;
        let words = key_words
            .iter()
            .map(|b| {
                let mut r = ByteReader::new(b);
                let ct = public.decode_ciphertext(&mut r)?;
                r.finish()?;
                Ok(ct)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(malformed)?;
        let key = EncryptedPastaKey::from_parts(neg.pasta, words).map_err(transcipher_reject)?;
        self.public = Some(public);
        self.key = Some(key);
        self.phase = Phase::AwaitData;
        Ok(())
    }

    fn on_data(&mut self, nonce: u64, words: &[u32]) -> Result<(), Reject> {
        let neg = self.negotiated.as_ref().expect("hello precedes data");
        if words.is_empty() {
            return Err((ErrorCode::EmptyData, "no data words uploaded".into()));
        }
        if words.len() > self.policy.max_words {
            return Err((
                ErrorCode::DimensionMismatch,
                format!("{} words exceed the limit", words.len()),
            ));
        }
        let p = neg.pasta.modulus();
        let words = words
            .iter()
            .map(|&w| p.element(w as u64))
            .collect::<Result<Vec<FieldElement>, _>>()
            .map_err(|e| (ErrorCode::Malformed, e.to_string()))?;
        self.data = Some(SymCiphertext { nonce, words });
        self.phase = Phase::Evaluating;
        Ok(())
    }

    fn on_infer(&mut self, model_id: &str) -> Result<Message, Reject> {
        let neg = self.negotiated.as_ref().expect("hello precedes inference");
        let stored = self
            .store
            .get(model_id)
            .ok_or_else(|| (ErrorCode::UnknownModel, format!("no model {model_id:?}")))?;
        if stored.modulus != neg.pasta.p() {
            return Err((
                ErrorCode::ParamsRejected,
                format!("model {model_id:?} is defined mod {}", stored.modulus),
            ));
        }
        let data = self.data.as_ref().expect("data precedes inference");
        if stored.model.features() != data.words.len() {
            return Err((
                ErrorCode::DimensionMismatch,
                format!(
                    "model expects {} features, got {}",
                    stored.model.features(),
                    data.words.len()
                ),
            ));
        }
        let public = self.public.as_ref().expect("keys precede inference");
        let key = self.key.as_ref().expect("keys precede inference");
        let features = transcipher(public, key, data).map_err(transcipher_reject)?;
        let scores = he_linear_model(public, &features, &stored.model).map_err(transcipher_reject)?;
        let ciphertexts = scores
            .0
            .iter()
            .map(|ct| {
                let mut w = crate::codec::ByteWriter::new();
                public.encode_ciphertext(&mut w, ct);
                w.into_bytes()
            })
            .collect();
        self.phase = Phase::Done;
        Ok(Message::ResultCiphertexts { ciphertexts })
    }
}

fn transcipher_reject(e: TranscipherError) -> Reject {
    let code = match e {
        TranscipherError::DimensionMismatch { .. } | TranscipherError::StaleKey { .. } => ErrorCode::DimensionMismatch,
        TranscipherError::He(_) | TranscipherError::Pasta(_) => ErrorCode::Internal,
    };
    (code, e.to_string())
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub policy: ServerPolicy,
    pub io_timeout: Duration,
    /// Handle each connection on its own thread.
    pub concurrent: bool,
    /// Stop accepting after this many connections.
    pub max_sessions: Option<usize>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            policy: ServerPolicy::default(),
            io_timeout: super::DEFAULT_TIMEOUT,
            concurrent: true,
            max_sessions: None,
        }
    }
}

/// How a connection ended, for the caller's bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionOutcome {
    Completed,
    Rejected(ErrorCode),
    Disconnected,
}

/// Runs one session over `stream` until it completes or fails.
pub fn serve_connection(stream: &mut TcpStream, store: &ModelStore, config: &ServerConfig) -> SessionOutcome {
    let _ = stream.set_read_timeout(Some(config.io_timeout));
    let _ = stream.set_write_timeout(Some(config.io_timeout));
    let mut session = ServerSession::new(store, &config.policy);
    loop {
        let msg = match read_frame(stream) {
            Ok(m) => m,
            Err(FrameError::Io(_)) => return SessionOutcome::Disconnected,
            Err(e) => {
                let _ = write_frame(stream, &Message::error(ErrorCode::Malformed, e.to_string()));
                return SessionOutcome::Rejected(ErrorCode::Malformed);
            }
        };
        if let Some(reply) = session.handle(msg) {
            let rejected = match &reply {
                Message::Error { code, .. } => Some(*code),
                _ => None,
            };
            if write_frame(stream, &reply).is_err() {
                return SessionOutcome::Disconnected;
            }
            if let Some(code) = rejected {
                return SessionOutcome::Rejected(code);
            }
        }
        if session.phase() == Phase::Done {
            return SessionOutcome::Completed;
        }
    }
}

/// Accepts connections until `shutdown` is set or `max_sessions` is
/// reached. Session failures never stop the loop.
pub fn server_loop(
    listener: TcpListener,
    store: Arc<ModelStore>,
    config: ServerConfig,
    shutdown: Arc<AtomicBool>,
) -> io::Result<()> {
    listener.set_nonblocking(true)?;
    let config = Arc::new(config);
    let mut workers = Vec::new();
    let mut accepted = 0usize;
    while !shutdown.load(Ordering::SeqCst) && config.max_sessions.is_none_or(|m| accepted < m) {
        match listener.accept() {
            Ok((mut stream, _)) => {
                accepted += 1;
                stream.set_nonblocking(false)?;
                if config.concurrent {
                    let (store, config) = (store.clone(), config.clone());
                    workers.push(thread::spawn(move || serve_connection(&mut stream, &store, &config)));
                } else {
                    serve_connection(&mut stream, &store, &config);
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(20)),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
        workers.retain(|h| !h.is_finished());
    }
    for w in workers {
        let _ = w.join();
    }
    Ok(())
}

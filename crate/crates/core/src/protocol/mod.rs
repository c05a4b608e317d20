//! Client/server protocol over a reliable byte stream (TCP).
//!
//! A session is single-shot: hello, key provisioning, one data upload,
//! one inference request, one result. No TLS and no authentication.

pub mod client;
pub mod server;
pub mod wire;

use std::time::Duration;

pub use client::{client_session, connect, ClientError, ClientRequest};
pub use server::{
    serve_connection, server_loop, ModelStore, Phase, ServerConfig, ServerPolicy, ServerSession, SessionOutcome,
};
pub use wire::{decode_frame, encode_frame, read_frame, write_frame, ErrorCode, FrameError, Message, MsgType};

pub const DEFAULT_PORT: u16 = 45117;
pub const PORT_ENV: &str = "HHEML_PORT";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Port precedence: explicit flag, then `HHEML_PORT`, then 45117.
pub fn resolve_port(flag: Option<u16>, env: Option<&str>) -> Result<u16, String> {
    if let Some(p) = flag {
        return Ok(p);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("{PORT_ENV}={v:?} is not a port number")),
        None => Ok(DEFAULT_PORT),
    }
}

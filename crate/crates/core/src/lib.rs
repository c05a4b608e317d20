//! Hybrid homomorphic encryption pipeline.
//!
//! A client masks data with the Pasta stream cipher; the server
//! homomorphically evaluates the cipher's decryption (transciphering) to
//! obtain HE ciphertexts of the data and runs an encrypted linear model on
//! them. The crate also models the client's multi-XOF keystream pipeline.
//!
//! The HE backend parameters are for functional testing only and are not
//! secure.

pub mod aes;
pub mod cli;
pub mod codec;
pub mod field;
pub mod files;
pub mod he;
pub mod pasta;
pub mod pipeline;
pub mod protocol;
pub mod transcipher;
pub mod xof;

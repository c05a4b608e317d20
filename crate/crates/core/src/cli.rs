//! Command-line front end. `run` does the work so tests can drive it
//! in-process; `main` only maps errors to an exit code.

use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::files::{
    encode_container, field_words, open_container, read_file, words_from_bytes, words_to_bytes, write_file, Config,
    HeSettings, KeyFile,
};
use crate::he::{keygen, BackendKind, HePublicMaterial, HeSecretKey};
use crate::pasta::{self, vectors, PastaParams, PastaSecretKey, Profile};
use crate::pipeline::{
    compare_configs, render_table, WorkloadSpec, DEFAULT_ROUND_LATENCY_US, DEFAULT_WORDS_PER_BLOCK, MNIST_WORDS,
};
use crate::protocol::{self, client_session, connect, resolve_port, ServerConfig, PORT_ENV};

#[derive(Debug, Parser)]
#[command(name = "hheml", version, about = "Hybrid homomorphic encryption pipeline tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a Pasta key and HE key seed (JSON) plus public material (`<out>.pub`).
    Keygen(KeygenArgs),
    /// Encrypt a file of 4-byte little-endian words into an HHE1 container.
    Encrypt(CryptArgs),
    /// Decrypt an HHE1 container back into a word file.
    Decrypt(CryptArgs),
    /// Run the inference server.
    Serve(ServeArgs),
    /// Run one encrypted inference against a server and print the scores.
    Infer(InferArgs),
    /// Model the keystream pipeline for several XOF unit counts.
    Simulate(SimulateArgs),
    /// Measure Pasta or AES-128 encryption throughput.
    Bench(BenchArgs),
    /// Emit keystream test vectors.
    Vectors(VectorsArgs),
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    #[arg(long, default_value = "pasta4-edge")]
    pub profile: String,
    #[arg(long, default_value = "transparent")]
    pub backend: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Ciphertext modulus size; chosen to fit a 784-feature squared model when absent.
    #[arg(long)]
    pub modulus_bits: Option<u32>,
    #[arg(long)]
    pub ring_degree: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CryptArgs {
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Encryption nonce; drawn from --seed or the OS when absent.
    #[arg(long)]
    pub nonce: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Handle one connection at a time.
    #[arg(long)]
    pub sequential: bool,
    /// Exit after this many connections.
    #[arg(long)]
    pub max_sessions: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub key: Option<PathBuf>,
    /// Plaintext feature vector as a word file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Override the HE backend of the key file and config.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub nonce: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// XOF unit counts to compare; repeatable.
    #[arg(long = "units", default_values_t = vec![1usize, 2])]
    pub units: Vec<usize>,
    #[arg(long, default_value_t = MNIST_WORDS)]
    pub words: usize,
    #[arg(long, default_value_t = DEFAULT_ROUND_LATENCY_US)]
    pub latency_us: f64,
    #[arg(long, default_value_t = DEFAULT_WORDS_PER_BLOCK)]
    pub words_per_block: usize,
    /// Write the CSV schedule trace of the last unit count here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchCipher {
    Pasta,
    Aes,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub cipher: BenchCipher,
    #[arg(long, default_value_t = 1_000_000)]
    pub bytes: usize,
    #[arg(long, default_value = "pasta4-edge")]
    pub profile: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct VectorsArgs {
    #[arg(long, default_value = "pasta4-edge")]
    pub profile: String,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn rng_from(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

fn parse_profile(name: &str) -> Result<PastaParams> {
    let profile: Profile = name.parse()?;
    Ok(profile.params()?)
}

fn parse_backend(name: &str) -> Result<BackendKind> {
    name.parse().map_err(|e: crate::he::HeError| anyhow!(e))
}

/// Path of the public material written next to a key file.
pub fn public_path(key_path: &Path) -> PathBuf {
    let mut s = key_path.as_os_str().to_owned();
    s.push(".pub");
    PathBuf::from(s)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Keygen(a) => cmd_keygen(a, out),
        Command::Encrypt(a) => cmd_encrypt(a, out),
        Command::Decrypt(a) => cmd_decrypt(a, out),
        Command::Serve(a) => cmd_serve(a, out),
        Command::Infer(a) => cmd_infer(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Vectors(a) => cmd_vectors(a, out),
    }
}

fn cmd_keygen(a: KeygenArgs, out: &mut dyn Write) -> Result<()> {
    let pasta = parse_profile(&a.profile)?;
    let backend = parse_backend(&a.backend)?;
    let mut rng = rng_from(a.seed);
    let key = PastaSecretKey::random(&pasta, &mut rng);
    let overrides = HeSettings {
        ring_degree: a.ring_degree,
        modulus_bits: a.modulus_bits,
        ..HeSettings::default()
    };
    // Sized for the heaviest default model so the backend can be switched later.
    let he = overrides.filled(BackendKind::BfvToy, &pasta, MNIST_WORDS, true);
    let file = KeyFile {
        profile: a.profile.clone(),
        mix_halves: pasta.mix_halves(),
        pasta_key: field_words(key.words()),
        backend: backend.as_str().to_string(),
        he_seed: rng.next_u64(),
        he,
    };
    let (_, public) = he_keys(&file, backend)?;
    write_file(&a.out, file.to_json().as_bytes())?;
    let pub_path = public_path(&a.out);
    write_file(&pub_path, &public.to_bytes())?;
    writeln!(
        out,
        "wrote {} ({} key words) and {}",
        a.out.display(),
        file.pasta_key.len(),
        pub_path.display()
    )?;
    Ok(())
}

fn he_keys(file: &KeyFile, backend: BackendKind) -> Result<(HeSecretKey, HePublicMaterial)> {
    let pasta = file.pasta_params()?;
    let params = file.he.resolve(backend, &pasta, MNIST_WORDS, true)?;
    Ok(keygen(&params, file.he_seed))
}

fn cmd_encrypt(a: CryptArgs, out: &mut dyn Write) -> Result<()> {
    let file = KeyFile::load(&a.key)?;
    let pasta = file.pasta_params()?;
    let key = file.pasta_key()?;
    let words = words_from_bytes(&read_file(&a.input)?)?;
    let message = pasta::reduce_words(&words, pasta.modulus())?;
    let nonce = a.nonce.unwrap_or_else(|| rng_from(a.seed).gen());
    let ct = pasta::encrypt(&key, nonce, &message, &pasta)?;
    write_file(&a.out, &encode_container(&pasta, &ct))?;
    writeln!(out, "nonce {nonce} words {}", ct.words.len())?;
    Ok(())
}

fn cmd_decrypt(a: CryptArgs, out: &mut dyn Write) -> Result<()> {
    let file = KeyFile::load(&a.key)?;
    let pasta = file.pasta_params()?;
    let key = file.pasta_key()?;
    let ct = open_container(&read_file(&a.input)?, &pasta)?;
    if a.nonce.is_some_and(|n| n != ct.nonce) {
        bail!("container nonce {} differs from --nonce", ct.nonce);
    }
    let plain = pasta::decrypt(&key, &ct, &pasta)?;
    write_file(&a.out, &words_to_bytes(&field_words(&plain)))?;
    writeln!(out, "nonce {} words {}", ct.nonce, plain.len())?;
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Ok(Config::load(p)?),
        None => Ok(Config::default()),
    }
}

fn endpoint(cfg: &Config, host: Option<String>, port: Option<u16>) -> Result<(String, u16)> {
    let env = std::env::var(PORT_ENV).ok();
    let port = match (port, env.as_deref(), cfg.port) {
        (None, None, Some(p)) => p,
        _ => resolve_port(port, env.as_deref()).map_err(|e| anyhow!(e))?,
    };
    Ok((host.unwrap_or_else(|| cfg.host.clone()), port))
}

fn cmd_serve(a: ServeArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let store = cfg.model_store()?;
    let (host, port) = endpoint(&cfg, a.host, a.port)?;
    let listener = TcpListener::bind((host.as_str(), port)).with_context(|| format!("cannot bind {host}:{port}"))?;
    writeln!(out, "listening on {}", listener.local_addr()?)?;
    out.flush()?;
    let config = ServerConfig {
        io_timeout: Duration::from_secs(cfg.timeout_secs),
        concurrent: !a.sequential,
        max_sessions: a.max_sessions,
        ..ServerConfig::default()
    };
    protocol::server_loop(listener, Arc::new(store), config, Arc::new(AtomicBool::new(false)))?;
    Ok(())
}

fn cmd_infer(a: InferArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let key_path = a
        .key
        .or(cfg.key_path.clone())
        .context("no key file given (--key or key_path)")?;
    let data_path = a
        .data
        .or(cfg.data_path.clone())
        .context("no data file given (--data or data_path)")?;
    let model = a.model.unwrap_or_else(|| cfg.model.clone());
    let mut file = KeyFile::load(&key_path)?;
    file.he = file.he.overridden_by(&cfg.he);
    let pasta = file.pasta_params()?;
    let key = file.pasta_key()?;
    let backend = match a.backend.as_ref().or(cfg.backend.as_ref()) {
        Some(b) => parse_backend(b)?,
        None => file.backend()?,
    };
    let (sk, pk) = he_keys(&file, backend)?;
    let words = words_from_bytes(&read_file(&data_path)?)?;
    let message = pasta::reduce_words(&words, pasta.modulus())?;

    let mut rng = rng_from(a.seed);
    let nonce = a.nonce.unwrap_or_else(|| rng.gen());
    let (host, port) = endpoint(&cfg, a.host, a.port)?;
    let timeout = Duration::from_secs(cfg.timeout_secs);
    let mut stream =
        connect((host.as_str(), port), timeout).with_context(|| format!("cannot connect to {host}:{port}"))?;
    let req = protocol::ClientRequest {
        pasta: &pasta,
        pasta_key: &key,
        he_secret: &sk,
        he_public: &pk,
        nonce,
        message: &message,
        model_id: &model,
    };
    let scores = client_session(&mut stream, &req, &mut rng)?;
    for (class, s) in scores.iter().enumerate() {
        writeln!(out, "{class} {}", s.value())?;
    }
    let best = (0..scores.len())
        .max_by_key(|&i| (scores[i].value(), std::cmp::Reverse(i)))
        .context("model returned no scores")?;
    writeln!(out, "argmax {best}")?;
    Ok(())
}

fn cmd_simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let workload = WorkloadSpec { total_words: a.words };
    let reports = compare_configs(&workload, a.latency_us, a.words_per_block, &a.units)?;
    if let Some(path) = &a.trace {
        let last = reports.last().expect("at least one report");
        write_file(path, last.trace_csv().as_bytes())?;
    }
    if a.json {
        #[derive(serde::Serialize)]
        struct Row {
            xof_units: usize,
            blocks: usize,
            round_slots: usize,
            latency_us: f64,
            relative_throughput: f64,
        }
        let rows: Vec<Row> = reports
            .iter()
            .map(|r| Row {
                xof_units: r.xof_units,
                blocks: r.blocks,
                round_slots: r.round_slots,
                latency_us: r.latency_us,
                relative_throughput: r.relative_throughput,
            })
            .collect();
        writeln!(out, "{}", serde_json::to_string_pretty(&rows)?)?;
    } else {
        out.write_all(render_table(&reports).as_bytes())?;
    }
    Ok(())
}

/// Header line of `bench` output.
pub const BENCH_HEADER: &str = "cipher,profile,bytes,units,count,seconds,per_second";

fn cmd_bench(a: BenchArgs, out: &mut dyn Write) -> Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    let (profile, unit, count, seconds) = match a.cipher {
        BenchCipher::Pasta => {
            let params = parse_profile(&a.profile)?;
            let p = params.modulus();
            let key = PastaSecretKey::random(&params, &mut rng);
            let message: Vec<_> = (0..a.bytes / 4)
                .map(|_| p.reduce(rng.gen_range(0..p.value() as u64)))
                .collect();
            let start = Instant::now();
            let ct = pasta::encrypt(&key, rng.gen(), &message, &params)?;
            (
                a.profile.clone(),
                "words",
                ct.words.len(),
                start.elapsed().as_secs_f64(),
            )
        }
        BenchCipher::Aes => {
            let mut key = [0u8; 16];
            let mut iv = [0u8; 16];
            rng.fill_bytes(&mut key);
            rng.fill_bytes(&mut iv);
            let mut data = vec![0u8; a.bytes];
            rng.fill_bytes(&mut data);
            let start = Instant::now();
            let ks = crate::aes::key_expansion(&key)?;
            let ct = crate::aes::ctr_wrap(&ks, &iv, &data);
            (
                String::from("aes-128"),
                "blocks",
                ct.len().div_ceil(16),
                start.elapsed().as_secs_f64(),
            )
        }
    };
    let rate = if seconds > 0.0 {
        count as f64 / seconds
    } else {
        f64::INFINITY
    };
    let name = match a.cipher {
        BenchCipher::Pasta => "pasta",
        BenchCipher::Aes => "aes",
    };
    writeln!(out, "{BENCH_HEADER}")?;
    writeln!(
        out,
        "{name},{profile},{},{unit},{count},{seconds:.6},{rate:.1}",
        a.bytes
    )?;
    Ok(())
}

fn cmd_vectors(a: VectorsArgs, out: &mut dyn Write) -> Result<()> {
    let params = parse_profile(&a.profile)?;
    let mut rng = rng_from(a.seed);
    let vecs = vectors::generate(&params, a.count, &mut rng)?;
    let text = format!(
        "# p t r nonce counter key[2t] -> keystream[t]\n{}",
        vectors::render(&vecs)
    );
    match &a.out {
        Some(path) => write_file(path, text.as_bytes())?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

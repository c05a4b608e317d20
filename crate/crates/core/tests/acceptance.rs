//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any FAIL.

use std::collections::HashSet;
use std::net::TcpListener;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockEncrypt, KeyInit};
use clap::Parser;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use hheml::aes::{cipher, inv_cipher, key_expansion};
use hheml::cli::{run, Cli};
use hheml::field::{FieldElement, PrimeModulus};
use hheml::files::Config;
use hheml::he::{keygen, BackendKind, HeParams};
use hheml::pasta::{self, pasta_permutation, PastaParams, PastaSecretKey};
use hheml::pipeline::{compare_configs, WorkloadSpec};
use hheml::protocol::{
    client_session, connect, decode_frame, encode_frame, server_loop, ErrorCode, FrameError, Message, MsgType, Phase,
    ServerConfig, ServerPolicy, ServerSession,
};
use hheml::transcipher::{
    he_linear_model, recommended_he_params, transcipher, transcipher_block, EncryptedPastaKey, EncryptedVector,
    LinearModel,
};
use hheml::xof::StreamPosition;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn cli_output(args: &[&str]) -> Result<String, String> {
    let cli = Cli::try_parse_from(std::iter::once("hheml").chain(args.iter().copied())).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    run(cli, &mut buf).map_err(|e| format!("{e:#}"))?;
    String::from_utf8(buf).map_err(|e| e.to_string())
}

fn words(p: PrimeModulus, n: usize, rng: &mut impl Rng) -> Vec<FieldElement> {
    (0..n).map(|_| p.reduce(rng.gen_range(0..p.value() as u64))).collect()
}

fn table2() -> Outcome {
    let start = Instant::now();
    let text = cli_output(&["simulate", "--words", "784", "--words-per-block", "17", "--json"])?;
    let rows: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let slots: Vec<u64> = rows
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["round_slots"].as_u64().unwrap())
        .collect();
    let rel = rows[1]["relative_throughput"].as_f64().unwrap();
    let elapsed = start.elapsed();
    ensure!(slots == [47, 24], "round slots {slots:?}");
    ensure!((rel - 1.95).abs() / 1.95 <= 0.01, "relative throughput {rel}");
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    let table = cli_output(&["simulate"])?;
    ensure!(
        table.lines().nth(2).is_some_and(|l| l.ends_with("1.96x")),
        "table row {table:?}"
    );
    Ok(format!(
        "slots 47 -> 24, throughput {rel:.3}x (within {:.2}% of 1.95x), {elapsed:.2?}",
        (rel - 1.95).abs() / 1.95 * 100.0
    ))
}

fn table1() -> Outcome {
    let reports = compare_configs(&WorkloadSpec::mnist(), 66.1, 17, &[1, 2]).map_err(|e| e.to_string())?;
    let (single, dual) = (reports[0].latency_us, reports[1].latency_us);
    ensure!((single - 3106.7).abs() < 1e-9, "single-XOF latency {single}");
    ensure!((dual - 1586.4).abs() < 1e-9, "dual-XOF latency {dual}");
    let dev = (dual - 1553.4).abs() / 1553.4;
    ensure!(dev <= 0.05, "dual latency {dual} is {:.2}% from 1553.4", dev * 100.0);
    Ok(format!(
        "single {single:.1} us, dual {dual:.1} us ({:.2}% from the paper's 1553.4)",
        dev * 100.0
    ))
}

fn bijectivity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for r in [3, 4] {
        let params = PastaParams::new(5, 1, r).map_err(|e| e.to_string())?;
        let p = params.modulus();
        for _ in 0..20 {
            let pos = StreamPosition::new(rng.gen(), rng.gen());
            let mut seen = HashSet::new();
            for a in 0..5 {
                for b in 0..5 {
                    let state = PastaSecretKey::new(vec![p.reduce(a), p.reduce(b)], &params).unwrap();
                    seen.insert(pasta_permutation(&state, pos, &params).unwrap().to_words());
                }
            }
            ensure!(seen.len() == 25, "r={r} {pos:?}: {} distinct outputs", seen.len());
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("25/25 distinct for 20 positions at r=3 and r=4, {elapsed:.2?}"))
}

fn roundtrips() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let profiles = [(5, 1, 3), (17, 2, 3), (257, 2, 4), (65537, 17, 4)];
    for (p, t, r) in profiles {
        let params = PastaParams::new(p, t, r).unwrap();
        let m = params.modulus();
        for i in 0..1000 {
            let key = PastaSecretKey::random(&params, &mut rng);
            let len = rng.gen_range(0..=3 * t);
            let msg = words(m, len, &mut rng);
            let ct = pasta::encrypt(&key, rng.gen(), &msg, &params).unwrap();
            let back = pasta::decrypt(&key, &ct, &params).unwrap();
            ensure!(back == msg, "({p},{t},{r}) roundtrip {i} failed");
        }
    }
    let params = PastaParams::new(257, 2, 3).unwrap();
    let m = params.modulus();
    for i in 0..100 {
        let key = PastaSecretKey::random(&params, &mut rng);
        let nonce = rng.gen();
        let len = rng.gen_range(1..=8);
        let (m1, m2) = (words(m, len, &mut rng), words(m, len, &mut rng));
        let c1 = pasta::encrypt(&key, nonce, &m1, &params).unwrap();
        let c2 = pasta::encrypt(&key, nonce, &m2, &params).unwrap();
        let pad = |c: &[FieldElement], x: &[FieldElement]| -> Vec<FieldElement> {
            c.iter().zip(x).map(|(&c, &x)| m.sub(c, x)).collect()
        };
        ensure!(
            pad(&c1.words, &m1) == pad(&c2.words, &m2),
            "keystream depends on the message (pair {i})"
        );
    }
    Ok("4 x 1000 roundtrips, 100 additive-stream pairs".into())
}

fn transcipher_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut depths = Vec::new();
    for r in [3usize, 4] {
        let pasta = PastaParams::new(257, 2, r).unwrap();
        let p = pasta.modulus();
        for kind in [BackendKind::Transparent, BackendKind::BfvToy] {
            let he = HeParams::for_backend(kind, p);
            for i in 0..10 {
                let (sk, pk) = keygen(&he, rng.gen());
                let key = PastaSecretKey::random(&pasta, &mut rng);
                let len = rng.gen_range(1..=5);
                let msg = words(p, len, &mut rng);
                let ct = pasta::encrypt(&key, rng.gen(), &msg, &pasta).unwrap();
                let ek = EncryptedPastaKey::encrypt(key.words(), &pasta, &pk, &mut rng).unwrap();
                let out = transcipher(&pk, &ek, &ct).map_err(|e| e.to_string())?;
                let dec: Vec<FieldElement> = out.0.iter().map(|c| sk.decrypt(c).unwrap()).collect();
                ensure!(
                    dec == pasta::decrypt(&key, &ct, &pasta).unwrap(),
                    "r={r} {kind} run {i} mismatch"
                );
                let want = r as u32 + 1;
                ensure!(
                    out.max_depth() == want,
                    "r={r} {kind}: depth {} != {want}",
                    out.max_depth()
                );
            }
            depths.push(format!("{kind} Pasta-{r} depth {}", r + 1));
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(600), "took {elapsed:?}");
    Ok(format!(
        "10 runs on each backend match; {}; {elapsed:.2?}",
        depths.join(", ")
    ))
}

fn loopback() -> Outcome {
    let pasta = PastaParams::pasta4_edge();
    let p = pasta.modulus();
    let config = Config::default();
    let store = config.model_store().map_err(|e| e.to_string())?;
    let model = store.get("mnist-linear").unwrap().model.clone();
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let key = PastaSecretKey::random(&pasta, &mut rng);
    let msg = words(p, 784, &mut rng);
    ensure!(pasta.blocks_for(msg.len()) == 47, "block count");
    let expected = model.eval_plain(&msg, p).unwrap();

    let start = Instant::now();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server_cfg = ServerConfig {
        concurrent: false,
        max_sessions: Some(1),
        ..ServerConfig::default()
    };
    let server =
        thread::spawn(move || server_loop(listener, Arc::new(store), server_cfg, Arc::new(AtomicBool::new(false))));
    let (sk, pk) = keygen(&HeParams::transparent(p), 1);
    let mut stream = connect(addr, Duration::from_secs(30)).unwrap();
    let req = hheml::protocol::ClientRequest {
        pasta: &pasta,
        pasta_key: &key,
        he_secret: &sk,
        he_public: &pk,
        nonce: 77,
        message: &msg,
        model_id: "mnist-linear",
    };
    let scores = client_session(&mut stream, &req, &mut rng).map_err(|e| e.to_string())?;
    server.join().unwrap().unwrap();
    let transparent_time = start.elapsed();
    ensure!(scores == expected, "loopback scores differ from the plaintext pipeline");
    ensure!(
        transparent_time < Duration::from_secs(10),
        "transparent took {transparent_time:?}"
    );

    // bfv-toy on blocks 0 and 46 (the short final block) of the same ciphertext.
    let start = Instant::now();
    let ct = pasta::encrypt(&key, 77, &msg, &pasta).unwrap();
    let blocks = [0usize, 46];
    let cols: Vec<usize> = blocks.iter().flat_map(|&b| (b * 17)..((b + 1) * 17).min(784)).collect();
    let he = recommended_he_params(BackendKind::BfvToy, &pasta, cols.len(), false);
    let (sk, pk) = keygen(&he, 2);
    let ek = EncryptedPastaKey::encrypt(key.words(), &pasta, &pk, &mut rng).unwrap();
    let mut features = Vec::new();
    for &b in &blocks {
        let c = &ct.words[b * 17..((b + 1) * 17).min(784)];
        features.extend(
            transcipher_block(&pk, &ek, StreamPosition::new(77, b as u64), c)
                .map_err(|e| e.to_string())?
                .0,
        );
    }
    let dec: Vec<FieldElement> = features.iter().map(|c| sk.decrypt(c).unwrap()).collect();
    let plain: Vec<FieldElement> = cols.iter().map(|&j| msg[j]).collect();
    ensure!(dec == plain, "bfv transciphered words differ");
    let sub = LinearModel::new(
        model
            .weights()
            .iter()
            .map(|row| cols.iter().map(|&j| row[j]).collect())
            .collect(),
        model.bias().to_vec(),
        false,
    )
    .unwrap();
    let he_scores = he_linear_model(&pk, &EncryptedVector(features), &sub).map_err(|e| e.to_string())?;
    let dec_scores: Vec<FieldElement> = he_scores.0.iter().map(|c| sk.decrypt(c).unwrap()).collect();
    ensure!(
        dec_scores == sub.eval_plain(&plain, p).unwrap(),
        "bfv partial scores differ"
    );
    let bfv_time = start.elapsed();
    ensure!(bfv_time < Duration::from_secs(600), "bfv spot-check took {bfv_time:?}");
    Ok(format!(
        "47 blocks over TCP match ({transparent_time:.2?}); bfv-toy blocks 0 and 46 at log q = {} match ({bfv_time:.2?})",
        he.modulus_bits()
    ))
}

fn aes_oracle() -> Outcome {
    let key: [u8; 16] = core::array::from_fn(|i| i as u8);
    let pt: [u8; 16] = core::array::from_fn(|i| (i as u8) * 0x11);
    let ks = key_expansion(&key).unwrap();
    let ct = cipher(&pt, &ks);
    let expected: [u8; 16] = [
        0x69, 0xc4, 0xe0, 0xd8, 0x6a, 0x7b, 0x04, 0x30, 0xd8, 0xcd, 0xb7, 0x80, 0x70, 0xb4, 0xc5, 0x5a,
    ];
    ensure!(ct == expected, "appendix C.1 ciphertext {ct:02x?}");
    let reference = |key: &[u8; 16], block: &[u8; 16]| {
        let mut b = GenericArray::clone_from_slice(block);
        aes::Aes128::new(GenericArray::from_slice(key)).encrypt_block(&mut b);
        <[u8; 16]>::from(b)
    };
    ensure!(ct == reference(&key, &pt), "differs from the aes crate");
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    for i in 0..1000 {
        let mut k = [0u8; 16];
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut k);
        rng.fill_bytes(&mut b);
        let ks = key_expansion(&k).unwrap();
        let c = cipher(&b, &ks);
        ensure!(c == reference(&k, &b), "block {i} differs from the aes crate");
        ensure!(inv_cipher(&c, &ks) == b, "inv_cipher roundtrip {i}");
    }
    Ok("FIPS 197 C.1 and 1000 random blocks match the aes crate; 1000 inverse roundtrips".into())
}

fn bfv_properties() -> Outcome {
    let p = PastaParams::pasta4_edge().modulus();
    let params = HeParams::bfv_toy(p);
    let (sk, pk) = keygen(&params, 8);
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    for i in 0..50 {
        let (a, b) = (p.reduce(rng.gen_range(0..65537)), p.reduce(rng.gen_range(0..65537)));
        let (ca, cb) = (pk.encrypt(a, &mut rng).unwrap(), pk.encrypt(b, &mut rng).unwrap());
        ensure!(
            sk.decrypt(&pk.add(&ca, &cb).unwrap()).unwrap() == p.add(a, b),
            "add pair {i}"
        );
        ensure!(
            sk.decrypt(&pk.mul(&ca, &cb).unwrap()).unwrap() == p.mul(a, b),
            "mul pair {i}"
        );
    }
    let mut expect = p.reduce(rng.gen_range(1..65537));
    let mut acc = pk.encrypt(expect, &mut rng).unwrap();
    let mut budgets = vec![sk.noise_budget(&acc).unwrap().noise_budget_bits];
    for step in 1..=5 {
        let f = p.reduce(rng.gen_range(1..65537));
        acc = pk.mul(&acc, &pk.encrypt(f, &mut rng).unwrap()).unwrap();
        expect = p.mul(expect, f);
        let budget = sk.noise_budget(&acc).unwrap().noise_budget_bits;
        ensure!(budget < *budgets.last().unwrap(), "budget did not drop at mul {step}");
        budgets.push(budget);
        ensure!(
            sk.decrypt(&acc).unwrap() == expect,
            "chained mul {step} decrypts wrongly"
        );
    }
    let trail: Vec<String> = budgets.iter().map(|b| format!("{b:.1}")).collect();
    Ok(format!(
        "50 add/mul pairs; 5 chained muls at n=1024, log q=180, budgets {}",
        trail.join(" > ")
    ))
}

fn random_bytes(rng: &mut ChaCha20Rng, max: usize) -> Vec<u8> {
    let mut v = vec![0u8; rng.gen_range(0..max)];
    rng.fill_bytes(&mut v);
    v
}

fn random_message(rng: &mut ChaCha20Rng) -> Message {
    let pasta = [PastaParams::pasta4_edge(), PastaParams::new(257, 2, 3).unwrap()][rng.gen_range(0..2)];
    let he = match rng.gen_range(0..3) {
        0 => HeParams::transparent(pasta.modulus()),
        1 => HeParams::bfv_toy(pasta.modulus()),
        _ => HeParams::bfv_toy(pasta.modulus()).with_ring_degree(64).unwrap(),
    };
    let text = String::from_utf8_lossy(&random_bytes(rng, 24)).into_owned();
    let blobs: Vec<Vec<u8>> = (0..rng.gen_range(0..4)).map(|_| random_bytes(rng, 40)).collect();
    match rng.gen_range(0..7) {
        0 => Message::ClientHello { pasta, he },
        1 => Message::ServerHello {
            accepted: rng.gen(),
            pasta,
            he,
        },
        2 => Message::KeyProvision {
            public_material: random_bytes(rng, 64),
            key_words: blobs,
        },
        3 => Message::DataUpload {
            nonce: rng.gen(),
            words: (0..rng.gen_range(0..40)).map(|_| rng.gen()).collect(),
        },
        4 => Message::InferRequest { model_id: text },
        5 => Message::ResultCiphertexts { ciphertexts: blobs },
        _ => Message::Error {
            code: ErrorCode::from_byte(rng.gen()),
            reason: text,
        },
    }
}

fn protocol_robustness() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let mut rejected = 0;
    for i in 0..10_000 {
        let msg = random_message(&mut rng);
        let bytes = encode_frame(&msg);
        let back = catch_unwind(|| decode_frame(&bytes)).map_err(|_| format!("decoder panicked on frame {i}"))?;
        ensure!(
            back.as_ref().ok() == Some(&msg),
            "frame {i} did not roundtrip: {back:?}"
        );
        let mut bad = bytes.clone();
        match rng.gen_range(0..3) {
            0 => bad.truncate(rng.gen_range(0..bytes.len())),
            1 => {
                let at = rng.gen_range(0..bad.len());
                bad[at] ^= 1 << rng.gen_range(0..8);
            }
            _ => {
                bad = vec![0u8; rng.gen_range(0..64)];
                rng.fill_bytes(&mut bad);
            }
        }
        let r = catch_unwind(|| decode_frame(&bad)).map_err(|_| format!("decoder panicked on mutated frame {i}"))?;
        if let Err(e) = r {
            rejected += 1;
            let typed = matches!(
                e,
                FrameError::BadMagic(_)
                    | FrameError::BadVersion(_)
                    | FrameError::TruncatedFrame { .. }
                    | FrameError::OversizedFrame(_)
                    | FrameError::UnknownType(_)
                    | FrameError::Malformed(_)
                    | FrameError::TrailingBytes(_)
            );
            ensure!(typed, "untyped error {e:?}");
        }
    }

    let store = {
        let mut s = hheml::protocol::ModelStore::new();
        let small = PastaParams::new(257, 2, 3).unwrap();
        s.insert("m", 257, LinearModel::random(2, 4, small.modulus(), false, &mut rng));
        s
    };
    let policy = ServerPolicy::default();
    let script = valid_script(&mut rng);
    let mut pairs = 0;
    for phase in Phase::ALL {
        for ty in MsgType::ALL {
            if phase.expects() == Some(ty) {
                continue;
            }
            let mut s = ServerSession::new(&store, &policy);
            for msg in &script {
                if s.phase() == phase {
                    break;
                }
                s.handle(msg.clone());
            }
            if phase == Phase::Done {
                s.handle(Message::InferRequest { model_id: "m".into() });
            }
            ensure!(s.phase() == phase, "could not reach {phase:?}");
            let probe = script
                .iter()
                .chain([Message::InferRequest { model_id: "m".into() }].iter())
                .find(|m| m.msg_type() == ty)
                .cloned()
                .unwrap_or_else(|| sample_reply(ty));
            let reply = s.handle(probe);
            ensure!(
                matches!(
                    reply,
                    Some(Message::Error {
                        code: ErrorCode::BadPhase,
                        ..
                    })
                ),
                "{phase:?} x {ty:?} answered {reply:?}"
            );
            pairs += 1;
        }
    }

    let golden = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/client_hello.bin"))
        .map_err(|e| e.to_string())?;
    let pasta = PastaParams::pasta4_edge();
    let hello = || {
        encode_frame(&Message::ClientHello {
            pasta,
            he: HeParams::bfv_toy(pasta.modulus()),
        })
    };
    ensure!(
        hello() == golden && hello() == hello(),
        "ClientHello bytes differ from the golden file"
    );
    Ok(format!("10^4 frames roundtrip, {rejected} mutated frames rejected with typed errors, no panics; {pairs} illegal phase pairs -> BadPhase; golden bytes stable"))
}

fn sample_reply(ty: MsgType) -> Message {
    let pasta = PastaParams::new(257, 2, 3).unwrap();
    let he = HeParams::transparent(pasta.modulus());
    match ty {
        MsgType::ServerHello => Message::ServerHello {
            accepted: true,
            pasta,
            he,
        },
        MsgType::ResultCiphertexts => Message::ResultCiphertexts { ciphertexts: vec![] },
        _ => Message::error(ErrorCode::Internal, "probe"),
    }
}

fn valid_script(rng: &mut ChaCha20Rng) -> Vec<Message> {
    let pasta = PastaParams::new(257, 2, 3).unwrap();
    let (_, pk) = keygen(&HeParams::transparent(pasta.modulus()), 3);
    let key = PastaSecretKey::random(&pasta, rng);
    let key_words = key
        .words()
        .iter()
        .map(|&w| {
            let mut b = hheml::codec::ByteWriter::new();
            pk.encode_ciphertext(&mut b, &pk.encrypt(w, rng).unwrap());
            b.into_bytes()
        })
        .collect();
    let msg = words(pasta.modulus(), 4, rng);
    let ct = pasta::encrypt(&key, 1, &msg, &pasta).unwrap();
    vec![
        Message::ClientHello {
            pasta,
            he: pk.params().clone(),
        },
        Message::KeyProvision {
            public_material: pk.to_bytes(),
            key_words,
        },
        Message::DataUpload {
            nonce: 1,
            words: ct.words.iter().map(|w| w.value()).collect(),
        },
    ]
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("pipeline round slots and throughput", table2),
        ("pipeline latency arithmetic", table1),
        ("permutation bijectivity at p=5", bijectivity),
        ("cipher roundtrips and additive stream", roundtrips),
        ("transciphering equals plaintext decryption", transcipher_oracle),
        ("end-to-end loopback inference", loopback),
        ("AES-128 against a reference", aes_oracle),
        ("BFV homomorphism and noise", bfv_properties),
        ("protocol robustness", protocol_robustness),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} [{secs:.2}s] {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} [{secs:.2}s] {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

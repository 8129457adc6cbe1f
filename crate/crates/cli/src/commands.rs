use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use hashsig_core::attacks::collect;
use hashsig_core::keyfile::{
    create_key_file, create_merkle_file, sign_key_file, sign_merkle_file, Checkpoint, FaultHook, NoFaults,
    MERKLE_STATE_MAGIC,
};
use hashsig_core::lamport::{
    keygen, keygen_from_seed, LamportParams, LamportPrivateKey, LamportPublicKey, LamportSignature,
    PRIVATE_KEY_MAGIC, PUBLIC_KEY_MAGIC,
};
use hashsig_core::merkle::{merkle_verify, MerkleKeySet, MerkleParams, MerkleRoot, MerkleSignature, ROOT_MAGIC};
use hashsig_core::params::{bound_lamport, dimension, AttackModel, Epsilon};
use hashsig_core::primitives::{prng_block, FamilyKey, FamilyKeys, Purpose, Seed};
use hashsig_core::session::{
    run_scripted, synthetic_schedule, ChannelScript, Outcome, PeerKey, Role, SessionConfig, SigningKey,
};
use rand::rngs::OsRng;
use rand::{SeedableRng, TryRngCore};
use rand_chacha::ChaCha20Rng;

use crate::{Cli, Command, Failure, Format, KeyMode, Model};

type Result<T> = std::result::Result<T, Failure>;

/// Environment variable naming a checkpoint index at which `sign` aborts
/// the process, emulating a crash. Used by the crash-safety tests.
const FAULT_ENV: &str = "HASHSIG_FAULT_AT";

pub fn run(cli: Cli) -> Result<()> {
    let keys = FamilyKeys::from_label(cli.family.as_bytes());
    match cli.command {
        Command::Keygen { mode, n, l, height, secret, public, seed_file } => {
            let params = LamportParams::new(n, l)?;
            match seed_file {
                Some(path) => {
                    let material = read(&path)?;
                    let seed = Seed::new(material).map_err(|_| Failure::Usage("seed file is empty".into()))?;
                    let mut rng = ChaCha20Rng::from_seed(prng_block(&seed, 0));
                    cmd_keygen(mode, params, height, &keys, &secret, &public, &mut rng)
                }
                None => cmd_keygen(mode, params, height, &keys, &secret, &public, &mut OsRng),
            }
        }
        Command::Sign { key, message, out } => cmd_sign(&keys, &key, &message, &out),
        Command::Verify { public, message, signature } => cmd_verify(&keys, &public, &message, &signature),
        Command::Params { k, model, mu, format, eps_ow, eps_cr, identities } => {
            cmd_params(k, model, mu, format, eps_ow.as_deref(), eps_cr.as_deref(), identities)
        }
        Command::ForgeDemo { l, n, observations, seed } => cmd_forge_demo(&keys, n, l, observations, seed),
        Command::SessionDemo { script, messages, mac } => cmd_session_demo(&keys, script.as_deref(), messages, mac),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn create(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| Failure::Malformed(format!("{}: {e}", path.display())))?;
    f.write_all(bytes)?;
    f.sync_all()?;
    Ok(())
}

fn seed_bits(params: LamportParams) -> usize {
    params.string_bits().max(256)
}

fn cmd_keygen<R: TryRngCore + ?Sized>(
    mode: KeyMode,
    params: LamportParams,
    height: u8,
    keys: &FamilyKeys,
    secret: &Path,
    public: &Path,
    rng: &mut R,
) -> Result<()> {
    match mode {
        KeyMode::Raw | KeyMode::Seeded => {
            let (sk, pk) = match mode {
                KeyMode::Raw => keygen(params, keys, rng)?,
                _ => keygen_from_seed(params, keys, &Seed::random(seed_bits(params), rng)?)?,
            };
            create_key_file(secret, &sk).map_err(|e| Failure::Malformed(format!("{}: {e}", secret.display())))?;
            create(public, &pk.to_bytes())?;
            println!(
                "one-time key n={} l={}: public key {} bits, signature {} bits",
                params.string_bits(),
                params.digest_bits(),
                pk.payload_bits(),
                params.signature_bits()
            );
        }
        KeyMode::Merkle => {
            let mp = MerkleParams::with_digest_width(height, params)?;
            let seed = Seed::random(seed_bits(params), rng)?;
            let set = MerkleKeySet::generate(mp, &seed, keys)?;
            create_merkle_file(secret, &set).map_err(|e| Failure::Malformed(format!("{}: {e}", secret.display())))?;
            create(public, &set.root().to_bytes())?;
            println!(
                "tree key H={} n={} l={}: {} signatures available, root {}",
                height,
                params.string_bits(),
                params.digest_bits(),
                mp.leaf_count(),
                hex::encode(set.root().as_bytes())
            );
        }
    }
    Ok(())
}

/// Opens the output file only when the first octet is written, so a
/// refused signing operation leaves no file behind.
struct LazyFile {
    path: PathBuf,
    file: Option<File>,
}

impl Write for LazyFile {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if self.file.is_none() {
            self.file = Some(File::create(&self.path)?);
        }
        self.file.as_mut().expect("opened").write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        match &mut self.file {
            Some(f) => f.sync_all(),
            None => Ok(()),
        }
    }
}

/// Aborts the process at the given checkpoint index.
struct AbortAt {
    target: usize,
    seen: usize,
}

impl FaultHook for AbortAt {
    fn reach(&mut self, _: Checkpoint) -> hashsig_core::Result<()> {
        if self.seen == self.target {
            std::process::abort();
        }
        self.seen += 1;
        Ok(())
    }
}

fn cmd_sign(keys: &FamilyKeys, key: &Path, message: &Path, out: &Path) -> Result<()> {
    let msg = read(message)?;
    let head = read(key)?;
    let mut sink = LazyFile { path: out.to_path_buf(), file: None };
    let mut abort_hook;
    let hook: &mut dyn FaultHook = match std::env::var(FAULT_ENV).ok().and_then(|v| v.parse().ok()) {
        Some(target) => {
            abort_hook = AbortAt { target, seen: 0 };
            &mut abort_hook
        }
        None => &mut NoFaults,
    };
    match head.get(..4) {
        Some(m) if m == PRIVATE_KEY_MAGIC => sign_key_file(key, keys, &msg, &mut sink, hook)?,
        Some(m) if m == MERKLE_STATE_MAGIC => sign_merkle_file(key, keys, &msg, &mut sink, hook)?,
        _ => return Err(Failure::Malformed(format!("{}: not a private key file", key.display()))),
    }
    println!("signature written to {}", out.display());
    Ok(())
}

fn cmd_verify(keys: &FamilyKeys, public: &Path, message: &Path, signature: &Path) -> Result<()> {
    let pk_bytes = read(public)?;
    let msg = read(message)?;
    let sig_bytes = read(signature)?;
    let valid = match pk_bytes.get(..4) {
        Some(m) if m == PUBLIC_KEY_MAGIC => {
            let pk = LamportPublicKey::from_bytes(&pk_bytes, keys)?;
            let sig = LamportSignature::from_bytes(&sig_bytes)?;
            pk.verify(&msg, &sig)?
        }
        Some(m) if m == ROOT_MAGIC => {
            let root = MerkleRoot::from_bytes(&pk_bytes)?;
            let sig = MerkleSignature::from_bytes(&sig_bytes, keys)?;
            let params = MerkleParams::new(root.height(), root.node_bits(), sig.ots_public.params())?;
            merkle_verify(&root, &params, keys, &msg, &sig)?
        }
        _ => return Err(Failure::Malformed(format!("{}: not a public key file", public.display()))),
    };
    if valid {
        println!("valid");
        Ok(())
    } else {
        println!("invalid");
        Err(Failure::Rejected("signature does not verify".into()))
    }
}

fn parse_eps(text: &str) -> Result<Epsilon> {
    text.parse().map_err(|_| Failure::Usage(format!("cannot parse probability '{text}'")))
}

fn cmd_params(
    k: u32,
    model: Option<Model>,
    mu: u32,
    format: Format,
    eps_ow: Option<&str>,
    eps_cr: Option<&str>,
    identities: u64,
) -> Result<()> {
    let models = match model {
        Some(Model::Classical) => vec![AttackModel::Classical],
        Some(Model::Quantum) => vec![AttackModel::QuantumLowMemory],
        Some(Model::Parallel) => vec![AttackModel::Parallel { mu }],
        None => vec![AttackModel::Classical, AttackModel::QuantumLowMemory, AttackModel::Parallel { mu }],
    };
    let eps = match (eps_ow, eps_cr) {
        (Some(ow), Some(cr)) => Some((parse_eps(ow)?, parse_eps(cr)?)),
        (None, None) => None,
        _ => return Err(Failure::Usage("--eps-ow and --eps-cr go together".into())),
    };
    let rows = models
        .into_iter()
        .map(|m| Ok((m, dimension(k, m)?)))
        .collect::<Result<Vec<_>>>()?;
    if let Format::Text = format {
        println!("{:<10} {:>5} {:>4} {:>5} {:>5} {:>12}", "model", "k", "mu", "n", "l", "pk bits");
    }
    for (m, p) in rows {
        let lp = p.lamport_params()?;
        match format {
            Format::Text => println!(
                "{:<10} {:>5} {:>4} {:>5} {:>5} {:>12}",
                m.name(),
                k,
                m.mu(),
                p.string_bits,
                p.digest_bits,
                lp.public_key_bits()
            ),
            Format::Line => println!("{}", p.to_line()),
        }
        if let Some((ow, cr)) = &eps {
            let b = bound_lamport(p.digest_bits as u64, ow, cr, identities);
            match format {
                Format::Text => println!(
                    "  bound for {identities} identities: {} (log2 {:.2})",
                    b.clamped(),
                    b.epsilon.log2()
                ),
                Format::Line => println!(
                    "bound {} {} {}*2^{}",
                    m.name(),
                    identities,
                    b.epsilon.mantissa(),
                    b.epsilon.exponent()
                ),
            }
        }
    }
    Ok(())
}

fn cmd_forge_demo(keys: &FamilyKeys, n: usize, l: usize, observations: usize, seed: u64) -> Result<()> {
    if l > 24 {
        return Err(Failure::Usage("forge-demo needs a toy digest of at most 24 bits".into()));
    }
    if observations == 0 {
        return Err(Failure::Usage("at least one observation is needed".into()));
    }
    let params = LamportParams::new(n, l)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (sk, pk) = keygen(params, keys, &mut rng)?;
    let raw = sk.to_bytes();
    println!("key n={n} l={l}, {observations} messages signed with it");

    let mut obs = Vec::new();
    let mut digests = Vec::new();
    for k in 0..observations {
        let msg = format!("observed message {k}").into_bytes();
        let mut reused = LamportPrivateKey::from_bytes(&raw)?;
        let sig = reused.sign(keys, &msg)?;
        let d = pk.digest(&msg)?;
        println!("observation {k}: digest {}", hex::encode(d.as_bytes()));
        digests.push(d);
        obs.push((msg, sig));
    }
    let material = collect(&pk, &obs)?;
    let forgeable = material.enumerate_forgeable()?;
    println!("free positions: {}", material.free_positions());
    println!("forgeable digests: {} (2^{})", forgeable.len(), material.free_positions());
    if forgeable.iter().all(|d| digests.contains(d)) {
        println!("nothing forgeable beyond the observed messages");
        return Ok(());
    }
    let tries = 1usize << (l + 6).min(26);
    match material.search_message(&digests, &mut rng, tries)? {
        Some(target) => {
            let forged = material.forge(&target)?;
            let ok = pk.verify(&target, &forged)?;
            println!("target message: {}", hex::encode(&target));
            println!("target digest: {}", hex::encode(pk.digest(&target)?.as_bytes()));
            println!("forgery verifies: {ok}");
            if !ok {
                return Err(Failure::Rejected("forged signature did not verify".into()));
            }
        }
        None => {
            let d = forgeable.iter().find(|d| !digests.contains(d)).expect("checked above");
            let forged = material.forge_digest(d)?;
            let ok = pk.verify_digest(d, &forged)?;
            println!("no message found in {tries} tries; forging digest {}", hex::encode(d.as_bytes()));
            println!("forgery verifies: {ok}");
        }
    }
    Ok(())
}

fn session_configs(keys: &FamilyKeys, mac: bool) -> Result<(SessionConfig, SessionConfig)> {
    let params = LamportParams::new(128, 256)?;
    let party = |label: &[u8]| -> Result<(LamportPrivateKey, LamportPublicKey)> {
        let seed = Seed::new([b"session-demo ".as_slice(), label].concat())?;
        Ok(keygen_from_seed(params, keys, &seed)?)
    };
    let (isk, ipk) = party(b"initiator")?;
    let (rsk, rpk) = party(b"responder")?;
    let mac_key = mac.then(|| FamilyKey::from_label(Purpose::Mac, b"session-demo"));
    let initiator = SessionConfig {
        role: Role::Initiator,
        keys: keys.clone(),
        signing_key: SigningKey::Lamport(isk),
        peer_key: PeerKey::Lamport(rpk),
        next_public_key: None,
        mac_key: mac_key.clone(),
    };
    let responder = SessionConfig {
        role: Role::Responder,
        keys: keys.clone(),
        signing_key: SigningKey::Lamport(rsk),
        peer_key: PeerKey::Lamport(ipk),
        next_public_key: None,
        mac_key,
    };
    Ok((initiator, responder))
}

fn describe(o: &Outcome) -> String {
    match o {
        Outcome::Accepted(_) => "accepted".into(),
        Outcome::Aborted(r) => format!("aborted ({r:?})"),
    }
}

fn cmd_session_demo(keys: &FamilyKeys, script: Option<&Path>, messages: usize, mac: bool) -> Result<()> {
    let script = match script {
        Some(path) => {
            let text = String::from_utf8(read(path)?)
                .map_err(|_| Failure::Malformed(format!("{}: not UTF-8", path.display())))?;
            text.parse::<ChannelScript>()?
        }
        None => ChannelScript::honest(),
    };
    let (i, r) = session_configs(keys, mac)?;
    let run = run_scripted(i, r, &synthetic_schedule(messages), &script)?;
    print!("{}", run.log);
    println!("initiator: {}", describe(&run.initiator));
    println!("responder: {}", describe(&run.responder));
    println!(
        "signatures: initiator {}, responder {}",
        run.initiator_state.signatures_issued(),
        run.responder_state.signatures_issued()
    );
    if run.both_accepted() {
        Ok(())
    } else {
        Err(Failure::Rejected("session aborted".into()))
    }
}

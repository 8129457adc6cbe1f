//! `hashsig`: key lifecycle, signing, verification, parameter tables and
//! demonstrations for hash-based one-time signatures.
//!
//! Exit codes: 0 success or valid signature, 1 cryptographic rejection
//! (invalid signature, used key, aborted session), 2 malformed or
//! unreadable input, 3 usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hashsig_core::Error;

pub const DEFAULT_FAMILY_LABEL: &str = "hashsig default family";

#[derive(Parser)]
#[command(name = "hashsig", version, about = "Hash-based one-time and tree signatures")]
struct Cli {
    /// Label from which the f, g and T family keys are derived. Signer and
    /// verifier must agree on it.
    #[arg(long, global = true, default_value = DEFAULT_FAMILY_LABEL)]
    family: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KeyMode {
    /// Private strings drawn directly from the entropy source.
    Raw,
    /// Private strings expanded from a stored seed.
    Seeded,
    /// A tree of seeded one-time keys under a single root.
    Merkle,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Classical,
    Quantum,
    Parallel,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Line,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key pair. Set HASHSIG_SEED_FILE (or --seed-file) for
    /// reproducible output.
    Keygen {
        #[arg(long, value_enum, default_value = "raw")]
        mode: KeyMode,
        /// Private string length in bits.
        #[arg(long, default_value_t = 128)]
        n: usize,
        /// Digest length in bits.
        #[arg(long, default_value_t = 256)]
        l: usize,
        /// Tree height (merkle mode).
        #[arg(long, default_value_t = 4)]
        height: u8,
        /// Private key output (LSK1, or MSK1 in merkle mode).
        #[arg(long)]
        secret: PathBuf,
        /// Public key output (LPK1, or MRT1 in merkle mode).
        #[arg(long)]
        public: PathBuf,
        #[arg(long, env = "HASHSIG_SEED_FILE")]
        seed_file: Option<PathBuf>,
    },
    /// Sign a message file. The key is marked used on disk before any
    /// signature octet is written.
    Sign {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        message: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify a signature. Exit 0 valid, 1 invalid, 2 malformed.
    Verify {
        #[arg(long)]
        public: PathBuf,
        #[arg(long)]
        message: PathBuf,
        #[arg(long)]
        signature: PathBuf,
    },
    /// Print string and digest lengths for a security level, and optionally
    /// the resulting Lamport bound.
    Params {
        /// Target security in bits.
        #[arg(long)]
        k: u32,
        /// Attacker model; all three are listed when omitted.
        #[arg(long, value_enum)]
        model: Option<Model>,
        /// Resource exponent for the parallel model.
        #[arg(long, default_value_t = 64)]
        mu: u32,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// One-way advantage, e.g. `2^-128` or `3*2^-100`.
        #[arg(long)]
        eps_ow: Option<String>,
        /// Collision advantage of the digest family.
        #[arg(long)]
        eps_cr: Option<String>,
        /// Number of identities (one signature each).
        #[arg(long, default_value_t = 1)]
        identities: u64,
    },
    /// Forge a signature from several signatures under one toy-sized key.
    ForgeDemo {
        /// Digest length in bits (8, 16 or 24).
        #[arg(long, default_value_t = 16)]
        l: usize,
        /// Private string length in bits.
        #[arg(long, default_value_t = 16)]
        n: usize,
        /// Number of messages signed with the same key.
        #[arg(long, default_value_t = 2)]
        observations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Run a simulated session between two parties, optionally under an
    /// adversary script. Exit 0 iff both parties accept.
    SessionDemo {
        /// Adversary script: one action per line (`pass`, `flip i b`,
        /// `drop i`, `reorder i j`, `inject i2r|r2i HEX`).
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        messages: usize,
        /// Attach MAC tags to the authenticators.
        #[arg(long)]
        mac: bool,
    },
}

/// Failure of a subcommand, carrying its exit code.
pub enum Failure {
    Rejected(String),
    Malformed(String),
    Usage(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Rejected(_) => 1,
            Failure::Malformed(_) => 2,
            Failure::Usage(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Rejected(m) | Failure::Malformed(m) | Failure::Usage(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::KeyAlreadyUsed => Failure::Rejected("key already used".into()),
            Error::TreeExhausted => Failure::Rejected("all leaves of the tree key are used".into()),
            Error::NotForgeable => Failure::Rejected(e.to_string()),
            Error::InvalidParameter(_) => Failure::Usage(e.to_string()),
            other => Failure::Malformed(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Malformed(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("hashsig: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

//! `pcn`: verify claim-bound numbers from the command line.
//!
//! Exit codes: 0 when nothing is flagged, 1 when at least one span is
//! flagged, 2 on usage or I/O errors.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::RngCore;

use pcn_core::provenance::{build_merkle_tree, check_provenance, public_key_for, sign_claim, sign_root};
use pcn_core::{
    index_claims, ingest_retriever_payload, load_claims, parse_policy, preset, render, summarize, ClaimSet, Format,
    Keyring, PolicySpec, RenderOptions, TrustAnchor, UnitTable, Verifier,
};
use pcn_service::{AppState, ClaimStore, Generator, MockScript, ProxyConfig, Reloader, ServiceConfig};

#[derive(Parser)]
#[command(
    name = "pcn",
    version,
    about = "Verify numbers in generated text against structured claims"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label every number in a document and render the result.
    Verify(VerifyArgs),
    /// Inspect, sign, prove or convert claim files.
    #[command(subcommand)]
    Claims(ClaimsCommand),
    /// Generate an ed25519 signing key and print the matching keyring.
    Keygen(KeygenArgs),
    /// Run the HTTP verification service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Input document; standard input when omitted.
    input: Option<PathBuf>,
    /// Claim file or retriever payload (repeatable).
    #[arg(long)]
    claims: Vec<PathBuf>,
    /// Preset name, policy file, or inline policy JSON.
    #[arg(long, default_value = "strict")]
    policy: String,
    #[arg(long, value_enum, default_value_t = OutputFormat::Ansi)]
    format: OutputFormat,
    /// Write the JSON verification report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Trust anchors for provenance checks.
    #[arg(long)]
    keyring: Option<PathBuf>,
    /// Only claims with valid provenance may verify a number.
    #[arg(long, requires = "keyring")]
    require_provenance: bool,
    /// Plain ANSI output without color escapes.
    #[arg(long)]
    no_color: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Html,
    Ansi,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Html => Format::Html,
            OutputFormat::Ansi => Format::Ansi,
            OutputFormat::Json => Format::Json,
        }
    }
}

#[derive(Subcommand)]
enum ClaimsCommand {
    /// Print the claims in one or more files.
    Inspect {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Also report each claim's provenance status.
        #[arg(long)]
        keyring: Option<PathBuf>,
    },
    /// Sign every claim with an ed25519 key.
    Sign {
        file: PathBuf,
        /// Secret key file (base64 or hex, 32 bytes).
        #[arg(long)]
        key: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Attach Merkle inclusion proofs; the root goes to standard error.
    Merkle {
        file: PathBuf,
        /// Sign the root with this key so proofs verify against the keyring.
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Convert a retriever payload to a canonical claim file.
    Convert {
        file: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct KeygenArgs {
    /// Where to write the secret key.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "provider")]
    provider: String,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Claim files served to every request (repeatable); re-read on SIGHUP.
    #[arg(long)]
    claims: Vec<PathBuf>,
    #[arg(long, default_value = "strict")]
    policy: String,
    #[arg(long)]
    keyring: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GeneratorKind::Mock)]
    generator: GeneratorKind,
    /// Chat-completions endpoint for the proxy generator.
    #[arg(long, required_if_eq("generator", "proxy"))]
    generator_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Mock generator script; defaults to the bundled GDP scenario.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Browser origin allowed by CORS; any when omitted.
    #[arg(long)]
    cors_origin: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GeneratorKind {
    Mock,
    Proxy,
}

#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<u8, Failure>;

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn write_out(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| Failure(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

/// Loads and merges claim files; whitespace-only files hold no claims.
fn load_claim_files(paths: &[PathBuf]) -> Result<ClaimSet, Failure> {
    let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    let mut merged = ClaimSet::new(names.join(", "));
    for path in paths {
        let bytes = read(path)?;
        if bytes.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let set =
            load_claims(&bytes, &UnitTable::default()).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
        for claim in set.into_claims() {
            merged
                .push(claim)
                .map_err(|e| Failure(format!("{}: {e}", path.display())))?;
        }
    }
    Ok(merged)
}

fn load_keyring(path: &Path) -> Result<Keyring, Failure> {
    Keyring::from_json(&read(path)?).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn load_secret(path: &Path) -> Result<Vec<u8>, Failure> {
    let text =
        String::from_utf8(read(path)?).map_err(|_| Failure(format!("{}: not a text key file", path.display())))?;
    let text = text.trim();
    let bytes = if text.len() == 64 && text.bytes().all(|b| b.is_ascii_hexdigit()) {
        hex::decode(text)?
    } else {
        BASE64
            .decode(text)
            .map_err(|e| Failure(format!("{}: {e}", path.display())))?
    };
    if bytes.len() != 32 {
        return Err(Failure(format!(
            "{}: expected a 32-byte key, got {}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes)
}

/// A preset name, a path to a policy document, or the document itself.
fn resolve_policy(spec: &str) -> Result<PolicySpec, Failure> {
    if let Some(p) = preset(spec) {
        return Ok(p);
    }
    let path = Path::new(spec);
    if !spec.trim_start().starts_with('{') && path.exists() {
        let text = String::from_utf8(read(path)?).map_err(|_| Failure(format!("{spec}: not UTF-8")))?;
        return parse_policy(&text).map_err(|e| Failure(format!("{spec}: {e}")));
    }
    parse_policy(spec).map_err(|e| Failure(format!("policy `{spec}`: {e}")))
}

fn cmd_verify(args: VerifyArgs) -> Outcome {
    let text = match &args.input {
        Some(path) => String::from_utf8(read(path)?).map_err(|_| Failure(format!("{}: not UTF-8", path.display())))?,
        None => {
            let mut text = String::new();
            std::io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| Failure(format!("standard input: {e}")))?;
            text
        }
    };
    let index = index_claims(load_claim_files(&args.claims)?);
    let mut policy = resolve_policy(&args.policy)?;
    if args.require_provenance {
        policy = policy.with_provenance(true);
    }
    let mut verifier = Verifier::default();
    if let Some(path) = &args.keyring {
        verifier = verifier.with_keyring(load_keyring(path)?);
    }
    let doc = verifier.verify(&text, &index, &policy);
    let opts = RenderOptions {
        color: !args.no_color && std::env::var_os("NO_COLOR").is_none(),
        ..RenderOptions::with_format(args.format.into())
    };
    write_out(None, render(&doc, &opts).as_bytes())?;
    let report = summarize(&doc);
    if let Some(path) = &args.report {
        let mut json = serde_json::to_vec_pretty(&report.to_json_value())?;
        json.push(b'\n');
        write_out(Some(path), &json)?;
    }
    Ok(u8::from(report.flagged > 0))
}

fn cmd_claims(command: ClaimsCommand) -> Outcome {
    match command {
        ClaimsCommand::Inspect { files, keyring } => {
            let set = load_claim_files(&files)?;
            let keyring = keyring.as_deref().map(load_keyring).transpose()?;
            let mut out = format!("{} claim{}\n", set.len(), if set.len() == 1 { "" } else { "s" });
            for c in set.claims() {
                let mut line = format!("{}\t{}\t{}\t{}\t{}", c.claim_id, c.indicator, c.entity, c.time, c.value);
                if !c.unit.is_empty() {
                    line = format!("{line} {}", c.unit);
                }
                if let Some(k) = &keyring {
                    let status = serde_json::to_value(check_provenance(c, k))?;
                    line = format!("{line}\t{}", status.as_str().unwrap_or_default());
                }
                out.push_str(&line);
                out.push('\n');
            }
            write_out(None, out.as_bytes())?;
        }
        ClaimsCommand::Sign { file, key, out } => {
            let secret = load_secret(&key)?;
            let mut set = load_claim_files(&[file])?;
            for claim in set.claims_mut() {
                claim.signature = Some(sign_claim(claim, &secret)?);
                claim.algorithm = Some("ed25519".to_string());
            }
            write_out(out.as_deref(), &set.to_json_bytes())?;
        }
        ClaimsCommand::Merkle { file, key, out } => {
            let mut set = load_claim_files(&[file])?;
            let tree = build_merkle_tree(&set)?;
            let root_signature = key
                .as_deref()
                .map(|k| -> Result<Vec<u8>, Failure> { Ok(sign_root(&tree.root, &load_secret(k)?)?) })
                .transpose()?;
            for (claim, mut proof) in set.claims_mut().iter_mut().zip(tree.proofs) {
                proof.root_signature = root_signature.clone();
                claim.merkle_proof = Some(proof);
            }
            eprintln!("root {}", hex::encode(tree.root));
            write_out(out.as_deref(), &set.to_json_bytes())?;
        }
        ClaimsCommand::Convert { file, out } => {
            let bytes = read(&file)?;
            let set = ingest_retriever_payload(&bytes).map_err(|e| Failure(format!("{}: {e}", file.display())))?;
            write_out(out.as_deref(), &set.to_json_bytes())?;
        }
    }
    Ok(0)
}

fn cmd_keygen(args: KeygenArgs) -> Outcome {
    let mut secret = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut secret);
    let anchor = TrustAnchor::ed25519(args.provider, public_key_for(&secret)?)?;
    write_out(Some(&args.out), format!("{}\n", BASE64.encode(secret)).as_bytes())?;
    let keyring = Keyring {
        anchors: vec![anchor],
        ..Default::default()
    };
    write_out(None, format!("{}\n", keyring.to_json()).as_bytes())?;
    Ok(0)
}

fn cmd_serve(args: ServeArgs) -> Outcome {
    let claim_paths = args.claims.clone();
    let keyring_path = args.keyring.clone();
    let load = move || -> Result<ClaimStore, String> {
        let claims = load_claim_files(&claim_paths).map_err(|f| f.0)?;
        let keyring = keyring_path.as_deref().map(load_keyring).transpose().map_err(|f| f.0)?;
        Ok(ClaimStore::new(index_claims(claims), keyring))
    };
    let store = load().map_err(Failure)?;
    let generator = match args.generator {
        GeneratorKind::Mock => Generator::Mock(match &args.script {
            Some(path) => {
                MockScript::from_json(&read(path)?).map_err(|e| Failure(format!("{}: {e}", path.display())))?
            }
            None => MockScript::gdp_growth(),
        }),
        GeneratorKind::Proxy => {
            let mut config = ProxyConfig::new(args.generator_url.clone().unwrap_or_default());
            config.model = args.model.clone();
            Generator::proxy(config)?
        }
    };
    let state = AppState::new(ServiceConfig {
        store,
        default_policy: resolve_policy(&args.policy)?,
        generator,
        cors_origin: args.cors_origin.clone(),
        ..Default::default()
    });
    let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).try_init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port))
            .await
            .map_err(|e| Failure(format!("cannot listen on {}:{}: {e}", args.host, args.port)))?;
        eprintln!("pcn: listening on http://{}", listener.local_addr()?);
        let reload: Reloader = Arc::new(load);
        pcn_service::serve(listener, state, Some(reload), pcn_service::shutdown_signal()).await?;
        Ok(0)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Verify(args) => cmd_verify(args),
        Command::Claims(command) => cmd_claims(command),
        Command::Keygen(args) => cmd_keygen(args),
        Command::Serve(args) => cmd_serve(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure(message)) => {
            eprintln!("pcn: {message}");
            ExitCode::from(2)
        }
    }
}

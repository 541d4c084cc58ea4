use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use objectlens_cli::bench::{self, Target};
use objectlens_cli::client::{reenc_header, trapdoor_header, Gateway};
use objectlens_cli::datasets;
use objectlens_cli::keyfiles;
use objectlens_cli::report;
use objectlens_cli::CliError;
use objectlens_core::crypto::{
    encode_b64, hom_decrypt, hom_keygen, peks_keygen, peks_trapdoor, pre_token, HomCiphertext,
    decode_b64, DEFAULT_PLAINTEXT_BOUND,
};

#[derive(Parser)]
#[command(name = "olens", version, about = "Client and benchmark toolkit for the view gateway")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Conn {
    /// Gateway base URL.
    #[arg(long, env = "OLENS_GATEWAY", default_value = "http://127.0.0.1:9870")]
    gateway: String,
    /// Value sent as x-auth-token.
    #[arg(long, env = "OLENS_TOKEN")]
    auth_token: String,
}

impl Conn {
    fn client(&self) -> Result<Gateway, CliError> {
        Gateway::new(&self.gateway, &self.auth_token)
    }

    fn target(&self) -> Target {
        Target { gateway: self.gateway.clone(), token: self.auth_token.clone() }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a keypair and write both halves to disk.
    Keygen(KeygenArgs),
    /// Assign a user label in gateway metadata.
    Label(LabelArgs),
    /// Mint a re-encryption token from an owner key to a receiver key.
    Token(TokenArgs),
    /// Derive a search trapdoor for one keyword.
    Trapdoor(TrapdoorArgs),
    /// Manage policies on the gateway.
    Policy(PolicyArgs),
    /// Upload an object.
    Put(PutArgs),
    /// Download an object view.
    Get(GetArgs),
    /// Decrypt a ciphertext or an aggregated view field.
    Decrypt(DecryptArgs),
    /// Generate a dataset with its plaintext sidecar.
    GenData(GenDataArgs),
    /// Run benchmarks.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KeyKind {
    Hom,
    Peks,
}

#[derive(Args)]
struct KeygenArgs {
    /// Key scheme: summation (hom) or search (peks).
    #[arg(long, value_enum)]
    kind: KeyKind,
    /// Key owner; file names and the metadata key derive from this.
    #[arg(long)]
    name: String,
    #[arg(long, default_value = "keys")]
    out_dir: PathBuf,
    /// Seed for reproducible keys; omit for random key material.
    #[arg(long)]
    seed: Option<u64>,
    /// Also upload the public key to metadata `keys/<name>/<kind>`.
    #[arg(long)]
    push: bool,
    #[arg(long, env = "OLENS_GATEWAY")]
    gateway: Option<String>,
    #[arg(long, env = "OLENS_TOKEN")]
    auth_token: Option<String>,
}

#[derive(Args)]
struct LabelArgs {
    #[command(flatten)]
    conn: Conn,
    /// User the label applies to.
    #[arg(long)]
    user: String,
    /// Label value, e.g. `treasurer`.
    #[arg(long)]
    label: String,
}

#[derive(Args)]
struct TokenArgs {
    /// Owner's summation secret key file.
    #[arg(long)]
    owner_sk: PathBuf,
    /// Receiver's summation public key file.
    #[arg(long)]
    receiver_pk: PathBuf,
    /// Write raw token bytes here; otherwise print base64 to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrapdoorArgs {
    /// Searcher's secret key file.
    #[arg(long)]
    sk: PathBuf,
    #[arg(long)]
    keyword: String,
    /// Write raw trapdoor bytes here; otherwise print base64 to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PolicyArgs {
    #[command(flatten)]
    conn: Conn,
    #[command(subcommand)]
    cmd: PolicyCmd,
}

#[derive(Subcommand)]
enum PolicyCmd {
    /// Install or replace a policy from a JSON file.
    Put {
        #[arg(long)]
        file: PathBuf,
    },
    /// Print a policy's source document.
    Get { id: String },
    /// Remove a policy.
    Del { id: String },
    /// List installed policy ids.
    List,
}

#[derive(Args)]
struct PutArgs {
    #[command(flatten)]
    conn: Conn,
    /// Object path as account/container/object.
    #[arg(value_name = "ACCOUNT/CONTAINER/OBJECT")]
    path: String,
    #[arg(long)]
    file: PathBuf,
}

#[derive(Args)]
struct GetArgs {
    #[command(flatten)]
    conn: Conn,
    /// Object path as account/container/object.
    #[arg(value_name = "ACCOUNT/CONTAINER/OBJECT")]
    path: String,
    /// Write the view here; otherwise stream to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Re-encryption token file to send with the request.
    #[arg(long)]
    reenc_token: Option<PathBuf>,
    /// Trapdoor file to send with the request.
    #[arg(long)]
    trapdoor: Option<PathBuf>,
    /// Extra request headers as name=value.
    #[arg(long = "header", value_name = "NAME=VALUE")]
    headers: Vec<String>,
    /// Cap download bandwidth client-side.
    #[arg(long)]
    rate_mbps: Option<f64>,
    /// Print transfer statistics to stderr.
    #[arg(long)]
    stats: bool,
}

#[derive(Args)]
struct DecryptArgs {
    /// Secret key able to open the ciphertext (owner key for original
    /// ciphertexts, receiver key for re-encrypted ones).
    #[arg(long)]
    sk: PathBuf,
    /// JSON view file holding an aggregated field.
    #[arg(long, conflicts_with = "b64")]
    input: Option<PathBuf>,
    /// Field name of the aggregate inside the view.
    #[arg(long, default_value = "average_salary")]
    field: String,
    /// Bare base64 ciphertext instead of a view file.
    #[arg(long)]
    b64: Option<String>,
    /// Plaintext search bound for the discrete-log step.
    #[arg(long, default_value_t = DEFAULT_PLAINTEXT_BOUND)]
    bound: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Employees,
    Covid,
    Adult,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    kind: DataKind,
    #[arg(long, default_value_t = 100)]
    records: usize,
    #[arg(long, default_value = "data")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Owner summation public key (employees, covid).
    #[arg(long)]
    owner_pk: Option<PathBuf>,
    /// Search reader public keys (adult); repeatable.
    #[arg(long = "reader-pk")]
    reader_pks: Vec<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(subcommand)]
    cmd: BenchCmd,
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Time to first byte, raw vs a single inert step.
    Ttfb {
        #[command(flatten)]
        conn: Conn,
        #[arg(long, value_delimiter = ',', default_values_t = vec![10 * 1024, 100 * 1024, 1024 * 1024])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        clients: usize,
        #[arg(long, default_value = "bench")]
        account: String,
        #[arg(long, default_value = "ttfb")]
        container: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Write a CSV report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Download latency across inert chain lengths 0..=max-len.
    Chain {
        #[command(flatten)]
        conn: Conn,
        #[arg(long, default_value_t = 10)]
        max_len: usize,
        #[arg(long, default_value_t = 1024 * 1024)]
        size: usize,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        clients: usize,
        #[arg(long, default_value = "bench")]
        account: String,
        #[arg(long, default_value = "chain")]
        container: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Raw vs transformed download under a bandwidth cap.
    Usecase {
        #[command(flatten)]
        conn: Conn,
        /// Scenario: covid (aggregate view) or adult (search + labels).
        #[arg(long)]
        usecase: String,
        /// Link profile: 4g, fiber, or lan.
        #[arg(long, default_value = "4g")]
        profile: String,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        clients: usize,
        /// Records to generate; defaults to 170 facilities (covid, ≥10 MB)
        /// or 200 rows (adult).
        #[arg(long)]
        records: Option<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Where datasets and keys are generated; temporary by default.
        #[arg(long)]
        work_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Isolated crypto primitive timings with reference values.
    Crypto {
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn rng_from(seed: Option<u64>) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    }
}

fn run(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Keygen(args) => keygen(args),
        Cmd::Label(args) => {
            args.conn
                .client()?
                .put_meta(&format!("labels/{}", args.user), args.label.clone().into_bytes())?;
            println!("labeled {} as {}", args.user, args.label);
            Ok(())
        }
        Cmd::Token(args) => {
            let sk = keyfiles::load_hom_sk(&args.owner_sk)?;
            let pk = keyfiles::load_hom_pk(&args.receiver_pk)?;
            let token = pre_token(&sk, &pk)?;
            emit_artifact(&token.to_bytes(), args.out.as_deref(), "token")
        }
        Cmd::Trapdoor(args) => {
            let sk = keyfiles::load_peks_sk(&args.sk)?;
            let td = peks_trapdoor(&sk, &args.keyword)?;
            emit_artifact(&td.to_bytes(), args.out.as_deref(), "trapdoor")
        }
        Cmd::Policy(args) => policy(args),
        Cmd::Put(args) => {
            let n = args.conn.client()?.put_object_file(&args.path, &args.file)?;
            println!("stored {} ({n} bytes)", args.path);
            Ok(())
        }
        Cmd::Get(args) => get(args),
        Cmd::Decrypt(args) => decrypt(args),
        Cmd::GenData(args) => gen_data(args),
        Cmd::Bench(args) => run_bench(args.cmd),
    }
}

fn keygen(args: KeygenArgs) -> Result<(), CliError> {
    let mut rng = rng_from(args.seed);
    let (paths, pk_bytes, kind) = match args.kind {
        KeyKind::Hom => {
            let kp = hom_keygen(&mut rng);
            let paths = keyfiles::write_hom_keypair(&args.out_dir, &args.name, &kp)?;
            (paths, kp.pk.to_bytes(), "hom")
        }
        KeyKind::Peks => {
            let kp = peks_keygen(&mut rng);
            let paths = keyfiles::write_peks_keypair(&args.out_dir, &args.name, &kp)?;
            (paths, kp.pk.to_bytes(), "peks")
        }
    };
    println!("wrote {}", paths.sk.display());
    println!("wrote {}", paths.pk.display());
    if args.push {
        let (Some(gateway), Some(token)) = (args.gateway, args.auth_token) else {
            return Err(CliError::invalid(
                "--push needs --gateway and --auth-token (or OLENS_GATEWAY / OLENS_TOKEN)",
            ));
        };
        let key = format!("keys/{}/{kind}", args.name);
        Gateway::new(gateway, token)?.put_meta(&key, pk_bytes)?;
        println!("pushed public key to meta {key}");
    }
    Ok(())
}

fn emit_artifact(bytes: &[u8], out: Option<&std::path::Path>, what: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            std::fs::write(path, bytes)?;
            println!("wrote {what} to {}", path.display());
        }
        None => println!("{}", encode_b64(bytes)),
    }
    Ok(())
}

fn policy(args: PolicyArgs) -> Result<(), CliError> {
    let gw = args.conn.client()?;
    match args.cmd {
        PolicyCmd::Put { file } => {
            let text = std::fs::read_to_string(&file)?;
            let summary = gw.put_policy(&text)?;
            println!("{summary}");
        }
        PolicyCmd::Get { id } => print!("{}", gw.get_policy(&id)?),
        PolicyCmd::Del { id } => {
            gw.delete_policy(&id)?;
            println!("deleted {id}");
        }
        PolicyCmd::List => {
            for id in gw.list_policies()? {
                println!("{id}");
            }
        }
    }
    Ok(())
}

fn get(args: GetArgs) -> Result<(), CliError> {
    let gw = args.conn.client()?;
    let mut headers = Vec::new();
    if let Some(path) = &args.reenc_token {
        headers.push(reenc_header(&keyfiles::load_artifact_bytes(path)?));
    }
    if let Some(path) = &args.trapdoor {
        headers.push(trapdoor_header(&keyfiles::load_artifact_bytes(path)?));
    }
    for spec in &args.headers {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| CliError::invalid(format!("header `{spec}` is not name=value")))?;
        headers.push((name.to_string(), value.to_string()));
    }
    let cap = args.rate_mbps.map(objectlens_cli::ratelimit::TokenBucket::from_mbps);

    let stats = match &args.out {
        Some(path) => {
            let mut f = std::fs::File::create(path)?;
            gw.get_object(&args.path, &headers, &mut f, cap)?
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            let stats = gw.get_object(&args.path, &headers, &mut lock, cap)?;
            lock.flush()?;
            stats
        }
    };
    if args.stats {
        eprintln!(
            "ttfb_ms={:.3} total_ms={:.3} bytes={} transformed={} policy={}",
            stats.ttfb.as_secs_f64() * 1000.0,
            stats.total.as_secs_f64() * 1000.0,
            stats.bytes,
            stats.transformed,
            stats.policy_id.as_deref().unwrap_or("-"),
        );
    }
    Ok(())
}

fn decrypt(args: DecryptArgs) -> Result<(), CliError> {
    let sk = keyfiles::load_hom_sk(&args.sk)?;
    if let Some(text) = &args.b64 {
        let ct = HomCiphertext::from_bytes(&decode_b64(text)?)?;
        println!("{}", hom_decrypt(&sk, &ct, args.bound)?);
        return Ok(());
    }
    let Some(input) = &args.input else {
        return Err(CliError::invalid("pass either --input <view.json> or --b64 <ciphertext>"));
    };
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(input)?)?;
    let field = &doc[&args.field];
    if field.is_null() {
        return Err(CliError::invalid(format!(
            "view has no `{}` field; was the aggregation step granted?",
            args.field
        )));
    }
    let count = field["count"]
        .as_u64()
        .ok_or_else(|| CliError::invalid(format!("`{}` has no count", args.field)))?;
    if count == 0 {
        println!("count: 0");
        println!("nothing was aggregated; no sum to decrypt");
        return Ok(());
    }
    let ct_text = field["sum"]
        .as_str()
        .ok_or_else(|| CliError::invalid(format!("`{}` has no sum ciphertext", args.field)))?;
    let ct = HomCiphertext::from_bytes(&decode_b64(ct_text)?)?;
    let sum = hom_decrypt(&sk, &ct, args.bound)?;
    println!("sum: {sum}");
    println!("count: {count}");
    println!("average: {}", sum / count);
    Ok(())
}

fn gen_data(args: GenDataArgs) -> Result<(), CliError> {
    let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
    let files = match args.kind {
        DataKind::Employees => {
            let pk_path = args.owner_pk.ok_or_else(|| {
                CliError::invalid("--owner-pk is required for employees datasets")
            })?;
            let pk = keyfiles::load_hom_pk(&pk_path)?;
            datasets::gen_employees(&args.out_dir, args.records, &pk, &mut rng)?
        }
        DataKind::Covid => {
            let pk_path = args
                .owner_pk
                .ok_or_else(|| CliError::invalid("--owner-pk is required for covid datasets"))?;
            let pk = keyfiles::load_hom_pk(&pk_path)?;
            datasets::gen_covid(&args.out_dir, args.records, &pk, &mut rng)?
        }
        DataKind::Adult => {
            if args.reader_pks.is_empty() {
                return Err(CliError::invalid(
                    "at least one --reader-pk is required for adult datasets",
                ));
            }
            let readers = args
                .reader_pks
                .iter()
                .map(|p| keyfiles::load_peks_pk(p))
                .collect::<Result<Vec<_>, _>>()?;
            datasets::gen_adult(&args.out_dir, args.records, &readers, &mut rng)?
        }
    };
    println!("wrote {} ({} bytes)", files.data.display(), files.data_bytes);
    println!("wrote {}", files.sidecar.display());
    Ok(())
}

fn finish_bench(
    reports: Vec<report::BenchReport>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    report::print_table(&reports);
    if let Some(path) = out {
        report::write_csv(&path, &reports)?;
        println!("csv report written to {}", path.display());
    }
    Ok(())
}

fn run_bench(cmd: BenchCmd) -> Result<(), CliError> {
    match cmd {
        BenchCmd::Ttfb { conn, sizes, trials, clients, account, container, seed, out } => {
            let reports =
                bench::run_ttfb(&conn.target(), &sizes, trials, clients, &account, &container, seed)?;
            finish_bench(reports, out)
        }
        BenchCmd::Chain { conn, max_len, size, trials, clients, account, container, seed, out } => {
            let lengths: Vec<usize> = (0..=max_len).collect();
            let reports = bench::run_chain(
                &conn.target(),
                &lengths,
                size,
                trials,
                clients,
                &account,
                &container,
                seed,
            )?;
            finish_bench(reports, out)
        }
        BenchCmd::Usecase {
            conn,
            usecase,
            profile,
            trials,
            clients,
            records,
            seed,
            work_dir,
            out,
        } => {
            let uc = bench::UseCase::parse(&usecase)
                .ok_or_else(|| CliError::invalid(format!("unknown usecase `{usecase}`")))?;
            let prof = bench::profile_by_name(&profile)
                .ok_or_else(|| CliError::invalid(format!("unknown profile `{profile}`")))?;
            let records = records.unwrap_or(match uc {
                bench::UseCase::Covid => 130,
                bench::UseCase::Adult => 200,
            });
            let tmp;
            let workdir = match &work_dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    dir.clone()
                }
                None => {
                    tmp = std::env::temp_dir().join(format!("olens-usecase-{}", std::process::id()));
                    std::fs::create_dir_all(&tmp)?;
                    tmp
                }
            };
            let reports = bench::run_usecase(
                &conn.target(),
                uc,
                prof,
                trials,
                clients,
                records,
                seed,
                &workdir,
            )?;
            finish_bench(reports, out)
        }
        BenchCmd::Crypto { trials, out } => finish_bench(bench::run_crypto(trials)?, out),
    }
}

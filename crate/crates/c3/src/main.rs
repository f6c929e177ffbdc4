//! `c3`: build, serve, query, and evaluate compromised-credential
//! checking services.

use std::io::{BufRead, BufReader, BufWriter, IsTerminal, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use c3::client::{self, FsbSelection, Transcript};
use c3::estimator::HybridEstimator;
use c3::pipeline;
use c3::psi::PsiMode;
use c3::server::{self, ServiceConfig};
use c3::simlab::{self, SimBucketizer, SyntheticWorld};

/// Exit code when the credential was found in the leak data.
const EXIT_FOUND: u8 = 10;
/// Exit code for operational errors.
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "c3", version, about = "compromised-credential checking toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sort and de-duplicate a raw digest corpus.
    Ingest(IngestArgs),
    /// Compute the shortest anonymity-preserving hash-prefix length of a
    /// sorted corpus.
    Prefixlen(PrefixlenArgs),
    /// Group a sorted corpus into prefix buckets and export them.
    Bucketize(BucketizeArgs),
    /// Report bucket statistics for an exported range store.
    Stats(StatsArgs),
    /// Build every store a config enables, plus the manifest.
    Build(ConfigArgs),
    /// Serve the built stores over HTTP.
    Serve(ConfigArgs),
    /// Check one credential against a running server.
    Check(CheckArgs),
    /// Run guessing-game simulations and theorem checks on synthetic
    /// worlds.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct IngestArgs {
    input: PathBuf,
    output: PathBuf,
    /// Skip malformed lines (counted) instead of failing.
    #[arg(long)]
    lenient: bool,
    /// Digests held in memory before spilling to disk.
    #[arg(long, default_value_t = pipeline::DEFAULT_CHUNK_SIZE)]
    chunk_size: usize,
}

#[derive(Args)]
struct PrefixlenArgs {
    /// Sorted, de-duplicated digest file (ingest output).
    sorted_file: PathBuf,
    /// Reader-to-scanner queue depth, in digests.
    #[arg(long, default_value_t = pipeline::DEFAULT_QUEUE_DEPTH)]
    queue_depth: usize,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ExportFormat {
    Files,
    Store,
}

#[derive(Args)]
struct BucketizeArgs {
    /// Sorted, de-duplicated digest file (ingest output).
    input: PathBuf,
    /// Output directory (files) or store file path (store).
    output: PathBuf,
    /// Prefix length in hex characters.
    #[arg(long)]
    len: usize,
    #[arg(long, value_enum, default_value_t = ExportFormat::Store)]
    format: ExportFormat,
}

#[derive(Args)]
struct StatsArgs {
    store: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Proto {
    Hibp,
    Fsb,
    Gpc,
    Idb,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_enum)]
    proto: Proto,
    /// Username (required for gpc/idb).
    #[arg(long)]
    user: Option<String>,
    /// Server address, host:port or http://host:port.
    #[arg(long, default_value = "127.0.0.1:8372")]
    server: String,
    /// Estimator artifact path (required for fsb).
    #[arg(long)]
    estimator: Option<PathBuf>,
    /// Pin repeat fsb queries for one password to one bucket using the
    /// local cookie.
    #[arg(long)]
    derandomize: bool,
    /// Client state file holding the derandomization cookie.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long)]
    json: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Scheme {
    Hpb,
    Fsb,
    Idb,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    scheme: Scheme,
    /// Guessing budgets, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    q: Vec<usize>,
    /// FSB loss-free budget estimate.
    #[arg(long, default_value_t = 3)]
    qbar: usize,
    /// World description file (JSON).
    #[arg(long)]
    world: Option<PathBuf>,
    /// Generate this many random worlds instead of loading one.
    #[arg(long)]
    random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bucket space size for hpb (bits) / fsb (bucket count).
    #[arg(long, default_value_t = 16)]
    buckets: u64,
    /// Monte-Carlo trials per cell (0 = exact only).
    #[arg(long, default_value_t = 0)]
    trials: usize,
    /// Password policy file: {"min_length": .., "banned": [..]}.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Also run the correlated two-query attack.
    #[arg(long)]
    correlated: bool,
    /// Emit CSV instead of a table.
    #[arg(long)]
    csv: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Prefixlen(args) => cmd_prefixlen(args),
        Command::Bucketize(args) => cmd_bucketize(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Build(args) => cmd_build(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Check(args) => return cmd_check(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

type AnyError = Box<dyn std::error::Error>;

fn cmd_ingest(args: IngestArgs) -> Result<(), AnyError> {
    let mode = if args.lenient {
        pipeline::ParseMode::Lenient
    } else {
        pipeline::ParseMode::Strict
    };
    let reader = BufReader::new(std::fs::File::open(&args.input)?);
    let writer = BufWriter::new(std::fs::File::create(&args.output)?);
    let stats = pipeline::preprocess(reader, writer, mode, args.chunk_size)?;
    println!(
        "read {} lines, wrote {} unique digests ({} skipped, {} spilled chunks)",
        stats.read, stats.written, stats.skipped, stats.spilled_chunks
    );
    Ok(())
}

fn cmd_prefixlen(args: PrefixlenArgs) -> Result<(), AnyError> {
    let reader = BufReader::new(std::fs::File::open(&args.sorted_file)?);
    let len = pipeline::min_prefix_length_concurrent(reader, args.queue_depth)?;
    println!("{len}");
    Ok(())
}

fn cmd_bucketize(args: BucketizeArgs) -> Result<(), AnyError> {
    let reader = BufReader::new(std::fs::File::open(&args.input)?);
    let stream = pipeline::sorted_stream_from_reader(reader);
    let stats = match args.format {
        ExportFormat::Files => pipeline::export_bucket_files(stream, args.len, &args.output)?,
        ExportFormat::Store => pipeline::export_bucket_store(stream, args.len, &args.output)?,
    };
    print_bucket_stats(&stats);
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<(), AnyError> {
    use c3::kv::{FileTable, KeyValueStore};
    let table = FileTable::open(&args.store)?;
    let prefix_len = table.meta()["prefix_len"]
        .as_u64()
        .ok_or("store metadata lacks prefix_len")? as usize;
    let mut sizes: Vec<(c3::hashes::HashPrefix, usize)> = Vec::new();
    for (key, _) in table.scan_prefix(b"") {
        let digest = std::str::from_utf8(key)?;
        let prefix = c3::hashes::HashPrefix::parse(&digest[..prefix_len])?;
        match sizes.last_mut() {
            Some((p, n)) if *p == prefix => *n += 1,
            _ => sizes.push((prefix, 1)),
        }
    }
    let stats = pipeline::stats_from_sizes(sizes)?;
    print_bucket_stats(&stats);
    Ok(())
}

fn print_bucket_stats(stats: &pipeline::BucketStats) {
    println!("prefix length : {}", stats.prefix_len);
    println!("buckets       : {}", stats.bucket_count);
    println!("hashes        : {}", stats.total_hashes);
    println!("min bucket    : {} ({})", stats.min_size, stats.argmin);
    println!("max bucket    : {} ({})", stats.max_size, stats.argmax);
    println!("mean bucket   : {:.2}", stats.mean_size);
    println!("median bucket : {}", stats.median_size);
}

fn cmd_build(args: ConfigArgs) -> Result<(), AnyError> {
    let config = ServiceConfig::load(&args.config)?;
    let manifest = server::build_stores(&config)?;
    println!("built {:?} into {}", manifest.protocols, config.store_dir.display());
    Ok(())
}

fn cmd_serve(args: ConfigArgs) -> Result<(), AnyError> {
    let config = ServiceConfig::load(&args.config)?;
    server::serve(&config)?;
    Ok(())
}

/// Read the password from stdin (or an interactive prompt), never argv.
fn read_password() -> Result<String, AnyError> {
    let stdin = std::io::stdin();
    if stdin.is_terminal() {
        eprint!("password: ");
        std::io::stderr().flush()?;
    }
    let mut line = String::new();
    stdin.lock().read_line(&mut line)?;
    let pw = line.trim_end_matches(['\r', '\n']);
    Ok(pw.to_string())
}

fn server_addr(raw: &str) -> String {
    raw.trim_start_matches("http://")
        .trim_end_matches('/')
        .to_string()
}

fn cmd_check(args: CheckArgs) -> ExitCode {
    match run_check(&args) {
        Ok(found) => {
            if args.json {
                let proto = match args.proto {
                    Proto::Hibp => "hibp",
                    Proto::Fsb => "fsb",
                    Proto::Gpc => "gpc",
                    Proto::Idb => "idb",
                };
                println!(
                    "{}",
                    serde_json::json!({ "proto": proto, "leaked": found })
                );
            } else if found {
                println!("found: this credential appears in the leak data");
            } else {
                println!("not found");
            }
            if found {
                ExitCode::from(EXIT_FOUND)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run_check(args: &CheckArgs) -> Result<bool, AnyError> {
    let addr = server_addr(&args.server);
    let password = read_password()?;
    let transcript: Option<&mut Transcript> = None;
    match args.proto {
        Proto::Hibp => Ok(client::check_hibp(&addr, &password, transcript)?),
        Proto::Fsb => {
            let est_path = args
                .estimator
                .as_ref()
                .ok_or("--estimator <artifact> is required for fsb")?;
            let estimator = HybridEstimator::decode(&std::fs::read(est_path)?)?;
            let cookie;
            let selection = if args.derandomize {
                let state_path = args
                    .state
                    .clone()
                    .unwrap_or_else(|| PathBuf::from("c3-client-state.json"));
                cookie = client::ClientState::load_or_create(&state_path)?.cookie;
                FsbSelection::Derandomized { cookie: &cookie }
            } else {
                FsbSelection::Random {
                    seed: rand::random::<u64>(),
                }
            };
            Ok(client::check_fsb(
                &addr, &password, &estimator, selection, None,
            )?)
        }
        Proto::Gpc | Proto::Idb => {
            let user = args
                .user
                .as_ref()
                .ok_or("--user <username> is required for gpc/idb")?;
            let mode = if args.proto == Proto::Gpc {
                PsiMode::Gpc
            } else {
                PsiMode::Idb
            };
            Ok(client::check_psi(&addr, user, &password, mode, transcript)?)
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), AnyError> {
    let worlds: Vec<SyntheticWorld> = match (&args.world, args.random) {
        (Some(path), None) => vec![SyntheticWorld::from_json(&std::fs::read(path)?)?],
        (None, Some(n)) => (0..n as u64)
            .map(|i| {
                simlab::random_world(args.seed.wrapping_add(i), &simlab::RandomWorldSpec::default())
            })
            .collect(),
        (None, None) => vec![simlab::random_world(
            args.seed,
            &simlab::RandomWorldSpec::default(),
        )],
        (Some(_), Some(_)) => return Err("--world and --random are mutually exclusive".into()),
    };

    let policy: Option<simlab::PasswordPolicy> = match &args.policy {
        Some(path) => Some(serde_json::from_slice(&std::fs::read(path)?)?),
        None => None,
    };

    if args.csv {
        println!("world,scheme,q,qbar,baseline,bucketed,delta,mc_rate,mc_sigma,bounds");
    }

    for (index, world) in worlds.iter().enumerate() {
        simulate_one(&args, index, world, policy.as_ref())?;
    }
    Ok(())
}

fn simulate_one(
    args: &SimulateArgs,
    index: usize,
    world: &SyntheticWorld,
    policy: Option<&simlab::PasswordPolicy>,
) -> Result<(), AnyError> {
    let salt = args.seed.to_le_bytes();
    let marginal = simlab::WorldMarginal::new(world);

    // Bucketizer over the original (server-side) world; the policy only
    // restricts what the test samples.
    let hpb_bits = args.buckets.clamp(1, 16) as u32;
    let bucketizer = match args.scheme {
        Scheme::Hpb => SimBucketizer::Hpb(c3::bucketize::HpbParams::with_salt(
            hpb_bits,
            c3::hashes::HashAlgorithm::Sha256,
            Some(salt.to_vec()),
        )?),
        Scheme::Idb => SimBucketizer::Idb(c3::bucketize::HpbParams::with_salt(
            hpb_bits,
            c3::hashes::HashAlgorithm::Sha256,
            Some(salt.to_vec()),
        )?),
        Scheme::Fsb => {
            let q_bar = args.qbar.max(1);
            let p_qbar = marginal
                .prob_at_rank(q_bar)
                .ok_or("qbar exceeds the password universe")?;
            SimBucketizer::Fsb(c3::bucketize::FsbParams {
                num_buckets: args.buckets.max(1),
                q_bar: q_bar as u64,
                p_qbar,
                salt: &salt,
                dist: &marginal,
            })
        }
    };

    let sample_world = match policy {
        Some(p) => simlab::policy_filter(world, p)?,
        None => world.clone(),
    };

    if !args.csv {
        let policy_note = if policy.is_some() {
            format!(" ({} admitted by policy)", sample_world.passwords().len())
        } else {
            String::new()
        };
        println!(
            "world {index}: {} users x {} passwords{policy_note}, scheme {}",
            world.users().len(),
            world.passwords().len(),
            match args.scheme {
                Scheme::Hpb => "hpb",
                Scheme::Fsb => "fsb",
                Scheme::Idb => "idb",
            }
        );
        println!(
            "{:>6} {:>10} {:>10} {:>10} {:>12} {:>8}",
            "q", "baseline", "bucketed", "delta", "montecarlo", "bounds"
        );
    }

    for &q in &args.q {
        let baseline = simlab::adv_guess(&sample_world, q);
        let bucketed = simlab::adv_bucket(&sample_world, &bucketizer, q)?;
        let delta = bucketed - baseline;

        let mc = if args.trials > 0 {
            let attacker = simlab::OptimalAttacker::new(&sample_world, Some(&bucketizer));
            Some(simlab::run_game(
                &sample_world,
                simlab::Game::BucketGuess(&bucketizer),
                &attacker,
                q,
                args.trials,
                args.seed,
            ))
        } else {
            None
        };

        // Bound verdicts only apply when the theorem hypotheses hold
        // (independent world, no policy skew on the server side).
        let bounds = if policy.is_none() && world.is_independent() {
            let report = match args.scheme {
                Scheme::Hpb => match &bucketizer {
                    SimBucketizer::Hpb(p) => Some(simlab::check_hpb_bound(world, p, q)?),
                    _ => None,
                },
                Scheme::Idb => match &bucketizer {
                    SimBucketizer::Idb(p) => Some(simlab::check_idb_equality(world, p, q)?),
                    _ => None,
                },
                Scheme::Fsb => Some(simlab::check_fsb_theorem(
                    world,
                    args.buckets.max(1),
                    &salt,
                    q,
                    args.qbar.max(1),
                )?),
            };
            match report {
                Some(r) if r.all_ok() => "ok".to_string(),
                Some(r) => {
                    let failed: Vec<&str> =
                        r.checks.iter().filter(|c| !c.ok).map(|c| c.name).collect();
                    format!("VIOLATED: {}", failed.join("; "))
                }
                None => "-".to_string(),
            }
        } else {
            "-".to_string()
        };

        if args.csv {
            println!(
                "{index},{},{q},{},{baseline:.6},{bucketed:.6},{delta:.6},{},{},{bounds}",
                match args.scheme {
                    Scheme::Hpb => "hpb",
                    Scheme::Fsb => "fsb",
                    Scheme::Idb => "idb",
                },
                args.qbar,
                mc.map(|m| format!("{:.6}", m.rate)).unwrap_or_default(),
                mc.map(|m| format!("{:.6}", m.sigma)).unwrap_or_default(),
            );
        } else {
            println!(
                "{q:>6} {baseline:>10.6} {bucketed:>10.6} {delta:>10.6} {:>12} {bounds:>8}",
                mc.map(|m| format!("{:.4}±{:.4}", m.rate, m.sigma))
                    .unwrap_or_else(|| "-".to_string()),
            );
        }
    }

    if args.correlated {
        run_correlated_demo(args, world, &bucketizer)?;
    }
    Ok(())
}

/// Correlated two-query attack demo: the client checked a leaked
/// password, then a tweak of it; the observer ranks replacements from
/// both bucket ids.
fn run_correlated_demo(
    args: &SimulateArgs,
    world: &SyntheticWorld,
    bucketizer: &SimBucketizer<'_>,
) -> Result<(), AnyError> {
    use rand::SeedableRng;
    let corr = simlab::CorrelatedModel::tweak_default();
    let leaked = world.leaked_password_ids();
    if leaked.is_empty() {
        println!("correlated: world has no leaked passwords, skipping");
        return Ok(());
    }
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(args.seed ^ 0xC0FFEE);
    let trials = args.trials.max(1000);
    let q = *args.q.last().unwrap_or(&4);
    let mut attempted = 0usize;
    let mut hits = 0usize;
    for _ in 0..trials {
        let (u, w1) = world.sample_pair(&mut rng);
        if !leaked.contains(&w1) {
            continue;
        }
        let username = &world.users()[u];
        let w1_name = &world.passwords()[w1];
        // Second password: a tweak of the first that exists in the world
        // and is not leaked.
        let candidates: Vec<usize> = simlab::tweak_neighbors(w1_name)
            .into_iter()
            .filter_map(|t| world.password_id(&t))
            .filter(|w| !leaked.contains(w))
            .collect();
        let Some(&w2) = candidates.first() else {
            continue;
        };
        attempted += 1;
        let b1 = bucketizer.covered(username, w1_name).start;
        let w2_name = &world.passwords()[w2];
        let iv2 = bucketizer.covered(username, w2_name);
        let b2 = c3::bucketize::pick_bucket_random(&iv2, &mut rng);
        let guesses =
            simlab::correlated_attack(world, &corr, bucketizer, b1, b2, username, q)?;
        if guesses.iter().any(|g| g == w2_name) {
            hits += 1;
        }
    }
    if attempted == 0 {
        println!("correlated: no tweak pairs exist in this world, skipping");
    } else {
        println!(
            "correlated: {hits}/{attempted} second passwords recovered within q={q}",
        );
    }
    Ok(())
}

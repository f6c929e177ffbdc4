//! Store building: orchestrates the pipeline, estimator, interval-store,
//! and PSI precomputations into a self-describing artifact directory.
//!
//! Builds are deterministic given the same inputs: per-deployment salts
//! and the PSI key are created once and persisted in `secrets.json`, so
//! a rebuild rewrites byte-identical stores (the manifest timestamp is
//! the only moving part). The manifest is written last; a failed stage
//! leaves no manifest behind.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{ServeError, ServiceConfig};
use crate::bucketize::{FsbParams, IntervalStore};
use crate::credentials::LeakDataset;
use crate::estimator::HybridEstimator;
use crate::pipeline;
use crate::psi::{PsiBucketStore, PsiMode, PsiParams, ServerKey};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SECRETS_FILE: &str = "secrets.json";
pub const RANGE_STORE_FILE: &str = "range.kv";
pub const SORTED_CORPUS_FILE: &str = "sorted_hashes.txt";
pub const ESTIMATOR_FILE: &str = "estimator.bin";
pub const FSB_STORE_FILE: &str = "fsb.store";
pub const PSI_GPC_STORE_FILE: &str = "psi_gpc.store";
pub const PSI_IDB_STORE_FILE: &str = "psi_idb.store";

/// Everything a client needs to interoperate; served at /meta.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub version: u32,
    pub built_at_epoch_secs: u64,
    pub protocols: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<RangeMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fsb: Option<FsbMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<PsiMeta>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RangeMeta {
    pub prefix_chars: usize,
    pub algorithm: String,
    pub serve_full_hashes: bool,
    pub hash_count: u64,
    pub bucket_count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FsbMeta {
    pub num_buckets: u64,
    pub q_bar: u64,
    pub salt_hex: String,
    pub estimator_digest_hex: String,
    pub password_count: u64,
    pub shards: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PsiMeta {
    pub bucket_bits: u32,
    pub salt_hex: String,
    pub profile: String,
    pub key_id: String,
    pub modes: Vec<String>,
    /// Wire encoding of group elements; clients must reject anything
    /// that fails strict decoding under it.
    pub element_encoding: String,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, ServeError> {
        let bytes = std::fs::read(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Per-deployment secrets: public salts plus the private PSI key. The
/// salts are republished in the manifest; the key never leaves this
/// file.
#[derive(Debug, Serialize, Deserialize)]
struct Secrets {
    fsb_salt_hex: String,
    psi_salt_hex: String,
    psi_key_hex: String,
}

fn load_or_create_secrets(dir: &Path) -> Result<Secrets, ServeError> {
    let path = dir.join(SECRETS_FILE);
    if path.exists() {
        let bytes = std::fs::read(&path)?;
        return Ok(serde_json::from_slice(&bytes)?);
    }
    let mut rng = rand::rng();
    let mut fsb_salt = [0u8; 16];
    rng.fill_bytes(&mut fsb_salt);
    let mut psi_salt = [0u8; 16];
    rng.fill_bytes(&mut psi_salt);
    let key = ServerKey::generate(&mut rng);
    let secrets = Secrets {
        fsb_salt_hex: hex::encode(fsb_salt),
        psi_salt_hex: hex::encode(psi_salt),
        psi_key_hex: hex::encode(key.to_bytes()),
    };
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(&secrets)?)?;
    restrict_permissions(&tmp)?;
    std::fs::rename(&tmp, &path)?;
    Ok(secrets)
}

#[cfg(unix)]
fn restrict_permissions(path: &Path) -> std::io::Result<()> {
    use std::os::unix::fs::PermissionsExt;
    std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600))
}

#[cfg(not(unix))]
fn restrict_permissions(_path: &Path) -> std::io::Result<()> {
    Ok(())
}

pub(super) fn parse_hex_salt(hex_str: &str) -> Result<Vec<u8>, ServeError> {
    hex::decode(hex_str).map_err(|_| ServeError::Config("bad salt hex".into()))
}

pub fn load_server_key(dir: &Path) -> Result<ServerKey, ServeError> {
    let bytes = std::fs::read(dir.join(SECRETS_FILE))?;
    let secrets: Secrets = serde_json::from_slice(&bytes)?;
    let raw: [u8; 32] = hex::decode(&secrets.psi_key_hex)
        .ok()
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| ServeError::Config("bad psi key hex".into()))?;
    ServerKey::from_bytes(&raw).map_err(|e| ServeError::Config(e.to_string()))
}

/// Build every enabled store and write the manifest. Returns the
/// manifest for inspection.
pub fn build_stores(config: &ServiceConfig) -> Result<Manifest, ServeError> {
    std::fs::create_dir_all(&config.store_dir)?;
    let secrets = load_or_create_secrets(&config.store_dir)?;

    let mut manifest = Manifest {
        version: 1,
        built_at_epoch_secs: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        protocols: config.protocols.clone(),
        range: None,
        fsb: None,
        psi: None,
    };

    if config.has_protocol("hibp") {
        manifest.range = Some(build_range_store(config)?);
    }
    if config.has_protocol("fsb") {
        manifest.fsb = Some(build_fsb_store(config, &secrets)?);
    }
    let psi_modes: Vec<PsiMode> = ["gpc", "idb"]
        .iter()
        .filter(|m| config.has_protocol(m))
        .map(|m| PsiMode::from_tag(m).unwrap())
        .collect();
    if !psi_modes.is_empty() {
        manifest.psi = Some(build_psi_stores(config, &secrets, &psi_modes)?);
    }

    let tmp = config.store_dir.join("manifest.tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(&manifest)?)?;
    std::fs::rename(&tmp, config.store_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn build_range_store(config: &ServiceConfig) -> Result<RangeMeta, ServeError> {
    let corpus = config
        .hash_corpus
        .as_ref()
        .ok_or_else(|| ServeError::Config("hibp enabled but hash_corpus unset".into()))?;
    let sorted_path = config.store_dir.join(SORTED_CORPUS_FILE);

    let reader = BufReader::new(File::open(corpus)?);
    let writer = BufWriter::new(File::create(&sorted_path)?);
    pipeline::preprocess(reader, writer, config.parse_mode(), config.sort_chunk_size)?;

    let prefix_chars = match config.range_prefix_chars {
        Some(l) => l,
        None => {
            let reader = BufReader::new(File::open(&sorted_path)?);
            pipeline::min_prefix_length_concurrent(reader, pipeline::DEFAULT_QUEUE_DEPTH)?
        }
    };
    if prefix_chars == 0 {
        return Err(ServeError::Config(
            "derived prefix length 0; corpus too sparse for a range store".into(),
        ));
    }

    let stream = pipeline::sorted_stream_from_reader(BufReader::new(File::open(&sorted_path)?));
    let stats =
        pipeline::export_bucket_store(stream, prefix_chars, &config.store_dir.join(RANGE_STORE_FILE))?;

    let algorithm = {
        // Algorithm tag is implied by digest width; read one line back.
        use std::io::BufRead;
        let mut first = String::new();
        BufReader::new(File::open(&sorted_path)?).read_line(&mut first)?;
        crate::hashes::HashAlgorithm::from_hex_len(first.trim_end().len())
            .map_err(|e| ServeError::Config(e.to_string()))?
            .to_string()
    };

    Ok(RangeMeta {
        prefix_chars,
        algorithm,
        serve_full_hashes: config.range_full_hashes,
        hash_count: stats.total_hashes,
        bucket_count: stats.bucket_count as u64,
    })
}

fn build_fsb_store(config: &ServiceConfig, secrets: &Secrets) -> Result<FsbMeta, ServeError> {
    let corpus = config
        .password_corpus
        .as_ref()
        .ok_or_else(|| ServeError::Config("fsb enabled but password_corpus unset".into()))?;
    let reader = BufReader::new(File::open(corpus)?);
    let (dataset, _skipped) = LeakDataset::read_passwords(reader)
        .map_err(|e| ServeError::Config(e.to_string()))?;

    let estimator =
        HybridEstimator::train(&dataset, config.fsb.head_size, config.fsb.smoothing)
            .map_err(|e| ServeError::Config(e.to_string()))?;
    let artifact = estimator.encode();
    write_atomic(&config.store_dir.join(ESTIMATOR_FILE), &artifact)?;

    let salt = parse_hex_salt(&secrets.fsb_salt_hex)?;
    let params =
        FsbParams::from_estimator(&estimator, config.fsb.num_buckets, config.fsb.q_bar, &salt)
            .map_err(|e| ServeError::Config(e.to_string()))?;
    let passwords = dataset.passwords().map_err(|e| ServeError::Config(e.to_string()))?;
    let shards = config
        .fsb
        .shards
        .unwrap_or_else(|| crate::bucketize::default_shard_count(passwords.len()));
    let store = IntervalStore::build(
        passwords.keys().map(String::as_str),
        &params,
        shards,
        estimator.digest(),
    )
    .map_err(|e| ServeError::Config(e.to_string()))?;
    store
        .write_to(&config.store_dir.join(FSB_STORE_FILE))
        .map_err(|e| ServeError::Config(e.to_string()))?;

    Ok(FsbMeta {
        num_buckets: config.fsb.num_buckets,
        q_bar: config.fsb.q_bar,
        salt_hex: secrets.fsb_salt_hex.clone(),
        estimator_digest_hex: hex::encode(estimator.digest()),
        password_count: passwords.len() as u64,
        shards: store.shard_count() as u32,
    })
}

fn build_psi_stores(
    config: &ServiceConfig,
    secrets: &Secrets,
    modes: &[PsiMode],
) -> Result<PsiMeta, ServeError> {
    let corpus = config
        .pair_corpus
        .as_ref()
        .ok_or_else(|| ServeError::Config("psi enabled but pair_corpus unset".into()))?;
    let reader = BufReader::new(File::open(corpus)?);
    let (dataset, _skipped) =
        LeakDataset::read_pairs(reader).map_err(|e| ServeError::Config(e.to_string()))?;

    let salt = parse_hex_salt(&secrets.psi_salt_hex)?;
    let params = PsiParams::new(config.psi.bucket_bits, salt, config.psi.profile())
        .map_err(|e| ServeError::Config(e.to_string()))?;
    let key = load_server_key(&config.store_dir)?;

    for mode in modes {
        let store = PsiBucketStore::precompute(&dataset, &key, &params, *mode)
            .map_err(|e| ServeError::Config(e.to_string()))?;
        let file = match mode {
            PsiMode::Gpc => PSI_GPC_STORE_FILE,
            PsiMode::Idb => PSI_IDB_STORE_FILE,
        };
        store
            .write_to(&config.store_dir.join(file))
            .map_err(|e| ServeError::Config(e.to_string()))?;
    }

    Ok(PsiMeta {
        bucket_bits: config.psi.bucket_bits,
        salt_hex: secrets.psi_salt_hex.clone(),
        profile: config.psi.profile().tag().to_string(),
        key_id: key.key_id(),
        modes: modes.iter().map(|m| m.tag().to_string()).collect(),
        element_encoding: "ristretto255-compressed".to_string(),
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ServeError> {
    let tmp: PathBuf = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

//! The C3 query service: read-only HTTP endpoints over immutable stores.
//!
//! Routes:
//! - `GET /range/{PREFIX}`: newline-separated hash suffixes sharing the
//!   prefix (full digests behind a config flag).
//! - `GET /fsb/{BUCKET_ID}`: salted digests of the bucket's passwords.
//! - `POST /psi/{gpc|idb}` with `x=<hex>&b=<int>`: one OPRF round trip.
//! - `GET /meta`: the build manifest.
//!
//! Serving never mutates anything; builds happen offline and swap in via
//! atomic rename, so any number of worker threads can answer
//! concurrently.

mod build;
mod ratelimit;

pub use build::{
    build_stores, load_server_key, Manifest, FsbMeta, PsiMeta, RangeMeta, ESTIMATOR_FILE,
    FSB_STORE_FILE, MANIFEST_FILE, PSI_GPC_STORE_FILE, PSI_IDB_STORE_FILE, RANGE_STORE_FILE,
    SECRETS_FILE, SORTED_CORPUS_FILE,
};
pub use ratelimit::RateLimiter;

use std::net::IpAddr;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashes::HashPrefix;
use crate::kv::{FileTable, KeyValueStore};
use crate::psi::{self, PsiBucketStore, PsiMode, ServerKey, SlowHashProfile};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("pipeline: {0}")]
    Pipeline(#[from] crate::pipeline::PipelineError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("http: {0}")]
    Http(String),
}

/// Deployment configuration (JSON file behind `c3 build` / `c3 serve`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: String,
    pub store_dir: PathBuf,
    /// Any of "hibp", "fsb", "gpc", "idb".
    pub protocols: Vec<String>,
    pub hash_corpus: Option<PathBuf>,
    pub password_corpus: Option<PathBuf>,
    pub pair_corpus: Option<PathBuf>,
    /// None derives the shortest anonymity-preserving length from the
    /// corpus.
    pub range_prefix_chars: Option<usize>,
    /// Serve whole digests instead of suffixes on the range endpoint.
    pub range_full_hashes: bool,
    /// Skip malformed corpus lines instead of failing the build.
    pub lenient_parsing: bool,
    pub sort_chunk_size: usize,
    pub fsb: FsbConfig,
    pub psi: PsiConfig,
    pub rate_limit_per_minute: u32,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8372".into(),
            store_dir: PathBuf::from("c3-store"),
            protocols: vec!["hibp".into()],
            hash_corpus: None,
            password_corpus: None,
            pair_corpus: None,
            range_prefix_chars: Some(5), // 20 bits; null in the file derives it

            range_full_hashes: false,
            lenient_parsing: false,
            sort_chunk_size: crate::pipeline::DEFAULT_CHUNK_SIZE,
            fsb: FsbConfig::default(),
            psi: PsiConfig::default(),
            rate_limit_per_minute: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FsbConfig {
    pub num_buckets: u64,
    pub q_bar: u64,
    pub head_size: usize,
    pub smoothing: f64,
    pub shards: Option<usize>,
}

impl Default for FsbConfig {
    fn default() -> Self {
        FsbConfig {
            num_buckets: 1 << 30,
            q_bar: 100,
            head_size: crate::estimator::DEFAULT_HEAD_SIZE,
            smoothing: crate::estimator::DEFAULT_SMOOTHING,
            shards: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PsiConfig {
    pub bucket_bits: u32,
    /// "test" or "production" memory-hardness.
    pub slow_hash_profile: String,
}

impl Default for PsiConfig {
    fn default() -> Self {
        PsiConfig {
            bucket_bits: 16,
            slow_hash_profile: "production".into(),
        }
    }
}

impl PsiConfig {
    pub fn profile(&self) -> SlowHashProfile {
        SlowHashProfile::from_tag(&self.slow_hash_profile).unwrap_or(SlowHashProfile::Production)
    }
}

impl ServiceConfig {
    pub fn has_protocol(&self, tag: &str) -> bool {
        self.protocols.iter().any(|p| p == tag)
    }

    pub fn parse_mode(&self) -> crate::pipeline::ParseMode {
        if self.lenient_parsing {
            crate::pipeline::ParseMode::Lenient
        } else {
            crate::pipeline::ParseMode::Strict
        }
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ServeError> {
        let bytes = std::fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Immutable serving state shared across worker threads.
pub struct ServerState {
    manifest: Manifest,
    manifest_json: String,
    range: Option<FileTable>,
    fsb: Option<crate::bucketize::IntervalStore>,
    psi_gpc: Option<PsiBucketStore>,
    psi_idb: Option<PsiBucketStore>,
    psi_key: Option<ServerKey>,
    limiter: RateLimiter,
}

/// A route-level response; the transport layer maps it onto the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
    pub cacheable: bool,
}

impl HttpResponse {
    fn text(status: u16, body: impl Into<Vec<u8>>) -> Self {
        HttpResponse {
            status,
            content_type: "text/plain; charset=utf-8",
            body: body.into(),
            cacheable: false,
        }
    }

    fn cacheable_text(body: Vec<u8>) -> Self {
        HttpResponse {
            status: 200,
            content_type: "text/plain; charset=utf-8",
            body,
            cacheable: true,
        }
    }

    fn json(status: u16, body: String) -> Self {
        HttpResponse {
            status,
            content_type: "application/json",
            body: body.into_bytes(),
            cacheable: false,
        }
    }
}

impl ServerState {
    /// Load every store the manifest advertises.
    pub fn load(config: &ServiceConfig) -> Result<Self, ServeError> {
        let dir = &config.store_dir;
        let manifest = Manifest::load(dir)?;
        let range = match &manifest.range {
            Some(_) => Some(
                FileTable::open(&dir.join(RANGE_STORE_FILE))
                    .map_err(|e| ServeError::Config(e.to_string()))?,
            ),
            None => None,
        };
        let fsb = match &manifest.fsb {
            Some(_) => Some(
                crate::bucketize::IntervalStore::open(&dir.join(FSB_STORE_FILE))
                    .map_err(|e| ServeError::Config(e.to_string()))?,
            ),
            None => None,
        };
        let (mut psi_gpc, mut psi_idb, mut psi_key) = (None, None, None);
        if let Some(meta) = &manifest.psi {
            for mode in &meta.modes {
                let (file, slot) = match mode.as_str() {
                    "gpc" => (PSI_GPC_STORE_FILE, &mut psi_gpc),
                    "idb" => (PSI_IDB_STORE_FILE, &mut psi_idb),
                    other => {
                        return Err(ServeError::Config(format!("unknown psi mode {other}")))
                    }
                };
                *slot = Some(
                    PsiBucketStore::open(&dir.join(file))
                        .map_err(|e| ServeError::Config(e.to_string()))?,
                );
            }
            psi_key = Some(load_server_key(dir)?);
        }
        let manifest_json = serde_json::to_string_pretty(&manifest)?;
        Ok(ServerState {
            manifest,
            manifest_json,
            range,
            fsb,
            psi_gpc,
            psi_idb,
            psi_key,
            limiter: RateLimiter::new(config.rate_limit_per_minute),
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Route one request. `body` is only read for POST.
    pub fn handle(&self, method: &str, path: &str, body: &[u8], remote: IpAddr) -> HttpResponse {
        if !self.limiter.allow(remote) {
            return HttpResponse::text(429, "rate limit exceeded\n");
        }
        match (method, path) {
            ("GET", "/meta") => HttpResponse::json(200, self.manifest_json.clone()),
            ("GET", p) if p.starts_with("/range/") => self.handle_range(&p["/range/".len()..]),
            ("GET", p) if p.starts_with("/fsb/") => self.handle_fsb(&p["/fsb/".len()..]),
            ("POST", p) if p.starts_with("/psi/") => self.handle_psi(&p["/psi/".len()..], body),
            _ => HttpResponse::text(404, "not found\n"),
        }
    }

    fn handle_range(&self, raw_prefix: &str) -> HttpResponse {
        let (Some(meta), Some(store)) = (&self.manifest.range, &self.range) else {
            return HttpResponse::text(503, "range store unavailable\n");
        };
        let Ok(prefix) = HashPrefix::parse(raw_prefix) else {
            return HttpResponse::text(400, "malformed prefix\n");
        };
        if prefix.len() != meta.prefix_chars {
            return HttpResponse::text(
                400,
                format!("prefix must be {} hex characters\n", meta.prefix_chars),
            );
        }
        let mut body = Vec::new();
        for (key, _) in store.scan_prefix(prefix.as_str().as_bytes()) {
            let line = if meta.serve_full_hashes {
                key
            } else {
                &key[prefix.len()..]
            };
            body.extend_from_slice(line);
            body.push(b'\n');
        }
        HttpResponse::cacheable_text(body)
    }

    fn handle_fsb(&self, raw_bucket: &str) -> HttpResponse {
        let Some(store) = &self.fsb else {
            return HttpResponse::text(503, "fsb store unavailable\n");
        };
        let Ok(bucket) = raw_bucket.parse::<u64>() else {
            return HttpResponse::text(400, "malformed bucket id\n");
        };
        match store.bucket_contents(bucket) {
            Ok(contents) => {
                let mut body = Vec::new();
                for digest in contents {
                    body.extend_from_slice(digest.as_bytes());
                    body.push(b'\n');
                }
                HttpResponse::cacheable_text(body)
            }
            Err(_) => HttpResponse::text(400, "bucket id out of range\n"),
        }
    }

    fn handle_psi(&self, mode_tag: &str, body: &[u8]) -> HttpResponse {
        let Some(mode) = PsiMode::from_tag(mode_tag) else {
            return HttpResponse::text(404, "unknown psi mode\n");
        };
        let store = match mode {
            PsiMode::Gpc => self.psi_gpc.as_ref(),
            PsiMode::Idb => self.psi_idb.as_ref(),
        };
        let (Some(store), Some(key)) = (store, &self.psi_key) else {
            return HttpResponse::text(404, "psi mode not served\n");
        };
        let Some((x, bucket)) = parse_psi_body(body) else {
            return HttpResponse::text(400, "expected x=<hex element>&b=<bucket id>\n");
        };
        let max_bucket = if store.params().bucket_bits == 64 {
            u64::MAX
        } else {
            (1u64 << store.params().bucket_bits) - 1
        };
        if bucket > max_bucket {
            return HttpResponse::text(400, "bucket id out of range\n");
        }
        let element = match psi::decode_element(&x) {
            Ok(e) => e,
            Err(_) => return HttpResponse::text(400, "invalid element encoding\n"),
        };
        let (y, z) = psi::server_eval(key, &element, bucket, store);
        let z_hex: Vec<String> = z.iter().map(hex::encode).collect();
        let payload = serde_json::json!({
            "y": hex::encode(psi::encode_element(&y)),
            "z": z_hex,
        });
        HttpResponse::json(200, payload.to_string())
    }
}

/// Parse `x=<hex>&b=<int>` strictly: both fields required, nothing else
/// allowed. Exposed for the fuzz harness.
pub fn parse_psi_body(body: &[u8]) -> Option<(Vec<u8>, u64)> {
    let text = std::str::from_utf8(body).ok()?;
    let mut x = None;
    let mut b = None;
    for field in text.trim_end_matches(['\r', '\n']).split('&') {
        let (k, v) = field.split_once('=')?;
        match k {
            "x" if x.is_none() => x = Some(hex::decode(v).ok()?),
            "b" if b.is_none() => b = Some(v.parse::<u64>().ok()?),
            _ => return None,
        }
    }
    Some((x?, b?))
}

/// Serve forever on the configured address with a small worker pool.
pub fn serve(config: &ServiceConfig) -> Result<(), ServeError> {
    let state = Arc::new(ServerState::load(config)?);
    let server = Arc::new(
        tiny_http::Server::http(&config.listen).map_err(|e| ServeError::Http(e.to_string()))?,
    );
    eprintln!(
        "c3 serving {:?} on http://{}",
        state.manifest.protocols, config.listen
    );
    let workers: Vec<_> = (0..4)
        .map(|_| {
            let server = Arc::clone(&server);
            let state = Arc::clone(&state);
            std::thread::spawn(move || {
                while let Ok(request) = server.recv() {
                    respond(&state, request);
                }
            })
        })
        .collect();
    for w in workers {
        let _ = w.join();
    }
    Ok(())
}

/// Bind to an ephemeral port and serve in background threads; returns
/// the bound address. Used by tests and the smoke suite.
pub fn spawn_ephemeral(
    config: &ServiceConfig,
) -> Result<(std::net::SocketAddr, Arc<ServerState>), ServeError> {
    let state = Arc::new(ServerState::load(config)?);
    let server = Arc::new(
        tiny_http::Server::http("127.0.0.1:0").map_err(|e| ServeError::Http(e.to_string()))?,
    );
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| ServeError::Http("no ip addr".into()))?;
    for _ in 0..4 {
        let server = Arc::clone(&server);
        let state = Arc::clone(&state);
        std::thread::spawn(move || {
            while let Ok(request) = server.recv() {
                respond(&state, request);
            }
        });
    }
    // The Server is leaked into the worker threads by the Arc clones.
    Ok((addr, state))
}

fn respond(state: &ServerState, mut request: tiny_http::Request) {
    let method = request.method().as_str().to_string();
    let path = request.url().to_string();
    let remote = request
        .remote_addr()
        .map(|a| a.ip())
        .unwrap_or(IpAddr::from([127, 0, 0, 1]));
    let mut body = Vec::new();
    if method == "POST" {
        let _ = std::io::Read::read_to_end(&mut request.as_reader(), &mut body);
    }
    let out = state.handle(&method, &path, &body, remote);
    let mut response = tiny_http::Response::from_data(out.body).with_status_code(out.status);
    response.add_header(
        tiny_http::Header::from_bytes(&b"Content-Type"[..], out.content_type.as_bytes())
            .expect("static header"),
    );
    if out.cacheable {
        response.add_header(
            tiny_http::Header::from_bytes(
                &b"Cache-Control"[..],
                &b"public, max-age=31536000, immutable"[..],
            )
            .expect("static header"),
        );
    }
    let _ = request.respond(response);
}

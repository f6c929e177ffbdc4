//! The checking client: runs each protocol end to end against a server
//! and reports leak status. The password never leaves the process; what
//! goes on the wire is, at most, a bucket identifier and (for PSI) a
//! blinded group element.
//!
//! The HTTP layer is a small hand-rolled HTTP/1.1 client over a
//! `TcpStream`: every byte written to the socket can be captured into a
//! [`Transcript`], and the hygiene tests assert directly on those bytes.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::RngCore;
use thiserror::Error;

use crate::bucketize::{
    fsb_interval, fsb_salted_digest, pick_bucket_derandomized, pick_bucket_random, FsbParams,
};
use crate::estimator::HybridEstimator;
use crate::hashes::{hash_password, HashAlgorithm};
use crate::psi::{self, PsiMode, PsiParams, SlowHashProfile};
use crate::server::Manifest;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("network: {0}")]
    Network(String),
    #[error("server returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("server does not offer {0}")]
    ProtocolUnavailable(&'static str),
    #[error("estimator digest mismatch: local {local}, server {server}")]
    EstimatorMismatch { local: String, server: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Raw request/response byte captures for transcript inspection.
#[derive(Debug, Default)]
pub struct Transcript {
    pub requests: Vec<Vec<u8>>,
    pub responses: Vec<Vec<u8>>,
}

impl Transcript {
    /// True if `needle` occurs in any captured request.
    pub fn requests_contain(&self, needle: &[u8]) -> bool {
        self.requests
            .iter()
            .any(|r| r.windows(needle.len().max(1)).any(|w| w == needle))
    }
}

const IO_TIMEOUT: Duration = Duration::from_secs(10);

fn http_request(
    addr: &str,
    method: &str,
    path: &str,
    body: Option<&[u8]>,
    transcript: Option<&mut Transcript>,
) -> Result<(u16, Vec<u8>), ClientError> {
    let mut request = Vec::new();
    request.extend_from_slice(format!("{method} {path} HTTP/1.1\r\n").as_bytes());
    request.extend_from_slice(format!("Host: {addr}\r\n").as_bytes());
    request.extend_from_slice(b"Connection: close\r\n");
    if let Some(body) = body {
        request.extend_from_slice(b"Content-Type: application/x-www-form-urlencoded\r\n");
        request.extend_from_slice(format!("Content-Length: {}\r\n", body.len()).as_bytes());
        request.extend_from_slice(b"\r\n");
        request.extend_from_slice(body);
    } else {
        request.extend_from_slice(b"\r\n");
    }

    let mut stream = TcpStream::connect(addr).map_err(|e| ClientError::Network(e.to_string()))?;
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    stream.set_write_timeout(Some(IO_TIMEOUT))?;
    stream
        .write_all(&request)
        .map_err(|e| ClientError::Network(e.to_string()))?;
    let mut raw = Vec::new();
    stream
        .read_to_end(&mut raw)
        .map_err(|e| ClientError::Network(e.to_string()))?;

    if let Some(t) = transcript {
        t.requests.push(request);
        t.responses.push(raw.clone());
    }

    let header_end = raw
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .ok_or_else(|| ClientError::Protocol("malformed http response".into()))?;
    let head = std::str::from_utf8(&raw[..header_end])
        .map_err(|_| ClientError::Protocol("non-utf8 response head".into()))?;
    let status: u16 = head
        .lines()
        .next()
        .and_then(|line| line.split_whitespace().nth(1))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ClientError::Protocol("malformed status line".into()))?;
    Ok((status, raw[header_end + 4..].to_vec()))
}

fn expect_ok(status: u16, body: Vec<u8>) -> Result<Vec<u8>, ClientError> {
    if status == 200 {
        Ok(body)
    } else {
        Err(ClientError::Status {
            status,
            body: String::from_utf8_lossy(&body).into_owned(),
        })
    }
}

/// Fetch and parse the server manifest.
pub fn fetch_meta(addr: &str, transcript: Option<&mut Transcript>) -> Result<Manifest, ClientError> {
    let (status, body) = http_request(addr, "GET", "/meta", None, transcript)?;
    let body = expect_ok(status, body)?;
    serde_json::from_slice(&body).map_err(|e| ClientError::Protocol(e.to_string()))
}

/// Range-query check: hash locally, send only the prefix, compare the
/// returned suffixes offline.
pub fn check_hibp(
    addr: &str,
    password: &str,
    transcript: Option<&mut Transcript>,
) -> Result<bool, ClientError> {
    let mut transcript = transcript;
    let meta = fetch_meta(addr, transcript.as_deref_mut())?;
    let range = meta
        .range
        .as_ref()
        .ok_or(ClientError::ProtocolUnavailable("hibp"))?;
    let algorithm: HashAlgorithm = range
        .algorithm
        .parse()
        .map_err(|_| ClientError::Protocol("unknown hash algorithm in manifest".into()))?;
    let hash = hash_password(password.as_bytes(), algorithm);
    let prefix = hash
        .truncate(range.prefix_chars)
        .map_err(|e| ClientError::Protocol(e.to_string()))?;

    let (status, body) = http_request(
        addr,
        "GET",
        &format!("/range/{prefix}"),
        None,
        transcript,
    )?;
    let body = expect_ok(status, body)?;
    let body = String::from_utf8(body).map_err(|_| ClientError::Protocol("non-utf8 body".into()))?;
    let needle = if range.serve_full_hashes {
        hash.as_str()
    } else {
        hash.suffix(range.prefix_chars)
            .map_err(|e| ClientError::Protocol(e.to_string()))?
    };
    Ok(body.lines().any(|line| line == needle))
}

/// How the FSB client chooses inside the covered range.
pub enum FsbSelection<'a> {
    /// Fresh uniform choice (seeded for reproducibility).
    Random { seed: u64 },
    /// Stable choice keyed by the local cookie.
    Derandomized { cookie: &'a [u8] },
}

/// Frequency-smoothing check. The estimator artifact must match the
/// server's digest exactly: a silent mismatch would desynchronize the
/// interval layout, so it is a hard error.
pub fn check_fsb(
    addr: &str,
    password: &str,
    estimator: &HybridEstimator,
    selection: FsbSelection<'_>,
    transcript: Option<&mut Transcript>,
) -> Result<bool, ClientError> {
    let mut transcript = transcript;
    let meta = fetch_meta(addr, transcript.as_deref_mut())?;
    let fsb = meta
        .fsb
        .as_ref()
        .ok_or(ClientError::ProtocolUnavailable("fsb"))?;
    let local_digest = hex::encode(estimator.digest());
    if local_digest != fsb.estimator_digest_hex {
        return Err(ClientError::EstimatorMismatch {
            local: local_digest,
            server: fsb.estimator_digest_hex.clone(),
        });
    }
    let salt = hex::decode(&fsb.salt_hex)
        .map_err(|_| ClientError::Protocol("bad fsb salt in manifest".into()))?;
    let params = FsbParams::from_estimator(estimator, fsb.num_buckets, fsb.q_bar, &salt)
        .map_err(|e| ClientError::Protocol(e.to_string()))?;

    let interval = fsb_interval(password, &params);
    let bucket = match selection {
        FsbSelection::Random { seed } => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            pick_bucket_random(&interval, &mut rng)
        }
        FsbSelection::Derandomized { cookie } => {
            pick_bucket_derandomized(password, &interval, &salt, cookie)
        }
    };

    let (status, body) = http_request(
        addr,
        "GET",
        &format!("/fsb/{bucket}"),
        None,
        transcript,
    )?;
    let body = expect_ok(status, body)?;
    let body = String::from_utf8(body).map_err(|_| ClientError::Protocol("non-utf8 body".into()))?;
    let needle = hex::encode_upper(fsb_salted_digest(password, &salt));
    Ok(body.lines().any(|line| line == needle))
}

/// OPRF check: blind, one round trip, unblind, compare locally.
pub fn check_psi(
    addr: &str,
    username: &str,
    password: &str,
    mode: PsiMode,
    transcript: Option<&mut Transcript>,
) -> Result<bool, ClientError> {
    let mut transcript = transcript;
    let meta = fetch_meta(addr, transcript.as_deref_mut())?;
    let psi_meta = meta
        .psi
        .as_ref()
        .filter(|m| m.modes.iter().any(|t| t == mode.tag()))
        .ok_or(ClientError::ProtocolUnavailable(match mode {
            PsiMode::Gpc => "gpc",
            PsiMode::Idb => "idb",
        }))?;
    let salt = hex::decode(&psi_meta.salt_hex)
        .map_err(|_| ClientError::Protocol("bad psi salt in manifest".into()))?;
    let profile = SlowHashProfile::from_tag(&psi_meta.profile)
        .ok_or_else(|| ClientError::Protocol("unknown slow hash profile".into()))?;
    let params = PsiParams::new(psi_meta.bucket_bits, salt, profile)
        .map_err(|e| ClientError::Protocol(e.to_string()))?;

    let username = username.to_lowercase();
    let bucket = psi::client_bucket(&username, password, &params, mode)
        .map_err(|e| ClientError::Protocol(e.to_string()))?;
    let blinded = psi::blind(&username, password, &params, &mut rand::rng())
        .map_err(|e| ClientError::Protocol(e.to_string()))?;

    let body = format!(
        "x={}&b={bucket}",
        hex::encode(psi::encode_element(&blinded.element))
    );
    let (status, body) = http_request(
        addr,
        "POST",
        &format!("/psi/{}", mode.tag()),
        Some(body.as_bytes()),
        transcript,
    )?;
    let body = expect_ok(status, body)?;
    let value: serde_json::Value =
        serde_json::from_slice(&body).map_err(|e| ClientError::Protocol(e.to_string()))?;
    let y_bytes = value["y"]
        .as_str()
        .and_then(|s| hex::decode(s).ok())
        .ok_or_else(|| ClientError::Protocol("missing y".into()))?;
    let y = psi::decode_element(&y_bytes)
        .map_err(|_| ClientError::Protocol("server sent an invalid element".into()))?;
    let z: Vec<[u8; 32]> = value["z"]
        .as_array()
        .ok_or_else(|| ClientError::Protocol("missing z".into()))?
        .iter()
        .map(|e| {
            e.as_str()
                .and_then(|s| hex::decode(s).ok())
                .and_then(|v| v.try_into().ok())
                .ok_or_else(|| ClientError::Protocol("bad element in z".into()))
        })
        .collect::<Result<_, _>>()?;

    let unblinded = psi::unblind(&y, &blinded.blind)
        .map_err(|e| ClientError::Protocol(e.to_string()))?;
    Ok(psi::check_membership(&unblinded, &z))
}

/// Local client state: the derandomization cookie, generated once and
/// never transmitted. Access is exclusive-locked; the file is created
/// with owner-only permissions.
pub struct ClientState {
    pub cookie: [u8; 32],
    path: PathBuf,
}

impl ClientState {
    pub fn load_or_create(path: &Path) -> Result<Self, ClientError> {
        use std::fs::OpenOptions;
        let mut options = OpenOptions::new();
        options.read(true).write(true).create(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            options.mode(0o600);
        }
        let mut file = options.open(path)?;
        file.lock()?;
        let mut content = String::new();
        file.read_to_string(&mut content)?;
        let cookie = match serde_json::from_str::<serde_json::Value>(&content)
            .ok()
            .and_then(|v| v["cookie_hex"].as_str().map(str::to_string))
            .and_then(|s| hex::decode(s).ok())
            .and_then(|v| <[u8; 32]>::try_from(v).ok())
        {
            Some(cookie) => cookie,
            None => {
                let mut cookie = [0u8; 32];
                rand::rng().fill_bytes(&mut cookie);
                let json = serde_json::json!({ "cookie_hex": hex::encode(cookie) });
                file.set_len(0)?;
                use std::io::Seek;
                file.seek(std::io::SeekFrom::Start(0))?;
                file.write_all(serde_json::to_string_pretty(&json)?.as_bytes())?;
                file.sync_all()?;
                cookie
            }
        };
        file.unlock()?;
        Ok(ClientState {
            cookie,
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

//! Corpus preprocessing and the k-anonymity prefix pipeline.
//!
//! The flow mirrors how a breach corpus is actually prepared: normalize
//! and sort the raw digest file (externally when it is too big for
//! memory), scan once to find the shortest safe hash-prefix length, then
//! group hashes into buckets keyed by that prefix and export them.

mod extsort;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::mpsc::{sync_channel, Receiver};

use thiserror::Error;

use crate::hashes::{common_prefix_len, HashPrefix, PasswordHash};
use crate::kv::TableBuilder;

/// Default producer/consumer queue depth, in digests.
pub const DEFAULT_QUEUE_DEPTH: usize = 10_000;
/// Default number of digests held in memory before spilling to disk.
pub const DEFAULT_CHUNK_SIZE: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    MalformedLine {
        line: u64,
        source: crate::hashes::HashError,
    },
    #[error("stream is not sorted and unique at entry {index}")]
    Unsorted { index: u64 },
    #[error("prefix-length scan needs at least 3 hashes, got {0}")]
    TooFewHashes(u64),
    #[error("bucket prefix length {len} exceeds digest length {digest_len}")]
    PrefixTooLong { len: usize, digest_len: usize },
    #[error("bucket map is empty")]
    EmptyBuckets,
    #[error("reader thread disconnected")]
    Disconnected,
    #[error("kv store: {0}")]
    Kv(#[from] crate::kv::KvError),
}

/// Malformed-line policy for corpus readers. Strict is the default:
/// corpus integrity first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

pub(crate) type ParsedLine = Result<PasswordHash, PipelineError>;

/// Parse one corpus line (case-insensitive hex, blank lines skipped by
/// callers). Exposed for the fuzz harness.
pub fn parse_digest_line(line: &str) -> Result<PasswordHash, crate::hashes::HashError> {
    PasswordHash::parse(line.trim_end_matches('\r'))
}

struct LineParser<R: BufRead> {
    reader: R,
    mode: ParseMode,
    line_no: u64,
    skipped: u64,
    buf: String,
}

impl<R: BufRead> LineParser<R> {
    fn new(reader: R, mode: ParseMode) -> Self {
        LineParser {
            reader,
            mode,
            line_no: 0,
            skipped: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for LineParser<R> {
    type Item = ParsedLine;

    fn next(&mut self) -> Option<ParsedLine> {
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line_no += 1;
            let line = self.buf.trim_end_matches('\n').trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            match PasswordHash::parse(line) {
                Ok(h) => return Some(Ok(h)),
                Err(e) => match self.mode {
                    ParseMode::Strict => {
                        return Some(Err(PipelineError::MalformedLine {
                            line: self.line_no,
                            source: e,
                        }))
                    }
                    ParseMode::Lenient => {
                        self.skipped += 1;
                        continue;
                    }
                },
            }
        }
    }
}

/// Summary of a preprocess run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreprocessStats {
    pub read: u64,
    pub written: u64,
    pub skipped: u64,
    pub spilled_chunks: usize,
}

/// Sort and de-duplicate a raw digest corpus into `out`, one uppercase
/// digest per line. Spills to temp files once `chunk_size` digests are
/// resident, so memory stays bounded for corpora far larger than RAM.
pub fn preprocess<R: BufRead, W: Write>(
    input: R,
    mut out: W,
    mode: ParseMode,
    chunk_size: usize,
) -> Result<PreprocessStats, PipelineError> {
    let chunk_size = chunk_size.max(2);
    let mut parser = LineParser::new(input, mode);
    let mut chunk: Vec<PasswordHash> = Vec::new();
    let mut spiller: Option<extsort::ChunkSpiller> = None;
    let mut read = 0u64;

    for item in parser.by_ref() {
        chunk.push(item?);
        read += 1;
        if chunk.len() >= chunk_size {
            if spiller.is_none() {
                spiller = Some(extsort::ChunkSpiller::new()?);
            }
            spiller.as_mut().unwrap().spill(&mut chunk)?;
        }
    }
    let skipped = parser.skipped;

    let mut written = 0u64;
    let mut emit = |h: &PasswordHash, out: &mut W| -> Result<(), PipelineError> {
        out.write_all(h.as_str().as_bytes())?;
        out.write_all(b"\n")?;
        written += 1;
        Ok(())
    };

    let spilled_chunks;
    match spiller {
        None => {
            spilled_chunks = 0;
            chunk.sort_unstable();
            chunk.dedup();
            for h in &chunk {
                emit(h, &mut out)?;
            }
        }
        Some(mut spiller) => {
            if !chunk.is_empty() {
                spiller.spill(&mut chunk)?;
            }
            spilled_chunks = spiller.chunk_count();
            for item in spiller.merge()? {
                emit(&item?, &mut out)?;
            }
        }
    }
    out.flush()?;
    Ok(PreprocessStats {
        read,
        written,
        skipped,
        spilled_chunks,
    })
}

/// A stream of digests carrying a sorted-and-unique guarantee. When the
/// guarantee flag is set the stream validates order as it goes and fails
/// fast on a violation.
pub struct SortedHashStream<I: Iterator<Item = ParsedLine>> {
    inner: I,
    verify_sorted: bool,
    prev: Option<PasswordHash>,
    index: u64,
}

impl<I: Iterator<Item = ParsedLine>> SortedHashStream<I> {
    pub fn new(inner: I, verify_sorted: bool) -> Self {
        SortedHashStream {
            inner,
            verify_sorted,
            prev: None,
            index: 0,
        }
    }
}

impl<I: Iterator<Item = ParsedLine>> Iterator for SortedHashStream<I> {
    type Item = ParsedLine;

    fn next(&mut self) -> Option<ParsedLine> {
        let item = self.inner.next()?;
        let hash = match item {
            Ok(h) => h,
            Err(e) => return Some(Err(e)),
        };
        if self.verify_sorted {
            if let Some(prev) = &self.prev {
                if *prev >= hash {
                    return Some(Err(PipelineError::Unsorted { index: self.index }));
                }
            }
            self.prev = Some(hash.clone());
        }
        self.index += 1;
        Some(Ok(hash))
    }
}

/// Sorted stream over a reader of digest lines (strict parsing; the file
/// is expected to be preprocess output).
pub fn sorted_stream_from_reader<R: BufRead>(
    reader: R,
) -> SortedHashStream<impl Iterator<Item = ParsedLine>> {
    SortedHashStream::new(LineParser::new(reader, ParseMode::Strict), true)
}

/// Sorted stream over in-memory digests, mainly for tests and small runs.
pub fn sorted_stream_from_vec(
    hashes: Vec<PasswordHash>,
) -> SortedHashStream<impl Iterator<Item = ParsedLine>> {
    SortedHashStream::new(hashes.into_iter().map(Ok), true)
}

/// Shortest prefix length that keeps every hash in a bucket with at
/// least one companion.
///
/// Single pass, constant memory: only the running window is retained.
/// For each hash the longest common prefix with any other hash in a
/// sorted corpus is achieved at an adjacent element, so the scan folds
/// `max(lcp(prev2, prev), lcp(prev, cur))` for interior elements and the
/// single adjacent lcp for the two endpoints.
pub fn min_prefix_length<I: Iterator<Item = ParsedLine>>(
    stream: SortedHashStream<I>,
) -> Result<usize, PipelineError> {
    let mut count = 0u64;
    let mut prev: Option<PasswordHash> = None;
    let mut prev_lcp: Option<usize> = None;
    let mut first_lcp = usize::MAX;
    let mut acc = usize::MAX;

    for item in stream {
        let hash = item?;
        count += 1;
        if let Some(p) = &prev {
            let cur_lcp = common_prefix_len(p.as_str(), hash.as_str());
            if let Some(pl) = prev_lcp {
                acc = acc.min(pl.max(cur_lcp));
            } else {
                first_lcp = cur_lcp;
                acc = acc.min(hash.hex_len());
            }
            prev_lcp = Some(cur_lcp);
        }
        prev = Some(hash);
    }

    if count < 3 {
        return Err(PipelineError::TooFewHashes(count));
    }
    let last_lcp = prev_lcp.expect("count >= 3 implies adjacent pairs");
    Ok(acc.min(first_lcp).min(last_lcp))
}

/// Run the prefix-length scan with a dedicated reader thread feeding a
/// bounded queue, so parsing and scanning overlap on big corpora.
pub fn min_prefix_length_concurrent<R: BufRead + Send + 'static>(
    reader: R,
    queue_depth: usize,
) -> Result<usize, PipelineError> {
    let rx = spawn_reader(reader, queue_depth.max(1));
    min_prefix_length(SortedHashStream::new(rx.into_iter(), true))
}

fn spawn_reader<R: BufRead + Send + 'static>(reader: R, depth: usize) -> Receiver<ParsedLine> {
    let (tx, rx) = sync_channel(depth);
    std::thread::spawn(move || {
        for item in LineParser::new(reader, ParseMode::Strict) {
            let failed = item.is_err();
            if tx.send(item).is_err() || failed {
                break;
            }
        }
    });
    rx
}

/// Group a sorted stream by `len`-character prefix. Groups are yielded
/// contiguously, so exports can stream bucket by bucket while holding at
/// most one bucket in memory.
pub struct BucketGroups<I: Iterator<Item = ParsedLine>> {
    stream: SortedHashStream<I>,
    len: usize,
    pending: Option<PasswordHash>,
    done: bool,
}

impl<I: Iterator<Item = ParsedLine>> BucketGroups<I> {
    pub fn new(stream: SortedHashStream<I>, len: usize) -> Self {
        BucketGroups {
            stream,
            len,
            pending: None,
            done: false,
        }
    }
}

impl<I: Iterator<Item = ParsedLine>> Iterator for BucketGroups<I> {
    type Item = Result<(HashPrefix, Vec<PasswordHash>), PipelineError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let first = match self.pending.take() {
            Some(h) => h,
            None => match self.stream.next()? {
                Ok(h) => h,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            },
        };
        let prefix = match first.truncate(self.len) {
            Ok(p) => p,
            Err(_) => {
                self.done = true;
                return Some(Err(PipelineError::PrefixTooLong {
                    len: self.len,
                    digest_len: first.hex_len(),
                }));
            }
        };
        let mut group = vec![first];
        loop {
            match self.stream.next() {
                None => {
                    self.done = true;
                    break;
                }
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e));
                }
                Some(Ok(h)) => {
                    if h.starts_with(&prefix) {
                        group.push(h);
                    } else {
                        self.pending = Some(h);
                        break;
                    }
                }
            }
        }
        Some(Ok((prefix, group)))
    }
}

/// Collect the full prefix → hashes map. Within-bucket order is the sort
/// order of the input.
pub fn populate_buckets<I: Iterator<Item = ParsedLine>>(
    stream: SortedHashStream<I>,
    len: usize,
) -> Result<BTreeMap<HashPrefix, Vec<PasswordHash>>, PipelineError> {
    let mut out = BTreeMap::new();
    for group in BucketGroups::new(stream, len) {
        let (prefix, hashes) = group?;
        out.insert(prefix, hashes);
    }
    Ok(out)
}

/// Size statistics over a bucket map.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketStats {
    pub prefix_len: usize,
    pub bucket_count: usize,
    pub total_hashes: u64,
    pub min_size: usize,
    pub max_size: usize,
    pub mean_size: f64,
    pub median_size: f64,
    /// Lexicographically first prefix attaining the min/max size.
    pub argmin: HashPrefix,
    pub argmax: HashPrefix,
}

pub fn bucket_stats(
    buckets: &BTreeMap<HashPrefix, Vec<PasswordHash>>,
) -> Result<BucketStats, PipelineError> {
    stats_from_sizes(buckets.iter().map(|(p, v)| (p.clone(), v.len())))
}

/// Stats from (prefix, size) pairs, for callers that never materialize
/// bucket contents.
pub fn stats_from_sizes<I: IntoIterator<Item = (HashPrefix, usize)>>(
    sizes: I,
) -> Result<BucketStats, PipelineError> {
    let mut all: Vec<(HashPrefix, usize)> = sizes.into_iter().collect();
    if all.is_empty() {
        return Err(PipelineError::EmptyBuckets);
    }
    let prefix_len = all[0].0.len();
    let bucket_count = all.len();
    let total_hashes: u64 = all.iter().map(|(_, s)| *s as u64).sum();

    let (mut argmin, mut min_size) = (all[0].0.clone(), all[0].1);
    let (mut argmax, mut max_size) = (all[0].0.clone(), all[0].1);
    for (p, s) in &all {
        if *s < min_size || (*s == min_size && *p < argmin) {
            min_size = *s;
            argmin = p.clone();
        }
        if *s > max_size || (*s == max_size && *p < argmax) {
            max_size = *s;
            argmax = p.clone();
        }
    }

    all.sort_by_key(|(_, s)| *s);
    let median_size = if bucket_count % 2 == 1 {
        all[bucket_count / 2].1 as f64
    } else {
        (all[bucket_count / 2 - 1].1 as f64 + all[bucket_count / 2].1 as f64) / 2.0
    };

    Ok(BucketStats {
        prefix_len,
        bucket_count,
        total_hashes,
        min_size,
        max_size,
        mean_size: total_hashes as f64 / bucket_count as f64,
        median_size,
        argmin,
        argmax,
    })
}

/// Export format A: one `<PREFIX>.txt` file per bucket, full digests,
/// one per line, sorted.
pub fn export_bucket_files<I: Iterator<Item = ParsedLine>>(
    stream: SortedHashStream<I>,
    len: usize,
    dir: &Path,
) -> Result<BucketStats, PipelineError> {
    std::fs::create_dir_all(dir)?;
    let mut sizes = Vec::new();
    for group in BucketGroups::new(stream, len) {
        let (prefix, hashes) = group?;
        let mut file = std::io::BufWriter::new(std::fs::File::create(
            dir.join(format!("{}.txt", prefix.as_str())),
        )?);
        for h in &hashes {
            file.write_all(h.as_str().as_bytes())?;
            file.write_all(b"\n")?;
        }
        file.flush()?;
        sizes.push((prefix, hashes.len()));
    }
    stats_from_sizes(sizes)
}

/// Export format B: the two-column indexed store, realized as a sorted
/// table keyed by the full digest (the prefix column is its leading
/// `len` characters, so a key-prefix scan is the prefix index).
pub fn export_bucket_store<I: Iterator<Item = ParsedLine>>(
    stream: SortedHashStream<I>,
    len: usize,
    path: &Path,
) -> Result<BucketStats, PipelineError> {
    let mut sizes = Vec::new();
    let mut builder: Option<TableBuilder> = None;
    for group in BucketGroups::new(stream, len) {
        let (prefix, hashes) = group?;
        let b = match &mut builder {
            Some(b) => b,
            None => {
                let meta = serde_json::json!({
                    "format": "range-store",
                    "version": 1,
                    "prefix_len": len,
                    "algorithm": hashes[0].algorithm().to_string(),
                });
                builder = Some(TableBuilder::create(path, &meta)?);
                builder.as_mut().unwrap()
            }
        };
        for h in &hashes {
            b.add(h.as_str().as_bytes(), b"")?;
        }
        sizes.push((prefix, hashes.len()));
    }
    match builder {
        Some(b) => b.finish()?,
        None => return Err(PipelineError::EmptyBuckets),
    }
    stats_from_sizes(sizes)
}

//! Ordered key-value persistence.
//!
//! Serve-time stores are immutable, so the default engine is a single-file
//! sorted table: a metadata block, strictly ascending entries, and a
//! trailing content checksum. Builds write to a temp file and atomically
//! rename, so a store that opens cleanly is complete.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::wire::Cursor;

const MAGIC: &[u8; 8] = b"C3KVTBL1";
const MAX_ENTRY_LEN: usize = 1 << 24;

#[derive(Debug, Error)]
pub enum KvError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a table file (bad magic)")]
    BadMagic,
    #[error("table file is truncated or corrupt: {0}")]
    Corrupt(&'static str),
    #[error("table checksum mismatch")]
    ChecksumMismatch,
    #[error("keys must be inserted in strictly ascending order")]
    OutOfOrder,
    #[error("metadata is not valid JSON: {0}")]
    BadMeta(#[from] serde_json::Error),
}

/// Read interface shared by store engines: ordered map semantics with
/// prefix-range scans.
pub trait KeyValueStore: Send + Sync {
    fn meta(&self) -> &serde_json::Value;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn get(&self, key: &[u8]) -> Option<&[u8]>;
    /// All entries whose key starts with `prefix`, in key order.
    fn scan_prefix<'a>(
        &'a self,
        prefix: &'a [u8],
    ) -> Box<dyn Iterator<Item = (&'a [u8], &'a [u8])> + 'a>;
}

/// The file-backed default engine: entries live in one sorted table file
/// and are memory-resident after open.
pub struct FileTable {
    meta: serde_json::Value,
    entries: Vec<(Box<[u8]>, Box<[u8]>)>,
}

impl FileTable {
    pub fn open(path: &Path) -> Result<Self, KvError> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        Self::decode(&bytes)
    }

    /// Decode a table image. Validates framing, key order, and the
    /// trailing checksum.
    pub fn decode(bytes: &[u8]) -> Result<Self, KvError> {
        if bytes.len() < MAGIC.len() + 4 + 8 + 32 {
            return Err(KvError::Corrupt("too short"));
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(KvError::BadMagic);
        }
        let body_end = bytes.len() - 32;
        let digest = Sha256::digest(&bytes[..body_end]);
        if digest.as_slice() != &bytes[body_end..] {
            return Err(KvError::ChecksumMismatch);
        }

        let truncated = || KvError::Corrupt("unexpected end of input");
        let mut cursor = Cursor::new(&bytes[..body_end]);
        cursor.skip(MAGIC.len()).ok_or_else(truncated)?;
        let meta_len = cursor.read_u32().ok_or_else(truncated)? as usize;
        let meta_bytes = cursor.read_slice(meta_len).ok_or_else(truncated)?;
        let meta: serde_json::Value = serde_json::from_slice(meta_bytes)?;
        let count = cursor.read_u64().ok_or_else(truncated)? as usize;

        let mut entries: Vec<(Box<[u8]>, Box<[u8]>)> = Vec::new();
        for _ in 0..count {
            let key_len = cursor.read_u32().ok_or_else(truncated)? as usize;
            if key_len > MAX_ENTRY_LEN {
                return Err(KvError::Corrupt("key too long"));
            }
            let key: Box<[u8]> = cursor.read_slice(key_len).ok_or_else(truncated)?.into();
            let val_len = cursor.read_u32().ok_or_else(truncated)? as usize;
            if val_len > MAX_ENTRY_LEN {
                return Err(KvError::Corrupt("value too long"));
            }
            let val: Box<[u8]> = cursor.read_slice(val_len).ok_or_else(truncated)?.into();
            if let Some((last, _)) = entries.last() {
                if *last >= key {
                    return Err(KvError::Corrupt("keys out of order"));
                }
            }
            entries.push((key, val));
        }
        if !cursor.at_end() {
            return Err(KvError::Corrupt("trailing bytes"));
        }
        Ok(FileTable { meta, entries })
    }
}

impl KeyValueStore for FileTable {
    fn meta(&self) -> &serde_json::Value {
        &self.meta
    }

    fn len(&self) -> usize {
        self.entries.len()
    }

    fn get(&self, key: &[u8]) -> Option<&[u8]> {
        self.entries
            .binary_search_by(|(k, _)| k.as_ref().cmp(key))
            .ok()
            .map(|i| self.entries[i].1.as_ref())
    }

    fn scan_prefix<'a>(
        &'a self,
        prefix: &'a [u8],
    ) -> Box<dyn Iterator<Item = (&'a [u8], &'a [u8])> + 'a> {
        let start = self
            .entries
            .partition_point(|(k, _)| k.as_ref() < prefix);
        Box::new(
            self.entries[start..]
                .iter()
                .take_while(move |(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.as_ref(), v.as_ref())),
        )
    }
}

/// Streaming writer. Keys must arrive strictly ascending; `finish`
/// checksums the body and renames the temp file into place.
pub struct TableBuilder {
    tmp_path: PathBuf,
    final_path: PathBuf,
    writer: BufWriter<File>,
    last_key: Option<Vec<u8>>,
    count: u64,
    count_offset: u64,
}

impl TableBuilder {
    pub fn create(path: &Path, meta: &serde_json::Value) -> Result<Self, KvError> {
        let tmp_path = path.with_extension("tmp");
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(&tmp_path)?;
        let mut writer = BufWriter::new(file);
        let meta_bytes = serde_json::to_vec(meta)?;

        let mut header = Vec::new();
        header.extend_from_slice(MAGIC);
        header.extend_from_slice(&(meta_bytes.len() as u32).to_le_bytes());
        header.extend_from_slice(&meta_bytes);
        let count_offset = header.len() as u64;
        header.extend_from_slice(&0u64.to_le_bytes()); // patched in finish()
        writer.write_all(&header)?;

        Ok(TableBuilder {
            tmp_path,
            final_path: path.to_path_buf(),
            writer,
            last_key: None,
            count: 0,
            count_offset,
        })
    }

    pub fn add(&mut self, key: &[u8], value: &[u8]) -> Result<(), KvError> {
        if let Some(last) = &self.last_key {
            if last.as_slice() >= key {
                return Err(KvError::OutOfOrder);
            }
        }
        let mut rec = Vec::with_capacity(8 + key.len() + value.len());
        rec.extend_from_slice(&(key.len() as u32).to_le_bytes());
        rec.extend_from_slice(key);
        rec.extend_from_slice(&(value.len() as u32).to_le_bytes());
        rec.extend_from_slice(value);
        self.writer.write_all(&rec)?;
        self.last_key = Some(key.to_vec());
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), KvError> {
        use std::io::Seek;
        self.writer.flush()?;
        let mut file = self.writer.into_inner().map_err(|e| e.into_error())?;
        file.seek(std::io::SeekFrom::Start(self.count_offset))?;
        file.write_all(&self.count.to_le_bytes())?;
        file.flush()?;

        // Recompute the body digest after patching the count.
        file.seek(std::io::SeekFrom::Start(0))?;
        let mut body = Vec::new();
        file.read_to_end(&mut body)?;
        let digest = Sha256::digest(&body);
        file.seek(std::io::SeekFrom::End(0))?;
        file.write_all(&digest)?;
        file.sync_all()?;
        drop(file);

        std::fs::rename(&self.tmp_path, &self.final_path)?;
        Ok(())
    }
}

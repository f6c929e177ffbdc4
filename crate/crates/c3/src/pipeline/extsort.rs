//! External merge sort for digest corpora that do not fit in memory.
//!
//! Chunks are parsed, sorted, de-duplicated and spilled to temp files;
//! a k-way heap merge then streams the union out in order, dropping
//! cross-chunk duplicates.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};

use crate::hashes::PasswordHash;
use crate::pipeline::{ParsedLine, PipelineError};

pub(crate) struct ChunkSpiller {
    dir: tempfile::TempDir,
    files: Vec<File>,
}

impl ChunkSpiller {
    pub fn new() -> Result<Self, PipelineError> {
        Ok(ChunkSpiller {
            dir: tempfile::tempdir()?,
            files: Vec::new(),
        })
    }

    pub fn spill(&mut self, chunk: &mut Vec<PasswordHash>) -> Result<(), PipelineError> {
        chunk.sort_unstable();
        chunk.dedup();
        let path = self.dir.path().join(format!("chunk-{}.txt", self.files.len()));
        let mut w = BufWriter::new(File::create(&path)?);
        for h in chunk.iter() {
            w.write_all(h.as_str().as_bytes())?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        self.files.push(File::open(&path)?);
        chunk.clear();
        Ok(())
    }

    pub fn chunk_count(&self) -> usize {
        self.files.len()
    }

    /// Merge all spilled chunks into a sorted, de-duplicated stream.
    pub fn merge(self) -> Result<MergeIter, PipelineError> {
        let mut readers: Vec<BufReader<File>> =
            self.files.into_iter().map(BufReader::new).collect();
        let mut heap = BinaryHeap::new();
        for (idx, r) in readers.iter_mut().enumerate() {
            if let Some(h) = next_line(r)? {
                heap.push(Reverse((h, idx)));
            }
        }
        Ok(MergeIter {
            _dir: self.dir,
            readers,
            heap,
            last: None,
        })
    }
}

fn next_line(r: &mut BufReader<File>) -> Result<Option<PasswordHash>, PipelineError> {
    let mut line = String::new();
    let n = r.read_line(&mut line)?;
    if n == 0 {
        return Ok(None);
    }
    let trimmed = line.trim_end_matches('\n');
    // Spill files are written by us, so a parse failure here is a bug,
    // not bad input.
    Ok(Some(
        PasswordHash::parse(trimmed).expect("spill file contains valid digests"),
    ))
}

pub(crate) struct MergeIter {
    _dir: tempfile::TempDir,
    readers: Vec<BufReader<File>>,
    heap: BinaryHeap<Reverse<(PasswordHash, usize)>>,
    last: Option<PasswordHash>,
}

impl Iterator for MergeIter {
    type Item = ParsedLine;

    fn next(&mut self) -> Option<ParsedLine> {
        loop {
            let Reverse((hash, idx)) = self.heap.pop()?;
            match next_line(&mut self.readers[idx]) {
                Ok(Some(next)) => self.heap.push(Reverse((next, idx))),
                Ok(None) => {}
                Err(e) => return Some(Err(e)),
            }
            if self.last.as_ref() == Some(&hash) {
                continue; // duplicate across chunks
            }
            self.last = Some(hash.clone());
            return Some(Ok(hash));
        }
    }
}

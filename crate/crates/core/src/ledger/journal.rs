// SPDX-License-Identifier: Apache-2.0

//! Append-only block journal: each record is a 4-byte big-endian length
//! followed by the block's canonical JSON.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::tx::{data_hash, Block};
use crate::codec::{self, Hash32};
use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub struct Journal {
    entries: Vec<Vec<u8>>,
    stream: Sha256,
    file: Option<(PathBuf, BufWriter<File>)>,
}

impl Clone for Journal {
    fn clone(&self) -> Self {
        Journal { entries: self.entries.clone(), stream: self.stream.clone(), file: None }
    }
}

impl Journal {
    pub fn in_memory() -> Self {
        Journal::default()
    }

    /// Journal mirrored to `path`, truncating any previous content.
    pub fn create(path: &Path) -> Result<Self> {
        let f = OpenOptions::new().create(true).write(true).truncate(true)
            .open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Ok(Journal { file: Some((path.to_path_buf(), BufWriter::new(f))), ..Journal::default() })
    }

    pub fn append(&mut self, block: &Block) -> Result<()> {
        let bytes = block.canonical_bytes();
        if let Some((_, w)) = &mut self.file {
            w.write_all(&(bytes.len() as u32).to_be_bytes())?;
            w.write_all(&bytes)?;
            w.flush()?;
        }
        self.stream.update(&bytes);
        self.entries.push(bytes);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Vec<u8>] {
        &self.entries
    }

    /// SHA-256 over the concatenated canonical block stream.
    pub fn stream_digest(&self) -> Hash32 {
        Hash32(self.stream.clone().finalize().into())
    }

    /// The length-prefixed file image of the journal.
    pub fn to_file_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in &self.entries {
            out.extend_from_slice(&(e.len() as u32).to_be_bytes());
            out.extend_from_slice(e);
        }
        out
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    /// Fault-injection hook: flips one bit inside stored block `index`.
    pub fn corrupt(&mut self, index: usize, byte: usize, bit: u8) -> bool {
        let Some(e) = self.entries.get_mut(index) else { return false };
        if e.is_empty() {
            return false;
        }
        let i = byte % e.len();
        e[i] ^= 1 << (bit % 8);
        true
    }

    /// Re-verifies every stored block: it must parse, carry its own position
    /// as number, link to the previous header and match its data hash.
    /// Returns the index of the first bad block.
    pub fn verify(&self) -> std::result::Result<(), (usize, String)> {
        verify_entries(&self.entries)
    }
}

pub fn verify_entries(entries: &[Vec<u8>]) -> std::result::Result<(), (usize, String)> {
    let mut prev = Hash32::ZERO;
    for (i, bytes) in entries.iter().enumerate() {
        let block: Block = codec::from_slice(bytes).map_err(|e| (i, format!("unparseable: {e}")))?;
        if block.canonical_bytes() != *bytes {
            return Err((i, "non-canonical encoding".into()));
        }
        if block.header.number != i as u64 {
            return Err((i, format!("number {} at position {i}", block.header.number)));
        }
        if block.header.prev_hash != prev {
            return Err((i, "prev_hash does not match previous header".into()));
        }
        if block.header.data_hash != data_hash(&block.txs) {
            return Err((i, "data_hash mismatch".into()));
        }
        if block.validation_flags.len() != block.txs.len() {
            return Err((i, "flag count differs from tx count".into()));
        }
        prev = block.header.hash();
    }
    Ok(())
}

/// Reads a journal file back into blocks, verifying the chain on the way.
pub fn read_journal(path: &Path) -> Result<Vec<Block>> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    let entries = split_records(&raw)?;
    verify_entries(&entries).map_err(|(i, m)| Error::ChainIntegrity(format!("block {i}: {m}")))?;
    entries.iter().map(|e| codec::from_slice(e)).collect()
}

pub fn split_records(raw: &[u8]) -> Result<Vec<Vec<u8>>> {
    let mut out = Vec::new();
    let mut rest = raw;
    while !rest.is_empty() {
        if rest.len() < 4 {
            return Err(Error::Codec("truncated length prefix".into()));
        }
        let len = u32::from_be_bytes(rest[..4].try_into().expect("4 bytes")) as usize;
        rest = &rest[4..];
        if rest.len() < len {
            return Err(Error::Codec("truncated record".into()));
        }
        out.push(rest[..len].to_vec());
        rest = &rest[len..];
    }
    Ok(out)
}

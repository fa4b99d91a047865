//! Append-only commit log.
//!
//! Record framing (all integers little-endian):
//!
//! ```text
//! u32 payload_len
//! payload:
//!   u64 sequence
//!   u32 key_len, key bytes
//!   u64 new_version
//!   u32 agent_len, agent bytes
//!   [u8; 32] sha256(content)
//!   optional: u32 content_len, content bytes   (full-content mode)
//! ```
//!
//! Each record is written with a single `write_all` on an unbuffered file before
//! the commit is acknowledged, so a killed process loses at most the record
//! being written. A torn tail shows up as [`WalScan::tail_error`].

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};

pub const DIGEST_LEN: usize = 32;

pub type ContentDigest = [u8; DIGEST_LEN];

/// Agent name written for admin-created shards.
pub const ADMIN_AGENT: &str = "__admin__";

pub fn digest(content: &str) -> ContentDigest {
    Sha256::digest(content.as_bytes()).into()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalRecord {
    pub sequence: u64,
    pub key: String,
    pub new_version: u64,
    pub agent: String,
    pub content_digest: ContentDigest,
    pub content: Option<String>,
}

impl WalRecord {
    pub fn encode(&self, out: &mut Vec<u8>) {
        let mut payload = Vec::with_capacity(64 + self.key.len() + self.agent.len());
        payload.extend_from_slice(&self.sequence.to_le_bytes());
        put_str(&mut payload, &self.key);
        payload.extend_from_slice(&self.new_version.to_le_bytes());
        put_str(&mut payload, &self.agent);
        payload.extend_from_slice(&self.content_digest);
        if let Some(content) = &self.content {
            put_str(&mut payload, content);
        }
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&payload);
    }
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn string(&mut self) -> Option<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).ok()
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn decode_payload(payload: &[u8]) -> Option<WalRecord> {
    let mut c = Cursor { buf: payload, pos: 0 };
    let sequence = c.u64()?;
    let key = c.string()?;
    let new_version = c.u64()?;
    let agent = c.string()?;
    let content_digest: ContentDigest = c.take(DIGEST_LEN)?.try_into().ok()?;
    let content = if c.remaining() > 0 { Some(c.string()?) } else { None };
    if c.remaining() != 0 {
        return None;
    }
    Some(WalRecord {
        sequence,
        key,
        new_version,
        agent,
        content_digest,
        content,
    })
}

/// Result of scanning a log: every record that decoded cleanly, plus the error
/// that stopped the scan, if any.
#[derive(Debug)]
pub struct WalScan {
    pub records: Vec<WalRecord>,
    pub tail_error: Option<Error>,
}

impl WalScan {
    pub fn into_result(self) -> Result<Vec<WalRecord>> {
        match self.tail_error {
            Some(e) => Err(e),
            None => Ok(self.records),
        }
    }
}

pub fn decode(bytes: &[u8]) -> WalScan {
    let mut records = Vec::new();
    let mut c = Cursor { buf: bytes, pos: 0 };
    let mut tail_error = None;
    while c.remaining() > 0 {
        let index = records.len() as u64 + 1;
        let Some(len) = c.u32() else {
            tail_error = Some(corrupt(index, "truncated length prefix"));
            break;
        };
        let Some(payload) = c.take(len as usize) else {
            tail_error = Some(corrupt(index, "truncated record"));
            break;
        };
        match decode_payload(payload) {
            Some(r) => records.push(r),
            None => {
                tail_error = Some(corrupt(index, "undecodable record"));
                break;
            }
        }
    }
    WalScan { records, tail_error }
}

pub fn read_wal(path: impl AsRef<Path>) -> Result<WalScan> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    Ok(decode(&bytes))
}

fn corrupt(record: u64, reason: impl Into<String>) -> Error {
    Error::CorruptWal {
        record,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShard {
    pub version: u64,
    pub digest: ContentDigest,
    pub content: Option<String>,
}

/// Registry state reconstructed from a log.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalImage {
    pub shards: BTreeMap<String, ImageShard>,
    pub last_sequence: u64,
}

impl WalImage {
    pub fn versions(&self) -> BTreeMap<String, u64> {
        self.shards.iter().map(|(k, s)| (k.clone(), s.version)).collect()
    }
}

/// Rebuild shard state from an ordered run of records.
///
/// Sequence numbers must run 1, 2, 3, ... and every key's versions must run
/// 1, 2, 3, ...; a record carrying content must match its digest.
pub fn replay_wal(records: &[WalRecord]) -> Result<WalImage> {
    let mut image = WalImage::default();
    for (i, r) in records.iter().enumerate() {
        let want = i as u64 + 1;
        if r.sequence != want {
            return Err(corrupt(
                want,
                format!("sequence gap: expected {want}, found {}", r.sequence),
            ));
        }
        if let Some(content) = &r.content {
            if digest(content) != r.content_digest {
                return Err(corrupt(want, "content digest mismatch"));
            }
        }
        let prev = image.shards.get(&r.key).map_or(0, |s| s.version);
        if r.new_version != prev + 1 {
            return Err(corrupt(
                want,
                format!("version gap on {}: {} follows {}", r.key, r.new_version, prev),
            ));
        }
        image.shards.insert(
            r.key.clone(),
            ImageShard {
                version: r.new_version,
                digest: r.content_digest,
                content: r.content.clone(),
            },
        );
        image.last_sequence = r.sequence;
    }
    Ok(image)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WalOptions {
    /// Store the committed content alongside its digest.
    pub full_content: bool,
    /// `fdatasync` after every record instead of relying on the page cache.
    pub fsync: bool,
}

#[derive(Debug)]
pub struct Wal {
    file: File,
    path: PathBuf,
    next_sequence: u64,
    options: WalOptions,
}

impl Wal {
    /// Open a fresh, empty log at `path`, truncating anything already there.
    pub fn create(path: impl AsRef<Path>, options: WalOptions) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .write(true)
            .truncate(true)
            .open(&path)?;
        Ok(Self {
            file,
            path,
            next_sequence: 1,
            options,
        })
    }

    /// Reopen an existing log for appending after `last_sequence`.
    pub fn resume(path: impl AsRef<Path>, last_sequence: u64, options: WalOptions) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().read(true).write(true).open(&path)?;
        file.seek(SeekFrom::End(0))?;
        Ok(Self {
            file,
            path,
            next_sequence: last_sequence + 1,
            options,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn options(&self) -> WalOptions {
        self.options
    }

    pub fn next_sequence(&self) -> u64 {
        self.next_sequence
    }

    pub fn append(&mut self, key: &str, new_version: u64, agent: &str, content: &str) -> Result<WalRecord> {
        let record = WalRecord {
            sequence: self.next_sequence,
            key: key.to_owned(),
            new_version,
            agent: agent.to_owned(),
            content_digest: digest(content),
            content: self.options.full_content.then(|| content.to_owned()),
        };
        let mut buf = Vec::new();
        record.encode(&mut buf);
        self.file.write_all(&buf)?;
        if self.options.fsync {
            self.file.sync_data()?;
        }
        self.next_sequence += 1;
        Ok(record)
    }

    /// Start a new segment in place.
    pub fn reset(&mut self) -> Result<()> {
        self.file.set_len(0)?;
        self.file.seek(SeekFrom::Start(0))?;
        if self.options.fsync {
            self.file.sync_all()?;
        }
        self.next_sequence = 1;
        Ok(())
    }
}

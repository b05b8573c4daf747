//! Versioned in-memory storage and its snapshot file format.
//!
//! Snapshot layout, all integers little-endian, records sorted by key:
//!
//! ```text
//! magic    8 bytes  "LKVSNAP1"
//! count    u64
//! record   count times:
//!   key_len  u32, key bytes (UTF-8)
//!   tag      u8    0 = Int, 1 = Str, 2 = Bool
//!   payload  Int: i64 | Str: u32 length + UTF-8 bytes | Bool: u8 (0 or 1)
//!   version  u64
//! ```

use dashmap::DashMap;
use lazykv_core::serial::State;
use lazykv_core::{Key, Value};
use std::io::{self, Read, Write};
use std::path::Path;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"LKVSNAP1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VersionedRecord {
    pub value: Value,
    pub version: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a snapshot file")]
    BadMagic,
    #[error("corrupt snapshot: {0}")]
    Corrupt(&'static str),
}

#[derive(Default)]
pub struct Store {
    records: DashMap<Key, VersionedRecord>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<VersionedRecord> {
        self.records.get(key).map(|r| r.clone())
    }

    pub fn version(&self, key: &str) -> Option<u64> {
        self.records.get(key).map(|r| r.version)
    }

    pub fn next_version(&self, key: &str) -> u64 {
        self.version(key).map_or(1, |v| v + 1)
    }

    /// Installs `value` at `version`.
    ///
    /// # Panics
    ///
    /// If `version` does not exceed the stored version. Callers hold the
    /// key's exclusive lock and pass `next_version`, so this only fires on
    /// a protocol bug.
    pub fn put(&self, key: &str, value: Value, version: u64) {
        match self.records.entry(key.into()) {
            dashmap::mapref::entry::Entry::Occupied(mut e) => {
                let current = e.get().version;
                assert!(version > current, "version regression on {key:?}: {version} <= {current}");
                e.insert(VersionedRecord { value, version });
            }
            dashmap::mapref::entry::Entry::Vacant(e) => {
                e.insert(VersionedRecord { value, version });
            }
        }
    }

    /// Puts at the next version. Used for loading initial data.
    pub fn upsert(&self, key: &str, value: Value) {
        let v = self.next_version(key);
        self.put(key, value, v);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// All records, sorted by key.
    pub fn entries(&self) -> Vec<(Key, VersionedRecord)> {
        let mut out: Vec<_> = self.records.iter().map(|r| (r.key().clone(), r.value().clone())).collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn state(&self) -> State {
        self.records.iter().map(|r| (r.key().clone(), r.value().value.clone())).collect()
    }

    pub fn encode_snapshot(&self) -> Vec<u8> {
        let entries = self.entries();
        let mut out = Vec::with_capacity(16 + entries.len() * 32);
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
        for (key, rec) in entries {
            out.extend_from_slice(&(key.len() as u32).to_le_bytes());
            out.extend_from_slice(key.as_bytes());
            match &rec.value {
                Value::Int(i) => {
                    out.push(0);
                    out.extend_from_slice(&i.to_le_bytes());
                }
                Value::Str(s) => {
                    out.push(1);
                    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                    out.extend_from_slice(s.as_bytes());
                }
                Value::Bool(b) => {
                    out.push(2);
                    out.push(u8::from(*b));
                }
            }
            out.extend_from_slice(&rec.version.to_le_bytes());
        }
        out
    }

    pub fn decode_snapshot(bytes: &[u8]) -> Result<Store, SnapshotError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != SNAPSHOT_MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        let count = cur.u64()?;
        let store = Store::new();
        for _ in 0..count {
            let klen = cur.u32()? as usize;
            let key = cur.utf8(klen)?;
            let value = match cur.take(1)?[0] {
                0 => Value::Int(cur.u64()? as i64),
                1 => {
                    let n = cur.u32()? as usize;
                    Value::Str(cur.utf8(n)?)
                }
                2 => match cur.take(1)?[0] {
                    0 => Value::Bool(false),
                    1 => Value::Bool(true),
                    _ => return Err(SnapshotError::Corrupt("bool payload")),
                },
                _ => return Err(SnapshotError::Corrupt("value tag")),
            };
            let version = cur.u64()?;
            if version == 0 || store.records.contains_key(&key) {
                return Err(SnapshotError::Corrupt("version or duplicate key"));
            }
            store.records.insert(key, VersionedRecord { value, version });
        }
        if cur.pos != bytes.len() {
            return Err(SnapshotError::Corrupt("trailing bytes"));
        }
        Ok(store)
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<(), SnapshotError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.encode_snapshot())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load_snapshot(path: &Path) -> Result<Store, SnapshotError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::decode_snapshot(&buf)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or(SnapshotError::Corrupt("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SnapshotError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn utf8(&mut self, n: usize) -> Result<String, SnapshotError> {
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| SnapshotError::Corrupt("utf-8"))
    }
}

//! Fixed-record concatenated library files.
//!
//! A library is a headerless file of equal-length records. Members are
//! appended as contiguous record sets, padded with `0x00` to the next record
//! boundary, and read back with one positional read at
//! `start * record_size`.
//!
//! The record size and record count live in an ASCII sidecar next to the
//! library (`<library>.meta`):
//!
//! ```text
//! record_size=1024
//! record_count=21988
//! ```
//!
//! The sidecar is rewritten (temp file + rename) only after the appended
//! bytes have been synced, so a crash never leaves `record_count` pointing
//! into unwritten data. A writable open truncates any unacknowledged tail.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};

pub const DEFAULT_RECORD_SIZE: u64 = 1024;

/// Size and population of a store, as recorded in its sidecar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreMeta {
    pub record_size: u64,
    pub record_count: u64,
}

impl StoreMeta {
    pub fn byte_len(&self) -> u64 {
        self.record_size * self.record_count
    }

    fn render(&self) -> String {
        format!(
            "record_size={}\nrecord_count={}\n",
            self.record_size, self.record_count
        )
    }

    fn parse(path: &Path, text: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Metadata {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut lines = text.lines();
        let mut field = |name: &str| -> Result<u64> {
            let line = lines.next().ok_or_else(|| bad("missing line"))?;
            let value = line
                .strip_prefix(name)
                .and_then(|rest| rest.strip_prefix('='))
                .ok_or_else(|| bad(&format!("expected {name}=<n>")))?;
            value
                .parse()
                .map_err(|_| bad(&format!("{name} is not a non-negative integer")))
        };
        let record_size = field("record_size")?;
        let record_count = field("record_count")?;
        if record_size == 0 {
            return Err(bad("record_size is zero"));
        }
        Ok(StoreMeta {
            record_size,
            record_count,
        })
    }
}

/// Location of one member inside a library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RecordSetRef {
    pub start: u64,
    pub count: u64,
    pub byte_length: u64,
}

impl RecordSetRef {
    /// A ref covering whole records, for indexes that do not carry the exact
    /// payload length.
    pub fn padded(start: u64, count: u64, record_size: u64) -> Self {
        RecordSetRef {
            start,
            count,
            byte_length: count * record_size,
        }
    }

    pub fn end(&self) -> u64 {
        self.start + self.count
    }

    pub fn check(&self, record_size: u64) -> Result<()> {
        let consistent = if self.count == 0 {
            self.byte_length == 0
        } else {
            (self.count - 1) * record_size < self.byte_length
                && self.byte_length <= self.count * record_size
        };
        if consistent {
            Ok(())
        } else {
            Err(Error::InconsistentRef {
                count: self.count,
                byte_length: self.byte_length,
                record_size,
            })
        }
    }
}

/// Records needed to hold `byte_length` bytes.
pub fn records_for(byte_length: u64, record_size: u64) -> u64 {
    byte_length.div_ceil(record_size)
}

/// Counters for reads issued through a store handle.
#[derive(Debug, Default)]
struct IoCounters {
    read_ops: AtomicU64,
    bytes_read: AtomicU64,
}

/// Point-in-time copy of a handle's read counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IoSnapshot {
    pub read_ops: u64,
    pub bytes_read: u64,
}

impl IoSnapshot {
    pub fn since(&self, earlier: IoSnapshot) -> IoSnapshot {
        IoSnapshot {
            read_ops: self.read_ops - earlier.read_ops,
            bytes_read: self.bytes_read - earlier.bytes_read,
        }
    }
}

/// Handle on one library file and its sidecar.
///
/// Reads take `&self` and may run from any number of threads. Appends also
/// take `&self` but are serialized by an internal writer lock; readers only
/// see records once the append has completed.
#[derive(Debug)]
pub struct RecordStore {
    path: PathBuf,
    meta_path: PathBuf,
    file: File,
    record_size: u64,
    record_count: AtomicU64,
    writer: Option<Mutex<()>>,
    counters: IoCounters,
}

pub fn meta_path_for(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

impl RecordStore {
    /// Create an empty library at `path` with the given record size.
    pub fn create(path: impl AsRef<Path>, record_size: u64) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if record_size == 0 {
            return Err(Error::ZeroRecordSize);
        }
        let meta_path = meta_path_for(&path);
        if meta_path.exists() {
            return Err(Error::StoreExists(path));
        }
        let file = match OpenOptions::new()
            .read(true)
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::StoreExists(path))
            }
            Err(e) => return Err(e.into()),
        };
        let meta = StoreMeta {
            record_size,
            record_count: 0,
        };
        write_meta(&meta_path, &meta)?;
        Ok(RecordStore {
            path,
            meta_path,
            file,
            record_size,
            record_count: AtomicU64::new(0),
            writer: Some(Mutex::new(())),
            counters: IoCounters::default(),
        })
    }

    /// Open an existing library for reading.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let meta_path = meta_path_for(&path);
        let meta = read_meta(&meta_path)?;
        let file = File::open(&path)?;
        let len = file.metadata()?.len();
        if len < meta.byte_len() {
            return Err(Error::Metadata {
                path: meta_path,
                reason: format!(
                    "library holds {len} bytes but metadata claims {}",
                    meta.byte_len()
                ),
            });
        }
        Ok(Self::from_parts(path, meta_path, file, meta, None))
    }

    /// Open an existing library for appending. Bytes past the recorded
    /// record count (left by an interrupted append) are discarded.
    pub fn open_writable(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let meta_path = meta_path_for(&path);
        let meta = read_meta(&meta_path)?;
        let file = OpenOptions::new().read(true).write(true).open(&path)?;
        let len = file.metadata()?.len();
        if len < meta.byte_len() {
            return Err(Error::Metadata {
                path: meta_path,
                reason: format!(
                    "library holds {len} bytes but metadata claims {}",
                    meta.byte_len()
                ),
            });
        }
        if len > meta.byte_len() {
            log::warn!(
                "{}: discarding {} unacknowledged bytes",
                path.display(),
                len - meta.byte_len()
            );
            file.set_len(meta.byte_len())?;
        }
        Ok(Self::from_parts(
            path,
            meta_path,
            file,
            meta,
            Some(Mutex::new(())),
        ))
    }

    fn from_parts(
        path: PathBuf,
        meta_path: PathBuf,
        file: File,
        meta: StoreMeta,
        writer: Option<Mutex<()>>,
    ) -> Self {
        RecordStore {
            path,
            meta_path,
            file,
            record_size: meta.record_size,
            record_count: AtomicU64::new(meta.record_count),
            writer,
            counters: IoCounters::default(),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record_size(&self) -> u64 {
        self.record_size
    }

    pub fn record_count(&self) -> u64 {
        self.record_count.load(Ordering::Acquire)
    }

    pub fn meta(&self) -> StoreMeta {
        StoreMeta {
            record_size: self.record_size,
            record_count: self.record_count(),
        }
    }

    pub fn is_writable(&self) -> bool {
        self.writer.is_some()
    }

    /// Pick up records appended by another process since this handle was
    /// opened.
    pub fn refresh(&self) -> Result<()> {
        let meta = read_meta(&self.meta_path)?;
        if meta.record_size != self.record_size {
            return Err(Error::Metadata {
                path: self.meta_path.clone(),
                reason: "record_size changed underneath an open handle".into(),
            });
        }
        self.record_count
            .fetch_max(meta.record_count, Ordering::AcqRel);
        Ok(())
    }

    /// Append one member.
    pub fn append_payload(&self, payload: &[u8]) -> Result<RecordSetRef> {
        let mut refs = self.append_batch(std::iter::once(payload))?;
        Ok(refs.pop().expect("one payload in, one ref out"))
    }

    /// Append several members with a single sync and metadata update.
    pub fn append_batch<I, P>(&self, payloads: I) -> Result<Vec<RecordSetRef>>
    where
        I: IntoIterator<Item = P>,
        P: AsRef<[u8]>,
    {
        let writer = self
            .writer
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("{} is open read-only", self.path.display())))?;
        let _guard = writer.lock().unwrap_or_else(|e| e.into_inner());

        let committed = self.record_count();
        let mut next = committed;
        let mut refs = Vec::new();
        let write = (|| -> Result<()> {
            for payload in payloads {
                let payload = payload.as_ref();
                let byte_length = payload.len() as u64;
                let count = records_for(byte_length, self.record_size);
                if count > 0 {
                    let offset = next * self.record_size;
                    self.file.write_all_at(payload, offset)?;
                    let pad = (count * self.record_size - byte_length) as usize;
                    if pad > 0 {
                        self.file
                            .write_all_at(&vec![0u8; pad], offset + byte_length)?;
                    }
                }
                refs.push(RecordSetRef {
                    start: next,
                    count,
                    byte_length,
                });
                next += count;
            }
            if next != committed {
                self.file.sync_data()?;
                write_meta(
                    &self.meta_path,
                    &StoreMeta {
                        record_size: self.record_size,
                        record_count: next,
                    },
                )?;
            }
            Ok(())
        })();

        if let Err(e) = write {
            // Put the file back in line with the last committed count.
            let _ = self.file.set_len(committed * self.record_size);
            return Err(e);
        }
        self.record_count.store(next, Ordering::Release);
        Ok(refs)
    }

    /// Read `count` whole records starting at record `start` with one
    /// positional read.
    pub fn read_records(&self, start: u64, count: u64) -> Result<Vec<u8>> {
        let record_count = self.record_count();
        let end = start
            .checked_add(count)
            .filter(|&end| end <= record_count)
            .ok_or(Error::OutOfRange {
                start,
                end: start.saturating_add(count),
                record_count,
            })?;
        debug_assert!(end <= record_count);
        let len = (count * self.record_size) as usize;
        let mut buf = vec![0u8; len];
        if len > 0 {
            self.file
                .read_exact_at(&mut buf, start * self.record_size)?;
        }
        self.counters.read_ops.fetch_add(1, Ordering::Relaxed);
        self.counters
            .bytes_read
            .fetch_add(len as u64, Ordering::Relaxed);
        Ok(buf)
    }

    /// Read a member back at its original length.
    pub fn read_payload(&self, set: &RecordSetRef) -> Result<Vec<u8>> {
        set.check(self.record_size)?;
        let mut buf = self.read_records(set.start, set.count)?;
        buf.truncate(set.byte_length as usize);
        Ok(buf)
    }

    /// Overwrite one existing record in place. Only fixed-width indexes
    /// built on top of a store use this.
    pub(crate) fn overwrite_record(&self, record: u64, bytes: &[u8]) -> Result<()> {
        debug_assert_eq!(bytes.len() as u64, self.record_size);
        let writer = self
            .writer
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("{} is open read-only", self.path.display())))?;
        let _guard = writer.lock().unwrap_or_else(|e| e.into_inner());
        let record_count = self.record_count();
        if record >= record_count {
            return Err(Error::OutOfRange {
                start: record,
                end: record + 1,
                record_count,
            });
        }
        self.file.write_all_at(bytes, record * self.record_size)?;
        Ok(())
    }

    pub fn sync(&self) -> Result<()> {
        self.file.sync_data()?;
        Ok(())
    }

    pub fn io_stats(&self) -> IoSnapshot {
        IoSnapshot {
            read_ops: self.counters.read_ops.load(Ordering::Relaxed),
            bytes_read: self.counters.bytes_read.load(Ordering::Relaxed),
        }
    }
}

fn read_meta(meta_path: &Path) -> Result<StoreMeta> {
    let text = match fs::read_to_string(meta_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::NotFound(format!(
                "store metadata {}",
                meta_path.display()
            )))
        }
        Err(e) => return Err(e.into()),
    };
    StoreMeta::parse(meta_path, &text)
}

fn write_meta(meta_path: &Path, meta: &StoreMeta) -> Result<()> {
    let mut tmp = meta_path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp)?;
        f.write_all(meta.render().as_bytes())?;
        f.sync_data()?;
    }
    fs::rename(&tmp, meta_path)?;
    Ok(())
}

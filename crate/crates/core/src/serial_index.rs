//! Human-readable ASCII index, one line per record set, located by a serial
//! whole-token scan.
//!
//! Line format: `<name> <key> <start> <count>[ <byte_length>]\n`. The four
//! field form is the classic layout; the optional fifth field carries the
//! exact payload length so members can be returned unpadded.

use std::collections::HashSet;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::store::RecordSetRef;

/// Index sizes above this are expected to make serial lookups noticeably slow.
pub const ADVISORY_MAX_ENTRIES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SerialIndexEntry {
    pub name: String,
    pub key: String,
    pub start: u64,
    pub count: u64,
    pub byte_length: Option<u64>,
}

impl SerialIndexEntry {
    pub fn new(name: impl Into<String>, key: impl Into<String>, start: u64, count: u64) -> Self {
        SerialIndexEntry {
            name: name.into(),
            key: key.into(),
            start,
            count,
            byte_length: None,
        }
    }

    pub fn from_ref(name: impl Into<String>, key: impl Into<String>, set: &RecordSetRef) -> Self {
        SerialIndexEntry {
            name: name.into(),
            key: key.into(),
            start: set.start,
            count: set.count,
            byte_length: Some(set.byte_length),
        }
    }

    /// Location of the member. Four-field lines yield whole padded records.
    pub fn to_ref(&self, record_size: u64) -> RecordSetRef {
        match self.byte_length {
            Some(byte_length) => RecordSetRef {
                start: self.start,
                count: self.count,
                byte_length,
            },
            None => RecordSetRef::padded(self.start, self.count, record_size),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_token(&self.name)?;
        validate_token(&self.key)
    }

    /// Parse one line (without its trailing newline).
    pub fn parse(line: &str, line_no: usize) -> Result<Self> {
        let malformed = || Error::MalformedLine {
            line_no,
            line: line.to_string(),
        };
        let fields: Vec<&str> = line.split(' ').collect();
        if !(4..=5).contains(&fields.len()) || fields.iter().any(|f| f.is_empty()) {
            return Err(malformed());
        }
        let num = |s: &str| s.parse::<u64>().map_err(|_| malformed());
        Ok(SerialIndexEntry {
            name: fields[0].to_string(),
            key: fields[1].to_string(),
            start: num(fields[2])?,
            count: num(fields[3])?,
            byte_length: fields.get(4).map(|s| num(s)).transpose()?,
        })
    }
}

impl fmt::Display for SerialIndexEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.name, self.key, self.start, self.count)?;
        if let Some(len) = self.byte_length {
            write!(f, " {len}")?;
        }
        Ok(())
    }
}

/// Tokens are non-empty and contain no whitespace.
pub fn validate_token(token: &str) -> Result<()> {
    if token.is_empty() || token.chars().any(char::is_whitespace) {
        return Err(Error::InvalidToken(token.to_string()));
    }
    Ok(())
}

/// Result of counting the lines of an index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntryCount {
    pub entries: usize,
    /// Set when the index is past [`ADVISORY_MAX_ENTRIES`].
    pub over_advisory_limit: bool,
}

#[derive(Debug)]
pub struct SerialIndex {
    path: PathBuf,
    // (name, key) pairs already present; only populated for writable handles.
    writer: Option<Mutex<HashSet<(String, String)>>>,
}

impl SerialIndex {
    /// Create a new, empty index file.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)?;
        Ok(SerialIndex {
            path,
            writer: Some(Mutex::new(HashSet::new())),
        })
    }

    /// Open an index for lookups only.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if !path.is_file() {
            return Err(Error::NotFound(format!("index {}", path.display())));
        }
        Ok(SerialIndex { path, writer: None })
    }

    /// Open an existing index for appending.
    pub fn open_writable(path: impl AsRef<Path>) -> Result<Self> {
        let index = Self::open(path)?;
        let mut seen = HashSet::new();
        index.scan(|entry| {
            seen.insert((entry.name, entry.key));
            Ok(true)
        })?;
        Ok(SerialIndex {
            path: index.path,
            writer: Some(Mutex::new(seen)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append_entry(&self, entry: &SerialIndexEntry) -> Result<()> {
        entry.validate()?;
        let writer = self
            .writer
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("{} is open read-only", self.path.display())))?;
        let mut seen = writer.lock().unwrap_or_else(|e| e.into_inner());
        let pair = (entry.name.clone(), entry.key.clone());
        if seen.contains(&pair) {
            return Err(Error::DuplicateEntry {
                name: pair.0,
                key: pair.1,
            });
        }
        // One write call per line, so concurrent readers never see a partial
        // line followed by more data.
        let line = format!("{entry}\n");
        let mut f = OpenOptions::new().append(true).open(&self.path)?;
        f.write_all(line.as_bytes())?;
        seen.insert(pair);
        Ok(())
    }

    /// First entry whose name and key both equal the query tokens.
    pub fn lookup(&self, name: &str, key: &str) -> Result<SerialIndexEntry> {
        let mut found = None;
        self.scan(|entry| {
            if entry.name == name && entry.key == key {
                found = Some(entry);
                Ok(false)
            } else {
                Ok(true)
            }
        })?;
        found.ok_or_else(|| Error::NotFound(format!("{name} {key}")))
    }

    /// Every entry with the given name, in file order.
    pub fn entries_named(&self, name: &str) -> Result<Vec<SerialIndexEntry>> {
        let mut out = Vec::new();
        self.scan(|entry| {
            if entry.name == name {
                out.push(entry);
            }
            Ok(true)
        })?;
        Ok(out)
    }

    pub fn entries(&self) -> Result<Vec<SerialIndexEntry>> {
        let mut out = Vec::new();
        self.scan(|entry| {
            out.push(entry);
            Ok(true)
        })?;
        Ok(out)
    }

    pub fn entry_count(&self) -> Result<EntryCount> {
        let mut entries = 0;
        for line in complete_lines(File::open(&self.path)?) {
            line?;
            entries += 1;
        }
        let over_advisory_limit = entries > ADVISORY_MAX_ENTRIES;
        if over_advisory_limit {
            log::warn!(
                "{} has {entries} entries; serial lookups slow down past {ADVISORY_MAX_ENTRIES}",
                self.path.display()
            );
        }
        Ok(EntryCount {
            entries,
            over_advisory_limit,
        })
    }

    /// Visit entries in order until `visit` returns `false`.
    fn scan(&self, mut visit: impl FnMut(SerialIndexEntry) -> Result<bool>) -> Result<()> {
        let file = File::open(&self.path)?;
        for (i, line) in complete_lines(file).enumerate() {
            let line = line?;
            let entry = SerialIndexEntry::parse(&line, i + 1)?;
            if !visit(entry)? {
                break;
            }
        }
        Ok(())
    }
}

/// Newline-terminated lines only; a trailing line still being written is
/// skipped.
fn complete_lines(file: File) -> impl Iterator<Item = std::io::Result<String>> {
    let mut reader = BufReader::with_capacity(64 * 1024, file);
    std::iter::from_fn(move || {
        let mut buf = Vec::new();
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => None,
            Ok(_) if buf.last() != Some(&b'\n') => None,
            Ok(_) => {
                buf.pop();
                Some(String::from_utf8(buf).map_err(|e| {
                    std::io::Error::new(std::io::ErrorKind::InvalidData, e)
                }))
            }
            Err(e) => Some(Err(e)),
        }
    })
}

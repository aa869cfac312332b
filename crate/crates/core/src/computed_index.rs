//! Random-access group index addressed by arithmetic on three key letters.
//!
//! Every (surname letter 1, surname letter 2, given-name letter 1) triple
//! maps to an ordinal in `0..17576`. The index is itself a library of
//! 20-byte ASCII records, `%010d %08d\n` (group start, space, group count,
//! newline), so the entry for ordinal `k` sits at byte `20 * k`.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::store::RecordStore;

pub const LETTERS: usize = 26;
pub const GROUP_COUNT: usize = LETTERS * LETTERS * LETTERS;
pub const ENTRY_WIDTH: u64 = 20;
/// Size in bytes of a fully built index file.
pub const INDEX_FILE_LEN: u64 = GROUP_COUNT as u64 * ENTRY_WIDTH;

const MAX_START: u64 = 9_999_999_999;
const MAX_COUNT: u64 = 99_999_999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrigramKey {
    /// First surname letter.
    pub c1: u8,
    /// Second surname letter.
    pub c2: u8,
    /// First given-name letter.
    pub c3: u8,
}

impl TrigramKey {
    pub fn new(c1: u8, c2: u8, c3: u8) -> Result<Self> {
        if [c1, c2, c3].iter().any(|&c| c as usize >= LETTERS) {
            return Err(Error::Invalid(format!(
                "trigram ordinals ({c1}, {c2}, {c3}) must each be below 26"
            )));
        }
        Ok(TrigramKey { c1, c2, c3 })
    }

    /// Position of this key's entry in the computed index.
    pub fn ordinal(&self) -> usize {
        self.c3 as usize + self.c2 as usize * LETTERS + self.c1 as usize * LETTERS * LETTERS
    }

    pub fn from_ordinal(ordinal: usize) -> Result<Self> {
        if ordinal >= GROUP_COUNT {
            return Err(Error::OrdinalOutOfRange(ordinal));
        }
        Ok(TrigramKey {
            c1: (ordinal / (LETTERS * LETTERS)) as u8,
            c2: (ordinal / LETTERS % LETTERS) as u8,
            c3: (ordinal % LETTERS) as u8,
        })
    }
}

impl fmt::Display for TrigramKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ch = |c: u8| (b'A' + c) as char;
        write!(f, "{}{} {}", ch(self.c1), ch(self.c2), ch(self.c3))
    }
}

/// Upper-cased ASCII letters of `text`; everything else is dropped.
pub fn normalize_letters(text: &str) -> String {
    text.chars()
        .filter(char::is_ascii_alphabetic)
        .map(|c| c.to_ascii_uppercase())
        .collect()
}

/// Key letters of a name pair. Missing letters count as 'A'.
pub fn trigram_of(surname: &str, given: &str) -> TrigramKey {
    let sur = normalize_letters(surname);
    let giv = normalize_letters(given);
    let ord = |s: &str, i: usize| s.as_bytes().get(i).map_or(0, |b| b - b'A');
    TrigramKey {
        c1: ord(&sur, 0),
        c2: ord(&sur, 1),
        c3: ord(&giv, 0),
    }
}

pub fn key_ordinal(key: TrigramKey) -> usize {
    key.ordinal()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GroupEntry {
    pub start: u64,
    pub count: u64,
}

impl GroupEntry {
    pub fn encode(&self) -> Result<[u8; ENTRY_WIDTH as usize]> {
        if self.start > MAX_START || self.count > MAX_COUNT {
            return Err(Error::Invalid(format!(
                "group entry ({}, {}) does not fit the 20-byte layout",
                self.start, self.count
            )));
        }
        let text = format!("{:010} {:08}\n", self.start, self.count);
        let mut out = [0u8; ENTRY_WIDTH as usize];
        out.copy_from_slice(text.as_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8], ordinal: usize) -> Result<Self> {
        let malformed = || Error::MalformedGroupEntry(ordinal);
        if bytes.len() != ENTRY_WIDTH as usize || bytes[10] != b' ' || bytes[19] != b'\n' {
            return Err(malformed());
        }
        let digits = |b: &[u8]| -> Result<u64> {
            if !b.iter().all(u8::is_ascii_digit) {
                return Err(malformed());
            }
            // All-digit ASCII is valid UTF-8 and fits u64 at these widths.
            Ok(std::str::from_utf8(b).unwrap().parse().unwrap())
        };
        Ok(GroupEntry {
            start: digits(&bytes[..10])?,
            count: digits(&bytes[11..19])?,
        })
    }
}

/// The 17,576-entry index file.
#[derive(Debug)]
pub struct GroupIndex {
    store: RecordStore,
}

impl GroupIndex {
    /// Create an index with every entry set to `(0, 0)`.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let store = RecordStore::create(path, ENTRY_WIDTH)?;
        let mut blank = Vec::with_capacity(INDEX_FILE_LEN as usize);
        let zero = GroupEntry::default().encode()?;
        for _ in 0..GROUP_COUNT {
            blank.extend_from_slice(&zero);
        }
        store.append_payload(&blank)?;
        Ok(GroupIndex { store })
    }

    /// Build an index whose groups tile `0..sum(counts)` in ordinal order.
    pub fn build_from_counts(path: impl AsRef<Path>, counts: &[u64]) -> Result<Self> {
        if counts.len() != GROUP_COUNT {
            return Err(Error::Invalid(format!(
                "expected {GROUP_COUNT} group counts, got {}",
                counts.len()
            )));
        }
        let store = RecordStore::create(path, ENTRY_WIDTH)?;
        let mut bytes = Vec::with_capacity(INDEX_FILE_LEN as usize);
        let mut start = 0u64;
        for &count in counts {
            bytes.extend_from_slice(&GroupEntry { start, count }.encode()?);
            start += count;
        }
        store.append_payload(&bytes)?;
        Ok(GroupIndex { store })
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let store = RecordStore::open(path)?;
        Self::check(store)
    }

    pub fn open_writable(path: impl AsRef<Path>) -> Result<Self> {
        let store = RecordStore::open_writable(path)?;
        Self::check(store)
    }

    fn check(store: RecordStore) -> Result<Self> {
        if store.record_size() != ENTRY_WIDTH || store.record_count() != GROUP_COUNT as u64 {
            return Err(Error::Invalid(format!(
                "{} is not a {GROUP_COUNT} x {ENTRY_WIDTH}-byte group index",
                store.path().display()
            )));
        }
        Ok(GroupIndex { store })
    }

    pub fn write_group_entry(&self, ordinal: usize, entry: GroupEntry) -> Result<()> {
        if ordinal >= GROUP_COUNT {
            return Err(Error::OrdinalOutOfRange(ordinal));
        }
        self.store.overwrite_record(ordinal as u64, &entry.encode()?)
    }

    pub fn read_group_entry(&self, ordinal: usize) -> Result<GroupEntry> {
        if ordinal >= GROUP_COUNT {
            return Err(Error::OrdinalOutOfRange(ordinal));
        }
        let bytes = self.store.read_records(ordinal as u64, 1)?;
        GroupEntry::decode(&bytes, ordinal)
    }

    pub fn lookup(&self, key: TrigramKey) -> Result<GroupEntry> {
        self.read_group_entry(key.ordinal())
    }

    pub fn store(&self) -> &RecordStore {
        &self.store
    }
}

//! Trigram-grouped library of 64-byte death records.
//!
//! Records are grouped by the key letters of their names and the groups are
//! concatenated in ordinal order, so a search costs one computed-index read,
//! one contiguous read of the group, and a serial filter over that group.
//!
//! Record layout (64 bytes, ASCII):
//!
//! ```text
//! offset  width  field
//!      0     24  surname, upper-case, space padded
//!     24     12  given name, upper-case, space padded
//!     36      9  ssn digits
//!     45      8  birth date YYYYMMDD (day may be 00)
//!     53      8  death date YYYYMMDD (day may be 00)
//!     61      2  reserved, spaces
//!     63      1  '\n'
//! ```

use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::computed_index::{normalize_letters, trigram_of, GroupIndex, TrigramKey, GROUP_COUNT};
use crate::error::{Error, Result};
use crate::store::RecordStore;

pub const RECORD_LEN: usize = 64;
pub const SURNAME_LEN: usize = 24;
pub const GIVEN_LEN: usize = 12;

const DATA_FILE: &str = "records.raclib";
const INDEX_FILE: &str = "groups.raclib";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeathRecord {
    pub surname: String,
    pub given: String,
    pub ssn: String,
    pub birth_date: String,
    pub death_date: String,
}

impl DeathRecord {
    /// Build a record, upper-casing the names and validating every field.
    pub fn new(
        surname: &str,
        given: &str,
        ssn: &str,
        birth_date: &str,
        death_date: &str,
    ) -> Result<Self> {
        let record = DeathRecord {
            surname: surname.to_ascii_uppercase(),
            given: given.to_ascii_uppercase(),
            ssn: ssn.to_string(),
            birth_date: birth_date.to_string(),
            death_date: death_date.to_string(),
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        check_name("surname", &self.surname, SURNAME_LEN)?;
        check_name("given", &self.given, GIVEN_LEN)?;
        if self.ssn.len() != 9 || !self.ssn.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::InvalidRecord(format!("ssn {:?} is not 9 digits", self.ssn)));
        }
        check_date("birth", &self.birth_date)?;
        check_date("death", &self.death_date)?;
        Ok(())
    }

    pub fn birth_year(&self) -> u16 {
        self.birth_date[..4].parse().unwrap_or(0)
    }

    pub fn death_year(&self) -> u16 {
        self.death_date[..4].parse().unwrap_or(0)
    }

    pub fn key(&self) -> TrigramKey {
        trigram_of(&self.surname, &self.given)
    }

    pub fn to_bytes(&self) -> Result<[u8; RECORD_LEN]> {
        self.validate()?;
        let line = format!(
            "{:<24}{:<12}{}{}{}  \n",
            self.surname, self.given, self.ssn, self.birth_date, self.death_date
        );
        let mut out = [0u8; RECORD_LEN];
        out.copy_from_slice(line.as_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != RECORD_LEN || bytes[63] != b'\n' || !bytes.is_ascii() {
            return Err(Error::InvalidRecord("not a 64-byte death record".into()));
        }
        let text = std::str::from_utf8(bytes).expect("checked ascii");
        let record = DeathRecord {
            surname: text[0..24].trim_end().to_string(),
            given: text[24..36].trim_end().to_string(),
            ssn: text[36..45].to_string(),
            birth_date: text[45..53].to_string(),
            death_date: text[53..61].to_string(),
        };
        record.validate()?;
        Ok(record)
    }

    /// Parse `surname<TAB>given<TAB>ssn<TAB>birth<TAB>death`.
    pub fn from_tsv(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            [s, g, ssn, b, d] => DeathRecord::new(s, g, ssn, b, d),
            _ => Err(Error::InvalidRecord(format!(
                "expected 5 tab-separated fields: {line:?}"
            ))),
        }
    }
}

fn check_name(field: &str, value: &str, width: usize) -> Result<()> {
    let ok = !value.is_empty()
        && value.len() <= width
        && value.bytes().all(|b| (0x20..0x7f).contains(&b))
        && value.trim() == value;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidRecord(format!(
            "{field} {value:?} must be 1..={width} printable ASCII characters without surrounding spaces"
        )))
    }
}

fn check_date(field: &str, value: &str) -> Result<()> {
    let bad = || Error::InvalidRecord(format!("{field} date {value:?} is not YYYYMMDD"));
    if value.len() != 8 || !value.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let month: u8 = value[4..6].parse().map_err(|_| bad())?;
    let day: u8 = value[6..8].parse().map_err(|_| bad())?;
    if month > 12 || day > 31 {
        return Err(bad());
    }
    Ok(())
}

/// Read a TSV stream of records; blank lines are skipped.
pub fn read_tsv(reader: impl BufRead) -> Result<Vec<DeathRecord>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        out.push(DeathRecord::from_tsv(line)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SearchQuery {
    pub given: String,
    pub surname: String,
    pub birth_year: Option<u16>,
    pub death_year_from: Option<u16>,
    pub death_year_to: Option<u16>,
}

impl SearchQuery {
    pub fn names(given: &str, surname: &str) -> Self {
        SearchQuery {
            given: given.to_string(),
            surname: surname.to_string(),
            ..Default::default()
        }
    }

    pub fn born(mut self, year: u16) -> Self {
        self.birth_year = Some(year);
        self
    }

    pub fn died_between(mut self, from: u16, to: u16) -> Self {
        self.death_year_from = Some(from);
        self.death_year_to = Some(to);
        self
    }

    /// Reject queries that do not pin down a single group.
    pub fn validate(&self) -> Result<()> {
        if normalize_letters(&self.surname).len() < 2 {
            return Err(Error::InvalidQuery(format!(
                "surname {:?} needs at least two letters",
                self.surname
            )));
        }
        if normalize_letters(&self.given).is_empty() {
            return Err(Error::InvalidQuery(format!(
                "given name {:?} needs at least one letter",
                self.given
            )));
        }
        if let (Some(from), Some(to)) = (self.death_year_from, self.death_year_to) {
            if from > to {
                return Err(Error::InvalidQuery(format!(
                    "death year range {from}..{to} is empty"
                )));
            }
        }
        Ok(())
    }

    pub fn key(&self) -> TrigramKey {
        trigram_of(&self.surname, &self.given)
    }

    /// The filter applied to each candidate record. Names match when the
    /// normalized query name is a prefix of the normalized stored name.
    pub fn matches(&self, record: &DeathRecord) -> bool {
        let prefix = |query: &str, stored: &str| {
            normalize_letters(stored).starts_with(&normalize_letters(query))
        };
        if !prefix(&self.surname, &record.surname) || !prefix(&self.given, &record.given) {
            return false;
        }
        if self.birth_year.is_some_and(|y| record.birth_year() != y) {
            return false;
        }
        let died = record.death_year();
        if self.death_year_from.is_some_and(|from| died < from) {
            return false;
        }
        if self.death_year_to.is_some_and(|to| died > to) {
            return false;
        }
        true
    }
}

/// A built death-record library: data store plus computed group index.
#[derive(Debug)]
pub struct DeathLibrary {
    dir: PathBuf,
    data: RecordStore,
    index: GroupIndex,
}

impl DeathLibrary {
    /// Write a new library into `dir` (created if missing).
    pub fn build<I>(dir: impl AsRef<Path>, records: I) -> Result<Self>
    where
        I: IntoIterator<Item = DeathRecord>,
    {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut groups: Vec<Vec<u8>> = vec![Vec::new(); GROUP_COUNT];
        for record in records {
            let bytes = record.to_bytes()?;
            groups[record.key().ordinal()].extend_from_slice(&bytes);
        }
        let data = RecordStore::create(dir.join(DATA_FILE), RECORD_LEN as u64)?;
        data.append_batch(groups.iter().filter(|g| !g.is_empty()))?;
        let counts: Vec<u64> = groups
            .iter()
            .map(|g| (g.len() / RECORD_LEN) as u64)
            .collect();
        let index = GroupIndex::build_from_counts(dir.join(INDEX_FILE), &counts)?;
        Ok(DeathLibrary { dir, data, index })
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let data = RecordStore::open(dir.join(DATA_FILE))?;
        let index = GroupIndex::open(dir.join(INDEX_FILE))?;
        if data.record_size() != RECORD_LEN as u64 {
            return Err(Error::Invalid(format!(
                "{} does not hold 64-byte records",
                data.path().display()
            )));
        }
        Ok(DeathLibrary { dir, data, index })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn data(&self) -> &RecordStore {
        &self.data
    }

    pub fn index(&self) -> &GroupIndex {
        &self.index
    }

    /// All records of one trigram group, in store order.
    pub fn group(&self, key: TrigramKey) -> Result<Vec<DeathRecord>> {
        let entry = self.index.lookup(key)?;
        let bytes = self.data.read_records(entry.start, entry.count)?;
        bytes.chunks_exact(RECORD_LEN).map(DeathRecord::from_bytes).collect()
    }

    pub fn search(&self, query: &SearchQuery) -> Result<Vec<DeathRecord>> {
        query.validate()?;
        let mut group = self.group(query.key())?;
        group.retain(|r| query.matches(r));
        Ok(group)
    }
}

const SURNAMES: &[&str] = &[
    "SMITH", "JOHNSON", "WILLIAMS", "JONES", "BROWN", "DAVIS", "MILLER", "WILSON", "MOORE",
    "TAYLOR", "ANDERSON", "THOMAS", "JACKSON", "WHITE", "HARRIS", "MARTIN", "THOMPSON", "GARCIA",
    "KENNEDY", "KELLY", "OBRIEN", "O'NEIL", "MCDONALD", "YOUNG", "ZIMMERMAN", "QUINN", "XAVIER",
    "VAN DYKE", "LEE", "NG",
];
const GIVEN: &[&str] = &[
    "JAMES", "JOHN", "JOSEPH", "ROBERT", "MARY", "PATRICIA", "LINDA", "BARBARA", "ELIZABETH",
    "WILLIAM", "DAVID", "RICHARD", "CHARLES", "THOMAS", "HELEN", "DOROTHY", "MARGARET", "RUTH",
    "ANNA", "EDWARD", "FRANK", "GEORGE", "ROSE", "ZELDA", "VICTOR", "IDA", "ULYSSES", "OLIVE",
];

/// Deterministic synthetic corpus. Common names dominate, as in real
/// registries, with a tail of random names to populate sparse groups.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<DeathRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_name = |rng: &mut ChaCha8Rng, max: usize| -> String {
        let len = rng.random_range(2..=max);
        (0..len).map(|_| rng.random_range(b'A'..=b'Z') as char).collect()
    };
    (0..n)
        .map(|i| {
            let surname = if rng.random_bool(0.7) {
                SURNAMES.choose(&mut rng).unwrap().to_string()
            } else {
                random_name(&mut rng, 12)
            };
            let given = if rng.random_bool(0.75) {
                GIVEN.choose(&mut rng).unwrap().to_string()
            } else {
                random_name(&mut rng, 8)
            };
            let birth_year = rng.random_range(1850..=1990u16);
            let death_year = rng.random_range(1936..=2011u16).max(birth_year);
            let date = |rng: &mut ChaCha8Rng, year: u16| {
                let day = if rng.random_bool(0.3) { 0 } else { rng.random_range(1..=28) };
                format!("{year:04}{:02}{day:02}", rng.random_range(1..=12))
            };
            let birth = date(&mut rng, birth_year);
            let death = date(&mut rng, death_year);
            DeathRecord::new(&surname, &given, &format!("{:09}", i % 1_000_000_000), &birth, &death)
                .expect("synthetic record is well formed")
        })
        .collect()
}

//! Named collections of packed files and the directory that holds them.
//!
//! A collection `FLStateU` is the pair `FLStateU.raclib` (+ `.meta`) and
//! `FLStateU.idx`. The title is recoverable from the file names, so the file
//! system itself acts as the first level of lookup.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::serial_index::{validate_token, SerialIndex, SerialIndexEntry};
use crate::store::{RecordSetRef, RecordStore};

pub const LIBRARY_EXT: &str = "raclib";
pub const INDEX_EXT: &str = "idx";

/// Flush packed payloads to the store in batches of roughly this size.
const PACK_BATCH_BYTES: usize = 64 << 20;

#[derive(Debug)]
pub struct Collection {
    name: String,
    store: RecordStore,
    index: SerialIndex,
}

impl Collection {
    pub fn library_path(dir: &Path, name: &str) -> PathBuf {
        dir.join(format!("{name}.{LIBRARY_EXT}"))
    }

    pub fn index_path(dir: &Path, name: &str) -> PathBuf {
        dir.join(format!("{name}.{INDEX_EXT}"))
    }

    pub fn create(dir: impl AsRef<Path>, name: &str, record_size: u64) -> Result<Self> {
        validate_token(name)?;
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let index_path = Self::index_path(dir, name);
        if index_path.exists() {
            return Err(Error::StoreExists(index_path));
        }
        let store = RecordStore::create(Self::library_path(dir, name), record_size)?;
        let index = SerialIndex::create(index_path)?;
        Ok(Collection {
            name: name.to_string(),
            store,
            index,
        })
    }

    pub fn open(dir: impl AsRef<Path>, name: &str) -> Result<Self> {
        let dir = dir.as_ref();
        Ok(Collection {
            name: name.to_string(),
            store: RecordStore::open(Self::library_path(dir, name))?,
            index: SerialIndex::open(Self::index_path(dir, name))?,
        })
    }

    pub fn open_writable(dir: impl AsRef<Path>, name: &str) -> Result<Self> {
        let dir = dir.as_ref();
        Ok(Collection {
            name: name.to_string(),
            store: RecordStore::open_writable(Self::library_path(dir, name))?,
            index: SerialIndex::open_writable(Self::index_path(dir, name))?,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn store(&self) -> &RecordStore {
        &self.store
    }

    pub fn index(&self) -> &SerialIndex {
        &self.index
    }

    /// Append one member and index it. The index line is written only after
    /// the payload is durable.
    pub fn add(&self, name: &str, key: &str, payload: &[u8]) -> Result<RecordSetRef> {
        let mut refs = self.add_batch([(name, key, payload)])?;
        Ok(refs.pop().unwrap())
    }

    pub fn add_batch<'a, I>(&self, members: I) -> Result<Vec<RecordSetRef>>
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a [u8])>,
    {
        let members: Vec<_> = members.into_iter().collect();
        for (name, key, _) in &members {
            validate_token(name)?;
            validate_token(key)?;
        }
        let refs = self.store.append_batch(members.iter().map(|m| m.2))?;
        for ((name, key, _), set) in members.iter().zip(&refs) {
            self.index
                .append_entry(&SerialIndexEntry::from_ref(*name, *key, set))?;
        }
        Ok(refs)
    }

    pub fn lookup(&self, name: &str, key: &str) -> Result<RecordSetRef> {
        let entry = self.index.lookup(name, key)?;
        let set = entry.to_ref(self.store.record_size());
        // Library handles are snapshots; pick up members packed since open.
        if set.end() > self.store.record_count() {
            self.store.refresh()?;
        }
        Ok(set)
    }

    pub fn fetch(&self, name: &str, key: &str) -> Result<Vec<u8>> {
        let set = self.lookup(name, key)?;
        self.store.read_payload(&set)
    }
}

/// Every collection in one library directory.
#[derive(Debug)]
pub struct Library {
    dir: PathBuf,
    collections: Vec<Collection>,
}

impl Library {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        if !dir.is_dir() {
            return Err(Error::Config(format!(
                "library directory {} does not exist",
                dir.display()
            )));
        }
        let mut names = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == INDEX_EXT) {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    if Collection::library_path(&dir, stem).is_file() {
                        names.push(stem.to_string());
                    }
                }
            }
        }
        names.sort();
        let collections = names
            .iter()
            .map(|n| Collection::open(&dir, n))
            .collect::<Result<_>>()?;
        Ok(Library { dir, collections })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn collections(&self) -> &[Collection] {
        &self.collections
    }

    pub fn collection(&self, name: &str) -> Option<&Collection> {
        self.collections.iter().find(|c| c.name == name)
    }

    /// Find a member. A collection named after the title is searched first,
    /// then every other collection in name order.
    pub fn find(&self, name: &str, key: &str) -> Result<(&Collection, RecordSetRef)> {
        let preferred = self.collection(name);
        let rest = self.collections.iter().filter(|c| c.name != name);
        for collection in preferred.into_iter().chain(rest) {
            match collection.lookup(name, key) {
                Ok(set) => return Ok((collection, set)),
                Err(e) if e.is_not_found() => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::NotFound(format!("{name} {key}")))
    }

    pub fn fetch(&self, name: &str, key: &str) -> Result<Vec<u8>> {
        let (collection, set) = self.find(name, key)?;
        collection.store().read_payload(&set)
    }
}

/// Split a `<title>_<page>.<ext>` file name at its last underscore.
pub fn parse_member_filename(file_name: &str) -> Option<(String, String)> {
    let stem = match file_name.rsplit_once('.') {
        Some((stem, _ext)) => stem,
        None => file_name,
    };
    let (title, page) = stem.rsplit_once('_')?;
    validate_token(title).ok()?;
    validate_token(page).ok()?;
    Some((title.to_string(), page.to_string()))
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if entry.file_type()?.is_dir() {
            collect_files(&path, out)?;
        } else if !entry.file_name().to_string_lossy().starts_with('.') {
            out.push(path);
        }
    }
    Ok(())
}

/// Read a manifest of `<relative path> <name> <key>` lines.
pub fn read_manifest(path: &Path, input_dir: &Path) -> Result<Vec<(PathBuf, String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [file, name, key] = fields.as_slice() else {
            return Err(Error::MalformedLine {
                line_no: i + 1,
                line: line.to_string(),
            });
        };
        out.push((input_dir.join(file), name.to_string(), key.to_string()));
    }
    Ok(out)
}

/// Pack every file under `input_dir` into a new collection in `out_dir`.
///
/// Members are appended in (name, key) order. Without a manifest, names and
/// keys come from `<title>_<page>.<ext>` file names.
pub fn pack(
    input_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    collection: &str,
    record_size: u64,
    manifest: Option<&Path>,
) -> Result<Collection> {
    let input_dir = input_dir.as_ref();
    let members: Vec<(PathBuf, String, String)> = match manifest {
        Some(m) => read_manifest(m, input_dir)?,
        None => {
            let mut files = Vec::new();
            collect_files(input_dir, &mut files)?;
            files
                .into_iter()
                .map(|path| {
                    let file_name = path.file_name().unwrap_or_default().to_string_lossy();
                    parse_member_filename(&file_name)
                        .map(|(name, key)| (path.clone(), name, key))
                        .ok_or_else(|| {
                            Error::Invalid(format!(
                                "cannot derive <title>_<page> from {}",
                                path.display()
                            ))
                        })
                })
                .collect::<Result<_>>()?
        }
    };

    let mut ordered: BTreeMap<(String, String), PathBuf> = BTreeMap::new();
    for (path, name, key) in members {
        validate_token(&name)?;
        validate_token(&key)?;
        if let Some(prev) = ordered.insert((name.clone(), key.clone()), path.clone()) {
            return Err(Error::Invalid(format!(
                "{} and {} both map to ({name}, {key})",
                prev.display(),
                path.display()
            )));
        }
    }

    let out = Collection::create(out_dir, collection, record_size)?;
    let mut batch: Vec<(String, String, Vec<u8>)> = Vec::new();
    let mut batch_bytes = 0;
    let flush = |batch: &mut Vec<(String, String, Vec<u8>)>| -> Result<()> {
        out.add_batch(
            batch
                .iter()
                .map(|(n, k, b)| (n.as_str(), k.as_str(), b.as_slice())),
        )?;
        batch.clear();
        Ok(())
    };
    for ((name, key), path) in ordered {
        let bytes = fs::read(&path)?;
        batch_bytes += bytes.len();
        batch.push((name, key, bytes));
        if batch_bytes >= PACK_BATCH_BYTES {
            flush(&mut batch)?;
            batch_bytes = 0;
        }
    }
    if !batch.is_empty() {
        flush(&mut batch)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn member_filenames() {
        assert_eq!(
            parse_member_filename("TallyHo1965_0404.jpg"),
            Some(("TallyHo1965".into(), "0404".into()))
        );
        assert_eq!(
            parse_member_filename("Some_Title_0012.png"),
            Some(("Some_Title".into(), "0012".into()))
        );
        assert_eq!(parse_member_filename("nounderscore.jpg"), None);
        assert_eq!(parse_member_filename("_0001.jpg"), None);
        assert_eq!(parse_member_filename("Title_.jpg"), None);
    }

    #[test]
    fn pack_and_fetch_back() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in");
        fs::create_dir_all(input.join("1965")).unwrap();
        fs::write(input.join("1965/TallyHo1965_0404.jpg"), b"\xff\xd8\xffpage 404").unwrap();
        fs::write(input.join("1965/TallyHo1965_0001.jpg"), vec![1u8; 3000]).unwrap();
        fs::write(input.join("TallyHo1966_0001.jpg"), b"").unwrap();
        let lib_dir = dir.path().join("lib");
        let c = pack(&input, &lib_dir, "FLStateU", 1024, None).unwrap();
        let lines = fs::read_to_string(c.index().path()).unwrap();
        assert_eq!(
            lines,
            "TallyHo1965 0001 0 3 3000\nTallyHo1965 0404 3 1 11\nTallyHo1966 0001 4 0 0\n"
        );
        let library = Library::open(&lib_dir).unwrap();
        assert_eq!(library.fetch("TallyHo1965", "0404").unwrap(), b"\xff\xd8\xffpage 404");
        assert_eq!(library.fetch("TallyHo1965", "0001").unwrap(), vec![1u8; 3000]);
        assert!(library.fetch("TallyHo1966", "0001").unwrap().is_empty());
        assert!(library.fetch("TallyHo1965", "404").unwrap_err().is_not_found());
    }

    #[test]
    fn pack_rejects_duplicates_and_bad_names() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in");
        fs::create_dir_all(input.join("a")).unwrap();
        fs::write(input.join("T_1.jpg"), b"x").unwrap();
        fs::write(input.join("a/T_1.png"), b"y").unwrap();
        assert!(pack(&input, dir.path().join("o1"), "C", 1024, None).is_err());

        let input2 = dir.path().join("in2");
        fs::create_dir_all(&input2).unwrap();
        fs::write(input2.join("noseparator.jpg"), b"x").unwrap();
        assert!(pack(&input2, dir.path().join("o2"), "C", 1024, None).is_err());

        // A manifest names members explicitly.
        let manifest = dir.path().join("manifest.txt");
        fs::write(&manifest, "noseparator.jpg Book 0007\n").unwrap();
        let c = pack(&input2, dir.path().join("o3"), "C", 512, Some(&manifest)).unwrap();
        assert_eq!(c.fetch("Book", "0007").unwrap(), b"x");
    }

    #[test]
    fn empty_input_dir() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in");
        fs::create_dir_all(&input).unwrap();
        let c = pack(&input, dir.path().join("lib"), "Empty", 1024, None).unwrap();
        assert_eq!(c.store().record_count(), 0);
        assert_eq!(c.index().entry_count().unwrap().entries, 0);
    }

    #[test]
    fn library_prefers_collection_named_after_title() {
        let dir = tempfile::tempdir().unwrap();
        let a = Collection::create(dir.path(), "Alpha", 64).unwrap();
        a.add("Beta", "1", b"from alpha").unwrap();
        let b = Collection::create(dir.path(), "Beta", 64).unwrap();
        b.add("Beta", "1", b"from beta").unwrap();
        let library = Library::open(dir.path()).unwrap();
        assert_eq!(library.collections().len(), 2);
        assert_eq!(library.fetch("Beta", "1").unwrap(), b"from beta");
    }
}

//! Millimeter brain coordinates grouped by region and centimeter block.
//!
//! A voxel `(-41, 12, -35)` is named `n41p12n35`; the 10 mm cube holding it
//! is `n4_xp1_yn3_z`. Each (region, block) group is stored as consecutive
//! 16-byte records (the coordinate name, null padded) and indexed by a
//! serial index line such as `L_ctx_middletemporal n4_xp1_yn3_z 85652 181`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::serial_index::{validate_token, SerialIndex, SerialIndexEntry};
use crate::store::RecordStore;

pub const COORD_LIMIT: i32 = 999;
pub const COORD_RECORD_LEN: usize = 16;

const DATA_FILE: &str = "coords.raclib";
const INDEX_FILE: &str = "regions.idx";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Voxel {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Voxel {
    pub fn new(x: i32, y: i32, z: i32) -> Result<Self> {
        let v = Voxel { x, y, z };
        v.check()?;
        Ok(v)
    }

    fn check(&self) -> Result<()> {
        for c in [self.x, self.y, self.z] {
            if !(-COORD_LIMIT..=COORD_LIMIT).contains(&c) {
                return Err(Error::CoordOutOfBounds(c));
            }
        }
        Ok(())
    }
}

fn sign_char(v: i32) -> char {
    if v < 0 {
        'n'
    } else {
        'p'
    }
}

pub fn encode_coord(v: Voxel) -> Result<String> {
    v.check()?;
    let mut out = String::with_capacity(12);
    for c in [v.x, v.y, v.z] {
        out.push(sign_char(c));
        out.push_str(&c.unsigned_abs().to_string());
    }
    Ok(out)
}

/// Split `s` into a leading sign character and its digits, returning the
/// signed value and the rest of the string.
fn take_signed(s: &str, full: &str) -> Result<(i32, bool, u32, usize)> {
    let malformed = || Error::MalformedName(full.to_string());
    let negative = match s.as_bytes().first() {
        Some(b'p') => false,
        Some(b'n') => true,
        _ => return Err(malformed()),
    };
    let digits = s[1..].bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 || digits > 3 {
        return Err(malformed());
    }
    let text = &s[1..1 + digits];
    if digits > 1 && text.starts_with('0') {
        return Err(malformed());
    }
    let magnitude: u32 = text.parse().map_err(|_| malformed())?;
    let value = if negative { -(magnitude as i32) } else { magnitude as i32 };
    Ok((value, negative, magnitude, 1 + digits))
}

pub fn decode_coord(name: &str) -> Result<Voxel> {
    let malformed = || Error::MalformedName(name.to_string());
    let mut rest = name;
    let mut parts = [0i32; 3];
    for part in &mut parts {
        let (value, negative, magnitude, used) = take_signed(rest, name)?;
        // Zero is always written p0.
        if negative && magnitude == 0 {
            return Err(malformed());
        }
        *part = value;
        rest = &rest[used..];
    }
    if !rest.is_empty() {
        return Err(malformed());
    }
    Voxel::new(parts[0], parts[1], parts[2])
}

/// One axis of a centimeter block: sign plus decade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AxisBlock {
    pub negative: bool,
    pub decade: u16,
}

impl AxisBlock {
    pub fn of(v: i32) -> Self {
        AxisBlock {
            negative: v < 0,
            decade: (v.unsigned_abs() / 10) as u16,
        }
    }

    /// Inclusive range of axis values in this block.
    pub fn range(&self) -> std::ops::RangeInclusive<i32> {
        let d = self.decade as i32;
        match (self.negative, d) {
            (false, _) => 10 * d..=10 * d + 9,
            (true, 0) => -9..=-1,
            (true, _) => -(10 * d + 9)..=-(10 * d),
        }
    }

    pub fn contains(&self, v: i32) -> bool {
        Self::of(v) == *self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockName {
    pub x: AxisBlock,
    pub y: AxisBlock,
    pub z: AxisBlock,
}

impl BlockName {
    pub fn contains(&self, v: Voxel) -> bool {
        block_of(v).is_ok_and(|b| b == *self)
    }

    /// Every voxel inside the block.
    pub fn voxels(&self) -> impl Iterator<Item = Voxel> + '_ {
        self.x.range().flat_map(move |x| {
            self.y
                .range()
                .flat_map(move |y| self.z.range().map(move |z| Voxel { x, y, z }))
        })
    }
}

impl fmt::Display for BlockName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (axis, suffix) in [(self.x, "x"), (self.y, "y"), (self.z, "z")] {
            let sign = if axis.negative { 'n' } else { 'p' };
            write!(f, "{sign}{}_{suffix}", axis.decade)?;
        }
        Ok(())
    }
}

impl FromStr for BlockName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let malformed = || Error::MalformedName(s.to_string());
        let mut rest = s;
        let mut axes = [AxisBlock {
            negative: false,
            decade: 0,
        }; 3];
        for (axis, suffix) in axes.iter_mut().zip(["_x", "_y", "_z"]) {
            let (_, negative, magnitude, used) = take_signed(rest, s)?;
            if magnitude > 99 {
                return Err(malformed());
            }
            rest = rest[used..].strip_prefix(suffix).ok_or_else(malformed)?;
            *axis = AxisBlock {
                negative,
                decade: magnitude as u16,
            };
        }
        if !rest.is_empty() {
            return Err(malformed());
        }
        Ok(BlockName {
            x: axes[0],
            y: axes[1],
            z: axes[2],
        })
    }
}

pub fn block_of(v: Voxel) -> Result<BlockName> {
    v.check()?;
    Ok(BlockName {
        x: AxisBlock::of(v.x),
        y: AxisBlock::of(v.y),
        z: AxisBlock::of(v.z),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionIndexEntry {
    pub region: String,
    pub block: BlockName,
    pub start: u64,
    pub count: u64,
}

impl RegionIndexEntry {
    fn from_serial(entry: &SerialIndexEntry) -> Result<Self> {
        Ok(RegionIndexEntry {
            region: entry.name.clone(),
            block: entry.key.parse()?,
            start: entry.start,
            count: entry.count,
        })
    }
}

impl fmt::Display for RegionIndexEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.region, self.block, self.start, self.count)
    }
}

/// Region atlas stored as a coordinate library plus a serial region index.
#[derive(Debug)]
pub struct NeuroLibrary {
    dir: PathBuf,
    store: RecordStore,
    index: SerialIndex,
}

impl NeuroLibrary {
    /// Build a library in `dir`. Regions are written in key order; within a
    /// region, blocks appear in order of their first voxel in the input.
    pub fn build(dir: impl AsRef<Path>, regions: &BTreeMap<String, Vec<Voxel>>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;

        let mut seen = HashSet::new();
        let mut groups: Vec<(&str, BlockName, Vec<Voxel>)> = Vec::new();
        for (region, voxels) in regions {
            validate_token(region)?;
            let first_group = groups.len();
            for &v in voxels {
                let block = block_of(v)?;
                if !seen.insert(v) {
                    return Err(Error::Invalid(format!(
                        "voxel {} appears more than once (region {region})",
                        encode_coord(v)?
                    )));
                }
                match groups[first_group..].iter_mut().find(|g| g.1 == block) {
                    Some(g) => g.2.push(v),
                    None => groups.push((region, block, vec![v])),
                }
            }
        }

        let store = RecordStore::create(dir.join(DATA_FILE), COORD_RECORD_LEN as u64)?;
        let index = SerialIndex::create(dir.join(INDEX_FILE))?;
        let mut payloads = Vec::with_capacity(groups.len());
        for (_, _, voxels) in &groups {
            assert!(voxels.len() <= 1000, "a block holds at most 1000 voxels");
            let mut bytes = Vec::with_capacity(voxels.len() * COORD_RECORD_LEN);
            for &v in voxels {
                let mut record = [0u8; COORD_RECORD_LEN];
                let name = encode_coord(v)?;
                record[..name.len()].copy_from_slice(name.as_bytes());
                bytes.extend_from_slice(&record);
            }
            payloads.push(bytes);
        }
        let refs = store.append_batch(&payloads)?;
        for ((region, block, _), set) in groups.iter().zip(&refs) {
            index.append_entry(&SerialIndexEntry::new(
                *region,
                block.to_string(),
                set.start,
                set.count,
            ))?;
        }
        Ok(NeuroLibrary { dir, store, index })
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let store = RecordStore::open(dir.join(DATA_FILE))?;
        if store.record_size() != COORD_RECORD_LEN as u64 {
            return Err(Error::Invalid(format!(
                "{} does not hold {COORD_RECORD_LEN}-byte coordinate records",
                store.path().display()
            )));
        }
        let index = SerialIndex::open(dir.join(INDEX_FILE))?;
        Ok(NeuroLibrary { dir, store, index })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn store(&self) -> &RecordStore {
        &self.store
    }

    pub fn index(&self) -> &SerialIndex {
        &self.index
    }

    pub fn region_entries(&self, region: &str) -> Result<Vec<RegionIndexEntry>> {
        self.index
            .entries_named(region)?
            .iter()
            .map(RegionIndexEntry::from_serial)
            .collect()
    }

    fn read_group(&self, start: u64, count: u64) -> Result<Vec<Voxel>> {
        let bytes = self.store.read_records(start, count)?;
        bytes
            .chunks_exact(COORD_RECORD_LEN)
            .map(|record| {
                let len = record.iter().position(|&b| b == 0).unwrap_or(record.len());
                let name = std::str::from_utf8(&record[..len])
                    .map_err(|_| Error::MalformedName(String::from_utf8_lossy(record).into()))?;
                decode_coord(name)
            })
            .collect()
    }

    /// One index lookup and one contiguous read.
    pub fn block_voxels(&self, region: &str, block: &BlockName) -> Result<Vec<Voxel>> {
        let entry = self.index.lookup(region, &block.to_string())?;
        self.read_group(entry.start, entry.count)
    }

    pub fn region_voxels(&self, region: &str) -> Result<Vec<Voxel>> {
        let entries = self.region_entries(region)?;
        if entries.is_empty() {
            return Err(Error::NotFound(format!("region {region}")));
        }
        let mut out = Vec::new();
        for e in entries {
            out.extend(self.read_group(e.start, e.count)?);
        }
        Ok(out)
    }
}

/// Read `region<TAB>x<TAB>y<TAB>z` lines into a region map.
pub fn read_atlas_tsv(reader: impl BufRead) -> Result<BTreeMap<String, Vec<Voxel>>> {
    let mut out: BTreeMap<String, Vec<Voxel>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Invalid(format!("atlas line {}: {line:?}", i + 1));
        let fields: Vec<&str> = line.split('\t').collect();
        let [region, x, y, z] = fields.as_slice() else {
            return Err(bad());
        };
        let coord = |s: &str| s.trim().parse::<i32>().map_err(|_| bad());
        let v = Voxel::new(coord(x)?, coord(y)?, coord(z)?)?;
        out.entry(region.to_string()).or_default().push(v);
    }
    Ok(out)
}

/// Deterministic synthetic atlas: a lattice slab split into `regions`
/// nearest-seed cells.
pub fn synthetic_atlas(regions: usize, seed: u64) -> BTreeMap<String, Vec<Voxel>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<(i32, i32, i32)> = (0..regions)
        .map(|_| {
            (
                rng.random_range(-50..50),
                rng.random_range(-50..50),
                rng.random_range(-25..25),
            )
        })
        .collect();
    let names: Vec<String> = (0..regions)
        .map(|i| {
            let side = if i % 2 == 0 { "L" } else { "R" };
            format!("{side}_region{i:03}")
        })
        .collect();
    let mut out: BTreeMap<String, Vec<Voxel>> = BTreeMap::new();
    if regions == 0 {
        return out;
    }
    for x in -50..50 {
        for y in -50..50 {
            for z in -25..25 {
                let nearest = seeds
                    .iter()
                    .enumerate()
                    .min_by_key(|(_, s)| (s.0 - x).pow(2) + (s.1 - y).pow(2) + (s.2 - z).pow(2))
                    .map(|(i, _)| i)
                    .unwrap();
                out.entry(names[nearest].clone())
                    .or_default()
                    .push(Voxel { x, y, z });
            }
        }
    }
    out
}

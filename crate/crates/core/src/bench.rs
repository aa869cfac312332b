//! Fetch-latency measurements against synthetic libraries, a scan-only
//! archive baseline, and histogram output for log-log plots.

use std::cell::Cell;
use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;
use std::rc::Rc;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::store::RecordStore;

/// Records generated per batch written by [`synth_library`].
const SYNTH_CHUNK_BYTES: u64 = 8 << 20;

/// One timed fetch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencySample {
    pub start: u64,
    pub count: u64,
    pub elapsed_us: f64,
    pub bytes_read: u64,
}

impl LatencySample {
    pub const CSV_HEADER: &'static str = "start,count,elapsed_us,bytes_read";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.3},{}",
            self.start, self.count, self.elapsed_us, self.bytes_read
        )
    }
}

#[derive(Debug, Clone)]
pub struct FetchStats {
    pub samples: Vec<LatencySample>,
    pub min_us: f64,
    pub median_us: f64,
    pub mean_us: f64,
    pub max_us: f64,
}

impl FetchStats {
    pub fn from_samples(samples: Vec<LatencySample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let mut t: Vec<f64> = samples.iter().map(|s| s.elapsed_us).collect();
        t.sort_by(f64::total_cmp);
        let n = t.len();
        let median_us = if n % 2 == 1 {
            t[n / 2]
        } else {
            (t[n / 2 - 1] + t[n / 2]) / 2.0
        };
        Ok(FetchStats {
            min_us: t[0],
            max_us: t[n - 1],
            mean_us: t.iter().sum::<f64>() / n as f64,
            median_us,
            samples,
        })
    }
}

/// Fill a new library with `n_records` pseudorandom records.
pub fn synth_library(
    path: impl AsRef<Path>,
    n_records: u64,
    record_size: u64,
    seed: u64,
) -> Result<RecordStore> {
    let store = RecordStore::create(path, record_size)?;
    let per_chunk = (SYNTH_CHUNK_BYTES / record_size).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining = n_records;
    let chunks = std::iter::from_fn(|| {
        if remaining == 0 {
            return None;
        }
        let n = remaining.min(per_chunk);
        remaining -= n;
        let mut buf = vec![0u8; (n * record_size) as usize];
        rng.fill_bytes(&mut buf);
        Some(buf)
    });
    store.append_batch(chunks)?;
    Ok(store)
}

/// SHA-256 of a store's full contents, hex encoded.
pub fn store_checksum(store: &RecordStore) -> Result<String> {
    let mut hasher = Sha256::new();
    let per_chunk = (SYNTH_CHUNK_BYTES / store.record_size()).max(1);
    let total = store.record_count();
    let mut start = 0;
    while start < total {
        let n = per_chunk.min(total - start);
        hasher.update(store.read_records(start, n)?);
        start += n;
    }
    Ok(hex::encode(hasher.finalize()))
}

fn timed_fetch(store: &RecordStore, start: u64, count: u64) -> Result<LatencySample> {
    let before = store.io_stats();
    let t0 = Instant::now();
    let bytes = store.read_records(start, count)?;
    let elapsed = t0.elapsed();
    std::hint::black_box(&bytes);
    Ok(LatencySample {
        start,
        count,
        elapsed_us: elapsed.as_secs_f64() * 1e6,
        bytes_read: store.io_stats().since(before).bytes_read,
    })
}

/// Time `trials` fetches of the same record range.
pub fn measure_fetch(store: &RecordStore, start: u64, count: u64, trials: usize) -> Result<FetchStats> {
    let samples = (0..trials)
        .map(|_| timed_fetch(store, start, count))
        .collect::<Result<Vec<_>>>()?;
    FetchStats::from_samples(samples)
}

/// Time several ranges with their trials interleaved (a, b, a, b, ...), so
/// slow drift in the host affects every range alike.
pub fn measure_interleaved(
    store: &RecordStore,
    ranges: &[(u64, u64)],
    trials: usize,
) -> Result<Vec<FetchStats>> {
    let mut samples: Vec<Vec<LatencySample>> = vec![Vec::with_capacity(trials); ranges.len()];
    for _ in 0..trials {
        for (i, &(start, count)) in ranges.iter().enumerate() {
            samples[i].push(timed_fetch(store, start, count)?);
        }
    }
    samples.into_iter().map(FetchStats::from_samples).collect()
}

/// Write members into a tar archive, which can only be read by scanning.
pub fn build_serial_archive<I, N, B>(path: impl AsRef<Path>, members: I) -> Result<u64>
where
    I: IntoIterator<Item = (N, B)>,
    N: AsRef<str>,
    B: AsRef<[u8]>,
{
    let file = File::create(path.as_ref())?;
    let mut builder = tar::Builder::new(io::BufWriter::new(file));
    for (name, bytes) in members {
        let bytes = bytes.as_ref();
        let mut header = tar::Header::new_ustar();
        header.set_size(bytes.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_entry_type(tar::EntryType::Regular);
        builder.append_data(&mut header, name.as_ref(), bytes)?;
    }
    let mut out = builder.into_inner()?;
    out.flush()?;
    drop(out);
    Ok(std::fs::metadata(path.as_ref())?.len())
}

struct CountingReader<R> {
    inner: R,
    count: Rc<Cell<u64>>,
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.count.set(self.count.get() + n as u64);
        Ok(n)
    }
}

/// Extract member `member_ordinal` (0-based) by scanning from byte 0.
///
/// Returns the timing, the number of archive bytes consumed, and the
/// member's bytes.
pub fn serial_baseline(
    archive: impl AsRef<Path>,
    member_ordinal: u64,
) -> Result<(LatencySample, Vec<u8>)> {
    let count = Rc::new(Cell::new(0));
    let reader = CountingReader {
        inner: BufReader::new(File::open(archive.as_ref())?),
        count: count.clone(),
    };
    let t0 = Instant::now();
    let mut archive = tar::Archive::new(reader);
    let mut seen = 0;
    for entry in archive.entries()? {
        let mut entry = entry?;
        if seen == member_ordinal {
            let mut bytes = Vec::with_capacity(entry.size() as usize);
            entry.read_to_end(&mut bytes)?;
            let elapsed = t0.elapsed();
            let sample = LatencySample {
                start: member_ordinal,
                count: 1,
                elapsed_us: elapsed.as_secs_f64() * 1e6,
                bytes_read: count.get(),
            };
            return Ok((sample, bytes));
        }
        seen += 1;
    }
    Err(Error::OutOfRange {
        start: member_ordinal,
        end: member_ordinal + 1,
        record_count: seen,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub low: f64,
    pub high: f64,
    pub count: u64,
}

/// Decade edges (`..., 10, 100, 1000, ...`) spanning every sample. Values
/// below 1 share a first bin starting at 0.
pub fn decade_edges(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let (min, max) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    if !min.is_finite() || !max.is_finite() || min < 0.0 {
        return Err(Error::Invalid("samples must be finite and non-negative".into()));
    }
    let mut edges = Vec::new();
    let mut exp = if min < 1.0 {
        edges.push(0.0);
        0
    } else {
        min.log10().floor() as i32
    };
    loop {
        let edge = 10f64.powi(exp);
        edges.push(edge);
        if edge > max {
            break;
        }
        exp += 1;
    }
    Ok(edges)
}

/// Count samples into `[edges[i], edges[i + 1])` bins; the last bin also
/// includes its upper edge.
pub fn emit_histogram(samples: &[f64], edges: &[f64]) -> Result<Vec<HistogramBin>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("histogram edges must be increasing, at least two".into()));
    }
    let mut bins: Vec<HistogramBin> = edges
        .windows(2)
        .map(|w| HistogramBin {
            low: w[0],
            high: w[1],
            count: 0,
        })
        .collect();
    let (low, high) = (edges[0], edges[edges.len() - 1]);
    for &s in samples {
        if !(low..=high).contains(&s) {
            return Err(Error::SampleOutsideBins(s));
        }
        let bin = if s == high {
            bins.len() - 1
        } else {
            edges.partition_point(|&e| e <= s) - 1
        };
        bins[bin].count += 1;
    }
    Ok(bins)
}

pub fn write_histogram_csv(bins: &[HistogramBin], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "bin_low,bin_high,count")?;
    for b in bins {
        writeln!(out, "{},{},{}", b.low, b.high, b.count)?;
    }
    Ok(())
}

/// Pull one numeric column out of CSV text with a header row. A file with
/// a single unnamed column is read as-is.
pub fn read_sample_column(text: &str, column: &str) -> Result<Vec<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let Some(header) = lines.next() else {
        return Err(Error::EmptySamples);
    };
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let (idx, first) = match names.iter().position(|n| *n == column) {
        Some(i) => (i, None),
        None if names.len() == 1 => match names[0].parse::<f64>() {
            Ok(v) => (0, Some(v)),
            Err(_) => (0, None),
        },
        None => return Err(Error::Invalid(format!("no column {column:?} in header {header:?}"))),
    };
    let mut out: Vec<f64> = first.into_iter().collect();
    for line in lines {
        let field = line
            .split(',')
            .nth(idx)
            .ok_or_else(|| Error::Invalid(format!("short row {line:?}")))?;
        out.push(
            field
                .trim()
                .parse()
                .map_err(|_| Error::Invalid(format!("not a number: {field:?}")))?,
        );
    }
    Ok(out)
}

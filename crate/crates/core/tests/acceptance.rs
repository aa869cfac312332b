//! Acceptance suite. Each criterion prints exactly one PASS/FAIL line; the
//! process exits non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{ensure, Context, Result};
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use raclib::bench;
use raclib::cache::{CachePolicy, DiskCache, Resolver, Source, TOKEN_FILE};
use raclib::computed_index::{key_ordinal, trigram_of, TrigramKey, GROUP_COUNT, INDEX_FILE_LEN};
use raclib::library::{self, Library};
use raclib::neuro::{self, block_of, decode_coord, encode_coord, BlockName, NeuroLibrary, Voxel};
use raclib::server;
use raclib::ssdi::{self, DeathLibrary, DeathRecord, SearchQuery, RECORD_LEN};
use raclib::store::{records_for, RecordStore};
use raclib::DeliveryRequest;

struct Criterion {
    number: u32,
    title: &'static str,
    limit: Duration,
    run: fn() -> Result<String>,
}

const CRITERIA: &[Criterion] = &[
    Criterion { number: 1, title: "trigram arithmetic", limit: Duration::from_secs(1), run: trigram_arithmetic },
    Criterion { number: 2, title: "round-trip fidelity", limit: Duration::from_secs(30), run: round_trip_fidelity },
    Criterion { number: 3, title: "search oracle equivalence", limit: Duration::from_secs(120), run: search_oracle },
    Criterion { number: 4, title: "latency offset independence", limit: Duration::from_secs(300), run: latency_offset_independence },
    Criterion { number: 5, title: "serial baseline asymmetry", limit: Duration::from_secs(120), run: serial_baseline_asymmetry },
    Criterion { number: 6, title: "cache token protocol", limit: Duration::from_secs(60), run: cache_token_protocol },
    Criterion { number: 7, title: "neuro encodings", limit: Duration::from_secs(60), run: neuro_encodings },
    Criterion { number: 8, title: "computed index format", limit: Duration::from_secs(10), run: computed_index_format },
    Criterion { number: 9, title: "end-to-end service", limit: Duration::from_secs(30), run: end_to_end_service },
];

fn main() {
    let only: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for c in CRITERIA.iter().filter(|c| only.is_none_or(|n| n == c.number)) {
        let t0 = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Err(anyhow::anyhow!("panicked: {msg}"))
            });
        let elapsed = t0.elapsed();
        let outcome = outcome.and_then(|detail| {
            ensure!(
                elapsed <= c.limit,
                "took {elapsed:.1?}, limit {:?} ({detail})",
                c.limit
            );
            Ok(detail)
        });
        match outcome {
            Ok(detail) => println!(
                "criterion {} {}: PASS ({detail}; {elapsed:.2?})",
                c.number, c.title
            ),
            Err(e) => {
                failed += 1;
                println!(
                    "criterion {} {}: FAIL ({e:#}; {elapsed:.2?})",
                    c.number, c.title
                );
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn trigram_arithmetic() -> Result<String> {
    let key = trigram_of("Kennedy", "Robert");
    ensure!((key.c1, key.c2, key.c3) == (10, 4, 17), "Kennedy/Robert letters {key:?}");
    let ordinal = key_ordinal(key);
    ensure!(ordinal == 6881, "Kennedy/Robert ordinal {ordinal}");

    let mut seen = vec![false; GROUP_COUNT];
    for c1 in 0..26u8 {
        for c2 in 0..26u8 {
            for c3 in 0..26u8 {
                let k = TrigramKey::new(c1, c2, c3)?;
                let o = key_ordinal(k);
                ensure!(o < GROUP_COUNT, "ordinal {o} out of range");
                ensure!(!seen[o], "ordinal {o} produced twice");
                seen[o] = true;
                ensure!(TrigramKey::from_ordinal(o)? == k, "inverse fails at {o}");
            }
        }
    }
    ensure!(seen.iter().all(|&s| s), "not surjective");
    Ok(format!("ordinal 6881, bijection over {GROUP_COUNT} keys"))
}

fn round_trip_fidelity() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("roundtrip.raclib");
    let record_size = 1024;
    let store = RecordStore::create(&path, record_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut payloads = Vec::with_capacity(1000);
    let mut refs = Vec::with_capacity(1000);
    let mut expected_records = 0;
    for i in 0..1000 {
        let mut p = vec![0u8; rng.random_range(0..=300 * 1024)];
        rng.fill_bytes(&mut p);
        let set = store.append_payload(&p)?;
        expected_records += records_for(p.len() as u64, record_size);
        let file_len = fs::metadata(&path)?.len();
        ensure!(
            store.record_count() == expected_records
                && file_len == store.record_count() * record_size,
            "length law broken after append {i}: {file_len} bytes, {} records, expected {expected_records}",
            store.record_count()
        );
        payloads.push(p);
        refs.push(set);
    }

    let reopened = RecordStore::open(&path)?;
    for (i, (p, set)) in payloads.iter().zip(&refs).enumerate() {
        ensure!(store.read_payload(set)? == *p, "payload {i} differs");
        ensure!(reopened.read_payload(set)? == *p, "payload {i} differs after reopen");
    }
    let total: usize = payloads.iter().map(Vec::len).sum();
    Ok(format!(
        "1000 payloads, {total} bytes in {expected_records} records"
    ))
}

fn random_query(rng: &mut ChaCha8Rng, corpus: &[DeathRecord]) -> SearchQuery {
    // A raw prefix (punctuation included) holding at least `min` letters.
    let prefix = |rng: &mut ChaCha8Rng, s: &str, min: usize| -> String {
        let mut n = rng.random_range(min.min(s.len())..=s.len());
        while n < s.len() && s[..n].bytes().filter(u8::is_ascii_alphabetic).count() < min {
            n += 1;
        }
        s[..n].to_string()
    };
    let mut q = if rng.random_bool(0.85) {
        let r = corpus.choose(rng).expect("corpus");
        SearchQuery::names(&prefix(rng, &r.given, 1), &prefix(rng, &r.surname, 2))
    } else {
        let letters = |rng: &mut ChaCha8Rng, n: usize| -> String {
            (0..n).map(|_| rng.random_range(b'A'..=b'Z') as char).collect()
        };
        let (g, s) = (rng.random_range(1..4), rng.random_range(2..5));
        SearchQuery::names(&letters(rng, g), &letters(rng, s))
    };
    if rng.random_bool(0.3) {
        q = q.born(rng.random_range(1850..2000));
    }
    if rng.random_bool(0.3) {
        let from = rng.random_range(1900..2010);
        q = q.died_between(from, from + rng.random_range(0..40));
    }
    q
}

fn search_oracle() -> Result<String> {
    let corpus = ssdi::synthetic_corpus(100_000, 3);
    let dir = tempfile::tempdir()?;
    let lib = DeathLibrary::build(dir.path(), corpus.clone())?;

    let stored: Vec<DeathRecord> = lib
        .data()
        .read_records(0, lib.data().record_count())?
        .chunks(RECORD_LEN)
        .map(DeathRecord::from_bytes)
        .collect::<raclib::Result<_>>()?;
    let mut a = stored.clone();
    let mut b = corpus;
    let order = |x: &DeathRecord, y: &DeathRecord| {
        (&x.ssn, &x.surname, &x.given, &x.birth_date, &x.death_date)
            .cmp(&(&y.ssn, &y.surname, &y.given, &y.birth_date, &y.death_date))
    };
    a.sort_by(order);
    b.sort_by(order);
    ensure!(a == b, "stored records differ from the corpus");

    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut total_hits = 0;
    for i in 0..500 {
        let q = random_query(&mut rng, &stored);
        let index_before = lib.index().store().io_stats();
        let data_before = lib.data().io_stats();
        let mut got = lib.search(&q)?;
        let index_io = lib.index().store().io_stats().since(index_before);
        let data_io = lib.data().io_stats().since(data_before);
        let group = lib.index().lookup(q.key())?;

        ensure!(
            index_io.read_ops == 1 && data_io.read_ops == 1,
            "query {i} {q:?}: {} index reads, {} data reads",
            index_io.read_ops,
            data_io.read_ops
        );
        ensure!(
            data_io.bytes_read == group.count * RECORD_LEN as u64,
            "query {i}: read {} bytes for a {}-record group",
            data_io.bytes_read,
            group.count
        );

        let mut want: Vec<DeathRecord> = stored.iter().filter(|r| q.matches(r)).cloned().collect();
        got.sort_by(order);
        want.sort_by(order);
        ensure!(got == want, "query {i} {q:?}: {} hits vs {} by scan", got.len(), want.len());
        total_hits += got.len();
    }
    Ok(format!("500 queries, {total_hits} hits, 1 index + 1 group read each"))
}

fn latency_offset_independence() -> Result<String> {
    let records = 1 << 20;
    let count = 230;
    let dir = tempfile::tempdir()?;
    let store = bench::synth_library(dir.path().join("gib.raclib"), records, 1024, 4)?;
    ensure!(
        store.meta().byte_len() >= 1 << 30,
        "library is only {} bytes",
        store.meta().byte_len()
    );
    let near_start = 1_000;
    let near_end = records - count - 1_000;
    let stats = bench::measure_interleaved(&store, &[(near_start, count), (near_end, count)], 31)?;
    let expected_bytes = count * 1024;
    for s in stats.iter().flat_map(|s| &s.samples) {
        ensure!(
            s.bytes_read == expected_bytes,
            "fetch at {} read {} bytes",
            s.start,
            s.bytes_read
        );
    }
    let ratio = stats[1].median_us / stats[0].median_us;
    ensure!(
        ratio <= 2.0,
        "end/start median ratio {ratio:.2} ({:.1} vs {:.1} us)",
        stats[1].median_us,
        stats[0].median_us
    );
    Ok(format!(
        "medians {:.1} us (start) vs {:.1} us (end), ratio {ratio:.2}, {expected_bytes} bytes each",
        stats[0].median_us, stats[1].median_us
    ))
}

fn serial_baseline_asymmetry() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let members: Vec<Vec<u8>> = (0..10_000)
        .map(|_| {
            let mut m = vec![0u8; rng.random_range(1..4_096)];
            rng.fill_bytes(&mut m);
            m
        })
        .collect();

    let archive = dir.path().join("members.tar");
    let archive_len = bench::build_serial_archive(
        &archive,
        members.iter().enumerate().map(|(i, m)| (format!("m{i:05}.bin"), m)),
    )?;
    let store = RecordStore::create(dir.path().join("members.raclib"), 1024)?;
    let refs = store.append_batch(members.iter())?;

    let last = members.len() - 1;
    let (scan, scanned) = bench::serial_baseline(&archive, last as u64)?;
    ensure!(scanned == members[last], "archive returned the wrong member");
    let fraction = scan.bytes_read as f64 / archive_len as f64;
    ensure!(
        fraction >= 0.999,
        "scan read {} of {archive_len} bytes ({:.4}%)",
        scan.bytes_read,
        100.0 * fraction
    );

    let before = store.io_stats();
    let direct = store.read_payload(&refs[last])?;
    let io = store.io_stats().since(before);
    ensure!(direct == members[last], "library returned the wrong member");
    ensure!(
        io.read_ops == 1 && io.bytes_read == refs[last].count * 1024,
        "library fetch read {} bytes in {} ops for a {}-record member",
        io.bytes_read,
        io.read_ops,
        refs[last].count
    );
    Ok(format!(
        "scan read {:.3}% of {archive_len} bytes; library read {} bytes",
        100.0 * fraction,
        io.bytes_read
    ))
}

struct CacheFixture {
    _dir: tempfile::TempDir,
    resolver: Arc<Resolver>,
    expected: BTreeMap<String, Vec<u8>>,
}

fn cache_fixture(pages: usize, cache_name: &str) -> Result<CacheFixture> {
    let dir = tempfile::tempdir()?;
    let scans = dir.path().join("scans");
    common::write_scans(&scans, "TallyHo1965", pages, 6)?;
    library::pack(&scans, dir.path().join("lib"), "TallyHo1965", 1024, None)?;
    let library = Library::open(dir.path().join("lib"))?;
    let mut expected = BTreeMap::new();
    for page in 1..=pages {
        let page = format!("{page:04}");
        let bytes = fs::read(scans.join(format!("TallyHo1965_{page}.jpg")))?;
        ensure!(library.fetch("TallyHo1965", &page)? == bytes, "pack mismatch on {page}");
        expected.insert(page, bytes);
    }
    let cache = DiskCache::new(dir.path().join(cache_name), CachePolicy::default())?;
    Ok(CacheFixture {
        resolver: Arc::new(Resolver::new(library, cache)),
        expected,
        _dir: dir,
    })
}

fn cache_root_listing(root: &Path) -> Result<(Vec<u64>, Vec<String>)> {
    let mut buckets = Vec::new();
    let mut other = Vec::new();
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        match name.parse::<u64>() {
            Ok(id) if entry.file_type()?.is_dir() => {
                buckets.push(id);
                for f in fs::read_dir(entry.path())? {
                    let f = f?.file_name().to_string_lossy().into_owned();
                    if f.starts_with('.') || !f.ends_with(".jpg") {
                        other.push(format!("{name}/{f}"));
                    }
                }
            }
            _ => other.push(name),
        }
    }
    buckets.sort_unstable();
    Ok((buckets, other))
}

fn cache_token_protocol() -> Result<String> {
    const THREADS: usize = 50;
    const REQUESTS: u64 = 20;
    let fixture = cache_fixture(30, "cache")?;
    let cache_root = fixture.resolver.cache().root().to_path_buf();

    // Two expired buckets that the first rotation must sweep away.
    let base = 1_650_000_990;
    for old in [1_649_997u64, 1_649_998] {
        fs::create_dir_all(cache_root.join(old.to_string()))?;
        fs::write(cache_root.join(old.to_string()).join("Old_0001.jpg"), b"stale")?;
    }

    let pages: Vec<String> = fixture.expected.keys().cloned().collect();
    let barrier = Arc::new(Barrier::new(THREADS));
    let handles: Vec<_> = (0..THREADS)
        .map(|t| {
            let resolver = fixture.resolver.clone();
            let barrier = barrier.clone();
            let pages = pages.clone();
            thread::spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + t as u64);
                barrier.wait();
                (0..REQUESTS)
                    .map(|j| {
                        let page = pages.choose(&mut rng).unwrap().clone();
                        let request = DeliveryRequest::new("TallyHo1965", &page)?;
                        let d = resolver.resolve_image(&request, base + j)?;
                        Ok((page, d.source, d.bytes))
                    })
                    .collect::<raclib::Result<Vec<_>>>()
            })
        })
        .collect();

    let mut failures = 0;
    let mut by_source: HashMap<&'static str, usize> = HashMap::new();
    for h in handles {
        match h.join() {
            Ok(Ok(results)) => {
                for (page, source, bytes) in results {
                    ensure!(
                        bytes == fixture.expected[&page],
                        "page {page} from {} differs from the library",
                        source.as_str()
                    );
                    *by_source.entry(source.as_str()).or_default() += 1;
                }
            }
            Ok(Err(e)) => {
                eprintln!("resolver failed: {e}");
                failures += 1;
            }
            Err(_) => failures += 1,
        }
    }
    ensure!(failures == 0, "{failures} resolver threads failed");
    ensure!(
        by_source.get(Source::Cache.as_str()).copied().unwrap_or(0) > 0
            && by_source.get(Source::Library.as_str()).copied().unwrap_or(0) > 0,
        "expected both sources, got {by_source:?}"
    );

    let last = base + REQUESTS - 1;
    fixture.resolver.cache().sweep_old_buckets(last)?;
    let (buckets, stray) = cache_root_listing(&cache_root)?;
    let unique: HashSet<u64> = buckets.iter().copied().collect();
    ensure!(unique.len() == buckets.len(), "duplicate bucket ids {buckets:?}");
    ensure!(
        buckets == vec![1_650_000, 1_650_001],
        "buckets after sweep {buckets:?}"
    );
    ensure!(stray.is_empty(), "unexpected cache entries {stray:?}");

    // A token left behind by a crashed rotator, and no current bucket.
    let stale = cache_fixture(5, "stale-cache")?;
    let stale_root = stale.resolver.cache().root().to_path_buf();
    fs::write(stale_root.join(TOKEN_FILE), "rotator that never came back")?;
    let barrier = Arc::new(Barrier::new(THREADS));
    let started = Instant::now();
    let handles: Vec<_> = (0..THREADS)
        .map(|t| {
            let resolver = stale.resolver.clone();
            let barrier = barrier.clone();
            let page = format!("{:04}", t % 5 + 1);
            thread::spawn(move || {
                barrier.wait();
                let t0 = Instant::now();
                let request = DeliveryRequest::new("TallyHo1965", &page)?;
                let d = resolver.resolve_image(&request, 1_700_000_500)?;
                Ok::<_, raclib::Error>((page, d.bytes, t0.elapsed()))
            })
        })
        .collect();
    let mut slowest = Duration::ZERO;
    for h in handles {
        let (page, bytes, waited) = h
            .join()
            .map_err(|_| anyhow::anyhow!("stale-token thread panicked"))??;
        ensure!(bytes == stale.expected[&page], "stale-token page {page} differs");
        slowest = slowest.max(waited);
    }
    let wall = started.elapsed();
    ensure!(
        slowest <= Duration::from_millis(2_500),
        "slowest resolver took {slowest:.2?} behind a stale token"
    );
    let (stale_buckets, stray) = cache_root_listing(&stale_root)?;
    ensure!(stale_buckets == vec![1_700_000], "buckets {stale_buckets:?}");
    ensure!(stray.is_empty(), "unexpected entries after forcing {stray:?}");

    Ok(format!(
        "{} requests ({} cache, {} library), buckets {buckets:?}; stale token cleared, slowest {slowest:.2?} of {wall:.2?}",
        THREADS as u64 * REQUESTS,
        by_source.get("cache").unwrap_or(&0),
        by_source.get("library").unwrap_or(&0)
    ))
}

fn neuro_encodings() -> Result<String> {
    let v = Voxel::new(-41, 12, -35)?;
    ensure!(encode_coord(v)? == "n41p12n35", "encode {}", encode_coord(v)?);
    ensure!(decode_coord("n41p12n35")? == v, "decode");
    ensure!(block_of(v)?.to_string() == "n4_xp1_yn3_z", "block {}", block_of(v)?);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut names = HashSet::new();
    let mut voxels = HashSet::new();
    for _ in 0..100_000 {
        let v = Voxel::new(
            rng.random_range(-999..=999),
            rng.random_range(-999..=999),
            rng.random_range(-999..=999),
        )?;
        let name = encode_coord(v)?;
        ensure!(decode_coord(&name)? == v, "round trip fails for {v:?} ({name})");
        voxels.insert(v);
        names.insert(name);
    }
    ensure!(names.len() == voxels.len(), "distinct voxels share a name");

    let mut per_block: HashMap<BlockName, u32> = HashMap::new();
    for x in -99..=99 {
        for y in -99..=99 {
            for z in -99..=99 {
                let v = Voxel::new(x, y, z)?;
                let b = block_of(v)?;
                ensure!(b.contains(v), "{b} does not contain {v:?}");
                *per_block.entry(b).or_default() += 1;
            }
        }
    }
    let lattice: u32 = per_block.values().sum();
    ensure!(lattice == 199 * 199 * 199, "blocks cover {lattice} points");
    for (b, &n) in &per_block {
        ensure!(n <= 1000, "{b} holds {n} voxels");
        ensure!(b.voxels().count() as u32 == n, "{b} enumerates a different cube");
    }

    let atlas = neuro::synthetic_atlas(50, 8);
    ensure!(atlas.len() == 50, "atlas has {} regions", atlas.len());
    let dir = tempfile::tempdir()?;
    NeuroLibrary::build(dir.path(), &atlas)?;
    let lib = NeuroLibrary::open(dir.path())?;
    let mut total = 0;
    for (region, voxels) in &atlas {
        let mut want = voxels.clone();
        let mut got = lib.region_voxels(region)?;
        want.sort();
        got.sort();
        ensure!(got == want, "{region} differs after rebuild");
        for e in lib.region_entries(region)? {
            ensure!(e.count <= 1000, "{e} exceeds one block");
            for v in lib.block_voxels(region, &e.block)? {
                ensure!(block_of(v)? == e.block, "{v:?} filed under {}", e.block);
            }
        }
        total += got.len();
    }
    Ok(format!(
        "10^5 round trips, {} blocks tile 199^3 points, 50 regions ({total} voxels) rebuilt",
        per_block.len()
    ))
}

fn computed_index_format() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let lib = DeathLibrary::build(dir.path(), ssdi::synthetic_corpus(25_000, 9))?;
    let index_path = lib.index().store().path().to_path_buf();
    let len = fs::metadata(&index_path)?.len();
    ensure!(len == INDEX_FILE_LEN && len == 351_520, "index file is {len} bytes");

    let mut next_start = 0;
    for ordinal in 0..GROUP_COUNT {
        let e = lib.index().read_group_entry(ordinal)?;
        ensure!(e.start == next_start, "group {ordinal} starts at {} not {next_start}", e.start);
        next_start += e.count;
    }
    ensure!(
        next_start == lib.data().record_count(),
        "counts sum to {next_start}, store holds {}",
        lib.data().record_count()
    );
    Ok(format!("{len} bytes, counts sum to {next_start}"))
}

fn end_to_end_service() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let scans = dir.path().join("scans");
    common::write_scans(&scans, "Gazette1972", 200, 10)?;
    let collection = library::pack(&scans, dir.path().join("lib"), "Gazette1972", 1024, None)?;
    ensure!(
        collection.index().entry_count()?.entries == 200,
        "collection has {} entries",
        collection.index().entry_count()?.entries
    );
    let resolver = Arc::new(Resolver::new(
        Library::open(dir.path().join("lib"))?,
        DiskCache::new(dir.path().join("cache"), CachePolicy::default())?,
    ));

    let runtime = tokio::runtime::Runtime::new()?;
    let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let addr = listener.local_addr()?;
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let served = runtime.spawn(server::serve_on(listener, resolver, async {
        let _ = stopped.await;
    }));

    let source = fs::read(scans.join("Gazette1972_0137.jpg"))?;
    let path = "/image?title=Gazette1972&page=0137";
    let first = common::http_get(addr, path).context("first request")?;
    let second = common::http_get(addr, path).context("second request")?;
    let _ = stop.send(());
    runtime.block_on(served)??;

    for (n, (r, want)) in [(&first, "library"), (&second, "cache")].into_iter().enumerate() {
        ensure!(r.status == 200, "request {} returned {}", n + 1, r.status);
        let got = r.header(server::SOURCE_HEADER).unwrap_or("");
        ensure!(got == want, "request {} source {got:?}, expected {want}", n + 1);
        ensure!(r.body == source, "request {} body differs from the source file", n + 1);
    }
    Ok(format!("{} bytes served from library then cache", source.len()))
}

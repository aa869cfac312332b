//! Build a death-record library over a synthetic registry and search it.
//!
//! ```text
//! cargo run --release --example ssdi_search -- 200000
//! ```

use std::time::Instant;

use raclib::computed_index::{key_ordinal, trigram_of, INDEX_FILE_LEN};
use raclib::ssdi::{synthetic_corpus, DeathLibrary, DeathRecord, SearchQuery};

fn main() -> raclib::Result<()> {
    let n: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("record count"))
        .unwrap_or(100_000);

    let key = trigram_of("Kennedy", "Robert");
    println!("Kennedy, Robert -> {key} -> ordinal {}", key_ordinal(key));

    let mut records = synthetic_corpus(n, 1);
    records.push(DeathRecord::new("KENNEDY", "ROBERT", "123456789", "19251120", "19680606")?);

    let dir = tempfile::tempdir()?;
    let t0 = Instant::now();
    let lib = DeathLibrary::build(dir.path(), records)?;
    println!(
        "built {} records in {:.2?}; index file is {} bytes",
        lib.data().record_count(),
        t0.elapsed(),
        INDEX_FILE_LEN
    );

    let queries = [
        SearchQuery::names("Robert", "Kennedy"),
        SearchQuery::names("Rob", "Kennedy").born(1925).died_between(1936, 1974),
        SearchQuery::names("J", "Jo"),
    ];
    for q in &queries {
        let before = (lib.index().store().io_stats(), lib.data().io_stats());
        let t0 = Instant::now();
        let hits = lib.search(q)?;
        let elapsed = t0.elapsed();
        let reads = (
            lib.index().store().io_stats().since(before.0).read_ops,
            lib.data().io_stats().since(before.1).read_ops,
        );
        println!(
            "{:?} {} born {:?} died {:?}..{:?}: {} hits in {:.2?} ({} index read, {} data read)",
            q.given, q.surname, q.birth_year, q.death_year_from, q.death_year_to,
            hits.len(), elapsed, reads.0, reads.1
        );
        for r in hits.iter().take(3) {
            println!("    {} {} {} {}-{}", r.surname, r.given, r.ssn, r.birth_date, r.death_date);
        }
    }
    Ok(())
}

//! Time 230-record fetches near the start and the end of a synthetic
//! library and print a decade histogram of all samples.
//!
//! ```text
//! cargo run --release --example latency_bench -- 262144
//! ```

use raclib::bench::{decade_edges, emit_histogram, measure_interleaved, store_checksum, synth_library, write_histogram_csv};

fn main() -> raclib::Result<()> {
    let records: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("record count"))
        .unwrap_or(65_536);
    let count = 230;
    let dir = tempfile::tempdir()?;
    let store = synth_library(dir.path().join("bench.raclib"), records, 1024, 7)?;
    println!("{} records, sha256 {}", store.record_count(), store_checksum(&store)?);

    let ranges = [(10, count), (records - count - 10, count)];
    let stats = measure_interleaved(&store, &ranges, 31)?;
    for (s, &(start, _)) in stats.iter().zip(&ranges) {
        println!(
            "start {start:>9}: median {:8.1} us, mean {:8.1} us, {} bytes per fetch",
            s.median_us, s.mean_us, s.samples[0].bytes_read
        );
    }
    println!("end/start median ratio {:.2}", stats[1].median_us / stats[0].median_us);

    let all: Vec<f64> = stats.iter().flat_map(|s| s.samples.iter().map(|x| x.elapsed_us)).collect();
    let bins = emit_histogram(&all, &decade_edges(&all)?)?;
    write_histogram_csv(&bins, std::io::stdout().lock())?;
    Ok(())
}

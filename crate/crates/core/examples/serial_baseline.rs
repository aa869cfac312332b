//! Compare scanning a tar archive for one member with a direct RacLib fetch.

use raclib::bench::{build_serial_archive, serial_baseline};
use raclib::store::RecordStore;

fn main() -> raclib::Result<()> {
    let dir = tempfile::tempdir()?;
    let members: Vec<Vec<u8>> = (0..2_000u32)
        .map(|i| vec![(i % 256) as u8; 1_500 + (i as usize % 7) * 300])
        .collect();

    let archive = dir.path().join("members.tar");
    let total = build_serial_archive(
        &archive,
        members.iter().enumerate().map(|(i, m)| (format!("m{i:05}"), m)),
    )?;

    let store = RecordStore::create(dir.path().join("members.raclib"), 1024)?;
    let refs = store.append_batch(members.iter())?;

    for ordinal in [0usize, 999, 1_999] {
        let (sample, bytes) = serial_baseline(&archive, ordinal as u64)?;
        let before = store.io_stats();
        let direct = store.read_payload(&refs[ordinal])?;
        let direct_bytes = store.io_stats().since(before).bytes_read;
        assert_eq!(bytes, direct);
        println!(
            "member {ordinal:>5}: scan read {:>9} of {total} bytes ({:5.1}%) in {:>8.0} us; direct read {direct_bytes} bytes",
            sample.bytes_read,
            100.0 * sample.bytes_read as f64 / total as f64,
            sample.elapsed_us
        );
    }
    Ok(())
}

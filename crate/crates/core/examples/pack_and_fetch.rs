//! Pack a directory of page scans into one collection and fetch pages back.
//!
//! ```text
//! cargo run --example pack_and_fetch
//! ```

use std::fs;

use raclib::library::{self, Library};

fn main() -> raclib::Result<()> {
    let work = tempfile::tempdir()?;
    let scans = work.path().join("scans");
    fs::create_dir_all(&scans)?;

    // Fake scans: a JPEG signature followed by page-specific filler.
    let pages = [("TallyHo1965", "0001", 2_900), ("TallyHo1965", "0404", 355_500), ("TallyHo1966", "0001", 41_000)];
    for (title, page, len) in pages {
        let mut bytes = vec![0xFF, 0xD8, 0xFF, 0xE0];
        bytes.extend((0..len).map(|i| (i % 251) as u8));
        fs::write(scans.join(format!("{title}_{page}.jpg")), bytes)?;
    }

    let lib_dir = work.path().join("library");
    let collection = library::pack(&scans, &lib_dir, "yearbooks", 1024, None)?;
    println!(
        "packed {} members into {} records of {} bytes",
        pages.len(),
        collection.store().record_count(),
        collection.store().record_size()
    );
    print!("{}", fs::read_to_string(collection.index().path())?);

    let library = Library::open(&lib_dir)?;
    let page = library.fetch("TallyHo1965", "0404")?;
    let original = fs::read(scans.join("TallyHo1965_0404.jpg"))?;
    assert_eq!(page, original);
    println!("TallyHo1965/0404: {} bytes, identical to the source file", page.len());

    match library.fetch("TallyHo1965", "9999") {
        Err(e) if e.is_not_found() => println!("TallyHo1965/9999: {e}"),
        other => panic!("expected not found, got {other:?}"),
    }
    Ok(())
}
